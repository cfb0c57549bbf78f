//! Toric Kähler layer: potential, momentum map, Hessian metric and the
//! projectivized Veronese map with its derivative.
//!
//! All exponential sums are evaluated with a max-shift so that points with
//! `|A p|` in the hundreds do not overflow. The frame quantities only depend on
//! the normalized vector `v = v̂ / ‖v̂‖`, which is always representable.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supports::Support;

/// Positive diagonal covariance `C` attached to one support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiagonalCovariance {
    weights: Vec<f64>,
}

impl DiagonalCovariance {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("covariance has no entries".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "covariance weight {i} is {} (must be finite and > 0)",
                weights[i]
            )));
        }
        Ok(Self { weights })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            weights: vec![1.0; m],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub(crate) fn check_matches(&self, support: &Support) -> Result<()> {
        if self.len() != support.len() {
            return Err(Error::InvalidInput(format!(
                "covariance has {} weights but support has {} rows",
                self.len(),
                support.len()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for DiagonalCovariance {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<DiagonalCovariance> for Vec<f64> {
    fn from(c: DiagonalCovariance) -> Self {
        c.weights
    }
}

/// A point `ζ = exp(p + i q)` of the torus in logarithmic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl TorusPoint {
    /// `q` is reduced into `[0, 2π)`.
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::InvalidInput(format!(
                "p has {} and q has {} components",
                p.len(),
                q.len()
            )));
        }
        if p.iter().chain(&q).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("torus point is not finite".into()));
        }
        let q = q.into_iter().map(reduce_angle).collect();
        Ok(Self { p, q })
    }

    /// The point `(p, 0)` on the positive real orthant.
    pub fn real(p: Vec<f64>) -> Self {
        let q = vec![0.0; p.len()];
        Self { p, q }
    }

    pub fn origin(n: usize) -> Self {
        Self::real(vec![0.0; n])
    }

    pub fn from_log(w: &[Complex64]) -> Self {
        Self {
            p: w.iter().map(|z| z.re).collect(),
            q: w.iter().map(|z| reduce_angle(z.im)).collect(),
        }
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `log ζ = p + i q`.
    pub fn log(&self) -> Vec<Complex64> {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| Complex64::new(p, q))
            .collect()
    }

    /// `ζ` itself; may overflow for extreme `p`.
    pub fn zeta(&self) -> Vec<Complex64> {
        self.log().into_iter().map(Complex64::exp).collect()
    }

    /// Largest coordinate-wise distance, with `q` compared on the circle.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let dp = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dq = self
            .q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| angle_gap(*a, *b))
            .fold(0.0, f64::max);
        dp.max(dq)
    }
}

pub(crate) fn reduce_angle(q: f64) -> f64 {
    let r = q.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Distance between two angles on the circle.
pub(crate) fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Log-moduli `A·p + ½ log C` of the Veronese components and their maximum.
fn log_moduli(support: &Support, cov: &DiagonalCovariance, p: &[f64]) -> (Vec<f64>, f64) {
    let logs: Vec<f64> = support
        .rows()
        .iter()
        .zip(cov.weights())
        .map(|(row, &c)| {
            row.iter().zip(p).map(|(&a, &x)| a as f64 * x).sum::<f64>() + 0.5 * c.ln()
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (logs, max)
}

fn check_dims(support: &Support, cov: &DiagonalCovariance, n: usize) -> Result<()> {
    cov.check_matches(support)?;
    if support.dim() != n {
        return Err(Error::InvalidInput(format!(
            "support has {} columns but point has {n} coordinates",
            support.dim()
        )));
    }
    Ok(())
}

/// `v̂_A(p + i q)`: component `α` is `sqrt(C_αα) exp(A_α · (p + i q))`.
pub fn veronese_hat(
    support: &Support,
    cov: &DiagonalCovariance,
    point: &TorusPoint,
) -> Result<Vec<Complex64>> {
    check_dims(support, cov, point.dim())?;
    Ok(support
        .rows()
        .iter()
        .zip(cov.weights())
        .map(|(row, &c)| {
            let phase: f64 = row.iter().zip(point.q()).map(|(&a, &x)| a as f64 * x).sum();
            let modulus: f64 = row.iter().zip(point.p()).map(|(&a, &x)| a as f64 * x).sum();
            Complex64::from_polar(c.sqrt() * modulus.exp(), phase)
        })
        .collect())
}

/// Kähler potential `g_A(p) = ½ log Σ_α C_αα e^{2 A_α·p}`.
pub fn potential(support: &Support, cov: &DiagonalCovariance, p: &[f64]) -> Result<f64> {
    check_dims(support, cov, p.len())?;
    let (logs, max) = log_moduli(support, cov, p);
    let sum: f64 = logs.iter().map(|l| (2.0 * (l - max)).exp()).sum();
    Ok(max + 0.5 * sum.ln())
}

/// Probability weights `w_α = |v_α|²` of the rows at `p`.
pub(crate) fn row_weights(support: &Support, cov: &DiagonalCovariance, p: &[f64]) -> Vec<f64> {
    let (logs, max) = log_moduli(support, cov, p);
    let mut w: Vec<f64> = logs.iter().map(|l| (2.0 * (l - max)).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

fn weighted_mean(support: &Support, w: &[f64]) -> Vec<f64> {
    let n = support.dim();
    let mut m = vec![0.0; n];
    for (row, &wa) in support.rows().iter().zip(w) {
        for (mj, &a) in m.iter_mut().zip(row) {
            *mj += wa * a as f64;
        }
    }
    m
}

/// Momentum map `∇g_A(p)`, a convex combination of the rows.
pub fn momentum(support: &Support, cov: &DiagonalCovariance, p: &[f64]) -> Result<Vec<f64>> {
    check_dims(support, cov, p.len())?;
    if !support.full_dim() {
        return Err(Error::NotFullDimensional);
    }
    Ok(weighted_mean(support, &row_weights(support, cov, p)))
}

/// `D²g_A(p) = 2 Σ_α w_α (A_α − m)(A_α − m)ᵀ`.
pub fn hessian(support: &Support, cov: &DiagonalCovariance, p: &[f64]) -> Result<DMatrix<f64>> {
    check_dims(support, cov, p.len())?;
    let w = row_weights(support, cov, p);
    Ok(hessian_from_weights(support, &w))
}

fn hessian_from_weights(support: &Support, w: &[f64]) -> DMatrix<f64> {
    let n = support.dim();
    let m = weighted_mean(support, w);
    let mut h = DMatrix::zeros(n, n);
    for (row, &wa) in support.rows().iter().zip(w) {
        let c: Vec<f64> = row.iter().zip(&m).map(|(&a, mj)| a as f64 - mj).collect();
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] += 2.0 * wa * c[i] * c[j];
            }
        }
    }
    h
}

/// `Dv_A = P_v̂ Diag(v̂/‖v̂‖) A`, an `M x n` complex matrix.
pub fn dveronese(
    support: &Support,
    cov: &DiagonalCovariance,
    point: &TorusPoint,
) -> Result<DMatrix<Complex64>> {
    Ok(KahlerFrame::new(support, cov, point)?.dv)
}

/// Everything the upper layers need about one support at one torus point.
#[derive(Debug, Clone)]
pub struct KahlerFrame {
    /// Unit vector `v̂ / ‖v̂‖`.
    pub v: DVector<Complex64>,
    /// `log ‖v̂‖`, which equals the potential at `p`.
    pub log_norm: f64,
    pub dv: DMatrix<Complex64>,
    pub hessian: DMatrix<f64>,
    pub momentum: Vec<f64>,
}

impl KahlerFrame {
    pub fn new(support: &Support, cov: &DiagonalCovariance, point: &TorusPoint) -> Result<Self> {
        check_dims(support, cov, point.dim())?;
        let n = support.dim();
        let (logs, max) = log_moduli(support, cov, point.p());
        let moduli: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let sq: f64 = moduli.iter().map(|x| x * x).sum();
        let norm = sq.sqrt();
        let v = DVector::from_iterator(
            support.len(),
            support.rows().iter().zip(&moduli).map(|(row, &r)| {
                let phase: f64 = row.iter().zip(point.q()).map(|(&a, &x)| a as f64 * x).sum();
                Complex64::from_polar(r / norm, phase)
            }),
        );
        let w: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
        let m = weighted_mean(support, &w);
        let dv = DMatrix::from_fn(support.len(), n, |a, j| {
            v[a] * (support.rows()[a][j] as f64 - m[j])
        });
        let hessian = hessian_from_weights(support, &w);
        Ok(Self {
            v,
            log_norm: max + norm.ln(),
            dv,
            hessian,
            momentum: m,
        })
    }

    /// Gram matrix `½ D²g_A = Dvᴴ Dv` of the Hermitian structure.
    pub fn metric(&self) -> DMatrix<f64> {
        &self.hessian * 0.5
    }
}

/// `‖u‖_A = sqrt(uᴴ (½ D²g_A) u)`.
pub fn norm_a(u: &[Complex64], frame: &KahlerFrame) -> f64 {
    let n = frame.hessian.nrows();
    assert_eq!(u.len(), n, "vector length must match the frame dimension");
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (u[i].conj() * u[j]).re * frame.hessian[(i, j)];
        }
    }
    (0.5 * acc).max(0.0).sqrt()
}

/// Solve `∇g_A(p) = y` for `y` in the interior of `Conv(A)` by damped Newton
/// on the strictly convex function `g_A(p) − y·p`.
pub fn invert_momentum(
    support: &Support,
    cov: &DiagonalCovariance,
    y: &[f64],
    start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = support.dim();
    check_dims(support, cov, y.len())?;
    if !support.full_dim() {
        return Err(Error::NotFullDimensional);
    }
    if support.hull().interior_distance(y) <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "target {y:?} is not interior to the Newton polytope"
        )));
    }
    let objective = |p: &[f64]| -> f64 {
        potential(support, cov, p).expect("dimensions checked")
            - p.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut p: Vec<f64> = start.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let scale = 1.0 + y.iter().map(|a| a.abs()).fold(0.0, f64::max);
    let mut last_residual = f64::INFINITY;
    for _ in 0..500 {
        let w = row_weights(support, cov, &p);
        let m = weighted_mean(support, &w);
        let grad: Vec<f64> = m.iter().zip(y).map(|(a, b)| a - b).collect();
        last_residual = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if last_residual <= 1e-14 * scale {
            return Ok(p);
        }
        let h = hessian_from_weights(support, &w);
        let g = DVector::from_column_slice(&grad);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => -g.clone(),
        };
        let f0 = objective(&p);
        let slope: f64 = step.dot(&g);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let f1 = objective(&trial);
            if f1 <= f0 + 1e-4 * t * slope || t < 1e-12 {
                // at the noise floor the Armijo test can fail; accept tiny steps
                p = trial;
                break;
            }
            t *= 0.5;
        }
    }
    if last_residual <= 1e-10 * scale {
        return Ok(p);
    }
    Err(Error::NonConvergence {
        what: "momentum inversion",
        value: p.iter().map(|x| x.abs()).fold(0.0, f64::max),
        residual: last_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    fn seg01() -> Support {
        Support::segment(1)
    }

    #[test]
    fn veronese_examples() {
        let a = seg01();
        let v = veronese_hat(&a, &DiagonalCovariance::identity(2), &TorusPoint::origin(1)).unwrap();
        assert!((v[0] - 1.0).norm() < 1e-15 && (v[1] - 1.0).norm() < 1e-15);
        let c = DiagonalCovariance::new(vec![1.0, 4.0]).unwrap();
        let v = veronese_hat(&a, &c, &TorusPoint::origin(1)).unwrap();
        assert!((v[1] - 2.0).norm() < 1e-15);
        let pt = TorusPoint::new(vec![LN_2], vec![PI]).unwrap();
        let v = veronese_hat(&a, &DiagonalCovariance::identity(2), &pt).unwrap();
        assert!((v[0] - 1.0).norm() < 1e-15);
        assert!((v[1] + 2.0).norm() < 1e-14);
    }

    #[test]
    fn potential_examples() {
        let id2 = DiagonalCovariance::identity(2);
        assert!((potential(&seg01(), &id2, &[0.0]).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        let c = DiagonalCovariance::new(vec![1.0, 3.0]).unwrap();
        assert!((potential(&seg01(), &c, &[0.0]).unwrap() - LN_2).abs() < 1e-15);
        let a = Support::segment(2);
        let g = potential(&a, &DiagonalCovariance::identity(3), &[0.0]).unwrap();
        assert!((g - 0.5 * 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn potential_is_stable_for_large_arguments() {
        let a = Support::segment(3);
        let g = potential(&a, &DiagonalCovariance::identity(4), &[300.0]).unwrap();
        assert!((g - 900.0).abs() < 1e-9);
        let frame =
            KahlerFrame::new(&a, &DiagonalCovariance::identity(4), &TorusPoint::real(vec![-300.0]))
                .unwrap();
        assert!((frame.log_norm).abs() < 1e-12);
        assert!((frame.v.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn momentum_examples() {
        let m = momentum(&seg01(), &DiagonalCovariance::identity(2), &[0.0]).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15);
        let m = momentum(&Support::segment(6), &DiagonalCovariance::identity(7), &[0.0]).unwrap();
        assert!((m[0] - 3.0).abs() < 1e-14);
        let m = momentum(&Support::simplex(2), &DiagonalCovariance::identity(3), &[0.0, 0.0])
            .unwrap();
        assert!((m[0] - 1.0 / 3.0).abs() < 1e-15 && (m[1] - 1.0 / 3.0).abs() < 1e-15);
        let flat = Support::new(vec![vec![0, 0], vec![1, 1]]).unwrap();
        assert_eq!(
            momentum(&flat, &DiagonalCovariance::identity(2), &[0.0, 0.0]),
            Err(Error::NotFullDimensional)
        );
    }

    #[test]
    fn hessian_examples() {
        let h = hessian(&seg01(), &DiagonalCovariance::identity(2), &[0.0]).unwrap();
        assert!((h[(0, 0)] - 0.5).abs() < 1e-15);
        let a = Support::new(vec![vec![0], vec![2]]).unwrap();
        let h = hessian(&a, &DiagonalCovariance::identity(2), &[0.0]).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-14);
        let h = hessian(&Support::simplex(2), &DiagonalCovariance::identity(3), &[0.0, 0.0])
            .unwrap();
        let expected = [[4.0 / 9.0, -2.0 / 9.0], [-2.0 / 9.0, 4.0 / 9.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dveronese_example_and_orthogonality() {
        let frame = KahlerFrame::new(
            &seg01(),
            &DiagonalCovariance::identity(2),
            &TorusPoint::origin(1),
        )
        .unwrap();
        let c = 1.0 / (2.0 * 2f64.sqrt());
        assert!((frame.dv[(0, 0)] - Complex64::new(-c, 0.0)).norm() < 1e-15);
        assert!((frame.dv[(1, 0)] - Complex64::new(c, 0.0)).norm() < 1e-15);

        let a = Support::new(vec![vec![0, 0], vec![2, 1], vec![1, 3], vec![-1, 1]]).unwrap();
        let cov = DiagonalCovariance::new(vec![0.5, 2.0, 1.5, 0.7]).unwrap();
        let pt = TorusPoint::new(vec![0.3, -0.4], vec![1.1, 5.0]).unwrap();
        let f = KahlerFrame::new(&a, &cov, &pt).unwrap();
        let inner = f.v.adjoint() * &f.dv;
        assert!(inner.iter().all(|z| z.norm() < 1e-14));
        // Gram identity: 2 Re(Dvᴴ Dv) = D²g
        let gram = f.dv.adjoint() * &f.dv;
        for i in 0..2 {
            for j in 0..2 {
                assert!((2.0 * gram[(i, j)].re - f.hessian[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn norm_a_examples() {
        let frame = KahlerFrame::new(
            &seg01(),
            &DiagonalCovariance::identity(2),
            &TorusPoint::origin(1),
        )
        .unwrap();
        assert_eq!(norm_a(&[Complex64::new(0.0, 0.0)], &frame), 0.0);
        assert!((norm_a(&[Complex64::new(1.0, 0.0)], &frame) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn torus_point_reduces_angles() {
        let pt = TorusPoint::new(vec![0.0, 1.0], vec![-PI, 3.0 * PI]).unwrap();
        assert!((pt.q()[0] - PI).abs() < 1e-15);
        assert!((pt.q()[1] - PI).abs() < 1e-14);
        assert!(TorusPoint::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn inversion_round_trip() {
        let a = Support::simplex(2);
        let cov = DiagonalCovariance::new(vec![1.0, 2.0, 0.5]).unwrap();
        let p = invert_momentum(&a, &cov, &[0.2, 0.7], None).unwrap();
        let m = momentum(&a, &cov, &p).unwrap();
        assert!((m[0] - 0.2).abs() < 1e-12 && (m[1] - 0.7).abs() < 1e-12);
        assert!(invert_momentum(&a, &cov, &[0.6, 0.6], None).is_err());
    }
}
