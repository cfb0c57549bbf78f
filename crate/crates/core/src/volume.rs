//! Mixed densities, expected-root integrals, the mixed volume by quadrature,
//! the real-root bound and momentum pushforward volumes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kahler::{hessian, invert_momentum, momentum, row_weights, DiagonalCovariance};
use crate::quadrature::{integrate_box, Integral, QuadOptions};
use crate::randsys::{Ensemble, Field, Region, RegionBox};
use crate::supports::{mixed_volume_oracle, q_to_f64, Support};

/// `Σ_{∅≠S⊆[n]} (−1)^{n−|S|} det(½ Σ_{i∈S} H_i)`: the positive density of the
/// wedge of the `n` Kähler forms against `dp dq`.
pub fn mixed_density(hs: &[DMatrix<f64>]) -> f64 {
    let n = hs.len();
    assert!(n > 0 && hs.iter().all(|h| h.nrows() == n && h.ncols() == n));
    let mut total = 0.0;
    for mask in 1usize..(1 << n) {
        let mut sum = DMatrix::<f64>::zeros(n, n);
        for (i, h) in hs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                sum += h;
            }
        }
        let det = (sum * 0.5).determinant();
        if (n - mask.count_ones() as usize) % 2 == 0 {
            total += det;
        } else {
            total -= det;
        }
    }
    total
}

/// Evaluates the mixed density of an ensemble at points of `ℝⁿ`.
///
/// Each `½Hᵢ` is `Σ_{a<b} w_a w_b (α_a − α_b)(α_a − α_b)ᵀ`, so the density is a
/// sum of nonnegative terms `Π wᵢ,ₐ wᵢ,ᵦ · det[α_a − α_b]²` whose integer
/// determinants are computed once. Unlike the determinant expansion this keeps
/// full relative accuracy far out in the tails.
#[derive(Debug, Clone)]
pub struct MixedDensityEvaluator<'a> {
    ensemble: &'a Ensemble,
    pairs: Vec<Vec<(usize, usize)>>,
    terms: Vec<(Vec<usize>, f64)>,
}

impl<'a> MixedDensityEvaluator<'a> {
    pub fn new(ensemble: &'a Ensemble) -> Self {
        let n = ensemble.dim();
        let pairs: Vec<Vec<(usize, usize)>> = ensemble
            .items()
            .iter()
            .map(|it| {
                let m = it.support.len();
                (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect()
            })
            .collect();
        let mut terms = Vec::new();
        let mut choice = vec![0usize; n];
        'outer: loop {
            let cols: Vec<f64> = (0..n)
                .flat_map(|i| {
                    let rows = ensemble.support(i).rows();
                    let (a, b) = pairs[i][choice[i]];
                    (0..n).map(move |j| (rows[a][j] - rows[b][j]) as f64)
                })
                .collect();
            let det = DMatrix::from_column_slice(n, n, &cols).determinant().round();
            if det != 0.0 {
                terms.push((choice.clone(), det * det));
            }
            for i in 0..n {
                choice[i] += 1;
                if choice[i] < pairs[i].len() {
                    continue 'outer;
                }
                choice[i] = 0;
            }
            break;
        }
        Self { ensemble, pairs, terms }
    }

    pub fn hessians(&self, p: &[f64]) -> Vec<DMatrix<f64>> {
        self.ensemble
            .items()
            .iter()
            .map(|it| hessian(&it.support, &it.covariance, p).expect("ensemble dimensions are consistent"))
            .collect()
    }

    pub fn density(&self, p: &[f64]) -> f64 {
        let pair_weights: Vec<Vec<f64>> = self
            .ensemble
            .items()
            .iter()
            .zip(&self.pairs)
            .map(|(it, pairs)| {
                let w = row_weights(&it.support, &it.covariance, p);
                pairs.iter().map(|&(a, b)| w[a] * w[b]).collect()
            })
            .collect();
        self.terms
            .iter()
            .map(|(choice, c)| c * choice.iter().zip(&pair_weights).map(|(&k, w)| w[k]).product::<f64>())
            .sum()
    }
}

fn density_integral(ens: &Ensemble, p_box: &[(f64, f64)], opts: &QuadOptions) -> Result<Integral> {
    let eval = MixedDensityEvaluator::new(ens);
    integrate_box(|p| eval.density(p), p_box, opts)
}

/// Expected number of roots with `(p, q)` in the region:
/// `π⁻ⁿ Σ_boxes λ(U_q) ∫_{U_p} density dp`.
pub fn expected_roots(ens: &Ensemble, region: &Region, opts: &QuadOptions) -> Result<Integral> {
    if ens.field() != Field::Complex {
        return Err(Error::InvalidInput("expected_roots needs a complex ensemble".into()));
    }
    if region.dim() != ens.dim() {
        return Err(Error::InvalidInput(format!(
            "region has dimension {}, ensemble {}",
            region.dim(),
            ens.dim()
        )));
    }
    let scale = PI.powi(ens.dim() as i32);
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
        panels: 0,
    };
    for b in region.boxes() {
        let qv = b.q_volume();
        if b.volume() == 0.0 {
            continue;
        }
        let r = density_integral(ens, &b.p, opts)?;
        out.value += r.value * qv / scale;
        out.error += r.error * qv / scale;
        out.panels += r.panels;
    }
    Ok(out)
}

/// Expected root count over the whole torus.
pub fn mixed_volume_integral(ens: &Ensemble, opts: &QuadOptions) -> Result<Integral> {
    if !ens.all_full_dim() {
        return Err(Error::NotFullDimensional);
    }
    expected_roots(&ens.with_field(Field::Complex), &Region::full(ens.dim()), opts)
}

/// Upper bound on the expected number of positive real roots with `p ∈ U_p`:
/// `(4π²)^{−n/2} √λ(U_p) √((2π)ⁿ ∫_{U_p} density dp)`.
pub fn real_roots_bound(ens: &Ensemble, p_boxes: &[Vec<(f64, f64)>], opts: &QuadOptions) -> Result<f64> {
    if ens.field() != Field::Real {
        return Err(Error::InvalidInput("real_roots_bound needs a real ensemble".into()));
    }
    let n = ens.dim();
    let region = Region::new(n, p_boxes.iter().cloned().map(RegionBox::p_box).collect())?;
    if !region.p_bounded() {
        return Err(Error::UnboundedRegion);
    }
    let mut lambda = 0.0;
    let mut integral = 0.0;
    for b in region.boxes() {
        if b.volume() == 0.0 {
            continue;
        }
        lambda += b.p_volume();
        integral += density_integral(ens, &b.p, opts)?.value;
    }
    let two_pi_n = (2.0 * PI).powi(n as i32);
    Ok((4.0 * PI * PI).powf(-(n as f64) / 2.0) * lambda.sqrt() * (two_pi_n * integral.max(0.0)).sqrt())
}

const SCAN_POINTS: usize = 256;

/// Maps of one coordinate between `t` and `p`, shared by the scans below.
fn to_p(t: f64, lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => lo + (hi - lo) * t,
        (false, false) => (2.0 * t - 1.0) / (1.0 - (2.0 * t - 1.0).powi(2)),
        (true, false) => lo + t / (1.0 - t),
        (false, true) => hi - (1.0 - t) / t,
    }
}

struct Pushforward<'a> {
    support: &'a Support,
    cov: &'a DiagonalCovariance,
    boxes: &'a [Vec<(f64, f64)>],
    bounds: Vec<(f64, f64)>,
    opts: QuadOptions,
}

impl Pushforward<'_> {
    fn inside(&self, p: &[f64]) -> bool {
        let m = momentum(self.support, self.cov, p).expect("validated support");
        self.boxes
            .iter()
            .any(|b| m.iter().zip(b).all(|(&x, &(lo, hi))| lo <= x && x <= hi))
    }

    fn density(&self, p: &[f64]) -> f64 {
        (hessian(self.support, self.cov, p).expect("validated support") * 0.5).determinant()
    }

    /// Intervals of the last coordinate where the momentum lies in `V`.
    fn member_intervals(&self, prefix: &[f64]) -> Vec<(f64, f64)> {
        let k = prefix.len();
        let (lo, hi) = self.bounds[k];
        let mut p = prefix.to_vec();
        p.push(0.0);
        let mut test = |t: f64| {
            p[k] = to_p(t, lo, hi);
            self.inside(&p)
        };
        let ts: Vec<f64> = (0..=SCAN_POINTS)
            .map(|i| {
                let t = i as f64 / SCAN_POINTS as f64;
                t.clamp(1e-9, 1.0 - 1e-9)
            })
            .collect();
        let flags: Vec<bool> = ts.iter().map(|&t| test(t)).collect();
        let mut edges = Vec::new();
        let mut refine = |mut a: f64, mut b: f64, a_in: bool| {
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if test(m) == a_in {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let mut start = if flags[0] { Some(0.0) } else { None };
        for i in 1..ts.len() {
            if flags[i] != flags[i - 1] {
                let e = refine(ts[i - 1], ts[i], flags[i - 1]);
                if flags[i] {
                    start = Some(e);
                } else if let Some(s) = start.take() {
                    edges.push((s, e));
                }
            }
        }
        if let Some(s) = start {
            edges.push((s, 1.0));
        }
        edges
            .into_iter()
            .map(|(a, b)| {
                let pa = if a == 0.0 && !lo.is_finite() { f64::NEG_INFINITY } else { to_p(a, lo, hi) };
                let pb = if b == 1.0 && !hi.is_finite() { f64::INFINITY } else { to_p(b, lo, hi) };
                (pa, pb)
            })
            .collect()
    }

    fn level(&self, prefix: &[f64]) -> Result<f64> {
        let n = self.bounds.len();
        let k = prefix.len();
        let inner_opts = QuadOptions {
            rel_tol: self.opts.rel_tol * 1e-2,
            abs_tol: self.opts.abs_tol * 1e-2,
            ..self.opts
        };
        if k + 1 == n {
            let mut total = 0.0;
            for (a, b) in self.member_intervals(prefix) {
                let r = integrate_box(
                    |x| {
                        let mut p = prefix.to_vec();
                        p.push(x[0]);
                        self.density(&p)
                    },
                    &[(a, b)],
                    &inner_opts,
                )?;
                total += r.value;
            }
            return Ok(total);
        }
        let r = integrate_box(
            |x| {
                let mut p = prefix.to_vec();
                p.push(x[0]);
                self.level(&p).unwrap_or(f64::NAN)
            },
            &[self.bounds[k]],
            &QuadOptions {
                initial_splits: self.opts.initial_splits.max(8),
                ..self.opts
            },
        )?;
        Ok(r.value)
    }
}

/// Toric volume `(2π)ⁿ ∫_{(∇g_A)⁻¹(V)} det(½ D²g_A) dp` of the preimage of a
/// union of boxes `V` in momentum space.
pub fn momentum_pushforward_volume(
    support: &Support,
    cov: &DiagonalCovariance,
    v_boxes: &[Vec<(f64, f64)>],
    opts: &QuadOptions,
) -> Result<f64> {
    cov.check_matches(support)?;
    if !support.full_dim() {
        return Err(Error::NotFullDimensional);
    }
    let n = support.dim();
    let hull = support.hull();
    let mut strictly_inside = true;
    for (i, b) in v_boxes.iter().enumerate() {
        if b.len() != n || b.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidInput(format!("momentum box {i} is malformed")));
        }
        for corner in box_corners(b) {
            let d = hull.interior_distance(&corner);
            if d < -1e-12 {
                return Err(Error::InvalidInput(format!(
                    "momentum box {i} leaves the Newton polytope at {corner:?}"
                )));
            }
            if d <= 1e-12 {
                strictly_inside = false;
            }
        }
    }
    if v_boxes.is_empty() {
        return Ok(0.0);
    }
    let bounds = if strictly_inside {
        preimage_bounds(support, cov, v_boxes)?
    } else {
        vec![(f64::NEG_INFINITY, f64::INFINITY); n]
    };
    let pf = Pushforward {
        support,
        cov,
        boxes: v_boxes,
        bounds,
        opts: *opts,
    };
    Ok((2.0 * PI).powi(n as i32) * pf.level(&[])?)
}

fn box_corners(b: &[(f64, f64)]) -> Vec<Vec<f64>> {
    (0..1usize << b.len())
        .map(|mask| {
            b.iter()
                .enumerate()
                .map(|(d, &(lo, hi))| if mask >> d & 1 == 0 { lo } else { hi })
                .collect()
        })
        .collect()
}

/// Bounding box of the preimage from inverted samples of the box boundaries.
fn preimage_bounds(
    support: &Support,
    cov: &DiagonalCovariance,
    v_boxes: &[Vec<(f64, f64)>],
) -> Result<Vec<(f64, f64)>> {
    let n = support.dim();
    let per_side = 24usize;
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for b in v_boxes {
        // every point of the boundary grid: one coordinate pinned to a face
        let total = (per_side + 1).pow(n as u32 - 1);
        for face in 0..n {
            for side in [b[face].0, b[face].1] {
                for idx in 0..total.max(1) {
                    let mut y = vec![0.0; n];
                    let mut r = idx;
                    for d in 0..n {
                        if d == face {
                            y[d] = side;
                            continue;
                        }
                        let k = r % (per_side + 1);
                        r /= per_side + 1;
                        y[d] = b[d].0 + (b[d].1 - b[d].0) * k as f64 / per_side as f64;
                    }
                    let p = invert_momentum(support, cov, &y, None)?;
                    for d in 0..n {
                        lo[d] = lo[d].min(p[d]);
                        hi[d] = hi[d].max(p[d]);
                    }
                }
            }
        }
    }
    Ok(lo
        .into_iter()
        .zip(hi)
        .map(|(a, b)| {
            let margin = 0.05 * (b - a) + 1e-3;
            (a - margin, b + margin)
        })
        .collect())
}

/// Summary used by the CLI for one mixed-volume comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedVolumeComparison {
    pub integral: f64,
    pub error: f64,
    pub oracle: f64,
    pub rel_err: f64,
}

/// Quadrature mixed volume next to the exact lattice value.
pub fn compare_mixed_volume(ens: &Ensemble, opts: &QuadOptions) -> Result<MixedVolumeComparison> {
    let hulls: Vec<_> = ens.items().iter().map(|it| it.support.hull()).collect();
    let oracle = q_to_f64(&mixed_volume_oracle(&hulls)?);
    let integral = mixed_volume_integral(ens, opts)?;
    Ok(MixedVolumeComparison {
        integral: integral.value,
        error: integral.error,
        oracle,
        rel_err: (integral.value - oracle).abs() / oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn density_examples() {
        assert!((mixed_density(&[diag(&[1.0, 1.0]), diag(&[1.0, 1.0])]) - 0.5).abs() < 1e-15);
        assert!((mixed_density(&[diag(&[3.0])]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn evaluator_agrees_with_the_determinant_expansion() {
        let tri = Support::new(vec![vec![0, 0], vec![2, 0], vec![0, 1]]).unwrap();
        let ens = Ensemble::standard(vec![tri, Support::unit_cube(2)], Field::Complex).unwrap();
        let eval = MixedDensityEvaluator::new(&ens);
        for p in [[0.0, 0.0], [0.7, -1.3], [-2.0, 0.4]] {
            let a = eval.density(&p);
            let b = mixed_density(&eval.hessians(&p));
            assert!((a - b).abs() < 1e-12 * b.abs().max(1e-3), "{a} vs {b}");
        }
        let s3 = Ensemble::standard(vec![Support::simplex(3); 3], Field::Complex).unwrap();
        let far = MixedDensityEvaluator::new(&s3).density(&[60.0, 60.0, 60.0]);
        assert!(far > 0.0 && far < 1e-20);
        assert!((mixed_density(&[diag(&[2.0, 1.0]), diag(&[1.0, 2.0])]) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn univariate_expectations() {
        let o = QuadOptions::default();
        for d in 1..=4 {
            let ens = Ensemble::standard(vec![Support::segment(d)], Field::Complex).unwrap();
            let full = expected_roots(&ens, &Region::full(1), &o).unwrap();
            assert!((full.value - d as f64).abs() < 1e-6, "{d}: {full:?}");
            let half = expected_roots(&ens, &Region::p_box(vec![(f64::NEG_INFINITY, 0.0)]).unwrap(), &o).unwrap();
            assert!((half.value - d as f64 / 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn simplices_give_one() {
        let ens = Ensemble::linear(2, Field::Complex);
        let r = mixed_volume_integral(&ens, &QuadOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn real_bound_behaviour() {
        let ens = Ensemble::standard(vec![Support::segment(1)], Field::Real).unwrap();
        let o = QuadOptions::default();
        let mut last = 0.0;
        for t in [0.0, 0.5, 1.0, 2.0] {
            let b = real_roots_bound(&ens, &[vec![(-t, t)]], &o).unwrap();
            assert!(b >= last);
            last = b;
        }
        assert!(real_roots_bound(&ens, &[vec![(0.0, f64::INFINITY)]], &o).is_err());
        assert_eq!(real_roots_bound(&ens, &[vec![(0.0, 0.0)]], &o).unwrap(), 0.0);
    }

    #[test]
    fn pushforward_interval() {
        let a = Support::segment(1);
        let c = DiagonalCovariance::identity(2);
        let v = momentum_pushforward_volume(&a, &c, &[vec![(0.25, 0.75)]], &QuadOptions::default()).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-6, "{v}");
        assert!(momentum_pushforward_volume(&a, &c, &[vec![(0.5, 1.5)]], &QuadOptions::default()).is_err());
    }
}
