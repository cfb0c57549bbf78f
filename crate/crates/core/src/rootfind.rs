//! Root enumeration for `n ≤ 2`: companion matrices in one variable and a
//! hidden-variable Sylvester resultant in two, followed by Newton polishing in
//! logarithmic coordinates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kahler::{angle_gap, DiagonalCovariance, TorusPoint};
use crate::randsys::{Ensemble, Field, Region, SparseSystem};
use crate::supports::Support;

/// Roots closer than this in `(p, q)` are merged.
pub const MERGE_TOLERANCE: f64 = 1e-6;
/// `|ζ_j|` outside `[1e-12, 1e12]` is a toric-boundary escape.
pub const ESCAPE_LOG: f64 = 27.631_021_115_928_547;
/// Candidates must have a normalized residual below this before polishing.
const PRE_POLISH_TOL: f64 = 1e-5;
/// Polished roots must reach this normalized residual.
const ACCEPT_TOL: f64 = 1e-8;
/// Largest acceptable condition number of the leading pencil coefficient.
const PENCIL_COND_MAX: f64 = 1e10;
/// `|q mod π|` below this marks a real root.
pub const REAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Root {
    pub point: TorusPoint,
    /// `max_i |f^i · v_i| / ‖f^i‖` with `v_i` the unit Veronese vector.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootList {
    pub roots: Vec<Root>,
    /// Distinct candidates were merged within [`MERGE_TOLERANCE`].
    pub clustered: bool,
    /// Candidates that drifted beyond `|ζ| ∈ [1e-12, 1e12]`.
    pub boundary_escapes: usize,
    /// Candidates that passed the pre-polish test but did not converge.
    pub rejected: usize,
}

impl RootList {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &TorusPoint> {
        self.roots.iter().map(|r| &r.point)
    }

    /// Set when the enumeration may be incomplete or may double count.
    pub fn degenerate(&self) -> bool {
        self.clustered || self.rejected > 0
    }
}

/// One equation as `(exponent, raw coefficient)` terms, `c_α = f_α √C_α`.
#[derive(Debug, Clone)]
struct Equation {
    terms: Vec<(Vec<i64>, Complex64)>,
    norm: f64,
}

impl Equation {
    fn new(f: &[Complex64], support: &Support, cov: &DiagonalCovariance) -> Self {
        let terms = support
            .rows()
            .iter()
            .zip(f)
            .zip(cov.weights())
            .map(|((a, &c), &w)| (a.clone(), c * w.sqrt()))
            .collect();
        let norm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Self { terms, norm }
    }

    /// Value and gradient in `w = log ζ`, both scaled by `e^{-shift}`.
    fn eval(&self, w: &[Complex64], shift: f64) -> (Complex64, Vec<Complex64>) {
        let mut val = Complex64::new(0.0, 0.0);
        let mut grad = vec![Complex64::new(0.0, 0.0); w.len()];
        for (a, c) in &self.terms {
            let re: f64 = a.iter().zip(w).map(|(&k, z)| k as f64 * z.re).sum::<f64>() - shift;
            let im: f64 = a.iter().zip(w).map(|(&k, z)| k as f64 * z.im).sum();
            let term = c * Complex64::from_polar(re.exp(), im);
            val += term;
            for (g, &k) in grad.iter_mut().zip(a) {
                *g += term * k as f64;
            }
        }
        (val, grad)
    }
}

/// Polynomial system in log coordinates with residuals normalized like
/// [`crate::randsys::normalized_residuals`].
struct LogSystem {
    eqs: Vec<Equation>,
    weights: Vec<Vec<f64>>,
    exps: Vec<Vec<Vec<i64>>>,
}

impl LogSystem {
    fn new(f: &SparseSystem, ens: &Ensemble) -> Self {
        let eqs = (0..ens.dim())
            .map(|i| Equation::new(f.component(i), ens.support(i), ens.covariance(i)))
            .collect();
        Self {
            eqs,
            weights: (0..ens.dim()).map(|i| ens.covariance(i).weights().to_vec()).collect(),
            exps: (0..ens.dim()).map(|i| ens.support(i).rows().to_vec()).collect(),
        }
    }

    fn single(f: &[Complex64], support: &Support, cov: &DiagonalCovariance) -> Self {
        Self {
            eqs: vec![Equation::new(f, support, cov)],
            weights: vec![cov.weights().to_vec()],
            exps: vec![support.rows().to_vec()],
        }
    }

    /// `‖v̂^i(w)‖` scaled by the same factor as `Equation::eval`.
    fn veronese_norm(&self, i: usize, w: &[Complex64], shift: f64) -> f64 {
        self.exps[i]
            .iter()
            .zip(&self.weights[i])
            .map(|(a, &c)| {
                let re: f64 = a.iter().zip(w).map(|(&k, z)| k as f64 * z.re).sum();
                (2.0 * (re - shift)).exp() * c
            })
            .sum::<f64>()
            .sqrt()
    }

    fn shift(&self, i: usize, w: &[Complex64]) -> f64 {
        self.eqs[i]
            .terms
            .iter()
            .map(|(a, _)| a.iter().zip(w).map(|(&k, z)| k as f64 * z.re).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values and Jacobian rows scaled so that `|value| / ‖f^i‖` is the
    /// normalized residual.
    fn scaled(&self, w: &[Complex64]) -> (Vec<Complex64>, Vec<Vec<Complex64>>, Vec<f64>) {
        let mut vals = Vec::new();
        let mut jac = Vec::new();
        let mut res = Vec::new();
        for (i, eq) in self.eqs.iter().enumerate() {
            let s = self.shift(i, w);
            let (v, g) = eq.eval(w, s);
            let vn = self.veronese_norm(i, w, s);
            let denom = vn * eq.norm;
            vals.push(v / vn);
            jac.push(g.iter().map(|z| z / vn).collect());
            res.push(if denom > 0.0 { v.norm() / denom } else { f64::INFINITY });
        }
        (vals, jac, res)
    }

    fn residual(&self, w: &[Complex64]) -> f64 {
        self.scaled(w).2.into_iter().fold(0.0, f64::max)
    }
}

enum Polish {
    Converged(Vec<Complex64>, f64),
    Escaped,
    Failed,
}

/// Newton in `w = log ζ`; with `real` the imaginary parts stay fixed.
fn newton(sys: &LogSystem, mut w: Vec<Complex64>, real: bool) -> Polish {
    let n = w.len();
    let mut last_step = f64::INFINITY;
    for _ in 0..80 {
        let (vals, jac, _) = sys.scaled(&w);
        let j = DMatrix::from_fn(n, n, |r, c| jac[r][c]);
        let rhs = DVector::from_iterator(n, vals.iter().map(|z| -z));
        let Some(step) = j.lu().solve(&rhs) else {
            return Polish::Failed;
        };
        let mut step: Vec<Complex64> = step.iter().copied().collect();
        if real {
            for s in &mut step {
                *s = Complex64::new(s.re, 0.0);
            }
        }
        let size = step.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !size.is_finite() {
            return Polish::Failed;
        }
        let clip = if size > 2.0 { 2.0 / size } else { 1.0 };
        for (x, s) in w.iter_mut().zip(&step) {
            *x += s * clip;
        }
        if w.iter().any(|z| z.re.abs() > ESCAPE_LOG) {
            return Polish::Escaped;
        }
        let scale = 1.0 + w.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if size <= 1e-13 * scale || (size <= 1e-9 * scale && size >= 0.5 * last_step) {
            let r = sys.residual(&w);
            return if r <= ACCEPT_TOL {
                Polish::Converged(w, r)
            } else {
                Polish::Failed
            };
        }
        last_step = size;
    }
    let r = sys.residual(&w);
    if r <= ACCEPT_TOL && last_step <= 1e-8 {
        Polish::Converged(w, r)
    } else if w.iter().any(|z| z.re.abs() > 0.8 * ESCAPE_LOG) {
        Polish::Escaped
    } else {
        Polish::Failed
    }
}

/// All roots of `Σ c_k x^k` (lowest degree first), zero roots removed.
fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let Some(top) = coeffs.iter().rposition(|c| *c != Complex64::new(0.0, 0.0)) else {
        return vec![];
    };
    let bottom = coeffs.iter().position(|c| *c != Complex64::new(0.0, 0.0)).unwrap_or(0);
    let c = &coeffs[bottom..=top];
    let d = c.len() - 1;
    if d == 0 {
        return vec![];
    }
    if d == 1 {
        return vec![-c[0] / c[1]];
    }
    let lead = c[d];
    let comp = DMatrix::from_fn(d, d, |r, k| {
        if r == 0 {
            -c[d - 1 - k] / lead
        } else if k + 1 == r {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let Some(ev) = eigenvalues(comp) else {
        return vec![];
    };
    ev.iter()
        .map(|&z| {
            // two Newton steps on the raw polynomial
            let mut z = z;
            for _ in 0..2 {
                let (mut p, mut dp) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                for &a in c.iter().rev() {
                    dp = dp * z + p;
                    p = p * z + a;
                }
                if dp.norm() > 0.0 {
                    let nz = z - p / dp;
                    if nz.is_finite() {
                        z = nz;
                    }
                }
            }
            z
        })
        .collect()
}

fn in_torus(z: &Complex64) -> bool {
    let r = z.norm();
    r.is_finite() && r > 0.0 && z.norm().ln().abs() < ESCAPE_LOG
}

fn finish(mut found: Vec<Root>, escapes: usize, rejected: usize) -> RootList {
    found.sort_by(|a, b| {
        a.point
            .p()
            .iter()
            .chain(a.point.q())
            .zip(b.point.p().iter().chain(b.point.q()))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut roots: Vec<Root> = Vec::with_capacity(found.len());
    let mut clustered = false;
    for r in found {
        if let Some(prev) = roots
            .iter_mut()
            .find(|x| x.point.distance(&r.point) <= MERGE_TOLERANCE)
        {
            clustered = true;
            if r.residual < prev.residual {
                *prev = r;
            }
        } else {
            roots.push(r);
        }
    }
    RootList {
        roots,
        clustered,
        boundary_escapes: escapes,
        rejected,
    }
}

fn to_point(w: &[Complex64]) -> TorusPoint {
    TorusPoint::from_log(w)
}

/// All roots in `ℂ*` of a univariate sparse polynomial.
pub fn univariate_roots(f: &[Complex64], support: &Support, cov: &DiagonalCovariance) -> Result<RootList> {
    cov.check_matches(support)?;
    if support.dim() != 1 || f.len() != support.len() {
        return Err(Error::InvalidInput("univariate_roots needs one variable and matching coefficients".into()));
    }
    if f.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::InvalidInput("zero polynomial".into()));
    }
    let lo = support.rows().iter().map(|r| r[0]).min().unwrap_or(0);
    let hi = support.rows().iter().map(|r| r[0]).max().unwrap_or(0);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); (hi - lo) as usize + 1];
    for ((r, &c), &w) in support.rows().iter().zip(f).zip(cov.weights()) {
        coeffs[(r[0] - lo) as usize] += c * w.sqrt();
    }
    let sys = LogSystem::single(f, support, cov);
    let mut found = Vec::new();
    let (mut escapes, mut rejected) = (0, 0);
    for z in poly_roots(&coeffs) {
        if !in_torus(&z) {
            escapes += 1;
            continue;
        }
        match newton(&sys, vec![z.ln()], false) {
            Polish::Converged(w, r) => found.push(Root {
                point: to_point(&w),
                residual: r,
            }),
            Polish::Escaped => escapes += 1,
            Polish::Failed => rejected += 1,
        }
    }
    Ok(finish(found, escapes, rejected))
}

/// Polynomial in `x` with coefficients in `ℂ`, lowest degree first.
type XPoly = Vec<Complex64>;

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> XPoly {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(a: &[Complex64], x: Complex64) -> Complex64 {
    a.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Bivariate polynomial as `y`-coefficients that are polynomials in `x`.
struct YPoly {
    coeffs: Vec<XPoly>,
}

impl YPoly {
    fn from_terms(terms: &[(Vec<i64>, Complex64)], m: &[[i64; 2]; 2]) -> Self {
        let mapped: Vec<([i64; 2], Complex64)> = terms
            .iter()
            .map(|(a, c)| ([m[0][0] * a[0] + m[0][1] * a[1], m[1][0] * a[0] + m[1][1] * a[1]], *c))
            .collect();
        let minx = mapped.iter().map(|(a, _)| a[0]).min().unwrap_or(0);
        let miny = mapped.iter().map(|(a, _)| a[1]).min().unwrap_or(0);
        let dy = mapped.iter().map(|(a, _)| a[1] - miny).max().unwrap_or(0) as usize;
        let dx = mapped.iter().map(|(a, _)| a[0] - minx).max().unwrap_or(0) as usize;
        let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); dx + 1]; dy + 1];
        for (a, c) in mapped {
            coeffs[(a[1] - miny) as usize][(a[0] - minx) as usize] += c;
        }
        Self { coeffs }
    }

    fn y_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn at_x(&self, x: Complex64) -> Vec<Complex64> {
        self.coeffs.iter().map(|p| poly_eval(p, x)).collect()
    }
}

/// Sylvester matrix in `y` as a matrix polynomial `Σ_j S_j x^j`.
fn sylvester(p1: &YPoly, p2: &YPoly) -> Vec<DMatrix<Complex64>> {
    let (d1, d2) = (p1.y_degree(), p2.y_degree());
    let m = d1 + d2;
    let xdeg = p1
        .coeffs
        .iter()
        .chain(&p2.coeffs)
        .map(|p| p.len() - 1)
        .max()
        .unwrap_or(0);
    let mut mats = vec![DMatrix::<Complex64>::zeros(m, m); xdeg + 1];
    let mut place = |row: usize, col: usize, poly: &XPoly| {
        for (j, c) in poly.iter().enumerate() {
            mats[j][(row, col)] += c;
        }
    };
    for r in 0..d2 {
        for k in 0..=d1 {
            // coefficient of y^{d1-k} in row r
            place(r, r + k, &p1.coeffs[d1 - k]);
        }
    }
    for r in 0..d1 {
        for k in 0..=d2 {
            place(d2 + r, r + k, &p2.coeffs[d2 - k]);
        }
    }
    mats
}

fn condition(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

/// Eigenvalues by complex Schur with an iteration cap. Cyclic structures
/// (e.g. the companion matrix of `x^d + c`) stall the shifted QR iteration;
/// these are retried after a fixed pseudo-random unitary similarity.
fn eigenvalues(m: DMatrix<Complex64>) -> Option<Vec<Complex64>> {
    let n = m.nrows();
    let cap = 100 * n.max(1);
    if let Some(s) = Schur::try_new(m.clone(), f64::EPSILON, cap) {
        return s.eigenvalues().map(|v| v.iter().copied().collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c4_0e11);
    for _ in 0..3 {
        let g = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let q = g.qr().q();
        let rotated = q.adjoint() * &m * &q;
        if let Some(s) = Schur::try_new(rotated, f64::EPSILON, cap) {
            return s.eigenvalues().map(|v| v.iter().copied().collect());
        }
    }
    None
}

/// Eigenvalues `x` of the Sylvester pencil after a Möbius change `x = (at+b)/(ct+d)`.
fn pencil_eigenvalues(mats: &[DMatrix<Complex64>], rng: &mut ChaCha8Rng) -> Option<Vec<Complex64>> {
    let deg = mats.len() - 1;
    let m = mats[0].nrows();
    if m == 0 {
        return None;
    }
    let mut rnd = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (a, b, c, d) = (rnd(), rnd(), rnd(), rnd());
    if (a * d - b * c).norm() < 0.1 {
        return None;
    }
    // T(t) = Σ_j S_j (a t + b)^j (c t + d)^{deg-j}
    let mut t = vec![DMatrix::<Complex64>::zeros(m, m); deg + 1];
    for (j, s) in mats.iter().enumerate() {
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for _ in 0..j {
            poly = poly_mul(&poly, &[b, a]);
        }
        for _ in j..deg {
            poly = poly_mul(&poly, &[d, c]);
        }
        for (k, coef) in poly.iter().enumerate() {
            t[k] += s * *coef;
        }
    }
    let lead = &t[deg];
    if condition(lead) > PENCIL_COND_MAX {
        return None;
    }
    let inv = lead.clone().try_inverse()?;
    let size = deg * m;
    let ts: Vec<Complex64> = if deg == 0 {
        vec![]
    } else {
        let mut comp = DMatrix::<Complex64>::zeros(size, size);
        for blk in 0..deg - 1 {
            for i in 0..m {
                comp[(blk * m + i, (blk + 1) * m + i)] = Complex64::new(1.0, 0.0);
            }
        }
        for k in 0..deg {
            let block = -(&inv * &t[k]);
            comp.view_mut(((deg - 1) * m, k * m), (m, m)).copy_from(&block);
        }
        eigenvalues(comp)?
    };
    Some(ts.into_iter().map(|t| (a * t + b) / (c * t + d)).collect())
}

const TRANSFORMS: [[[i64; 2]; 2]; 5] = [
    [[1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[1, 1], [0, 1]],
    [[1, 0], [1, 1]],
    [[2, 1], [1, 1]],
];

/// All isolated roots in `(ℂ*)²` of a system of two sparse polynomials.
pub fn bivariate_roots(f: &SparseSystem, ens: &Ensemble) -> Result<RootList> {
    f.check_shape(ens)?;
    if ens.dim() != 2 {
        return Err(Error::InvalidInput("bivariate_roots needs n = 2".into()));
    }
    if !ens.all_full_dim() {
        return Err(Error::NotFullDimensional);
    }
    let sys = LogSystem::new(f, ens);
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1ba_5eed);
    for m in TRANSFORMS {
        let p1 = YPoly::from_terms(&sys.eqs[0].terms, &m);
        let p2 = YPoly::from_terms(&sys.eqs[1].terms, &m);
        if p1.y_degree() == 0 || p2.y_degree() == 0 {
            continue;
        }
        let mats = sylvester(&p1, &p2);
        let mut xs = None;
        for _ in 0..3 {
            xs = pencil_eigenvalues(&mats, &mut rng);
            if xs.is_some() {
                break;
            }
        }
        let Some(xs) = xs else {
            continue;
        };
        return Ok(back_substitute(&sys, &p1, &p2, &xs, &m));
    }
    Err(Error::Degenerate("resultant pencil is singular for every variable choice".into()))
}

fn back_substitute(sys: &LogSystem, p1: &YPoly, p2: &YPoly, xs: &[Complex64], m: &[[i64; 2]; 2]) -> RootList {
    let (mut escapes, mut rejected) = (0, 0);
    let mut found = Vec::new();
    // log ζ = Mᵀ w' for transformed log coordinates w'
    let back = |w: &[Complex64]| -> Vec<Complex64> {
        vec![
            w[0] * m[0][0] as f64 + w[1] * m[1][0] as f64,
            w[0] * m[0][1] as f64 + w[1] * m[1][1] as f64,
        ]
    };
    for &x in xs {
        if !in_torus(&x) {
            continue;
        }
        let (c1, c2) = (p1.at_x(x), p2.at_x(x));
        let (solve, other) = if p1.y_degree() <= p2.y_degree() { (&c1, &c2) } else { (&c2, &c1) };
        let on_other = |y: Complex64| {
            let num = poly_eval(other, y).norm();
            let scale: f64 = other
                .iter()
                .enumerate()
                .map(|(k, c)| c.norm() * y.norm().powi(k as i32))
                .sum();
            if scale > 0.0 {
                num / scale
            } else {
                f64::INFINITY
            }
        };
        for y in poly_roots(solve) {
            if !in_torus(&y) || on_other(y) > 1e-3 {
                continue;
            }
            let w = back(&[x.ln(), y.ln()]);
            if sys.residual(&w) > PRE_POLISH_TOL {
                continue;
            }
            match newton(sys, w, false) {
                Polish::Converged(w, r) => found.push(Root {
                    point: to_point(&w),
                    residual: r,
                }),
                Polish::Escaped => escapes += 1,
                Polish::Failed => rejected += 1,
            }
        }
    }
    finish(found, escapes, rejected)
}

/// Complex roots for `n ∈ {1, 2}`.
pub fn all_roots(f: &SparseSystem, ens: &Ensemble) -> Result<RootList> {
    match ens.dim() {
        1 => {
            f.check_shape(ens)?;
            univariate_roots(f.component(0), ens.support(0), ens.covariance(0))
        }
        2 => bivariate_roots(f, ens),
        n => Err(Error::InvalidInput(format!("root finding supports n <= 2, got {n}"))),
    }
}

/// Which real roots to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orthants {
    /// `ζ ∈ ℝⁿ₊`, i.e. `q = 0`.
    Positive,
    /// Every real root, `q ∈ {0, π}ⁿ`.
    All,
}

/// Real roots of a real system, re-verified by Newton along `p` only.
pub fn real_roots(f: &SparseSystem, ens: &Ensemble) -> Result<RootList> {
    real_roots_in(f, ens, Orthants::Positive)
}

pub fn real_roots_in(f: &SparseSystem, ens: &Ensemble, orthants: Orthants) -> Result<RootList> {
    if ens.field() != Field::Real || !f.is_real() {
        return Err(Error::InvalidInput("real_roots needs a real ensemble and real coefficients".into()));
    }
    let all = all_roots(f, ens)?;
    let sys = LogSystem::new(f, ens);
    let mut found = Vec::new();
    let (mut escapes, mut rejected) = (all.boundary_escapes, all.rejected);
    for r in &all.roots {
        let snapped: Option<Vec<f64>> = r
            .point
            .q()
            .iter()
            .map(|&q| {
                if angle_gap(q, 0.0) <= REAL_TOLERANCE {
                    Some(0.0)
                } else if orthants == Orthants::All && angle_gap(q, PI) <= REAL_TOLERANCE {
                    Some(PI)
                } else {
                    None
                }
            })
            .collect();
        let Some(q) = snapped else {
            continue;
        };
        let w: Vec<Complex64> = r.point.p().iter().zip(&q).map(|(&p, &q)| Complex64::new(p, q)).collect();
        match newton(&sys, w, true) {
            Polish::Converged(w, res) => found.push(Root {
                point: TorusPoint::new(w.iter().map(|z| z.re).collect(), q).expect("finite root"),
                residual: res,
            }),
            Polish::Escaped => escapes += 1,
            Polish::Failed => rejected += 1,
        }
    }
    let mut out = finish(found, escapes, rejected);
    out.clustered |= all.clustered;
    Ok(out)
}

/// Number of roots whose `(p, q)` lies in the region.
pub fn count_roots_in_region(roots: &RootList, region: &Region) -> usize {
    roots.points().filter(|pt| region.contains(pt)).count()
}
