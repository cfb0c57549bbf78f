//! Condition matrix, distance to the fiber discriminant, condition-number
//! bounds, restricted condition over a region and mixed dilation.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kahler::{KahlerFrame, TorusPoint};
use crate::optim::{bfgs, nelder_mead};
use crate::randsys::{Ensemble, Field, Region, RegionBox, SparseSystem};

/// Largest normalized residual `|f^i·v_i| / ‖f^i‖` accepted as a root.
pub const ROOT_TOLERANCE: f64 = 1e-8;

/// Relative singular-value threshold below which `D(f)` counts as singular.
const SINGULAR_RTOL: f64 = 1e-13;

const RANDOM_STARTS: u64 = 8;
const GRID_STARTS: usize = 6;

/// `D(f)` at a fiber point: row `i` is `f^i · Dv_{A_i}`.
#[derive(Debug, Clone)]
pub struct ConditionMatrix {
    rows: DMatrix<Complex64>,
    norms: Vec<f64>,
    residuals: Vec<f64>,
    frames: Vec<KahlerFrame>,
    real: bool,
}

impl ConditionMatrix {
    /// Requires `point` to be a root of `f` within [`ROOT_TOLERANCE`].
    pub fn new(f: &SparseSystem, ens: &Ensemble, point: &TorusPoint) -> Result<Self> {
        let cm = Self::at_point(f, ens, point)?;
        let worst = cm.residuals.iter().copied().fold(0.0, f64::max);
        if worst > ROOT_TOLERANCE {
            return Err(Error::NotARoot {
                residual: worst,
                tolerance: ROOT_TOLERANCE,
            });
        }
        Ok(cm)
    }

    /// Same matrix without the root check; residuals are kept.
    pub(crate) fn at_point(f: &SparseSystem, ens: &Ensemble, point: &TorusPoint) -> Result<Self> {
        f.check_shape(ens)?;
        let n = ens.dim();
        let frames = ens.frames(point)?;
        let mut rows = DMatrix::<Complex64>::zeros(n, n);
        let mut norms = Vec::with_capacity(n);
        let mut residuals = Vec::with_capacity(n);
        for (i, fr) in frames.iter().enumerate() {
            let fi = f.component(i);
            let norm = f.component_norm(i);
            if norm == 0.0 {
                return Err(Error::ZeroComponent { index: i });
            }
            for j in 0..n {
                rows[(i, j)] = fi.iter().zip(fr.dv.column(j).iter()).map(|(a, b)| a * b).sum();
            }
            let r: Complex64 = fi.iter().zip(fr.v.iter()).map(|(a, b)| a * b).sum();
            norms.push(norm);
            residuals.push(r.norm() / norm);
        }
        let scale = rows.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let real = ens.field() == Field::Real
            && f.is_real()
            && rows.iter().all(|z| z.im.abs() <= 1e-12 * scale.max(1e-300));
        Ok(Self {
            rows,
            norms,
            residuals,
            frames,
            real,
        })
    }

    pub fn rows(&self) -> &DMatrix<Complex64> {
        &self.rows
    }

    pub fn frames(&self) -> &[KahlerFrame] {
        &self.frames
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn determinant(&self) -> Complex64 {
        self.rows.determinant()
    }

    /// Rows divided by `‖f^i‖`.
    pub fn normalized(&self) -> DMatrix<Complex64> {
        let mut m = self.rows.clone();
        for (i, &s) in self.norms.iter().enumerate() {
            m.row_mut(i).scale_mut(1.0 / s);
        }
        m
    }

    pub fn is_singular(&self) -> bool {
        let sv = self.normalized().singular_values();
        let max = sv.max();
        max == 0.0 || sv.min() <= SINGULAR_RTOL * max
    }

    /// `½ D²g_{A_i}` for every `i`.
    fn metrics(&self) -> Vec<DMatrix<f64>> {
        self.frames.iter().map(KahlerFrame::metric).collect()
    }
}

/// `Σ_i |(Du)_i|² / (uᴴ G_i u)` and its gradient in real coordinates.
struct FiberObjective {
    d: DMatrix<Complex64>,
    g: Vec<DMatrix<f64>>,
    real: bool,
}

impl FiberObjective {
    fn n(&self) -> usize {
        self.d.ncols()
    }

    fn unpack(&self, x: &[f64]) -> DVector<Complex64> {
        let n = self.n();
        DVector::from_fn(n, |j, _| {
            if self.real {
                Complex64::new(x[j], 0.0)
            } else {
                Complex64::new(x[j], x[n + j])
            }
        })
    }

    fn pack(&self, u: &DVector<Complex64>) -> Vec<f64> {
        let mut x: Vec<f64> = u.iter().map(|z| z.re).collect();
        if !self.real {
            x.extend(u.iter().map(|z| z.im));
        }
        x
    }

    fn quad(g: &DMatrix<f64>, u: &DVector<Complex64>) -> (f64, DVector<Complex64>) {
        let gu = DVector::from_fn(u.len(), |i, _| {
            (0..u.len()).map(|j| u[j] * g[(i, j)]).sum::<Complex64>()
        });
        (u.dotc(&gu).re, gu)
    }

    fn cost(&self, x: &[f64]) -> f64 {
        // the ratio is scale invariant; u = 0 is not a direction
        if x.iter().any(|v| !v.is_finite()) || x.iter().all(|v| v.abs() < f64::MIN_POSITIVE.sqrt()) {
            return f64::INFINITY;
        }
        let u = self.unpack(x);
        let du = &self.d * &u;
        let mut acc = 0.0;
        for (i, g) in self.g.iter().enumerate() {
            let (q, _) = Self::quad(g, &u);
            let num = du[i].norm_sqr();
            if q > 0.0 {
                acc += num / q;
            } else if num > 0.0 {
                return f64::INFINITY;
            }
        }
        acc
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let u = self.unpack(x);
        let du = &self.d * &u;
        let mut w = DVector::<Complex64>::zeros(n);
        for (i, g) in self.g.iter().enumerate() {
            let (q, gu) = Self::quad(g, &u);
            if q <= 0.0 {
                continue;
            }
            let num = du[i].norm_sqr();
            for j in 0..n {
                let dn = du[i] * self.d[(i, j)].conj();
                w[j] += (dn * q - gu[j] * num) / (q * q);
            }
        }
        let mut out: Vec<f64> = w.iter().map(|z| 2.0 * z.re).collect();
        if !self.real {
            out.extend(w.iter().map(|z| 2.0 * z.im));
        }
        out
    }
}

fn eigen_desc(m: DMatrix<Complex64>) -> (Vec<f64>, Vec<DVector<Complex64>>) {
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (
        idx.iter().map(|&k| eig.eigenvalues[k]).collect(),
        idx.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect(),
    )
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

fn hermitian_part(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Smallest generalized eigenpair of `(DᴴD, G)` with `G` positive definite.
fn generalized_min(d: &DMatrix<Complex64>, g: &DMatrix<f64>) -> Option<(f64, DVector<Complex64>)> {
    let chol = g.clone().cholesky()?;
    let l = complexify(&chol.l());
    let linv = l.try_inverse()?;
    let m = hermitian_part(&linv * d.adjoint() * d * linv.adjoint());
    let (vals, vecs) = eigen_desc(m);
    let k = vals.len() - 1;
    Some((vals[k].max(0.0), linv.adjoint() * &vecs[k]))
}

fn random_starts(dim: usize, count: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + s);
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        })
        .collect()
}

/// Best cells of a grid over the directions `(cos t, e^{iφ} sin t)` (real
/// mode: `(cos t, sin t)`); ill-conditioned metrics give narrow valleys that
/// random starts miss.
fn sphere_grid_starts(obj: &FiberObjective) -> Vec<Vec<f64>> {
    let (nt, np) = if obj.real { (96, 1) } else { (32, 64) };
    let span = if obj.real { PI } else { FRAC_PI_2 };
    let mut cells: Vec<(f64, Vec<f64>)> = Vec::with_capacity(nt * np);
    for i in 0..nt {
        let t = span * (i as f64 + 0.5) / nt as f64;
        for j in 0..np {
            let x = if obj.real {
                vec![t.cos(), t.sin()]
            } else {
                let phi = TAU * j as f64 / np as f64;
                vec![t.cos(), t.sin() * phi.cos(), 0.0, t.sin() * phi.sin()]
            };
            cells.push((obj.cost(&x), x));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    cells.into_iter().take(GRID_STARTS).map(|(_, x)| x).collect()
}

/// `min_u Σ_i |(Du)_i|² / (uᴴ G_i u)` with `D` row-normalized.
fn min_fiber_ratio(obj: &FiberObjective, unmixed: bool) -> (f64, DVector<Complex64>) {
    let n = obj.n();
    if n == 1 {
        let q = obj.g[0][(0, 0)];
        let u = DVector::from_element(1, Complex64::new(1.0, 0.0));
        return (if q > 0.0 { obj.d[(0, 0)].norm_sqr() / q } else { 0.0 }, u);
    }
    if unmixed {
        if let Some(pair) = generalized_min(&obj.d, &obj.g[0]) {
            return pair;
        }
    }
    let mut starts: Vec<Vec<f64>> = obj
        .g
        .iter()
        .filter_map(|g| generalized_min(&obj.d, g))
        .map(|(_, u)| obj.pack(&u))
        .collect();
    let dim = if obj.real { n } else { 2 * n };
    if n == 2 {
        starts.extend(sphere_grid_starts(obj));
    } else {
        starts.extend(random_starts(dim, RANDOM_STARTS));
    }
    let mut best = (f64::INFINITY, DVector::zeros(n));
    for x0 in starts {
        let norm = x0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0: Vec<f64> = x0.iter().map(|x| x / norm).collect();
        let (x, c) = bfgs(|x| obj.cost(x), |x| obj.grad(x), x0, 400);
        if c < best.0 {
            best = (c, obj.unpack(&x));
        }
    }
    best
}

fn fiber_objective(cm: &ConditionMatrix) -> FiberObjective {
    FiberObjective {
        d: cm.normalized(),
        g: cm.metrics(),
        real: cm.real,
    }
}

/// Multiprojective distance from a root to the discriminant slice at that root.
pub fn distance_to_sigma(f: &SparseSystem, ens: &Ensemble, point: &TorusPoint) -> Result<f64> {
    let cm = ConditionMatrix::new(f, ens, point)?;
    Ok(distance_from_matrix(&cm, ens.is_unmixed()))
}

fn distance_from_matrix(cm: &ConditionMatrix, unmixed: bool) -> f64 {
    if cm.is_singular() {
        return 0.0;
    }
    let (d2, _) = min_fiber_ratio(&fiber_objective(cm), unmixed);
    d2.max(0.0).sqrt()
}

/// Distance from `f` to the discriminant slice of the fiber at any point:
/// the off-fiber part `|f^i · v_i|` is added in quadrature.
pub fn fiber_distance(f: &SparseSystem, ens: &Ensemble, point: &TorusPoint) -> Result<f64> {
    let cm = ConditionMatrix::at_point(f, ens, point)?;
    let off: f64 = cm.residuals.iter().map(|r| r * r).sum();
    let on = if cm.is_singular() {
        0.0
    } else {
        min_fiber_ratio(&fiber_objective(&cm), ens.is_unmixed()).0
    };
    Ok((off + on).max(0.0).sqrt())
}

/// Lower and upper bounds on the condition number at a root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `lower = max_{‖v‖=1} min_j ‖D⁻¹v‖_{A_j}` and `upper = max_{‖v‖=1} max_j ‖D⁻¹v‖_{A_j}`,
/// with `D` row-normalized. The upper value is exact; the lower one is the best
/// value found and always a valid lower bound.
pub fn condition_bounds(
    f: &SparseSystem,
    ens: &Ensemble,
    point: &TorusPoint,
) -> Result<ConditionBounds> {
    let cm = ConditionMatrix::new(f, ens, point)?;
    Ok(bounds_from_matrix(&cm, ens.is_unmixed()))
}

fn bounds_from_matrix(cm: &ConditionMatrix, unmixed: bool) -> ConditionBounds {
    let inf = ConditionBounds {
        lower: f64::INFINITY,
        upper: f64::INFINITY,
    };
    if cm.is_singular() {
        return inf;
    }
    let d = cm.normalized();
    let Some(dinv) = d.clone().try_inverse() else {
        return inf;
    };
    let ms: Vec<DMatrix<Complex64>> = cm
        .metrics()
        .iter()
        .map(|g| hermitian_part(dinv.adjoint() * complexify(g) * &dinv))
        .collect();
    let tops: Vec<(f64, DVector<Complex64>)> = ms
        .iter()
        .map(|m| {
            let (vals, vecs) = eigen_desc(m.clone());
            (vals[0].max(0.0), vecs[0].clone())
        })
        .collect();
    let upper = tops.iter().map(|t| t.0).fold(0.0, f64::max).sqrt();
    if unmixed {
        return ConditionBounds {
            lower: upper,
            upper,
        };
    }
    let n = d.ncols();
    let real = cm.real;
    let unpack = |x: &[f64]| -> DVector<Complex64> {
        DVector::from_fn(n, |j, _| {
            if real {
                Complex64::new(x[j], 0.0)
            } else {
                Complex64::new(x[j], x[n + j])
            }
        })
    };
    let pack = |v: &DVector<Complex64>| -> Vec<f64> {
        let mut x: Vec<f64> = v.iter().map(|z| z.re).collect();
        if !real {
            x.extend(v.iter().map(|z| z.im));
        }
        x
    };
    let min_form = |x: &[f64]| -> f64 {
        let v = unpack(x);
        let nv = v.norm_squared();
        if !(nv > 0.0 && nv.is_finite()) {
            return 0.0;
        }
        ms.iter()
            .map(|m| (v.dotc(&(m * &v))).re / nv)
            .fold(f64::INFINITY, f64::min)
    };
    let mut starts: Vec<Vec<f64>> = tops.iter().map(|t| pack(&t.1)).collect();
    let (_, ustar) = min_fiber_ratio(&fiber_objective(cm), false);
    starts.push(pack(&(&d * ustar)));
    let dim = if real { n } else { 2 * n };
    starts.extend(random_starts(dim, RANDOM_STARTS));
    let mut best = 0.0f64;
    for x0 in starts {
        best = best.max(min_form(&x0));
        let (_, c) = nelder_mead(|x| -min_form(x), x0, 0.2, 2000);
        best = best.max(-c);
    }
    ConditionBounds {
        lower: best.max(0.0).sqrt().min(upper),
        upper,
    }
}

/// Lattice used for sweeps over a region: `p` on multiples of `spacing`
/// (clipped to `[-p_bound, p_bound]` for unbounded boxes) and `q` on multiples
/// of `2π / q_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridOptions {
    pub spacing: f64,
    pub q_steps: usize,
    pub p_bound: f64,
    /// Local search from the worst lattice point. Only lattice-only sweeps are
    /// monotone under region enlargement.
    pub refine: bool,
    pub max_points: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            spacing: 0.25,
            q_steps: 16,
            p_bound: 6.0,
            refine: true,
            max_points: 200_000,
        }
    }
}

fn axis_values(lo: f64, hi: f64, h: f64, bound: f64) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let lo = lo.max(-bound);
    let hi = hi.min(bound);
    if lo > hi {
        return vec![];
    }
    let k0 = (lo / h).ceil() as i64;
    let k1 = (hi / h).floor() as i64;
    (k0..=k1)
        .map(|k| k as f64 * h)
        .filter(|&x| x >= lo && x < hi || (x == hi && hi == bound))
        .collect()
}

fn box_lattice(b: &RegionBox, grid: &GridOptions, with_q: bool) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = b.dim();
    let qh = TAU / grid.q_steps.max(1) as f64;
    let mut axes: Vec<Vec<f64>> = b
        .p
        .iter()
        .map(|&(lo, hi)| axis_values(lo, hi, grid.spacing, grid.p_bound))
        .collect();
    if with_q {
        axes.extend(b.q.iter().map(|&(lo, hi)| axis_values(lo, hi, qh, TAU)));
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    if axes.iter().any(Vec::is_empty) {
        return out;
    }
    loop {
        let vals: Vec<f64> = idx.iter().zip(&axes).map(|(&k, a)| a[k]).collect();
        let (p, q) = vals.split_at(n);
        let q = if with_q { q.to_vec() } else { vec![0.0; n] };
        out.push((p.to_vec(), q));
        let mut k = 0;
        loop {
            if k == axes.len() {
                return out;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn region_lattice(region: &Region, grid: &GridOptions, with_q: bool) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if !(grid.spacing > 0.0) || grid.q_steps == 0 || !(grid.p_bound > 0.0) {
        return Err(Error::InvalidInput("grid spacing, q_steps and p_bound must be positive".into()));
    }
    let mut pts = Vec::new();
    for b in region.boxes() {
        pts.extend(box_lattice(b, grid, with_q));
        if pts.len() > grid.max_points {
            return Err(Error::InvalidInput(format!(
                "grid exceeds {} points; increase spacing",
                grid.max_points
            )));
        }
    }
    if pts.is_empty() {
        // region smaller than one lattice cell: fall back to box centers
        for b in region.boxes() {
            let mid = |&(lo, hi): &(f64, f64)| {
                let (lo, hi) = (lo.max(-grid.p_bound), hi.min(grid.p_bound));
                0.5 * (lo + hi)
            };
            let q = if with_q {
                b.q.iter().map(|iv| 0.5 * (iv.0 + iv.1)).collect()
            } else {
                vec![0.0; b.dim()]
            };
            pts.push((b.p.iter().map(mid).collect(), q));
        }
    }
    Ok(pts)
}

/// Result of a sweep of `1 / d_P(f, Σ_(p,q))` over a region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictedCondition {
    pub mu: f64,
    pub worst: TorusPoint,
    pub spacing: f64,
    pub q_steps: usize,
    pub points: usize,
}

/// `µ(f; U)` estimated as the maximum of `1 / fiber_distance` over the grid.
pub fn restricted_condition(
    f: &SparseSystem,
    ens: &Ensemble,
    region: &Region,
    grid: &GridOptions,
) -> Result<RestrictedCondition> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let pts = region_lattice(region, grid, true)?;
    let mut best_d = f64::INFINITY;
    let mut worst = TorusPoint::origin(ens.dim());
    for (p, q) in &pts {
        let pt = TorusPoint::new(p.clone(), q.clone())?;
        let d = fiber_distance(f, ens, &pt)?;
        if d < best_d {
            best_d = d;
            worst = pt;
        }
    }
    if grid.refine && best_d > 0.0 {
        if let Some(b) = region.boxes().iter().find(|b| b.contains(worst.p(), worst.q())) {
            let n = ens.dim();
            let clamp = |x: &[f64]| -> TorusPoint {
                let p = x[..n]
                    .iter()
                    .zip(&b.p)
                    .map(|(&v, &(lo, hi))| v.clamp(lo.max(-grid.p_bound), hi.min(grid.p_bound)))
                    .collect();
                let q = x[n..]
                    .iter()
                    .zip(&b.q)
                    .map(|(&v, &(lo, hi))| v.clamp(lo, if hi > lo { hi - 1e-12 } else { hi }))
                    .collect();
                TorusPoint::new(p, q).expect("clamped point is finite")
            };
            let x0: Vec<f64> = worst.p().iter().chain(worst.q()).copied().collect();
            let cost = |x: &[f64]| fiber_distance(f, ens, &clamp(x)).unwrap_or(f64::INFINITY);
            let (x, c) = nelder_mead(cost, x0, 0.5 * grid.spacing, 400);
            if c < best_d {
                best_d = c;
                worst = clamp(&x);
            }
        }
    }
    Ok(RestrictedCondition {
        mu: if best_d > 0.0 { 1.0 / best_d } else { f64::INFINITY },
        worst,
        spacing: grid.spacing,
        q_steps: grid.q_steps,
        points: pts.len(),
    })
}

/// Certified upper bound on the mixed dilation of a tuple of metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct DilationReport {
    pub kappa_upper: f64,
    /// Upper-triangular with unit determinant.
    pub minimizer: DMatrix<f64>,
    pub per_support_ratios: Vec<f64>,
}

fn spectral_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn dilation_ratios(hs: &[DMatrix<f64>], l: &DMatrix<f64>) -> Vec<f64> {
    hs.iter().map(|h| spectral_ratio(&(l.transpose() * h * l))).collect()
}

fn upper_from_params(x: &[f64], n: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    let mut k = n;
    for i in 0..n {
        l[(i, i)] = x[i].exp();
        for j in i + 1..n {
            l[(i, j)] = x[k];
            k += 1;
        }
    }
    l
}

fn params_from_upper(l: &DMatrix<f64>) -> Vec<f64> {
    let n = l.nrows();
    let mut x: Vec<f64> = (0..n).map(|i| l[(i, i)].abs().ln()).collect();
    for i in 0..n {
        for j in i + 1..n {
            x.push(l[(i, j)] * l[(i, i)].signum());
        }
    }
    x
}

/// Inverse of the upper Cholesky factor, so that `Lᵀ H L = I`.
fn whitening(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let r = h.clone().cholesky()?.l().transpose();
    r.try_inverse()
}

/// Minimize `max_i cond(Lᵀ H_i L)` over upper-triangular `L`.
pub fn mixed_dilation(hs: &[DMatrix<f64>]) -> Result<DilationReport> {
    let n = hs.first().map_or(0, DMatrix::nrows);
    if n == 0 {
        return Err(Error::InvalidInput("no matrices".into()));
    }
    for (i, h) in hs.iter().enumerate() {
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::InvalidInput(format!("matrix {i} is not {n}x{n}")));
        }
        let sym = (h - h.transpose()).abs().max() <= 1e-12 * h.abs().max().max(1e-300);
        if !sym || h.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(format!("matrix {i}")));
        }
    }
    let mut starts = vec![DMatrix::identity(n, n)];
    starts.extend(hs.iter().filter_map(whitening));
    let mean = hs.iter().fold(DMatrix::zeros(n, n), |acc, h| acc + h) / hs.len() as f64;
    starts.extend(whitening(&mean));

    let cost = |x: &[f64]| -> f64 {
        let l = upper_from_params(x, n);
        dilation_ratios(hs, &l)
            .into_iter()
            .map(f64::ln)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for s in starts {
        let x0 = params_from_upper(&s);
        let (x, c) = if n == 1 {
            let c = cost(&x0);
            (x0, c)
        } else {
            nelder_mead(cost, x0, 0.3, 3000)
        };
        if best.as_ref().is_none_or(|b| c < b.0) {
            best = Some((c, upper_from_params(&x, n)));
        }
    }
    let (_, mut l) = best.expect("at least one start");
    let det = l.determinant();
    l /= det.abs().powf(1.0 / n as f64);
    if det < 0.0 {
        l.row_mut(0).neg_mut();
    }
    let per_support_ratios = dilation_ratios(hs, &l);
    let kappa_upper = per_support_ratios.iter().copied().fold(1.0, f64::max);
    Ok(DilationReport {
        kappa_upper,
        minimizer: l,
        per_support_ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaReport {
    pub kappa: f64,
    pub worst_p: Vec<f64>,
    pub spacing: f64,
    pub points: usize,
}

/// Maximum of [`mixed_dilation`] over the p-lattice of the region; `+∞` when
/// some Hessian is singular there.
pub fn kappa_over_region(ens: &Ensemble, region: &Region, grid: &GridOptions) -> Result<KappaReport> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut pts: Vec<Vec<f64>> = region_lattice(region, grid, false)?
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    pts.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    let mut kappa = 1.0f64;
    let mut worst_p = pts[0].clone();
    for p in &pts {
        let hs: Vec<DMatrix<f64>> = ens
            .items()
            .iter()
            .map(|it| crate::kahler::hessian(&it.support, &it.covariance, p))
            .collect::<Result<_>>()?;
        let k = match mixed_dilation(&hs) {
            Ok(r) => r.kappa_upper,
            Err(Error::NotPositiveDefinite(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if k > kappa {
            kappa = k;
            worst_p = p.clone();
        }
    }
    Ok(KappaReport {
        kappa,
        worst_p,
        spacing: grid.spacing,
        points: pts.len(),
    })
}
