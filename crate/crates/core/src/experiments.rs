//! Monte Carlo harnesses: condition-number tails, expected root counts and
//! bound audits with confidence intervals.
//!
//! Trial `t` always uses `sample(ens, derive_seed(seed, t))`; trials run in
//! parallel and are reduced in trial order, so results do not depend on the
//! number of worker threads.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conditioning::{distance_to_sigma, kappa_over_region, restricted_condition, GridOptions};
use crate::error::{Error, Result};
use crate::kahler::{DiagonalCovariance, TorusPoint};
use crate::quadrature::QuadOptions;
use crate::randsys::{derive_seed, sample, Ensemble, Field, Region, SparseSystem};
use crate::rootfind::{all_roots, real_roots_in, Orthants, RootList};
use crate::supports::{exponents_up_to_degree, normalized_volume, q_to_f64, Support};
use crate::volume::expected_roots;

/// Two-sided confidence level of every reported interval.
pub const CONFIDENCE: f64 = 0.99;

fn z_value() -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + CONFIDENCE / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialReport {
    pub estimate: f64,
    pub stderr: f64,
    /// Trials that entered the estimate.
    pub trials: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub discarded_degenerate: usize,
}

impl TrialReport {
    /// Proportion `events / trials` with a Wilson interval.
    pub fn proportion(events: usize, trials: usize, seed: u64, discarded: usize) -> Self {
        if trials == 0 {
            return Self {
                estimate: 0.0,
                stderr: 0.0,
                trials: 0,
                ci_low: 0.0,
                ci_high: 1.0,
                seed,
                discarded_degenerate: discarded,
            };
        }
        let n = trials as f64;
        let p = events as f64 / n;
        let z = z_value();
        let z2 = z * z;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        let stderr = if trials > 1 {
            (p * (1.0 - p) * n / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Self {
            estimate: p,
            stderr,
            trials,
            ci_low: (centre - half).max(0.0).min(p),
            ci_high: (centre + half).min(1.0).max(p),
            seed,
            discarded_degenerate: discarded,
        }
    }

    /// Sample mean with a normal-approximation interval.
    pub fn mean(values: &[f64], seed: u64, discarded: usize) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                estimate: 0.0,
                stderr: 0.0,
                trials: 0,
                ci_low: 0.0,
                ci_high: 0.0,
                seed,
                discarded_degenerate: discarded,
            };
        }
        let m = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        let stderr = (var / n as f64).sqrt();
        let z = z_value();
        Self {
            estimate: m,
            stderr,
            trials: n,
            ci_low: m - z * stderr,
            ci_high: m + z * stderr,
            seed,
            discarded_degenerate: discarded,
        }
    }

    /// Multiply estimate and interval by a nonnegative constant.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            estimate: self.estimate * c,
            stderr: self.stderr * c,
            ci_low: self.ci_low * c,
            ci_high: self.ci_high * c,
            ..*self
        }
    }
}

/// Kostlan support (total degree `≤ d`) and multinomial weights
/// `d! / (a_1! ⋯ a_n! (d − Σa)!)`.
pub fn kostlan_covariance(d: u32, n: usize) -> Result<(Support, DiagonalCovariance)> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidInput("Kostlan ensembles need d >= 1 and n >= 1".into()));
    }
    let rows = exponents_up_to_degree(n, d as i64);
    let fact = |k: i64| (1..=k).map(|x| x as f64).product::<f64>();
    let weights = rows
        .iter()
        .map(|a| {
            let rest = d as i64 - a.iter().sum::<i64>();
            fact(d as i64) / (a.iter().map(|&x| fact(x)).product::<f64>() * fact(rest))
        })
        .collect();
    Ok((Support::new(rows)?, DiagonalCovariance::new(weights)?))
}

/// Unique root of a linear system in the basis `(1, x_1, …, x_n)`.
fn linear_root(f: &SparseSystem) -> Option<TorusPoint> {
    let n = f.dim();
    let m = DMatrix::from_fn(n, n, |i, j| f.component(i)[j + 1]);
    let rhs = DVector::from_fn(n, |i, _| -f.component(i)[0]);
    let x = m.lu().solve(&rhs)?;
    if x.iter().any(|z| !(z.norm() > 0.0) || !z.is_finite()) {
        return None;
    }
    let w: Vec<Complex64> = x.iter().map(|z| z.ln()).collect();
    Some(TorusPoint::from_log(&w))
}

/// Per-trial distances `d_P(f, Σ)` at the root of a random linear system.
fn linear_distances(n: usize, trials: usize, seed: u64, field: Field) -> Vec<Option<f64>> {
    let ens = Ensemble::linear(n, field);
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let f = sample(&ens, derive_seed(seed, t));
            let root = linear_root(&f)?;
            distance_to_sigma(&f, &ens, &root).ok()
        })
        .collect()
}

fn tail_reports(distances: &[Option<f64>], eps: &[f64], seed: u64) -> Vec<TrialReport> {
    let valid: Vec<f64> = distances.iter().flatten().copied().collect();
    let discarded = distances.len() - valid.len();
    eps.iter()
        .map(|&e| {
            let events = valid.iter().filter(|&&d| d < e).count();
            TrialReport::proportion(events, valid.len(), seed, discarded)
        })
        .collect()
}

/// `Prob[µ > 1/ε]` for random linear systems; one report per `ε`, all from
/// the same draws.
pub fn nu_lin_curve(n: usize, eps: &[f64], trials: usize, seed: u64, field: Field) -> Result<Vec<TrialReport>> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidInput(format!("linear tail estimates support n in 1..=3, got {n}")));
    }
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    Ok(tail_reports(&linear_distances(n, trials, seed, field), eps, seed))
}

pub fn estimate_nu_lin(n: usize, eps: f64, trials: usize, seed: u64, field: Field) -> Result<TrialReport> {
    Ok(nu_lin_curve(n, &[eps], trials, seed, field)?[0])
}

/// Roots used by the sparse experiments: complex roots for complex
/// ensembles, positive real roots for real ones.
fn trial_roots(f: &SparseSystem, ens: &Ensemble) -> Option<RootList> {
    let roots = match ens.field() {
        Field::Complex => all_roots(f, ens),
        Field::Real => real_roots_in(f, ens, Orthants::Positive),
    }
    .ok()?;
    (!roots.degenerate()).then_some(roots)
}

/// Per-trial outcome of a sparse tail experiment.
#[derive(Debug, Clone, Copy)]
struct SparseTrial {
    /// Smallest `d_P(f, Σ_ζ)` over roots `ζ` in the region (∞ if none).
    root_min: f64,
    /// Smallest fiber distance found by the grid sweep.
    sweep_min: Option<f64>,
}

fn sparse_trials(
    ens: &Ensemble,
    region: &Region,
    trials: usize,
    seed: u64,
    sweep: Option<&GridOptions>,
) -> Vec<Option<SparseTrial>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            if region.is_empty() {
                return Some(SparseTrial {
                    root_min: f64::INFINITY,
                    sweep_min: sweep.map(|_| f64::INFINITY),
                });
            }
            let f = sample(ens, derive_seed(seed, t));
            let roots = trial_roots(&f, ens)?;
            let mut root_min = f64::INFINITY;
            for pt in roots.points().filter(|pt| region.contains(pt)) {
                root_min = root_min.min(distance_to_sigma(&f, ens, pt).ok()?);
            }
            let sweep_min = match sweep {
                Some(g) => {
                    let mu = restricted_condition(&f, ens, region, g).ok()?.mu;
                    Some(if mu.is_finite() { (1.0 / mu).min(root_min) } else { 0.0 })
                }
                None => None,
            };
            Some(SparseTrial { root_min, sweep_min })
        })
        .collect()
}

/// Tail probabilities of a sparse ensemble over a region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuReport {
    pub eps: f64,
    /// Event evaluated at roots in the region only.
    pub roots: TrialReport,
    /// Event including a coarse grid sweep over every fiber in the region.
    pub sweep: Option<TrialReport>,
}

/// `ν^A(U, ε)` for each `ε`, from shared draws.
pub fn nu_sparse_curve(
    ens: &Ensemble,
    region: &Region,
    eps: &[f64],
    trials: usize,
    seed: u64,
    sweep: Option<&GridOptions>,
) -> Result<Vec<NuReport>> {
    if ens.dim() > 2 {
        return Err(Error::InvalidInput("sparse tail estimates support n <= 2".into()));
    }
    if region.dim() != ens.dim() {
        return Err(Error::InvalidInput("region and ensemble dimensions differ".into()));
    }
    let outcomes = sparse_trials(ens, region, trials, seed, sweep);
    let valid: Vec<SparseTrial> = outcomes.iter().flatten().copied().collect();
    let discarded = outcomes.len() - valid.len();
    Ok(eps
        .iter()
        .map(|&e| NuReport {
            eps: e,
            roots: TrialReport::proportion(valid.iter().filter(|t| t.root_min < e).count(), valid.len(), seed, discarded),
            sweep: sweep.map(|_| {
                let hits = valid.iter().filter(|t| t.sweep_min.is_some_and(|d| d < e)).count();
                TrialReport::proportion(hits, valid.len(), seed, discarded)
            }),
        })
        .collect())
}

pub fn estimate_nu_a(ens: &Ensemble, region: &Region, eps: f64, trials: usize, seed: u64) -> Result<TrialReport> {
    Ok(nu_sparse_curve(ens, region, &[eps], trials, seed, None)?[0].roots)
}

/// Mean number of roots in the region: complex roots for complex ensembles,
/// real roots in the chosen orthants for real ones.
pub fn estimate_expected_roots(
    ens: &Ensemble,
    region: &Region,
    trials: usize,
    seed: u64,
    orthants: Orthants,
) -> Result<TrialReport> {
    if ens.dim() > 2 {
        return Err(Error::InvalidInput("root counting supports n <= 2".into()));
    }
    let counts: Vec<Option<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            if region.is_empty() {
                return Some(0.0);
            }
            let f = sample(ens, derive_seed(seed, t));
            let roots = match ens.field() {
                Field::Complex => all_roots(&f, ens),
                Field::Real => real_roots_in(&f, ens, orthants),
            }
            .ok()?;
            if roots.degenerate() {
                return None;
            }
            Some(roots.points().filter(|pt| region.contains(pt)).count() as f64)
        })
        .collect();
    let valid: Vec<f64> = counts.iter().flatten().copied().collect();
    Ok(TrialReport::mean(&valid, seed, counts.len() - valid.len()))
}

pub fn estimate_expected_real_roots(
    ens: &Ensemble,
    region: &Region,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    if ens.field() != Field::Real {
        return Err(Error::InvalidInput("expected real roots need a real ensemble".into()));
    }
    estimate_expected_roots(ens, region, trials, seed, Orthants::Positive)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub eps: f64,
    pub empirical: TrialReport,
    pub rhs: f64,
    pub pass: bool,
}

/// Tail of the condition number over all roots against
/// `n³(n+1) Vol(A) (#A−1)(#A−2) ε⁴`; PASS iff the upper confidence limit is
/// below the bound.
pub fn check_thm1(support: &Support, eps: &[f64], trials: usize, seed: u64) -> Result<Vec<BoundRow>> {
    if !support.full_dim() {
        return Err(Error::NotFullDimensional);
    }
    let n = support.dim();
    if n > 2 {
        return Err(Error::InvalidInput("check_thm1 supports n <= 2".into()));
    }
    let ens = Ensemble::unmixed(support.clone(), DiagonalCovariance::identity(support.len()), Field::Complex)?;
    let vol = q_to_f64(&normalized_volume(&support.hull()));
    let m = support.len() as f64;
    let nf = n as f64;
    let curve = nu_sparse_curve(&ens, &Region::full(n), eps, trials, seed, None)?;
    Ok(curve
        .into_iter()
        .map(|r| {
            let rhs = nf.powi(3) * (nf + 1.0) * vol * (m - 1.0) * (m - 2.0) * r.eps.powi(4);
            BoundRow {
                eps: r.eps,
                pass: r.roots.ci_high <= rhs,
                empirical: r.roots,
                rhs,
            }
        })
        .collect())
}

/// Comparison of a sparse tail with a bound built from other estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub eps: f64,
    pub lhs: TrialReport,
    pub rhs: TrialReport,
    /// Upper confidence limit of the right side minus lower limit of the left.
    pub slack: f64,
    pub pass: bool,
    /// Extra quantities entering the right side.
    pub factors: Vec<(&'static str, f64)>,
}

fn compare(eps: f64, lhs: TrialReport, rhs: TrialReport, factors: Vec<(&'static str, f64)>) -> ComparisonReport {
    let slack = rhs.ci_high - lhs.ci_low;
    ComparisonReport {
        eps,
        lhs,
        rhs,
        slack,
        pass: slack > 0.0,
        factors,
    }
}

/// Sparse tail over `U` against the linear tail at `√κ_U ε`, scaled by the
/// ratio of expected root counts in `U`.
pub fn check_thm5(
    ens: &Ensemble,
    region: &Region,
    eps: f64,
    trials: usize,
    seed: u64,
    grid: &GridOptions,
    quad: &QuadOptions,
) -> Result<ComparisonReport> {
    if ens.dim() > 2 {
        return Err(Error::InvalidInput("check_thm5 supports n <= 2".into()));
    }
    let n = ens.dim();
    let ens = ens.with_field(Field::Complex);
    let lhs = estimate_nu_a(&ens, region, eps, trials, seed)?;
    let num = expected_roots(&ens, region, quad)?.value;
    let den = expected_roots(&Ensemble::linear(n, Field::Complex), region, quad)?.value;
    let kappa = kappa_over_region(&ens, region, grid)?.kappa;
    let ratio = if den > 0.0 { num / den } else { f64::INFINITY };
    let lin = estimate_nu_lin(n, kappa.sqrt() * eps, trials, derive_seed(seed, u64::MAX), Field::Complex)?;
    let rhs = lin.scaled(ratio);
    Ok(compare(
        eps,
        lhs,
        rhs,
        vec![("root_ratio", ratio), ("kappa", kappa)],
    ))
}

/// Real unmixed tail over `U` against `E(U) ν_ℝ(n, ε)`.
pub fn check_thm6(
    support: &Support,
    cov: &DiagonalCovariance,
    region: &Region,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    let n = support.dim();
    if n > 2 {
        return Err(Error::InvalidInput("check_thm6 supports n <= 2".into()));
    }
    let ens = Ensemble::unmixed(support.clone(), cov.clone(), Field::Real)?;
    let lhs = estimate_nu_a(&ens, region, eps, trials, seed)?;
    let e_u = estimate_expected_real_roots(&ens, region, trials, derive_seed(seed, u64::MAX - 1))?;
    let nu_r = estimate_nu_lin(n, eps, trials, derive_seed(seed, u64::MAX), Field::Real)?;
    // product of the two upper limits bounds the product with the combined confidence
    let rhs = TrialReport {
        estimate: e_u.estimate * nu_r.estimate,
        stderr: (e_u.estimate * nu_r.stderr).hypot(nu_r.estimate * e_u.stderr),
        trials: nu_r.trials,
        ci_low: e_u.ci_low.max(0.0) * nu_r.ci_low,
        ci_high: e_u.ci_high.max(0.0) * nu_r.ci_high,
        seed,
        discarded_degenerate: e_u.discarded_degenerate + nu_r.discarded_degenerate,
    };
    Ok(compare(
        eps,
        lhs,
        rhs,
        vec![("expected_real_roots", e_u.estimate), ("nu_real", nu_r.estimate)],
    ))
}
