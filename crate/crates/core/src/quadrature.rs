//! Adaptive tensor Gauss–Legendre quadrature over boxes that may be unbounded.
//!
//! Infinite directions are mapped to finite ones: `p = t / (1 − t²)` on
//! `(−1, 1)` for the whole line and `p = a + t / (1 − t)` on `[0, 1)` for a
//! half line. Each panel is integrated with 6- and 9-point rules; the
//! difference is the panel error estimate. The worst panels are bisected in
//! every direction until the total estimate meets the tolerance.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    /// Initial number of panels per direction.
    pub initial_splits: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-10,
            max_panels: 60_000,
            initial_splits: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
enum AxisMap {
    Finite,
    Line,
    Above(f64),
    Below(f64),
}

impl AxisMap {
    fn new(lo: f64, hi: f64) -> (Self, f64, f64) {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (Self::Finite, lo, hi),
            (false, false) => (Self::Line, -1.0, 1.0),
            (true, false) => (Self::Above(lo), 0.0, 1.0),
            (false, true) => (Self::Below(hi), 0.0, 1.0),
        }
    }

    /// `(p, dp/dt)` at `t`.
    fn apply(self, t: f64) -> (f64, f64) {
        match self {
            Self::Finite => (t, 1.0),
            Self::Line => {
                let s = 1.0 - t * t;
                (t / s, (1.0 + t * t) / (s * s))
            }
            Self::Above(a) => {
                let s = 1.0 - t;
                (a + t / s, 1.0 / (s * s))
            }
            Self::Below(b) => {
                let s = 1.0 - t;
                (b - t / s, 1.0 / (s * s))
            }
        }
    }
}

fn rule(k: usize) -> &'static [(f64, f64)] {
    static LOW: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static HIGH: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let make = |deg: usize| {
        let mut v = GaussLegendre::new(deg)
            .expect("degree >= 2")
            .as_node_weight_pairs()
            .to_vec();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    match k {
        6 => LOW.get_or_init(|| make(6)),
        _ => HIGH.get_or_init(|| make(9)),
    }
}

#[derive(Debug, Clone)]
struct Panel {
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: f64,
    error: f64,
}

fn tensor_rule<F>(f: &F, maps: &[AxisMap], lo: &[f64], hi: &[f64], nodes: &[(f64, f64)]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let n = lo.len();
    let k = nodes.len();
    let mut idx = vec![0usize; n];
    let mut p = vec![0.0; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for d in 0..n {
            let half = 0.5 * (hi[d] - lo[d]);
            let t = lo[d] + half * (nodes[idx[d]].0 + 1.0);
            let (x, jac) = maps[d].apply(t);
            p[d] = x;
            w *= nodes[idx[d]].1 * half * jac;
        }
        if w != 0.0 && w.is_finite() {
            let v = f(&p);
            if !v.is_finite() {
                return Err(Error::NonConvergence {
                    what: "quadrature integrand",
                    value: v,
                    residual: f64::NAN,
                });
            }
            total += w * v;
        }
        let mut d = 0;
        loop {
            if d == n {
                return Ok(total);
            }
            idx[d] += 1;
            if idx[d] < k {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn evaluate_panel<F>(f: &F, maps: &[AxisMap], lo: Vec<f64>, hi: Vec<f64>) -> Result<Panel>
where
    F: Fn(&[f64]) -> f64,
{
    let low = tensor_rule(f, maps, &lo, &hi, rule(6))?;
    let high = tensor_rule(f, maps, &lo, &hi, rule(9))?;
    Ok(Panel {
        lo,
        hi,
        value: high,
        error: (high - low).abs(),
    })
}

fn children(p: &Panel) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = p.lo.len();
    (0..1usize << n)
        .map(|mask| {
            let mut lo = p.lo.clone();
            let mut hi = p.hi.clone();
            for d in 0..n {
                let mid = 0.5 * (p.lo[d] + p.hi[d]);
                if mask >> d & 1 == 0 {
                    hi[d] = mid;
                } else {
                    lo[d] = mid;
                }
            }
            (lo, hi)
        })
        .collect()
}

fn ordered_sum(panels: &[Panel]) -> (f64, f64) {
    let mut order: Vec<&Panel> = panels.iter().collect();
    order.sort_by(|a, b| {
        a.lo.iter()
            .zip(&b.lo)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

/// Integrate `f` over the box `bounds` (entries may be infinite).
pub fn integrate_box<F>(f: F, bounds: &[(f64, f64)], opts: &QuadOptions) -> Result<Integral>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = bounds.len();
    if n == 0 {
        return Ok(Integral {
            value: f(&[]),
            error: 0.0,
            panels: 1,
        });
    }
    let mut maps = Vec::with_capacity(n);
    let mut tlo = Vec::with_capacity(n);
    let mut thi = Vec::with_capacity(n);
    for &(lo, hi) in bounds {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInput(format!("bad integration interval ({lo}, {hi})")));
        }
        if lo == hi {
            return Ok(Integral {
                value: 0.0,
                error: 0.0,
                panels: 0,
            });
        }
        let (m, a, b) = AxisMap::new(lo, hi);
        maps.push(m);
        tlo.push(a);
        thi.push(b);
    }
    let splits = opts.initial_splits.max(1);
    let mut cells = Vec::new();
    let total_cells = splits.pow(n as u32);
    for c in 0..total_cells {
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        let mut r = c;
        for d in 0..n {
            let k = r % splits;
            r /= splits;
            let w = (thi[d] - tlo[d]) / splits as f64;
            lo[d] = tlo[d] + w * k as f64;
            hi[d] = if k + 1 == splits { thi[d] } else { tlo[d] + w * (k + 1) as f64 };
        }
        cells.push((lo, hi));
    }
    let mut panels: Vec<Panel> = cells
        .into_par_iter()
        .map(|(lo, hi)| evaluate_panel(&f, &maps, lo, hi))
        .collect::<Result<_>>()?;
    loop {
        let (value, error) = ordered_sum(&panels);
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(Integral {
                value,
                error,
                panels: panels.len(),
            });
        }
        if panels.len() >= opts.max_panels {
            return Err(Error::NonConvergence {
                what: "quadrature",
                value,
                residual: error,
            });
        }
        // refine the worst panels; ties resolved by position for determinism
        let mut order: Vec<usize> = (0..panels.len()).collect();
        order.sort_by(|&a, &b| {
            panels[b].error.total_cmp(&panels[a].error).then_with(|| {
                panels[a]
                    .lo
                    .iter()
                    .zip(&panels[b].lo)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let batch = (panels.len() / 8).clamp(1, 64);
        let mut chosen: Vec<usize> = order.into_iter().take(batch).collect();
        chosen.sort_unstable();
        let mut fresh = Vec::new();
        for &i in chosen.iter().rev() {
            let p = panels.swap_remove(i);
            fresh.extend(children(&p));
        }
        let new: Vec<Panel> = fresh
            .into_par_iter()
            .map(|(lo, hi)| evaluate_panel(&f, &maps, lo, hi))
            .collect::<Result<_>>()?;
        panels.extend(new);
    }
}
