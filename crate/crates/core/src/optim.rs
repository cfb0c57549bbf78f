//! Thin wrappers over argmin for the small unconstrained problems used here.

use std::cell::{Cell, RefCell};

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::neldermead::NelderMead;
use argmin::solver::quasinewton::BFGS;

struct Smooth<'a, F, G> {
    cost: F,
    grad: G,
    evals: Cell<u64>,
    budget: u64,
    best: &'a RefCell<(f64, Vec<f64>)>,
}

impl<F, G> CostFunction for Smooth<'_, F, G>
where
    F: Fn(&[f64]) -> f64,
{
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, argmin::core::Error> {
        // the line search has no iteration cap of its own
        self.evals.set(self.evals.get() + 1);
        if self.evals.get() > self.budget {
            return Err(argmin::core::Error::msg("evaluation budget exhausted"));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(argmin::core::Error::msg("non-finite parameter"));
        }
        let c = (self.cost)(p);
        if !c.is_finite() {
            return Err(argmin::core::Error::msg("non-finite cost"));
        }
        let mut best = self.best.borrow_mut();
        if c < best.0 {
            *best = (c, p.clone());
        }
        Ok(c)
    }
}

impl<F, G> Gradient for Smooth<'_, F, G>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> Result<Vec<f64>, argmin::core::Error> {
        let g = (self.grad)(p);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(argmin::core::Error::msg("non-finite gradient"));
        }
        Ok(g)
    }
}

/// BFGS from `x0`, stopped after `max_iters` iterations or a proportional
/// number of cost evaluations. Returns the best point evaluated.
pub(crate) fn bfgs<F, G>(cost: F, grad: G, x0: Vec<f64>, max_iters: u64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let f0 = cost(&x0);
    let n = x0.len();
    let eye: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let solver = BFGS::new(MoreThuenteLineSearch::new())
        .with_tolerance_grad(1e-14)
        .and_then(|s| s.with_tolerance_cost(0.0));
    let Ok(solver) = solver else {
        return (x0, f0);
    };
    let best = RefCell::new((f0, x0.clone()));
    let problem = Smooth {
        cost,
        grad,
        evals: Cell::new(0),
        budget: 20 * max_iters,
        best: &best,
    };
    // budget exhaustion and non-finite values end the run early; the best
    // point evaluated so far is kept either way
    let _ = Executor::new(problem, solver)
        .configure(|s| s.param(x0).inv_hessian(eye).max_iters(max_iters))
        .run();
    let (c, x) = best.into_inner();
    (x, c)
}

struct Plain<F>(F);

impl<F> CostFunction for Plain<F>
where
    F: Fn(&[f64]) -> f64,
{
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, argmin::core::Error> {
        Ok((self.0)(p))
    }
}

/// Nelder–Mead from an axis-aligned simplex around `x0`, restarted until the
/// best value stops improving.
pub(crate) fn nelder_mead<F>(cost: F, x0: Vec<f64>, step: f64, max_iters: u64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut best = x0;
    let mut best_cost = cost(&best);
    let problem = Plain(cost);
    let mut step = step;
    let mut problem = Some(problem);
    for _ in 0..6 {
        let simplex: Vec<Vec<f64>> = std::iter::once(best.clone())
            .chain((0..best.len()).map(|k| {
                let mut v = best.clone();
                v[k] += step;
                v
            }))
            .collect();
        let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(1e-15) else {
            break;
        };
        let Ok(res) = Executor::new(problem.take().expect("problem present"), solver)
            .configure(|s| s.max_iters(max_iters))
            .run()
        else {
            break;
        };
        let improved = res.state().get_best_cost() < best_cost - 1e-15 * best_cost.abs().max(1e-300);
        if res.state().get_best_cost() < best_cost {
            best_cost = res.state().get_best_cost();
            best = res
                .state()
                .get_best_param()
                .cloned()
                .unwrap_or_else(|| best.clone());
        }
        problem = res.problem.problem;
        if problem.is_none() || !improved {
            break;
        }
        step *= 0.3;
    }
    (best, best_cost)
}
