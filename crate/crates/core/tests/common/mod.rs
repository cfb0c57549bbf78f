#![allow(dead_code)]

pub mod oracle;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sparsecond::kahler::{DiagonalCovariance, TorusPoint};
use sparsecond::randsys::{Ensemble, Field, SparseSystem};
use sparsecond::supports::Support;

/// Full-dimensional support with 2 to 6 rows in `[0, 3]ⁿ` (`[0, 6]` for `n = 1`).
pub fn random_support(rng: &mut ChaCha8Rng, n: usize) -> Support {
    loop {
        let m = rng.gen_range(n + 1..=(n + 4).min(6));
        let hi = if n == 1 { 6 } else { 3 };
        let mut rows: Vec<Vec<i64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(0..=hi)).collect())
            .collect();
        rows.sort();
        rows.dedup();
        if let Ok(s) = Support::new(rows) {
            if s.full_dim() && s.len() > n {
                return s;
            }
        }
    }
}

pub fn random_covariance(rng: &mut ChaCha8Rng, m: usize) -> DiagonalCovariance {
    DiagonalCovariance::new((0..m).map(|_| rng.gen_range(0.2..3.0)).collect()).unwrap()
}

pub fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, unmixed: bool, field: Field) -> Ensemble {
    if unmixed {
        let a = random_support(rng, n);
        let c = random_covariance(rng, a.len());
        Ensemble::unmixed(a, c, field).unwrap()
    } else {
        let items = (0..n)
            .map(|_| {
                let a = random_support(rng, n);
                let c = random_covariance(rng, a.len());
                (a, c)
            })
            .collect();
        Ensemble::new(items, field).unwrap()
    }
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// `√C_α ζ^α` computed from `ζ` directly.
pub fn monomials(support: &Support, cov: &DiagonalCovariance, zeta: &[Complex64]) -> Vec<Complex64> {
    support
        .rows()
        .iter()
        .zip(cov.weights())
        .map(|(row, c)| {
            let mut z = Complex64::new(c.sqrt(), 0.0);
            for (&a, &x) in row.iter().zip(zeta) {
                z *= x.powi(a as i32);
            }
            z
        })
        .collect()
}

/// Random system vanishing at `point`: a Gaussian draw with each component
/// projected onto the hyperplane `f · v = 0`.
pub fn system_through(rng: &mut ChaCha8Rng, ens: &Ensemble, point: &TorusPoint) -> SparseSystem {
    let zeta = point.zeta();
    let real = ens.field() == Field::Real;
    let coeffs = (0..ens.dim())
        .map(|i| {
            let v = monomials(ens.support(i), ens.covariance(i), &zeta);
            let mut f: Vec<Complex64> = v
                .iter()
                .map(|_| {
                    if real {
                        Complex64::new(gaussian(rng), 0.0)
                    } else {
                        Complex64::new(gaussian(rng), gaussian(rng)) / 2f64.sqrt()
                    }
                })
                .collect();
            let fv: Complex64 = f.iter().zip(&v).map(|(a, b)| a * b).sum();
            let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            for (a, b) in f.iter_mut().zip(&v) {
                *a -= fv / vv * b.conj();
            }
            f
        })
        .collect();
    SparseSystem::new(coeffs)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
