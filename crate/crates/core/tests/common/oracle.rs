//! Brute-force references computed without the library's Kähler machinery.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use sparsecond::kahler::{DiagonalCovariance, TorusPoint};
use sparsecond::randsys::{Ensemble, SparseSystem};
use sparsecond::supports::Support;

use super::monomials;

/// `∂/∂u (√C_α ζ^α)`: `√C_α Σ_j α_j ζ^{α−e_j} u_j`.
fn directional(support: &Support, cov: &DiagonalCovariance, zeta: &[Complex64], u: &[Complex64]) -> Vec<Complex64> {
    support
        .rows()
        .iter()
        .zip(cov.weights())
        .map(|(row, c)| {
            let mut total = Complex64::new(0.0, 0.0);
            for j in 0..row.len() {
                if row[j] == 0 {
                    continue;
                }
                let mut z = Complex64::new(c.sqrt() * row[j] as f64, 0.0) * u[j];
                for (k, (&a, &x)) in row.iter().zip(zeta).enumerate() {
                    let e = if k == j { a - 1 } else { a };
                    z *= x.powi(e as i32);
                }
                total += z;
            }
            total
        })
        .collect()
}

/// `sin²` of the angle between `f` and `{g : g·a = 0, g·b = 0}`.
fn sin2_to_subspace(f: &[Complex64], a: &[Complex64], b: &[Complex64]) -> f64 {
    let m = f.len();
    let basis = DMatrix::from_fn(m, 2, |i, j| if j == 0 { a[i].conj() } else { b[i].conj() });
    let svd = basis.svd(true, false);
    let uu = svd.u.expect("left vectors");
    let smax = svd.singular_values.max();
    let fv = DVector::from_column_slice(f);
    let mut proj = 0.0;
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] > 1e-12 * smax {
            proj += uu.column(k).dotc(&fv).norm_sqr();
        }
    }
    proj / fv.norm_squared()
}

/// Squared distance from `f` to the systems singular along direction `u` at
/// `point`, minimizing each component separately.
fn projected(f: &SparseSystem, ens: &Ensemble, zeta: &[Complex64], u: &[Complex64]) -> f64 {
    (0..ens.dim())
        .map(|i| {
            let a = monomials(ens.support(i), ens.covariance(i), zeta);
            let b = directional(ens.support(i), ens.covariance(i), zeta, u);
            sin2_to_subspace(f.component(i), &a, &b)
        })
        .sum()
}

fn refine<F: Fn(&[f64]) -> f64>(cost: F, mut x: Vec<f64>, mut step: f64) -> (Vec<f64>, f64) {
    let mut best = cost(&x);
    while step > 1e-13 {
        let mut moved = false;
        for k in 0..x.len() {
            for s in [step, -step] {
                let mut y = x.clone();
                y[k] += s;
                let c = cost(&y);
                if c < best {
                    best = c;
                    x = y;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, best)
}

/// Multiprojective distance from `f` (vanishing at `point`) to the singular
/// systems of the fiber, by a grid over directions and pattern search.
pub fn distance_oracle(f: &SparseSystem, ens: &Ensemble, point: &TorusPoint, real_directions: bool) -> f64 {
    let zeta = point.zeta();
    let n = ens.dim();
    if n == 1 {
        return projected(f, ens, &zeta, &[Complex64::new(1.0, 0.0)]).sqrt();
    }
    assert_eq!(n, 2);
    if real_directions {
        let cost = |x: &[f64]| {
            let u = [Complex64::new(x[0].cos(), 0.0), Complex64::new(x[0].sin(), 0.0)];
            projected(f, ens, &zeta, &u)
        };
        let steps = 720;
        let start = (0..steps)
            .map(|k| std::f64::consts::PI * k as f64 / steps as f64)
            .min_by(|a, b| cost(&[*a]).total_cmp(&cost(&[*b])))
            .unwrap();
        return refine(cost, vec![start], 0.01).1.sqrt();
    }
    let cost = |x: &[f64]| {
        let u = [
            Complex64::new(x[0].cos(), 0.0),
            Complex64::from_polar(x[0].sin(), x[1]),
        ];
        projected(f, ens, &zeta, &u)
    };
    let mut starts = Vec::new();
    let (nt, np) = (90, 90);
    for i in 0..=nt {
        for j in 0..np {
            let x = vec![std::f64::consts::FRAC_PI_2 * i as f64 / nt as f64, std::f64::consts::TAU * j as f64 / np as f64];
            starts.push((cost(&x), x));
        }
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts
        .into_iter()
        .take(4)
        .map(|(_, x)| refine(&cost, x, 0.02).1)
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Central difference of `½ log Σ C_α e^{2α·p}` along each axis, with the
/// difference of logarithms taken as `½ log1p((S₊ − S₋) / S₋)` so nothing
/// cancels when the gradient is tiny.
pub fn fd_potential_gradient(support: &Support, cov: &DiagonalCovariance, p: &[f64], h: f64) -> Vec<f64> {
    let expo: Vec<f64> = support
        .rows()
        .iter()
        .zip(cov.weights())
        .map(|(row, c)| c.ln() + 2.0 * row.iter().zip(p).map(|(&a, x)| a as f64 * x).sum::<f64>())
        .collect();
    let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..p.len())
        .map(|k| {
            let (mut minus, mut diff) = (0.0, 0.0);
            for (row, e) in support.rows().iter().zip(&expo) {
                let base = (e - top).exp();
                let t = 2.0 * row[k] as f64 * h;
                minus += base * (-t).exp();
                diff += base * 2.0 * t.sinh();
            }
            0.5 * (diff / minus).ln_1p() / (2.0 * h)
        })
        .collect()
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[k] += h;
            b[k] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector field (rows = outputs).
pub fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[k] += h;
        b[k] -= h;
        let (fa, fb) = (f(&a), f(&b));
        for i in 0..n {
            out[(i, k)] = (fa[i] - fb[i]) / (2.0 * h);
        }
    }
    out
}

/// Coefficient of `dp_1 dq_1 ⋯ dp_n dq_n` in `∧_i Σ_{jk} M_i[j,k] dp_j ∧ dq_k`,
/// summed over all pairs of permutations.
pub fn wedge_coefficient(ms: &[DMatrix<f64>]) -> f64 {
    let n = ms.len();
    let perms = permutations(n);
    let mut total = 0.0;
    for (s, ss) in &perms {
        for (t, st) in &perms {
            let mut prod = (ss * st) as f64;
            for i in 0..n {
                prod *= ms[i][(s[i], t[i])];
            }
            total += prod;
        }
    }
    total
}

fn permutations(n: usize) -> Vec<(Vec<usize>, i32)> {
    if n == 0 {
        return vec![(vec![], 1)];
    }
    let mut out = Vec::new();
    for (p, sign) in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            // inserting the largest element at `pos` adds len - pos inversions
            let s = if (p.len() - pos) % 2 == 0 { sign } else { -sign };
            out.push((q, s));
        }
    }
    out
}

type Poly = Vec<BigRational>;

fn trim(mut p: Poly) -> Poly {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

fn derivative(p: &Poly) -> Poly {
    trim(
        p.iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * BigRational::from_integer(BigInt::from(k)))
            .collect(),
    )
}

fn remainder(a: &Poly, b: &Poly) -> Poly {
    let mut r = a.clone();
    let lead = b.last().expect("nonzero divisor").clone();
    while r.len() >= b.len() && !r.is_empty() {
        let shift = r.len() - b.len();
        let q = r.last().unwrap() / &lead;
        for (k, c) in b.iter().enumerate() {
            r[shift + k] = &r[shift + k] - &q * c;
        }
        r.pop();
        r = trim(r);
    }
    r
}

fn sign_changes(signs: impl Iterator<Item = i32>) -> usize {
    let v: Vec<i32> = signs.filter(|&s| s != 0).collect();
    v.windows(2).filter(|w| w[0] != w[1]).count()
}

fn sign(c: &BigRational) -> i32 {
    if c.is_positive() {
        1
    } else if c.is_negative() {
        -1
    } else {
        0
    }
}

/// Number of distinct positive and negative real roots of `Σ c_k x^k`
/// (exact rational Sturm sequences; `0` is not counted).
pub fn sturm_counts(coeffs: &[f64]) -> (usize, usize) {
    let mut p: Poly = coeffs
        .iter()
        .map(|&c| BigRational::from_float(c).expect("finite coefficient"))
        .collect();
    p = trim(p);
    while p.first().is_some_and(|c| c.is_zero()) {
        p.remove(0);
    }
    let mut seq = vec![p.clone(), derivative(&p)];
    while !seq.last().unwrap().is_empty() {
        let k = seq.len();
        let r = remainder(&seq[k - 2], &seq[k - 1]);
        seq.push(r.into_iter().map(|c| -c).collect());
    }
    seq.pop();
    let at_zero = sign_changes(seq.iter().map(|q| sign(&q[0])));
    let at_pos = sign_changes(seq.iter().map(|q| sign(q.last().unwrap())));
    let at_neg = sign_changes(seq.iter().map(|q| {
        let s = sign(q.last().unwrap());
        if (q.len() - 1) % 2 == 0 {
            s
        } else {
            -s
        }
    }));
    (at_zero - at_pos, at_neg - at_zero)
}
