//! Gaussian ensembles of sparse systems, evaluation, regions of the torus and
//! the multiprojective distance.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kahler::{reduce_angle, veronese_hat, DiagonalCovariance, KahlerFrame, TorusPoint};
use crate::supports::Support;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Complex,
    Real,
}

/// One support with its covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleItem {
    pub support: Support,
    pub covariance: DiagonalCovariance,
}

/// A square tuple `(A_i, C_i)` of supports and covariances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    items: Vec<EnsembleItem>,
    field: Field,
}

impl Ensemble {
    pub fn new(items: Vec<(Support, DiagonalCovariance)>, field: Field) -> Result<Self> {
        let n = items.len();
        if n == 0 {
            return Err(Error::InvalidInput("ensemble has no supports".into()));
        }
        for (i, (a, c)) in items.iter().enumerate() {
            if a.dim() != n {
                return Err(Error::InvalidInput(format!(
                    "support {i} lives in dimension {} but the ensemble has {n} equations",
                    a.dim()
                )));
            }
            c.check_matches(a)
                .map_err(|e| Error::InvalidInput(format!("item {i}: {e}")))?;
        }
        Ok(Self {
            items: items
                .into_iter()
                .map(|(support, covariance)| EnsembleItem {
                    support,
                    covariance,
                })
                .collect(),
            field,
        })
    }

    /// Unit covariances on every support.
    pub fn standard(supports: Vec<Support>, field: Field) -> Result<Self> {
        let items = supports
            .into_iter()
            .map(|a| {
                let c = DiagonalCovariance::identity(a.len());
                (a, c)
            })
            .collect();
        Self::new(items, field)
    }

    /// `n` copies of the same support and covariance.
    pub fn unmixed(support: Support, cov: DiagonalCovariance, field: Field) -> Result<Self> {
        let n = support.dim();
        Self::new(vec![(support, cov); n], field)
    }

    /// Linear systems: every support is `{0, e_1, …, e_n}` with unit weights.
    pub fn linear(n: usize, field: Field) -> Self {
        Self::standard(vec![Support::simplex(n); n], field).expect("simplex ensemble is valid")
    }

    pub fn dim(&self) -> usize {
        self.items.len()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn with_field(&self, field: Field) -> Self {
        Self {
            items: self.items.clone(),
            field,
        }
    }

    pub fn items(&self) -> &[EnsembleItem] {
        &self.items
    }

    pub fn support(&self, i: usize) -> &Support {
        &self.items[i].support
    }

    pub fn covariance(&self, i: usize) -> &DiagonalCovariance {
        &self.items[i].covariance
    }

    /// True when all supports and covariances coincide.
    pub fn is_unmixed(&self) -> bool {
        self.items.windows(2).all(|w| w[0] == w[1])
    }

    pub fn all_full_dim(&self) -> bool {
        self.items.iter().all(|it| it.support.full_dim())
    }

    /// Frames of every support at one point.
    pub fn frames(&self, point: &TorusPoint) -> Result<Vec<KahlerFrame>> {
        self.items
            .iter()
            .map(|it| KahlerFrame::new(&it.support, &it.covariance, point))
            .collect()
    }
}

/// `n` whitened coefficient vectors. Real systems have zero imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSystem {
    coeffs: Vec<Vec<Complex64>>,
}

impl SparseSystem {
    pub fn new(coeffs: Vec<Vec<Complex64>>) -> Self {
        Self { coeffs }
    }

    pub fn from_real(coeffs: Vec<Vec<f64>>) -> Self {
        Self {
            coeffs: coeffs
                .into_iter()
                .map(|c| c.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
                .collect(),
        }
    }

    pub fn coeffs(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.coeffs[i]
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_real(&self) -> bool {
        self.coeffs.iter().flatten().all(|z| z.im == 0.0)
    }

    /// Euclidean norm of component `i` (the `C⁻¹` norm of the raw coefficients).
    pub fn component_norm(&self, i: usize) -> f64 {
        self.coeffs[i].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Component-wise scaling `f^i ↦ λ_i f^i`.
    pub fn scaled(&self, lambda: &[Complex64]) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(lambda)
                .map(|(c, &l)| c.iter().map(|z| z * l).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &SparseSystem) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    pub(crate) fn check_shape(&self, ens: &Ensemble) -> Result<()> {
        if self.dim() != ens.dim() {
            return Err(Error::InvalidInput(format!(
                "system has {} equations, ensemble has {}",
                self.dim(),
                ens.dim()
            )));
        }
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.len() != ens.support(i).len() {
                return Err(Error::InvalidInput(format!(
                    "component {i} has {} coefficients, support has {} rows",
                    c.len(),
                    ens.support(i).len()
                )));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Subseed of trial `t`; depends only on `(seed, t)`.
pub fn derive_seed(seed: u64, t: u64) -> u64 {
    mix64(mix64(seed).wrapping_add(t.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Draw a system whose whitened coefficients are i.i.d. standard (real or complex) normals.
pub fn sample(ens: &Ensemble, seed: u64) -> SparseSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = ens
        .items()
        .iter()
        .map(|it| {
            (0..it.support.len())
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    match ens.field() {
                        Field::Real => Complex64::new(re, 0.0),
                        Field::Complex => {
                            let im: f64 = StandardNormal.sample(&mut rng);
                            Complex64::new(re, im)
                        }
                    }
                })
                .collect()
        })
        .collect();
    SparseSystem { coeffs }
}

fn bilinear(a: &[Complex64], b: impl IntoIterator<Item = Complex64>) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f^i · v̂_{A_i}(p + i q)` for every `i`.
pub fn evaluate(f: &SparseSystem, ens: &Ensemble, point: &TorusPoint) -> Result<Vec<Complex64>> {
    f.check_shape(ens)?;
    (0..ens.dim())
        .map(|i| {
            let v = veronese_hat(ens.support(i), ens.covariance(i), point)?;
            Ok(bilinear(f.component(i), v))
        })
        .collect()
}

/// Scale-free residuals `|f^i · v_i| / ‖f^i‖` with `v_i` the unit Veronese vector.
pub fn normalized_residuals(
    f: &SparseSystem,
    ens: &Ensemble,
    point: &TorusPoint,
) -> Result<Vec<f64>> {
    f.check_shape(ens)?;
    let frames = ens.frames(point)?;
    Ok(frames
        .iter()
        .enumerate()
        .map(|(i, fr)| {
            let norm = f.component_norm(i);
            if norm == 0.0 {
                0.0
            } else {
                bilinear(f.component(i), fr.v.iter().copied()).norm() / norm
            }
        })
        .collect())
}

/// `sqrt(Σ_i sin²∠(f^i, g^i))`.
pub fn dp_distance(f: &SparseSystem, g: &SparseSystem) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(Error::InvalidInput("systems have different sizes".into()));
    }
    let mut acc = 0.0;
    for i in 0..f.dim() {
        let (a, b) = (f.component(i), g.component(i));
        if a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "component {i} lengths differ ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::ZeroComponent { index: i });
        }
        let inner: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        acc += (1.0 - inner.norm_sqr() / (na * nb)).max(0.0);
    }
    Ok(acc.sqrt())
}

/// One product box `U_p × U_q`. Intervals are half-open `[lo, hi)`; a
/// zero-width interval denotes the single value `lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub p: Vec<(f64, f64)>,
    pub q: Vec<(f64, f64)>,
}

impl RegionBox {
    /// A p-box with the full angle range.
    pub fn p_box(p: Vec<(f64, f64)>) -> Self {
        let q = vec![(0.0, TAU); p.len()];
        Self { p, q }
    }

    pub fn point(pt: &TorusPoint) -> Self {
        Self {
            p: pt.p().iter().map(|&x| (x, x)).collect(),
            q: pt.q().iter().map(|&x| (x, x)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    fn intervals(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.p.iter().chain(&self.q)
    }

    fn is_degenerate(&self) -> bool {
        self.intervals().any(|(lo, hi)| lo == hi)
    }

    pub fn p_volume(&self) -> f64 {
        self.p.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn q_volume(&self) -> f64 {
        self.q.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn volume(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.p_volume() * self.q_volume()
        }
    }

    pub fn p_bounded(&self) -> bool {
        self.p.iter().all(|(lo, hi)| lo.is_finite() && hi.is_finite())
    }

    pub fn contains(&self, p: &[f64], q: &[f64]) -> bool {
        let inside = |x: f64, &(lo, hi): &(f64, f64)| {
            if lo == hi {
                x == lo
            } else {
                lo <= x && x < hi
            }
        };
        p.iter().zip(&self.p).all(|(&x, iv)| inside(x, iv))
            && q.iter().zip(&self.q).all(|(&x, iv)| inside(reduce_angle(x), iv))
    }

    fn intersects(&self, other: &RegionBox) -> bool {
        self.intervals()
            .zip(other.intervals())
            .all(|(a, b)| a.0.max(b.0) < a.1.min(b.1))
    }

    /// `self \ other` as disjoint boxes.
    fn subtract(&self, other: &RegionBox) -> Vec<RegionBox> {
        if !self.intersects(other) {
            return vec![self.clone()];
        }
        let n = self.dim();
        let mut out = Vec::new();
        let mut core = self.clone();
        for k in 0..2 * n {
            let (lo, hi) = if k < n { core.p[k] } else { core.q[k - n] };
            let (olo, ohi) = if k < n { other.p[k] } else { other.q[k - n] };
            let set = |b: &mut RegionBox, iv: (f64, f64)| {
                if k < n {
                    b.p[k] = iv;
                } else {
                    b.q[k - n] = iv;
                }
            };
            if lo < olo {
                let mut below = core.clone();
                set(&mut below, (lo, olo));
                out.push(below);
            }
            if ohi < hi {
                let mut above = core.clone();
                set(&mut above, (ohi, hi));
                out.push(above);
            }
            set(&mut core, (lo.max(olo), hi.min(ohi)));
        }
        out
    }
}

/// Finite union of boxes in `(p, q)` space, stored pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    n: usize,
    boxes: Vec<RegionBox>,
}

impl Region {
    pub fn new(n: usize, boxes: Vec<RegionBox>) -> Result<Self> {
        let mut disjoint: Vec<RegionBox> = Vec::new();
        for (i, b) in boxes.into_iter().enumerate() {
            if b.p.len() != n || b.q.len() != n {
                return Err(Error::InvalidInput(format!(
                    "box {i} has dimension {}/{} (expected {n})",
                    b.p.len(),
                    b.q.len()
                )));
            }
            for &(lo, hi) in &b.p {
                if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                    return Err(Error::InvalidInput(format!(
                        "box {i} has invalid p interval ({lo}, {hi})"
                    )));
                }
            }
            for &(lo, hi) in &b.q {
                if !(0.0..=TAU).contains(&lo) || !(0.0..=TAU).contains(&hi) || lo > hi {
                    return Err(Error::InvalidInput(format!(
                        "box {i} has q interval ({lo}, {hi}) outside [0, 2π]"
                    )));
                }
            }
            if b.is_degenerate() {
                if !disjoint.contains(&b) {
                    disjoint.push(b);
                }
                continue;
            }
            let mut pieces = vec![b];
            for existing in disjoint.iter().filter(|e| !e.is_degenerate()) {
                pieces = pieces.iter().flat_map(|pc| pc.subtract(existing)).collect();
            }
            disjoint.extend(pieces);
        }
        Ok(Self { n, boxes: disjoint })
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            boxes: vec![RegionBox::p_box(vec![(f64::NEG_INFINITY, f64::INFINITY); n])],
        }
    }

    pub fn empty(n: usize) -> Self {
        Self { n, boxes: vec![] }
    }

    /// `U_p × [0, 2π)ⁿ` for a single p-box.
    pub fn p_box(p: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(p.len(), vec![RegionBox::p_box(p)])
    }

    pub fn point(pt: &TorusPoint) -> Self {
        Self {
            n: pt.dim(),
            boxes: vec![RegionBox::point(pt)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn boxes(&self) -> &[RegionBox] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn contains(&self, pt: &TorusPoint) -> bool {
        self.boxes.iter().any(|b| b.contains(pt.p(), pt.q()))
    }

    /// Lebesgue volume in `(p, q)`; infinite when some box is unbounded in `p`.
    pub fn lebesgue_volume(&self) -> f64 {
        self.boxes.iter().map(RegionBox::volume).sum()
    }

    pub fn p_bounded(&self) -> bool {
        self.boxes.iter().all(RegionBox::p_bounded)
    }
}
