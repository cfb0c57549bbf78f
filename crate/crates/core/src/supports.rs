//! Exponent supports, their Newton polytopes and exact volume computations.
//!
//! Everything polyhedral in this module is done in exact rational arithmetic:
//! hulls are found by brute-force facet enumeration, volumes by a recursive
//! pulling triangulation. That is only sensible at desk scale (a few dozen
//! points in dimension at most three), which is all the mixed-volume oracle
//! is asked to handle.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type Q = BigRational;

/// A finite set of integer exponent vectors (the rows of an `M x n` matrix).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct Support {
    rows: Vec<Vec<i64>>,
    n: usize,
    full_dim: bool,
}

impl Support {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let n = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInput("support has no rows".into()))?;
        if n == 0 {
            return Err(Error::InvalidInput("support has zero columns".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!(
                "row {bad} has {} entries, expected {n}",
                rows[bad].len()
            )));
        }
        let mut seen = BTreeSet::new();
        for (i, r) in rows.iter().enumerate() {
            if !seen.insert(r.clone()) {
                return Err(Error::InvalidInput(format!("row {i} duplicates {r:?}")));
            }
        }
        let full_dim = affine_rank(&lattice_points(&rows)) == n;
        Ok(Self { rows, n, full_dim })
    }

    /// `{0, 1, ..., d}` in one variable.
    pub fn segment(d: i64) -> Self {
        Self::new((0..=d).map(|a| vec![a]).collect()).expect("segment support")
    }

    /// The standard simplex `{0, e_1, ..., e_n}`, i.e. the linear support.
    pub fn simplex(n: usize) -> Self {
        Self::dilated_simplex(n, 1)
    }

    /// All exponent vectors of total degree at most `d`.
    pub fn dilated_simplex(n: usize, d: i64) -> Self {
        let rows = exponents_up_to_degree(n, d);
        Self::new(rows).expect("dilated simplex support")
    }

    /// Vertices of the unit cube `{0,1}^n`.
    pub fn unit_cube(n: usize) -> Self {
        let rows = (0..(1usize << n))
            .map(|mask| (0..n).map(|j| ((mask >> j) & 1) as i64).collect())
            .collect();
        Self::new(rows).expect("cube support")
    }

    /// The box `{0..=d_1} x ... x {0..=d_n}` of lattice points.
    pub fn lattice_box(degrees: &[i64]) -> Self {
        let mut rows: Vec<Vec<i64>> = vec![vec![]];
        for &d in degrees {
            rows = rows
                .into_iter()
                .flat_map(|r| {
                    (0..=d).map(move |a| {
                        let mut r = r.clone();
                        r.push(a);
                        r
                    })
                })
                .collect();
        }
        Self::new(rows).expect("box support")
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    /// Number of monomials `M`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of variables `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// True iff the convex hull of the rows has affine dimension `n`.
    pub fn full_dim(&self) -> bool {
        self.full_dim
    }

    pub fn hull(&self) -> Polytope {
        convex_hull(&lattice_points(&self.rows))
    }

    /// Rows as floating point vectors (handy for the numerical layers).
    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&a| a as f64).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<i64>>> for Support {
    type Error = Error;
    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<Support> for Vec<Vec<i64>> {
    fn from(s: Support) -> Self {
        s.rows
    }
}

pub(crate) fn exponents_up_to_degree(n: usize, d: i64) -> Vec<Vec<i64>> {
    fn rec(n: usize, budget: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for a in 0..=budget {
            prefix.push(a);
            rec(n, budget - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, d, &mut Vec::with_capacity(n), &mut out);
    out.sort_by(|a, b| {
        let (da, db): (i64, i64) = (a.iter().sum(), b.iter().sum());
        da.cmp(&db).then_with(|| b.cmp(a))
    });
    out
}

fn lattice_points(rows: &[Vec<i64>]) -> Vec<Vec<Q>> {
    rows.iter()
        .map(|r| r.iter().map(|&a| Q::from_integer(BigInt::from(a))).collect())
        .collect()
}

/// Outward facet inequality `normal . x <= offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facet {
    pub normal: Vec<Q>,
    pub offset: Q,
}

/// Convex hull of finitely many rational points.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    ambient: usize,
    vertices: Vec<Vec<Q>>,
    dimension: usize,
    facets: Vec<Facet>,
}

impl Polytope {
    pub fn from_lattice(points: &[Vec<i64>]) -> Self {
        convex_hull(&lattice_points(points))
    }

    pub fn vertices(&self) -> &[Vec<Q>] {
        &self.vertices
    }

    /// Affine dimension of the vertex set.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    /// Facet inequalities; empty unless the polytope is full-dimensional.
    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Signed Euclidean distance from `y` to the boundary: positive inside,
    /// negative outside. `-inf` for lower-dimensional polytopes.
    pub fn interior_distance(&self, y: &[f64]) -> f64 {
        if self.facets.is_empty() {
            return f64::NEG_INFINITY;
        }
        self.facets
            .iter()
            .map(|f| {
                let normal: Vec<f64> = f.normal.iter().map(q_to_f64).collect();
                let norm = normal.iter().map(|a| a * a).sum::<f64>().sqrt();
                let dot: f64 = normal.iter().zip(y).map(|(a, b)| a * b).sum();
                (q_to_f64(&f.offset) - dot) / norm
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn translate(&self, shift: &[i64]) -> Self {
        let pts: Vec<Vec<Q>> = self
            .vertices
            .iter()
            .map(|v| {
                v.iter()
                    .zip(shift)
                    .map(|(a, &s)| a + Q::from_integer(BigInt::from(s)))
                    .collect()
            })
            .collect();
        convex_hull(&pts)
    }
}

pub fn q_to_f64(q: &Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Irredundant vertex set, affine dimension and (when full-dimensional)
/// the facet inequalities of `Conv(points)`.
pub fn convex_hull(points: &[Vec<Q>]) -> Polytope {
    assert!(!points.is_empty(), "convex_hull needs at least one point");
    let ambient = points[0].len();
    let pts = dedup(points);
    let hull = HullData::compute(&pts);
    let vertices = hull.vertices.iter().map(|&i| pts[i].clone()).collect();
    let facets = if hull.dim == ambient {
        hull.facets
            .iter()
            .map(|f| Facet {
                normal: f.normal.clone(),
                offset: f.offset.clone(),
            })
            .collect()
    } else {
        Vec::new()
    };
    Polytope {
        ambient,
        vertices,
        dimension: hull.dim,
        facets,
    }
}

/// `n!` times the Lebesgue volume; zero for lower-dimensional polytopes.
pub fn normalized_volume(p: &Polytope) -> Q {
    if p.dimension < p.ambient {
        return Q::zero();
    }
    let simplices = triangulate(&p.vertices);
    let mut total = Q::zero();
    for s in simplices {
        let base = &p.vertices[s[0]];
        let rows: Vec<Vec<Q>> = s[1..]
            .iter()
            .map(|&i| p.vertices[i].iter().zip(base).map(|(a, b)| a - b).collect())
            .collect();
        total += determinant(rows).abs();
    }
    total
}

/// Minkowski sum by pairwise vertex sums followed by a hull.
pub fn minkowski_sum(polys: &[&Polytope]) -> Polytope {
    assert!(!polys.is_empty());
    let mut acc: Vec<Vec<Q>> = polys[0].vertices.clone();
    for p in &polys[1..] {
        let mut next = Vec::with_capacity(acc.len() * p.vertices.len());
        for a in &acc {
            for b in &p.vertices {
                next.push(a.iter().zip(b).map(|(x, y)| x + y).collect());
            }
        }
        // keep only hull vertices between steps
        acc = convex_hull(&next).vertices;
    }
    convex_hull(&acc)
}

/// Mixed volume by inclusion-exclusion over Minkowski sums, normalized so
/// that `n` standard simplices give 1.
pub fn mixed_volume_oracle(polys: &[Polytope]) -> Result<Q> {
    let n = polys.len();
    if n == 0 {
        return Err(Error::InvalidInput("no polytopes".into()));
    }
    if n > 3 {
        return Err(Error::InvalidInput(format!(
            "mixed volume oracle supports n <= 3, got {n}"
        )));
    }
    if let Some(bad) = polys.iter().position(|p| p.ambient != n) {
        return Err(Error::InvalidInput(format!(
            "polytope {bad} lives in dimension {}, expected {n}",
            polys[bad].ambient
        )));
    }
    let mut total = Q::zero();
    for mask in 1u32..(1 << n) {
        let chosen: Vec<&Polytope> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &polys[i])
            .collect();
        let vol = normalized_volume(&minkowski_sum(&chosen));
        if (n - chosen.len()) % 2 == 0 {
            total += vol;
        } else {
            total -= vol;
        }
    }
    Ok(total / Q::from_integer(factorial(n)))
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn dedup(points: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let mut seen = BTreeSet::new();
    points
        .iter()
        .filter(|p| seen.insert((*p).clone()))
        .cloned()
        .collect()
}

struct HullFacet {
    normal: Vec<Q>,
    offset: Q,
    members: Vec<usize>,
}

struct HullData {
    dim: usize,
    vertices: Vec<usize>,
    facets: Vec<HullFacet>,
}

impl HullData {
    /// `pts` must be free of duplicates.
    fn compute(pts: &[Vec<Q>]) -> Self {
        let (dim, pivots) = affine_basis_columns(pts);
        if dim == 0 {
            return Self {
                dim,
                vertices: vec![0],
                facets: Vec::new(),
            };
        }
        // An injective linear image of the affine hull; combinatorics are preserved.
        let proj: Vec<Vec<Q>> = pts
            .iter()
            .map(|p| pivots.iter().map(|&c| p[c].clone()).collect())
            .collect();
        // When dim == ambient the pivots are all columns, so normals are ambient.
        let facets: Vec<HullFacet> = enumerate_facets(&proj, dim)
            .into_iter()
            .map(|(normal, offset, members)| HullFacet {
                normal,
                offset,
                members,
            })
            .collect();
        let vertices = (0..pts.len())
            .filter(|&j| {
                let normals: Vec<Vec<Q>> = facets
                    .iter()
                    .filter(|f| f.members.contains(&j))
                    .map(|f| f.normal.clone())
                    .collect();
                rank(normals) == dim
            })
            .collect();
        Self {
            dim,
            vertices,
            facets,
        }
    }
}

/// Brute-force facet enumeration for points spanning `Q^dim`.
/// Returns `(outward primitive normal, offset, member indices)`.
fn enumerate_facets(pts: &[Vec<Q>], dim: usize) -> Vec<(Vec<Q>, Q, Vec<usize>)> {
    let mut found: Vec<(Vec<Q>, Q, Vec<usize>)> = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let m = pts.len();
    let mut combo: Vec<usize> = (0..dim).collect();
    loop {
        let base = &pts[combo[0]];
        let diffs: Vec<Vec<Q>> = combo[1..]
            .iter()
            .map(|&i| pts[i].iter().zip(base).map(|(a, b)| a - b).collect())
            .collect();
        if let Some(normal) = null_vector(&diffs, dim) {
            let offset = dot(&normal, base);
            let mut pos = false;
            let mut neg = false;
            let mut members = Vec::new();
            for (j, p) in pts.iter().enumerate() {
                let s = dot(&normal, p) - &offset;
                if s.is_zero() {
                    members.push(j);
                } else if s.is_positive() {
                    pos = true;
                } else {
                    neg = true;
                }
                if pos && neg {
                    break;
                }
            }
            if !(pos && neg) && !seen.contains(&members) {
                let (normal, offset) = if pos {
                    (
                        normal.iter().map(|a| -a).collect::<Vec<_>>(),
                        -offset,
                    )
                } else {
                    (normal, offset)
                };
                let (normal, offset) = primitive(normal, offset);
                seen.insert(members.clone());
                found.push((normal, offset, members));
            }
        }
        // next combination
        let mut i = dim;
        loop {
            if i == 0 {
                return found;
            }
            i -= 1;
            if combo[i] < m - dim + i {
                combo[i] += 1;
                for k in i + 1..dim {
                    combo[k] = combo[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Scale a normal so its entries are coprime integers.
fn primitive(normal: Vec<Q>, offset: Q) -> (Vec<Q>, Q) {
    use num_integer::Integer;
    let lcm = normal
        .iter()
        .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
    let ints: Vec<BigInt> = normal
        .iter()
        .map(|q| (q * Q::from_integer(lcm.clone())).to_integer())
        .collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, a| acc.gcd(a));
    if g.is_zero() {
        return (normal, offset);
    }
    let scale = Q::new(lcm, g);
    (
        normal.iter().map(|a| a * &scale).collect(),
        offset * scale,
    )
}

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).fold(Q::zero(), |acc, (x, y)| acc + x * y)
}

/// Reduced row echelon form in place; returns pivot columns.
fn rref(m: &mut [Vec<Q>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == m.len() {
            break;
        }
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].recip();
        for x in m[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for k in 0..cols {
                    let t = &m[r][k] * &f;
                    m[i][k] -= t;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn rank(mut rows: Vec<Vec<Q>>) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    rref(&mut rows, cols).len()
}

/// Unique (up to scale) vector orthogonal to all `rows` in `Q^dim`, if the
/// rows have rank exactly `dim - 1`.
fn null_vector(rows: &[Vec<Q>], dim: usize) -> Option<Vec<Q>> {
    let mut m = rows.to_vec();
    let pivots = rref(&mut m, dim);
    if pivots.len() + 1 != dim {
        return None;
    }
    let free = (0..dim).find(|c| !pivots.contains(c))?;
    let mut v = vec![Q::zero(); dim];
    v[free] = Q::one();
    for (r, &c) in pivots.iter().enumerate() {
        v[c] = -m[r][free].clone();
    }
    Some(v)
}

fn affine_rank(pts: &[Vec<Q>]) -> usize {
    affine_basis_columns(pts).0
}

/// Affine dimension together with a set of coordinate columns on which the
/// projection of the affine hull is injective.
fn affine_basis_columns(pts: &[Vec<Q>]) -> (usize, Vec<usize>) {
    let base = &pts[0];
    let mut diffs: Vec<Vec<Q>> = pts[1..]
        .iter()
        .map(|p| p.iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    if diffs.is_empty() {
        return (0, Vec::new());
    }
    let cols = base.len();
    let pivots = rref(&mut diffs, cols);
    (pivots.len(), pivots)
}

fn determinant(mut m: Vec<Vec<Q>>) -> Q {
    let n = m.len();
    let mut det = Q::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !m[i][c].is_zero()) else {
            return Q::zero();
        };
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= &m[c][c];
        for i in c + 1..n {
            if !m[i][c].is_zero() {
                let f = &m[i][c] / &m[c][c];
                for k in c..n {
                    let t = &m[c][k] * &f;
                    m[i][k] -= t;
                }
            }
        }
    }
    det
}

/// Pulling triangulation from the first vertex: returns simplices as index
/// lists into `pts`, each with `dim + 1` entries.
fn triangulate(pts: &[Vec<Q>]) -> Vec<Vec<usize>> {
    let hull = HullData::compute(pts);
    if hull.dim == 0 {
        return vec![vec![hull.vertices[0]]];
    }
    let apex = hull.vertices[0];
    let mut out = Vec::new();
    for facet in &hull.facets {
        if facet.members.contains(&apex) {
            continue;
        }
        let sub: Vec<Vec<Q>> = facet.members.iter().map(|&i| pts[i].clone()).collect();
        for simplex in triangulate(&sub) {
            let mut s: Vec<usize> = simplex.into_iter().map(|k| facet.members[k]).collect();
            s.push(apex);
            out.push(s);
        }
    }
    out
}
