//! Diversity-preserving polytopes inside the probability simplex.
//!
//! A [`Polytope`] is either given by linear constraints (on top of the implicit
//! `Σp = 1, p ≥ 0`) or directly by its extreme points. Vertices of constraint
//! polytopes are found by exhaustive basic-solution search, which is exact and
//! fast enough for a dozen arms and a few dozen constraints.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpRow, RowSense};

/// Slack allowed when checking a point against a constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Two basic solutions closer than this (L∞) are the same vertex.
pub const DEDUP_TOL: f64 = 1e-7;
/// Values within this distance are treated as tied in [`Polytope::argmax_vertex`].
pub const TIE_TOL: f64 = 1e-12;
/// Default cap on the number of candidate bases examined during enumeration.
pub const DEFAULT_MAX_BASES: u64 = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid mixed action: {0}")]
    InvalidMixedAction(String),
    #[error("invalid polytope parameters: {0}")]
    InvalidParameter(String),
    #[error("polytope is empty")]
    Empty,
    #[error("vertex enumeration would examine {bases} bases (limit {limit})")]
    TooManyBases { bases: u64, limit: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A probability vector over the arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedAction(Vec<f64>);

impl MixedAction {
    /// Validates `probs` as a point of the simplex. Components in
    /// `[-1e-9, 0)` are clamped to zero.
    pub fn new(mut probs: Vec<f64>) -> Result<Self, GeometryError> {
        if probs.is_empty() {
            return Err(GeometryError::InvalidMixedAction("no components".into()));
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -FEASIBILITY_TOL || *p > 1.0 + FEASIBILITY_TOL {
                return Err(GeometryError::InvalidMixedAction(format!(
                    "component {p} outside [0, 1]"
                )));
            }
            *p = p.clamp(0.0, 1.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > FEASIBILITY_TOL {
            return Err(GeometryError::InvalidMixedAction(format!(
                "components sum to {total}"
            )));
        }
        Ok(Self(probs))
    }

    /// The `a`-th vertex of the simplex.
    pub fn pure(k: usize, a: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[a] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(p, w)| p * w).sum()
    }

    pub fn min_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linf_distance(&self, other: &MixedAction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for MixedAction {
    type Error = GeometryError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<MixedAction> for Vec<f64> {
    fn from(p: MixedAction) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "le")]
    Le,
    #[serde(rename = "ge")]
    Ge,
}

/// `coeffs · p (≤ | ≥) bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceConstraint {
    coeffs: Vec<f64>,
    bound: f64,
    sense: Sense,
}

impl HalfspaceConstraint {
    pub fn new(coeffs: Vec<f64>, sense: Sense, bound: f64) -> Result<Self, GeometryError> {
        if coeffs.iter().all(|c| *c == 0.0) {
            return Err(GeometryError::InvalidParameter(
                "constraint coefficients are all zero".into(),
            ));
        }
        if !bound.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidParameter(
                "non-finite constraint".into(),
            ));
        }
        Ok(Self {
            coeffs,
            bound,
            sense,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Signed violation: positive when `p` lies outside the halfspace.
    pub fn violation(&self, p: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(p).map(|(c, x)| c * x).sum();
        match self.sense {
            Sense::Le => lhs - self.bound,
            Sense::Ge => self.bound - lhs,
        }
    }

    pub fn holds(&self, p: &[f64]) -> bool {
        self.violation(p) <= FEASIBILITY_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Representation {
    Halfspaces,
    Vertices,
}

/// A finite polytope `P` contained in the simplex over `k` arms.
#[derive(Debug, Clone)]
pub struct Polytope {
    k: usize,
    constraints: Vec<HalfspaceConstraint>,
    repr: Representation,
    vertices: OnceLock<Vec<MixedAction>>,
    max_bases: u64,
}

impl Polytope {
    /// The simplex intersected with `constraints`. Vertices are enumerated on
    /// first use.
    pub fn from_constraints(
        k: usize,
        constraints: Vec<HalfspaceConstraint>,
    ) -> Result<Self, GeometryError> {
        if k == 0 {
            return Err(GeometryError::InvalidParameter("k must be positive".into()));
        }
        for c in &constraints {
            if c.coeffs.len() != k {
                return Err(GeometryError::Dimension {
                    expected: k,
                    got: c.coeffs.len(),
                });
            }
        }
        Ok(Self {
            k,
            constraints,
            repr: Representation::Halfspaces,
            vertices: OnceLock::new(),
            max_bases: DEFAULT_MAX_BASES,
        })
    }

    /// The full simplex over `k` arms.
    pub fn simplex(k: usize) -> Result<Self, GeometryError> {
        Self::from_constraints(k, Vec::new())
    }

    /// `{p : p_a ≥ ell for all a}`.
    pub fn min_prob(k: usize, ell: f64) -> Result<Self, GeometryError> {
        if k == 0 {
            return Err(GeometryError::InvalidParameter("k must be positive".into()));
        }
        if !(0.0..1.0 / k as f64).contains(&ell) {
            return Err(GeometryError::InvalidParameter(format!(
                "minimal probability {ell} must lie in [0, 1/{k})"
            )));
        }
        let constraints = if ell == 0.0 {
            Vec::new()
        } else {
            (0..k)
                .map(|a| {
                    let mut coeffs = vec![0.0; k];
                    coeffs[a] = 1.0;
                    HalfspaceConstraint::new(coeffs, Sense::Ge, ell)
                })
                .collect::<Result<_, _>>()?
        };
        Self::from_constraints(k, constraints)
    }

    /// `{p : lower_g ≤ Σ_{a ∈ G_g} p_a ≤ upper_g}`. Arm indices are 0-based.
    pub fn group(
        k: usize,
        groups: &[Vec<usize>],
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self, GeometryError> {
        if groups.len() != lower.len() || groups.len() != upper.len() {
            return Err(GeometryError::InvalidParameter(format!(
                "{} groups but {} lower and {} upper bounds",
                groups.len(),
                lower.len(),
                upper.len()
            )));
        }
        let mut constraints = Vec::new();
        for (g, group) in groups.iter().enumerate() {
            let (lo, hi) = (lower[g], upper[g]);
            if group.is_empty() {
                return Err(GeometryError::InvalidParameter(format!(
                    "group {g} is empty"
                )));
            }
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(GeometryError::InvalidParameter(format!(
                    "group {g}: bounds [{lo}, {hi}] are inconsistent"
                )));
            }
            let mut coeffs = vec![0.0; k];
            for &a in group {
                if a >= k {
                    return Err(GeometryError::InvalidParameter(format!(
                        "group {g}: arm {a} out of range for k = {k}"
                    )));
                }
                if coeffs[a] != 0.0 {
                    return Err(GeometryError::InvalidParameter(format!(
                        "group {g}: arm {a} listed twice"
                    )));
                }
                coeffs[a] = 1.0;
            }
            if lo > 0.0 {
                constraints.push(HalfspaceConstraint::new(coeffs.clone(), Sense::Ge, lo)?);
            }
            if hi < 1.0 {
                constraints.push(HalfspaceConstraint::new(coeffs, Sense::Le, hi)?);
            }
        }
        let polytope = Self::from_constraints(k, constraints)?;
        polytope.vertices()?;
        Ok(polytope)
    }

    /// `{p : Σ_a p_a c^(n)_a ≤ u_n for every budget n}`.
    pub fn budget(k: usize, costs: &[Vec<f64>], caps: &[f64]) -> Result<Self, GeometryError> {
        if costs.len() != caps.len() {
            return Err(GeometryError::InvalidParameter(format!(
                "{} cost rows but {} caps",
                costs.len(),
                caps.len()
            )));
        }
        let mut constraints = Vec::new();
        for (row, &cap) in costs.iter().zip(caps) {
            if row.len() != k {
                return Err(GeometryError::Dimension {
                    expected: k,
                    got: row.len(),
                });
            }
            if row.iter().all(|c| *c == 0.0) {
                if cap < 0.0 {
                    return Err(GeometryError::Empty);
                }
                continue;
            }
            constraints.push(HalfspaceConstraint::new(row.clone(), Sense::Le, cap)?);
        }
        let polytope = Self::from_constraints(k, constraints)?;
        polytope.vertices()?;
        Ok(polytope)
    }

    /// The convex hull of `points`. Duplicates and points lying in the hull
    /// of the others are dropped; the remaining order is preserved.
    pub fn from_vertices(points: Vec<MixedAction>) -> Result<Self, GeometryError> {
        let k = points.first().ok_or(GeometryError::Empty)?.k();
        let mut distinct: Vec<MixedAction> = Vec::with_capacity(points.len());
        for p in points {
            if p.k() != k {
                return Err(GeometryError::Dimension {
                    expected: k,
                    got: p.k(),
                });
            }
            if !distinct.iter().any(|q| q.linf_distance(&p) <= DEDUP_TOL) {
                distinct.push(p);
            }
        }
        let mut extreme = Vec::with_capacity(distinct.len());
        for (i, p) in distinct.iter().enumerate() {
            let others: Vec<&MixedAction> = distinct
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| q)
                .collect();
            if others.is_empty() || !in_hull(&others, p) {
                extreme.push(p.clone());
            }
        }
        let vertices = OnceLock::new();
        let _ = vertices.set(extreme);
        Ok(Self {
            k,
            constraints: Vec::new(),
            repr: Representation::Vertices,
            vertices,
            max_bases: DEFAULT_MAX_BASES,
        })
    }

    /// Overrides the cap on candidate bases for enumeration.
    pub fn with_max_bases(mut self, limit: u64) -> Self {
        self.max_bases = limit;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn constraints(&self) -> &[HalfspaceConstraint] {
        &self.constraints
    }

    /// Ext(P), enumerated once and cached.
    pub fn vertices(&self) -> Result<&[MixedAction], GeometryError> {
        if let Some(v) = self.vertices.get() {
            return Ok(v);
        }
        let enumerated = enumerate_vertices(self.k, &self.constraints, self.max_bases)?;
        // A concurrent initializer computes the identical list.
        let _ = self.vertices.set(enumerated);
        Ok(self.vertices.get().expect("vertex cache was just set"))
    }

    /// Whether `p` satisfies every constraint of the polytope.
    pub fn contains(&self, p: &MixedAction) -> bool {
        if p.k() != self.k {
            return false;
        }
        match self.repr {
            Representation::Halfspaces => self.constraints.iter().all(|c| c.holds(p.probs())),
            Representation::Vertices => {
                let vertices: Vec<&MixedAction> = self
                    .vertices
                    .get()
                    .map(|v| v.iter().collect())
                    .unwrap_or_default();
                in_hull(&vertices, p)
            }
        }
    }

    /// The vertex maximizing `⟨p, weights⟩`; ties go to the lowest index.
    pub fn argmax_vertex(&self, weights: &[f64]) -> Result<(usize, &MixedAction), GeometryError> {
        if weights.len() != self.k {
            return Err(GeometryError::Dimension {
                expected: self.k,
                got: weights.len(),
            });
        }
        let vertices = self.vertices()?;
        Ok(argmax_by_score(vertices, |v| v.dot(weights)))
    }
}

/// Index and element maximizing `score`, lowest index among near-ties.
pub(crate) fn argmax_by_score<T>(items: &[T], mut score: impl FnMut(&T) -> f64) -> (usize, &T) {
    let mut best = 0;
    let mut best_value = score(&items[0]);
    for (i, item) in items.iter().enumerate().skip(1) {
        let value = score(item);
        if value > best_value + TIE_TOL {
            best = i;
            best_value = value;
        }
    }
    (best, &items[best])
}

/// Whether `p` is a convex combination of `points`.
fn in_hull(points: &[&MixedAction], p: &MixedAction) -> bool {
    if points.is_empty() {
        return false;
    }
    let n = points.len();
    let mut rows: Vec<LpRow> = (0..p.k())
        .map(|a| {
            LpRow::new(
                points.iter().map(|q| q.probs()[a]).collect(),
                RowSense::Eq,
                p.probs()[a],
            )
        })
        .collect();
    rows.push(LpRow::new(vec![1.0; n], RowSense::Eq, 1.0));
    lp::minimize(&vec![0.0; n], &rows).is_ok()
}

fn binomial(n: u64, r: u64) -> u64 {
    let r = r.min(n.saturating_sub(r));
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` for (numerically) singular systems.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for j in col..n {
                    a[row][j] -= f * a[col][j];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|j| a[row][j] * x[j]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Extreme points of `{p ∈ simplex : constraints}` by basic-solution search:
/// every choice of `k − 1` tight rows among the explicit constraints and the
/// facets `p_a ≥ 0`, together with `Σp = 1`.
pub fn enumerate_vertices(
    k: usize,
    constraints: &[HalfspaceConstraint],
    max_bases: u64,
) -> Result<Vec<MixedAction>, GeometryError> {
    // Candidate tight rows: (coeffs, rhs).
    let mut candidates: Vec<(Vec<f64>, f64)> = constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.bound))
        .collect();
    for a in 0..k {
        let mut e = vec![0.0; k];
        e[a] = 1.0;
        candidates.push((e, 0.0));
    }
    let m = candidates.len();
    let r = k - 1;
    let bases = binomial(m as u64, r as u64);
    if bases > max_bases {
        return Err(GeometryError::TooManyBases {
            bases,
            limit: max_bases,
        });
    }

    let mut vertices: Vec<MixedAction> = Vec::new();
    let mut combo: Vec<usize> = (0..r).collect();
    loop {
        let mut a = Vec::with_capacity(k);
        let mut b = Vec::with_capacity(k);
        a.push(vec![1.0; k]);
        b.push(1.0);
        for &i in &combo {
            a.push(candidates[i].0.clone());
            b.push(candidates[i].1);
        }
        if let Some(x) = solve_square(a, b) {
            let feasible =
                x.iter().all(|v| *v >= -FEASIBILITY_TOL) && constraints.iter().all(|c| c.holds(&x));
            if feasible {
                if let Ok(p) = MixedAction::new(x) {
                    if !vertices.iter().any(|v| v.linf_distance(&p) <= DEDUP_TOL) {
                        vertices.push(p);
                    }
                }
            }
        }
        // Next combination in lexicographic order.
        let mut i = r;
        loop {
            if i == 0 {
                if vertices.is_empty() {
                    return Err(GeometryError::Empty);
                }
                return Ok(vertices);
            }
            i -= 1;
            if combo[i] < m - r + i {
                combo[i] += 1;
                for j in i + 1..r {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}
