//! Distribution-dependent quantities: gaps and optimal sets, regret envelopes,
//! the burn-in time `t₀`, and the lower-bound constant as a finite LP over a
//! grid of confusing alternatives.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeometryError, Polytope};
use crate::lp::{self, LpError, LpRow, RowSense};
use crate::model::{kl_to_mean, BanditInstance, ModelTag};

/// Gaps below this are treated as ties / optimal.
pub const OPTIMALITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("mean vector has {got} entries, polytope has {expected} arms")]
    Dimension { expected: usize, got: usize },
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("optimal mixed action is not unique ({0} optimal vertices)")]
    NonUniqueOptimum(usize),
    #[error("polytope puts no mass on arm {0}")]
    UnreachableArm(usize),
    #[error("lower-bound computation needs unbounded means (Gaussian arms)")]
    BoundedModel,
    #[error("lower-bound LP failed: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// `M(μ, P)`.
    pub optimal_value: f64,
    /// Indices of optimal vertices.
    pub optimal_set: Vec<usize>,
    /// `Δ(p)` per vertex; exactly zero on the optimal set.
    pub per_vertex_gaps: Vec<f64>,
    /// Smallest positive gap, `None` when every vertex is optimal.
    pub min_gap: Option<f64>,
    pub p_star_min: f64,
    pub ell_min: f64,
}

impl GapReport {
    pub fn has_suboptimal(&self) -> bool {
        self.min_gap.is_some()
    }

    /// The optimal vertex, if it is unique.
    pub fn unique_optimum(&self) -> Option<usize> {
        match self.optimal_set.as_slice() {
            [i] => Some(*i),
            _ => None,
        }
    }
}

/// Exact scan of Ext(P) against the mean vector `mu`.
pub fn gap_report(polytope: &Polytope, mu: &[f64]) -> Result<GapReport, AnalysisError> {
    if mu.len() != polytope.k() {
        return Err(AnalysisError::Dimension {
            expected: polytope.k(),
            got: mu.len(),
        });
    }
    let vertices = polytope.vertices()?;
    let values: Vec<f64> = vertices.iter().map(|v| v.dot(mu)).collect();
    let optimal_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut optimal_set = Vec::new();
    let per_vertex_gaps: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let gap = optimal_value - v;
            if gap <= OPTIMALITY_TOL {
                optimal_set.push(i);
                0.0
            } else {
                gap
            }
        })
        .collect();
    let min_gap = per_vertex_gaps
        .iter()
        .copied()
        .filter(|g| *g > 0.0)
        .reduce(f64::min);
    let p_star_min = optimal_set
        .iter()
        .map(|&i| vertices[i].min_prob())
        .fold(f64::INFINITY, f64::min);
    let ell_min = vertices
        .iter()
        .map(|v| v.min_prob())
        .fold(f64::INFINITY, f64::min);
    Ok(GapReport {
        optimal_value,
        optimal_set,
        per_vertex_gaps,
        min_gap,
        p_star_min,
        ell_min,
    })
}

/// Worst-case envelope `(24 K ln(1+T)² + K + 2) / Δ`.
pub fn case1_bound(k: usize, delta: f64, horizon: f64) -> f64 {
    let k = k as f64;
    (24.0 * k * (1.0 + horizon).ln().powi(2) + k + 2.0) / delta
}

/// Horizon-free envelope for polytopes with `ℓ > 0`:
/// `(24K/Δ) ln(1 + (32/(Δ²ℓ)) ln(16/(Δ²ℓ))) + (7K+3)/min(Δ, ℓ²)`.
pub fn case3_bound(k: usize, delta: f64, ell: f64) -> Result<f64, AnalysisError> {
    if !(delta > 0.0) || !(ell > 0.0) {
        return Err(AnalysisError::Domain(format!(
            "need delta > 0 and ell > 0, got ({delta}, {ell})"
        )));
    }
    let ratio = 16.0 / (delta * delta * ell);
    if !(ratio > 1.0) {
        return Err(AnalysisError::Domain(format!(
            "16/(delta^2 ell) = {ratio} must exceed 1"
        )));
    }
    let k = k as f64;
    Ok(24.0 * k / delta * (1.0 + 2.0 * ratio * ratio.ln()).ln()
        + (7.0 * k + 3.0) / delta.min(ell * ell))
}

fn t0_condition(t: u64, delta: f64, ell: f64) -> bool {
    let t = t as f64;
    8.0 * t.ln() / (delta * delta) > t * ell / 2.0
}

fn check_t0_domain(delta: f64, ell: f64) -> Result<f64, AnalysisError> {
    if !(delta > 0.0 && delta <= 1.0) || !(ell > 0.0 && ell <= 1.0) {
        return Err(AnalysisError::Domain(format!(
            "t0 needs delta, ell in (0, 1], got ({delta}, {ell})"
        )));
    }
    let a = delta * delta * ell / 16.0;
    if !(a < std::f64::consts::LN_2 / 2.0) {
        return Err(AnalysisError::Domain(format!(
            "delta^2 ell / 16 = {a} must be below ln(2)/2"
        )));
    }
    Ok(a)
}

/// `(16/(Δ²ℓ) − 1, (32/(Δ²ℓ)) ln(16/(Δ²ℓ)))`, the bracket known to contain `t₀`.
pub fn t0_bounds(delta: f64, ell: f64) -> Result<(f64, f64), AnalysisError> {
    let a = check_t0_domain(delta, ell)?;
    let inv = 1.0 / a;
    Ok((inv - 1.0, 2.0 * inv * inv.ln()))
}

/// `t₀ = max{t ≥ 2 : 8 ln t / Δ² > t ℓ / 2}`.
///
/// The condition reads `ln t > a t` with `a = Δ²ℓ/16`; its solution set is an
/// interval containing 2, so the largest solution is found by bisection up to
/// twice the known upper bound.
pub fn compute_t0(delta: f64, ell: f64) -> Result<u64, AnalysisError> {
    let (_, upper) = t0_bounds(delta, ell)?;
    let mut lo: u64 = 2;
    let mut hi: u64 = (2.0 * upper).ceil() as u64 + 2;
    debug_assert!(t0_condition(lo, delta, ell));
    while t0_condition(hi, delta, ell) {
        hi *= 2;
    }
    // Invariant: condition(lo) holds, condition(hi) fails.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if t0_condition(mid, delta, ell) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `Σ_p Δ(p) N_p(T)`.
pub fn regret_decomposition(vertex_counts: &[u64], per_vertex_gaps: &[f64]) -> f64 {
    assert_eq!(
        vertex_counts.len(),
        per_vertex_gaps.len(),
        "length mismatch"
    );
    vertex_counts
        .iter()
        .zip(per_vertex_gaps)
        .map(|(&n, &g)| g * n as f64)
        .sum()
}

/// Unique optimal vertex and the arms it never plays.
struct OptimumInfo {
    report: GapReport,
    optimum: usize,
    zero_arms: Vec<usize>,
}

fn unique_optimum(
    instance: &BanditInstance,
    polytope: &Polytope,
) -> Result<OptimumInfo, AnalysisError> {
    if instance.model() != ModelTag::GaussianKnownVariance {
        return Err(AnalysisError::BoundedModel);
    }
    let vertices = polytope.vertices()?;
    let report = gap_report(polytope, &instance.means())?;
    let optimum = report
        .unique_optimum()
        .ok_or(AnalysisError::NonUniqueOptimum(report.optimal_set.len()))?;
    for a in 0..polytope.k() {
        if vertices.iter().all(|v| v.probs()[a] <= 0.0) {
            return Err(AnalysisError::UnreachableArm(a));
        }
    }
    let zero_arms = vertices[optimum]
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p <= 0.0)
        .map(|(a, _)| a)
        .collect();
    Ok(OptimumInfo {
        report,
        optimum,
        zero_arms,
    })
}

/// Whether the set of confusing alternatives is empty, which for models with
/// unbounded means happens exactly when the optimal vertex puts positive mass
/// on every arm.
pub fn conf_is_empty(
    instance: &BanditInstance,
    polytope: &Polytope,
) -> Result<bool, AnalysisError> {
    Ok(unique_optimum(instance, polytope)?.zero_arms.is_empty())
}

/// Alternative means tried for each arm the optimum never plays.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanGrid {
    /// Lowest alternative mean; defaults to the arm's own mean.
    pub min: Option<f64>,
    /// Highest alternative mean; defaults to the arm's mean plus 10.
    pub max: Option<f64>,
    pub points: usize,
    /// Vary all zero-mass arms jointly (Cartesian product) instead of one at
    /// a time.
    pub joint: bool,
}

impl MeanGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self {
            min: Some(min),
            max: Some(max),
            points,
            joint: false,
        }
    }

    fn values(&self, own_mean: f64) -> Vec<f64> {
        let lo = self.min.unwrap_or(own_mean);
        let hi = self.max.unwrap_or(own_mean + 10.0);
        match self.points {
            0 => Vec::new(),
            1 => vec![lo],
            n => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Finite relaxation of the lower-bound constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundLP {
    /// Index of the unique optimal vertex.
    pub optimal_vertex: usize,
    /// Non-optimal vertex indices, in LP variable order.
    pub vertices: Vec<usize>,
    /// `Δ(p)` for each entry of `vertices`.
    pub vertex_gaps: Vec<f64>,
    /// Mean vectors of the confusing alternatives kept as constraints.
    pub alternatives: Vec<Vec<f64>>,
    /// One row per alternative: `Σ_{a: p*_a = 0} p_a KL(ν_a, ν'_a)` per vertex.
    pub constraint_rows: Vec<Vec<f64>>,
    pub value: f64,
    /// Optimal `n(p)` for each entry of `vertices`.
    pub allocation: Vec<f64>,
}

/// Lower estimate of the constrained infimum using the alternatives on `grid`.
/// Adding grid points can only increase the value.
pub fn lower_bound_constant(
    instance: &BanditInstance,
    polytope: &Polytope,
    grid: &MeanGrid,
) -> Result<LowerBoundLP, AnalysisError> {
    let info = unique_optimum(instance, polytope)?;
    let vertices = polytope.vertices()?;
    let mu = instance.means();
    let variables: Vec<usize> = (0..vertices.len()).filter(|&i| i != info.optimum).collect();
    let vertex_gaps: Vec<f64> = variables
        .iter()
        .map(|&i| info.report.per_vertex_gaps[i])
        .collect();

    // Candidate alternatives: lists of (arm, alternative mean).
    let mut candidates: Vec<Vec<(usize, f64)>> = Vec::new();
    if grid.joint && !info.zero_arms.is_empty() {
        candidates.push(Vec::new());
        for &a in &info.zero_arms {
            let values = grid.values(mu[a]);
            candidates = candidates
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&m| {
                        let mut c = prefix.clone();
                        c.push((a, m));
                        c
                    })
                })
                .collect();
        }
    } else {
        for &a in &info.zero_arms {
            candidates.extend(grid.values(mu[a]).into_iter().map(|m| vec![(a, m)]));
        }
    }

    let mut alternatives = Vec::new();
    let mut constraint_rows = Vec::new();
    for changes in candidates {
        let mut alt = mu.clone();
        for &(a, m) in &changes {
            alt[a] = m;
        }
        let alt_report = gap_report(polytope, &alt)?;
        if alt_report.optimal_set.contains(&info.optimum) {
            continue;
        }
        let row: Vec<f64> = variables
            .iter()
            .map(|&i| {
                changes
                    .iter()
                    .map(|&(a, m)| {
                        let pa = vertices[i].probs()[a];
                        if pa == 0.0 {
                            0.0
                        } else {
                            pa * kl_to_mean(&instance.arms()[a], m)
                        }
                    })
                    .sum()
            })
            .collect();
        alternatives.push(alt);
        constraint_rows.push(row);
    }

    if constraint_rows.is_empty() {
        return Ok(LowerBoundLP {
            optimal_vertex: info.optimum,
            allocation: vec![0.0; variables.len()],
            vertices: variables,
            vertex_gaps,
            alternatives,
            constraint_rows,
            value: 0.0,
        });
    }

    let rows: Vec<LpRow> = constraint_rows
        .iter()
        .map(|r| LpRow::new(r.clone(), RowSense::Ge, 1.0))
        .collect();
    let solution = lp::minimize(&vertex_gaps, &rows)?;
    Ok(LowerBoundLP {
        optimal_vertex: info.optimum,
        vertices: variables,
        vertex_gaps,
        alternatives,
        constraint_rows,
        value: solution.value,
        allocation: solution.x,
    })
}
