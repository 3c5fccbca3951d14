//! Sequential policies over the vertices of a diversity-preserving polytope.
//!
//! Every policy follows the same two-step protocol: [`Policy::choose`] picks a
//! vertex for round `t` using only past observations, then
//! [`Policy::update`] receives the realized arm and reward. Policies never see
//! the arm means.
//!
//! * [`DpUcb`] builds per-arm upper confidence bounds and plays the vertex
//!   maximizing their inner product.
//! * [`VertexUcb`] runs classical UCB with each vertex as a meta-arm.
//! * [`LinUcb`] treats the problem as a linear bandit on the played mixed
//!   actions and ignores which arm was realized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{argmax_by_score, GeometryError, MixedAction, Polytope};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("arm {arm} out of range for {k} arms")]
    ArmOutOfRange { arm: usize, k: usize },
    #[error("vertex {vertex} out of range for {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("ridge parameter must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("regularized Gram matrix is not positive definite")]
    SingularGram,
    #[error("round {0} is too small for this operation")]
    InvalidRound(u64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A vertex choice.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub vertex_index: usize,
    pub mixed_action: MixedAction,
}

impl PolicyDecision {
    fn from_polytope(polytope: &Polytope, vertex_index: usize) -> Result<Self, PolicyError> {
        let mixed_action = polytope.vertices()?[vertex_index].clone();
        Ok(Self {
            vertex_index,
            mixed_action,
        })
    }
}

/// Counters and sums after `t` completed rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    t: u64,
    pull_counts: Vec<u64>,
    reward_sums: Vec<f64>,
    vertex_counts: Vec<u64>,
    last_indices: Vec<f64>,
}

impl RunState {
    pub fn new(k: usize, n_vertices: usize) -> Self {
        Self {
            t: 0,
            pull_counts: vec![0; k],
            reward_sums: vec![0.0; k],
            vertex_counts: vec![0; n_vertices],
            last_indices: vec![1.0; k],
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sums
    }

    pub fn vertex_counts(&self) -> &[u64] {
        &self.vertex_counts
    }

    /// `U(t)` as of the latest update.
    pub fn last_indices(&self) -> &[f64] {
        &self.last_indices
    }

    /// `μ̂_a(t)`, defaulting to 1 for arms never pulled.
    pub fn empirical_mean(&self, a: usize) -> f64 {
        match self.pull_counts[a] {
            0 => 1.0,
            n => self.reward_sums[a] / n as f64,
        }
    }

    pub fn empirical_means(&self) -> Vec<f64> {
        (0..self.pull_counts.len())
            .map(|a| self.empirical_mean(a))
            .collect()
    }

    /// Records one round.
    pub fn update(
        &mut self,
        decision: &PolicyDecision,
        arm: usize,
        reward: f64,
    ) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(PolicyError::RewardOutOfRange(reward));
        }
        self.record(decision.vertex_index, arm, reward)?;
        self.last_indices = ucb_indices(self, self.t);
        Ok(())
    }

    fn record(&mut self, vertex: usize, arm: usize, reward: f64) -> Result<(), PolicyError> {
        let k = self.pull_counts.len();
        if arm >= k {
            return Err(PolicyError::ArmOutOfRange { arm, k });
        }
        let n = self.vertex_counts.len();
        if vertex >= n {
            return Err(PolicyError::VertexOutOfRange { vertex, n });
        }
        self.t += 1;
        self.pull_counts[arm] += 1;
        self.reward_sums[arm] += reward;
        self.vertex_counts[vertex] += 1;
        Ok(())
    }
}

fn exploration_bonus(t: u64, count: u64) -> f64 {
    let log_t = if t <= 1 { 0.0 } else { (t as f64).ln() };
    (2.0 * log_t / count.max(1) as f64).sqrt()
}

/// `U_a(t) = μ̂_a(t) + sqrt(2 ln t / max(N_a(t), 1))`.
pub fn ucb_indices(state: &RunState, t: u64) -> Vec<f64> {
    (0..state.pull_counts.len())
        .map(|a| state.empirical_mean(a) + exploration_bonus(t, state.pull_counts[a]))
        .collect()
}

/// Vertex maximizing `⟨p, U(t − 1)⟩`, with `U(0) = (1, …, 1)`.
pub fn dp_ucb_choose(
    polytope: &Polytope,
    state: &RunState,
    t: u64,
) -> Result<PolicyDecision, PolicyError> {
    let indices = if t <= 1 {
        vec![1.0; polytope.k()]
    } else {
        ucb_indices(state, t - 1)
    };
    let (index, _) = polytope.argmax_vertex(&indices)?;
    PolicyDecision::from_polytope(polytope, index)
}

/// Records one round of diversity-preserving UCB.
pub fn dp_ucb_update(
    state: &mut RunState,
    decision: &PolicyDecision,
    arm: usize,
    reward: f64,
) -> Result<(), PolicyError> {
    state.update(decision, arm, reward)
}

/// Per-vertex indices `ȳ_p + sqrt(2 ln t / max(N_p, 1))`, with `ȳ_p = 1` for
/// unplayed vertices.
pub fn vertex_ucb_indices(vertex_counts: &[u64], vertex_reward_sums: &[f64], t: u64) -> Vec<f64> {
    vertex_counts
        .iter()
        .zip(vertex_reward_sums)
        .map(|(&n, &s)| {
            let mean = if n == 0 { 1.0 } else { s / n as f64 };
            mean + exploration_bonus(t, n)
        })
        .collect()
}

/// Running sufficient statistics of the ridge regression behind LinUCB.
#[derive(Debug, Clone)]
pub struct RidgeStats {
    lambda: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    n: u64,
}

impl RidgeStats {
    pub fn new(k: usize, lambda: f64) -> Result<Self, PolicyError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(PolicyError::InvalidLambda(lambda));
        }
        Ok(Self {
            lambda,
            gram: DMatrix::identity(k, k) * lambda,
            xty: DVector::zeros(k),
            n: 0,
        })
    }

    pub fn from_history(
        k: usize,
        history: &[(MixedAction, f64)],
        lambda: f64,
    ) -> Result<Self, PolicyError> {
        let mut stats = Self::new(k, lambda)?;
        for (p, y) in history {
            stats.push(p, *y);
        }
        Ok(stats)
    }

    pub fn push(&mut self, p: &MixedAction, reward: f64) {
        let x = DVector::from_column_slice(p.probs());
        self.gram += &x * x.transpose();
        self.xty += x * reward;
        self.n += 1;
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k(&self) -> usize {
        self.xty.len()
    }

    /// `V = λI + XᵀX`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `V⁻¹ Xᵀ Y`.
    pub fn estimate(&self) -> Result<DVector<f64>, PolicyError> {
        let chol = self
            .gram
            .clone()
            .cholesky()
            .ok_or(PolicyError::SingularGram)?;
        Ok(chol.solve(&self.xty))
    }

    fn choose(&self, polytope: &Polytope, t: u64) -> Result<PolicyDecision, PolicyError> {
        let chol = self
            .gram
            .clone()
            .cholesky()
            .ok_or(PolicyError::SingularGram)?;
        let theta = chol.solve(&self.xty);
        let beta = linucb_radius(t, self.lambda, self.k());
        let vertices = polytope.vertices()?;
        let (index, _) = argmax_by_score(vertices, |p| {
            let x = DVector::from_column_slice(p.probs());
            let width = x.dot(&chol.solve(&x)).max(0.0).sqrt();
            x.dot(&theta) + beta * width
        });
        PolicyDecision::from_polytope(polytope, index)
    }
}

/// `sqrt(2 ln max(t, 2)) + λ sqrt(K)`.
pub fn linucb_radius(t: u64, lambda: f64, k: usize) -> f64 {
    (2.0 * (t.max(2) as f64).ln()).sqrt() + lambda * (k as f64).sqrt()
}

/// LinUCB decision from a history of `(mixed action, reward)` pairs.
pub fn linucb_choose(
    polytope: &Polytope,
    history: &[(MixedAction, f64)],
    lambda: f64,
    t: u64,
) -> Result<PolicyDecision, PolicyError> {
    RidgeStats::from_history(polytope.k(), history, lambda)?.choose(polytope, t)
}

/// A confidence region for the mean vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfidenceRegion {
    Rectangle {
        centers: Vec<f64>,
        half_widths: Vec<f64>,
    },
    Ellipsoid {
        center: Vec<f64>,
        shape: DMatrix<f64>,
        radius: f64,
    },
}

impl ConfidenceRegion {
    pub fn contains(&self, mu: &[f64]) -> bool {
        match self {
            Self::Rectangle {
                centers,
                half_widths,
            } => centers
                .iter()
                .zip(half_widths)
                .zip(mu)
                .all(|((c, w), m)| (c - m).abs() <= *w),
            Self::Ellipsoid {
                center,
                shape,
                radius,
            } => {
                let d =
                    DVector::from_iterator(center.len(), mu.iter().zip(center).map(|(m, c)| m - c));
                d.dot(&(shape * &d)).max(0.0).sqrt() <= *radius
            }
        }
    }

    /// Boundary of a two-dimensional region as a closed polyline: the four
    /// corners of a rectangle, or `points` samples of an ellipse.
    pub fn boundary_2d(&self, points: usize) -> Option<Vec<[f64; 2]>> {
        match self {
            Self::Rectangle {
                centers,
                half_widths,
            } if centers.len() == 2 => {
                let (cx, cy) = (centers[0], centers[1]);
                let (wx, wy) = (half_widths[0], half_widths[1]);
                Some(vec![
                    [cx - wx, cy - wy],
                    [cx + wx, cy - wy],
                    [cx + wx, cy + wy],
                    [cx - wx, cy + wy],
                ])
            }
            Self::Ellipsoid {
                center,
                shape,
                radius,
            } if center.len() == 2 => {
                // μ − c = r L⁻ᵀ u with V = L Lᵀ and |u| = 1.
                let chol = shape.clone().cholesky()?;
                let lt = chol.l().transpose();
                let out = (0..points)
                    .map(|i| {
                        let theta = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
                        let u = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
                        let d = lt
                            .clone()
                            .solve_upper_triangular(&u)
                            .expect("Cholesky factor has a positive diagonal");
                        [center[0] + radius * d[0], center[1] + radius * d[1]]
                    })
                    .collect();
                Some(out)
            }
            _ => None,
        }
    }
}

/// Hyper-rectangle centered at `μ̂(t)` with half-widths
/// `sqrt(2 ln t / max(N_a(t), 1))`.
pub fn confidence_rectangle(state: &RunState, t: u64) -> Result<ConfidenceRegion, PolicyError> {
    if t < 2 {
        return Err(PolicyError::InvalidRound(t));
    }
    Ok(ConfidenceRegion::Rectangle {
        centers: state.empirical_means(),
        half_widths: state
            .pull_counts
            .iter()
            .map(|&n| exploration_bonus(t, n))
            .collect(),
    })
}

/// Ellipsoid `{μ : ‖μ − μ̂_lin‖_V ≤ sqrt(2 ln max(t, 2)) + λ sqrt(K)}`.
pub fn confidence_ellipsoid(
    k: usize,
    history: &[(MixedAction, f64)],
    lambda: f64,
    t: u64,
) -> Result<ConfidenceRegion, PolicyError> {
    if t < 1 {
        return Err(PolicyError::InvalidRound(t));
    }
    let stats = RidgeStats::from_history(k, history, lambda)?;
    Ok(ConfidenceRegion::Ellipsoid {
        center: stats.estimate()?.iter().copied().collect(),
        shape: stats.gram.clone(),
        radius: linucb_radius(t, lambda, k),
    })
}

/// A sequential decision rule over Ext(P).
pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Decision for round `t` (1-based), based on rounds `1..t`.
    fn choose(&mut self, polytope: &Polytope, t: u64) -> Result<PolicyDecision, PolicyError>;

    fn update(
        &mut self,
        decision: &PolicyDecision,
        arm: usize,
        reward: f64,
    ) -> Result<(), PolicyError>;
}

/// Diversity-preserving UCB.
#[derive(Debug, Clone)]
pub struct DpUcb {
    state: RunState,
}

impl DpUcb {
    pub fn new(k: usize, n_vertices: usize) -> Self {
        Self {
            state: RunState::new(k, n_vertices),
        }
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }
}

impl Policy for DpUcb {
    fn name(&self) -> &'static str {
        "dp_ucb"
    }

    fn choose(&mut self, polytope: &Polytope, t: u64) -> Result<PolicyDecision, PolicyError> {
        dp_ucb_choose(polytope, &self.state, t)
    }

    fn update(
        &mut self,
        decision: &PolicyDecision,
        arm: usize,
        reward: f64,
    ) -> Result<(), PolicyError> {
        dp_ucb_update(&mut self.state, decision, arm, reward)
    }
}

/// Classical UCB over the vertices as meta-arms.
#[derive(Debug, Clone)]
pub struct VertexUcb {
    state: RunState,
    vertex_reward_sums: Vec<f64>,
}

impl VertexUcb {
    pub fn new(k: usize, n_vertices: usize) -> Self {
        Self {
            state: RunState::new(k, n_vertices),
            vertex_reward_sums: vec![0.0; n_vertices],
        }
    }
}

impl Policy for VertexUcb {
    fn name(&self) -> &'static str {
        "vertex_ucb"
    }

    fn choose(&mut self, polytope: &Polytope, t: u64) -> Result<PolicyDecision, PolicyError> {
        let indices = vertex_ucb_indices(
            &self.state.vertex_counts,
            &self.vertex_reward_sums,
            t.saturating_sub(1),
        );
        let (index, _) = argmax_by_score(&indices, |v| *v);
        PolicyDecision::from_polytope(polytope, index)
    }

    fn update(
        &mut self,
        decision: &PolicyDecision,
        arm: usize,
        reward: f64,
    ) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(PolicyError::RewardOutOfRange(reward));
        }
        self.state.record(decision.vertex_index, arm, reward)?;
        self.vertex_reward_sums[decision.vertex_index] += reward;
        Ok(())
    }
}

/// LinUCB on the mixed actions; the realized arm is discarded.
#[derive(Debug, Clone)]
pub struct LinUcb {
    stats: RidgeStats,
}

impl LinUcb {
    pub fn new(k: usize, lambda: f64) -> Result<Self, PolicyError> {
        Ok(Self {
            stats: RidgeStats::new(k, lambda)?,
        })
    }

    pub fn stats(&self) -> &RidgeStats {
        &self.stats
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &'static str {
        "lin_ucb"
    }

    fn choose(&mut self, polytope: &Polytope, t: u64) -> Result<PolicyDecision, PolicyError> {
        self.stats.choose(polytope, t)
    }

    fn update(
        &mut self,
        decision: &PolicyDecision,
        _arm: usize,
        reward: f64,
    ) -> Result<(), PolicyError> {
        self.stats.push(&decision.mixed_action, reward);
        Ok(())
    }
}

/// Declarative policy description, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PolicySpec {
    DpUcb,
    VertexUcb,
    LinUcb {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_lambda() -> f64 {
    1.0
}

impl PolicySpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::DpUcb => "dp_ucb",
            Self::VertexUcb => "vertex_ucb",
            Self::LinUcb { .. } => "lin_ucb",
        }
    }

    /// A fresh policy instance for one run on `polytope`.
    pub fn build(&self, polytope: &Polytope) -> Result<Box<dyn Policy>, PolicyError> {
        let k = polytope.k();
        let n_vertices = polytope.vertices()?.len();
        Ok(match *self {
            Self::DpUcb => Box::new(DpUcb::new(k, n_vertices)),
            Self::VertexUcb => Box::new(VertexUcb::new(k, n_vertices)),
            Self::LinUcb { lambda } => Box::new(LinUcb::new(k, lambda)?),
        })
    }
}
