//! Diversity-preserving stochastic bandits.
//!
//! The learner picks a mixed action `p_t` from a polytope `P` inside the
//! probability simplex, an arm `A_t ~ p_t` is drawn, and the reward of that
//! arm is observed. The crate provides:
//!
//! * [`geometry`]: polytope constructors, vertex enumeration, linear
//!   maximization over vertices;
//! * [`model`]: arm distributions, instances, seeded sampling, KL divergences;
//! * [`policies`]: diversity-preserving UCB and two baselines, plus the
//!   rectangle and ellipsoid confidence regions;
//! * [`analysis`]: gaps, regret envelopes, `t₀`, and the lower-bound LP;
//! * [`simulator`]: replicated runs and regret aggregation;
//! * [`lp`]: the small dense simplex solver used by the above.

pub mod analysis;
pub mod geometry;
pub mod lp;
pub mod model;
pub mod policies;
pub mod simulator;

pub use analysis::{
    case1_bound, case3_bound, compute_t0, conf_is_empty, gap_report, lower_bound_constant,
    regret_decomposition, t0_bounds, AnalysisError, GapReport, LowerBoundLP, MeanGrid,
};
pub use geometry::{GeometryError, HalfspaceConstraint, MixedAction, Polytope, Sense};
pub use model::{
    kl_bernoulli, kl_gaussian, make_alpha_instance, ArmDistribution, BanditInstance, ModelError,
    ModelTag,
};
pub use policies::{
    ConfidenceRegion, DpUcb, LinUcb, Policy, PolicyDecision, PolicyError, PolicySpec, RunState,
    VertexUcb,
};
pub use simulator::{
    aggregate, growth_diagnostic, run_batch, run_episode, BatchConfig, GrowthDiagnostic,
    RegretTable, RunTrajectory, SimulationError,
};
