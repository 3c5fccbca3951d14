//! Replicated, seeded simulation of the diversity-preserving bandit protocol
//! and aggregation of pseudo-regret trajectories.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{gap_report, AnalysisError, GapReport};
use crate::geometry::Polytope;
use crate::model::{
    run_seed, sample_arm, stream_rng, BanditInstance, ModelTag, ARM_STREAM, REWARD_STREAM,
};
use crate::policies::{PolicyError, PolicySpec};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("checkpoint stride must be at least 1")]
    ZeroStride,
    #[error("batch needs at least one run")]
    NoRuns,
    #[error("policy {0} needs rewards in [0, 1] but the instance has unbounded arms")]
    ModelMismatch(&'static str),
    #[error("instance has {instance} arms but polytope has {polytope}")]
    ArmCount { instance: usize, polytope: usize },
    #[error("cannot aggregate: {0}")]
    Aggregate(String),
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: u64,
    pub pseudo_regret: f64,
    /// Rounds so far in which an optimal vertex was played.
    pub n_star: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrajectory {
    pub run_index: u64,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub vertex_counts: Vec<u64>,
    pub pull_counts: Vec<u64>,
    pub final_regret: f64,
}

impl RunTrajectory {
    pub fn final_n_star(&self) -> u64 {
        self.checkpoints.last().map_or(0, |c| c.n_star)
    }
}

fn is_checkpoint(t: u64, horizon: u64, stride: u64) -> bool {
    t.is_multiple_of(stride) || t == horizon
}

/// One run of `horizon` rounds. Arm draws and rewards use independent
/// streams derived from `seed`.
pub fn run_episode(
    instance: &BanditInstance,
    polytope: &Polytope,
    spec: &PolicySpec,
    horizon: u64,
    stride: u64,
    seed: u64,
) -> Result<RunTrajectory, SimulationError> {
    let report = validate(instance, polytope, spec, horizon, stride)?;
    episode(instance, polytope, spec, &report, horizon, stride, 0, seed)
}

fn validate(
    instance: &BanditInstance,
    polytope: &Polytope,
    spec: &PolicySpec,
    horizon: u64,
    stride: u64,
) -> Result<GapReport, SimulationError> {
    if horizon == 0 {
        return Err(SimulationError::EmptyHorizon);
    }
    if stride == 0 {
        return Err(SimulationError::ZeroStride);
    }
    if instance.k() != polytope.k() {
        return Err(SimulationError::ArmCount {
            instance: instance.k(),
            polytope: polytope.k(),
        });
    }
    if instance.model() != ModelTag::Bounded01 {
        return Err(SimulationError::ModelMismatch(spec.label()));
    }
    Ok(gap_report(polytope, &instance.means())?)
}

#[allow(clippy::too_many_arguments)]
fn episode(
    instance: &BanditInstance,
    polytope: &Polytope,
    spec: &PolicySpec,
    report: &GapReport,
    horizon: u64,
    stride: u64,
    run_index: u64,
    seed: u64,
) -> Result<RunTrajectory, SimulationError> {
    let vertices = polytope.vertices().map_err(AnalysisError::from)?;
    let gaps = &report.per_vertex_gaps;
    let mut is_optimal = vec![false; vertices.len()];
    for &i in &report.optimal_set {
        is_optimal[i] = true;
    }

    let mut policy = spec.build(polytope)?;
    let mut arm_rng = stream_rng(seed, ARM_STREAM);
    let mut reward_rng = stream_rng(seed, REWARD_STREAM);

    let mut vertex_counts = vec![0u64; vertices.len()];
    let mut pull_counts = vec![0u64; instance.k()];
    let mut regret = 0.0;
    let mut n_star = 0u64;
    let mut checkpoints = Vec::with_capacity((horizon / stride) as usize + 1);

    for t in 1..=horizon {
        let decision = policy.choose(polytope, t)?;
        let arm = sample_arm(&decision.mixed_action, &mut arm_rng);
        let reward = instance.arms()[arm].sample(&mut reward_rng);
        policy.update(&decision, arm, reward)?;

        let v = decision.vertex_index;
        vertex_counts[v] += 1;
        pull_counts[arm] += 1;
        regret += gaps[v];
        if is_optimal[v] {
            n_star += 1;
        }
        if is_checkpoint(t, horizon, stride) {
            checkpoints.push(Checkpoint {
                t,
                pseudo_regret: regret,
                n_star,
            });
        }
    }

    Ok(RunTrajectory {
        run_index,
        seed,
        checkpoints,
        vertex_counts,
        pull_counts,
        final_regret: regret,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchConfig {
    pub horizon: u64,
    pub n_runs: u64,
    pub master_seed: u64,
    pub stride: u64,
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// `n_runs` independent runs, ordered by run index. Run `i` uses the seed
/// `run_seed(master_seed, i)`, so output does not depend on scheduling.
pub fn run_batch(
    instance: &BanditInstance,
    polytope: &Polytope,
    spec: &PolicySpec,
    config: &BatchConfig,
) -> Result<Vec<RunTrajectory>, SimulationError> {
    if config.n_runs == 0 {
        return Err(SimulationError::NoRuns);
    }
    let report = validate(instance, polytope, spec, config.horizon, config.stride)?;
    let work = || {
        (0..config.n_runs)
            .into_par_iter()
            .map(|i| {
                episode(
                    instance,
                    polytope,
                    spec,
                    &report,
                    config.horizon,
                    config.stride,
                    i,
                    run_seed(config.master_seed, i),
                )
            })
            .collect::<Result<Vec<_>, _>>()
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimulationError::ThreadPool(e.to_string()))?
            .install(work),
        None => work(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub t: u64,
    pub mean: f64,
    pub stderr: f64,
    pub lo2se: f64,
    pub hi2se: f64,
}

/// Per-checkpoint mean pseudo-regret with a ±2 standard-error band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTable {
    pub n_runs: usize,
    pub rows: Vec<SummaryRow>,
}

impl RegretTable {
    /// Mean regret at `t`, linearly interpolated between checkpoints.
    pub fn mean_at(&self, t: f64) -> Option<f64> {
        let points: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.t as f64, r.mean)).collect();
        interpolate(&points, t)
    }
}

fn interpolate(points: &[(f64, f64)], t: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    let i = points.partition_point(|p| p.0 < t);
    let (t1, y1) = points[i];
    if t1 == t || i == 0 {
        return Some(y1);
    }
    let (t0, y0) = points[i - 1];
    Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0))
}

/// Mean, standard error (sample SD over √N) and ±2 SE band per checkpoint.
pub fn aggregate(trajectories: &[RunTrajectory]) -> Result<RegretTable, SimulationError> {
    let first = trajectories
        .first()
        .ok_or_else(|| SimulationError::Aggregate("no trajectories".into()))?;
    let grid: Vec<u64> = first.checkpoints.iter().map(|c| c.t).collect();
    for tr in trajectories {
        if tr.checkpoints.len() != grid.len()
            || tr.checkpoints.iter().zip(&grid).any(|(c, t)| c.t != *t)
        {
            return Err(SimulationError::Aggregate(format!(
                "run {} has a different checkpoint grid",
                tr.run_index
            )));
        }
    }
    let n = trajectories.len() as f64;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mean = trajectories
                .iter()
                .map(|tr| tr.checkpoints[j].pseudo_regret)
                .sum::<f64>()
                / n;
            let stderr = if trajectories.len() < 2 {
                0.0
            } else {
                let var = trajectories
                    .iter()
                    .map(|tr| (tr.checkpoints[j].pseudo_regret - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                (var / n).sqrt()
            };
            SummaryRow {
                t,
                mean,
                stderr,
                lo2se: mean - 2.0 * stderr,
                hi2se: mean + 2.0 * stderr,
            }
        })
        .collect();
    Ok(RegretTable {
        n_runs: trajectories.len(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthDiagnostic {
    /// Least-squares slope of regret against `ln t` over `[T/4, T]`.
    pub slope_vs_ln_t: f64,
    /// `regret(T) − regret(T/2)`.
    pub tail_increment: f64,
}

/// Least-squares slope of `y` against `ln t` over points with `t ∈ [from, to]`.
pub fn slope_vs_ln_t(points: &[(u64, f64)], from: f64, to: f64) -> Option<f64> {
    let xs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, _)| (*t as f64) >= from && (*t as f64) <= to)
        .map(|&(t, y)| ((t as f64).ln(), y))
        .collect();
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Bounded-versus-logarithmic growth summary of a mean regret curve.
pub fn growth_diagnostic(table: &RegretTable) -> Option<GrowthDiagnostic> {
    let horizon = table.rows.last()?.t as f64;
    let points: Vec<(u64, f64)> = table.rows.iter().map(|r| (r.t, r.mean)).collect();
    let slope = slope_vs_ln_t(&points, horizon / 4.0, horizon)?;
    let tail = table.mean_at(horizon)? - table.mean_at(horizon / 2.0)?;
    Some(GrowthDiagnostic {
        slope_vs_ln_t: slope,
        tail_increment: tail,
    })
}

/// Mean and standard error across runs of the per-run slope against `ln t`
/// over `[from, to]`.
pub fn slope_across_runs(trajectories: &[RunTrajectory], from: f64, to: f64) -> Option<(f64, f64)> {
    let slopes: Vec<f64> = trajectories
        .iter()
        .map(|tr| {
            let pts: Vec<(u64, f64)> = tr
                .checkpoints
                .iter()
                .map(|c| (c.t, c.pseudo_regret))
                .collect();
            slope_vs_ln_t(&pts, from, to)
        })
        .collect::<Option<_>>()?;
    let n = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / n;
    if slopes.len() < 2 {
        return Some((mean, 0.0));
    }
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}
