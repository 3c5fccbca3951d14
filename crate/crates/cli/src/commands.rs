//! The `run`, `analyze`, `lowerbound` and `confsets` subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use divbandit_core::analysis::{
    case1_bound, case3_bound, compute_t0, conf_is_empty, gap_report, lower_bound_constant,
    t0_bounds, AnalysisError, GapReport, MeanGrid,
};
use divbandit_core::geometry::{MixedAction, Polytope};
use divbandit_core::model::{
    sample_arm, stream_rng, ArmDistribution, BanditInstance, ModelTag, ARM_STREAM, REWARD_STREAM,
};
use divbandit_core::policies::{
    confidence_ellipsoid, confidence_rectangle, ConfidenceRegion, PolicyDecision, RunState,
};
use divbandit_core::simulator::{aggregate, run_batch, BatchConfig, RegretTable, RunTrajectory};
use serde::Serialize;

use crate::config::{ExperimentConfig, Resolved};
use crate::error::CliError;

pub const RUNS_CSV: &str = "runs.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const META_JSON: &str = "meta.json";
pub const CONFSETS_CSV: &str = "confsets.csv";

#[derive(Debug, Clone, Serialize)]
pub struct T0Report {
    pub value: u64,
    pub lower: f64,
    pub upper: f64,
}

/// Regret envelopes for one instance; `None` where the bound does not apply.
#[derive(Debug, Clone, Serialize)]
pub struct Envelopes {
    pub horizon: u64,
    pub case1_at_horizon: Option<f64>,
    /// Needs `ell_min > 0`.
    pub case3: Option<f64>,
    /// Burn-in time with `(Δ, ell_min)`, when both are positive and in domain.
    pub t0: Option<T0Report>,
}

pub fn envelopes(k: usize, report: &GapReport, horizon: u64) -> Envelopes {
    let Some(delta) = report.min_gap else {
        return Envelopes {
            horizon,
            case1_at_horizon: None,
            case3: None,
            t0: None,
        };
    };
    let ell = report.ell_min;
    let t0 = (ell > 0.0)
        .then(|| {
            let value = compute_t0(delta, ell).ok()?;
            let (lower, upper) = t0_bounds(delta, ell).ok()?;
            Some(T0Report {
                value,
                lower,
                upper,
            })
        })
        .flatten();
    Envelopes {
        horizon,
        case1_at_horizon: Some(case1_bound(k, delta, horizon as f64)),
        case3: (ell > 0.0)
            .then(|| case3_bound(k, delta, ell).ok())
            .flatten(),
        t0,
    }
}

fn gaps(polytope: &Polytope, instance: &BanditInstance) -> Result<GapReport, CliError> {
    gap_report(polytope, &instance.means()).map_err(CliError::runtime)
}

fn vertex_list(polytope: &Polytope) -> Vec<Vec<f64>> {
    polytope
        .vertices()
        .expect("vertices enumerated during validation")
        .iter()
        .map(|v| v.probs().to_vec())
        .collect()
}

#[derive(Serialize)]
struct RunRow<'a> {
    algorithm: &'a str,
    run: u64,
    seed: u64,
    t: u64,
    pseudo_regret: f64,
    n_star: u64,
}

#[derive(Serialize)]
struct SummaryCsvRow<'a> {
    algorithm: &'a str,
    t: u64,
    mean: f64,
    stderr: f64,
    lo2se: f64,
    hi2se: f64,
}

#[derive(Serialize)]
struct PolicyOutcome {
    name: &'static str,
    final_mean_regret: f64,
    final_stderr: f64,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    config: &'a ExperimentConfig,
    instance: &'a str,
    arms: &'a [ArmDistribution],
    vertices: Vec<Vec<f64>>,
    gap_report: &'a GapReport,
    envelopes: Envelopes,
    policies: Vec<PolicyOutcome>,
}

struct InstanceResult {
    label: String,
    report: GapReport,
    batches: Vec<(&'static str, Vec<RunTrajectory>, RegretTable)>,
}

/// Runs every policy on every selected instance, then writes
/// `<out_dir>/<label>/{runs.csv, summary.csv, meta.json}`.
pub fn run(
    resolved: &Resolved,
    only: Option<&str>,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> Result<Vec<PathBuf>, CliError> {
    let config = &resolved.config;
    let selected = resolved.select(only)?;
    for (label, instance) in &selected {
        if instance.model() != ModelTag::Bounded01 {
            return Err(CliError::config(format!(
                "instance `{label}`: the UCB policies need rewards in [0, 1]"
            )));
        }
    }
    if threads == Some(0) {
        return Err(CliError::config("--threads must be positive"));
    }

    let batch = BatchConfig {
        horizon: config.horizon,
        n_runs: config.n_runs,
        master_seed: config.seed,
        stride: config.stride,
        threads,
    };
    let mut results = Vec::new();
    for (label, instance) in &selected {
        let report = gaps(&resolved.polytope, instance)?;
        let mut batches = Vec::new();
        for spec in &config.policies {
            let runs = run_batch(instance, &resolved.polytope, spec, &batch)
                .map_err(|e| CliError::runtime(format!("{label}/{}: {e}", spec.label())))?;
            let table = aggregate(&runs).map_err(CliError::runtime)?;
            batches.push((spec.label(), runs, table));
        }
        results.push(InstanceResult {
            label: label.clone(),
            report,
            batches,
        });
    }

    let root = resolved.out_dir();
    let mut dirs = Vec::new();
    for (result, (_, instance)) in results.iter().zip(&selected) {
        let dir = root.join(&result.label);
        fs::create_dir_all(&dir)?;
        write_runs(&dir.join(RUNS_CSV), &result.batches)?;
        write_summary(&dir.join(SUMMARY_CSV), &result.batches)?;
        let meta = RunMeta {
            config,
            instance: &result.label,
            arms: instance.arms(),
            vertices: vertex_list(&resolved.polytope),
            gap_report: &result.report,
            envelopes: envelopes(instance.k(), &result.report, config.horizon),
            policies: result
                .batches
                .iter()
                .map(|(name, _, table)| {
                    let last = table.rows.last().expect("horizon is positive");
                    PolicyOutcome {
                        name,
                        final_mean_regret: last.mean,
                        final_stderr: last.stderr,
                    }
                })
                .collect(),
        };
        write_json(&dir.join(META_JSON), &meta)?;
        for p in &meta.policies {
            writeln!(
                out,
                "{}: {} regret(T={}) = {:.3} ± {:.3}",
                result.label, p.name, config.horizon, p.final_mean_regret, p.final_stderr
            )?;
        }
        dirs.push(dir);
    }
    writeln!(out, "wrote {}", root.display())?;
    Ok(dirs)
}

fn write_runs(
    path: &Path,
    batches: &[(&'static str, Vec<RunTrajectory>, RegretTable)],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for (name, runs, _) in batches {
        for r in runs {
            for c in &r.checkpoints {
                w.serialize(RunRow {
                    algorithm: name,
                    run: r.run_index,
                    seed: r.seed,
                    t: c.t,
                    pseudo_regret: c.pseudo_regret,
                    n_star: c.n_star,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_summary(
    path: &Path,
    batches: &[(&'static str, Vec<RunTrajectory>, RegretTable)],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for (name, _, table) in batches {
        for row in &table.rows {
            w.serialize(SummaryCsvRow {
                algorithm: name,
                t: row.t,
                mean: row.mean,
                stderr: row.stderr,
                lo2se: row.lo2se,
                hi2se: row.hi2se,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
pub struct AnalyzeReport {
    pub instance: String,
    pub means: Vec<f64>,
    pub vertices: Vec<Vec<f64>>,
    pub gap_report: GapReport,
    pub envelopes: Envelopes,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

pub const NO_SUBOPTIMAL_NOTICE: &str = "no suboptimal vertices: every vertex is optimal";

/// Gap report, envelopes and `t₀` for each selected instance, printed as a
/// JSON array.
pub fn analyze(
    resolved: &Resolved,
    only: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Vec<AnalyzeReport>, CliError> {
    let mut reports = Vec::new();
    for (label, instance) in resolved.select(only)? {
        let report = gaps(&resolved.polytope, instance)?;
        let notice = (!report.has_suboptimal()).then(|| NO_SUBOPTIMAL_NOTICE.to_string());
        if let Some(n) = &notice {
            writeln!(err, "{label}: {n}")?;
        }
        reports.push(AnalyzeReport {
            instance: label.clone(),
            means: instance.means(),
            vertices: vertex_list(&resolved.polytope),
            envelopes: envelopes(instance.k(), &report, resolved.config.horizon),
            gap_report: report,
            notice,
        });
    }
    serde_json::to_writer_pretty(&mut *out, &reports)?;
    writeln!(out)?;
    Ok(reports)
}

/// Grid settings for `lowerbound`, after merging flags over the config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LowerBoundArgs {
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub sigma2: Option<f64>,
    pub joint: bool,
}

pub const DEFAULT_GRID_POINTS: usize = 50;

#[derive(Serialize)]
pub struct AllocationEntry {
    pub vertex: Vec<f64>,
    pub gap: f64,
    pub n: f64,
}

#[derive(Serialize)]
pub struct LowerBoundReport {
    pub instance: String,
    pub means: Vec<f64>,
    pub variance: f64,
    pub optimal_vertex: Vec<f64>,
    pub conf_empty: bool,
    pub grid_points: usize,
    pub joint: bool,
    pub value: f64,
    pub constraint_count: usize,
    pub allocation: Vec<AllocationEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn gaussian_variant(
    label: &str,
    instance: &BanditInstance,
    sigma2: Option<f64>,
) -> Result<(BanditInstance, f64), CliError> {
    match (instance.model(), sigma2) {
        (_, Some(v)) => Ok((
            instance
                .gaussian_analog(v)
                .map_err(|e| CliError::config(format!("--sigma2: {e}")))?,
            v,
        )),
        (ModelTag::GaussianKnownVariance, None) => {
            let v = match instance.arms()[0] {
                ArmDistribution::Gaussian { variance, .. } => variance,
                _ => unreachable!("Gaussian model has Gaussian arms"),
            };
            if instance.arms().iter().any(
                |a| !matches!(a, ArmDistribution::Gaussian { variance, .. } if *variance == v),
            ) {
                return Err(CliError::config(format!(
                    "instance `{label}`: Gaussian arms must share one variance"
                )));
            }
            Ok((instance.clone(), v))
        }
        (ModelTag::Bounded01, None) => Err(CliError::config(format!(
            "instance `{label}` has bounded arms; the lower bound needs Gaussian arms (set --sigma2)"
        ))),
    }
}

fn analysis_error(label: &str, e: AnalysisError) -> CliError {
    let msg = format!("instance `{label}`: {e}");
    match e {
        AnalysisError::BoundedModel | AnalysisError::UnreachableArm(_) => CliError::config(msg),
        _ => CliError::runtime(msg),
    }
}

/// Finite-grid lower-bound constant for each selected instance, printed as a
/// JSON array.
pub fn lowerbound(
    resolved: &Resolved,
    only: Option<&str>,
    args: &LowerBoundArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Vec<LowerBoundReport>, CliError> {
    let defaults = resolved.config.lowerbound.clone().unwrap_or_default();
    let grid = MeanGrid {
        min: args.grid_min.or(defaults.grid_min),
        max: args.grid_max.or(defaults.grid_max),
        points: args
            .grid_points
            .or(defaults.grid_points)
            .unwrap_or(DEFAULT_GRID_POINTS),
        joint: args.joint || defaults.joint,
    };
    if let (Some(lo), Some(hi)) = (grid.min, grid.max) {
        if !(lo <= hi) {
            return Err(CliError::config(format!(
                "grid min {lo} exceeds grid max {hi}"
            )));
        }
    }
    let sigma2 = args.sigma2.or(defaults.sigma2);
    let vertices = vertex_list(&resolved.polytope);

    let mut reports = Vec::new();
    for (label, instance) in resolved.select(only)? {
        let (gaussian, variance) = gaussian_variant(label, instance, sigma2)?;
        let lb = lower_bound_constant(&gaussian, &resolved.polytope, &grid)
            .map_err(|e| analysis_error(label, e))?;
        let warning = (grid.points == 0).then(|| {
            "empty grid: no alternatives tried, value is the unconstrained infimum 0".to_string()
        });
        if let Some(w) = &warning {
            writeln!(err, "warning: {label}: {w}")?;
        }
        reports.push(LowerBoundReport {
            instance: label.clone(),
            means: gaussian.means(),
            variance,
            optimal_vertex: vertices[lb.optimal_vertex].clone(),
            conf_empty: conf_is_empty(&gaussian, &resolved.polytope)
                .map_err(|e| analysis_error(label, e))?,
            grid_points: grid.points,
            joint: grid.joint,
            value: lb.value,
            constraint_count: lb.constraint_rows.len(),
            allocation: lb
                .vertices
                .iter()
                .zip(&lb.vertex_gaps)
                .zip(&lb.allocation)
                .map(|((&v, &gap), &n)| AllocationEntry {
                    vertex: vertices[v].clone(),
                    gap,
                    n,
                })
                .collect(),
            warning,
        });
    }
    serde_json::to_writer_pretty(&mut *out, &reports)?;
    writeln!(out)?;
    Ok(reports)
}

#[derive(Serialize)]
struct ConfsetsRow<'a> {
    shape: &'a str,
    index: usize,
    x: f64,
    y: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfsetsSummary {
    pub path: PathBuf,
    pub observations: u64,
    pub true_mean: Vec<f64>,
    pub rectangle_contains_mean: bool,
    pub ellipse_contains_mean: bool,
}

/// Replays fixed mixed actions on a two-armed instance and writes the
/// rectangle and ellipsoid confidence regions to `confsets.csv`.
pub fn confsets(
    resolved: &Resolved,
    only: Option<&str>,
    out: &mut dyn Write,
) -> Result<ConfsetsSummary, CliError> {
    let spec = resolved
        .config
        .confsets
        .as_ref()
        .ok_or_else(|| CliError::config("missing `[confsets]` section"))?;
    let (label, instance) = match resolved.select(only)?.as_slice() {
        [one] => *one,
        _ => {
            return Err(CliError::config(
                "confsets needs a single instance (use --instance)",
            ))
        }
    };
    if instance.k() != 2 {
        return Err(CliError::config(format!(
            "confsets draws a 2-D figure; instance `{label}` has {} arms",
            instance.k()
        )));
    }
    if instance.model() != ModelTag::Bounded01 {
        return Err(CliError::config("confsets needs rewards in [0, 1]"));
    }
    if spec.actions.len() != spec.counts.len() {
        return Err(CliError::config(format!(
            "{} actions but {} counts",
            spec.actions.len(),
            spec.counts.len()
        )));
    }
    if spec.ellipse_points < 3 {
        return Err(CliError::config("`ellipse_points` must be at least 3"));
    }
    let actions: Vec<MixedAction> = spec
        .actions
        .iter()
        .map(|p| MixedAction::new(p.clone()))
        .collect::<Result<_, _>>()
        .map_err(CliError::config)?;
    if actions.iter().any(|p| p.k() != 2) {
        return Err(CliError::config("confsets actions must have two entries"));
    }

    let seed = resolved.config.seed;
    let mut arm_rng = stream_rng(seed, ARM_STREAM);
    let mut reward_rng = stream_rng(seed, REWARD_STREAM);
    let mut state = RunState::new(2, actions.len().max(1));
    let mut history = Vec::new();
    for (i, (p, &n)) in actions.iter().zip(&spec.counts).enumerate() {
        let decision = PolicyDecision {
            vertex_index: i,
            mixed_action: p.clone(),
        };
        for _ in 0..n {
            let arm = sample_arm(p, &mut arm_rng);
            let reward = instance.arms()[arm].sample(&mut reward_rng);
            state
                .update(&decision, arm, reward)
                .map_err(CliError::runtime)?;
            history.push((p.clone(), reward));
        }
    }
    let t = state.t();
    let rectangle = confidence_rectangle(&state, t.max(2)).map_err(CliError::runtime)?;
    let ellipse =
        confidence_ellipsoid(2, &history, spec.lambda, t.max(1)).map_err(CliError::config)?;
    let mu = instance.means();

    let dir = resolved.out_dir();
    fs::create_dir_all(&dir)?;
    let path = dir.join(CONFSETS_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    let mut emit = |shape: &str, pts: &[[f64; 2]]| -> Result<(), CliError> {
        for (index, p) in pts.iter().enumerate() {
            w.serialize(ConfsetsRow {
                shape,
                index,
                x: p[0],
                y: p[1],
            })?;
        }
        Ok(())
    };
    emit("rectangle", &boundary(&rectangle, 4)?)?;
    emit("ellipse", &boundary(&ellipse, spec.ellipse_points)?)?;
    emit("true_mean", &[[mu[0], mu[1]]])?;
    let centers = |r: &ConfidenceRegion| match r {
        ConfidenceRegion::Rectangle { centers, .. } => [centers[0], centers[1]],
        ConfidenceRegion::Ellipsoid { center, .. } => [center[0], center[1]],
    };
    emit("empirical_mean", &[centers(&rectangle)])?;
    emit("ridge_estimate", &[centers(&ellipse)])?;
    w.flush()?;

    let summary = ConfsetsSummary {
        path,
        observations: t,
        rectangle_contains_mean: rectangle.contains(&mu),
        ellipse_contains_mean: ellipse.contains(&mu),
        true_mean: mu,
    };
    serde_json::to_writer_pretty(&mut *out, &summary)?;
    writeln!(out)?;
    Ok(summary)
}

fn boundary(region: &ConfidenceRegion, points: usize) -> Result<Vec<[f64; 2]>, CliError> {
    region
        .boundary_2d(points)
        .ok_or_else(|| CliError::runtime("degenerate confidence region"))
}
