//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! name = "alpha_grid"
//! horizon = 20000
//! n_runs = 75
//! seed = 1
//! stride = 50
//! policies = [{ name = "dp_ucb" }, { name = "lin_ucb", lambda = 1.0 }]
//!
//! [polytope]
//! type = "group"
//! k = 3
//! groups = [[0], [1]]
//! lower = [0.1, 0.1]
//!
//! [[instances]]
//! alpha = 0.05
//!
//! [[instances]]
//! label = "custom"
//! arms = [{ kind = "bernoulli", mean = 0.6 }, { kind = "bernoulli", mean = 0.4 }, { kind = "point", value = 0.5 }]
//! ```
//!
//! Arm indices in polytope specs are 0-based.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use divbandit_core::geometry::{MixedAction, Polytope, DEFAULT_MAX_BASES};
use divbandit_core::model::{make_alpha_instance, ArmDistribution, BanditInstance};
use divbandit_core::policies::PolicySpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_n_runs")]
    pub n_runs: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bases: Option<u64>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicySpec>,
    pub polytope: PolytopeSpec,
    pub instances: Vec<InstanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowerbound: Option<LowerBoundSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confsets: Option<ConfsetsSpec>,
}

fn default_horizon() -> u64 {
    20_000
}

fn default_n_runs() -> u64 {
    75
}

fn default_stride() -> u64 {
    50
}

fn default_policies() -> Vec<PolicySpec> {
    vec![PolicySpec::DpUcb]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PolytopeSpec {
    /// `{p : p_a ≥ ell for every arm}`.
    MinProb { k: usize, ell: f64 },
    /// `{p : lower_g ≤ Σ_{a ∈ groups[g]} p_a ≤ upper_g}`; `upper` defaults to 1.
    Group {
        k: usize,
        groups: Vec<Vec<usize>>,
        lower: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<Vec<f64>>,
    },
    /// `{p : Σ_a costs[n][a] p_a ≤ caps[n]}`.
    Budget {
        k: usize,
        costs: Vec<Vec<f64>>,
        caps: Vec<f64>,
    },
    /// Convex hull of the listed mixed actions.
    Vertices { list: Vec<Vec<f64>> },
}

impl PolytopeSpec {
    pub fn build(&self, max_bases: u64) -> Result<Polytope, CliError> {
        let polytope = match self {
            Self::MinProb { k, ell } => Polytope::min_prob(*k, *ell),
            Self::Group {
                k,
                groups,
                lower,
                upper,
            } => {
                let upper = upper.clone().unwrap_or_else(|| vec![1.0; groups.len()]);
                Polytope::group(*k, groups, lower, &upper)
            }
            Self::Budget { k, costs, caps } => Polytope::budget(*k, costs, caps),
            Self::Vertices { list } => list
                .iter()
                .map(|p| MixedAction::new(p.clone()))
                .collect::<Result<Vec<_>, _>>()
                .and_then(Polytope::from_vertices),
        }
        .map_err(|e| CliError::config(format!("polytope: {e}")))?
        .with_max_bases(max_bases);
        polytope
            .vertices()
            .map_err(|e| CliError::config(format!("polytope: {e}")))?;
        Ok(polytope)
    }
}

/// A bandit instance: either the three-armed `alpha` family or explicit arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<Vec<ArmDistribution>>,
}

impl InstanceSpec {
    pub fn label(&self, index: usize) -> String {
        match (&self.label, self.alpha) {
            (Some(l), _) => l.clone(),
            (None, Some(a)) => format!("alpha_{a}"),
            (None, None) => format!("instance_{index}"),
        }
    }

    pub fn build(&self) -> Result<BanditInstance, CliError> {
        let built = match (self.alpha, &self.arms) {
            (Some(alpha), None) => make_alpha_instance(alpha),
            (None, Some(arms)) => arms
                .iter()
                .map(|a| a.validated())
                .collect::<Result<Vec<_>, _>>()
                .and_then(BanditInstance::new),
            _ => {
                return Err(CliError::config(
                    "each instance needs exactly one of `alpha` or `arms`",
                ))
            }
        };
        built.map_err(CliError::config)
    }
}

/// Defaults for the `lowerbound` command; flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub joint: bool,
}

/// The two-armed confidence-set replay: `counts[i]` rounds with `actions[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfsetsSpec {
    pub actions: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_ellipse_points")]
    pub ellipse_points: usize,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_ellipse_points() -> usize {
    256
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub stride: Option<u64>,
}

/// A validated config with its polytope and instances built.
#[derive(Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub polytope: Polytope,
    pub instances: Vec<(String, BanditInstance)>,
}

impl Resolved {
    /// Instances to process: all of them, or the one named `only`.
    pub fn select(&self, only: Option<&str>) -> Result<Vec<&(String, BanditInstance)>, CliError> {
        match only {
            None => Ok(self.instances.iter().collect()),
            Some(label) => self
                .instances
                .iter()
                .find(|(l, _)| l == label)
                .map(|i| vec![i])
                .ok_or_else(|| CliError::config(format!("no instance labelled `{label}`"))),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.config
            .out_dir
            .clone()
            .unwrap_or_else(|| Path::new("results").join(&self.config.name))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string().trim_end()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(CliError::runtime)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = Some(dir.clone());
        }
        if let Some(stride) = overrides.stride {
            self.stride = stride;
        }
    }

    /// Checks every spec against its constructor before any work starts.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        if self.name.is_empty() {
            return Err(CliError::config("`name` must not be empty"));
        }
        if self.horizon == 0 {
            return Err(CliError::config("`horizon` must be positive"));
        }
        if self.n_runs == 0 {
            return Err(CliError::config("`n_runs` must be positive"));
        }
        if self.stride == 0 {
            return Err(CliError::config("`stride` must be positive"));
        }
        if self.instances.is_empty() {
            return Err(CliError::config(
                "at least one `[[instances]]` entry is required",
            ));
        }
        let polytope = self
            .polytope
            .build(self.max_bases.unwrap_or(DEFAULT_MAX_BASES))?;

        let mut labels = HashSet::new();
        let mut instances = Vec::new();
        for (i, spec) in self.instances.iter().enumerate() {
            let label = spec.label(i);
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "_-.+".contains(c))
            {
                return Err(CliError::config(format!(
                    "instance label `{label}` must use only letters, digits and `_-.+`"
                )));
            }
            if !labels.insert(label.clone()) {
                return Err(CliError::config(format!(
                    "duplicate instance label `{label}`"
                )));
            }
            let instance = spec
                .build()
                .map_err(|e| CliError::config(format!("instance `{label}`: {e}")))?;
            if instance.k() != polytope.k() {
                return Err(CliError::config(format!(
                    "instance `{label}` has {} arms, polytope has {}",
                    instance.k(),
                    polytope.k()
                )));
            }
            instances.push((label, instance));
        }

        let mut names = HashSet::new();
        for policy in &self.policies {
            if !names.insert(policy.label()) {
                return Err(CliError::config(format!(
                    "policy `{}` listed twice",
                    policy.label()
                )));
            }
            policy
                .build(&polytope)
                .map_err(|e| CliError::config(format!("policy `{}`: {e}", policy.label())))?;
        }

        Ok(Resolved {
            config: self,
            polytope,
            instances,
        })
    }
}
