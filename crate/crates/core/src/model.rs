//! Arm reward distributions, bandit instances, sampling and KL divergences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::MixedAction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid arm distribution: {0}")]
    InvalidArm(String),
    #[error("bandit instance has no arms")]
    NoArms,
    #[error("arms mix bounded and Gaussian families")]
    MixedFamilies,
    #[error("alpha must satisfy |alpha| < 1/6, got {0}")]
    AlphaOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArmDistribution {
    Bernoulli {
        mean: f64,
    },
    #[serde(rename = "point")]
    PointMass {
        value: f64,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
}

impl ArmDistribution {
    pub fn bernoulli(mean: f64) -> Result<Self, ModelError> {
        Self::Bernoulli { mean }.validated()
    }

    pub fn point(value: f64) -> Result<Self, ModelError> {
        Self::PointMass { value }.validated()
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self, ModelError> {
        Self::Gaussian { mean, variance }.validated()
    }

    /// Checks the family constraints; used after deserialization too.
    pub fn validated(self) -> Result<Self, ModelError> {
        match self {
            Self::Bernoulli { mean } if !(0.0..=1.0).contains(&mean) => Err(
                ModelError::InvalidArm(format!("Bernoulli mean {mean} outside [0, 1]")),
            ),
            Self::PointMass { value } if !(0.0..=1.0).contains(&value) => Err(
                ModelError::InvalidArm(format!("point mass {value} outside [0, 1]")),
            ),
            Self::Gaussian { mean, variance }
                if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() =>
            {
                Err(ModelError::InvalidArm(format!(
                    "Gaussian needs finite mean and positive variance, got ({mean}, {variance})"
                )))
            }
            ok => Ok(ok),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Bernoulli { mean } => mean,
            Self::PointMass { value } => value,
            Self::Gaussian { mean, .. } => mean,
        }
    }

    pub fn is_bounded01(&self) -> bool {
        !matches!(self, Self::Gaussian { .. })
    }

    /// Draws one reward.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_reward(self, rng)
    }
}

/// Draws one reward from `arm`.
pub fn sample_reward<R: Rng + ?Sized>(arm: &ArmDistribution, rng: &mut R) -> f64 {
    match *arm {
        ArmDistribution::Bernoulli { mean } => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
        ArmDistribution::PointMass { value } => value,
        ArmDistribution::Gaussian { mean, variance } => Normal::new(mean, variance.sqrt())
            .expect("validated variance")
            .sample(rng),
    }
}

/// Draws an arm index from `p` by inverse CDF over the prefix sums.
/// Arms with zero probability are never returned.
pub fn sample_arm<R: Rng + ?Sized>(p: &MixedAction, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (a, &pa) in p.probs().iter().enumerate() {
        if pa > 0.0 {
            cumulative += pa;
            last_positive = a;
            if u < cumulative {
                return a;
            }
        }
    }
    last_positive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    Bounded01,
    GaussianKnownVariance,
}

/// K arm distributions sharing one model family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditInstance {
    arms: Vec<ArmDistribution>,
    model: ModelTag,
}

impl BanditInstance {
    pub fn new(arms: Vec<ArmDistribution>) -> Result<Self, ModelError> {
        if arms.is_empty() {
            return Err(ModelError::NoArms);
        }
        let arms = arms
            .into_iter()
            .map(ArmDistribution::validated)
            .collect::<Result<Vec<_>, _>>()?;
        let bounded = arms.iter().filter(|a| a.is_bounded01()).count();
        let model = if bounded == arms.len() {
            ModelTag::Bounded01
        } else if bounded == 0 {
            ModelTag::GaussianKnownVariance
        } else {
            return Err(ModelError::MixedFamilies);
        };
        Ok(Self { arms, model })
    }

    pub fn arms(&self) -> &[ArmDistribution] {
        &self.arms
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn model(&self) -> ModelTag {
        self.model
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(ArmDistribution::mean).collect()
    }

    /// The same means with Gaussian arms of the given variance.
    pub fn gaussian_analog(&self, variance: f64) -> Result<Self, ModelError> {
        Self::new(
            self.means()
                .into_iter()
                .map(|m| ArmDistribution::gaussian(m, variance))
                .collect::<Result<_, _>>()?,
        )
    }
}

/// `(Ber(1/2 + α), Ber(1/3), Ber(1/2 − α))`.
pub fn make_alpha_instance(alpha: f64) -> Result<BanditInstance, ModelError> {
    if !(alpha.abs() < 1.0 / 6.0) {
        return Err(ModelError::AlphaOutOfRange(alpha));
    }
    BanditInstance::new(vec![
        ArmDistribution::bernoulli(0.5 + alpha)?,
        ArmDistribution::bernoulli(1.0 / 3.0)?,
        ArmDistribution::bernoulli(0.5 - alpha)?,
    ])
}

/// Bernoulli KL divergence `kl(p, q)` with `0 ln 0 = 0`; `+∞` when `q` sits
/// on the boundary and differs from `p`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    fn term(x: f64, y: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else if y == 0.0 {
            f64::INFINITY
        } else {
            x * (x / y).ln()
        }
    }
    if p == q {
        return 0.0;
    }
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// KL divergence between two Gaussians with common variance.
pub fn kl_gaussian(mu1: f64, mu2: f64, variance: f64) -> f64 {
    (mu1 - mu2).powi(2) / (2.0 * variance)
}

/// KL divergence from `arm` to a same-family distribution with mean
/// `alt_mean`.
pub fn kl_to_mean(arm: &ArmDistribution, alt_mean: f64) -> f64 {
    match *arm {
        ArmDistribution::Bernoulli { mean } => kl_bernoulli(mean, alt_mean),
        ArmDistribution::PointMass { value } => {
            if value == alt_mean {
                0.0
            } else {
                f64::INFINITY
            }
        }
        ArmDistribution::Gaussian { mean, variance } => kl_gaussian(mean, alt_mean, variance),
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed derived from the master seed and the run index.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    mix64(master_seed ^ mix64(run_index))
}

/// Stream identifiers used by the simulator.
pub const ARM_STREAM: u64 = 0;
pub const REWARD_STREAM: u64 = 1;

/// A ChaCha stream keyed by `(seed, stream_id)`; independent of any other
/// stream and of scheduling order.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
