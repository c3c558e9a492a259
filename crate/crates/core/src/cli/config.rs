use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::LrSchedule;
use crate::solvers::SolverConfig;
use crate::tasks::TaskSpec;
use crate::weights::{
    temperature_distribution, training_distribution, GroupWeights, UncertaintySet,
};

fn default_lambda() -> f64 {
    0.1
}

fn default_batch() -> usize {
    1
}

/// One experiment, as read from a JSON document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub method: MethodConfig,
    pub schedule: LrSchedule,
    /// Epoch count for `erm` and `ibr`.
    #[serde(default)]
    pub epochs: Option<usize>,
    /// Optimizer steps for `primal_dual`.
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default = "default_lambda")]
    pub ema_lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Examples per resampled epoch; defaults to the dataset size.
    #[serde(default)]
    pub target_total: Option<u64>,
    #[serde(default)]
    pub warm_start_ema: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    /// Fixed sampling proportional to `size^(1/tau)`.
    Erm { tau: f64 },
    Ibr {
        set: SetConfig,
        #[serde(default)]
        baselines_path: Option<PathBuf>,
    },
    PrimalDual {
        set: SetConfig,
        gradient_mode: GradientModeConfig,
        q_step: f64,
        #[serde(default)]
        baselines_path: Option<PathBuf>,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default)]
        record_every: Option<u64>,
    },
}

/// Uncertainty set; centers are always derived from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    /// `{p_tau}`; `tau = 1` is the training distribution.
    Singleton {
        #[serde(default = "one")]
        tau: f64,
    },
    FullSimplex,
    Cvar {
        alpha: f64,
    },
    ChiSquare {
        rho: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientModeConfig {
    SampleFromQ,
    /// Draw groups from `p0` (default: the training distribution).
    ImportanceWeight {
        #[serde(default)]
        p0: Option<Vec<f64>>,
    },
}

impl SetConfig {
    pub fn resolve(&self, sizes: &[u64]) -> Result<UncertaintySet> {
        let p_train = training_distribution(sizes)?;
        let set = match *self {
            Self::Singleton { tau } => {
                UncertaintySet::singleton(temperature_distribution(sizes, tau)?)
            }
            Self::FullSimplex => UncertaintySet::FullSimplex,
            Self::Cvar { alpha } => UncertaintySet::cvar(alpha, p_train)?,
            Self::ChiSquare { rho } => UncertaintySet::chi_square(rho, p_train)?,
        };
        Ok(set)
    }

    pub fn label(&self) -> String {
        match self {
            Self::Singleton { tau } => format!("singleton_tau{tau}"),
            Self::FullSimplex => "full_simplex".into(),
            Self::Cvar { alpha } => format!("cvar_alpha{alpha}"),
            Self::ChiSquare { rho } => format!("chi_square_rho{rho}"),
        }
    }
}

impl MethodConfig {
    pub fn label(&self) -> String {
        match self {
            Self::Erm { tau } => format!("erm_tau{tau}"),
            Self::Ibr { set, .. } => format!("ibr_{}", set.label()),
            Self::PrimalDual {
                set, gradient_mode, ..
            } => {
                let mode = match gradient_mode {
                    GradientModeConfig::SampleFromQ => "q",
                    GradientModeConfig::ImportanceWeight { .. } => "iw",
                };
                format!("pd_{mode}_{}", set.label())
            }
        }
    }

    pub fn baselines_path(&self) -> Option<&Path> {
        match self {
            Self::Erm { .. } => None,
            Self::Ibr { baselines_path, .. } | Self::PrimalDual { baselines_path, .. } => {
                baselines_path.as_deref()
            }
        }
    }

    /// The set the run's robust loss is reported under.
    pub fn evaluation_set(&self, sizes: &[u64]) -> Result<UncertaintySet> {
        match self {
            Self::Erm { tau } => Ok(UncertaintySet::singleton(temperature_distribution(
                sizes, *tau,
            )?)),
            Self::Ibr { set, .. } | Self::PrimalDual { set, .. } => set.resolve(sizes),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every cross-field rule; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.schedule.validate()?;
        self.solver
            .validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        if !(self.ema_lambda > 0.0 && self.ema_lambda <= 1.0) {
            return Err(Error::Config(format!(
                "ema_lambda {} not in (0, 1]",
                self.ema_lambda
            )));
        }
        let sizes = self.task.sizes();
        let n = sizes.len();
        if let Some(t) = self.target_total {
            if t < n as u64 {
                return Err(Error::Config(format!(
                    "target_total {t} is below the group count {n}"
                )));
            }
        }
        match &self.method {
            MethodConfig::Erm { tau } => {
                if tau.is_nan() || *tau <= 0.0 {
                    return Err(Error::Config(format!("method.tau {tau} must be positive")));
                }
                self.require_epochs()?;
            }
            MethodConfig::Ibr { set, .. } => {
                if matches!(set, SetConfig::FullSimplex) {
                    return Err(Error::Config(
                        "method.set: iterated best response is incompatible with full_simplex \
                         (every epoch would train on a single group)"
                            .into(),
                    ));
                }
                set.resolve(sizes)
                    .map_err(|e| Error::Config(format!("method.set: {e}")))?;
                self.require_epochs()?;
            }
            MethodConfig::PrimalDual {
                set,
                gradient_mode,
                q_step,
                batch_size,
                record_every,
                ..
            } => {
                set.resolve(sizes)
                    .map_err(|e| Error::Config(format!("method.set: {e}")))?;
                if !(*q_step > 0.0 && q_step.is_finite()) {
                    return Err(Error::Config(format!(
                        "method.q_step {q_step} must be positive"
                    )));
                }
                if *batch_size == 0 {
                    return Err(Error::Config("method.batch_size must be at least 1".into()));
                }
                if *record_every == Some(0) {
                    return Err(Error::Config(
                        "method.record_every must be at least 1".into(),
                    ));
                }
                if let GradientModeConfig::ImportanceWeight { p0: Some(p0) } = gradient_mode {
                    let p0 = GroupWeights::new(p0.clone())
                        .map_err(|e| Error::Config(format!("method.gradient_mode.p0: {e}")))?;
                    if p0.len() != n || p0.min() <= 0.0 {
                        return Err(Error::Config(format!(
                            "method.gradient_mode.p0 must have {n} strictly positive entries"
                        )));
                    }
                }
                match self.steps {
                    Some(s) if s > 0 => {}
                    _ => {
                        return Err(Error::Config(
                            "steps must be set to a positive value for primal_dual".into(),
                        ))
                    }
                }
            }
        }
        if let Some(path) = self.method.baselines_path() {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "method.baselines_path: {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    fn require_epochs(&self) -> Result<()> {
        match self.epochs {
            Some(e) if e > 0 => Ok(()),
            _ => Err(Error::Config(format!(
                "epochs must be set to a positive value for {}",
                self.method.label()
            ))),
        }
    }
}

/// A method list evaluated on one task and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Shared settings; its `method` is replaced by each entry of `methods`.
    pub base: ExperimentConfig,
    pub methods: Vec<MethodConfig>,
}

impl CompareConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid compare config: {e}")))
    }

    pub fn experiments(&self) -> Vec<ExperimentConfig> {
        self.methods
            .iter()
            .map(|m| ExperimentConfig {
                method: m.clone(),
                ..self.base.clone()
            })
            .collect()
    }
}
