use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning-rate schedule indexed by the global optimizer step (first step is 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        lr: f64,
    },
    /// Linear warmup to `peak`, then `peak * sqrt(warmup_steps / step)`.
    InverseSqrt {
        peak: f64,
        warmup_steps: u64,
    },
    /// Linear warmup to `base`, then `base * factor^floor((step - warmup) / decay_every)`.
    StepDecay {
        base: f64,
        warmup_steps: u64,
        decay_every: u64,
        factor: f64,
    },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("schedule: {msg}")));
        match *self {
            Self::Constant { lr } if !(lr > 0.0 && lr.is_finite()) => bad("lr must be positive"),
            Self::InverseSqrt { peak, .. } if !(peak > 0.0 && peak.is_finite()) => {
                bad("peak must be positive")
            }
            Self::InverseSqrt {
                warmup_steps: 0, ..
            } => bad("warmup_steps must be at least 1"),
            Self::StepDecay { base, .. } if !(base > 0.0 && base.is_finite()) => {
                bad("base must be positive")
            }
            Self::StepDecay { decay_every: 0, .. } => bad("decay_every must be at least 1"),
            Self::StepDecay { factor, .. } if !(factor > 0.0 && factor < 1.0) => {
                bad("factor must be in (0, 1)")
            }
            _ => Ok(()),
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match *self {
            Self::Constant { lr } => lr,
            Self::InverseSqrt { peak, warmup_steps } => {
                if step < warmup_steps {
                    peak * step as f64 / warmup_steps as f64
                } else {
                    peak * (warmup_steps as f64 / step as f64).sqrt()
                }
            }
            Self::StepDecay {
                base,
                warmup_steps,
                decay_every,
                factor,
            } => {
                if step < warmup_steps {
                    base * step as f64 / warmup_steps as f64
                } else {
                    let decays = (step - warmup_steps) / decay_every;
                    base * factor.powi(decays.min(i32::MAX as u64) as i32)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_values() {
        let s = LrSchedule::InverseSqrt {
            peak: 1.0,
            warmup_steps: 100,
        };
        assert!((s.lr_at(100) - 1.0).abs() < 1e-9);
        assert!((s.lr_at(400) - 0.5).abs() < 1e-9);
        assert!((s.lr_at(50) - 0.5).abs() < 1e-9);
        let s = LrSchedule::StepDecay {
            base: 1.0,
            warmup_steps: 0,
            decay_every: 10,
            factor: 0.5,
        };
        assert!((s.lr_at(25) - 0.25).abs() < 1e-9);
        assert_eq!(s.lr_at(9), 1.0);
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::Constant { lr: 0.0 }.validate().is_err());
        assert!(LrSchedule::InverseSqrt {
            peak: 1.0,
            warmup_steps: 0
        }
        .validate()
        .is_err());
        assert!(LrSchedule::StepDecay {
            base: 1.0,
            warmup_steps: 0,
            decay_every: 10,
            factor: 1.0
        }
        .validate()
        .is_err());
    }
}
