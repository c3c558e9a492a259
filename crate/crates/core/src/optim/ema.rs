use crate::error::{Error, Result};

/// Per-group exponential moving average of observed example losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTracker {
    ema: Vec<f64>,
    lambda: f64,
    counts: Vec<u64>,
}

impl LossTracker {
    /// All averages start at zero.
    pub fn new(groups: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "EMA lambda {lambda} not in (0, 1]"
            )));
        }
        Ok(Self {
            ema: vec![0.0; groups],
            lambda,
            counts: vec![0; groups],
        })
    }

    /// `ema[group] <- lambda * loss + (1 - lambda) * ema[group]`.
    pub fn update(&mut self, group: usize, loss: f64) -> Result<()> {
        if group >= self.ema.len() {
            return Err(Error::InvalidArgument(format!(
                "group {group} out of range for {} groups",
                self.ema.len()
            )));
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "observed loss {loss} for group {group}"
            )));
        }
        let slot = &mut self.ema[group];
        *slot = self.lambda * loss + (1.0 - self.lambda) * *slot;
        self.counts[group] += 1;
        Ok(())
    }

    /// Replaces the averages wholesale, e.g. with a full-pass evaluation.
    pub fn reset_to(&mut self, values: &[f64]) -> Result<()> {
        crate::error::check_len(self.ema.len(), values.len())?;
        self.ema.copy_from_slice(values);
        Ok(())
    }

    pub fn ema(&self) -> &[f64] {
        &self.ema
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}
