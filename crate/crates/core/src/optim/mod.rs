//! Min-max training loops over grouped data.
//!
//! [`ibr_train`] alternates one epoch of SGD on data resampled under the
//! current group weights with an exact best-response update of those weights
//! from EMA-tracked, baselined group losses. [`primal_dual_train`] instead
//! takes a stochastic descent step on the model and a (mirror) ascent step on
//! the weights at every optimizer step.

mod ema;
mod ibr;
mod primal_dual;
mod resample;
mod schedule;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use ema::LossTracker;
pub use ibr::{erm_train, ibr_train, IbrOptions};
pub use primal_dual::{
    exponentiated_gradient_step, primal_dual_train, GradientMode, PrimalDualOptions,
};
pub use resample::{make_resample_plan, ResamplePlan};
pub use schedule::LrSchedule;

use crate::error::Result;
use crate::weights::GroupWeights;

/// Dense model parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
}

/// State snapshot taken at the end of an epoch (or recording interval).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub epoch: usize,
    /// Global optimizer step count at the time of the snapshot.
    pub step: u64,
    /// Group weights in force during the interval.
    pub q: Vec<f64>,
    pub ema: Vec<f64>,
    /// Exact per-group average loss at the snapshot parameters.
    pub true_losses: Vec<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Weights after the last update.
    pub final_q: GroupWeights,
    pub steps: u64,
}

pub const TRAJECTORY_HEADER: &str = "epoch,step,group,q,ema_loss,true_group_loss,lr";

/// Formats `x` with nine significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=14).contains(&exp) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.9999999999 -> 10.00000000)
    if decimals > 0
        && s.parse::<f64>()
            .is_ok_and(|r| r.abs() >= 10f64.powi(exp + 1))
    {
        let decimals = decimals - 1;
        return format!("{x:.decimals$}");
    }
    s
}

/// Writes one row per (record, group) under [`TRAJECTORY_HEADER`].
pub fn write_trajectory<W: Write>(
    mut out: W,
    records: &[TrajectoryRecord],
    group_ids: &[String],
) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in records {
        for (g, id) in group_ids.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.step,
                id,
                format_sig9(r.q[g]),
                format_sig9(r.ema[g]),
                format_sig9(r.true_losses[g]),
                format_sig9(r.lr)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(0.6443375673), "0.644337567");
        assert_eq!(format_sig9(-123.456789012), "-123.456789");
        assert_eq!(format_sig9(9.9999999999), "10.0000000");
        assert_eq!(format_sig9(1e-9), "1.00000000e-9");
        assert_eq!(format_sig9(2.5e20), "2.50000000e20");
    }

    #[test]
    fn trajectory_rows() {
        let rec = TrajectoryRecord {
            epoch: 0,
            step: 3,
            q: vec![0.5, 0.5],
            ema: vec![0.1, 0.2],
            true_losses: vec![1.0, 2.0],
            lr: 0.01,
        };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[rec], &["a".into(), "b".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(
            lines[1],
            "0,3,a,0.500000000,0.100000000,1.00000000,0.0100000000"
        );
        assert_eq!(lines.len(), 3);
    }
}
