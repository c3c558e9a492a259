use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    make_resample_plan, LossTracker, LrSchedule, ModelParams, TrainOutcome, TrajectoryRecord,
};
use crate::error::{check_len, Error, Result};
use crate::objectives::Baselines;
use crate::solvers::{best_response, SolverConfig};
use crate::tasks::{GroupedDataset, Model};
use crate::weights::{training_distribution, GroupLosses, GroupWeights, UncertaintySet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbrOptions {
    pub epochs: usize,
    pub ema_lambda: f64,
    pub seed: u64,
    /// Examples per resampled epoch; defaults to the dataset size.
    pub target_total: Option<u64>,
    /// Seed the loss averages with a full evaluation pass at the initial
    /// parameters instead of zeros.
    pub warm_start_ema: bool,
    pub solver: SolverConfig,
}

impl Default for IbrOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            ema_lambda: 0.1,
            seed: 0,
            target_total: None,
            warm_start_ema: false,
            solver: SolverConfig::default(),
        }
    }
}

/// Sets whose center must be the size-proportional distribution.
pub(super) fn check_center(set: &UncertaintySet, p_train: &GroupWeights) -> Result<()> {
    match set {
        UncertaintySet::ChiSquare { center, .. } | UncertaintySet::CVaR { center, .. } => {
            check_len(p_train.len(), center.len())?;
            let off = center
                .as_slice()
                .iter()
                .zip(p_train.as_slice())
                .any(|(c, p)| (c - p).abs() > 1e-9);
            if off {
                return Err(Error::Config(format!(
                    "{} set must be centered at the training distribution",
                    set.kind()
                )));
            }
            Ok(())
        }
        UncertaintySet::Singleton { center } => check_len(p_train.len(), center.len()),
        UncertaintySet::FullSimplex => Ok(()),
    }
}

pub(super) fn baselined(ema: &[f64], baselines: Option<&Baselines>) -> Result<GroupLosses> {
    let v = GroupLosses::new(ema.to_vec())?;
    match baselines {
        Some(b) => b.subtract_from(&v),
        None => Ok(v),
    }
}

/// Runs one stochastic-gradient step on a single example and feeds the
/// pre-update loss to the tracker.
pub(super) fn sgd_example_step(
    model: &Model,
    theta: &mut [f64],
    dataset: &GroupedDataset,
    (group, index): (usize, usize),
    lr: f64,
    step: u64,
    tracker: &mut LossTracker,
) -> Result<()> {
    let ex = &dataset.groups[group][index];
    let (loss, grad) = model
        .loss_grad(theta, ex)
        .map_err(|_| Error::Divergence { group, step })?;
    theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= lr * g);
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence { group, step });
    }
    tracker.update(group, loss)
}

/// Iterated best response.
///
/// `q` starts at the training distribution (or at the center of a singleton
/// set) and the loss averages at zero unless `warm_start_ema` is set. Each
/// epoch draws `ceil(target_total * q_i)` examples per group, runs one SGD
/// pass over the shuffled draw, then replaces `q` by the best response to
/// the baselined averages. The full-simplex set is rejected: its best
/// response spends whole epochs on a single group.
pub fn ibr_train(
    dataset: &GroupedDataset,
    model: &Model,
    set: &UncertaintySet,
    baselines: Option<&Baselines>,
    schedule: &LrSchedule,
    opts: &IbrOptions,
) -> Result<TrainOutcome> {
    if matches!(set, UncertaintySet::FullSimplex) {
        return Err(Error::Config(
            "iterated best response cannot use the full-simplex set (each epoch would train on one group)".into(),
        ));
    }
    dataset.validate()?;
    set.validate()?;
    schedule.validate()?;
    opts.solver.validate()?;
    if opts.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    let n = dataset.group_count();
    let sizes = dataset.sizes();
    let p_train = training_distribution(&sizes)?;
    check_center(set, &p_train)?;
    if let Some(b) = baselines {
        check_len(n, b.len())?;
    }
    let target_total = opts.target_total.unwrap_or_else(|| dataset.total());

    let mut theta = model.init_params(opts.seed).theta;
    let mut tracker = LossTracker::new(n, opts.ema_lambda)?;
    if opts.warm_start_ema {
        tracker.reset_to(dataset.group_losses(model, &theta)?.as_slice())?;
    }
    let mut q = match set {
        UncertaintySet::Singleton { center } => center.clone(),
        _ => p_train,
    };

    let mut step: u64 = 0;
    let mut trajectory = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let plan = make_resample_plan(&q, &sizes, target_total)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(epoch as u64);
        let order = plan.draw(&sizes, &mut rng)?;
        let mut lr = schedule.lr_at(step);
        for pick in order {
            step += 1;
            lr = schedule.lr_at(step);
            sgd_example_step(model, &mut theta, dataset, pick, lr, step, &mut tracker)?;
        }
        let true_losses = dataset.group_losses(model, &theta)?;
        log::debug!(
            "epoch {epoch}: step {step}, group losses {:?}",
            true_losses.as_slice()
        );
        let next = best_response(&baselined(tracker.ema(), baselines)?, set, &opts.solver)?;
        trajectory.push(TrajectoryRecord {
            epoch,
            step,
            q: q.as_slice().to_vec(),
            ema: tracker.ema().to_vec(),
            true_losses: true_losses.into_vec(),
            lr,
        });
        q = next.q;
    }

    Ok(TrainOutcome {
        params: ModelParams { theta },
        trajectory,
        final_q: q,
        steps: step,
    })
}

/// Fixed-weight training: every epoch resamples under `weights`.
pub fn erm_train(
    dataset: &GroupedDataset,
    model: &Model,
    weights: &GroupWeights,
    schedule: &LrSchedule,
    opts: &IbrOptions,
) -> Result<TrainOutcome> {
    ibr_train(
        dataset,
        model,
        &UncertaintySet::singleton(weights.clone()),
        None,
        schedule,
        opts,
    )
}
