use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ibr::{baselined, check_center};
use super::{LossTracker, LrSchedule, ModelParams, TrainOutcome, TrajectoryRecord};
use crate::error::{check_len, Error, Result};
use crate::objectives::Baselines;
use crate::solvers::{best_response, project_chi_square, SolverConfig};
use crate::tasks::{GroupedDataset, Model};
use crate::weights::{training_distribution, GroupWeights, UncertaintySet};

/// Where mini-batch groups are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum GradientMode {
    /// Draw groups from the current `q`; the weight gradient carries `1 / q_i`.
    SampleFromQ,
    /// Draw groups from a fixed `p0` and importance-weight the model gradient
    /// by `q_i / p0_i`; the weight gradient carries `1 / p0_i`.
    ImportanceWeight(GroupWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualOptions {
    pub steps: u64,
    /// Ascent step size on the group weights.
    pub q_step: f64,
    pub batch_size: usize,
    pub ema_lambda: f64,
    pub seed: u64,
    /// Snapshot cadence in steps; defaults to the dataset size.
    pub record_every: Option<u64>,
    pub solver: SolverConfig,
}

impl Default for PrimalDualOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            q_step: 0.01,
            batch_size: 1,
            ema_lambda: 0.1,
            seed: 0,
            record_every: None,
            solver: SolverConfig::default(),
        }
    }
}

/// Mirror ascent step under the negative entropy: `q_i ∝ q_i exp(step * g_i)`.
pub fn exponentiated_gradient_step(
    q: &GroupWeights,
    grad: &[f64],
    step: f64,
) -> Result<GroupWeights> {
    check_len(q.len(), grad.len())?;
    let logits: Vec<f64> = q
        .as_slice()
        .iter()
        .zip(grad)
        .map(|(qi, gi)| qi.ln() + step * gi)
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NonFinite("exponentiated-gradient logits".into()));
    }
    GroupWeights::from_unnormalized(logits.iter().map(|l| (l - top).exp()).collect())
}

fn sample_group<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Stochastic primal-dual training: SGD on the model, and per set an
/// exponentiated-gradient step (full simplex), a projected gradient step
/// (chi-square ball), or a best response to the loss averages (CVaR).
pub fn primal_dual_train(
    dataset: &GroupedDataset,
    model: &Model,
    set: &UncertaintySet,
    baselines: Option<&Baselines>,
    schedule: &LrSchedule,
    mode: &GradientMode,
    opts: &PrimalDualOptions,
) -> Result<TrainOutcome> {
    dataset.validate()?;
    set.validate()?;
    schedule.validate()?;
    opts.solver.validate()?;
    if opts.steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    if !(opts.q_step > 0.0 && opts.q_step.is_finite()) {
        return Err(Error::Config(format!(
            "q_step {} must be positive",
            opts.q_step
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let n = dataset.group_count();
    let sizes = dataset.sizes();
    let p_train = training_distribution(&sizes)?;
    check_center(set, &p_train)?;
    if let Some(b) = baselines {
        check_len(n, b.len())?;
    }
    if let GradientMode::ImportanceWeight(p0) = mode {
        check_len(n, p0.len())?;
        if p0.min() <= 0.0 {
            return Err(Error::Config(
                "importance-weighting distribution must be strictly positive".into(),
            ));
        }
    }
    let record_every = opts.record_every.unwrap_or_else(|| dataset.total()).max(1);
    let zero_baseline = vec![0.0; n];
    let b = baselines.map_or(zero_baseline.as_slice(), |b| b.values.as_slice());

    let mut theta = model.init_params(opts.seed).theta;
    let mut tracker = LossTracker::new(n, opts.ema_lambda)?;
    let mut q = match set {
        UncertaintySet::Singleton { center } => center.clone(),
        _ => p_train,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trajectory = Vec::new();
    let mut q_since_record = q.clone();
    let batch = opts.batch_size as f64;

    for step in 1..=opts.steps {
        let lr = schedule.lr_at(step);
        let mut g_theta = vec![0.0; theta.len()];
        let mut g_q = vec![0.0; n];
        for _ in 0..opts.batch_size {
            let group = match mode {
                GradientMode::SampleFromQ => sample_group(q.as_slice(), &mut rng),
                GradientMode::ImportanceWeight(p0) => sample_group(p0.as_slice(), &mut rng),
            };
            let index = rng.gen_range(0..dataset.groups[group].len());
            let (loss, grad) = model
                .loss_grad(&theta, &dataset.groups[group][index])
                .map_err(|_| Error::Divergence { group, step })?;
            let (theta_scale, draw_prob) = match mode {
                GradientMode::SampleFromQ => (1.0, q[group]),
                GradientMode::ImportanceWeight(p0) => (q[group] / p0[group], p0[group]),
            };
            g_theta
                .iter_mut()
                .zip(&grad)
                .for_each(|(acc, g)| *acc += theta_scale * g / batch);
            g_q[group] += (loss - b[group]) / (draw_prob * batch);
            tracker.update(group, loss)?;
        }

        theta
            .iter_mut()
            .zip(&g_theta)
            .for_each(|(t, g)| *t -= lr * g);
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence {
                group: crate::solvers::argmax(&g_q),
                step,
            });
        }

        q = match set {
            UncertaintySet::Singleton { .. } => q,
            UncertaintySet::FullSimplex => exponentiated_gradient_step(&q, &g_q, opts.q_step)?,
            UncertaintySet::ChiSquare { rho, center } => {
                let ascent: Vec<f64> = q
                    .as_slice()
                    .iter()
                    .zip(&g_q)
                    .map(|(qi, gi)| qi + opts.q_step * gi)
                    .collect();
                project_chi_square(&ascent, *rho, center, &opts.solver)?
            }
            UncertaintySet::CVaR { .. } => {
                best_response(&baselined(tracker.ema(), baselines)?, set, &opts.solver)?.q
            }
        };

        if step % record_every == 0 || step == opts.steps {
            let true_losses = dataset.group_losses(model, &theta)?;
            trajectory.push(TrajectoryRecord {
                epoch: ((step - 1) / record_every) as usize,
                step,
                q: q_since_record.as_slice().to_vec(),
                ema: tracker.ema().to_vec(),
                true_losses: true_losses.into_vec(),
                lr,
            });
            q_since_record = q.clone();
        }
    }

    Ok(TrainOutcome {
        params: ModelParams { theta },
        trajectory,
        final_q: q,
        steps: opts.steps,
    })
}
