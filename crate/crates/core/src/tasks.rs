//! Synthetic grouped learning problems with per-example losses and gradients.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::optim::ModelParams;
use crate::weights::GroupLosses;

/// Group proportions of an eight-group imbalanced benchmark
/// (rounded; they sum to 0.997).
pub const IMBALANCED_PROPORTIONS: [f64; 8] =
    [0.004, 0.006, 0.013, 0.081, 0.240, 0.274, 0.243, 0.136];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub group_ids: Vec<String>,
    pub groups: Vec<Vec<Example>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// Scalar parameter; example loss `(theta - y)^2` with `y = mu_i + noise * z`.
    QuadraticMeans {
        mus: Vec<f64>,
        noise: f64,
        sizes: Vec<u64>,
    },
    /// Shared linear model, squared error, per-group true weights.
    GroupedLinearRegression {
        dim: usize,
        true_weights: Vec<Vec<f64>>,
        noise: Vec<f64>,
        sizes: Vec<u64>,
    },
    /// Two Gaussian classes per group along a group-specific direction.
    /// `hidden_units > 0` swaps the linear classifier for a one-hidden-layer
    /// tanh network (non-convex).
    GroupedLogistic {
        dim: usize,
        separation: Vec<f64>,
        sizes: Vec<u64>,
        #[serde(default)]
        hidden_units: usize,
    },
}

impl TaskSpec {
    pub fn sizes(&self) -> &[u64] {
        match self {
            Self::QuadraticMeans { sizes, .. }
            | Self::GroupedLinearRegression { sizes, .. }
            | Self::GroupedLogistic { sizes, .. } => sizes,
        }
    }

    pub fn group_count(&self) -> usize {
        self.sizes().len()
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = self.sizes();
        if sizes.is_empty() {
            return Err(Error::Config("task needs at least one group".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(format!("task group {i} has size 0")));
        }
        let n = sizes.len();
        let same = |what: &str, len: usize| -> Result<()> {
            if len != n {
                return Err(Error::Config(format!(
                    "task.{what} has {len} entries for {n} groups"
                )));
            }
            Ok(())
        };
        match self {
            Self::QuadraticMeans { mus, noise, .. } => {
                same("mus", mus.len())?;
                if !(*noise >= 0.0 && noise.is_finite()) || mus.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Config(
                        "task.noise must be >= 0 and mus finite".into(),
                    ));
                }
            }
            Self::GroupedLinearRegression {
                dim,
                true_weights,
                noise,
                ..
            } => {
                if *dim == 0 {
                    return Err(Error::Config("task.dim must be positive".into()));
                }
                same("true_weights", true_weights.len())?;
                same("noise", noise.len())?;
                if true_weights.iter().any(|w| w.len() != *dim) {
                    return Err(Error::Config(
                        "task.true_weights rows must have length dim".into(),
                    ));
                }
                if noise.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                    return Err(Error::Config("task.noise entries must be >= 0".into()));
                }
            }
            Self::GroupedLogistic {
                dim, separation, ..
            } => {
                if *dim == 0 {
                    return Err(Error::Config("task.dim must be positive".into()));
                }
                same("separation", separation.len())?;
                if separation.iter().any(|s| !s.is_finite()) {
                    return Err(Error::Config(
                        "task.separation entries must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Model {
        match self {
            Self::QuadraticMeans { .. } => Model::Quadratic,
            Self::GroupedLinearRegression { dim, .. } => Model::Linear { dim: *dim },
            Self::GroupedLogistic {
                dim,
                hidden_units: 0,
                ..
            } => Model::Logistic { dim: *dim },
            Self::GroupedLogistic {
                dim, hidden_units, ..
            } => Model::TwoLayer {
                dim: *dim,
                hidden: *hidden_units,
            },
        }
    }
}

/// Rounds `proportions * total` to whole group sizes.
pub fn scaled_sizes(proportions: &[f64], total: u64) -> Vec<u64> {
    proportions
        .iter()
        .map(|p| ((p * total as f64).round() as u64).max(1))
        .collect()
}

/// Imbalanced linear regression: the four small groups share one ground
/// truth, the four large groups another, with small per-group offsets.
pub fn imbalanced_regression(total: u64) -> TaskSpec {
    let minority = [1.0, -1.0, 0.5, 0.0];
    let majority = [-0.5, 0.5, 0.0, 1.0];
    let true_weights = (0..IMBALANCED_PROPORTIONS.len())
        .map(|i| {
            let base = if IMBALANCED_PROPORTIONS[i] < 1.0 / IMBALANCED_PROPORTIONS.len() as f64 {
                minority
            } else {
                majority
            };
            let mut w = base.to_vec();
            w[2] += 0.05 * i as f64;
            w
        })
        .collect();
    TaskSpec::GroupedLinearRegression {
        dim: 4,
        true_weights,
        noise: vec![0.1; IMBALANCED_PROPORTIONS.len()],
        sizes: scaled_sizes(&IMBALANCED_PROPORTIONS, total),
    }
}

/// Deterministic dataset for `(spec, seed)`.
pub fn generate(spec: &TaskSpec, seed: u64) -> Result<GroupedDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = spec.sizes();
    let mut groups = Vec::with_capacity(sizes.len());
    for (g, &size) in sizes.iter().enumerate() {
        let size = size as usize;
        let examples: Vec<Example> = match spec {
            TaskSpec::QuadraticMeans { mus, noise, .. } => (0..size)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    Example {
                        features: Vec::new(),
                        target: mus[g] + noise * z,
                    }
                })
                .collect(),
            TaskSpec::GroupedLinearRegression {
                dim,
                true_weights,
                noise,
                ..
            } => (0..size)
                .map(|_| {
                    let x = normal_vec(&mut rng, *dim);
                    let z: f64 = rng.sample(StandardNormal);
                    let target = dot(&true_weights[g], &x) + noise[g] * z;
                    Example {
                        features: x,
                        target,
                    }
                })
                .collect(),
            TaskSpec::GroupedLogistic {
                dim, separation, ..
            } => {
                // group direction: first axis tilted by a random perturbation
                let mut dir = normal_vec(&mut rng, *dim);
                dir.iter_mut().for_each(|d| *d *= 0.5);
                dir[0] += 1.0;
                let norm = dot(&dir, &dir).sqrt();
                dir.iter_mut().for_each(|d| *d /= norm);
                (0..size)
                    .map(|_| {
                        let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        let mut x = normal_vec(&mut rng, *dim);
                        x.iter_mut()
                            .zip(&dir)
                            .for_each(|(xi, di)| *xi += y * separation[g] * di);
                        Example {
                            features: x,
                            target: y,
                        }
                    })
                    .collect()
            }
        };
        groups.push(examples);
    }
    Ok(GroupedDataset {
        group_ids: (0..sizes.len()).map(|i| format!("g{i}")).collect(),
        groups,
    })
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The per-example loss a task trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Quadratic,
    Linear {
        dim: usize,
    },
    Logistic {
        dim: usize,
    },
    /// `f(x) = sum_k a_k tanh(W_k . x + c_k)`, parameters laid out as
    /// `[W (hidden x dim, row-major), c (hidden), a (hidden)]`.
    TwoLayer {
        dim: usize,
        hidden: usize,
    },
}

impl Model {
    pub fn param_dim(&self) -> usize {
        match *self {
            Self::Quadratic => 1,
            Self::Linear { dim } | Self::Logistic { dim } => dim,
            Self::TwoLayer { dim, hidden } => hidden * (dim + 2),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match *self {
            Self::Quadratic => 0,
            Self::Linear { dim } | Self::Logistic { dim } | Self::TwoLayer { dim, .. } => dim,
        }
    }

    /// Starting point: zeros for the convex models, small seeded noise for
    /// the network so hidden units are not symmetric.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        match *self {
            Self::TwoLayer { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1417);
                let theta = (0..self.param_dim())
                    .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                ModelParams { theta }
            }
            _ => ModelParams {
                theta: vec![0.0; self.param_dim()],
            },
        }
    }

    pub fn loss(&self, theta: &[f64], ex: &Example) -> Result<f64> {
        Ok(self.loss_grad(theta, ex)?.0)
    }

    /// Loss of one example and its gradient with respect to `theta`.
    pub fn loss_grad(&self, theta: &[f64], ex: &Example) -> Result<(f64, Vec<f64>)> {
        check_len(self.param_dim(), theta.len())?;
        check_len(self.feature_dim(), ex.features.len())?;
        let x = &ex.features;
        let y = ex.target;
        let (loss, grad) = match *self {
            Self::Quadratic => {
                let r = theta[0] - y;
                (r * r, vec![2.0 * r])
            }
            Self::Linear { .. } => {
                let r = dot(theta, x) - y;
                (r * r, x.iter().map(|xi| 2.0 * r * xi).collect())
            }
            Self::Logistic { .. } => {
                let margin = y * dot(theta, x);
                let s = -y * sigmoid(-margin);
                (softplus(-margin), x.iter().map(|xi| s * xi).collect())
            }
            Self::TwoLayer { dim, hidden } => {
                let (w, rest) = theta.split_at(hidden * dim);
                let (c, a) = rest.split_at(hidden);
                let h: Vec<f64> = (0..hidden)
                    .map(|k| (dot(&w[k * dim..(k + 1) * dim], x) + c[k]).tanh())
                    .collect();
                let f = dot(a, &h);
                let margin = y * f;
                let df = -y * sigmoid(-margin);
                let mut grad = vec![0.0; theta.len()];
                for k in 0..hidden {
                    let dpre = df * a[k] * (1.0 - h[k] * h[k]);
                    for (j, xj) in x.iter().enumerate() {
                        grad[k * dim + j] = dpre * xj;
                    }
                    grad[hidden * dim + k] = dpre;
                    grad[hidden * dim + hidden + k] = df * h[k];
                }
                (softplus(-margin), grad)
            }
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("loss {loss} or its gradient")));
        }
        Ok((loss, grad))
    }
}

impl GroupedDataset {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.groups.iter().map(|g| g.len() as u64).collect()
    }

    pub fn total(&self) -> u64 {
        self.sizes().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidArgument("dataset has no groups".into()));
        }
        check_len(self.groups.len(), self.group_ids.len())?;
        if let Some(i) = self.groups.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("group {i} is empty")));
        }
        let dim = self.groups[0][0].features.len();
        if self
            .groups
            .iter()
            .flatten()
            .any(|e| e.features.len() != dim)
        {
            return Err(Error::InvalidArgument(
                "feature dimension differs between examples".into(),
            ));
        }
        Ok(())
    }

    /// Exact per-group average loss at `theta`.
    pub fn group_losses(&self, model: &Model, theta: &[f64]) -> Result<GroupLosses> {
        let mut out = Vec::with_capacity(self.groups.len());
        for group in &self.groups {
            // running mean: exact when every example has the same loss
            let mut mean = 0.0;
            for (k, ex) in group.iter().enumerate() {
                mean += (model.loss(theta, ex)? - mean) / (k + 1) as f64;
            }
            out.push(mean);
        }
        GroupLosses::new(out)
    }

    /// Writes `group_id,x0,...,x{d-1},target` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.validate()?;
        let dim = self.groups[0][0].features.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["group_id".to_string()];
        header.extend((0..dim).map(|j| format!("x{j}")));
        header.push("target".into());
        w.write_record(&header)?;
        for (id, group) in self.group_ids.iter().zip(&self.groups) {
            for ex in group {
                let mut rec = vec![id.clone()];
                rec.extend(ex.features.iter().map(|x| x.to_string()));
                rec.push(ex.target.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`Self::write_csv`]; groups keep first-seen order.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let cols = r.headers()?.len();
        if cols < 2 {
            return Err(Error::Parse(
                "dataset csv needs group_id and target columns".into(),
            ));
        }
        let mut group_ids: Vec<String> = Vec::new();
        let mut groups: Vec<Vec<Example>> = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("dataset row {}: column {j}: {e}", row + 1)))
            };
            let features = (1..cols - 1).map(num).collect::<Result<Vec<_>>>()?;
            let target = num(cols - 1)?;
            let id = rec[0].to_string();
            let slot = match group_ids.iter().position(|g| *g == id) {
                Some(s) => s,
                None => {
                    group_ids.push(id);
                    groups.push(Vec::new());
                    groups.len() - 1
                }
            };
            groups[slot].push(Example { features, target });
        }
        let ds = Self { group_ids, groups };
        ds.validate()?;
        Ok(ds)
    }
}
