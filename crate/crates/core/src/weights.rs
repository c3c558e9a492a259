//! Group weight vectors, per-group losses, uncertainty-set descriptions and
//! the static sampling distributions built from group sizes.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Sums within this distance of one are accepted as-is.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Sums within this distance of one are renormalized; anything further is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A point on the probability simplex over `N` groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GroupWeights(Vec<f64>);

impl GroupWeights {
    /// Validates `weights` as a distribution.
    ///
    /// Entries must be finite and non-negative. A total within
    /// [`SIMPLEX_TOLERANCE`] of one is kept verbatim, a total within
    /// [`RENORMALIZE_TOLERANCE`] is rescaled, anything else is rejected.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidWeights(format!("entry {i} is {w}")));
        }
        let total: f64 = weights.iter().sum();
        let drift = (total - 1.0).abs();
        if drift <= SIMPLEX_TOLERANCE {
            Ok(Self(weights))
        } else if drift <= RENORMALIZE_TOLERANCE {
            Ok(Self(weights.into_iter().map(|w| w / total).collect()))
        } else {
            Err(Error::InvalidWeights(format!("entries sum to {total}")))
        }
    }

    /// Normalizes an arbitrary non-negative vector with a positive total.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidWeights(format!(
                "cannot normalize total {total}"
            )));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidWeights("zero groups".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    /// Point mass on group `k`.
    pub fn vertex(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::InvalidArgument(format!(
                "vertex {k} out of range for {n} groups"
            )));
        }
        let mut w = vec![0.0; n];
        w[k] = 1.0;
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<f64>> for GroupWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GroupWeights> for Vec<f64> {
    fn from(w: GroupWeights) -> Self {
        w.0
    }
}

impl std::ops::Index<usize> for GroupWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One average loss per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GroupLosses(Vec<f64>);

impl GroupLosses {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty loss vector".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("loss {i} is {v}")));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<Vec<f64>> for GroupLosses {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GroupLosses> for Vec<f64> {
    fn from(l: GroupLosses) -> Self {
        l.0
    }
}

/// The feasible set the adversary maximizes group weights over.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySet {
    /// `{center}`: plain (possibly tempered) weighted risk.
    Singleton { center: GroupWeights },
    /// The whole simplex: worst-group risk.
    FullSimplex,
    /// `{q : q_i <= center_i / alpha}`: average of the worst `alpha` fraction.
    CVaR { alpha: f64, center: GroupWeights },
    /// `{q : chi2(q, center) <= rho}`.
    ChiSquare { rho: f64, center: GroupWeights },
}

impl UncertaintySet {
    pub fn singleton(center: GroupWeights) -> Self {
        Self::Singleton { center }
    }

    pub fn cvar(alpha: f64, center: GroupWeights) -> Result<Self> {
        let set = Self::CVaR { alpha, center };
        set.validate()?;
        Ok(set)
    }

    pub fn chi_square(rho: f64, center: GroupWeights) -> Result<Self> {
        let set = Self::ChiSquare { rho, center };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Singleton { .. } | Self::FullSimplex => Ok(()),
            Self::CVaR { alpha, .. } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "CVaR alpha {alpha} not in (0, 1]"
                    )));
                }
                Ok(())
            }
            Self::ChiSquare { rho, center } => {
                if !(*rho > 0.0 && rho.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "chi-square rho {rho} must be positive"
                    )));
                }
                if center.min() <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "chi-square center must be strictly positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Number of groups the set is defined over; `None` for the full simplex.
    pub fn group_count(&self) -> Option<usize> {
        self.center().map(GroupWeights::len)
    }

    pub fn center(&self) -> Option<&GroupWeights> {
        match self {
            Self::Singleton { center }
            | Self::CVaR { center, .. }
            | Self::ChiSquare { center, .. } => Some(center),
            Self::FullSimplex => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Singleton { .. } => "singleton",
            Self::FullSimplex => "full_simplex",
            Self::CVaR { .. } => "cvar",
            Self::ChiSquare { .. } => "chi_square",
        }
    }

    pub(crate) fn check_groups(&self, n: usize) -> Result<()> {
        match self.group_count() {
            Some(m) => check_len(m, n),
            None => Ok(()),
        }
    }
}

/// Inner product of two equally long slices, summed in index order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `0.5 * sum_i p_i (q_i / p_i - 1)^2`.
///
/// Every entry of `p` must be strictly positive.
pub fn chi_square_divergence(q: &GroupWeights, p: &GroupWeights) -> Result<f64> {
    check_len(p.len(), q.len())?;
    chi_square_raw(q.as_slice(), p.as_slice())
}

/// Same as [`chi_square_divergence`] for vectors that are not necessarily on
/// the simplex (intermediate iterates of the solvers).
pub(crate) fn chi_square_raw(q: &[f64], p: &[f64]) -> Result<f64> {
    check_len(p.len(), q.len())?;
    if let Some(i) = p.iter().position(|&pi| pi <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chi-square reference has zero mass on group {i}"
        )));
    }
    Ok(chi_square_unchecked(q, p))
}

pub(crate) fn chi_square_unchecked(q: &[f64], p: &[f64]) -> f64 {
    0.5 * q
        .iter()
        .zip(p)
        .map(|(qi, pi)| {
            let r = qi / pi - 1.0;
            pi * r * r
        })
        .sum::<f64>()
}

/// Sampling distribution proportional to `size_i^(1/tau)`.
pub fn temperature_distribution(sizes: &[u64], tau: f64) -> Result<GroupWeights> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no group sizes".into()));
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("group {i} has size 0")));
    }
    if !(tau > 0.0 && !tau.is_nan()) {
        return Err(Error::InvalidArgument(format!(
            "temperature {tau} must be positive"
        )));
    }
    // log domain keeps large sizes with small tau from overflowing
    let logs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln() / tau).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    GroupWeights::from_unnormalized(raw)
}

/// Size-proportional distribution `|D_i| / sum_j |D_j|`.
pub fn training_distribution(sizes: &[u64]) -> Result<GroupWeights> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no group sizes".into()));
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("group {i} has size 0")));
    }
    let total: u64 = sizes.iter().sum();
    GroupWeights::new(sizes.iter().map(|&s| s as f64 / total as f64).collect())
}
