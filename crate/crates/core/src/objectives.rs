//! Training objectives over per-group losses: weighted (ERM / tempered) risk
//! and the robust risk `sup_{q in U} sum_i q_i (L_i - b_i)`.

use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};
use crate::solvers::{best_response, SolverConfig};
use crate::weights::{dot, GroupLosses, GroupWeights, UncertaintySet};

/// Per-group reference losses subtracted before the adversary maximizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    pub values: Vec<f64>,
    /// Free-form provenance label, e.g. the run that produced the values.
    pub source_tag: String,
}

impl Baselines {
    pub fn new(values: Vec<f64>, source_tag: impl Into<String>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("baseline {i} is {v}")));
        }
        Ok(Self {
            values,
            source_tag: source_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Parses `group_id<TAB>baseline_loss` lines and orders the values by
    /// `group_ids`. Every id must appear exactly once.
    pub fn parse_tsv(
        text: &str,
        group_ids: &[String],
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let mut values: Vec<Option<f64>> = vec![None; group_ids.len()];
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, value) = line.split_once('\t').ok_or_else(|| {
                Error::Parse(format!(
                    "baselines line {}: expected two tab-separated fields",
                    lineno + 1
                ))
            })?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("baselines line {}: {e}", lineno + 1)))?;
            let slot = group_ids.iter().position(|g| g == id).ok_or_else(|| {
                Error::Parse(format!(
                    "baselines line {}: unknown group `{id}`",
                    lineno + 1
                ))
            })?;
            if values[slot].replace(value).is_some() {
                return Err(Error::Parse(format!(
                    "baselines: group `{id}` listed twice"
                )));
            }
        }
        let values = values
            .into_iter()
            .zip(group_ids)
            .map(|(v, id)| {
                v.ok_or_else(|| Error::Parse(format!("baselines: missing group `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values, source_tag)
    }

    pub fn to_tsv(&self, group_ids: &[String]) -> Result<String> {
        check_len(self.values.len(), group_ids.len())?;
        let mut out = String::new();
        for (id, v) in group_ids.iter().zip(&self.values) {
            writeln!(out, "{id}\t{v}").expect("writing to a String");
        }
        Ok(out)
    }

    /// `losses - b`, entrywise.
    pub fn subtract_from(&self, losses: &GroupLosses) -> Result<GroupLosses> {
        check_len(losses.len(), self.values.len())?;
        GroupLosses::new(
            losses
                .as_slice()
                .iter()
                .zip(&self.values)
                .map(|(l, b)| l - b)
                .collect(),
        )
    }
}

/// `sum_i weights_i * losses_i`.
pub fn weighted_loss(losses: &GroupLosses, weights: &GroupWeights) -> Result<f64> {
    check_len(weights.len(), losses.len())?;
    Ok(dot(weights.as_slice(), losses.as_slice()))
}

/// Worst-case weighted loss over `set`, optionally on baselined losses.
pub fn robust_loss(
    losses: &GroupLosses,
    set: &UncertaintySet,
    baselines: Option<&Baselines>,
    cfg: &SolverConfig,
) -> Result<f64> {
    let shifted;
    let v = match baselines {
        Some(b) => {
            shifted = b.subtract_from(losses)?;
            &shifted
        }
        None => losses,
    };
    Ok(best_response(v, set, cfg)?.objective)
}
