use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::weights::GroupWeights;

/// Per-group draw counts for one epoch under a sampling distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResamplePlan {
    pub counts: Vec<u64>,
    pub target_total: u64,
    /// Groups asked for more examples than they hold draw with replacement.
    pub with_replacement: Vec<bool>,
}

impl ResamplePlan {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Draws the epoch's `(group, example index)` sequence and shuffles it.
    pub fn draw<R: Rng>(&self, group_sizes: &[u64], rng: &mut R) -> Result<Vec<(usize, usize)>> {
        check_len(self.counts.len(), group_sizes.len())?;
        let mut order = Vec::with_capacity(self.total() as usize);
        for (g, (&count, &size)) in self.counts.iter().zip(group_sizes).enumerate() {
            let (count, size) = (count as usize, size as usize);
            if count == 0 {
                continue;
            }
            if count > size {
                order.extend((0..count).map(|_| (g, rng.gen_range(0..size))));
            } else {
                order.extend(index::sample(rng, size, count).into_iter().map(|i| (g, i)));
            }
        }
        order.shuffle(rng);
        Ok(order)
    }
}

/// `counts_i = ceil(target_total * q_i)`, at least one for every group with
/// positive weight.
pub fn make_resample_plan(
    q: &GroupWeights,
    group_sizes: &[u64],
    target_total: u64,
) -> Result<ResamplePlan> {
    check_len(q.len(), group_sizes.len())?;
    if target_total < q.len() as u64 {
        return Err(Error::InvalidArgument(format!(
            "target_total {target_total} is smaller than the group count {}",
            q.len()
        )));
    }
    if let Some(i) = group_sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("group {i} is empty")));
    }
    let counts: Vec<u64> = q
        .as_slice()
        .iter()
        .map(|&qi| {
            let exact = target_total as f64 * qi;
            // 100 * 0.3 is 30.000000000000004 in binary floating point
            let c = (exact - 1e-9 * exact.max(1.0)).ceil().max(0.0) as u64;
            if qi > 0.0 {
                c.max(1)
            } else {
                c
            }
        })
        .collect();
    let with_replacement = counts.iter().zip(group_sizes).map(|(c, s)| c > s).collect();
    Ok(ResamplePlan {
        counts,
        target_total,
        with_replacement,
    })
}
