//! Negative sampling for link prediction.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::graph::{LabelId, LocalEdge};

/// How training negatives are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Uniform over non-edges of the label, self-pairs excluded.
    #[default]
    Cns,
    /// One endpoint of each positive replaced by a uniform node.
    Corrupt,
}

/// Ordered pair key; unordered (`min, max`) when the graph is symmetric.
pub fn pair_key(src: usize, dst: usize, symmetric: bool) -> (usize, usize) {
    if symmetric && dst < src {
        (dst, src)
    } else {
        (src, dst)
    }
}

/// Draws `count` distinct pairs of `label` over `n` nodes that are neither
/// self-pairs nor in `forbidden` (keys as produced by [`pair_key`]).
pub fn cns_sample<R: Rng + ?Sized>(
    n: usize,
    label: LabelId,
    count: usize,
    forbidden: &HashSet<(usize, usize)>,
    symmetric: bool,
    rng: &mut R,
) -> Result<Vec<LocalEdge>, TaskError> {
    let total = if symmetric {
        n * n.saturating_sub(1) / 2
    } else {
        n * n.saturating_sub(1)
    };
    let blocked = forbidden.iter().filter(|(a, b)| a != b).count();
    let available = total.saturating_sub(blocked);
    if count > available {
        return Err(TaskError::TooFewCandidates {
            label: label.0,
            needed: count,
            available,
        });
    }
    let edge = |(src, dst): (usize, usize)| LocalEdge { src, dst, label };

    if available <= 4 * count {
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| {
                let start = if symmetric { i + 1 } else { 0 };
                (start..n).map(move |j| (i, j))
            })
            .filter(|&(i, j)| i != j && !forbidden.contains(&(i, j)))
            .collect();
        return Ok(index::sample(rng, candidates.len(), count)
            .into_iter()
            .map(|k| edge(candidates[k]))
            .collect());
    }

    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i == j {
            continue;
        }
        let key = pair_key(i, j, symmetric);
        if forbidden.contains(&key) || !chosen.insert(key) {
            continue;
        }
        out.push(edge(key));
    }
    Ok(out)
}

const CORRUPT_ATTEMPTS: usize = 10_000;

/// For each positive, replaces the source or the destination (fair coin)
/// with a uniform node, rejecting self-pairs and the original pair.
pub fn corrupt_sample<R: Rng + ?Sized>(
    n: usize,
    positives: &[LocalEdge],
    rng: &mut R,
) -> Result<Vec<LocalEdge>, TaskError> {
    positives
        .iter()
        .map(|e| {
            for _ in 0..CORRUPT_ATTEMPTS {
                let v = rng.gen_range(0..n);
                let (src, dst) = if rng.gen_bool(0.5) { (v, e.dst) } else { (e.src, v) };
                if src != dst && (src, dst) != (e.src, e.dst) {
                    return Ok(LocalEdge { src, dst, label: e.label });
                }
            }
            Err(TaskError::TooFewCandidates {
                label: e.label.0,
                needed: 1,
                available: 0,
            })
        })
        .collect()
}
