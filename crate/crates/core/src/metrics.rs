//! Ranking and classification metrics, and stratified splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rank cut-off for average precision at k.
pub const AP_CUTOFF: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ranking needs at least one positive and one negative ({positives} positives, {negatives} negatives)")]
    Degenerate { positives: usize, negatives: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("class {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("nothing to split")]
    EmptyStratum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub auroc: f64,
    pub auprc: f64,
    pub ap50: f64,
}

/// Item order for ranking: descending score, ties by ascending item index.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// AUROC (Mann–Whitney, ties count one half), AUPRC (step-wise sweep) and
/// average precision truncated at rank `k`, normalized by `min(k, #positives)`.
pub fn rank_metrics_at(scores: &[f64], labels: &[bool], k: usize) -> Result<RankingMetrics, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::Degenerate { positives, negatives });
    }

    // Average ranks (1-based) over tie groups in ascending score order.
    let mut ascending: Vec<usize> = (0..scores.len()).collect();
    ascending.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < ascending.len() {
        let mut end = start + 1;
        while end < ascending.len() && scores[ascending[end]] == scores[ascending[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = ascending[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += avg_rank * pos_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    let auroc = u / (p * negatives as f64);

    let mut hits = 0usize;
    let mut auprc = 0.0;
    let mut ap_k = 0.0;
    for (pos, &i) in descending_order(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            let precision = hits as f64 / (pos + 1) as f64;
            auprc += precision;
            if pos < k {
                ap_k += precision;
            }
        }
    }
    Ok(RankingMetrics {
        auroc,
        auprc: auprc / p,
        ap50: ap_k / k.min(positives) as f64,
    })
}

pub fn rank_metrics(scores: &[f64], labels: &[bool]) -> Result<RankingMetrics, MetricsError> {
    rank_metrics_at(scores, labels, AP_CUTOFF)
}

/// Per-label metrics and their macro average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub per_label: BTreeMap<String, RankingMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: RankingMetrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

impl RankingReport {
    /// Scores each label; labels without both classes are skipped with a warning.
    pub fn from_groups<'a>(
        groups: impl IntoIterator<Item = (String, &'a [f64], &'a [bool])>,
    ) -> Result<Self, MetricsError> {
        let mut per_label = BTreeMap::new();
        let mut skipped = Vec::new();
        for (name, scores, labels) in groups {
            match rank_metrics(scores, labels) {
                Ok(m) => {
                    per_label.insert(name, m);
                }
                Err(MetricsError::Degenerate { positives, negatives }) => {
                    log::warn!(
                        "label `{name}` skipped: {positives} positives, {negatives} negatives"
                    );
                    skipped.push(name);
                }
                Err(e) => return Err(e),
            }
        }
        let n = per_label.len() as f64;
        let mean = |f: fn(&RankingMetrics) -> f64| {
            if per_label.is_empty() {
                f64::NAN
            } else {
                per_label.values().map(f).sum::<f64>() / n
            }
        };
        let macro_avg = RankingMetrics {
            auroc: mean(|m| m.auroc),
            auprc: mean(|m| m.auprc),
            ap50: mean(|m| m.ap50),
        };
        Ok(Self {
            per_label,
            macro_avg,
            skipped,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro and macro F1 for single-label multiclass predictions over
/// classes `0..num_classes`.
pub fn f1_metrics(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<F1Report, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), truth.len()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        for class in [p, t] {
            if class >= num_classes {
                return Err(MetricsError::ClassOutOfRange { class, num_classes });
            }
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class: Vec<ClassScores> = (0..num_classes)
        .map(|c| {
            if tp[c] + fp[c] + fn_[c] == 0 {
                log::warn!("class {c} absent from both predictions and truth; F1 taken as 0");
            }
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
                support: tp[c] + fn_[c],
            }
        })
        .collect();
    let (tp_all, fp_all, fn_all): (usize, usize, usize) =
        (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let micro_f1 = ratio(2 * tp_all, 2 * tp_all + fp_all + fn_all);
    let macro_f1 = if num_classes == 0 {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / num_classes as f64
    };
    Ok(F1Report {
        micro_f1,
        macro_f1,
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(MetricsError::BadFraction(self.train_fraction))
        }
    }

    /// Test items for a stratum of size `n`: `ceil((1 - fraction) * n)`.
    pub fn test_count(&self, n: usize) -> usize {
        let exact = (1.0 - self.train_fraction) * n as f64;
        // Absorb representation error such as (1 - 0.7) * 10 = 3.0000000000000004.
        ((exact - 1e-9).ceil() as usize).clamp(1, n)
    }
}

/// Splits item indices by stratum key. Strata are visited in key order and
/// each is shuffled with one seeded generator; returns sorted `(train, test)`.
pub fn stratified_split<K: Ord + Clone>(keys: &[K], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), MetricsError> {
    spec.validate()?;
    if keys.is_empty() {
        return Err(MetricsError::EmptyStratum);
    }
    let mut strata: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        strata.entry(k.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut items) in strata {
        items.shuffle(&mut rng);
        let n_test = spec.test_count(items.len());
        test.extend_from_slice(&items[..n_test]);
        train.extend_from_slice(&items[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Rounds to `digits` significant digits for report output.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}
