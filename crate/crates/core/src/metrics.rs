//! ROC/AUC, ensemble CRPS, RMSE and relative improvement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    pub label: bool,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(ScoredSample { score, label })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are classified positive. The `(0, 0)` anchor
    /// carries `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Scores sorted once, descending, with equal scores grouped. AUCs for any
/// number of label sets can then be read off in linear time.
#[derive(Debug, Clone)]
pub struct RankedScores {
    order: Vec<u32>,
    /// Exclusive end of each tie group in `order`.
    group_ends: Vec<u32>,
    thresholds: Vec<f64>,
}

impl RankedScores {
    pub fn new(scores: &[f64]) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        if scores.len() > u32::MAX as usize {
            return Err(Error::invalid("too many samples"));
        }
        let mut order: Vec<u32> = (0..scores.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| {
            scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b))
        });
        let mut group_ends = Vec::new();
        let mut thresholds = Vec::new();
        for (i, &idx) in order.iter().enumerate() {
            let s = scores[idx as usize];
            // total_cmp separates -0.0 and 0.0; group them as equal scores.
            if thresholds.last() != Some(&s) {
                if i > 0 {
                    group_ends.push(i as u32);
                }
                thresholds.push(s);
            }
        }
        if !order.is_empty() {
            group_ends.push(order.len() as u32);
        }
        Ok(RankedScores {
            order,
            group_ends,
            thresholds,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn class_counts(&self, labels: &[bool]) -> Result<(u64, u64)> {
        if labels.len() != self.order.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} scores",
                labels.len(),
                self.order.len()
            )));
        }
        let pos = labels.iter().filter(|&&y| y).count() as u64;
        let neg = labels.len() as u64 - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateLabels {
                positives: pos as usize,
                negatives: neg as usize,
            });
        }
        Ok((pos, neg))
    }

    /// Per tie group: (positives, negatives).
    fn group_counts<'a>(&'a self, labels: &'a [bool]) -> impl Iterator<Item = (u64, u64)> + 'a {
        let mut start = 0usize;
        self.group_ends.iter().map(move |&end| {
            let end = end as usize;
            let pos = self.order[start..end]
                .iter()
                .filter(|&&i| labels[i as usize])
                .count() as u64;
            let n = (end - start) as u64;
            start = end;
            (pos, n - pos)
        })
    }

    /// Trapezoidal AUC, identical to the tie-corrected Mann-Whitney statistic.
    pub fn auc(&self, labels: &[bool]) -> Result<f64> {
        let (pos, neg) = self.class_counts(labels)?;
        let mut tp = 0u64;
        let mut twice_area = 0u128;
        for (gp, gn) in self.group_counts(labels) {
            twice_area += gn as u128 * (2 * tp + gp) as u128;
            tp += gp;
        }
        Ok(twice_area as f64 / (2.0 * pos as f64 * neg as f64))
    }

    pub fn roc_curve(&self, labels: &[bool]) -> Result<RocCurve> {
        let (pos, neg) = self.class_counts(labels)?;
        let mut points = Vec::with_capacity(self.group_ends.len() + 1);
        points.push(RocPoint {
            threshold: f64::INFINITY,
            fpr: 0.0,
            tpr: 0.0,
        });
        let (mut tp, mut fp) = (0u64, 0u64);
        for ((gp, gn), &threshold) in self.group_counts(labels).zip(&self.thresholds) {
            tp += gp;
            fp += gn;
            points.push(RocPoint {
                threshold,
                fpr: fp as f64 / neg as f64,
                tpr: tp as f64 / pos as f64,
            });
        }
        Ok(RocCurve {
            auc: self.auc(labels)?,
            points,
        })
    }
}

fn split(samples: &[ScoredSample]) -> (Vec<f64>, Vec<bool>) {
    samples.iter().map(|s| (s.score, s.label)).unzip()
}

pub fn roc_curve(samples: &[ScoredSample]) -> Result<RocCurve> {
    let (scores, labels) = split(samples);
    RankedScores::new(&scores)?.roc_curve(&labels)
}

pub fn auc(samples: &[ScoredSample]) -> Result<f64> {
    let (scores, labels) = split(samples);
    RankedScores::new(&scores)?.auc(&labels)
}

/// AUC from parallel score and label slices.
pub fn auc_from(scores: &[f64], labels: &[bool]) -> Result<f64> {
    RankedScores::new(scores)?.auc(labels)
}

/// AUC separately for each group (e.g. each grid cell). Groups with a single
/// class yield `None`.
pub fn auc_by_group(scores: &[f64], labels: &[bool], groups: &[usize], group_count: usize) -> Result<Vec<Option<f64>>> {
    if scores.len() != labels.len() || scores.len() != groups.len() {
        return Err(Error::invalid("scores, labels and groups differ in length"));
    }
    let mut members: Vec<(Vec<f64>, Vec<bool>)> = vec![(Vec::new(), Vec::new()); group_count];
    for ((&s, &y), &g) in scores.iter().zip(labels).zip(groups) {
        let slot = members
            .get_mut(g)
            .ok_or_else(|| Error::invalid(format!("group {g} >= {group_count}")))?;
        slot.0.push(s);
        slot.1.push(y);
    }
    members
        .into_iter()
        .map(|(s, y)| match auc_from(&s, &y) {
            Ok(a) => Ok(Some(a)),
            Err(Error::DegenerateLabels { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Ensemble CRPS estimator
/// `(1/n) sum |x_j - x| - (1/(2 n^2)) sum_j sum_k |x_j - x_k|`.
pub fn crps_ensemble(members: &[f64], truth: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    if !truth.is_finite() || members.iter().any(|m| !m.is_finite()) {
        return Err(Error::invalid("CRPS inputs must be finite"));
    }
    let n = members.len() as f64;
    let skill = members.iter().map(|m| (m - truth).abs()).sum::<f64>() / n;
    let spread: f64 = members
        .iter()
        .map(|a| members.iter().map(|b| (a - b).abs()).sum::<f64>())
        .sum();
    Ok((skill - spread / (2.0 * n * n)).max(0.0))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction has {} values, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty RMSE input"));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Percent AUC gain over the mean-prediction baseline.
pub fn relative_improvement(auc_method: f64, auc_mean_pred: f64) -> Result<f64> {
    if !(auc_mean_pred > 0.0) || !auc_method.is_finite() || !auc_mean_pred.is_finite() {
        return Err(Error::invalid(format!(
            "relative improvement needs a positive baseline AUC, got {auc_mean_pred}"
        )));
    }
    Ok(100.0 * (auc_method - auc_mean_pred) / auc_mean_pred)
}

/// Relative improvement reported for q = 0.9 on the reanalysis validation
/// period (p_opt ~ 18.3). Reference only; synthetic runs do not reproduce it.
pub const REFERENCE_RI_Q90: f64 = 2.67;
