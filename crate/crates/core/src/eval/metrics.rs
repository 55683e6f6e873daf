//! Open-set metrics: ROC area under a false-positive-rate cap (unknown
//! samples are the positive class, the outlier score is the detection
//! score) and macro F1 over known classes plus the unknown label.

use serde::{Deserialize, Serialize};

use crate::corpus::LabelTag;
use crate::error::{Error, Result};

/// Area under the ROC curve restricted to FPR in [0, cap], unnormalized:
/// a perfect detector scores exactly `cap`. The sweep visits descending
/// score thresholds with tied scores grouped into a single ROC step, and
/// the final segment is linearly interpolated at the cap.
pub fn auc_at_fpr(scores: &[f64], is_unknown: &[bool], cap: f64) -> Result<f64> {
    if scores.len() != is_unknown.len() {
        return Err(Error::shape(
            "auc inputs",
            &[scores.len()],
            &[is_unknown.len()],
        ));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("no scores for AUC".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("AUC scores".into()));
    }
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "FPR cap must be in (0, 1], got {cap}"
        )));
    }
    let positives = is_unknown.iter().filter(|u| **u).count();
    let negatives = is_unknown.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidParameter(
            "AUC needs both unknown and known samples in the truth".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut area = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let (mut prev_fpr, mut prev_tpr) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        // One ROC step per tied-score group.
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if is_unknown[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let fpr = fp as f64 / negatives as f64;
        let tpr = tp as f64 / positives as f64;
        if fpr >= cap {
            let tpr_at_cap = if fpr > prev_fpr {
                prev_tpr + (tpr - prev_tpr) * (cap - prev_fpr) / (fpr - prev_fpr)
            } else {
                tpr
            };
            area += (cap - prev_fpr) * (prev_tpr + tpr_at_cap) / 2.0;
            return Ok(area);
        }
        area += (fpr - prev_fpr) * (prev_tpr + tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
        i = j;
    }
    // cap beyond the final FPR of 1.0 can only happen with cap == 1.0,
    // where the loop has already accumulated the full area.
    Ok(area)
}

/// Confusion matrix with rows as true labels and columns as predictions;
/// the last row/column is the unknown label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Known class ids in row/column order; the implicit final index is
    /// the unknown label.
    pub class_ids: Vec<usize>,
    pub matrix: Vec<Vec<usize>>,
}

impl Confusion {
    fn index_of(&self, label: LabelTag, what: &str) -> Result<usize> {
        match label {
            LabelTag::Unknown => Ok(self.class_ids.len()),
            LabelTag::Known(id) => self
                .class_ids
                .iter()
                .position(|c| *c == id)
                .ok_or_else(|| Error::UnknownLabel(format!("{what} label {id}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    /// Per known class, in `confusion.class_ids` order.
    pub per_class: Vec<f64>,
    pub f1_known: f64,
    pub f1_unknown: f64,
    pub f1_overall: f64,
    pub confusion: Confusion,
}

/// Per-class F1 = 2PR/(P+R) (0 when P+R = 0) from a single confusion
/// matrix; `f1_known` macro-averages the known classes, `f1_overall`
/// macro-averages known classes and the unknown label together.
pub fn f1_report(
    truths: &[LabelTag],
    predictions: &[LabelTag],
    known: &[usize],
) -> Result<F1Report> {
    if truths.len() != predictions.len() {
        return Err(Error::shape(
            "f1 inputs",
            &[truths.len()],
            &[predictions.len()],
        ));
    }
    let mut class_ids = known.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    let k = class_ids.len();
    let mut confusion = Confusion {
        class_ids,
        matrix: vec![vec![0usize; k + 1]; k + 1],
    };
    for (t, p) in truths.iter().zip(predictions) {
        let row = confusion.index_of(*t, "truth")?;
        let col = confusion.index_of(*p, "prediction")?;
        confusion.matrix[row][col] += 1;
    }

    let f1_of = |idx: usize| -> f64 {
        let true_count: usize = confusion.matrix[idx].iter().sum();
        let pred_count: usize = confusion.matrix.iter().map(|row| row[idx]).sum();
        let hit = confusion.matrix[idx][idx];
        if true_count == 0 && pred_count == 0 {
            return 0.0;
        }
        let precision = if pred_count == 0 {
            0.0
        } else {
            hit as f64 / pred_count as f64
        };
        let recall = if true_count == 0 {
            0.0
        } else {
            hit as f64 / true_count as f64
        };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    };

    let per_class: Vec<f64> = (0..k).map(f1_of).collect();
    let f1_unknown = f1_of(k);
    let f1_known = if k == 0 {
        0.0
    } else {
        per_class.iter().sum::<f64>() / k as f64
    };
    let f1_overall = (per_class.iter().sum::<f64>() + f1_unknown) / (k + 1) as f64;
    Ok(F1Report {
        per_class,
        f1_known,
        f1_unknown,
        f1_overall,
        confusion,
    })
}
