use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[i][j]`: samples of true class `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(crate::error::dim_err(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (index, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= k) {
            return Err(Error::Label {
                index,
                label,
                num_classes: k,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Nothing was predicted as this class, so precision is reported as 0.
    pub precision_undefined: bool,
    /// The class has no true samples, so recall is reported as 0.
    pub recall_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// One-vs-rest precision, recall and F1 per class. F1 uses the count form
/// `2TP / (2TP + FP + FN)`, which equals the harmonic mean of precision and
/// recall and is 0 when both are.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.num_classes())
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted = cm.col_sum(c);
            let support = cm.row_sum(c);
            let (fp, fn_) = (predicted - tp, support - tp);
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, support);
            let (f1, _) = ratio(2 * tp, 2 * tp + fp + fn_);
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect()
}

/// Fraction of samples on the diagonal; 0 for an empty matrix.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.trace(), cm.total()).0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Average {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    #[serde(rename = "macro")]
    pub macro_avg: Average,
    pub weighted: Average,
    /// Classes with zero support, left out of the macro average.
    pub excluded_from_macro: Vec<usize>,
}

fn clamp_to_range(v: f64, values: impl Iterator<Item = f64> + Clone) -> f64 {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    if lo > hi {
        v
    } else {
        v.clamp(lo, hi)
    }
}

/// Macro (unweighted over classes with support) and support-weighted means.
///
/// Summation round-off is clamped away so both averages stay within the
/// per-class range. Weighted recall is formed from the recovered integer
/// true-positive counts, so it is exactly the accuracy.
pub fn aggregate(per_class: &[ClassMetrics]) -> Averages {
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let total: u64 = present.iter().map(|m| m.support).sum();
    let field = |f: fn(&ClassMetrics) -> f64| {
        let values = present.iter().map(move |m| f(m));
        let n = present.len() as f64;
        let mac = if present.is_empty() {
            0.0
        } else {
            clamp_to_range(values.clone().sum::<f64>() / n, values.clone())
        };
        let wei = if total == 0 {
            0.0
        } else {
            let s: f64 = present.iter().map(|m| m.support as f64 * f(m)).sum();
            clamp_to_range(s / total as f64, values)
        };
        (mac, wei)
    };
    let (mp, wp) = field(|m| m.precision);
    let (mr, _) = field(|m| m.recall);
    let (mf, wf) = field(|m| m.f1);
    let tp: u64 = present
        .iter()
        .map(|m| (m.recall * m.support as f64).round() as u64)
        .sum();
    Averages {
        macro_avg: Average {
            precision: mp,
            recall: mr,
            f1: mf,
        },
        weighted: Average {
            precision: wp,
            recall: ratio(tp, total).0,
            f1: wf,
        },
        excluded_from_macro: per_class
            .iter()
            .enumerate()
            .filter(|(_, m)| m.support == 0)
            .map(|(i, _)| i)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn hand_counts() {
        assert_eq!(confusion_matrix(&[0, 1], &[1, 0], 2).unwrap(), cm(&[&[0, 1], &[1, 0]]));
        let d = confusion_matrix(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(d.trace(), 4);
        assert_eq!(d.row_sum(2), 2);
        let err = confusion_matrix(&[0, 5], &[0, 0], 3).unwrap_err();
        assert!(matches!(err, Error::Label { index: 1, label: 5, .. }));
    }

    #[test]
    fn hand_metrics() {
        let m = per_class_metrics(&cm(&[&[5, 5], &[0, 10]]));
        assert_eq!(m[0].precision, 1.0);
        assert_eq!(m[0].recall, 0.5);
        assert!((m[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m[0].support, 10);
    }

    #[test]
    fn table_row_reproduced_from_counts() {
        // one matrix consistent with a 0.98 / 0.94 / 0.96 / 2500 row
        let tp = 2350;
        let m = per_class_metrics(&cm(&[&[tp, 2500 - tp], &[48, 10_000]]));
        assert_eq!(format!("{:.2}", m[0].precision), "0.98");
        assert_eq!(format!("{:.2}", m[0].recall), "0.94");
        assert_eq!(format!("{:.2}", m[0].f1), "0.96");
        assert_eq!(m[0].support, 2500);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = per_class_metrics(&cm(&[&[3, 0, 0], &[0, 4, 0], &[0, 0, 0]]));
        assert!(m[..2].iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        assert!(m[2].precision_undefined && m[2].recall_undefined);
        assert_eq!(m[2].f1, 0.0);
        assert_eq!(accuracy(&cm(&[&[1, 1], &[1, 1]])), 0.5);
        assert_eq!(accuracy(&cm(&[&[7, 0], &[0, 2]])), 1.0);
        let a = aggregate(&m);
        assert_eq!(a.excluded_from_macro, vec![2]);
        assert_eq!(a.macro_avg.f1, 1.0);
    }

    #[test]
    fn averages_by_hand() {
        let mk = |f1, support| ClassMetrics {
            precision: f1,
            recall: f1,
            f1,
            support,
            precision_undefined: false,
            recall_undefined: false,
        };
        let a = aggregate(&[mk(1.0, 10), mk(0.5, 30)]);
        assert_eq!(a.macro_avg.f1, 0.75);
        assert_eq!(a.weighted.f1, 0.625);
        let same = aggregate(&[mk(0.1, 3), mk(0.1, 7), mk(0.1, 11)]);
        assert_eq!((same.macro_avg.f1, same.weighted.f1), (0.1, 0.1));
    }
}
