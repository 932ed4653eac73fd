//! Chi-squared feature ranking on non-negative feature mass.

use serde::{Deserialize, Serialize};

use super::encode::EncodedMatrix;
use crate::error::{arg_err, dim_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub statistic: f64,
}

/// Sorted by statistic, largest first; ties by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChiSquaredRanking {
    pub entries: Vec<RankedFeature>,
}

impl ChiSquaredRanking {
    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.feature.clone()).collect()
    }

    pub fn statistic(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.statistic)
    }
}

/// For each feature, compares the observed per-class mass
/// `O_c = sum of X[i,f] over rows of class c` with `E_c = prior_c * sum_i X[i,f]`.
pub fn chi2_rank(x: &EncodedMatrix, labels: &[usize]) -> Result<ChiSquaredRanking> {
    if labels.len() != x.rows {
        return Err(dim_err(format!("{} labels for {} rows", labels.len(), x.rows)));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let cols = x.cols();
    let mut class_rows = vec![0usize; k];
    let mut observed = vec![0.0; k * cols];
    for (r, &y) in labels.iter().enumerate() {
        class_rows[y] += 1;
        for (j, &v) in x.row(r).iter().enumerate() {
            if v < 0.0 {
                return Err(arg_err(format!(
                    "feature `{}` has negative value {v} at row {r}",
                    x.names[j]
                )));
            }
            observed[y * cols + j] += v;
        }
    }
    let n = x.rows as f64;
    let mut entries: Vec<RankedFeature> = (0..cols)
        .map(|j| {
            let total: f64 = (0..k).map(|c| observed[c * cols + j]).sum();
            let statistic = (0..k)
                .map(|c| {
                    let expected = class_rows[c] as f64 / n * total;
                    if expected == 0.0 {
                        0.0
                    } else {
                        (observed[c * cols + j] - expected).powi(2) / expected
                    }
                })
                .sum();
            RankedFeature {
                feature: x.names[j].clone(),
                statistic,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.statistic.total_cmp(&a.statistic).then_with(|| a.feature.cmp(&b.feature)));
    Ok(ChiSquaredRanking { entries })
}

/// The first `k` names in rank order, plus a warning when fewer exist.
pub fn select_top_k(ranking: &ChiSquaredRanking, k: usize) -> (Vec<String>, Option<String>) {
    let warning = (k > ranking.entries.len()).then(|| {
        format!(
            "requested top {k} features but only {} are ranked; keeping all",
            ranking.entries.len()
        )
    });
    (ranking.entries.iter().take(k).map(|e| e.feature.clone()).collect(), warning)
}
