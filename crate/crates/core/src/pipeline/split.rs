//! Stratified reduction and train/validation/test partitioning.

use crate::error::{arg_err, dim_err, Result};
use crate::numerics::{Rng, Tensor};

/// One partition of a dataset: row-major features plus class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub rows: usize,
    pub cols: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    /// Row index each sample had in the table it was split from.
    pub origin_rows: Vec<usize>,
}

impl Partition {
    pub fn new(rows: usize, cols: usize, features: Vec<f64>, labels: Vec<usize>, origin_rows: Vec<usize>) -> Result<Self> {
        if features.len() != rows * cols || labels.len() != rows || origin_rows.len() != rows {
            return Err(dim_err(format!(
                "partition of {rows}x{cols} got {} values, {} labels, {} origins",
                features.len(),
                labels.len(),
                origin_rows.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            features,
            labels,
            origin_rows,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `idx` as a `[B, steps, channels]` batch.
    pub fn gather(&self, idx: &[usize], steps: usize, channels: usize) -> Result<Tensor> {
        if steps * channels != self.cols {
            return Err(dim_err(format!(
                "{} features cannot be viewed as {steps}x{channels}",
                self.cols
            )));
        }
        let data = idx.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Tensor::new(vec![idx.len(), steps, channels], data)
    }
}

fn by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        groups[y].push(i);
    }
    groups
}

/// Row indices (ascending) of a per-class sample holding `round(fraction·n_c)`
/// rows of every class, at least one for non-empty classes.
pub fn stratified_sample(labels: &[usize], fraction: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(arg_err(format!("sample fraction must be in (0, 1], got {fraction}")));
    }
    let mut keep = Vec::new();
    for mut members in by_class(labels) {
        if members.is_empty() {
            continue;
        }
        let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        rng.shuffle(&mut members);
        keep.extend_from_slice(&members[..take]);
    }
    keep.sort_unstable();
    Ok(keep)
}

/// Splits `n` into parts proportional to `fractions`: floors first, then the
/// leftover units go to the largest remainders (earlier parts win ties).
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| (v + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    let rem = |i: usize| (ideal[i] - counts[i] as f64).max(0.0);
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Row indices of each partition, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn stratified_split(labels: &[usize], fractions: [f64; 3], rng: &mut Rng) -> Result<SplitIndices> {
    if fractions.iter().any(|f| f.is_nan() || *f <= 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(arg_err(format!("split fractions {fractions:?} must be positive and sum to 1")));
    }
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        warnings: Vec::new(),
    };
    for (class, mut members) in by_class(labels).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < fractions.len() {
            out.warnings.push(format!(
                "class {class} has {} rows, fewer than 3 partitions; all go to train",
                members.len()
            ));
            out.train.extend(members);
            continue;
        }
        rng.shuffle(&mut members);
        let c = largest_remainder(members.len(), &fractions);
        out.train.extend_from_slice(&members[..c[0]]);
        out.val.extend_from_slice(&members[c[0]..c[0] + c[1]]);
        out.test.extend_from_slice(&members[c[0] + c[1]..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
