use serde::{Deserialize, Serialize};

use super::encode::EncodedMatrix;
use crate::error::{arg_err, Result};

/// Per-feature standardization fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub features: Vec<String>,
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    /// Features with zero spread; they transform to 0.
    pub constant: Vec<bool>,
}

pub fn fit_scaler(x: &EncodedMatrix) -> Result<ScalerParams> {
    if x.rows == 0 {
        return Err(arg_err("cannot fit a scaler on zero rows"));
    }
    let n = x.rows as f64;
    let cols = x.cols();
    let mut mean = vec![0.0; cols];
    for r in 0..x.rows {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; cols];
    for r in 0..x.rows {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    Ok(ScalerParams {
        features: x.names.clone(),
        mean,
        constant: std.iter().map(|&s| s == 0.0).collect(),
        std,
    })
}

pub fn apply_scaler(params: &ScalerParams, x: &EncodedMatrix) -> Result<EncodedMatrix> {
    if params.features != x.names {
        return Err(arg_err(format!(
            "scaler was fitted on {} features {:?}... but the matrix has {} features {:?}...",
            params.features.len(),
            params.features.iter().take(3).collect::<Vec<_>>(),
            x.names.len(),
            x.names.iter().take(3).collect::<Vec<_>>()
        )));
    }
    let cols = x.cols();
    let mut data = x.data.clone();
    for row in data.chunks_exact_mut(cols.max(1)).take(x.rows) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if params.constant[j] {
                0.0
            } else {
                (*v - params.mean[j]) / params.std[j]
            };
        }
    }
    EncodedMatrix::new(x.names.clone(), x.rows, data)
}
