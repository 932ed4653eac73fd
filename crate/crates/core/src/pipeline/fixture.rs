//! Synthetic labelled traffic table with a tunable amount of class signal.

use serde::{Deserialize, Serialize};

use super::table::{Column, RawTable};
use super::vocab::EDGE_IIOT_CLASSES;
use crate::error::{arg_err, Result};
use crate::numerics::Rng;

pub const DEFAULT_LABEL_COLUMN: &str = "Attack_type";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub classes: usize,
    pub per_class: usize,
    pub numeric_features: usize,
    pub categorical_features: usize,
    /// Categories per categorical column.
    pub levels: usize,
    pub separation: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            classes: 15,
            per_class: 300,
            numeric_features: 32,
            categorical_features: 4,
            levels: 6,
            separation: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    /// Feature columns followed by the label column.
    pub table: RawTable,
    pub labels: Vec<usize>,
    /// Per-class numeric means before the non-negative shift.
    pub means: Vec<Vec<f64>>,
}

/// Numeric features are `N(mean_c, I)` with `mean_c ~ separation · N(0, I)`,
/// then shifted per column so the minimum is 0. Categorical column `j` picks
/// category `(c + j) mod levels` with extra probability
/// `0.5 · (1 − e^(−separation))` and is uniform otherwise. Rows cycle through
/// the classes.
pub fn generate_fixture(config: &FixtureConfig, rng: &mut Rng) -> Result<Fixture> {
    let FixtureConfig {
        classes,
        per_class,
        numeric_features: d,
        categorical_features: q,
        levels,
        separation,
    } = *config;
    if per_class < 1 {
        return Err(arg_err("per_class must be >= 1"));
    }
    if classes < 1 || classes > EDGE_IIOT_CLASSES.len() {
        return Err(arg_err(format!("classes must be in 1..={}", EDGE_IIOT_CLASSES.len())));
    }
    if levels < 1 || !(separation >= 0.0 && separation.is_finite()) {
        return Err(arg_err("levels must be >= 1 and separation finite and >= 0"));
    }
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| separation * rng.normal()).collect())
        .collect();
    let bias = 0.5 * (1.0 - (-separation).exp());
    let rows = classes * per_class;
    let mut numeric = vec![Vec::with_capacity(rows); d];
    let mut categorical = vec![Vec::with_capacity(rows); q];
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..per_class {
        for c in 0..classes {
            labels.push(c);
            for (j, col) in numeric.iter_mut().enumerate() {
                col.push(means[c][j] + rng.normal());
            }
            for (j, col) in categorical.iter_mut().enumerate() {
                let level = if rng.next_f64() < bias {
                    (c + j) % levels
                } else {
                    rng.below(levels)
                };
                col.push(format!("v{level}"));
            }
        }
    }
    for col in &mut numeric {
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        col.iter_mut().for_each(|v| *v -= min);
    }
    let mut names: Vec<String> = (0..d).map(|j| format!("num_{j}")).collect();
    names.extend((0..q).map(|j| format!("cat_{j}")));
    names.push(DEFAULT_LABEL_COLUMN.to_string());
    let mut columns: Vec<Column> = numeric.into_iter().map(Column::Numeric).collect();
    columns.extend(categorical.into_iter().map(Column::Categorical));
    columns.push(Column::Categorical(
        labels.iter().map(|&c| EDGE_IIOT_CLASSES[c].to_string()).collect(),
    ));
    Ok(Fixture {
        table: RawTable::new(names, columns)?,
        labels,
        means,
    })
}
