//! One-hot encoding of categorical columns into a dense numeric matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::table::{Column, ColumnKind, RawTable};
use crate::error::{arg_err, dim_err, Error, Result};

/// Dense row-major matrix with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMatrix {
    pub names: Vec<String>,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl EncodedMatrix {
    pub fn new(names: Vec<String>, rows: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * names.len() {
            return Err(dim_err(format!(
                "{} values for {rows} rows of {} columns",
                data.len(),
                names.len()
            )));
        }
        Ok(Self { names, rows, data })
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let c = self.cols();
        (0..self.rows).map(move |r| self.data[r * c + j])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let data = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Self {
            names: self.names.clone(),
            rows: rows.len(),
            data,
        }
    }

    /// Columns by name, in the order given.
    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let pos: HashMap<&str, usize> = self.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let idx: Vec<usize> = names
            .iter()
            .map(|n| pos.get(n.as_str()).copied().ok_or_else(|| arg_err(format!("no feature named `{n}`"))))
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(Self {
            names: names.to_vec(),
            rows: self.rows,
            data,
        })
    }
}

/// How one source column becomes feature columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Numeric { name: String },
    /// Indicator columns `<name>_<k>` for each kept category, then
    /// `<name>_rare` for everything else, including values never seen at fit.
    Categorical { name: String, categories: Vec<String> },
}

impl ColumnEncoding {
    pub fn source(&self) -> &str {
        match self {
            ColumnEncoding::Numeric { name } | ColumnEncoding::Categorical { name, .. } => name,
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnEncoding::Numeric { .. } => ColumnKind::Numeric,
            ColumnEncoding::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    fn output_names(&self) -> Vec<String> {
        match self {
            ColumnEncoding::Numeric { name } => vec![name.clone()],
            ColumnEncoding::Categorical { name, categories } => (0..categories.len())
                .map(|k| format!("{name}_{k}"))
                .chain(std::iter::once(format!("{name}_rare")))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub max_categories: usize,
    pub columns: Vec<ColumnEncoding>,
}

impl EncodingMap {
    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().flat_map(ColumnEncoding::output_names).collect()
    }

    /// Encodes a table that has every fitted column (extra columns are
    /// ignored). Kinds must match the fit.
    pub fn apply(&self, table: &RawTable) -> Result<EncodedMatrix> {
        let names = self.feature_names();
        let width = names.len();
        let rows = table.n_rows();
        let mut data = vec![0.0; rows * width];
        let mut offset = 0;
        for enc in &self.columns {
            let col = table
                .column(enc.source())
                .ok_or_else(|| Error::Compatibility(format!("missing column `{}`", enc.source())))?;
            match (enc, col) {
                (ColumnEncoding::Numeric { .. }, Column::Numeric(v)) => {
                    for (r, &x) in v.iter().enumerate() {
                        data[r * width + offset] = x;
                    }
                    offset += 1;
                }
                (ColumnEncoding::Categorical { categories, .. }, Column::Categorical(v)) => {
                    let index: HashMap<&str, usize> =
                        categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
                    let rare = categories.len();
                    for (r, s) in v.iter().enumerate() {
                        let k = index.get(s.as_str()).copied().unwrap_or(rare);
                        data[r * width + offset + k] = 1.0;
                    }
                    offset += rare + 1;
                }
                (enc, col) => {
                    return Err(Error::Compatibility(format!(
                        "column `{}` was fitted as {:?} but is {:?}",
                        enc.source(),
                        enc.kind(),
                        col.kind()
                    )))
                }
            }
        }
        EncodedMatrix::new(names, rows, data)
    }
}

/// Fits an [`EncodingMap`] on `table` and applies it. Each categorical column
/// keeps its `max_categories - 1` most frequent values (ties by value) and
/// reserves the last indicator for the rare bucket, so it expands to at most
/// `max_categories` columns.
pub fn encode_categoricals(table: &RawTable, max_categories: usize) -> Result<(EncodedMatrix, EncodingMap)> {
    let map = fit_encoding(table, max_categories)?;
    let m = map.apply(table)?;
    Ok((m, map))
}

pub fn fit_encoding(table: &RawTable, max_categories: usize) -> Result<EncodingMap> {
    if max_categories < 2 {
        return Err(arg_err(format!("max_categories must be >= 2, got {max_categories}")));
    }
    let columns = table
        .columns()
        .map(|(name, col)| match col {
            Column::Numeric(_) => ColumnEncoding::Numeric { name: name.to_string() },
            Column::Categorical(values) => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for v in values {
                    *counts.entry(v.as_str()).or_default() += 1;
                }
                let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                ColumnEncoding::Categorical {
                    name: name.to_string(),
                    categories: ranked
                        .into_iter()
                        .take(max_categories - 1)
                        .map(|(c, _)| c.to_string())
                        .collect(),
                }
            }
        })
        .collect();
    Ok(EncodingMap { max_categories, columns })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(values: &[&str]) -> RawTable {
        RawTable::new(
            vec!["n".into(), "col".into()],
            vec![
                Column::Numeric((0..values.len()).map(|i| i as f64).collect()),
                Column::Categorical(values.iter().map(|s| s.to_string()).collect()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_categories_two_columns() {
        let (m, map) = encode_categoricals(&cat(&["a", "b", "a"]), 2).unwrap();
        assert_eq!(m.names, vec!["n", "col_0", "col_rare"]);
        let ind: Vec<Vec<f64>> = (0..3).map(|r| m.row(r)[1..].to_vec()).collect();
        assert_eq!(ind, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(map.apply(&cat(&["a", "b", "a"])).unwrap(), m);
    }

    #[test]
    fn indicators_partition_each_row() {
        let values = ["x", "y", "z", "y", "w", "y", "x", "q"];
        for maxc in 2..6 {
            let (m, _) = encode_categoricals(&cat(&values), maxc).unwrap();
            assert!(m.cols() - 1 <= maxc);
            for r in 0..m.rows {
                assert_eq!(m.row(r)[1..].iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn unseen_category_goes_to_rare() {
        let (_, map) = encode_categoricals(&cat(&["a", "b", "a"]), 24).unwrap();
        let m = map.apply(&cat(&["zzz"])).unwrap();
        assert_eq!(m.names, vec!["n", "col_0", "col_1", "col_rare"]);
        assert_eq!(m.row(0), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn frequency_then_value_order() {
        let (_, map) = encode_categoricals(&cat(&["b", "c", "a", "c", "b", "d"]), 3).unwrap();
        let ColumnEncoding::Categorical { categories, .. } = &map.columns[1] else { panic!() };
        assert_eq!(categories, &["b", "c"]);
    }

    #[test]
    fn empty_column_only_rare() {
        let (m, _) = encode_categoricals(&cat(&[]), 5).unwrap();
        assert_eq!(m.names, vec!["n", "col_rare"]);
        assert_eq!(m.rows, 0);
        assert!(encode_categoricals(&cat(&["a"]), 1).is_err());
    }

    #[test]
    fn kind_mismatch_is_incompatible() {
        let (_, map) = encode_categoricals(&cat(&["a"]), 4).unwrap();
        let swapped = RawTable::new(
            vec!["n".into(), "col".into()],
            vec![Column::Numeric(vec![0.0]), Column::Numeric(vec![1.0])],
        )
        .unwrap();
        assert!(matches!(map.apply(&swapped), Err(Error::Compatibility(_))));
    }
}
