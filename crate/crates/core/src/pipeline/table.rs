//! Named-column tables, CSV ingestion and the cleaning steps that run on raw
//! columns.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, dim_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical(_) => ColumnKind::Categorical,
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    fn hash_cell<H: Hasher>(&self, row: usize, h: &mut H) {
        match self {
            Column::Numeric(v) => canonical_bits(v[row]).hash(h),
            Column::Categorical(v) => v[row].hash(h),
        }
    }

    fn cell_eq(&self, a: usize, b: usize) -> bool {
        match self {
            Column::Numeric(v) => v[a] == v[b],
            Column::Categorical(v) => v[a] == v[b],
        }
    }

    fn render(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) => v[row].to_string(),
            Column::Categorical(v) => v[row].clone(),
        }
    }
}

/// `-0.0` and `0.0` compare equal, so they must hash equal too.
fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Ordered, uniquely named, equal-length columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    names: Vec<String>,
    columns: Vec<Column>,
    rows: usize,
}

impl RawTable {
    pub fn new(names: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(dim_err(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(arg_err(format!("duplicate column name `{dup}`")));
        }
        let rows = columns.first().map_or(0, Column::len);
        if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != rows) {
            return Err(dim_err(format!("column `{}` has {} rows, expected {rows}", names[i], c.len())));
        }
        Ok(Self { names, columns, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.names.iter().map(String::as_str).zip(&self.columns)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.position(name).map(|i| &self.columns[i])
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Removes and returns a column.
    pub fn take_column(&mut self, name: &str) -> Option<Column> {
        let i = self.position(name)?;
        self.names.remove(i);
        let col = self.columns.remove(i);
        if self.columns.is_empty() {
            self.rows = 0;
        }
        Some(col)
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            rows: rows.len(),
        }
    }

    fn row_hash(&self, row: usize) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.columns {
            c.hash_cell(row, &mut h);
        }
        h.finish()
    }

    fn rows_equal(&self, a: usize, b: usize) -> bool {
        self.columns.iter().all(|c| c.cell_eq(a, b))
    }

    /// Writes the table as CSV with a header row.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names)?;
        for r in 0..self.rows {
            w.write_record(self.columns.iter().map(|c| c.render(r)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How to type and validate columns while reading.
#[derive(Clone, Debug, Default)]
pub struct SchemaHints {
    /// Column holding the class name. When set it must exist, is read as
    /// text, and rows with an empty value are dropped.
    pub label_column: Option<String>,
    /// Forced kinds; other columns are numeric iff every value is missing or
    /// parses as a finite number.
    pub kinds: BTreeMap<String, ColumnKind>,
    /// Reject present-but-unparseable numeric cells instead of imputing them.
    pub strict: bool,
}

/// What ingestion had to fix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub unlabeled_rows_dropped: usize,
    /// Numeric cells that were missing or unparseable and set to 0.
    pub imputations: usize,
    /// Per column, cells that were present but not numbers.
    pub parse_failures: BTreeMap<String, usize>,
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || ["nan", "na", "null", "none"].iter().any(|m| t.eq_ignore_ascii_case(m))
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_unlabeled(s: &str) -> bool {
    s.trim().is_empty()
}

/// Reads a CSV file (header row required) into a typed table.
pub fn load_csv(path: impl AsRef<Path>, hints: &SchemaHints) -> Result<(RawTable, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    read_csv(file, hints).map_err(|e| match e {
        Error::Io(io) => Error::Ingestion {
            path: path.to_path_buf(),
            message: io.to_string(),
        },
        Error::Csv(c) => Error::Ingestion {
            path: path.to_path_buf(),
            message: c.to_string(),
        },
        other => other,
    })
}

/// Two passes over a seekable reader: the first infers column kinds, the
/// second builds typed columns, so raw text is never held for the whole file.
pub fn read_csv<R: Read + Seek>(mut input: R, hints: &SchemaHints) -> Result<(RawTable, LoadReport)> {
    let start = input.stream_position()?;
    let (header, label_idx) = {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(&mut input);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let label_idx = match &hints.label_column {
            Some(l) => Some(
                header
                    .iter()
                    .position(|h| h == l)
                    .ok_or_else(|| Error::MissingLabelColumn(l.clone()))?,
            ),
            None => None,
        };
        (header, label_idx)
    };
    let kinds: Vec<ColumnKind> = {
        input.seek(SeekFrom::Start(start))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(&mut input);
        let mut numeric: Vec<bool> = header
            .iter()
            .enumerate()
            .map(|(i, h)| Some(i) != label_idx && hints.kinds.get(h) != Some(&ColumnKind::Categorical))
            .collect();
        let undecided: Vec<usize> = (0..header.len())
            .filter(|&i| numeric[i] && !hints.kinds.contains_key(&header[i]))
            .collect();
        if !undecided.is_empty() {
            for rec in rdr.records() {
                let rec = rec?;
                if label_idx.is_some_and(|l| is_unlabeled(&rec[l])) {
                    continue;
                }
                for &i in &undecided {
                    if numeric[i] && !is_missing(&rec[i]) && parse_number(&rec[i]).is_none() {
                        numeric[i] = false;
                    }
                }
            }
        }
        numeric
            .into_iter()
            .map(|n| if n { ColumnKind::Numeric } else { ColumnKind::Categorical })
            .collect()
    };

    input.seek(SeekFrom::Start(start))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(&mut input);
    let mut columns: Vec<Column> = kinds
        .iter()
        .map(|k| match k {
            ColumnKind::Numeric => Column::Numeric(Vec::new()),
            ColumnKind::Categorical => Column::Categorical(Vec::new()),
        })
        .collect();
    let mut report = LoadReport::default();
    for rec in rdr.records() {
        let rec = rec?;
        report.rows_read += 1;
        let row_number = report.rows_read;
        if label_idx.is_some_and(|l| is_unlabeled(&rec[l])) {
            report.unlabeled_rows_dropped += 1;
            continue;
        }
        for (i, col) in columns.iter_mut().enumerate() {
            let raw = &rec[i];
            match col {
                Column::Numeric(v) => match parse_number(raw) {
                    Some(x) => v.push(x),
                    None => {
                        if !is_missing(raw) {
                            if hints.strict {
                                return Err(arg_err(format!(
                                    "row {row_number}: column `{}` value `{raw}` is not a number",
                                    header[i]
                                )));
                            }
                            *report.parse_failures.entry(header[i].clone()).or_default() += 1;
                        }
                        report.imputations += 1;
                        v.push(0.0);
                    }
                },
                Column::Categorical(v) => {
                    let s = raw.trim();
                    v.push(if Some(i) == label_idx { s.to_string() } else { raw.to_string() });
                }
            }
        }
    }
    Ok((RawTable::new(header, columns)?, report))
}

/// Removes the named columns; names that are absent come back as warnings.
pub fn drop_columns(table: &RawTable, names: &[String]) -> (RawTable, Vec<String>) {
    let drop: HashSet<&str> = names.iter().map(String::as_str).collect();
    let warnings = names
        .iter()
        .filter(|n| table.position(n).is_none())
        .map(|n| format!("drop list names column `{n}`, which is not present"))
        .collect();
    let (names, columns): (Vec<String>, Vec<Column>) = table
        .names
        .iter()
        .zip(&table.columns)
        .filter(|(n, _)| !drop.contains(n.as_str()))
        .map(|(n, c)| (n.clone(), c.clone()))
        .unzip();
    let rows = if columns.is_empty() { 0 } else { table.rows };
    (RawTable { names, columns, rows }, warnings)
}

/// Keeps the first occurrence of every distinct row, preserving order.
pub fn dedup_rows(table: &RawTable) -> (RawTable, usize) {
    let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut keep = Vec::with_capacity(table.rows);
    for r in 0..table.rows {
        let bucket = buckets.entry(table.row_hash(r)).or_default();
        if bucket.iter().any(|&k| table.rows_equal(k, r)) {
            continue;
        }
        bucket.push(r);
        keep.push(r);
    }
    let removed = table.rows - keep.len();
    if removed == 0 {
        return (table.clone(), 0);
    }
    (table.select_rows(&keep), removed)
}

fn column_hash(c: &Column) -> u64 {
    let mut h = DefaultHasher::new();
    std::mem::discriminant(c).hash(&mut h);
    for r in 0..c.len() {
        c.hash_cell(r, &mut h);
    }
    h.finish()
}

/// Drops columns whose content equals an earlier column's. Columns named in
/// `protected` are never dropped.
pub fn dedup_columns(table: &RawTable, protected: &[&str]) -> (RawTable, Vec<String>) {
    let mut by_hash: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (i, (name, col)) in table.names.iter().zip(&table.columns).enumerate() {
        if protected.contains(&name.as_str()) {
            keep.push(i);
            continue;
        }
        let bucket = by_hash.entry(column_hash(col)).or_default();
        if bucket.iter().any(|&k| table.columns[k] == *col) {
            dropped.push(name.clone());
            continue;
        }
        bucket.push(i);
        keep.push(i);
    }
    let out = RawTable {
        names: keep.iter().map(|&i| table.names[i].clone()).collect(),
        columns: keep.iter().map(|&i| table.columns[i].clone()).collect(),
        rows: table.rows,
    };
    (out, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use std::io::Cursor;

    fn hints(label: &str) -> SchemaHints {
        SchemaHints {
            label_column: Some(label.into()),
            ..Default::default()
        }
    }

    #[test]
    fn toy_csv_is_typed() {
        let csv = "x,name,Attack_type\n1.5,a,Normal\n2,b,XSS\n-3,\"c,d\",Normal\n";
        let (t, rep) = read_csv(Cursor::new(csv), &hints("Attack_type")).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.column("x"), Some(&Column::Numeric(vec![1.5, 2.0, -3.0])));
        assert_eq!(t.column("name").unwrap().kind(), ColumnKind::Categorical);
        assert_eq!(rep.imputations, 0);
    }

    #[test]
    fn nan_is_imputed_to_zero() {
        let csv = "x,Attack_type\nNaN,Normal\n4,Normal\n";
        let (t, rep) = read_csv(Cursor::new(csv), &hints("Attack_type")).unwrap();
        assert_eq!(t.column("x"), Some(&Column::Numeric(vec![0.0, 4.0])));
        assert_eq!(rep.imputations, 1);
    }

    #[test]
    fn forced_numeric_records_parse_failures() {
        let csv = "x,Attack_type\nabc,Normal\n4,Normal\n";
        let mut h = hints("Attack_type");
        h.kinds.insert("x".into(), ColumnKind::Numeric);
        let (t, rep) = read_csv(Cursor::new(csv), &h).unwrap();
        assert_eq!(t.column("x"), Some(&Column::Numeric(vec![0.0, 4.0])));
        assert_eq!(rep.parse_failures.get("x"), Some(&1));
    }

    #[test]
    fn strict_mode_names_the_row() {
        let csv = "x,Attack_type\n1,Normal\nabc,Normal\n";
        let mut h = hints("Attack_type");
        h.kinds.insert("x".into(), ColumnKind::Numeric);
        h.strict = true;
        let err = read_csv(Cursor::new(csv), &h).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn header_only_file_is_empty() {
        let (t, rep) = read_csv(Cursor::new("x,Attack_type\n"), &hints("Attack_type")).unwrap();
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.n_columns(), 2);
        assert_eq!(rep.rows_read, 0);
    }

    #[test]
    fn unlabeled_rows_dropped() {
        let csv = "x,Attack_type\n1,Normal\n2,\n3,XSS\n";
        let (t, rep) = read_csv(Cursor::new(csv), &hints("Attack_type")).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(rep.unlabeled_rows_dropped, 1);
    }

    #[test]
    fn missing_label_column() {
        let err = read_csv(Cursor::new("x,y\n1,2\n"), &hints("Attack_type")).unwrap_err();
        assert!(matches!(err, Error::MissingLabelColumn(ref c) if c == "Attack_type"));
        assert!(err.to_string().contains("Attack_type"));
    }

    #[test]
    fn unreadable_file() {
        let err = load_csv("/nonexistent/data.csv", &hints("Attack_type")).unwrap_err();
        assert!(matches!(err, Error::Ingestion { .. }));
    }

    fn abc() -> RawTable {
        RawTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                Column::Numeric(vec![1.0, 2.0]),
                Column::Categorical(vec!["x".into(), "y".into()]),
                Column::Numeric(vec![3.0, 4.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn drop_preserves_order_and_warns() {
        let (t, w) = drop_columns(&abc(), &["b".into()]);
        assert_eq!(t.names(), &["a".to_string(), "c".to_string()]);
        assert!(w.is_empty());
        let (t, w) = drop_columns(&abc(), &["zzz".into()]);
        assert_eq!(t, abc());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn duplicate_rows_removed() {
        let t = abc().select_rows(&[0, 1, 0]);
        let (d, removed) = dedup_rows(&t);
        assert_eq!(removed, 1);
        assert_eq!(d, abc());
        let (d, removed) = dedup_rows(&abc());
        assert_eq!((d, removed), (abc(), 0));
    }

    #[test]
    fn duplicate_columns_removed() {
        let t = RawTable::new(
            vec!["a".into(), "b".into(), "a_copy".into(), "near".into()],
            vec![
                Column::Numeric(vec![1.0, 2.0, 3.0]),
                Column::Categorical(vec!["1".into(), "2".into(), "3".into()]),
                Column::Numeric(vec![1.0, 2.0, 3.0]),
                Column::Numeric(vec![1.0, 2.0, 4.0]),
            ],
        )
        .unwrap();
        let (d, dropped) = dedup_columns(&t, &[]);
        assert_eq!(dropped, vec!["a_copy".to_string()]);
        assert_eq!(d.names(), &["a".to_string(), "b".to_string(), "near".to_string()]);
    }

    fn random_table(rng: &mut Rng, rows: usize, cols: usize, levels: usize) -> RawTable {
        let names = (0..cols).map(|i| format!("c{i}")).collect();
        let columns = (0..cols)
            .map(|i| {
                if i % 3 == 2 {
                    Column::Categorical((0..rows).map(|_| format!("v{}", rng.below(levels))).collect())
                } else {
                    Column::Numeric((0..rows).map(|_| rng.below(levels) as f64).collect())
                }
            })
            .collect();
        RawTable::new(names, columns).unwrap()
    }

    #[test]
    fn dedup_rows_matches_set_oracle() {
        let mut rng = Rng::new(17);
        let t = random_table(&mut rng, 1000, 4, 3);
        let (d, removed) = dedup_rows(&t);
        let oracle: HashSet<Vec<String>> = (0..t.n_rows())
            .map(|r| t.columns.iter().map(|c| c.render(r)).collect())
            .collect();
        assert_eq!(d.n_rows(), oracle.len());
        assert_eq!(removed, 1000 - oracle.len());
    }

    #[test]
    fn dedup_columns_matches_pairwise_oracle() {
        let mut rng = Rng::new(23);
        for _ in 0..50 {
            let base = random_table(&mut rng, 6, 20, 2);
            // splice in some exact copies
            let mut names = base.names.clone();
            let mut cols = base.columns.clone();
            for k in 0..5 {
                let src = rng.below(cols.len());
                names.push(format!("copy{k}"));
                cols.push(cols[src].clone());
            }
            let t = RawTable::new(names, cols).unwrap();
            let (_, dropped) = dedup_columns(&t, &[]);
            let oracle: Vec<String> = (0..t.n_columns())
                .filter(|&j| (0..j).any(|i| t.columns[i] == t.columns[j]))
                .map(|j| t.names[j].clone())
                .collect();
            assert_eq!(dropped, oracle);
        }
    }
}
