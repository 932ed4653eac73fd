use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, aggregate, confusion_matrix, per_class_metrics, Averages, ClassMetrics, ConfusionMatrix};
use crate::error::{arg_err, dim_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassRow>,
    pub accuracy: f64,
    pub averages: Averages,
    pub total_support: u64,
    pub confusion: ConfusionMatrix,
}

impl ClassificationReport {
    pub fn from_confusion(cm: ConfusionMatrix, class_names: &[String]) -> Result<Self> {
        if class_names.len() != cm.num_classes() {
            return Err(dim_err(format!(
                "{} class names for a {}-class matrix",
                class_names.len(),
                cm.num_classes()
            )));
        }
        let per_class = per_class_metrics(&cm);
        Ok(Self {
            accuracy: accuracy(&cm),
            averages: aggregate(&per_class),
            total_support: cm.total(),
            classes: class_names
                .iter()
                .zip(per_class)
                .map(|(class, metrics)| ClassRow {
                    class: class.clone(),
                    metrics,
                })
                .collect(),
            confusion: cm,
        })
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|r| r.class.clone()).collect()
    }
}

pub fn classification_report(y_true: &[usize], y_pred: &[usize], class_names: &[String]) -> Result<ClassificationReport> {
    let cm = confusion_matrix(y_true, y_pred, class_names.len())?;
    ClassificationReport::from_confusion(cm, class_names)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Text, ReportFormat::Json, ReportFormat::Csv];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Text => "txt",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(arg_err(format!("unknown report format `{other}`"))),
        }
    }
}

pub fn render_report(report: &ClassificationReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Text => Ok(render_text(report).into_bytes()),
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report)?;
            v.push(b'\n');
            Ok(v)
        }
        ReportFormat::Csv => render_csv(report),
    }
}

/// Two decimals; values reported as 0 because their denominator was 0 carry
/// a `*`.
fn cell(v: f64, undefined: bool) -> String {
    format!("{v:.2}{}", if undefined { "*" } else { "" })
}

/// Header, one row per class, then Accuracy, Macro avg and Weighted avg.
fn render_text(r: &ClassificationReport) -> String {
    let macro_label = if r.averages.excluded_from_macro.is_empty() {
        "Macro avg"
    } else {
        "Macro avg*"
    };
    let width = r
        .classes
        .iter()
        .map(|c| c.class.len())
        .chain(["Weighted avg".len(), macro_label.len()])
        .max()
        .unwrap_or(0)
        + 2;
    let mut out = format!("{:<width$}{:>10}{:>10}{:>10}{:>10}\n", "", "Precision", "Recall", "F1-Score", "Support");
    let mut line = |name: &str, p: &str, rc: &str, f: &str, s: u64| {
        let _ = writeln!(out, "{name:<width$}{p:>10}{rc:>10}{f:>10}{s:>10}");
    };
    for c in &r.classes {
        let m = &c.metrics;
        line(
            &c.class,
            &cell(m.precision, m.precision_undefined),
            &cell(m.recall, m.recall_undefined),
            &cell(m.f1, false),
            m.support,
        );
    }
    line("Accuracy", "", "", &cell(r.accuracy, false), r.total_support);
    let (a, w) = (&r.averages.macro_avg, &r.averages.weighted);
    line(
        macro_label,
        &cell(a.precision, false),
        &cell(a.recall, false),
        &cell(a.f1, false),
        r.total_support,
    );
    line(
        "Weighted avg",
        &cell(w.precision, false),
        &cell(w.recall, false),
        &cell(w.f1, false),
        r.total_support,
    );
    out
}

fn render_csv(r: &ClassificationReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "precision", "recall", "f1", "support"])?;
    for c in &r.classes {
        let m = &c.metrics;
        w.write_record([
            c.class.clone(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.support.to_string(),
        ])?;
    }
    let total = r.total_support.to_string();
    w.write_record(["accuracy", "", "", &r.accuracy.to_string(), &total])?;
    for (name, a) in [("macro avg", &r.averages.macro_avg), ("weighted avg", &r.averages.weighted)] {
        w.write_record([
            name,
            &a.precision.to_string(),
            &a.recall.to_string(),
            &a.f1.to_string(),
            &total,
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfusionFormat {
    Csv,
    Svg,
}

pub fn render_confusion(cm: &ConfusionMatrix, class_names: &[String], format: ConfusionFormat) -> Result<Vec<u8>> {
    if class_names.len() != cm.num_classes() {
        return Err(dim_err(format!(
            "{} class names for a {}-class matrix",
            class_names.len(),
            cm.num_classes()
        )));
    }
    match format {
        ConfusionFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec![String::new()];
            header.extend(class_names.iter().cloned());
            w.write_record(&header)?;
            for (name, row) in class_names.iter().zip(&cm.counts) {
                let mut rec = vec![name.clone()];
                rec.extend(row.iter().map(u64::to_string));
                w.write_record(&rec)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        ConfusionFormat::Svg => Ok(render_svg(cm, class_names).into_bytes()),
    }
}

/// Parses the CSV form back into counts and class names.
pub fn parse_confusion_csv(bytes: &[u8]) -> Result<(ConfusionMatrix, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut counts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<u64>().map_err(|e| Error::Corrupt(format!("bad count `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        counts.push(row);
    }
    Ok((ConfusionMatrix { counts }, names))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Cell shade on a log scale: 0 for an empty cell, 1 for the largest count.
pub fn shade(count: u64, max: u64) -> f64 {
    if max == 0 {
        0.0
    } else {
        (count as f64).ln_1p() / (max as f64).ln_1p()
    }
}

/// Fill colour from white towards a dark blue; every channel falls as the
/// shade rises, so darker always means more samples.
pub fn cell_rgb(t: f64) -> [f64; 3] {
    let dark = [8.0, 48.0, 107.0];
    dark.map(|d| 255.0 - t * (255.0 - d))
}

fn render_svg(cm: &ConfusionMatrix, names: &[String]) -> String {
    const CELL: usize = 48;
    let k = cm.num_classes();
    let label_w = names.iter().map(|n| n.len()).max().unwrap_or(0) * 7 + 16;
    let top = label_w;
    let size_w = label_w + k * CELL + 10;
    let size_h = top + k * CELL + 40;
    let max = cm.counts.iter().flatten().copied().max().unwrap_or(0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size_w}" height="{size_h}" font-family="sans-serif" font-size="11">"#
    );
    for (i, name) in names.iter().enumerate() {
        let y = top + i * CELL + CELL / 2 + 4;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, label_w - 6, escape(name));
        let x = label_w + i * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="start" transform="rotate(-60 {x} {})">{}</text>"#,
            top - 6,
            top - 6,
            escape(name)
        );
    }
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let t = shade(c, max);
            let [r, g, b] = cell_rgb(t).map(|v| v / 255.0 * 100.0);
            let (x, y) = (label_w + j * CELL, top + i * CELL);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({r:.4}%,{g:.4}%,{b:.4}%)" stroke="#cccccc" data-count="{c}"/>"##
            );
            let ink = if t > 0.55 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{c}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Predicted class (rows: true class, log colour scale)</text>"#,
        label_w + k * CELL / 2,
        top + k * CELL + 24
    );
    s.push_str("</svg>\n");
    s
}
