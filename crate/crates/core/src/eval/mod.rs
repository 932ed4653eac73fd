//! Confusion matrices, per-class metrics, averages and report rendering.

mod metrics;
mod report;

pub use metrics::{
    accuracy, aggregate, confusion_matrix, per_class_metrics, Average, Averages, ClassMetrics, ConfusionMatrix,
};
pub use report::{
    cell_rgb, classification_report, parse_confusion_csv, render_confusion, render_report, shade, ClassRow,
    ClassificationReport, ConfusionFormat, ReportFormat,
};
