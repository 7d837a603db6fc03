//! Plain-text, CSV and JSON renderings of evaluation results.

use std::fmt::Write;

use super::{BiasReport, CrossValidation, MetricsReport};

/// Column order of the summary tables.
pub const METRIC_COLUMNS: [&str; 4] = ["Precision", "Accuracy", "Recall", "F1 Score"];

fn metric_row(r: &MetricsReport) -> [f64; 4] {
    [r.macro_precision, r.accuracy, r.macro_recall, r.macro_f1]
}

fn table(rows: &[(&str, [f64; 4])], first: &str) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain([first.len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{first:<name_w$}");
    for c in METRIC_COLUMNS {
        let _ = write!(out, " | {c:>9}");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(name_w + METRIC_COLUMNS.len() * 12));
    for (name, vals) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for v in vals {
            let _ = write!(out, " | {v:>9.4}");
        }
        out.push('\n');
    }
    out
}

/// One summary row per named report.
pub fn metrics_table(rows: &[(&str, &MetricsReport)]) -> String {
    let rows: Vec<(&str, [f64; 4])> = rows.iter().map(|(n, r)| (*n, metric_row(r))).collect();
    table(&rows, "Classifier")
}

pub fn bias_table(report: &BiasReport, name_a: &str, name_b: &str) -> String {
    let mut out = table(
        &[
            (name_a, metric_row(&report.dataset_a)),
            (name_b, metric_row(&report.dataset_b)),
            ("Delta (A - B)", report.deltas.as_array()),
        ],
        "Dataset",
    );
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Per-class precision/recall/F1 listing.
pub fn per_class_table(report: &MetricsReport) -> String {
    let mut out = String::from("class,precision,recall,f1,support\n");
    for c in &report.per_class {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{}",
            csv_field(&c.label),
            c.precision,
            c.recall,
            c.f1,
            c.support
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn matrix_csv<T>(classes: &[String], rows: &[Vec<T>], fmt: impl Fn(&T) -> String) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(classes.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (label, row) in classes.iter().zip(rows) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(&fmt));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 input")
}

/// Confusion counts; header row holds predicted labels, first column true
/// labels.
pub fn confusion_csv(classes: &[String], confusion: &[Vec<usize>]) -> String {
    matrix_csv(classes, confusion, |v| v.to_string())
}

pub fn normalized_confusion_csv(classes: &[String], normalized: &[Vec<f64>]) -> String {
    matrix_csv(classes, normalized, |v| format!("{v:.6}"))
}

pub fn cross_validation_csv(cv: &CrossValidation) -> String {
    let mut out = String::from("fold,accuracy\n");
    for (i, a) in cv.fold_accuracies.iter().enumerate() {
        let _ = writeln!(out, "{},{a:.6}", i + 1);
    }
    let _ = writeln!(out, "mean,{:.6}", cv.mean_accuracy);
    out
}
