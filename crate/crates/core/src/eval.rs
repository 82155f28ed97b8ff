//! Confusion matrices, accuracy/precision/recall/F1, and report rendering.
//!
//! Macro averages are unweighted means over all K classes; a class with an
//! undefined ratio (zero denominator) contributes 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const AVERAGING: &str = "macro (unweighted mean over all classes)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn column_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

/// Tallies (true, predicted) index pairs into a K x K matrix.
pub fn confusion_matrix(pairs: &[(usize, usize)], class_names: &[String]) -> Result<ConfusionMatrix> {
    let k = class_names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for &(t, p) in pairs {
        if t >= k || p >= k {
            return Err(Error::InvalidArgument(format!(
                "pair ({t}, {p}) out of range for {k} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        class_names: class_names.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<EvaluationReport> {
    let total = cm.total();
    if cm.n_classes() == 0 || total == 0 {
        return Err(Error::InvalidArgument(
            "cannot compute metrics on an empty confusion matrix".into(),
        ));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.n_classes())
        .map(|c| {
            let hit = cm.counts[c][c];
            let precision = ratio(hit, cm.column_sum(c));
            let recall = ratio(hit, cm.row_sum(c));
            ClassMetrics {
                label: cm.class_names[c].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: cm.row_sum(c),
            }
        })
        .collect();
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    Ok(EvaluationReport {
        accuracy: ratio(cm.trace(), total),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        confusion: cm.clone(),
    })
}

/// Micro-averaged precision: pooled true positives over pooled predictions.
pub fn micro_precision(cm: &ConfusionMatrix) -> f64 {
    let predicted: u64 = (0..cm.n_classes()).map(|c| cm.column_sum(c)).sum();
    ratio(cm.trace(), predicted)
}

/// Micro-averaged recall: pooled true positives over pooled actuals.
pub fn micro_recall(cm: &ConfusionMatrix) -> f64 {
    let actual: u64 = (0..cm.n_classes()).map(|c| cm.row_sum(c)).sum();
    ratio(cm.trace(), actual)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_class: String,
    pub predicted_class: String,
    pub count: u64,
}

/// The `k` largest non-zero off-diagonal cells, count descending, ties in
/// (row, column) order.
pub fn top_confusions(cm: &ConfusionMatrix, k: usize) -> Vec<Confusion> {
    let mut cells: Vec<(usize, usize, u64)> = Vec::new();
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            if t != p && count > 0 {
                cells.push((t, p, count));
            }
        }
    }
    cells.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    cells
        .into_iter()
        .take(k)
        .map(|(t, p, count)| Confusion {
            true_class: cm.class_names[t].clone(),
            predicted_class: cm.class_names[p].clone(),
            count,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format `{other}` (expected table or json)")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ConfusionJson {
    class_names: Vec<String>,
    counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    averaging: String,
    accuracy: f64,
    macro_precision: f64,
    macro_recall: f64,
    macro_f1: f64,
    per_class: Vec<ClassMetrics>,
    confusion: ConfusionJson,
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let doc = ReportJson {
                averaging: AVERAGING.to_owned(),
                accuracy: report.accuracy,
                macro_precision: report.macro_precision,
                macro_recall: report.macro_recall,
                macro_f1: report.macro_f1,
                per_class: report.per_class.clone(),
                confusion: ConfusionJson {
                    class_names: report.confusion.class_names.clone(),
                    counts: report.confusion.counts.iter().flatten().copied().collect(),
                },
            };
            let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
            text.push('\n');
            text
        }
        ReportFormat::Table => {
            let mut out = String::new();
            writeln!(out, "Averaging: {AVERAGING}").unwrap();
            writeln!(out, "{:>10} {:>10} {:>10} {:>10}", "Accuracy", "Precision", "Recall", "F1 score").unwrap();
            writeln!(
                out,
                "{:>10} {:>10} {:>10} {:>10}",
                pct(report.accuracy),
                pct(report.macro_precision),
                pct(report.macro_recall),
                pct(report.macro_f1)
            )
            .unwrap();
            writeln!(out).unwrap();
            let width = report
                .per_class
                .iter()
                .map(|m| m.label.len())
                .max()
                .unwrap_or(5)
                .max(5);
            writeln!(
                out,
                "{:<width$} {:>10} {:>10} {:>10} {:>8}",
                "Class", "Precision", "Recall", "F1 score", "Support"
            )
            .unwrap();
            for m in &report.per_class {
                writeln!(
                    out,
                    "{:<width$} {:>10} {:>10} {:>10} {:>8}",
                    m.label,
                    pct(m.precision),
                    pct(m.recall),
                    pct(m.f1),
                    m.support
                )
                .unwrap();
            }
            let confusions = top_confusions(&report.confusion, 10);
            if !confusions.is_empty() {
                writeln!(out).unwrap();
                writeln!(out, "Most frequent confusions (true -> predicted):").unwrap();
                for c in confusions {
                    writeln!(out, "  {} -> {}: {}", c.true_class, c.predicted_class, c.count).unwrap();
                }
            }
            out
        }
    }
}

/// Parses the JSON form produced by [`render_report`].
pub fn parse_report(text: &str) -> Result<EvaluationReport> {
    let doc: ReportJson = serde_json::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("report: {e}")))?;
    let k = doc.confusion.class_names.len();
    if doc.confusion.counts.len() != k * k {
        return Err(Error::InvalidArgument(format!(
            "report: confusion has {} counts for {k} classes",
            doc.confusion.counts.len()
        )));
    }
    let counts = doc
        .confusion
        .counts
        .chunks(k.max(1))
        .map(<[u64]>::to_vec)
        .collect::<Vec<_>>();
    Ok(EvaluationReport {
        accuracy: doc.accuracy,
        per_class: doc.per_class,
        macro_precision: doc.macro_precision,
        macro_recall: doc.macro_recall,
        macro_f1: doc.macro_f1,
        confusion: ConfusionMatrix {
            class_names: doc.confusion.class_names,
            counts: if k == 0 { Vec::new() } else { counts },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("class{i}")).collect()
    }

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix {
            class_names: names(rows.len()),
            counts: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn tally() {
        let m = confusion_matrix(&[(0, 0), (0, 1), (1, 1)], &names(2)).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 1]]);
        let empty = confusion_matrix(&[], &names(3)).unwrap();
        assert_eq!(empty.total(), 0);
        let diag = confusion_matrix(&[(0, 0), (1, 1), (2, 2)], &names(3)).unwrap();
        assert_eq!(diag.trace(), diag.total());
        assert!(confusion_matrix(&[(0, 2)], &names(2)).is_err());
    }

    #[test]
    fn hand_computed_two_class() {
        let r = compute_metrics(&cm(&[&[8, 2], &[1, 9]])).unwrap();
        assert!((r.accuracy - 0.85).abs() < 1e-12);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-4;
        assert!(close(r.per_class[0].precision, 0.8889));
        assert!(close(r.per_class[1].precision, 0.8182));
        assert!(close(r.per_class[0].recall, 0.8));
        assert!(close(r.per_class[1].recall, 0.9));
        assert!(close(r.per_class[0].f1, 0.8421));
        assert!(close(r.per_class[1].f1, 0.8571));
        assert!(close(r.macro_f1, 0.8496));
    }

    #[test]
    fn perfect_and_absent_classes() {
        let r = compute_metrics(&cm(&[&[5, 0], &[0, 3]])).unwrap();
        assert_eq!((r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1), (1.0, 1.0, 1.0, 1.0));
        let r = compute_metrics(&cm(&[&[5, 0, 0], &[0, 3, 0], &[0, 0, 0]])).unwrap();
        let absent = &r.per_class[2];
        assert_eq!((absent.precision, absent.recall, absent.f1, absent.support), (0.0, 0.0, 0.0, 0));
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(compute_metrics(&cm(&[&[0, 0], &[0, 0]])).is_err());
    }

    #[test]
    fn top_confusion_examples() {
        let m = cm(&[&[10, 3], &[7, 5]]);
        let top = top_confusions(&m, 1);
        assert_eq!(top.len(), 1);
        assert_eq!((top[0].true_class.as_str(), top[0].predicted_class.as_str(), top[0].count), ("class1", "class0", 7));
        assert!(top_confusions(&cm(&[&[4, 0], &[0, 4]]), 5).is_empty());
        assert_eq!(top_confusions(&m, 10).len(), 2);
        let tie = cm(&[&[0, 2, 2], &[2, 0, 0], &[0, 0, 0]]);
        let order: Vec<_> = top_confusions(&tie, 3)
            .into_iter()
            .map(|c| (c.true_class, c.predicted_class))
            .collect();
        assert_eq!(order[0], ("class0".into(), "class1".into()));
        assert_eq!(order[1], ("class0".into(), "class2".into()));
        assert_eq!(order[2], ("class1".into(), "class0".into()));
    }

    #[test]
    fn table_and_json() {
        let mut m = cm(&[&[9608, 392], &[0, 0]]);
        m.class_names = vec!["Drugs".into(), "Services".into()];
        let r = compute_metrics(&m).unwrap();
        let table = render_report(&r, ReportFormat::Table);
        assert!(table.contains("Accuracy"));
        assert!(table.contains("F1 score"));
        assert!(table.contains("96.08%"), "{table}");
        let json = render_report(&r, ReportFormat::Json);
        assert_eq!(parse_report(&json).unwrap(), r);
        assert!(json.contains("\"macro_f1\""));
    }
}
