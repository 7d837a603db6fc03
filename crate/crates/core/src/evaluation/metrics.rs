use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of true samples of this class.
    pub support: usize,
}

/// Accuracy, macro-averaged precision/recall/F1 and the confusion matrix.
///
/// `confusion[t][p]` counts samples of class `classes[t]` predicted as
/// `classes[p]`. Classes are every label seen in either vector, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassStats>,
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics<S: AsRef<str>>(truth: &[S], predicted: &[S]) -> Result<MetricsReport, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for l in truth.iter().chain(predicted) {
        index.insert(l.as_ref(), 0);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let k = index.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[index[t.as_ref()]][index[p.as_ref()]] += 1;
    }

    let classes: Vec<String> = index.keys().map(|s| s.to_string()).collect();
    let per_class: Vec<ClassStats> = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted_c: usize = confusion.iter().map(|row| row[c]).sum();
            let support: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted_c);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassStats {
                label: classes[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassStats) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        accuracy: ratio(correct, truth.len()),
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        classes,
        per_class,
        confusion,
    })
}

/// Divides each row by its sum.
pub fn normalize_confusion(confusion: &[Vec<usize>], classes: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
    confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: usize = row.iter().sum();
            if sum == 0 {
                return Err(EvalError::EmptyRow(
                    classes.get(i).cloned().unwrap_or_else(|| i.to_string()),
                ));
            }
            Ok(row.iter().map(|&v| v as f64 / sum as f64).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let labels = ["x", "y", "z", "x"];
        let r = compute_metrics(&labels, &labels).unwrap();
        assert_eq!(
            (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn two_class_hand_example() {
        let r = compute_metrics(&["a", "a", "b", "b"], &["a", "b", "b", "b"]).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.per_class[0].precision, 1.0);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert!((r.per_class[1].precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].recall, 1.0);
        assert!((r.macro_precision - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn never_predicted_class_has_zero_precision() {
        let r = compute_metrics(&["a", "b", "c"], &["a", "b", "b"]).unwrap();
        assert_eq!(r.per_class[2].precision, 0.0);
        assert_eq!(r.per_class[2].f1, 0.0);
        assert!(r.macro_f1 < 1.0);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            compute_metrics(&["a"], &["a", "b"]),
            Err(EvalError::LengthMismatch { .. })
        ));
        let empty: [&str; 0] = [];
        assert!(matches!(compute_metrics(&empty, &empty), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn normalization() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let n = normalize_confusion(&[vec![3, 0], vec![0, 5]], &classes).unwrap();
        assert_eq!(n, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let n = normalize_confusion(&[vec![2, 2], vec![1, 3]], &classes).unwrap();
        assert_eq!(n[0], vec![0.5, 0.5]);
        assert!(matches!(
            normalize_confusion(&[vec![0, 0], vec![1, 3]], &classes),
            Err(EvalError::EmptyRow(l)) if l == "a"
        ));
    }

    #[test]
    fn half_misclassified_class_gives_half_off_diagonal() {
        // class "10" has half of its test items predicted as "1"
        let truth = ["1", "1", "10", "10", "10", "10"];
        let pred = ["1", "1", "1", "1", "10", "10"];
        let r = compute_metrics(&truth, &pred).unwrap();
        let n = normalize_confusion(&r.confusion, &r.classes).unwrap();
        let (i1, i10) = (0, 1);
        assert_eq!(r.classes, vec!["1", "10"]);
        assert_eq!(n[i10][i1], 0.5);
        assert_eq!(n[i10][i10], 0.5);
    }
}
