use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub weighted_f1: f64,
    /// Sorted union of the true and predicted labels; indexes `confusion`.
    pub classes: Vec<u8>,
    /// `confusion[i][j]`: true class `classes[i]` predicted as `classes[j]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn support(&self) -> Vec<usize> {
        self.confusion.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Accuracy, support-weighted F1, and the confusion matrix. Per-class F1 is
/// `2PR / (P + R)`, taken as 0 when `P + R = 0`.
pub fn score(y_true: &[u8], y_pred: &[u8]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let mut classes: Vec<u8> = y_true.iter().chain(y_pred).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let index = |c: u8| classes.binary_search(&c).expect("class collected above");

    let c = classes.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[index(t)][index(p)] += 1;
    }

    let total = y_true.len() as f64;
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let mut weighted_f1 = 0.0;
    for i in 0..c {
        let tp = confusion[i][i] as f64;
        let support: usize = confusion[i].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[i]).sum();
        if support == 0 {
            continue;
        }
        let precision = if predicted == 0 {
            0.0
        } else {
            tp / predicted as f64
        };
        let recall = tp / support as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted_f1 += support as f64 * f1;
    }

    Ok(Metrics {
        accuracy: correct as f64 / total,
        weighted_f1: weighted_f1 / total,
        classes,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect() {
        let y = [1, 2, 3, 4, 5, 6, 1];
        let m = score(&y, &y).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn hand_computed_four_samples() {
        let m = score(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        // class 1: P=1, R=1/2 -> 2/3; class 2: P=2/3, R=1 -> 4/5
        let expected = 0.5 * (2.0 / 3.0) + 0.5 * (4.0 / 5.0);
        assert!((m.weighted_f1 - expected).abs() <= 1e-12);
        assert_eq!(m.confusion, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(m.support(), vec![2, 2]);
    }

    #[test]
    fn constant_prediction() {
        let m = score(&[1, 1, 2, 2], &[2, 2, 2, 2]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        // class 1 has P + R = 0
        let f1_two = 2.0 * 0.5 * 1.0 / 1.5;
        assert!((m.weighted_f1 - 0.5 * f1_two).abs() <= 1e-12);
    }

    #[test]
    fn predicted_class_absent_from_truth() {
        let m = score(&[1, 1], &[1, 3]).unwrap();
        assert_eq!(m.classes, vec![1, 3]);
        assert_eq!(m.support(), vec![2, 0]);
        assert!((m.weighted_f1 - 2.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(score(&[1, 2], &[1]), Err(Error::Dimension { .. })));
        assert!(score(&[], &[]).is_err());
    }
}
