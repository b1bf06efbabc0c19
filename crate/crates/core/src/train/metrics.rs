use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of this class.
    pub support: usize,
}

/// Confusion-matrix derived scores. Ratios with a zero denominator are 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    /// F1 pooled over every class except 0 (the "no relation" class); for
    /// binary tasks this is the positive-class F1.
    pub micro_f1: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Metrics {
    /// Panics if a label is `>= classes` or the slices differ in length.
    pub fn from_predictions(gold: &[usize], predicted: &[usize], classes: usize) -> Self {
        assert_eq!(gold.len(), predicted.len(), "one prediction per instance");
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&g, &p) in gold.iter().zip(predicted) {
            confusion[g][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let k = confusion.len();
        let count: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let per_class = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let predicted: usize = (0..k).map(|g| confusion[g][c]).sum();
                let support: usize = confusion[c].iter().sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                ClassScores {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support,
                }
            })
            .collect();
        let tp: usize = (1..k).map(|c| confusion[c][c]).sum();
        let pred_pos: usize = (1..k)
            .map(|p| (0..k).map(|g| confusion[g][p]).sum::<usize>())
            .sum();
        let gold_pos: usize = (1..k).map(|g| confusion[g].iter().sum::<usize>()).sum();
        let micro_f1 = f1(ratio(tp, pred_pos), ratio(tp, gold_pos));
        Metrics {
            count,
            accuracy: ratio(correct, count),
            per_class,
            micro_f1,
            confusion,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}
