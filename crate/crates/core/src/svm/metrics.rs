use ndarray::Array2;

use super::{predict, ScoreMatrix};
use crate::error::{Error, Result};

/// Fraction of rows whose true class ranks within the `k` largest scores.
/// Equal scores are ranked by class index, smallest first.
pub fn topk_accuracy(s: &ScoreMatrix, y: &[usize], k: usize) -> Result<f64> {
    let classes = s.num_classes();
    if k == 0 || k > classes {
        return Err(Error::Shape(format!("k = {k} outside 1..={classes}")));
    }
    if y.len() != s.num_samples() {
        return Err(Error::Shape(format!(
            "{} labels for {} score rows",
            y.len(),
            s.num_samples()
        )));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (i, &truth) in y.iter().enumerate() {
        if truth >= classes {
            return Err(Error::Shape(format!("label {truth} out of range")));
        }
        let row = s.row(i);
        let t = row[truth];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(c, &v)| v > t || (v == t && c < truth))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    /// `counts[[true, predicted]]`.
    pub counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.counts.sum();
        if total == 0 {
            return 0.0;
        }
        self.counts.diag().sum() as f64 / total as f64
    }

    pub fn to_csv(&self) -> String {
        let n = self.counts.nrows();
        let mut out = String::from("true\\pred");
        for j in 0..n {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for (i, row) in self.counts.rows().into_iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(pred: &[usize], y: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            y.len()
        )));
    }
    let mut counts = Array2::<u64>::zeros((classes, classes));
    for (&p, &t) in pred.iter().zip(y) {
        if p >= classes || t >= classes {
            return Err(Error::Shape(format!(
                "label pair (true {t}, pred {p}) outside 0..{classes}"
            )));
        }
        counts[[t, p]] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// `M[i][i] / row_i`; classes without test samples get `NaN`.
pub fn per_category_accuracy(cm: &ConfusionMatrix) -> Vec<f64> {
    cm.counts
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.sum();
            if total == 0 {
                f64::NAN
            } else {
                row[i] as f64 / total as f64
            }
        })
        .collect()
}

/// Convenience: top-1 accuracy via argmax decoding.
pub fn accuracy(s: &ScoreMatrix, y: &[usize]) -> f64 {
    let pred = predict(s);
    if y.is_empty() {
        return 0.0;
    }
    pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
}
