//! Multi-level and RGB-D score fusion.
//!
//! The confidence-weighted vote normalizes each modality's squared score
//! magnitude by the larger of the two,
//! `m_i = |S_i|^2 / max(|S_rgb|^2, |S_depth|^2)`, turns the pair into weights
//! `w_i = sqrt(exp(m_i) / sum_j exp(m_j))` and predicts
//! `argmax_n (w_rgb S_rgb[n] + w_depth S_depth[n])`.

use std::io::Write;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svm::{argmax, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelStrategy {
    ConcatFeatures,
    #[default]
    AverageVote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityStrategy {
    AverageVote,
    #[default]
    WeightedVote,
}

/// Where the magnitude normalizer is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScope {
    /// Per test sample.
    #[default]
    PerSample,
    /// One maximum over every sample and both modalities of the run.
    RunLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionPlan {
    /// Best levels for RGB, best first.
    pub rgb_levels: Vec<u8>,
    pub depth_levels: Vec<u8>,
    pub level_strategy: LevelStrategy,
    pub modality_strategy: ModalityStrategy,
    pub weight_scope: WeightScope,
}

impl Default for FusionPlan {
    fn default() -> Self {
        Self {
            rgb_levels: Vec::new(),
            depth_levels: Vec::new(),
            level_strategy: LevelStrategy::AverageVote,
            modality_strategy: ModalityStrategy::WeightedVote,
            weight_scope: WeightScope::PerSample,
        }
    }
}

impl FusionPlan {
    pub fn validate(&self, available_rgb: &[u8], available_depth: &[u8]) -> Result<()> {
        for (name, wanted, have) in [
            ("rgb", &self.rgb_levels, available_rgb),
            ("depth", &self.depth_levels, available_depth),
        ] {
            if let Some(l) = wanted.iter().find(|l| !have.contains(l)) {
                return Err(Error::Config(format!(
                    "fusion plan selects {name} level {l}, which is not encoded in this run"
                )));
            }
        }
        Ok(())
    }
}

/// Feature concatenation in the given order.
pub fn concat_levels(features: &[&[f32]]) -> Vec<f32> {
    features.iter().flat_map(|f| f.iter().copied()).collect()
}

/// Column-wise concatenation of per-level feature matrices (rows = samples).
pub fn concat_level_matrices(levels: &[ArrayView2<'_, f32>]) -> Result<Array2<f32>> {
    if levels.is_empty() {
        return Err(Error::Fusion("no levels to concatenate".into()));
    }
    concatenate(Axis(1), levels).map_err(|e| Error::Fusion(format!("row mismatch: {e}")))
}

pub fn average_vote(scores: &[&ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Fusion("no score matrices to average".into()))?;
    let dim = first.view().dim();
    let mut sum = Array2::<f64>::zeros(dim);
    for s in scores {
        if s.view().dim() != dim {
            return Err(Error::Fusion(format!(
                "score shapes {:?} and {:?} differ",
                dim,
                s.view().dim()
            )));
        }
        sum += &s.view();
    }
    ScoreMatrix::new(sum / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalityWeights {
    pub m_rgb: f64,
    pub m_depth: f64,
    pub w_rgb: f64,
    pub w_depth: f64,
    /// Both score rows were zero; equal weights were substituted.
    pub degenerate: bool,
}

impl ModalityWeights {
    fn from_magnitudes(m_rgb: f64, m_depth: f64, degenerate: bool) -> Self {
        // Softmax with the larger exponent factored out.
        let top = m_rgb.max(m_depth);
        let er = (m_rgb - top).exp();
        let ed = (m_depth - top).exp();
        let z = er + ed;
        Self {
            m_rgb,
            m_depth,
            w_rgb: (er / z).sqrt(),
            w_depth: (ed / z).sqrt(),
            degenerate,
        }
    }
}

fn squared_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum()
}

pub fn modality_weights(rgb: &[f64], depth: &[f64]) -> Result<ModalityWeights> {
    if rgb.len() != depth.len() {
        return Err(Error::Fusion(format!(
            "score rows have {} and {} classes",
            rgb.len(),
            depth.len()
        )));
    }
    Ok(weights_with_normalizer(
        squared_norm(rgb),
        squared_norm(depth),
        None,
    ))
}

fn weights_with_normalizer(nr: f64, nd: f64, normalizer: Option<f64>) -> ModalityWeights {
    let max = normalizer.unwrap_or(nr.max(nd));
    if max == 0.0 {
        log::warn!("both modalities scored all zeros; using equal vote weights");
        return ModalityWeights::from_magnitudes(1.0, 1.0, true);
    }
    ModalityWeights::from_magnitudes(nr / max, nd / max, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedVote {
    pub labels: Vec<usize>,
    pub weights: Vec<ModalityWeights>,
    pub fused: ScoreMatrix,
}

impl WeightedVote {
    /// Writes `sample_id, m_rgb, m_depth, w_rgb, w_depth, pred` rows.
    pub fn write_csv(&self, ids: &[String], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if ids.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} predictions",
                ids.len(),
                self.labels.len()
            )));
        }
        let mut out = String::from("sample_id,m_rgb,m_depth,w_rgb,w_depth,pred\n");
        for ((id, w), pred) in ids.iter().zip(&self.weights).zip(&self.labels) {
            out.push_str(&format!(
                "{id},{},{},{},{},{pred}\n",
                w.m_rgb, w.m_depth, w.w_rgb, w.w_depth
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn weighted_vote(
    rgb: &ScoreMatrix,
    depth: &ScoreMatrix,
    scope: WeightScope,
) -> Result<WeightedVote> {
    if rgb.view().dim() != depth.view().dim() {
        return Err(Error::Fusion(format!(
            "rgb scores {:?} and depth scores {:?} differ in shape",
            rgb.view().dim(),
            depth.view().dim()
        )));
    }
    let n = rgb.num_samples();
    let norms: Vec<(f64, f64)> = (0..n)
        .map(|i| (squared_norm(rgb.row(i)), squared_norm(depth.row(i))))
        .collect();
    let normalizer = match scope {
        WeightScope::PerSample => None,
        WeightScope::RunLevel => Some(norms.iter().fold(0.0f64, |acc, &(a, b)| acc.max(a).max(b))),
    };

    let mut fused = Array2::<f64>::zeros(rgb.view().dim());
    let mut labels = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (i, &(nr, nd)) in norms.iter().enumerate() {
        let w = weights_with_normalizer(nr, nd, normalizer);
        let mut row = fused.row_mut(i);
        for ((dst, a), b) in row.iter_mut().zip(rgb.row(i)).zip(depth.row(i)) {
            *dst = w.w_rgb * a + w.w_depth * b;
        }
        labels.push(argmax(row.as_slice().expect("standard layout")));
        weights.push(w);
    }
    Ok(WeightedVote {
        labels,
        weights,
        fused: ScoreMatrix::new(fused)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::predict;
    use proptest::prelude::*;

    /// Direct evaluation of the weight formula, written out term by term.
    fn oracle_weights(m_rgb: f64, m_depth: f64) -> (f64, f64) {
        let denom = m_rgb.exp() + m_depth.exp();
        ((m_rgb.exp() / denom).sqrt(), (m_depth.exp() / denom).sqrt())
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn equal_magnitudes_give_equal_weights() {
        let w = modality_weights(&[3.0, 4.0], &[0.0, -5.0]).unwrap();
        assert_eq!((w.m_rgb, w.m_depth), (1.0, 1.0));
        assert!((w.w_rgb - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((w.w_depth - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn half_magnitude_weights() {
        // |S_rgb|^2 = 2, |S_depth|^2 = 1 -> m = (1, 0.5)
        let w = modality_weights(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_eq!((w.m_rgb, w.m_depth), (1.0, 0.5));
        let (er, ed) = oracle_weights(1.0, 0.5);
        assert!((w.w_rgb - er).abs() < 1e-12 && (w.w_depth - ed).abs() < 1e-12);
        assert!((w.w_rgb - 0.78896).abs() < 1e-5);
        assert!((w.w_depth - 0.61444).abs() < 1e-5);
    }

    #[test]
    fn two_by_two_worked_example() {
        let rgb = ScoreMatrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let depth = ScoreMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let v = weighted_vote(&rgb, &depth, WeightScope::PerSample).unwrap();
        let w = v.weights[0];
        assert_eq!((w.m_rgb, w.m_depth), (1.0, 0.25));
        let (er, ed) = oracle_weights(1.0, 0.25);
        assert!((w.w_rgb - er).abs() < 1e-12 && (w.w_depth - ed).abs() < 1e-12);
        let fused = v.fused.row(0);
        assert!((fused[0] - 2.0 * er).abs() < 1e-12);
        assert!((fused[1] - ed).abs() < 1e-12);
        assert_eq!(v.labels, vec![0]);
    }

    #[test]
    fn zero_depth_row_defers_to_rgb() {
        let rgb = ScoreMatrix::from_rows(&[vec![0.1, 0.7, -0.2], vec![1.0, 0.0, 0.5]]).unwrap();
        let depth = ScoreMatrix::from_rows(&[vec![0.0; 3], vec![0.0; 3]]).unwrap();
        let v = weighted_vote(&rgb, &depth, WeightScope::PerSample).unwrap();
        assert_eq!(v.labels, predict(&rgb));
    }

    #[test]
    fn both_zero_falls_back_to_equal_weights() {
        let w = modality_weights(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(w.degenerate);
        assert_eq!(w.w_rgb, w.w_depth);
    }

    #[test]
    fn average_vote_examples() {
        let a = ScoreMatrix::from_rows(&[vec![0.2, 0.4]]).unwrap();
        let b = ScoreMatrix::from_rows(&[vec![0.6, 0.0]]).unwrap();
        let avg = average_vote(&[&a, &b]).unwrap();
        assert!((avg.row(0)[0] - 0.4).abs() < 1e-12 && (avg.row(0)[1] - 0.2).abs() < 1e-12);
        assert_eq!(average_vote(&[&a]).unwrap(), a);
        let neg = ScoreMatrix::new(-a.view().to_owned()).unwrap();
        assert!(average_vote(&[&a, &neg])
            .unwrap()
            .view()
            .iter()
            .all(|&v| v == 0.0));
        let wrong = ScoreMatrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(average_vote(&[&a, &wrong]).is_err());
        assert!(average_vote(&[]).is_err());
    }

    #[test]
    fn concat_examples() {
        let a = vec![1.0f32; 8192];
        let b = vec![2.0f32; 8192];
        let c = vec![3.0f32; 8192];
        assert_eq!(concat_levels(&[&a, &b, &c]).len(), 24576);
        assert_eq!(concat_levels(&[&a]), a);
        assert_ne!(concat_levels(&[&a, &b]), concat_levels(&[&b, &a]));
        let m = concat_level_matrices(&[
            Array2::<f32>::ones((2, 3)).view(),
            Array2::<f32>::zeros((2, 1)).view(),
        ])
        .unwrap();
        assert_eq!(m.dim(), (2, 4));
    }

    #[test]
    fn run_level_scope_uses_global_max() {
        let rgb = ScoreMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let depth = ScoreMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let v = weighted_vote(&rgb, &depth, WeightScope::RunLevel).unwrap();
        assert_eq!(v.weights[0].m_rgb, 0.25);
        assert_eq!(v.weights[1].m_rgb, 1.0);
    }

    #[test]
    fn plan_validation() {
        let plan = FusionPlan {
            rgb_levels: vec![5, 6],
            depth_levels: vec![4],
            ..Default::default()
        };
        assert!(plan.validate(&[4, 5, 6], &[4]).is_ok());
        assert!(plan.validate(&[5], &[4]).is_err());
    }

    #[test]
    fn weights_csv() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = ScoreMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let v = weighted_vote(&rgb, &rgb, WeightScope::PerSample).unwrap();
        let p = dir.path().join("w.csv");
        v.write_csv(&["s0".into()], &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("sample_id,m_rgb,m_depth,w_rgb,w_depth,pred\ns0,1,1,"));
    }

    proptest! {
        #[test]
        fn weights_are_normalized(
            rgb in proptest::collection::vec(-50.0f64..50.0, 5),
            depth in proptest::collection::vec(-50.0f64..50.0, 5),
        ) {
            let w = modality_weights(&rgb, &depth).unwrap();
            prop_assert!((w.w_rgb * w.w_rgb + w.w_depth * w.w_depth - 1.0).abs() < 1e-9);
            prop_assert!(w.m_rgb.max(w.m_depth) == 1.0);
        }

        #[test]
        fn rgb_dominance_is_monotone(
            rgb in proptest::collection::vec(-5.0f64..5.0, 4),
            depth in proptest::collection::vec(-5.0f64..5.0, 4),
            lambda in 1.0f64..10.0,
        ) {
            prop_assume!(rgb.iter().any(|v| v.abs() > 1e-6));
            let base = modality_weights(&rgb, &depth).unwrap();
            let scaled: Vec<f64> = rgb.iter().map(|v| v * lambda).collect();
            let more = modality_weights(&scaled, &depth).unwrap();
            prop_assert!(more.m_rgb >= base.m_rgb - 1e-12);
            prop_assert!(more.w_rgb >= base.w_rgb - 1e-12);
        }

        #[test]
        fn average_vote_is_permutation_invariant_and_idempotent(
            a in proptest::collection::vec(-5.0f64..5.0, 6),
            b in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let sa = ScoreMatrix::from_rows(&[a[..3].to_vec(), a[3..].to_vec()]).unwrap();
            let sb = ScoreMatrix::from_rows(&[b[..3].to_vec(), b[3..].to_vec()]).unwrap();
            let ab = average_vote(&[&sa, &sb]).unwrap();
            let ba = average_vote(&[&sb, &sa]).unwrap();
            prop_assert_eq!(ab, ba);
            let same = average_vote(&[&sa, &sa, &sa]).unwrap();
            for (x, y) in same.view().iter().zip(sa.view().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
