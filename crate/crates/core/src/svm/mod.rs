//! One-vs-rest linear SVM and the score/label utilities built on it.

mod metrics;
mod solver;

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use metrics::{
    accuracy, confusion_matrix, per_category_accuracy, topk_accuracy, ConfusionMatrix,
};
pub use solver::{primal_objective, solve_binary, BinarySolution, BIAS_FEATURE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub c: f64,
    pub iterations: Vec<usize>,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `N x dim`, one row per class.
    weights: Array2<f32>,
    biases: Vec<f32>,
    meta: TrainingMeta,
}

pub fn train_ovr(x: ArrayView2<'_, f32>, y: &[usize], cfg: &SvmConfig) -> Result<LinearModel> {
    let (n, _) = x.dim();
    if n != y.len() {
        return Err(Error::Training(format!(
            "{n} feature rows but {} labels",
            y.len()
        )));
    }
    if !(cfg.c > 0.0 && cfg.tol > 0.0 && cfg.max_iter > 0) {
        return Err(Error::Training(format!(
            "invalid solver settings C={} tol={} max_iter={}",
            cfg.c, cfg.tol, cfg.max_iter
        )));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for &label in y {
        counts[label] += 1;
    }
    let absent: Vec<String> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(i, _)| i.to_string())
        .collect();
    if !absent.is_empty() {
        return Err(Error::Training(format!(
            "classes absent from training labels: {}",
            absent.join(",")
        )));
    }
    if classes < 2 {
        return Err(Error::Training("at least two classes are required".into()));
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite feature at row {}",
            pos / x.ncols().max(1)
        )));
    }

    // Contiguous rows for the solver.
    let x = x.as_standard_layout();
    let solutions: Vec<BinarySolution> = (0..classes)
        .into_par_iter()
        .map(|class| {
            let labels: Vec<f64> = y
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            solve_binary(
                x.view(),
                &labels,
                cfg.c,
                cfg.tol,
                cfg.max_iter,
                solver::permutation_key(cfg.seed, class),
            )
        })
        .collect();

    let dim = x.ncols();
    let mut weights = Array2::<f32>::zeros((classes, dim));
    let mut biases = Vec::with_capacity(classes);
    for (mut row, sol) in weights.rows_mut().into_iter().zip(&solutions) {
        for (dst, &src) in row.iter_mut().zip(&sol.weights) {
            *dst = src as f32;
        }
        biases.push(sol.bias as f32);
    }
    Ok(LinearModel {
        weights,
        biases,
        meta: TrainingMeta {
            c: cfg.c,
            iterations: solutions.iter().map(|s| s.iterations).collect(),
            objectives: solutions.iter().map(|s| s.objective).collect(),
        },
    })
}

const BLOB_MAGIC: [u8; 8] = *b"RRNNSVM\0";
const BLOB_VERSION: u32 = 1;

impl LinearModel {
    pub fn new(weights: Array2<f32>, biases: Vec<f32>) -> Result<Self> {
        let classes = weights.nrows();
        if classes < 2 || biases.len() != classes {
            return Err(Error::Model(format!(
                "{classes} weight rows and {} biases (need N >= 2 of each)",
                biases.len()
            )));
        }
        Ok(Self {
            weights,
            biases,
            meta: TrainingMeta {
                c: 0.0,
                iterations: vec![0; classes],
                objectives: vec![0.0; classes],
            },
        })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f32> {
        self.weights.view()
    }

    pub fn biases(&self) -> &[f32] {
        &self.biases
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Versioned little-endian blob: magic, version, N, dim, C, then
    /// `N x dim` f32 weights, N f32 biases, N u32 iteration counts and N f64
    /// final objectives.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, dim) = self.weights.dim();
        let mut out = Vec::with_capacity(32 + 4 * n * (dim + 1) + 12 * n);
        out.extend_from_slice(&BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&self.meta.c.to_le_bytes());
        for v in self.weights.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.biases {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &it in &self.meta.iterations {
            out.extend_from_slice(&(it as u32).to_le_bytes());
        }
        for obj in &self.meta.objectives {
            out.extend_from_slice(&obj.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != BLOB_MAGIC {
            return Err(Error::Model("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != BLOB_VERSION {
            return Err(Error::Model(format!("unsupported blob version {version}")));
        }
        let n = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let c = cur.f64()?;
        let weights = (0..n * dim)
            .map(|_| cur.f32())
            .collect::<Result<Vec<_>>>()?;
        let biases = (0..n).map(|_| cur.f32()).collect::<Result<Vec<_>>>()?;
        let iterations = (0..n)
            .map(|_| cur.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let objectives = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        if cur.pos != bytes.len() {
            return Err(Error::Model("trailing bytes after model".into()));
        }
        let weights =
            Array2::from_shape_vec((n, dim), weights).map_err(|e| Error::Model(e.to_string()))?;
        let mut model = Self::new(weights, biases)?;
        model.meta = TrainingMeta {
            c,
            iterations,
            objectives,
        };
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Model("truncated model blob".into()))?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Per-sample, per-class decision values. Columns follow class index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(Array2<f64>);

impl ScoreMatrix {
    pub fn new(scores: Array2<f64>) -> Result<Self> {
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor("non-finite score".into()));
        }
        Ok(Self(scores.as_standard_layout().into_owned()))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Shape("ragged score rows".into()));
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(
            Array2::from_shape_vec((n, classes), flat).map_err(|e| Error::Shape(e.to_string()))?,
        )
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn num_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0
            .row(i)
            .to_slice()
            .expect("score matrices are kept in standard layout")
    }

    /// Writes `sample_id,class0,...,classN-1` rows.
    pub fn write_csv(&self, ids: &[String], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if ids.len() != self.num_samples() {
            return Err(Error::Shape(format!(
                "{} ids for {} score rows",
                ids.len(),
                self.num_samples()
            )));
        }
        let mut out = String::from("sample_id");
        for c in 0..self.num_classes() {
            out.push_str(&format!(",class{c}"));
        }
        out.push('\n');
        for (id, row) in ids.iter().zip(self.0.rows()) {
            out.push_str(id);
            for v in row {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Self)> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Validation(vec![format!("{}: {e}", path.display())]))?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec =
                rec.map_err(|e| Error::Validation(vec![format!("{}: {e}", path.display())]))?;
            let mut it = rec.iter();
            ids.push(it.next().unwrap_or_default().to_string());
            rows.push(
                it.map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Validation(vec![format!("bad score {v:?}")]))
                })
                .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok((ids, Self::from_rows(&rows)?))
    }
}

/// `S[n][c] = w_c . x_n + b_c`.
pub fn decision_scores(m: &LinearModel, x: ArrayView2<'_, f32>) -> Result<ScoreMatrix> {
    if x.ncols() != m.dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, model expects {}",
            x.ncols(),
            m.dim()
        )));
    }
    let w = m.weights.mapv(f64::from);
    let xs = x.mapv(f64::from);
    let mut s = xs.dot(&w.t());
    for mut row in s.axis_iter_mut(Axis(0)) {
        for (v, &b) in row.iter_mut().zip(&m.biases) {
            *v += f64::from(b);
        }
    }
    ScoreMatrix::new(s)
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(s: &ScoreMatrix) -> Vec<usize> {
    (0..s.num_samples()).map(|i| argmax(s.row(i))).collect()
}
