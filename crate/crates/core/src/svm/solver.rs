//! Dual coordinate descent for the L2-regularized L1-loss (hinge) SVM.
//!
//! Solves
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a,   0 <= a_i <= C,   Q_ij = y_i y_j x_i . x_j
//! ```
//!
//! with `x_i` augmented by a constant bias feature of 1, so the bias is
//! regularized together with `w`. Coordinates are visited in a fresh random
//! order each epoch and bounded coordinates are shrunk away as in LIBLINEAR.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use crate::seed::{Domain, StreamKey};

/// Bias feature appended to every sample.
pub const BIAS_FEATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub objective: f64,
}

pub(crate) fn dot_row(w: &[f64], bias: f64, x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, &b)| a * f64::from(b)).sum::<f64>() + bias * BIAS_FEATURE
}

/// `labels[i]` must be +1 or -1.
pub fn solve_binary(
    x: ArrayView2<'_, f32>,
    labels: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
    key: StreamKey,
) -> BinarySolution {
    let (n, dim) = x.dim();
    let rows: Vec<&[f32]> = x
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("feature rows are contiguous"))
        .collect();

    let qd: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>()
                + BIAS_FEATURE * BIAS_FEATURE
        })
        .collect();

    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut rng = key.rng();

    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut iter = 0;

    while iter < max_iter {
        let mut pg_max_new = f64::NEG_INFINITY;
        let mut pg_min_new = f64::INFINITY;
        index[..active].shuffle(&mut rng);

        let mut s = 0;
        while s < active {
            let i = index[s];
            let yi = labels[i];
            let g = yi * dot_row(&w, b, rows[i]) - 1.0;

            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] == c {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }

            pg_max_new = pg_max_new.max(pg);
            pg_min_new = pg_min_new.min(pg);

            if pg.abs() > 1e-12 && qd[i] > 0.0 {
                let old = alpha[i];
                alpha[i] = (alpha[i] - g / qd[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * yi;
                for (wj, &xj) in w.iter_mut().zip(rows[i]) {
                    *wj += delta * f64::from(xj);
                }
                b += delta * BIAS_FEATURE;
            }
            s += 1;
        }

        iter += 1;

        if pg_max_new - pg_min_new <= tol {
            if active == n {
                break;
            }
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max_new <= 0.0 {
            f64::INFINITY
        } else {
            pg_max_new
        };
        pg_min_old = if pg_min_new >= 0.0 {
            f64::NEG_INFINITY
        } else {
            pg_min_new
        };
    }

    if iter >= max_iter {
        log::warn!("dual coordinate descent reached max_iter = {max_iter}");
    }

    let objective = primal_objective(&rows, labels, &w, b, c);
    BinarySolution {
        weights: w,
        bias: b,
        iterations: iter,
        objective,
    }
}

/// `1/2 (|w|^2 + b^2) + C * sum_i max(0, 1 - y_i (w . x_i + b))`.
pub fn primal_objective(rows: &[&[f32]], labels: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let loss: f64 = rows
        .iter()
        .zip(labels)
        .map(|(x, &y)| (1.0 - y * dot_row(w, b, x)).max(0.0))
        .sum();
    reg + c * loss
}

pub(crate) fn permutation_key(seed: u64, class: usize) -> StreamKey {
    StreamKey::new(seed, Domain::SvmPermutation, 0, class as u64)
}
