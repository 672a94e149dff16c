//! Fixed random recursive neural networks.
//!
//! Each network owns one tied weight matrix `W` (`K x s^2 K`) drawn i.i.d.
//! from U[-0.1, 0.1] and maps a canonical `K x s x s` activation block to a
//! parent vector `p = tanh(W v)`, where `v` stacks the `s^2` child columns
//! (one `K`-vector per spatial position, positions in row-major order).
//! A level is encoded by concatenating the outputs of `num_rnns` networks.
//!
//! The multi-level variant merges non-overlapping 2x2 neighbourhoods with a
//! `K x 4K` tied matrix until a single node remains.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{Domain, StreamKey, WEIGHT_HIGH, WEIGHT_LOW};
use crate::tensor_io::ActivationTensor;

/// Largest `f32` strictly below 1. `tanh` saturates to exactly 1.0 in single
/// precision for pre-activations above ~9, so outputs are clamped here to
/// keep every component inside the open interval.
pub const OPEN_BOUND: f32 = 1.0 - f32::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_rnns: usize,
    /// Canonical channel count `K`.
    pub channels: usize,
    /// Canonical block side `s`.
    pub block: usize,
    /// 1 = single parent over the whole block; >1 = 2x2 merge tree.
    pub tree_depth: u32,
    pub master_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_rnns: 128,
            channels: 64,
            block: 8,
            tree_depth: 1,
            master_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_rnns == 0 {
            return Err(Error::Config("num_rnns must be at least 1".into()));
        }
        if self.channels == 0 || self.block == 0 {
            return Err(Error::Config("channels and block must be positive".into()));
        }
        if self.tree_depth == 0 {
            return Err(Error::Config("tree_depth must be at least 1".into()));
        }
        if self.is_multilevel() && Some(self.block) != 2usize.checked_pow(self.tree_depth) {
            return Err(Error::Config(format!(
                "multi-level tree of depth {} needs block side {}, got {}",
                self.tree_depth,
                1u64 << self.tree_depth.min(63),
                self.block
            )));
        }
        Ok(())
    }

    pub fn is_multilevel(&self) -> bool {
        self.tree_depth > 1
    }

    pub fn feature_len(&self) -> usize {
        self.num_rnns * self.channels
    }
}

/// One network's tied weight matrix and the key it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnWeights {
    matrix: Array2<f32>,
    key: StreamKey,
}

impl RnnWeights {
    /// Draws a `channels x (children * channels)` matrix from the stream
    /// keyed by `(master_seed, level, rnn_index)`.
    pub fn generate(
        channels: usize,
        children: usize,
        master_seed: u64,
        level: u8,
        rnn_index: usize,
    ) -> Self {
        let key = StreamKey::new(master_seed, Domain::RnnWeights, level, rnn_index as u64);
        let mut data = vec![0.0f32; channels * children * channels];
        key.fill_uniform_weights(&mut data);
        let matrix = Array2::from_shape_vec((channels, children * channels), data)
            .expect("buffer sized to shape");
        Self { matrix, key }
    }

    pub fn from_matrix(matrix: Array2<f32>, key: StreamKey) -> Self {
        Self { matrix, key }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f32> {
        self.matrix.view()
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn bounds(&self) -> (f32, f32) {
        (WEIGHT_LOW, WEIGHT_HIGH)
    }

    pub fn channels(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn generate_weights(cfg: &EncoderConfig, level: u8, rnn_index: usize) -> RnnWeights {
    let children = if cfg.is_multilevel() {
        4
    } else {
        cfg.block * cfg.block
    };
    RnnWeights::generate(cfg.channels, children, cfg.master_seed, level, rnn_index)
}

/// Below this many blocks, matrix-vector products beat a packed GEMM.
pub const GEMM_MIN_BATCH: usize = 8;

#[inline]
fn squash(x: f32) -> f32 {
    x.tanh().clamp(-OPEN_BOUND, OPEN_BOUND)
}

/// Child vector of a `K x s x s` block: positions row-major, channels fastest.
pub fn child_vector(c: &ActivationTensor) -> Result<Vec<f32>> {
    let (k, side) = c
        .maps_and_side()
        .ok_or_else(|| Error::Shape(format!("expected [K, s, s], got {:?}", c.shape())))?;
    let plane = side * side;
    let data = c.data();
    let mut v = vec![0.0f32; k * plane];
    for ch in 0..k {
        for p in 0..plane {
            v[p * k + ch] = data[ch * plane + p];
        }
    }
    Ok(v)
}

pub fn encode_single(c: &ActivationTensor, w: &RnnWeights) -> Result<Vec<f32>> {
    let v = child_vector(c)?;
    let m = w.matrix();
    if m.ncols() != v.len() || m.nrows() != c.shape()[0] {
        return Err(Error::Shape(format!(
            "weights are {}x{} but the block {:?} needs {}x{}",
            m.nrows(),
            m.ncols(),
            c.shape(),
            c.shape()[0],
            v.len()
        )));
    }
    Ok(m.rows()
        .into_iter()
        .map(|row| squash(row.iter().zip(&v).map(|(a, b)| a * b).sum()))
        .collect())
}

/// Merges 2x2 neighbourhoods with a shared `K x 4K` matrix until one node is
/// left. `depth` merge rounds are required to close an `s = 2^depth` grid.
pub fn encode_multilevel(
    c: &ActivationTensor,
    w_tied: &RnnWeights,
    depth: u32,
) -> Result<Vec<f32>> {
    let (k, side) = c
        .maps_and_side()
        .ok_or_else(|| Error::Shape(format!("expected [K, s, s], got {:?}", c.shape())))?;
    if depth == 0 || Some(side) != 2usize.checked_pow(depth) {
        return Err(Error::Shape(format!(
            "block side {side} does not close a 2x2 tree of depth {depth}"
        )));
    }
    let m = w_tied.matrix();
    if m.nrows() != k || m.ncols() != 4 * k {
        return Err(Error::Shape(format!(
            "tied weights are {}x{}, expected {k}x{}",
            m.nrows(),
            m.ncols(),
            4 * k
        )));
    }
    // nodes[(y * n + x) * k + ch]
    let mut nodes = child_vector(c)?;
    let mut n = side;
    let mut children = vec![0.0f32; 4 * k];
    while n > 1 {
        let half = n / 2;
        let mut next = vec![0.0f32; half * half * k];
        for py in 0..half {
            for px in 0..half {
                for (slot, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let src = ((2 * py + dy) * n + 2 * px + dx) * k;
                    children[slot * k..(slot + 1) * k].copy_from_slice(&nodes[src..src + k]);
                }
                let dst = (py * half + px) * k;
                for (row, out) in m.rows().into_iter().zip(&mut next[dst..dst + k]) {
                    *out = squash(row.iter().zip(&children).map(|(a, b)| a * b).sum());
                }
            }
        }
        nodes = next;
        n = half;
    }
    Ok(nodes)
}

/// Concatenated outputs of all `num_rnns` networks for one block.
///
/// Weight rows are drawn and applied one at a time, so the full matrices
/// are never held. Values equal the matching row of [`encode_batch`] on a
/// batch smaller than [`GEMM_MIN_BATCH`].
pub fn encode_level(c: &ActivationTensor, cfg: &EncoderConfig, level: u8) -> Result<Vec<f32>> {
    if cfg.is_multilevel() {
        let batch = encode_batch(std::slice::from_ref(c), cfg, level)?;
        return Ok(batch.row(0).to_vec());
    }
    cfg.validate()?;
    let k = c
        .maps_and_side()
        .ok_or_else(|| Error::Shape(format!("expected [K, s, s], got {:?}", c.shape())))?
        .0;
    let x = Array1::from(child_vector(c)?);
    let per_rnn: Vec<Vec<f32>> = (0..cfg.num_rnns)
        .into_par_iter()
        .map(|r| {
            let mut stream = StreamKey::new(cfg.master_seed, Domain::RnnWeights, level, r as u64)
                .weight_stream();
            let mut row = Array1::<f32>::zeros(x.len());
            (0..k)
                .map(|_| {
                    stream.fill(row.as_slice_mut().expect("owned row is contiguous"));
                    squash(row.dot(&x))
                })
                .collect()
        })
        .collect();
    Ok(per_rnn.concat())
}

/// Encodes many blocks of one level at once. Row `i` of the result is the
/// feature vector of `blocks[i]`.
pub fn encode_batch(
    blocks: &[ActivationTensor],
    cfg: &EncoderConfig,
    level: u8,
) -> Result<Array2<f32>> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::Shape("nothing to encode".into()))?;
    let (k, side) = first
        .maps_and_side()
        .ok_or_else(|| Error::Shape(format!("expected [K, s, s], got {:?}", first.shape())))?;
    LevelEncoder::new(cfg, level, k, side)?.encode(blocks)
}

/// All networks of one level with their weights materialized.
///
/// Work is split by network index and every network's product has the same
/// shape no matter how many worker threads run it, so results do not depend
/// on the schedule.
#[derive(Debug, Clone)]
pub struct LevelEncoder {
    cfg: EncoderConfig,
    level: u8,
    channels: usize,
    side: usize,
    weights: Vec<RnnWeights>,
}

impl LevelEncoder {
    pub fn new(cfg: &EncoderConfig, level: u8, channels: usize, side: usize) -> Result<Self> {
        cfg.validate()?;
        if channels == 0 || side == 0 {
            return Err(Error::Shape("empty block shape".into()));
        }
        if cfg.is_multilevel() && Some(side) != 2usize.checked_pow(cfg.tree_depth) {
            return Err(Error::Shape(format!(
                "block side {side} does not close a 2x2 tree of depth {}",
                cfg.tree_depth
            )));
        }
        let children = if cfg.is_multilevel() { 4 } else { side * side };
        let weights = (0..cfg.num_rnns)
            .into_par_iter()
            .map(|r| RnnWeights::generate(channels, children, cfg.master_seed, level, r))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            level,
            channels,
            side,
            weights,
        })
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn feature_len(&self) -> usize {
        self.cfg.num_rnns * self.channels
    }

    pub fn weights(&self) -> &[RnnWeights] {
        &self.weights
    }

    pub fn encode(&self, blocks: &[ActivationTensor]) -> Result<Array2<f32>> {
        let (k, side) = (self.channels, self.side);
        if let Some(bad) = blocks.iter().find(|b| b.maps_and_side() != Some((k, side))) {
            return Err(Error::Shape(format!(
                "level {} encoder expects [{k}, {side}, {side}] blocks, got {:?}",
                self.level,
                bad.shape()
            )));
        }
        let n = blocks.len();
        let per_rnn: Vec<Array2<f32>> = if self.cfg.is_multilevel() {
            self.weights
                .par_iter()
                .map(|w| {
                    let mut out = Array2::zeros((k, n));
                    for (i, b) in blocks.iter().enumerate() {
                        let p = encode_multilevel(b, w, self.cfg.tree_depth)?;
                        out.column_mut(i).assign(&ndarray::ArrayView1::from(&p));
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?
        } else {
            let dim = k * side * side;
            let vectors = blocks
                .iter()
                .map(|b| child_vector(b).map(Array1::from))
                .collect::<Result<Vec<_>>>()?;
            let children = (n >= GEMM_MIN_BATCH).then(|| {
                let mut m = Array2::<f32>::zeros((dim, n));
                for (mut col, v) in m.columns_mut().into_iter().zip(&vectors) {
                    col.assign(v);
                }
                m
            });
            self.weights
                .par_iter()
                .map(|w| {
                    let mut out = match &children {
                        Some(m) => w.matrix().dot(m),
                        None => {
                            let mut out = Array2::zeros((k, n));
                            for (mut col, v) in out.columns_mut().into_iter().zip(&vectors) {
                                col.assign(&w.matrix().dot(v));
                            }
                            out
                        }
                    };
                    out.mapv_inplace(squash);
                    Ok(out)
                })
                .collect::<Result<_>>()?
        };

        let mut features = Array2::<f32>::zeros((n, self.feature_len()));
        for (r, p) in per_rnn.into_iter().enumerate() {
            features
                .slice_mut(s![.., r * k..(r + 1) * k])
                .assign(&p.t());
        }
        debug_assert_eq!(features.len_of(Axis(1)), self.feature_len());
        Ok(features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block(k: usize, side: usize, seed: u64, scale: f32) -> ActivationTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..k * side * side)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        ActivationTensor::new(vec![k, side, side], data).unwrap()
    }

    fn small_cfg(num_rnns: usize, k: usize, side: usize) -> EncoderConfig {
        EncoderConfig {
            num_rnns,
            channels: k,
            block: side,
            tree_depth: 1,
            master_seed: 9,
        }
    }

    #[test]
    fn weights_within_bounds_and_deterministic() {
        let cfg = EncoderConfig::default();
        let w = generate_weights(&cfg, 3, 17);
        assert_eq!(w.matrix().dim(), (64, 4096));
        let (lo, hi) = w.bounds();
        assert!(w.matrix().iter().all(|&v| v >= lo && v <= hi));
        assert_eq!(w, generate_weights(&cfg, 3, 17));
        assert_ne!(w.matrix(), generate_weights(&cfg, 4, 17).matrix());
    }

    #[test]
    fn weight_sample_mean_matches_uniform_moment() {
        // 16 matrices of 64x1024 = 1_048_576 draws
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for r in 0..16 {
            let w = RnnWeights::generate(64, 16, 123, 1, r);
            sum += w.matrix().iter().map(|&v| f64::from(v)).sum::<f64>();
            count += w.matrix().len();
        }
        let mean = sum / count as f64;
        let bound = 3.0 * (0.2 / 12f64.sqrt()) / (count as f64).sqrt();
        assert!(mean.abs() <= bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn zero_weights_give_zero_parent() {
        let w = RnnWeights::from_matrix(
            Array2::zeros((4, 16)),
            StreamKey::new(0, Domain::RnnWeights, 1, 0),
        );
        let p = encode_single(&random_block(4, 2, 1, 5.0), &w).unwrap();
        assert_eq!(p, vec![0.0; 4]);
    }

    #[test]
    fn scalar_evaluation() {
        let w = RnnWeights::from_matrix(
            Array2::from_elem((1, 1), 0.1),
            StreamKey::new(0, Domain::RnnWeights, 1, 0),
        );
        let c = ActivationTensor::new(vec![1, 1, 1], vec![5.0]).unwrap();
        let p = encode_single(&c, &w).unwrap();
        assert!((f64::from(p[0]) - 0.5f64.tanh()).abs() < 1e-6);
        assert!((p[0] - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn saturated_inputs_stay_open() {
        let w = RnnWeights::from_matrix(
            Array2::from_elem((2, 8), 0.1),
            StreamKey::new(0, Domain::RnnWeights, 1, 0),
        );
        let c = ActivationTensor::new(vec![2, 2, 2], vec![1e4; 8]).unwrap();
        let p = encode_single(&c, &w).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let w = RnnWeights::generate(4, 4, 0, 1, 0);
        assert!(matches!(
            encode_single(&random_block(4, 3, 1, 1.0), &w),
            Err(Error::Shape(_))
        ));
        assert!(encode_multilevel(&random_block(4, 6, 1, 1.0), &w, 2).is_err());
        assert!(encode_multilevel(&random_block(4, 4, 1, 1.0), &w, 3).is_err());
    }

    #[test]
    fn child_vector_ordering() {
        // K=2, s=2: channel 0 = [0,1,2,3], channel 1 = [10,11,12,13]
        let c = ActivationTensor::new(
            vec![2, 2, 2],
            vec![0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0],
        )
        .unwrap();
        assert_eq!(
            child_vector(&c).unwrap(),
            vec![0.0, 10.0, 1.0, 11.0, 2.0, 12.0, 3.0, 13.0]
        );
    }

    #[test]
    fn multilevel_depth_one_matches_single() {
        for seed in 0..10 {
            let c = random_block(5, 2, seed, 2.0);
            let w = RnnWeights::generate(5, 4, seed, 2, 0);
            assert_eq!(
                encode_multilevel(&c, &w, 1).unwrap(),
                encode_single(&c, &w).unwrap()
            );
        }
    }

    #[test]
    fn multilevel_three_rounds_on_eight_by_eight() {
        let c = random_block(6, 8, 4, 1.0);
        let w = RnnWeights::generate(6, 4, 1, 1, 0);
        let p = encode_multilevel(&c, &w, 3).unwrap();
        assert_eq!(p.len(), 6);
        let zero = RnnWeights::from_matrix(Array2::zeros((6, 24)), w.key());
        assert_eq!(encode_multilevel(&c, &zero, 3).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn multilevel_matches_manual_tree() {
        // Round-by-round reference on a 4x4 grid, built from encode_single on
        // 2x2 sub-blocks.
        let k = 3;
        let c = random_block(k, 4, 8, 1.5);
        let w = RnnWeights::generate(k, 4, 2, 1, 0);
        let mut parents = vec![0.0f32; k * 4];
        for py in 0..2 {
            for px in 0..2 {
                let mut sub = vec![0.0f32; k * 4];
                for ch in 0..k {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            sub[ch * 4 + dy * 2 + dx] =
                                c.data()[ch * 16 + (2 * py + dy) * 4 + 2 * px + dx];
                        }
                    }
                }
                let sub = ActivationTensor::new(vec![k, 2, 2], sub).unwrap();
                let p = encode_single(&sub, &w).unwrap();
                for ch in 0..k {
                    parents[ch * 4 + py * 2 + px] = p[ch];
                }
            }
        }
        let top = ActivationTensor::new(vec![k, 2, 2], parents).unwrap();
        let expect = encode_single(&top, &w).unwrap();
        let got = encode_multilevel(&c, &w, 2).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn default_level_dimension() {
        let cfg = EncoderConfig::default();
        let f = encode_level(&random_block(64, 8, 1, 1.0), &cfg, 1).unwrap();
        assert_eq!(f.len(), 8192);
        let one = EncoderConfig { num_rnns: 1, ..cfg };
        assert_eq!(
            encode_level(&random_block(64, 8, 1, 1.0), &one, 1)
                .unwrap()
                .len(),
            64
        );
    }

    #[test]
    fn streamed_single_block_matches_small_batch_exactly() {
        let cfg = small_cfg(6, 8, 3);
        let blocks: Vec<_> = (0..GEMM_MIN_BATCH + 2)
            .map(|i| random_block(8, 3, i as u64, 1.5))
            .collect();
        let big = encode_batch(&blocks, &cfg, 4).unwrap();
        for (i, b) in blocks.iter().enumerate() {
            let one = encode_level(b, &cfg, 4).unwrap();
            assert_eq!(
                one,
                encode_batch(std::slice::from_ref(b), &cfg, 4)
                    .unwrap()
                    .row(0)
                    .to_vec()
            );
            for (a, c) in one.iter().zip(big.row(i)) {
                assert!((a - c).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn batch_matches_per_network_encoding() {
        let cfg = small_cfg(5, 4, 3);
        let blocks: Vec<_> = (0..7).map(|i| random_block(4, 3, i, 2.0)).collect();
        let batch = encode_batch(&blocks, &cfg, 2).unwrap();
        for (i, b) in blocks.iter().enumerate() {
            for r in 0..cfg.num_rnns {
                let p = encode_single(b, &generate_weights(&cfg, 2, r)).unwrap();
                for (ch, v) in p.iter().enumerate() {
                    assert!((batch[[i, r * 4 + ch]] - v).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn multilevel_batch_uses_tied_weights() {
        let cfg = EncoderConfig {
            num_rnns: 3,
            channels: 4,
            block: 4,
            tree_depth: 2,
            master_seed: 1,
        };
        let b = random_block(4, 4, 3, 1.0);
        let f = encode_level(&b, &cfg, 5).unwrap();
        assert_eq!(f.len(), 12);
        let p1 = encode_multilevel(&b, &generate_weights(&cfg, 5, 1), 2).unwrap();
        assert_eq!(&f[4..8], p1.as_slice());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let cfg = small_cfg(16, 8, 4);
        let blocks: Vec<_> = (0..9).map(|i| random_block(8, 4, i, 3.0)).collect();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let a = one.install(|| encode_batch(&blocks, &cfg, 1).unwrap());
        let b = many.install(|| encode_batch(&blocks, &cfg, 1).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig {
            num_rnns: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EncoderConfig {
            tree_depth: 3,
            ..Default::default()
        }
        .validate()
        .is_ok());
        assert!(EncoderConfig {
            tree_depth: 2,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn outputs_strictly_inside_unit_interval(seed in any::<u64>(), scale in 0.01f32..100.0) {
            let cfg = small_cfg(3, 4, 2);
            let f = encode_level(&random_block(4, 2, seed, scale), &cfg, 1).unwrap();
            prop_assert!(f.iter().all(|v| v.abs() < 1.0));
        }

        #[test]
        fn lipschitz_bound(seed in any::<u64>(), eps in 1e-4f32..1e-2) {
            let (k, side) = (4usize, 3usize);
            let c = random_block(k, side, seed, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
            let shifted: Vec<f32> = c.data().iter().map(|v| v + rng.random_range(-eps..eps)).collect();
            let c2 = ActivationTensor::new(vec![k, side, side], shifted).unwrap();
            let w = RnnWeights::generate(k, side * side, seed, 1, 0);
            let p1 = encode_single(&c, &w).unwrap();
            let p2 = encode_single(&c2, &w).unwrap();
            let bound = (side * side * k) as f32 * 0.1 * eps;
            for (a, b) in p1.iter().zip(&p2) {
                prop_assert!((a - b).abs() <= bound * (1.0 + 1e-4) + 1e-6);
            }
        }
    }
}
