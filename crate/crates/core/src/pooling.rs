//! Level preprocessing: reshape, random weighted pooling and the max/average
//! pooling baselines.
//!
//! A pooling area is either a non-overlapping `w x w` window of one map
//! (spatial mode, `w = s / s'`) or the same pixel across a contiguous group
//! of `r = K / K'` maps (maps mode). Random weighted pooling keeps one fixed
//! U[-0.1, 0.1] weight per input element and outputs `sum_i w_i * c_i` over
//! each area, accumulated in double precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{Domain, StreamKey};
use crate::tensor_io::{ActivationTensor, LevelSpec, Preprocess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Maps,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMethod {
    #[default]
    Random,
    Max,
    Average,
}

impl PoolMethod {
    pub const ALL: [PoolMethod; 3] = [PoolMethod::Random, PoolMethod::Max, PoolMethod::Average];

    pub fn as_str(self) -> &'static str {
        match self {
            PoolMethod::Random => "random",
            PoolMethod::Max => "max",
            PoolMethod::Average => "average",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub mode: PoolMode,
    /// `(K, s)` of the input.
    pub source: (usize, usize),
    /// `(K', s')` of the output.
    pub target: (usize, usize),
}

impl PoolSpec {
    pub fn new(mode: PoolMode, source: (usize, usize), target: (usize, usize)) -> Result<Self> {
        let (k, s) = source;
        let (tk, ts) = target;
        let ok = match mode {
            PoolMode::Maps => tk > 0 && tk < k && k % tk == 0 && ts == s,
            PoolMode::Spatial => ts > 0 && tk == k && ts < s && s % ts == 0,
        };
        if !ok || k == 0 || s == 0 {
            return Err(Error::Shape(format!(
                "{mode:?} pooling from {source:?} to {target:?} violates the divisibility rule"
            )));
        }
        Ok(Self {
            mode,
            source,
            target,
        })
    }

    pub fn maps(k: usize, s: usize, target_k: usize) -> Result<Self> {
        Self::new(PoolMode::Maps, (k, s), (target_k, s))
    }

    pub fn spatial(k: usize, s: usize, target_s: usize) -> Result<Self> {
        Self::new(PoolMode::Spatial, (k, s), (k, target_s))
    }

    pub fn input_len(&self) -> usize {
        self.source.0 * self.source.1 * self.source.1
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.target.0, self.target.1, self.target.1]
    }

    /// Number of input elements in each pooling area.
    pub fn area(&self) -> usize {
        match self.mode {
            PoolMode::Maps => self.source.0 / self.target.0,
            PoolMode::Spatial => {
                let w = self.source.1 / self.target.1;
                w * w
            }
        }
    }

    /// Calls `f(out_index, member_indices)` for every output element, with
    /// members in a fixed order (map order, or row-major inside a window).
    fn for_each_area(&self, mut f: impl FnMut(usize, &[usize])) {
        let (k, s) = self.source;
        let (tk, ts) = self.target;
        let mut members = Vec::with_capacity(self.area());
        match self.mode {
            PoolMode::Maps => {
                let r = k / tk;
                let plane = s * s;
                for g in 0..tk {
                    for p in 0..plane {
                        members.clear();
                        members.extend((0..r).map(|q| (g * r + q) * plane + p));
                        f(g * plane + p, &members);
                    }
                }
            }
            PoolMode::Spatial => {
                let w = s / ts;
                for m in 0..k {
                    for oy in 0..ts {
                        for ox in 0..ts {
                            members.clear();
                            for a in 0..w {
                                let row = (m * s + oy * w + a) * s + ox * w;
                                members.extend(row..row + w);
                            }
                            f((m * ts + oy) * ts + ox, &members);
                        }
                    }
                }
            }
        }
    }
}

/// One fixed weight per input element, shared across every sample pooled
/// with the same spec.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolWeights {
    spec: PoolSpec,
    weights: Vec<f32>,
}

impl PoolWeights {
    pub fn draw(spec: PoolSpec, key: StreamKey) -> Self {
        let mut weights = vec![0.0; spec.input_len()];
        key.fill_uniform_weights(&mut weights);
        Self { spec, weights }
    }

    pub fn constant(spec: PoolSpec, value: f32) -> Self {
        Self {
            spec,
            weights: vec![value; spec.input_len()],
        }
    }

    /// Weights laid out like the input tensor.
    pub fn from_vec(spec: PoolSpec, weights: Vec<f32>) -> Result<Self> {
        if weights.len() != spec.input_len() {
            return Err(Error::Shape(format!(
                "{} pooling weights for an input of {} elements",
                weights.len(),
                spec.input_len()
            )));
        }
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &PoolSpec {
        &self.spec
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.weights
    }
}

fn check_input(t: &ActivationTensor, spec: &PoolSpec) -> Result<()> {
    match t.maps_and_side() {
        Some(ks) if ks == spec.source => Ok(()),
        _ => Err(Error::Shape(format!(
            "tensor shape {:?} does not match pooling source {:?}",
            t.shape(),
            spec.source
        ))),
    }
}

fn pool_with(
    t: &ActivationTensor,
    spec: &PoolSpec,
    mut reduce: impl FnMut(&[f32], &[usize]) -> f32,
) -> Result<ActivationTensor> {
    check_input(t, spec)?;
    let data = t.data();
    let mut out = vec![0.0f32; spec.target.0 * spec.target.1 * spec.target.1];
    spec.for_each_area(|o, members| out[o] = reduce(data, members));
    ActivationTensor::with_level(spec.output_shape(), out, t.level_tag())
}

pub fn random_pool(t: &ActivationTensor, weights: &PoolWeights) -> Result<ActivationTensor> {
    let w = weights.as_slice();
    pool_with(t, weights.spec(), |data, members| {
        members
            .iter()
            .map(|&i| f64::from(w[i]) * f64::from(data[i]))
            .sum::<f64>() as f32
    })
}

/// Random weighted pooling with weights drawn from the `(seed, level)` stream.
pub fn random_pool_seeded(
    t: &ActivationTensor,
    spec: PoolSpec,
    master_seed: u64,
    level: u8,
) -> Result<ActivationTensor> {
    random_pool(
        t,
        &PoolWeights::draw(spec, pool_key(spec.mode, master_seed, level)),
    )
}

pub fn max_pool(t: &ActivationTensor, spec: &PoolSpec) -> Result<ActivationTensor> {
    pool_with(t, spec, |data, members| {
        members
            .iter()
            .map(|&i| data[i])
            .fold(f32::NEG_INFINITY, f32::max)
    })
}

pub fn avg_pool(t: &ActivationTensor, spec: &PoolSpec) -> Result<ActivationTensor> {
    let n = spec.area() as f64;
    pool_with(t, spec, |data, members| {
        (members.iter().map(|&i| f64::from(data[i])).sum::<f64>() / n) as f32
    })
}

pub fn reshape_to_form(t: ActivationTensor, target: (usize, usize)) -> Result<ActivationTensor> {
    let (k, s) = target;
    t.reshaped(vec![k, s, s])
}

fn pool_key(mode: PoolMode, master_seed: u64, level: u8) -> StreamKey {
    let domain = match mode {
        PoolMode::Maps => Domain::PoolMaps,
        PoolMode::Spatial => Domain::PoolSpatial,
    };
    StreamKey::new(master_seed, domain, level, 0)
}

#[derive(Debug, Clone)]
enum Step {
    Reshape((usize, usize)),
    Pool(PoolSpec, Option<PoolWeights>),
}

/// A level's preprocessing chain with its random weights materialized once.
#[derive(Debug, Clone)]
pub struct LevelPreprocessor {
    spec: LevelSpec,
    method: PoolMethod,
    steps: Vec<Step>,
}

impl LevelPreprocessor {
    pub fn new(spec: &LevelSpec, method: PoolMethod, master_seed: u64) -> Result<Self> {
        spec.validate()?;
        let [tk, ts, _] = spec.target_shape;
        let mut steps = Vec::new();
        let weights_for = |ps: PoolSpec| {
            (method == PoolMethod::Random)
                .then(|| PoolWeights::draw(ps, pool_key(ps.mode, master_seed, spec.level)))
        };
        match spec.preprocess {
            Preprocess::Reshape => steps.push(Step::Reshape((tk, ts))),
            Preprocess::PoolMaps | Preprocess::PoolSpatial | Preprocess::PoolBoth => {
                let (k, s) = (spec.raw_shape[0], spec.raw_shape[1]);
                let mut cur = (k, s);
                if matches!(spec.preprocess, Preprocess::PoolMaps | Preprocess::PoolBoth) {
                    let ps = PoolSpec::maps(cur.0, cur.1, tk)?;
                    steps.push(Step::Pool(ps, weights_for(ps)));
                    cur = ps.target;
                }
                if matches!(
                    spec.preprocess,
                    Preprocess::PoolSpatial | Preprocess::PoolBoth
                ) {
                    let ps = PoolSpec::spatial(cur.0, cur.1, ts)?;
                    steps.push(Step::Pool(ps, weights_for(ps)));
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            method,
            steps,
        })
    }

    /// Replaces the random weights of every pooling step with a constant.
    pub fn with_constant_weights(mut self, value: f32) -> Self {
        for step in &mut self.steps {
            if let Step::Pool(ps, w) = step {
                *w = Some(PoolWeights::constant(*ps, value));
            }
        }
        self.method = PoolMethod::Random;
        self
    }

    /// Sets every pooling step's weights to `1 / |area|`.
    pub fn with_mean_weights(mut self) -> Self {
        for step in &mut self.steps {
            if let Step::Pool(ps, w) = step {
                *w = Some(PoolWeights::constant(*ps, 1.0 / ps.area() as f32));
            }
        }
        self.method = PoolMethod::Random;
        self
    }

    pub fn spec(&self) -> &LevelSpec {
        &self.spec
    }

    pub fn pool_specs(&self) -> Vec<PoolSpec> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Pool(ps, _) => Some(*ps),
                Step::Reshape(_) => None,
            })
            .collect()
    }

    pub fn apply(&self, t: &ActivationTensor) -> Result<ActivationTensor> {
        if t.shape() != self.spec.raw_shape.as_slice() {
            return Err(Error::Shape(format!(
                "level {} expects raw shape {:?}, got {:?}",
                self.spec.level,
                self.spec.raw_shape,
                t.shape()
            )));
        }
        let mut cur = t.clone();
        cur.set_level_tag(self.spec.level);
        for step in &self.steps {
            cur = match step {
                Step::Reshape(form) => reshape_to_form(cur, *form)?,
                Step::Pool(_, Some(w)) => random_pool(&cur, w)?,
                Step::Pool(ps, None) => match self.method {
                    PoolMethod::Max => max_pool(&cur, ps)?,
                    PoolMethod::Average => avg_pool(&cur, ps)?,
                    PoolMethod::Random => unreachable!("random steps always carry weights"),
                },
            };
        }
        Ok(cur)
    }
}

/// Maps a raw level output into its canonical form.
pub fn preprocess_level(
    t: &ActivationTensor,
    spec: &LevelSpec,
    method: PoolMethod,
    master_seed: u64,
) -> Result<ActivationTensor> {
    LevelPreprocessor::new(spec, method, master_seed)?.apply(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(shape: Vec<usize>, data: Vec<f32>) -> ActivationTensor {
        ActivationTensor::new(shape, data).unwrap()
    }

    #[test]
    fn spatial_window_dot_product() {
        let spec = PoolSpec::spatial(1, 2, 1).unwrap();
        let w = PoolWeights::from_vec(spec, vec![0.1, -0.1, 0.05, 0.02]).unwrap();
        let t = tensor(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let out = random_pool(&t, &w).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        // 1*0.1 - 2*0.1 + 3*0.05 + 4*0.02
        assert!((out.data()[0] - 0.13).abs() < 1e-6);
    }

    #[test]
    fn spatial_window_members_are_row_major_blocks() {
        // 4x4 map into 2x2: window (0,1) covers columns 2..4 of rows 0..2.
        let spec = PoolSpec::spatial(1, 4, 2).unwrap();
        let t = tensor(vec![1, 4, 4], (0..16).map(|v| v as f32).collect());
        let out = max_pool(&t, &spec).unwrap();
        assert_eq!(out.data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let spec = PoolSpec::spatial(3, 4, 2).unwrap();
        let t = ActivationTensor::zeros(vec![3, 4, 4]).unwrap();
        let out = random_pool_seeded(&t, spec, 5, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maps_mode_forced_half_weights() {
        let spec = PoolSpec::maps(4, 3, 2).unwrap();
        let w = PoolWeights::constant(spec, 0.5);
        let mut data = vec![0.0; 4 * 9];
        // maps 0 and 1 (group 0) all ones, maps 2 and 3 all zeros
        data[..18].iter_mut().for_each(|v| *v = 1.0);
        let out = random_pool(&tensor(vec![4, 3, 3], data), &w).unwrap();
        assert_eq!(out.shape(), &[2, 3, 3]);
        assert!(out.data()[..9].iter().all(|&v| v == 1.0));
        assert!(out.data()[9..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn max_and_average_on_window() {
        let spec = PoolSpec::spatial(1, 2, 1).unwrap();
        let t = tensor(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(max_pool(&t, &spec).unwrap().data(), &[4.0]);
        assert_eq!(avg_pool(&t, &spec).unwrap().data(), &[2.5]);
    }

    #[test]
    fn constant_tensor_unchanged_by_baselines() {
        let t = tensor(vec![8, 4, 4], vec![3.5; 128]);
        for spec in [
            PoolSpec::spatial(8, 4, 2).unwrap(),
            PoolSpec::maps(8, 4, 2).unwrap(),
        ] {
            assert!(max_pool(&t, &spec)
                .unwrap()
                .data()
                .iter()
                .all(|&v| v == 3.5));
            assert!(avg_pool(&t, &spec)
                .unwrap()
                .data()
                .iter()
                .all(|&v| v == 3.5));
        }
    }

    #[test]
    fn divisibility_violations() {
        assert!(PoolSpec::spatial(4, 7, 2).is_err());
        assert!(PoolSpec::maps(6, 4, 4).is_err());
        assert!(PoolSpec::maps(4, 4, 4).is_err());
        let spec = PoolSpec::spatial(2, 4, 2).unwrap();
        let wrong = ActivationTensor::zeros(vec![2, 6, 6]).unwrap();
        assert!(matches!(max_pool(&wrong, &spec), Err(Error::Shape(_))));
    }

    #[test]
    fn reshape_rules() {
        let flat = ActivationTensor::zeros(vec![4096]).unwrap();
        assert_eq!(reshape_to_form(flat, (64, 8)).unwrap().shape(), &[64, 8, 8]);
        let big = ActivationTensor::zeros(vec![256, 14, 14]).unwrap();
        assert!(matches!(
            reshape_to_form(big, (64, 8)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn preprocess_shape_chain() {
        let ls = LevelSpec::new(2, vec![256, 56, 56], [64, 8, 8], Preprocess::PoolBoth).unwrap();
        let pre = LevelPreprocessor::new(&ls, PoolMethod::Random, 1).unwrap();
        let specs = pre.pool_specs();
        assert_eq!(specs.len(), 2);
        assert_eq!((specs[0].mode, specs[0].target), (PoolMode::Maps, (64, 56)));
        assert_eq!(
            (specs[1].mode, specs[1].target),
            (PoolMode::Spatial, (64, 8))
        );
        assert_eq!(specs[1].area(), 49);
        let t = ActivationTensor::zeros(vec![256, 56, 56]).unwrap();
        let out = pre.apply(&t).unwrap();
        assert_eq!(out.shape(), &[64, 8, 8]);
        assert_eq!(out.level_tag(), 2);
    }

    #[test]
    fn preprocess_flat_is_pure_reshape() {
        let ls = LevelSpec::new(7, vec![4096], [64, 8, 8], Preprocess::Reshape).unwrap();
        let data: Vec<f32> = (0..4096).map(|i| (i as f32).sin()).collect();
        let t = tensor(vec![4096], data.clone());
        let out = preprocess_level(&t, &ls, PoolMethod::Random, 3).unwrap();
        assert_eq!(out.shape(), &[64, 8, 8]);
        assert_eq!(out.data(), data.as_slice());
    }

    #[test]
    fn preprocess_rejects_wrong_raw_shape() {
        let ls = LevelSpec::new(1, vec![64, 16, 16], [64, 8, 8], Preprocess::PoolSpatial).unwrap();
        let t = ActivationTensor::zeros(vec![64, 8, 8]).unwrap();
        assert!(preprocess_level(&t, &ls, PoolMethod::Max, 0).is_err());
    }

    #[test]
    fn seeded_weights_are_deterministic_and_bounded() {
        let spec = PoolSpec::maps(8, 4, 2).unwrap();
        let key = pool_key(PoolMode::Maps, 11, 3);
        let a = PoolWeights::draw(spec, key);
        assert_eq!(a, PoolWeights::draw(spec, key));
        assert!(a.as_slice().iter().all(|w| (-0.1..=0.1).contains(w)));
    }

    fn arb_spec() -> impl Strategy<Value = PoolSpec> {
        prop_oneof![
            (1usize..5, 1usize..4, 2usize..4).prop_map(|(k, ts, f)| PoolSpec::spatial(
                k,
                ts * f,
                ts
            )
            .unwrap()),
            (1usize..4, 2usize..4, 1usize..6)
                .prop_map(|(tk, f, s)| PoolSpec::maps(tk * f, s, tk).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn random_pool_is_linear(
            spec in arb_spec(),
            seed in any::<u64>(),
            a in -3.0f32..3.0,
            b in -3.0f32..3.0,
            raw in proptest::collection::vec(-5.0f32..5.0, 2 * 6 * 12 * 12),
        ) {
            let n = spec.input_len();
            let (k, s) = spec.source;
            let t1 = tensor(vec![k, s, s], raw[..n].to_vec());
            let t2 = tensor(vec![k, s, s], raw[n..2 * n].to_vec());
            let mix = tensor(
                vec![k, s, s],
                t1.data().iter().zip(t2.data()).map(|(x, y)| a * x + b * y).collect(),
            );
            let w = PoolWeights::draw(spec, StreamKey::new(seed, Domain::PoolMaps, 1, 0));
            let p1 = random_pool(&t1, &w).unwrap();
            let p2 = random_pool(&t2, &w).unwrap();
            let pm = random_pool(&mix, &w).unwrap();
            for ((m, x), y) in pm.data().iter().zip(p1.data()).zip(p2.data()) {
                let expect = a * x + b * y;
                prop_assert!((m - expect).abs() <= 1e-5 * (1.0 + expect.abs()) + 1e-5);
            }
        }

        #[test]
        fn mode_shape_laws(spec in arb_spec()) {
            let (k, s) = spec.source;
            let t = ActivationTensor::zeros(vec![k, s, s]).unwrap();
            for out in [max_pool(&t, &spec).unwrap(), avg_pool(&t, &spec).unwrap()] {
                match spec.mode {
                    PoolMode::Maps => prop_assert_eq!(&out.shape()[1..], &[s, s]),
                    PoolMode::Spatial => prop_assert_eq!(out.shape()[0], k),
                }
            }
        }
    }
}
