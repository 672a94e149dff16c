//! Synthetic activation tensors with class structure, for tests, demos and
//! benchmarks that must run without a backbone.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::{Domain, StreamKey};
use crate::tensor_io::{
    write_tensor, ActivationTensor, DatasetManifest, Modality, SampleRecord, SplitRole,
};

/// How the `noisy` classes of a modality are damaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Corruption {
    /// Training samples get a uniformly drawn label; test samples and all
    /// observations stay clean.
    #[default]
    FlippedTrainLabels,
    /// Every sample is drawn around the mean of a uniformly chosen class
    /// while keeping its own label.
    ConfusedMeans,
}

/// A classification task whose samples are `class_mean + gaussian noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Instances per class; samples are dealt round-robin.
    pub instances_per_class: usize,
    pub channels: usize,
    pub side: usize,
    /// Standard deviation of each class mean component.
    pub signal: f32,
    pub noise: f32,
    pub corruption: Corruption,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            classes: 5,
            train_per_class: 100,
            test_per_class: 40,
            instances_per_class: 4,
            channels: 64,
            side: 8,
            signal: 0.3,
            noise: 0.3,
            corruption: Corruption::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub sample_id: String,
    pub category: usize,
    pub instance_id: String,
    pub role: SplitRole,
    pub tensor: ActivationTensor,
}

impl SyntheticTask {
    pub fn shape(&self) -> Vec<usize> {
        vec![self.channels, self.side, self.side]
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config(
                "synthetic task needs 2+ classes and samples in both roles".into(),
            ));
        }
        if self.instances_per_class == 0 || self.channels == 0 || self.side == 0 {
            return Err(Error::Config("synthetic task has an empty extent".into()));
        }
        if !(self.signal >= 0.0 && self.noise >= 0.0) {
            return Err(Error::Config(
                "signal and noise must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn class_means(&self, stream: u64) -> Vec<Vec<f32>> {
        let len = self.channels * self.side * self.side;
        let normal = Normal::new(0.0f32, self.signal).expect("finite sigma");
        (0..self.classes)
            .map(|c| {
                let mut rng =
                    StreamKey::new(self.seed, Domain::Synthetic, 0, (stream << 32) | c as u64)
                        .rng();
                (0..len).map(|_| normal.sample(&mut rng)).collect()
            })
            .collect()
    }

    /// One modality; the classes in `noisy` are damaged as set by
    /// `corruption`.
    pub fn generate(&self, noisy: &[usize]) -> Result<Vec<SyntheticSample>> {
        self.generate_stream(0, noisy)
    }

    /// Two modalities over the same sample ids and labels with independent
    /// class means and noise.
    pub fn generate_pair(
        &self,
        rgb_noisy: &[usize],
        depth_noisy: &[usize],
    ) -> Result<(Vec<SyntheticSample>, Vec<SyntheticSample>)> {
        Ok((
            self.generate_stream(1, rgb_noisy)?,
            self.generate_stream(2, depth_noisy)?,
        ))
    }

    fn generate_stream(&self, stream: u64, noisy: &[usize]) -> Result<Vec<SyntheticSample>> {
        self.validate()?;
        if let Some(c) = noisy.iter().find(|&&c| c >= self.classes) {
            return Err(Error::Config(format!("noisy class {c} is out of range")));
        }
        let means = self.class_means(stream);
        let normal = Normal::new(0.0f32, self.noise).expect("finite sigma");
        let mut rng = StreamKey::new(self.seed, Domain::Synthetic, 1, stream).rng();
        let mut pick = StreamKey::new(self.seed, Domain::Synthetic, 2, stream).rng();
        let per_class = self.train_per_class + self.test_per_class;
        let mut out = Vec::with_capacity(self.classes * per_class);
        for c in 0..self.classes {
            for j in 0..per_class {
                let train = j < self.train_per_class;
                let hit = noisy.contains(&c);
                let mut source = c;
                let mut label = c;
                match self.corruption {
                    Corruption::ConfusedMeans if hit => source = pick.random_range(0..self.classes),
                    Corruption::FlippedTrainLabels if hit && train => {
                        label = pick.random_range(0..self.classes)
                    }
                    _ => {}
                }
                let data = means[source]
                    .iter()
                    .map(|m| m + normal.sample(&mut rng))
                    .collect();
                out.push(SyntheticSample {
                    sample_id: format!("c{c:02}_s{j:04}"),
                    category: label,
                    instance_id: format!("c{c:02}_i{}", j % self.instances_per_class),
                    role: if train {
                        SplitRole::Train
                    } else {
                        SplitRole::Test
                    },
                    tensor: ActivationTensor::new(self.shape(), data)?,
                });
            }
        }
        Ok(out)
    }
}

/// Writes each sample's tensor as `<dir>/<modality>/<sample_id>.npy`, stored
/// in the given level columns, plus `<dir>/manifest.csv`.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    modalities: &[(Modality, &[SyntheticSample])],
    levels: &[u8],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut records = Vec::new();
    for (modality, samples) in modalities {
        let sub = dir.join(modality.as_str());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for s in *samples {
            let rel = PathBuf::from(modality.as_str()).join(format!("{}.npy", s.sample_id));
            write_tensor(&s.tensor, dir.join(&rel))?;
            let mut level_paths: [Option<PathBuf>; 7] = Default::default();
            for &l in levels {
                let slot = level_paths
                    .get_mut(usize::from(l).wrapping_sub(1))
                    .ok_or_else(|| Error::Config(format!("level {l} is out of range")))?;
                *slot = Some(rel.clone());
            }
            records.push(SampleRecord {
                sample_id: s.sample_id.clone(),
                category: s.category,
                instance_id: s.instance_id.clone(),
                modality: *modality,
                split_role: s.role,
                level_paths,
            });
        }
    }
    let manifest = DatasetManifest::new(records, dir)?;
    let path = dir.join("manifest.csv");
    manifest.write_csv(&path)?;
    Ok(path)
}
