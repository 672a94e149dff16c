use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::PoolingOptions;
use crate::error::{Error, Result};
use crate::pooling::{LevelPreprocessor, PoolMethod};
use crate::rnn::{EncoderConfig, LevelEncoder};
use crate::tensor_io::{npy, ActivationTensor, DatasetManifest, LevelSpec, Modality, SampleRecord};

/// Samples preprocessed and encoded together; bounds peak memory.
const CHUNK: usize = 256;
const COMPLETE_MARKER: &str = "complete";
const IDS_FILE: &str = "ids.txt";

/// Encoded features of one modality at one level, one row per record in
/// manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub modality: Modality,
    pub level: u8,
    pub sample_ids: Vec<String>,
    pub features: Array2<f32>,
    /// Where the per-sample files live, when caching is on.
    pub cache_dir: Option<PathBuf>,
    pub from_cache: bool,
}

#[derive(Serialize)]
struct CacheSlice<'a> {
    format: u32,
    modality: &'a str,
    encoder: &'a EncoderConfig,
    level: &'a LevelSpec,
    pooling: PoolingOptions,
}

/// Loads a level's raw tensors, maps them to canonical blocks and encodes
/// them. With `cache_root` set, results are stored under a directory named
/// by the hash of the configuration slice and the input bytes, and an
/// existing complete directory is read back instead of recomputed.
pub fn level_features(
    manifest: &DatasetManifest,
    modality: Modality,
    spec: &LevelSpec,
    pooling: PoolingOptions,
    encoder: &EncoderConfig,
    cache_root: Option<&Path>,
) -> Result<FeatureSet> {
    let records: Vec<&SampleRecord> = manifest.records_for(modality).collect();
    if records.is_empty() {
        return Err(Error::Config(format!("manifest has no {modality} records")));
    }
    let level = spec.level;
    let sample_ids: Vec<String> = records.iter().map(|r| r.sample_id.clone()).collect();
    let paths: Vec<PathBuf> = records
        .iter()
        .map(|r| {
            r.level_path(level)
                .map(|p| manifest.resolve(p))
                .ok_or_else(|| {
                    Error::Config(format!("sample {} has no level {level} file", r.sample_id))
                        .in_stage("load", format!("{modality} level {level}"))
                })
        })
        .collect::<Result<_>>()?;

    let cache_dir = match cache_root {
        Some(root) => {
            let key = cache_key(modality, spec, pooling, encoder, &sample_ids, &paths)?;
            Some(
                root.join(modality.as_str())
                    .join(format!("L{level}"))
                    .join(&key[..24]),
            )
        }
        None => None,
    };
    if let Some(dir) = &cache_dir {
        if dir.join(COMPLETE_MARKER).is_file() {
            log::debug!("reusing cached features in {}", dir.display());
            let features = read_cached(dir, sample_ids.len(), encoder, spec)?;
            return Ok(FeatureSet {
                modality,
                level,
                sample_ids,
                features,
                cache_dir,
                from_cache: true,
            });
        }
    }

    let mut pre = LevelPreprocessor::new(spec, pooling.method, encoder.master_seed)?;
    if pooling.force_mean_weights && pooling.method == PoolMethod::Random {
        pre = pre.with_mean_weights();
    }
    let [k, side, _] = spec.target_shape;
    let enc = LevelEncoder::new(encoder, level, k, side)
        .map_err(|e| e.in_stage("encode", format!("{modality} level {level}")))?;
    let mut features = Array2::<f32>::zeros((records.len(), enc.feature_len()));
    for (c, chunk) in paths.chunks(CHUNK).enumerate() {
        let start = c * CHUNK;
        let blocks: Vec<ActivationTensor> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, path)| {
                let id = &sample_ids[start + i];
                let raw = crate::tensor_io::read_level_tensor(path, level).map_err(|e| {
                    e.in_stage("load", format!("{modality} level {level} sample {id}"))
                })?;
                pre.apply(&raw).map_err(|e| {
                    e.in_stage(
                        "preprocess",
                        format!("{modality} level {level} sample {id}"),
                    )
                })
            })
            .collect::<Result<_>>()?;
        let encoded = enc
            .encode(&blocks)
            .map_err(|e| e.in_stage("encode", format!("{modality} level {level}")))?;
        features
            .slice_mut(s![start..start + chunk.len(), ..])
            .assign(&encoded);
    }

    if let Some(dir) = &cache_dir {
        write_cached(dir, &sample_ids, &features)?;
    }
    Ok(FeatureSet {
        modality,
        level,
        sample_ids,
        features,
        cache_dir,
        from_cache: false,
    })
}

fn cache_key(
    modality: Modality,
    spec: &LevelSpec,
    pooling: PoolingOptions,
    encoder: &EncoderConfig,
    ids: &[String],
    paths: &[PathBuf],
) -> Result<String> {
    let slice = CacheSlice {
        format: 1,
        modality: modality.as_str(),
        encoder,
        level: spec,
        pooling,
    };
    let slice = toml::to_string(&slice).map_err(|e| Error::Config(e.to_string()))?;
    let digests: Vec<[u8; 32]> = paths
        .par_iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(Sha256::digest(&bytes).into())
        })
        .collect::<Result<_>>()?;
    let mut h = Sha256::new();
    h.update(slice.as_bytes());
    for (id, d) in ids.iter().zip(&digests) {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        h.update(d);
    }
    Ok(hex::encode(h.finalize()))
}

fn sample_file(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("{i:06}.npy"))
}

fn write_cached(dir: &Path, ids: &[String], features: &Array2<f32>) -> Result<()> {
    let parent = dir.parent().expect("cache dir has a parent");
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = parent.join(format!(
        ".{}.partial",
        dir.file_name().and_then(|n| n.to_str()).unwrap_or("cache")
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    (0..features.nrows()).into_par_iter().try_for_each(|i| {
        let row = features.row(i).to_vec();
        npy::write_npy(&[row.len()], &row, sample_file(&tmp, i))
    })?;
    let mut listing = ids.join("\n");
    listing.push('\n');
    let ids_path = tmp.join(IDS_FILE);
    fs::write(&ids_path, listing).map_err(|e| Error::io(&ids_path, e))?;
    let marker = tmp.join(COMPLETE_MARKER);
    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn read_cached(
    dir: &Path,
    n: usize,
    encoder: &EncoderConfig,
    spec: &LevelSpec,
) -> Result<Array2<f32>> {
    let dim = encoder.num_rnns * spec.target_shape[0];
    let rows: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let path = sample_file(dir, i);
            let t = npy::read_tensor(&path)?;
            if t.shape() != [dim] {
                return Err(Error::Shape(format!(
                    "cached feature {} has shape {:?}, expected [{dim}]",
                    path.display(),
                    t.shape()
                )));
            }
            Ok(t.into_data())
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f32> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, dim), flat).expect("rows checked above"))
}
