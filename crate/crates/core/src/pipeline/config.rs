use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionPlan;
use crate::pooling::PoolMethod;
use crate::rnn::EncoderConfig;
use crate::svm::SvmConfig;
use crate::tensor_io::{LevelSpec, Preprocess};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub manifest: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolingOptions {
    pub method: PoolMethod,
    /// Replace the random weights by `1 / |area|`.
    pub force_mean_weights: bool,
}

/// One evaluation split. With neither `heldout` nor `draw_seed` the roles
/// written in the manifest are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDef {
    pub id: String,
    /// Category index (as a string key) to held-out instance id.
    #[serde(default)]
    pub heldout: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub draw_seed: Option<u64>,
}

impl SplitDef {
    pub fn manifest_roles(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            heldout: None,
            draw_seed: None,
        }
    }

    pub fn heldout_map(&self) -> Result<Option<BTreeMap<usize, String>>> {
        self.heldout
            .as_ref()
            .map(|h| {
                h.iter()
                    .map(|(k, v)| {
                        k.parse::<usize>().map(|c| (c, v.clone())).map_err(|_| {
                            Error::Config(format!(
                                "split {}: held-out key {k:?} is not a category index",
                                self.id
                            ))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub topk: Vec<usize>,
    pub confusion: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            topk: vec![1, 3, 5],
            confusion: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub paths: Paths,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub pooling: PoolingOptions,
    #[serde(default = "default_levels")]
    pub levels: Vec<LevelSpec>,
    #[serde(default)]
    pub fusion: FusionPlan,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub splits: Vec<SplitDef>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub report: ReportOptions,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "yes")]
    pub cache: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Level table of a ResNet-101 style backbone at 224x224 input.
pub fn default_levels() -> Vec<LevelSpec> {
    use Preprocess::*;
    let table: [(u8, &[usize], [usize; 3], Preprocess); 7] = [
        (1, &[64, 56, 56], [64, 8, 8], PoolSpatial),
        (2, &[256, 56, 56], [64, 8, 8], PoolBoth),
        (3, &[512, 28, 28], [64, 7, 7], PoolBoth),
        (4, &[1024, 14, 14], [64, 7, 7], PoolBoth),
        (5, &[1024, 14, 14], [64, 7, 7], PoolBoth),
        (6, &[2048, 7, 7], [64, 7, 7], PoolMaps),
        (7, &[2048], [32, 8, 8], Reshape),
    ];
    table
        .into_iter()
        .map(|(level, raw, target, p)| LevelSpec {
            level,
            raw_shape: raw.to_vec(),
            target_shape: target,
            preprocess: p,
        })
        .collect()
}

impl RunConfig {
    /// A config over `manifest` with every default filled in.
    pub fn new(manifest: impl Into<PathBuf>, output: impl Into<PathBuf>, seeds: Vec<u64>) -> Self {
        Self {
            config_version: CONFIG_VERSION,
            paths: Paths {
                manifest: manifest.into(),
                output: output.into(),
            },
            encoder: EncoderConfig::default(),
            pooling: PoolingOptions::default(),
            levels: default_levels(),
            fusion: FusionPlan::default(),
            svm: SvmConfig::default(),
            splits: Vec::new(),
            seeds,
            report: ReportOptions::default(),
            workers: 1,
            cache: true,
        }
    }

    /// Parses and validates a TOML config. Relative paths are taken from the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.manifest, &mut cfg.paths.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.config_version != CONFIG_VERSION {
            problems.push(format!(
                "config_version {} is not supported (expected {CONFIG_VERSION})",
                self.config_version
            ));
        }
        if self.seeds.is_empty() {
            problems.push("seeds must not be empty".into());
        }
        if self.levels.is_empty() {
            problems.push("no levels configured".into());
        }
        if self.workers == 0 {
            problems.push("workers must be at least 1".into());
        }
        if let Err(e) = self.encoder.validate() {
            problems.push(e.to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.levels {
            if let Err(e) = spec.validate() {
                problems.push(e.to_string());
            }
            if !seen.insert(spec.level) {
                problems.push(format!("level {} is listed twice", spec.level));
            }
        }
        for l in self
            .fusion
            .rgb_levels
            .iter()
            .chain(&self.fusion.depth_levels)
        {
            if !(1..=7).contains(l) {
                problems.push(format!("fusion references level {l}, outside 1..=7"));
            } else if !seen.contains(l) {
                problems.push(format!(
                    "fusion references level {l}, which is not configured"
                ));
            }
        }
        if self.report.topk.contains(&0) {
            problems.push("top-k values must be at least 1".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for split in &self.splits {
            if !ids.insert(split.id.as_str()) {
                problems.push(format!("split id {:?} is listed twice", split.id));
            }
            if split.heldout.is_some() && split.draw_seed.is_some() {
                problems.push(format!(
                    "split {:?} sets both heldout and draw_seed",
                    split.id
                ));
            }
            if let Err(e) = split.heldout_map() {
                problems.push(e.to_string());
            }
        }
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0 && self.svm.max_iter > 0) {
            problems.push("svm c, tol and max_iter must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Splits to run; an empty list means one split from the manifest roles.
    pub fn effective_splits(&self) -> Vec<SplitDef> {
        if self.splits.is_empty() {
            vec![SplitDef::manifest_roles("manifest")]
        } else {
            self.splits.clone()
        }
    }

    pub fn level_spec(&self, level: u8) -> Option<&LevelSpec> {
        self.levels.iter().find(|s| s.level == level)
    }

    /// Keeps only the listed levels (and drops fusion references to others).
    pub fn restrict_levels(&mut self, keep: &[u8]) -> Result<()> {
        if let Some(l) = keep.iter().find(|l| !(1..=7).contains(*l)) {
            return Err(Error::Config(format!("level {l} is outside 1..=7")));
        }
        self.levels.retain(|s| keep.contains(&s.level));
        self.fusion.rgb_levels.retain(|l| keep.contains(l));
        self.fusion.depth_levels.retain(|l| keep.contains(l));
        self.validate()
    }

    pub fn select_split(&mut self, id: &str) -> Result<()> {
        let splits = self.effective_splits();
        let chosen = splits
            .into_iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Config(format!("no split with id {id:?}")))?;
        self.splits = vec![chosen];
        Ok(())
    }
}

/// Parses `3`, `1-7` or `1,3,5-7`.
pub fn parse_level_list(text: &str) -> Result<Vec<u8>> {
    let bad = || Error::Config(format!("cannot parse level list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse::<u8>(), b.trim().parse::<u8>()),
            None => (part.parse::<u8>(), part.parse::<u8>()),
        };
        let (lo, hi) = (lo.map_err(|_| bad())?, hi.map_err(|_| bad())?);
        if lo > hi || lo == 0 || hi > 7 {
            return Err(Error::Config(format!(
                "level range {part:?} is outside 1..=7"
            )));
        }
        out.extend(lo..=hi);
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
config_version = 1
seeds = [1, 2]

[paths]
manifest = "m.csv"
output = "out"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.levels.len(), 7);
        assert_eq!(cfg.encoder, EncoderConfig::default());
        assert_eq!(cfg.report.topk, vec![1, 3, 5]);
        assert_eq!(cfg.effective_splits()[0].id, "manifest");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::new("m.csv", "out", vec![3]);
        cfg.splits.push(SplitDef {
            id: "a".into(),
            heldout: Some(BTreeMap::from([("0".into(), "apple_1".into())])),
            draw_seed: None,
        });
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn level_nine_is_rejected() {
        let text = format!(
            "{MINIMAL}\n[[levels]]\nlevel = 9\nraw_shape = [64, 8, 8]\ntarget_shape = [64, 8, 8]\npreprocess = \"reshape\"\n"
        );
        assert!(matches!(
            RunConfig::from_toml(&text),
            Err(Error::Validation(_))
        ));
        let mut cfg = RunConfig::new("m", "o", vec![0]);
        cfg.fusion.rgb_levels = vec![9];
        assert!(cfg.validate().is_err());
        assert!(parse_level_list("1-9").is_err());
    }

    #[test]
    fn empty_seeds_and_unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml(&MINIMAL.replace("[1, 2]", "[]")).is_err());
        assert!(RunConfig::from_toml(&format!("bogus = 1\n{MINIMAL}")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("= 1\n", "= 2\n")).is_err());
    }

    #[test]
    fn level_lists() {
        assert_eq!(
            parse_level_list("1-7").unwrap(),
            (1..=7).collect::<Vec<_>>()
        );
        assert_eq!(parse_level_list("5,1-2,2").unwrap(), vec![1, 2, 5]);
        assert!(parse_level_list("").is_err());
        assert!(parse_level_list("0").is_err());
    }

    #[test]
    fn default_levels_are_valid() {
        for spec in default_levels() {
            spec.validate().unwrap();
        }
    }
}
