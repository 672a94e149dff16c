//! Dataset manifests: one CSV row per (sample, modality).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const LEVEL_COLUMNS: [&str; 7] = [
    "level1", "level2", "level3", "level4", "level5", "level6", "level7",
];
pub const FIXED_COLUMNS: [&str; 5] = [
    "sample_id",
    "category",
    "instance_id",
    "modality",
    "split_role",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Rgb,
    Depth,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Rgb, Modality::Depth];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgb" => Ok(Modality::Rgb),
            "depth" => Ok(Modality::Depth),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

impl FromStr for SplitRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(SplitRole::Train),
            "test" => Ok(SplitRole::Test),
            other => Err(format!("unknown split role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub category: usize,
    pub instance_id: String,
    pub modality: Modality,
    pub split_role: SplitRole,
    /// Index 0 is level 1. Paths are stored as written in the CSV.
    pub level_paths: [Option<PathBuf>; 7],
}

impl SampleRecord {
    pub fn level_path(&self, level: u8) -> Option<&Path> {
        let idx = usize::from(level).checked_sub(1)?;
        self.level_paths.get(idx)?.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    /// Directory relative level paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Builds a manifest from in-memory records and validates it. Paths are
    /// not checked for existence here; `load_manifest` does that.
    pub fn new(records: Vec<SampleRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            records,
            base_dir: base_dir.into(),
        };
        m.validate_structure()?;
        Ok(m)
    }

    pub fn num_categories(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.category + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn records_for(&self, modality: Modality) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.modality == modality)
    }

    pub fn modalities(&self) -> Vec<Modality> {
        let present: BTreeSet<Modality> = self.records.iter().map(|r| r.modality).collect();
        present.into_iter().collect()
    }

    /// Levels that have a path on every record of the modality.
    pub fn complete_levels(&self, modality: Modality) -> Vec<u8> {
        (1..=7u8)
            .filter(|&l| {
                let mut any = false;
                let all = self.records_for(modality).all(|r| {
                    any = true;
                    r.level_path(l).is_some()
                });
                any && all
            })
            .collect()
    }

    fn validate_structure(&self) -> Result<()> {
        let mut problems = Vec::new();

        let mut seen: HashSet<(Modality, &str)> = HashSet::new();
        for r in &self.records {
            if r.sample_id.is_empty() {
                problems.push("empty sample_id".to_string());
            }
            if !seen.insert((r.modality, r.sample_id.as_str())) {
                problems.push(format!(
                    "duplicate sample_id {:?} in modality {}",
                    r.sample_id, r.modality
                ));
            }
        }

        let categories: BTreeSet<usize> = self.records.iter().map(|r| r.category).collect();
        if let Some(&max) = categories.iter().next_back() {
            let missing: Vec<String> = (0..=max)
                .filter(|c| !categories.contains(c))
                .map(|c| c.to_string())
                .collect();
            if !missing.is_empty() {
                problems.push(format!(
                    "categories are not contiguous from 0: missing {}",
                    missing.join(",")
                ));
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Writes the manifest in the canonical CSV layout.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<&str> = FIXED_COLUMNS
            .iter()
            .chain(LEVEL_COLUMNS.iter())
            .copied()
            .collect();
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for r in &self.records {
            let mut row = vec![
                r.sample_id.clone(),
                r.category.to_string(),
                r.instance_id.clone(),
                r.modality.to_string(),
                r.split_role.as_str().to_string(),
            ];
            for lp in &r.level_paths {
                row.push(
                    lp.as_ref()
                        .map(|p| p.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                );
            }
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(vec![format!("{}: {other:?}", path.display())]),
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<String> = FIXED_COLUMNS
        .iter()
        .chain(LEVEL_COLUMNS.iter())
        .filter(|c| column(c).is_none())
        .map(|c| format!("missing column {c:?}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(missing));
    }
    let fixed: Vec<usize> = FIXED_COLUMNS.iter().map(|c| column(c).unwrap()).collect();
    let levels: Vec<usize> = LEVEL_COLUMNS.iter().map(|c| column(c).unwrap()).collect();

    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let mut problems = Vec::new();
    let mut records = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let line = row_idx + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let get = |i: usize| row.get(i).unwrap_or("");

        let category = match get(fixed[1]).parse::<usize>() {
            Ok(c) => c,
            Err(_) => {
                problems.push(format!("line {line}: bad category {:?}", get(fixed[1])));
                continue;
            }
        };
        let modality = match get(fixed[3]).parse::<Modality>() {
            Ok(m) => m,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let split_role = match get(fixed[4]).parse::<SplitRole>() {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let mut level_paths: [Option<PathBuf>; 7] = Default::default();
        for (slot, &col) in level_paths.iter_mut().zip(&levels) {
            let cell = get(col);
            if !cell.is_empty() {
                *slot = Some(PathBuf::from(cell));
            }
        }
        records.push(SampleRecord {
            sample_id: get(fixed[0]).to_string(),
            category,
            instance_id: get(fixed[2]).to_string(),
            modality,
            split_role,
            level_paths,
        });
    }

    let manifest = DatasetManifest { records, base_dir };
    if let Err(Error::Validation(mut structural)) = manifest.validate_structure() {
        problems.append(&mut structural);
    }
    for r in &manifest.records {
        for (i, p) in r.level_paths.iter().enumerate() {
            if let Some(p) = p {
                if !manifest.resolve(p).is_file() {
                    problems.push(format!(
                        "sample {:?} ({}) level{}: path {} not found",
                        r.sample_id,
                        r.modality,
                        i + 1,
                        p.display()
                    ));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Leave-one-instance-out split: every sample of a held-out instance becomes
/// test, every other sample train.
pub fn make_instance_split(
    m: &DatasetManifest,
    heldout: &BTreeMap<usize, String>,
) -> Result<DatasetManifest> {
    let instances = instances_by_category(m);
    for (cat, insts) in &instances {
        if insts.len() < 2 {
            return Err(Error::Split(format!(
                "category {cat} has {} instance(s); at least 2 are required",
                insts.len()
            )));
        }
        match heldout.get(cat) {
            None => {
                return Err(Error::Split(format!(
                    "no held-out instance given for category {cat}"
                )))
            }
            Some(inst) if !insts.contains(inst.as_str()) => {
                return Err(Error::Split(format!(
                    "held-out instance {inst:?} is absent from category {cat}"
                )))
            }
            Some(_) => {}
        }
    }
    if let Some(cat) = heldout.keys().find(|c| !instances.contains_key(c)) {
        return Err(Error::Split(format!(
            "held-out map names category {cat} which has no samples"
        )));
    }

    let records = m
        .records
        .iter()
        .map(|r| {
            let held = heldout.get(&r.category).map(String::as_str) == Some(r.instance_id.as_str());
            SampleRecord {
                split_role: if held {
                    SplitRole::Test
                } else {
                    SplitRole::Train
                },
                ..r.clone()
            }
        })
        .collect();
    Ok(DatasetManifest {
        records,
        base_dir: m.base_dir.clone(),
    })
}

/// Draws one held-out instance per category with a seeded uniform choice.
pub fn draw_heldout(m: &DatasetManifest, seed: u64) -> BTreeMap<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    instances_by_category(m)
        .into_iter()
        .filter_map(|(cat, insts)| {
            let insts: Vec<&str> = insts.into_iter().collect();
            insts.choose(&mut rng).map(|i| (cat, i.to_string()))
        })
        .collect()
}

fn instances_by_category(m: &DatasetManifest) -> BTreeMap<usize, BTreeSet<&str>> {
    let mut out: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for r in &m.records {
        out.entry(r.category).or_default().insert(&r.instance_id);
    }
    out
}
