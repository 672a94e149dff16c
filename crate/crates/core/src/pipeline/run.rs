use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};

use super::config::{RunConfig, SplitDef};
use super::features::{level_features, FeatureSet};
use super::report::{sanitize, ConfusionEntry, LevelTag, ResultRow, RunReport, Spread, Stream};
use crate::error::{Error, Result};
use crate::fusion::{
    average_vote, concat_level_matrices, weighted_vote, LevelStrategy, ModalityStrategy,
};
use crate::pooling::PoolMethod;
use crate::svm::{
    confusion_matrix, decision_scores, predict, topk_accuracy, train_ovr, LinearModel, ScoreMatrix,
};
use crate::tensor_io::{
    draw_heldout, load_manifest, make_instance_split, DatasetManifest, Modality, SplitRole,
};

/// Train/test row indices of one modality under one split. Indices refer to
/// the modality's records in manifest order, which is also the row order of
/// its feature matrices.
#[derive(Debug, Clone)]
struct Roles {
    train: Vec<usize>,
    test: Vec<usize>,
    train_labels: Vec<usize>,
    test_labels: Vec<usize>,
    test_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelSource {
    Train { save: bool },
    Load,
}

/// Score matrices of one split under one seed.
#[derive(Debug, Clone, Default)]
struct Collected {
    levels: BTreeMap<(Modality, u8), ScoreMatrix>,
    concat: BTreeMap<Modality, ScoreMatrix>,
}

struct Split {
    id: String,
    roles: BTreeMap<Modality, Roles>,
}

/// A configured experiment bound to its manifest and worker pool.
pub struct Pipeline {
    cfg: RunConfig,
    manifest: DatasetManifest,
    splits: Vec<Split>,
    classes: usize,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let manifest = load_manifest(&cfg.paths.manifest)
            .map_err(|e| e.in_stage("manifest", cfg.paths.manifest.display().to_string()))?;
        let classes = manifest.num_categories();
        let mut available = BTreeMap::new();
        for m in manifest.modalities() {
            let complete = manifest.complete_levels(m);
            let levels: Vec<u8> = cfg
                .levels
                .iter()
                .map(|s| s.level)
                .filter(|l| complete.contains(l))
                .collect();
            if levels.is_empty() {
                return Err(Error::Config(format!(
                    "no configured level has files for every {m} record"
                )));
            }
            available.insert(m, levels);
        }
        let none = Vec::new();
        cfg.fusion.validate(
            available.get(&Modality::Rgb).unwrap_or(&none),
            available.get(&Modality::Depth).unwrap_or(&none),
        )?;

        let mut splits = Vec::new();
        for def in cfg.effective_splits() {
            let m =
                split_manifest(&manifest, &def).map_err(|e| e.in_stage("split", def.id.clone()))?;
            let mut roles = BTreeMap::new();
            for modality in manifest.modalities() {
                let r = split_roles(&m, modality, classes)
                    .map_err(|e| e.in_stage("split", format!("{} {modality}", def.id)))?;
                roles.insert(modality, r);
            }
            splits.push(Split { id: def.id, roles });
        }

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            cfg,
            manifest,
            splits,
            classes,
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    /// Configured levels that have a file on every record of `modality`.
    pub fn levels_for(&self, modality: Modality) -> Vec<u8> {
        let complete = self.manifest.complete_levels(modality);
        self.cfg
            .levels
            .iter()
            .map(|s| s.level)
            .filter(|l| complete.contains(l))
            .collect()
    }

    /// Levels fused within a modality; an empty plan list means all levels.
    pub fn fusion_levels(&self, modality: Modality) -> Vec<u8> {
        let plan = match modality {
            Modality::Rgb => &self.cfg.fusion.rgb_levels,
            Modality::Depth => &self.cfg.fusion.depth_levels,
        };
        if plan.is_empty() {
            self.levels_for(modality)
        } else {
            plan.clone()
        }
    }

    fn output(&self) -> &Path {
        &self.cfg.paths.output
    }

    pub fn cache_root(&self) -> Option<PathBuf> {
        self.cfg
            .cache
            .then(|| self.output().join("cache").join("features"))
    }

    fn run_dir(&self, kind: &str, split: &str, seed: u64) -> PathBuf {
        self.output()
            .join(kind)
            .join(sanitize(split))
            .join(format!("seed{seed}"))
    }

    pub fn features(&self, modality: Modality, level: u8, seed: u64) -> Result<FeatureSet> {
        let spec = self
            .cfg
            .level_spec(level)
            .ok_or_else(|| Error::Config(format!("level {level} is not configured")))?;
        let encoder = crate::rnn::EncoderConfig {
            master_seed: seed,
            ..self.cfg.encoder.clone()
        };
        let root = self.cache_root();
        self.pool.install(|| {
            level_features(
                &self.manifest,
                modality,
                spec,
                self.cfg.pooling,
                &encoder,
                root.as_deref(),
            )
        })
    }

    /// Encodes every configured level of every modality under every seed.
    pub fn encode_all(&self) -> Result<Vec<FeatureSet>> {
        let mut out = Vec::new();
        for &seed in &self.cfg.seeds {
            for m in self.manifest.modalities() {
                for l in self.levels_for(m) {
                    out.push(self.features(m, l, seed)?);
                }
            }
        }
        Ok(out)
    }

    /// Trains and saves every per-level model (and concatenation models)
    /// under `models/<split>/seed<seed>/`. Returns the written paths.
    pub fn train_all(&self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for &seed in &self.cfg.seeds {
            self.collect(seed, ModelSource::Train { save: true })?;
            for split in &self.splits {
                let dir = self.run_dir("models", &split.id, seed);
                for m in self.manifest.modalities() {
                    for l in self.levels_for(m) {
                        written.push(dir.join(model_name(m, Some(l))));
                    }
                    if self.cfg.fusion.level_strategy == LevelStrategy::ConcatFeatures {
                        written.push(dir.join(model_name(m, None)));
                    }
                }
            }
        }
        Ok(written)
    }

    /// Scores the test role with saved models and writes score CSVs under
    /// `scores/<split>/seed<seed>/`. Returns per-level result rows.
    pub fn evaluate_all(&self) -> Result<Vec<ResultRow>> {
        let mut rows = Vec::new();
        for &seed in &self.cfg.seeds {
            let collected = self.collect(seed, ModelSource::Load)?;
            for (split, c) in self.splits.iter().zip(&collected) {
                self.write_scores(split, seed, c)?;
                for ((m, l), s) in &c.levels {
                    rows.push(self.row(
                        split,
                        seed,
                        (*m).into(),
                        LevelTag::Level(*l),
                        s,
                        &split.roles[m].test_labels,
                    )?);
                }
            }
        }
        Ok(rows)
    }

    /// Reads the score CSVs written by `evaluate_all`, applies the fusion
    /// plan and writes the report.
    pub fn fuse_all(&self) -> Result<RunReport> {
        let mut rows = Vec::new();
        let mut confusion = Vec::new();
        for split in &self.splits {
            for &seed in &self.cfg.seeds {
                let c = self.read_scores(split, seed)?;
                let (r, cm) = self.fuse(split, seed, &c)?;
                rows.extend(r);
                confusion.extend(cm);
            }
        }
        let report = RunReport::new(self.topk(), rows, confusion);
        report.write(self.output().join("report"))?;
        Ok(report)
    }

    /// Full run in memory. Score CSVs and fusion weights are written along
    /// the way; the report itself is returned, not written.
    pub fn compute(&self) -> Result<RunReport> {
        let mut by_seed = Vec::new();
        for &seed in &self.cfg.seeds {
            by_seed.push(self.collect(seed, ModelSource::Train { save: false })?);
        }
        let mut rows = Vec::new();
        let mut confusion = Vec::new();
        for (si, split) in self.splits.iter().enumerate() {
            for (&seed, collected) in self.cfg.seeds.iter().zip(&by_seed) {
                let c = &collected[si];
                self.write_scores(split, seed, c)?;
                let (r, cm) = self.fuse(split, seed, c)?;
                rows.extend(r);
                confusion.extend(cm);
            }
        }
        Ok(RunReport::new(self.topk(), rows, confusion))
    }

    fn topk(&self) -> Vec<usize> {
        self.cfg.report.topk.clone()
    }

    fn collect(&self, seed: u64, source: ModelSource) -> Result<Vec<Collected>> {
        let mut out = vec![Collected::default(); self.splits.len()];
        let concat = self.cfg.fusion.level_strategy == LevelStrategy::ConcatFeatures;
        for m in self.manifest.modalities() {
            let wanted = if concat {
                self.fusion_levels(m)
            } else {
                Vec::new()
            };
            let mut kept: BTreeMap<u8, Array2<f32>> = BTreeMap::new();
            for l in self.levels_for(m) {
                let fs = self.features(m, l, seed)?;
                for (split, c) in self.splits.iter().zip(&mut out) {
                    let s = self
                        .classify(fs.features.view(), split, m, Some(l), seed, source)
                        .map_err(|e| {
                            e.in_stage(
                                "classify",
                                format!("split {} seed {seed} {m} L{l}", split.id),
                            )
                        })?;
                    c.levels.insert((m, l), s);
                }
                if wanted.contains(&l) {
                    kept.insert(l, fs.features);
                }
            }
            if concat {
                let views: Vec<ArrayView2<'_, f32>> =
                    wanted.iter().map(|l| kept[l].view()).collect();
                let x = concat_level_matrices(&views)?;
                for (split, c) in self.splits.iter().zip(&mut out) {
                    let s = self
                        .classify(x.view(), split, m, None, seed, source)
                        .map_err(|e| {
                            e.in_stage(
                                "classify",
                                format!("split {} seed {seed} {m} concat", split.id),
                            )
                        })?;
                    c.concat.insert(m, s);
                }
            }
        }
        Ok(out)
    }

    fn classify(
        &self,
        x: ArrayView2<'_, f32>,
        split: &Split,
        m: Modality,
        level: Option<u8>,
        seed: u64,
        source: ModelSource,
    ) -> Result<ScoreMatrix> {
        let roles = &split.roles[&m];
        let path = self
            .run_dir("models", &split.id, seed)
            .join(model_name(m, level));
        let model = match source {
            ModelSource::Load => LinearModel::load(&path)?,
            ModelSource::Train { save } => {
                let xt = x.select(Axis(0), &roles.train);
                let model = self
                    .pool
                    .install(|| train_ovr(xt.view(), &roles.train_labels, &self.cfg.svm))?;
                if save {
                    let dir = path.parent().expect("model path has a parent");
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    model.save(&path)?;
                }
                model
            }
        };
        let xs = x.select(Axis(0), &roles.test);
        decision_scores(&model, xs.view())
    }

    fn row(
        &self,
        split: &Split,
        seed: u64,
        stream: Stream,
        level: LevelTag,
        s: &ScoreMatrix,
        labels: &[usize],
    ) -> Result<ResultRow> {
        let topk = self
            .cfg
            .report
            .topk
            .iter()
            .map(|&k| {
                if k <= s.num_classes() {
                    topk_accuracy(s, labels, k).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(ResultRow {
            split: split.id.clone(),
            seed,
            stream,
            level,
            topk,
        })
    }

    fn modality_fused(&self, m: Modality, c: &Collected) -> Result<Option<ScoreMatrix>> {
        if let Some(s) = c.concat.get(&m) {
            return Ok(Some(s.clone()));
        }
        let parts: Vec<&ScoreMatrix> = self
            .fusion_levels(m)
            .iter()
            .filter_map(|l| c.levels.get(&(m, *l)))
            .collect();
        if parts.is_empty() {
            return Ok(None);
        }
        average_vote(&parts).map(Some)
    }

    fn fuse(
        &self,
        split: &Split,
        seed: u64,
        c: &Collected,
    ) -> Result<(Vec<ResultRow>, Vec<ConfusionEntry>)> {
        let mut rows = Vec::new();
        let mut fused = BTreeMap::new();
        for m in self.manifest.modalities() {
            let labels = &split.roles[&m].test_labels;
            for l in self.levels_for(m) {
                if let Some(s) = c.levels.get(&(m, l)) {
                    rows.push(self.row(split, seed, m.into(), LevelTag::Level(l), s, labels)?);
                }
            }
            if let Some(s) = self.modality_fused(m, c)? {
                rows.push(self.row(split, seed, m.into(), LevelTag::Fused, &s, labels)?);
                fused.insert(m, s);
            }
        }

        let mut headline: Option<(Stream, ScoreMatrix, Vec<usize>)> = fused
            .iter()
            .next_back()
            .map(|(m, s)| ((*m).into(), s.clone(), split.roles[m].test_labels.clone()));
        if let (Some(rgb), Some(depth)) = (fused.get(&Modality::Rgb), fused.get(&Modality::Depth)) {
            let rgb_roles = &split.roles[&Modality::Rgb];
            let depth = align(depth, &split.roles[&Modality::Depth], rgb_roles)
                .map_err(|e| e.in_stage("fuse", format!("split {} seed {seed}", split.id)))?;
            let scores = match self.cfg.fusion.modality_strategy {
                ModalityStrategy::AverageVote => average_vote(&[rgb, &depth])?,
                ModalityStrategy::WeightedVote => {
                    let vote = weighted_vote(rgb, &depth, self.cfg.fusion.weight_scope)?;
                    let dir = self.run_dir("scores", &split.id, seed);
                    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    vote.write_csv(&rgb_roles.test_ids, dir.join("fusion_weights.csv"))?;
                    vote.fused
                }
            };
            let labels = &rgb_roles.test_labels;
            let depth_labels = &split.roles[&Modality::Depth].test_labels;
            if labels.len() != depth_labels.len() {
                return Err(Error::Fusion("modalities disagree on the test set".into()));
            }
            rows.push(self.row(split, seed, Stream::Rgbd, LevelTag::Fused, &scores, labels)?);
            headline = Some((Stream::Rgbd, scores, labels.clone()));
        }

        let mut confusion = Vec::new();
        if self.cfg.report.confusion {
            if let Some((stream, s, labels)) = headline {
                confusion.push(ConfusionEntry {
                    split: split.id.clone(),
                    seed,
                    stream,
                    level: LevelTag::Fused,
                    matrix: confusion_matrix(&predict(&s), &labels, self.classes)?,
                });
            }
        }
        Ok((rows, confusion))
    }

    fn write_scores(&self, split: &Split, seed: u64, c: &Collected) -> Result<()> {
        let dir = self.run_dir("scores", &split.id, seed);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for ((m, l), s) in &c.levels {
            s.write_csv(&split.roles[m].test_ids, dir.join(score_name(*m, Some(*l))))?;
        }
        for (m, s) in &c.concat {
            s.write_csv(&split.roles[m].test_ids, dir.join(score_name(*m, None)))?;
        }
        Ok(())
    }

    fn read_scores(&self, split: &Split, seed: u64) -> Result<Collected> {
        let dir = self.run_dir("scores", &split.id, seed);
        let mut c = Collected::default();
        let concat = self.cfg.fusion.level_strategy == LevelStrategy::ConcatFeatures;
        for m in self.manifest.modalities() {
            let roles = &split.roles[&m];
            let load = |level: Option<u8>| -> Result<ScoreMatrix> {
                let path = dir.join(score_name(m, level));
                let (ids, s) = ScoreMatrix::read_csv(&path)
                    .map_err(|e| e.in_stage("fuse", path.display().to_string()))?;
                if ids != roles.test_ids {
                    return Err(Error::Validation(vec![format!(
                        "{} does not list the test samples of split {}",
                        path.display(),
                        split.id
                    )]));
                }
                Ok(s)
            };
            for l in self.levels_for(m) {
                c.levels.insert((m, l), load(Some(l))?);
            }
            if concat {
                c.concat.insert(m, load(None)?);
            }
        }
        Ok(c)
    }
}

fn model_name(m: Modality, level: Option<u8>) -> String {
    match level {
        Some(l) => format!("{m}_L{l}.svm"),
        None => format!("{m}_concat.svm"),
    }
}

fn score_name(m: Modality, level: Option<u8>) -> String {
    match level {
        Some(l) => format!("{m}_L{l}.csv"),
        None => format!("{m}_concat.csv"),
    }
}

fn split_manifest(m: &DatasetManifest, def: &SplitDef) -> Result<DatasetManifest> {
    if let Some(heldout) = def.heldout_map()? {
        make_instance_split(m, &heldout)
    } else if let Some(seed) = def.draw_seed {
        make_instance_split(m, &draw_heldout(m, seed))
    } else {
        Ok(m.clone())
    }
}

fn split_roles(m: &DatasetManifest, modality: Modality, classes: usize) -> Result<Roles> {
    let mut r = Roles {
        train: Vec::new(),
        test: Vec::new(),
        train_labels: Vec::new(),
        test_labels: Vec::new(),
        test_ids: Vec::new(),
    };
    let mut seen = vec![false; classes];
    for (i, rec) in m.records_for(modality).enumerate() {
        match rec.split_role {
            SplitRole::Train => {
                r.train.push(i);
                r.train_labels.push(rec.category);
                seen[rec.category] = true;
            }
            SplitRole::Test => {
                r.test.push(i);
                r.test_labels.push(rec.category);
                r.test_ids.push(rec.sample_id.clone());
            }
        }
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::Split(format!(
            "category {c} has no training samples"
        )));
    }
    if r.test.is_empty() {
        return Err(Error::Split("no test samples".into()));
    }
    Ok(r)
}

/// Reorders depth score rows to follow the rgb test order.
fn align(depth: &ScoreMatrix, depth_roles: &Roles, rgb_roles: &Roles) -> Result<ScoreMatrix> {
    let index: BTreeMap<&str, usize> = depth_roles
        .test_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    if index.len() != rgb_roles.test_ids.len() {
        return Err(Error::Fusion(format!(
            "rgb has {} test samples, depth has {}",
            rgb_roles.test_ids.len(),
            index.len()
        )));
    }
    let order: Vec<usize> = rgb_roles
        .test_ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Fusion(format!("test sample {id} has no depth scores")))
        })
        .collect::<Result<_>>()?;
    for (&d, &label) in order.iter().zip(&rgb_roles.test_labels) {
        if depth_roles.test_labels[d] != label {
            return Err(Error::Fusion(format!(
                "sample {} has different categories in rgb and depth",
                depth_roles.test_ids[d]
            )));
        }
    }
    ScoreMatrix::new(depth.view().select(Axis(0), &order))
}

/// Runs every split and seed and writes the report under `<output>/report`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport> {
    let p = Pipeline::new(cfg.clone())?;
    let report = p.compute()?;
    report.write(cfg.paths.output.join("report"))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub stream: Stream,
    pub level: LevelTag,
    pub per_seed: Vec<f64>,
    pub spread: Spread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub split: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn row(&self, stream: Stream, level: LevelTag) -> Option<&StabilityRow> {
        self.rows
            .iter()
            .find(|r| r.stream == stream && r.level == level)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stream,level,mean,std");
        for s in &self.seeds {
            let _ = write!(out, ",seed{s}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{:.6},{:.6}",
                r.stream.as_str(),
                r.level,
                r.spread.mean,
                r.spread.std.unwrap_or(0.0)
            );
            for v in &r.per_seed {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Reruns encode, train and test with `n_runs` master seeds on the first
/// split. The configured seeds are used when there are enough of them,
/// otherwise consecutive seeds from the first one.
pub fn reseed_stability(cfg: &RunConfig, n_runs: usize) -> Result<StabilityReport> {
    if n_runs < 2 {
        return Err(Error::Config(format!(
            "reseed stability needs at least 2 runs, got {n_runs}"
        )));
    }
    let mut cfg = cfg.clone();
    cfg.validate()?;
    let seeds: Vec<u64> = if cfg.seeds.len() >= n_runs {
        cfg.seeds[..n_runs].to_vec()
    } else {
        (0..n_runs as u64)
            .map(|i| cfg.seeds[0].wrapping_add(i))
            .collect()
    };
    cfg.seeds = seeds.clone();
    cfg.splits = cfg.effective_splits().into_iter().take(1).collect();
    let split = cfg.splits[0].id.clone();
    let report = Pipeline::new(cfg)?.compute()?;
    let k1 = report
        .topk
        .iter()
        .position(|&k| k == 1)
        .ok_or_else(|| Error::Config("stability needs top-1 in report.topk".into()))?;
    let mut groups: BTreeMap<(Stream, LevelTag), Vec<f64>> = BTreeMap::new();
    for r in &report.rows {
        if let Some(v) = r.topk[k1] {
            groups.entry((r.stream, r.level)).or_default().push(v);
        }
    }
    let rows = groups
        .into_iter()
        .map(|((stream, level), per_seed)| StabilityRow {
            stream,
            level,
            spread: Spread::of(&per_seed).expect("one value per seed"),
            per_seed,
        })
        .collect();
    Ok(StabilityReport { split, seeds, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub stream: Stream,
    pub level: LevelTag,
    /// Top-1 mean over splits, in `PoolMethod::ALL` order.
    pub accuracy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, stream: Stream, level: LevelTag) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.stream == stream && r.level == level)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stream,level");
        for m in PoolMethod::ALL {
            let _ = write!(out, ",{}", m.as_str());
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.stream.as_str(), r.level);
            for a in r.accuracy {
                let _ = write!(out, ",{a:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the same pipeline with random, max and average pooling. Seeds are
/// shared, so every method sees the same network weights. Each method
/// writes its artifacts under `<output>/ablation/<method>`.
pub fn pooling_ablation(cfg: &RunConfig) -> Result<AblationReport> {
    cfg.validate()?;
    if !cfg.levels.iter().any(|s| s.preprocess.pools()) {
        return Err(Error::Validation(vec![
            "pooling ablation needs at least one pooled level".into(),
        ]));
    }
    let mut table: BTreeMap<(Stream, LevelTag), [f64; 3]> = BTreeMap::new();
    for (i, method) in PoolMethod::ALL.into_iter().enumerate() {
        let mut c = cfg.clone();
        c.pooling.method = method;
        c.paths.output = cfg.paths.output.join("ablation").join(method.as_str());
        let report = Pipeline::new(c)?.compute()?;
        for r in report.summary.iter().filter(|r| r.k == 1) {
            table.entry((r.stream, r.level)).or_insert([f64::NAN; 3])[i] = r.over_splits.mean;
        }
    }
    Ok(AblationReport {
        rows: table
            .into_iter()
            .map(|((stream, level), accuracy)| AblationRow {
                stream,
                level,
                accuracy,
            })
            .collect(),
    })
}
