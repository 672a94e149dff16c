use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::svm::ConfusionMatrix;
use crate::tensor_io::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stream {
    Rgb,
    Depth,
    Rgbd,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Rgb => "rgb",
            Stream::Depth => "depth",
            Stream::Rgbd => "rgbd",
        }
    }
}

impl From<Modality> for Stream {
    fn from(m: Modality) -> Self {
        match m {
            Modality::Rgb => Stream::Rgb,
            Modality::Depth => Stream::Depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LevelTag {
    Level(u8),
    Fused,
}

impl fmt::Display for LevelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelTag::Level(l) => write!(f, "L{l}"),
            LevelTag::Fused => f.write_str("fused"),
        }
    }
}

/// Top-k accuracies of one classifier on one split under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub split: String,
    pub seed: u64,
    pub stream: Stream,
    pub level: LevelTag,
    /// Aligned with `RunReport::topk`; `None` where k exceeds the class count.
    pub topk: Vec<Option<f64>>,
}

/// Mean and population standard deviation of one quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    /// Omitted for fewer than two runs.
    pub std: Option<f64>,
    pub runs: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt());
        Some(Self {
            mean,
            std,
            runs: values.len(),
        })
    }

    /// Percent with one decimal, e.g. `92.3 ± 1.0`.
    pub fn percent(&self) -> String {
        match self.std {
            Some(s) => format!("{:.1} ± {:.1}", 100.0 * self.mean, 100.0 * s),
            None => format!("{:.1}", 100.0 * self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub stream: Stream,
    pub level: LevelTag,
    pub k: usize,
    pub over_splits: Spread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReseedRow {
    pub split: String,
    pub stream: Stream,
    pub level: LevelTag,
    pub over_seeds: Spread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionEntry {
    pub split: String,
    pub seed: u64,
    pub stream: Stream,
    pub level: LevelTag,
    pub matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub topk: Vec<usize>,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub reseed: Vec<ReseedRow>,
    pub confusion: Vec<ConfusionEntry>,
}

/// Per split, averages over seeds; then mean and population std over splits.
pub fn summarize(rows: &[ResultRow], topk: &[usize]) -> Vec<SummaryRow> {
    let mut per_split: BTreeMap<(Stream, LevelTag, usize), BTreeMap<&str, Vec<f64>>> =
        BTreeMap::new();
    for r in rows {
        for (i, &k) in topk.iter().enumerate() {
            if let Some(v) = r.topk[i] {
                per_split
                    .entry((r.stream, r.level, k))
                    .or_default()
                    .entry(&r.split)
                    .or_default()
                    .push(v);
            }
        }
    }
    per_split
        .into_iter()
        .filter_map(|((stream, level, k), splits)| {
            let means: Vec<f64> = splits
                .values()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .collect();
            Spread::of(&means).map(|over_splits| SummaryRow {
                stream,
                level,
                k,
                over_splits,
            })
        })
        .collect()
}

/// Top-1 spread over seeds within each split.
pub fn reseed_table(rows: &[ResultRow], topk: &[usize]) -> Vec<ReseedRow> {
    let Some(i) = topk.iter().position(|&k| k == 1) else {
        return Vec::new();
    };
    let mut groups: BTreeMap<(&str, Stream, LevelTag), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.topk[i] {
            groups
                .entry((&r.split, r.stream, r.level))
                .or_default()
                .push(v);
        }
    }
    groups
        .into_iter()
        .filter_map(|((split, stream, level), v)| {
            Spread::of(&v).map(|over_seeds| ReseedRow {
                split: split.to_string(),
                stream,
                level,
                over_seeds,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl RunReport {
    pub fn new(topk: Vec<usize>, rows: Vec<ResultRow>, confusion: Vec<ConfusionEntry>) -> Self {
        let summary = summarize(&rows, &topk);
        let reseed = reseed_table(&rows, &topk);
        Self {
            topk,
            rows,
            summary,
            reseed,
            confusion,
        }
    }

    pub fn find(&self, stream: Stream, level: LevelTag, k: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.stream == stream && r.level == level && r.k == k)
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from("split,seed,stream,level");
        for k in &self.topk {
            let _ = write!(out, ",top{k}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{}",
                r.split,
                r.seed,
                r.stream.as_str(),
                r.level
            );
            for v in &r.topk {
                let _ = write!(out, ",{}", opt(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("stream,level,k,mean,std,splits\n");
        for r in &self.summary {
            let s = r.over_splits;
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{}",
                r.stream.as_str(),
                r.level,
                r.k,
                s.mean,
                opt(s.std),
                s.runs
            );
        }
        out
    }

    pub fn reseed_csv(&self) -> String {
        let mut out = String::from("split,stream,level,mean,std,seeds\n");
        for r in &self.reseed {
            let s = r.over_seeds;
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{}",
                r.split,
                r.stream.as_str(),
                r.level,
                s.mean,
                opt(s.std),
                s.runs
            );
        }
        out
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str("Accuracy (%) as mean ± population standard deviation over splits;\n");
        out.push_str("each split is first averaged over seeds. No ± means a single run.\n\n");
        let mut header = format!("{:<8}{:<8}", "stream", "level");
        for k in &self.topk {
            let _ = write!(header, "{:>16}", format!("top-{k}"));
        }
        out.push_str(header.trim_end());
        out.push('\n');
        let mut keys: Vec<(Stream, LevelTag)> =
            self.summary.iter().map(|r| (r.stream, r.level)).collect();
        keys.dedup();
        for (stream, level) in keys {
            let mut line = format!("{:<8}{:<8}", stream.as_str(), level.to_string());
            for &k in &self.topk {
                let cell = self
                    .find(stream, level, k)
                    .map(|r| r.over_splits.percent())
                    .unwrap_or_else(|| "-".into());
                let _ = write!(line, "{cell:>16}");
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        if self.reseed.iter().any(|r| r.over_seeds.std.is_some()) {
            out.push_str("\nTop-1 spread over seeds:\n");
            for r in self.reseed.iter().filter(|r| r.over_seeds.std.is_some()) {
                let _ = writeln!(
                    out,
                    "split {:<12}{:<8}{:<8}{:>16}",
                    r.split,
                    r.stream.as_str(),
                    r.level.to_string(),
                    r.over_seeds.percent()
                );
            }
        }
        out
    }

    fn confusion_name(c: &ConfusionEntry) -> String {
        format!(
            "confusion_{}_seed{}_{}_{}.csv",
            sanitize(&c.split),
            c.seed,
            c.stream.as_str(),
            c.level
        )
    }

    /// Writes `results.csv`, `summary.csv`, `reseed.csv`, `report.txt` and
    /// one CSV per confusion matrix into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            ("results.csv".to_string(), self.results_csv()),
            ("summary.csv".to_string(), self.summary_csv()),
            ("reseed.csv".to_string(), self.reseed_csv()),
            ("report.txt".to_string(), self.text()),
        ];
        for c in &self.confusion {
            files.push((Self::confusion_name(c), c.matrix.to_csv()));
        }
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub(crate) fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
