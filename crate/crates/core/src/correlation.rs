//! How well a distance metric predicts single-source transfer scores.
//!
//! For each source language the distance row and the transfer-score row are
//! correlated over shared targets. The predictive score is the negated
//! Pearson coefficient, so a metric whose distances fall as scores rise
//! scores close to +1.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distance::{build_all, DistanceMatrix, MetricId};
use crate::error::{Error, Result};
use crate::feature_store::{FeatureTable, LanguageId};
use crate::scalar::Scalar;

/// Minimum shared targets per source row.
pub const MIN_SHARED_TARGETS: usize = 3;

/// Sample Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::BadLength(xs.len(), ys.len()));
    }
    let n = T::from_count(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelScale {
    Small,
    Base,
    Large,
}

impl ModelScale {
    pub const ALL: [ModelScale; 3] = [ModelScale::Small, ModelScale::Base, ModelScale::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelScale::Small => "small",
            ModelScale::Base => "base",
            ModelScale::Large => "large",
        }
    }
}

impl fmt::Display for ModelScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(ModelScale::Small),
            "base" => Ok(ModelScale::Base),
            "large" => Ok(ModelScale::Large),
            _ => Err(Error::InvalidArgument(format!("unknown model scale {s:?}"))),
        }
    }
}

/// Source-by-target F1 scores of one (task, model scale) experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferScoreMatrix<T> {
    task: String,
    scale: ModelScale,
    sources: Vec<LanguageId>,
    targets: Vec<LanguageId>,
    f1: Vec<Option<T>>,
}

impl<T: Scalar> TransferScoreMatrix<T> {
    pub fn new(
        task: impl Into<String>,
        scale: ModelScale,
        sources: Vec<LanguageId>,
        targets: Vec<LanguageId>,
        rows: Vec<Vec<Option<T>>>,
    ) -> Result<Self> {
        if sources.len() < 2 || targets.len() < 2 {
            return Err(Error::TooFewLanguages { min: 2, found: sources.len().min(targets.len()) });
        }
        if rows.len() != sources.len() || rows.iter().any(|r| r.len() != targets.len()) {
            return Err(Error::InvalidArgument(format!("score matrix must be {}x{}", sources.len(), targets.len())));
        }
        let hundred = T::lit(100.0);
        let f1: Vec<Option<T>> = rows.into_iter().flatten().collect();
        if let Some(v) = f1.iter().flatten().find(|v| !v.is_finite() || **v < T::zero() || **v > hundred) {
            return Err(Error::InvalidArgument(format!("F1 score {v} outside [0, 100]")));
        }
        Ok(TransferScoreMatrix { task: task.into(), scale, sources, targets, f1 })
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn scale(&self) -> ModelScale {
        self.scale
    }

    pub fn sources(&self) -> &[LanguageId] {
        &self.sources
    }

    pub fn targets(&self) -> &[LanguageId] {
        &self.targets
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.f1[i * self.targets.len() + j]
    }

    /// Parses `# task=<t> scale=<s>`, then header `src\tgt,<tgt1>,...`, then
    /// one row per source with `NA` for missing scores.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, meta) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let meta = meta.strip_prefix('#').ok_or(Error::Parse { line: 1, msg: "missing metadata line".into() })?;
        let (mut task, mut scale) = (None, None);
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("task", v)) => task = Some(v.to_string()),
                Some(("scale", v)) => scale = Some(v.parse::<ModelScale>()?),
                _ => {}
            }
        }
        let task = task.ok_or(Error::Parse { line: 1, msg: "metadata lacks task".into() })?;
        let scale = scale.ok_or(Error::Parse { line: 1, msg: "metadata lacks scale".into() })?;
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 2, msg: "missing header".into() })?;
        let mut cols = header.split(',').map(str::trim);
        if cols.next() != Some("src\\tgt") {
            return Err(Error::Parse { line: hline + 1, msg: "header must start with `src\\tgt`".into() });
        }
        let targets = cols.map(LanguageId::new).collect::<Result<Vec<_>>>()?;
        let mut sources = Vec::new();
        let mut rows = Vec::new();
        for (lineno, line) in lines {
            let mut fields = line.split(',').map(str::trim);
            sources.push(LanguageId::new(fields.next().unwrap_or_default())?);
            let row = fields
                .map(|f| match f {
                    "NA" => Ok(None),
                    v => v
                        .parse::<T>()
                        .map(Some)
                        .map_err(|_| Error::Parse { line: lineno + 1, msg: format!("bad score {v:?}") }),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(task, scale, sources, targets, rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# task={} scale={}\nsrc\\tgt", self.task, self.scale);
        for t in &self.targets {
            out.push(',');
            out.push_str(t.as_str());
        }
        out.push('\n');
        for (i, s) in self.sources.iter().enumerate() {
            out.push_str(s.as_str());
            for j in 0..self.targets.len() {
                match self.get(i, j) {
                    Some(v) => out.push_str(&format!(",{v}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Setting {
    pub task: String,
    pub scale: ModelScale,
}

/// Per-source predictive scores for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport<T> {
    pub metric: MetricId,
    /// `None` where the source row had zero variance.
    pub per_source: BTreeMap<LanguageId, Option<T>>,
    pub mean: T,
    /// Sources left out of the mean because their correlation is undefined.
    pub undefined: usize,
    pub settings: Vec<Setting>,
}

impl<T: Scalar> CorrelationReport<T> {
    pub fn to_csv(&self) -> String {
        let settings: Vec<String> = self.settings.iter().map(|s| format!("{}/{}", s.task, s.scale)).collect();
        let mut out = format!("# metric={} settings={}\nsource,score\n", self.metric, settings.join(";"));
        for (lang, v) in &self.per_source {
            match v {
                Some(v) => out.push_str(&format!("{lang},{v}\n")),
                None => out.push_str(&format!("{lang},NA\n")),
            }
        }
        out.push_str(&format!("mean,{}\n", self.mean));
        out
    }
}

fn shared_row<T: Scalar>(
    d: &DistanceMatrix<T>,
    s: &TransferScoreMatrix<T>,
    src_idx: usize,
    exclude_self: bool,
) -> Option<(usize, Vec<T>, Vec<T>)> {
    let src = &s.sources[src_idx];
    let di = d.index_of(src)?;
    let (mut dist, mut score) = (Vec::new(), Vec::new());
    for (tj, tgt) in s.targets.iter().enumerate() {
        if exclude_self && tgt == src {
            continue;
        }
        let (Some(dj), Some(v)) = (d.index_of(tgt), s.get(src_idx, tj)) else {
            continue;
        };
        dist.push(d.get(di, dj));
        score.push(v);
    }
    Some((di, dist, score))
}

/// Per-source negated Pearson correlation between distances and scores,
/// averaged over sources with a defined value.
pub fn distance_transfer_correlation<T: Scalar>(
    d: &DistanceMatrix<T>,
    s: &TransferScoreMatrix<T>,
    exclude_self: bool,
) -> Result<CorrelationReport<T>> {
    let mut per_source = BTreeMap::new();
    for si in 0..s.sources.len() {
        let Some((_, dist, score)) = shared_row(d, s, si, exclude_self) else {
            continue;
        };
        let src = s.sources[si].clone();
        if dist.len() < MIN_SHARED_TARGETS {
            return Err(Error::InsufficientTargets {
                lang: src.to_string(),
                found: dist.len(),
                min: MIN_SHARED_TARGETS,
            });
        }
        let rho = match pearson(&dist, &score) {
            Ok(r) => Some(-r),
            Err(Error::ZeroVariance) => None,
            Err(e) => return Err(e),
        };
        per_source.insert(src, rho);
    }
    if per_source.is_empty() {
        return Err(Error::InsufficientTargets { lang: "<none shared>".into(), found: 0, min: MIN_SHARED_TARGETS });
    }
    let defined: Vec<T> = per_source.values().flatten().copied().collect();
    let undefined = per_source.len() - defined.len();
    if undefined > 0 {
        log::warn!("{} of {} sources have zero-variance rows for {}", undefined, per_source.len(), d.metric());
    }
    let mean = crate::scalar::mean(&defined).ok_or(Error::NoDefinedCorrelation)?;
    Ok(CorrelationReport {
        metric: d.metric(),
        per_source,
        mean,
        undefined,
        settings: vec![Setting { task: s.task.clone(), scale: s.scale }],
    })
}

/// Negated Pearson correlation over all shared (source, target) pairs at
/// once, as an alternative to per-source averaging.
pub fn pooled_distance_transfer_correlation<T: Scalar>(
    d: &DistanceMatrix<T>,
    s: &TransferScoreMatrix<T>,
    exclude_self: bool,
) -> Result<T> {
    let (mut dist, mut score) = (Vec::new(), Vec::new());
    for si in 0..s.sources.len() {
        if let Some((_, dr, sr)) = shared_row(d, s, si, exclude_self) {
            dist.extend(dr);
            score.extend(sr);
        }
    }
    pearson(&dist, &score).map(|r| -r)
}

/// One cell of a correlation sweep.
#[derive(Debug)]
pub struct SweepEntry<T> {
    pub metric: MetricId,
    pub setting: Setting,
    pub report: Result<CorrelationReport<T>>,
}

/// Correlates every base metric buildable from `tables` with every score
/// matrix. Output is ordered by metric, then task, then scale; a failing
/// metric only fails its own entries.
pub fn correlation_sweep<T: Scalar>(
    tables: &[FeatureTable<T>],
    scores: &[TransferScoreMatrix<T>],
    exclude_self: bool,
) -> Vec<SweepEntry<T>> {
    let matrices = build_all(tables, false);
    sweep_matrices(&matrices, scores, exclude_self)
}

/// Sweep over already-built matrices.
pub fn sweep_matrices<T: Scalar>(
    matrices: &[(MetricId, Result<DistanceMatrix<T>>)],
    scores: &[TransferScoreMatrix<T>],
    exclude_self: bool,
) -> Vec<SweepEntry<T>> {
    let mut ordered: Vec<&TransferScoreMatrix<T>> = scores.iter().collect();
    ordered.sort_by(|a, b| (a.task.as_str(), a.scale).cmp(&(b.task.as_str(), b.scale)));
    let mut metrics: Vec<&(MetricId, Result<DistanceMatrix<T>>)> = matrices.iter().collect();
    metrics.sort_by_key(|(m, _)| *m);
    let mut out = Vec::new();
    for (metric, matrix) in metrics {
        for s in &ordered {
            let setting = Setting { task: s.task.clone(), scale: s.scale };
            let report = match matrix {
                Ok(d) => distance_transfer_correlation(d, s, exclude_self),
                Err(e) => Err(Error::InvalidArgument(format!("metric {metric}: {e}"))),
            };
            out.push(SweepEntry { metric: *metric, setting, report });
        }
    }
    out
}
