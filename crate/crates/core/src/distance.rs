//! Pairwise language distances over typological feature tables.
//!
//! Binary classes are compared through the 2x2 contingency counts of their
//! co-observed dimensions; `fam` and `geo` use the Euclidean norm. Together
//! these give fourteen base metrics, which can be min-max normalized and
//! blended into a combined metric.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{align_pair, AlignedPair, FeatureClass, FeatureTable, FeatureVector, LanguageId};
use crate::scalar::Scalar;

/// Agreement counts between two binary vectors over their co-observed
/// dimensions: `a` = both 1, `b` = x only, `c` = y only, `d` = both 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContingencyCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl ContingencyCounts {
    pub fn n(&self) -> usize {
        self.a + self.b + self.c + self.d
    }

    pub fn from_aligned(pair: &AlignedPair) -> Self {
        pair.x.iter().zip(&pair.y).fold(ContingencyCounts::default(), |mut k, (&x, &y)| {
            match (x, y) {
                (true, true) => k.a += 1,
                (true, false) => k.b += 1,
                (false, true) => k.c += 1,
                (false, false) => k.d += 1,
            }
            k
        })
    }
}

pub fn contingency<T: Scalar>(x: &FeatureVector<T>, y: &FeatureVector<T>) -> Result<ContingencyCounts> {
    Ok(ContingencyCounts::from_aligned(&align_pair(x, y)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryMeasure {
    Hamming,
    Jaccard,
    Inner,
    Anderberg,
}

impl BinaryMeasure {
    pub const ALL: [BinaryMeasure; 4] =
        [BinaryMeasure::Hamming, BinaryMeasure::Jaccard, BinaryMeasure::Inner, BinaryMeasure::Anderberg];

    fn tag(self) -> &'static str {
        match self {
            BinaryMeasure::Hamming => "hamming",
            BinaryMeasure::Jaccard => "jaccard",
            BinaryMeasure::Inner => "inner",
            BinaryMeasure::Anderberg => "ander",
        }
    }

    /// Distance in `[0, 1]` from contingency counts with `n >= 1`.
    ///
    /// Inner-product distance uses the count of shared ones only. Anderberg
    /// similarity lies in `[0, 0.5]` and is doubled before complementing.
    pub fn distance<T: Scalar>(self, k: &ContingencyCounts) -> T {
        let n = k.n();
        debug_assert!(n >= 1);
        let f = T::from_count;
        match self {
            BinaryMeasure::Hamming => f(k.b + k.c) / f(n),
            BinaryMeasure::Jaccard => {
                let union = k.a + k.b + k.c;
                if union == 0 {
                    T::zero()
                } else {
                    T::one() - f(k.a) / f(union)
                }
            }
            BinaryMeasure::Inner => T::one() - f(k.a) / f(n),
            BinaryMeasure::Anderberg => {
                let (a, b, c, d) = (k.a, k.b, k.c, k.d);
                // numerator is a non-negative integer
                let num = a.max(b) + c.max(d) + a.max(c) + b.max(d) - (a + c).max(b + d) - (a + b).max(c + d);
                T::one() - f(num) / f(n)
            }
        }
    }
}

/// Typological classes measured with the binary measures.
pub const TYPOLOGICAL: [FeatureClass; 3] = [FeatureClass::Syntax, FeatureClass::Phonology, FeatureClass::Inventory];

/// Identifier of a distance metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricId {
    Binary(BinaryMeasure, FeatureClass),
    EuclidFam,
    EuclidGeo,
    Combined,
}

impl MetricId {
    /// The fourteen base metrics in canonical order.
    pub fn all_base() -> Vec<MetricId> {
        let mut out: Vec<MetricId> =
            BinaryMeasure::ALL.iter().flat_map(|&m| TYPOLOGICAL.iter().map(move |&c| MetricId::Binary(m, c))).collect();
        out.push(MetricId::EuclidFam);
        out.push(MetricId::EuclidGeo);
        out
    }

    /// Feature class the metric consumes; `None` for the combined tag.
    pub fn feature_class(self) -> Option<FeatureClass> {
        match self {
            MetricId::Binary(_, c) => Some(c),
            MetricId::EuclidFam => Some(FeatureClass::Fam),
            MetricId::EuclidGeo => Some(FeatureClass::Geo),
            MetricId::Combined => None,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::Binary(m, c) => write!(f, "{}-{}", m.tag(), c),
            MetricId::EuclidFam => f.write_str("euclid-fam"),
            MetricId::EuclidGeo => f.write_str("euclid-geo"),
            MetricId::Combined => f.write_str("combined"),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclid-fam" => return Ok(MetricId::EuclidFam),
            "euclid-geo" => return Ok(MetricId::EuclidGeo),
            "combined" => return Ok(MetricId::Combined),
            _ => {}
        }
        let bad = || Error::InvalidArgument(format!("unknown metric {s:?}"));
        let (kind, class) = s.split_once('-').ok_or_else(bad)?;
        let measure = match kind {
            "hamming" => BinaryMeasure::Hamming,
            "jaccard" => BinaryMeasure::Jaccard,
            "inner" => BinaryMeasure::Inner,
            "ander" | "anderberg" => BinaryMeasure::Anderberg,
            _ => return Err(bad()),
        };
        let class: FeatureClass = class.parse().map_err(|_| bad())?;
        if !TYPOLOGICAL.contains(&class) {
            return Err(bad());
        }
        Ok(MetricId::Binary(measure, class))
    }
}

impl Serialize for MetricId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Euclidean distance between two complete `fam` or `geo` vectors.
pub fn euclidean_distance<T: Scalar>(x: &FeatureVector<T>, y: &FeatureVector<T>) -> Result<T> {
    if x.class() != y.class() {
        return Err(Error::ClassMismatch { expected: x.class().to_string(), found: y.class().to_string() });
    }
    let (xs, ys) = (x.dense()?, y.dense()?);
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { lang: "?".into(), expected: xs.len(), found: ys.len() });
    }
    Ok(xs.iter().zip(&ys).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt())
}

/// Square matrix of pairwise distances; row index is the first argument.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    metric: MetricId,
    langs: Vec<LanguageId>,
    values: Vec<T>,
    normalized: bool,
    degenerate: bool,
}

impl<T: Scalar> DistanceMatrix<T> {
    /// Builds from row-major values. Entries must be finite.
    pub fn from_rows(metric: MetricId, langs: Vec<LanguageId>, rows: Vec<Vec<T>>) -> Result<Self> {
        let n = langs.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!("distance matrix must be {n}x{n}")));
        }
        let values: Vec<T> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("distance matrix entries must be finite".into()));
        }
        Ok(DistanceMatrix { metric, langs, values, normalized: false, degenerate: false })
    }

    pub fn metric(&self) -> MetricId {
        self.metric
    }

    pub fn langs(&self) -> &[LanguageId] {
        &self.langs
    }

    pub fn n(&self) -> usize {
        self.langs.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Set when normalization met a constant off-diagonal.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, lang: &LanguageId) -> Option<usize> {
        self.langs.iter().position(|l| l == lang)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Upper-triangle entries (`i < j`) in row-major order.
    pub fn upper_triangle(&self) -> Vec<T> {
        let n = self.n();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect()
    }

    /// Min-max rescales the off-diagonal to `[0, 1]` and applies the same
    /// affine map to the diagonal. A constant off-diagonal maps to zero and
    /// marks the matrix degenerate.
    pub fn normalized(&self) -> Self {
        let n = self.n();
        let off = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        let (lo, hi) = off.fold((T::infinity(), T::neg_infinity()), |(lo, hi), (i, j)| {
            let v = self.get(i, j);
            (lo.min(v), hi.max(v))
        });
        let mut out = self.clone();
        out.normalized = true;
        if n < 2 {
            return out;
        }
        let range = hi - lo;
        if range == T::zero() {
            out.degenerate = true;
            out.values.iter_mut().for_each(|v| *v = *v - lo);
        } else {
            out.degenerate = false;
            for i in 0..n {
                for j in 0..n {
                    let v = self.get(i, j);
                    // exact endpoints keep normalization idempotent
                    out.values[i * n + j] = if i != j && v == lo {
                        T::zero()
                    } else if i != j && v == hi {
                        T::one()
                    } else {
                        (v - lo) / range
                    };
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# metric={} normalized={}\nlang", self.metric, self.normalized);
        for l in &self.langs {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for (i, l) in self.langs.iter().enumerate() {
            out.push_str(l.as_str());
            for v in self.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, meta) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let meta = meta.strip_prefix('#').ok_or(Error::Parse { line: 1, msg: "missing metadata line".into() })?;
        let mut metric = None;
        let mut normalized = false;
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("metric", v)) => metric = Some(v.parse::<MetricId>()?),
                Some(("normalized", v)) => {
                    normalized =
                        v.parse().map_err(|_| Error::Parse { line: 1, msg: format!("bad normalized flag {v:?}") })?
                }
                _ => {}
            }
        }
        let metric = metric.ok_or(Error::Parse { line: 1, msg: "metadata lacks metric".into() })?;
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 2, msg: "missing header".into() })?;
        let mut cols = header.split(',');
        if cols.next() != Some("lang") {
            return Err(Error::Parse { line: hline + 1, msg: "header must start with `lang`".into() });
        }
        let langs = cols.map(LanguageId::new).collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for (idx, (lineno, line)) in lines.enumerate() {
            let mut fields = line.split(',');
            let lang = LanguageId::new(fields.next().unwrap_or_default())?;
            if langs.get(idx) != Some(&lang) {
                return Err(Error::Parse { line: lineno + 1, msg: format!("row {lang} out of order with header") });
            }
            let row = fields
                .map(|f| {
                    f.parse::<T>().map_err(|_| Error::Parse { line: lineno + 1, msg: format!("bad number {f:?}") })
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        let mut m = Self::from_rows(metric, langs, rows)?;
        m.normalized = normalized;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    #[cfg(test)]
    pub(crate) fn with_metric(mut self, metric: MetricId) -> Self {
        self.metric = metric;
        self
    }
}

fn pair_distance<T: Scalar>(metric: MetricId, x: &FeatureVector<T>, y: &FeatureVector<T>) -> Result<T> {
    match metric {
        MetricId::Binary(m, _) => Ok(m.distance(&contingency(x, y)?)),
        MetricId::EuclidFam | MetricId::EuclidGeo => euclidean_distance(x, y),
        MetricId::Combined => Err(Error::InvalidArgument("combined metric is built from component matrices".into())),
    }
}

/// All-pairs distance matrix for one base metric. Diagonal entries are
/// computed like any other pair.
pub fn build_distance_matrix<T: Scalar>(
    table: &FeatureTable<T>,
    metric: MetricId,
    normalize: bool,
) -> Result<DistanceMatrix<T>> {
    let class = metric
        .feature_class()
        .ok_or_else(|| Error::InvalidArgument("combined metric is built from component matrices".into()))?;
    if class != table.class() {
        return Err(Error::ClassMismatch { expected: class.to_string(), found: table.class().to_string() });
    }
    let rows: Vec<(&LanguageId, &FeatureVector<T>)> = table.iter().collect();
    let langs: Vec<LanguageId> = rows.iter().map(|(l, _)| (*l).clone()).collect();
    let n = rows.len();
    let values = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            pair_distance(metric, rows[i].1, rows[j].1).map_err(|e| match e {
                Error::IncomparablePair(..) => Error::IncomparablePair(rows[i].0.to_string(), rows[j].0.to_string()),
                other => other,
            })
        })
        .collect::<Result<Vec<T>>>()?;
    let m = DistanceMatrix { metric, langs, values, normalized: false, degenerate: false };
    Ok(if normalize { m.normalized() } else { m })
}

/// Entrywise weighted sum of normalized matrices over the same languages.
pub fn combined_distance<T: Scalar>(components: &[(&DistanceMatrix<T>, T)]) -> Result<DistanceMatrix<T>> {
    let (first, _) = components.first().ok_or_else(|| Error::InvalidWeights("no components".into()))?;
    check_simplex(components.iter().map(|(_, w)| *w))?;
    for (m, _) in components {
        if !m.normalized {
            return Err(Error::InvalidArgument(format!("component {} is not normalized", m.metric)));
        }
        if m.langs != first.langs {
            return Err(Error::LanguageMismatch);
        }
    }
    let len = first.values.len();
    let values =
        (0..len).map(|idx| components.iter().fold(T::zero(), |acc, (m, w)| acc + *w * m.values[idx])).collect();
    Ok(DistanceMatrix {
        metric: MetricId::Combined,
        langs: first.langs.clone(),
        values,
        normalized: true,
        degenerate: false,
    })
}

/// Non-negative weights summing to one within `1e-9`.
pub fn check_simplex<T: Scalar>(weights: impl IntoIterator<Item = T>) -> Result<()> {
    let mut sum = T::zero();
    for w in weights {
        if !w.is_finite() || w < T::zero() {
            return Err(Error::InvalidWeights(format!("weight {w} is negative or non-finite")));
        }
        sum = sum + w;
    }
    if (sum - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Builds every base metric whose feature class has a table. Metrics whose
/// table is absent are skipped; construction errors are returned per metric.
pub fn build_all<T: Scalar>(tables: &[FeatureTable<T>], normalize: bool) -> Vec<(MetricId, Result<DistanceMatrix<T>>)> {
    MetricId::all_base()
        .into_iter()
        .filter_map(|metric| {
            let class = metric.feature_class()?;
            let table = tables.iter().find(|t| t.class() == class)?;
            Some((metric, build_distance_matrix(table, metric, normalize)))
        })
        .collect()
}

/// Pearson correlation between every pair of matrices over their upper
/// triangles. `None` marks pairs where either matrix is constant.
pub fn metric_correlations<T: Scalar>(matrices: &[DistanceMatrix<T>]) -> Result<Vec<Vec<Option<T>>>> {
    let tris: Vec<Vec<T>> = matrices.iter().map(|m| m.upper_triangle()).collect();
    if let Some(first) = matrices.first() {
        if matrices.iter().any(|m| m.langs != first.langs) {
            return Err(Error::LanguageMismatch);
        }
    }
    Ok(tris.iter().map(|a| tris.iter().map(|b| crate::correlation::pearson(a, b).ok()).collect()).collect())
}
