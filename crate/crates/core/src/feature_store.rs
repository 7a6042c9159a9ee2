//! Typological feature tables and the language registry.
//!
//! A [`FeatureTable`] holds one feature class for a set of languages. Binary
//! classes (`fam`, `syntax`, `phonology`, `inventory`) may contain missing
//! cells, written `?` on disk; `geo` holds complete non-negative coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Three-letter lowercase language code such as `eng` or `tur`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageId([u8; 3]);

impl LanguageId {
    pub fn new(code: &str) -> Result<Self> {
        let bytes = code.as_bytes();
        if bytes.len() != 3 || !bytes.iter().all(|b| b.is_ascii_lowercase()) {
            return Err(Error::InvalidLanguage(code.to_string()));
        }
        Ok(LanguageId([bytes[0], bytes[1], bytes[2]]))
    }

    pub fn as_str(&self) -> &str {
        // constructed from validated ASCII only
        std::str::from_utf8(&self.0).expect("ascii")
    }
}

impl FromStr for LanguageId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LanguageId::new(s)
    }
}

impl TryFrom<String> for LanguageId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        LanguageId::new(&s)
    }
}

impl From<LanguageId> for String {
    fn from(l: LanguageId) -> String {
        l.as_str().to_string()
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// Parses a list of codes, e.g. `["eng", "tur"]`.
pub fn langs(codes: &[&str]) -> Result<Vec<LanguageId>> {
    codes.iter().map(|c| LanguageId::new(c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureClass {
    Fam,
    Geo,
    Syntax,
    Phonology,
    Inventory,
}

impl FeatureClass {
    pub const ALL: [FeatureClass; 5] =
        [FeatureClass::Fam, FeatureClass::Geo, FeatureClass::Syntax, FeatureClass::Phonology, FeatureClass::Inventory];

    /// Classes whose cells are 0/1/missing.
    pub fn is_binary(self) -> bool {
        !matches!(self, FeatureClass::Geo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureClass::Fam => "fam",
            FeatureClass::Geo => "geo",
            FeatureClass::Syntax => "syntax",
            FeatureClass::Phonology => "phonology",
            FeatureClass::Inventory => "inventory",
        }
    }
}

impl fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cells<T> {
    /// `None` marks a missing observation.
    Binary(Vec<Option<bool>>),
    Real(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    class: FeatureClass,
    cells: Cells<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn binary(class: FeatureClass, cells: Vec<Option<bool>>) -> Result<Self> {
        if !class.is_binary() {
            return Err(Error::ClassMismatch { expected: "binary class".into(), found: class.to_string() });
        }
        Ok(FeatureVector { class, cells: Cells::Binary(cells) })
    }

    /// Builds a complete binary vector from 0/1 integers.
    pub fn from_bits(class: FeatureClass, bits: &[u8]) -> Result<Self> {
        Self::binary(class, bits.iter().map(|&b| Some(b != 0)).collect())
    }

    pub fn geo(values: Vec<T>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::InvalidCell { lang: "?".into(), class: "geo".into(), cell: v.to_string() });
        }
        Ok(FeatureVector { class: FeatureClass::Geo, cells: Cells::Real(values) })
    }

    pub fn class(&self) -> FeatureClass {
        self.class
    }

    pub fn cells(&self) -> &Cells<T> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        match &self.cells {
            Cells::Binary(c) => c.len(),
            Cells::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dense real view. Fails when a binary cell is missing.
    pub fn dense(&self) -> Result<Vec<T>> {
        match &self.cells {
            Cells::Real(v) => Ok(v.clone()),
            Cells::Binary(c) => c
                .iter()
                .map(|cell| match cell {
                    Some(true) => Ok(T::one()),
                    Some(false) => Ok(T::zero()),
                    None => Err(Error::MissingValue(self.class.to_string())),
                })
                .collect(),
        }
    }
}

/// Co-observed projection of two binary vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub x: Vec<bool>,
    pub y: Vec<bool>,
}

impl AlignedPair {
    pub fn n_obs(&self) -> usize {
        self.x.len()
    }
}

/// Restricts two binary vectors to the dimensions observed in both
/// (pairwise deletion).
pub fn align_pair<T: Scalar>(x: &FeatureVector<T>, y: &FeatureVector<T>) -> Result<AlignedPair> {
    if x.class != y.class {
        return Err(Error::ClassMismatch { expected: x.class.to_string(), found: y.class.to_string() });
    }
    let (Cells::Binary(xs), Cells::Binary(ys)) = (&x.cells, &y.cells) else {
        return Err(Error::ClassMismatch { expected: "binary class".into(), found: x.class.to_string() });
    };
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { lang: "?".into(), expected: xs.len(), found: ys.len() });
    }
    let (ax, ay): (Vec<bool>, Vec<bool>) = xs.iter().zip(ys).filter_map(|(a, b)| Some(((*a)?, (*b)?))).unzip();
    if ax.is_empty() {
        return Err(Error::IncomparablePair("x".into(), "y".into()));
    }
    Ok(AlignedPair { x: ax, y: ay })
}

/// One feature class for a set of languages. Rows are kept sorted by
/// language code, so file row order never affects results.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable<T> {
    class: FeatureClass,
    dims: usize,
    rows: BTreeMap<LanguageId, FeatureVector<T>>,
}

impl<T: Scalar> FeatureTable<T> {
    pub fn new(class: FeatureClass, rows: impl IntoIterator<Item = (LanguageId, FeatureVector<T>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dims = None;
        for (lang, vec) in rows {
            if vec.class != class {
                return Err(Error::ClassMismatch { expected: class.to_string(), found: vec.class.to_string() });
            }
            let expected = *dims.get_or_insert(vec.len());
            if vec.len() != expected {
                return Err(Error::DimensionMismatch { lang: lang.to_string(), expected, found: vec.len() });
            }
            if map.contains_key(&lang) {
                return Err(Error::DuplicateLanguage(lang.to_string()));
            }
            map.insert(lang, vec);
        }
        if map.len() < 2 {
            return Err(Error::TooFewLanguages { min: 2, found: map.len() });
        }
        let dims = dims.unwrap_or(0);
        if dims == 0 {
            return Err(Error::InvalidArgument("feature vectors must be non-empty".into()));
        }
        Ok(FeatureTable { class, dims, rows: map })
    }

    pub fn class(&self) -> FeatureClass {
        self.class
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn languages(&self) -> Vec<LanguageId> {
        self.rows.keys().cloned().collect()
    }

    pub fn get(&self, lang: &LanguageId) -> Option<&FeatureVector<T>> {
        self.rows.get(lang)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LanguageId, &FeatureVector<T>)> {
        self.rows.iter()
    }

    /// Parses the feature CSV format: header `lang,f1,...,fN`, one row per
    /// language, binary cells `0`/`1`/`?`, geo cells decimal.
    pub fn parse(text: &str, class: FeatureClass) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let header: Vec<&str> = header.split(',').map(str::trim).collect();
        if header.first() != Some(&"lang") {
            return Err(Error::Parse { line: 1, msg: "header must start with `lang`".into() });
        }
        let mut rows = Vec::new();
        for (_, line) in lines {
            let mut fields = line.split(',').map(str::trim);
            let code = fields.next().unwrap_or_default();
            let lang = LanguageId::new(code)?;
            let cells: Vec<&str> = fields.collect();
            let bad = |cell: &str| Error::InvalidCell {
                lang: lang.to_string(),
                class: class.to_string(),
                cell: cell.to_string(),
            };
            if cells.len() + 1 != header.len() {
                return Err(Error::DimensionMismatch {
                    lang: lang.to_string(),
                    expected: header.len() - 1,
                    found: cells.len(),
                });
            }
            let vec = if class.is_binary() {
                let parsed = cells
                    .iter()
                    .map(|c| match *c {
                        "0" => Ok(Some(false)),
                        "1" => Ok(Some(true)),
                        "?" => Ok(None),
                        other => Err(bad(other)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                FeatureVector::binary(class, parsed)?
            } else {
                let parsed = cells
                    .iter()
                    .map(|c| match c.parse::<T>() {
                        Ok(v) if v.is_finite() && v >= T::zero() => Ok(v),
                        _ => Err(bad(c)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                FeatureVector::geo(parsed)?
            };
            rows.push((lang, vec));
        }
        Self::new(class, rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lang");
        for i in 1..=self.dims {
            out.push_str(&format!(",f{i}"));
        }
        out.push('\n');
        for (lang, vec) in &self.rows {
            out.push_str(lang.as_str());
            match &vec.cells {
                Cells::Binary(c) => {
                    for cell in c {
                        out.push_str(match cell {
                            Some(true) => ",1",
                            Some(false) => ",0",
                            None => ",?",
                        });
                    }
                }
                Cells::Real(v) => {
                    for x in v {
                        out.push_str(&format!(",{x}"));
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

pub fn load_feature_table<T: Scalar>(path: impl AsRef<Path>, class: FeatureClass) -> Result<FeatureTable<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    FeatureTable::parse(&text, class)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceTier {
    High,
    Medium,
    Low,
}

/// Share of a task's training data held by one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceShare {
    pub task: String,
    pub lang: LanguageId,
    pub percent: f64,
    pub tier: ResourceTier,
}

/// The seventeen languages covered by the bundled resource tables.
pub const DEFAULT_LANGUAGES: [&str; 17] = [
    "ara", "deu", "eng", "fas", "fra", "hin", "ita", "jpn", "kor", "nld", "pol", "por", "rus", "spa", "swe", "tur",
    "ukr",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRegistry {
    languages: Vec<LanguageId>,
}

impl LanguageRegistry {
    pub fn new(codes: impl IntoIterator<Item = LanguageId>) -> Result<Self> {
        let mut languages = Vec::new();
        for lang in codes {
            if languages.contains(&lang) {
                return Err(Error::DuplicateLanguage(lang.to_string()));
            }
            languages.push(lang);
        }
        Ok(LanguageRegistry { languages })
    }

    pub fn languages(&self) -> &[LanguageId] {
        &self.languages
    }

    pub fn contains(&self, lang: &LanguageId) -> bool {
        self.languages.contains(lang)
    }
}

impl Default for LanguageRegistry {
    fn default() -> Self {
        LanguageRegistry { languages: langs(&DEFAULT_LANGUAGES).expect("valid codes") }
    }
}

/// Training-data shares per language for the SMiLER and MINION tasks.
pub fn resource_shares() -> Vec<ResourceShare> {
    use ResourceTier::*;
    let rows: [(&str, &str, f64, ResourceTier); 23] = [
        ("smiler", "ita", 19.71, High),
        ("smiler", "fra", 16.25, High),
        ("smiler", "deu", 13.75, High),
        ("smiler", "por", 11.54, High),
        ("smiler", "nld", 10.38, High),
        ("smiler", "eng", 9.57, Medium),
        ("smiler", "kor", 5.0, Medium),
        ("smiler", "pol", 4.5, Medium),
        ("smiler", "spa", 2.95, Medium),
        ("smiler", "ara", 2.49, Medium),
        ("smiler", "rus", 1.71, Low),
        ("smiler", "swe", 1.2, Low),
        ("smiler", "fas", 0.7, Low),
        ("smiler", "ukr", 0.26, Low),
        ("minion", "eng", 39.76, High),
        ("minion", "pol", 13.7, High),
        ("minion", "tur", 13.7, High),
        ("minion", "spa", 9.99, Medium),
        ("minion", "por", 4.59, Medium),
        ("minion", "swe", 4.59, Medium),
        ("minion", "hin", 4.58, Low),
        ("minion", "kor", 4.58, Low),
        ("minion", "jpn", 4.5, Low),
    ];
    rows.iter()
        .map(|&(task, code, percent, tier)| ResourceShare {
            task: task.to_string(),
            lang: LanguageId::new(code).expect("valid code"),
            percent,
            tier,
        })
        .collect()
}
