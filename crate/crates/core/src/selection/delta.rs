use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ConfigKind;
use crate::correlation::ModelScale;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest gap tolerated between a supplied aggregate and the mean of the
/// supplied one-decimal cells: half a unit of rounding on each side.
pub const AGGREGATE_TOLERANCE: f64 = 0.1 + 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    Scale(ModelScale),
    ModelAvg,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKey {
    Config(String),
    TaskAvg,
}

/// One transfer run's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord<T> {
    pub label: String,
    pub kind: ConfigKind,
    pub scale: ModelScale,
    pub f1: T,
}

/// Table of score differences laid out by configuration row and model-scale
/// column, with `task_avg` and `model_avg` aggregates. Each scale column can
/// hold several series, e.g. one per training method.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable<T> {
    pub task: String,
    pub series: Vec<String>,
    pub scales: Vec<ModelScale>,
    pub configs: Vec<String>,
    cells: HashMap<(RowKey, Column, usize), T>,
}

/// One decimal place; negative zero prints as `0.0`.
pub fn format_cell<T: Scalar>(v: T) -> String {
    let s = format!("{:.1}", v.to_f64_lossy());
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

impl<T: Scalar> DeltaTable<T> {
    pub fn new(task: impl Into<String>, series: Vec<String>, scales: Vec<ModelScale>, configs: Vec<String>) -> Self {
        DeltaTable { task: task.into(), series, scales, configs, cells: HashMap::new() }
    }

    fn series_index(&self, series: &str) -> Option<usize> {
        self.series.iter().position(|s| s == series)
    }

    pub fn set(&mut self, row: RowKey, col: Column, series: &str, value: T) -> Result<()> {
        let s =
            self.series_index(series).ok_or_else(|| Error::InvalidArgument(format!("unknown series {series:?}")))?;
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite delta in {series}")));
        }
        self.cells.insert((row, col, s), value);
        Ok(())
    }

    pub fn get(&self, row: &RowKey, col: Column, series: &str) -> Option<T> {
        let s = self.series_index(series)?;
        self.cells.get(&(row.clone(), col, s)).copied()
    }

    /// Copy holding only the per-configuration, per-scale cells.
    pub fn without_aggregates(&self) -> Self {
        let mut out = self.clone();
        out.cells.retain(|(row, col, _), _| matches!(row, RowKey::Config(_)) && matches!(col, Column::Scale(_)));
        out
    }

    /// Fills every absent aggregate: `model_avg` is the mean across scales,
    /// `task_avg` the mean across configurations, and their intersection the
    /// mean of the `task_avg` row.
    pub fn fill_aggregates(&mut self) {
        let mean = |xs: Vec<T>| crate::scalar::mean(&xs);
        for s in 0..self.series.len() {
            for cfg in &self.configs {
                let row = RowKey::Config(cfg.clone());
                if self.cells.contains_key(&(row.clone(), Column::ModelAvg, s)) {
                    continue;
                }
                let vals = self
                    .scales
                    .iter()
                    .filter_map(|sc| self.cells.get(&(row.clone(), Column::Scale(*sc), s)).copied())
                    .collect();
                if let Some(m) = mean(vals) {
                    self.cells.insert((row, Column::ModelAvg, s), m);
                }
            }
            for sc in &self.scales {
                let key = (RowKey::TaskAvg, Column::Scale(*sc), s);
                if self.cells.contains_key(&key) {
                    continue;
                }
                let vals = self
                    .configs
                    .iter()
                    .filter_map(|cfg| self.cells.get(&(RowKey::Config(cfg.clone()), Column::Scale(*sc), s)).copied())
                    .collect();
                if let Some(m) = mean(vals) {
                    self.cells.insert(key, m);
                }
            }
            let corner = (RowKey::TaskAvg, Column::ModelAvg, s);
            if !self.cells.contains_key(&corner) {
                let vals = self
                    .scales
                    .iter()
                    .filter_map(|sc| self.cells.get(&(RowKey::TaskAvg, Column::Scale(*sc), s)).copied())
                    .collect();
                if let Some(m) = mean(vals) {
                    self.cells.insert(corner, m);
                }
            }
        }
    }

    /// Aggregates recomputed from the per-scale cells alone.
    pub fn recomputed(&self) -> Self {
        let mut t = self.without_aggregates();
        t.fill_aggregates();
        t
    }

    /// Checks supplied aggregates against the mean of the supplied cells,
    /// allowing for one-decimal rounding of both.
    pub fn check_aggregates(&self) -> Result<()> {
        let fresh = self.recomputed();
        for ((row, col, s), v) in &self.cells {
            let is_aggregate = matches!(row, RowKey::TaskAvg) || matches!(col, Column::ModelAvg);
            if !is_aggregate {
                continue;
            }
            if let Some(expected) = fresh.cells.get(&(row.clone(), *col, *s)) {
                if (v.to_f64_lossy() - expected.to_f64_lossy()).abs() > AGGREGATE_TOLERANCE {
                    return Err(Error::InvalidArgument(format!(
                        "{}: aggregate {:?}/{:?}/{} = {} disagrees with cell mean {}",
                        self.task, row, col, self.series[*s], v, expected
                    )));
                }
            }
        }
        Ok(())
    }

    fn column_names(&self) -> Vec<(Column, usize, String)> {
        let cols: Vec<Column> = self.scales.iter().map(|s| Column::Scale(*s)).chain([Column::ModelAvg]).collect();
        let mut out = Vec::new();
        for col in cols {
            let base = match col {
                Column::Scale(s) => s.as_str().to_string(),
                Column::ModelAvg => "model_avg".to_string(),
            };
            for (i, series) in self.series.iter().enumerate() {
                let name = if self.series.len() == 1 { base.clone() } else { format!("{base}:{series}") };
                out.push((col, i, name));
            }
        }
        out
    }

    pub fn csv_header(&self) -> String {
        let mut out = String::from("task,config");
        for (_, _, name) in self.column_names() {
            out.push(',');
            out.push_str(&name);
        }
        out
    }

    /// Rows in configuration order followed by `task_avg`, without header.
    pub fn csv_rows(&self) -> String {
        let cols = self.column_names();
        let mut out = String::new();
        let rows = self
            .configs
            .iter()
            .map(|c| (c.clone(), RowKey::Config(c.clone())))
            .chain([("task_avg".to_string(), RowKey::TaskAvg)]);
        for (label, row) in rows {
            out.push_str(&format!("{},{}", self.task, label));
            for (col, s, _) in &cols {
                out.push(',');
                if let Some(v) = self.cells.get(&(row.clone(), *col, *s)) {
                    out.push_str(&format_cell(*v));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", self.csv_header(), self.csv_rows())
    }

    /// Parses long-format deltas `task,config,scale,series,value`, one table
    /// per task in order of first appearance. `config = task_avg` and
    /// `scale = model_avg` rows supply aggregates; they are checked against
    /// the cells and kept, and any that are absent are computed.
    pub fn parse_long(text: &str) -> Result<Vec<Self>> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let header: Vec<&str> = header.split(',').map(str::trim).collect();
        if header != ["task", "config", "scale", "series", "value"] {
            return Err(Error::Parse { line: 1, msg: "header must be task,config,scale,series,value".into() });
        }
        let mut tables: Vec<DeltaTable<T>> = Vec::new();
        let mut entries = Vec::new();
        for (lineno, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |msg: String| Error::Parse { line: lineno + 1, msg };
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", f.len())));
            }
            let value: T = f[4].parse().map_err(|_| bad(format!("bad value {:?}", f[4])))?;
            let col = match f[2] {
                "model_avg" => Column::ModelAvg,
                s => Column::Scale(s.parse().map_err(|_| bad(format!("bad scale {s:?}")))?),
            };
            let row = match f[1] {
                "task_avg" => RowKey::TaskAvg,
                c => RowKey::Config(c.to_string()),
            };
            let idx = match tables.iter().position(|t| t.task == f[0]) {
                Some(i) => i,
                None => {
                    tables.push(DeltaTable::new(f[0], Vec::new(), Vec::new(), Vec::new()));
                    tables.len() - 1
                }
            };
            let t = &mut tables[idx];
            if !t.series.iter().any(|s| s == f[3]) {
                t.series.push(f[3].to_string());
            }
            if let Column::Scale(s) = col {
                if !t.scales.contains(&s) {
                    t.scales.push(s);
                }
            }
            if let RowKey::Config(c) = &row {
                if !t.configs.contains(c) {
                    t.configs.push(c.clone());
                }
            }
            entries.push((idx, row, col, f[3].to_string(), value));
        }
        for (idx, row, col, series, value) in entries {
            tables[idx].set(row, col, &series, value)?;
        }
        for t in &mut tables {
            t.scales.sort();
            t.check_aggregates()?;
            t.fill_aggregates();
        }
        Ok(tables)
    }
}

/// Mean F1 of each non-random configuration minus the mean F1 of the random
/// configurations at the same scale.
pub fn delta_report<T: Scalar>(task: &str, records: &[ScoreRecord<T>]) -> Result<DeltaTable<T>> {
    let mut scales: Vec<ModelScale> = records.iter().map(|r| r.scale).collect();
    scales.sort();
    scales.dedup();
    let mut configs: Vec<String> = Vec::new();
    for r in records.iter().filter(|r| r.kind != ConfigKind::Random) {
        if !configs.contains(&r.label) {
            configs.push(r.label.clone());
        }
    }
    let mean_of = |pred: &dyn Fn(&ScoreRecord<T>) -> bool| {
        let xs: Vec<T> = records.iter().filter(|r| pred(r)).map(|r| r.f1).collect();
        crate::scalar::mean(&xs)
    };
    let mut table = DeltaTable::new(task, vec!["delta".to_string()], scales.clone(), configs.clone());
    for scale in scales {
        let baseline = mean_of(&|r| r.kind == ConfigKind::Random && r.scale == scale)
            .ok_or_else(|| Error::MissingBaseline(format!("no random runs at scale {scale}")))?;
        for cfg in &configs {
            if let Some(m) = mean_of(&|r| r.kind != ConfigKind::Random && r.scale == scale && &r.label == cfg) {
                table.set(RowKey::Config(cfg.clone()), Column::Scale(scale), "delta", m - baseline)?;
            }
        }
    }
    table.fill_aggregates();
    Ok(table)
}
