//! Simplex-constrained weights over component metrics.
//!
//! The objective is the mean predictive score of the blended matrix across
//! a list of transfer-score settings. It is not linear in the weights, so
//! the search is an exhaustive simplex lattice followed by deterministic
//! pairwise refinement on a finer lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{distance_transfer_correlation, Setting, TransferScoreMatrix};
use crate::distance::{check_simplex, combined_distance, BinaryMeasure, DistanceMatrix, MetricId};
use crate::error::{Error, Result};
use crate::feature_store::FeatureClass;
use crate::scalar::Scalar;

pub const MAX_COMPONENTS: usize = 6;
/// Refinement stops once the move size drops below this.
pub const REFINE_MIN_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights<T> {
    pub components: Vec<MetricId>,
    pub weights: Vec<T>,
}

impl<T: Scalar> MetricWeights<T> {
    pub fn new(components: Vec<MetricId>, weights: Vec<T>) -> Result<Self> {
        if components.len() != weights.len() || components.is_empty() {
            return Err(Error::InvalidWeights(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        check_simplex(weights.iter().copied())?;
        Ok(MetricWeights { components, weights })
    }

    pub fn weight_of(&self, metric: MetricId) -> Option<T> {
        self.components.iter().position(|m| *m == metric).map(|i| self.weights[i])
    }

    /// Blends matching matrices from `available` (looked up by metric id).
    pub fn combine(&self, available: &[DistanceMatrix<T>]) -> Result<DistanceMatrix<T>> {
        let parts = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(metric, w)| {
                available
                    .iter()
                    .find(|m| m.metric() == *metric)
                    .map(|m| (m, *w))
                    .ok_or_else(|| Error::InvalidArgument(format!("no matrix for component {metric}")))
            })
            .collect::<Result<Vec<_>>>()?;
        combined_distance(&parts)
    }
}

/// The combined metric 0.4 ander-syntax + 0.2 inner-phonology + 0.4 ander-inventory.
pub fn preset_dcomb<T: Scalar>() -> MetricWeights<T> {
    MetricWeights {
        components: vec![
            MetricId::Binary(BinaryMeasure::Anderberg, FeatureClass::Syntax),
            MetricId::Binary(BinaryMeasure::Inner, FeatureClass::Phonology),
            MetricId::Binary(BinaryMeasure::Anderberg, FeatureClass::Inventory),
        ],
        weights: vec![T::lit(0.4), T::lit(0.2), T::lit(0.4)],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult<T> {
    #[serde(flatten)]
    pub weights: MetricWeights<T>,
    pub objective: T,
    pub candidates_evaluated: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub grid_step: f64,
    pub exclude_self: bool,
    pub refine: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { grid_step: 0.05, exclude_self: true, refine: true }
    }
}

fn mean_score<T: Scalar>(
    blended: &DistanceMatrix<T>,
    scores: &[TransferScoreMatrix<T>],
    exclude_self: bool,
) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no transfer-score settings".into()));
    }
    let means = scores
        .iter()
        .map(|s| distance_transfer_correlation(blended, s, exclude_self).map(|r| r.mean))
        .collect::<Result<Vec<T>>>()?;
    Ok(means.iter().copied().sum::<T>() / T::from_count(means.len()))
}

/// Mean predictive score of the blend of `components` under `weights`,
/// averaged over every setting in `scores`.
pub fn objective<T: Scalar>(
    weights: &[T],
    components: &[DistanceMatrix<T>],
    scores: &[TransferScoreMatrix<T>],
    exclude_self: bool,
) -> Result<T> {
    if weights.len() != components.len() {
        return Err(Error::InvalidWeights("weights and components differ in length".into()));
    }
    let parts: Vec<(&DistanceMatrix<T>, T)> = components.iter().zip(weights.iter().copied()).collect();
    mean_score(&combined_distance(&parts)?, scores, exclude_self)
}

/// All compositions of `total` into `parts` non-negative integers, in
/// ascending lexicographic order.
pub fn lattice(parts: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(parts - 1, total - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(parts, total, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

fn lattice_resolution(grid_step: f64) -> Result<usize> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidArgument(format!("grid step {grid_step} not in (0, 1]")));
    }
    let m = (1.0 / grid_step).round();
    if (m * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("grid step {grid_step} does not divide 1")));
    }
    Ok(m as usize)
}

struct Evaluator<'a, T> {
    components: &'a [DistanceMatrix<T>],
    scores: &'a [TransferScoreMatrix<T>],
    exclude_self: bool,
    denom: usize,
}

impl<T: Scalar> Evaluator<'_, T> {
    fn weights(&self, units: &[usize]) -> Vec<T> {
        let d = T::from_count(self.denom);
        units.iter().map(|&u| T::from_count(u) / d).collect()
    }

    fn eval(&self, units: &[usize]) -> Option<T> {
        objective(&self.weights(units), self.components, self.scores, self.exclude_self).ok().filter(|v| v.is_finite())
    }
}

/// Exhaustive lattice search at `grid_step`, then pairwise transfers of
/// weight mass at halving step sizes until the step falls below
/// [`REFINE_MIN_STEP`]. Ties go to the lexicographically smallest weights.
pub fn fit_weights<T: Scalar>(
    metrics: &[MetricId],
    components: &[DistanceMatrix<T>],
    scores: &[TransferScoreMatrix<T>],
    opts: FitOptions,
) -> Result<FitResult<T>> {
    if components.is_empty() {
        return Err(Error::InvalidArgument("empty component list".into()));
    }
    if components.len() > MAX_COMPONENTS {
        return Err(Error::InvalidArgument(format!("at most {MAX_COMPONENTS} components, got {}", components.len())));
    }
    if metrics.len() != components.len() {
        return Err(Error::InvalidArgument("metric ids and matrices differ in length".into()));
    }
    let m = lattice_resolution(opts.grid_step)?;
    let mut halvings = 0u32;
    if opts.refine {
        while opts.grid_step / f64::from(1u32 << (halvings + 1)) >= REFINE_MIN_STEP {
            halvings += 1;
        }
    }
    let scale = 1usize << halvings;
    let eval = Evaluator { components, scores, exclude_self: opts.exclude_self, denom: m * scale };

    let candidates: Vec<Vec<usize>> =
        lattice(components.len(), m).into_iter().map(|c| c.into_iter().map(|u| u * scale).collect()).collect();
    let values: Vec<Option<T>> = candidates.par_iter().map(|c| eval.eval(c)).collect();
    let mut evaluated = candidates.len();
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (best_idx, mut best_val) = best.ok_or(Error::DegenerateObjective)?;
    let mut units = candidates[best_idx].clone();

    let n = units.len();
    for level in 1..=halvings {
        let step = scale >> level;
        loop {
            let mut improved = false;
            for i in 0..n {
                for j in 0..n {
                    if i == j || units[j] < step {
                        continue;
                    }
                    let mut trial = units.clone();
                    trial[i] += step;
                    trial[j] -= step;
                    evaluated += 1;
                    if let Some(v) = eval.eval(&trial) {
                        if v > best_val {
                            best_val = v;
                            units = trial;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }

    Ok(FitResult {
        weights: MetricWeights { components: metrics.to_vec(), weights: eval.weights(&units) },
        objective: best_val,
        candidates_evaluated: evaluated,
    })
}

/// Fits one weight vector per setting.
pub fn fit_per_setting<T: Scalar>(
    metrics: &[MetricId],
    components: &[DistanceMatrix<T>],
    scores: &[TransferScoreMatrix<T>],
    opts: FitOptions,
) -> Result<Vec<(Setting, FitResult<T>)>> {
    scores
        .iter()
        .map(|s| {
            let fit = fit_weights(metrics, components, std::slice::from_ref(s), opts)?;
            Ok((Setting { task: s.task().to_string(), scale: s.scale() }, fit))
        })
        .collect()
}

/// One row per setting: `task,scale,<metric>...,objective`.
pub fn per_setting_csv<T: Scalar>(fits: &[(Setting, FitResult<T>)]) -> String {
    let Some((_, first)) = fits.first() else {
        return String::from("task,scale,objective\n");
    };
    let mut out = String::from("task,scale");
    for m in &first.weights.components {
        out.push_str(&format!(",{m}"));
    }
    out.push_str(",objective\n");
    for (s, fit) in fits {
        out.push_str(&format!("{},{}", s.task, s.scale));
        for w in &fit.weights.weights {
            out.push_str(&format!(",{w}"));
        }
        out.push_str(&format!(",{}\n", fit.objective));
    }
    out
}
