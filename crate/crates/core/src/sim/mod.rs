//! Synthetic multi-domain classification with adversarial alignment.
//!
//! A small tanh encoder and logistic task head are trained on labeled
//! source domains. `dann` adds a domain classifier behind gradient reversal;
//! `grda` instead adds a discriminator whose node embeddings must
//! reconstruct the relation graph between the domains of example pairs.

pub mod nn;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::ModelScale;
use crate::error::{Error, Result};
use crate::feature_store::LanguageId;
use crate::scalar::Scalar;
use crate::selection::{Clustering, Column, DeltaTable, LanguageGraph, RowKey};
use nn::{bce_with_logits, edge_reconstruction_loss, softmax_cross_entropy, GradReverse, Mlp};

/// Three-letter id of the `i`-th synthetic domain: `aaa`, `aab`, ...
pub fn domain_id(i: usize) -> LanguageId {
    assert!(i < 26 * 26 * 26, "at most 17576 synthetic domains");
    let letter = |d: usize| (b'a' + d as u8) as char;
    let code: String = [letter(i / 676), letter(i / 26 % 26), letter(i % 26)].iter().collect();
    LanguageId::new(&code).expect("generated code is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub n_domains: usize,
    pub clustering: Clustering<f64>,
    pub input_dim: usize,
    pub samples_per_domain: usize,
    pub test_samples_per_domain: usize,
    /// Angle between the label directions of successive clusters.
    pub cluster_rotation: f64,
    /// Size of the perturbation of member label directions around their
    /// medoid's.
    pub within_noise: f64,
    /// Distance of each cluster's input mean from the origin. Zero gives
    /// every domain the same standard normal inputs.
    #[serde(default)]
    pub cluster_shift: f64,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    /// Consecutive clusters of the given sizes; the first domain of each is
    /// its medoid.
    pub fn with_clusters(sizes: &[usize], seed: u64) -> Result<Self> {
        let n: usize = sizes.iter().sum();
        let mut medoids = Vec::new();
        let mut assignment = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            if s == 0 {
                return Err(Error::InvalidArgument("empty cluster".into()));
            }
            medoids.push(assignment.len());
            assignment.extend(std::iter::repeat_n(c, s));
        }
        let clustering = Clustering::from_parts((0..n).map(domain_id).collect(), medoids, assignment, 0.0)?;
        Ok(SyntheticTaskSpec {
            n_domains: n,
            clustering,
            input_dim: 8,
            samples_per_domain: 400,
            test_samples_per_domain: 400,
            cluster_rotation: 0.0,
            within_noise: 0.0,
            cluster_shift: 0.0,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_domains < 2 || self.clustering.langs().len() != self.n_domains {
            return bad("need at least 2 domains, matching the clustering");
        }
        if self.input_dim < 2 {
            return bad("input_dim must be at least 2");
        }
        if self.samples_per_domain == 0 || self.test_samples_per_domain == 0 {
            return bad("sample counts must be positive");
        }
        if !(0.0..=FRAC_PI_2).contains(&self.cluster_rotation) {
            return bad("cluster_rotation must lie in [0, pi/2]");
        }
        if !(self.within_noise >= 0.0 && self.within_noise.is_finite()) {
            return bad("within_noise must be non-negative");
        }
        if !(self.cluster_shift >= 0.0 && self.cluster_shift.is_finite()) {
            return bad("cluster_shift must be non-negative");
        }
        Ok(())
    }
}

/// Inputs of one domain, with labels unless the domain is unlabeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset<T> {
    pub domain: LanguageId,
    pub dim: usize,
    /// `n × dim`, row-major.
    pub inputs: Vec<T>,
    pub labels: Option<Vec<bool>>,
}

impl<T: Scalar> DomainDataset<T> {
    pub fn new(domain: LanguageId, dim: usize, inputs: Vec<T>, labels: Option<Vec<bool>>) -> Result<Self> {
        if dim == 0 || !inputs.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!("{domain}: inputs are not a multiple of dim {dim}")));
        }
        if let Some(l) = &labels {
            if l.len() != inputs.len() / dim {
                return Err(Error::InvalidArgument(format!(
                    "{domain}: {} labels for {} inputs",
                    l.len(),
                    inputs.len() / dim
                )));
            }
        }
        Ok(DomainDataset { domain, dim, inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn unlabeled(&self) -> Self {
        DomainDataset { labels: None, ..self.clone() }
    }
}

/// Train and held-out test splits, one dataset per domain in domain order.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData<T> {
    pub train: Vec<DomainDataset<T>>,
    pub test: Vec<DomainDataset<T>>,
    /// Unit label direction of each domain.
    pub directions: Vec<Vec<f64>>,
}

impl<T: Scalar> SyntheticData<T> {
    /// Training sets for a transfer run: `sources` keep their labels,
    /// `unlabeled` are stripped, every other domain is left out.
    pub fn transfer_split(&self, sources: &[LanguageId], unlabeled: &[LanguageId]) -> Result<Vec<DomainDataset<T>>> {
        for l in sources.iter().chain(unlabeled) {
            if !self.train.iter().any(|d| &d.domain == l) {
                return Err(Error::InvalidArgument(format!("unknown domain {l}")));
            }
        }
        Ok(self
            .train
            .iter()
            .filter_map(|d| {
                if sources.contains(&d.domain) {
                    Some(d.clone())
                } else if unlabeled.contains(&d.domain) {
                    Some(d.unlabeled())
                } else {
                    None
                }
            })
            .collect())
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return unit(v);
        }
    }
}

/// Draws every domain's train and test splits.
///
/// Cluster `c` has label direction `cos(c θ) e1 + sin(c θ) e2`, with `θ` the
/// cluster rotation. Members tilt it by a random direction scaled by
/// `within_noise`; medoids keep it. Inputs are standard normal around the
/// cluster mean and labelled by the sign of their inner product with the
/// domain direction.
pub fn gen_synthetic<T: Scalar>(spec: &SyntheticTaskSpec) -> Result<SyntheticData<T>> {
    spec.validate()?;
    let dim = spec.input_dim;
    let c = &spec.clustering;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> =
        (0..c.k()).map(|_| random_unit(dim, &mut rng).into_iter().map(|x| x * spec.cluster_shift).collect()).collect();
    let directions: Vec<Vec<f64>> = (0..spec.n_domains)
        .map(|d| {
            let cluster = c.assignment()[d];
            let angle = cluster as f64 * spec.cluster_rotation;
            let mut w = vec![0.0; dim];
            w[0] = angle.cos();
            w[1] = angle.sin();
            if c.medoid_indices()[cluster] == d {
                return w;
            }
            let tilt = random_unit(dim, &mut rng);
            unit(w.iter().zip(&tilt).map(|(a, b)| a + spec.within_noise * b).collect())
        })
        .collect();
    let mut draw = |d: usize, n: usize| -> Result<DomainDataset<T>> {
        let mean = &means[c.assignment()[d]];
        let mut inputs = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();
            labels.push(x.iter().zip(&directions[d]).map(|(a, b)| a * b).sum::<f64>() > 0.0);
            inputs.extend(x.into_iter().map(T::lit));
        }
        DomainDataset::new(c.langs()[d].clone(), dim, inputs, Some(labels))
    };
    let train = (0..spec.n_domains).map(|d| draw(d, spec.samples_per_domain)).collect::<Result<Vec<_>>>()?;
    let test = (0..spec.n_domains).map(|d| draw(d, spec.test_samples_per_domain)).collect::<Result<Vec<_>>>()?;
    Ok(SyntheticData { train, test, directions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Erm,
    Dann,
    Grda,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Erm, Mode::Dann, Mode::Grda];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Erm => "erm",
            Mode::Dann => "dann",
            Mode::Grda => "grda",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRamp {
    Constant,
    /// Linear from 0 to λ over the first half of training.
    LinearHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub width: usize,
    pub depth: usize,
    pub adv_width: usize,
    pub embed_dim: usize,
    pub lambda: f64,
    pub ramp: LambdaRamp,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples drawn from each domain per step.
    pub batch_size: usize,
    pub seed: u64,
    pub graph: Option<LanguageGraph>,
    /// Configuration label carried into reports.
    pub label: String,
    pub scale: ModelScale,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Erm,
            width: 16,
            depth: 1,
            adv_width: 16,
            embed_dim: 8,
            lambda: 1.0,
            ramp: LambdaRamp::LinearHalf,
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            graph: None,
            label: "run".into(),
            scale: ModelScale::Base,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a non-negative number");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if self.width == 0 || self.depth == 0 || self.adv_width == 0 || self.embed_dim == 0 {
            return bad("layer sizes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    /// Coefficient at `progress` ∈ [0, 1] of training.
    pub fn lambda_at(&self, progress: f64) -> f64 {
        match self.ramp {
            LambdaRamp::Constant => self.lambda,
            LambdaRamp::LinearHalf => self.lambda * (2.0 * progress).min(1.0),
        }
    }
}

/// Encoder, task head and (for adversarial modes) the adversary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<T> {
    pub encoder: Mlp<T>,
    pub head: Mlp<T>,
    pub adversary: Option<Mlp<T>>,
}

/// How the adversary scores a batch of encodings.
#[derive(Debug, Clone)]
pub enum Adversary<'a> {
    /// Domain classification over this many domains.
    Classifier(usize),
    /// Edge reconstruction against an adjacency matrix over domain indices.
    Graph(&'a [Vec<bool>]),
}

pub struct Gradients<T> {
    pub encoder: Mlp<T>,
    pub head: Option<Mlp<T>>,
    pub adversary: Option<Mlp<T>>,
}

impl<T: Scalar> Model<T> {
    /// Encoder and head come from `rng`; the adversary from `adv_rng`, so
    /// that the first two are identical across modes.
    pub fn init<R: Rng>(
        input_dim: usize,
        config: &TrainConfig,
        adversary_out: Option<usize>,
        rng: &mut R,
        adv_rng: &mut R,
    ) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(std::iter::repeat_n(config.width, config.depth));
        let encoder = Mlp::init(&sizes, true, rng);
        let head = Mlp::init(&[config.width, 1], false, rng);
        let adversary = adversary_out.map(|out| Mlp::init(&[config.width, config.adv_width, out], false, adv_rng));
        Model { encoder, head, adversary }
    }

    pub fn logits(&self, x: &[T], rows: usize) -> Vec<T> {
        let h = self.encoder.forward(x, rows);
        self.head.forward(h.output(), rows).output().to_vec()
    }

    /// Task loss on a labeled batch with gradients for encoder and head.
    pub fn task_step(&self, x: &[T], labels: &[bool]) -> (T, Gradients<T>) {
        let rows = labels.len();
        let enc = self.encoder.forward(x, rows);
        let head = self.head.forward(enc.output(), rows);
        let (loss, dz) = bce_with_logits(head.output(), labels);
        let (g_head, dh) = self.head.backward(&head, &dz);
        let (g_enc, _) = self.encoder.backward(&enc, &dh);
        (loss, Gradients { encoder: g_enc, head: Some(g_head), adversary: None })
    }

    /// Adversary loss on a batch; the encoder gradient has passed through
    /// gradient reversal with coefficient `lambda`.
    pub fn adversary_step(&self, x: &[T], domains: &[usize], kind: &Adversary<'_>, lambda: T) -> (T, Gradients<T>) {
        let adv = self.adversary.as_ref().expect("adversarial model");
        let rows = domains.len();
        let enc = self.encoder.forward(x, rows);
        let reverse = GradReverse::new(lambda);
        let h = reverse.forward(enc.output());
        let out = adv.forward(&h, rows);
        let (loss, dout) = match kind {
            Adversary::Classifier(n) => softmax_cross_entropy(out.output(), *n, domains),
            Adversary::Graph(adj) => edge_reconstruction_loss(out.output(), adv.n_out(), domains, |a, b| adj[a][b]),
        };
        let (g_adv, dh) = adv.backward(&out, &dout);
        let (g_enc, _) = self.encoder.backward(&enc, &reverse.backward(&dh));
        (loss, Gradients { encoder: g_enc, head: None, adversary: Some(g_adv) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScore<T> {
    pub domain: LanguageId,
    /// Whether the domain was a labeled training source.
    pub source: bool,
    pub accuracy: T,
    pub f1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult<T> {
    pub mode: Mode,
    pub seed: u64,
    pub label: String,
    pub scale: ModelScale,
    pub sources: Vec<LanguageId>,
    pub scores: Vec<DomainScore<T>>,
    /// Mean task loss per epoch.
    pub task_loss: Vec<T>,
    /// Mean adversary loss per epoch; zero for `erm`.
    pub adv_loss: Vec<T>,
}

impl<T: Scalar> TrainResult<T> {
    pub fn score(&self, domain: &LanguageId) -> Option<&DomainScore<T>> {
        self.scores.iter().find(|s| &s.domain == domain)
    }

    /// Mean accuracy over `domains`.
    pub fn mean_accuracy(&self, domains: &[LanguageId]) -> Option<T> {
        let xs: Vec<T> = domains.iter().filter_map(|d| self.score(d)).map(|s| s.accuracy).collect();
        if xs.len() == domains.len() {
            crate::scalar::mean(&xs)
        } else {
            None
        }
    }

    pub fn mean_f1(&self, domains: &[LanguageId]) -> Option<T> {
        let xs: Vec<T> = domains.iter().filter_map(|d| self.score(d)).map(|s| s.f1).collect();
        if xs.len() == domains.len() {
            crate::scalar::mean(&xs)
        } else {
            None
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// `epoch,task_loss`.
    pub fn task_loss_csv(&self) -> String {
        curve_csv("task_loss", &self.task_loss)
    }

    /// `epoch,adv_loss`.
    pub fn adv_loss_csv(&self) -> String {
        curve_csv("adv_loss", &self.adv_loss)
    }

    /// `domain,role,accuracy,f1`.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("domain,role,accuracy,f1\n");
        for s in &self.scores {
            let role = if s.source { "source" } else { "target" };
            out.push_str(&format!("{},{role},{},{}\n", s.domain, s.accuracy, s.f1));
        }
        out
    }
}

fn curve_csv<T: Scalar>(name: &str, curve: &[T]) -> String {
    let mut out = format!("epoch,{name}\n");
    for (e, v) in curve.iter().enumerate() {
        out.push_str(&format!("{},{v}\n", e + 1));
    }
    out
}

fn evaluate<T: Scalar>(model: &Model<T>, data: &DomainDataset<T>) -> Result<(T, T)> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("test split of {} is unlabeled", data.domain)))?;
    let logits = model.logits(&data.inputs, data.len());
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (z, &y) in logits.iter().zip(labels) {
        let p = *z > T::zero();
        correct += usize::from(p == y);
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let acc = T::from_count(correct) / T::from_count(labels.len());
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 { T::one() } else { T::from_count(2 * tp) / T::from_count(denom) };
    Ok((acc, f1))
}

fn gather<T: Scalar>(d: &DomainDataset<T>, idx: &[usize], x: &mut Vec<T>) {
    for &i in idx {
        x.extend_from_slice(d.row(i));
    }
}

/// Trains on `datasets` (labeled sources and unlabeled domains) and scores
/// every split in `test`.
///
/// Each step takes `batch_size` examples from every domain in a seeded
/// order that does not depend on the mode. Encoder and head weights, the
/// adversary's weights and the batch order come from separate random
/// streams, so with `lambda = 0` the task-loss curve of `dann` and `grda`
/// equals that of `erm` bit for bit.
pub fn train<T: Scalar>(
    datasets: &[DomainDataset<T>],
    test: &[DomainDataset<T>],
    config: &TrainConfig,
) -> Result<TrainResult<T>> {
    config.validate()?;
    let Some(first) = datasets.first() else {
        return Err(Error::InvalidArgument("no training data".into()));
    };
    let dim = first.dim;
    let labeled: Vec<usize> = (0..datasets.len()).filter(|&i| datasets[i].is_labeled()).collect();
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("no labeled source dataset".into()));
    }
    for (i, d) in datasets.iter().enumerate() {
        if d.dim != dim {
            return Err(Error::DimensionMismatch { lang: d.domain.to_string(), expected: dim, found: d.dim });
        }
        if d.len() < config.batch_size {
            return Err(Error::InvalidArgument(format!("{} has fewer than batch_size examples", d.domain)));
        }
        if datasets[..i].iter().any(|e| e.domain == d.domain) {
            return Err(Error::DuplicateLanguage(d.domain.to_string()));
        }
    }
    if let Some(t) = test.iter().find(|t| t.dim != dim) {
        return Err(Error::DimensionMismatch { lang: t.domain.to_string(), expected: dim, found: t.dim });
    }

    let n_dom = datasets.len();
    let adjacency: Vec<Vec<bool>> = match config.mode {
        Mode::Grda => {
            let g =
                config.graph.as_ref().ok_or_else(|| Error::InvalidArgument("grda needs a relation graph".into()))?;
            let idx = datasets
                .iter()
                .map(|d| g.index_of(&d.domain))
                .collect::<Option<Vec<_>>>()
                .filter(|_| g.n() == n_dom)
                .ok_or_else(|| Error::InvalidArgument("graph nodes differ from the training domains".into()))?;
            idx.iter().map(|&a| idx.iter().map(|&b| g.has_edge(a, b)).collect()).collect()
        }
        _ => Vec::new(),
    };
    let adversary = match config.mode {
        Mode::Erm => None,
        Mode::Dann => Some(Adversary::Classifier(n_dom)),
        Mode::Grda => Some(Adversary::Graph(&adjacency)),
    };
    let adv_out = match config.mode {
        Mode::Erm => None,
        Mode::Dann => Some(n_dom),
        Mode::Grda => Some(config.embed_dim),
    };

    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(config.seed);
        r.set_stream(s);
        r
    };
    let (mut init_rng, mut adv_rng, mut batch_rng) = (stream(1), stream(2), stream(3));
    let mut model = Model::init(dim, config, adv_out, &mut init_rng, &mut adv_rng);

    let bs = config.batch_size;
    let steps = datasets.iter().map(|d| d.len() / bs).min().expect("non-empty");
    let total = (steps * config.epochs) as f64;
    let lr = T::lit(config.learning_rate);
    let mut task_curve = Vec::with_capacity(config.epochs);
    let mut adv_curve = Vec::with_capacity(config.epochs);
    let mut orders: Vec<Vec<usize>> = datasets.iter().map(|d| (0..d.len()).collect()).collect();

    for epoch in 0..config.epochs {
        for o in &mut orders {
            o.shuffle(&mut batch_rng);
        }
        let (mut task_sum, mut adv_sum) = (T::zero(), T::zero());
        for step in 0..steps {
            let window = step * bs..(step + 1) * bs;
            let mut x_task = Vec::with_capacity(labeled.len() * bs * dim);
            let mut y_task = Vec::with_capacity(labeled.len() * bs);
            for &i in &labeled {
                let idx = &orders[i][window.clone()];
                gather(&datasets[i], idx, &mut x_task);
                let labels = datasets[i].labels.as_ref().expect("labeled");
                y_task.extend(idx.iter().map(|&j| labels[j]));
            }
            let (task_loss, mut grads) = model.task_step(&x_task, &y_task);
            task_sum = task_sum + task_loss;

            if let Some(kind) = &adversary {
                let mut x_all = Vec::with_capacity(n_dom * bs * dim);
                let mut doms = Vec::with_capacity(n_dom * bs);
                for (i, d) in datasets.iter().enumerate() {
                    gather(d, &orders[i][window.clone()], &mut x_all);
                    doms.extend(std::iter::repeat_n(i, bs));
                }
                let progress = (epoch * steps + step) as f64 / total;
                let lambda = T::lit(config.lambda_at(progress));
                let (adv_loss, g) = model.adversary_step(&x_all, &doms, kind, lambda);
                adv_sum = adv_sum + adv_loss;
                grads.encoder.axpy(T::one(), &g.encoder);
                grads.adversary = g.adversary;
            }

            model.encoder.axpy(-lr, &grads.encoder);
            model.head.axpy(-lr, grads.head.as_ref().expect("task gradient"));
            if let (Some(a), Some(g)) = (model.adversary.as_mut(), grads.adversary.as_ref()) {
                a.axpy(-lr, g);
            }
        }
        let n = T::from_count(steps.max(1));
        let (t, a) = (task_sum / n, adv_sum / n);
        if !t.is_finite() || !a.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
        }
        task_curve.push(t);
        adv_curve.push(a);
    }

    let sources: Vec<LanguageId> = labeled.iter().map(|&i| datasets[i].domain.clone()).collect();
    let scores = test
        .par_iter()
        .map(|t| {
            let (accuracy, f1) = evaluate(&model, t)?;
            Ok(DomainScore { domain: t.domain.clone(), source: sources.contains(&t.domain), accuracy, f1 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainResult {
        mode: config.mode,
        seed: config.seed,
        label: config.label.clone(),
        scale: config.scale,
        sources,
        scores,
        task_loss: task_curve,
        adv_loss: adv_curve,
    })
}

/// Domains a run with these sources is evaluated on: the members of
/// clusters holding no source, or every non-source domain when each
/// cluster holds one.
pub fn target_domains<T: Scalar>(clustering: &Clustering<T>, sources: &[LanguageId]) -> Vec<LanguageId> {
    let covered: Vec<usize> = sources.iter().filter_map(|s| clustering.cluster_of(s)).collect();
    let outside: Vec<LanguageId> = clustering
        .langs()
        .iter()
        .filter(|l| clustering.cluster_of(l).is_some_and(|c| !covered.contains(&c)))
        .cloned()
        .collect();
    if outside.is_empty() {
        clustering.langs().iter().filter(|l| !sources.contains(l)).cloned().collect()
    } else {
        outside
    }
}

/// Mean target-domain F1 of each adversarial run minus that of the `erm`
/// run sharing its label, scale and seed, in F1 points, averaged over
/// seeds. One series per adversarial mode.
pub fn evaluate_transfer<T: Scalar>(
    task: &str,
    results: &[TrainResult<T>],
    clustering: &Clustering<f64>,
) -> Result<DeltaTable<T>> {
    let hundred = T::lit(100.0);
    let mut deltas: BTreeMap<(String, ModelScale, Mode), Vec<T>> = BTreeMap::new();
    let mut configs: Vec<String> = Vec::new();
    let mut modes: Vec<Mode> = Vec::new();
    let mut scales: Vec<ModelScale> = Vec::new();
    for r in results.iter().filter(|r| r.mode != Mode::Erm) {
        let base = results
            .iter()
            .find(|b| b.mode == Mode::Erm && b.label == r.label && b.scale == r.scale && b.seed == r.seed)
            .ok_or_else(|| {
                Error::MissingBaseline(format!("no erm run for {} at {} with seed {}", r.label, r.scale, r.seed))
            })?;
        let targets = target_domains(clustering, &r.sources);
        let f1 = |x: &TrainResult<T>| {
            x.mean_f1(&targets).ok_or_else(|| Error::InvalidArgument(format!("{} run lacks target scores", x.label)))
        };
        let d = (f1(r)? - f1(base)?) * hundred;
        deltas.entry((r.label.clone(), r.scale, r.mode)).or_default().push(d);
        if !configs.contains(&r.label) {
            configs.push(r.label.clone());
        }
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
        if !scales.contains(&r.scale) {
            scales.push(r.scale);
        }
    }
    modes.sort();
    modes.reverse();
    scales.sort();
    let series = modes.iter().map(|m| m.to_string()).collect();
    let mut table = DeltaTable::new(task, series, scales, configs);
    for ((label, scale, mode), v) in deltas {
        let m = crate::scalar::mean(&v).expect("at least one run");
        table.set(RowKey::Config(label), Column::Scale(scale), mode.as_str(), m)?;
    }
    table.fill_aggregates();
    Ok(table)
}
