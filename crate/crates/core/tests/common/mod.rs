#![allow(dead_code)]

use langdist::distance::BinaryMeasure;
use langdist::feature_store::{langs, LanguageId};
use langdist::{Clustering, DistanceMatrix, MetricId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random binary vector pair of length 1..=64 where each cell is missing
/// with probability `p_missing`; at least one position is co-observed.
pub fn random_pair(rng: &mut ChaCha8Rng, p_missing: f64) -> (Vec<Option<bool>>, Vec<Option<bool>>) {
    loop {
        let len = rng.random_range(1..=64);
        let cell = |rng: &mut ChaCha8Rng| (!rng.random_bool(p_missing)).then(|| rng.random_bool(0.5));
        let x: Vec<Option<bool>> = (0..len).map(|_| cell(rng)).collect();
        let y: Vec<Option<bool>> = (0..len).map(|_| cell(rng)).collect();
        if x.iter().zip(&y).any(|(a, b)| a.is_some() && b.is_some()) {
            return (x, y);
        }
    }
}

/// (a, b, c, d) recounted position by position over co-observed cells.
pub fn oracle_counts(x: &[Option<bool>], y: &[Option<bool>]) -> (usize, usize, usize, usize) {
    let mut k = (0, 0, 0, 0);
    for i in 0..x.len() {
        if x[i] == Some(true) && y[i] == Some(true) {
            k.0 += 1;
        }
        if x[i] == Some(true) && y[i] == Some(false) {
            k.1 += 1;
        }
        if x[i] == Some(false) && y[i] == Some(true) {
            k.2 += 1;
        }
        if x[i] == Some(false) && y[i] == Some(false) {
            k.3 += 1;
        }
    }
    k
}

pub fn oracle_distance(m: BinaryMeasure, x: &[Option<bool>], y: &[Option<bool>]) -> f64 {
    let (a, b, c, d) = oracle_counts(x, y);
    let n = (a + b + c + d) as f64;
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    match m {
        BinaryMeasure::Hamming => (b + c) / n,
        BinaryMeasure::Jaccard => {
            if a + b + c == 0.0 {
                0.0
            } else {
                1.0 - a / (a + b + c)
            }
        }
        BinaryMeasure::Inner => 1.0 - a / n,
        BinaryMeasure::Anderberg => {
            let s = (a.max(b) + c.max(d) + a.max(c) + b.max(d) - (a + c).max(b + d) - (a + b).max(c + d)) / (2.0 * n);
            1.0 - 2.0 * s
        }
    }
}

pub fn codes(n: usize) -> Vec<LanguageId> {
    let names: Vec<String> =
        (0..n).map(|i| format!("l{}{}", (b'a' + (i / 26) as u8) as char, (b'a' + (i % 26) as u8) as char)).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    langs(&refs).unwrap()
}

/// Symmetric matrix with zero diagonal and off-diagonal entries in (0, 1).
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, metric: MetricId) -> DistanceMatrix<f64> {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(0.01..1.0);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    DistanceMatrix::from_rows(metric, codes(n), rows).unwrap()
}

/// Random partition of `n` languages into `k` non-empty clusters with a
/// random medoid in each.
pub fn random_clustering(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Clustering<f64> {
    let mut assignment: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        assignment.swap(i, rng.random_range(0..=i));
    }
    let mut medoids: Vec<usize> = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            members[rng.random_range(0..members.len())]
        })
        .collect();
    // cluster labels follow medoid order
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&c| medoids[c]);
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let assignment: Vec<usize> = assignment.iter().map(|&c| relabel[c]).collect();
    medoids.sort_unstable();
    Clustering::from_parts(codes(n), medoids, assignment, 0.0).unwrap()
}

/// All-pairs shortest paths by Floyd-Warshall over an adjacency matrix.
pub fn floyd_warshall(adj: &[Vec<bool>]) -> Vec<Vec<Option<usize>>> {
    let n = adj.len();
    let mut d: Vec<Vec<Option<usize>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Some(0)
                    } else if adj[i][j] {
                        Some(1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Relative difference with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
}

/// Scores `100 (1 - d)` over every pair of distinct languages.
pub fn complementary_scores(d: &DistanceMatrix<f64>) -> langdist::TransferScoreMatrix<f64> {
    let n = d.n();
    let rows = (0..n).map(|i| (0..n).map(|j| (i != j).then(|| 100.0 * (1.0 - d.get(i, j)))).collect()).collect();
    langdist::TransferScoreMatrix::new("task", langdist::ModelScale::Base, d.langs().to_vec(), d.langs().to_vec(), rows)
        .unwrap()
}

pub const COMPONENTS: [&str; 3] = ["hamming-syntax", "jaccard-phonology", "inner-inventory"];

/// Three normalized random components over six languages with scores
/// planted on component `planted`.
pub fn planted_instance(
    seed: u64,
    planted: usize,
) -> (Vec<MetricId>, Vec<DistanceMatrix<f64>>, langdist::TransferScoreMatrix<f64>) {
    let mut r = rng(seed);
    let metrics: Vec<MetricId> = COMPONENTS.iter().map(|m| m.parse().unwrap()).collect();
    let comps: Vec<DistanceMatrix<f64>> = metrics.iter().map(|&m| random_matrix(&mut r, 6, m).normalized()).collect();
    let scores = complementary_scores(&comps[planted]);
    (metrics, comps, scores)
}

use langdist::sim::nn::Mlp;
use langdist::sim::{Adversary, Model, TrainConfig};

fn central_diff(params: &[f64], k: usize, h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut q = params.to_vec();
    q[k] = params[k] + h;
    let up = loss(&q);
    q[k] = params[k] - h;
    let down = loss(&q);
    (up - down) / (2.0 * h)
}

fn with_params(net: &Mlp<f64>, p: &[f64]) -> Mlp<f64> {
    let mut n = net.clone();
    n.set_params(p);
    n
}

/// Compares backprop gradients of a small randomly initialised model with
/// central finite differences: the task loss for encoder and head, and
/// both adversaries, whose encoder gradient must equal `-lambda` times the
/// finite-difference gradient of the adversary loss. Returns the first
/// mismatch.
pub fn reversal_gradient_check(seed: u64, rel: f64) -> Result<(), String> {
    let mut r = rng(seed);
    let cfg = TrainConfig { width: 5, depth: 2, adv_width: 4, embed_dim: 3, ..TrainConfig::default() };
    let (dim, rows, n_dom) = (4, 6, 3);
    let x: Vec<f64> = (0..dim * rows).map(|_| r.random_range(-1.5..1.5)).collect();
    let labels: Vec<bool> = (0..rows).map(|i| i % 2 == 0).collect();
    let domains: Vec<usize> = (0..rows).map(|i| i % n_dom).collect();
    let lambda: f64 = r.random_range(0.1..2.0);
    let mut adj = vec![vec![false; n_dom]; n_dom];
    for i in 0..n_dom {
        for j in i + 1..n_dom {
            let e = r.random_bool(0.5);
            adj[i][j] = e;
            adj[j][i] = e;
        }
    }
    let h = 1e-5;
    let check = |what: &str, analytic: &[f64], fd: &dyn Fn(usize) -> f64, scale: f64| -> Result<(), String> {
        for (k, a) in analytic.iter().enumerate() {
            let expected = scale * fd(k);
            if !close(*a, expected, rel, 1e-8) {
                return Err(format!("seed {seed} {what} param {k}: backprop {a} vs finite difference {expected}"));
            }
        }
        Ok(())
    };

    let mut adv_rng = rng(seed ^ 0xadd);
    let model = Model::<f64>::init(dim, &cfg, Some(n_dom), &mut r, &mut adv_rng);
    let (_, g) = model.task_step(&x, &labels);
    let enc_p = model.encoder.params();
    let head_p = model.head.params();
    check(
        "task/encoder",
        &g.encoder.params(),
        &|k| {
            central_diff(&enc_p, k, h, |p| {
                Model { encoder: with_params(&model.encoder, p), ..model.clone() }.task_step(&x, &labels).0
            })
        },
        1.0,
    )?;
    check(
        "task/head",
        &g.head.as_ref().unwrap().params(),
        &|k| {
            central_diff(&head_p, k, h, |p| {
                Model { head: with_params(&model.head, p), ..model.clone() }.task_step(&x, &labels).0
            })
        },
        1.0,
    )?;

    let graph_model = Model::<f64>::init(dim, &cfg, Some(cfg.embed_dim), &mut r, &mut adv_rng);
    let cases = [("classifier", model, Adversary::Classifier(n_dom)), ("graph", graph_model, Adversary::Graph(&adj))];
    for (name, m, kind) in &cases {
        let (_, g) = m.adversary_step(&x, &domains, kind, lambda);
        let enc_p = m.encoder.params();
        let adv = m.adversary.as_ref().unwrap();
        let adv_p = adv.params();
        let loss_enc = |p: &[f64]| {
            Model { encoder: with_params(&m.encoder, p), ..m.clone() }.adversary_step(&x, &domains, kind, lambda).0
        };
        let loss_adv = |p: &[f64]| {
            Model { adversary: Some(with_params(adv, p)), ..m.clone() }.adversary_step(&x, &domains, kind, lambda).0
        };
        check(&format!("{name}/encoder"), &g.encoder.params(), &|k| central_diff(&enc_p, k, h, loss_enc), -lambda)?;
        check(
            &format!("{name}/adversary"),
            &g.adversary.as_ref().unwrap().params(),
            &|k| central_diff(&adv_p, k, h, loss_adv),
            1.0,
        )?;
    }
    Ok(())
}
