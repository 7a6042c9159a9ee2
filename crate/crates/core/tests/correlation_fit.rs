mod common;

use common::{complementary_scores, planted_instance, random_matrix, rng};
use langdist::metric_fit::lattice;
use langdist::{
    distance_transfer_correlation, fit_weights, pearson, preset_dcomb, DistanceMatrix, FitOptions, MetricId,
    TransferScoreMatrix,
};
use rand::Rng;

fn definitional_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn pearson_matches_definition() {
    let mut r = rng(1);
    for _ in 0..100 {
        let n = r.random_range(2..20);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let p = pearson(&x, &y).unwrap();
        assert!((p - definitional_pearson(&x, &y)).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&p));
    }
    assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn complementary_scores_give_unit_score() {
    for seed in 0..10 {
        let d = random_matrix(&mut rng(seed), 7, MetricId::EuclidGeo);
        let r = distance_transfer_correlation(&d, &complementary_scores(&d), true).unwrap();
        for v in r.per_source.values() {
            assert!((v.unwrap() - 1.0).abs() < 1e-9);
        }
        assert!((r.mean - 1.0).abs() < 1e-9);
    }
}

fn affine_scores(s: &TransferScoreMatrix<f64>, alpha: f64, beta: f64) -> TransferScoreMatrix<f64> {
    let rows = (0..s.sources().len())
        .map(|i| (0..s.targets().len()).map(|j| s.get(i, j).map(|v| alpha * v + beta)).collect())
        .collect();
    TransferScoreMatrix::new(s.task(), s.scale(), s.sources().to_vec(), s.targets().to_vec(), rows).unwrap()
}

#[test]
fn scores_are_invariant_under_affine_maps() {
    let mut r = rng(9);
    let d = random_matrix(&mut r, 6, MetricId::EuclidFam);
    let noisy = random_matrix(&mut r, 6, MetricId::EuclidGeo);
    let s = complementary_scores(&noisy);
    let base = distance_transfer_correlation(&d, &s, true).unwrap();
    for _ in 0..10 {
        let alpha = r.random_range(0.1..1.0);
        let beta = r.random_range(0.0..100.0 * (1.0 - alpha));
        let gamma = r.random_range(0.1..10.0);
        let delta = r.random_range(0.0..5.0);
        let rows = (0..6).map(|i| (0..6).map(|j| gamma * d.get(i, j) + delta).collect()).collect();
        let d2 = DistanceMatrix::from_rows(MetricId::EuclidFam, d.langs().to_vec(), rows).unwrap();
        let got = distance_transfer_correlation(&d2, &affine_scores(&s, alpha, beta), true).unwrap();
        for (k, v) in &base.per_source {
            assert!((v.unwrap() - got.per_source[k].unwrap()).abs() < 1e-12);
        }
        assert!((base.mean - got.mean).abs() < 1e-12);
    }
}

#[test]
fn fit_recovers_planted_component() {
    for seed in 0..10 {
        let planted = seed as usize % 3;
        let (metrics, comps, scores) = planted_instance(seed, planted);
        let fit = fit_weights(&metrics, &comps, &[scores], FitOptions::default()).unwrap();
        for (i, w) in fit.weights.weights.iter().enumerate() {
            assert_eq!(*w, if i == planted { 1.0 } else { 0.0 }, "seed {seed}");
        }
        assert!((fit.objective - 1.0).abs() < 1e-9);
    }
}

#[test]
fn lattice_has_stars_and_bars_size() {
    assert_eq!(lattice(3, 20).len(), 231);
    assert_eq!(lattice(2, 4), vec![vec![0, 4], vec![1, 3], vec![2, 2], vec![3, 1], vec![4, 0]]);
    for w in lattice(4, 10) {
        assert_eq!(w.iter().sum::<usize>(), 10);
    }
}

#[test]
fn preset_weights_are_exact() {
    let p = preset_dcomb::<f64>();
    let names: Vec<String> = p.components.iter().map(|m| m.to_string()).collect();
    assert_eq!(names, ["ander-syntax", "inner-phonology", "ander-inventory"]);
    assert_eq!(p.weights, [0.4, 0.2, 0.4]);
}
