use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Clustering;
use crate::error::{Error, Result};
use crate::feature_store::LanguageId;
use crate::scalar::Scalar;

/// Above this many candidate source sets, random configurations are drawn by
/// rejection sampling instead of enumeration.
const ENUMERATION_LIMIT: u128 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigKind {
    InterCluster,
    IntraCluster,
    Random,
}

/// Source and target language sets of one multi-source transfer run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransferConfiguration {
    pub kind: ConfigKind,
    /// `medoids*` for the inter-cluster set, `<medoid>*` for a cluster's
    /// intra-cluster sets, `random` otherwise.
    pub label: String,
    pub sources: BTreeSet<LanguageId>,
    pub targets: BTreeSet<LanguageId>,
}

impl TransferConfiguration {
    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSampling {
    /// Size of sampled source sets.
    pub n_sources: usize,
    /// Intra-cluster source sets drawn per cluster.
    pub n_intra: usize,
    pub n_random: usize,
    pub seed: u64,
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

fn n_choose(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Inter-cluster, intra-cluster and random transfer configurations.
///
/// Random source sets have `n_sources` languages, are never the medoid set,
/// and never lie inside a single cluster. Output is deterministic in `seed`
/// and free of duplicates; fewer random sets are returned when fewer exist.
pub fn enumerate_configurations<T: Scalar>(
    c: &Clustering<T>,
    sampling: ConfigSampling,
) -> Result<Vec<TransferConfiguration>> {
    let ns = sampling.n_sources;
    if ns == 0 {
        return Err(Error::InvalidArgument("source sets must be non-empty".into()));
    }
    for (cluster, size) in c.sizes().into_iter().enumerate() {
        if size < ns {
            return Err(Error::ClusterTooSmall { cluster, size, needed: ns });
        }
    }
    let langs = c.langs();
    let set = |idx: &[usize]| -> BTreeSet<LanguageId> { idx.iter().map(|&i| langs[i].clone()).collect() };
    let all: Vec<usize> = (0..langs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut out = vec![TransferConfiguration {
        kind: ConfigKind::InterCluster,
        label: "medoids*".into(),
        sources: set(c.medoid_indices()),
        targets: set(&all),
    }];

    for cluster in 0..c.k() {
        let members = c.members(cluster);
        let mut subsets = combinations(&members, ns);
        subsets.shuffle(&mut rng);
        subsets.truncate(sampling.n_intra);
        subsets.sort();
        let label = format!("{}*", langs[c.medoid_indices()[cluster]]);
        out.extend(subsets.iter().map(|s| TransferConfiguration {
            kind: ConfigKind::IntraCluster,
            label: label.clone(),
            sources: set(s),
            targets: set(&members),
        }));
    }

    let medoid_set: Vec<usize> = c.medoid_indices().to_vec();
    let admissible = |s: &[usize]| {
        let one_cluster = s.iter().all(|&i| c.assignment()[i] == c.assignment()[s[0]]);
        s != medoid_set.as_slice() && !one_cluster
    };
    let picked: Vec<Vec<usize>> = if n_choose(langs.len(), ns) <= ENUMERATION_LIMIT {
        let mut pool: Vec<Vec<usize>> = combinations(&all, ns).into_iter().filter(|s| admissible(s)).collect();
        pool.shuffle(&mut rng);
        pool.truncate(sampling.n_random);
        pool
    } else {
        let mut seen = BTreeSet::new();
        let mut picked = Vec::new();
        let mut attempts = 0usize;
        while picked.len() < sampling.n_random && attempts < 1000 * sampling.n_random.max(1) {
            attempts += 1;
            let mut s: Vec<usize> = all.choose_multiple(&mut rng, ns).copied().collect();
            s.sort_unstable();
            if admissible(&s) && seen.insert(s.clone()) {
                picked.push(s);
            }
        }
        picked
    };
    out.extend(picked.iter().map(|s| TransferConfiguration {
        kind: ConfigKind::Random,
        label: "random".into(),
        sources: set(s),
        targets: set(&all),
    }));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::langs;

    fn clustering(sizes: &[usize]) -> Clustering<f64> {
        let codes = ["aaa", "bbb", "ccc", "ddd", "eee", "fff", "ggg", "hhh", "iii", "jjj", "kkk", "lll"];
        let mut assignment = Vec::new();
        let mut medoids = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            medoids.push(assignment.len());
            assignment.extend(std::iter::repeat_n(c, s));
        }
        let n = assignment.len();
        Clustering::from_parts(langs(&codes[..n]).unwrap(), medoids, assignment, 0.0).unwrap()
    }

    #[test]
    fn inter_config_uses_all_medoids() {
        let c = clustering(&[4, 4]);
        let s = ConfigSampling { n_sources: 2, n_intra: 3, n_random: 5, seed: 1 };
        let configs = enumerate_configurations(&c, s).unwrap();
        let inter: Vec<_> = configs.iter().filter(|c| c.kind == ConfigKind::InterCluster).collect();
        assert_eq!(inter.len(), 1);
        assert_eq!(inter[0].n_sources(), 2);
        assert_eq!(inter[0].targets.len(), 8);
        let intra = configs.iter().filter(|c| c.kind == ConfigKind::IntraCluster).count();
        assert_eq!(intra, 6);
        assert_eq!(configs.iter().filter(|c| c.kind == ConfigKind::Random).count(), 5);
    }

    #[test]
    fn three_clusters_three_sources() {
        let c = clustering(&[4, 4, 4]);
        let s = ConfigSampling { n_sources: 3, n_intra: 2, n_random: 4, seed: 9 };
        let configs = enumerate_configurations(&c, s).unwrap();
        assert_eq!(configs[0].n_sources(), 3);
        assert_eq!(configs[0].label, "medoids*");
        assert!(configs.iter().any(|c| c.label == "eee*"));
    }

    #[test]
    fn cluster_too_small() {
        let c = clustering(&[2, 4]);
        let s = ConfigSampling { n_sources: 3, n_intra: 1, n_random: 1, seed: 0 };
        assert!(matches!(enumerate_configurations(&c, s), Err(Error::ClusterTooSmall { .. })));
    }

    #[test]
    fn deterministic_and_unique() {
        let c = clustering(&[3, 4, 5]);
        let s = ConfigSampling { n_sources: 3, n_intra: 2, n_random: 30, seed: 42 };
        let a = enumerate_configurations(&c, s).unwrap();
        let b = enumerate_configurations(&c, s).unwrap();
        assert_eq!(a, b);
        let unique: BTreeSet<_> = a.iter().collect();
        assert_eq!(unique.len(), a.len());
    }
}
