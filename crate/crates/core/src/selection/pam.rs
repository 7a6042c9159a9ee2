use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::feature_store::LanguageId;
use crate::scalar::Scalar;

/// Largest medoid-set count [`brute_force_medoids`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Partition of languages around medoids. Cluster `c` is centred on
/// `langs[medoids[c]]`; medoids are stored in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    langs: Vec<LanguageId>,
    medoids: Vec<usize>,
    assignment: Vec<usize>,
    cost: T,
}

#[derive(Serialize, Deserialize)]
struct ClusteringJson<T> {
    k: usize,
    medoids: Vec<LanguageId>,
    assignment: BTreeMap<LanguageId, usize>,
    cost: T,
}

impl<T: Scalar> Clustering<T> {
    /// Builds a clustering from explicit medoids and assignment, checking
    /// that each medoid belongs to its own cluster.
    pub fn from_parts(langs: Vec<LanguageId>, medoids: Vec<usize>, assignment: Vec<usize>, cost: T) -> Result<Self> {
        let n = langs.len();
        if assignment.len() != n || medoids.is_empty() || medoids.iter().any(|&m| m >= n) {
            return Err(Error::InvalidArgument("malformed clustering".into()));
        }
        if medoids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("medoids must be strictly increasing".into()));
        }
        for (c, &m) in medoids.iter().enumerate() {
            if assignment[m] != c {
                return Err(Error::InvalidArgument(format!("medoid {} not in its own cluster", langs[m])));
            }
        }
        if assignment.iter().any(|&c| c >= medoids.len()) {
            return Err(Error::InvalidArgument("assignment refers to a missing cluster".into()));
        }
        Ok(Clustering { langs, medoids, assignment, cost })
    }

    pub fn k(&self) -> usize {
        self.medoids.len()
    }

    pub fn langs(&self) -> &[LanguageId] {
        &self.langs
    }

    pub fn medoid_indices(&self) -> &[usize] {
        &self.medoids
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cost(&self) -> T {
        self.cost
    }

    pub fn medoids(&self) -> Vec<LanguageId> {
        self.medoids.iter().map(|&m| self.langs[m].clone()).collect()
    }

    pub fn cluster_of(&self, lang: &LanguageId) -> Option<usize> {
        self.langs.iter().position(|l| l == lang).map(|i| self.assignment[i])
    }

    /// Member indices of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.langs.len()).filter(|&i| self.assignment[i] == c).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k()).map(|c| self.members(c).len()).collect()
    }

    fn view(&self) -> ClusteringJson<T> {
        ClusteringJson {
            k: self.k(),
            medoids: self.medoids(),
            assignment: self.langs.iter().cloned().zip(self.assignment.iter().copied()).collect(),
            cost: self.cost,
        }
    }

    fn from_view(view: ClusteringJson<T>) -> Result<Self> {
        let langs: Vec<LanguageId> = view.assignment.keys().cloned().collect();
        let mut medoids = view
            .medoids
            .iter()
            .map(|m| {
                langs
                    .iter()
                    .position(|l| l == m)
                    .ok_or_else(|| Error::InvalidArgument(format!("medoid {m} not assigned")))
            })
            .collect::<Result<Vec<_>>>()?;
        // cluster indices follow medoid order in the file
        let order: Vec<usize> = medoids.clone();
        medoids.sort_unstable();
        let remap: Vec<usize> = order.iter().map(|m| medoids.iter().position(|x| x == m).expect("present")).collect();
        let assignment = view
            .assignment
            .values()
            .map(|&c| remap.get(c).copied().ok_or_else(|| Error::InvalidArgument(format!("cluster {c} has no medoid"))))
            .collect::<Result<Vec<_>>>()?;
        if view.k != medoids.len() {
            return Err(Error::InvalidArgument("k does not match medoid count".into()));
        }
        Self::from_parts(langs, medoids, assignment, view.cost)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.view()).expect("clustering serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let view: ClusteringJson<T> =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        Self::from_view(view)
    }
}

impl<T: Scalar> Serialize for Clustering<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.view().serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Clustering<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let view = ClusteringJson::deserialize(d)?;
        Self::from_view(view).map_err(serde::de::Error::custom)
    }
}

/// Symmetric working copy of the distances; asymmetric input is averaged.
fn symmetric_values<T: Scalar>(d: &DistanceMatrix<T>) -> Vec<T> {
    let n = d.n();
    if !d.is_symmetric() {
        log::warn!("distance matrix {} is asymmetric; symmetrizing by averaging", d.metric());
    }
    let half = T::lit(0.5);
    (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if i == j {
                d.get(i, i)
            } else {
                (d.get(i, j) + d.get(j, i)) * half
            }
        })
        .collect()
}

/// Sum over non-medoid points of the distance to their nearest medoid.
fn medoid_cost<T: Scalar>(dist: &[T], n: usize, medoids: &[usize]) -> T {
    (0..n)
        .filter(|p| !medoids.contains(p))
        .map(|p| medoids.iter().map(|&m| dist[p * n + m]).fold(T::infinity(), T::min))
        .sum()
}

fn finish<T: Scalar>(d: &DistanceMatrix<T>, dist: &[T], mut medoids: Vec<usize>) -> Clustering<T> {
    let n = d.n();
    medoids.sort_unstable();
    let assignment = (0..n)
        .map(|p| {
            if let Some(c) = medoids.iter().position(|&m| m == p) {
                return c;
            }
            let mut best = 0;
            for c in 1..medoids.len() {
                if dist[p * n + medoids[c]] < dist[p * n + medoids[best]] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let cost = medoid_cost(dist, n, &medoids);
    Clustering { langs: d.langs().to_vec(), medoids, assignment, cost }
}

/// Instances with at most this many medoid sets are solved exactly by [`pam`].
pub const EXACT_LIMIT: u128 = 10_000;

/// k-medoids: BUILD and SWAP, then an exhaustive check when there are at
/// most [`EXACT_LIMIT`] medoid sets, so small instances are solved exactly.
/// The local optimum is kept on ties.
pub fn pam<T: Scalar>(d: &DistanceMatrix<T>, k: usize, seed: u64) -> Result<Clustering<T>> {
    let local = pam_build_swap(d, k, seed)?;
    if binomial(d.n(), k) <= EXACT_LIMIT {
        let (exact, _) = brute_force_medoids(d, k)?;
        if exact.cost < local.cost {
            return Ok(exact);
        }
    }
    Ok(local)
}

/// k-medoids by greedy BUILD then steepest-descent SWAP to a local optimum.
///
/// The seed fixes the order in which candidates are scanned, which decides
/// ties between equal-cost moves. Self-distances never enter the cost.
pub fn pam_build_swap<T: Scalar>(d: &DistanceMatrix<T>, k: usize, seed: u64) -> Result<Clustering<T>> {
    let n = d.n();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let dist = symmetric_values(d);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    while medoids.len() < k {
        let mut best: Option<(usize, T)> = None;
        for &c in &order {
            if medoids.contains(&c) {
                continue;
            }
            medoids.push(c);
            let cost = medoid_cost(&dist, n, &medoids);
            medoids.pop();
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some((c, cost));
            }
        }
        medoids.push(best.expect("candidate available").0);
    }

    let mut current = medoid_cost(&dist, n, &medoids);
    loop {
        let mut best_swap: Option<(usize, usize, T)> = None;
        for slot in 0..k {
            for &o in order.iter().filter(|o| !medoids.contains(o)) {
                let mut trial = medoids.clone();
                trial[slot] = o;
                let cost = medoid_cost(&dist, n, &trial);
                let bar = best_swap.map_or(current, |(_, _, c)| c);
                if cost < bar {
                    best_swap = Some((slot, o, cost));
                }
            }
        }
        match best_swap {
            Some((slot, o, cost)) => {
                debug_assert!(cost < current);
                medoids[slot] = o;
                current = cost;
            }
            None => break,
        }
    }
    Ok(finish(d, &dist, medoids))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Globally optimal medoids by enumerating every k-subset in lexicographic
/// order; the first subset reaching the minimum wins. Returns the clustering
/// and the number of subsets evaluated.
pub fn brute_force_medoids<T: Scalar>(d: &DistanceMatrix<T>, k: usize) -> Result<(Clustering<T>, u128)> {
    let n = d.n();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let total = binomial(n, k);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(total));
    }
    let dist = symmetric_values(d);
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, T)> = None;
    let mut count = 0u128;
    loop {
        count += 1;
        let cost = medoid_cost(&dist, n, &combo);
        if best.as_ref().is_none_or(|(_, b)| cost < *b) {
            best = Some((combo.clone(), cost));
        }
        // next combination in lexicographic order
        let Some(i) = (0..k).rev().find(|&i| combo[i] < n - k + i) else {
            break;
        };
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
    let (medoids, _) = best.expect("at least one subset");
    Ok((finish(d, &dist, medoids), count))
}

/// Largest k (scanning down from `n / min_size`) whose PAM clustering has
/// every cluster with at least `min_size` members.
pub fn select_k<T: Scalar>(d: &DistanceMatrix<T>, min_size: usize, seed: u64) -> Result<(usize, Clustering<T>)> {
    let n = d.n();
    if min_size == 0 || n < min_size {
        return Err(Error::InvalidArgument(format!("need at least min_size = {min_size} languages, have {n}")));
    }
    for k in (1..=n / min_size).rev() {
        let c = pam(d, k, seed)?;
        if c.sizes().iter().all(|&s| s >= min_size) {
            return Ok((k, c));
        }
    }
    unreachable!("k = 1 always satisfies the size constraint")
}
