use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Clustering;
use crate::error::{Error, Result};
use crate::feature_store::LanguageId;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Medoid,
    Member,
}

/// Undirected relation graph: each member joined to its medoid, and the
/// medoids joined to each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageGraph {
    pub nodes: Vec<LanguageId>,
    pub roles: Vec<NodeRole>,
    pub adjacency: Vec<Vec<bool>>,
}

impl LanguageGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    /// Edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| self.adjacency[i][j]).collect()
    }

    pub fn index_of(&self, lang: &LanguageId) -> Option<usize> {
        self.nodes.iter().position(|l| l == lang)
    }

    /// Hop counts from `src`; `None` for unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes are reached");
            for v in 0..self.n() {
                if self.adjacency[u][v] && dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    /// Graphviz rendering; medoid-to-medoid edges are drawn red.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph relations {\n");
        for (l, r) in self.nodes.iter().zip(&self.roles) {
            let shape = match r {
                NodeRole::Medoid => "doublecircle",
                NodeRole::Member => "circle",
            };
            out.push_str(&format!("  {l} [shape={shape}];\n"));
        }
        for (i, j) in self.edges() {
            let red = self.roles[i] == NodeRole::Medoid && self.roles[j] == NodeRole::Medoid;
            let attr = if red { " [color=red]" } else { "" };
            out.push_str(&format!("  {} -- {}{attr};\n", self.nodes[i], self.nodes[j]));
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_relation_graph<T: Scalar>(c: &Clustering<T>) -> LanguageGraph {
    let n = c.langs().len();
    let medoids = c.medoid_indices();
    let mut adjacency = vec![vec![false; n]; n];
    for (p, &cluster) in c.assignment().iter().enumerate() {
        let m = medoids[cluster];
        if p != m {
            adjacency[p][m] = true;
            adjacency[m][p] = true;
        }
    }
    for &a in medoids {
        for &b in medoids {
            if a != b {
                adjacency[a][b] = true;
            }
        }
    }
    let roles = (0..n).map(|i| if medoids.contains(&i) { NodeRole::Medoid } else { NodeRole::Member }).collect();
    LanguageGraph { nodes: c.langs().to_vec(), roles, adjacency }
}

/// Longest shortest path, by breadth-first search from every node.
pub fn graph_diameter(g: &LanguageGraph) -> Result<usize> {
    let mut diameter = 0;
    for s in 0..g.n() {
        for d in g.bfs(s) {
            diameter = diameter.max(d.ok_or(Error::Disconnected)?);
        }
    }
    Ok(diameter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::langs;

    fn clustering(assignment: Vec<usize>, medoids: Vec<usize>) -> Clustering<f64> {
        let codes = ["aaa", "bbb", "ccc", "ddd", "eee", "fff", "ggg", "hhh"];
        let n = assignment.len();
        Clustering::from_parts(langs(&codes[..n]).unwrap(), medoids, assignment, 0.0).unwrap()
    }

    #[test]
    fn single_star() {
        let g = build_relation_graph(&clustering(vec![0, 0, 0], vec![1]));
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(graph_diameter(&g).unwrap(), 2);
    }

    #[test]
    fn two_clusters_of_four() {
        let g = build_relation_graph(&clustering(vec![0, 0, 0, 0, 1, 1, 1, 1], vec![0, 4]));
        assert_eq!(g.edges().len(), 7);
        assert_eq!(graph_diameter(&g).unwrap(), 3);
        assert!(g.has_edge(0, 4));
        assert!(g.to_dot().contains("aaa -- eee [color=red]"));
    }

    #[test]
    fn three_clusters_have_medoid_triangle() {
        let g = build_relation_graph(&clustering(vec![0, 0, 1, 1, 2, 2], vec![0, 2, 4]));
        let medoid_edges = g
            .edges()
            .into_iter()
            .filter(|&(i, j)| g.roles[i] == NodeRole::Medoid && g.roles[j] == NodeRole::Medoid)
            .count();
        assert_eq!(medoid_edges, 3);
    }

    #[test]
    fn singleton_clusters() {
        let g = build_relation_graph(&clustering(vec![0, 1], vec![0, 1]));
        assert_eq!(graph_diameter(&g).unwrap(), 1);
    }

    #[test]
    fn disconnected_graph_errors() {
        let mut g = build_relation_graph(&clustering(vec![0, 1], vec![0, 1]));
        g.adjacency = vec![vec![false; 2]; 2];
        assert!(matches!(graph_diameter(&g), Err(Error::Disconnected)));
    }
}
