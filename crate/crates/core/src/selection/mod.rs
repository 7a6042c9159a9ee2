//! Source-language selection: k-medoids clustering, cluster-count choice,
//! the medoid relation graph, transfer configurations and delta reports.

mod configs;
mod delta;
mod graph;
mod pam;

pub use configs::{enumerate_configurations, ConfigKind, ConfigSampling, TransferConfiguration};
pub use delta::{delta_report, format_cell, Column, DeltaTable, RowKey, ScoreRecord, AGGREGATE_TOLERANCE};
pub use graph::{build_relation_graph, graph_diameter, LanguageGraph, NodeRole};
pub use pam::{brute_force_medoids, pam, pam_build_swap, select_k, Clustering, BRUTE_FORCE_LIMIT, EXACT_LIMIT};
