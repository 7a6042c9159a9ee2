//! Typological language distances, their correlation with cross-lingual
//! transfer scores, fitted metric blends, k-medoids source selection and a
//! small adversarial domain-adaptation simulator.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the scalar to `f64`.

pub mod correlation;
pub mod distance;
pub mod error;
pub mod feature_store;
pub mod metric_fit;
pub mod report;
pub mod scalar;
pub mod selection;
pub mod sim;

pub use correlation::{
    correlation_sweep, distance_transfer_correlation, pearson, pooled_distance_transfer_correlation, CorrelationReport,
    ModelScale, Setting, TransferScoreMatrix,
};
pub use distance::{
    build_all, build_distance_matrix, combined_distance, contingency, euclidean_distance, BinaryMeasure,
    ContingencyCounts, DistanceMatrix, MetricId,
};
pub use error::{Error, Result};
pub use feature_store::{
    align_pair, load_feature_table, FeatureClass, FeatureTable, FeatureVector, LanguageId, LanguageRegistry,
};
pub use metric_fit::{fit_weights, objective, preset_dcomb, FitOptions, FitResult, MetricWeights};
pub use scalar::Scalar;
pub use selection::{
    brute_force_medoids, build_relation_graph, delta_report, enumerate_configurations, graph_diameter, pam, select_k,
    Clustering, DeltaTable, LanguageGraph, TransferConfiguration,
};

pub type FeatureVectorF64 = FeatureVector<f64>;
pub type FeatureTableF64 = FeatureTable<f64>;
pub type DistanceMatrixF64 = DistanceMatrix<f64>;
pub type TransferScoreMatrixF64 = TransferScoreMatrix<f64>;
pub type CorrelationReportF64 = CorrelationReport<f64>;
pub type MetricWeightsF64 = MetricWeights<f64>;
pub type FitResultF64 = FitResult<f64>;
pub type ClusteringF64 = Clustering<f64>;
pub type DeltaTableF64 = DeltaTable<f64>;

pub type DistanceMatrixF32 = DistanceMatrix<f32>;
pub type TransferScoreMatrixF32 = TransferScoreMatrix<f32>;
pub type TrainResultF64 = sim::TrainResult<f64>;
pub type DomainDatasetF64 = sim::DomainDataset<f64>;
