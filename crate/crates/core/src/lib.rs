//! Convergent clustering of citation graphs and extraction of candidate
//! author communities.
//!
//! A citation graph is clustered twice, with Markov Clustering ([`mcl`]) and
//! with multilevel kernel k-means ([`mkkm`]). Clusters are scored by
//! conductance ([`metrics`]) and textual coherence ([`coherence`]), paired
//! across clusterings by Jaccard overlap ([`matching`]), filtered, and turned
//! into author community profiles ([`community`]). [`pipeline`] runs the whole
//! workflow from a configuration file.

pub mod clustering;
pub mod coherence;
pub mod community;
pub mod graph;
pub mod matching;
pub mod mcl;
pub mod metrics;
pub mod mkkm;
pub mod pipeline;
pub mod scalar;
pub mod shuffle;
pub mod synthetic;
pub mod text;

pub use clustering::{Clustering, NamedCluster, NamedClusters, Provenance};
pub use graph::{CitationGraph, Dataset, GraphError, NodeId, PubRecord, SliceLabel};
pub use scalar::{Quotient, Scalar};

/// Flow matrix in double precision, the default for clustering runs.
pub type TransitionMatrix = mcl::ColumnStochasticMatrix<f64>;
/// Single-precision flow matrix for memory-bound runs.
pub type TransitionMatrix32 = mcl::ColumnStochasticMatrix<f32>;
/// Exact conductance value.
pub type ExactRatio = num_rational::Ratio<u64>;
