//! Degree-preserving null model: double-edge swaps on the citation graph.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{CitationGraph, GraphError, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleReport {
    pub requested_swaps: u64,
    pub performed_swaps: u64,
    pub rejected_swaps: u64,
    pub seed: u64,
}

impl ShuffleReport {
    pub fn write_json(&self, path: &Path) -> Result<(), GraphError> {
        let body = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, body + "\n").map_err(|e| GraphError::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self, GraphError> {
        let body = std::fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
        serde_json::from_str(&body).map_err(|source| GraphError::Json { line: 1, source })
    }
}

/// `swaps` attempts of: pick two distinct edges a->b and c->d, rewire to
/// a->d and c->b unless that makes a loop or a duplicate edge.
///
/// A graph with fewer than two edges cannot be rewired; every attempt is
/// counted as rejected.
pub fn shuffle_citations(graph: &CitationGraph, swaps: u64, seed: u64) -> (CitationGraph, ShuffleReport) {
    let mut edges: Vec<(NodeId, NodeId)> = graph.edges().collect();
    let mut present: HashSet<(NodeId, NodeId)> = edges.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut performed = 0;
    let m = edges.len();
    if m >= 2 {
        for _ in 0..swaps {
            let i = rng.gen_range(0..m);
            let mut j = rng.gen_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = edges[i];
            let (c, d) = edges[j];
            if a == d || c == b || present.contains(&(a, d)) || present.contains(&(c, b)) {
                continue;
            }
            present.remove(&(a, b));
            present.remove(&(c, d));
            present.insert((a, d));
            present.insert((c, b));
            edges[i] = (a, d);
            edges[j] = (c, b);
            performed += 1;
        }
    }
    let report = ShuffleReport {
        requested_swaps: swaps,
        performed_swaps: performed,
        rejected_swaps: swaps - performed,
        seed,
    };
    (graph.with_edges(edges), report)
}
