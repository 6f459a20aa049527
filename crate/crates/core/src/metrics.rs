//! Topological cluster metrics: conductance, internal edges, weighted
//! citation counts.
//!
//! Conductance is measured on the symmetrised graph:
//! `cut(S) / min(vol(S), vol(V \ S))` with `vol` the sum of undirected
//! degrees. A cluster with no cut edges has conductance 0.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Clustering;
use crate::graph::{CitationGraph, GraphError, NodeId, UndirectedGraph};
use crate::scalar::Quotient;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("conductance needs a nonempty proper subset of the nodes")]
    Domain,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Cut size and both side volumes of a node set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CutVolume {
    pub cut: u64,
    pub vol_inside: u64,
    pub vol_outside: u64,
}

impl CutVolume {
    /// Conductance with the zero-cut rule; exact for rational `T`.
    pub fn conductance<T: Quotient>(&self) -> T {
        if self.cut == 0 {
            return T::zero();
        }
        let denom = self.vol_inside.min(self.vol_outside);
        T::from_count(self.cut) / T::from_count(denom)
    }
}

fn membership(n: usize, members: &[NodeId]) -> Result<(Vec<bool>, Vec<NodeId>), MetricsError> {
    let mut inside = vec![false; n];
    let mut distinct = Vec::with_capacity(members.len());
    for &m in members {
        if m >= n {
            return Err(MetricsError::UnknownNode(m));
        }
        if !inside[m] {
            inside[m] = true;
            distinct.push(m);
        }
    }
    Ok((inside, distinct))
}

pub fn cut_volume(sym: &UndirectedGraph, members: &[NodeId]) -> Result<CutVolume, MetricsError> {
    let (inside, distinct) = membership(sym.node_count(), members)?;
    Ok(cut_volume_with(sym, &distinct, |v| inside[v]))
}

/// `members` must be distinct.
fn cut_volume_with(sym: &UndirectedGraph, members: &[NodeId], inside: impl Fn(NodeId) -> bool) -> CutVolume {
    let mut cut = 0u64;
    let mut vol_inside = 0u64;
    for &u in members {
        vol_inside += sym.degree(u) as u64;
        cut += sym.neighbors(u).iter().filter(|&&v| !inside(v)).count() as u64;
    }
    CutVolume {
        cut,
        vol_inside,
        vol_outside: sym.total_volume() - vol_inside,
    }
}

/// Conductance of `members` in `graph`.
pub fn conductance<T: Quotient>(graph: &CitationGraph, members: &[NodeId]) -> Result<T, MetricsError> {
    conductance_sym(&graph.symmetrized(), members)
}

/// Conductance against a precomputed symmetrised graph.
pub fn conductance_sym<T: Quotient>(sym: &UndirectedGraph, members: &[NodeId]) -> Result<T, MetricsError> {
    let (inside, distinct) = membership(sym.node_count(), members)?;
    if distinct.is_empty() || distinct.len() == sym.node_count() {
        return Err(MetricsError::Domain);
    }
    Ok(cut_volume_with(sym, &distinct, |v| inside[v]).conductance())
}

/// Directed citations with both endpoints in `members`.
pub fn internal_edges(graph: &CitationGraph, members: &[NodeId]) -> Result<usize, MetricsError> {
    let (inside, _) = membership(graph.node_count(), members)?;
    Ok(inside
        .iter()
        .enumerate()
        .filter(|(_, &i)| i)
        .map(|(u, _)| graph.out_neighbors(u).iter().filter(|&&v| inside[v]).count())
        .sum())
}

/// In-degree of `node` plus the in-degrees of all its distinct neighbours
/// (citing or cited).
pub fn weighted_citation_count(graph: &CitationGraph, node: NodeId) -> u64 {
    let own = graph.in_degree(node) as u64;
    own + graph
        .undirected_neighbors(node)
        .into_iter()
        .map(|u| graph.in_degree(u) as u64)
        .sum::<u64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub cluster_id: usize,
    pub size: usize,
    pub internal_edges: usize,
    pub cut_edges: u64,
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub num_clusters: usize,
    pub num_articles: usize,
    pub mean_size: f64,
    pub median_size: f64,
    pub mean_conductance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<ClusterMetrics>,
    pub summary: MetricsSummary,
}

pub const METRICS_HEADER: &str = "cluster_id,size,internal_edges,cut_edges,conductance";

impl MetricsTable {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.cluster_id, r.size, r.internal_edges, r.cut_edges, r.conductance
            )?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| GraphError::io(path, e))?);
        self.write_csv(&mut f).map_err(|e| GraphError::io(path, e))
    }

    /// Parse a CSV written by [`MetricsTable::write_csv`].
    pub fn read_rows(path: &Path) -> Result<Vec<ClusterMetrics>, GraphError> {
        let body = std::fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in body.lines().enumerate().skip(1) {
            let bad = || GraphError::Parse {
                line: i + 1,
                message: format!("malformed metrics row {line:?}"),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            rows.push(ClusterMetrics {
                cluster_id: f[0].parse().map_err(|_| bad())?,
                size: f[1].parse().map_err(|_| bad())?,
                internal_edges: f[2].parse().map_err(|_| bad())?,
                cut_edges: f[3].parse().map_err(|_| bad())?,
                conductance: f[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(rows)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// One row per cluster plus a dataset summary.
pub fn metrics_table(graph: &CitationGraph, clustering: &Clustering) -> MetricsTable {
    let sym = graph.symmetrized();
    let labels = clustering.labels(graph.node_count());
    let rows: Vec<ClusterMetrics> = clustering
        .clusters()
        .par_iter()
        .enumerate()
        .map(|(id, members)| {
            let inside = |v: NodeId| labels[v] == Some(id);
            let cv = cut_volume_with(&sym, members, inside);
            let internal = members
                .iter()
                .map(|&u| graph.out_neighbors(u).iter().filter(|&&v| inside(v)).count())
                .sum();
            ClusterMetrics {
                cluster_id: id,
                size: members.len(),
                internal_edges: internal,
                cut_edges: cv.cut,
                conductance: cv.conductance(),
            }
        })
        .collect();
    let mut sizes: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
    let conds: Vec<f64> = rows.iter().map(|r| r.conductance).collect();
    let summary = MetricsSummary {
        num_clusters: rows.len(),
        num_articles: rows.iter().map(|r| r.size).sum(),
        mean_size: mean(&sizes),
        median_size: median(&mut sizes),
        mean_conductance: mean(&conds),
    };
    MetricsTable { rows, summary }
}
