//! Partitions of a graph's nodes and their on-disk form.
//!
//! Clusterings persist as `cluster_id<TAB>pub_id` TSV with a JSON provenance
//! sidecar next to them (`clusters.tsv` -> `clusters.provenance.json`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graph::{CitationGraph, GraphError, NodeId};

/// Where a clustering came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: String,
    pub dataset: String,
    pub params: serde_json::Value,
    #[serde(default)]
    pub iterations: Option<usize>,
    pub converged: bool,
}

impl Provenance {
    pub fn new(engine: &str, dataset: &str, params: serde_json::Value) -> Self {
        Provenance {
            engine: engine.to_string(),
            dataset: dataset.to_string(),
            params,
            iterations: None,
            converged: true,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<(), GraphError> {
        let body = serde_json::to_string_pretty(self).expect("provenance serializes");
        std::fs::write(path, body + "\n").map_err(|e| GraphError::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self, GraphError> {
        let body = std::fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
        serde_json::from_str(&body).map_err(|source| GraphError::Json { line: 1, source })
    }
}

/// Sidecar location for a clustering TSV.
pub fn provenance_path(tsv: &Path) -> PathBuf {
    tsv.with_extension("provenance.json")
}

/// A partition of `0..n` into clusters.
///
/// Stored canonically: members ascending, clusters ordered by their smallest
/// member, so cluster ids are reproducible for a given partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    clusters: Vec<Vec<NodeId>>,
    pub provenance: Provenance,
}

impl Clustering {
    pub fn new(clusters: Vec<Vec<NodeId>>, provenance: Provenance) -> Self {
        let mut clusters: Vec<Vec<NodeId>> = clusters
            .into_iter()
            .filter(|c| !c.is_empty())
            .map(|mut c| {
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        clusters.sort_unstable_by_key(|c| c[0]);
        Clustering { clusters, provenance }
    }

    /// Build from a label per node; labels need not be contiguous.
    pub fn from_labels(labels: &[usize], provenance: Provenance) -> Self {
        let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for (node, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(node);
        }
        Clustering::new(groups.into_values().collect(), provenance)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &[Vec<NodeId>] {
        &self.clusters
    }

    pub fn cluster(&self, id: usize) -> &[NodeId] {
        &self.clusters[id]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    pub fn node_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Cluster id per node; `None` for nodes outside every cluster.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &m in members {
                if m < n {
                    out[m] = Some(c);
                }
            }
        }
        out
    }

    /// Disjoint and covering `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &m in self.clusters.iter().flatten() {
            if m >= n || seen[m] {
                return false;
            }
            seen[m] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// Clusters expressed as publication identifiers.
    pub fn named(&self, graph: &CitationGraph, label: &str) -> NamedClusters {
        NamedClusters {
            label: label.to_string(),
            clusters: self
                .clusters
                .iter()
                .enumerate()
                .map(|(id, members)| NamedCluster {
                    id,
                    members: members.iter().map(|&m| graph.pub_id(m).to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn write_tsv(&self, graph: &CitationGraph, path: &Path) -> Result<(), GraphError> {
        let file = File::create(path).map_err(|e| GraphError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            for (id, members) in self.clusters.iter().enumerate() {
                for &m in members {
                    writeln!(w, "{id}\t{}", graph.pub_id(m))?;
                }
            }
            w.flush()
        })();
        res.map_err(|e| GraphError::io(path, e))
    }

    /// Write the TSV and its provenance sidecar.
    pub fn save(&self, graph: &CitationGraph, path: &Path) -> Result<(), GraphError> {
        self.write_tsv(graph, path)?;
        self.provenance.write_json(&provenance_path(path))
    }

    /// Read a clustering TSV against a graph. Every pub_id must be a node.
    /// The provenance sidecar is read when present.
    pub fn load(path: &Path, graph: &CitationGraph) -> Result<Clustering, GraphError> {
        let named = NamedClusters::read_tsv(path, "")?;
        let mut clusters = Vec::with_capacity(named.clusters.len());
        for c in named.clusters {
            let members = c
                .members
                .iter()
                .map(|id| graph.node(id).ok_or_else(|| GraphError::UnknownNode(id.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            clusters.push(members);
        }
        let side = provenance_path(path);
        let provenance = if side.exists() {
            Provenance::read_json(&side)?
        } else {
            Provenance::new("unknown", "", serde_json::Value::Null)
        };
        Ok(Clustering::new(clusters, provenance))
    }
}

/// One cluster keyed by publication identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedCluster {
    pub id: usize,
    pub members: Vec<String>,
}

/// A clustering over publication identifiers, independent of any node
/// universe. Used to compare clusterings of different datasets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedClusters {
    pub label: String,
    pub clusters: Vec<NamedCluster>,
}

impl NamedClusters {
    pub fn read_tsv(path: &Path, label: &str) -> Result<NamedClusters, GraphError> {
        let file = File::open(path).map_err(|e| GraphError::io(path, e))?;
        let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GraphError::io(path, e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(cid), Some(pid), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(GraphError::Parse {
                    line: i + 1,
                    message: "expected cluster_id<TAB>pub_id".into(),
                });
            };
            let cid: usize = cid.trim().parse().map_err(|_| GraphError::Parse {
                line: i + 1,
                message: format!("cluster id {cid:?} is not a non-negative integer"),
            })?;
            groups.entry(cid).or_default().push(pid.trim().to_string());
        }
        Ok(NamedClusters {
            label: label.to_string(),
            clusters: groups
                .into_iter()
                .map(|(id, members)| NamedCluster { id, members })
                .collect(),
        })
    }
}
