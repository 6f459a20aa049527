//! Citation graph data model, ingestion, and dataset assembly.
//!
//! Edge files are tab-separated `citing<TAB>cited` lines, `#` starts a comment.
//! Publication identifiers are opaque strings; every engine works on the dense
//! [`NodeId`] assigned at load time in first-appearance order.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid metadata record: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate pub_id {0:?}")]
    DuplicateId(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("cannot union an empty list of datasets")]
    EmptyUnion,
}

impl GraphError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GraphError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Label of the slice a publication belongs to. Years are numeric and sort
/// before free-form names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SliceLabel {
    Year(i64),
    Name(String),
}

impl SliceLabel {
    pub fn parse(s: &str) -> Self {
        s.trim()
            .parse::<i64>()
            .map(SliceLabel::Year)
            .unwrap_or_else(|_| SliceLabel::Name(s.to_string()))
    }
}

impl Ord for SliceLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (SliceLabel::Year(a), SliceLabel::Year(b)) => a.cmp(b),
            (SliceLabel::Year(_), SliceLabel::Name(_)) => Ordering::Less,
            (SliceLabel::Name(_), SliceLabel::Year(_)) => Ordering::Greater,
            (SliceLabel::Name(a), SliceLabel::Name(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for SliceLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SliceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliceLabel::Year(y) => write!(f, "{y}"),
            SliceLabel::Name(s) => f.write_str(s),
        }
    }
}

/// One publication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PubRecord {
    pub pub_id: String,
    pub slice: SliceLabel,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub author_ids: Vec<String>,
}

impl PubRecord {
    /// A record carrying nothing but identity, used for edge endpoints that
    /// have no metadata line.
    pub fn stub(pub_id: impl Into<String>, slice: SliceLabel) -> Self {
        PubRecord {
            pub_id: pub_id.into(),
            slice,
            title: None,
            abstract_text: None,
            author_ids: Vec::new(),
        }
    }

    pub fn has_text(&self) -> bool {
        self.title.as_deref().is_some_and(|t| !t.trim().is_empty())
            || self.abstract_text.as_deref().is_some_and(|t| !t.trim().is_empty())
    }

    fn same_content(&self, other: &PubRecord) -> bool {
        self.title == other.title && self.abstract_text == other.abstract_text && self.author_ids == other.author_ids
    }
}

/// Directed citation graph (citing -> cited) with both adjacency directions.
///
/// Adjacency lists are sorted and free of duplicates and self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CitationGraph {
    ids: Vec<String>,
    index: HashMap<String, NodeId>,
    out_edges: Vec<Vec<NodeId>>,
    in_edges: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl CitationGraph {
    /// Graph over nodes `"0".."n-1"` from index pairs; convenient for tests
    /// and generators. Self-loops and duplicates are dropped.
    pub fn from_index_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Self {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.add_node(&i.to_string());
        }
        for &(u, v) in edges {
            assert!(u < n && v < n, "edge ({u},{v}) out of range for {n} nodes");
            b.add_index_edge(u, v);
        }
        b.build()
    }

    /// Graph from pairs of string identifiers, in first-appearance order.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, S)]) -> Self {
        let mut b = GraphBuilder::new();
        for (u, v) in pairs {
            b.add_edge(u.as_ref(), v.as_ref());
        }
        b.build()
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn pub_id(&self, node: NodeId) -> &str {
        &self.ids[node]
    }

    pub fn pub_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn node(&self, pub_id: &str) -> Option<NodeId> {
        self.index.get(pub_id).copied()
    }

    pub fn out_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.out_edges[node]
    }

    pub fn in_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.in_edges[node]
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.out_edges[node].len()
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_edges[node].len()
    }

    pub fn has_edge(&self, citing: NodeId, cited: NodeId) -> bool {
        self.out_edges[citing].binary_search(&cited).is_ok()
    }

    /// All directed edges in (citing, cited) lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    /// Distinct neighbors ignoring direction, sorted.
    pub fn undirected_neighbors(&self, node: NodeId) -> Vec<NodeId> {
        merge_sorted(&self.out_edges[node], &self.in_edges[node])
    }

    /// Undirected simple view: an edge wherever a citation exists in either
    /// direction.
    pub fn symmetrized(&self) -> UndirectedGraph {
        UndirectedGraph {
            adj: (0..self.node_count()).map(|u| self.undirected_neighbors(u)).collect(),
        }
    }

    /// Restriction to `members`, preserving edge direction. Nodes of the
    /// subgraph follow the order of `members` (duplicates ignored).
    pub fn induced_subgraph(&self, members: &[NodeId]) -> Result<CitationGraph, GraphError> {
        let mut local = HashMap::with_capacity(members.len());
        let mut b = GraphBuilder::new();
        for &m in members {
            if m >= self.node_count() {
                return Err(GraphError::UnknownNode(m.to_string()));
            }
            local.entry(m).or_insert_with(|| b.add_node(&self.ids[m]));
        }
        let mut kept: Vec<NodeId> = local.keys().copied().collect();
        kept.sort_unstable();
        for u in kept {
            for &v in &self.out_edges[u] {
                if let Some(&lv) = local.get(&v) {
                    b.add_index_edge(local[&u], lv);
                }
            }
        }
        Ok(b.build())
    }

    /// Induced subgraph addressed by publication identifiers.
    pub fn induced_subgraph_by_ids<S: AsRef<str>>(&self, members: &[S]) -> Result<CitationGraph, GraphError> {
        let nodes = members
            .iter()
            .map(|id| {
                self.node(id.as_ref())
                    .ok_or_else(|| GraphError::UnknownNode(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.induced_subgraph(&nodes)
    }

    /// Rebuild the graph over the same nodes with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> CitationGraph {
        let mut b = GraphBuilder::new();
        for id in &self.ids {
            b.add_node(id);
        }
        for (u, v) in edges {
            b.add_index_edge(u, v);
        }
        b.build()
    }

    fn to_builder(&self) -> GraphBuilder {
        let mut b = GraphBuilder::new();
        for id in &self.ids {
            b.add_node(id);
        }
        for (u, v) in self.edges() {
            b.add_index_edge(u, v);
        }
        b
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), GraphError> {
        let file = File::create(path).map_err(|e| GraphError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_edges(&mut w).map_err(|e| GraphError::io(path, e))
    }

    pub fn write_edges<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (u, v) in self.edges() {
            writeln!(w, "{}\t{}", self.ids[u], self.ids[v])?;
        }
        w.flush()
    }
}

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<Vec<NodeId>>,
}

impl UndirectedGraph {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adj[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adj[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn total_volume(&self) -> u64 {
        self.adj.iter().map(|a| a.len() as u64).sum()
    }
}

fn merge_sorted(a: &[NodeId], b: &[NodeId]) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Outcome of adding one edge to a [`GraphBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeInsert {
    Added,
    Duplicate,
    SelfLoop,
}

/// Incremental graph construction with deduplication.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    ids: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    seen: HashSet<(NodeId, NodeId)>,
    pub self_loops: usize,
    pub duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, pub_id: &str) -> NodeId {
        if let Some(&n) = self.index.get(pub_id) {
            return n;
        }
        let n = self.ids.len();
        self.ids.push(pub_id.to_string());
        self.index.insert(pub_id.to_string(), n);
        n
    }

    pub fn add_edge(&mut self, citing: &str, cited: &str) -> EdgeInsert {
        let u = self.add_node(citing);
        let v = self.add_node(cited);
        self.add_index_edge(u, v)
    }

    pub fn add_index_edge(&mut self, u: NodeId, v: NodeId) -> EdgeInsert {
        if u == v {
            self.self_loops += 1;
            EdgeInsert::SelfLoop
        } else if self.seen.insert((u, v)) {
            self.edges.push((u, v));
            EdgeInsert::Added
        } else {
            self.duplicates += 1;
            EdgeInsert::Duplicate
        }
    }

    pub fn build(self) -> CitationGraph {
        let n = self.ids.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for &(u, v) in &self.edges {
            out_edges[u].push(v);
            in_edges[v].push(u);
        }
        for list in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            list.sort_unstable();
        }
        CitationGraph {
            ids: self.ids,
            index: self.index,
            out_edges,
            in_edges,
            edge_count: self.edges.len(),
        }
    }
}

/// Counters gathered while reading an edge file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Read a `citing<TAB>cited` edge list.
pub fn load_edges(path: &Path) -> Result<(CitationGraph, IngestStats), GraphError> {
    let file = File::open(path).map_err(|e| GraphError::io(path, e))?;
    parse_edges(BufReader::new(file)).map_err(|e| match e {
        GraphError::Io { source, .. } => GraphError::io(path, source),
        other => other,
    })
}

pub fn parse_edges<R: BufRead>(reader: R) -> Result<(CitationGraph, IngestStats), GraphError> {
    let mut b = GraphBuilder::new();
    let mut stats = IngestStats::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GraphError::io(Path::new("<edges>"), e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        stats.lines += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(GraphError::Parse {
                line: i + 1,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        b.add_edge(fields[0].trim(), fields[1].trim());
    }
    stats.self_loops = b.self_loops;
    stats.duplicates = b.duplicates;
    if stats.self_loops > 0 {
        log::warn!("dropped {} self-loop(s)", stats.self_loops);
    }
    if stats.duplicates > 0 {
        log::info!("dropped {} duplicate edge(s)", stats.duplicates);
    }
    Ok((b.build(), stats))
}

/// Read JSON-lines publication metadata.
pub fn load_metadata(path: &Path) -> Result<Vec<PubRecord>, GraphError> {
    let file = File::open(path).map_err(|e| GraphError::io(path, e))?;
    parse_metadata(BufReader::new(file)).map_err(|e| match e {
        GraphError::Io { source, .. } => GraphError::io(path, source),
        other => other,
    })
}

pub fn parse_metadata<R: BufRead>(reader: R) -> Result<Vec<PubRecord>, GraphError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GraphError::io(Path::new("<metadata>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: PubRecord =
            serde_json::from_str(&line).map_err(|source| GraphError::Json { line: i + 1, source })?;
        if !seen.insert(rec.pub_id.clone()) {
            return Err(GraphError::DuplicateId(rec.pub_id));
        }
        let mut authors = HashSet::new();
        rec.author_ids.retain(|a| authors.insert(a.clone()));
        records.push(rec);
    }
    Ok(records)
}

pub fn write_metadata(path: &Path, records: &[PubRecord]) -> Result<(), GraphError> {
    let file = File::create(path).map_err(|e| GraphError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("PubRecord serializes");
        writeln!(w, "{line}").map_err(|e| GraphError::io(path, e))?;
    }
    w.flush().map_err(|e| GraphError::io(path, e))
}

/// Records plus graph under one label. `records[i]` describes node `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub label: String,
    pub graph: CitationGraph,
    records: Vec<PubRecord>,
    has_metadata: Vec<bool>,
}

impl Dataset {
    /// Pair a graph with metadata. Records without edges become isolated
    /// nodes; edge endpoints without metadata get stub records in the slice
    /// named by `label`.
    pub fn assemble(
        label: impl Into<String>,
        graph: CitationGraph,
        records: Vec<PubRecord>,
    ) -> Result<Dataset, GraphError> {
        let label = label.into();
        let mut by_id: HashMap<String, PubRecord> = HashMap::with_capacity(records.len());
        let mut order = Vec::with_capacity(records.len());
        for r in records {
            if by_id.contains_key(&r.pub_id) {
                return Err(GraphError::DuplicateId(r.pub_id));
            }
            order.push(r.pub_id.clone());
            by_id.insert(r.pub_id.clone(), r);
        }
        let graph = if order.iter().all(|id| graph.node(id).is_some()) {
            graph
        } else {
            let mut b = graph.to_builder();
            for id in &order {
                b.add_node(id);
            }
            b.build()
        };
        let default_slice = SliceLabel::parse(&label);
        let mut out = Vec::with_capacity(graph.node_count());
        let mut has_metadata = Vec::with_capacity(graph.node_count());
        for id in graph.pub_ids() {
            match by_id.remove(id) {
                Some(r) => {
                    out.push(r);
                    has_metadata.push(true);
                }
                None => {
                    out.push(PubRecord::stub(id.clone(), default_slice.clone()));
                    has_metadata.push(false);
                }
            }
        }
        Ok(Dataset {
            label,
            graph,
            records: out,
            has_metadata,
        })
    }

    /// Read an edge file and an optional metadata file.
    pub fn load(label: impl Into<String>, edges: &Path, metadata: Option<&Path>) -> Result<Dataset, GraphError> {
        let (graph, _) = load_edges(edges)?;
        let records = match metadata {
            Some(p) => load_metadata(p)?,
            None => Vec::new(),
        };
        Dataset::assemble(label, graph, records)
    }

    pub fn records(&self) -> &[PubRecord] {
        &self.records
    }

    pub fn record(&self, node: NodeId) -> &PubRecord {
        &self.records[node]
    }

    pub fn has_metadata(&self, node: NodeId) -> bool {
        self.has_metadata[node]
    }

    /// Records that came from a metadata file (not stubs).
    pub fn metadata_records(&self) -> impl Iterator<Item = &PubRecord> {
        self.records
            .iter()
            .zip(&self.has_metadata)
            .filter(|(_, &m)| m)
            .map(|(r, _)| r)
    }
}

/// What happened while merging datasets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionStats {
    pub parts: usize,
    pub shared_nodes: usize,
    pub shared_edges: usize,
    pub metadata_conflicts: usize,
}

/// Set-union of datasets into one labelled `combined`.
///
/// A publication present in several parts keeps its metadata record from the
/// earliest slice; stub records lose to real ones.
pub fn union_datasets(parts: &[Dataset]) -> Result<(Dataset, UnionStats), GraphError> {
    if parts.is_empty() {
        return Err(GraphError::EmptyUnion);
    }
    let mut b = GraphBuilder::new();
    let mut chosen: Vec<Option<(PubRecord, bool)>> = Vec::new();
    let mut conflicted: HashSet<NodeId> = HashSet::new();
    let mut stats = UnionStats {
        parts: parts.len(),
        ..Default::default()
    };
    for part in parts {
        for (node, id) in part.graph.pub_ids().iter().enumerate() {
            let before = b.ids.len();
            let n = b.add_node(id);
            if n == before {
                chosen.push(None);
            } else {
                stats.shared_nodes += 1;
            }
            let candidate = (part.records[node].clone(), part.has_metadata[node]);
            let slot = &mut chosen[n];
            match slot {
                None => *slot = Some(candidate),
                Some((cur, cur_meta)) => {
                    if *cur_meta && candidate.1 && !cur.same_content(&candidate.0) {
                        conflicted.insert(n);
                    }
                    let better = match (candidate.1, *cur_meta) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => candidate.0.slice < cur.slice,
                    };
                    if better {
                        *slot = Some(candidate);
                    }
                }
            }
        }
        for (u, v) in part.graph.edges() {
            let bu = b.index[part.graph.pub_id(u)];
            let bv = b.index[part.graph.pub_id(v)];
            if b.add_index_edge(bu, bv) == EdgeInsert::Duplicate {
                stats.shared_edges += 1;
            }
        }
    }
    b.duplicates = 0;
    stats.metadata_conflicts = conflicted.len();
    if stats.metadata_conflicts > 0 {
        log::warn!(
            "{} publication(s) carry conflicting metadata across slices; kept earliest",
            stats.metadata_conflicts
        );
    }
    let graph = b.build();
    let (records, has_metadata): (Vec<_>, Vec<_>) =
        chosen.into_iter().map(|c| c.expect("every node has a record")).unzip();
    Ok((
        Dataset {
            label: "combined".to_string(),
            graph,
            records,
            has_metadata,
        },
        stats,
    ))
}
