//! Author community profiles for selected clusters, and detection of
//! degenerate clusters held together by a single hub or a lone article.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::{CitationGraph, Dataset, GraphError, NodeId};

/// Value at the nearest rank `ceil(p/100 * n)` of an ascending slice.
pub fn nearest_rank(sorted: &[usize], p: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityProfile {
    pub cluster_id: usize,
    pub size: usize,
    /// Papers per author within the cluster.
    pub authors: BTreeMap<String, usize>,
    pub authorless_papers: usize,
    /// Set when no member paper lists an author.
    pub no_authors: bool,
    pub one_paper_fraction: f64,
    pub p95_count: usize,
    pub p99_count: usize,
    pub max_count: usize,
    /// Authors with at least `p95_count` papers.
    pub top_authors: Vec<String>,
    pub top_author_citation_density: f64,
    pub percentile_rule: String,
}

/// Author statistics for one cluster of `dataset`.
pub fn build_profile(cluster_id: usize, members: &[NodeId], dataset: &Dataset) -> CommunityProfile {
    let graph = &dataset.graph;
    let mut authors: BTreeMap<String, usize> = BTreeMap::new();
    let mut papers_of: HashMap<&str, Vec<NodeId>> = HashMap::new();
    let mut authorless = 0;
    for &m in members {
        let rec = dataset.record(m);
        if rec.author_ids.is_empty() {
            authorless += 1;
        }
        for a in &rec.author_ids {
            *authors.entry(a.clone()).or_default() += 1;
            papers_of.entry(a.as_str()).or_default().push(m);
        }
    }
    let mut counts: Vec<usize> = authors.values().copied().collect();
    counts.sort_unstable();
    let one = counts.iter().filter(|&&c| c == 1).count();
    let one_paper_fraction = if counts.is_empty() {
        0.0
    } else {
        one as f64 / counts.len() as f64
    };
    let p95 = nearest_rank(&counts, 95.0);
    let p99 = nearest_rank(&counts, 99.0);
    let top_authors: Vec<String> = if counts.is_empty() {
        Vec::new()
    } else {
        authors
            .iter()
            .filter(|(_, &c)| c >= p95)
            .map(|(a, _)| a.clone())
            .collect()
    };
    let density = citation_density(graph, members, &top_authors, &papers_of);
    CommunityProfile {
        cluster_id,
        size: members.len(),
        no_authors: authors.is_empty(),
        authors,
        authorless_papers: authorless,
        one_paper_fraction,
        p95_count: p95,
        p99_count: p99,
        max_count: counts.last().copied().unwrap_or(0),
        top_authors,
        top_author_citation_density: density,
        percentile_rule: "nearest-rank".to_string(),
    }
}

/// Fraction of ordered pairs (A, B), A != B, where some paper of A in the
/// cluster cites some paper of B in the cluster.
fn citation_density(
    graph: &CitationGraph,
    members: &[NodeId],
    top: &[String],
    papers_of: &HashMap<&str, Vec<NodeId>>,
) -> f64 {
    if top.len() < 2 {
        return 0.0;
    }
    let inside: BTreeSet<NodeId> = members.iter().copied().collect();
    let mut hits = 0usize;
    for a in top {
        // papers cited from A's papers, restricted to the cluster
        let cited: BTreeSet<NodeId> = papers_of[a.as_str()]
            .iter()
            .flat_map(|&p| graph.out_neighbors(p).iter().copied())
            .filter(|v| inside.contains(v))
            .collect();
        for b in top {
            if a != b && papers_of[b.as_str()].iter().any(|p| cited.contains(p)) {
                hits += 1;
            }
        }
    }
    hits as f64 / (top.len() * (top.len() - 1)) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorSummary {
    pub authors: usize,
    pub fraction_one: f64,
    pub fraction_le5: f64,
    pub mean: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorDistribution {
    /// Distinct clusters per author.
    pub clusters_per_author: BTreeMap<String, usize>,
    pub summary: AuthorSummary,
}

/// How many of the given (disjoint) clusters each author appears in.
pub fn author_cluster_distribution(clusters: &[Vec<NodeId>], dataset: &Dataset) -> AuthorDistribution {
    let mut seen: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            for a in &dataset.record(m).author_ids {
                seen.entry(a.clone()).or_default().insert(c);
            }
        }
    }
    let per: BTreeMap<String, usize> = seen.into_iter().map(|(a, s)| (a, s.len())).collect();
    let n = per.len();
    let frac = |pred: &dyn Fn(usize) -> bool| {
        if n == 0 {
            0.0
        } else {
            per.values().filter(|&&c| pred(c)).count() as f64 / n as f64
        }
    };
    let summary = AuthorSummary {
        authors: n,
        fraction_one: frac(&|c| c == 1),
        fraction_le5: frac(&|c| c <= 5),
        mean: if n == 0 {
            0.0
        } else {
            per.values().sum::<usize>() as f64 / n as f64
        },
        max: per.values().copied().max().unwrap_or(0),
    };
    AuthorDistribution {
        clusters_per_author: per,
        summary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeCaseThresholds {
    /// Minimum edges to the rest of the graph for a lone article to count.
    pub external_threshold: usize,
    /// Share of the other members a hub must cite or be cited by.
    pub hub_fraction: f64,
}

impl Default for EdgeCaseThresholds {
    fn default() -> Self {
        EdgeCaseThresholds {
            external_threshold: 50,
            hub_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label")]
pub enum EdgeCaseLabel {
    SingletonHighExternal {
        external_edges: usize,
    },
    HubCiting {
        hub: String,
        cites: usize,
        others: usize,
    },
    HubCited {
        hub: String,
        cited_by: usize,
        others: usize,
    },
    Normal,
}

impl EdgeCaseLabel {
    pub fn is_normal(&self) -> bool {
        matches!(self, EdgeCaseLabel::Normal)
    }

    pub fn name(&self) -> &'static str {
        match self {
            EdgeCaseLabel::SingletonHighExternal { .. } => "SingletonHighExternal",
            EdgeCaseLabel::HubCiting { .. } => "HubCiting",
            EdgeCaseLabel::HubCited { .. } => "HubCited",
            EdgeCaseLabel::Normal => "Normal",
        }
    }
}

/// Directed edges with exactly one endpoint in `members`.
pub fn external_edges(graph: &CitationGraph, members: &[NodeId]) -> usize {
    let inside: BTreeSet<NodeId> = members.iter().copied().collect();
    inside
        .iter()
        .map(|&u| {
            graph.out_neighbors(u).iter().filter(|v| !inside.contains(v)).count()
                + graph.in_neighbors(u).iter().filter(|v| !inside.contains(v)).count()
        })
        .sum()
}

/// Member with the most in-cluster neighbours under `adj`, lowest id on ties.
fn busiest<'g>(inside: &BTreeSet<NodeId>, adj: impl Fn(NodeId) -> &'g [NodeId]) -> (usize, NodeId) {
    let mut best = (0, *inside.first().expect("nonempty cluster"));
    for &u in inside {
        let c = adj(u).iter().filter(|v| inside.contains(v)).count();
        if c > best.0 {
            best = (c, u);
        }
    }
    best
}

/// First matching rule wins: lone article with many external edges, then a
/// member citing most others, then a member cited by most others.
pub fn classify_edge_case(graph: &CitationGraph, members: &[NodeId], t: &EdgeCaseThresholds) -> EdgeCaseLabel {
    let inside: BTreeSet<NodeId> = members.iter().copied().collect();
    if inside.len() == 1 {
        let ext = external_edges(graph, members);
        if ext >= t.external_threshold {
            return EdgeCaseLabel::SingletonHighExternal { external_edges: ext };
        }
        return EdgeCaseLabel::Normal;
    }
    let others = inside.len() - 1;
    let need = t.hub_fraction * others as f64;
    let (cites, hub) = busiest(&inside, |u| graph.out_neighbors(u));
    if cites as f64 >= need {
        return EdgeCaseLabel::HubCiting {
            hub: graph.pub_id(hub).to_string(),
            cites,
            others,
        };
    }
    let (cited_by, hub) = busiest(&inside, |u| graph.in_neighbors(u));
    if cited_by as f64 >= need {
        return EdgeCaseLabel::HubCited {
            hub: graph.pub_id(hub).to_string(),
            cited_by,
            others,
        };
    }
    EdgeCaseLabel::Normal
}

/// A profile together with its edge-case label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    /// Label of the dataset the cluster comes from.
    #[serde(default)]
    pub dataset: String,
    #[serde(flatten)]
    pub profile: CommunityProfile,
    pub edge_case: EdgeCaseLabel,
}

/// Split into accepted (Normal) and rejected communities.
pub fn filter_communities(communities: Vec<Community>) -> (Vec<Community>, Vec<Community>) {
    communities.into_iter().partition(|c| c.edge_case.is_normal())
}

pub fn write_jsonl<W: Write, T: Serialize>(w: &mut W, items: &[T]) -> std::io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut *w, it)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), GraphError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| GraphError::io(path, e))?);
    write_jsonl(&mut f, items).map_err(|e| GraphError::io(path, e))
}

pub fn read_communities(path: &Path) -> Result<Vec<Community>, GraphError> {
    let body = std::fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| GraphError::Json { line: i + 1, source }))
        .collect()
}
