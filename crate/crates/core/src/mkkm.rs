//! Multilevel kernel k-means under the normalized-cut objective.
//!
//! The graph is coarsened by heavy-edge matching, partitioned at the coarsest
//! level by seeded region growing, then projected back level by level with a
//! greedy boundary refinement at each level.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{Clustering, Provenance};
use crate::graph::{CitationGraph, NodeId};

/// Undirected graph with integer edge weights and per-node weights.
///
/// `inner` holds the weight of fine edges collapsed inside a node; it counts
/// toward the node's volume but never toward a cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    adj: Vec<Vec<(NodeId, u64)>>,
    node_weight: Vec<u64>,
    inner: Vec<u64>,
}

impl WeightedGraph {
    /// Symmetrised simple graph with unit weights.
    pub fn from_citations(graph: &CitationGraph) -> Self {
        let n = graph.node_count();
        let adj = (0..n)
            .map(|u| graph.undirected_neighbors(u).into_iter().map(|v| (v, 1)).collect())
            .collect();
        WeightedGraph {
            adj,
            node_weight: vec![1; n],
            inner: vec![0; n],
        }
    }

    /// From undirected weighted edges; parallel edges are summed, loops dropped.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId, u64)]) -> Self {
        let mut maps: Vec<HashMap<NodeId, u64>> = vec![HashMap::new(); n];
        for &(u, v, w) in edges {
            if u != v {
                *maps[u].entry(v).or_default() += w;
                *maps[v].entry(u).or_default() += w;
            }
        }
        let adj = maps
            .into_iter()
            .map(|m| {
                let mut row: Vec<_> = m.into_iter().collect();
                row.sort_unstable();
                row
            })
            .collect();
        WeightedGraph {
            adj,
            node_weight: vec![1; n],
            inner: vec![0; n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, u: NodeId) -> &[(NodeId, u64)] {
        &self.adj[u]
    }

    pub fn node_weight(&self, u: NodeId) -> u64 {
        self.node_weight[u]
    }

    pub fn total_node_weight(&self) -> u64 {
        self.node_weight.iter().sum()
    }

    /// Weight of edges leaving `u`.
    pub fn external_weight(&self, u: NodeId) -> u64 {
        self.adj[u].iter().map(|&(_, w)| w).sum()
    }

    /// Degree of `u` in the finest graph it stands for.
    pub fn volume(&self, u: NodeId) -> u64 {
        2 * self.inner[u] + self.external_weight(u)
    }

    pub fn edge_weight(&self, u: NodeId, v: NodeId) -> u64 {
        self.adj[u]
            .binary_search_by_key(&v, |&(x, _)| x)
            .map_or(0, |i| self.adj[u][i].1)
    }

    /// Total weight of edges whose endpoints carry different labels.
    pub fn cut_weight(&self, labels: &[usize]) -> u64 {
        let twice: u64 = (0..self.node_count())
            .flat_map(|u| self.adj[u].iter().map(move |&(v, w)| (u, v, w)))
            .filter(|&(u, v, _)| labels[u] != labels[v])
            .map(|(_, _, w)| w)
            .sum();
        twice / 2
    }
}

/// One coarsening step: the coarse graph and where each fine node went.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseLevel {
    pub graph: WeightedGraph,
    pub mapping: Vec<NodeId>,
}

/// Heavy-edge matching with a seeded random visit order.
pub fn coarsen(graph: &WeightedGraph, seed: u64) -> CoarseLevel {
    let mut order: Vec<NodeId> = (0..graph.node_count()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    coarsen_in_order(graph, &order)
}

/// Heavy-edge matching visiting nodes in `order`. Each unmatched node is
/// paired with its unmatched neighbour of largest edge weight, ties going to
/// the lowest index.
pub fn coarsen_in_order(graph: &WeightedGraph, order: &[NodeId]) -> CoarseLevel {
    let n = graph.node_count();
    let mut partner: Vec<Option<NodeId>> = vec![None; n];
    let mut matched = vec![false; n];
    for &u in order {
        if matched[u] {
            continue;
        }
        matched[u] = true;
        let best = graph.adj[u]
            .iter()
            .filter(|&&(v, _)| !matched[v])
            .max_by_key(|&&(v, w)| (w, Reverse(v)));
        if let Some(&(v, _)) = best {
            matched[v] = true;
            partner[u] = Some(v);
            partner[v] = Some(u);
        }
    }

    // coarse ids follow the smallest fine member
    let mut mapping = vec![usize::MAX; n];
    let mut next = 0;
    for u in 0..n {
        if mapping[u] == usize::MAX {
            mapping[u] = next;
            if let Some(v) = partner[u] {
                mapping[v] = next;
            }
            next += 1;
        }
    }

    let mut node_weight = vec![0; next];
    let mut inner = vec![0; next];
    let mut maps: Vec<HashMap<NodeId, u64>> = vec![HashMap::new(); next];
    for u in 0..n {
        let cu = mapping[u];
        node_weight[cu] += graph.node_weight[u];
        inner[cu] += graph.inner[u];
        for &(v, w) in &graph.adj[u] {
            let cv = mapping[v];
            if cu == cv {
                if u < v {
                    inner[cu] += w;
                }
            } else {
                *maps[cu].entry(cv).or_default() += w;
            }
        }
    }
    let adj = maps
        .into_iter()
        .map(|m| {
            let mut row: Vec<_> = m.into_iter().collect();
            row.sort_unstable();
            row
        })
        .collect();
    CoarseLevel {
        graph: WeightedGraph {
            adj,
            node_weight,
            inner,
        },
        mapping,
    }
}

/// Labels from the base step plus the number of clusters that could not be
/// formed because the graph had fewer than `k` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseClustering {
    pub labels: Vec<usize>,
    pub padded: usize,
}

/// Lower `dist` to the hop distance from `source` wherever that is closer.
fn relax_from(graph: &WeightedGraph, source: NodeId, dist: &mut [Option<u32>]) {
    let mut queue = VecDeque::new();
    dist[source] = Some(0);
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or(0) + 1;
        for &(v, _) in &graph.adj[u] {
            if dist[v].is_none_or(|old| d < old) {
                dist[v] = Some(d);
                queue.push_back(v);
            }
        }
    }
}

/// k-means++ style seeding: after a uniform first pick, nodes are drawn with
/// probability proportional to weight times squared hop distance to the
/// nearest seed. Unreachable nodes are taken first.
fn pick_seeds<R: Rng>(graph: &WeightedGraph, k: usize, rng: &mut R) -> Vec<NodeId> {
    let n = graph.node_count();
    let mut dist: Vec<Option<u32>> = vec![None; n];
    let mut seeds = vec![rng.gen_range(0..n)];
    relax_from(graph, seeds[0], &mut dist);
    while seeds.len() < k {
        let unreachable: Vec<NodeId> = (0..n).filter(|&v| dist[v].is_none()).collect();
        let pick = if !unreachable.is_empty() {
            unreachable[rng.gen_range(0..unreachable.len())]
        } else {
            let score: Vec<f64> = (0..n)
                .map(|v| {
                    let d = f64::from(dist[v].unwrap_or(0));
                    graph.node_weight[v] as f64 * d * d
                })
                .collect();
            let total: f64 = score.iter().sum();
            if total <= 0.0 {
                // every node is already a seed
                break;
            }
            let mut x = rng.gen::<f64>() * total;
            let mut pick = score.iter().rposition(|&s| s > 0.0).unwrap_or(0);
            for (v, &s) in score.iter().enumerate() {
                if s > 0.0 && x < s {
                    pick = v;
                    break;
                }
                x -= s;
            }
            pick
        };
        seeds.push(pick);
        relax_from(graph, pick, &mut dist);
    }
    seeds
}

/// Seeded k-region growing. Regions repeatedly absorb the unassigned node
/// with the heaviest connection to them; nodes no region can reach are handed
/// to the lightest region.
pub fn base_cluster(graph: &WeightedGraph, k: usize, seed: u64) -> BaseClustering {
    let n = graph.node_count();
    let k = k.max(1);
    if n <= k {
        return BaseClustering {
            labels: (0..n).collect(),
            padded: k - n,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = pick_seeds(graph, k, &mut rng);

    const NONE: usize = usize::MAX;
    let mut labels = vec![NONE; n];
    let mut region_weight = vec![0u64; k];
    let mut conn: HashMap<(NodeId, usize), u64> = HashMap::new();
    let mut heap: BinaryHeap<(u64, Reverse<NodeId>, Reverse<usize>)> = BinaryHeap::new();
    let mut assigned = 0;

    let mut attach = |v: NodeId,
                      r: usize,
                      labels: &mut Vec<usize>,
                      heap: &mut BinaryHeap<(u64, Reverse<NodeId>, Reverse<usize>)>,
                      region_weight: &mut Vec<u64>| {
        labels[v] = r;
        region_weight[r] += graph.node_weight[v];
        for &(u, w) in &graph.adj[v] {
            if labels[u] == NONE {
                let c = conn.entry((u, r)).or_default();
                *c += w;
                heap.push((*c, Reverse(u), Reverse(r)));
            }
        }
    };

    for (r, &s) in seeds.iter().enumerate() {
        attach(s, r, &mut labels, &mut heap, &mut region_weight);
        assigned += 1;
    }
    while assigned < n {
        match heap.pop() {
            Some((_, Reverse(v), Reverse(r))) => {
                if labels[v] == NONE {
                    attach(v, r, &mut labels, &mut heap, &mut region_weight);
                    assigned += 1;
                }
            }
            None => {
                let v = labels.iter().position(|&l| l == NONE).expect("unassigned node");
                let r = (0..seeds.len())
                    .min_by_key(|&r| (region_weight[r], r))
                    .expect("at least one region");
                attach(v, r, &mut labels, &mut heap, &mut region_weight);
                assigned += 1;
            }
        }
    }
    BaseClustering {
        labels,
        padded: k - seeds.len(),
    }
}

/// Σ cut(c) / vol(c) over clusters, with 0/0 read as 0.
pub fn normalized_cut(graph: &WeightedGraph, labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut cut = vec![0u64; k];
    let mut vol = vec![0u64; k];
    for u in 0..graph.node_count() {
        vol[labels[u]] += graph.volume(u);
        for &(v, w) in &graph.adj[u] {
            if labels[u] != labels[v] {
                cut[labels[u]] += w;
            }
        }
    }
    ncut_terms(&cut, &vol)
}

fn ncut_term(cut: u64, vol: u64) -> f64 {
    if vol == 0 {
        0.0
    } else {
        cut as f64 / vol as f64
    }
}

fn ncut_terms(cut: &[u64], vol: &[u64]) -> f64 {
    cut.iter().zip(vol).map(|(&c, &v)| ncut_term(c, v)).sum()
}

const MOVE_TOL: f64 = 1e-12;

/// Greedy boundary refinement. Each sweep visits nodes in index order and
/// moves a boundary node to the neighbouring cluster giving the largest
/// decrease in normalized cut. Stops after a sweep without moves or after
/// `iterations` sweeps. Returns the number of sweeps run.
pub fn refine(graph: &WeightedGraph, labels: &mut [usize], iterations: usize) -> usize {
    let n = graph.node_count();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut cut = vec![0u64; k];
    let mut vol = vec![0u64; k];
    let mut count = vec![0usize; k];
    for u in 0..n {
        let l = labels[u];
        vol[l] += graph.volume(u);
        count[l] += 1;
        for &(v, w) in &graph.adj[u] {
            if labels[v] != l {
                cut[l] += w;
            }
        }
    }

    let mut links: HashMap<usize, u64> = HashMap::new();
    let mut sweeps = 0;
    while sweeps < iterations {
        sweeps += 1;
        let before = ncut_terms(&cut, &vol);
        let mut moved = false;
        for v in 0..n {
            let a = labels[v];
            if count[a] == 1 {
                continue;
            }
            links.clear();
            for &(u, w) in &graph.adj[v] {
                *links.entry(labels[u]).or_default() += w;
            }
            if links.keys().all(|&c| c == a) {
                continue;
            }
            let s = graph.external_weight(v);
            let d = graph.volume(v);
            let l_a = links.get(&a).copied().unwrap_or(0);
            let cut_a = cut[a] + 2 * l_a - s;
            let vol_a = vol[a] - d;
            let old_a = ncut_term(cut[a], vol[a]);
            let new_a = ncut_term(cut_a, vol_a);

            let mut targets: Vec<(usize, u64)> = links.iter().filter(|(&c, _)| c != a).map(|(&c, &w)| (c, w)).collect();
            targets.sort_unstable();
            let mut best: Option<(f64, usize, u64)> = None;
            for (b, l_b) in targets {
                let cut_b = cut[b] + s - 2 * l_b;
                let delta = (new_a - old_a) + ncut_term(cut_b, vol[b] + d) - ncut_term(cut[b], vol[b]);
                if delta < -MOVE_TOL && best.is_none_or(|(bd, _, _)| delta < bd) {
                    best = Some((delta, b, cut_b));
                }
            }
            if let Some((_, b, cut_b)) = best {
                cut[a] = cut_a;
                vol[a] = vol_a;
                count[a] -= 1;
                cut[b] = cut_b;
                vol[b] += d;
                count[b] += 1;
                labels[v] = b;
                moved = true;
            }
        }
        debug_assert!(ncut_terms(&cut, &vol) <= before + 1e-9);
        if !moved {
            break;
        }
    }
    sweeps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkkmParams {
    pub k: usize,
    /// Stop coarsening at or below this many nodes; `None` means `20 * k`.
    pub coarsen_until: Option<usize>,
    pub refine_iterations: usize,
    /// Independent seeded base clusterings tried at the coarsest level; the
    /// one with the lowest refined normalized cut is kept.
    pub base_trials: usize,
    pub seed: u64,
}

impl MkkmParams {
    pub fn new(k: usize, seed: u64) -> Self {
        MkkmParams {
            k: k.max(1),
            coarsen_until: None,
            refine_iterations: 20,
            base_trials: 32,
            seed,
        }
    }

    pub fn coarsen_target(&self) -> usize {
        self.coarsen_until.unwrap_or(20 * self.k).max(self.k)
    }
}

/// Half the MCL cluster count, rounded up, at least one.
pub fn choose_k(mcl: &Clustering) -> usize {
    mcl.len().div_ceil(2).max(1)
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.gen()
}

/// Full multilevel run on the symmetrised citation graph.
pub fn mkkm_cluster(graph: &CitationGraph, params: &MkkmParams, dataset: &str) -> Clustering {
    let base = WeightedGraph::from_citations(graph);
    let (labels, padded) = mkkm_labels(&base, params);
    let mut prov = Provenance::new("mkkm", dataset, serde_json::to_value(params).expect("params serialize"));
    if padded > 0 {
        prov.params["padded"] = serde_json::json!(padded);
    }
    Clustering::from_labels(&labels, prov)
}

/// Labels for a weighted graph and the pad count from the base step.
pub fn mkkm_labels(graph: &WeightedGraph, params: &MkkmParams) -> (Vec<usize>, usize) {
    let k = params.k.max(1);
    let target = params.coarsen_target();
    let mut levels: Vec<CoarseLevel> = Vec::new();
    let mut current = graph.clone();
    let mut round = 0u64;
    while current.node_count() > target && current.node_count() >= 2 {
        let level = coarsen(&current, sub_seed(params.seed, round));
        round += 1;
        let m = level.graph.node_count();
        if m == current.node_count() || m < k {
            break;
        }
        current = level.graph.clone();
        levels.push(level);
    }

    let trials = params.base_trials.max(1) as u64;
    let runs: Vec<(f64, Vec<usize>, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let base = base_cluster(&current, k, sub_seed(params.seed, 1_000_000 + t));
            let mut labels = base.labels;
            refine(&current, &mut labels, params.refine_iterations);
            (normalized_cut(&current, &labels), labels, base.padded)
        })
        .collect();
    // first trial wins ties, so the result does not depend on scheduling
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.0 < runs[best].0 - MOVE_TOL {
            best = i;
        }
    }
    let (_, mut labels, padded) = runs.into_iter().nth(best).expect("at least one trial");

    for (i, level) in levels.iter().enumerate().rev() {
        let finer = if i == 0 { graph } else { &levels[i - 1].graph };
        labels = level.mapping.iter().map(|&c| labels[c]).collect();
        refine(finer, &mut labels, params.refine_iterations);
    }
    (labels, padded)
}
