//! Markov Clustering over a sparse column-stochastic flow matrix.
//!
//! Each iteration expands (matrix power), inflates (entrywise power plus
//! column renormalisation) and prunes small entries. The limit matrix is read
//! as attractor systems: node `u` belongs to the attractor `a` holding the
//! largest share of column `u`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{Clustering, Provenance};
use crate::graph::{CitationGraph, NodeId};
use crate::scalar::Scalar;

/// Sparse nonnegative matrix whose columns each sum to one.
///
/// Columns hold `(row, value)` pairs sorted by row with no zero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStochasticMatrix<T> {
    dim: usize,
    cols: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> ColumnStochasticMatrix<T> {
    pub fn identity(dim: usize) -> Self {
        ColumnStochasticMatrix {
            dim,
            cols: (0..dim).map(|j| vec![(j, T::one())]).collect(),
        }
    }

    /// Normalise arbitrary nonnegative columns. An all-zero column becomes a
    /// self-entry of one.
    pub fn from_weighted_columns(dim: usize, cols: Vec<Vec<(usize, T)>>) -> Self {
        assert_eq!(cols.len(), dim, "need one column per dimension");
        let cols = cols
            .into_iter()
            .enumerate()
            .map(|(j, mut col)| {
                assert!(col.iter().all(|&(i, v)| i < dim && v >= T::zero()));
                col.retain(|&(_, v)| v > T::zero());
                col.sort_by_key(|&(i, _)| i);
                if col.is_empty() {
                    vec![(j, T::one())]
                } else {
                    normalized(col)
                }
            })
            .collect();
        ColumnStochasticMatrix { dim, cols }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let dim = rows.len();
        let cols = (0..dim).map(|j| (0..dim).map(|i| (i, rows[i][j])).collect()).collect();
        Self::from_weighted_columns(dim, cols)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, j: usize) -> &[(usize, T)] {
        &self.cols[j]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.cols[j]
            .binary_search_by_key(&i, |&(r, _)| r)
            .map(|k| self.cols[j][k].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.dim]; self.dim];
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                out[i][j] = v;
            }
        }
        out
    }

    /// Largest `|column sum - 1|`.
    pub fn stochastic_defect(&self) -> T {
        self.cols
            .iter()
            .map(|c| (c.iter().map(|&(_, v)| v).sum::<T>() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    pub fn is_column_stochastic(&self, tol: T) -> bool {
        self.cols.iter().all(|c| c.iter().all(|&(_, v)| v >= T::zero())) && self.stochastic_defect() <= tol
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim);
        let mut worst = T::zero();
        for (a, b) in self.cols.iter().zip(&other.cols) {
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let d = match (a.get(i), b.get(j)) {
                    (Some(&(ra, va)), Some(&(rb, vb))) => match ra.cmp(&rb) {
                        std::cmp::Ordering::Equal => {
                            i += 1;
                            j += 1;
                            va - vb
                        }
                        std::cmp::Ordering::Less => {
                            i += 1;
                            va
                        }
                        std::cmp::Ordering::Greater => {
                            j += 1;
                            vb
                        }
                    },
                    (Some(&(_, va)), None) => {
                        i += 1;
                        va
                    }
                    (None, Some(&(_, vb))) => {
                        j += 1;
                        vb
                    }
                    (None, None) => unreachable!(),
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

fn normalized<T: Scalar>(mut col: Vec<(usize, T)>) -> Vec<(usize, T)> {
    let s: T = col.iter().map(|&(_, v)| v).sum();
    for e in &mut col {
        e.1 = e.1 / s;
    }
    col
}

/// Flow matrix of the symmetrised graph with unit self-loops.
pub fn build_transition_matrix<T: Scalar>(graph: &CitationGraph) -> ColumnStochasticMatrix<T> {
    let n = graph.node_count();
    let cols = (0..n)
        .map(|j| {
            let mut rows = graph.undirected_neighbors(j);
            let pos = rows.partition_point(|&r| r < j);
            rows.insert(pos, j);
            rows.into_iter().map(|i| (i, T::one())).collect()
        })
        .collect();
    ColumnStochasticMatrix::from_weighted_columns(n, cols)
}

/// `a * b`. Columns are computed independently; within a column the
/// accumulation order is fixed, so the result does not depend on threading.
fn multiply<T: Scalar>(a: &ColumnStochasticMatrix<T>, b: &ColumnStochasticMatrix<T>) -> ColumnStochasticMatrix<T> {
    let n = a.dim;
    let cols = b
        .cols
        .par_iter()
        .map_init(
            || (vec![T::zero(); n], vec![false; n], Vec::<usize>::new()),
            |(acc, hit, touched), bcol| {
                for &(k, bkj) in bcol {
                    for &(i, aik) in &a.cols[k] {
                        if !hit[i] {
                            hit[i] = true;
                            touched.push(i);
                        }
                        acc[i] = acc[i] + aik * bkj;
                    }
                }
                touched.sort_unstable();
                let mut col = Vec::with_capacity(touched.len());
                for &i in touched.iter() {
                    if acc[i] > T::zero() {
                        col.push((i, acc[i]));
                    }
                    acc[i] = T::zero();
                    hit[i] = false;
                }
                touched.clear();
                col
            },
        )
        .collect();
    ColumnStochasticMatrix { dim: n, cols }
}

/// `m` raised to the `e`-th power.
pub fn expand<T: Scalar>(m: &ColumnStochasticMatrix<T>, e: u32) -> ColumnStochasticMatrix<T> {
    assert!(e >= 1, "expansion power must be at least 1");
    let mut out = m.clone();
    for _ in 1..e {
        out = multiply(&out, m);
    }
    out
}

/// Entrywise power `r`, then per-column renormalisation.
pub fn inflate<T: Scalar>(m: &ColumnStochasticMatrix<T>, r: T) -> ColumnStochasticMatrix<T> {
    if r == T::one() {
        return m.clone();
    }
    let cols = m
        .cols
        .par_iter()
        .map(|col| {
            let mut c: Vec<(usize, T)> = col
                .iter()
                .map(|&(i, v)| (i, v.powf(r)))
                .filter(|&(_, v)| v > T::zero())
                .collect();
            if c.is_empty() {
                // every entry underflowed; keep the column maxima
                let mx = col.iter().map(|&(_, v)| v).fold(T::zero(), T::max);
                c = col
                    .iter()
                    .filter(|&&(_, v)| v == mx)
                    .map(|&(i, _)| (i, T::one()))
                    .collect();
            }
            normalized(c)
        })
        .collect();
    ColumnStochasticMatrix { dim: m.dim, cols }
}

/// Drop entries below `threshold`, never the column maximum, and
/// renormalise columns that lost mass.
pub fn prune<T: Scalar>(m: &ColumnStochasticMatrix<T>, threshold: T) -> ColumnStochasticMatrix<T> {
    let cols = m
        .cols
        .par_iter()
        .map(|col| {
            let mx = col.iter().map(|&(_, v)| v).fold(T::zero(), T::max);
            let kept: Vec<(usize, T)> = col
                .iter()
                .copied()
                .filter(|&(_, v)| v >= threshold || v == mx)
                .collect();
            if kept.len() == col.len() {
                kept
            } else {
                normalized(kept)
            }
        })
        .collect();
    ColumnStochasticMatrix { dim: m.dim, cols }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MclParams {
    pub expansion: u32,
    pub inflation: f64,
    pub prune_threshold: f64,
    pub max_iterations: usize,
    pub convergence_epsilon: f64,
}

impl Default for MclParams {
    fn default() -> Self {
        MclParams {
            expansion: 2,
            inflation: 2.0,
            prune_threshold: 1e-4,
            max_iterations: 200,
            convergence_epsilon: 1e-6,
        }
    }
}

impl MclParams {
    pub fn with_inflation(inflation: f64) -> Self {
        MclParams {
            inflation,
            ..Default::default()
        }
    }
}

/// Which step produced the matrix handed to an observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Expand,
    Inflate,
    Prune,
}

/// Cluster a graph with MCL in `f64`.
pub fn mcl_cluster(graph: &CitationGraph, params: &MclParams, dataset: &str) -> Clustering {
    mcl_cluster_observed::<f64, _>(graph, params, dataset, |_, _, _| {})
}

/// MCL with a callback after every step of every iteration.
pub fn mcl_cluster_observed<T, F>(
    graph: &CitationGraph,
    params: &MclParams,
    dataset: &str,
    mut observe: F,
) -> Clustering
where
    T: Scalar,
    F: FnMut(usize, Step, &ColumnStochasticMatrix<T>),
{
    assert!(params.expansion >= 2, "expansion must be at least 2");
    let inflation = T::lit(params.inflation);
    let threshold = T::lit(params.prune_threshold);
    let eps = T::lit(params.convergence_epsilon);

    let mut m = build_transition_matrix::<T>(graph);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let e = expand(&m, params.expansion);
        observe(iterations, Step::Expand, &e);
        let i = inflate(&e, inflation);
        observe(iterations, Step::Inflate, &i);
        let p = prune(&i, threshold);
        observe(iterations, Step::Prune, &p);
        let change = p.max_abs_diff(&m);
        m = p;
        if change < eps {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("MCL did not converge within {} iterations", params.max_iterations);
    }

    let mut provenance = Provenance::new("mcl", dataset, serde_json::to_value(params).expect("params serialize"));
    provenance.iterations = Some(iterations);
    provenance.converged = converged;
    Clustering::new(interpret(&m), provenance)
}

/// Read clusters off a (near) limit matrix.
///
/// Attractors are nodes with a positive diagonal entry. Each column joins the
/// attractor row with the largest entry (ties to the lowest row); a column
/// with no attractor entry joins its largest row. Clusters are the connected
/// components of those assignments.
pub fn interpret<T: Scalar>(m: &ColumnStochasticMatrix<T>) -> Vec<Vec<NodeId>> {
    let n = m.dim();
    let attractor: Vec<bool> = (0..n).map(|a| m.get(a, a) > T::zero()).collect();
    let mut uf = UnionFind::new(n);
    for u in 0..n {
        let col = m.column(u);
        let pick = |only_attractors: bool| {
            let mut best: Option<(usize, T)> = None;
            for &(a, v) in col {
                if only_attractors && !attractor[a] {
                    continue;
                }
                // rows ascend, so strict > keeps the lowest index on ties
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((a, v));
                }
            }
            best
        };
        if let Some((a, _)) = pick(true).or_else(|| pick(false)) {
            uf.union(u, a);
        }
    }
    let mut groups: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for u in 0..n {
        groups[uf.find(u)].push(u);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
