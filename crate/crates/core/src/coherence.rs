//! Textual coherence: how much closer a cluster's articles sit to the
//! cluster's term distribution than the articles of a random set of the same
//! size sit to theirs, measured by Jensen-Shannon divergence.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::RwLock;

use rand::{seq::index::sample, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::scalar::Scalar;
use crate::text::TextCorpus;

/// Articles with text a cluster needs (strictly more than this) to be scored.
pub const MIN_TEXTS: usize = 10;
pub const DEFAULT_REPS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum CoherenceError {
    #[error("term vector is empty")]
    EmptyVector,
    #[error("cluster has {n_used} articles with text; more than {min} are needed")]
    TooSmall { n_used: usize, min: usize },
    #[error("every token in the article set occurs once, so no terms remain")]
    NoTerms,
    #[error("corpus has {corpus} articles with text, cannot sample {n}")]
    CorpusTooSmall { corpus: usize, n: usize },
}

/// Sparse token counts, sorted by token id, without zero entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TermVector {
    entries: Vec<(u32, u64)>,
}

impl TermVector {
    pub fn from_tokens(tokens: &[u32]) -> Self {
        let mut counts: HashMap<u32, u64> = HashMap::new();
        for &t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let mut merged: HashMap<u32, u64> = HashMap::new();
        for (t, c) in counts {
            *merged.entry(t).or_default() += c;
        }
        let mut entries: Vec<(u32, u64)> = merged.into_iter().filter(|&(_, c)| c > 0).collect();
        entries.sort_unstable();
        TermVector { entries }
    }

    pub fn entries(&self) -> &[(u32, u64)] {
        &self.entries
    }

    pub fn get(&self, token: u32) -> u64 {
        self.entries
            .binary_search_by_key(&token, |&(t, _)| t)
            .map_or(0, |i| self.entries[i].1)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    fn retain(&mut self, keep: impl Fn(u32) -> bool) {
        self.entries.retain(|&(t, _)| keep(t));
    }
}

/// Per-article vectors and their sum after cluster-singleton removal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterTerms {
    pub articles: Vec<TermVector>,
    pub cluster: TermVector,
}

/// Count tokens per article, then drop every token that occurs exactly once
/// across the whole set.
pub fn cluster_term_stats<D: AsRef<[u32]>>(docs: &[D]) -> ClusterTerms {
    let mut articles: Vec<TermVector> = docs.iter().map(|d| TermVector::from_tokens(d.as_ref())).collect();
    let mut totals: HashMap<u32, u64> = HashMap::new();
    for a in &articles {
        for &(t, c) in a.entries() {
            *totals.entry(t).or_default() += c;
        }
    }
    for a in &mut articles {
        a.retain(|t| totals[&t] > 1);
    }
    let cluster = TermVector::from_counts(totals.into_iter().filter(|&(_, c)| c > 1));
    ClusterTerms { articles, cluster }
}

fn xlog2_ratio<T: Scalar>(x: T, m: T) -> T {
    if x > T::zero() {
        x * (x / m).log2()
    } else {
        T::zero()
    }
}

/// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
pub fn jsd<T: Scalar>(p: &TermVector, q: &TermVector) -> Result<T, CoherenceError> {
    if p.is_empty() || q.is_empty() {
        return Err(CoherenceError::EmptyVector);
    }
    let tp = T::from_u64(p.total()).expect("count fits");
    let tq = T::from_u64(q.total()).expect("count fits");
    let half = T::lit(0.5);
    let term = |a: u64, b: u64| {
        let pa = T::from_u64(a).expect("count fits") / tp;
        let qb = T::from_u64(b).expect("count fits") / tq;
        let m = (pa + qb) * half;
        xlog2_ratio(pa, m) + xlog2_ratio(qb, m)
    };
    let (pe, qe) = (p.entries(), q.entries());
    let (mut i, mut j) = (0, 0);
    let mut sum = T::zero();
    while i < pe.len() || j < qe.len() {
        let (a, b) = match (pe.get(i), qe.get(j)) {
            (Some(&(ta, ca)), Some(&(tb, cb))) if ta == tb => {
                i += 1;
                j += 1;
                (ca, cb)
            }
            (Some(&(ta, ca)), Some(&(tb, _))) if ta < tb => {
                i += 1;
                (ca, 0)
            }
            (Some(&(_, ca)), None) => {
                i += 1;
                (ca, 0)
            }
            (_, Some(&(_, cb))) => {
                j += 1;
                (0, cb)
            }
            (None, None) => unreachable!(),
        };
        sum = sum + term(a, b);
    }
    Ok((sum * half).max(T::zero()).min(T::one()))
}

/// Mean JSD between each article and the cluster distribution. Articles
/// left without terms are skipped.
pub fn jsd_cluster<T: Scalar>(terms: &ClusterTerms) -> Result<T, CoherenceError> {
    if terms.cluster.is_empty() {
        return Err(CoherenceError::NoTerms);
    }
    let mut sum = T::zero();
    let mut used = 0usize;
    for a in terms.articles.iter().filter(|a| !a.is_empty()) {
        sum = sum + jsd::<T>(a, &terms.cluster)?;
        used += 1;
    }
    Ok(sum / T::from_usize(used).expect("count fits"))
}

/// JSD_X of a set of corpus documents.
pub fn jsd_of_docs<T: Scalar>(corpus: &TextCorpus, docs: &[usize]) -> Result<T, CoherenceError> {
    let texts: Vec<&[u32]> = docs.iter().map(|&d| corpus.doc(d)).collect();
    jsd_cluster(&cluster_term_stats(&texts))
}

/// Mean and standard error of JSD_X over random subsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mean: f64,
    pub std_err: f64,
    pub reps: usize,
}

fn baseline_rng(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

/// JSD_X averaged over `reps` uniformly drawn `n`-subsets of the corpus.
/// Samples whose tokens are all singletons are skipped.
pub fn jsd_random_baseline(corpus: &TextCorpus, n: usize, reps: usize, seed: u64) -> Result<Baseline, CoherenceError> {
    if n == 0 || n > corpus.len() {
        return Err(CoherenceError::CorpusTooSmall {
            corpus: corpus.len(),
            n,
        });
    }
    if n == corpus.len() {
        // only one subset exists
        let all: Vec<usize> = (0..n).collect();
        return Ok(Baseline {
            mean: jsd_of_docs::<f64>(corpus, &all)?,
            std_err: 0.0,
            reps: reps.max(1),
        });
    }
    let mut rng = baseline_rng(seed, n);
    let mut values = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let mut docs = sample(&mut rng, corpus.len(), n).into_vec();
        docs.sort_unstable();
        match jsd_of_docs::<f64>(corpus, &docs) {
            Ok(v) => values.push(v),
            Err(CoherenceError::NoTerms) => {}
            Err(e) => return Err(e),
        }
    }
    if values.is_empty() {
        return Err(CoherenceError::NoTerms);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(Baseline {
        mean,
        std_err: (var / k).sqrt(),
        reps: values.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceResult {
    pub cluster_id: usize,
    pub n_used: usize,
    pub jsd_cluster: f64,
    pub jsd_random: f64,
    pub coherence: f64,
}

pub const COHERENCE_HEADER: &str = "cluster_id,n_used,jsd_cluster,jsd_random,coherence";

/// Coherence scoring against one corpus, caching baselines by subset size.
#[derive(Debug)]
pub struct CoherenceScorer<'a> {
    corpus: &'a TextCorpus,
    reps: usize,
    seed: u64,
    cache: RwLock<HashMap<usize, Baseline>>,
}

impl<'a> CoherenceScorer<'a> {
    pub fn new(corpus: &'a TextCorpus, reps: usize, seed: u64) -> Self {
        CoherenceScorer {
            corpus,
            reps,
            seed,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn corpus(&self) -> &TextCorpus {
        self.corpus
    }

    pub fn baseline(&self, n: usize) -> Result<Baseline, CoherenceError> {
        if let Some(b) = self.cache.read().expect("cache lock").get(&n) {
            return Ok(*b);
        }
        let b = jsd_random_baseline(self.corpus, n, self.reps, self.seed)?;
        // a concurrent writer computed the same value from the same seed
        Ok(*self.cache.write().expect("cache lock").entry(n).or_insert(b))
    }

    /// Corpus positions of the cluster members that have text.
    pub fn texts_of<S: AsRef<str>>(&self, pub_ids: &[S]) -> Vec<usize> {
        let mut docs: Vec<usize> = pub_ids
            .iter()
            .filter_map(|p| self.corpus.position(p.as_ref()))
            .collect();
        docs.sort_unstable();
        docs.dedup();
        docs
    }

    /// Baseline minus the cluster's mean JSD, so coherent clusters score
    /// positive.
    pub fn score<S: AsRef<str>>(&self, cluster_id: usize, pub_ids: &[S]) -> Result<CoherenceResult, CoherenceError> {
        let docs = self.texts_of(pub_ids);
        if docs.len() <= MIN_TEXTS {
            return Err(CoherenceError::TooSmall {
                n_used: docs.len(),
                min: MIN_TEXTS,
            });
        }
        let jsd_cluster = jsd_of_docs::<f64>(self.corpus, &docs)?;
        let jsd_random = self.baseline(docs.len())?.mean;
        Ok(CoherenceResult {
            cluster_id,
            n_used: docs.len(),
            jsd_cluster,
            jsd_random,
            coherence: jsd_random - jsd_cluster,
        })
    }
}

pub fn write_coherence_csv<W: Write>(w: &mut W, rows: &[CoherenceResult]) -> std::io::Result<()> {
    writeln!(w, "{COHERENCE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.cluster_id, r.n_used, r.jsd_cluster, r.jsd_random, r.coherence
        )?;
    }
    w.flush()
}

pub fn save_coherence(path: &Path, rows: &[CoherenceResult]) -> Result<(), GraphError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| GraphError::io(path, e))?);
    write_coherence_csv(&mut f, rows).map_err(|e| GraphError::io(path, e))
}

pub fn read_coherence(path: &Path) -> Result<Vec<CoherenceResult>, GraphError> {
    let body = std::fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in body.lines().enumerate().skip(1) {
        let bad = || GraphError::Parse {
            line: i + 1,
            message: format!("malformed coherence row {line:?}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        rows.push(CoherenceResult {
            cluster_id: f[0].parse().map_err(|_| bad())?,
            n_used: f[1].parse().map_err(|_| bad())?,
            jsd_cluster: f[2].parse().map_err(|_| bad())?,
            jsd_random: f[3].parse().map_err(|_| bad())?,
            coherence: f[4].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}
