//! End-to-end run driven by a TOML configuration.
//!
//! Stages run in order and write plain-text artifacts under the output
//! directory. Every seed is derived from the one master seed by hashing it
//! together with a stage label, so stages do not share random streams.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clustering::{Clustering, NamedClusters};
use crate::coherence::{
    read_coherence, save_coherence, CoherenceError, CoherenceResult, CoherenceScorer, DEFAULT_REPS,
};
use crate::community::{
    author_cluster_distribution, build_profile, classify_edge_case, filter_communities, save_jsonl, Community,
    EdgeCaseThresholds,
};
use crate::graph::{union_datasets, Dataset, GraphError};
use crate::matching::{match_all, save_matches, ClusterMatch, SelectionCriteria};
use crate::mcl::{mcl_cluster, MclParams};
use crate::metrics::{mean, median, metrics_table, ClusterMetrics, MetricsTable};
use crate::mkkm::{choose_k, mkkm_cluster, MkkmParams};
use crate::shuffle::shuffle_citations;
use crate::text::{StopList, TextCorpus};

pub const COMBINED: &str = "combined";
pub const SUMMARY_HEADER: &str = "label,num_clusters,num_articles,mean_size,median_size,mean_cond,mean_coh";
pub const PAIRS_HEADER: &str = "match_label,size_m,size_g,cond_m,cond_g,coh_m,coh_g,int_edges_m,int_edges_g,jc";
pub const CANDIDATES_HEADER: &str = "label,mcl_id,mkkm_id,size,conductance,jaccard,selected";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl PipelineError {
    fn stage(stage: &str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage: stage.to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub label: String,
    pub edges: PathBuf,
    #[serde(default)]
    pub metadata: Option<PathBuf>,
}

/// Cluster count for MKKM: a fixed number or half the slice's MCL count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KChoice {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for KChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KChoice::Auto => s.serialize_str("auto"),
            KChoice::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(k) => Ok(KChoice::Fixed(k as usize)),
            Raw::S(s) if s == "auto" => Ok(KChoice::Auto),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "k must be an integer or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MkkmConfig {
    pub k: KChoice,
    pub coarsen_until: Option<usize>,
    pub refine_iterations: usize,
    pub base_trials: usize,
}

impl Default for MkkmConfig {
    fn default() -> Self {
        let p = MkkmParams::new(1, 0);
        MkkmConfig {
            k: KChoice::Auto,
            coarsen_until: None,
            refine_iterations: p.refine_iterations,
            base_trials: p.base_trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceConfig {
    pub stoplist: Option<PathBuf>,
    pub reps: usize,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig {
            stoplist: None,
            reps: DEFAULT_REPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuffleConfig {
    /// Swap attempts per edge of each slice.
    pub swaps_per_edge: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub slices: Vec<SliceConfig>,
    #[serde(default)]
    pub mcl: MclParams,
    #[serde(default)]
    pub mkkm: MkkmConfig,
    #[serde(default)]
    pub selection: SelectionCriteria,
    #[serde(default)]
    pub coherence: CoherenceConfig,
    #[serde(default)]
    pub edge_cases: EdgeCaseThresholds,
    #[serde(default)]
    pub shuffle: Option<ShuffleConfig>,
}

impl PipelineConfig {
    /// Parse a config file; relative paths are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut cfg.slices {
            fix(&mut s.edges);
            if let Some(m) = &mut s.metadata {
                fix(m);
            }
        }
        if let Some(p) = &mut cfg.coherence.stoplist {
            fix(p);
        }
        if let Some(p) = &mut cfg.output_dir {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Validation(m));
        if self.slices.is_empty() {
            return bad("no slices configured".into());
        }
        let mut labels = std::collections::HashSet::new();
        for s in &self.slices {
            if s.label.is_empty() || s.label == COMBINED || s.label.contains(['/', '\\']) {
                return bad(format!("slice label {:?} is not usable", s.label));
            }
            if !labels.insert(&s.label) {
                return bad(format!("slice label {:?} appears twice", s.label));
            }
            if !s.edges.is_file() {
                return bad(format!("edge file {} does not exist", s.edges.display()));
            }
            if let Some(m) = &s.metadata {
                if !m.is_file() {
                    return bad(format!("metadata file {} does not exist", m.display()));
                }
            }
        }
        if let Some(p) = &self.coherence.stoplist {
            if !p.is_file() {
                return bad(format!("stop-list {} does not exist", p.display()));
            }
        }
        if self.selection.min_size > self.selection.max_size {
            return bad("selection.min_size exceeds selection.max_size".into());
        }
        if self.mkkm.k == KChoice::Fixed(0) {
            return bad("mkkm.k must be at least 1".into());
        }
        if self.coherence.reps == 0 {
            return bad("coherence.reps must be at least 1".into());
        }
        if self.mcl.expansion < 2 || self.mcl.inflation <= 1.0 {
            return bad("mcl needs expansion >= 2 and inflation > 1".into());
        }
        Ok(())
    }
}

/// Stage seed: the first eight bytes of sha256(master seed, label).
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 8 bytes"))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical runs.
    pub created_unix: u64,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
}

pub const MANIFEST: &str = "manifest.json";
pub const FAILED: &str = "failed";

/// Summary of a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub accepted: usize,
    pub rejected: usize,
    pub selected: usize,
}

fn files_under(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Refuse to write into a directory that holds something other than a
/// previous run; clear a previous run.
fn prepare_output(out: &Path) -> Result<(), PipelineError> {
    if !out.exists() {
        return fs::create_dir_all(out)
            .map_err(|e| PipelineError::Validation(format!("cannot create {}: {e}", out.display())));
    }
    let entries: Vec<PathBuf> = fs::read_dir(out)
        .map_err(|e| PipelineError::Validation(format!("cannot read {}: {e}", out.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    if entries.is_empty() {
        return Ok(());
    }
    let previous = out.join(MANIFEST).exists() || out.join(FAILED).exists();
    if !previous {
        return Err(PipelineError::Validation(format!(
            "output directory {} is not empty and holds no previous run",
            out.display()
        )));
    }
    for p in entries {
        let res = if p.is_dir() {
            fs::remove_dir_all(&p)
        } else {
            fs::remove_file(&p)
        };
        res.map_err(|e| PipelineError::Validation(format!("cannot clear {}: {e}", p.display())))?;
    }
    Ok(())
}

/// Move everything written so far under `failed/`.
fn quarantine(out: &Path) {
    let failed = out.join(FAILED);
    if fs::create_dir_all(&failed).is_err() {
        return;
    }
    if let Ok(entries) = fs::read_dir(out) {
        for e in entries.flatten() {
            let p = e.path();
            if p != failed {
                let _ = fs::rename(&p, failed.join(e.file_name()));
            }
        }
    }
}

/// Per-dataset clustering outputs kept in memory between stages.
struct SliceRun {
    dataset: Dataset,
    mcl: Clustering,
    mcl_metrics: MetricsTable,
    mkkm: Clustering,
    mkkm_metrics: MetricsTable,
    mcl_vs_mkkm: Vec<ClusterMatch>,
    corpus: TextCorpus,
    coherence_seed: u64,
}

fn dir_for(out: &Path, label: &str) -> PathBuf {
    if label == COMBINED {
        out.join(COMBINED)
    } else {
        out.join("datasets").join(label)
    }
}

fn ensure_dir(p: &Path) -> Result<(), GraphError> {
    fs::create_dir_all(p).map_err(|e| GraphError::io(p, e))
}

/// Coherence rows for every cluster with enough text; others are skipped.
pub fn score_clusters(
    scorer: &CoherenceScorer<'_>,
    named: &NamedClusters,
) -> Result<Vec<CoherenceResult>, CoherenceError> {
    let results: Vec<Result<Option<CoherenceResult>, CoherenceError>> = named
        .clusters
        .par_iter()
        .map(|c| match scorer.score(c.id, &c.members) {
            Ok(r) => Ok(Some(r)),
            Err(CoherenceError::TooSmall { .. } | CoherenceError::NoTerms) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        if let Some(row) = r? {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Run every stage. On a stage failure the partial output is moved to
/// `failed/` inside the output directory.
pub fn run_pipeline(config: &PipelineConfig, output_dir: &Path) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    prepare_output(output_dir)?;
    match run_stages(config, output_dir) {
        Ok(summary) => Ok(summary),
        Err(e) => {
            quarantine(output_dir);
            Err(e)
        }
    }
}

fn run_stages(config: &PipelineConfig, out: &Path) -> Result<RunSummary, PipelineError> {
    let mut seeds: BTreeMap<String, u64> = BTreeMap::new();
    let mut seed_for = |label: String| {
        let s = derive_seed(config.seed, &label);
        seeds.insert(label, s);
        s
    };

    let stop = match &config.coherence.stoplist {
        Some(p) => StopList::load(p).map_err(|e| PipelineError::stage("ingest", e))?,
        None => StopList::default(),
    };

    // ingest
    log::info!("ingest: {} slices", config.slices.len());
    let datasets: Vec<Dataset> = config
        .slices
        .iter()
        .map(|s| Dataset::load(s.label.clone(), &s.edges, s.metadata.as_deref()))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::stage("ingest", e))?;
    let (combined, union_stats) = union_datasets(&datasets).map_err(|e| PipelineError::stage("ingest", e))?;
    log::info!(
        "combined: {} nodes, {} edges, {} shared nodes",
        combined.graph.node_count(),
        combined.graph.edge_count(),
        union_stats.shared_nodes
    );

    // per-slice MCL and MKKM
    let mut runs: Vec<SliceRun> = Vec::new();
    for ds in datasets {
        let label = ds.label.clone();
        log::info!("clustering slice {label}");
        let mcl = mcl_cluster(&ds.graph, &config.mcl, &label);
        let k = match config.mkkm.k {
            KChoice::Auto => choose_k(&mcl),
            KChoice::Fixed(k) => k,
        };
        let params = MkkmParams {
            k,
            coarsen_until: config.mkkm.coarsen_until,
            refine_iterations: config.mkkm.refine_iterations,
            base_trials: config.mkkm.base_trials,
            seed: seed_for(format!("mkkm/{label}")),
        };
        let mkkm = mkkm_cluster(&ds.graph, &params, &label);
        let dir = dir_for(out, &label);
        let write = || -> Result<(), GraphError> {
            ensure_dir(&dir)?;
            mcl.save(&ds.graph, &dir.join("mcl.tsv"))?;
            mkkm.save(&ds.graph, &dir.join("mkkm.tsv"))
        };
        write().map_err(|e| PipelineError::stage("cluster", e))?;
        let corpus = TextCorpus::build(ds.records().iter(), &stop);
        runs.push(SliceRun {
            mcl_metrics: metrics_table(&ds.graph, &mcl),
            mkkm_metrics: metrics_table(&ds.graph, &mkkm),
            mcl_vs_mkkm: Vec::new(),
            coherence_seed: seed_for(format!("coherence/{label}")),
            dataset: ds,
            mcl,
            mkkm,
            corpus,
        });
    }

    log::info!("clustering combined graph");
    let combined_mcl = mcl_cluster(&combined.graph, &config.mcl, COMBINED);
    let combined_dir = dir_for(out, COMBINED);
    (|| -> Result<(), GraphError> {
        ensure_dir(&combined_dir)?;
        combined_mcl.save(&combined.graph, &combined_dir.join("mcl.tsv"))
    })()
    .map_err(|e| PipelineError::stage("cluster", e))?;

    // metrics
    let combined_metrics = metrics_table(&combined.graph, &combined_mcl);
    (|| -> Result<(), GraphError> {
        for r in &runs {
            let dir = dir_for(out, &r.dataset.label);
            r.mcl_metrics.save(&dir.join("mcl_metrics.csv"))?;
            r.mkkm_metrics.save(&dir.join("mkkm_metrics.csv"))?;
        }
        combined_metrics.save(&combined_dir.join("mcl_metrics.csv"))
    })()
    .map_err(|e| PipelineError::stage("metrics", e))?;

    // combined clusters against the slice clusterings
    let slice_named: Vec<NamedClusters> = runs
        .iter()
        .map(|r| r.mcl.named(&r.dataset.graph, &r.dataset.label))
        .collect();
    let combined_named = combined_mcl.named(&combined.graph, COMBINED);
    let targets: Vec<&NamedClusters> = slice_named.iter().collect();
    let combined_to_slices = match_all(&combined_named, &targets);
    save_matches(&combined_dir.join("combined_to_slices.csv"), &combined_to_slices)
        .map_err(|e| PipelineError::stage("match", e))?;

    // slice MCL against slice MKKM
    for (r, named) in runs.iter_mut().zip(&slice_named) {
        let g = r.mkkm.named(&r.dataset.graph, &format!("{}/mkkm", r.dataset.label));
        r.mcl_vs_mkkm = match_all(named, &[&g]);
        save_matches(&dir_for(out, &r.dataset.label).join("mcl_vs_mkkm.csv"), &r.mcl_vs_mkkm)
            .map_err(|e| PipelineError::stage("match", e))?;
    }

    // candidates: slice clusters that best match a size-filtered combined cluster
    let crit = &config.selection;
    let slice_pos: HashMap<&str, usize> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| (r.dataset.label.as_str(), i))
        .collect();
    let mut candidates: Vec<(usize, usize)> = combined_to_slices
        .iter()
        .filter(|m| crit.size_ok(m.source_size))
        .filter_map(|m| Some((slice_pos[m.target_label.as_str()], m.target_cluster_id?)))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    struct Candidate {
        slice: usize,
        mcl_id: usize,
        mkkm_id: Option<usize>,
        jaccard: f64,
        selected: bool,
    }
    let candidates: Vec<Candidate> = candidates
        .into_iter()
        .map(|(slice, mcl_id)| {
            let r = &runs[slice];
            let m = &r.mcl_metrics.rows[mcl_id];
            let pair = &r.mcl_vs_mkkm[mcl_id];
            Candidate {
                slice,
                mcl_id,
                mkkm_id: pair.target_cluster_id,
                jaccard: pair.jaccard,
                selected: crit.admits(m.size, m.conductance, pair.jaccard),
            }
        })
        .collect();

    // coherence for every cluster of every dataset
    let stage = |e: CoherenceError| PipelineError::stage("coherence", e);
    let mut summary_rows = Vec::new();
    for (r, named) in runs.iter().zip(&slice_named) {
        let dir = dir_for(out, &r.dataset.label);
        let scorer = CoherenceScorer::new(&r.corpus, config.coherence.reps, r.coherence_seed);
        let mcl_coh = score_clusters(&scorer, named).map_err(stage)?;
        let mkkm_named = r.mkkm.named(&r.dataset.graph, "mkkm");
        let mkkm_coh = score_clusters(&scorer, &mkkm_named).map_err(stage)?;
        save_coherence(&dir.join("mcl_coherence.csv"), &mcl_coh).map_err(|e| PipelineError::stage("coherence", e))?;
        save_coherence(&dir.join("mkkm_coherence.csv"), &mkkm_coh).map_err(|e| PipelineError::stage("coherence", e))?;
        summary_rows.push(summary_row(&r.dataset.label, &r.mcl_metrics.rows, &mcl_coh));
    }
    let combined_corpus = TextCorpus::build(combined.records().iter(), &stop);
    let combined_scorer = CoherenceScorer::new(
        &combined_corpus,
        config.coherence.reps,
        seed_for(format!("coherence/{COMBINED}")),
    );
    let combined_coh = score_clusters(&combined_scorer, &combined_named).map_err(stage)?;
    save_coherence(&combined_dir.join("mcl_coherence.csv"), &combined_coh)
        .map_err(|e| PipelineError::stage("coherence", e))?;
    summary_rows.push(summary_row(COMBINED, &combined_metrics.rows, &combined_coh));

    // selection
    let sel_dir = out.join("selection");
    (|| -> Result<(), GraphError> {
        ensure_dir(&sel_dir)?;
        let mut body = format!("{CANDIDATES_HEADER}\n");
        for c in &candidates {
            let r = &runs[c.slice];
            let m = &r.mcl_metrics.rows[c.mcl_id];
            body += &format!(
                "{},{},{},{},{},{},{}\n",
                r.dataset.label,
                c.mcl_id,
                c.mkkm_id.map(|g| g.to_string()).unwrap_or_default(),
                m.size,
                m.conductance,
                c.jaccard,
                c.selected
            );
        }
        let p = sel_dir.join("candidates.csv");
        fs::write(&p, body).map_err(|e| GraphError::io(&p, e))
    })()
    .map_err(|e| PipelineError::stage("select", e))?;
    let selected: Vec<&Candidate> = candidates.iter().filter(|c| c.selected).collect();
    log::info!("{} candidates, {} selected", candidates.len(), selected.len());

    // edge cases and community profiles
    let communities: Vec<Community> = selected
        .iter()
        .map(|c| {
            let r = &runs[c.slice];
            let members = r.mcl.cluster(c.mcl_id);
            Community {
                dataset: r.dataset.label.clone(),
                profile: build_profile(c.mcl_id, members, &r.dataset),
                edge_case: classify_edge_case(&r.dataset.graph, members, &config.edge_cases),
            }
        })
        .collect();
    let (accepted, rejected) = filter_communities(communities);
    (|| -> Result<(), GraphError> {
        let dir = out.join("communities");
        ensure_dir(&dir)?;
        save_jsonl(&dir.join("accepted.jsonl"), &accepted)?;
        save_jsonl(&dir.join("rejected.jsonl"), &rejected)?;
        // author spread over the accepted clusters, per slice
        let mut spread = BTreeMap::new();
        for (i, r) in runs.iter().enumerate() {
            let clusters: Vec<Vec<usize>> = selected
                .iter()
                .filter(|c| c.slice == i)
                .filter(|c| {
                    accepted
                        .iter()
                        .any(|a| a.dataset == r.dataset.label && a.profile.cluster_id == c.mcl_id)
                })
                .map(|c| r.mcl.cluster(c.mcl_id).to_vec())
                .collect();
            spread.insert(
                r.dataset.label.clone(),
                author_cluster_distribution(&clusters, &r.dataset),
            );
        }
        let p = dir.join("author_distribution.json");
        let body = serde_json::to_string_pretty(&spread).expect("distribution serializes");
        fs::write(&p, body + "\n").map_err(|e| GraphError::io(&p, e))
    })()
    .map_err(|e| PipelineError::stage("communities", e))?;

    // optional null model
    if let Some(sh) = &config.shuffle {
        let mut rows = Vec::new();
        for r in &runs {
            let label = &r.dataset.label;
            let swaps = sh.swaps_per_edge * r.dataset.graph.edge_count() as u64;
            let (g, report) = shuffle_citations(&r.dataset.graph, swaps, seed_for(format!("shuffle/{label}")));
            let c = mcl_cluster(&g, &config.mcl, &format!("{label}/shuffled"));
            let m = metrics_table(&g, &c);
            let shuffled = Dataset::assemble(label.clone(), g, r.dataset.records().to_vec())
                .map_err(|e| PipelineError::stage("shuffle", e))?;
            let scorer = CoherenceScorer::new(&r.corpus, config.coherence.reps, r.coherence_seed);
            let coh = score_clusters(&scorer, &c.named(&shuffled.graph, label))
                .map_err(|e| PipelineError::stage("shuffle", e))?;
            let dir = out.join("shuffle").join(label);
            (|| -> Result<(), GraphError> {
                ensure_dir(&dir)?;
                shuffled.graph.write_tsv(&dir.join("edges.tsv"))?;
                report.write_json(&dir.join("report.json"))?;
                c.save(&shuffled.graph, &dir.join("mcl.tsv"))?;
                m.save(&dir.join("mcl_metrics.csv"))?;
                save_coherence(&dir.join("mcl_coherence.csv"), &coh)
            })()
            .map_err(|e| PipelineError::stage("shuffle", e))?;
            rows.push(summary_row(&format!("{label}/shuffled"), &m.rows, &coh));
        }
        write_summary(&out.join("reports").join("null_model.csv"), &rows)
            .map_err(|e| PipelineError::stage("shuffle", e))?;
    }

    // reports
    report_tables(out).map_err(|e| PipelineError::stage("report", e))?;

    // manifest
    let mut input_paths: Vec<&PathBuf> = config
        .slices
        .iter()
        .flat_map(|s| std::iter::once(&s.edges).chain(s.metadata.as_ref()))
        .chain(config.coherence.stoplist.as_ref())
        .collect();
    input_paths.sort();
    input_paths.dedup();
    let inputs = input_paths
        .into_iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p).map_err(|e| GraphError::io(p, e))?,
            })
        })
        .collect::<Result<Vec<_>, GraphError>>()
        .map_err(|e| PipelineError::stage("manifest", e))?;
    let manifest = write_manifest(out, config.seed, seeds, inputs).map_err(|e| PipelineError::stage("manifest", e))?;
    Ok(RunSummary {
        output_dir: out.to_path_buf(),
        manifest,
        accepted: accepted.len(),
        rejected: rejected.len(),
        selected: selected.len(),
    })
}

/// Hash every artifact under `out` (except the manifest) and write
/// `manifest.json`.
pub fn write_manifest(
    out: &Path,
    master_seed: u64,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<FileDigest>,
) -> Result<Manifest, GraphError> {
    let mut artifacts = Vec::new();
    for p in files_under(out).map_err(|e| GraphError::io(out, e))? {
        let name = rel(out, &p);
        if name == MANIFEST {
            continue;
        }
        artifacts.push(FileDigest {
            sha256: sha256_file(&p).map_err(|e| GraphError::io(&p, e))?,
            path: name,
        });
    }
    let manifest = Manifest {
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        master_seed,
        seeds,
        inputs,
        artifacts,
    };
    let p = out.join(MANIFEST);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, body + "\n").map_err(|e| GraphError::io(&p, e))?;
    Ok(manifest)
}

pub fn read_manifest(out: &Path) -> Result<Manifest, GraphError> {
    let p = out.join(MANIFEST);
    let body = fs::read_to_string(&p).map_err(|e| GraphError::io(&p, e))?;
    serde_json::from_str(&body).map_err(|source| GraphError::Json { line: 1, source })
}

/// One row of the per-dataset summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub num_clusters: usize,
    pub num_articles: usize,
    pub mean_size: f64,
    pub median_size: f64,
    pub mean_cond: f64,
    /// `None` when no cluster had enough text to score.
    pub mean_coh: Option<f64>,
}

pub fn summary_row(label: &str, metrics: &[ClusterMetrics], coherence: &[CoherenceResult]) -> SummaryRow {
    let mut sizes: Vec<f64> = metrics.iter().map(|m| m.size as f64).collect();
    let conds: Vec<f64> = metrics.iter().map(|m| m.conductance).collect();
    let cohs: Vec<f64> = coherence.iter().map(|c| c.coherence).collect();
    SummaryRow {
        label: label.to_string(),
        num_clusters: metrics.len(),
        num_articles: metrics.iter().map(|m| m.size).sum(),
        mean_size: mean(&sizes),
        median_size: median(&mut sizes),
        mean_cond: mean(&conds),
        mean_coh: (!cohs.is_empty()).then(|| mean(&cohs)),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), GraphError> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let mut body = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        body += &format!(
            "{},{},{},{},{},{},{}\n",
            r.label,
            r.num_clusters,
            r.num_articles,
            r.mean_size,
            r.median_size,
            r.mean_cond,
            opt(r.mean_coh)
        );
    }
    fs::write(path, body).map_err(|e| GraphError::io(path, e))
}

fn need(path: PathBuf) -> Result<PathBuf, GraphError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(GraphError::io(
            &path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "required artifact is missing"),
        ))
    }
}

/// Rebuild `reports/summary.csv` and `reports/pairs.csv` from the artifacts
/// of a run directory.
pub fn report_tables(out: &Path) -> Result<(PathBuf, PathBuf), GraphError> {
    let datasets_dir = out.join("datasets");
    let mut labels: Vec<String> = Vec::new();
    if datasets_dir.is_dir() {
        for e in fs::read_dir(&datasets_dir).map_err(|e| GraphError::io(&datasets_dir, e))? {
            let e = e.map_err(|e| GraphError::io(&datasets_dir, e))?;
            if e.path().is_dir() {
                labels.push(e.file_name().to_string_lossy().into_owned());
            }
        }
    }
    if labels.is_empty() {
        return Err(GraphError::io(
            &datasets_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no per-dataset artifacts"),
        ));
    }
    labels.sort_by_key(|l| crate::graph::SliceLabel::parse(l));

    let mut rows = Vec::new();
    for label in labels.iter().map(String::as_str).chain(std::iter::once(COMBINED)) {
        let dir = dir_for(out, label);
        let metrics = MetricsTable::read_rows(&need(dir.join("mcl_metrics.csv"))?)?;
        let coh = read_coherence(&need(dir.join("mcl_coherence.csv"))?)?;
        rows.push(summary_row(label, &metrics, &coh));
    }
    let summary_path = out.join("reports").join("summary.csv");
    write_summary(&summary_path, &rows)?;

    let cand_path = need(out.join("selection").join("candidates.csv"))?;
    let body = fs::read_to_string(&cand_path).map_err(|e| GraphError::io(&cand_path, e))?;
    let mut cache: HashMap<String, [Vec<ClusterMetrics>; 2]> = HashMap::new();
    let mut coh_cache: HashMap<String, [HashMap<usize, f64>; 2]> = HashMap::new();
    let mut pairs = format!("{PAIRS_HEADER}\n");
    for (i, line) in body.lines().enumerate().skip(1) {
        let bad = || GraphError::Parse {
            line: i + 1,
            message: format!("malformed candidate row {line:?}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        if f[6] != "true" {
            continue;
        }
        let label = f[0].to_string();
        let m_id: usize = f[1].parse().map_err(|_| bad())?;
        let g_id: Option<usize> = if f[2].is_empty() {
            None
        } else {
            Some(f[2].parse().map_err(|_| bad())?)
        };
        let jc: f64 = f[5].parse().map_err(|_| bad())?;
        let dir = dir_for(out, &label);
        if !cache.contains_key(&label) {
            let m = MetricsTable::read_rows(&need(dir.join("mcl_metrics.csv"))?)?;
            let g = MetricsTable::read_rows(&need(dir.join("mkkm_metrics.csv"))?)?;
            cache.insert(label.clone(), [m, g]);
            let read = |name: &str| -> Result<HashMap<usize, f64>, GraphError> {
                Ok(read_coherence(&need(dir.join(name))?)?
                    .into_iter()
                    .map(|c| (c.cluster_id, c.coherence))
                    .collect())
            };
            coh_cache.insert(label.clone(), [read("mcl_coherence.csv")?, read("mkkm_coherence.csv")?]);
        }
        let [mm, gm] = &cache[&label];
        let [mc, gc] = &coh_cache[&label];
        let m = mm.iter().find(|r| r.cluster_id == m_id).ok_or_else(bad)?;
        let g = g_id.and_then(|g| gm.iter().find(|r| r.cluster_id == g));
        pairs += &format!(
            "{label}:m{m_id}-g{},{},{},{},{},{},{},{},{},{}\n",
            g_id.map(|g| g.to_string()).unwrap_or_default(),
            m.size,
            g.map(|g| g.size.to_string()).unwrap_or_default(),
            m.conductance,
            opt(g.map(|g| g.conductance)),
            opt(mc.get(&m_id).copied()),
            opt(g_id.and_then(|g| gc.get(&g).copied())),
            m.internal_edges,
            g.map(|g| g.internal_edges.to_string()).unwrap_or_default(),
            jc
        );
    }
    let pairs_path = out.join("reports").join("pairs.csv");
    fs::write(&pairs_path, pairs).map_err(|e| GraphError::io(&pairs_path, e))?;
    Ok((summary_path, pairs_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::read_communities;
    use crate::synthetic::write_toy;

    fn toy() -> (tempfile::TempDir, PipelineConfig) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_toy(&dir.path().join("toy")).unwrap();
        let config = PipelineConfig::load(&cfg).unwrap();
        (dir, config)
    }

    fn artifact_digests(m: &Manifest) -> Vec<(String, String)> {
        m.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
    }

    #[test]
    fn seeds_depend_on_label_and_master() {
        assert_eq!(derive_seed(1, "mkkm/a"), derive_seed(1, "mkkm/a"));
        assert_ne!(derive_seed(1, "mkkm/a"), derive_seed(1, "mkkm/b"));
        assert_ne!(derive_seed(1, "mkkm/a"), derive_seed(2, "mkkm/a"));
        // independent oracle: sha256 of 8 zero bytes starts af5570f5a1810b7a
        assert_eq!(
            derive_seed(0, ""),
            u64::from_le_bytes([0xaf, 0x55, 0x70, 0xf5, 0xa1, 0x81, 0x0b, 0x7a])
        );
    }

    #[test]
    fn k_choice_parses() {
        #[derive(Deserialize)]
        struct W {
            k: KChoice,
        }
        assert_eq!(toml::from_str::<W>("k = 4").unwrap().k, KChoice::Fixed(4));
        assert_eq!(toml::from_str::<W>("k = \"auto\"").unwrap().k, KChoice::Auto);
        assert!(toml::from_str::<W>("k = \"many\"").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "seed = 1\nslices = []\n[mcl]\ninflaton = 2.0\n").unwrap();
        assert!(matches!(PipelineConfig::load(&p), Err(PipelineError::Validation(_))));
    }

    #[test]
    fn missing_edge_file_fails_before_any_stage() {
        let (dir, mut config) = toy();
        config.slices[1].edges = dir.path().join("nope.tsv");
        let out = dir.path().join("out");
        let err = run_pipeline(&config, &out).unwrap_err();
        assert!(
            matches!(err, PipelineError::Validation(ref m) if m.contains("nope.tsv")),
            "{err}"
        );
        assert!(!out.exists());
    }

    #[test]
    fn refuses_foreign_output_dir() {
        let (dir, config) = toy();
        let out = dir.path().join("out");
        fs::create_dir_all(&out).unwrap();
        fs::write(out.join("keep.txt"), "mine").unwrap();
        assert!(matches!(run_pipeline(&config, &out), Err(PipelineError::Validation(_))));
        assert_eq!(fs::read_to_string(out.join("keep.txt")).unwrap(), "mine");
    }

    #[test]
    fn toy_run_accepts_both_planted_communities_and_is_repeatable() {
        let (dir, config) = toy();
        let out = dir.path().join("out");
        let first = run_pipeline(&config, &out).unwrap();
        assert_eq!(first.accepted, 2);
        assert_eq!(first.rejected, 0);

        let accepted = read_communities(&out.join("communities/accepted.jsonl")).unwrap();
        let mut sizes: Vec<usize> = accepted.iter().map(|c| c.profile.size).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [30, 30]);

        let paths: Vec<&str> = first.manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
        for expected in [
            "datasets/2019/mcl.tsv",
            "datasets/2020/mkkm_metrics.csv",
            "datasets/2020/mcl_vs_mkkm.csv",
            "combined/combined_to_slices.csv",
            "combined/mcl_coherence.csv",
            "selection/candidates.csv",
            "communities/accepted.jsonl",
            "communities/author_distribution.json",
            "shuffle/2019/report.json",
            "reports/summary.csv",
            "reports/pairs.csv",
            "reports/null_model.csv",
        ] {
            assert!(paths.contains(&expected), "manifest lacks {expected}");
        }
        assert!(!paths.contains(&MANIFEST));
        assert_eq!(first.manifest.inputs.len(), 3);

        let t1 = fs::read_to_string(out.join("reports/summary.csv")).unwrap();
        let lines: Vec<&str> = t1.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(labels, ["2019", "2020", COMBINED]);
        let t3 = fs::read_to_string(out.join("reports/pairs.csv")).unwrap();
        assert_eq!(t3.lines().next(), Some(PAIRS_HEADER));
        assert_eq!(t3.lines().count(), 3);

        let second = run_pipeline(&config, &out).unwrap();
        assert_eq!(artifact_digests(&first.manifest), artifact_digests(&second.manifest));
        assert_eq!(first.manifest.seeds, second.manifest.seeds);
    }

    #[test]
    fn empty_selection_gives_header_only_table() {
        let (dir, mut config) = toy();
        config.selection.min_size = 31;
        config.shuffle = None;
        let out = dir.path().join("out");
        let s = run_pipeline(&config, &out).unwrap();
        assert_eq!(s.selected, 0);
        let t3 = fs::read_to_string(out.join("reports/pairs.csv")).unwrap();
        assert_eq!(t3, format!("{PAIRS_HEADER}\n"));
    }

    #[test]
    fn report_names_missing_artifact() {
        let (dir, config) = toy();
        let out = dir.path().join("out");
        run_pipeline(&config, &out).unwrap();
        fs::remove_file(out.join("datasets/2020/mcl_coherence.csv")).unwrap();
        let err = report_tables(&out).unwrap_err().to_string();
        assert!(err.contains("mcl_coherence.csv"), "{err}");
    }

    #[test]
    fn stage_failure_quarantines_partial_output() {
        let (dir, mut config) = toy();
        let stop = dir.path().join("stop.txt");
        fs::write(&stop, "x\n").unwrap();
        config.coherence.stoplist = Some(stop);
        let bad = dir.path().join("bad.tsv");
        fs::write(&bad, "only-one-column\n").unwrap();
        config.slices[1].edges = bad;
        let out = dir.path().join("out");
        let err = run_pipeline(&config, &out).unwrap_err();
        assert!(
            matches!(err, PipelineError::Stage { ref stage, .. } if stage == "ingest"),
            "{err}"
        );
        assert!(out.join(FAILED).is_dir());
        // a failed run may be replaced by a new one
        config.slices[1].edges = dir.path().join("toy/edges_2020.tsv");
        run_pipeline(&config, &out).unwrap();
        assert!(!out.join(FAILED).exists());
    }
}
