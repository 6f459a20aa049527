use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use citecomm::clustering::{Clustering, NamedClusters};
use citecomm::coherence::{save_coherence, CoherenceScorer, DEFAULT_REPS};
use citecomm::community::{
    author_cluster_distribution, build_profile, classify_edge_case, filter_communities, save_jsonl, Community,
    EdgeCaseThresholds,
};
use citecomm::graph::{load_edges, load_metadata, write_metadata, CitationGraph, Dataset};
use citecomm::matching::{match_all, save_matches};
use citecomm::mcl::{mcl_cluster, MclParams};
use citecomm::metrics::metrics_table;
use citecomm::mkkm::{choose_k, mkkm_cluster, MkkmParams};
use citecomm::pipeline::{report_tables, run_pipeline, score_clusters, PipelineConfig, PipelineError};
use citecomm::shuffle::shuffle_citations;
use citecomm::text::{StopList, TextCorpus};

/// Citation-graph community detection, one stage at a time or end to end.
#[derive(Debug, Parser)]
#[command(name = "citecomm", version)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read an edge list and optional metadata, write the normalized copies.
    Ingest(IngestArgs),
    /// Markov clustering of a citation graph.
    ClusterMcl(MclArgs),
    /// Multilevel kernel k-means partition of a citation graph.
    ClusterMkkm(MkkmArgs),
    /// Size, internal edges, cut and conductance per cluster.
    Metrics(MetricsArgs),
    /// Text coherence per cluster against a random baseline.
    Coherence(CoherenceArgs),
    /// Best Jaccard match of every source cluster among target clusterings.
    Match(MatchArgs),
    /// Degree-preserving edge swaps; prints the swap report as JSON.
    Shuffle(ShuffleArgs),
    /// Edge-case labels and author profiles for chosen clusters.
    Communities(CommunityArgs),
    /// Run every stage from a TOML config.
    Pipeline(PipelineArgs),
    /// Rebuild the summary tables of a finished run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    label: String,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Directory for edges.tsv, metadata.jsonl and ingest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MclArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "dataset")]
    label: String,
    #[arg(long, default_value_t = 2.0)]
    inflation: f64,
    #[arg(long, default_value_t = 2)]
    expansion: u32,
    #[arg(long, default_value_t = 1e-4)]
    prune_threshold: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

#[derive(Debug, Args)]
struct MkkmArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "dataset")]
    label: String,
    /// Number of clusters.
    #[arg(long, required_unless_present = "auto_from", conflicts_with = "auto_from")]
    k: Option<usize>,
    /// Take k as half the cluster count of this MCL clustering.
    #[arg(long)]
    auto_from: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    coarsen_until: Option<usize>,
    #[arg(long)]
    refine_iterations: Option<usize>,
    #[arg(long)]
    base_trials: Option<usize>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CoherenceArgs {
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    /// Replacement for the built-in stop-word list.
    #[arg(long)]
    stoplist: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long, default_value = "source")]
    source_label: String,
    /// LABEL=PATH of a target clustering; repeat for several.
    #[arg(long = "target", required = true, value_parser = parse_target)]
    targets: Vec<(String, PathBuf)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ShuffleArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    swaps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the rewired edge list here.
    #[arg(long)]
    out_edges: Option<PathBuf>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CommunityArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long, default_value = "dataset")]
    label: String,
    /// Cluster id to profile; repeat for several. Default: every cluster.
    #[arg(long = "cluster")]
    cluster_ids: Vec<usize>,
    #[arg(long, default_value_t = EdgeCaseThresholds::default().external_threshold)]
    external_threshold: usize,
    #[arg(long, default_value_t = EdgeCaseThresholds::default().hub_fraction)]
    hub_fraction: f64,
    /// Directory for accepted.jsonl, rejected.jsonl and author_distribution.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, env = "CITECOMM_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory of a finished pipeline run.
    #[arg(long, env = "CITECOMM_OUT")]
    run: PathBuf,
}

fn parse_target(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected LABEL=PATH, got {s:?}")),
    }
}

/// Exit 1 for bad input, 2 for a failure while a stage runs.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Stage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Stage(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Stage(m) => write!(f, "{m}"),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Validation(_) => Failure::Validation(e.to_string()),
            PipelineError::Stage { .. } => Failure::Stage(e.to_string()),
        }
    }
}

fn stage(name: &'static str) -> impl Fn(citecomm::graph::GraphError) -> Failure {
    move |e| Failure::Stage(format!("stage {name} failed: {e}"))
}

fn require(paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        if !p.is_file() {
            return Err(Failure::Validation(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}

fn ensure_parent(p: &Path) -> Result<(), Failure> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => {
            std::fs::create_dir_all(d).map_err(|e| Failure::Stage(format!("cannot create {}: {e}", d.display())))
        }
        _ => Ok(()),
    }
}

fn graph_from(path: &Path, name: &'static str) -> Result<CitationGraph, Failure> {
    Ok(load_edges(path).map_err(stage(name))?.0)
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    require(&[&a.edges])?;
    if let Some(m) = &a.metadata {
        require(&[m])?;
    }
    let (graph, stats) = load_edges(&a.edges).map_err(stage("ingest"))?;
    let records = match &a.metadata {
        Some(m) => load_metadata(m).map_err(stage("ingest"))?,
        None => Vec::new(),
    };
    let ds = Dataset::assemble(a.label.clone(), graph, records).map_err(stage("ingest"))?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Stage(format!("cannot create {}: {e}", a.out.display())))?;
    ds.graph.write_tsv(&a.out.join("edges.tsv")).map_err(stage("ingest"))?;
    let with_meta: Vec<_> = ds.metadata_records().cloned().collect();
    write_metadata(&a.out.join("metadata.jsonl"), &with_meta).map_err(stage("ingest"))?;
    let summary = serde_json::json!({
        "label": ds.label,
        "nodes": ds.graph.node_count(),
        "edges": ds.graph.edge_count(),
        "with_metadata": with_meta.len(),
        "stats": stats,
    });
    let body = serde_json::to_string_pretty(&summary).expect("summary serializes");
    let p = a.out.join("ingest.json");
    std::fs::write(&p, body.clone() + "\n")
        .map_err(|e| Failure::Stage(format!("cannot write {}: {e}", p.display())))?;
    println!("{body}");
    Ok(())
}

fn cluster_mcl(a: MclArgs) -> Result<(), Failure> {
    require(&[&a.edges])?;
    if a.expansion < 2 || a.inflation <= 1.0 {
        return Err(Failure::Validation("need --expansion >= 2 and --inflation > 1".into()));
    }
    let graph = graph_from(&a.edges, "cluster-mcl")?;
    let params = MclParams {
        expansion: a.expansion,
        inflation: a.inflation,
        prune_threshold: a.prune_threshold,
        max_iterations: a.max_iterations,
        ..MclParams::default()
    };
    let c = mcl_cluster(&graph, &params, &a.label);
    info!("{} clusters", c.len());
    ensure_parent(&a.out)?;
    c.save(&graph, &a.out).map_err(stage("cluster-mcl"))
}

fn cluster_mkkm(a: MkkmArgs) -> Result<(), Failure> {
    require(&[&a.edges])?;
    if let Some(p) = &a.auto_from {
        require(&[p])?;
    }
    let graph = graph_from(&a.edges, "cluster-mkkm")?;
    let k = match (a.k, &a.auto_from) {
        (Some(0), _) => return Err(Failure::Validation("--k must be at least 1".into())),
        (Some(k), _) => k,
        (None, Some(p)) => choose_k(&Clustering::load(p, &graph).map_err(stage("cluster-mkkm"))?),
        (None, None) => unreachable!("clap requires --k or --auto-from"),
    };
    let mut params = MkkmParams::new(k, a.seed);
    params.coarsen_until = a.coarsen_until;
    if let Some(r) = a.refine_iterations {
        params.refine_iterations = r;
    }
    if let Some(t) = a.base_trials {
        params.base_trials = t;
    }
    let c = mkkm_cluster(&graph, &params, &a.label);
    ensure_parent(&a.out)?;
    c.save(&graph, &a.out).map_err(stage("cluster-mkkm"))
}

fn metrics(a: MetricsArgs) -> Result<(), Failure> {
    require(&[&a.edges, &a.clusters])?;
    let graph = graph_from(&a.edges, "metrics")?;
    let c = Clustering::load(&a.clusters, &graph).map_err(stage("metrics"))?;
    let table = metrics_table(&graph, &c);
    ensure_parent(&a.out)?;
    table.save(&a.out).map_err(stage("metrics"))
}

fn coherence(a: CoherenceArgs) -> Result<(), Failure> {
    require(&[&a.clusters, &a.metadata])?;
    if a.reps == 0 {
        return Err(Failure::Validation("--reps must be at least 1".into()));
    }
    let stop = match &a.stoplist {
        Some(p) => {
            require(&[p])?;
            StopList::load(p).map_err(stage("coherence"))?
        }
        None => StopList::default(),
    };
    let named = NamedClusters::read_tsv(&a.clusters, "clusters").map_err(stage("coherence"))?;
    let records = load_metadata(&a.metadata).map_err(stage("coherence"))?;
    let corpus = TextCorpus::build(records.iter(), &stop);
    let scorer = CoherenceScorer::new(&corpus, a.reps, a.seed);
    let rows = score_clusters(&scorer, &named).map_err(|e| Failure::Stage(format!("stage coherence failed: {e}")))?;
    info!("scored {} of {} clusters", rows.len(), named.clusters.len());
    ensure_parent(&a.out)?;
    save_coherence(&a.out, &rows).map_err(stage("coherence"))
}

fn matching(a: MatchArgs) -> Result<(), Failure> {
    require(&[&a.source])?;
    for (_, p) in &a.targets {
        require(&[p])?;
    }
    let source = NamedClusters::read_tsv(&a.source, &a.source_label).map_err(stage("match"))?;
    let targets = a
        .targets
        .iter()
        .map(|(label, p)| NamedClusters::read_tsv(p, label))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage("match"))?;
    let refs: Vec<&NamedClusters> = targets.iter().collect();
    let matches = match_all(&source, &refs);
    ensure_parent(&a.out)?;
    save_matches(&a.out, &matches).map_err(stage("match"))
}

fn shuffle(a: ShuffleArgs) -> Result<(), Failure> {
    require(&[&a.edges])?;
    let graph = graph_from(&a.edges, "shuffle")?;
    let (g, report) = shuffle_citations(&graph, a.swaps, a.seed);
    if let Some(p) = &a.out_edges {
        ensure_parent(p)?;
        g.write_tsv(p).map_err(stage("shuffle"))?;
    }
    if let Some(p) = &a.report {
        ensure_parent(p)?;
        report.write_json(p).map_err(stage("shuffle"))?;
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn communities(a: CommunityArgs) -> Result<(), Failure> {
    require(&[&a.edges, &a.clusters])?;
    if let Some(m) = &a.metadata {
        require(&[m])?;
    }
    let graph = graph_from(&a.edges, "communities")?;
    let records = match &a.metadata {
        Some(m) => load_metadata(m).map_err(stage("communities"))?,
        None => Vec::new(),
    };
    let ds = Dataset::assemble(a.label.clone(), graph, records).map_err(stage("communities"))?;
    let c = Clustering::load(&a.clusters, &ds.graph).map_err(stage("communities"))?;
    let ids: Vec<usize> = if a.cluster_ids.is_empty() {
        (0..c.len()).collect()
    } else {
        a.cluster_ids.clone()
    };
    if let Some(bad) = ids.iter().find(|&&id| id >= c.len()) {
        return Err(Failure::Validation(format!(
            "no cluster {bad} (clustering has {})",
            c.len()
        )));
    }
    let thresholds = EdgeCaseThresholds {
        external_threshold: a.external_threshold,
        hub_fraction: a.hub_fraction,
    };
    let all: Vec<Community> = ids
        .iter()
        .map(|&id| Community {
            dataset: ds.label.clone(),
            profile: build_profile(id, c.cluster(id), &ds),
            edge_case: classify_edge_case(&ds.graph, c.cluster(id), &thresholds),
        })
        .collect();
    let (accepted, rejected) = filter_communities(all);
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Stage(format!("cannot create {}: {e}", a.out.display())))?;
    save_jsonl(&a.out.join("accepted.jsonl"), &accepted).map_err(stage("communities"))?;
    save_jsonl(&a.out.join("rejected.jsonl"), &rejected).map_err(stage("communities"))?;
    let members: Vec<Vec<usize>> = accepted
        .iter()
        .map(|x| c.cluster(x.profile.cluster_id).to_vec())
        .collect();
    let dist = author_cluster_distribution(&members, &ds);
    let p = a.out.join("author_distribution.json");
    let body = serde_json::to_string_pretty(&dist).expect("distribution serializes");
    std::fs::write(&p, body + "\n").map_err(|e| Failure::Stage(format!("cannot write {}: {e}", p.display())))?;
    println!("accepted {} rejected {}", accepted.len(), rejected.len());
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<(), Failure> {
    let config = PipelineConfig::load(&a.config)?;
    let out = a
        .out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Failure::Validation("no output directory: pass --out, set output_dir or CITECOMM_OUT".into()))?;
    let summary = run_pipeline(&config, &out)?;
    println!(
        "{}: {} selected, {} accepted, {} rejected, {} artifacts",
        summary.output_dir.display(),
        summary.selected,
        summary.accepted,
        summary.rejected,
        summary.manifest.artifacts.len()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    if !a.run.is_dir() {
        return Err(Failure::Validation(format!("{} is not a directory", a.run.display())));
    }
    let (summary, pairs) = report_tables(&a.run).map_err(stage("report"))?;
    println!("{}\n{}", summary.display(), pairs.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage problems are input errors; help and version are not errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::ClusterMcl(a) => cluster_mcl(a),
        Command::ClusterMkkm(a) => cluster_mkkm(a),
        Command::Metrics(a) => metrics(a),
        Command::Coherence(a) => coherence(a),
        Command::Match(a) => matching(a),
        Command::Shuffle(a) => shuffle(a),
        Command::Communities(a) => communities(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
