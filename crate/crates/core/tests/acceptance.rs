//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use citecomm::coherence::{jsd, CoherenceScorer, TermVector};
use citecomm::community::{classify_edge_case, EdgeCaseLabel, EdgeCaseThresholds};
use citecomm::matching::{adjusted_rand_index, match_all, select_candidates, ClusterMatch, SelectionCriteria};
use citecomm::mcl::{build_transition_matrix, mcl_cluster, mcl_cluster_observed, MclParams};
use citecomm::metrics::{conductance, mean, median, metrics_table, ClusterMetrics};
use citecomm::mkkm::{mkkm_cluster, MkkmParams};
use citecomm::pipeline::{read_manifest, run_pipeline, score_clusters, PipelineConfig, PAIRS_HEADER, SUMMARY_HEADER};
use citecomm::shuffle::shuffle_citations;
use citecomm::synthetic::{records_for, topic_corpus, write_toy, PlantedPartition, RecordSpec, TopicText};
use citecomm::text::{StopList, TextCorpus};
use citecomm::{CitationGraph, Dataset, ExactRatio, NamedCluster, NamedClusters};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const PLANTED: PlantedPartition = PlantedPartition {
    blocks: 10,
    block_size: 50,
    p_in: 0.3,
    p_out: 0.005,
};
const PLANTED_SEED: u64 = 42;

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t < limit {
        Ok(t)
    } else {
        Err(format!("took {t:.2?}, limit {limit:?}"))
    }
}

fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> CitationGraph {
    let n = rng.gen_range(2..=max_nodes);
    let p: f64 = rng.gen_range(0.05..0.6);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    CitationGraph::from_index_edges(n, &edges)
}

fn oracle_graphs() -> Vec<CitationGraph> {
    (0..200u64)
        .map(|s| random_graph(&mut ChaCha8Rng::seed_from_u64(1000 + s), 12))
        .collect()
}

fn connected(n: usize, pairs: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in pairs {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Every column sums to one within 1e-12 after every step, and the result
/// partitions the nodes.
fn mcl_is_sound(g: &CitationGraph) -> bool {
    let mut ok = build_transition_matrix::<f64>(g).is_column_stochastic(1e-12);
    let c = mcl_cluster_observed::<f64, _>(g, &MclParams::default(), "oracle", |_, _, m| {
        ok &= m.is_column_stochastic(1e-12);
    });
    ok && c.is_partition_of(g.node_count())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut small = Vec::new();
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let chosen: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            if connected(n, &chosen) {
                small.push((n, chosen));
            }
        }
    }
    let bad = AtomicUsize::new(0);
    small.par_iter().for_each(|(n, e)| {
        if !mcl_is_sound(&CitationGraph::from_index_edges(*n, e)) {
            bad.fetch_add(1, Ordering::Relaxed);
        }
    });
    let random = oracle_graphs();
    random.par_iter().for_each(|g| {
        if !mcl_is_sound(g) {
            bad.fetch_add(1, Ordering::Relaxed);
        }
    });
    let bad = bad.into_inner();
    if bad > 0 {
        return Err(format!("{bad} graphs broke stochasticity or partition"));
    }
    for k in 3..=6usize {
        let mut edges = Vec::new();
        for base in [0, k] {
            for u in 0..k {
                for v in u + 1..k {
                    edges.push((base + u, base + v));
                }
            }
        }
        let c = mcl_cluster(
            &CitationGraph::from_index_edges(2 * k, &edges),
            &MclParams::default(),
            "cliques",
        );
        let want: Vec<Vec<usize>> = vec![(0..k).collect(), (k..2 * k).collect()];
        let mut got: Vec<Vec<usize>> = c.clusters().to_vec();
        got.sort();
        if got != want {
            return Err(format!("two {k}-cliques gave {got:?}"));
        }
    }
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "{} connected graphs (n<=6) + {} random graphs sound, clique pairs split in 2, {t:.2?}",
        small.len(),
        random.len()
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let pg = PLANTED.generate(PLANTED_SEED);
    let n = pg.graph.node_count();
    let flat =
        |c: &citecomm::Clustering| -> Vec<usize> { c.labels(n).into_iter().map(|l| l.expect("partition")).collect() };
    let m = mcl_cluster(&pg.graph, &MclParams::with_inflation(2.0), "planted");
    let g = mkkm_cluster(&pg.graph, &MkkmParams::new(10, PLANTED_SEED), "planted");
    let ari_m = adjusted_rand_index(&flat(&m), &pg.truth);
    let ari_g = adjusted_rand_index(&flat(&g), &pg.truth);
    let matches = match_all(&m.named(&pg.graph, "mcl"), &[&g.named(&pg.graph, "mkkm")]);
    let good = matches.iter().filter(|x| x.jaccard > 0.9).count();
    let share = good as f64 / matches.len() as f64;
    let t = within(Duration::from_secs(60), start)?;
    let detail = format!(
        "ARI mcl {ari_m:.4}, mkkm {ari_g:.4}; {good}/{} MCL clusters with jc > 0.9; {t:.2?}",
        matches.len()
    );
    if ari_m >= 0.9 && ari_g >= 0.9 && share >= 0.8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Cut over min volume from a plain undirected edge set.
fn brute_conductance(n: usize, pairs: &BTreeSet<(usize, usize)>, inside: &[bool]) -> Ratio<u64> {
    let mut deg = vec![0u64; n];
    let mut cut = 0u64;
    for &(u, v) in pairs {
        deg[u] += 1;
        deg[v] += 1;
        if inside[u] != inside[v] {
            cut += 1;
        }
    }
    if cut == 0 {
        return Ratio::from_integer(0);
    }
    let vs: u64 = (0..n).filter(|&u| inside[u]).map(|u| deg[u]).sum();
    let vr: u64 = deg.iter().sum::<u64>() - vs;
    Ratio::new(cut, vs.min(vr))
}

fn criterion_3() -> Outcome {
    let graphs = oracle_graphs();
    let checked = AtomicUsize::new(0);
    let failures: Vec<String> = graphs
        .par_iter()
        .enumerate()
        .filter_map(|(gi, g)| {
            let n = g.node_count();
            let pairs: BTreeSet<(usize, usize)> = g.edges().map(|(u, v)| (u.min(v), u.max(v))).collect();
            for mask in 1u32..(1 << n) - 1 {
                let inside: Vec<bool> = (0..n).map(|u| mask >> u & 1 == 1).collect();
                let members: Vec<usize> = (0..n).filter(|&u| inside[u]).collect();
                let want = brute_conductance(n, &pairs, &inside);
                let got: ExactRatio = match conductance(g, &members) {
                    Ok(c) => c,
                    Err(e) => return Some(format!("graph {gi} set {members:?}: {e}")),
                };
                if got != want {
                    return Some(format!("graph {gi} set {members:?}: {got} vs brute {want}"));
                }
                let internal = pairs.iter().any(|&(u, v)| inside[u] && inside[v]);
                let cut = pairs.iter().any(|&(u, v)| inside[u] != inside[v]);
                if cut && !internal {
                    let f: f64 = conductance(g, &members).unwrap();
                    if f != 1.0 || got != Ratio::from_integer(1) {
                        return Some(format!("graph {gi} set {members:?}: no internal edges but {f}"));
                    }
                }
                checked.fetch_add(1, Ordering::Relaxed);
            }
            let all: Vec<usize> = (0..n).collect();
            if conductance::<f64>(g, &all).is_ok() || conductance::<f64>(g, &[]).is_ok() {
                return Some(format!("graph {gi}: empty or full set accepted"));
            }
            None
        })
        .collect();
    match failures.first() {
        Some(f) => Err(f.clone()),
        None => Ok(format!(
            "{} subsets of {} graphs match brute force exactly",
            checked.into_inner(),
            graphs.len()
        )),
    }
}

fn criterion_4() -> Outcome {
    let p = TermVector::from_counts([(0, 3), (1, 1), (4, 2)]);
    let q = TermVector::from_counts([(7, 5), (8, 1)]);
    let a = TermVector::from_counts([(0, 1)]);
    let b = TermVector::from_counts([(0, 1), (1, 1)]);
    let same: f64 = jsd(&p, &p).map_err(|e| e.to_string())?;
    let disjoint: f64 = jsd(&p, &q).map_err(|e| e.to_string())?;
    let asym: f64 = jsd(&a, &b).map_err(|e| e.to_string())?;
    // m = (0.75, 0.25): KL(a,m) = log2(4/3), KL(b,m) = 0.5 log2(2/3) + 0.5
    let oracle = 0.5 * (4.0f64 / 3.0).log2() + 0.5 * (0.5 * (2.0f64 / 3.0).log2() + 0.5);
    let detail = format!("jsd(p,p) = {same:e}, disjoint = {disjoint}, asymmetric = {asym:.6} (oracle {oracle:.6})");
    if same.abs() <= 1e-12
        && (disjoint - 1.0).abs() <= 1e-12
        && (asym - oracle).abs() <= 1e-4
        && (asym - 0.3113).abs() <= 1e-4
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct GraphProfile {
    median_cond: Option<f64>,
    in_range: usize,
    largest: usize,
    mean_coh: Option<f64>,
}

fn profile(g: &CitationGraph, records: &[citecomm::PubRecord], scorer: &CoherenceScorer<'_>) -> GraphProfile {
    let c = mcl_cluster(g, &MclParams::with_inflation(2.0), "fig3");
    let table = metrics_table(g, &c);
    let mut conds: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| (5..=350).contains(&r.size))
        .map(|r| r.conductance)
        .collect();
    let ds = Dataset::assemble("fig3", g.clone(), records.to_vec()).expect("records match graph");
    let coh = score_clusters(scorer, &c.named(&ds.graph, "fig3")).expect("coherence runs");
    let cohs: Vec<f64> = coh.iter().map(|r| r.coherence).collect();
    GraphProfile {
        in_range: conds.len(),
        median_cond: (!conds.is_empty()).then(|| median(&mut conds)),
        largest: c.sizes().into_iter().max().unwrap_or(0),
        mean_coh: (!cohs.is_empty()).then(|| mean(&cohs)),
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let pg = PLANTED.generate(PLANTED_SEED);
    let records = records_for(&pg.graph, &pg.truth, &RecordSpec::default(), PLANTED_SEED);
    let corpus = TextCorpus::build(records.iter(), &StopList::default());
    let swaps = 10 * pg.graph.edge_count() as u64;
    let mut agree = 0;
    let mut notes = BTreeMap::new();
    let mut orig_line = String::new();
    for seed in 0..20u64 {
        let scorer = CoherenceScorer::new(&corpus, 50, seed);
        let orig = profile(&pg.graph, &records, &scorer);
        let (shuffled, _) = shuffle_citations(&pg.graph, swaps, seed);
        let sh = profile(&shuffled, &records, &scorer);
        if seed == 0 {
            orig_line = format!(
                "original: {} clusters in 5..=350, median cond {:.3}, mean coh {:.3}",
                orig.in_range,
                orig.median_cond.unwrap_or(f64::NAN),
                orig.mean_coh.unwrap_or(f64::NAN)
            );
        }
        let cond_ok = matches!((orig.median_cond, sh.median_cond), (Some(o), Some(s)) if s - o >= 0.2);
        let coh_ok = matches!((orig.mean_coh, sh.mean_coh), (Some(o), Some(s)) if o > s);
        if cond_ok && coh_ok {
            agree += 1;
        }
        let note = match (sh.median_cond, sh.mean_coh) {
            (None, _) => format!("no shuffled MCL cluster in 5..=350 (largest {})", sh.largest),
            (_, None) => "no shuffled cluster large enough to score coherence".to_string(),
            (Some(c), Some(h)) => format!("shuffled median cond {c:.3}, mean coh {h:.3}"),
        };
        *notes.entry(note).or_insert(0) += 1;
    }
    let t = within(Duration::from_secs(600), start)?;
    let summary: Vec<String> = notes.into_iter().map(|(n, k)| format!("{k}x {n}")).collect();
    let detail = format!("{agree}/20 seeds agree; {orig_line}; {}; {t:.2?}", summary.join(", "));
    if agree >= 18 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn degree_multisets(g: &CitationGraph) -> (Vec<usize>, Vec<usize>) {
    let n = g.node_count();
    let mut i: Vec<usize> = (0..n).map(|u| g.in_degree(u)).collect();
    let mut o: Vec<usize> = (0..n).map(|u| g.out_degree(u)).collect();
    i.sort_unstable();
    o.sort_unstable();
    (i, o)
}

fn criterion_6() -> Outcome {
    let families: Vec<(&str, CitationGraph)> = vec![
        ("planted", PLANTED.generate(7).graph),
        ("random", random_graph(&mut ChaCha8Rng::seed_from_u64(8), 80)),
        ("hub", {
            // preferential attachment: later papers cite earlier, popular ones
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut targets = vec![0usize];
            let mut edges = Vec::new();
            for u in 1..300 {
                for _ in 0..3 {
                    let v = *targets.choose(&mut rng).unwrap();
                    edges.push((u, v));
                    targets.push(v);
                }
                targets.push(u);
            }
            CitationGraph::from_index_edges(300, &edges)
        }),
    ];
    let mut runs = 0;
    for (name, g) in &families {
        let before = degree_multisets(g);
        for seed in 0..20u64 {
            let (h, r) = shuffle_citations(g, 10 * g.edge_count() as u64, seed);
            let edges: Vec<(usize, usize)> = h.edges().collect();
            let distinct: HashSet<(usize, usize)> = edges.iter().copied().collect();
            if degree_multisets(&h) != before {
                return Err(format!("{name} seed {seed}: degree multiset changed"));
            }
            if (0..g.node_count()).any(|u| h.in_degree(u) != g.in_degree(u) || h.out_degree(u) != g.out_degree(u)) {
                return Err(format!("{name} seed {seed}: a node's degree changed"));
            }
            if edges.iter().any(|&(u, v)| u == v) || distinct.len() != edges.len() || edges.len() != g.edge_count() {
                return Err(format!("{name} seed {seed}: self-loop or duplicate edge"));
            }
            if r.performed_swaps == 0 {
                return Err(format!("{name} seed {seed}: nothing was swapped"));
            }
            runs += 1;
        }
    }
    Ok(format!(
        "{runs} shuffles over {} families preserve degrees exactly, no loops or duplicates",
        families.len()
    ))
}

fn criterion_7() -> Outcome {
    let text = TopicText::default();
    let records = topic_corpus(10, 60, &text, 77);
    let corpus = TextCorpus::build(records.iter(), &StopList::default());
    let ids: Vec<String> = records.iter().map(|r| r.pub_id.clone()).collect();
    let size = 30;

    // uniformly drawn clusters: their mean coherence sits at the baseline
    let scorer = CoherenceScorer::new(&corpus, 50, 5);
    let se = scorer.baseline(size).map_err(|e| e.to_string())?.std_err;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cohs = Vec::new();
    for i in 0..200 {
        let pick: Vec<&String> = ids.choose_multiple(&mut rng, size).collect();
        cohs.push(scorer.score(i, &pick).map_err(|e| e.to_string())?.coherence);
    }
    let m = mean(&cohs);
    if m.abs() >= 3.0 * se {
        return Err(format!(
            "random clusters: mean coherence {m:.5} vs 3 SE = {:.5}",
            3.0 * se
        ));
    }

    // single-topic clusters beat the baseline for every seed
    let mut pure_ok = 0;
    for seed in 0..20u64 {
        let recs = topic_corpus(10, 60, &text, 100 + seed);
        let corpus = TextCorpus::build(recs.iter(), &StopList::default());
        let scorer = CoherenceScorer::new(&corpus, 50, seed);
        let topic = (seed % 10) as usize;
        let pure: Vec<&String> = recs[topic * 60..topic * 60 + size].iter().map(|r| &r.pub_id).collect();
        if scorer.score(0, &pure).map_err(|e| e.to_string())?.coherence > 0.0 {
            pure_ok += 1;
        }
    }
    let detail = format!(
        "random clusters mean coherence {m:.5} (|.| < 3 SE = {:.5}); pure clusters positive in {pure_ok}/20 seeds",
        3.0 * se
    );
    if pure_ok == 20 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_named(rng: &mut ChaCha8Rng, label: &str, universe: &[String]) -> NamedClusters {
    let k = rng.gen_range(1..=6);
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for id in universe {
        // some ids are left out so that sources can miss every target
        if rng.gen::<f64>() < 0.85 {
            groups.entry(rng.gen_range(0..k)).or_default().push(id.clone());
        }
    }
    NamedClusters {
        label: label.to_string(),
        clusters: groups
            .into_values()
            .enumerate()
            .map(|(i, members)| NamedCluster { id: i * 3 + 1, members })
            .collect(),
    }
}

/// Scan every target cluster; keep the largest intersection, then Jaccard,
/// then the earliest target and lowest id.
fn exhaustive_best(source: &[String], targets: &[&NamedClusters]) -> Option<(String, usize, usize, f64)> {
    let s: HashSet<&String> = source.iter().collect();
    let mut best: Option<(String, usize, usize, f64)> = None;
    for t in targets {
        for c in &t.clusters {
            let tc: HashSet<&String> = c.members.iter().collect();
            let inter = s.intersection(&tc).count();
            if inter == 0 {
                continue;
            }
            let jc = inter as f64 / (s.len() + tc.len() - inter) as f64;
            let better = match &best {
                None => true,
                Some((_, _, bi, bj)) => inter > *bi || (inter == *bi && jc > *bj),
            };
            if better {
                best = Some((t.label.clone(), c.id, inter, jc));
            }
        }
    }
    best
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut compared = 0;
    for case in 0..300 {
        let n = rng.gen_range(1..=20);
        let universe: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let source = random_named(&mut rng, "src", &universe);
        let t1 = random_named(&mut rng, "t1", &universe);
        let t2 = random_named(&mut rng, "t2", &universe);
        let targets: Vec<&NamedClusters> = if case % 2 == 0 { vec![&t1] } else { vec![&t1, &t2] };
        let got = match_all(&source, &targets);
        for (m, c) in got.iter().zip(&source.clusters) {
            let want = exhaustive_best(&c.members, &targets);
            let ok = match &want {
                None => m.target_cluster_id.is_none() && m.intersection == 0 && m.jaccard == 0.0,
                Some((label, id, inter, jc)) => {
                    m.target_label == *label
                        && m.target_cluster_id == Some(*id)
                        && m.intersection == *inter
                        && m.jaccard == *jc
                }
            };
            if !ok || m.source_cluster_id != c.id {
                return Err(format!(
                    "case {case}: cluster {} matched {m:?}, exhaustive {want:?}",
                    c.id
                ));
            }
            compared += 1;
        }
    }

    let rows = prop::collection::vec((1usize..400, 0.0f64..=1.0, 0.0f64..=1.0), 0..40);
    let base = (0usize..100, 100usize..400, 0.0f64..=1.0, 0.0f64..=1.0);
    let tighten = (0usize..50, 0usize..50, 0.0f64..=0.5, 0.0f64..=0.5);
    let mut runner = TestRunner::new(Config {
        cases: 500,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(
        &(rows, base, tighten),
        |(rows, (lo, hi, cond, jc), (dlo, dhi, dc, dj))| {
            let metrics: Vec<ClusterMetrics> = rows
                .iter()
                .enumerate()
                .map(|(i, &(size, c, _))| ClusterMetrics {
                    cluster_id: i,
                    size,
                    internal_edges: 0,
                    cut_edges: 0,
                    conductance: c,
                })
                .collect();
            let matches: Vec<ClusterMatch> = rows
                .iter()
                .enumerate()
                .map(|(i, &(size, _, j))| ClusterMatch {
                    source_cluster_id: i,
                    target_label: "t".into(),
                    target_cluster_id: Some(i),
                    source_size: size,
                    target_size: size,
                    intersection: 0,
                    jaccard: j,
                    proportion: 0.0,
                })
                .collect();
            let loose = SelectionCriteria {
                min_size: lo,
                max_size: hi,
                max_conductance: cond,
                min_jaccard: jc,
            };
            let tight = SelectionCriteria {
                min_size: lo + dlo,
                max_size: (hi - dhi).max(lo + dlo),
                max_conductance: cond - dc,
                min_jaccard: jc + dj,
            };
            let a: BTreeSet<usize> = select_candidates(&metrics, &matches, &loose).into_iter().collect();
            let b: BTreeSet<usize> = select_candidates(&metrics, &matches, &tight).into_iter().collect();
            prop_assert!(
                b.is_subset(&a),
                "tightening added {:?}",
                b.difference(&a).collect::<Vec<_>>()
            );
            Ok(())
        },
    );
    result.map_err(|e| format!("select_candidates not monotone: {e}"))?;
    Ok(format!(
        "{compared} best matches equal exhaustive search; selection monotone over 500 random cases"
    ))
}

fn criterion_9() -> Outcome {
    let t = EdgeCaseThresholds::default();
    // singleton citing 351 outside papers
    let single = CitationGraph::from_index_edges(352, &(1..352).map(|v| (0, v)).collect::<Vec<_>>());
    // 125 members; member 0 cites 123 of the other 124
    let mut e125: Vec<(usize, usize)> = (1..124).map(|v| (0, v)).collect();
    e125.extend((1..124).map(|v| (v, v + 1)));
    let hub_citing = CitationGraph::from_index_edges(125, &e125);
    // 108 members; member 0 is cited by the other 107
    let hub_cited = CitationGraph::from_index_edges(108, &(1..108).map(|v| (v, 0)).collect::<Vec<_>>());

    let a = classify_edge_case(&single, &[0], &t);
    let b = classify_edge_case(&hub_citing, &(0..125).collect::<Vec<_>>(), &t);
    let c = classify_edge_case(&hub_cited, &(0..108).collect::<Vec<_>>(), &t);
    let ok = matches!(a, EdgeCaseLabel::SingletonHighExternal { external_edges: 351 })
        && matches!(b, EdgeCaseLabel::HubCiting { cites: 123, .. })
        && matches!(c, EdgeCaseLabel::HubCited { cited_by: 107, .. });
    let detail = format!("{}, {}, {}", a.name(), b.name(), c.name());
    if ok {
        Ok(detail)
    } else {
        Err(format!("{detail}: {a:?} {b:?} {c:?}"))
    }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_toy(&dir.path().join("toy")).map_err(|e| e.to_string())?;
    let config = PipelineConfig::load(&cfg).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run_pipeline(&config, &a).map_err(|e| e.to_string())?;
    run_pipeline(&config, &b).map_err(|e| e.to_string())?;
    let tree_a = tree(&a);
    let rerun = run_pipeline(&config, &a).map_err(|e| e.to_string())?;
    let t = within(Duration::from_secs(120), start)?;

    let strip = |mut m: BTreeMap<String, Vec<u8>>| {
        m.remove("manifest.json");
        m
    };
    let (ta, tb, tr) = (strip(tree_a), strip(tree(&b)), strip(tree(&a)));
    if ta != tb || ta != tr {
        let differ: Vec<&String> = ta
            .keys()
            .filter(|k| tb.get(*k) != ta.get(*k) || tr.get(*k) != ta.get(*k))
            .collect();
        return Err(format!("artifacts differ between runs: {differ:?}"));
    }
    let (ma, mb) = (
        read_manifest(&a).map_err(|e| e.to_string())?,
        read_manifest(&b).map_err(|e| e.to_string())?,
    );
    if ma.artifacts != mb.artifacts
        || ma.seeds != mb.seeds
        || ma.inputs != mb.inputs
        || first.manifest.artifacts != rerun.manifest.artifacts
    {
        return Err("manifests differ beyond the timestamp".into());
    }
    let t1 = String::from_utf8_lossy(&ta["reports/summary.csv"]).into_owned();
    let t3 = String::from_utf8_lossy(&ta["reports/pairs.csv"]).into_owned();
    if t1.lines().next() != Some(SUMMARY_HEADER) || t3.lines().next() != Some(PAIRS_HEADER) {
        return Err(format!(
            "report headers: {:?} / {:?}",
            t1.lines().next(),
            t3.lines().next()
        ));
    }
    if first.accepted != 2 {
        return Err(format!("{} communities accepted, expected 2", first.accepted));
    }
    Ok(format!(
        "{} artifacts byte-identical across 3 runs, headers exact, 2 communities accepted, {t:.2?}",
        ta.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("MCL correctness", criterion_1),
        ("planted-partition recovery", criterion_2),
        ("conductance exactness", criterion_3),
        ("JSD unit values", criterion_4),
        ("shuffled-graph replication", criterion_5),
        ("shuffle invariant", criterion_6),
        ("coherence baseline", criterion_7),
        ("matching and selection", criterion_8),
        ("edge-case classifier", criterion_9),
        ("end-to-end determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("acceptance {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                println!("acceptance {:>2} {name}: FAIL ({detail})", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
