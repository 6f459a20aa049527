//! Seeded generators for planted-partition citation graphs and topic-driven
//! text, used by tests, the acceptance suite, and the bundled toy dataset.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{CitationGraph, NodeId, PubRecord, SliceLabel};

/// Graph with known ground-truth blocks.
#[derive(Debug, Clone)]
pub struct PlantedGraph {
    pub graph: CitationGraph,
    /// Block of each node.
    pub truth: Vec<usize>,
}

impl PlantedGraph {
    pub fn blocks(&self) -> Vec<Vec<NodeId>> {
        let k = self.truth.iter().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); k];
        for (node, &b) in self.truth.iter().enumerate() {
            out[b].push(node);
        }
        out
    }
}

/// Stochastic block model with equal blocks. Each unordered pair is linked
/// with probability `p_in` (same block) or `p_out`, and the citation points
/// in a random direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedPartition {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
}

impl PlantedPartition {
    pub fn generate(&self, seed: u64) -> PlantedGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.blocks * self.block_size;
        let truth: Vec<usize> = (0..n).map(|i| i / self.block_size).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if truth[i] == truth[j] { self.p_in } else { self.p_out };
                if rng.gen::<f64>() < p {
                    edges.push(if rng.gen::<bool>() { (i, j) } else { (j, i) });
                }
            }
        }
        PlantedGraph {
            graph: CitationGraph::from_index_edges(n, &edges),
            truth,
        }
    }
}

/// Documents mixing words from a per-topic vocabulary with a shared
/// background vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicText {
    pub topic_words: usize,
    pub background_words: usize,
    pub doc_len: usize,
    /// Probability that a token is drawn from the topic vocabulary.
    pub topic_share: f64,
}

impl Default for TopicText {
    fn default() -> Self {
        TopicText {
            topic_words: 40,
            background_words: 60,
            doc_len: 40,
            topic_share: 0.6,
        }
    }
}

impl TopicText {
    pub fn word(topic: usize, k: usize) -> String {
        format!("t{topic}w{k}x")
    }

    pub fn background(k: usize) -> String {
        format!("bgw{k}x")
    }

    pub fn document<R: Rng>(&self, topic: usize, rng: &mut R) -> String {
        let mut words = Vec::with_capacity(self.doc_len);
        for _ in 0..self.doc_len {
            let w = if self.background_words == 0 || rng.gen::<f64>() < self.topic_share {
                Self::word(topic, rng.gen_range(0..self.topic_words))
            } else {
                Self::background(rng.gen_range(0..self.background_words))
            };
            words.push(w);
        }
        words.join(" ")
    }
}

/// Settings for attaching metadata to a planted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSpec {
    pub slice: SliceLabel,
    pub text: TopicText,
    pub authors_per_block: usize,
    pub max_authors_per_paper: usize,
    pub missing_text: f64,
}

impl Default for RecordSpec {
    fn default() -> Self {
        RecordSpec {
            slice: SliceLabel::Year(1990),
            text: TopicText::default(),
            authors_per_block: 12,
            max_authors_per_paper: 3,
            missing_text: 0.0,
        }
    }
}

/// One record per node of `graph`, with text and authors drawn from the
/// node's block.
pub fn records_for(graph: &CitationGraph, truth: &[usize], spec: &RecordSpec, seed: u64) -> Vec<PubRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..graph.node_count())
        .map(|node| {
            let block = truth[node];
            let (title, abstract_text) = if rng.gen::<f64>() < spec.missing_text {
                (None, None)
            } else {
                let body = spec.text.document(block, &mut rng);
                let cut = body.match_indices(' ').nth(4).map_or(body.len(), |(i, _)| i);
                (Some(body[..cut].to_string()), Some(body[cut..].trim().to_string()))
            };
            let mut pool: Vec<usize> = (0..spec.authors_per_block).collect();
            pool.shuffle(&mut rng);
            let count = rng.gen_range(1..=spec.max_authors_per_paper.min(spec.authors_per_block).max(1));
            let author_ids = pool[..count].iter().map(|a| format!("auth{block}_{a}")).collect();
            PubRecord {
                pub_id: graph.pub_id(node).to_string(),
                slice: spec.slice.clone(),
                title,
                abstract_text,
                author_ids,
            }
        })
        .collect()
}

/// Records with text only, `per_topic` documents for each of `topics`.
pub fn topic_corpus(topics: usize, per_topic: usize, text: &TopicText, seed: u64) -> Vec<PubRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..topics * per_topic)
        .map(|i| PubRecord {
            pub_id: format!("doc{i}"),
            slice: SliceLabel::Year(2000),
            title: None,
            abstract_text: Some(text.document(i / per_topic, &mut rng)),
            author_ids: Vec::new(),
        })
        .collect()
}

/// Slice labels and edge seeds of the bundled toy dataset.
pub const TOY_SLICES: [(&str, u64); 2] = [("2019", 11), ("2020", 12)];
const TOY_METADATA_SEED: u64 = 13;

/// Two 30-node planted blocks, drawn once per toy slice over the same ids.
pub const TOY_PARTITION: PlantedPartition = PlantedPartition {
    blocks: 2,
    block_size: 30,
    p_in: 0.3,
    p_out: 0.01,
};

pub const TOY_CONFIG: &str = r#"# Bundled toy run: two slices over the same 60 articles.
seed = 20240601

[[slices]]
label = "2019"
edges = "edges_2019.tsv"
metadata = "metadata.jsonl"

[[slices]]
label = "2020"
edges = "edges_2020.tsv"
metadata = "metadata.jsonl"

[mcl]
inflation = 2.0
expansion = 2

[mkkm]
k = 2

[selection]
min_size = 30
max_size = 350
max_conductance = 0.5
min_jaccard = 0.9

[coherence]
reps = 50

[shuffle]
swaps_per_edge = 10
"#;

/// Write the toy dataset (`edges_<label>.tsv`, `metadata.jsonl`,
/// `toy.toml`) into `dir` and return the config path.
pub fn write_toy(dir: &std::path::Path) -> Result<std::path::PathBuf, crate::graph::GraphError> {
    use crate::graph::{write_metadata, GraphError};
    std::fs::create_dir_all(dir).map_err(|e| GraphError::io(dir, e))?;
    let mut first = None;
    for (label, seed) in TOY_SLICES {
        let pg = TOY_PARTITION.generate(seed);
        pg.graph.write_tsv(&dir.join(format!("edges_{label}.tsv")))?;
        first.get_or_insert(pg);
    }
    let pg = first.expect("at least one toy slice");
    let spec = RecordSpec {
        slice: SliceLabel::parse(TOY_SLICES[0].0),
        ..RecordSpec::default()
    };
    write_metadata(
        &dir.join("metadata.jsonl"),
        &records_for(&pg.graph, &pg.truth, &spec, TOY_METADATA_SEED),
    )?;
    let cfg = dir.join("toy.toml");
    std::fs::write(&cfg, TOY_CONFIG).map_err(|e| GraphError::io(&cfg, e))?;
    Ok(cfg)
}
