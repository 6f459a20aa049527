//! Tokenisation: lowercase, split on non-alphanumerics, suffix
//! normalisation, stop-word removal.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::graph::{GraphError, PubRecord};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Suffixes tried longest first.
const SUFFIXES: [&str; 5] = ["ing", "es", "ed", "ly", "s"];
const MIN_STEM: usize = 3;

/// Words to drop, one per line in the file form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopList {
    words: HashSet<String>,
}

impl Default for StopList {
    fn default() -> Self {
        StopList::parse(DEFAULT_STOPWORDS)
    }
}

impl StopList {
    pub fn parse(text: &str) -> Self {
        StopList {
            words: text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
        Ok(StopList::parse(&text))
    }

    pub fn empty() -> Self {
        StopList { words: HashSet::new() }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn strip_once(word: &str) -> Option<&str> {
    for suffix in SUFFIXES {
        let Some(stem) = word.strip_suffix(suffix) else {
            continue;
        };
        if stem.chars().count() < MIN_STEM {
            continue;
        }
        // "class", "virus", "analysis" keep their final s
        if suffix == "s" && (stem.ends_with('s') || stem.ends_with('u') || stem.ends_with('i')) {
            continue;
        }
        return Some(stem);
    }
    None
}

/// Strip inflectional suffixes until none applies.
pub fn normalize_token(word: &str) -> String {
    let mut current = word;
    while let Some(stem) = strip_once(current) {
        current = stem;
    }
    current.to_string()
}

/// Tokens of a title and abstract. Either may be absent.
pub fn normalize_text(title: Option<&str>, abstract_text: Option<&str>, stop: &StopList) -> Vec<String> {
    let mut out = Vec::new();
    for part in [title, abstract_text].into_iter().flatten() {
        let lower = part.to_lowercase();
        for raw in lower.split(|c: char| !c.is_alphanumeric()) {
            if raw.is_empty() || stop.contains(raw) {
                continue;
            }
            let token = normalize_token(raw);
            if token.chars().count() < 2 || stop.contains(&token) {
                continue;
            }
            out.push(token);
        }
    }
    out
}

/// String interner for tokens.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    words: Vec<String>,
}

impl Vocabulary {
    pub fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(word.to_string(), id);
        self.words.push(word.to_string());
        id
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Tokenised articles that have a title or abstract.
#[derive(Debug, Clone, Default)]
pub struct TextCorpus {
    pub vocab: Vocabulary,
    docs: Vec<Vec<u32>>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl TextCorpus {
    /// Records without any text are skipped; a later duplicate id is ignored.
    pub fn build<'a>(records: impl IntoIterator<Item = &'a PubRecord>, stop: &StopList) -> Self {
        let mut corpus = TextCorpus::default();
        for r in records {
            if !r.has_text() || corpus.index.contains_key(&r.pub_id) {
                continue;
            }
            let tokens = normalize_text(r.title.as_deref(), r.abstract_text.as_deref(), stop);
            let doc = tokens.iter().map(|t| corpus.vocab.intern(t)).collect();
            corpus.index.insert(r.pub_id.clone(), corpus.docs.len());
            corpus.ids.push(r.pub_id.clone());
            corpus.docs.push(doc);
        }
        corpus
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, i: usize) -> &[u32] {
        &self.docs[i]
    }

    pub fn position(&self, pub_id: &str) -> Option<usize> {
        self.index.get(pub_id).copied()
    }

    pub fn pub_id(&self, i: usize) -> &str {
        &self.ids[i]
    }
}
