//! Sparse (BM25) and dense (embedding + cosine) retrieval over paragraphs.
//!
//! Indexes are built once and never mutated. A rebuild produces a new
//! [`KnowledgeBase`] which is swapped in behind a [`KnowledgeHandle`].

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Paragraph};
use crate::text::tokenize;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_HASHED_DIMENSION: usize = 256;
pub const RRF_CONSTANT: f64 = 60.0;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown paragraph id {0}")]
    UnknownParagraph(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("dense retrieval requested but no vector index was built")]
    NoVectorIndex,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("degenerate embedding")]
    DegenerateEmbedding,
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("embedding provider failed after {attempts} attempt(s): {message}")]
    Transport {
        message: String,
        retryable: bool,
        attempts: u32,
    },
    #[error("index persistence: {0}")]
    Persist(String),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}

fn persist_err(e: impl std::fmt::Display) -> RetrievalError {
    RetrievalError::Persist(e.to_string())
}

/// Okapi BM25 over canonical tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub k1: f64,
    pub b: f64,
    pub avg_doc_len: f64,
    pub doc_lengths: BTreeMap<String, usize>,
    pub postings: BTreeMap<String, BTreeMap<String, u32>>,
    pub doc_count: usize,
}

impl Bm25Index {
    pub fn build(paragraphs: &[Paragraph], k1: f64, b: f64) -> Result<Self, RetrievalError> {
        if paragraphs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut doc_lengths = BTreeMap::new();
        let mut postings: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for p in paragraphs {
            let tokens = tokenize(&p.text);
            doc_lengths.insert(p.paragraph_id.clone(), tokens.len());
            for t in tokens {
                *postings.entry(t).or_default().entry(p.paragraph_id.clone()).or_insert(0) += 1;
            }
        }
        Ok(Self::from_parts(k1, b, doc_lengths, postings))
    }

    fn from_parts(
        k1: f64,
        b: f64,
        doc_lengths: BTreeMap<String, usize>,
        postings: BTreeMap<String, BTreeMap<String, u32>>,
    ) -> Self {
        let doc_count = doc_lengths.len();
        let total: usize = doc_lengths.values().sum();
        Self {
            k1,
            b,
            avg_doc_len: total as f64 / doc_count as f64,
            doc_lengths,
            postings,
            doc_count,
        }
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, BTreeMap::len)
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`; always positive.
    pub fn idf(&self, doc_freq: usize) -> f64 {
        let n = self.doc_count as f64;
        let df = doc_freq as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: f64, doc_len: usize) -> f64 {
        let norm = 1.0 - self.b + self.b * doc_len as f64 / self.avg_doc_len;
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    /// Score of one paragraph for a tokenized query. Repeated query terms
    /// count once.
    pub fn score(&self, query_tokens: &[String], paragraph_id: &str) -> Result<f64, RetrievalError> {
        let doc_len = *self
            .doc_lengths
            .get(paragraph_id)
            .ok_or_else(|| RetrievalError::UnknownParagraph(paragraph_id.to_string()))?;
        let mut score = 0.0;
        for term in distinct(query_tokens) {
            let Some(list) = self.postings.get(term) else { continue };
            let Some(&tf) = list.get(paragraph_id) else { continue };
            score += self.term_weight(self.idf(list.len()), tf as f64, doc_len);
        }
        Ok(score)
    }

    /// Scores for every indexed paragraph, in paragraph-id order.
    pub fn score_all(&self, query_tokens: &[String]) -> Vec<(String, f64)> {
        let mut acc: BTreeMap<&str, f64> = self.doc_lengths.keys().map(|k| (k.as_str(), 0.0)).collect();
        for term in distinct(query_tokens) {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(list.len());
            for (pid, &tf) in list {
                let weight = self.term_weight(idf, tf as f64, self.doc_lengths[pid]);
                *acc.get_mut(pid.as_str()).expect("postings reference indexed docs") += weight;
            }
        }
        acc.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

fn distinct(tokens: &[String]) -> Vec<&str> {
    let mut seen = std::collections::HashSet::new();
    tokens.iter().map(String::as_str).filter(|t| seen.insert(*t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    RemoteProvider,
    HashedLocal,
}

/// Maps text to a unit-norm vector.
pub trait Embedder: Send + Sync {
    fn kind(&self) -> EmbedderKind;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

/// Signed feature hashing of canonical tokens, then L2 normalization.
///
/// A pure function of the token multiset.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedder {
    dimension: usize,
}

impl HashedEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASHED_DIMENSION)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl Embedder for HashedEmbedder {
    fn kind(&self) -> EmbedderKind {
        EmbedderKind::HashedLocal
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        for t in &tokens {
            let h = fnv1a64(t.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        normalize(v).ok_or(RetrievalError::DegenerateEmbedding)
    }
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Embeddings from an HTTP endpoint speaking the common `/embeddings` shape
/// (`{model, input}` → `{data: [{embedding: [...]}]}`).
pub struct RemoteEmbedder {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    max_retries: u32,
    backoff: Duration,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, dimension: usize, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            dimension,
            max_retries: 3,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    fn attempt(&self, text: &str) -> Result<Vec<f64>, (String, bool)> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut resp = req.send_json(&body).map_err(|e| (e.to_string(), true))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err((format!("HTTP {status}"), status == 429 || status >= 500));
        }
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| (e.to_string(), false))?;
        value["data"][0]["embedding"]
            .as_array()
            .and_then(|a| a.iter().map(serde_json::Value::as_f64).collect::<Option<Vec<f64>>>())
            .ok_or_else(|| ("response has no data[0].embedding".to_string(), false))
    }
}

impl Embedder for RemoteEmbedder {
    fn kind(&self) -> EmbedderKind {
        EmbedderKind::RemoteProvider
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        if tokenize(text).is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(text) {
                Ok(v) if v.len() != self.dimension => {
                    return Err(RetrievalError::DimensionMismatch(v.len(), self.dimension))
                }
                Ok(v) => return normalize(v).ok_or(RetrievalError::DegenerateEmbedding),
                Err((message, retryable)) => {
                    if !retryable || attempts > self.max_retries {
                        return Err(RetrievalError::Transport {
                            message,
                            retryable,
                            attempts,
                        });
                    }
                    std::thread::sleep(self.backoff * 2u32.pow(attempts - 1));
                }
            }
        }
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, RetrievalError> {
    if u.len() != v.len() {
        return Err(RetrievalError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Exhaustive cosine index over unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub dimension: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl VectorIndex {
    pub fn build(paragraphs: &[Paragraph], embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        if paragraphs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut vectors = BTreeMap::new();
        for p in paragraphs {
            vectors.insert(p.paragraph_id.clone(), embedder.embed(&p.text)?);
        }
        Ok(Self {
            dimension: embedder.dimension(),
            vectors,
        })
    }

    /// Cosine score of every stored vector against `query`, in id order.
    pub fn score_all(&self, query: &[f64]) -> Result<Vec<(String, f64)>, RetrievalError> {
        self.vectors
            .iter()
            .map(|(id, v)| Ok((id.clone(), cosine_similarity(query, v)?)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Bm25,
    Dense,
    HybridRrf,
}

impl FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bm25" => Ok(Self::Bm25),
            "dense" => Ok(Self::Dense),
            "hybrid_rrf" => Ok(Self::HybridRrf),
            other => Err(format!("unknown retriever mode {other:?}")),
        }
    }
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bm25 => "bm25",
            Self::Dense => "dense",
            Self::HybridRrf => "hybrid_rrf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub paragraph_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Sorts by score descending, then paragraph id ascending, and assigns
/// dense 1-based ranks to the first `k`.
pub fn rank_scores(mut scored: Vec<(String, f64)>, k: usize) -> Vec<RetrievalResult> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (paragraph_id, score))| RetrievalResult {
            paragraph_id,
            score,
            rank: i + 1,
        })
        .collect()
}

/// An immutable paragraph store with its indexes.
pub struct KnowledgeBase {
    pub version: u64,
    paragraphs: Vec<Paragraph>,
    by_id: HashMap<String, usize>,
    pub bm25: Bm25Index,
    pub dense: Option<VectorIndex>,
    embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("version", &self.version)
            .field("paragraphs", &self.paragraphs.len())
            .field("dense", &self.dense.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub k1: f64,
    pub b: f64,
    pub dense: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            dense: true,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexMeta {
    format_version: u32,
    version: u64,
    k1: f64,
    b: f64,
    doc_count: usize,
    avg_doc_len: f64,
    dimension: Option<usize>,
    embedder_kind: EmbedderKind,
}

#[derive(Serialize, Deserialize)]
struct DocLine {
    paragraph_id: String,
    length: usize,
}

#[derive(Serialize, Deserialize)]
struct PostingLine {
    term: String,
    postings: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VectorLine {
    paragraph_id: String,
    vector: Vec<f64>,
}

impl KnowledgeBase {
    pub fn build(paragraphs: Vec<Paragraph>, embedder: Arc<dyn Embedder>, options: BuildOptions) -> Result<Self, RetrievalError> {
        let bm25 = Bm25Index::build(&paragraphs, options.k1, options.b)?;
        let dense = if options.dense {
            Some(VectorIndex::build(&paragraphs, embedder.as_ref())?)
        } else {
            None
        };
        Ok(Self::assemble(0, paragraphs, bm25, dense, embedder))
    }

    fn assemble(version: u64, paragraphs: Vec<Paragraph>, bm25: Bm25Index, dense: Option<VectorIndex>, embedder: Arc<dyn Embedder>) -> Self {
        let by_id = paragraphs.iter().enumerate().map(|(i, p)| (p.paragraph_id.clone(), i)).collect();
        Self {
            version,
            paragraphs,
            by_id,
            bm25,
            dense,
            embedder,
        }
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn paragraph(&self, id: &str) -> Option<&Paragraph> {
        self.by_id.get(id).map(|&i| &self.paragraphs[i])
    }

    /// Options that rebuild an index equivalent to this one.
    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            k1: self.bm25.k1,
            b: self.bm25.b,
            dense: self.dense.is_some(),
        }
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    pub fn search(&self, query: &str, k: usize, mode: SearchMode) -> Result<Vec<RetrievalResult>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        match mode {
            SearchMode::Bm25 => Ok(rank_scores(self.bm25.score_all(&tokenize(query)), k)),
            SearchMode::Dense => {
                let scored = self.dense_scores(query)?;
                Ok(rank_scores(scored, k))
            }
            SearchMode::HybridRrf => {
                let n = self.paragraphs.len();
                let sparse = rank_scores(self.bm25.score_all(&tokenize(query)), n);
                let dense = rank_scores(self.dense_scores(query)?, n);
                let mut fused: BTreeMap<String, f64> = BTreeMap::new();
                for r in sparse.iter().chain(dense.iter()) {
                    *fused.entry(r.paragraph_id.clone()).or_insert(0.0) += 1.0 / (RRF_CONSTANT + r.rank as f64);
                }
                Ok(rank_scores(fused.into_iter().collect(), k))
            }
        }
    }

    fn dense_scores(&self, query: &str) -> Result<Vec<(String, f64)>, RetrievalError> {
        let index = self.dense.as_ref().ok_or(RetrievalError::NoVectorIndex)?;
        let q = self.embedder.embed(query)?;
        index.score_all(&q)
    }

    /// Writes metadata JSON plus JSON Lines paragraph, document-length,
    /// postings and vector files into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        std::fs::create_dir_all(dir).map_err(persist_err)?;
        let meta = IndexMeta {
            format_version: 1,
            version: self.version,
            k1: self.bm25.k1,
            b: self.bm25.b,
            doc_count: self.bm25.doc_count,
            avg_doc_len: self.bm25.avg_doc_len,
            dimension: self.dense.as_ref().map(|d| d.dimension),
            embedder_kind: self.embedder.kind(),
        };
        let meta_json = serde_json::to_string_pretty(&meta).map_err(persist_err)?;
        std::fs::write(dir.join("index_meta.json"), meta_json + "\n").map_err(persist_err)?;

        let file = File::create(dir.join("paragraphs.jsonl")).map_err(persist_err)?;
        corpus::write_paragraphs(BufWriter::new(file), &self.paragraphs).map_err(persist_err)?;

        write_lines(
            &dir.join("bm25_docs.jsonl"),
            self.bm25.doc_lengths.iter().map(|(id, &length)| DocLine {
                paragraph_id: id.clone(),
                length,
            }),
        )?;
        write_lines(
            &dir.join("bm25_postings.jsonl"),
            self.bm25.postings.iter().map(|(term, postings)| PostingLine {
                term: term.clone(),
                postings: postings.clone(),
            }),
        )?;
        if let Some(dense) = &self.dense {
            write_lines(
                &dir.join("vectors.jsonl"),
                dense.vectors.iter().map(|(id, v)| VectorLine {
                    paragraph_id: id.clone(),
                    vector: v.clone(),
                }),
            )?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        let meta: IndexMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("index_meta.json")).map_err(persist_err)?)
            .map_err(persist_err)?;
        if meta.format_version != 1 {
            return Err(persist_err(format!("unsupported format version {}", meta.format_version)));
        }
        let paragraphs = corpus::load_paragraphs(&dir.join("paragraphs.jsonl"))?;
        let doc_lengths = read_lines::<DocLine>(&dir.join("bm25_docs.jsonl"))?
            .into_iter()
            .map(|d| (d.paragraph_id, d.length))
            .collect::<BTreeMap<_, _>>();
        let postings = read_lines::<PostingLine>(&dir.join("bm25_postings.jsonl"))?
            .into_iter()
            .map(|p| (p.term, p.postings))
            .collect::<BTreeMap<_, _>>();
        if doc_lengths.len() != meta.doc_count || doc_lengths.len() != paragraphs.len() {
            return Err(persist_err("document count disagrees with metadata"));
        }
        for list in postings.values() {
            if let Some(id) = list.keys().find(|id| !doc_lengths.contains_key(*id)) {
                return Err(persist_err(format!("posting references unknown paragraph {id}")));
            }
        }
        let bm25 = Bm25Index::from_parts(meta.k1, meta.b, doc_lengths, postings);

        let dense = match meta.dimension {
            None => None,
            Some(dimension) => {
                if embedder.kind() != meta.embedder_kind || embedder.dimension() != dimension {
                    return Err(persist_err(format!(
                        "index was built with {:?}/{dimension}, embedder is {:?}/{}",
                        meta.embedder_kind,
                        embedder.kind(),
                        embedder.dimension()
                    )));
                }
                let vectors = read_lines::<VectorLine>(&dir.join("vectors.jsonl"))?
                    .into_iter()
                    .map(|v| {
                        if v.vector.len() == dimension {
                            Ok((v.paragraph_id, v.vector))
                        } else {
                            Err(RetrievalError::DimensionMismatch(v.vector.len(), dimension))
                        }
                    })
                    .collect::<Result<BTreeMap<_, _>, _>>()?;
                Some(VectorIndex { dimension, vectors })
            }
        };
        Ok(Self::assemble(meta.version, paragraphs, bm25, dense, embedder))
    }
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), RetrievalError> {
    let mut out = BufWriter::new(File::create(path).map_err(persist_err)?);
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(persist_err)?;
        out.write_all(b"\n").map_err(persist_err)?;
    }
    out.flush().map_err(persist_err)
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RetrievalError> {
    let reader = BufReader::new(File::open(path).map_err(persist_err)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(persist_err)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(persist_err)?);
        }
    }
    Ok(out)
}

/// Versioned, atomically swappable pointer to the current knowledge base.
/// Readers clone the `Arc` and are never blocked by a rebuild.
pub struct KnowledgeHandle {
    current: RwLock<Arc<KnowledgeBase>>,
}

impl KnowledgeHandle {
    pub fn new(kb: KnowledgeBase) -> Self {
        Self {
            current: RwLock::new(Arc::new(kb)),
        }
    }

    pub fn get(&self) -> Arc<KnowledgeBase> {
        self.current.read().expect("knowledge lock poisoned").clone()
    }

    /// Installs `next` with a version one above the current one.
    pub fn swap(&self, next: KnowledgeBase) -> u64 {
        let mut guard = self.current.write().expect("knowledge lock poisoned");
        let version = guard.version + 1;
        *guard = Arc::new(next.with_version(version));
        version
    }
}
