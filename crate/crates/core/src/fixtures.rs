//! Bundled synthetic car-manual corpus, mock script and evaluation data.
//! Used by the offline CLI defaults, the tests and the FFI demo engine.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{chunk_all, ingest_str, Paragraph, SourceFormat, SourceKind};
use crate::evaluation::EvalDataset;
use crate::llm::MockProvider;
use crate::pipeline::Engine;
use crate::retrieval::{BuildOptions, Embedder, HashedEmbedder, KnowledgeBase, KnowledgeHandle};

pub const CAR_MANUAL_JSONL: &str = include_str!("../data/fixture/car_manual.jsonl");
pub const MOCK_SCRIPT: &str = include_str!("../data/fixture/mock_script.jsonl");
pub const EVAL_DATASET: &str = include_str!("../data/fixture/eval_dataset.json");
pub const GROUNDING_CASES: &str = include_str!("../data/fixture/grounding_cases.json");
pub const MAX_CHUNK_WORDS: usize = 150;

pub fn car_manual_paragraphs() -> Vec<Paragraph> {
    let ingested = ingest_str("car_manual", CAR_MANUAL_JSONL, SourceKind::OwnersManual, SourceFormat::Jsonl);
    chunk_all(&ingested.documents, MAX_CHUNK_WORDS).expect("fixture chunks")
}

pub fn knowledge_base_with(embedder: Arc<dyn Embedder>) -> KnowledgeBase {
    KnowledgeBase::build(car_manual_paragraphs(), embedder, BuildOptions::default()).expect("fixture index builds")
}

pub fn knowledge_base() -> KnowledgeBase {
    knowledge_base_with(Arc::new(HashedEmbedder::default()))
}

pub fn mock_provider() -> MockProvider {
    MockProvider::from_jsonl(MOCK_SCRIPT).expect("fixture script parses")
}

/// Fixture knowledge base behind the scripted mock provider.
pub fn engine() -> Engine {
    Engine::new(Arc::new(KnowledgeHandle::new(knowledge_base())), Arc::new(mock_provider()))
}

pub fn eval_dataset() -> EvalDataset {
    EvalDataset::from_json(EVAL_DATASET).expect("fixture dataset parses")
}

/// An utterance with a generative paraphrase written in words that do not
/// come from the manual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingCase {
    pub case_id: String,
    pub utterance: String,
    pub generative: String,
}

pub fn grounding_cases() -> Vec<GroundingCase> {
    serde_json::from_str(GROUNDING_CASES).expect("fixture cases parse")
}
