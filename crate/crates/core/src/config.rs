//! Application configuration: a TOML file with one table per subsystem,
//! overridable through `CAREXPERT_<SECTION>__<KEY>` environment variables.
//!
//! With no file at all the engine runs offline on the bundled fixture corpus
//! and the scripted mock provider.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answering::{Prompts, DEFAULT_PROMPT_BUDGET, DEFAULT_WINDOW_WORDS};
use crate::corpus::{chunk_all, ingest_path, IngestReport, Paragraph, SourceFormat, SourceKind, DEFAULT_MAX_CHUNK_WORDS};
use crate::fixtures;
use crate::llm::{LimitedProvider, MockProvider, Provider, RemoteChatProvider, RemoteConfig, RetryPolicy, DEFAULT_CONCURRENCY};
use crate::moderation::{CostTable, InputClassSource, ModerationMethod, Stopwords, DEFAULT_THRESHOLD};
use crate::orchestrator::SafetyRules;
use crate::pipeline::{CannedText, Engine, ReaderKind, SystemConfig};
use crate::retrieval::{BuildOptions, Embedder, HashedEmbedder, KnowledgeBase, KnowledgeHandle, RemoteEmbedder, SearchMode, DEFAULT_B, DEFAULT_HASHED_DIMENSION, DEFAULT_K1};

pub const ENV_PREFIX: &str = "CAREXPERT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(String),
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub service: ServiceSection,
    pub corpus: CorpusSection,
    pub retrieval: RetrievalSection,
    pub llm: LlmSection,
    pub answering: AnsweringSection,
    pub moderation: ModerationSection,
    pub safety: SafetySection,
    pub canned: CannedSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub port: u16,
    /// Session event log; sessions live in memory only when unset.
    pub session_log: Option<PathBuf>,
    /// Environment variable holding the admin token for `/v1/ingest`.
    pub admin_token_env: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            session_log: None,
            admin_token_env: "CAREXPERT_ADMIN_TOKEN".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub path: PathBuf,
    #[serde(default = "default_kind")]
    pub kind: SourceKind,
    /// Taken from the file extension when absent.
    #[serde(default)]
    pub format: Option<SourceFormat>,
}

fn default_kind() -> SourceKind {
    SourceKind::OwnersManual
}

impl SourceEntry {
    pub fn resolved_format(&self) -> Result<SourceFormat, ConfigError> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        let ext = self.path.extension().and_then(|e| e.to_str()).unwrap_or("txt");
        ext.parse().map_err(|e: String| ConfigError::Invalid(format!("{}: {e}", self.path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Source files to ingest; the bundled car manual is used when empty.
    pub sources: Vec<SourceEntry>,
    /// Persisted index directory. Loaded instead of ingesting when it
    /// exists.
    pub index_dir: Option<PathBuf>,
    pub max_chunk_words: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            index_dir: None,
            max_chunk_words: DEFAULT_MAX_CHUNK_WORDS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderChoice {
    Hashed,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub mode: SearchMode,
    pub k1: f64,
    pub b: f64,
    pub dense: bool,
    pub embedder: EmbedderChoice,
    pub dimension: usize,
    pub embed_base_url: String,
    pub embed_model: String,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            mode: SearchMode::Bm25,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            dense: true,
            embedder: EmbedderChoice::Hashed,
            dimension: DEFAULT_HASHED_DIMENSION,
            embed_base_url: "https://api.openai.com/v1".into(),
            embed_model: "text-embedding-3-small".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderChoice {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub provider: ProviderChoice,
    /// Mock script; the bundled fixture script when unset.
    pub mock_script: Option<PathBuf>,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub supports_frequency_penalty: bool,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub base_backoff_ms: u64,
}

impl Default for LlmSection {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        let retry = RetryPolicy::default();
        Self {
            provider: ProviderChoice::Mock,
            mock_script: None,
            base_url: remote.base_url,
            model: remote.model,
            api_key_env: remote.api_key_env,
            timeout_ms: remote.timeout_ms,
            supports_frequency_penalty: remote.supports_frequency_penalty,
            max_in_flight: DEFAULT_CONCURRENCY,
            max_retries: retry.max_retries,
            base_backoff_ms: retry.base_backoff_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsweringSection {
    pub reader: ReaderKind,
    pub window_words: usize,
    /// Directory with `prompts/*.txt` and exemplar files overriding the
    /// bundled ones.
    pub prompt_dir: Option<PathBuf>,
    pub prompt_budget: usize,
}

impl Default for AnsweringSection {
    fn default() -> Self {
        Self {
            reader: ReaderKind::Lexical,
            window_words: DEFAULT_WINDOW_WORDS,
            prompt_dir: None,
            prompt_budget: DEFAULT_PROMPT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModerationSection {
    pub method: ModerationMethod,
    pub threshold: f64,
    pub input_class_source: InputClassSource,
    pub cost_table: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

impl Default for ModerationSection {
    fn default() -> Self {
        Self {
            method: ModerationMethod::ExtractionScore,
            threshold: DEFAULT_THRESHOLD,
            input_class_source: InputClassSource::Context,
            cost_table: None,
            stopwords: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetySection {
    pub blocklist: Option<PathBuf>,
    pub informal_lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannedSection {
    pub catalog: Option<PathBuf>,
}

impl AppConfig {
    pub fn from_toml(content: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = content.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    /// Reads `path` (defaults when `None`) and applies the process
    /// environment on top.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let content = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::load_with_env(&content, std::env::vars())
    }

    /// Parses `content`, then applies `CAREXPERT_<SECTION>__<KEY>` pairs from
    /// `vars`. Values are read as TOML literals, falling back to plain
    /// strings.
    pub fn load_with_env(content: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table: toml::Table = content.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut overrides: Vec<(String, String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(ENV_PREFIX)?;
                let (section, key) = rest.split_once("__")?;
                Some((section.to_lowercase(), key.to_lowercase(), v))
            })
            .collect();
        overrides.sort();
        for (section, key, raw) in overrides {
            let value = parse_env_value(&raw);
            let entry = table
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let Some(t) = entry.as_table_mut() else {
                return Err(ConfigError::Invalid(format!("{section} is not a section")));
            };
            t.insert(key, value);
        }
        let config = Self::from_table(table)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.corpus.max_chunk_words < crate::corpus::MIN_CHUNK_WORDS {
            return Err(ConfigError::Invalid(format!("corpus.max_chunk_words below {}", crate::corpus::MIN_CHUNK_WORDS)));
        }
        if self.retrieval.dimension == 0 {
            return Err(ConfigError::Invalid("retrieval.dimension must be positive".into()));
        }
        if self.answering.window_words == 0 {
            return Err(ConfigError::Invalid("answering.window_words must be positive".into()));
        }
        for s in &self.corpus.sources {
            s.resolved_format()?;
        }
        Ok(())
    }

    fn provider_id(&self) -> &'static str {
        match self.llm.provider {
            ProviderChoice::Mock => "mock",
            ProviderChoice::Remote => "remote",
        }
    }

    /// Default per-session configuration.
    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            label: "default".into(),
            retriever: self.retrieval.mode,
            reader: self.answering.reader,
            moderator: self.moderation.method,
            threshold: self.moderation.threshold,
            input_class_source: self.moderation.input_class_source,
            provider: self.provider_id().into(),
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.llm.max_retries,
            base_backoff_ms: self.llm.base_backoff_ms,
        }
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            k1: self.retrieval.k1,
            b: self.retrieval.b,
            dense: self.retrieval.dense,
        }
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        match self.retrieval.embedder {
            EmbedderChoice::Hashed => Arc::new(HashedEmbedder::new(self.retrieval.dimension)),
            EmbedderChoice::Remote => {
                let key = std::env::var(&self.llm.api_key_env).ok().filter(|k| !k.is_empty());
                Arc::new(
                    RemoteEmbedder::new(
                        &self.retrieval.embed_base_url,
                        &self.retrieval.embed_model,
                        key,
                        self.retrieval.dimension,
                        Duration::from_millis(self.llm.timeout_ms),
                    )
                    .with_retries(self.llm.max_retries, Duration::from_millis(self.llm.base_backoff_ms)),
                )
            }
        }
    }

    /// Ingests and chunks the configured sources, or the bundled manual.
    pub fn paragraphs(&self) -> Result<(Vec<Paragraph>, Vec<IngestReport>), ConfigError> {
        if self.corpus.sources.is_empty() {
            return Ok((fixtures::car_manual_paragraphs(), Vec::new()));
        }
        let mut documents = Vec::new();
        let mut reports = Vec::new();
        for s in &self.corpus.sources {
            let ingested = ingest_path(&s.path, s.kind, s.resolved_format()?).map_err(|e| ConfigError::Io(e.to_string()))?;
            documents.extend(ingested.documents);
            reports.push(ingested.report);
        }
        let paragraphs = chunk_all(&documents, self.corpus.max_chunk_words).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((paragraphs, reports))
    }

    pub fn knowledge_base(&self) -> Result<KnowledgeBase, ConfigError> {
        let embedder = self.embedder();
        if let Some(dir) = &self.corpus.index_dir {
            if dir.join("index_meta.json").exists() {
                return KnowledgeBase::load(dir, embedder).map_err(|e| ConfigError::Io(e.to_string()));
            }
        }
        let (paragraphs, _) = self.paragraphs()?;
        KnowledgeBase::build(paragraphs, embedder, self.build_options()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn provider(&self) -> Result<Arc<dyn Provider>, ConfigError> {
        Ok(match self.llm.provider {
            ProviderChoice::Mock => {
                let mock = match &self.llm.mock_script {
                    Some(p) => {
                        let s = std::fs::read_to_string(p).map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?;
                        MockProvider::from_jsonl(&s).map_err(|e| ConfigError::Invalid(e.to_string()))?
                    }
                    None => fixtures::mock_provider(),
                };
                Arc::new(LimitedProvider::new(mock, self.llm.max_in_flight))
            }
            ProviderChoice::Remote => Arc::new(LimitedProvider::new(
                RemoteChatProvider::new(RemoteConfig {
                    id: "remote".into(),
                    base_url: self.llm.base_url.clone(),
                    model: self.llm.model.clone(),
                    api_key_env: self.llm.api_key_env.clone(),
                    timeout_ms: self.llm.timeout_ms,
                    supports_frequency_penalty: self.llm.supports_frequency_penalty,
                }),
                self.llm.max_in_flight,
            )),
        })
    }

    /// Engine over `kb` with every configured file loaded and validated.
    pub fn engine_with(&self, kb: KnowledgeBase) -> Result<Engine, ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let mut engine = Engine::new(Arc::new(KnowledgeHandle::new(kb)), self.provider()?);
        if let Some(dir) = &self.answering.prompt_dir {
            engine.prompts = Prompts::from_dir(dir).map_err(|e| invalid(&e))?;
        }
        engine.prompts.char_budget = self.answering.prompt_budget;
        engine.rules = SafetyRules::load(self.safety.blocklist.as_deref(), self.safety.informal_lexicon.as_deref()).map_err(|e| invalid(&e))?;
        let canned = match &self.canned.catalog {
            Some(p) => CannedText::from_path(p).map_err(|e| invalid(&e))?,
            None => CannedText::default(),
        };
        engine = engine.with_canned(canned);
        if let Some(p) = &self.moderation.cost_table {
            engine.costs = CostTable::from_path(p).map_err(|e| invalid(&e))?;
        }
        if let Some(p) = &self.moderation.stopwords {
            let s = std::fs::read_to_string(p).map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?;
            engine.stopwords = Stopwords::parse(&s);
        }
        engine.retry = self.retry();
        engine.window_words = self.answering.window_words;
        engine.defaults = self.system_config();
        engine.validate(&engine.defaults).map_err(|e| invalid(&e))?;
        Ok(engine)
    }

    pub fn build_engine(&self) -> Result<Engine, ConfigError> {
        self.engine_with(self.knowledge_base()?)
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
