//! Turn pipeline and session management.
//!
//! A turn runs retrieve (top 3), classify, route. The answer route produces a
//! generative and an extractive candidate concurrently and moderates them.
//! Sessions are persisted to an append-only JSON Lines event log; every turn
//! is durably appended before it is returned.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::answering::{
    generate_answer, informal_reply, lexical_extract_span, llm_extract_span, AnswerCandidate, CandidateKind, ContextParagraph,
    GenerationContext, Prompts, DEFAULT_WINDOW_WORDS,
};
use crate::llm::{Exchange, Provider, RetryPolicy};
use crate::moderation::{
    cosine_moderate, CostTable, ExtractionModerator, InputClassSource, ModerationDecision, ModerationMethod, Stopwords,
    DEFAULT_THRESHOLD,
};
use crate::orchestrator::{classify_utterance, route, OrchestratorDecision, Route, SafetyRules};
use crate::retrieval::{KnowledgeHandle, SearchMode};

pub const TOP_K: usize = 3;
const SNIPPET_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("session store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderKind {
    Lexical,
    Llm,
}

impl std::str::FromStr for ReaderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(Self::Lexical),
            "llm" => Ok(Self::Llm),
            other => Err(format!("unknown reader {other:?}")),
        }
    }
}

impl std::fmt::Display for ReaderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lexical => "lexical",
            Self::Llm => "llm",
        })
    }
}

/// Per-session system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub label: String,
    pub retriever: SearchMode,
    pub reader: ReaderKind,
    pub moderator: ModerationMethod,
    pub threshold: f64,
    pub input_class_source: InputClassSource,
    pub provider: String,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            label: "default".into(),
            retriever: SearchMode::Bm25,
            reader: ReaderKind::Lexical,
            moderator: ModerationMethod::ExtractionScore,
            threshold: DEFAULT_THRESHOLD,
            input_class_source: InputClassSource::Context,
            provider: "mock".into(),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.label.trim().is_empty() {
            return Err(PipelineError::InvalidConfig("label must not be empty".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(PipelineError::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// User-visible fixed texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CannedText {
    pub clarify_default: String,
    pub filtered: String,
    pub informal_fallback: String,
    pub refusal: String,
    pub unavailable: String,
}

impl Default for CannedText {
    fn default() -> Self {
        serde_json::from_str(include_str!("../data/canned.json")).expect("bundled catalog parses")
    }
}

impl CannedText {
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let s = std::fs::read_to_string(path).map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&s).map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedParagraph {
    pub paragraph_id: String,
    pub rank: usize,
    pub score: f64,
    pub snippet: String,
}

/// What the user was shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    Extractive,
    Generative,
    Informal,
    Refused,
    Clarification,
    Filtered,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub retrieval_ms: u64,
    pub orchestrator_ms: u64,
    pub answering_ms: u64,
    pub moderation_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: usize,
    pub user_utterance: String,
    pub decision: OrchestratorDecision,
    pub route: Route,
    pub retrieved: Vec<RetrievedParagraph>,
    pub candidates: Vec<AnswerCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moderation: Option<ModerationDecision>,
    pub final_text: String,
    pub kind: TurnKind,
    #[serde(default)]
    pub errors: Vec<String>,
    pub timings: StageTimings,
}

impl TurnRecord {
    /// The record without timings, for comparisons across runs.
    pub fn deterministic_view(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("turn record serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timings");
        }
        v
    }

    /// Kind of the moderated answer, `None` when filtered; only for turns
    /// that went through moderation.
    pub fn moderated_kind(&self) -> Option<Option<CandidateKind>> {
        self.moderation.as_ref().map(ModerationDecision::emitted_kind)
    }

    /// Response body of the messages endpoint.
    pub fn api_view(&self) -> Value {
        let scores: BTreeMap<String, f64> = self
            .moderation
            .iter()
            .flat_map(|m| m.scores.iter().map(|s| (s.kind.to_string(), s.score)))
            .collect();
        serde_json::json!({
            "turn_index": self.index,
            "final_text": self.final_text,
            "kind": self.kind,
            "class": self.decision.utterance_class,
            "filtered": self.kind == TurnKind::Filtered,
            "moderator": self.moderation.as_ref().map(|m| m.method),
            "scores": scores,
            "retrieved": self.retrieved.iter().map(|r| serde_json::json!({
                "paragraph_id": r.paragraph_id,
                "snippet": r.snippet,
                "score": r.score,
            })).collect::<Vec<_>>(),
        })
    }
}

fn ms_since(start: Instant) -> u64 {
    start.elapsed().as_millis().try_into().unwrap_or(u64::MAX)
}

fn snippet(text: &str) -> String {
    match text.char_indices().nth(SNIPPET_CHARS) {
        Some((b, _)) => format!("{}...", &text[..b]),
        None => text.to_string(),
    }
}

/// Shared, read-only components of the turn pipeline.
pub struct Engine {
    pub knowledge: Arc<KnowledgeHandle>,
    providers: BTreeMap<String, Arc<dyn Provider>>,
    pub prompts: Prompts,
    pub rules: SafetyRules,
    pub costs: CostTable,
    pub stopwords: Stopwords,
    pub canned: CannedText,
    pub retry: RetryPolicy,
    pub window_words: usize,
    pub defaults: SystemConfig,
}

impl Engine {
    /// Engine with bundled prompts, rules, costs and texts, and `provider`
    /// as the only provider (and the default one).
    pub fn new(knowledge: Arc<KnowledgeHandle>, provider: Arc<dyn Provider>) -> Self {
        let canned = CannedText::default();
        let defaults = SystemConfig {
            provider: provider.id().to_string(),
            ..SystemConfig::default()
        };
        Self {
            knowledge,
            providers: BTreeMap::from([(provider.id().to_string(), provider)]),
            prompts: Prompts::bundled(),
            rules: SafetyRules::default().with_texts(&canned.refusal, &canned.clarify_default),
            costs: CostTable::default(),
            stopwords: Stopwords::bundled(),
            canned,
            retry: RetryPolicy::default(),
            window_words: DEFAULT_WINDOW_WORDS,
            defaults,
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn Provider>) -> Self {
        self.providers.insert(provider.id().to_string(), provider);
        self
    }

    pub fn with_canned(mut self, canned: CannedText) -> Self {
        self.rules = self.rules.with_texts(&canned.refusal, &canned.clarify_default);
        self.canned = canned;
        self
    }

    pub fn provider_arc(&self, id: &str) -> Option<Arc<dyn Provider>> {
        self.providers.get(id).cloned()
    }

    pub fn provider_ids(&self) -> Vec<&str> {
        self.providers.keys().map(String::as_str).collect()
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<(), PipelineError> {
        config.validate()?;
        if !self.providers.contains_key(&config.provider) {
            return Err(PipelineError::InvalidConfig(format!("unknown provider {:?}", config.provider)));
        }
        Ok(())
    }

    fn provider(&self, config: &SystemConfig) -> Result<&dyn Provider, PipelineError> {
        self.providers
            .get(&config.provider)
            .map(|p| p.as_ref())
            .ok_or_else(|| PipelineError::InvalidConfig(format!("unknown provider {:?}", config.provider)))
    }

    /// Runs one turn against `history` without touching any session.
    pub fn handle_turn(
        &self,
        config: &SystemConfig,
        history: &[Exchange],
        index: usize,
        utterance: &str,
    ) -> Result<TurnRecord, PipelineError> {
        let utterance = utterance.trim();
        if utterance.is_empty() {
            return Err(PipelineError::EmptyUtterance);
        }
        let provider = self.provider(config)?;
        let total = Instant::now();
        let mut timings = StageTimings::default();
        let mut errors = Vec::new();

        let started = Instant::now();
        let kb = self.knowledge.get();
        let results = kb.search(utterance, TOP_K, config.retriever).unwrap_or_else(|e| {
            errors.push(format!("retrieval: {e}"));
            Vec::new()
        });
        let context: Vec<ContextParagraph> = results
            .iter()
            .filter_map(|r| {
                kb.paragraph(&r.paragraph_id).map(|p| ContextParagraph {
                    paragraph_id: p.paragraph_id.clone(),
                    text: p.text.clone(),
                })
            })
            .collect();
        let retrieved: Vec<RetrievedParagraph> = results
            .iter()
            .zip(&context)
            .map(|(r, p)| RetrievedParagraph {
                paragraph_id: r.paragraph_id.clone(),
                rank: r.rank,
                score: r.score,
                snippet: snippet(&p.text),
            })
            .collect();
        timings.retrieval_ms = ms_since(started);

        let started = Instant::now();
        let texts: Vec<String> = context.iter().map(|p| p.text.clone()).collect();
        let decision = classify_utterance(provider, &self.prompts, utterance, &texts, history, &self.rules, &self.retry);
        let turn_route = route(&decision);
        timings.orchestrator_ms = ms_since(started);

        let mut candidates = Vec::new();
        let mut moderation = None;
        let (final_text, kind) = match turn_route {
            Route::Refuse => (self.canned.refusal.clone(), TurnKind::Refused),
            Route::Clarify => (
                decision.canned_text.clone().unwrap_or_else(|| self.canned.clarify_default.clone()),
                TurnKind::Clarification,
            ),
            Route::InformalPipeline => {
                let started = Instant::now();
                let reply = informal_reply(provider, &self.prompts, utterance, history, &self.retry, &self.canned.informal_fallback);
                timings.answering_ms = ms_since(started);
                let text = reply.text.clone();
                candidates.push(reply);
                (text, TurnKind::Informal)
            }
            Route::AnswerPipeline => {
                let started = Instant::now();
                let ctx = GenerationContext::new(utterance, history, context.clone());
                let (generated, extracted) = if ctx.paragraphs.is_empty() {
                    (None, None)
                } else {
                    std::thread::scope(|s| {
                        let g = s.spawn(|| generate_answer(provider, &self.prompts, &ctx, &self.retry));
                        let e = match config.reader {
                            ReaderKind::Lexical => lexical_extract_span(utterance, &ctx.paragraphs, self.window_words, &self.stopwords),
                            ReaderKind::Llm => llm_extract_span(provider, &self.prompts, utterance, &ctx.paragraphs, &self.retry),
                        };
                        (Some(g.join().expect("generation thread panicked")), Some(e))
                    })
                };
                for (stage, r) in [("generative", generated), ("extractive", extracted)] {
                    match r {
                        Some(Ok(c)) => candidates.push(c),
                        Some(Err(e)) => errors.push(format!("{stage}: {e}")),
                        None => {}
                    }
                }
                timings.answering_ms = ms_since(started);

                let started = Instant::now();
                let decision = self.moderate(config, utterance, &candidates, &ctx.paragraph_texts()).unwrap_or_else(|e| {
                    errors.push(format!("moderation: {e}"));
                    ModerationDecision::unavailable(config.moderator, &self.canned.filtered)
                });
                timings.moderation_ms = ms_since(started);
                let out = match decision.emitted_kind() {
                    Some(CandidateKind::Extractive) => (decision.final_text().to_string(), TurnKind::Extractive),
                    Some(CandidateKind::Generative) => (decision.final_text().to_string(), TurnKind::Generative),
                    Some(CandidateKind::Informal) => (decision.final_text().to_string(), TurnKind::Informal),
                    None => (decision.final_text().to_string(), TurnKind::Filtered),
                };
                moderation = Some(decision);
                out
            }
        };
        timings.total_ms = ms_since(total);
        Ok(TurnRecord {
            index,
            user_utterance: utterance.to_string(),
            decision,
            route: turn_route,
            retrieved,
            candidates,
            moderation,
            final_text,
            kind,
            errors,
            timings,
        })
    }

    fn moderate(
        &self,
        config: &SystemConfig,
        utterance: &str,
        candidates: &[AnswerCandidate],
        paragraphs: &[String],
    ) -> Result<ModerationDecision, crate::moderation::ModerationError> {
        if candidates.is_empty() || paragraphs.is_empty() {
            return Ok(ModerationDecision::unavailable(config.moderator, &self.canned.filtered));
        }
        match config.moderator {
            ModerationMethod::Cosine => {
                let kb = self.knowledge.get();
                cosine_moderate(kb.embedder().as_ref(), utterance, candidates, &self.canned.filtered)
            }
            ModerationMethod::ExtractionScore => {
                let moderator = ExtractionModerator {
                    costs: self.costs,
                    stopwords: self.stopwords.clone(),
                    input_source: config.input_class_source,
                    threshold: config.threshold,
                };
                let refs: Vec<&str> = paragraphs.iter().map(String::as_str).collect();
                moderator.moderate(utterance, candidates, &refs, &self.canned.filtered)
            }
        }
    }
}

/// History exchanges derived from recorded turns.
pub fn history_of(turns: &[TurnRecord]) -> Vec<Exchange> {
    turns
        .iter()
        .map(|t| Exchange {
            user: t.user_utterance.clone(),
            system: t.final_text.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub session_id: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub config: SystemConfig,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    SessionCreated {
        session_id: String,
        created_at: u64,
        config: SystemConfig,
    },
    TurnCompleted {
        session_id: String,
        turn: Box<TurnRecord>,
    },
}

/// Sessions rebuilt from a log, with any recovery warnings.
#[derive(Debug, Default)]
pub struct Replay {
    pub sessions: BTreeMap<String, DialogueSession>,
    pub warnings: Vec<String>,
}

/// Applies events in order. Turn events are keyed by turn index, so
/// replaying a duplicate is a no-op.
pub fn replay_events(events: impl IntoIterator<Item = SessionEvent>) -> Replay {
    let mut out = Replay::default();
    for event in events {
        match event {
            SessionEvent::SessionCreated {
                session_id,
                created_at,
                config,
            } => {
                out.sessions.entry(session_id.clone()).or_insert(DialogueSession {
                    session_id,
                    created_at,
                    config,
                    turns: Vec::new(),
                });
            }
            SessionEvent::TurnCompleted { session_id, turn } => match out.sessions.get_mut(&session_id) {
                None => out.warnings.push(format!("turn for unknown session {session_id} skipped")),
                Some(s) if turn.index < s.turns.len() => {}
                Some(s) if turn.index == s.turns.len() => s.turns.push(*turn),
                Some(s) => out.warnings.push(format!(
                    "session {session_id}: turn {} skipped, expected {}",
                    turn.index,
                    s.turns.len()
                )),
            },
        }
    }
    out
}

/// Append-only JSON Lines event log.
pub struct SessionStore {
    path: PathBuf,
    file: Mutex<File>,
}

impl SessionStore {
    /// Opens (creating if needed) the log and replays it. A trailing line
    /// that does not parse is cut off with a warning; a bad line followed by
    /// good ones is an error.
    pub fn open(path: &Path) -> Result<(Self, Replay), PipelineError> {
        let err = |e: std::io::Error| PipelineError::Store(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(err)?;
        let mut events = Vec::new();
        let mut good_end = 0u64;
        let mut warnings = Vec::new();
        let mut corrupt_at: Option<(usize, u64)> = None;
        {
            let mut reader = BufReader::new(&file);
            let mut offset = 0u64;
            let mut line_no = 0usize;
            let mut buf = Vec::new();
            loop {
                buf.clear();
                let n = reader.read_until(b'\n', &mut buf).map_err(err)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let complete = buf.ends_with(b"\n");
                let parsed = std::str::from_utf8(&buf)
                    .ok()
                    .filter(|_| complete)
                    .filter(|s| !s.trim().is_empty())
                    .map(serde_json::from_str::<SessionEvent>);
                match parsed {
                    Some(Ok(ev)) if corrupt_at.is_none() => {
                        events.push(ev);
                        good_end = offset + n as u64;
                    }
                    Some(Ok(_)) => {
                        let (bad, _) = corrupt_at.expect("checked");
                        return Err(PipelineError::Store(format!("{}: corrupt record at line {bad}", path.display())));
                    }
                    _ if complete && std::str::from_utf8(&buf).is_ok_and(|s| s.trim().is_empty()) && corrupt_at.is_none() => {
                        good_end = offset + n as u64;
                    }
                    _ => {
                        corrupt_at.get_or_insert((line_no, offset));
                    }
                }
                offset += n as u64;
            }
        }
        if let Some((line, at)) = corrupt_at {
            warnings.push(format!("{}: truncated corrupt trailing record at line {line}", path.display()));
            tracing::warn!(path = %path.display(), line, "truncating corrupt trailing record");
            file.set_len(at.max(good_end)).map_err(err)?;
            file.sync_all().map_err(err)?;
        }
        file.seek(SeekFrom::End(0)).map_err(err)?;
        let mut replay = replay_events(events);
        warnings.append(&mut replay.warnings);
        replay.warnings = warnings;
        Ok((
            Self {
                path: path.to_path_buf(),
                file: Mutex::new(file),
            },
            replay,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one event and syncs it to disk.
    pub fn append(&self, event: &SessionEvent) -> Result<(), PipelineError> {
        let mut line = serde_json::to_vec(event).map_err(|e| PipelineError::Store(e.to_string()))?;
        line.push(b'\n');
        let mut f = self.file.lock().map_err(|_| PipelineError::Store("writer poisoned".into()))?;
        f.write_all(&line)
            .and_then(|_| f.sync_data())
            .map_err(|e| PipelineError::Store(format!("{}: {e}", self.path.display())))
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis().try_into().unwrap_or(u64::MAX))
}

/// Live sessions. Turns of one session are serialized by a per-session lock;
/// different sessions proceed in parallel.
pub struct SessionManager {
    pub engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<DialogueSession>>>>,
    store: Option<SessionStore>,
}

impl SessionManager {
    pub fn in_memory(engine: Arc<Engine>) -> Self {
        Self {
            engine,
            sessions: RwLock::new(HashMap::new()),
            store: None,
        }
    }

    /// Manager backed by the log at `path`, restoring its sessions.
    pub fn persistent(engine: Arc<Engine>, path: &Path) -> Result<(Self, Vec<String>), PipelineError> {
        let (store, replay) = SessionStore::open(path)?;
        let sessions = replay
            .sessions
            .into_iter()
            .map(|(id, s)| (id, Arc::new(Mutex::new(s))))
            .collect();
        Ok((
            Self {
                engine,
                sessions: RwLock::new(sessions),
                store: Some(store),
            },
            replay.warnings,
        ))
    }

    pub fn create_session(&self, config: Option<SystemConfig>) -> Result<DialogueSession, PipelineError> {
        let config = config.unwrap_or_else(|| self.engine.defaults.clone());
        self.engine.validate(&config)?;
        let session = DialogueSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            created_at: now_ms(),
            config,
            turns: Vec::new(),
        };
        if let Some(store) = &self.store {
            store.append(&SessionEvent::SessionCreated {
                session_id: session.session_id.clone(),
                created_at: session.created_at,
                config: session.config.clone(),
            })?;
        }
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(session.session_id.clone(), Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    fn entry(&self, session_id: &str) -> Result<Arc<Mutex<DialogueSession>>, PipelineError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| PipelineError::SessionNotFound(session_id.to_string()))
    }

    pub fn session(&self, session_id: &str) -> Result<DialogueSession, PipelineError> {
        Ok(self.entry(session_id)?.lock().expect("session poisoned").clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Handles one user message; the turn is persisted before it is
    /// returned.
    pub fn handle_turn(&self, session_id: &str, utterance: &str) -> Result<TurnRecord, PipelineError> {
        let entry = self.entry(session_id)?;
        let mut session = entry.lock().expect("session poisoned");
        let history = history_of(&session.turns);
        let turn = self.engine.handle_turn(&session.config, &history, session.turns.len(), utterance)?;
        if let Some(store) = &self.store {
            store.append(&SessionEvent::TurnCompleted {
                session_id: session_id.to_string(),
                turn: Box::new(turn.clone()),
            })?;
        }
        session.turns.push(turn.clone());
        Ok(turn)
    }
}
