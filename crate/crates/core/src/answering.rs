//! Answer candidates: a generative answer from the abstractive or informal
//! template, and an extractive span from the LLM reader or the lexical
//! baseline reader.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::template::bindings;
use crate::llm::{complete, preset, ChatTranscript, Exchange, PresetKind, PromptTemplate, Provider, ProviderError, RetryPolicy, TemplateError, TemplateStore};
use crate::moderation::Stopwords;
use crate::text::{char_offset, sentence_spans, tokenize, word_count, MatchText};

pub const MAX_CONTEXT_PARAGRAPHS: usize = 3;
pub const MAX_HISTORY_EXCHANGES: usize = 5;
pub const DEFAULT_PROMPT_BUDGET: usize = 12_000;
pub const DEFAULT_WINDOW_WORDS: usize = 40;
pub const ABSTRACTIVE_EXEMPLAR_SLOTS: usize = 5;
pub const INFORMAL_EXEMPLAR_SLOTS: usize = 20;
pub const INFORMAL_FALLBACK: &str = "Please ask me something about the car.";

pub const ORCHESTRATOR_TEMPLATE: &str = "orchestrator";
pub const READER_TEMPLATE: &str = "reader";
pub const ABSTRACTIVE_TEMPLATE: &str = "abstractive";
pub const INFORMAL_TEMPLATE: &str = "informal";

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("precondition failed: {0}")]
    Precondition(&'static str),
    #[error("generation unavailable")]
    GenerationUnavailable(Option<ProviderError>),
    #[error("unverifiable span")]
    UnverifiableSpan(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("exemplars: {0}")]
    Exemplars(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Extractive,
    Generative,
    Informal,
}

impl CandidateKind {
    /// Lower wins ties.
    pub fn priority(self) -> u8 {
        match self {
            CandidateKind::Extractive => 0,
            CandidateKind::Generative => 1,
            CandidateKind::Informal => 2,
        }
    }
}

impl std::fmt::Display for CandidateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Extractive => "extractive",
            Self::Generative => "generative",
            Self::Informal => "informal",
        })
    }
}

/// Character offsets into a paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub paragraph_id: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub kind: CandidateKind,
    pub grounded_paragraph_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
    #[serde(default)]
    pub low_confidence: bool,
}

impl AnswerCandidate {
    pub fn informal(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            kind: CandidateKind::Informal,
            grounded_paragraph_ids: Vec::new(),
            span: None,
            low_confidence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextParagraph {
    pub paragraph_id: String,
    pub text: String,
}

/// Inputs of one generation: the utterance, recent history and the best
/// retrieved paragraphs in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub utterance: String,
    pub history: Vec<Exchange>,
    pub paragraphs: Vec<ContextParagraph>,
}

impl GenerationContext {
    /// Keeps the first three paragraphs and the last five exchanges.
    pub fn new(utterance: &str, history: &[Exchange], paragraphs: Vec<ContextParagraph>) -> Self {
        let skip = history.len().saturating_sub(MAX_HISTORY_EXCHANGES);
        let mut paragraphs = paragraphs;
        paragraphs.truncate(MAX_CONTEXT_PARAGRAPHS);
        Self {
            utterance: utterance.to_string(),
            history: history[skip..].to_vec(),
            paragraphs,
        }
    }

    pub fn paragraph_texts(&self) -> Vec<String> {
        self.paragraphs.iter().map(|p| p.text.clone()).collect()
    }
}

/// A few-shot exemplar dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub turns: Vec<Exchange>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DialogueFile {
    Full(Dialogue),
    Bare(Vec<Exchange>),
}

/// Parses a JSON array of dialogues. Each dialogue is either an object
/// with `turns` (and optional `context`) or a bare array of exchanges.
pub fn parse_dialogues(content: &str) -> Result<Vec<Dialogue>, AnswerError> {
    let raw: Vec<DialogueFile> = serde_json::from_str(content).map_err(|e| AnswerError::Exemplars(e.to_string()))?;
    raw.into_iter()
        .map(|d| {
            let d = match d {
                DialogueFile::Full(d) => d,
                DialogueFile::Bare(turns) => Dialogue { context: None, turns },
            };
            if d.turns.is_empty() {
                Err(AnswerError::Exemplars("dialogue without turns".into()))
            } else {
                Ok(d)
            }
        })
        .collect()
}

pub fn render_paragraphs<S: AsRef<str>>(paragraphs: &[S]) -> String {
    paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| format!("[{}] {}", i + 1, p.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_history(history: &[Exchange]) -> String {
    history
        .iter()
        .map(|e| format!("User: {}\nSystem: {}\n", e.user, e.system))
        .collect()
}

fn render_exemplar(slot: usize, d: &Dialogue) -> String {
    let mut s = format!("Dialogue {slot}: ");
    if let Some(c) = &d.context {
        s.push_str(&format!("Context: {c}\n"));
    }
    s.push_str(&render_history(&d.turns));
    s.push('\n');
    s
}

/// The prompt templates and exemplar dialogues.
#[derive(Debug, Clone)]
pub struct Prompts {
    pub store: TemplateStore,
    pub abstractive_exemplars: Vec<Dialogue>,
    pub informal_exemplars: Vec<Dialogue>,
    /// Upper bound on rendered abstractive prompt length, in characters.
    pub char_budget: usize,
}

const BUNDLED_TEMPLATES: [(&str, &str); 4] = [
    (ORCHESTRATOR_TEMPLATE, include_str!("../data/prompts/orchestrator.txt")),
    (READER_TEMPLATE, include_str!("../data/prompts/reader.txt")),
    (ABSTRACTIVE_TEMPLATE, include_str!("../data/prompts/abstractive.txt")),
    (INFORMAL_TEMPLATE, include_str!("../data/prompts/informal.txt")),
];

impl Prompts {
    pub fn bundled() -> Self {
        Self::new(
            BUNDLED_TEMPLATES.map(|(id, body)| (id, body.trim_end().to_string())),
            parse_dialogues(include_str!("../data/abstractive_exemplars.json")).expect("bundled exemplars parse"),
            parse_dialogues(include_str!("../data/informal_exemplars.json")).expect("bundled exemplars parse"),
        )
        .expect("bundled templates are valid")
    }

    pub fn new(templates: [(&str, String); 4], abstractive: Vec<Dialogue>, informal: Vec<Dialogue>) -> Result<Self, AnswerError> {
        let mut store = TemplateStore::new();
        for (id, body) in templates {
            store.register(PromptTemplate::new(id, body)?)?;
        }
        Ok(Self {
            store,
            abstractive_exemplars: abstractive,
            informal_exemplars: informal,
            char_budget: DEFAULT_PROMPT_BUDGET,
        })
    }

    /// Loads overrides from `dir`: `prompts/<id>.txt`,
    /// `abstractive_exemplars.json` and `informal_exemplars.json`. Missing
    /// files keep the bundled version.
    pub fn from_dir(dir: &Path) -> Result<Self, AnswerError> {
        let read = |rel: &str| -> Result<Option<String>, AnswerError> {
            match std::fs::read_to_string(dir.join(rel)) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(AnswerError::Exemplars(format!("{rel}: {e}"))),
            }
        };
        let mut templates = BUNDLED_TEMPLATES.map(|(id, body)| (id, body.trim_end().to_string()));
        for (id, body) in &mut templates {
            if let Some(b) = read(&format!("prompts/{id}.txt"))? {
                *body = b.trim_end().to_string();
            }
        }
        let bundled = Self::bundled();
        let abstractive = match read("abstractive_exemplars.json")? {
            Some(s) => parse_dialogues(&s)?,
            None => bundled.abstractive_exemplars,
        };
        let informal = match read("informal_exemplars.json")? {
            Some(s) => parse_dialogues(&s)?,
            None => bundled.informal_exemplars,
        };
        Self::new(templates, abstractive, informal)
    }

    fn template(&self, id: &str) -> Result<std::sync::Arc<PromptTemplate>, AnswerError> {
        Ok(self.store.get(id)?)
    }

    pub fn render_orchestrator<S: AsRef<str>>(&self, utterance: &str, paragraphs: &[S]) -> Result<String, AnswerError> {
        Ok(self.template(ORCHESTRATOR_TEMPLATE)?.render(&bindings([
            ("user utterance", utterance.to_string()),
            ("paragraphs", render_paragraphs(paragraphs)),
        ]))?)
    }

    pub fn render_reader<S: AsRef<str>>(&self, utterance: &str, paragraphs: &[S]) -> Result<String, AnswerError> {
        Ok(self.template(READER_TEMPLATE)?.render(&bindings([
            ("user utterance", utterance.to_string()),
            ("paragraphs", render_paragraphs(paragraphs)),
        ]))?)
    }

    fn render_dialogues(
        &self,
        id: &str,
        exemplars: &[Dialogue],
        slots: usize,
        utterance: &str,
        history: &[Exchange],
        paragraphs: Option<&[String]>,
    ) -> Result<String, AnswerError> {
        let used = &exemplars[..exemplars.len().min(slots)];
        let examples: String = used.iter().enumerate().map(|(i, d)| render_exemplar(i + 1, d)).collect();
        let mut b: BTreeMap<String, String> = bindings([
            ("examples", examples),
            ("slot", (used.len() + 1).to_string()),
            ("history", render_history(history)),
            ("user utterance", utterance.to_string()),
        ]);
        if let Some(p) = paragraphs {
            b.insert("paragraphs".into(), render_paragraphs(p));
        }
        Ok(self.template(id)?.render(&b)?)
    }

    /// Renders the abstractive prompt. While over the character budget,
    /// the oldest history exchange is dropped, then the lowest-ranked
    /// paragraph; at least one paragraph is always kept. Returns the prompt
    /// with the history and paragraphs that made it in.
    pub fn render_abstractive(&self, ctx: &GenerationContext) -> Result<(String, Vec<Exchange>, Vec<String>), AnswerError> {
        let mut history = ctx.history.clone();
        let mut paragraphs = ctx.paragraph_texts();
        loop {
            let rendered = self.render_dialogues(
                ABSTRACTIVE_TEMPLATE,
                &self.abstractive_exemplars,
                ABSTRACTIVE_EXEMPLAR_SLOTS,
                &ctx.utterance,
                &history,
                Some(&paragraphs),
            )?;
            if rendered.chars().count() <= self.char_budget {
                return Ok((rendered, history, paragraphs));
            }
            if !history.is_empty() {
                history.remove(0);
            } else if paragraphs.len() > 1 {
                paragraphs.pop();
            } else {
                return Ok((rendered, history, paragraphs));
            }
        }
    }

    pub fn render_informal(&self, utterance: &str, history: &[Exchange]) -> Result<String, AnswerError> {
        let skip = history.len().saturating_sub(MAX_HISTORY_EXCHANGES);
        self.render_dialogues(
            INFORMAL_TEMPLATE,
            &self.informal_exemplars,
            INFORMAL_EXEMPLAR_SLOTS,
            utterance,
            &history[skip..],
            None,
        )
    }
}

/// Generative answer from the abstractive template.
pub fn generate_answer(
    provider: &dyn Provider,
    prompts: &Prompts,
    ctx: &GenerationContext,
    retry: &RetryPolicy,
) -> Result<AnswerCandidate, AnswerError> {
    if ctx.paragraphs.is_empty() {
        return Err(AnswerError::Precondition("generation needs at least one paragraph"));
    }
    let (rendered, history, paragraphs) = prompts.render_abstractive(ctx)?;
    let transcript = ChatTranscript::prompt(ABSTRACTIVE_TEMPLATE, rendered).with_context(&ctx.utterance, &history, paragraphs);
    let response = complete(provider, &transcript, &preset(PresetKind::Generator), retry)
        .map_err(|e| AnswerError::GenerationUnavailable(Some(e)))?;
    let text = response.usable_text().ok_or(AnswerError::GenerationUnavailable(None))?;
    Ok(AnswerCandidate {
        text: text.to_string(),
        kind: CandidateKind::Generative,
        grounded_paragraph_ids: ctx.paragraphs.iter().map(|p| p.paragraph_id.clone()).collect(),
        span: None,
        low_confidence: false,
    })
}

/// Reply from the informal-talk template, or `fallback` when the provider
/// gives nothing usable.
pub fn informal_reply(
    provider: &dyn Provider,
    prompts: &Prompts,
    utterance: &str,
    history: &[Exchange],
    retry: &RetryPolicy,
    fallback: &str,
) -> AnswerCandidate {
    let reply = prompts.render_informal(utterance, history).ok().and_then(|rendered| {
        let transcript = ChatTranscript::prompt(INFORMAL_TEMPLATE, rendered).with_context(utterance, history, Vec::new());
        let response = complete(provider, &transcript, &preset(PresetKind::Generator), retry).ok()?;
        response.usable_text().map(str::to_string)
    });
    AnswerCandidate::informal(reply.unwrap_or_else(|| fallback.to_string()))
}

fn span_candidate(p: &ContextParagraph, range: std::ops::Range<usize>, low_confidence: bool) -> AnswerCandidate {
    AnswerCandidate {
        text: p.text[range.clone()].to_string(),
        kind: CandidateKind::Extractive,
        grounded_paragraph_ids: vec![p.paragraph_id.clone()],
        span: Some(Span {
            paragraph_id: p.paragraph_id.clone(),
            char_start: char_offset(&p.text, range.start),
            char_end: char_offset(&p.text, range.end),
        }),
        low_confidence,
    }
}

/// Locates `answer` in the paragraphs (rank order), tolerating case,
/// whitespace and Unicode composition differences. The candidate text is
/// the verbatim paragraph slice.
pub fn locate_span(answer: &str, paragraphs: &[ContextParagraph]) -> Option<AnswerCandidate> {
    let trimmed = answer.trim().trim_matches(|c| matches!(c, '"' | '\'' | '\u{201c}' | '\u{201d}')).trim();
    let needle = MatchText::new(trimmed);
    paragraphs
        .iter()
        .find_map(|p| MatchText::new(&p.text).find(&needle).map(|r| span_candidate(p, r, false)))
}

/// Extractive answer from the reader prompt.
pub fn llm_extract_span(
    provider: &dyn Provider,
    prompts: &Prompts,
    utterance: &str,
    paragraphs: &[ContextParagraph],
    retry: &RetryPolicy,
) -> Result<AnswerCandidate, AnswerError> {
    if paragraphs.is_empty() {
        return Err(AnswerError::Precondition("extraction needs at least one paragraph"));
    }
    let texts: Vec<String> = paragraphs.iter().map(|p| p.text.clone()).collect();
    let rendered = prompts.render_reader(utterance, &texts)?;
    let transcript = ChatTranscript::prompt(READER_TEMPLATE, rendered).with_context(utterance, &[], texts);
    let response = complete(provider, &transcript, &preset(PresetKind::Reader), retry)
        .map_err(|e| AnswerError::GenerationUnavailable(Some(e)))?;
    let text = response.usable_text().ok_or(AnswerError::GenerationUnavailable(None))?;
    locate_span(text, paragraphs).ok_or_else(|| AnswerError::UnverifiableSpan(text.to_string()))
}

fn content_tokens(text: &str, stopwords: &Stopwords) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !stopwords.contains(t)).collect()
}

fn bag(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// Overlap F1 as the exact fraction `2c / (|w| + |q|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Overlap {
    num: usize,
    den: usize,
}

impl Overlap {
    fn beats(self, other: Overlap) -> bool {
        self.num * other.den > other.num * self.den
    }
}

/// Candidate windows of a paragraph: every run of consecutive sentences
/// with at most `window_words` words, plus every single sentence.
pub fn sentence_windows(text: &str, window_words: usize) -> Vec<std::ops::Range<usize>> {
    let sentences = sentence_spans(text);
    let counts: Vec<usize> = sentences.iter().map(|r| word_count(&text[r.clone()])).collect();
    let mut out = Vec::new();
    for i in 0..sentences.len() {
        let mut words = 0;
        for j in i..sentences.len() {
            words += counts[j];
            if j > i && words > window_words {
                break;
            }
            out.push(sentences[i].start..sentences[j].end);
        }
    }
    out
}

/// Offline reader: the sentence-aligned window with the best content-token
/// F1 against the utterance. Ties go to the higher-ranked paragraph, then the
/// earlier start, then the shorter window.
pub fn lexical_extract_span(
    utterance: &str,
    paragraphs: &[ContextParagraph],
    window_words: usize,
    stopwords: &Stopwords,
) -> Result<AnswerCandidate, AnswerError> {
    if paragraphs.is_empty() {
        return Err(AnswerError::Precondition("extraction needs at least one paragraph"));
    }
    let query = content_tokens(utterance, stopwords);
    let qbag = bag(&query);
    let mut best: Option<(Overlap, usize, std::ops::Range<usize>)> = None;
    for (rank, p) in paragraphs.iter().enumerate() {
        for w in sentence_windows(&p.text, window_words) {
            let wt = content_tokens(&p.text[w.clone()], stopwords);
            let common: usize = bag(&wt).iter().map(|(t, c)| (*c).min(*qbag.get(t).unwrap_or(&0))).sum();
            if common == 0 {
                continue;
            }
            let score = Overlap {
                num: 2 * common,
                den: wt.len() + query.len(),
            };
            if best.as_ref().is_none_or(|(b, _, _)| score.beats(*b)) {
                best = Some((score, rank, w));
            }
        }
    }
    if let Some((_, rank, range)) = best {
        return Ok(span_candidate(&paragraphs[rank], range, false));
    }
    let first = &paragraphs[0];
    let range = sentence_spans(&first.text).into_iter().next().unwrap_or(0..first.text.len());
    Ok(span_candidate(first, range, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockProvider, ScriptRule, SimulatedFailure};

    fn ctxp(id: &str, text: &str) -> ContextParagraph {
        ContextParagraph {
            paragraph_id: id.into(),
            text: text.into(),
        }
    }

    fn ex(u: &str, s: &str) -> Exchange {
        Exchange {
            user: u.into(),
            system: s.into(),
        }
    }

    #[test]
    fn context_truncation() {
        let history: Vec<Exchange> = (0..8).map(|i| ex(&format!("u{i}"), "s")).collect();
        let paras = (0..5).map(|i| ctxp(&format!("p{i}"), "t")).collect();
        let c = GenerationContext::new("q", &history, paras);
        assert_eq!(c.paragraphs.len(), 3);
        assert_eq!(c.history.len(), 5);
        assert_eq!(c.history[0].user, "u3");
    }

    #[test]
    fn bundled_prompts_render_without_leftover_placeholders() {
        let p = Prompts::bundled();
        assert_eq!(p.abstractive_exemplars.len(), 6);
        assert_eq!(p.informal_exemplars.len(), 20);
        let c = GenerationContext::new("How do I fold the seats?", &[ex("hi", "hello")], vec![ctxp("a:0000", "Pull the lever.")]);
        let (r, _, _) = p.render_abstractive(&c).unwrap();
        assert!(r.starts_with("Task: Answer questions about the car"));
        assert!(r.contains("Dialogue 5: ") && r.contains("Dialogue 6: Context: [1] Pull the lever.\nUser: hi\nSystem: hello\nUser: How do I fold the seats?\nSystem:"));
        assert!(!r.contains("Dialogue 7"));
        let i = p.render_informal("thanks!", &[]).unwrap();
        assert!(i.contains("Dialogue 21: User: thanks!\nSystem:"));
        let o = p.render_orchestrator("q", &["a", "b"]).unwrap();
        assert!(o.ends_with("Question: q Paragraphs: [1] a\n[2] b Answer:"));
        let rd = p.render_reader("q", &["a"]).unwrap();
        assert!(rd.starts_with("Task: Given the following question and paragraphs, extract exactly one continuous answer span"));
    }

    #[test]
    fn fewer_exemplars_render_fewer_slots() {
        let mut p = Prompts::bundled();
        p.informal_exemplars.truncate(12);
        let r = p.render_informal("thanks", &[]).unwrap();
        assert!(r.contains("Dialogue 12: ") && r.contains("Dialogue 13: User: thanks"));
        assert!(!r.contains("Dialogue 14"));
        assert!(!r.contains('{'));
    }

    #[test]
    fn budget_trims_history_before_paragraphs() {
        let mut p = Prompts::bundled();
        let base = GenerationContext::new("q", &[], vec![ctxp("a", "alpha"), ctxp("b", "beta")]);
        let floor = p.render_abstractive(&base).unwrap().0.chars().count();
        let long = "x".repeat(200);
        let c = GenerationContext::new("q", &[ex(&long, "s"), ex("short", "s")], base.paragraphs.clone());
        p.char_budget = floor + 30;
        let (r, history, paragraphs) = p.render_abstractive(&c).unwrap();
        assert_eq!(history, vec![ex("short", "s")]);
        assert_eq!(paragraphs.len(), 2);
        assert!(r.chars().count() <= p.char_budget);
        p.char_budget = floor - 1;
        let (_, history, paragraphs) = p.render_abstractive(&c).unwrap();
        assert!(history.is_empty());
        assert_eq!(paragraphs, vec!["alpha".to_string()]);
    }

    #[test]
    fn generate_answer_scripted_and_precondition() {
        let mock = MockProvider::new(vec![ScriptRule::exact("how does park assist work?", "Park assist steers for you.")]).unwrap();
        let p = Prompts::bundled();
        let c = GenerationContext::new("how does park assist work?", &[], vec![ctxp("m:0001", "Park assist steers.")]);
        let a = generate_answer(&mock, &p, &c, &RetryPolicy::no_delay()).unwrap();
        assert_eq!(a.text, "Park assist steers for you.");
        assert_eq!(a.kind, CandidateKind::Generative);
        assert_eq!(a.grounded_paragraph_ids, vec!["m:0001"]);
        let empty = GenerationContext::new("x", &[], vec![]);
        assert!(matches!(generate_answer(&mock, &p, &empty, &RetryPolicy::no_delay()), Err(AnswerError::Precondition(_))));
    }

    #[test]
    fn informal_fallback_on_outage() {
        let mock = MockProvider::new(vec![ScriptRule::exact("thank you!", "").failing(SimulatedFailure::Transport)]).unwrap();
        let a = informal_reply(&mock, &Prompts::bundled(), "thank you!", &[], &RetryPolicy::no_delay(), INFORMAL_FALLBACK);
        assert_eq!(a.text, "Please ask me something about the car.");
        assert_eq!(a.kind, CandidateKind::Informal);
        assert!(a.grounded_paragraph_ids.is_empty());
    }

    #[test]
    fn llm_span_located_and_verbatim() {
        let paras = vec![
            ctxp("a", "Open the  Fuel flap by pressing it. Then unscrew the cap."),
            ctxp("b", "Nothing here."),
            ctxp("c", "Then unscrew the cap."),
        ];
        let mock = MockProvider::new(vec![
            ScriptRule::exact("q1", "open the fuel flap"),
            ScriptRule::exact("q2", "then UNSCREW the cap."),
            ScriptRule::exact("q3", "Remove the wheel."),
        ])
        .unwrap();
        let p = Prompts::bundled();
        let r = RetryPolicy::no_delay();
        let a = llm_extract_span(&mock, &p, "q1", &paras, &r).unwrap();
        assert_eq!(a.text, "Open the  Fuel flap");
        let b = llm_extract_span(&mock, &p, "q2", &paras, &r).unwrap();
        let span = b.span.unwrap();
        assert_eq!(span.paragraph_id, "a");
        assert_eq!(crate::text::char_slice(&paras[0].text, span.char_start, span.char_end).unwrap(), b.text);
        assert!(matches!(llm_extract_span(&mock, &p, "q3", &paras, &r), Err(AnswerError::UnverifiableSpan(_))));
    }

    #[test]
    fn lexical_reader_exact_sentence_and_fallback() {
        let sw = Stopwords::bundled();
        let paras = vec![ctxp("a", "The spare wheel is under the floor. Fold the rear seats with the lever.")];
        let a = lexical_extract_span("Fold the rear seats with the lever.", &paras, 40, &sw).unwrap();
        assert_eq!(a.text, "Fold the rear seats with the lever.");
        assert!(!a.low_confidence);
        let b = lexical_extract_span("quantum zebra", &paras, 40, &sw).unwrap();
        assert_eq!(b.text, "The spare wheel is under the floor.");
        assert!(b.low_confidence);
    }

    #[test]
    fn windows_respect_word_limit() {
        let t = "One two three. Four five six. Seven eight nine ten eleven.";
        let w = sentence_windows(t, 6);
        let texts: Vec<&str> = w.iter().map(|r| &t[r.clone()]).collect();
        assert_eq!(
            texts,
            vec![
                "One two three.",
                "One two three. Four five six.",
                "Four five six.",
                "Seven eight nine ten eleven."
            ]
        );
    }
}
