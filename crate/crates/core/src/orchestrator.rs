//! Input control: decide whether an utterance is unsafe, needs a
//! clarification, asks for information, or is informal talk.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answering::{Prompts, ORCHESTRATOR_TEMPLATE};
use crate::llm::{complete, preset, ChatTranscript, Exchange, PresetKind, Provider, RetryPolicy};
use crate::text::tokenize;

pub const CLARIFY_PREFIX: &str = "Do you mean";
pub const DEFAULT_CLARIFICATION: &str = "Do you mean you need more details about the car?";
pub const DEFAULT_REFUSAL: &str = "I'm sorry, I cannot provide an answer to that question.";
const REFUSAL_MARKERS: [&str; 2] = ["cannot provide an answer", "decline"];
const INTERROGATIVES: [&str; 13] = [
    "what", "how", "why", "where", "when", "which", "who", "whom", "whose", "can", "could", "does", "is",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceClass {
    Unsafe,
    NeedsClarification,
    InfoSeeking,
    InformalTalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleSource {
    Llm,
    Rules,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchestratorDecision {
    pub utterance_class: UtteranceClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canned_text: Option<String>,
    pub rationale_source: RationaleSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Refuse,
    Clarify,
    AnswerPipeline,
    InformalPipeline,
}

pub fn route(decision: &OrchestratorDecision) -> Route {
    match decision.utterance_class {
        UtteranceClass::Unsafe => Route::Refuse,
        UtteranceClass::NeedsClarification => Route::Clarify,
        UtteranceClass::InfoSeeking => Route::AnswerPipeline,
        UtteranceClass::InformalTalk => Route::InformalPipeline,
    }
}

/// Blocklist and informal-talk lexicon, plus the canned texts for refusals
/// and default clarifications.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyRules {
    blocklist: Vec<String>,
    /// Lexicon entries as token sequences.
    lexicon: Vec<Vec<String>>,
    pub refusal_text: String,
    pub clarification_text: String,
}

fn phrase_lines(content: &str) -> impl Iterator<Item = &str> {
    content.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

impl Default for SafetyRules {
    fn default() -> Self {
        Self::new(include_str!("../data/blocklist.txt"), include_str!("../data/greetings.txt"))
    }
}

impl SafetyRules {
    pub fn new(blocklist: &str, lexicon: &str) -> Self {
        Self {
            blocklist: phrase_lines(blocklist).map(|l| l.to_lowercase()).collect(),
            lexicon: phrase_lines(lexicon).map(tokenize).filter(|t| !t.is_empty()).collect(),
            refusal_text: DEFAULT_REFUSAL.into(),
            clarification_text: DEFAULT_CLARIFICATION.into(),
        }
    }

    /// Bundled lists, overridden by whichever paths are given.
    pub fn load(blocklist: Option<&Path>, lexicon: Option<&Path>) -> std::io::Result<Self> {
        let bundled = Self::default();
        let mut rules = Self::new(
            &blocklist.map(std::fs::read_to_string).transpose()?.unwrap_or_default(),
            &lexicon.map(std::fs::read_to_string).transpose()?.unwrap_or_default(),
        );
        if blocklist.is_none() {
            rules.blocklist = bundled.blocklist;
        }
        if lexicon.is_none() {
            rules.lexicon = bundled.lexicon;
        }
        Ok(rules)
    }

    pub fn with_texts(mut self, refusal: &str, clarification: &str) -> Self {
        self.refusal_text = refusal.into();
        self.clarification_text = clarification.into();
        self
    }

    pub fn is_blocked(&self, utterance: &str) -> bool {
        let collapsed = utterance.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        self.blocklist.iter().any(|p| collapsed.contains(p.as_str()))
    }

    /// Greeting, thanks or feedback with no question in it.
    pub fn is_informal(&self, utterance: &str) -> bool {
        if utterance.contains('?') {
            return false;
        }
        let tokens = tokenize(utterance);
        let wh = |t: &String| INTERROGATIVES[..9].contains(&t.as_str());
        if tokens.is_empty() || INTERROGATIVES.contains(&tokens[0].as_str()) || tokens.iter().any(wh) {
            return false;
        }
        self.lexicon
            .iter()
            .any(|phrase| tokens.windows(phrase.len()).any(|w| w == phrase.as_slice()))
    }

    fn unsafe_decision(&self, source: RationaleSource) -> OrchestratorDecision {
        OrchestratorDecision {
            utterance_class: UtteranceClass::Unsafe,
            canned_text: Some(self.refusal_text.clone()),
            rationale_source: source,
        }
    }
}

fn decision(class: UtteranceClass, source: RationaleSource) -> OrchestratorDecision {
    OrchestratorDecision {
        utterance_class: class,
        canned_text: None,
        rationale_source: source,
    }
}

/// Offline classifier.
pub fn rule_based_classify(utterance: &str, rules: &SafetyRules) -> OrchestratorDecision {
    if rules.is_blocked(utterance) {
        return rules.unsafe_decision(RationaleSource::Rules);
    }
    if rules.is_informal(utterance) {
        return decision(UtteranceClass::InformalTalk, RationaleSource::Rules);
    }
    if tokenize(utterance).len() < 2 {
        return OrchestratorDecision {
            utterance_class: UtteranceClass::NeedsClarification,
            canned_text: Some(rules.clarification_text.clone()),
            rationale_source: RationaleSource::Rules,
        };
    }
    decision(UtteranceClass::InfoSeeking, RationaleSource::Rules)
}

/// Classifies with the orchestration prompt, falling back to the rules when
/// the provider fails. Blocklisted utterances never reach the provider, and
/// informal talk is recognized by the lexicon since the prompt has no label
/// for it.
pub fn classify_utterance(
    provider: &dyn Provider,
    prompts: &Prompts,
    utterance: &str,
    top_paragraphs: &[String],
    history: &[Exchange],
    rules: &SafetyRules,
    retry: &RetryPolicy,
) -> OrchestratorDecision {
    if rules.is_blocked(utterance) {
        return rules.unsafe_decision(RationaleSource::Rules);
    }
    let Ok(rendered) = prompts.render_orchestrator(utterance, top_paragraphs) else {
        return rule_based_classify(utterance, rules);
    };
    let transcript = ChatTranscript::prompt(ORCHESTRATOR_TEMPLATE, rendered).with_context(utterance, history, top_paragraphs.to_vec());
    let response = match complete(provider, &transcript, &preset(PresetKind::Orchestrator), retry) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "orchestrator provider failed, using rules");
            return rule_based_classify(utterance, rules);
        }
    };
    let text = response.text.trim();
    let lower = text.to_lowercase();
    if REFUSAL_MARKERS.iter().any(|m| lower.contains(m)) {
        return OrchestratorDecision {
            utterance_class: UtteranceClass::Unsafe,
            canned_text: Some(text.to_string()),
            rationale_source: RationaleSource::Llm,
        };
    }
    if text.starts_with(CLARIFY_PREFIX) {
        return OrchestratorDecision {
            utterance_class: UtteranceClass::NeedsClarification,
            canned_text: Some(text.to_string()),
            rationale_source: RationaleSource::Llm,
        };
    }
    if rules.is_informal(utterance) {
        return decision(UtteranceClass::InformalTalk, RationaleSource::Rules);
    }
    decision(UtteranceClass::InfoSeeking, RationaleSource::Llm)
}
