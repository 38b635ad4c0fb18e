//! Answer moderation: pick the best candidate and filter ungrounded ones.
//!
//! Two selectors are available. Cosine moderation picks the candidate whose
//! embedding is closest to the utterance. Extraction-score moderation picks
//! the candidate that is cheapest to edit into the retrieved paragraphs under
//! a token-class cost schedule, and withholds it when even the best candidate
//! is too far from the material.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answering::{AnswerCandidate, CandidateKind};
use crate::retrieval::{cosine_similarity, Embedder};
use crate::text::tokenize;

pub const DEFAULT_THRESHOLD: f64 = 0.35;
pub const FILTERED_FALLBACK: &str = "I cannot answer that reliably from my material.";

#[derive(Debug, Error)]
pub enum ModerationError {
    #[error("no paragraphs to score against")]
    NoParagraphs,
    #[error("no candidates to moderate")]
    NoCandidates,
    #[error("cost table: {0}")]
    CostTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Default,
    Stopword,
    Input,
    Reference,
}

impl TokenClass {
    /// Highest precedence first.
    pub const PRECEDENCE: [TokenClass; 4] = [TokenClass::Reference, TokenClass::Input, TokenClass::Stopword, TokenClass::Default];

    fn index(self) -> usize {
        match self {
            TokenClass::Default => 0,
            TokenClass::Stopword => 1,
            TokenClass::Input => 2,
            TokenClass::Reference => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TokenClass::Default => "default",
            TokenClass::Stopword => "stopword",
            TokenClass::Input => "input",
            TokenClass::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Insert,
    Delete,
    Substitute,
}

/// Per-operation costs of one token class; `None` inherits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCosts {
    pub ins: Option<f64>,
    pub del: Option<f64>,
    pub sub: Option<f64>,
}

impl OpCosts {
    pub const fn all(c: f64) -> Self {
        Self {
            ins: Some(c),
            del: Some(c),
            sub: Some(c),
        }
    }

    fn get(&self, op: EditOp) -> Option<f64> {
        match op {
            EditOp::Insert => self.ins,
            EditOp::Delete => self.del,
            EditOp::Substitute => self.sub,
        }
    }
}

/// Edit costs by token class and operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    rows: [OpCosts; 4],
}

impl Default for CostTable {
    /// default 1/1/1, stopwords 0.5/0.5/0.5, input tokens INS 0.5 and SUB 0.1,
    /// reference tokens DEL 2.0; every other cell inherits.
    fn default() -> Self {
        Self {
            rows: [
                OpCosts::all(1.0),
                OpCosts::all(0.5),
                OpCosts {
                    ins: Some(0.5),
                    del: None,
                    sub: Some(0.1),
                },
                OpCosts {
                    ins: None,
                    del: Some(2.0),
                    sub: None,
                },
            ],
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CellValue {
    Cost(f64),
    Word(String),
}

impl CostTable {
    pub fn new(default: [f64; 3], stopword: OpCosts, input: OpCosts, reference: OpCosts) -> Result<Self, ModerationError> {
        let t = Self {
            rows: [
                OpCosts {
                    ins: Some(default[0]),
                    del: Some(default[1]),
                    sub: Some(default[2]),
                },
                stopword,
                input,
                reference,
            ],
        };
        t.validate()?;
        Ok(t)
    }

    /// All-ones default row and every other cell inheriting.
    pub fn uniform() -> Self {
        Self {
            rows: [OpCosts::all(1.0), OpCosts::default(), OpCosts::default(), OpCosts::default()],
        }
    }

    pub fn row(&self, class: TokenClass) -> OpCosts {
        self.rows[class.index()]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut rows = self.rows;
        for r in &mut rows {
            r.ins = r.ins.map(|c| c * factor);
            r.del = r.del.map(|c| c * factor);
            r.sub = r.sub.map(|c| c * factor);
        }
        Self { rows }
    }

    pub fn validate(&self) -> Result<(), ModerationError> {
        let default = self.row(TokenClass::Default);
        if default.ins.is_none() || default.del.is_none() || default.sub.is_none() {
            return Err(ModerationError::CostTable("default row must define ins, del and sub".into()));
        }
        for class in TokenClass::PRECEDENCE {
            let r = self.row(class);
            for c in [r.ins, r.del, r.sub].into_iter().flatten() {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(ModerationError::CostTable(format!("{} cost {c} must be finite and >= 0", class.name())));
                }
            }
        }
        Ok(())
    }

    /// Parses the override file: one table per class (`[default]`,
    /// `[stopword]`, `[input]`, `[reference]`) with keys `ins`, `del`, `sub`.
    /// A missing key or the string `"inherit"` inherits. Unlisted classes
    /// keep the built-in schedule.
    pub fn from_toml(content: &str) -> Result<Self, ModerationError> {
        let doc: toml::Table = content.parse().map_err(|e| ModerationError::CostTable(format!("{e}")))?;
        let mut table = Self::default();
        for (section, value) in doc {
            let class = match section.as_str() {
                "default" => TokenClass::Default,
                "stopword" | "stopwords" => TokenClass::Stopword,
                "input" => TokenClass::Input,
                "reference" => TokenClass::Reference,
                other => return Err(ModerationError::CostTable(format!("unknown token class [{other}]"))),
            };
            let cells = value
                .as_table()
                .ok_or_else(|| ModerationError::CostTable(format!("[{section}] must be a table")))?;
            let mut row = OpCosts::default();
            for (key, cell) in cells {
                let parsed: CellValue = cell
                    .clone()
                    .try_into()
                    .map_err(|e| ModerationError::CostTable(format!("[{section}].{key}: {e}")))?;
                let cost = match parsed {
                    CellValue::Cost(c) => Some(c),
                    CellValue::Word(w) if w == "inherit" || w == "-" => None,
                    CellValue::Word(w) => return Err(ModerationError::CostTable(format!("[{section}].{key}: {w:?} is not a cost"))),
                };
                match key.as_str() {
                    "ins" => row.ins = cost,
                    "del" => row.del = cost,
                    "sub" => row.sub = cost,
                    other => return Err(ModerationError::CostTable(format!("[{section}]: unknown operation {other:?}"))),
                }
            }
            table.rows[class.index()] = row;
        }
        table.validate()?;
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<Self, ModerationError> {
        let content = std::fs::read_to_string(path).map_err(|e| ModerationError::CostTable(format!("{}: {e}", path.display())))?;
        Self::from_toml(&content)
    }

    /// Cost of applying `op` to `token`. Inherited cells fall through the
    /// classes the token belongs to, in precedence order, down to default.
    pub fn cost(&self, token: &str, op: EditOp, ctx: &TokenClassContext<'_>) -> f64 {
        for class in TokenClass::PRECEDENCE {
            if ctx.is_member(class, token) {
                if let Some(c) = self.row(class).get(op) {
                    return c;
                }
            }
        }
        unreachable!("validated default row defines every operation")
    }
}

/// Frozen English stopword list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

impl Stopwords {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    /// One word per line; `#` starts a comment line.
    pub fn parse(content: &str) -> Self {
        Self(
            content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .flat_map(tokenize)
                .collect(),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn set(&self) -> &HashSet<String> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<String> for Stopwords {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Token sets that decide each token's class.
#[derive(Debug, Clone, Copy)]
pub struct TokenClassContext<'a> {
    pub stopwords: &'a HashSet<String>,
    pub input: &'a HashSet<String>,
    pub reference: &'a HashSet<String>,
}

impl TokenClassContext<'_> {
    pub fn is_member(&self, class: TokenClass, token: &str) -> bool {
        match class {
            TokenClass::Default => true,
            TokenClass::Stopword => self.stopwords.contains(token),
            TokenClass::Input => self.input.contains(token),
            TokenClass::Reference => self.reference.contains(token),
        }
    }

    /// Highest-precedence class containing `token`.
    pub fn classify(&self, token: &str) -> TokenClass {
        TokenClass::PRECEDENCE
            .into_iter()
            .find(|c| self.is_member(*c, token))
            .unwrap_or(TokenClass::Default)
    }
}

/// Minimum cost of editing `x` into `y`.
///
/// Deleting a token of `x` costs its DEL, inserting a token of `y` costs its
/// INS, substituting costs the SUB of the incoming `y` token, and equal
/// tokens align for free.
pub fn weighted_levenshtein(x: &[String], y: &[String], costs: &CostTable, ctx: &TokenClassContext<'_>) -> f64 {
    let del: Vec<f64> = x.iter().map(|t| costs.cost(t, EditOp::Delete, ctx)).collect();
    let ins: Vec<f64> = y.iter().map(|t| costs.cost(t, EditOp::Insert, ctx)).collect();
    let sub: Vec<f64> = y.iter().map(|t| costs.cost(t, EditOp::Substitute, ctx)).collect();

    let mut prev: Vec<f64> = Vec::with_capacity(y.len() + 1);
    prev.push(0.0);
    for j in 0..y.len() {
        prev.push(prev[j] + ins[j]);
    }
    let mut cur = vec![0.0; y.len() + 1];
    for i in 0..x.len() {
        cur[0] = prev[0] + del[i];
        for j in 0..y.len() {
            let replace = if x[i] == y[j] { prev[j] } else { prev[j] + sub[j] };
            let delete = prev[j + 1] + del[i];
            let insert = cur[j] + ins[j];
            cur[j + 1] = delete.min(insert).min(replace);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[y.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputClassSource {
    /// Tokens of all retrieved paragraphs.
    Context,
    /// Tokens of the user utterance.
    Utterance,
}

impl FromStr for InputClassSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "context" => Ok(Self::Context),
            "utterance" => Ok(Self::Utterance),
            other => Err(format!("unknown input_class_source {other:?}")),
        }
    }
}

pub fn input_tokens(source: InputClassSource, utterance: &str, paragraphs: &[&str]) -> HashSet<String> {
    match source {
        InputClassSource::Context => paragraphs.iter().flat_map(|p| tokenize(p)).collect(),
        InputClassSource::Utterance => tokenize(utterance).into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphTerm {
    pub dist: f64,
    /// `max(|x|, |y_i|)` in tokens.
    pub normalizer: usize,
    /// `1 - dist / normalizer`, clamped to `[0, 1]`.
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionScoreReport {
    pub per_paragraph: Vec<ParagraphTerm>,
    pub score: f64,
    pub n: usize,
    pub empty_answer: bool,
}

/// Mean over paragraphs of the clamped normalized edit similarity between the
/// answer and each paragraph.
pub fn extraction_score(
    answer: &str,
    paragraphs: &[&str],
    costs: &CostTable,
    stopwords: &Stopwords,
    input: &HashSet<String>,
) -> Result<ExtractionScoreReport, ModerationError> {
    if paragraphs.is_empty() {
        return Err(ModerationError::NoParagraphs);
    }
    let x = tokenize(answer);
    if x.is_empty() {
        return Ok(ExtractionScoreReport {
            per_paragraph: Vec::new(),
            score: 0.0,
            n: paragraphs.len(),
            empty_answer: true,
        });
    }
    let per_paragraph: Vec<ParagraphTerm> = paragraphs
        .iter()
        .map(|p| {
            let y = tokenize(p);
            let reference: HashSet<String> = y.iter().cloned().collect();
            let ctx = TokenClassContext {
                stopwords: stopwords.set(),
                input,
                reference: &reference,
            };
            let dist = weighted_levenshtein(&x, &y, costs, &ctx);
            let normalizer = x.len().max(y.len());
            let term = (1.0 - dist / normalizer as f64).clamp(0.0, 1.0);
            ParagraphTerm { dist, normalizer, term }
        })
        .collect();
    let score = per_paragraph.iter().map(|t| t.term).sum::<f64>() / per_paragraph.len() as f64;
    Ok(ExtractionScoreReport {
        n: per_paragraph.len(),
        per_paragraph,
        score,
        empty_answer: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModerationMethod {
    Cosine,
    ExtractionScore,
}

impl FromStr for ModerationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "extraction_score" => Ok(Self::ExtractionScore),
            other => Err(format!("unknown moderator {other:?}")),
        }
    }
}

impl std::fmt::Display for ModerationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::ExtractionScore => "extraction_score",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub kind: CandidateKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationDecision {
    /// Winning candidate; `None` only when there was nothing to choose from.
    pub chosen: Option<AnswerCandidate>,
    pub method: ModerationMethod,
    /// One entry per candidate that could be scored, in candidate order.
    pub scores: Vec<CandidateScore>,
    pub filtered: bool,
    pub fallback_text: Option<String>,
}

impl ModerationDecision {
    /// A filtered decision with nothing chosen.
    pub fn unavailable(method: ModerationMethod, fallback: &str) -> Self {
        Self {
            chosen: None,
            method,
            scores: Vec::new(),
            filtered: true,
            fallback_text: Some(fallback.to_string()),
        }
    }

    /// Text the user sees.
    pub fn final_text(&self) -> &str {
        if self.filtered {
            self.fallback_text.as_deref().unwrap_or(FILTERED_FALLBACK)
        } else {
            self.chosen.as_ref().map_or(FILTERED_FALLBACK, |c| c.text.as_str())
        }
    }

    /// Kind of the emitted answer, if one was emitted.
    pub fn emitted_kind(&self) -> Option<CandidateKind> {
        if self.filtered {
            None
        } else {
            self.chosen.as_ref().map(|c| c.kind)
        }
    }
}

/// Index of the best candidate: highest score, then extractive before
/// generative before informal, then lexicographically smallest text. The
/// result does not depend on candidate order.
fn select(candidates: &[AnswerCandidate], scores: &[(usize, f64)]) -> Option<usize> {
    scores
        .iter()
        .min_by(|(ia, sa), (ib, sb)| {
            sb.total_cmp(sa)
                .then_with(|| candidates[*ia].kind.priority().cmp(&candidates[*ib].kind.priority()))
                .then_with(|| candidates[*ia].text.cmp(&candidates[*ib].text))
        })
        .map(|(i, _)| *i)
}

/// Chooses the candidate whose embedding is most similar to the utterance.
/// Candidates that cannot be embedded are skipped; if none can be scored the
/// decision is filtered.
pub fn cosine_moderate(
    embedder: &dyn Embedder,
    utterance: &str,
    candidates: &[AnswerCandidate],
    fallback: &str,
) -> Result<ModerationDecision, ModerationError> {
    if candidates.is_empty() {
        return Err(ModerationError::NoCandidates);
    }
    let Ok(q) = embedder.embed(utterance) else {
        return Ok(ModerationDecision::unavailable(ModerationMethod::Cosine, fallback));
    };
    let scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let v = embedder.embed(&c.text).ok()?;
            cosine_similarity(&q, &v).ok().map(|s| (i, s))
        })
        .collect();
    let Some(best) = select(candidates, &scored) else {
        return Ok(ModerationDecision::unavailable(ModerationMethod::Cosine, fallback));
    };
    Ok(ModerationDecision {
        chosen: Some(candidates[best].clone()),
        method: ModerationMethod::Cosine,
        scores: scored
            .iter()
            .map(|&(i, score)| CandidateScore {
                kind: candidates[i].kind,
                score,
            })
            .collect(),
        filtered: false,
        fallback_text: None,
    })
}

/// Extraction-score selection and grounding filter.
#[derive(Debug, Clone)]
pub struct ExtractionModerator {
    pub costs: CostTable,
    pub stopwords: Stopwords,
    pub input_source: InputClassSource,
    pub threshold: f64,
}

impl Default for ExtractionModerator {
    fn default() -> Self {
        Self {
            costs: CostTable::default(),
            stopwords: Stopwords::bundled(),
            input_source: InputClassSource::Context,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl ExtractionModerator {
    pub fn score(&self, utterance: &str, answer: &str, paragraphs: &[&str]) -> Result<ExtractionScoreReport, ModerationError> {
        let input = input_tokens(self.input_source, utterance, paragraphs);
        extraction_score(answer, paragraphs, &self.costs, &self.stopwords, &input)
    }

    /// Picks the candidate with the highest extraction score and filters it
    /// when that score is below the threshold.
    pub fn moderate(
        &self,
        utterance: &str,
        candidates: &[AnswerCandidate],
        paragraphs: &[&str],
        fallback: &str,
    ) -> Result<ModerationDecision, ModerationError> {
        if candidates.is_empty() {
            return Err(ModerationError::NoCandidates);
        }
        if paragraphs.is_empty() {
            return Err(ModerationError::NoParagraphs);
        }
        let input = input_tokens(self.input_source, utterance, paragraphs);
        let mut scored = Vec::with_capacity(candidates.len());
        for (i, c) in candidates.iter().enumerate() {
            let report = extraction_score(&c.text, paragraphs, &self.costs, &self.stopwords, &input)?;
            scored.push((i, report.score));
        }
        let best = select(candidates, &scored).expect("at least one candidate scored");
        let best_score = scored.iter().find(|(i, _)| *i == best).map(|(_, s)| *s).unwrap_or(0.0);
        let filtered = best_score < self.threshold;
        Ok(ModerationDecision {
            chosen: Some(candidates[best].clone()),
            method: ModerationMethod::ExtractionScore,
            scores: scored
                .iter()
                .map(|&(i, score)| CandidateScore {
                    kind: candidates[i].kind,
                    score,
                })
                .collect(),
            filtered,
            fallback_text: filtered.then(|| fallback.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answering::Span;
    use crate::retrieval::HashedEmbedder;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn set(words: &[&str]) -> HashSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn default_table_cells() {
        let t = CostTable::default();
        assert_eq!(t.row(TokenClass::Default), OpCosts::all(1.0));
        assert_eq!(t.row(TokenClass::Stopword), OpCosts::all(0.5));
        assert_eq!(t.row(TokenClass::Input), OpCosts { ins: Some(0.5), del: None, sub: Some(0.1) });
        assert_eq!(t.row(TokenClass::Reference), OpCosts { ins: None, del: Some(2.0), sub: None });
    }

    #[test]
    fn classification_precedence() {
        let stop = set(&["the"]);
        let input = set(&["seat", "the"]);
        let reference = set(&["seat"]);
        let ctx = TokenClassContext { stopwords: &stop, input: &input, reference: &reference };
        assert_eq!(ctx.classify("seat"), TokenClass::Reference);
        assert_eq!(ctx.classify("the"), TokenClass::Input);
        let empty = HashSet::new();
        let ctx2 = TokenClassContext { stopwords: &stop, input: &empty, reference: &empty };
        assert_eq!(ctx2.classify("the"), TokenClass::Stopword);
        assert_eq!(ctx2.classify("novel"), TokenClass::Default);
    }

    #[test]
    fn inherited_cells_resolve_through_memberships() {
        let t = CostTable::default();
        let stop = set(&["the"]);
        let input = set(&["seat", "the", "belt"]);
        let reference = set(&["seat", "the"]);
        let ctx = TokenClassContext { stopwords: &stop, input: &input, reference: &reference };
        // reference INS inherits the input row
        assert_eq!(t.cost("seat", EditOp::Insert, &ctx), 0.5);
        assert_eq!(t.cost("seat", EditOp::Substitute, &ctx), 0.1);
        assert_eq!(t.cost("seat", EditOp::Delete, &ctx), 2.0);
        // input DEL inherits: stopword if it is one, default otherwise
        assert_eq!(t.cost("belt", EditOp::Delete, &ctx), 1.0);
        let ctx2 = TokenClassContext { stopwords: &stop, input: &input, reference: &HashSet::new() };
        assert_eq!(t.cost("the", EditOp::Delete, &ctx2), 0.5);
    }

    #[test]
    fn identical_sequences_cost_nothing_and_single_insert_costs_one() {
        let empty = HashSet::new();
        let ctx = TokenClassContext { stopwords: &empty, input: &empty, reference: &empty };
        let t = CostTable::default();
        assert_eq!(weighted_levenshtein(&toks("a b c"), &toks("a b c"), &t, &ctx), 0.0);
        assert_eq!(weighted_levenshtein(&[], &toks("wheel"), &t, &ctx), 1.0);
        assert_eq!(weighted_levenshtein(&[], &[], &t, &ctx), 0.0);
    }

    #[test]
    fn extraction_score_identity_and_closed_form() {
        let stop = Stopwords::default();
        let t = CostTable::default();
        let p = "Press the start button twice";
        let r = extraction_score(p, &[p], &t, &stop, &HashSet::new()).unwrap();
        assert_eq!(r.score, 1.0);

        // five unrelated default-class tokens against five others: five
        // substitutions at cost 1
        let r = extraction_score("v w x y z", &["a b c d e"], &CostTable::uniform(), &stop, &HashSet::new()).unwrap();
        assert_eq!(r.per_paragraph[0].dist, 5.0);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn empty_answer_and_no_paragraphs() {
        let stop = Stopwords::default();
        let r = extraction_score(" .. ", &["a"], &CostTable::default(), &stop, &HashSet::new()).unwrap();
        assert!(r.empty_answer);
        assert_eq!(r.score, 0.0);
        assert!(matches!(
            extraction_score("a", &[], &CostTable::default(), &stop, &HashSet::new()),
            Err(ModerationError::NoParagraphs)
        ));
    }

    #[test]
    fn clamping_binds_when_deletions_dominate() {
        // every answer token is a reference token of the paragraph but the
        // order is scrambled, so deletions at 2.0 can push dist past |x|
        let stop = Stopwords::default();
        let r = extraction_score("seat belt seat belt seat belt", &["belt"], &CostTable::default(), &stop, &HashSet::new()).unwrap();
        assert!(r.per_paragraph[0].dist > r.per_paragraph[0].normalizer as f64);
        assert_eq!(r.per_paragraph[0].term, 0.0);
    }

    #[test]
    fn cost_table_override_file() {
        let t = CostTable::from_toml("[default]\nins = 1.0\ndel = 1.0\nsub = 1.0\n[input]\nins = 0.25\ndel = \"inherit\"\n").unwrap();
        assert_eq!(t.row(TokenClass::Input), OpCosts { ins: Some(0.25), del: None, sub: None });
        assert_eq!(t.row(TokenClass::Reference).del, Some(2.0));
        assert!(CostTable::from_toml("[default]\nins = -1.0\n").is_err());
        assert!(CostTable::from_toml("[default]\nins = \"inherit\"\n").is_err());
        assert!(CostTable::from_toml("[bogus]\nins = 1.0\n").is_err());
        assert!(CostTable::from_toml("[input]\nmove = 1.0\n").is_err());
    }

    #[test]
    fn bundled_stopwords_are_loaded() {
        let s = Stopwords::bundled();
        assert!(s.len() >= 150, "got {}", s.len());
        assert!(s.contains("the") && s.contains("of") && !s.contains("seat"));
    }

    fn extractive(text: &str) -> AnswerCandidate {
        AnswerCandidate {
            text: text.into(),
            kind: CandidateKind::Extractive,
            grounded_paragraph_ids: vec!["p".into()],
            span: Some(Span {
                paragraph_id: "p".into(),
                char_start: 0,
                char_end: text.chars().count(),
            }),
            low_confidence: false,
        }
    }

    fn generative(text: &str) -> AnswerCandidate {
        AnswerCandidate {
            text: text.into(),
            kind: CandidateKind::Generative,
            grounded_paragraph_ids: vec!["p".into()],
            span: None,
            low_confidence: false,
        }
    }

    #[test]
    fn cosine_single_and_equal_text() {
        let e = HashedEmbedder::default();
        let d = cosine_moderate(&e, "open the trunk", &[generative("whatever")], FILTERED_FALLBACK).unwrap();
        assert_eq!(d.chosen.unwrap().text, "whatever");
        let d = cosine_moderate(&e, "open the trunk", &[extractive("fold mirrors"), generative("open the trunk")], FILTERED_FALLBACK).unwrap();
        assert_eq!(d.chosen.unwrap().kind, CandidateKind::Generative);
        assert_eq!(d.scores.len(), 2);
        assert!(!d.filtered);
    }

    #[test]
    fn ties_prefer_extractive() {
        let e = HashedEmbedder::default();
        let cands = [generative("open the trunk"), extractive("open the trunk")];
        let d = cosine_moderate(&e, "trunk", &cands, FILTERED_FALLBACK).unwrap();
        assert_eq!(d.chosen.unwrap().kind, CandidateKind::Extractive);
        let m = ExtractionModerator::default();
        let d = m.moderate("trunk", &cands, &["open the trunk"], FILTERED_FALLBACK).unwrap();
        assert_eq!(d.chosen.unwrap().kind, CandidateKind::Extractive);
        assert_eq!(d.scores[0].score, d.scores[1].score);
    }

    #[test]
    fn below_threshold_is_filtered() {
        let m = ExtractionModerator {
            input_source: InputClassSource::Utterance,
            ..Default::default()
        };
        let d = m
            .moderate(
                "where is the spare wheel",
                &[generative("zebras enjoy quantum jazz festivals"), extractive("bananas")],
                &["Pull lever, fold rear seats forward."],
                FILTERED_FALLBACK,
            )
            .unwrap();
        assert!(d.scores.iter().all(|s| s.score < 0.35));
        assert!(d.filtered);
        assert_eq!(d.final_text(), "I cannot answer that reliably from my material.");
        assert_eq!(d.emitted_kind(), None);
    }

    #[test]
    fn unembeddable_candidates_filter_cosine() {
        let e = HashedEmbedder::default();
        let d = cosine_moderate(&e, "trunk", &[generative("?!")], FILTERED_FALLBACK).unwrap();
        assert!(d.filtered);
        assert!(d.chosen.is_none());
    }
}
