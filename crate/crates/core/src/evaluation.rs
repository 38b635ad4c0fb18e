//! Evaluation metrics and the configuration-matrix runner.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answering::{lexical_extract_span, llm_extract_span, CandidateKind, ContextParagraph};
use crate::corpus::{AnswerStart, QaExample};
use crate::pipeline::{history_of, Engine, PipelineError, ReaderKind, SystemConfig};
use crate::retrieval::{cosine_similarity, Embedder, KnowledgeBase, SearchMode};
use crate::text::{is_punctuation, tokenize};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}: no items to average")]
    Empty(&'static str),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{what}: {left} items vs {right}")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("duplicate config label {0:?}")]
    DuplicateLabel(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub items: Vec<ItemScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
}

impl MetricReport {
    /// Report whose value is the mean of `items`.
    pub fn mean(metric: &'static str, items: Vec<ItemScore>) -> Result<Self, EvalError> {
        if items.is_empty() {
            return Err(EvalError::Empty(metric));
        }
        let value = items.iter().map(|i| i.value).sum::<f64>() / items.len() as f64;
        Ok(Self {
            metric: metric.to_string(),
            value,
            items,
            dataset_fingerprint: None,
        })
    }

    pub fn with_fingerprint(mut self, fingerprint: &str) -> Self {
        self.dataset_fingerprint = Some(fingerprint.to_string());
        self
    }
}

/// Mean reciprocal rank of the first gold paragraph within the top `k`.
pub fn mrr_at_k(ranked: &[Vec<String>], gold: &[BTreeSet<String>], k: usize) -> Result<MetricReport, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if ranked.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            what: "mrr",
            left: ranked.len(),
            right: gold.len(),
        });
    }
    let items = ranked
        .iter()
        .zip(gold)
        .enumerate()
        .map(|(i, (list, g))| ItemScore {
            id: format!("q{i}"),
            value: list
                .iter()
                .take(k)
                .position(|p| g.contains(p))
                .map_or(0.0, |pos| 1.0 / (pos + 1) as f64),
        })
        .collect();
    MetricReport::mean("mrr", items)
}

/// Lowercase, drop punctuation and the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s.to_lowercase().chars().filter(|c| !is_punctuation(*c)).collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    if normalize_answer(prediction) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

fn bag<'a>(tokens: impl IntoIterator<Item = &'a str>) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    match (pt.is_empty(), gt.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let gb = bag(gt.iter().copied());
    let common: usize = bag(pt.iter().copied()).iter().map(|(t, c)| (*c).min(*gb.get(t).unwrap_or(&0))).sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Exact-unigram alignment: each prediction token, left to right, takes the
/// reference position right after the previous match when that fits,
/// otherwise the earliest unused matching position.
pub fn meteor_alignment(prediction: &[String], reference: &[String]) -> Vec<Option<usize>> {
    let mut used = vec![false; reference.len()];
    let mut prev: Option<usize> = None;
    prediction
        .iter()
        .map(|tok| {
            let next = prev.map(|p| p + 1).filter(|&j| j < reference.len() && !used[j] && reference[j] == *tok);
            let pick = next.or_else(|| (0..reference.len()).find(|&j| !used[j] && reference[j] == *tok));
            if let Some(j) = pick {
                used[j] = true;
            }
            prev = pick;
            pick
        })
        .collect()
}

/// Unigram METEOR with exact matching only.
pub fn meteor(prediction: &str, reference: &str) -> f64 {
    let p = tokenize(prediction);
    let r = tokenize(reference);
    let alignment = meteor_alignment(&p, &r);
    let m = alignment.iter().flatten().count();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut last: Option<usize> = None;
    for a in &alignment {
        match (*a, last) {
            (Some(j), Some(l)) if j == l + 1 => {}
            (Some(_), _) => chunks += 1,
            _ => {}
        }
        last = *a;
    }
    let precision = m as f64 / p.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

/// Mean cosine between embedded prediction/reference pairs. A pair that
/// cannot be embedded scores 0.
pub fn response_cosine(embedder: &dyn Embedder, predictions: &[String], references: &[String]) -> Result<MetricReport, EvalError> {
    if predictions.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            what: "response_cosine",
            left: predictions.len(),
            right: references.len(),
        });
    }
    let items = predictions
        .iter()
        .zip(references)
        .enumerate()
        .map(|(i, (p, r))| {
            let value = match (embedder.embed(p), embedder.embed(r)) {
                (Ok(a), Ok(b)) => cosine_similarity(&a, &b).unwrap_or(0.0),
                _ => 0.0,
            };
            ItemScore { id: format!("r{i}"), value }
        })
        .collect();
    MetricReport::mean("response_cosine", items)
}

/// Fraction of decisions whose emitted kind equals the gold label; filtered
/// decisions (`None`) count as wrong.
pub fn moderator_accuracy(decisions: &[Option<CandidateKind>], gold: &[CandidateKind]) -> Result<MetricReport, EvalError> {
    if decisions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            what: "moderator_accuracy",
            left: decisions.len(),
            right: gold.len(),
        });
    }
    let items = decisions
        .iter()
        .zip(gold)
        .enumerate()
        .map(|(i, (d, g))| ItemScore {
            id: format!("d{i}"),
            value: if *d == Some(*g) { 1.0 } else { 0.0 },
        })
        .collect();
    MetricReport::mean("moderator_accuracy", items)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contributions {
    pub generative: f64,
    pub extractive: f64,
    pub filtered: f64,
    pub decisions: usize,
}

/// Share of generative, extractive and filtered outcomes over all
/// moderation decisions (`None` = filtered).
pub fn contributions(decisions: &[Option<CandidateKind>]) -> Result<Contributions, EvalError> {
    if decisions.is_empty() {
        return Err(EvalError::Empty("contributions"));
    }
    let n = decisions.len() as f64;
    let count = |k: Option<CandidateKind>| decisions.iter().filter(|d| **d == k).count() as f64;
    let generative = count(Some(CandidateKind::Generative));
    let extractive = count(Some(CandidateKind::Extractive));
    Ok(Contributions {
        generative: generative / n,
        extractive: extractive / n,
        filtered: (n - generative - extractive) / n,
        decisions: decisions.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub query_id: String,
    pub query: String,
    pub gold: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub user: String,
    /// Reference system response.
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<CandidateKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalDialogue {
    pub dialogue_id: String,
    pub turns: Vec<DialogueTurn>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalDataset {
    #[serde(default)]
    pub retrieval: Vec<RetrievalQuery>,
    #[serde(default)]
    pub reader: Vec<QaExample>,
    #[serde(default)]
    pub dialogues: Vec<EvalDialogue>,
}

impl EvalDataset {
    pub fn from_json(content: &str) -> Result<Self, EvalError> {
        serde_json::from_str(content).map_err(|e| EvalError::Dataset(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Every referenced paragraph exists, gold labels are extractive or
    /// generative, and every dialogue has turns.
    pub fn validate(&self, kb: &KnowledgeBase) -> Result<(), EvalError> {
        for q in &self.retrieval {
            if let Some(missing) = q.gold.iter().find(|p| kb.paragraph(p).is_none()) {
                return Err(EvalError::Dataset(format!("query {}: unknown paragraph {missing}", q.query_id)));
            }
        }
        for ex in &self.reader {
            let Some(p) = kb.paragraph(&ex.paragraph_id) else {
                return Err(EvalError::Dataset(format!("reader example: unknown paragraph {}", ex.paragraph_id)));
            };
            if !ex.is_consistent_with(&p.text) {
                return Err(EvalError::Dataset(format!("reader example {:?}: answer not at its offset", ex.question)));
            }
        }
        for d in &self.dialogues {
            if d.turns.is_empty() {
                return Err(EvalError::Dataset(format!("dialogue {} has no turns", d.dialogue_id)));
            }
            if d.turns.iter().any(|t| t.gold_label == Some(CandidateKind::Informal)) {
                return Err(EvalError::Dataset(format!("dialogue {}: gold label must be extractive or generative", d.dialogue_id)));
            }
        }
        Ok(())
    }
}

/// Retriever MRR@k over the dataset's retrieval queries.
pub fn eval_retriever(kb: &KnowledgeBase, dataset: &EvalDataset, mode: SearchMode, k: usize) -> Result<MetricReport, EvalError> {
    let ranked: Vec<Vec<String>> = dataset
        .retrieval
        .iter()
        .map(|q| {
            kb.search(&q.query, k, mode)
                .map(|rs| rs.into_iter().map(|r| r.paragraph_id).collect())
                .unwrap_or_default()
        })
        .collect();
    let gold: Vec<BTreeSet<String>> = dataset.retrieval.iter().map(|q| q.gold.clone()).collect();
    let mut report = mrr_at_k(&ranked, &gold, k)?;
    for (item, q) in report.items.iter_mut().zip(&dataset.retrieval) {
        item.id = q.query_id.clone();
    }
    Ok(report.with_fingerprint(&dataset.fingerprint()))
}

/// Reader F1 and EM on answerable examples, given each example's gold
/// paragraph as the only context.
pub fn eval_reader(engine: &Engine, dataset: &EvalDataset, reader: ReaderKind) -> Result<(MetricReport, MetricReport), EvalError> {
    let kb = engine.knowledge.get();
    let mut f1 = Vec::new();
    let mut em = Vec::new();
    for (i, ex) in dataset.reader.iter().enumerate() {
        if ex.answer_start == AnswerStart::Unanswerable {
            continue;
        }
        let Some(p) = kb.paragraph(&ex.paragraph_id) else {
            return Err(EvalError::Dataset(format!("unknown paragraph {}", ex.paragraph_id)));
        };
        let ctx = [ContextParagraph {
            paragraph_id: p.paragraph_id.clone(),
            text: p.text.clone(),
        }];
        let predicted = match reader {
            ReaderKind::Lexical => lexical_extract_span(&ex.question, &ctx, engine.window_words, &engine.stopwords).ok(),
            ReaderKind::Llm => {
                let provider = engine_provider(engine, &engine.defaults)?;
                llm_extract_span(provider.as_ref(), &engine.prompts, &ex.question, &ctx, &engine.retry).ok()
            }
        }
        .map(|c| c.text)
        .unwrap_or_default();
        let id = format!("x{i}");
        f1.push(ItemScore {
            id: id.clone(),
            value: token_f1(&predicted, &ex.answer_text),
        });
        em.push(ItemScore {
            id,
            value: exact_match(&predicted, &ex.answer_text),
        });
    }
    let fp = dataset.fingerprint();
    Ok((
        MetricReport::mean("token_f1", f1)?.with_fingerprint(&fp),
        MetricReport::mean("exact_match", em)?.with_fingerprint(&fp),
    ))
}

fn engine_provider(engine: &Engine, config: &SystemConfig) -> Result<Arc<dyn crate::llm::Provider>, EvalError> {
    engine
        .provider_arc(&config.provider)
        .ok_or_else(|| EvalError::Pipeline(PipelineError::InvalidConfig(format!("unknown provider {:?}", config.provider))))
}

/// Per-turn outcome of a dialogue run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub dialogue_id: String,
    pub turn: usize,
    pub final_text: String,
    pub reference: String,
    /// `Some(kind)` for moderated turns; inner `None` when filtered.
    pub moderated: Option<Option<CandidateKind>>,
    pub gold_label: Option<CandidateKind>,
}

/// Runs every dialogue through the pipeline, each with its own history.
pub fn run_dialogues(engine: &Engine, config: &SystemConfig, dataset: &EvalDataset) -> Result<Vec<TurnOutcome>, EvalError> {
    engine.validate(config)?;
    let mut out = Vec::new();
    for d in &dataset.dialogues {
        let mut turns = Vec::new();
        for (i, t) in d.turns.iter().enumerate() {
            let record = engine.handle_turn(config, &history_of(&turns), i, &t.user)?;
            out.push(TurnOutcome {
                dialogue_id: d.dialogue_id.clone(),
                turn: i,
                final_text: record.final_text.clone(),
                reference: t.reference.clone(),
                moderated: record.moderated_kind(),
                gold_label: t.gold_label,
            });
            turns.push(record);
        }
    }
    Ok(out)
}

/// Moderator accuracy over turns that carry a gold label and were moderated.
pub fn eval_moderator(engine: &Engine, config: &SystemConfig, dataset: &EvalDataset) -> Result<MetricReport, EvalError> {
    let outcomes = run_dialogues(engine, config, dataset)?;
    let (decisions, gold): (Vec<_>, Vec<_>) = outcomes
        .iter()
        .filter_map(|o| Some((o.moderated?, o.gold_label?)))
        .unzip();
    let mut report = moderator_accuracy(&decisions, &gold)?;
    let ids = outcomes
        .iter()
        .filter(|o| o.moderated.is_some() && o.gold_label.is_some())
        .map(|o| format!("{}#{}", o.dialogue_id, o.turn));
    for (item, id) in report.items.iter_mut().zip(ids) {
        item.id = id;
    }
    Ok(report.with_fingerprint(&dataset.fingerprint()))
}

/// End-to-end response cosine and METEOR against the reference responses.
pub fn eval_end_to_end(engine: &Engine, config: &SystemConfig, dataset: &EvalDataset) -> Result<(MetricReport, MetricReport), EvalError> {
    let outcomes = run_dialogues(engine, config, dataset)?;
    let preds: Vec<String> = outcomes.iter().map(|o| o.final_text.clone()).collect();
    let refs: Vec<String> = outcomes.iter().map(|o| o.reference.clone()).collect();
    let kb = engine.knowledge.get();
    let mut cos = response_cosine(kb.embedder().as_ref(), &preds, &refs)?;
    let items = outcomes
        .iter()
        .map(|o| ItemScore {
            id: format!("{}#{}", o.dialogue_id, o.turn),
            value: meteor(&o.final_text, &o.reference),
        })
        .collect();
    for (item, o) in cos.items.iter_mut().zip(&outcomes) {
        item.id = format!("{}#{}", o.dialogue_id, o.turn);
    }
    let fp = dataset.fingerprint();
    Ok((cos.with_fingerprint(&fp), MetricReport::mean("meteor", items)?.with_fingerprint(&fp)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub label: String,
    pub config: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contributions: Option<Contributions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigMatrixReport {
    pub dataset_fingerprint: String,
    pub embedder: String,
    pub rows: Vec<MatrixRow>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

impl ConfigMatrixReport {
    /// Aligned plain-text table: label, cosine, and contributions as
    /// generative% - extractive%, plus the filtered share.
    pub fn to_text(&self) -> String {
        let header = ["Config", "Retriever", "Moderator", "Cos. Sim.", "Gen% - Ext%", "Filtered%"];
        let rows: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| match (&r.error, r.cosine, r.contributions) {
                (None, Some(cos), Some(c)) => [
                    r.label.clone(),
                    r.config.retriever.to_string(),
                    r.config.moderator.to_string(),
                    format!("{cos:.4}"),
                    format!("{} - {}", pct(c.generative), pct(c.extractive)),
                    pct(c.filtered),
                ],
                (err, _, _) => [
                    r.label.clone(),
                    r.config.retriever.to_string(),
                    r.config.moderator.to_string(),
                    "ERROR".into(),
                    err.clone().unwrap_or_else(|| "incomplete".into()),
                    String::new(),
                ],
            })
            .collect();
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&header.map(String::from));
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for r in &rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

/// Runs every dialogue under every config. A failing config yields a row
/// with an error and does not affect the others.
pub fn run_config_matrix(engine: &Engine, dataset: &EvalDataset, configs: &[SystemConfig]) -> Result<ConfigMatrixReport, EvalError> {
    let mut seen = HashSet::new();
    for c in configs {
        if !seen.insert(c.label.as_str()) {
            return Err(EvalError::DuplicateLabel(c.label.clone()));
        }
    }
    let embedder = engine.knowledge.get().embedder().clone();
    let rows = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|config| s.spawn(|| matrix_row(engine, embedder.as_ref(), dataset, config)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("matrix row panicked")).collect()
    });
    Ok(ConfigMatrixReport {
        dataset_fingerprint: dataset.fingerprint(),
        embedder: format!("{:?}:{}", embedder.kind(), embedder.dimension()),
        rows,
    })
}

fn matrix_row(engine: &Engine, embedder: &dyn Embedder, dataset: &EvalDataset, config: &SystemConfig) -> MatrixRow {
    let result = (|| {
        let outcomes = run_dialogues(engine, config, dataset)?;
        let preds: Vec<String> = outcomes.iter().map(|o| o.final_text.clone()).collect();
        let refs: Vec<String> = outcomes.iter().map(|o| o.reference.clone()).collect();
        let cos = response_cosine(embedder, &preds, &refs)?.value;
        let decisions: Vec<Option<CandidateKind>> = outcomes.iter().filter_map(|o| o.moderated).collect();
        Ok::<_, EvalError>((cos, contributions(&decisions)?))
    })();
    match result {
        Ok((cos, c)) => MatrixRow {
            label: config.label.clone(),
            config: config.clone(),
            cosine: Some(cos),
            contributions: Some(c),
            error: None,
        },
        Err(e) => MatrixRow {
            label: config.label.clone(),
            config: config.clone(),
            cosine: None,
            contributions: None,
            error: Some(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn mrr_examples() {
        let ranked: Vec<Vec<String>> = vec![
            vec!["g".into(), "x".into(), "y".into()],
            vec!["x".into(), "g".into(), "y".into()],
            vec!["x".into(), "y".into(), "g".into()],
            vec!["x".into(), "y".into(), "z".into()],
        ];
        let gold = vec![set(&["g"]); 4];
        let r = mrr_at_k(&ranked, &gold, 3).unwrap();
        assert!((r.value - (1.0 + 0.5 + 1.0 / 3.0) / 4.0).abs() < 1e-12);
        assert_eq!(mrr_at_k(&ranked[2..3], &gold[..1], 3).unwrap().value, 1.0 / 3.0);
        assert_eq!(mrr_at_k(&ranked[2..3], &gold[..1], 2).unwrap().value, 0.0);
        assert!(matches!(mrr_at_k(&[], &[], 3), Err(EvalError::Empty(_))));
        assert!(matches!(mrr_at_k(&ranked, &gold, 0), Err(EvalError::InvalidK)));
    }

    #[test]
    fn f1_and_em_examples() {
        assert_eq!(token_f1("park assist", "park assist"), 1.0);
        assert!((token_f1("park assist on", "park assist") - 0.8).abs() < 1e-12);
        assert_eq!(token_f1("alpha", "beta"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("the", "x"), 0.0);
        assert_eq!(exact_match("The Park Assist.", "park assist"), 1.0);
        assert_eq!(exact_match("park assist", "parking assistant"), 0.0);
        assert_eq!(exact_match("", ""), 1.0);
    }

    #[test]
    fn meteor_examples() {
        assert_eq!(meteor("a b c d", "a b c d"), 0.9921875);
        assert_eq!(meteor("x y", "a b"), 0.0);
        // m = 1, P = 1/2, R = 1/3, chunks = 1
        let (p, r) = (0.5f64, 1.0 / 3.0);
        let fmean = 10.0 * p * r / (r + 9.0 * p);
        assert!((meteor("wheel nut", "spare wheel here") - fmean / 2.0).abs() < 1e-12);
    }

    #[test]
    fn meteor_alignment_prefers_continuation() {
        let toks = |s: &str| tokenize(s);
        // second "the" continues after "open" rather than taking position 0
        let a = meteor_alignment(&toks("open the door"), &toks("the car open the door"));
        assert_eq!(a, vec![Some(2), Some(3), Some(4)]);
    }

    #[test]
    fn contributions_examples() {
        use CandidateKind::*;
        let c = contributions(&[Some(Extractive); 3]).unwrap();
        assert_eq!((c.generative, c.extractive), (0.0, 1.0));
        let c = contributions(&[Some(Generative), Some(Generative), Some(Generative), Some(Extractive)]).unwrap();
        assert_eq!((c.generative, c.extractive), (0.75, 0.25));
        let c = contributions(&[Some(Generative), Some(Generative), Some(Extractive), None]).unwrap();
        assert_eq!((c.generative, c.extractive, c.filtered), (0.5, 0.25, 0.25));
        assert!(contributions(&[]).is_err());
    }

    #[test]
    fn moderator_accuracy_examples() {
        use CandidateKind::*;
        assert_eq!(moderator_accuracy(&[Some(Extractive)], &[Extractive]).unwrap().value, 1.0);
        assert_eq!(moderator_accuracy(&[Some(Extractive), None], &[Extractive, Generative]).unwrap().value, 0.5);
        assert!(moderator_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn response_cosine_examples() {
        let e = crate::retrieval::HashedEmbedder::default();
        let v = vec!["open the trunk".to_string()];
        assert!((response_cosine(&e, &v, &v).unwrap().value - 1.0).abs() < 1e-12);
        assert!(response_cosine(&e, &v, &[]).is_err());
    }
}
