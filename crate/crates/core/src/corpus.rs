//! Corpus ingestion: source documents in, paragraph records out.
//!
//! Sources arrive as plain text, CSV or JSON Lines. Each logical document is
//! split into paragraphs at blank lines; oversized blocks are packed greedily
//! by sentence so no paragraph exceeds the configured word budget.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::text::{byte_offset, char_offset, sentence_spans, tokenize, word_count};

pub const DEFAULT_MAX_CHUNK_WORDS: usize = 120;
pub const MIN_CHUNK_WORDS: usize = 10;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8 (first invalid byte at offset {offset})")]
    Undecodable { path: PathBuf, offset: usize },
    #[error("max_chunk_words must be at least {MIN_CHUNK_WORDS}, got {0}")]
    ChunkTooSmall(usize),
    #[error("dangling paragraph ids: {}", .0.join(", "))]
    DanglingParagraphs(Vec<String>),
    #[error("answer for question {question:?} does not occur at offset {answer_start} of {paragraph_id}")]
    AnswerMismatch {
        question: String,
        paragraph_id: String,
        answer_start: usize,
    },
    #[error("malformed SQuAD file: {0}")]
    MalformedSquad(String),
    #[error("paragraph store line {line}: {message}")]
    MalformedStore { line: usize, message: String },
    #[error("duplicate paragraph id {0}")]
    DuplicateParagraph(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    OwnersManual,
    SelfService,
    CarConfigurator,
    PressClub,
    Other,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] = [
        SourceKind::OwnersManual,
        SourceKind::SelfService,
        SourceKind::CarConfigurator,
        SourceKind::PressClub,
        SourceKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::OwnersManual => "owners_manual",
            SourceKind::SelfService => "self_service",
            SourceKind::CarConfigurator => "car_configurator",
            SourceKind::PressClub => "press_club",
            SourceKind::Other => "other",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown source kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    PlainText,
    Csv,
    Jsonl,
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain_text" | "txt" => Ok(Self::PlainText),
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown source format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub source_id: String,
    pub source_kind: SourceKind,
    pub title: String,
    pub raw_text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub paragraph_id: String,
    pub source_id: String,
    pub source_kind: SourceKind,
    pub text: String,
    pub word_count: usize,
    pub ordinal: usize,
}

impl Paragraph {
    pub fn new(source: &SourceDocument, ordinal: usize, text: &str) -> Self {
        Self {
            paragraph_id: paragraph_id(&source.source_id, ordinal),
            source_id: source.source_id.clone(),
            source_kind: source.source_kind,
            text: text.to_string(),
            word_count: word_count(text),
            ordinal,
        }
    }
}

pub fn paragraph_id(source_id: &str, ordinal: usize) -> String {
    format!("{source_id}:{ordinal:04}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line (jsonl) or record (csv) number.
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: String,
    pub documents: usize,
    pub row_errors: Vec<RowError>,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub documents: Vec<SourceDocument>,
    pub report: IngestReport,
}

/// Reads and decodes `path`, then ingests its contents.
pub fn ingest_path(path: &Path, kind: SourceKind, format: SourceFormat) -> Result<Ingested, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| CorpusError::Undecodable {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "source".to_string());
    Ok(ingest_str(&name, &text, kind, format))
}

/// Ingests already-decoded text. `name` seeds generated source ids.
///
/// Malformed rows are collected in the report; they never abort the run.
pub fn ingest_str(name: &str, content: &str, kind: SourceKind, format: SourceFormat) -> Ingested {
    let content = normalize_newlines(content);
    let mut out = Ingested {
        documents: Vec::new(),
        report: IngestReport {
            source: name.to_string(),
            ..Default::default()
        },
    };
    match format {
        SourceFormat::PlainText => {
            if !content.trim().is_empty() {
                out.documents.push(SourceDocument {
                    source_id: name.to_string(),
                    source_kind: kind,
                    title: name.to_string(),
                    raw_text: content,
                    metadata: BTreeMap::new(),
                });
            }
        }
        SourceFormat::Jsonl => ingest_jsonl(name, &content, kind, &mut out),
        SourceFormat::Csv => ingest_csv(name, &content, kind, &mut out),
    }
    out.report.documents = out.documents.len();
    out
}

fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n")
}

struct RowFields {
    id: Option<String>,
    title: Option<String>,
    text: Option<String>,
    metadata: BTreeMap<String, String>,
}

fn push_row(
    name: &str,
    row: usize,
    fields: RowFields,
    kind: SourceKind,
    seen: &mut HashSet<String>,
    out: &mut Ingested,
) {
    let Some(text) = fields.text else {
        out.report.row_errors.push(RowError {
            row,
            message: "missing \"text\" field".into(),
        });
        return;
    };
    if text.trim().is_empty() {
        out.report.row_errors.push(RowError {
            row,
            message: "\"text\" is empty".into(),
        });
        return;
    }
    let source_id = fields.id.unwrap_or_else(|| format!("{name}-{row:05}"));
    if !seen.insert(source_id.clone()) {
        out.report.row_errors.push(RowError {
            row,
            message: format!("duplicate source id {source_id:?}"),
        });
        return;
    }
    out.documents.push(SourceDocument {
        title: fields.title.unwrap_or_else(|| source_id.clone()),
        source_id,
        source_kind: kind,
        raw_text: text,
        metadata: fields.metadata,
    });
}

fn ingest_jsonl(name: &str, content: &str, kind: SourceKind, out: &mut Ingested) {
    let mut seen = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let object = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(map)) => map,
            Ok(_) => {
                out.report.row_errors.push(RowError {
                    row,
                    message: "row is not a JSON object".into(),
                });
                continue;
            }
            Err(e) => {
                out.report.row_errors.push(RowError {
                    row,
                    message: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let mut fields = RowFields {
            id: None,
            title: None,
            text: None,
            metadata: BTreeMap::new(),
        };
        for (key, value) in object {
            let as_string = match value {
                Value::String(s) => s,
                Value::Null => continue,
                other => other.to_string(),
            };
            match key.as_str() {
                "text" => fields.text = Some(normalize_newlines(&as_string)),
                "title" => fields.title = Some(as_string),
                "source_id" | "id" => fields.id = Some(as_string),
                _ => {
                    fields.metadata.insert(key, as_string);
                }
            }
        }
        push_row(name, row, fields, kind, &mut seen, out);
    }
}

fn ingest_csv(name: &str, content: &str, kind: SourceKind, out: &mut Ingested) {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(content.as_bytes());
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            if !content.trim().is_empty() {
                out.report.row_errors.push(RowError {
                    row: 1,
                    message: format!("unreadable header: {e}"),
                });
            }
            return;
        }
    };
    let mut seen = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.report.row_errors.push(RowError {
                    row,
                    message: format!("invalid CSV record: {e}"),
                });
                continue;
            }
        };
        let mut fields = RowFields {
            id: None,
            title: None,
            text: None,
            metadata: BTreeMap::new(),
        };
        for (key, value) in headers.iter().zip(record.iter()) {
            match key {
                "text" => fields.text = Some(value.to_string()),
                "title" if !value.is_empty() => fields.title = Some(value.to_string()),
                "source_id" | "id" if !value.is_empty() => fields.id = Some(value.to_string()),
                "title" | "source_id" | "id" => {}
                _ => {
                    fields.metadata.insert(key.to_string(), value.to_string());
                }
            }
        }
        push_row(name, row, fields, kind, &mut seen, out);
    }
}

/// Splits a document into paragraphs of at most `max_chunk_words` tokens.
///
/// Blocks are separated by blank lines. A block over budget is packed
/// greedily sentence by sentence; a single sentence over budget is cut at
/// word boundaries. Chunk texts are verbatim slices of the block, so only
/// whitespace is lost between consecutive chunks.
pub fn chunk_document(doc: &SourceDocument, max_chunk_words: usize) -> Result<Vec<Paragraph>, CorpusError> {
    if max_chunk_words < MIN_CHUNK_WORDS {
        return Err(CorpusError::ChunkTooSmall(max_chunk_words));
    }
    let mut paragraphs = Vec::new();
    for block in blocks(&doc.raw_text) {
        for chunk in chunk_block(block, max_chunk_words) {
            let ordinal = paragraphs.len();
            paragraphs.push(Paragraph::new(doc, ordinal, chunk));
        }
    }
    Ok(paragraphs)
}

/// Blank-line separated blocks, trimmed, non-empty.
pub fn blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0usize;
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                out.push(text[s..end].trim());
            }
        } else {
            start.get_or_insert(offset);
            end = offset + line.len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push(text[s..end].trim());
    }
    out
}

/// Splits one block into chunk slices within the word budget.
pub fn chunk_block(block: &str, max_words: usize) -> Vec<&str> {
    if word_count(block) <= max_words {
        return if block.trim().is_empty() { vec![] } else { vec![block] };
    }
    // Pieces are sentences, with oversized sentences pre-cut at word boundaries.
    let mut pieces: Vec<(usize, usize, usize)> = Vec::new();
    for span in sentence_spans(block) {
        let sentence = &block[span.clone()];
        let words = word_count(sentence);
        if words <= max_words {
            pieces.push((span.start, span.end, words));
        } else {
            for (s, e) in cut_words(sentence, max_words) {
                let w = word_count(&sentence[s..e]);
                pieces.push((span.start + s, span.start + e, w));
            }
        }
    }

    let mut chunks = Vec::new();
    let mut current: Option<(usize, usize, usize)> = None;
    for (s, e, w) in pieces {
        current = match current {
            Some((cs, _, cw)) if cw + w <= max_words => Some((cs, e, cw + w)),
            Some((cs, ce, _)) => {
                chunks.push(&block[cs..ce]);
                Some((s, e, w))
            }
            None => Some((s, e, w)),
        };
    }
    if let Some((cs, ce, _)) = current {
        chunks.push(&block[cs..ce]);
    }
    chunks
}

/// Byte ranges of whitespace-delimited runs holding at most `max_words` tokens.
fn cut_words(sentence: &str, max_words: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut run: Option<(usize, usize, usize)> = None;
    let mut idx = 0;
    for word in sentence.split_inclusive(char::is_whitespace) {
        let start = idx;
        idx += word.len();
        let trimmed = word.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let end = start + trimmed.len();
        let w = word_count(trimmed);
        run = match run {
            Some((rs, _, rw)) if rw + w <= max_words => Some((rs, end, rw + w)),
            Some((rs, re, _)) => {
                out.push((rs, re));
                Some((start, end, w))
            }
            None => Some((start, end, w)),
        };
    }
    if let Some((rs, re, _)) = run {
        out.push((rs, re));
    }
    out
}

/// Answer position inside a paragraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStart {
    /// Character offset into the paragraph text.
    Offset(usize),
    Unanswerable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub question: String,
    pub paragraph_id: String,
    pub answer_text: String,
    pub answer_start: AnswerStart,
}

impl QaExample {
    /// True when the paragraph text at `answer_start` begins with the answer.
    pub fn is_consistent_with(&self, paragraph_text: &str) -> bool {
        match self.answer_start {
            AnswerStart::Unanswerable => true,
            AnswerStart::Offset(start) => byte_offset(paragraph_text, start)
                .is_some_and(|b| paragraph_text[b..].starts_with(&self.answer_text)),
        }
    }
}

/// Builds an answerable example by locating `answer_text` in the paragraph.
pub fn locate_answer(question: &str, paragraph: &Paragraph, answer_text: &str) -> Option<QaExample> {
    paragraph.text.find(answer_text).map(|b| QaExample {
        question: question.to_string(),
        paragraph_id: paragraph.paragraph_id.clone(),
        answer_text: answer_text.to_string(),
        answer_start: AnswerStart::Offset(char_offset(&paragraph.text, b)),
    })
}

/// Serializes examples in the SQuAD v1 layout
/// (`data → paragraphs → qas{id, question, answers[text, answer_start]}`).
///
/// Consecutive examples on the same paragraph share a paragraph entry and
/// consecutive paragraphs of the same source share a data entry, so import
/// returns the examples in their original order. Output is 2-space indented
/// JSON with lexicographically sorted keys.
pub fn export_squad(examples: &[QaExample], paragraphs: &[Paragraph]) -> Result<String, CorpusError> {
    let by_id: BTreeMap<&str, &Paragraph> = paragraphs.iter().map(|p| (p.paragraph_id.as_str(), p)).collect();

    let dangling: BTreeSet<String> = examples
        .iter()
        .filter(|e| !by_id.contains_key(e.paragraph_id.as_str()))
        .map(|e| e.paragraph_id.clone())
        .collect();
    if !dangling.is_empty() {
        return Err(CorpusError::DanglingParagraphs(dangling.into_iter().collect()));
    }

    let mut data: Vec<Value> = Vec::new();
    let mut current_source: Option<&str> = None;
    let mut current_paragraph: Option<&str> = None;
    for (idx, example) in examples.iter().enumerate() {
        let paragraph = by_id[example.paragraph_id.as_str()];
        if !example.is_consistent_with(&paragraph.text) {
            let answer_start = match example.answer_start {
                AnswerStart::Offset(o) => o,
                AnswerStart::Unanswerable => 0,
            };
            return Err(CorpusError::AnswerMismatch {
                question: example.question.clone(),
                paragraph_id: example.paragraph_id.clone(),
                answer_start,
            });
        }
        if current_source != Some(paragraph.source_id.as_str()) {
            data.push(json!({ "title": paragraph.source_id, "paragraphs": [] }));
            current_source = Some(paragraph.source_id.as_str());
            current_paragraph = None;
        }
        let entry = data.last_mut().expect("data entry pushed above");
        let paras = entry["paragraphs"].as_array_mut().expect("paragraphs array");
        if current_paragraph != Some(paragraph.paragraph_id.as_str()) {
            paras.push(json!({
                "context": paragraph.text,
                "paragraph_id": paragraph.paragraph_id,
                "qas": [],
            }));
            current_paragraph = Some(paragraph.paragraph_id.as_str());
        }
        let answers = match example.answer_start {
            AnswerStart::Offset(start) => json!([{ "answer_start": start, "text": example.answer_text }]),
            AnswerStart::Unanswerable => json!([]),
        };
        let qa = json!({
            "answers": answers,
            "id": format!("{}/q{idx:05}", paragraph.paragraph_id),
            "is_impossible": matches!(example.answer_start, AnswerStart::Unanswerable),
            "question": example.question,
        });
        paras
            .last_mut()
            .expect("paragraph entry pushed above")["qas"]
            .as_array_mut()
            .expect("qas array")
            .push(qa);
    }

    let doc = json!({ "data": data, "version": "1.1" });
    let mut out = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
    out.push('\n');
    Ok(out)
}

/// A SQuAD file parsed back into examples plus the paragraph contexts it
/// carried.
#[derive(Debug, Clone, Default)]
pub struct ImportedSquad {
    pub examples: Vec<QaExample>,
    /// `(paragraph_id, title, context)` in file order, deduplicated.
    pub contexts: Vec<(String, String, String)>,
}

pub fn import_squad(content: &str) -> Result<ImportedSquad, CorpusError> {
    let bad = |m: &str| CorpusError::MalformedSquad(m.to_string());
    let doc: Value = serde_json::from_str(content).map_err(|e| CorpusError::MalformedSquad(e.to_string()))?;
    let data = doc.get("data").and_then(Value::as_array).ok_or_else(|| bad("missing data array"))?;
    let mut out = ImportedSquad::default();
    let mut seen = HashSet::new();
    for (d_idx, entry) in data.iter().enumerate() {
        let title = entry.get("title").and_then(Value::as_str).unwrap_or_default();
        let paras = entry
            .get("paragraphs")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("data entry without paragraphs"))?;
        for (p_idx, para) in paras.iter().enumerate() {
            let context = para
                .get("context")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("paragraph without context"))?;
            let pid = para
                .get("paragraph_id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("squad-{d_idx}:{p_idx:04}"));
            if seen.insert(pid.clone()) {
                out.contexts.push((pid.clone(), title.to_string(), context.to_string()));
            }
            for qa in para.get("qas").and_then(Value::as_array).into_iter().flatten() {
                let question = qa
                    .get("question")
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("qa without question"))?;
                let first = qa.get("answers").and_then(Value::as_array).and_then(|a| a.first());
                let impossible = qa.get("is_impossible").and_then(Value::as_bool).unwrap_or(false);
                let (answer_text, answer_start) = match first {
                    Some(ans) if !impossible => {
                        let text = ans
                            .get("text")
                            .and_then(Value::as_str)
                            .ok_or_else(|| bad("answer without text"))?;
                        let start = ans
                            .get("answer_start")
                            .and_then(Value::as_u64)
                            .ok_or_else(|| bad("answer without answer_start"))?;
                        (text.to_string(), AnswerStart::Offset(start as usize))
                    }
                    _ => (String::new(), AnswerStart::Unanswerable),
                };
                out.examples.push(QaExample {
                    question: question.to_string(),
                    paragraph_id: pid.clone(),
                    answer_text,
                    answer_start,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub paragraph_count: usize,
    pub median_word_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_kind: BTreeMap<SourceKind, KindStats>,
    pub total_paragraphs: usize,
}

/// Paragraph counts and lower-median word counts per source kind. Every kind
/// is present in the result, with zeros when absent from the corpus.
pub fn corpus_stats(paragraphs: &[Paragraph]) -> CorpusStats {
    let mut counts: BTreeMap<SourceKind, Vec<usize>> = SourceKind::ALL.iter().map(|k| (*k, Vec::new())).collect();
    for p in paragraphs {
        counts.entry(p.source_kind).or_default().push(p.word_count);
    }
    let per_kind = counts
        .into_iter()
        .map(|(kind, mut words)| {
            words.sort_unstable();
            let median = if words.is_empty() { 0.0 } else { words[(words.len() - 1) / 2] as f64 };
            (
                kind,
                KindStats {
                    paragraph_count: words.len(),
                    median_word_count: median,
                },
            )
        })
        .collect();
    CorpusStats {
        per_kind,
        total_paragraphs: paragraphs.len(),
    }
}

/// Writes paragraphs as JSON Lines.
pub fn write_paragraphs<W: Write>(mut out: W, paragraphs: &[Paragraph]) -> std::io::Result<()> {
    for p in paragraphs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a JSON Lines paragraph store, checking id uniqueness and word counts.
pub fn read_paragraphs<R: BufRead>(input: R) -> Result<Vec<Paragraph>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::MalformedStore {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Paragraph = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedStore {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if p.word_count != tokenize(&p.text).len() {
            return Err(CorpusError::MalformedStore {
                line: idx + 1,
                message: format!("word_count {} disagrees with text", p.word_count),
            });
        }
        if !seen.insert(p.paragraph_id.clone()) {
            return Err(CorpusError::DuplicateParagraph(p.paragraph_id));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_paragraphs(path: &Path) -> Result<Vec<Paragraph>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_paragraphs(std::io::BufReader::new(file))
}

/// Chunks every document and concatenates the results.
pub fn chunk_all(documents: &[SourceDocument], max_chunk_words: usize) -> Result<Vec<Paragraph>, CorpusError> {
    let mut out = Vec::new();
    for doc in documents {
        out.extend(chunk_document(doc, max_chunk_words)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> SourceDocument {
        SourceDocument {
            source_id: "manual".into(),
            source_kind: SourceKind::OwnersManual,
            title: "Manual".into(),
            raw_text: text.into(),
            metadata: BTreeMap::new(),
        }
    }

    fn words(n: usize, prefix: &str) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn empty_plain_text_yields_no_documents() {
        let got = ingest_str("empty", "", SourceKind::Other, SourceFormat::PlainText);
        assert!(got.documents.is_empty());
        assert_eq!(got.report.documents, 0);
        assert!(got.report.row_errors.is_empty());
    }

    #[test]
    fn jsonl_row_without_text_is_reported_not_fatal() {
        let input = concat!(
            "{\"id\":\"a\",\"title\":\"A\",\"text\":\"First doc.\"}\n",
            "{\"id\":\"b\",\"title\":\"B\"}\n",
            "{\"id\":\"c\",\"text\":\"Third doc.\",\"lang\":\"en\"}\n",
        );
        let got = ingest_str("faq", input, SourceKind::SelfService, SourceFormat::Jsonl);
        assert_eq!(got.documents.len(), 2);
        assert_eq!(got.report.row_errors.len(), 1);
        assert_eq!(got.report.row_errors[0].row, 2);
        assert_eq!(got.documents[1].metadata["lang"], "en");
        assert_eq!(got.documents[1].title, "c");
    }

    #[test]
    fn csv_rows_and_errors() {
        let input = "title,text,model\nSeats,Adjust the seat.,X5\nEmpty,,X3\n";
        let got = ingest_str("cfg", input, SourceKind::CarConfigurator, SourceFormat::Csv);
        assert_eq!(got.documents.len(), 1);
        assert_eq!(got.documents[0].title, "Seats");
        assert_eq!(got.documents[0].metadata["model"], "X5");
        assert_eq!(got.report.row_errors.len(), 1);
    }

    #[test]
    fn crlf_is_normalized() {
        let got = ingest_str("m", "a\r\nb\rc", SourceKind::Other, SourceFormat::PlainText);
        assert_eq!(got.documents[0].raw_text, "a\nb\nc");
    }

    #[test]
    fn two_blank_separated_paragraphs_chunk_into_two() {
        let text = "Open the trunk with the remote key.\n\nClose it by pressing the button.\n";
        let got = ingest_str("trunk", text, SourceKind::OwnersManual, SourceFormat::PlainText);
        assert_eq!(got.documents.len(), 1);
        let paras = chunk_document(&got.documents[0], 100).unwrap();
        assert_eq!(paras.len(), 2);
        assert_eq!(paras[0].text, "Open the trunk with the remote key.");
        assert_eq!(paras[1].ordinal, 1);
        assert_eq!(paras[1].paragraph_id, "trunk:0001");
    }

    #[test]
    fn single_small_block() {
        let paras = chunk_document(&doc(&words(20, "w")), 100).unwrap();
        assert_eq!(paras.len(), 1);
        assert_eq!(paras[0].word_count, 20);
    }

    #[test]
    fn two_blocks_have_dense_ordinals() {
        let text = format!("{}\n\n{}", words(30, "a"), words(40, "b"));
        let paras = chunk_document(&doc(&text), 100).unwrap();
        assert_eq!(paras.iter().map(|p| p.ordinal).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(paras[0].word_count, 30);
        assert_eq!(paras[1].word_count, 40);
    }

    #[test]
    fn long_block_is_packed_by_sentence() {
        // ten sentences of 25 words each
        let sentences: Vec<String> = (0..10).map(|s| format!("Sentence{s} {}.", words(24, &format!("s{s}w")))).collect();
        let block = sentences.join(" ");
        assert_eq!(word_count(&block), 250);
        let paras = chunk_document(&doc(&block), 100).unwrap();
        assert!(paras.len() >= 3);
        assert!(paras.iter().all(|p| p.word_count <= 100));
        // 4 sentences of 25 fit exactly, so the packing is 100/100/50
        assert_eq!(paras.iter().map(|p| p.word_count).collect::<Vec<_>>(), vec![100, 100, 50]);
        assert_eq!(paras.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n"), sentences.chunks(4).map(|c| c.join(" ")).collect::<Vec<_>>().join("\n"));
    }

    #[test]
    fn oversized_sentence_is_cut_at_words() {
        let block = words(35, "x");
        let paras = chunk_document(&doc(&block), 10).unwrap();
        assert_eq!(paras.iter().map(|p| p.word_count).collect::<Vec<_>>(), vec![10, 10, 10, 5]);
    }

    #[test]
    fn chunk_size_below_minimum_is_rejected() {
        assert!(matches!(chunk_document(&doc("a b"), 9), Err(CorpusError::ChunkTooSmall(9))));
    }

    #[test]
    fn stats_empty_corpus() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.total_paragraphs, 0);
        assert!(stats.per_kind.values().all(|k| k.paragraph_count == 0 && k.median_word_count == 0.0));
        assert_eq!(stats.per_kind.len(), SourceKind::ALL.len());
    }

    fn para_with_words(id: &str, n: usize) -> Paragraph {
        let text = words(n, "t");
        Paragraph {
            paragraph_id: id.into(),
            source_id: "s".into(),
            source_kind: SourceKind::PressClub,
            word_count: word_count(&text),
            text,
            ordinal: 0,
        }
    }

    #[test]
    fn stats_median_odd_and_even() {
        let odd = [para_with_words("a", 10), para_with_words("b", 70), para_with_words("c", 38)];
        let s = corpus_stats(&odd);
        assert_eq!(s.per_kind[&SourceKind::PressClub].median_word_count, 38.0);
        let even: Vec<_> = [40, 10, 30, 20].iter().enumerate().map(|(i, n)| para_with_words(&i.to_string(), *n)).collect();
        let s = corpus_stats(&even);
        assert_eq!(s.per_kind[&SourceKind::PressClub].median_word_count, 20.0);
        assert_eq!(s.per_kind[&SourceKind::PressClub].paragraph_count, 4);
    }

    #[test]
    fn export_empty_is_valid() {
        let out = export_squad(&[], &[]).unwrap();
        assert_eq!(out, "{\n  \"data\": [],\n  \"version\": \"1.1\"\n}\n");
    }

    #[test]
    fn export_reports_all_dangling_ids() {
        let ex = |pid: &str| QaExample {
            question: "q".into(),
            paragraph_id: pid.into(),
            answer_text: String::new(),
            answer_start: AnswerStart::Unanswerable,
        };
        let err = export_squad(&[ex("x"), ex("y"), ex("x")], &[]).unwrap_err();
        match err {
            CorpusError::DanglingParagraphs(ids) => assert_eq!(ids, vec!["x", "y"]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn exported_answer_start_points_at_answer() {
        let d = doc("Käse first. The spare wheel is under the floor.");
        let paras = chunk_document(&d, 100).unwrap();
        let ex = locate_answer("where is the spare wheel?", &paras[0], "under the floor").unwrap();
        let out = export_squad(std::slice::from_ref(&ex), &paras).unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        let ans = &v["data"][0]["paragraphs"][0]["qas"][0]["answers"][0];
        let start = ans["answer_start"].as_u64().unwrap() as usize;
        let ctx = v["data"][0]["paragraphs"][0]["context"].as_str().unwrap();
        assert_eq!(crate::text::char_slice(ctx, start, start + 15), Some("under the floor"));
    }

    #[test]
    fn inconsistent_answer_is_rejected() {
        let paras = chunk_document(&doc("The spare wheel is under the floor."), 100).unwrap();
        let ex = QaExample {
            question: "q".into(),
            paragraph_id: paras[0].paragraph_id.clone(),
            answer_text: "floor".into(),
            answer_start: AnswerStart::Offset(0),
        };
        assert!(matches!(export_squad(&[ex], &paras), Err(CorpusError::AnswerMismatch { .. })));
    }
}
