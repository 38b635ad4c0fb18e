//! C ABI for the groundqa engine.
//!
//! Every fallible function returns a [`GqStatus`]; on failure the message is
//! available from [`gq_last_error`] on the same thread. Strings handed out
//! through `out` parameters are owned by the caller and must be released
//! with [`gq_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use groundqa::config::AppConfig;
use groundqa::evaluation;
use groundqa::fixtures;
use groundqa::moderation::{extraction_score, input_tokens, CostTable, InputClassSource, Stopwords};
use groundqa::pipeline::{PipelineError, SessionManager, SystemConfig};
use groundqa::retrieval::SearchMode;
use serde_json::json;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Config = 5,
    Engine = 6,
    Panic = 7,
}

/// Opaque engine handle with its live sessions.
pub struct GqEngine {
    manager: SessionManager,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GqStatus, String);

impl Failure {
    fn new(status: GqStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::SessionNotFound(_) => GqStatus::NotFound,
            PipelineError::EmptyUtterance | PipelineError::InvalidConfig(_) => GqStatus::InvalidArgument,
            PipelineError::Store(_) => GqStatus::Engine,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GqStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside groundqa");
            GqStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(GqStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(GqStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn engine_arg<'a>(p: *const GqEngine) -> Result<&'a GqEngine, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(GqStatus::NullPointer, "engine is null"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(GqStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::new(GqStatus::Engine, "result contains a NUL byte"))?;
    if out.is_null() {
        return Err(Failure::new(GqStatus::NullPointer, "output pointer is null"));
    }
    out.write(c.into_raw());
    Ok(())
}

fn boxed(manager: SessionManager) -> *mut GqEngine {
    Box::into_raw(Box::new(GqEngine { manager }))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn gq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Engine over the bundled sample manual with the scripted offline
/// provider.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gq_engine_new_fixture(out: *mut *mut GqEngine) -> GqStatus {
    guard(|| {
        let engine = Arc::new(fixtures::engine());
        write_out(out, boxed(SessionManager::in_memory(engine)))
    })
}

/// Engine from a TOML config file (null for defaults); environment
/// overrides apply.
///
/// # Safety
/// `config_path` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gq_engine_new(config_path: *const c_char, out: *mut *mut GqEngine) -> GqStatus {
    guard(|| {
        let path = opt_str_arg(config_path, "config_path")?;
        let config = AppConfig::load(path.map(Path::new)).map_err(|e| Failure::new(GqStatus::Config, e.to_string()))?;
        let engine = config.build_engine().map_err(|e| Failure::new(GqStatus::Config, e.to_string()))?;
        write_out(out, boxed(SessionManager::in_memory(Arc::new(engine))))
    })
}

/// # Safety
/// `engine` must be null or a handle from this library, freed only once.
#[no_mangle]
pub unsafe extern "C" fn gq_engine_free(engine: *mut GqEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Starts a session. `config_json` is a JSON system config or null for the
/// engine defaults; the new session id is written to `out_id`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gq_session_create(engine: *const GqEngine, config_json: *const c_char, out_id: *mut *mut c_char) -> GqStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let config: Option<SystemConfig> = match opt_str_arg(config_json, "config_json")? {
            Some(s) => Some(serde_json::from_str(s).map_err(|e| Failure::new(GqStatus::InvalidArgument, format!("config: {e}")))?),
            None => None,
        };
        let session = engine.manager.create_session(config)?;
        write_string(out_id, session.session_id)
    })
}

/// Handles one user message and writes the turn as JSON to `out_json`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gq_session_send(
    engine: *const GqEngine,
    session_id: *const c_char,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> GqStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let id = str_arg(session_id, "session_id")?;
        let text = str_arg(text, "text")?;
        let turn = engine.manager.handle_turn(id, text)?;
        let mut view = turn.api_view();
        view["user_utterance"] = json!(turn.user_utterance);
        write_string(out_json, view.to_string())
    })
}

/// Top-`k` retrieval. `mode` is "bm25", "dense", "hybrid_rrf" or null for the
/// engine default. Writes a JSON array of results.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gq_search(
    engine: *const GqEngine,
    query: *const c_char,
    k: usize,
    mode: *const c_char,
    out_json: *mut *mut c_char,
) -> GqStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let query = str_arg(query, "query")?;
        let mode: SearchMode = match opt_str_arg(mode, "mode")? {
            Some(m) => m.parse().map_err(|e: String| Failure::new(GqStatus::InvalidArgument, e))?,
            None => engine.manager.engine.defaults.retriever,
        };
        let kb = engine.manager.engine.knowledge.get();
        let results = kb
            .search(query, k, mode)
            .map_err(|e| Failure::new(GqStatus::InvalidArgument, e.to_string()))?;
        let items: Vec<_> = results
            .iter()
            .map(|r| {
                json!({
                    "paragraph_id": r.paragraph_id,
                    "rank": r.rank,
                    "score": r.score,
                    "text": kb.paragraph(&r.paragraph_id).map(|p| p.text.as_str()),
                })
            })
            .collect();
        write_string(out_json, serde_json::Value::Array(items).to_string())
    })
}

/// Extraction Score of `answer` against `n` paragraphs with the default cost
/// table and stopword list. Input-class tokens come from the paragraphs, or
/// from `utterance` when it is not null.
///
/// # Safety
/// `paragraphs` must point to `n` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gq_extraction_score(
    answer: *const c_char,
    paragraphs: *const *const c_char,
    n: usize,
    utterance: *const c_char,
    out_score: *mut f64,
) -> GqStatus {
    guard(|| {
        let answer = str_arg(answer, "answer")?;
        if paragraphs.is_null() && n > 0 {
            return Err(Failure::new(GqStatus::NullPointer, "paragraphs is null"));
        }
        let refs = (0..n)
            .map(|i| str_arg(*paragraphs.add(i), "paragraph"))
            .collect::<Result<Vec<&str>, _>>()?;
        let input = match opt_str_arg(utterance, "utterance")? {
            Some(u) => input_tokens(InputClassSource::Utterance, u, &refs),
            None => input_tokens(InputClassSource::Context, "", &refs),
        };
        let report = extraction_score(answer, &refs, &CostTable::default(), &Stopwords::bundled(), &input)
            .map_err(|e| Failure::new(GqStatus::InvalidArgument, e.to_string()))?;
        write_out(out_score, report.score)
    })
}

/// Which text metric [`gq_metric`] computes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GqMetric {
    TokenF1 = 0,
    ExactMatch = 1,
    Meteor = 2,
}

/// Scores `prediction` against `reference`.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gq_metric(metric: GqMetric, prediction: *const c_char, reference: *const c_char, out: *mut f64) -> GqStatus {
    guard(|| {
        let p = str_arg(prediction, "prediction")?;
        let r = str_arg(reference, "reference")?;
        let v = match metric {
            GqMetric::TokenF1 => evaluation::token_f1(p, r),
            GqMetric::ExactMatch => evaluation::exact_match(p, r),
            GqMetric::Meteor => evaluation::meteor(p, r),
        };
        write_out(out, v)
    })
}
