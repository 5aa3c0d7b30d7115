//! C ABI for the `insrank` library.
//!
//! Objects cross the boundary as opaque handles created by `*_load`,
//! `*_synthetic` or `insrank_rank` and released by the matching `*_free`.
//! Every fallible call returns an [`InsrankStatus`]; on failure a message is
//! available from [`insrank_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use insrank::cli::{derive_seed, streams};
use insrank::corpus::{generate_synthetic, load_corpus, CorpusError, CorpusPaths, SynthConfig};
use insrank::pipeline::{Method, MethodSettings, PipelineError};
use insrank::scoring::ScoreBook;
use insrank::{ndcg_at, Corpus, InstitutionId, Ranking, RelevanceVector};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsrankStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    InvalidData = 4,
    MissingHistory = 5,
    Pipeline = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsrankMethod {
    PreviousYear = 0,
    Rankins1 = 1,
    Rankins2 = 2,
}

/// A loaded or generated corpus.
pub struct InsrankCorpus {
    corpus: Corpus,
    book: ScoreBook,
}

/// Predicted relevance of every tracked institution, in corpus order.
pub struct InsrankRelevance {
    ids: Vec<CString>,
    values: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl ToString) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: InsrankStatus, message: impl ToString) -> InsrankStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> InsrankStatus) -> InsrankStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == InsrankStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(InsrankStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, InsrankStatus> {
    if p.is_null() {
        return Err(fail(InsrankStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(InsrankStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn corpus_status(e: &CorpusError) -> InsrankStatus {
    match e {
        CorpusError::Io { .. } => InsrankStatus::Io,
        CorpusError::Config(_) => InsrankStatus::InvalidArgument,
        _ => InsrankStatus::InvalidData,
    }
}

fn pipeline_status(e: &PipelineError) -> InsrankStatus {
    use insrank::scoring::ScoringError;
    use insrank::smoothrank::SmoothError;
    use insrank::temporal::TemporalError;
    match e {
        PipelineError::UnknownVenue(_) => InsrankStatus::InvalidArgument,
        PipelineError::Baseline(ScoringError::MissingHistory { .. })
        | PipelineError::Smoothing(SmoothError::MissingHistory { .. })
        | PipelineError::Temporal {
            source: TemporalError::MissingHistory { .. },
            ..
        } => InsrankStatus::MissingHistory,
        _ => InsrankStatus::Pipeline,
    }
}

fn boxed(corpus: Corpus) -> *mut InsrankCorpus {
    let book = ScoreBook::from_corpus(&corpus);
    Box::into_raw(Box::new(InsrankCorpus { corpus, book }))
}

/// Loads `papers.tsv`, `affiliations.tsv`, `institutions.tsv` and
/// `venues.tsv` from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn insrank_corpus_load(dir: *const c_char, out: *mut *mut InsrankCorpus) -> InsrankStatus {
    guard(|| {
        if out.is_null() {
            return fail(InsrankStatus::NullArgument, "out is null");
        }
        let dir = match text(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match load_corpus(&CorpusPaths::in_dir(Path::new(dir))) {
            Ok(c) => {
                *out = boxed(c);
                InsrankStatus::Ok
            }
            Err(e) => fail(corpus_status(&e), e),
        }
    })
}

/// Generates a synthetic corpus; unspecified generator settings keep their
/// defaults.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn insrank_corpus_synthetic(
    institutions: u32,
    venues: u32,
    first_year: i32,
    last_year: i32,
    papers_per_venue_year: u32,
    drift: f64,
    seed: u64,
    out: *mut *mut InsrankCorpus,
) -> InsrankStatus {
    guard(|| {
        if out.is_null() {
            return fail(InsrankStatus::NullArgument, "out is null");
        }
        let config = SynthConfig {
            institutions: institutions as usize,
            venues: venues as usize,
            first_year,
            last_year,
            papers_per_venue_year: papers_per_venue_year as usize,
            drift,
            ..SynthConfig::default()
        };
        match generate_synthetic(&config, derive_seed(seed, streams::SYNTH)) {
            Ok(c) => {
                *out = boxed(c);
                InsrankStatus::Ok
            }
            Err(e) => fail(corpus_status(&e), e),
        }
    })
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn insrank_corpus_free(corpus: *mut InsrankCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of tracked institutions, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn insrank_corpus_institution_count(corpus: *const InsrankCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.tracked().len())
}

/// Predicts `venue` (id or abbreviation) for `target_year` using data before
/// that year. `seed` drives clustering and the forest of the feature-matrix
/// method; the other methods ignore it.
///
/// # Safety
/// `corpus` must be a live handle, `venue` a NUL-terminated string and `out`
/// a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn insrank_rank(
    corpus: *const InsrankCorpus,
    method: InsrankMethod,
    venue: *const c_char,
    target_year: i32,
    seed: u64,
    out: *mut *mut InsrankRelevance,
) -> InsrankStatus {
    guard(|| {
        let Some(handle) = corpus.as_ref() else {
            return fail(InsrankStatus::NullArgument, "corpus is null");
        };
        if out.is_null() {
            return fail(InsrankStatus::NullArgument, "out is null");
        }
        let venue = match text(venue, "venue") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let Some(venue) = handle.corpus.resolve_venue(venue).cloned() else {
            return fail(InsrankStatus::InvalidArgument, format!("unknown venue `{venue}`"));
        };
        let mut settings = MethodSettings::default();
        settings.rankins2.cluster_seed = derive_seed(seed, streams::CLUSTERS);
        settings.rankins2.forest.seed = derive_seed(seed, streams::FOREST);
        let method = match method {
            InsrankMethod::PreviousYear => Method::PreviousYear,
            InsrankMethod::Rankins1 => Method::RankIns1,
            InsrankMethod::Rankins2 => Method::RankIns2,
        };
        match settings
            .predictor(method)
            .predict(&handle.corpus, &handle.book, &venue, target_year)
        {
            Ok(p) => {
                *out = Box::into_raw(Box::new(relevance_handle(&p.relevance)));
                InsrankStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), format!("{}: {e}", method.name())),
        }
    })
}

fn relevance_handle(r: &RelevanceVector) -> InsrankRelevance {
    InsrankRelevance {
        ids: r
            .institutions()
            .iter()
            .map(|id| CString::new(id.as_str()).unwrap_or_default())
            .collect(),
        values: r.values().to_vec(),
    }
}

/// # Safety
/// `relevance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn insrank_relevance_len(relevance: *const InsrankRelevance) -> usize {
    relevance.as_ref().map_or(0, |r| r.values.len())
}

/// Reads entry `index`. The id stays valid until the handle is freed.
///
/// # Safety
/// `relevance` must be a live handle; `id` and `value` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn insrank_relevance_get(
    relevance: *const InsrankRelevance,
    index: usize,
    id: *mut *const c_char,
    value: *mut f64,
) -> InsrankStatus {
    guard(|| {
        let Some(r) = relevance.as_ref() else {
            return fail(InsrankStatus::NullArgument, "relevance is null");
        };
        if id.is_null() || value.is_null() {
            return fail(InsrankStatus::NullArgument, "output pointer is null");
        }
        if index >= r.values.len() {
            return fail(
                InsrankStatus::OutOfRange,
                format!("index {index} >= {}", r.values.len()),
            );
        }
        *id = r.ids[index].as_ptr();
        *value = r.values[index];
        InsrankStatus::Ok
    })
}

/// # Safety
/// `relevance` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn insrank_relevance_free(relevance: *mut InsrankRelevance) {
    if !relevance.is_null() {
        drop(Box::from_raw(relevance));
    }
}

/// NDCG@n of ranking items by descending `predicted` (ties by lower index)
/// against true relevances `truth`; both arrays have `len` entries.
///
/// # Safety
/// `predicted` and `truth` must point to `len` readable doubles (or be null
/// when `len` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn insrank_ndcg(
    predicted: *const f64,
    truth: *const f64,
    len: usize,
    n: usize,
    out: *mut f64,
) -> InsrankStatus {
    guard(|| {
        if out.is_null() || (len > 0 && (predicted.is_null() || truth.is_null())) {
            return fail(InsrankStatus::NullArgument, "null array or output");
        }
        if n == 0 {
            return fail(InsrankStatus::InvalidArgument, "cutoff must be at least 1");
        }
        let (p, t) = if len == 0 {
            (&[][..], &[][..])
        } else {
            (
                std::slice::from_raw_parts(predicted, len),
                std::slice::from_raw_parts(truth, len),
            )
        };
        if p.iter().chain(t).any(|x| !x.is_finite()) {
            return fail(InsrankStatus::InvalidArgument, "values must be finite");
        }
        let ids: Arc<[InstitutionId]> = (0..len).map(|i| InstitutionId::from(format!("{i:020}"))).collect();
        let truth = RelevanceVector::new("ffi".into(), 0, ids.clone(), t.to_vec());
        let result = Ranking::from_scores(ids.iter().cloned().zip(p.iter().copied()))
            .and_then(|ranking| ndcg_at(&ranking, &truth, n));
        match result {
            Ok(v) => {
                *out = v;
                InsrankStatus::Ok
            }
            Err(e) => fail(InsrankStatus::InvalidArgument, e),
        }
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn insrank_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn insrank_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
