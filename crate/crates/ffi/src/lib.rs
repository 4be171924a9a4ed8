//! C ABI over `relclust`.
//!
//! Every function returns an [`RcStatus`]; on failure a message is available
//! from [`rc_last_error`] on the same thread until the next failing call.
//! Objects are handed out as opaque pointers and must be released with the
//! matching `*_free` function. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use relclust::cluster::{cut_at_k, hac_ward, ClusterAssignment};
use relclust::corpus::{compute_idf_with, load_corpus, Corpus};
use relclust::embeddings::{load_embeddings, EmbeddingTable};
use relclust::evaluate::pairwise_f1;
use relclust::pipeline::{execute, run_pipeline, Inputs, RunConfig, RunResult};
use relclust::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad input data or configuration.
    Validation = 3,
    Io = 4,
    /// Any other failure inside the pipeline.
    Runtime = 5,
    /// The requested value does not exist (e.g. no gold labels to score).
    Unavailable = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Pairwise precision, recall and F1 in [0, 1].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RcScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_evaluated: usize,
}

pub struct RcCorpus(Corpus);

pub struct RcEmbeddings(EmbeddingTable);

pub struct RcRun {
    result: RunResult,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> RcStatus {
    let mut e = err;
    while let Error::Stage { source, .. } = e {
        e = source;
    }
    if matches!(e, Error::Io { .. }) {
        RcStatus::Io
    } else if err.is_validation() {
        RcStatus::Validation
    } else {
        RcStatus::Runtime
    }
}

fn fail(status: RcStatus, msg: impl Into<String>) -> RcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> RcStatus) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RcStatus::Panic, "internal panic"),
    }
}

fn lib_error(err: Error) -> RcStatus {
    fail(status_of(&err), err.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RcStatus> {
    if p.is_null() {
        return Err(fail(RcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

macro_rules! try_rc {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), RcStatus> {
    if p.is_null() {
        Err(fail(RcStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message for the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a JSON-lines corpus.
#[no_mangle]
pub unsafe extern "C" fn rc_corpus_load(path: *const c_char, out: *mut *mut RcCorpus) -> RcStatus {
    guard(|| {
        try_rc!(non_null(out, "out"));
        let path = try_rc!(str_arg(path, "path"));
        match load_corpus(path) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(RcCorpus(c)));
                RcStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_corpus_len(corpus: *const RcCorpus, out: *mut usize) -> RcStatus {
    guard(|| {
        try_rc!(non_null(corpus, "corpus"));
        try_rc!(non_null(out, "out"));
        *out = (*corpus).0.n_instances();
        RcStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_corpus_free(corpus: *mut RcCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Loads word vectors from a text file. `dim` of 0 infers the dimension.
#[no_mangle]
pub unsafe extern "C" fn rc_embeddings_load(path: *const c_char, dim: usize, out: *mut *mut RcEmbeddings) -> RcStatus {
    guard(|| {
        try_rc!(non_null(out, "out"));
        let path = try_rc!(str_arg(path, "path"));
        match load_embeddings(path, (dim > 0).then_some(dim)) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(RcEmbeddings(t)));
                RcStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_embeddings_dim(table: *const RcEmbeddings, out: *mut usize) -> RcStatus {
    guard(|| {
        try_rc!(non_null(table, "table"));
        try_rc!(non_null(out, "out"));
        *out = (*table).0.dim();
        RcStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_embeddings_len(table: *const RcEmbeddings, out: *mut usize) -> RcStatus {
    guard(|| {
        try_rc!(non_null(table, "table"));
        try_rc!(non_null(out, "out"));
        *out = (*table).0.len();
        RcStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_embeddings_free(table: *mut RcEmbeddings) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

fn parse_config(json: &str) -> Result<RunConfig, RcStatus> {
    serde_json::from_str(json).map_err(|e| fail(RcStatus::Validation, format!("bad run configuration: {e}")))
}

fn into_run(result: RunResult) -> *mut RcRun {
    let ids = result
        .assignment
        .instance_ids
        .iter()
        .map(|s| CString::new(s.replace('\0', " ")).unwrap_or_default())
        .collect();
    Box::into_raw(Box::new(RcRun { result, ids }))
}

/// Runs featurization, reduction, clustering and evaluation in memory on
/// already-loaded inputs. `config_json` is a JSON run configuration; its
/// path and output fields are ignored.
#[no_mangle]
pub unsafe extern "C" fn rc_run_execute(
    corpus: *const RcCorpus,
    table: *const RcEmbeddings,
    config_json: *const c_char,
    out: *mut *mut RcRun,
) -> RcStatus {
    guard(|| {
        try_rc!(non_null(corpus, "corpus"));
        try_rc!(non_null(table, "table"));
        try_rc!(non_null(out, "out"));
        let cfg = try_rc!(parse_config(try_rc!(str_arg(config_json, "config_json"))));
        let corpus = (*corpus).0.clone();
        let inputs = Inputs {
            idf: compute_idf_with(&corpus, cfg.idf),
            corpus,
            table: (*table).0.clone(),
            hashes: Vec::new(),
        };
        match execute(&cfg, &inputs) {
            Ok(r) => {
                *out = into_run(r);
                RcStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

/// Runs the full pipeline from files named in `config_json`, writing the
/// usual outputs to its `out` directory.
#[no_mangle]
pub unsafe extern "C" fn rc_run_pipeline(config_json: *const c_char, out: *mut *mut RcRun) -> RcStatus {
    guard(|| {
        try_rc!(non_null(out, "out"));
        let cfg = try_rc!(parse_config(try_rc!(str_arg(config_json, "config_json"))));
        match run_pipeline(&cfg) {
            Ok(o) => {
                *out = into_run(o.result);
                RcStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_run_len(run: *const RcRun, out: *mut usize) -> RcStatus {
    guard(|| {
        try_rc!(non_null(run, "run"));
        try_rc!(non_null(out, "out"));
        *out = (*run).result.assignment.labels.len();
        RcStatus::Ok
    })
}

/// Copies cluster labels into `labels`, which must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn rc_run_labels(run: *const RcRun, labels: *mut usize, capacity: usize) -> RcStatus {
    guard(|| {
        try_rc!(non_null(run, "run"));
        try_rc!(non_null(labels, "labels"));
        let src = &(*run).result.assignment.labels;
        if capacity < src.len() {
            return fail(RcStatus::BufferTooSmall, format!("need {} entries, got {capacity}", src.len()));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), labels, src.len());
        RcStatus::Ok
    })
}

/// Instance id of row `index`, owned by `run`.
#[no_mangle]
pub unsafe extern "C" fn rc_run_instance_id(run: *const RcRun, index: usize, out: *mut *const c_char) -> RcStatus {
    guard(|| {
        try_rc!(non_null(run, "run"));
        try_rc!(non_null(out, "out"));
        let run = &*run;
        match run.ids.get(index) {
            Some(id) => {
                *out = id.as_ptr();
                RcStatus::Ok
            }
            None => fail(RcStatus::Unavailable, format!("index {index} out of range")),
        }
    })
}

/// Score against the corpus gold labels; `Unavailable` if there were none.
#[no_mangle]
pub unsafe extern "C" fn rc_run_score(run: *const RcRun, out: *mut RcScore) -> RcStatus {
    guard(|| {
        try_rc!(non_null(run, "run"));
        try_rc!(non_null(out, "out"));
        match (*run).result.report {
            Some(r) => {
                *out = RcScore {
                    precision: r.precision,
                    recall: r.recall,
                    f1: r.f1,
                    n_evaluated: r.n_evaluated,
                };
                RcStatus::Ok
            }
            None => fail(RcStatus::Unavailable, "run has no gold labels to score against"),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rc_run_free(run: *mut RcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Pairwise scores of `predicted` against `gold`; a negative gold label
/// marks an unlabeled instance, which is left out.
#[no_mangle]
pub unsafe extern "C" fn rc_pairwise_f1(
    predicted: *const usize,
    gold: *const i64,
    n: usize,
    out: *mut RcScore,
) -> RcStatus {
    guard(|| {
        try_rc!(non_null(predicted, "predicted"));
        try_rc!(non_null(gold, "gold"));
        try_rc!(non_null(out, "out"));
        let pred = std::slice::from_raw_parts(predicted, n);
        let gold = std::slice::from_raw_parts(gold, n);
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let k = pred.iter().max().map_or(0, |m| m + 1);
        let assignment = match ClusterAssignment::new(ids.clone(), pred.to_vec(), k) {
            Ok(a) => a,
            Err(e) => return lib_error(e),
        };
        let gold_map = ids
            .into_iter()
            .zip(gold)
            .filter(|(_, &g)| g >= 0)
            .map(|(id, g)| (id, g.to_string()))
            .collect();
        match pairwise_f1(&assignment, &gold_map) {
            Ok(r) => {
                *out = RcScore {
                    precision: r.precision,
                    recall: r.recall,
                    f1: r.f1,
                    n_evaluated: r.n_evaluated,
                };
                RcStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

/// Ward clustering of `n` row-major points of dimension `dim`, cut into
/// `k` clusters. Writes `n` labels.
#[no_mangle]
pub unsafe extern "C" fn rc_hac_ward(
    data: *const f64,
    n: usize,
    dim: usize,
    k: usize,
    labels: *mut usize,
) -> RcStatus {
    guard(|| {
        try_rc!(non_null(data, "data"));
        try_rc!(non_null(labels, "labels"));
        let Some(len) = n.checked_mul(dim) else {
            return fail(RcStatus::Validation, "n * dim overflows");
        };
        let m = DMatrix::from_row_slice(n, dim, std::slice::from_raw_parts(data, len));
        match hac_ward(&m).and_then(|d| cut_at_k(&d, k)) {
            Ok(l) => {
                ptr::copy_nonoverlapping(l.as_ptr(), labels, n);
                RcStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}
