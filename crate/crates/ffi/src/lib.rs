//! C ABI over the affinity-kg library.
//!
//! Graphs and models are opaque heap handles released with their `_free`
//! function. Every fallible call returns an [`AkgStatus`]; on failure the
//! message is available from [`akg_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use affinity_kg::commands::load_folds;
use affinity_kg::eval::{self, RankMode};
use affinity_kg::kg::{Fold, KnowledgeGraph};
use affinity_kg::models::Model;
use affinity_kg::trainer::load_checkpoint;
use affinity_kg::{Error, ErrorClass};

/// Call outcome; the nonzero codes match the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AkgStatus {
    Ok = 0,
    InputError = 2,
    ConsistencyError = 3,
    RuntimeError = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AkgFold {
    Train = 0,
    Valid = 1,
    Test = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AkgMetrics {
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mrr: f64,
    /// Evaluated directions, two per triple.
    pub n: usize,
}

/// Opaque knowledge graph handle.
pub struct AkgGraph(KnowledgeGraph);

/// Opaque model handle.
pub struct AkgModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AkgStatus {
    match err.class() {
        ErrorClass::Input => AkgStatus::InputError,
        ErrorClass::Consistency => AkgStatus::ConsistencyError,
        ErrorClass::Runtime => AkgStatus::RuntimeError,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AkgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AkgStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is NULL"));
            AkgStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            AkgStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn akg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads `train.tsv`, `valid.tsv` and `test.tsv` from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn akg_graph_load(dir: *const c_char, undirected: bool, out: *mut *mut AkgGraph) -> AkgStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let kg = load_folds(&dir, undirected)?;
        *out = Box::into_raw(Box::new(AkgGraph(kg)));
        Ok(())
    })
}

/// # Safety
/// `graph` must come from [`akg_graph_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn akg_graph_free(graph: *mut AkgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn akg_graph_n_entities(graph: *const AkgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.n_entities())
}

/// Relation count including reciprocals, as models index them.
///
/// # Safety
/// `graph` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn akg_graph_n_relations(graph: *const AkgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.n_model_relations())
}

/// # Safety
/// `graph` must be a live handle, `label` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn akg_graph_entity_id(graph: *const AkgGraph, label: *const c_char, out: *mut usize) -> AkgStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        let label = path_arg(label, "label")?;
        let label = label.to_string_lossy();
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let id = g
            .0
            .entities()
            .get(&label)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown entity {label:?}")))?;
        *out = id;
        Ok(())
    })
}

/// Loads a checkpoint directory. When `graph` is non-NULL the checkpoint's
/// vocabulary must match it.
///
/// # Safety
/// `dir` must be NUL-terminated, `graph` live or NULL, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn akg_model_load(dir: *const c_char, graph: *const AkgGraph, out: *mut *mut AkgModel) -> AkgStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let ck = load_checkpoint(&dir)?;
        if let Some(g) = graph.as_ref() {
            ck.check_vocab(&g.0)?;
            eval::check_compatible(&ck.model, &g.0)?;
        }
        *out = Box::into_raw(Box::new(AkgModel(ck.model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`akg_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn akg_model_free(model: *mut AkgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Inference-time logit of `(h, r, t)`.
///
/// # Safety
/// `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn akg_model_score(model: *const AkgModel, h: usize, r: usize, t: usize, out: *mut f64) -> AkgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = m.0.score(h, r, t)?;
        Ok(())
    })
}

/// Writes the logits of every tail into `out[0..len]`; `len` must equal the
/// entity count.
///
/// # Safety
/// `model` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn akg_model_score_all_tails(
    model: *const AkgModel,
    h: usize,
    r: usize,
    out: *mut f64,
    len: usize,
) -> AkgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if len != m.0.n_entities() {
            return Err(Error::DimensionMismatch(format!("buffer holds {len}, model has {} entities", m.0.n_entities())).into());
        }
        let scores = m.0.score_all_tails(h, r)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&scores);
        Ok(())
    })
}

/// Ranks both directions of every triple in `fold` and aggregates metrics.
///
/// # Safety
/// `model` and `graph` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn akg_evaluate(
    model: *const AkgModel,
    graph: *const AkgGraph,
    fold: AkgFold,
    filtered: bool,
    out: *mut AkgMetrics,
) -> AkgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let g = deref(graph, "graph")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let fold = match fold {
            AkgFold::Train => Fold::Train,
            AkgFold::Valid => Fold::Valid,
            AkgFold::Test => Fold::Test,
        };
        let mode = if filtered { RankMode::Filtered } else { RankMode::Raw };
        let known = g.0.known_true_set();
        let o = eval::evaluate(&m.0, &g.0, &known, fold, mode, 1)?.overall;
        *out = AkgMetrics { hits1: o.hits1, hits3: o.hits3, hits10: o.hits10, mrr: o.mrr, n: o.n };
        Ok(())
    })
}

/// Probability that a uniformly random top-`degree` list over `n_e`
/// entities is exactly right.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn akg_random_top_n_probability(n_e: u64, degree: u64, out: *mut f64) -> AkgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = eval::random_top_n_probability(n_e, degree)?;
        Ok(())
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn akg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
