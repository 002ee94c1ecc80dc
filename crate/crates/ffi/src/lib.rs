//! C ABI for the eegauth evaluation engine.
//!
//! Every fallible function returns an `EEGAUTH_*` status code. On failure the
//! message is kept per thread and read with [`eegauth_last_error_message`].
//! Handles are opaque and released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;
use std::sync::Arc;

use eegauth::corpus::{load_manifest, parse_date, CorpusIndex, SessionMeta};
use eegauth::features::{burg, welch_spectrum, FeatureVector, PsdSpec};
use eegauth::matching::{build_template, score_distance, Metric, ScorerConfig, ScorerKind, SubjectScorer, Template, TemplateRule};
use eegauth::metrics::{compute_eer, frr_at_far, roc_curve};
use eegauth::Error;

pub const EEGAUTH_OK: i32 = 0;
pub const EEGAUTH_ERR_NULL_POINTER: i32 = 1;
pub const EEGAUTH_ERR_INVALID_ARGUMENT: i32 = 2;
pub const EEGAUTH_ERR_DATA: i32 = 3;
pub const EEGAUTH_ERR_NUMERICAL: i32 = 4;
pub const EEGAUTH_ERR_BUFFER_TOO_SMALL: i32 = 5;
pub const EEGAUTH_ERR_PANIC: i32 = 6;

pub const EEGAUTH_METRIC_EUCLIDEAN: i32 = 0;
pub const EEGAUTH_METRIC_COSINE: i32 = 1;
pub const EEGAUTH_METRIC_MANHATTAN: i32 = 2;

pub const EEGAUTH_SCORER_DISTANCE: i32 = 0;
pub const EEGAUTH_SCORER_LOGREG: i32 = 1;
pub const EEGAUTH_SCORER_LDA: i32 = 2;

/// Opened corpus manifest.
pub struct EegauthCorpus {
    inner: CorpusIndex,
}

/// Distance template built from enrollment vectors.
pub struct EegauthTemplate {
    inner: Template,
}

/// Trained per-subject scorer of any kind.
pub struct EegauthScorer {
    inner: SubjectScorer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

struct Failure {
    code: i32,
    msg: String,
}

type FfiResult<T> = Result<T, Failure>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_validation() => EEGAUTH_ERR_INVALID_ARGUMENT,
            Error::Numerical(_) | Error::Empty(_) => EEGAUTH_ERR_NUMERICAL,
            Error::Dimension { .. } => EEGAUTH_ERR_INVALID_ARGUMENT,
            _ => EEGAUTH_ERR_DATA,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn fail(code: i32, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EEGAUTH_OK,
        Ok(Err(e)) => {
            set_error(&e.msg);
            e.code
        }
        Err(_) => {
            set_error("internal panic");
            EEGAUTH_ERR_PANIC
        }
    }
}

unsafe fn array<'a>(ptr: *const f64, len: usize, name: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(EEGAUTH_ERR_NULL_POINTER, format!("{name} is null")));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, name: &str) -> FfiResult<&'a mut T> {
    ptr.as_mut().ok_or_else(|| fail(EEGAUTH_ERR_NULL_POINTER, format!("{name} is null")))
}

unsafe fn handle<'a, T>(ptr: *const T, name: &str) -> FfiResult<&'a T> {
    ptr.as_ref().ok_or_else(|| fail(EEGAUTH_ERR_NULL_POINTER, format!("{name} is null")))
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> FfiResult<&'a Path> {
    if ptr.is_null() {
        return Err(fail(EEGAUTH_ERR_NULL_POINTER, "path is null"));
    }
    let s = CStr::from_ptr(ptr).to_str().map_err(|_| fail(EEGAUTH_ERR_INVALID_ARGUMENT, "path is not UTF-8"))?;
    Ok(Path::new(s))
}

fn metric(code: i32) -> FfiResult<Metric> {
    match code {
        EEGAUTH_METRIC_EUCLIDEAN => Ok(Metric::Euclidean),
        EEGAUTH_METRIC_COSINE => Ok(Metric::Cosine),
        EEGAUTH_METRIC_MANHATTAN => Ok(Metric::Manhattan),
        _ => Err(fail(EEGAUTH_ERR_INVALID_ARGUMENT, format!("unknown metric code {code}"))),
    }
}

fn scorer_kind(code: i32) -> FfiResult<ScorerKind> {
    match code {
        EEGAUTH_SCORER_DISTANCE => Ok(ScorerKind::Distance),
        EEGAUTH_SCORER_LOGREG => Ok(ScorerKind::Logreg),
        EEGAUTH_SCORER_LDA => Ok(ScorerKind::Lda),
        _ => Err(fail(EEGAUTH_ERR_INVALID_ARGUMENT, format!("unknown scorer code {code}"))),
    }
}

/// Row-major `n × dim` matrix as feature vectors with placeholder provenance.
fn rows(data: &[f64], n: usize, dim: usize) -> FfiResult<Vec<FeatureVector>> {
    if dim == 0 {
        return Err(fail(EEGAUTH_ERR_INVALID_ARGUMENT, "dim must be >= 1"));
    }
    let meta = Arc::new(SessionMeta::new("ffi", "ffi", "ffi", parse_date("2000-01-01")?)?);
    let id: Arc<str> = Arc::from("ffi");
    Ok(data
        .chunks(dim)
        .take(n)
        .enumerate()
        .map(|(k, v)| FeatureVector { meta: meta.clone(), epoch_index: k, vec: v.to_vec(), feature_id: id.clone() })
        .collect())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eegauth_version() -> *const c_char {
    VERSION.as_ptr() as *const c_char
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn eegauth_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn eegauth_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Equal error rate of the given genuine and impostor scores (higher = more genuine).
///
/// # Safety
/// `genuine` and `impostor` must point to `n_genuine` / `n_impostor` doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_eer(
    genuine: *const f64,
    n_genuine: usize,
    impostor: *const f64,
    n_impostor: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let g = array(genuine, n_genuine, "genuine")?;
        let i = array(impostor, n_impostor, "impostor")?;
        let out = out_ref(out, "out")?;
        *out = compute_eer(&roc_curve(g, i)?);
        Ok(())
    })
}

/// FRR at the most permissive threshold whose FAR is at most `far_target`.
///
/// # Safety
/// Same contract as [`eegauth_eer`].
#[no_mangle]
pub unsafe extern "C" fn eegauth_frr_at_far(
    genuine: *const f64,
    n_genuine: usize,
    impostor: *const f64,
    n_impostor: usize,
    far_target: f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        if !(0.0..=1.0).contains(&far_target) {
            return Err(fail(EEGAUTH_ERR_INVALID_ARGUMENT, "far_target must be in [0, 1]"));
        }
        let g = array(genuine, n_genuine, "genuine")?;
        let i = array(impostor, n_impostor, "impostor")?;
        let out = out_ref(out, "out")?;
        *out = frr_at_far(&roc_curve(g, i)?, far_target);
        Ok(())
    })
}

/// One-sided Welch PSD of `x` with a periodic Hann taper.
///
/// Writes `segment_len / 2 + 1` bins into `out` and their count into `out_len`.
/// Returns `EEGAUTH_ERR_BUFFER_TOO_SMALL` (with `out_len` set) when `out_cap`
/// is short.
///
/// # Safety
/// `x` must hold `n` doubles, `out` `out_cap` doubles; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_welch_psd(
    x: *const f64,
    n: usize,
    rate_hz: f64,
    segment_len: usize,
    overlap: f64,
    out: *mut f64,
    out_cap: usize,
    out_len: *mut usize,
) -> i32 {
    guard(|| {
        let x = array(x, n, "x")?;
        let out_len = out_ref(out_len, "out_len")?;
        let spec = PsdSpec { segment_len, overlap, ..PsdSpec::default() };
        if segment_len < 2 || !(0.0..1.0).contains(&overlap) {
            return Err(fail(EEGAUTH_ERR_INVALID_ARGUMENT, "segment_len must be >= 2 and overlap in [0, 1)"));
        }
        let s = welch_spectrum(x, rate_hz, &spec)?;
        *out_len = s.len();
        if out_cap < s.len() {
            return Err(fail(EEGAUTH_ERR_BUFFER_TOO_SMALL, format!("need {} bins, have {out_cap}", s.len())));
        }
        if out.is_null() {
            return Err(fail(EEGAUTH_ERR_NULL_POINTER, "out is null"));
        }
        slice::from_raw_parts_mut(out, s.len()).copy_from_slice(&s);
        Ok(())
    })
}

/// Burg AR(`order`) fit; `coeffs` receives `order` values with
/// `x[t] = Σ coeffs[k] x[t-1-k] + e[t]`. `error_power` may be NULL.
///
/// # Safety
/// `x` must hold `n` doubles and `coeffs` `order` doubles.
#[no_mangle]
pub unsafe extern "C" fn eegauth_burg(
    x: *const f64,
    n: usize,
    order: usize,
    coeffs: *mut f64,
    error_power: *mut f64,
) -> i32 {
    guard(|| {
        let x = array(x, n, "x")?;
        let fit = burg(x, order)?;
        if coeffs.is_null() {
            return Err(fail(EEGAUTH_ERR_NULL_POINTER, "coeffs is null"));
        }
        slice::from_raw_parts_mut(coeffs, order).copy_from_slice(&fit.coeffs);
        if let Some(p) = error_power.as_mut() {
            *p = fit.error_power;
        }
        Ok(())
    })
}

/// Open a corpus manifest (file or directory).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_corpus_open(path: *const c_char, out: *mut *mut EegauthCorpus) -> i32 {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = load_manifest(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(EegauthCorpus { inner }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from [`eegauth_corpus_open`]; `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_corpus_n_sessions(corpus: *const EegauthCorpus, n: *mut usize) -> i32 {
    guard(|| {
        *out_ref(n, "n")? = handle(corpus, "corpus")?.inner.sessions.len();
        Ok(())
    })
}

/// # Safety
/// As [`eegauth_corpus_n_sessions`].
#[no_mangle]
pub unsafe extern "C" fn eegauth_corpus_n_channels(corpus: *const EegauthCorpus, n: *mut usize) -> i32 {
    guard(|| {
        *out_ref(n, "n")? = handle(corpus, "corpus")?.inner.channels.len();
        Ok(())
    })
}

/// # Safety
/// As [`eegauth_corpus_n_sessions`].
#[no_mangle]
pub unsafe extern "C" fn eegauth_corpus_rate_hz(corpus: *const EegauthCorpus, rate: *mut f64) -> i32 {
    guard(|| {
        *out_ref(rate, "rate")? = handle(corpus, "corpus")?.inner.rate_hz;
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from [`eegauth_corpus_open`] or be NULL, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eegauth_corpus_free(corpus: *mut EegauthCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Build a centroid template from `n_vectors` row-major vectors of length `dim`.
///
/// # Safety
/// `vectors` must hold `n_vectors * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_template_new(
    vectors: *const f64,
    n_vectors: usize,
    dim: usize,
    metric_code: i32,
    out: *mut *mut EegauthTemplate,
) -> i32 {
    guard(|| {
        let out = out_ref(out, "out")?;
        let m = metric(metric_code)?;
        let len = n_vectors.checked_mul(dim).ok_or_else(|| fail(EEGAUTH_ERR_INVALID_ARGUMENT, "size overflow"))?;
        let data = array(vectors, len, "vectors")?;
        let inner = build_template("ffi", &rows(data, n_vectors, dim)?, m)?;
        *out = Box::into_raw(Box::new(EegauthTemplate { inner }));
        Ok(())
    })
}

/// Similarity (negated distance to the centroid) of one probe.
///
/// # Safety
/// `probe` must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_template_score(
    template: *const EegauthTemplate,
    probe: *const f64,
    dim: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let t = handle(template, "template")?;
        let p = array(probe, dim, "probe")?;
        *out_ref(out, "out")? = score_distance(p, &t.inner, TemplateRule::Centroid)?;
        Ok(())
    })
}

/// # Safety
/// `template` must come from [`eegauth_template_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn eegauth_template_free(template: *mut EegauthTemplate) {
    if !template.is_null() {
        drop(Box::from_raw(template));
    }
}

/// Train a scorer for one subject. Classifier kinds need `n_negatives >= 1`
/// impostor vectors; the distance kind ignores them.
///
/// # Safety
/// `enrollment` must hold `n_enrollment * dim` doubles, `negatives`
/// `n_negatives * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_scorer_train(
    kind_code: i32,
    metric_code: i32,
    enrollment: *const f64,
    n_enrollment: usize,
    negatives: *const f64,
    n_negatives: usize,
    dim: usize,
    out: *mut *mut EegauthScorer,
) -> i32 {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cfg = ScorerConfig { kind: scorer_kind(kind_code)?, metric: metric(metric_code)?, ..ScorerConfig::default() };
        let overflow = || fail(EEGAUTH_ERR_INVALID_ARGUMENT, "size overflow");
        let enroll = array(enrollment, n_enrollment.checked_mul(dim).ok_or_else(overflow)?, "enrollment")?;
        let neg = array(negatives, n_negatives.checked_mul(dim).ok_or_else(overflow)?, "negatives")?;
        let enroll = rows(enroll, n_enrollment, dim)?;
        let neg: Vec<&[f64]> = neg.chunks(dim.max(1)).collect();
        let inner = SubjectScorer::build("ffi", &enroll, &neg, &cfg)?;
        *out = Box::into_raw(Box::new(EegauthScorer { inner }));
        Ok(())
    })
}

/// Load a classifier saved by [`eegauth_scorer_save`] or the engine.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_scorer_load(path: *const c_char, out: *mut *mut EegauthScorer) -> i32 {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = eegauth::matching::Classifier::load(path_arg(path)?)?;
        let inner = SubjectScorer::Classifier { subject_id: "ffi".into(), feature_id: Arc::from("ffi"), model };
        *out = Box::into_raw(Box::new(EegauthScorer { inner }));
        Ok(())
    })
}

/// Save a classifier scorer; distance scorers have no model to save.
///
/// # Safety
/// `scorer` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eegauth_scorer_save(scorer: *const EegauthScorer, path: *const c_char) -> i32 {
    guard(|| {
        let s = handle(scorer, "scorer")?;
        let path = path_arg(path)?;
        match &s.inner {
            SubjectScorer::Classifier { model, .. } => Ok(model.save(path)?),
            SubjectScorer::Distance { .. } => Err(fail(EEGAUTH_ERR_INVALID_ARGUMENT, "distance scorers cannot be saved")),
        }
    })
}

/// # Safety
/// `probe` must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegauth_scorer_score(
    scorer: *const EegauthScorer,
    probe: *const f64,
    dim: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let s = handle(scorer, "scorer")?;
        let p = array(probe, dim, "probe")?;
        *out_ref(out, "out")? = s.inner.score(p)?;
        Ok(())
    })
}

/// # Safety
/// `scorer` must come from a scorer constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn eegauth_scorer_free(scorer: *mut EegauthScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}
