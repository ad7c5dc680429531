//! C ABI over the `tbip` library.
//!
//! Corpora and fits are opaque handles created by `*_load` / `tbip_train`
//! and released with the matching `*_free`. Every fallible call returns a
//! [`TbipStatus`]; on failure a message is kept per thread and can be read
//! with [`tbip_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tbip::corpus::{SparseCorpus, Vocabulary};
use tbip::tbip::{FitResult, PriorConfig, TrainConfig};

/// Result of every fallible call. Codes 1 to 3 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TbipStatus {
    Ok = 0,
    IoError = 1,
    ValidationError = 2,
    NumericError = 3,
    NullPointer = 4,
    Panic = 5,
}

/// A preprocessed corpus loaded from a corpus directory.
pub struct TbipCorpus {
    corpus: SparseCorpus,
    vocab: Vocabulary,
}

/// A fitted TBIP model.
pub struct TbipFit {
    fit: FitResult,
}

/// Training options. Obtain defaults from [`tbip_train_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TbipTrainOptions {
    pub num_topics: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub mc_samples: usize,
    pub use_log_transform: bool,
    pub report_interval: usize,
    pub pretrain_sweeps: usize,
    pub prior_shape: f64,
    pub prior_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(TbipStatus, String);

impl From<tbip::Error> for Failure {
    fn from(e: tbip::Error) -> Self {
        let status = match e.exit_code() {
            1 => TbipStatus::IoError,
            3 => TbipStatus::NumericError,
            _ => TbipStatus::ValidationError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TbipStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(TbipStatus::ValidationError, message.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TbipStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TbipStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            TbipStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn copy_out(values: &[f64], out: *mut f64, capacity: usize) -> Result<(), Failure> {
    if capacity < values.len() {
        return Err(invalid(format!(
            "buffer holds {capacity} values, need {}",
            values.len()
        )));
    }
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn tbip_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn tbip_train_options_default() -> TbipTrainOptions {
    let cfg = TrainConfig::default();
    let priors = PriorConfig::default();
    TbipTrainOptions {
        num_topics: cfg.num_topics,
        batch_size: cfg.batch_size,
        max_steps: cfg.max_steps,
        seed: cfg.seed,
        learning_rate: cfg.adam.lr,
        mc_samples: cfg.mc_samples,
        use_log_transform: cfg.use_log_transform,
        report_interval: cfg.elbo_report_interval,
        pretrain_sweeps: cfg.pretrain_sweeps,
        prior_shape: priors.a,
        prior_rate: priors.b,
    }
}

/// Load a corpus directory (`counts.txt`, `vocab.txt`, `authors.csv`).
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tbip_corpus_load(dir: *const c_char, out: *mut *mut TbipCorpus) -> TbipStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let dir = path_arg(dir, "dir")?;
        let (corpus, vocab) = tbip::io::read_corpus_dir(&dir)?;
        *slot = Box::into_raw(Box::new(TbipCorpus { corpus, vocab }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle from [`tbip_corpus_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tbip_corpus_free(corpus: *mut TbipCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tbip_corpus_num_docs(corpus: *const TbipCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.num_docs())
}

/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tbip_corpus_num_terms(corpus: *const TbipCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.vocab.len())
}

/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tbip_corpus_num_authors(corpus: *const TbipCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.num_authors())
}

/// Train TBIP on `corpus`. `options` may be null for the defaults.
///
/// # Safety
/// `corpus` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tbip_train(
    corpus: *const TbipCorpus,
    options: *const TbipTrainOptions,
    out: *mut *mut TbipFit,
) -> TbipStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let o = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| tbip_train_options_default());
        let mut cfg = TrainConfig {
            num_topics: o.num_topics,
            batch_size: o.batch_size,
            max_steps: o.max_steps,
            seed: o.seed,
            mc_samples: o.mc_samples,
            use_log_transform: o.use_log_transform,
            elbo_report_interval: o.report_interval,
            pretrain_sweeps: o.pretrain_sweeps,
            ..TrainConfig::default()
        };
        cfg.adam.lr = o.learning_rate;
        let priors = PriorConfig {
            a: o.prior_shape,
            b: o.prior_rate,
        };
        let fit = tbip::tbip::train_tbip(&corpus.corpus, &cfg, &priors, None)?;
        *slot = Box::into_raw(Box::new(TbipFit { fit }));
        Ok(())
    })
}

/// Write a fit to `dir` in the CLI's fit format.
///
/// # Safety
/// `fit` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_save(fit: *const TbipFit, dir: *const c_char) -> TbipStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        let dir = path_arg(dir, "dir")?;
        tbip::io::write_fit(&dir, &fit.fit)?;
        Ok(())
    })
}

/// Read a TBIP fit written by [`tbip_fit_save`] or `tbip train tbip`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_load(dir: *const c_char, out: *mut *mut TbipFit) -> TbipStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let dir = path_arg(dir, "dir")?;
        let fit = tbip::io::read_fit(&dir)?;
        *slot = Box::into_raw(Box::new(TbipFit { fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_free(fit: *mut TbipFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_num_authors(fit: *const TbipFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.num_authors())
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_num_topics(fit: *const TbipFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.num_topics)
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_num_terms(fit: *const TbipFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.num_terms)
}

/// Copy the fitted ideal points into `out`, which holds `capacity` values.
///
/// # Safety
/// `fit` must be a live handle and `out` valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_ideal_points(fit: *const TbipFit, out: *mut f64, capacity: usize) -> TbipStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        copy_out(&fit.fit.x_hat, out, capacity)
    })
}

/// Copy author `index`'s name as a NUL-terminated string into `buf`.
/// `needed`, when not null, receives the buffer size required.
///
/// # Safety
/// `fit` must be a live handle, `buf` valid for `capacity` bytes or null
/// with `capacity` 0, `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_author_name(
    fit: *const TbipFit,
    index: usize,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> TbipStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        let name = fit
            .fit
            .author_names
            .get(index)
            .ok_or_else(|| invalid(format!("author {index} out of range")))?;
        let size = name.len() + 1;
        if let Some(n) = needed.as_mut() {
            *n = size;
        }
        if capacity < size {
            return Err(invalid(format!("buffer holds {capacity} bytes, need {size}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(name.as_ptr().cast::<c_char>(), buf, name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Last recorded ELBO of the fit, or NaN when none was recorded.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tbip_fit_final_elbo(fit: *const TbipFit) -> f64 {
    fit.as_ref()
        .and_then(|f| f.fit.elbo_trace.last())
        .map_or(f64::NAN, |&(_, e)| e)
}

/// Pearson and Spearman correlation of two score vectors of length `n`.
///
/// # Safety
/// `a` and `b` must be valid for `n` reads; `pearson` and `spearman` valid.
#[no_mangle]
pub unsafe extern "C" fn tbip_compare(
    a: *const f64,
    b: *const f64,
    n: usize,
    pearson: *mut f64,
    spearman: *mut f64,
) -> TbipStatus {
    guard(|| {
        let a = slice_arg(a, n, "a")?;
        let b = slice_arg(b, n, "b")?;
        let p = out_arg(pearson, "pearson")?;
        let s = out_arg(spearman, "spearman")?;
        let c = tbip::analysis::compare(a, b)?;
        *p = c.pearson;
        *s = c.spearman;
        Ok(())
    })
}

/// Probability of a yea vote.
#[no_mangle]
pub extern "C" fn tbip_vote_prob(alpha: f64, eta: f64, x: f64) -> f64 {
    tbip::vote::vote_prob(alpha, eta, x)
}

/// Poisson rates of one document. `theta` has `num_topics` entries, `beta`
/// and `eta` are `num_topics x num_terms` row-major, `out` receives
/// `num_terms` rates.
///
/// # Safety
/// All pointers must be valid for the lengths above.
#[no_mangle]
pub unsafe extern "C" fn tbip_rate(
    theta: *const f64,
    num_topics: usize,
    beta: *const f64,
    eta: *const f64,
    num_terms: usize,
    x: f64,
    weight: f64,
    out: *mut f64,
) -> TbipStatus {
    guard(|| {
        let cells = num_topics
            .checked_mul(num_terms)
            .ok_or_else(|| invalid("dimensions overflow"))?;
        let theta = slice_arg(theta, num_topics, "theta")?;
        let beta = slice_arg(beta, cells, "beta")?;
        let eta = slice_arg(eta, cells, "eta")?;
        let rate = tbip::tbip::tbip_rate(theta, beta, eta, x, weight)?;
        copy_out(&rate, out, num_terms)
    })
}
