//! C ABI over `sue-core`. Handles are opaque pointers owned by the caller
//! and released with the matching `*_free`. Every fallible call returns a
//! [`SueStatus`]; on failure [`sue_last_error`] describes what went wrong on
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sue::align::{fit_sue, AlignmentModel, SueConfig};
use sue::io::{read_embeddings, EmbeddingSet, Format, PairManifest};
use sue::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SueStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Dimension = 6,
    Numerical = 7,
    Training = 8,
    Serialization = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SueSide {
    X = 0,
    Y = 1,
}

/// One modality's point cloud.
pub struct SueEmbeddingSet(EmbeddingSet);

/// A fitted alignment model.
pub struct SueModel(AlignmentModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SueStatus {
    match e.root() {
        Error::Io { .. } => SueStatus::Io,
        Error::Parse { .. } => SueStatus::Parse,
        Error::Config(_) => SueStatus::Config,
        Error::Dimension(_) => SueStatus::Dimension,
        Error::Domain(_) => SueStatus::InvalidArgument,
        Error::DegenerateGraph { .. }
        | Error::NoConvergence { .. }
        | Error::IllConditioned { .. }
        | Error::Numerical(_) => SueStatus::Numerical,
        Error::Training { .. } => SueStatus::Training,
        Error::Serialization(_) => SueStatus::Serialization,
        Error::Stage { .. } => SueStatus::InvalidArgument,
    }
}

struct Failure(SueStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SueStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SueStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SueStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SueStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SueStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sue_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn sue_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `n × d` row-major floats into a new set.
///
/// # Safety
/// `data` must point to `n * d` readable floats and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sue_embedding_set_new(
    data: *const f32,
    n: usize,
    d: usize,
    out: *mut *mut SueEmbeddingSet,
) -> SueStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if data.is_null() && n * d > 0 {
            return Err(null("data"));
        }
        let len = n.checked_mul(d).ok_or_else(|| Failure(SueStatus::InvalidArgument, "n * d overflows".into()))?;
        let values = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(data, len).to_vec() };
        let arr = ndarray::Array2::from_shape_vec((n, d), values)
            .map_err(|e| Failure(SueStatus::Dimension, e.to_string()))?;
        let set = EmbeddingSet::new("ffi", arr)?;
        *out = Box::into_raw(Box::new(SueEmbeddingSet(set)));
        Ok(())
    })
}

/// Reads a binary (`.bin`) or CSV (`.csv`) embedding file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sue_embedding_set_read(path: *const c_char, out: *mut *mut SueEmbeddingSet) -> SueStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let set = read_embeddings(&path, Format::from_path(&path))?;
        *out = Box::into_raw(Box::new(SueEmbeddingSet(set)));
        Ok(())
    })
}

/// Number of rows; 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sue_embedding_set_rows(set: *const SueEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.n())
}

/// Row width; 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sue_embedding_set_dim(set: *const SueEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.d())
}

/// # Safety
/// `set` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn sue_embedding_set_free(set: *mut SueEmbeddingSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Fits the full pipeline. `pairs` holds `m` (x row, y row) index pairs as
/// `2m` consecutive values. `config_toml` may be NULL for the defaults or a
/// TOML document with pipeline keys (`k_neighbors`, `se_dim`, `cca_dim`,
/// `use_mmd`, `seed`, ...).
///
/// # Safety
/// `x`, `y` must be live handles, `pairs` must point to `2 * m` values,
/// `config_toml` NULL or NUL-terminated, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sue_model_fit(
    x: *const SueEmbeddingSet,
    y: *const SueEmbeddingSet,
    pairs: *const usize,
    m: usize,
    config_toml: *const c_char,
    out: *mut *mut SueModel,
) -> SueStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = &x.as_ref().ok_or_else(|| null("x"))?.0;
        let y = &y.as_ref().ok_or_else(|| null("y"))?.0;
        if pairs.is_null() && m > 0 {
            return Err(null("pairs"));
        }
        let flat = if m == 0 { &[][..] } else { std::slice::from_raw_parts(pairs, 2 * m) };
        let list = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let manifest = PairManifest::new(list, x.n(), y.n())?;
        let config = if config_toml.is_null() {
            SueConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml)
                .to_str()
                .map_err(|_| Failure(SueStatus::InvalidArgument, "config is not UTF-8".into()))?;
            toml::from_str(text).map_err(|e| Failure(SueStatus::Config, e.to_string()))?
        };
        let model = fit_sue(x, y, &manifest, &config)?;
        *out = Box::into_raw(Box::new(SueModel(model)));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sue_model_load(path: *const c_char, out: *mut *mut SueModel) -> SueStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let model = AlignmentModel::load(&path)?;
        *out = Box::into_raw(Box::new(SueModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sue_model_save(model: *const SueModel, path: *const c_char) -> SueStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let path = path_arg(path, "path")?;
        model.save(&path)?;
        Ok(())
    })
}

/// Width of the shared space; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sue_model_output_dim(model: *const SueModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.output_dim())
}

/// Maps `points` from one modality into the shared space, writing
/// `rows × output_dim` row-major doubles to `out`. `out_len` must equal that
/// product.
///
/// # Safety
/// `model` and `points` must be live handles and `out` must point to
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sue_model_map(
    model: *const SueModel,
    side: SueSide,
    points: *const SueEmbeddingSet,
    out: *mut f64,
    out_len: usize,
) -> SueStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let points = &points.as_ref().ok_or_else(|| null("points"))?.0;
        let want = points.n() * model.output_dim();
        if out_len != want {
            return Err(Failure(
                SueStatus::Dimension,
                format!("out_len is {out_len}, expected {want}"),
            ));
        }
        if out.is_null() && want > 0 {
            return Err(null("out"));
        }
        let mapped = match side {
            SueSide::X => model.map_x(points)?,
            SueSide::Y => model.map_y(points)?,
        };
        if want > 0 {
            let dst = std::slice::from_raw_parts_mut(out, want);
            for (d, s) in dst.iter_mut().zip(mapped.iter()) {
                *d = *s;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn sue_model_free(model: *mut SueModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
