//! C ABI over `elastoinv`.
//!
//! Every object crosses the boundary as an opaque pointer created by an
//! `ei_*_new`/`ei_*_load`/`ei_train`-style constructor and released with the
//! matching `ei_*_free`. Functions return an [`EiStatus`]; on failure the
//! message is kept per thread and can be read with [`ei_last_error`].
//! Grids are passed row-major, row 0 at the top of the plate.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use elastoinv::calibrate::calibrate;
use elastoinv::config::RunConfig;
use elastoinv::dataset::{load_dataset, save_dataset, Dataset};
use elastoinv::error::Error;
use elastoinv::fem::{rasterize_phantom, synthesize, PhantomSpec};
use elastoinv::fields::{DisplacementField, ScalarGrid};
use elastoinv::train::{
    load_checkpoint, predict_fields, save_checkpoint, train, PredictedFields, TrainOptions, TrainingState,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    Uncalibratable = 7,
    Diverged = 8,
    Runtime = 9,
    Panic = 10,
}

/// Measured displacement plus optional ground truth.
pub struct EiDataset(Dataset);

/// Trained (or initialized) networks with optimizer state.
pub struct EiModel(TrainingState);

/// Every field a model predicts on a dataset lattice.
pub struct EiFields(PredictedFields);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> EiStatus {
    match e {
        Error::Invalid(_) | Error::GridTooSmall { .. } | Error::DegenerateSignalMean => EiStatus::InvalidArgument,
        Error::DimensionMismatch(_) => EiStatus::DimensionMismatch,
        Error::Config(_) => EiStatus::Config,
        Error::Io { .. } => EiStatus::Io,
        Error::Format { .. } => EiStatus::Format,
        Error::Uncalibratable(_) => EiStatus::Uncalibratable,
        Error::Diverged { .. } | Error::NonFiniteLoss { .. } | Error::NonFiniteActivation { .. } => EiStatus::Diverged,
        _ => EiStatus::Runtime,
    }
}

struct Fail(EiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            EiStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            EiStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(EiStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    let s = borrow(p, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(EiStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in bytes,
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ei_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ei_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from measured nodal displacement, `ny * nx` values per
/// component with grid spacing `h` and unit thickness.
///
/// # Safety
/// `ux` and `uy` must point to `ny * nx` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_dataset_from_displacement(
    ny: usize,
    nx: usize,
    h: f64,
    ux: *const f64,
    uy: *const f64,
    out: *mut *mut EiDataset,
) -> EiStatus {
    guard(|| {
        let n = ny.checked_mul(nx).ok_or(Fail(EiStatus::InvalidArgument, "lattice too large".into()))?;
        borrow(ux, "ux")?;
        borrow(uy, "uy")?;
        let grid = |p: *const f64| ScalarGrid::from_vec(ny, nx, h, 1.0, std::slice::from_raw_parts(p, n).to_vec());
        let ds = Dataset::new(DisplacementField::new(grid(ux)?, grid(uy)?)?);
        ds.validate()?;
        put(out, EiDataset(ds))
    })
}

/// Synthesizes a dataset on `ny x nx` cells: the two-inclusion phantom when
/// `two_inclusion` is nonzero, otherwise a homogeneous plate (E = 1,
/// nu = 0.3). `snr <= 0` gives clean data.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_dataset_generate(
    ny: usize,
    nx: usize,
    two_inclusion: i32,
    stretch: f64,
    snr: f64,
    seed: u64,
    out: *mut *mut EiDataset,
) -> EiStatus {
    guard(|| {
        let spec = if two_inclusion != 0 {
            PhantomSpec::two_inclusion(ny, nx)
        } else {
            PhantomSpec::homogeneous(1.0, 0.3)
        };
        let elas = rasterize_phantom(&spec, ny, nx)?;
        let snr = (snr > 0.0).then_some(snr);
        let bc = elastoinv::fem::BoundaryCondition { stretch };
        put(out, EiDataset(synthesize(&elas, &bc, snr, seed)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_dataset_load(path: *const c_char, out: *mut *mut EiDataset) -> EiStatus {
    guard(|| {
        let p = PathBuf::from(text(path, "path")?);
        put(out, EiDataset(load_dataset(&p)?))
    })
}

/// # Safety
/// `ds` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ei_dataset_save(ds: *const EiDataset, path: *const c_char) -> EiStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        save_dataset(&ds.0, &PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

/// Node lattice dimensions.
///
/// # Safety
/// `ds` must come from this library; `ny` and `nx` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_dataset_dims(ds: *const EiDataset, ny: *mut usize, nx: *mut usize) -> EiStatus {
    guard(|| {
        let (a, b) = borrow(ds, "dataset")?.0.dim();
        if ny.is_null() || nx.is_null() {
            return Err(null("output pointer"));
        }
        *ny = a;
        *nx = b;
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ei_dataset_free(ds: *mut EiDataset) {
    release(ds);
}

/// Trains on `ds`. `config` is a flat `key = value` text using the same keys
/// as the command-line tool (null means all defaults, which lack a seed and
/// therefore fail). Only the training-related keys are read.
///
/// # Safety
/// `ds` must come from this library; `config` must be null or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_train(ds: *const EiDataset, config: *const c_char, out: *mut *mut EiModel) -> EiStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let cfg = if config.is_null() {
            RunConfig::default()
        } else {
            RunConfig::parse(text(config, "config")?)?
        };
        let state = train(
            &ds.0,
            &cfg.schedule()?,
            &cfg.weights()?,
            cfg.e_c()?,
            &cfg.architecture()?,
            &TrainOptions::default(),
        )?;
        put(out, EiModel(state))
    })
}

/// Number of recorded training iterations.
///
/// # Safety
/// `model` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn ei_model_iterations(model: *const EiModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.iteration)
}

/// Weighted total loss of the last recorded iteration, NaN before training.
///
/// # Safety
/// `model` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn ei_model_final_loss(model: *const EiModel) -> f64 {
    model
        .as_ref()
        .and_then(|m| m.0.final_loss())
        .map_or(f64::NAN, |r| r.loss.total)
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ei_model_save(model: *const EiModel, path: *const c_char) -> EiStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        save_checkpoint(&m.0, &PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_model_load(path: *const c_char, out: *mut *mut EiModel) -> EiStatus {
    guard(|| {
        let p = PathBuf::from(text(path, "path")?);
        put(out, EiModel(load_checkpoint(&p)?))
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ei_model_free(model: *mut EiModel) {
    release(model);
}

/// # Safety
/// `model` and `ds` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_predict(model: *const EiModel, ds: *const EiDataset, out: *mut *mut EiFields) -> EiStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let ds = borrow(ds, "dataset")?;
        put(out, EiFields(predict_fields(&m.0, &ds.0)?))
    })
}

fn field<'a>(f: &'a PredictedFields, name: &str) -> Option<&'a ScalarGrid> {
    Some(match name {
        "ux" => f.displacement.ux(),
        "uy" => f.displacement.uy(),
        "exx" => f.strain.exx(),
        "eyy" => f.strain.eyy(),
        "gxy" => f.strain.gxy(),
        "sxx" => f.stress.sxx(),
        "syy" => f.stress.syy(),
        "txy" => f.stress.txy(),
        "E" => f.elasticity.e(),
        "nu" => f.elasticity.nu(),
        "rx" => f.residual.rx(),
        "ry" => f.residual.ry(),
        _ => return None,
    })
}

/// Copies the named field (`ux uy exx eyy gxy sxx syy txy E nu rx ry`) into
/// `buf`, which must hold at least `len` doubles, and reports its shape.
/// Passing a null `buf` only queries the shape.
///
/// # Safety
/// `fields` must come from this library; `name` must be NUL-terminated;
/// `buf` must be null or hold `len` doubles; `ny` and `nx` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ei_fields_get(
    fields: *const EiFields,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
    ny: *mut usize,
    nx: *mut usize,
) -> EiStatus {
    guard(|| {
        let f = borrow(fields, "fields")?;
        let name = text(name, "name")?;
        let g = field(&f.0, name).ok_or_else(|| Fail(EiStatus::InvalidArgument, format!("unknown field `{name}`")))?;
        if ny.is_null() || nx.is_null() {
            return Err(null("shape pointer"));
        }
        (*ny, *nx) = g.dim();
        if !buf.is_null() {
            if len < g.len() {
                return Err(Fail(
                    EiStatus::DimensionMismatch,
                    format!("buffer holds {len} values, field `{name}` has {}", g.len()),
                ));
            }
            ptr::copy_nonoverlapping(g.to_vec().as_ptr(), buf, g.len());
        }
        Ok(())
    })
}

/// # Safety
/// `fields` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ei_fields_free(fields: *mut EiFields) {
    release(fields);
}

/// Scales the predicted relative modulus to absolute units with the
/// dataset's applied force. Writes the scale to `c_hat` and, when `e_abs` is
/// not null, the absolute modulus (cell lattice, `len` doubles at least).
///
/// # Safety
/// `fields` and `ds` must come from this library; `c_hat` must be writable;
/// `e_abs` must be null or hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ei_calibrate(
    fields: *const EiFields,
    ds: *const EiDataset,
    c_hat: *mut f64,
    e_abs: *mut f64,
    len: usize,
) -> EiStatus {
    guard(|| {
        let f = borrow(fields, "fields")?;
        let ds = borrow(ds, "dataset")?;
        if c_hat.is_null() {
            return Err(null("c_hat"));
        }
        let force = ds
            .0
            .applied_force
            .ok_or_else(|| Fail(EiStatus::Uncalibratable, "dataset has no applied force".into()))?;
        let cal = calibrate(f.0.elasticity.e(), &f.0.stress, force, ds.0.h())?;
        if !e_abs.is_null() {
            let v = cal.e_absolute.to_vec();
            if len < v.len() {
                return Err(Fail(
                    EiStatus::DimensionMismatch,
                    format!("buffer holds {len} values, modulus has {}", v.len()),
                ));
            }
            ptr::copy_nonoverlapping(v.as_ptr(), e_abs, v.len());
        }
        *c_hat = cal.c_hat;
        Ok(())
    })
}
