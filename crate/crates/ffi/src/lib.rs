//! C ABI over the SOC engine.
//!
//! Models live behind opaque handles. Every call returns a [`SocStatus`];
//! on failure the message is kept per thread and read back with
//! [`soc_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soc_core::cli::{self, RunConfig};
use soc_core::domain::RandomStream;
use soc_core::kalman::{kalman_filter, LinearGaussianModel};
use soc_core::model::LikelihoodModel;
use soc_core::soc::SocModel;
use soc_core::Error;

/// Status codes; the nonzero error values match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SocStatus {
    Ok = 0,
    Config = 2,
    Data = 3,
    Numerical = 4,
    NullPointer = 10,
    InvalidArgument = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// A SOC model with its data and priors.
pub struct SocModelHandle {
    model: SocModel,
    config: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SocStatus {
    match e.exit_code() {
        2 => SocStatus::Config,
        3 => SocStatus::Data,
        _ => SocStatus::Numerical,
    }
}

enum Fail {
    Core(Error),
    Status(SocStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SocStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            SocStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(SocStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail::Status(SocStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

/// Copies `s` with a NUL terminator into `buf` when it fits. `needed`
/// (if non-null) receives the size required including the terminator.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Fail> {
    if !needed.is_null() {
        unsafe { *needed = s.len() + 1 };
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err(Fail::Status(SocStatus::BufferTooSmall, format!("buffer needs {} bytes", s.len() + 1)));
    }
    unsafe {
        std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
    }
    Ok(())
}

/// Message of the last failed call on this thread.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null; `needed` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn soc_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> SocStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match unsafe { copy_out(&msg, buf, len, needed) } {
        Ok(()) => SocStatus::Ok,
        Err(_) => SocStatus::BufferTooSmall,
    }
}

/// Builds a model from a TOML run config (or run manifest) and the data it
/// names.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn soc_model_open(config_path: *const c_char, out: *mut *mut SocModelHandle) -> SocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = cli::load_config(unsafe { path_arg(config_path)? })?;
        cfg.validate()?;
        let model = cli::build_model(&cfg, cli::load_dataset(&cfg)?)?;
        let h = Box::new(SocModelHandle { model, config: cfg });
        unsafe { *out = Box::into_raw(h) };
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`soc_model_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn soc_model_close(handle: *mut SocModelHandle) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

unsafe fn model<'a>(h: *const SocModelHandle) -> Result<&'a SocModelHandle, Fail> {
    if h.is_null() {
        Err(null("model handle"))
    } else {
        Ok(unsafe { &*h })
    }
}

unsafe fn theta_arg<'a>(m: &SocModel, theta: *const f64, n: usize) -> Result<&'a [f64], Fail> {
    if theta.is_null() {
        return Err(null("theta"));
    }
    let want = m.param_names().len();
    if n != want {
        return Err(Fail::Status(SocStatus::InvalidArgument, format!("theta has {n} entries, the model has {want}")));
    }
    Ok(unsafe { std::slice::from_raw_parts(theta, n) })
}

/// Number of free parameters.
///
/// # Safety
/// `handle` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soc_model_param_count(handle: *const SocModelHandle, out: *mut usize) -> SocStatus {
    guard(|| {
        let h = unsafe { model(handle)? };
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = h.model.param_names().len() };
        Ok(())
    })
}

/// Name of free parameter `index`.
///
/// # Safety
/// `handle` must be live; `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn soc_model_param_name(
    handle: *const SocModelHandle,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SocStatus {
    guard(|| {
        let h = unsafe { model(handle)? };
        let names = h.model.param_names();
        let name = names
            .get(index)
            .ok_or_else(|| Fail::Status(SocStatus::InvalidArgument, format!("no parameter {index}")))?;
        unsafe { copy_out(name, buf, len, needed) }
    })
}

/// Log prior density at `theta` (may be -inf).
///
/// # Safety
/// `theta` must hold `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soc_model_log_prior(
    handle: *const SocModelHandle,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> SocStatus {
    guard(|| {
        let h = unsafe { model(handle)? };
        let th = unsafe { theta_arg(&h.model, theta, n)? };
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = h.model.log_prior(th) };
        Ok(())
    })
}

/// Particle-filter log-likelihood estimate at `theta`, with auxiliary
/// normals drawn from `seed`.
///
/// # Safety
/// `theta` must hold `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soc_model_log_likelihood(
    handle: *const SocModelHandle,
    theta: *const f64,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> SocStatus {
    guard(|| {
        let h = unsafe { model(handle)? };
        let th = unsafe { theta_arg(&h.model, theta, n)? };
        if out.is_null() {
            return Err(null("out"));
        }
        let stream = RandomStream::sample(h.model.stream_layout(), &mut ChaCha8Rng::seed_from_u64(seed));
        let e = h.model.estimate(th, &stream, false)?;
        unsafe { *out = e.log_likelihood };
        Ok(())
    })
}

/// Runs `fit` with the handle's config, writing artifacts to its output
/// directory.
///
/// # Safety
/// `handle` must be live.
#[no_mangle]
pub unsafe extern "C" fn soc_model_fit(handle: *const SocModelHandle) -> SocStatus {
    guard(|| {
        let h = unsafe { model(handle)? };
        cli::fit(&h.config, false)?;
        Ok(())
    })
}

/// Exact log-likelihood of a scalar linear-Gaussian series
/// `x_t = a x_{t-1} + e_t`, `y_t = c x_t + v_t`, `x_{-1} = x0`. NaN
/// entries of `y` are missing.
///
/// # Safety
/// `y` must hold `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soc_kalman_scalar(
    a: f64,
    c: f64,
    q: f64,
    r: f64,
    x0: f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> SocStatus {
    guard(|| {
        if y.is_null() || out.is_null() {
            return Err(null("y or out"));
        }
        let ys = unsafe { std::slice::from_raw_parts(y, len) };
        let obs: Vec<Vec<Option<f64>>> = ys.iter().map(|v| vec![(!v.is_nan()).then_some(*v)]).collect();
        let kf = kalman_filter(&LinearGaussianModel::scalar(a, c, q, r, x0), &obs)?;
        unsafe { *out = kf.log_likelihood };
        Ok(())
    })
}
