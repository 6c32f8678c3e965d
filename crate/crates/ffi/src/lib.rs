//! C ABI over the `increpr` library.
//!
//! Ensembles live behind an opaque handle owned by the caller and released
//! with `increpr_ensemble_free`. Complex vectors cross the boundary as
//! interleaved `(re, im)` pairs of doubles. Every fallible call returns an
//! `IncreprStatus`; on failure a message is kept per thread and can be read
//! with `increpr_last_error` until the next failing call on that thread.
//! Panics never unwind into the caller; they surface as `Panic`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use increpr::certificate::check_certificate;
use increpr::image::Image;
use increpr::increpr::{restart_solve, ParamScale, Rank1Method, RestartConfig};
use increpr::linalg::{CMat, C64};
use increpr::measurement::{
    load_dense_ensemble, make_fourier_ensemble, make_gaussian_ensemble, random_factor, MeasurementEnsemble,
    ScalarField,
};
use increpr::metrics::relerr_phase;
use increpr::objective::{Fidelity, ObjectiveSpec};
use increpr::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncreprStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NonFinite = 4,
    /// Line search stagnation, non-descent direction or failed escape step.
    Numerical = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque measurement ensemble.
pub struct IncreprEnsemble {
    inner: MeasurementEnsemble,
}

/// Tunables for `increpr_restart_solve`. Fill with
/// `increpr_restart_options_default` before changing individual fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IncreprRestartOptions {
    /// 0 = least squares, 1 = Poisson.
    pub fidelity: i32,
    pub lambda0: f64,
    pub eps_stage: [f64; 3],
    /// Inner iteration cap applied to all three stages.
    pub max_iters: usize,
    pub grad_tol: f64,
    /// 0 = SVD, 1 = max-norm column.
    pub rank1: i32,
    /// Nonzero multiplies `lambda0` and `eps_stage` by `mean(b) / 400`.
    pub auto_scale: i32,
    /// Nonzero stops after stage I.
    pub stage_one_only: i32,
    /// Seed of the random single-column start.
    pub seed: u64,
}

/// Per-run statistics written by `increpr_restart_solve`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IncreprRunStats {
    /// Number of stages that ran (1 to 3); unused entries are zero.
    pub stages: usize,
    pub termination_p: [usize; 3],
    pub final_value: [f64; 3],
    pub certified: [i32; 3],
    pub inner_iterations: usize,
    pub escapes: usize,
    /// Stage I was already rank one and the later stages were skipped.
    pub rank_one_shortcut: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IncreprStatus {
    match e {
        Error::Dimension(_) => IncreprStatus::Dimension,
        Error::InvalidArgument(_) => IncreprStatus::InvalidArgument,
        Error::NonFinite { .. } => IncreprStatus::NonFinite,
        Error::Stagnation(_) | Error::NotDescent(..) | Error::EscapeFailed { .. } => IncreprStatus::Numerical,
        Error::Parse { .. } => IncreprStatus::Parse,
        Error::Io(_) => IncreprStatus::Io,
    }
}

struct Fail(IncreprStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IncreprStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(IncreprStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IncreprStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IncreprStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            IncreprStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn ensemble<'a>(h: *const IncreprEnsemble) -> Result<&'a IncreprEnsemble, Fail> {
    h.as_ref().ok_or_else(|| null("ensemble"))
}

fn interleaved_to_complex(v: &[f64]) -> Vec<C64> {
    v.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
}

fn write_interleaved(src: &[C64], dst: &mut [f64]) {
    for (z, out) in src.iter().zip(dst.chunks_exact_mut(2)) {
        out[0] = z.re;
        out[1] = z.im;
    }
}

unsafe fn publish(out: *mut *mut IncreprEnsemble, ens: MeasurementEnsemble) {
    *out = Box::into_raw(Box::new(IncreprEnsemble { inner: ens }));
}

/// Message of the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn increpr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn increpr_status_str(status: IncreprStatus) -> *const c_char {
    let s: &'static CStr = match status {
        IncreprStatus::Ok => c"ok",
        IncreprStatus::NullPointer => c"null pointer",
        IncreprStatus::InvalidArgument => c"invalid argument",
        IncreprStatus::Dimension => c"dimension mismatch",
        IncreprStatus::NonFinite => c"non-finite value",
        IncreprStatus::Numerical => c"numerical failure",
        IncreprStatus::Parse => c"parse error",
        IncreprStatus::Io => c"i/o error",
        IncreprStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Seeded Gaussian ensemble with zero intensities; `is_complex` selects the
/// field. Set data with `increpr_ensemble_set_intensities` or
/// `increpr_ensemble_plant`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_gaussian(
    n: usize,
    m: usize,
    is_complex: i32,
    seed: u64,
    out: *mut *mut IncreprEnsemble,
) -> IncreprStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let field = if is_complex != 0 { ScalarField::Complex } else { ScalarField::Real };
        publish(out, make_gaussian_ensemble(n, m, field, seed)?);
        Ok(())
    })
}

/// Oversampled Fourier ensemble of a nonnegative `rows x cols` image given
/// row-major; intensities are set from the image.
///
/// # Safety
/// `pixels` must point to `rows * cols` doubles; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_fourier(
    rows: usize,
    cols: usize,
    pixels: *const f64,
    out: *mut *mut IncreprEnsemble,
) -> IncreprStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("image size overflows"))?;
        let data = slice(pixels, len, "pixels")?.to_vec();
        let img = Image::new(rows, cols, data)?;
        publish(out, make_fourier_ensemble(&img)?);
        Ok(())
    })
}

/// Loads an ensemble written by the command-line `gen` subcommand.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_load(path: *const c_char, out: *mut *mut IncreprEnsemble) -> IncreprStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        publish(out, load_dense_ensemble(Path::new(p))?);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `h` must come from an `increpr_ensemble_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_free(h: *mut IncreprEnsemble) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Signal length `n`, measurement count `m` and field (1 if complex).
///
/// # Safety
/// `h` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_dims(
    h: *const IncreprEnsemble,
    n: *mut usize,
    m: *mut usize,
    is_complex: *mut i32,
) -> IncreprStatus {
    guard(|| {
        let e = &ensemble(h)?.inner;
        if let Some(n) = n.as_mut() {
            *n = e.n();
        }
        if let Some(m) = m.as_mut() {
            *m = e.m();
        }
        if let Some(c) = is_complex.as_mut() {
            *c = i32::from(!e.field().is_real());
        }
        Ok(())
    })
}

/// Replaces the intensity data; `len` must equal `m`. Negative entries are
/// accepted (noisy data under least squares).
///
/// # Safety
/// `h` must be a live handle; `b` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_set_intensities(
    h: *mut IncreprEnsemble,
    b: *const f64,
    len: usize,
) -> IncreprStatus {
    guard(|| {
        let e = h.as_mut().ok_or_else(|| null("ensemble"))?;
        let b = slice(b, len, "b")?.to_vec();
        e.inner = e.inner.clone().with_noisy_intensities(b)?;
        Ok(())
    })
}

/// Sets noiseless intensities `|<a_i, x>|^2` from an interleaved signal of length `n`.
///
/// # Safety
/// `h` must be a live handle; `x` must point to `2 * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_plant(h: *mut IncreprEnsemble, x: *const f64, n: usize) -> IncreprStatus {
    guard(|| {
        let e = h.as_mut().ok_or_else(|| null("ensemble"))?;
        let x = interleaved_to_complex(slice(x, 2 * n, "x")?);
        e.inner = e.inner.clone().with_planted(&x)?;
        Ok(())
    })
}

/// Copies the `m` intensities into `out`.
///
/// # Safety
/// `h` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn increpr_ensemble_intensities(
    h: *const IncreprEnsemble,
    out: *mut f64,
    len: usize,
) -> IncreprStatus {
    guard(|| {
        let e = &ensemble(h)?.inner;
        if len != e.m() {
            return Err(Fail(IncreprStatus::Dimension, format!("buffer holds {len}, need m = {}", e.m())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(e.b());
        Ok(())
    })
}

/// Defaults for a Gaussian ensemble of the given field, or for Fourier data
/// when `fourier` is nonzero.
///
/// # Safety
/// `out` must point to writable options storage.
#[no_mangle]
pub unsafe extern "C" fn increpr_restart_options_default(
    is_complex: i32,
    fourier: i32,
    out: *mut IncreprRestartOptions,
) -> IncreprStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let field = if is_complex != 0 { ScalarField::Complex } else { ScalarField::Real };
        let rc = if fourier != 0 { RestartConfig::fourier() } else { RestartConfig::gaussian(field) };
        *out = IncreprRestartOptions {
            fidelity: i32::from(rc.fidelity == Fidelity::Poisson),
            lambda0: rc.lambda0,
            eps_stage: rc.eps_stage,
            max_iters: rc.inner[0].max_iters,
            grad_tol: rc.inner[0].grad_tol,
            rank1: i32::from(rc.rank1 == Rank1Method::MaxNormColumn),
            auto_scale: i32::from(rc.param_scale == ParamScale::Auto),
            stage_one_only: i32::from(rc.stage_one_only),
            seed: 1,
        };
        Ok(())
    })
}

fn restart_config(o: &IncreprRestartOptions, ens: &MeasurementEnsemble) -> Result<RestartConfig, Fail> {
    let fourier = matches!(ens.backend(), increpr::measurement::Backend::FourierOversampled(_));
    let mut rc = if fourier { RestartConfig::fourier() } else { RestartConfig::gaussian(ens.field()) };
    rc.fidelity = match o.fidelity {
        0 => Fidelity::LeastSquares,
        1 => Fidelity::Poisson,
        v => return Err(invalid(format!("fidelity must be 0 or 1, got {v}"))),
    };
    rc.rank1 = match o.rank1 {
        0 => Rank1Method::Svd,
        1 => Rank1Method::MaxNormColumn,
        v => return Err(invalid(format!("rank1 must be 0 or 1, got {v}"))),
    };
    rc.lambda0 = o.lambda0;
    rc.eps_stage = o.eps_stage;
    for s in rc.inner.iter_mut() {
        s.max_iters = o.max_iters;
        s.grad_tol = o.grad_tol;
    }
    rc.param_scale = if o.auto_scale != 0 { ParamScale::Auto } else { ParamScale::Absolute };
    rc.stage_one_only = o.stage_one_only != 0;
    rc.validate()?;
    Ok(rc)
}

/// Three-stage restart solve from a seeded random start. Writes the
/// recovered signal (interleaved, `2 * n` doubles) and optional statistics.
///
/// # Safety
/// `h` must be a live handle; `opts` may be null for defaults; `signal` must
/// point to `signal_len` writable doubles; `stats` may be null.
#[no_mangle]
pub unsafe extern "C" fn increpr_restart_solve(
    h: *const IncreprEnsemble,
    opts: *const IncreprRestartOptions,
    signal: *mut f64,
    signal_len: usize,
    stats: *mut IncreprRunStats,
) -> IncreprStatus {
    guard(|| {
        let ens = &ensemble(h)?.inner;
        if signal_len != 2 * ens.n() {
            return Err(Fail(IncreprStatus::Dimension, format!("signal buffer holds {signal_len}, need 2n = {}", 2 * ens.n())));
        }
        let out = slice_mut(signal, signal_len, "signal")?;
        let o = match opts.as_ref() {
            Some(o) => *o,
            None => {
                let mut d = std::mem::MaybeUninit::<IncreprRestartOptions>::uninit();
                let fourier = matches!(ens.backend(), increpr::measurement::Backend::FourierOversampled(_));
                let st = increpr_restart_options_default(i32::from(!ens.field().is_real()), i32::from(fourier), d.as_mut_ptr());
                debug_assert_eq!(st, IncreprStatus::Ok);
                d.assume_init()
            }
        };
        let rc = restart_config(&o, ens)?;
        let y0 = random_factor(ens.n(), 1, ens.field(), o.seed)?;
        let res = restart_solve(ens, &rc, &y0)?;
        write_interleaved(&res.signal, out);
        if let Some(s) = stats.as_mut() {
            let r = &res.record;
            let mut st = IncreprRunStats {
                stages: r.stage_termination_p.len().min(3),
                inner_iterations: r.total_inner_iterations,
                escapes: r.escapes,
                rank_one_shortcut: i32::from(r.rank_one_shortcut),
                ..Default::default()
            };
            for k in 0..st.stages {
                st.termination_p[k] = r.stage_termination_p[k];
                st.final_value[k] = r.stage_values[k];
                st.certified[k] = i32::from(r.certified[k]);
            }
            *s = st;
        }
        Ok(())
    })
}

/// Smallest eigenvalue of the optimality certificate at an `n x p` factor
/// (column-major, interleaved complex). `certified` receives 1 when the
/// eigenvalue is at least `-epsilon` and the eigensolver converged.
///
/// # Safety
/// `h` must be a live handle; `y` must point to `2 * n * p` doubles;
/// `nu_min` and `certified` may be null.
#[no_mangle]
pub unsafe extern "C" fn increpr_certificate(
    h: *const IncreprEnsemble,
    y: *const f64,
    p: usize,
    least_squares: i32,
    lambda: f64,
    epsilon: f64,
    nu_min: *mut f64,
    certified: *mut i32,
) -> IncreprStatus {
    guard(|| {
        let ens = &ensemble(h)?.inner;
        let n = ens.n();
        let len = n.checked_mul(p).and_then(|v| v.checked_mul(2)).ok_or_else(|| invalid("factor size overflows"))?;
        let vals = interleaved_to_complex(slice(y, len, "y")?);
        let factor = CMat::from_column_slice(n, p, &vals);
        let spec = if least_squares != 0 {
            ObjectiveSpec::least_squares(lambda)
        } else {
            ObjectiveSpec::poisson(lambda, ens)
        };
        let cert = check_certificate(&spec, ens, &factor, epsilon)?;
        if let Some(v) = nu_min.as_mut() {
            *v = cert.nu_min;
        }
        if let Some(c) = certified.as_mut() {
            *c = i32::from(cert.is_certified);
        }
        Ok(())
    })
}

/// Phase-invariant relative error between two interleaved length-`n` vectors.
///
/// # Safety
/// `x` and `x_true` must each point to `2 * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn increpr_relerr_phase(
    x: *const f64,
    x_true: *const f64,
    n: usize,
    out: *mut f64,
) -> IncreprStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = interleaved_to_complex(slice(x, 2 * n, "x")?);
        let b = interleaved_to_complex(slice(x_true, 2 * n, "x_true")?);
        *out = relerr_phase(&a, &b)?;
        Ok(())
    })
}
