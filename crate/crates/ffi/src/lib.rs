//! C ABI over the spectral-homotopy solver.
//!
//! Objects are exposed as opaque handles created by `sph_*_new`-style functions and released by the
//! matching `sph_*_free`. Every fallible call returns an [`SphStatus`]; on failure a message is kept
//! per thread and can be read with [`sph_last_error`].
//!
//! Matrices are row-major arrays of `double`. For a real-field filter each entry is one `double`;
//! for a complex-field filter each entry is an interleaved `(re, im)` pair.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;

use spectral_homotopy::continuation::{maxent_initialization, trace_continuation, HomotopyConfig, SolutionPath};
use spectral_homotopy::factorization::{h_inverse, h_map};
use spectral_homotopy::linalg::c64;
use spectral_homotopy::moment::{condition_numbers, moment_g_statespace, CoordinateChart, JacobianMethod, RangeBasis};
use spectral_homotopy::statespace::{FactorParameter, FilterBank, PriorSpectrum};
use spectral_homotopy::{Error, Field, Mat};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SphStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Malformed arguments: sizes, shapes or option values.
    InvalidInput = 2,
    /// Data outside the admissible sets (stability, positivity, range membership, feasibility).
    NotAdmissible = 3,
    /// A numerical solver did not converge or the problem is too ill-conditioned.
    SolverFailure = 4,
    /// An output buffer is shorter than required.
    BufferTooSmall = 5,
    /// An index is out of bounds.
    OutOfRange = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Scalar field of a filter bank.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SphField {
    Real = 0,
    Complex = 1,
}

/// Continuation settings, see [`sph_continuation_default_options`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SphContinuationOptions {
    pub dt: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub min_dt: f64,
    pub grid_n: usize,
}

/// Filter bank `G(z) = (zI - A)^{-1} B`.
pub struct SphFilter {
    inner: FilterBank,
}

/// Scalar prior density `ψ = |σ|²`.
pub struct SphPrior {
    inner: PriorSpectrum,
}

/// Accepted samples of a continuation run.
pub struct SphPath {
    path: SolutionPath,
    field: Field,
    failure: Option<CString>,
    rejected: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> SphStatus {
    match err {
        Error::Dimension(_) | Error::InvalidInput(_) | Error::Config { .. } | Error::Json(_) | Error::Io(_) => {
            SphStatus::InvalidInput
        }
        Error::Evaluation { .. }
        | Error::Unstable { .. }
        | Error::NotMinimumPhase { .. }
        | Error::PriorNotPositive { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::NotInCplus { .. }
        | Error::NotInLplus { .. }
        | Error::NotInRange { .. }
        | Error::Infeasible { .. }
        | Error::NotInFactorSpace { .. }
        | Error::NearBoundary { .. } => SphStatus::NotAdmissible,
        _ => SphStatus::SolverFailure,
    }
}

struct Fail(SphStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type Outcome<T = ()> = std::result::Result<T, Fail>;

fn guard(body: impl FnOnce() -> Outcome) -> SphStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SphStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SphStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(SphStatus::NullPointer, format!("`{name}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SphStatus::InvalidInput, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| null(name))
}

fn width(field: Field) -> usize {
    match field {
        Field::Real => 1,
        Field::Complex => 2,
    }
}

unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize, field: Field, name: &str) -> Outcome<Mat> {
    if data.is_null() {
        return Err(null(name));
    }
    let w = width(field);
    let raw = std::slice::from_raw_parts(data, rows * cols * w);
    Ok(Mat::from_fn(rows, cols, |i, j| {
        let k = (i * cols + j) * w;
        if w == 1 {
            c64(raw[k], 0.0)
        } else {
            c64(raw[k], raw[k + 1])
        }
    }))
}

unsafe fn write_matrix(m: &Mat, field: Field, out: *mut f64, out_len: usize, name: &str) -> Outcome {
    if out.is_null() {
        return Err(null(name));
    }
    let w = width(field);
    let need = m.nrows() * m.ncols() * w;
    if out_len < need {
        return Err(Fail(
            SphStatus::BufferTooSmall,
            format!("`{name}` holds {out_len} doubles, {need} required"),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let k = (i * m.ncols() + j) * w;
            dst[k] = m[(i, j)].re;
            if w == 2 {
                dst[k + 1] = m[(i, j)].im;
            }
        }
    }
    Ok(())
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Outcome {
    if out.is_null() {
        return Err(null(name));
    }
    *out = value;
    Ok(())
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn to_field(field: SphField) -> Field {
    match field {
        SphField::Real => Field::Real,
        SphField::Complex => Field::Complex,
    }
}

/// Last error message on this thread, or null. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn sph_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sph_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Covariance-extension bank with `m` channels and `p` lags (`n = m (p + 1)`).
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn sph_filter_covext(m: usize, p: usize, field: SphField, out: *mut *mut SphFilter) -> SphStatus {
    guard(|| {
        let f = FilterBank::covariance_extension(m, p)?.with_field(to_field(field))?;
        put_handle(out, SphFilter { inner: f })
    })
}

/// Filter bank from an `n x n` matrix `A` and an `n x m` matrix `B`.
///
/// # Safety
/// `a` and `b` must hold `n*n` and `n*m` entries in the layout of `field`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sph_filter_new(
    a: *const f64,
    b: *const f64,
    n: usize,
    m: usize,
    field: SphField,
    out: *mut *mut SphFilter,
) -> SphStatus {
    guard(|| {
        if n == 0 || m == 0 {
            return Err(invalid("filter dimensions must be positive"));
        }
        let field = to_field(field);
        let a = read_matrix(a, n, n, field, "a")?;
        let b = read_matrix(b, n, m, field, "b")?;
        let f = FilterBank::new(a, b, field)?;
        put_handle(out, SphFilter { inner: f })
    })
}

/// State dimension `n`, or 0 for a null handle.
///
/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sph_filter_n(filter: *const SphFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.inner.n())
}

/// Input dimension `m`, or 0 for a null handle.
///
/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sph_filter_m(filter: *const SphFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.inner.m())
}

/// # Safety
/// `filter` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sph_filter_free(filter: *mut SphFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Prior `ψ = |b(z)|²` for real coefficients `b_0 + b_1 z^{-1} + …` with roots inside the unit disk.
///
/// # Safety
/// `b` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sph_prior_polynomial(b: *const f64, len: usize, out: *mut *mut SphPrior) -> SphStatus {
    guard(|| {
        if b.is_null() {
            return Err(null("b"));
        }
        if len == 0 {
            return Err(invalid("polynomial has no coefficients"));
        }
        let coeffs = std::slice::from_raw_parts(b, len);
        let p = PriorSpectrum::from_real_polynomial(coeffs)?;
        put_handle(out, SphPrior { inner: p })
    })
}

/// Constant prior `ψ ≡ value`, `value > 0`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sph_prior_constant(value: f64, out: *mut *mut SphPrior) -> SphStatus {
    guard(|| {
        let p = PriorSpectrum::constant(value)?;
        put_handle(out, SphPrior { inner: p })
    })
}

/// Prior density at `e^{iθ}`, or NaN for a null handle.
///
/// # Safety
/// `prior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sph_prior_density(prior: *const SphPrior, theta: f64) -> f64 {
    prior
        .as_ref()
        .map_or(f64::NAN, |p| p.inner.psi(Complex64::from_polar(1.0, theta)))
}

/// # Safety
/// `prior` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sph_prior_free(prior: *mut SphPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Moment `g(ψ, C)`: `c` is `m x n`, `sigma_out` receives `n x n`.
///
/// # Safety
/// Handles must be live; `c` must hold `m*n` entries; `sigma_out` must hold `sigma_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sph_moment_g(
    filter: *const SphFilter,
    prior: *const SphPrior,
    c: *const f64,
    sigma_out: *mut f64,
    sigma_len: usize,
) -> SphStatus {
    guard(|| {
        let f = &deref(filter, "filter")?.inner;
        let p = &deref(prior, "prior")?.inner;
        let c = FactorParameter::new(f, read_matrix(c, f.m(), f.n(), f.field(), "c")?)?;
        let g = moment_g_statespace(f, p, &c)?;
        write_matrix(&g, f.field(), sigma_out, sigma_len, "sigma_out")
    })
}

/// Maximum-entropy factor `C` (`m x n`) with `g(1, C) = Σ`.
///
/// # Safety
/// `filter` must be live; `sigma` must hold `n*n` entries; `c_out` must hold `c_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sph_maxent(
    filter: *const SphFilter,
    sigma: *const f64,
    c_out: *mut f64,
    c_len: usize,
) -> SphStatus {
    guard(|| {
        let f = &deref(filter, "filter")?.inner;
        let sigma = read_matrix(sigma, f.n(), f.n(), f.field(), "sigma")?;
        let range = RangeBasis::new(f)?;
        let c = maxent_initialization(f, &range, &sigma)?;
        write_matrix(c.c(), f.field(), c_out, c_len, "c_out")
    })
}

/// `h(Λ)`: factor parameter (`m x n`) of a `Λ` (`n x n`) in `Range Γ ∩ L+`.
///
/// # Safety
/// `filter` must be live; `lambda` must hold `n*n` entries; `c_out` must hold `c_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sph_h_map(
    filter: *const SphFilter,
    lambda: *const f64,
    c_out: *mut f64,
    c_len: usize,
) -> SphStatus {
    guard(|| {
        let f = &deref(filter, "filter")?.inner;
        let lambda = read_matrix(lambda, f.n(), f.n(), f.field(), "lambda")?;
        let range = RangeBasis::new(f)?;
        let c = h_map(f, &range, &lambda)?;
        write_matrix(c.c(), f.field(), c_out, c_len, "c_out")
    })
}

/// `h^{-1}(C)`: projection of `C* C` onto `Range Γ`.
///
/// # Safety
/// `filter` must be live; `c` must hold `m*n` entries; `lambda_out` must hold `lambda_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sph_h_inverse(
    filter: *const SphFilter,
    c: *const f64,
    lambda_out: *mut f64,
    lambda_len: usize,
) -> SphStatus {
    guard(|| {
        let f = &deref(filter, "filter")?.inner;
        let c = read_matrix(c, f.m(), f.n(), f.field(), "c")?;
        let range = RangeBasis::new(f)?;
        write_matrix(&h_inverse(&range, &c), f.field(), lambda_out, lambda_len, "lambda_out")
    })
}

/// Condition numbers of the Jacobians of `g` at `C` and of `f` at `h^{-1}(C)`.
///
/// `dtheta > 0` selects quadrature with that grid step; `dtheta <= 0` selects the state-space method.
///
/// # Safety
/// Handles must be live; `c` must hold `m*n` entries; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sph_condition_numbers(
    filter: *const SphFilter,
    prior: *const SphPrior,
    c: *const f64,
    dtheta: f64,
    cond_f: *mut f64,
    cond_g: *mut f64,
) -> SphStatus {
    guard(|| {
        let f = &deref(filter, "filter")?.inner;
        let p = &deref(prior, "prior")?.inner;
        let c = read_matrix(c, f.m(), f.n(), f.field(), "c")?;
        FactorParameter::new(f, c.clone())?;
        let method = if dtheta > 0.0 {
            JacobianMethod::Quadrature { dtheta }
        } else {
            JacobianMethod::StateSpace
        };
        let chart = CoordinateChart::new(f, None)?;
        let report = condition_numbers(f, p, &chart, &c, method)?;
        write_out(cond_f, report.cond_f, "cond_f")?;
        write_out(cond_g, report.cond_g, "cond_g")
    })
}

/// Default continuation settings.
#[no_mangle]
pub extern "C" fn sph_continuation_default_options() -> SphContinuationOptions {
    let d = HomotopyConfig::default();
    SphContinuationOptions {
        dt: d.dt,
        newton_tol: d.newton_tol,
        max_newton: d.max_newton,
        min_dt: d.min_dt,
        grid_n: d.grid_n,
    }
}

/// Traces the solution curve from the maximum-entropy factor to the prior `ψ`.
///
/// If the step floor is reached the accepted part of the path is still returned together with
/// [`SphStatus::SolverFailure`]; query it with [`sph_path_failure`]. `options` may be null.
///
/// # Safety
/// Handles must be live; `sigma` must hold `n*n` entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sph_run_continuation(
    filter: *const SphFilter,
    prior: *const SphPrior,
    sigma: *const f64,
    options: *const SphContinuationOptions,
    out: *mut *mut SphPath,
) -> SphStatus {
    guard(|| {
        let f = &deref(filter, "filter")?.inner;
        let p = &deref(prior, "prior")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let sigma = read_matrix(sigma, f.n(), f.n(), f.field(), "sigma")?;
        let config = match options.as_ref() {
            None => HomotopyConfig::default(),
            Some(o) => HomotopyConfig {
                dt: o.dt,
                newton_tol: o.newton_tol,
                max_newton: o.max_newton,
                min_dt: o.min_dt,
                grid_n: o.grid_n,
            },
        };
        let run = trace_continuation(f, &sigma, p, &config)?;
        let failure = run.failure.clone();
        let handle = SphPath {
            path: run.path,
            field: f.field(),
            failure: failure.as_deref().map(|s| CString::new(s.replace('\0', " ")).unwrap_or_default()),
            rejected: run.rejected.len(),
        };
        put_handle(out, handle)?;
        match failure {
            None => Ok(()),
            Some(reason) => Err(Fail(SphStatus::SolverFailure, reason)),
        }
    })
}

/// Number of accepted samples (including `t = 0`), or 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sph_path_len(path: *const SphPath) -> usize {
    path.as_ref().map_or(0, |p| p.path.samples.len())
}

/// Number of rejected step attempts, or 0 for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sph_path_rejected(path: *const SphPath) -> usize {
    path.as_ref().map_or(0, |p| p.rejected)
}

/// Reason the run stopped early, or null if it reached `t = 1`. Owned by the handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sph_path_failure(path: *const SphPath) -> *const c_char {
    path.as_ref()
        .and_then(|p| p.failure.as_ref())
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Homotopy parameter, residual and Newton iteration count of sample `k`. Output pointers may be null.
///
/// # Safety
/// `path` must be live; non-null output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sph_path_sample(
    path: *const SphPath,
    k: usize,
    t: *mut f64,
    residual: *mut f64,
    newton_iters: *mut usize,
) -> SphStatus {
    guard(|| {
        let s = sample(deref(path, "path")?, k)?;
        if !t.is_null() {
            *t = s.t;
        }
        if !residual.is_null() {
            *residual = s.residual;
        }
        if !newton_iters.is_null() {
            *newton_iters = s.newton_iters;
        }
        Ok(())
    })
}

/// Factor parameter `C` (`m x n`) of sample `k`.
///
/// # Safety
/// `path` must be live; `c_out` must hold `c_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sph_path_c(path: *const SphPath, k: usize, c_out: *mut f64, c_len: usize) -> SphStatus {
    guard(|| {
        let p = deref(path, "path")?;
        write_matrix(&sample(p, k)?.c, p.field, c_out, c_len, "c_out")
    })
}

fn sample(p: &SphPath, k: usize) -> Outcome<&spectral_homotopy::continuation::PathSample> {
    p.path.samples.get(k).ok_or_else(|| {
        Fail(
            SphStatus::OutOfRange,
            format!("sample {k} out of range (path has {})", p.path.samples.len()),
        )
    })
}

/// # Safety
/// `path` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sph_path_free(path: *mut SphPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}
