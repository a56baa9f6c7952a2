//! C ABI over the qlpower engine.
//!
//! Every fallible function returns a [`QlpStatus`] and writes its result
//! through an out pointer. On failure the message is available from
//! [`qlp_last_error_message`] on the same thread until the next call that
//! fails. Handles are opaque and released with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use qlpower::datagen::CovariateDesign;
use qlpower::effectsize::synthetic_effect_sizes;
use qlpower::estimation::{irls_fit, FitOptions, FitResult};
use qlpower::inference::wald_test;
use qlpower::model::{Dataset, LinkFunction, ModelSpec, OutcomeKind, VarianceFunction};
use qlpower::planner::{analyze_csv, default_delta_grid, PilotMapping};
use qlpower::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DomainError = 3,
    Singular = 4,
    NonConvergence = 5,
    TooSmallEffect = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlpLink {
    Log = 0,
    Identity = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlpVariance {
    Unit = 0,
    Mean = 1,
    MeanSquared = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlpOutcomeKind {
    Count = 0,
    Positive = 1,
    Real = 2,
}

/// Effect sizes from a Monte Carlo evaluation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QlpEffectSizes {
    pub f2: f64,
    pub phi: f64,
    pub r2: f64,
    pub f2_phi: f64,
    pub f2_r: f64,
    pub w_one: f64,
    pub mean_y: f64,
    pub mc_se_f2: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QlpTestReport {
    pub statistic: f64,
    pub df: u32,
    pub critical_value: f64,
    pub reject: bool,
}

/// Opaque model specification.
pub struct QlpModel(ModelSpec);
/// Opaque dataset.
pub struct QlpDataset(Dataset);
/// Opaque fitted model.
pub struct QlpFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QlpStatus {
    match e {
        Error::SingularDesign | Error::SingularBlock | Error::SingularMoment | Error::SingularInformation => {
            QlpStatus::Singular
        }
        Error::NonConvergence { .. } => QlpStatus::NonConvergence,
        Error::TooSmallEffect { .. } => QlpStatus::TooSmallEffect,
        e if e.is_domain() => QlpStatus::DomainError,
        _ => QlpStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into a status and the thread's
/// last error message.
fn guard<F: FnOnce() -> Result<(), (QlpStatus, String)>>(f: F) -> QlpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QlpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QlpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (QlpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (QlpStatus, String) {
    (QlpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (QlpStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (QlpStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, (QlpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (QlpStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn link(l: QlpLink) -> LinkFunction {
    match l {
        QlpLink::Log => LinkFunction::Log,
        QlpLink::Identity => LinkFunction::Identity,
    }
}

fn variance(v: QlpVariance) -> VarianceFunction {
    match v {
        QlpVariance::Unit => VarianceFunction::Unit,
        QlpVariance::Mean => VarianceFunction::Mean,
        QlpVariance::MeanSquared => VarianceFunction::MeanSquared,
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qlp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qlp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Non-centrality reaching `power` for a level-`alpha` χ² test on `df` degrees of freedom.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn qlp_ncp_for_power(df: u32, alpha: f64, power: f64, out: *mut f64) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out, "out")? };
        *o = qlpower::distributions::ncp_for_power(df, alpha, power).map_err(lib_err)?;
        Ok(())
    })
}

/// Asymptotic power with `n` observations at effect `f2`.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn qlp_power(f2: f64, n: u64, df: u32, alpha: f64, out: *mut f64) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out, "out")? };
        *o = qlpower::power::power_at(f2, n, df, alpha).map_err(lib_err)?;
        Ok(())
    })
}

/// Smallest n reaching `power` at effect `f2`.
///
/// # Safety
/// `out` must be a valid pointer to a uint64_t.
#[no_mangle]
pub unsafe extern "C" fn qlp_sample_size(f2: f64, df: u32, alpha: f64, power: f64, out: *mut u64) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out, "out")? };
        *o = qlpower::power::sample_size(f2, df, alpha, power).map_err(lib_err)?;
        Ok(())
    })
}

/// f² implied by 2SLiP `phi` with weight `w_one` at the outcome mean.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn qlp_f2_from_phi(phi: f64, w_one: f64, out: *mut f64) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out, "out")? };
        *o = qlpower::power::f2_from_phi(phi, w_one).map_err(lib_err)?;
        Ok(())
    })
}

/// f² implied by P2R2 `r2`.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn qlp_f2_from_r2(r2: f64, out: *mut f64) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out, "out")? };
        *o = qlpower::power::f2_from_r2(r2).map_err(lib_err)?;
        Ok(())
    })
}

/// Creates a model. `lambda` has `r` entries (intercept first), `beta` has `p`.
///
/// # Safety
/// `lambda` and `beta` must point to `r` and `p` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qlp_model_new(
    link_fn: QlpLink,
    variance_fn: QlpVariance,
    sigma2: f64,
    lambda: *const f64,
    r: usize,
    beta: *const f64,
    p: usize,
    out: *mut *mut QlpModel,
) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out, "out")? };
        let lambda = unsafe { slice(lambda, r, "lambda")? }.to_vec();
        let beta = unsafe { slice(beta, p, "beta")? }.to_vec();
        let spec = ModelSpec::new(link(link_fn), variance(variance_fn), sigma2, lambda, beta).map_err(lib_err)?;
        *o = Box::into_raw(Box::new(QlpModel(spec)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `qlp_model_new` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn qlp_model_free(model: *mut QlpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Effect sizes over the copula design (uniform adjustor, `n_categories`-level
/// predictor, latent correlation `rho`) from `mc_size` draws of `seed`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qlp_effect_sizes(
    model: *const QlpModel,
    rho: f64,
    n_categories: usize,
    mc_size: usize,
    seed: u64,
    out: *mut QlpEffectSizes,
) -> QlpStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let o = unsafe { self::out(out, "out")? };
        let design = CovariateDesign { rho, n_categories };
        design.validate().map_err(lib_err)?;
        let rep = synthetic_effect_sizes(&m.0, &design, mc_size, seed, None).map_err(lib_err)?;
        *o = QlpEffectSizes {
            f2: rep.f2,
            phi: rep.phi,
            r2: rep.r2,
            f2_phi: rep.f2_phi,
            f2_r: rep.f2_r,
            w_one: rep.w_one,
            mean_y: rep.mean_y,
            mc_se_f2: rep.mc_se_f2,
        };
        Ok(())
    })
}

/// Creates a dataset. `z` is n×r row-major with a leading column of ones,
/// `x` is n×p row-major.
///
/// # Safety
/// `y`, `z` and `x` must point to n, n·r and n·p doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qlp_dataset_new(
    y: *const f64,
    n: usize,
    z: *const f64,
    r: usize,
    x: *const f64,
    p: usize,
    kind: QlpOutcomeKind,
    out: *mut *mut QlpDataset,
) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out, "out")? };
        let len = |a: usize| {
            n.checked_mul(a)
                .ok_or_else(|| (QlpStatus::InvalidInput, "dimensions overflow".to_string()))
        };
        let y = unsafe { slice(y, n, "y")? }.to_vec();
        let z = DMatrix::from_row_slice(n, r, unsafe { slice(z, len(r)?, "z")? });
        let x = DMatrix::from_row_slice(n, p, unsafe { slice(x, len(p)?, "x")? });
        let kind = match kind {
            QlpOutcomeKind::Count => OutcomeKind::Count,
            QlpOutcomeKind::Positive => OutcomeKind::Positive,
            QlpOutcomeKind::Real => OutcomeKind::Real,
        };
        let d = Dataset::new(y, z, x, kind).map_err(lib_err)?;
        *o = Box::into_raw(Box::new(QlpDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `data` must come from `qlp_dataset_new` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn qlp_dataset_free(data: *mut QlpDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fits the full model by IRLS with Pearson dispersion. A fit that stops at
/// the iteration limit returns `NonConvergence` and no handle.
///
/// # Safety
/// `data` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qlp_fit(
    data: *const QlpDataset,
    link_fn: QlpLink,
    variance_fn: QlpVariance,
    out: *mut *mut QlpFit,
) -> QlpStatus {
    guard(|| {
        let d = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        let o = unsafe { self::out(out, "out")? };
        let fit = irls_fit(&d.0, link(link_fn), variance(variance_fn), &FitOptions::default()).map_err(lib_err)?;
        if !fit.converged {
            return Err(lib_err(Error::NonConvergence {
                iterations: fit.iterations,
            }));
        }
        *o = Box::into_raw(Box::new(QlpFit(fit)));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from `qlp_fit` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn qlp_fit_free(fit: *mut QlpFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Copies (λ̂, β̂) into `buf`. `needed` receives r + p; a short buffer
/// returns `BufferTooSmall` without writing.
///
/// # Safety
/// `fit` must be live, `buf` must hold `len` doubles, `needed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn qlp_fit_coefficients(
    fit: *const QlpFit,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> QlpStatus {
    guard(|| {
        let f = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        let coef: Vec<f64> = f.0.lambda_hat.iter().chain(&f.0.beta_hat).copied().collect();
        if let Some(n) = unsafe { needed.as_mut() } {
            *n = coef.len();
        }
        if len < coef.len() {
            return Err((
                QlpStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", coef.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        unsafe { ptr::copy_nonoverlapping(coef.as_ptr(), buf, coef.len()) };
        Ok(())
    })
}

/// Pearson dispersion estimate.
///
/// # Safety
/// `fit` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qlp_fit_sigma2(fit: *const QlpFit, out: *mut f64) -> QlpStatus {
    guard(|| {
        let f = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        *unsafe { self::out(out, "out")? } = f.0.sigma2_hat;
        Ok(())
    })
}

/// Wald test of β = 0 at level `alpha`.
///
/// # Safety
/// `fit` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qlp_fit_wald(fit: *const QlpFit, alpha: f64, out: *mut QlpTestReport) -> QlpStatus {
    guard(|| {
        let f = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        let o = unsafe { self::out(out, "out")? };
        let t = wald_test(&f.0, alpha).map_err(lib_err)?;
        *o = QlpTestReport {
            statistic: t.statistic,
            df: t.df,
            critical_value: t.critical_value,
            reject: t.reject,
        };
        Ok(())
    })
}

/// Pilot analysis of CSV text with a JSON mapping over the default δ grid.
/// `out_json` receives a string to release with `qlp_string_free`.
///
/// # Safety
/// `csv` and `mapping_json` must be NUL-terminated; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qlp_pilot_json(
    csv: *const c_char,
    mapping_json: *const c_char,
    alpha: f64,
    power: f64,
    out_json: *mut *mut c_char,
) -> QlpStatus {
    guard(|| {
        let o = unsafe { self::out(out_json, "out_json")? };
        let csv = unsafe { cstr(csv, "csv")? };
        let mapping: PilotMapping = serde_json::from_str(unsafe { cstr(mapping_json, "mapping_json")? })
            .map_err(|e| (QlpStatus::InvalidInput, format!("mapping: {e}")))?;
        let report = analyze_csv(csv.as_bytes(), &mapping, alpha, power, &default_delta_grid()).map_err(lib_err)?;
        let text = serde_json::to_string(&report).map_err(|e| (QlpStatus::InvalidInput, e.to_string()))?;
        let c = CString::new(text).map_err(|e| (QlpStatus::InvalidInput, e.to_string()))?;
        *o = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn qlp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
