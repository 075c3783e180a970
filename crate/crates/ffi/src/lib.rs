//! C ABI over the slowinst analysis core.
//!
//! Every fallible entry point returns an [`SiStatus`]; on anything but
//! `SI_STATUS_OK` a message is kept per thread and can be read with
//! [`si_last_error_message`]. Models are opaque handles created with
//! [`si_model_new`] and released with [`si_model_free`]. Strings handed out
//! by the library must be released with [`si_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use slowinst::interaction::ResonancePoints;
use slowinst::interaction::{default_window, find_resonances, gamma1, select_xi0, ResonanceSpec};
use slowinst::report::default_audit;
use slowinst::{Branch, Error, Family, Model, ModelParams};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    BracketFailure = 3,
    Collision = 4,
    DegeneratePhase = 5,
    Numerical = 6,
    Support = 7,
    Serialization = 8,
    BufferTooSmall = 9,
    InvalidEnum = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiFamily {
    L = 0,
    M = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiBranch {
    Plus = 0,
    Minus = 1,
    Zero = 2,
}

/// The two (+,+,3,L,M) resonances ξ₃ < ξ₂, the p = 1 point ξ₁ and k.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SiResonancePoints {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub k: f64,
}

/// Opaque model handle.
pub struct SiModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SiStatus {
    match err {
        Error::InvalidParameter { .. } | Error::Config(_) => SiStatus::InvalidParameter,
        Error::BracketFailure { .. } => SiStatus::BracketFailure,
        Error::Collision { .. } => SiStatus::Collision,
        Error::DegeneratePhase => SiStatus::DegeneratePhase,
        Error::Support(_) => SiStatus::Support,
        Error::Json(_) | Error::Io(_) => SiStatus::Serialization,
        _ => SiStatus::Numerical,
    }
}

fn fail(status: SiStatus, msg: impl Into<String>) -> SiStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording errors and converting panics into `SiStatus::Panic`.
fn guard(f: impl FnOnce() -> Result<(), SiStatus>) -> SiStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SiStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SiStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: slowinst::Result<T>) -> Result<T, SiStatus> {
    r.map_err(|e| fail(status_of(&e), format!("{}: {e}", e.kind())))
}

unsafe fn model_ref<'a>(m: *const SiModel) -> Result<&'a Model, SiStatus> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| fail(SiStatus::NullPointer, "null model handle"))
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), SiStatus> {
    if out.is_null() {
        return Err(fail(SiStatus::NullPointer, "null output pointer"));
    }
    out.write(v);
    Ok(())
}

fn family(f: SiFamily) -> Family {
    match f {
        SiFamily::L => Family::L,
        SiFamily::M => Family::M,
    }
}

fn branch(b: SiBranch) -> Branch {
    match b {
        SiBranch::Plus => Branch::Plus,
        SiBranch::Minus => Branch::Minus,
        SiBranch::Zero => Branch::Zero,
    }
}

// Enum arguments arrive as plain integers; reject values outside the range
// before they become Rust enums.
fn family_arg(v: i32) -> Result<SiFamily, SiStatus> {
    match v {
        0 => Ok(SiFamily::L),
        1 => Ok(SiFamily::M),
        _ => Err(fail(SiStatus::InvalidEnum, format!("family {v}"))),
    }
}

fn branch_arg(v: i32) -> Result<SiBranch, SiStatus> {
    match v {
        0 => Ok(SiBranch::Plus),
        1 => Ok(SiBranch::Minus),
        2 => Ok(SiBranch::Zero),
        _ => Err(fail(SiStatus::InvalidEnum, format!("branch {v}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn si_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or NULL after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn si_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model; parameters must lie in the supported regime.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn si_model_new(
    theta0: f64,
    alpha0: f64,
    omega0: f64,
    epsilon: f64,
    out: *mut *mut SiModel,
) -> SiStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SiStatus::NullPointer, "null output pointer"));
        }
        let params = lift(ModelParams::new(theta0, alpha0, omega0, epsilon))?;
        let inner = lift(Model::new(params))?;
        out.write(Box::into_raw(Box::new(SiModel { inner })));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle from [`si_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn si_model_free(m: *mut SiModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// The characteristic pair (ω, k).
///
/// # Safety
/// `m` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn si_model_phase(
    m: *const SiModel,
    omega: *mut f64,
    k: *mut f64,
) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        write(omega, m.phase.omega)?;
        write(k, m.phase.k)
    })
}

/// Dispersion relation of a family at ξ (`family_id`: 0 = L, 1 = M).
///
/// # Safety
/// `m` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn si_dispersion(
    m: *const SiModel,
    family_id: i32,
    xi: f64,
    out: *mut f64,
) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        let f = family(family_arg(family_id)?);
        write(out, m.params.dispersion(f, xi))
    })
}

/// # Safety
/// `m` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn si_group_velocity(
    m: *const SiModel,
    family_id: i32,
    xi: f64,
    out: *mut f64,
) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        let f = family(family_arg(family_id)?);
        write(out, m.params.group_velocity(f, xi))
    })
}

/// Growth coefficient γ₁ at ξ.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn si_gamma1(m: *const SiModel, xi: f64, out: *mut f64) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        write(out, gamma1(m, xi))
    })
}

/// # Safety
/// `m` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn si_resonance_points(
    m: *const SiModel,
    out: *mut SiResonancePoints,
) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        let p = lift(ResonancePoints::compute(m))?;
        write(
            out,
            SiResonancePoints {
                xi1: p.xi1,
                xi2: p.xi2,
                xi3: p.xi3,
                k: p.k,
            },
        )
    })
}

/// ξ₀, the point of {ξ₂, ξ₃} where μ is smaller, and the remaining point.
///
/// # Safety
/// `m` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn si_select_xi0(
    m: *const SiModel,
    xi0: *mut f64,
    xi0_r: *mut f64,
) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        let p = lift(ResonancePoints::compute(m))?;
        let (a, b) = lift(select_xi0(m, (p.xi2, p.xi3)))?;
        write(xi0, a)?;
        write(xi0_r, b)
    })
}

/// Resonance set of (i, j, p, δ, σ) on the default frequency window,
/// ascending. Writes the count to `len` in every case; when it exceeds
/// `cap` nothing is copied and `SI_STATUS_BUFFER_TOO_SMALL` is returned.
/// `buf` may be NULL when `cap` is zero.
///
/// # Safety
/// `m` must be a live handle; `buf` must hold `cap` doubles; `len` must be
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn si_find_resonances(
    m: *const SiModel,
    branch_i: i32,
    branch_j: i32,
    p: i32,
    delta: i32,
    sigma: i32,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        let spec = ResonanceSpec::new(
            branch(branch_arg(branch_i)?),
            branch(branch_arg(branch_j)?),
            p,
            family(family_arg(delta)?),
            family(family_arg(sigma)?),
        );
        let roots = lift(find_resonances(m, &spec, default_window(m)))?;
        write(len, roots.len())?;
        if roots.len() > cap {
            return Err(fail(
                SiStatus::BufferTooSmall,
                format!("{} roots, capacity {cap}", roots.len()),
            ));
        }
        if !roots.is_empty() {
            if buf.is_null() {
                return Err(fail(SiStatus::NullPointer, "null buffer"));
            }
            ptr::copy_nonoverlapping(roots.as_ptr(), buf, roots.len());
        }
        Ok(())
    })
}

/// Full resonance audit with default tolerances, as a JSON document.
/// Release the string with [`si_string_free`].
///
/// # Safety
/// `m` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn si_analyze_json(m: *const SiModel, out: *mut *mut c_char) -> SiStatus {
    guard(|| {
        let m = model_ref(m)?;
        let audit = lift(default_audit(m))?;
        let text = serde_json::to_string(&audit)
            .map_err(|e| fail(SiStatus::Serialization, e.to_string()))?;
        let c = CString::new(text).map_err(|e| fail(SiStatus::Serialization, e.to_string()))?;
        write(out, c.into_raw())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn si_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Name of a status code as a static string.
#[no_mangle]
pub extern "C" fn si_status_name(status: SiStatus) -> *const c_char {
    let s: &'static CStr = match status {
        SiStatus::Ok => c"ok",
        SiStatus::NullPointer => c"null_pointer",
        SiStatus::InvalidParameter => c"invalid_parameter",
        SiStatus::BracketFailure => c"bracket_failure",
        SiStatus::Collision => c"collision",
        SiStatus::DegeneratePhase => c"degenerate_phase",
        SiStatus::Numerical => c"numerical",
        SiStatus::Support => c"support",
        SiStatus::Serialization => c"serialization",
        SiStatus::BufferTooSmall => c"buffer_too_small",
        SiStatus::InvalidEnum => c"invalid_enum",
        SiStatus::Panic => c"panic",
    };
    s.as_ptr()
}
