//! C ABI over the katoklab Katok map.
//!
//! Every entry point returns a [`KatokStatus`]; results come back through out-pointers.
//! On failure the message is kept per thread and read with [`katok_last_error`].
//! Panics are caught at the boundary and reported as `KATOK_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use katoklab::error::KatokError;
use katoklab::katok::{Branch, KatokMap as CoreMap};
use katoklab::params::{KatokParams, TorusPoint};
use katoklab::thermo;

/// Opaque map handle; create with [`katok_map_new`], release with [`katok_map_free`].
pub struct KatokMap {
    inner: CoreMap,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KatokStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    /// integrator, chart or root-finding failure
    Numerical = 3,
    /// the point or setting violates an operation's precondition
    Hypothesis = 4,
    InsufficientData = 5,
    NotConverged = 6,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &KatokError) -> KatokStatus {
    match e {
        KatokError::InvalidParams(_) | KatokError::Config(_) => KatokStatus::InvalidParams,
        KatokError::ChartDomain { .. }
        | KatokError::ChartExit { .. }
        | KatokError::StepFailure { .. }
        | KatokError::RootBracket(_)
        | KatokError::Quadrature(_)
        | KatokError::Blowup { .. }
        | KatokError::CurveGrowth(_) => KatokStatus::Numerical,
        KatokError::HypothesisViolation(_) | KatokError::NoValidElement { .. } => {
            KatokStatus::Hypothesis
        }
        KatokError::InsufficientData(_) | KatokError::ReturnCapExceeded { .. } => {
            KatokStatus::InsufficientData
        }
        KatokError::Convergence { .. } | KatokError::NewtonDivergence { .. } => {
            KatokStatus::NotConverged
        }
    }
}

/// Runs `f` behind the panic guard and turns its error into a status.
fn guard<F: FnOnce() -> Result<(), KatokError>>(f: F) -> KatokStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KatokStatus::Ok,
        Ok(Err(e)) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            KatokStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            set_error("null pointer argument".into());
            return KatokStatus::NullPointer;
        }
    };
}

/// Message of the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn katok_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a map for exponent `alpha` and radius `r0`, both in (0, 1).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn katok_map_new(
    alpha: f64,
    r0: f64,
    out: *mut *mut KatokMap,
) -> KatokStatus {
    non_null!(out);
    guard(|| {
        let params = KatokParams::new(alpha, r0)?;
        let h = Box::new(KatokMap {
            inner: CoreMap::new(params),
        });
        // SAFETY: checked non-null above, caller guarantees it is writable
        unsafe { *out = Box::into_raw(h) };
        Ok(())
    })
}

/// # Safety
/// `map` must come from [`katok_map_new`] and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn katok_map_free(map: *mut KatokMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live handle; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn katok_map_params(
    map: *const KatokMap,
    alpha: *mut f64,
    r0: *mut f64,
) -> KatokStatus {
    non_null!(map, alpha, r0);
    let p = &(*map).inner.params;
    *alpha = p.alpha;
    *r0 = p.r0;
    KatokStatus::Ok
}

#[allow(clippy::too_many_arguments)]
unsafe fn eval(
    map: *const KatokMap,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
    jac: *mut f64,
    slowed: *mut i32,
    f: impl FnOnce(&CoreMap, TorusPoint) -> Result<katoklab::katok::MapEvaluation, KatokError>,
) -> KatokStatus {
    non_null!(map, out_x, out_y);
    if !(x.is_finite() && y.is_finite()) {
        set_error(format!("non-finite point ({x}, {y})"));
        return KatokStatus::InvalidParams;
    }
    let m = &(*map).inner;
    guard(|| {
        let ev = f(m, TorusPoint::new(x, y))?;
        // SAFETY: out pointers checked above; jac and slowed are optional
        unsafe {
            *out_x = ev.image.x;
            *out_y = ev.image.y;
            if !jac.is_null() {
                let j = ev.jacobian;
                for (k, v) in [j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]]
                    .into_iter()
                    .enumerate()
                {
                    *jac.add(k) = v;
                }
            }
            if !slowed.is_null() {
                *slowed = (ev.branch == Branch::Slowdown) as i32;
            }
        }
        Ok(())
    })
}

/// One step of the area-preserving map G_T2 from (x, y) in [0,1)².
///
/// `jac` may be NULL or point to 4 doubles (row-major derivative); `slowed` may be NULL
/// or receives 1 when the point went through the slowed-down branch.
///
/// # Safety
/// `map` must be a live handle; non-NULL pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn katok_map_apply(
    map: *const KatokMap,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
    jac: *mut f64,
    slowed: *mut i32,
) -> KatokStatus {
    eval(map, x, y, out_x, out_y, jac, slowed, |m, p| m.apply_gt2(p))
}

/// Inverse of [`katok_map_apply`].
///
/// # Safety
/// As for [`katok_map_apply`].
#[no_mangle]
pub unsafe extern "C" fn katok_map_apply_inverse(
    map: *const KatokMap,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
    jac: *mut f64,
    slowed: *mut i32,
) -> KatokStatus {
    eval(map, x, y, out_x, out_y, jac, slowed, |m, p| {
        m.apply_gt2_inv(p)
    })
}

/// One step of the slowed map G, which preserves ν rather than area.
///
/// # Safety
/// As for [`katok_map_apply`].
#[no_mangle]
pub unsafe extern "C" fn katok_map_apply_base(
    map: *const KatokMap,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
    jac: *mut f64,
    slowed: *mut i32,
) -> KatokStatus {
    eval(map, x, y, out_x, out_y, jac, slowed, |m, p| m.apply_g(p))
}

/// Log of the unstable Jacobian of G_T2 at (x, y).
///
/// # Safety
/// `map` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn katok_map_log_ju(
    map: *const KatokMap,
    x: f64,
    y: f64,
    out: *mut f64,
) -> KatokStatus {
    non_null!(map, out);
    let m = &(*map).inner;
    guard(|| {
        let v = thermo::log_ju(m, TorusPoint::new(x, y))?;
        // SAFETY: checked non-null above
        unsafe { *out = v };
        Ok(())
    })
}

/// Lyapunov exponent from `iters` steps of a uniform start drawn with `seed`.
///
/// `std_err` may be NULL.
///
/// # Safety
/// `map` must be a live handle; non-NULL pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn katok_map_lyapunov(
    map: *const KatokMap,
    iters: u64,
    seed: u64,
    chi: *mut f64,
    std_err: *mut f64,
) -> KatokStatus {
    non_null!(map, chi);
    let m = &(*map).inner;
    guard(|| {
        let est = thermo::lyapunov_runs(m, iters as usize, 1, seed)?;
        // SAFETY: chi checked above, std_err optional
        unsafe {
            *chi = est[0].chi;
            if !std_err.is_null() {
                *std_err = est[0].std_err;
            }
        }
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn katok_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
