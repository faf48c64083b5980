//! C ABI over the configuration-ensemble core: opaque ensemble handles,
//! integer status codes, and a thread-local error message. The binding
//! surface is declared in `include/ce.h`, which is maintained by hand and
//! kept in sync by the `header_matches_exports` test.
//!
//! Conventions:
//! - Functions returning a pointer yield NULL on failure.
//! - Functions returning `int` yield `CE_OK` (0) on success; on failure the
//!   message is available through `ce_last_error()` until the next call on
//!   the same thread.
//! - Every handle obtained from this library must be released with
//!   `ce_ensemble_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, c_uint, CStr, CString};
use std::path::Path;

use ce_core::analytic::{ClassicalGaussian, GaussianWavepacket};
use ce_core::conditioning::{measure_and_condition, schmidt_analysis, ProductInitialData};
use ce_core::dynamics::{evolve, HamiltonianSpec, InteractionMode};
use ce_core::ensemble::{Action1D, Density1D, Ensemble, Wavefunction1D};
use ce_core::expr::{parse_action_poly, parse_operator, parse_phase_polynomial};
use ce_core::observables::{poisson_bracket, value, ObservableFunctional};
use ce_core::presets::{sized_grid, StandardScenario};
use ce_core::snapshot::{read_snapshot, write_snapshot, SnapshotMeta};

pub const CE_OK: c_int = 0;
pub const CE_NULL_ARGUMENT: c_int = 1;
pub const CE_INVALID_UTF8: c_int = 2;
pub const CE_ERROR: c_int = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new("").unwrap();
    });
}

/// Opaque ensemble handle.
pub struct CeEnsemble {
    inner: Ensemble,
}

/// Version string of the underlying library; static storage, do not free.
#[no_mangle]
pub extern "C" fn ce_version() -> *const c_char {
    concat!("ce-core ", env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread; valid until the next
/// ce_* call on the same thread. Do not free.
#[no_mangle]
pub extern "C" fn ce_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(CE_NULL_ARGUMENT);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        CE_INVALID_UTF8
    })
}

fn mode_of(sequential: c_int) -> InteractionMode {
    if sequential != 0 {
        InteractionMode::Sequential
    } else {
        InteractionMode::Simultaneous
    }
}

/// The standard scenario's initial product ensemble on a grid sized for
/// evolution up to `t_max`.
#[no_mangle]
pub extern "C" fn ce_ensemble_standard(base_n: c_uint, t_max: c_double) -> *mut CeEnsemble {
    clear_error();
    let scen = StandardScenario {
        n: (base_n as usize).max(8),
        ..Default::default()
    };
    match scen.initial(t_max) {
        Ok(e) => Box::into_raw(Box::new(CeEnsemble { inner: e })),
        Err(err) => {
            set_error(&err.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Product ensemble from Gaussian packets, a Gaussian classical density, and
/// an action polynomial `s0_expr` in x; the grid is sized for evolution up to
/// `t_max` under couplings (g1, g2).
///
/// # Safety
/// `s0_expr` must be a valid NUL-terminated C string.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ce_ensemble_product(
    a1_re: c_double,
    a1_im: c_double,
    center1: c_double,
    momentum1: c_double,
    a2_re: c_double,
    a2_im: c_double,
    center2: c_double,
    momentum2: c_double,
    classical_c: c_double,
    classical_center: c_double,
    s0_expr: *const c_char,
    hbar: c_double,
    base_n: c_uint,
    g1: c_double,
    g2: c_double,
    sequential: c_int,
    t_max: c_double,
) -> *mut CeEnsemble {
    clear_error();
    let s0 = match cstr(s0_expr) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    let build = || -> ce_core::Result<Ensemble> {
        let psi1 = GaussianWavepacket {
            a_re: a1_re,
            a_im: a1_im,
            center: center1,
            momentum: momentum1,
        };
        let psi2 = GaussianWavepacket {
            a_re: a2_re,
            a_im: a2_im,
            center: center2,
            momentum: momentum2,
        };
        let p0 = ClassicalGaussian {
            c: classical_c,
            center: classical_center,
        };
        let sigma = (0.5 / a1_re.min(a2_re)).sqrt() + center1.abs().max(center2.abs()) / 8.0;
        let grid = sized_grid(
            sigma,
            p0.sigma() + classical_center.abs() / 8.0,
            g1,
            g2,
            mode_of(sequential),
            t_max,
            (base_n as usize).max(8),
        )?;
        ce_core::ensemble::make_product_ensemble(
            &Wavefunction1D::Gaussian(psi1),
            &Wavefunction1D::Gaussian(psi2),
            &Density1D::Gaussian(p0),
            &Action1D::Poly(parse_action_poly(s0)?),
            &grid,
            hbar,
        )
    };
    match build() {
        Ok(e) => Box::into_raw(Box::new(CeEnsemble { inner: e })),
        Err(err) => {
            set_error(&err.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Release a handle returned by any constructor. NULL is accepted.
///
/// # Safety
/// `handle` must be a pointer previously returned by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn ce_ensemble_free(handle: *mut CeEnsemble) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Total probability mass of the ensemble.
///
/// # Safety
/// `handle` must be live; `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn ce_ensemble_norm(handle: *const CeEnsemble, out: *mut c_double) -> c_int {
    clear_error();
    if handle.is_null() || out.is_null() {
        set_error("null argument");
        return CE_NULL_ARGUMENT;
    }
    *out = (*handle).inner.norm();
    CE_OK
}

/// Evolve under the bilinear interaction; returns a new handle.
///
/// # Safety
/// `handle` must be live.
#[no_mangle]
pub unsafe extern "C" fn ce_ensemble_evolve(
    handle: *const CeEnsemble,
    g1: c_double,
    g2: c_double,
    sequential: c_int,
    t: c_double,
) -> *mut CeEnsemble {
    clear_error();
    if handle.is_null() {
        set_error("null handle");
        return std::ptr::null_mut();
    }
    let h = HamiltonianSpec::HybridBilinear {
        g1,
        g2,
        mode: mode_of(sequential),
    };
    match evolve(&(*handle).inner, &h, t) {
        Ok(e) => Box::into_raw(Box::new(CeEnsemble { inner: e })),
        Err(err) => {
            set_error(&err.to_string());
            std::ptr::null_mut()
        }
    }
}

fn parse_observable(kind: &str, expr: &str) -> ce_core::Result<ObservableFunctional> {
    match kind {
        "classical" => Ok(ObservableFunctional::classical(parse_phase_polynomial(
            expr,
        )?)),
        "quantum" => Ok(ObservableFunctional::quantum(parse_operator(expr)?)),
        other => Err(ce_core::CeError::Parse(format!(
            "unknown observable kind `{other}` (expected classical or quantum)"
        ))),
    }
}

/// Ensemble-average value of an observable given as an expression;
/// `kind` is "classical" (variables x, k) or "quantum" (q1, p1, q2, p2).
///
/// # Safety
/// `handle` must be live; `kind`, `expr`, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ce_observable_value(
    handle: *const CeEnsemble,
    kind: *const c_char,
    expr: *const c_char,
    out: *mut c_double,
) -> c_int {
    clear_error();
    if handle.is_null() || out.is_null() {
        set_error("null argument");
        return CE_NULL_ARGUMENT;
    }
    let kind = match cstr(kind) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let expr = match cstr(expr) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match parse_observable(kind, expr).and_then(|obs| value(&obs, &(*handle).inner)) {
        Ok(v) => {
            *out = v;
            CE_OK
        }
        Err(err) => {
            set_error(&err.to_string());
            CE_ERROR
        }
    }
}

/// Functional Poisson bracket of two observables at the ensemble.
///
/// # Safety
/// Same requirements as `ce_observable_value`.
#[no_mangle]
pub unsafe extern "C" fn ce_poisson_bracket(
    handle: *const CeEnsemble,
    kind_v: *const c_char,
    expr_v: *const c_char,
    kind_w: *const c_char,
    expr_w: *const c_char,
    out: *mut c_double,
) -> c_int {
    clear_error();
    if handle.is_null() || out.is_null() {
        set_error("null argument");
        return CE_NULL_ARGUMENT;
    }
    let parts = (|| -> Result<(ObservableFunctional, ObservableFunctional), c_int> {
        let kv = cstr(kind_v)?;
        let ev = cstr(expr_v)?;
        let kw = cstr(kind_w)?;
        let ew = cstr(expr_w)?;
        let v = parse_observable(kv, ev).map_err(|e| {
            set_error(&e.to_string());
            CE_ERROR
        })?;
        let w = parse_observable(kw, ew).map_err(|e| {
            set_error(&e.to_string());
            CE_ERROR
        })?;
        Ok((v, w))
    })();
    let (v, w) = match parts {
        Ok(p) => p,
        Err(code) => return code,
    };
    match poisson_bracket(&v, &w, &(*handle).inner) {
        Ok(b) => {
            *out = b;
            CE_OK
        }
        Err(err) => {
            set_error(&err.to_string());
            CE_ERROR
        }
    }
}

/// Entanglement entropy of the conditional two-particle state of the standard
/// scenario after evolving for `t` and measuring the mediator at `a`.
///
/// # Safety
/// `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn ce_conditional_entropy(
    g1: c_double,
    g2: c_double,
    t: c_double,
    a: c_double,
    sequential: c_int,
    base_n: c_uint,
    out: *mut c_double,
) -> c_int {
    clear_error();
    if out.is_null() {
        set_error("null output pointer");
        return CE_NULL_ARGUMENT;
    }
    let run = || -> ce_core::Result<f64> {
        let mode = mode_of(sequential);
        let scen = StandardScenario {
            g1,
            g2,
            mode,
            n: (base_n as usize).max(8),
        };
        let init = ProductInitialData {
            psi1: Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            psi2: Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            p0: Density1D::Gaussian(ClassicalGaussian::unit()),
            s0: Action1D::Poly(ce_core::analytic::Poly1::zero()),
            grid: scen.grid_for(t)?,
            hbar: 1.0,
        };
        let state = measure_and_condition(&init, g1, g2, t, a, mode)?;
        Ok(schmidt_analysis(&state.wavefunction)?.entropy)
    };
    match run() {
        Ok(v) => {
            unsafe { *out = v };
            CE_OK
        }
        Err(err) => {
            set_error(&err.to_string());
            CE_ERROR
        }
    }
}

/// Final negativity of the bit-mediated protocol.
///
/// # Safety
/// `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn ce_qubit_protocol_negativity(
    p0: c_double,
    communicate: c_int,
    out: *mut c_double,
) -> c_int {
    clear_error();
    if out.is_null() {
        set_error("null output pointer");
        return CE_NULL_ARGUMENT;
    }
    match ce_core::qubit::run_protocol(p0, communicate != 0) {
        Ok(outcome) => {
            unsafe { *out = outcome.final_negativity };
            CE_OK
        }
        Err(err) => {
            set_error(&err.to_string());
            CE_ERROR
        }
    }
}

/// Write the ensemble as a `ce-ensemble/1` snapshot.
///
/// # Safety
/// `handle` must be live; `path` and `scenario` must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn ce_snapshot_write(
    handle: *const CeEnsemble,
    path: *const c_char,
    scenario: *const c_char,
    time: c_double,
) -> c_int {
    clear_error();
    if handle.is_null() {
        set_error("null handle");
        return CE_NULL_ARGUMENT;
    }
    let path = match cstr(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let scenario = match cstr(scenario) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match write_snapshot(
        Path::new(path),
        &(*handle).inner,
        &SnapshotMeta {
            scenario: scenario.to_string(),
            time,
        },
    ) {
        Ok(()) => CE_OK,
        Err(err) => {
            set_error(&err.to_string());
            CE_ERROR
        }
    }
}

/// Read a `ce-ensemble/1` snapshot into a new handle.
///
/// # Safety
/// `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn ce_snapshot_read(path: *const c_char) -> *mut CeEnsemble {
    clear_error();
    let path = match cstr(path) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    match read_snapshot(Path::new(path)) {
        Ok((e, _meta)) => Box::into_raw(Box::new(CeEnsemble { inner: e })),
        Err(err) => {
            set_error(&err.to_string());
            std::ptr::null_mut()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    #[test]
    fn standard_ensemble_lifecycle() {
        let handle = ce_ensemble_standard(24, 0.5);
        assert!(!handle.is_null());
        let mut norm = 0.0;
        unsafe {
            assert_eq!(ce_ensemble_norm(handle, &mut norm), CE_OK);
            assert!((norm - 1.0).abs() < 1e-8, "norm {norm}");

            let evolved = ce_ensemble_evolve(handle, 1.0, 1.0, 0, 0.5);
            assert!(!evolved.is_null());
            let mut v = f64::NAN;
            let kind = CString::new("quantum").unwrap();
            let expr = CString::new("q1").unwrap();
            assert_eq!(
                ce_observable_value(evolved, kind.as_ptr(), expr.as_ptr(), &mut v),
                CE_OK
            );
            assert!(v.abs() < 1e-8, "<q1> = {v}");
            ce_ensemble_free(evolved);
            ce_ensemble_free(handle);
        }
    }

    #[test]
    fn canonical_bracket_through_the_c_surface() {
        let handle = ce_ensemble_standard(24, 0.0);
        let mut b = 0.0;
        let classical = CString::new("classical").unwrap();
        let x = CString::new("x").unwrap();
        let k = CString::new("k").unwrap();
        unsafe {
            assert_eq!(
                ce_poisson_bracket(
                    handle,
                    classical.as_ptr(),
                    x.as_ptr(),
                    classical.as_ptr(),
                    k.as_ptr(),
                    &mut b
                ),
                CE_OK
            );
            ce_ensemble_free(handle);
        }
        assert!((b - 1.0).abs() < 1e-4, "{{C_x, C_k}} = {b}");
    }

    #[test]
    fn errors_set_the_thread_local_message() {
        let handle = ce_ensemble_standard(24, 0.0);
        let mut v = 0.0;
        let kind = CString::new("classical").unwrap();
        let bad = CString::new("x*q1").unwrap();
        unsafe {
            assert_eq!(
                ce_observable_value(handle, kind.as_ptr(), bad.as_ptr(), &mut v),
                CE_ERROR
            );
            let msg = CStr::from_ptr(ce_last_error()).to_str().unwrap();
            assert!(msg.contains("unknown phase-space variable"), "msg: {msg}");
            ce_ensemble_free(handle);
        }
        // null handling
        let mut out = 0.0;
        unsafe {
            assert_eq!(
                ce_ensemble_norm(std::ptr::null(), &mut out),
                CE_NULL_ARGUMENT
            );
        }
    }

    #[test]
    fn conditional_entropy_and_protocol_match_core_values() {
        let mut entropy = 0.0;
        unsafe {
            assert_eq!(
                ce_conditional_entropy(1.0, 1.0, 1.0, 0.0, 0, 64, &mut entropy),
                CE_OK
            );
        }
        assert!(entropy > 0.01, "entropy {entropy}");

        let mut neg = 0.0;
        unsafe {
            assert_eq!(ce_qubit_protocol_negativity(0.5, 1, &mut neg), CE_OK);
            assert!((neg - 0.5).abs() < 1e-10);
            assert_eq!(ce_qubit_protocol_negativity(0.5, 0, &mut neg), CE_OK);
        }
        assert!(neg.abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip_through_the_c_surface() {
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(
            dir.path().join("state.ce").to_str().unwrap().to_string(),
        )
        .unwrap();
        let scenario = CString::new("ffi-test").unwrap();
        let handle = ce_ensemble_standard(24, 0.0);
        unsafe {
            assert_eq!(
                ce_snapshot_write(handle, path.as_ptr(), scenario.as_ptr(), 0.0),
                CE_OK
            );
            let back = ce_snapshot_read(path.as_ptr());
            assert!(!back.is_null());
            let mut norm = 0.0;
            assert_eq!(ce_ensemble_norm(back, &mut norm), CE_OK);
            assert!((norm - 1.0).abs() < 1e-8);
            ce_ensemble_free(back);
            ce_ensemble_free(handle);
        }
    }

    #[test]
    fn header_matches_exports() {
        // every exported ce_* symbol appears in the header, and vice versa
        let header = include_str!("../include/ce.h");
        let exports = [
            "ce_version",
            "ce_last_error",
            "ce_ensemble_standard",
            "ce_ensemble_product",
            "ce_ensemble_free",
            "ce_ensemble_norm",
            "ce_ensemble_evolve",
            "ce_observable_value",
            "ce_poisson_bracket",
            "ce_conditional_entropy",
            "ce_qubit_protocol_negativity",
            "ce_snapshot_write",
            "ce_snapshot_read",
        ];
        for name in exports {
            assert!(
                header.contains(&format!("{name}(")),
                "header missing declaration for {name}"
            );
        }
        let this_file = include_str!("lib.rs");
        for line in header.lines() {
            if let Some(idx) = line.find("ce_") {
                let tail = &line[idx..];
                if let Some(paren) = tail.find('(') {
                    let name = &tail[..paren];
                    if name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                        assert!(
                            this_file.contains(&format!("fn {name}")),
                            "header declares {name} with no Rust export"
                        );
                    }
                }
            }
        }
    }
}
