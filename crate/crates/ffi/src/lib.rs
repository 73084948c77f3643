//! C ABI over `sqa-core`.
//!
//! Instances are opaque heap handles released with [`sqa_instance_free`].
//! Every fallible call returns an [`SqaStatus`]; on failure a description is
//! available from [`sqa_last_error_message`] on the same thread. Panics are
//! caught at the boundary and reported as `SQA_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sqa_core::anneal::{run_annealing, Driver, Schedule};
use sqa_core::cluster::UpdateMode;
use sqa_core::equilibrium::params_for_step;
use sqa_core::graph::{generate_instance, ground_state_exhaustive, SpinGlassInstance};
use sqa_core::oracle::{ed_thermal_expectation, Observable};
use sqa_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SqaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Capacity = 3,
    Io = 4,
    Parse = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SqaDriver {
    Tf = 0,
    Fi = 1,
    Xx = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SqaMode {
    Global = 0,
    Semilocal = 1,
}

/// Opaque problem instance.
pub struct SqaInstance {
    inner: SpinGlassInstance,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqaAnnealOptions {
    pub driver: SqaDriver,
    pub mode: SqaMode,
    pub gamma0: f64,
    pub lambda0: f64,
    pub beta: f64,
    pub trotter_step: f64,
    pub t_final: u64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqaAnnealResult {
    pub e_min_slices: f64,
    pub e_mean_slices: f64,
    /// `e_min_slices - E0`; NaN when the ground energy is unknown.
    pub e_residual: f64,
    pub mean_cluster_size: f64,
    pub acceptance: f64,
    pub cost: f64,
    pub m_slices: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SqaStatus {
    match e {
        Error::Capacity { .. } => SqaStatus::Capacity,
        Error::Io { .. } => SqaStatus::Io,
        Error::Parse { .. } | Error::Json(_) => SqaStatus::Parse,
        Error::Diagonalization => SqaStatus::Numerical,
        _ => SqaStatus::InvalidArgument,
    }
}

struct Failure(SqaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SqaStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SqaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            SqaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal error: {msg}"));
            SqaStatus::Panic
        }
    }
}

unsafe fn instance_ref<'a>(ptr: *const SqaInstance) -> Result<&'a SqaInstance, Failure> {
    ptr.as_ref().ok_or_else(|| null("instance"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(SqaStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sqa_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn sqa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Random square-lattice spin glass with couplings uniform on [-1, 1].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_generate(
    width: usize,
    height: usize,
    periodic: bool,
    seed: u64,
    out: *mut *mut SqaInstance,
) -> SqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = generate_instance(width, height, periodic, seed)?;
        *out = Box::into_raw(Box::new(SqaInstance { inner }));
        Ok(())
    })
}

/// Reads an instance file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_read(path: *const c_char, out: *mut *mut SqaInstance) -> SqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = SpinGlassInstance::read(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SqaInstance { inner }));
        Ok(())
    })
}

/// Writes an instance file.
///
/// # Safety
/// `instance` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_write(instance: *const SqaInstance, path: *const c_char) -> SqaStatus {
    guard(|| {
        let inst = instance_ref(instance)?;
        inst.inner.write(path_arg(path)?, &[])?;
        Ok(())
    })
}

/// Releases an instance. Null is ignored.
///
/// # Safety
/// `instance` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_free(instance: *mut SqaInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Number of sites, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_n_sites(instance: *const SqaInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.inner.graph.n_sites())
}

/// Number of bonds, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_n_bonds(instance: *const SqaInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.inner.graph.n_bonds())
}

/// Exact classical ground state by enumeration (at most 26 sites). The
/// energy is also stored in the instance. `spins` may be null; otherwise it
/// receives `n_sites` values of ±1.
///
/// # Safety
/// `instance` must come from this library, `energy` must be valid, and
/// `spins`, when not null, must hold `n_sites` elements.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_ground_state(
    instance: *mut SqaInstance,
    energy: *mut f64,
    spins: *mut i8,
) -> SqaStatus {
    guard(|| {
        let inst = instance.as_mut().ok_or_else(|| null("instance"))?;
        if energy.is_null() {
            return Err(null("energy"));
        }
        let (e0, config) = ground_state_exhaustive(&inst.inner.graph)?;
        inst.inner.ground_energy = Some(e0);
        *energy = e0;
        if !spins.is_null() {
            std::ptr::copy_nonoverlapping(config.as_ptr(), spins, config.len());
        }
        Ok(())
    })
}

/// Ground energy stored in the instance, or NaN.
///
/// # Safety
/// `instance` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sqa_instance_ground_energy(instance: *const SqaInstance) -> f64 {
    instance
        .as_ref()
        .and_then(|i| i.inner.ground_energy)
        .unwrap_or(f64::NAN)
}

/// Defaults: FI driver with Γ0 = Λ0 = 1, semi-local updates, β = 20,
/// Trotter step 0.3125, 10^4 updates, seed 0.
#[no_mangle]
pub extern "C" fn sqa_anneal_options_default() -> SqaAnnealOptions {
    SqaAnnealOptions {
        driver: SqaDriver::Fi,
        mode: SqaMode::Semilocal,
        gamma0: 1.0,
        lambda0: 1.0,
        beta: 20.0,
        trotter_step: 0.3125,
        t_final: 10_000,
        seed: 0,
    }
}

/// Runs one annealing schedule.
///
/// # Safety
/// `instance` must come from this library; `options` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sqa_anneal(
    instance: *const SqaInstance,
    options: *const SqaAnnealOptions,
    out: *mut SqaAnnealResult,
) -> SqaStatus {
    guard(|| {
        let inst = instance_ref(instance)?;
        let opts = options.as_ref().ok_or_else(|| null("options"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let driver = match opts.driver {
            SqaDriver::Tf => Driver::Tf,
            SqaDriver::Fi => Driver::Fi,
            SqaDriver::Xx => Driver::PureXx,
        };
        let mode = match opts.mode {
            SqaMode::Global => UpdateMode::Global,
            SqaMode::Semilocal => UpdateMode::SemiLocal(inst.inner.default_subsets()?),
        };
        let schedule = Schedule::new(opts.gamma0, opts.lambda0, opts.t_final)?;
        let params = params_for_step(&inst.inner.graph, opts.beta, opts.trotter_step)?;
        let r = run_annealing(&inst.inner, params, &schedule, &mode, driver, opts.seed)?;
        *out = SqaAnnealResult {
            e_min_slices: r.e_min_slices,
            e_mean_slices: r.e_mean_slices,
            e_residual: r.e_residual.unwrap_or(f64::NAN),
            mean_cluster_size: r.mean_cluster_size,
            acceptance: r.acceptance,
            cost: r.cost,
            m_slices: params.m_slices,
        };
        Ok(())
    })
}

/// Thermal nearest-neighbour `<σz σz>` by exact diagonalization (at most 12 sites).
///
/// # Safety
/// `instance` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sqa_ed_zz(
    instance: *const SqaInstance,
    gamma: f64,
    lambda: f64,
    beta: f64,
    out: *mut f64,
) -> SqaStatus {
    guard(|| {
        let inst = instance_ref(instance)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ed_thermal_expectation(&inst.inner.graph, gamma, lambda, beta, Observable::ZzNearestNeighbour)?;
        Ok(())
    })
}
