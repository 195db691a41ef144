//! C ABI for the cross-diffusion solver.
//!
//! Opaque handles, plain status codes, and caller-owned buffers; the header
//! `include/crossdiff.h` is generated by cbindgen at build time. A typical
//! session: `cd_model_new` -> `cd_run` -> `cd_trajectory_*` queries ->
//! `cd_trajectory_free` -> `cd_model_free`.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crossdiff::entropy::StatePoint;
use crossdiff::error::Error;
use crossdiff::grid::{discrete_relative_entropy, Field, Grid1D};
use crossdiff::model::{compute_constants, validate_hypotheses_seeded, ModelSpec};
use crossdiff::stepper::{run_simulation, SchemeParams, Trajectory};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CdStatus {
    CdOk = 0,
    CdNullPointer = 1,
    CdInvalidArgument = 2,
    CdConfigError = 3,
    CdNumericalError = 4,
    CdBufferTooSmall = 5,
    CdPanic = 6,
}

fn status_of(err: &Error) -> CdStatus {
    match err {
        Error::Config(_) => CdStatus::CdConfigError,
        _ => CdStatus::CdNumericalError,
    }
}

/// Opaque model handle.
pub struct CdModel {
    inner: ModelSpec,
}

/// Opaque trajectory handle with precomputed per-snapshot diagnostics.
pub struct CdTrajectory {
    inner: Trajectory,
    entropy: Vec<f64>,
    rel_entropy: Vec<f64>,
    min_vacancy: f64,
    species: usize,
    cells: usize,
}

/// Derived model constants, mirrored as plain data.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CdConstants {
    pub p0: f64,
    pub delta: f64,
    pub a: f64,
    pub c0: f64,
    pub gamma: f64,
    pub q0: f64,
    pub q1: f64,
    /// Nonzero when the occupancy infimum vanishes and rate diagnostics are
    /// meaningless.
    pub degenerate_c0: u8,
}

/// Stepper controls, mirrored as plain data; get defaults from
/// [`cd_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CdParams {
    pub tau: f64,
    pub reg_enabled: u8,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub newton_fallback: u8,
    pub continuation_eta: u8,
    pub tau_min: f64,
    pub entropy_tol: f64,
    pub snapshot_every: usize,
    pub guess_jitter: f64,
    pub jitter_seed: u64,
}

impl CdParams {
    fn to_scheme(self) -> SchemeParams {
        let mut p = SchemeParams::with_tau(self.tau);
        p.reg_enabled = self.reg_enabled != 0;
        p.picard_tol = self.picard_tol;
        p.picard_max = self.picard_max;
        p.newton_fallback = self.newton_fallback != 0;
        p.continuation_eta = self.continuation_eta != 0;
        p.tau_min = self.tau_min;
        p.entropy_tol = self.entropy_tol;
        p.snapshot_every = self.snapshot_every;
        p.guess_jitter = self.guess_jitter;
        p.jitter_seed = self.jitter_seed;
        p
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn cd_status_message(status: CdStatus) -> *const c_char {
    let s: &'static str = match status {
        CdStatus::CdOk => "ok\0",
        CdStatus::CdNullPointer => "null pointer argument\0",
        CdStatus::CdInvalidArgument => "invalid argument\0",
        CdStatus::CdConfigError => "configuration error\0",
        CdStatus::CdNumericalError => "numerical failure\0",
        CdStatus::CdBufferTooSmall => "buffer too small\0",
        CdStatus::CdPanic => "internal panic\0",
    };
    s.as_ptr() as *const c_char
}

/// Build a catalog model (`ion-transport`, `power-q:<alpha>`, `skt-volume`,
/// `exp-q:<alpha>`, `vanishing-q:<alpha>`) with `species` components.
///
/// # Safety
/// `name` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cd_model_new(
    name: *const c_char,
    species: usize,
    out: *mut *mut CdModel,
) -> CdStatus {
    if name.is_null() || out.is_null() {
        return CdStatus::CdNullPointer;
    }
    let Ok(name) = CStr::from_ptr(name).to_str() else {
        return CdStatus::CdInvalidArgument;
    };
    match ModelSpec::by_name(name, species) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(CdModel { inner: model }));
            CdStatus::CdOk
        }
        Err(e) => {
            *out = ptr::null_mut();
            status_of(&e)
        }
    }
}

/// # Safety
/// `model` must come from [`cd_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cd_model_free(model: *mut CdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Species count of a model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cd_model_species(model: *const CdModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.n
}

/// Derived constants of a model.
///
/// # Safety
/// `model` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_model_constants(
    model: *const CdModel,
    out: *mut CdConstants,
) -> CdStatus {
    if model.is_null() || out.is_null() {
        return CdStatus::CdNullPointer;
    }
    let c = compute_constants(&(*model).inner);
    *out = CdConstants {
        p0: c.p0,
        delta: c.delta,
        a: c.a,
        c0: c.c0,
        gamma: c.gamma,
        q0: c.q0,
        q1: c.q1,
        degenerate_c0: u8::from(c.degenerate_c0),
    };
    CdStatus::CdOk
}

/// Sampled hypothesis validation; writes 1 into `passed` when every
/// condition holds.
///
/// # Safety
/// `model` must be a live handle, `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_model_validate(
    model: *const CdModel,
    samples: usize,
    seed: u64,
    passed: *mut u8,
) -> CdStatus {
    if model.is_null() || passed.is_null() {
        return CdStatus::CdNullPointer;
    }
    let report = validate_hypotheses_seeded(&(*model).inner, samples, seed);
    *passed = u8::from(report.all_passed());
    CdStatus::CdOk
}

/// Default stepper controls for a given time step.
#[no_mangle]
pub extern "C" fn cd_params_default(tau: f64) -> CdParams {
    let p = SchemeParams::with_tau(tau);
    CdParams {
        tau: p.tau,
        reg_enabled: u8::from(p.reg_enabled),
        picard_tol: p.picard_tol,
        picard_max: p.picard_max,
        newton_fallback: u8::from(p.newton_fallback),
        continuation_eta: u8::from(p.continuation_eta),
        tau_min: p.tau_min,
        entropy_tol: p.entropy_tol,
        snapshot_every: p.snapshot_every,
        guess_jitter: p.guess_jitter,
        jitter_seed: p.jitter_seed,
    }
}

/// Integrate from the species-major initial data `u0` (`species * cells`
/// values) on `[0, length]` to `t_final`.
///
/// # Safety
/// `model` must be a live handle, `u0` must hold `species * cells` doubles,
/// `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cd_run(
    model: *const CdModel,
    length: f64,
    cells: usize,
    u0: *const f64,
    t_final: f64,
    params: *const CdParams,
    out: *mut *mut CdTrajectory,
) -> CdStatus {
    if model.is_null() || u0.is_null() || params.is_null() || out.is_null() {
        return CdStatus::CdNullPointer;
    }
    *out = ptr::null_mut();
    let model = &(*model).inner;
    let n = model.n;
    let data = std::slice::from_raw_parts(u0, n * cells).to_vec();
    let params = (*params).to_scheme();
    let result = catch_unwind(AssertUnwindSafe(|| -> Result<CdTrajectory, Error> {
        let grid = Grid1D::new(length, cells)?;
        let field = Field::from_raw(grid, n, data)?;
        let trajectory = run_simulation(model, grid, &field, t_final, &params)?;
        let uinf = StatePoint::new(field.means())
            .map_err(|e| Error::Config(format!("inadmissible steady state: {e}")))?;
        let mut entropy = Vec::with_capacity(trajectory.fields.len());
        let mut rel_entropy = Vec::with_capacity(trajectory.fields.len());
        for f in &trajectory.fields {
            entropy.push(crossdiff::grid::discrete_entropy(f, model));
            rel_entropy.push(discrete_relative_entropy(f, &uinf, model)?);
        }
        let mut min_vacancy = trajectory.fields[0].min_vacancy();
        for rep in &trajectory.reports {
            min_vacancy = min_vacancy.min(rep.min_vacancy);
        }
        Ok(CdTrajectory {
            inner: trajectory,
            entropy,
            rel_entropy,
            min_vacancy,
            species: n,
            cells,
        })
    }));
    match result {
        Ok(Ok(traj)) => {
            *out = Box::into_raw(Box::new(traj));
            CdStatus::CdOk
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => CdStatus::CdPanic,
    }
}

/// # Safety
/// `trajectory` must come from [`cd_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cd_trajectory_free(trajectory: *mut CdTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of stored snapshots (at least 2: initial and final state).
///
/// # Safety
/// `trajectory` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cd_trajectory_snapshots(trajectory: *const CdTrajectory) -> usize {
    if trajectory.is_null() {
        return 0;
    }
    (*trajectory).inner.times.len()
}

/// Number of accepted steps.
///
/// # Safety
/// `trajectory` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cd_trajectory_steps(trajectory: *const CdTrajectory) -> usize {
    if trajectory.is_null() {
        return 0;
    }
    (*trajectory).inner.reports.len()
}

/// Time of snapshot `index`.
///
/// # Safety
/// `trajectory` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_trajectory_time(
    trajectory: *const CdTrajectory,
    index: usize,
    out: *mut f64,
) -> CdStatus {
    if trajectory.is_null() || out.is_null() {
        return CdStatus::CdNullPointer;
    }
    let times = &(*trajectory).inner.times;
    match times.get(index) {
        Some(t) => {
            *out = *t;
            CdStatus::CdOk
        }
        None => CdStatus::CdInvalidArgument,
    }
}

/// Copy snapshot `index` into `buffer` (species-major, `species * cells`
/// doubles).
///
/// # Safety
/// `trajectory` must be a live handle; `buffer` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cd_trajectory_field(
    trajectory: *const CdTrajectory,
    index: usize,
    buffer: *mut f64,
    len: usize,
) -> CdStatus {
    if trajectory.is_null() || buffer.is_null() {
        return CdStatus::CdNullPointer;
    }
    let t = &*trajectory;
    let needed = t.species * t.cells;
    if len < needed {
        return CdStatus::CdBufferTooSmall;
    }
    let Some(field) = t.inner.fields.get(index) else {
        return CdStatus::CdInvalidArgument;
    };
    std::slice::from_raw_parts_mut(buffer, needed).copy_from_slice(field.data());
    CdStatus::CdOk
}

/// Entropy and relative entropy of snapshot `index`.
///
/// # Safety
/// `trajectory` must be a live handle; outputs may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn cd_trajectory_entropy(
    trajectory: *const CdTrajectory,
    index: usize,
    entropy: *mut f64,
    rel_entropy: *mut f64,
) -> CdStatus {
    if trajectory.is_null() {
        return CdStatus::CdNullPointer;
    }
    let t = &*trajectory;
    let (Some(h), Some(r)) = (t.entropy.get(index), t.rel_entropy.get(index)) else {
        return CdStatus::CdInvalidArgument;
    };
    if !entropy.is_null() {
        *entropy = *h;
    }
    if !rel_entropy.is_null() {
        *rel_entropy = *r;
    }
    CdStatus::CdOk
}

/// Smallest vacancy over the whole run (strictly positive by construction).
///
/// # Safety
/// `trajectory` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_trajectory_min_vacancy(
    trajectory: *const CdTrajectory,
    out: *mut f64,
) -> CdStatus {
    if trajectory.is_null() || out.is_null() {
        return CdStatus::CdNullPointer;
    }
    *out = (*trajectory).min_vacancy;
    CdStatus::CdOk
}
