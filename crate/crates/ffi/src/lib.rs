//! C ABI over the `gomore` simulator.
//!
//! Every function returns a [`GomoreStatus`]; results go through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`gomore_last_error`]. Simulations live behind an opaque
//! [`GomoreSimulation`] handle that the caller frees with
//! [`gomore_simulation_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gomore::analysis::{theorem_gap_lower, zeta_bound_dds, zeta_bound_gomore, BoundConstants};
use gomore::channel::error_free_prob_rate;
use gomore::harness::csv::emit_csv;
use gomore::harness::{ExperimentConfig, RunRecord, Scenario};
use gomore::optimizer::optimize_participation;
use gomore::{Error, StrategyId};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GomoreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Runtime = 4,
    Io = 5,
    BufferTooSmall = 6,
    /// The requested quantity is undefined for these inputs (for example
    /// the gap bound outside its precondition).
    Undefined = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GomoreStrategy {
    Ideal = 0,
    Dds = 1,
    Gomore = 2,
}

impl From<StrategyId> for GomoreStrategy {
    fn from(s: StrategyId) -> Self {
        match s {
            StrategyId::Ideal => GomoreStrategy::Ideal,
            StrategyId::Dds => GomoreStrategy::Dds,
            StrategyId::Gomore => GomoreStrategy::Gomore,
        }
    }
}

/// One row of a run. Absent accuracy or divergence values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GomoreRecord {
    pub round: u64,
    pub strategy: GomoreStrategy,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub n_error_free: u64,
    pub divergence_sample: f64,
    pub wall_time: f64,
}

impl From<&RunRecord> for GomoreRecord {
    fn from(r: &RunRecord) -> Self {
        GomoreRecord {
            round: r.round as u64,
            strategy: r.strategy.into(),
            test_accuracy: r.test_accuracy.unwrap_or(f64::NAN),
            test_loss: r.test_loss,
            n_error_free: r.n_error_free as u64,
            divergence_sample: r.divergence_sample.unwrap_or(f64::NAN),
            wall_time: r.wall_time,
        }
    }
}

/// Opaque simulation handle.
pub struct GomoreSimulation {
    scenario: Scenario,
    records: Vec<RunRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GomoreStatus {
    match e {
        Error::Config(_) => GomoreStatus::Config,
        Error::Io { .. } | Error::Format { .. } => GomoreStatus::Io,
        Error::Precondition(_) => GomoreStatus::Undefined,
        Error::InvalidParameter { .. }
        | Error::DimensionMismatch { .. }
        | Error::ProbabilityOutOfRange { .. } => GomoreStatus::InvalidArgument,
        Error::Divergence(_) => GomoreStatus::Runtime,
    }
}

struct Fail(GomoreStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GomoreStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and a stored
/// message.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> GomoreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GomoreStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GomoreStatus::Panic
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

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GomoreStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gomore_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gomore_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Error-free probability under a rate budget, `exp(-λ(2^{ρN} − 1)/N)`.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn gomore_error_free_prob_rate(
    lambda: f64,
    rho: f64,
    n_active: usize,
    out: *mut f64,
) -> GomoreStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = error_free_prob_rate(lambda, rho, n_active)?;
        Ok(())
    })
}

/// Divergence bounds for both strategies and the lower bound on their gap.
/// `probs` holds `k` error-free probabilities. `gap_out` receives NaN and
/// `gap_valid_out` zero when the gap bound's precondition fails; `zeta2_out`
/// is NaN when some probability is zero.
///
/// # Safety
/// `probs` must point to `k` doubles; every out pointer must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gomore_divergence_bounds(
    gamma_sq: f64,
    g_sq: f64,
    eta: f64,
    local_epochs: usize,
    k: usize,
    n: usize,
    probs: *const f64,
    zeta1_out: *mut f64,
    zeta2_out: *mut f64,
    gap_out: *mut f64,
    gap_valid_out: *mut u8,
) -> GomoreStatus {
    guard(|| {
        if zeta1_out.is_null() || zeta2_out.is_null() || gap_out.is_null() || gap_valid_out.is_null() {
            return Err(null("out pointer"));
        }
        let c = BoundConstants {
            gamma_sq,
            g_sq,
            eta,
            local_epochs,
            k,
            n,
            probs: slice(probs, k, "probs")?.to_vec(),
        };
        *zeta1_out = zeta_bound_gomore(&c)?;
        *zeta2_out = if c.probs.contains(&0.0) {
            f64::NAN
        } else {
            zeta_bound_dds(&c)?
        };
        match theorem_gap_lower(&c) {
            Ok(g) => {
                *gap_out = g;
                *gap_valid_out = 1;
            }
            Err(Error::Precondition(_)) => {
                *gap_out = f64::NAN;
                *gap_valid_out = 0;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    })
}

/// Exhaustive search for the participant count. `objective_out`, when not
/// NULL, must hold `k` doubles and receives the objective for N = 1..=k.
///
/// # Safety
/// `lambdas` must point to `k` doubles; `best_n_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gomore_optimize_participation(
    lambdas: *const f64,
    k: usize,
    rho: f64,
    objective_out: *mut f64,
    best_n_out: *mut usize,
) -> GomoreStatus {
    guard(|| {
        if best_n_out.is_null() {
            return Err(null("best_n_out"));
        }
        let plan = optimize_participation(slice(lambdas, k, "lambdas")?, rho, k)?;
        if !objective_out.is_null() {
            std::slice::from_raw_parts_mut(objective_out, k).copy_from_slice(&plan.objective_values);
        }
        *best_n_out = plan.best_n;
        Ok(())
    })
}

/// Parses a TOML configuration and loads its data. On success `*out`
/// receives a handle to free with [`gomore_simulation_free`].
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gomore_simulation_new(
    config_toml: *const c_char,
    out: *mut *mut GomoreSimulation,
) -> GomoreStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let mut cfg = ExperimentConfig::from_toml_str(c_str(config_toml, "config_toml")?)?;
        cfg.apply_env_overrides();
        let scenario = Scenario::prepare(&cfg)?;
        *out = Box::into_raw(Box::new(GomoreSimulation {
            scenario,
            records: Vec::new(),
        }));
        Ok(())
    })
}

/// # Safety
/// `sim` must be NULL or a handle from [`gomore_simulation_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn gomore_simulation_free(sim: *mut GomoreSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

unsafe fn handle<'a>(sim: *mut GomoreSimulation) -> Result<&'a mut GomoreSimulation, Fail> {
    sim.as_mut().ok_or_else(|| null("simulation"))
}

/// Participant count the run uses (fixed or chosen by the planner).
///
/// # Safety
/// `sim` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gomore_simulation_participants(
    sim: *mut GomoreSimulation,
    out: *mut usize,
) -> GomoreStatus {
    guard(|| {
        let sim = handle(sim)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = sim.scenario.participants()?;
        Ok(())
    })
}

/// Runs one trial, replacing any records held by the handle.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gomore_simulation_run(sim: *mut GomoreSimulation, trial: usize) -> GomoreStatus {
    guard(|| {
        let sim = handle(sim)?;
        sim.records = sim.scenario.run_trial(trial)?;
        Ok(())
    })
}

/// Number of records from the last run.
///
/// # Safety
/// `sim` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gomore_simulation_record_count(
    sim: *mut GomoreSimulation,
    out: *mut usize,
) -> GomoreStatus {
    guard(|| {
        let sim = handle(sim)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = sim.records.len();
        Ok(())
    })
}

/// Copies up to `capacity` records into `buf`; `written_out` receives the
/// number copied. Returns `BufferTooSmall` (after copying what fits) when
/// more records exist.
///
/// # Safety
/// `sim` must be a live handle; `buf` must hold `capacity` records;
/// `written_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gomore_simulation_records(
    sim: *mut GomoreSimulation,
    buf: *mut GomoreRecord,
    capacity: usize,
    written_out: *mut usize,
) -> GomoreStatus {
    guard(|| {
        let sim = handle(sim)?;
        if written_out.is_null() {
            return Err(null("written_out"));
        }
        let n = sim.records.len().min(capacity);
        if n > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            let dst = std::slice::from_raw_parts_mut(buf, n);
            for (d, r) in dst.iter_mut().zip(&sim.records) {
                *d = r.into();
            }
        }
        *written_out = n;
        if n < sim.records.len() {
            return Err(Fail(
                GomoreStatus::BufferTooSmall,
                format!("{} records, buffer holds {capacity}", sim.records.len()),
            ));
        }
        Ok(())
    })
}

/// Writes the records of the last run as CSV.
///
/// # Safety
/// `sim` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gomore_simulation_write_csv(
    sim: *mut GomoreSimulation,
    path: *const c_char,
) -> GomoreStatus {
    guard(|| {
        let sim = handle(sim)?;
        let path = c_str(path, "path")?;
        emit_csv(&sim.records, Path::new(path))?;
        Ok(())
    })
}
