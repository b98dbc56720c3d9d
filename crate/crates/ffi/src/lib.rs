//! C interface to the sketchsolve solvers.
//!
//! Problems live behind an opaque `SsProblem` handle. Every fallible call
//! returns an `SsStatus`; on failure the message is kept per thread and read
//! back with `ss_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sketchsolve::cli::setup::setup_method;
use sketchsolve::io::config::{MethodSpec, ProblemSource};
use sketchsolve::io::generate::GeneratorSpec;
use sketchsolve::io::problem::ProblemInstance;
use sketchsolve::linalg::{DenseMatrix, SparseMatrix};
use sketchsolve::probopt::OptConfig;
use sketchsolve::rates::{rate_report, McOptions};
use sketchsolve::solver::{run_solver, BlockSize, Method, Outcome, SolverConfig};
use sketchsolve::SketchError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    /// Null pointer, bad dimensions, unknown method or similar.
    InvalidArgument = 1,
    Io = 2,
    Parse = 3,
    /// The method cannot run on this system (e.g. needs SPD).
    Incompatible = 4,
    Numerical = 5,
    /// Stopped on the iteration or time budget; the iterate is still written.
    BudgetExhausted = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Opaque problem handle.
pub struct SsProblem {
    inner: ProblemInstance,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SsSolveOptions {
    pub tolerance: f64,
    pub max_iters: u64,
    pub max_seconds: f64,
    pub seed: u64,
    /// 0 keeps the method's default block size.
    pub block_size: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SsSolveInfo {
    pub iterations: u64,
    /// Final value of the stopping metric.
    pub final_metric: f64,
    pub converged: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SsRate {
    pub rho: f64,
    pub rho_lower_bound: f64,
    /// NaN when the law is not discrete.
    pub rho_convenient: f64,
    /// `u64::MAX` when the rate is 1.
    pub iteration_complexity: u64,
    pub ez_positive_definite: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SsStatus, String);

impl From<SketchError> for Failure {
    fn from(e: SketchError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SsStatus::InvalidArgument, msg.into())
}

fn status_of(e: &SketchError) -> SsStatus {
    use SketchError::*;
    match e {
        DimensionMismatch { .. } | NonFinite(_) | InvalidParameter(_) | InvalidSampling { .. } => {
            SsStatus::InvalidArgument
        }
        IncompleteSampling { .. } => SsStatus::InvalidArgument,
        NotSymmetric { .. } | NotPositiveDefinite { .. } | RankDeficient(_) | IncompatibleMethod { .. } => {
            SsStatus::Incompatible
        }
        OracleFailure(_) | Diverged { .. } | Statistics(_) => SsStatus::Numerical,
        Parse { .. } | MatrixMarket { .. } | Json(_) => SsStatus::Parse,
        Io { .. } => SsStatus::Io,
        Trial { source, .. } => status_of(source),
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<SsStatus, Failure>) -> SsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
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
            SsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn problem<'a>(p: *const SsProblem) -> Result<&'a ProblemInstance, Failure> {
    p.as_ref().map(|h| &h.inner).ok_or_else(|| invalid("problem handle is null"))
}

unsafe fn emit(out: *mut *mut SsProblem, inner: ProblemInstance) -> Result<SsStatus, Failure> {
    if out.is_null() {
        return Err(invalid("output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(SsProblem { inner }));
    Ok(SsStatus::Ok)
}

fn parse_method(name: &str) -> Result<Method, Failure> {
    name.parse::<Method>().map_err(Failure::from)
}

fn method_spec(name: &str, block: usize) -> Result<MethodSpec, Failure> {
    let mut spec = MethodSpec::new(parse_method(name)?);
    if block > 0 {
        spec.block_size = BlockSize::Fixed(block);
    }
    Ok(spec)
}

/// Defaults: tolerance 1e-4, 10⁶ iterations, 300 s, seed 0.
#[no_mangle]
pub extern "C" fn ss_default_solve_options() -> SsSolveOptions {
    SsSolveOptions {
        tolerance: 1e-4,
        max_iters: 1_000_000,
        max_seconds: 300.0,
        seed: 0,
        block_size: 0,
    }
}

/// Builds `Ax = b` from a row-major `rows × cols` array and `b` of length `rows`.
///
/// # Safety
/// `a` must hold `rows * cols` values, `b` `rows` values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_from_dense(
    rows: usize,
    cols: usize,
    a: *const f64,
    b: *const f64,
    out: *mut *mut SsProblem,
) -> SsStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("rows * cols overflows"))?;
        let data = slice(a, len, "a")?.to_vec();
        let rhs = slice(b, rows, "b")?.to_vec();
        let m = DenseMatrix::from_row_major(rows, cols, data)?;
        emit(out, ProblemInstance::new("dense", m, rhs, None)?)
    })
}

/// Builds a sparse system from `nnz` coordinate triplets (0-based).
///
/// # Safety
/// The index and value arrays must hold `nnz` entries, `b` `rows` values.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_from_triplets(
    rows: usize,
    cols: usize,
    nnz: usize,
    row_idx: *const usize,
    col_idx: *const usize,
    values: *const f64,
    b: *const f64,
    out: *mut *mut SsProblem,
) -> SsStatus {
    guard(|| {
        let vals = slice(values, nnz, "values")?;
        if nnz > 0 && (row_idx.is_null() || col_idx.is_null()) {
            return Err(invalid("index arrays are null"));
        }
        let (ri, ci) = if nnz == 0 {
            (&[][..], &[][..])
        } else {
            (
                std::slice::from_raw_parts(row_idx, nnz),
                std::slice::from_raw_parts(col_idx, nnz),
            )
        };
        let triplets: Vec<(usize, usize, f64)> = (0..nnz).map(|k| (ri[k], ci[k], vals[k])).collect();
        let m = SparseMatrix::from_triplets(rows, cols, &triplets)?;
        let rhs = slice(b, rows, "b")?.to_vec();
        emit(out, ProblemInstance::new("sparse", m, rhs, None)?)
    })
}

/// Reads a Matrix Market file. With `rhs_path` null, `b = A·x*` for a
/// random `x*` drawn from `seed`, and `x*` is kept.
///
/// # Safety
/// `path` must be a NUL-terminated string; `rhs_path` may be null.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_read_mtx(
    path: *const c_char,
    rhs_path: *const c_char,
    seed: u64,
    out: *mut *mut SsProblem,
) -> SsStatus {
    guard(|| {
        let path = PathBuf::from(text(path, "path")?);
        let rhs = if rhs_path.is_null() {
            None
        } else {
            Some(PathBuf::from(text(rhs_path, "rhs_path")?))
        };
        emit(out, ProblemSource::MatrixMarket { path, rhs }.load(seed, None)?)
    })
}

/// Generates a test problem from a spec such as `gaussian:100x20`.
///
/// # Safety
/// `spec` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_generate(spec: *const c_char, seed: u64, out: *mut *mut SsProblem) -> SsStatus {
    guard(|| {
        let generator: GeneratorSpec = text(spec, "spec")?.parse()?;
        emit(out, ProblemSource::Generate { generator, seed: None }.load(seed, None)?)
    })
}

/// # Safety
/// `p` must come from one of the constructors, or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_rows(p: *const SsProblem) -> usize {
    p.as_ref().map_or(0, |h| h.inner.system.rows())
}

/// # Safety
/// `p` must come from one of the constructors, or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_cols(p: *const SsProblem) -> usize {
    p.as_ref().map_or(0, |h| h.inner.system.cols())
}

/// Copies the known solution into `x` (length `cols`). Fails with
/// `INVALID_ARGUMENT` when the problem carries none.
///
/// # Safety
/// `x` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_solution(p: *const SsProblem, x: *mut f64, len: usize) -> SsStatus {
    guard(|| {
        let inner = problem(p)?;
        let xs = inner.xstar.as_ref().ok_or_else(|| invalid("problem has no known solution"))?;
        write_out(xs, x, len)?;
        Ok(SsStatus::Ok)
    })
}

/// # Safety
/// `p` must come from one of the constructors and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_free(p: *mut SsProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn write_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len != values.len() {
        return Err(invalid(format!("output has length {len}, expected {}", values.len())));
    }
    if out.is_null() && len > 0 {
        return Err(invalid("output buffer is null"));
    }
    if len > 0 {
        ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    }
    Ok(())
}

/// Runs `method` (e.g. `"rk"`, `"cd-pd"`, `"gauss-ls"`) from `x = 0`.
/// The final iterate goes to `x` (length `cols`); `opts` and `info` may be null.
///
/// # Safety
/// `p` must be a live handle, `method` a NUL-terminated string and `x`
/// writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn ss_solve(
    p: *const SsProblem,
    method: *const c_char,
    opts: *const SsSolveOptions,
    x: *mut f64,
    len: usize,
    info: *mut SsSolveInfo,
) -> SsStatus {
    guard(|| {
        let inner = problem(p)?;
        let opts = opts.as_ref().copied().unwrap_or_else(|| ss_default_solve_options());
        let spec = method_spec(text(method, "method")?, opts.block_size)?;
        if len != inner.system.cols() {
            return Err(invalid(format!("output has length {len}, expected {}", inner.system.cols())));
        }
        let setup = setup_method(&spec, &inner.system, &OptConfig::default())?;
        let mut config = SolverConfig::new(spec.method, setup.geometry, setup.distribution);
        config.tolerance = opts.tolerance;
        config.max_iters = usize::try_from(opts.max_iters).unwrap_or(usize::MAX);
        config.max_seconds = opts.max_seconds;
        config.seed = opts.seed;
        let report = run_solver(&inner.system, inner.xstar.as_deref(), &config)?;
        write_out(&report.x, x, len)?;
        let converged = report.outcome == Outcome::Converged;
        if let Some(info) = info.as_mut() {
            *info = SsSolveInfo {
                iterations: report.iterations as u64,
                final_metric: report.final_metric,
                converged,
            };
        }
        if converged {
            Ok(SsStatus::Ok)
        } else {
            set_error(format!("stopped after {} iterations", report.iterations));
            Ok(SsStatus::BudgetExhausted)
        }
    })
}

/// Convergence rate of `method` on this problem. Gaussian methods need
/// `mc_samples > 0`.
///
/// # Safety
/// `p` must be a live handle, `method` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_rate(
    p: *const SsProblem,
    method: *const c_char,
    epsilon: f64,
    mc_samples: usize,
    seed: u64,
    out: *mut SsRate,
) -> SsStatus {
    guard(|| {
        let inner = problem(p)?;
        let spec = method_spec(text(method, "method")?, 0)?;
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let setup = setup_method(&spec, &inner.system, &OptConfig::default())?;
        let mc = (mc_samples > 0).then_some(McOptions {
            samples: mc_samples,
            seed,
        });
        let r = rate_report(&setup.distribution, inner.system.a(), &setup.geometry, epsilon, mc)?;
        *out = SsRate {
            rho: r.rho,
            rho_lower_bound: r.rho_lower_bound,
            rho_convenient: r.rho_convenient.unwrap_or(f64::NAN),
            iteration_complexity: r.iteration_complexity.unwrap_or(u64::MAX),
            ez_positive_definite: r.ez_pd,
        };
        Ok(SsStatus::Ok)
    })
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Stable name of a status code, e.g. `"INVALID_ARGUMENT"`; `"UNKNOWN"`
/// for values outside the enum.
#[no_mangle]
pub extern "C" fn ss_status_name(status: i32) -> *const c_char {
    let s: &'static [u8] = match status {
        0 => b"OK\0",
        1 => b"INVALID_ARGUMENT\0",
        2 => b"IO\0",
        3 => b"PARSE\0",
        4 => b"INCOMPATIBLE\0",
        5 => b"NUMERICAL\0",
        6 => b"BUDGET_EXHAUSTED\0",
        7 => b"PANIC\0",
        _ => b"UNKNOWN\0",
    };
    s.as_ptr().cast()
}
