//! C ABI over the vvnet solvers.
//!
//! Every function returns a [`VvStatus`]; results come back through out
//! pointers. Objects are opaque handles released with their `_free`
//! function. After a non-`Ok` status, [`vv_last_error`] describes the failure
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vvnet::caratheodory::{reduce, ReduceConfig};
use vvnet::container::{read_container, write_container, Tensor, TensorContainer};
use vvnet::mtl::{solve_constrained, solve_regularized, MtlProblem, Solution, SolverConfig};
use vvnet::tensor::numerical_rank;
use vvnet::{Error, Matrix, Threshold};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NonFinite = 4,
    NoConvergence = 5,
    Infeasible = 6,
    BoundViolation = 7,
    Format = 8,
    Io = 9,
    Panic = 10,
}

/// Dense row-major matrix of doubles.
pub struct VvMatrix(Matrix);

/// Output of a multi-task lasso solve.
pub struct VvSolution(Solution);

/// A tensor container read from disk.
pub struct VvContainer(TensorContainer);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> VvStatus {
    match e {
        Error::Shape(_) => VvStatus::Shape,
        Error::NonFinite(_) => VvStatus::NonFinite,
        Error::InvalidArgument(_) | Error::GuardExceeded(_) => VvStatus::InvalidArgument,
        Error::SvdNoConvergence(_) | Error::NoConvergence { .. } | Error::Diverged(_) => VvStatus::NoConvergence,
        Error::Infeasible(_) => VvStatus::Infeasible,
        Error::ReductionStalled { .. } | Error::BoundViolation(_) => VvStatus::BoundViolation,
        Error::Format(_) => VvStatus::Format,
        Error::Io { .. } => VvStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (VvStatus, String)>) -> VvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            VvStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VvStatus::Panic
        }
    }
}

fn lib<T>(r: vvnet::Result<T>) -> Result<T, (VvStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (VvStatus, String) {
    (VvStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (VvStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VvStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (VvStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (VvStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failure on this thread; empty after a success. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut VvMatrix,
) -> VvStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| (VvStatus::InvalidArgument, "matrix size overflows".to_string()))?;
        let values = if len == 0 {
            Vec::new()
        } else {
            if data.is_null() {
                return Err(null("data"));
            }
            std::slice::from_raw_parts(data, len).to_vec()
        };
        let m = lib(Matrix::from_vec(rows, cols, values))?;
        put(out, VvMatrix(m))
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vv_matrix_free(m: *mut VvMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_matrix_shape(m: *const VvMatrix, rows: *mut usize, cols: *mut usize) -> VvStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        if rows.is_null() || cols.is_null() {
            return Err(null("output pointer"));
        }
        *rows = m.0.rows();
        *cols = m.0.cols();
        Ok(())
    })
}

/// Copies the row-major values into `buf`, which must hold `len` doubles
/// with `len` equal to rows × cols.
///
/// # Safety
/// `m` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vv_matrix_copy(m: *const VvMatrix, buf: *mut f64, len: usize) -> VvStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        let src = m.0.as_slice();
        if len != src.len() {
            return Err((
                VvStatus::Shape,
                format!("buffer holds {len} values, matrix has {}", src.len()),
            ));
        }
        if len > 0 {
            if buf.is_null() {
                return Err(null("buffer"));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
        }
        Ok(())
    })
}

unsafe fn problem(phi: *const VvMatrix, psi: *const VvMatrix, lambda: f64) -> Result<MtlProblem, (VvStatus, String)> {
    let phi = as_ref(phi, "phi")?;
    let psi = as_ref(psi, "psi")?;
    lib(MtlProblem::new(phi.0.clone(), psi.0.clone(), lambda))
}

/// Solves `min 1/(ND)‖VΦ − Ψ‖² + λ Σ‖vₖ‖` with default settings.
///
/// # Safety
/// `phi` and `psi` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_solve_regularized(
    phi: *const VvMatrix,
    psi: *const VvMatrix,
    lambda: f64,
    out: *mut *mut VvSolution,
) -> VvStatus {
    guard(|| {
        let p = problem(phi, psi, lambda)?;
        let sol = lib(solve_regularized(&p, &SolverConfig::default()))?;
        put(out, VvSolution(sol))
    })
}

/// Solves `min Σ‖vₖ‖ s.t. VΦ = Ψ` with default settings.
///
/// # Safety
/// `phi` and `psi` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_solve_constrained(
    phi: *const VvMatrix,
    psi: *const VvMatrix,
    out: *mut *mut VvSolution,
) -> VvStatus {
    guard(|| {
        let p = problem(phi, psi, 0.0)?;
        let sol = lib(solve_constrained(&p, &SolverConfig::default()))?;
        put(out, VvSolution(sol))
    })
}

/// Scalar summary of a solution.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VvSolutionInfo {
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub support_size: usize,
    pub converged: bool,
}

/// # Safety
/// `sol` must be a live handle; `info` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_solution_info(sol: *const VvSolution, info: *mut VvSolutionInfo) -> VvStatus {
    guard(|| {
        let s = &as_ref(sol, "solution")?.0;
        if info.is_null() {
            return Err(null("info"));
        }
        *info = VvSolutionInfo {
            objective: s.objective,
            kkt_residual: s.kkt_residual,
            iterations: s.iterations,
            support_size: s.support.len(),
            converged: s.converged,
        };
        Ok(())
    })
}

/// Copies the solution's `V` into a new matrix handle.
///
/// # Safety
/// `sol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_solution_v(sol: *const VvSolution, out: *mut *mut VvMatrix) -> VvStatus {
    guard(|| {
        let s = as_ref(sol, "solution")?;
        put(out, VvMatrix(s.0.v.clone()))
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vv_solution_free(s: *mut VvSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Reduces the support of a feasible `v`; the result has at most
/// `r_Φ r_Ψ` nonzero columns.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_reduce(
    phi: *const VvMatrix,
    psi: *const VvMatrix,
    v: *const VvMatrix,
    out: *mut *mut VvMatrix,
) -> VvStatus {
    guard(|| {
        let (phi, psi, v) = (as_ref(phi, "phi")?, as_ref(psi, "psi")?, as_ref(v, "v")?);
        let (reduced, _) = lib(reduce(&phi.0, &psi.0, &v.0, &ReduceConfig::default()))?;
        put(out, VvMatrix(reduced))
    })
}

/// Counts singular values above `threshold`, taken relative to the largest
/// one when `relative` is true.
///
/// # Safety
/// `m` must be a live handle; `rank` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_numerical_rank(
    m: *const VvMatrix,
    threshold: f64,
    relative: bool,
    rank: *mut usize,
) -> VvStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        if rank.is_null() {
            return Err(null("rank"));
        }
        let t = if relative {
            Threshold::Relative(threshold)
        } else {
            Threshold::Absolute(threshold)
        };
        *rank = lib(numerical_rank(&m.0, t))?.rank;
        Ok(())
    })
}

/// Reads `<path>.manifest.json` and `<path>.bin`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vv_container_read(path: *const c_char, out: *mut *mut VvContainer) -> VvStatus {
    guard(|| {
        let path = as_str(path, "path")?;
        let c = lib(read_container(Path::new(path)))?;
        put(out, VvContainer(c))
    })
}

/// Extracts a rank-2 (or lower) tensor as a matrix.
///
/// # Safety
/// `c` must be a live handle, `name` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn vv_container_matrix(
    c: *const VvContainer,
    name: *const c_char,
    out: *mut *mut VvMatrix,
) -> VvStatus {
    guard(|| {
        let c = as_ref(c, "container")?;
        let name = as_str(name, "name")?;
        let m = lib(c.0.matrix(name))?;
        put(out, VvMatrix(m))
    })
}

/// # Safety
/// `c` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vv_container_free(c: *mut VvContainer) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Writes a single-matrix container at `path`.
///
/// # Safety
/// `path` and `name` must be NUL-terminated strings; `m` a live handle.
#[no_mangle]
pub unsafe extern "C" fn vv_container_write_matrix(
    path: *const c_char,
    name: *const c_char,
    m: *const VvMatrix,
) -> VvStatus {
    guard(|| {
        let path = as_str(path, "path")?;
        let name = as_str(name, "name")?;
        let m = as_ref(m, "matrix")?;
        lib(write_container(Path::new(path), &[Tensor::from_matrix(name, &m.0)]))
    })
}
