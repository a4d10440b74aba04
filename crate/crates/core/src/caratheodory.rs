//! Support reduction for feasible multi-task lasso solutions, plus the
//! width-bound and general-position checks.
//!
//! A feasible `V` writes `Ψ = Σₖ αₖ M̃ₖ` with `αₖ = ‖vₖ‖/γ`, `γ = Σ‖vₖ‖` and
//! `M̃ₖ = (γ/‖vₖ‖) vₖφₖᵀ`. Every `M̃ₖ` lies in `col(Ψ) ⊗ row(Φ)`, a space of
//! dimension `r_Φ r_Ψ`, so a null combination of the active terms exists
//! while the support exceeds that bound. Moving `α` along it until one
//! coefficient vanishes keeps `Ψ` fixed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mtl::{group_norm, project_onto_col_space};
use crate::rng::CounterRng;
use crate::tensor::{frobenius_norm, matmul, numerical_rank, svd, Matrix, Threshold};

/// Relative rank threshold used for `r_Φ`, `r_Ψ` inside [`reduce`].
pub const REDUCE_RANK_RTOL: f64 = 1e-3;
/// A singular value at or below this fraction of the largest marks a null
/// direction.
pub const NULL_RTOL: f64 = 1e-10;
/// Relative threshold for the rank test of row subsets.
pub const GENERAL_POSITION_RTOL: f64 = 1e-9;
/// Largest number of subsets the exhaustive general-position check visits.
pub const GENERAL_POSITION_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Elimination {
    pub column: usize,
    pub null_inf_norm: f64,
    /// Whether the null vector also satisfied the sum-to-zero row. When it
    /// did not, the step only lowers the objective.
    pub affine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionTrace {
    pub initial_support: usize,
    pub final_support: usize,
    pub r_phi: usize,
    pub r_psi: usize,
    pub bound: usize,
    pub eliminations: Vec<Elimination>,
    pub objective_before: f64,
    pub objective_after: f64,
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceConfig {
    /// Feasibility tolerance, relative to `max(1, ‖Ψ‖_F)`.
    pub tol: f64,
    pub rank_threshold: Threshold,
    pub null_rtol: f64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            rank_threshold: Threshold::Relative(REDUCE_RANK_RTOL),
            null_rtol: NULL_RTOL,
        }
    }
}

fn feasibility(phi: &Matrix, psi: &Matrix, v: &Matrix) -> Result<f64> {
    Ok(frobenius_norm(&matmul(v, phi)?.sub(psi)?))
}

/// Null vector of `m` if its smallest singular value is negligible.
fn null_vector(m: &Matrix, rtol: f64) -> Result<(Option<Vec<f64>>, f64)> {
    let cols = m.cols();
    // The thin SVD of a wide matrix has fewer right singular vectors than
    // columns; pad with zero rows so the full right basis is available.
    let padded = if m.rows() < cols {
        m.stack_rows(&Matrix::zeros(cols - m.rows(), cols))?
    } else {
        m.clone()
    };
    let s = svd(&padded)?;
    let smax = s.singular_values.first().copied().unwrap_or(0.0);
    let smin = s.singular_values.last().copied().unwrap_or(0.0);
    if smin <= rtol * smax {
        Ok((Some(s.vt.row(cols - 1).to_vec()), smin))
    } else {
        Ok((None, smin))
    }
}

/// Reduces the support of a feasible `v` to at most `r_Φ r_Ψ` columns
/// without changing `VΦ` and without raising `Σ‖vₖ‖`.
pub fn reduce(phi: &Matrix, psi: &Matrix, v: &Matrix, config: &ReduceConfig) -> Result<(Matrix, ReductionTrace)> {
    let (d, k) = v.shape();
    if phi.rows() != k || psi.rows() != d || phi.cols() != psi.cols() {
        return Err(Error::Shape(format!(
            "phi {:?}, psi {:?}, v {:?}",
            phi.shape(),
            psi.shape(),
            v.shape()
        )));
    }
    let scale = frobenius_norm(psi).max(1.0);
    let residual_in = feasibility(phi, psi, v)?;
    if residual_in > config.tol * scale {
        return Err(Error::Infeasible(format!(
            "input residual {residual_in:.3e} exceeds {:.3e}",
            config.tol * scale
        )));
    }
    let r_phi = numerical_rank(phi, config.rank_threshold)?.rank;
    let r_psi = numerical_rank(psi, config.rank_threshold)?.rank;
    let bound = r_phi * r_psi;
    let objective_before = group_norm(v);
    let initial: Vec<usize> = (0..k).filter(|&c| v.col(c).iter().any(|&x| x != 0.0)).collect();

    let mut trace = ReductionTrace {
        initial_support: initial.len(),
        final_support: initial.len(),
        r_phi,
        r_psi,
        bound,
        eliminations: Vec::new(),
        objective_before,
        objective_after: objective_before,
        feasibility_residual: residual_in,
    };
    if initial.len() <= bound {
        return Ok((v.clone(), trace));
    }

    // Columns outside col(Ψ) only add cost; dropping those components keeps
    // VΦ = Ψ and makes the dimension count exact.
    let v = project_onto_col_space(v, psi)?;
    let norms = v.col_norms();
    let gamma = group_norm(&v);
    let mut active: Vec<usize> = initial.iter().copied().filter(|&c| norms[c] > 0.0).collect();
    let mut alpha: Vec<f64> = active.iter().map(|&c| norms[c] / gamma).collect();
    let dirs: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            if norms[c] > 0.0 {
                v.col(c).iter().map(|x| x / norms[c]).collect()
            } else {
                vec![0.0; d]
            }
        })
        .collect();
    let n = phi.cols();
    // vec(M̃ₖ) = γ ûₖ ⊗ φₖ; the ones row is scaled to the same magnitude.
    let term = |c: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(d * n);
        for i in 0..d {
            for j in 0..n {
                out.push(gamma * dirs[c][i] * phi.get(c, j));
            }
        }
        out
    };
    let ones_scale = frobenius_norm(psi);

    while active.len() > bound {
        let m = active.len();
        let terms: Vec<Vec<f64>> = active.iter().map(|&c| term(c)).collect();
        let linear = Matrix::from_fn(d * n, m, |r, j| terms[j][r]);
        let stacked = linear.stack_rows(&Matrix::from_fn(1, m, |_, _| ones_scale))?;
        let (mut c, smin) = null_vector(&stacked, config.null_rtol)?;
        let mut affine = true;
        if c.is_none() {
            // Inexact optimality leaves the affine row slightly independent;
            // a purely linear null direction still exists and, oriented so
            // its entries sum to a nonnegative value, never raises Σα.
            affine = false;
            c = null_vector(&linear, config.null_rtol)?.0;
        }
        let Some(mut c) = c else {
            return Err(Error::ReductionStalled {
                support: m,
                bound,
                sigma_min: smin,
            });
        };
        let sum: f64 = c.iter().sum();
        let flip = if affine {
            c.iter().cloned().fold(0.0, f64::max) <= 0.0
        } else {
            sum < 0.0 || (sum == 0.0 && c.iter().cloned().fold(0.0, f64::max) <= 0.0)
        };
        if flip {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        let t = (0..m)
            .filter(|&j| c[j] > 0.0)
            .map(|j| alpha[j] / c[j])
            .fold(f64::INFINITY, f64::min);
        if !t.is_finite() {
            return Err(Error::ReductionStalled {
                support: m,
                bound,
                sigma_min: smin,
            });
        }
        let inf_norm = c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut keep_active = Vec::with_capacity(m);
        let mut keep_alpha = Vec::with_capacity(m);
        for j in 0..m {
            let a = alpha[j] - t * c[j];
            let hits = c[j] > 0.0 && alpha[j] / c[j] - t <= 1e-12 * t.max(f64::MIN_POSITIVE);
            if hits || a <= 0.0 {
                trace.eliminations.push(Elimination {
                    column: active[j],
                    null_inf_norm: inf_norm,
                    affine,
                });
            } else {
                keep_active.push(active[j]);
                keep_alpha.push(a);
            }
        }
        debug_assert!(keep_active.len() < m);
        active = keep_active;
        alpha = keep_alpha;
    }

    let mut out = Matrix::zeros(d, k);
    for (j, &c) in active.iter().enumerate() {
        let col: Vec<f64> = dirs[c].iter().map(|x| alpha[j] * gamma * x).collect();
        out.set_col(c, &col);
    }
    trace.final_support = active.len();
    trace.objective_after = group_norm(&out);
    trace.feasibility_residual = feasibility(phi, psi, &out)?;
    Ok((out, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub support: usize,
    pub lower: usize,
    pub upper: usize,
    pub general_position: bool,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub within: bool,
}

/// Compares a (reduced) solution's support against `[r_Φ, r_Φ r_Ψ]`. The
/// lower bound only applies under general position.
pub fn check_bounds(v: &Matrix, r_phi: usize, r_psi: usize, general_position: bool, support_eps: f64) -> BoundsReport {
    let support = crate::mtl::support(v, support_eps).len();
    let upper = r_phi * r_psi;
    let lower_ok = !general_position || support >= r_phi;
    let upper_ok = support <= upper;
    BoundsReport {
        support,
        lower: r_phi,
        upper,
        general_position,
        lower_ok,
        upper_ok,
        within: lower_ok && upper_ok,
    }
}

/// `rank([V Ψ]) = rank(Ψ) = rank(V)`.
pub fn column_space_check(v: &Matrix, psi: &Matrix, threshold: Threshold) -> Result<bool> {
    if v.rows() != psi.rows() {
        return Err(Error::Shape(format!("v has {} rows, psi has {}", v.rows(), psi.rows())));
    }
    let both = v.stack_cols(psi)?;
    let r_both = numerical_rank(&both, threshold)?.rank;
    let r_psi = numerical_rank(psi, threshold)?.rank;
    let r_v = numerical_rank(v, threshold)?.rank;
    Ok(r_both == r_psi && r_psi == r_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneralPositionMode {
    Exhaustive,
    Sampled { trials: usize, seed: u64 },
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

fn subset_full_rank(phi: &Matrix, rows: &[usize]) -> Result<bool> {
    let s = svd(&phi.select_rows(rows))?.singular_values;
    let smax = s.first().copied().unwrap_or(0.0);
    Ok(s.len() == rows.len() && s.iter().all(|&x| x > GENERAL_POSITION_RTOL * smax && x > 0.0))
}

/// Whether every `r`-subset of the rows of `phi` has rank `r`.
pub fn general_position_check(phi: &Matrix, r: usize, mode: GeneralPositionMode) -> Result<bool> {
    let k = phi.rows();
    if r > k {
        return Err(Error::InvalidArgument(format!("r = {r} exceeds the {k} rows")));
    }
    if r == 0 {
        return Ok(true);
    }
    if r > phi.cols() {
        return Ok(false);
    }
    match mode {
        GeneralPositionMode::Exhaustive => {
            let count = binomial(k, r);
            if count > GENERAL_POSITION_GUARD {
                return Err(Error::GuardExceeded(format!(
                    "C({k},{r}) = {count} subsets exceeds {GENERAL_POSITION_GUARD}"
                )));
            }
            let mut idx: Vec<usize> = (0..r).collect();
            loop {
                if !subset_full_rank(phi, &idx)? {
                    return Ok(false);
                }
                // Next combination in lexicographic order.
                let mut i = r;
                while i > 0 && idx[i - 1] == k - r + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    return Ok(true);
                }
                idx[i - 1] += 1;
                for j in i..r {
                    idx[j] = idx[j - 1] + 1;
                }
            }
        }
        GeneralPositionMode::Sampled { trials, seed } => {
            let mut rng = CounterRng::stream(seed, "general_position", 0);
            for _ in 0..trials {
                if !subset_full_rank(phi, &rng.subset(k, r))? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}
