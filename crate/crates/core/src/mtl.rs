//! Multi-task lasso.
//!
//! Regularized form: `min_V 1/(ND) ‖VΦ − Ψ‖²_F + λ Σₖ ‖vₖ‖₂`, solved by
//! monotone FISTA with the exact Lipschitz step.
//!
//! Constrained form: `min_V Σₖ ‖vₖ‖₂ s.t. VΦ = Ψ`, solved by ADMM on the
//! splitting `V = Z` where the V-step is the Euclidean projection onto the
//! affine feasible set and the Z-step is column-wise block soft thresholding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{frobenius_norm, matmul, matmul_nt, norm2, svd, Matrix};

/// Singular values below this fraction of the largest are treated as zero
/// when building projections and pseudo-inverses.
pub(crate) const RANK_RTOL: f64 = 1e-10;

const ADMM_RELAXATION: f64 = 1.6;
const ADMM_ADAPT_EVERY: usize = 10;
const ADMM_BALANCE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MtlProblem {
    pub phi: Matrix,
    pub psi: Matrix,
    pub lambda: f64,
}

impl MtlProblem {
    pub fn new(phi: Matrix, psi: Matrix, lambda: f64) -> Result<Self> {
        if phi.cols() != psi.cols() {
            return Err(Error::Shape(format!(
                "phi is {}x{}, psi is {}x{}",
                phi.rows(),
                phi.cols(),
                psi.rows(),
                psi.cols()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(Self { phi, psi, lambda })
    }

    /// Number of candidate columns K.
    pub fn width(&self) -> usize {
        self.phi.rows()
    }

    pub fn samples(&self) -> usize {
        self.phi.cols()
    }

    pub fn outputs(&self) -> usize {
        self.psi.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub accelerate: bool,
    pub support_eps: f64,
    pub feas_tol: f64,
    pub admm_rho: f64,
    /// The regularized solver only reports convergence once its KKT
    /// residual is also below this.
    pub kkt_tol: f64,
    /// Keep the per-iteration objective of the regularized solver.
    #[serde(skip)]
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-10,
            accelerate: true,
            support_eps: 1e-6,
            feas_tol: 1e-8,
            admm_rho: 1.0,
            kkt_tol: 1e-7,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("tol", self.tol),
            ("support_eps", self.support_eps),
            ("feas_tol", self.feas_tol),
            ("admm_rho", self.admm_rho),
            ("kkt_tol", self.kkt_tol),
        ];
        for (name, x) in reals {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {x}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub v: Matrix,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub support: Vec<usize>,
    pub converged: bool,
    /// Objective after every iteration, when requested.
    pub trace: Vec<f64>,
}

/// The JSON sidecar written next to a solution container.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub support: Vec<usize>,
    pub support_size: usize,
    pub converged: bool,
    pub feasibility_residual: f64,
    pub mode: &'static str,
    pub lambda: f64,
}

impl Solution {
    pub fn report(&self, problem: &MtlProblem, mode: KktMode) -> Result<SolutionReport> {
        let r = matmul(&self.v, &problem.phi)?.sub(&problem.psi)?;
        Ok(SolutionReport {
            objective: self.objective,
            iterations: self.iterations,
            kkt_residual: self.kkt_residual,
            support: self.support.clone(),
            support_size: self.support.len(),
            converged: self.converged,
            feasibility_residual: frobenius_norm(&r),
            mode: match mode {
                KktMode::Regularized => "regularized",
                KktMode::Constrained => "constrained",
            },
            lambda: problem.lambda,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktMode {
    Regularized,
    Constrained,
}

/// Proximal map of `τ‖·‖₂`.
pub fn block_soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    let n = norm2(v);
    if n <= tau {
        vec![0.0; v.len()]
    } else {
        let s = 1.0 - tau / n;
        v.iter().map(|x| x * s).collect()
    }
}

/// Columns whose norm exceeds `eps` times the largest column norm.
pub fn support(v: &Matrix, eps: f64) -> Vec<usize> {
    let norms = v.col_norms();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    (0..norms.len()).filter(|&k| norms[k] > eps * max).collect()
}

/// `Σₖ ‖vₖ‖₂`.
pub fn group_norm(v: &Matrix) -> f64 {
    v.col_norms().iter().sum()
}

fn col_threshold_in_place(v: &mut Matrix, tau: f64) {
    let (d, k) = v.shape();
    let data = v.data_mut();
    for c in 0..k {
        let n = (0..d).map(|r| data[r * k + c].powi(2)).sum::<f64>().sqrt();
        let s = if n <= tau { 0.0 } else { 1.0 - tau / n };
        for r in 0..d {
            data[r * k + c] *= s;
        }
    }
}

/// Smooth part of the regularized objective via Gram matrices,
/// `‖VΦ − Ψ‖² = tr(VAVᵀ) − 2 tr(VBᵀ) + c` with `A = ΦΦᵀ`, `B = ΨΦᵀ`.
struct Gram {
    a: Matrix,
    b: Matrix,
    c: f64,
    scale: f64,
}

impl Gram {
    fn new(p: &MtlProblem) -> Result<Self> {
        let nd = (p.samples() * p.outputs()) as f64;
        Ok(Self {
            a: matmul_nt(&p.phi, &p.phi)?,
            b: matmul_nt(&p.psi, &p.phi)?,
            c: p.psi.as_slice().iter().map(|x| x * x).sum(),
            scale: 1.0 / nd,
        })
    }

    /// Loss given `V` and the precomputed product `VA`.
    fn loss(&self, v: &Matrix, va: &Matrix) -> f64 {
        self.loss_with_noise(v, va).0
    }

    /// Loss and a bound on its rounding error; the expansion cancels badly
    /// once the residual is small against `‖Ψ‖`.
    fn loss_with_noise(&self, v: &Matrix, va: &Matrix) -> (f64, f64) {
        let quad = v.as_slice().iter().zip(va.as_slice()).map(|(x, y)| x * y).sum::<f64>();
        let lin = v
            .as_slice()
            .iter()
            .zip(self.b.as_slice())
            .map(|(x, y)| x * y)
            .sum::<f64>();
        let loss = (self.scale * (quad - 2.0 * lin + self.c)).max(0.0);
        let noise = 64.0 * f64::EPSILON * self.scale * (quad.abs() + 2.0 * lin.abs() + self.c);
        (loss, noise)
    }

    /// `(2/(ND))(VA − B)`.
    fn gradient(&self, va: &Matrix) -> Matrix {
        let s = 2.0 * self.scale;
        let data = va
            .as_slice()
            .iter()
            .zip(self.b.as_slice())
            .map(|(x, y)| s * (x - y))
            .collect();
        Matrix::from_vec_unchecked(va.rows(), va.cols(), data)
    }
}

fn combine(a: &Matrix, b: &Matrix, ca: f64, cb: f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| ca * x + cb * y)
        .collect();
    Matrix::from_vec_unchecked(a.rows(), a.cols(), data)
}

pub fn solve_regularized(problem: &MtlProblem, config: &SolverConfig) -> Result<Solution> {
    solve_regularized_from(problem, config, None)
}

/// [`solve_regularized`] started from `start` instead of zero. The iterates
/// are monotone, so the result never has a larger objective than `start`.
pub fn solve_regularized_from(problem: &MtlProblem, config: &SolverConfig, start: Option<&Matrix>) -> Result<Solution> {
    config.validate()?;
    let lambda = problem.lambda;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("regularized solve needs lambda > 0".into()));
    }
    let (d, k) = (problem.outputs(), problem.width());
    let gram = Gram::new(problem)?;
    let sigma_max = svd(&problem.phi)?.singular_values.first().copied().unwrap_or(0.0);
    let lipschitz = 2.0 * gram.scale * sigma_max * sigma_max;

    let mut x = match start {
        Some(v0) if v0.shape() != (d, k) => {
            return Err(Error::Shape(format!(
                "start is {}x{}, expected {d}x{k}",
                v0.rows(),
                v0.cols()
            )))
        }
        Some(v0) => v0.clone(),
        None => Matrix::zeros(d, k),
    };
    let mut xa = matmul(&x, &gram.a)?;
    let mut fx = gram.loss(&x, &xa);
    let mut trace = Vec::new();
    if lipschitz == 0.0 {
        // Φ = 0: the loss is constant and V = 0 is optimal.
        return finish_regularized(problem, x, 0, true, trace);
    }
    let step = 1.0 / lipschitz;
    let objective = |v: &Matrix, loss: f64| loss + lambda * group_norm(v);

    let prox_step = |y: &Matrix, ya: &Matrix| -> Matrix {
        let g = gram.gradient(ya);
        let mut z = combine(y, &g, 1.0, -step);
        col_threshold_in_place(&mut z, step * lambda);
        z
    };

    fx = objective(&x, fx);
    let mut y = x.clone();
    let mut ya = xa.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iters {
        iterations = it;
        let mut z = prox_step(&y, &ya);
        let mut za = matmul(&z, &gram.a)?;
        let (lz, noise) = gram.loss_with_noise(&z, &za);
        let mut fz = objective(&z, lz);
        if !fz.is_finite() {
            return Err(Error::Diverged(it));
        }
        let mut restarted = false;
        if fz > fx + noise {
            // Momentum overshot: restart from x with a plain proximal step.
            restarted = true;
            t = 1.0;
            z = prox_step(&x, &xa);
            za = matmul(&z, &gram.a)?;
            fz = objective(&z, gram.loss(&z, &za));
            if !fz.is_finite() {
                return Err(Error::Diverged(it));
            }
            if fz > fx + noise {
                // No representable progress left.
                if config.record_trace {
                    trace.push(fx);
                }
                converged = regularized_kkt(&gram, &x, &xa, lambda, config.support_eps) <= config.kkt_tol;
                break;
            }
        }
        let change = (fx - fz).abs();
        if config.accelerate && !restarted {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = combine(&z, &x, 1.0 + beta, -beta);
            ya = combine(&za, &xa, 1.0 + beta, -beta);
            t = t_next;
        } else {
            y = z.clone();
            ya = za.clone();
        }
        x = z;
        xa = za;
        fx = fz;
        if config.record_trace {
            trace.push(fx);
        }
        if change <= config.tol * fx.abs().max(f64::MIN_POSITIVE)
            && regularized_kkt(&gram, &x, &xa, lambda, config.support_eps) <= config.kkt_tol
        {
            converged = true;
            break;
        }
    }
    finish_regularized(problem, x, iterations, converged, trace)
}

fn finish_regularized(
    problem: &MtlProblem,
    v: Matrix,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Result<Solution> {
    let objective = regularized_objective(problem, &v)?;
    if !objective.is_finite() {
        return Err(Error::Diverged(iterations));
    }
    let kkt_residual = kkt_residual(problem, &v, KktMode::Regularized)?;
    let support = support(&v, SolverConfig::default().support_eps);
    Ok(Solution {
        v,
        objective,
        iterations,
        kkt_residual,
        support,
        converged,
        trace,
    })
}

/// `1/(ND) ‖VΦ − Ψ‖² + λ Σ ‖vₖ‖`, computed from the residual directly.
pub fn regularized_objective(problem: &MtlProblem, v: &Matrix) -> Result<f64> {
    let r = matmul(v, &problem.phi)?.sub(&problem.psi)?;
    let nd = (problem.samples() * problem.outputs()) as f64;
    let loss = r.as_slice().iter().map(|x| x * x).sum::<f64>() / nd;
    Ok(loss + problem.lambda * group_norm(v))
}

/// Affine projector onto `{V : VΦ = Ψ}` expressed as
/// `X ↦ X − (XQ)Qᵀ + V₀` with `Q` an orthonormal basis of `col(Φ)` and
/// `V₀ = ΨΦ⁺`.
pub(crate) struct AffineProjector {
    q: Matrix,
    v0: Matrix,
    /// `‖V₀Φ − Ψ‖_F`, zero for feasible instances.
    pub residual: f64,
}

impl AffineProjector {
    pub(crate) fn new(phi: &Matrix, psi: &Matrix) -> Result<Self> {
        let s = svd(phi)?;
        let smax = s.singular_values.first().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..s.singular_values.len())
            .filter(|&i| s.singular_values[i] > RANK_RTOL * smax && s.singular_values[i] > 0.0)
            .collect();
        let q = s.u.select_cols(&keep);
        // Ψ Φ⁺ = (Ψ Vᵣ Σᵣ⁻¹) Uᵣᵀ.
        let vr = s.vt.select_rows(&keep);
        let mut w = matmul_nt(psi, &vr)?;
        for (j, &i) in keep.iter().enumerate() {
            let inv = 1.0 / s.singular_values[i];
            for r in 0..w.rows() {
                w.set(r, j, w.get(r, j) * inv);
            }
        }
        let v0 = matmul_nt(&w, &q)?;
        let residual = frobenius_norm(&matmul(&v0, phi)?.sub(psi)?);
        Ok(Self { q, v0, residual })
    }

    pub(crate) fn min_norm_solution(&self) -> &Matrix {
        &self.v0
    }

    pub(crate) fn project(&self, x: &Matrix) -> Matrix {
        if self.q.cols() == 0 {
            return self.v0.clone();
        }
        let xq = matmul(x, &self.q).expect("conforming shapes");
        let back = matmul_nt(&xq, &self.q).expect("conforming shapes");
        let data = x
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .zip(self.v0.as_slice())
            .map(|((a, b), c)| a - b + c)
            .collect();
        Matrix::from_vec_unchecked(x.rows(), x.cols(), data)
    }
}

/// Projects every column of `v` onto `col(psi)`. Feasibility `VΦ = Ψ` is
/// preserved and no column norm grows.
pub(crate) fn project_onto_col_space(v: &Matrix, psi: &Matrix) -> Result<Matrix> {
    let s = svd(psi)?;
    let smax = s.singular_values.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..s.singular_values.len())
        .filter(|&i| s.singular_values[i] > RANK_RTOL * smax && s.singular_values[i] > 0.0)
        .collect();
    let u = s.u.select_cols(&keep);
    let coeff = crate::tensor::matmul_tn(&u, v)?;
    matmul(&u, &coeff)
}

fn restrict_support(v: &Matrix) -> Vec<usize> {
    let norms = v.col_norms();
    (0..norms.len()).filter(|&k| norms[k] > 0.0).collect()
}

pub fn solve_constrained(problem: &MtlProblem, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    let (d, k) = (problem.outputs(), problem.width());
    let psi_norm = frobenius_norm(&problem.psi);
    let feas_bound = config.feas_tol * psi_norm.max(1.0);
    if psi_norm == 0.0 {
        return finish_constrained(problem, Matrix::zeros(d, k), 0);
    }
    let phi_scale = svd(&problem.phi)?.singular_values.first().copied().unwrap_or(0.0);
    if phi_scale == 0.0 {
        return Err(Error::Infeasible("phi is zero but psi is not".into()));
    }
    // Work on the unit-scale problem Φ̂ = Φ/a, Ψ̂ = Ψ/b; then V = V̂ b/a.
    let phi = problem.phi.scale(1.0 / phi_scale);
    let psi = problem.psi.scale(1.0 / psi_norm);
    let proj = AffineProjector::new(&phi, &psi)?;
    if proj.residual > config.feas_tol {
        return Err(Error::Infeasible(format!(
            "row space of psi is not contained in the row space of phi (relative residual {:.3e})",
            proj.residual
        )));
    }

    let mut z = Matrix::zeros(d, k);
    let mut u = Matrix::zeros(d, k);
    let mut rho = config.admm_rho;
    let mut v = proj.min_norm_solution().clone();
    let mut converged = false;
    let mut iterations = 0;
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut adapt_every = ADMM_ADAPT_EVERY;
    let mut next_adapt = adapt_every;
    for it in 1..=config.max_iters {
        iterations = it;
        v = proj.project(&combine(&z, &u, 1.0, -1.0));
        let vh = combine(&v, &z, ADMM_RELAXATION, 1.0 - ADMM_RELAXATION);
        let z_old = std::mem::replace(&mut z, combine(&vh, &u, 1.0, 1.0));
        col_threshold_in_place(&mut z, 1.0 / rho);
        let mut diff_sq = 0.0;
        let mut dz_sq = 0.0;
        {
            let ud = u.data_mut();
            for i in 0..ud.len() {
                let zi = z.as_slice()[i];
                ud[i] += vh.as_slice()[i] - zi;
                diff_sq += (v.as_slice()[i] - zi).powi(2);
                dz_sq += (zi - z_old.as_slice()[i]).powi(2);
            }
        }
        r_norm = diff_sq.sqrt();
        s_norm = rho * dz_sq.sqrt();
        if !(r_norm.is_finite() && s_norm.is_finite()) {
            return Err(Error::Diverged(it));
        }
        let eps_pri = config.feas_tol * frobenius_norm(&v).max(frobenius_norm(&z)).max(1e-300);
        let eps_dual = config.feas_tol * (rho * frobenius_norm(&u)).max(1e-300);
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }
        if it == next_adapt {
            let ratio = (r_norm / eps_pri) / (s_norm / eps_dual).max(f64::MIN_POSITIVE);
            let factor = if ratio > ADMM_BALANCE {
                2.0
            } else if ratio < 1.0 / ADMM_BALANCE {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u = u.scale(1.0 / factor);
                // Each change waits longer, so rho eventually settles.
                adapt_every += adapt_every / 2;
            }
            next_adapt = it + adapt_every;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            detail: format!("primal residual {r_norm:.3e}, dual residual {s_norm:.3e}"),
        });
    }

    let polished = polish(&phi, &psi, &z, config.feas_tol)?.unwrap_or(v);
    let polished = project_onto_col_space(&polished, &psi)?;
    let out = polished.scale(psi_norm / phi_scale);
    let residual = frobenius_norm(&matmul(&out, &problem.phi)?.sub(&problem.psi)?);
    if residual > feas_bound {
        return Err(Error::NoConvergence {
            iterations,
            detail: format!("feasibility residual {residual:.3e} exceeds {feas_bound:.3e}"),
        });
    }
    finish_constrained(problem, out, iterations)
}

/// Projects the sparse iterate onto the feasible set restricted to its own
/// support, when that restricted set is nonempty.
fn polish(phi: &Matrix, psi: &Matrix, z: &Matrix, feas_tol: f64) -> Result<Option<Matrix>> {
    let t = restrict_support(z);
    if t.is_empty() {
        return Ok(None);
    }
    let phi_t = phi.select_rows(&t);
    let proj = AffineProjector::new(&phi_t, psi)?;
    if proj.residual > feas_tol * 0.1 {
        return Ok(None);
    }
    let vt = proj.project(&z.select_cols(&t));
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for (j, &c) in t.iter().enumerate() {
        out.set_col(c, &vt.col(j));
    }
    Ok(Some(out))
}

fn finish_constrained(problem: &MtlProblem, v: Matrix, iterations: usize) -> Result<Solution> {
    let objective = group_norm(&v);
    let kkt_residual = kkt_residual(problem, &v, KktMode::Constrained)?;
    let support = support(&v, SolverConfig::default().support_eps);
    Ok(Solution {
        v,
        objective,
        iterations,
        kkt_residual,
        support,
        converged: true,
        trace: Vec::new(),
    })
}

/// Columns at or below `support_eps` of the largest column count as zero,
/// matching [`support`].
fn regularized_kkt(gram: &Gram, v: &Matrix, va: &Matrix, lambda: f64, support_eps: f64) -> f64 {
    let g = gram.gradient(va);
    let (d, k) = v.shape();
    let norms = v.col_norms();
    let cut = support_eps * norms.iter().cloned().fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for c in 0..k {
        let vn = norms[c];
        let r = if vn <= cut {
            ((0..d).map(|r| g.get(r, c).powi(2)).sum::<f64>().sqrt() - lambda).max(0.0)
        } else {
            (0..d)
                .map(|r| (g.get(r, c) + lambda * v.get(r, c) / vn).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        worst = worst.max(r);
    }
    worst / lambda
}

/// Optimality residual.
///
/// Regularized mode checks the subgradient conditions of the penalized
/// objective, scaled by `1/λ`. Constrained mode fits a multiplier `Λ` (D×N)
/// by least squares to `Λφₖ = vₖ/‖vₖ‖` over active columns and reports the
/// larger of the alignment error and the dual violation `(‖Λφₖ‖ − 1)₊` over
/// inactive columns.
pub fn kkt_residual(problem: &MtlProblem, v: &Matrix, mode: KktMode) -> Result<f64> {
    let (d, k) = (problem.outputs(), problem.width());
    if v.shape() != (d, k) {
        return Err(Error::Shape(format!(
            "v is {}x{}, expected {d}x{k}",
            v.rows(),
            v.cols()
        )));
    }
    let norms = v.col_norms();
    match mode {
        KktMode::Regularized => {
            let lambda = problem.lambda;
            if !(lambda > 0.0) {
                return Err(Error::InvalidArgument("regularized KKT needs lambda > 0".into()));
            }
            let gram = Gram::new(problem)?;
            let va = matmul(v, &gram.a)?;
            Ok(regularized_kkt(
                &gram,
                v,
                &va,
                lambda,
                SolverConfig::default().support_eps,
            ))
        }
        KktMode::Constrained => {
            let active: Vec<usize> = (0..k).filter(|&c| norms[c] > 0.0).collect();
            if active.is_empty() {
                return Ok(0.0);
            }
            // Λ Φ_Tᵀ = U_T  ⇒  Λ = U_T (Φ_Tᵀ)⁺ = U_T (Φ_T⁺)ᵀ.
            let phi_t = problem.phi.select_rows(&active);
            let u_t = Matrix::from_fn(d, active.len(), |r, j| v.get(r, active[j]) / norms[active[j]]);
            let pinv_t = crate::tensor::pinv(&phi_t, crate::tensor::Threshold::Relative(RANK_RTOL))?;
            let lam = matmul_nt(&u_t, &pinv_t)?;
            let lam_phi = matmul_nt(&lam, &problem.phi)?;
            let mut worst = 0.0f64;
            for c in 0..k {
                let lc = lam_phi.col(c);
                let r = if norms[c] > 0.0 {
                    let e: Vec<f64> = lc.iter().enumerate().map(|(r, x)| x - v.get(r, c) / norms[c]).collect();
                    norm2(&e)
                } else {
                    (norm2(&lc) - 1.0).max(0.0)
                };
                worst = worst.max(r);
            }
            Ok(worst)
        }
    }
}
