//! Ground truth for small instances and randomized support-size experiments.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::caratheodory::{general_position_check, reduce, GeneralPositionMode, ReduceConfig};
use crate::error::{Error, Result};
use crate::mtl::{self, group_norm, solve_constrained, AffineProjector, MtlProblem, SolverConfig};
use crate::rng::{stream_key, CounterRng};
use crate::tensor::{frobenius_norm, matmul, numerical_rank, svd, Matrix, Threshold};

/// Largest K the exhaustive search accepts by default.
pub const K_MAX_GUARD: usize = 14;
/// Supports within this relative gap of the optimum count as optimal.
pub const OPTIMALITY_RTOL: f64 = 1e-5;
/// Relative singular-value cut for synthetic instance ranks.
pub const INSTANCE_RANK_RTOL: f64 = 1e-9;
const MAX_REDRAWS: u64 = 10;
/// Experiments fail outright when more than this fraction of trials fail.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceSpec {
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub rank_phi: usize,
    pub rank_psi: usize,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::InvalidArgument("D, N and K must be positive".into()));
        }
        if self.rank_phi == 0 || self.rank_phi > self.k.min(self.n) {
            return Err(Error::InvalidArgument(format!(
                "rank_phi = {} must lie in [1, min(K, N) = {}]",
                self.rank_phi,
                self.k.min(self.n)
            )));
        }
        if self.rank_psi == 0 || self.rank_psi > self.d.min(self.n) {
            return Err(Error::InvalidArgument(format!(
                "rank_psi = {} must lie in [1, min(D, N) = {}]",
                self.rank_psi,
                self.d.min(self.n)
            )));
        }
        Ok(())
    }

    /// Rank Ψ keeps after its rows are projected onto `row(Φ)`.
    pub fn expected_rank_psi(&self) -> usize {
        self.rank_psi.min(self.rank_phi)
    }

    /// The same shape and ranks under the seed owned by trial `t`.
    pub fn for_trial(&self, t: u64) -> Self {
        Self {
            seed: stream_key(self.seed, "trial", t),
            ..*self
        }
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut CounterRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

fn rank_rel(a: &Matrix) -> Result<usize> {
    Ok(numerical_rank(a, Threshold::Relative(INSTANCE_RANK_RTOL))?.rank)
}

/// `Φ = B C` and `Ψ = B' C' P`, where `P` projects onto `row(Φ)`. The
/// factors are drawn from the `phi.*` and `psi.*` streams of the spec seed;
/// a rank-deficient draw is retried under the next stream index.
pub fn random_instance(spec: &InstanceSpec) -> Result<(Matrix, Matrix)> {
    spec.validate()?;
    let want_psi = spec.expected_rank_psi();
    for attempt in 0..MAX_REDRAWS {
        let mut rng = CounterRng::stream(spec.seed, "phi.B", attempt);
        let b = gaussian(spec.k, spec.rank_phi, &mut rng);
        let mut rng = CounterRng::stream(spec.seed, "phi.C", attempt);
        let c = gaussian(spec.rank_phi, spec.n, &mut rng);
        let phi = matmul(&b, &c)?;
        if rank_rel(&phi)? != spec.rank_phi {
            continue;
        }
        let mut rng = CounterRng::stream(spec.seed, "psi.B", attempt);
        let b2 = gaussian(spec.d, spec.rank_psi, &mut rng);
        let mut rng = CounterRng::stream(spec.seed, "psi.C", attempt);
        let c2 = gaussian(spec.rank_psi, spec.n, &mut rng);
        let raw = matmul(&b2, &c2)?;
        // Rows of C span row(Φ) because B has full column rank.
        let basis = crate::tensor::row_space_basis(&c, Threshold::Relative(INSTANCE_RANK_RTOL))?;
        let coeff = crate::tensor::matmul_nt(&raw, &basis)?;
        let psi = matmul(&coeff, &basis)?;
        if rank_rel(&psi)? != want_psi {
            continue;
        }
        if !crate::tensor::row_space_contained(&psi, &phi, Threshold::Relative(INSTANCE_RANK_RTOL))? {
            continue;
        }
        return Ok((phi, psi));
    }
    Err(Error::InvalidArgument(format!(
        "rank collapse persisted after {MAX_REDRAWS} redraws"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub optimal_objective: f64,
    pub min_support_size: usize,
    pub optimal_supports: Vec<Vec<usize>>,
    pub evaluated_patterns: usize,
    pub feasible_patterns: usize,
    pub failed_patterns: Vec<Vec<usize>>,
    /// Optimal `V` on the first smallest optimal support.
    #[serde(skip)]
    pub solution: Matrix,
}

/// Optimal value of `min Σ‖vₖ‖ s.t. V_S Φ_S = Ψ` on one support.
fn restricted_value(phi: &Matrix, psi: &Matrix, s: &[usize], config: &SolverConfig) -> Result<Option<(f64, Matrix)>> {
    if s.is_empty() {
        return Ok(if psi.is_zero() {
            Some((0.0, Matrix::zeros(psi.rows(), 0)))
        } else {
            None
        });
    }
    let phi_s = phi.select_rows(s);
    let stacked = phi_s.stack_rows(psi)?;
    let sv = svd(&stacked)?.singular_values;
    let t = INSTANCE_RANK_RTOL * sv.first().copied().unwrap_or(0.0);
    let rank_stacked = sv.iter().filter(|&&x| x > t).count();
    let own = svd(&phi_s)?.singular_values;
    let rank_s = own.iter().filter(|&&x| x > t).count();
    if rank_stacked != rank_s {
        return Ok(None);
    }
    if rank_s == s.len() {
        // Full row rank: the restricted constraint has a single solution.
        let proj = AffineProjector::new(&phi_s, psi)?;
        let v = proj.min_norm_solution().clone();
        return Ok(Some((group_norm(&v), v)));
    }
    let p = MtlProblem::new(phi_s, psi.clone(), 0.0)?;
    let sol = solve_constrained(&p, config)?;
    Ok(Some((sol.objective, sol.v)))
}

fn combinations(k: usize, r: usize, mut f: impl FnMut(&[usize])) {
    if r > k {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        f(&idx);
        let mut i = r;
        while i > 0 && idx[i - 1] == k - r + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Evaluates every support pattern in ascending cardinality.
pub fn exhaustive_min_support(
    phi: &Matrix,
    psi: &Matrix,
    k_max_guard: usize,
    tol: f64,
    config: &SolverConfig,
) -> Result<OracleResult> {
    let k = phi.rows();
    if phi.cols() != psi.cols() {
        return Err(Error::Shape(format!("phi {:?} and psi {:?}", phi.shape(), psi.shape())));
    }
    if k > k_max_guard {
        return Err(Error::GuardExceeded(format!(
            "K = {k} exceeds the exhaustive-search limit {k_max_guard}"
        )));
    }
    let mut values: Vec<(Vec<usize>, f64, Matrix)> = Vec::new();
    let mut failed = Vec::new();
    let mut evaluated = 0usize;
    for r in 0..=k {
        let mut err = None;
        combinations(k, r, |s| {
            if err.is_some() {
                return;
            }
            evaluated += 1;
            match restricted_value(phi, psi, s, config) {
                Ok(Some((val, v))) => values.push((s.to_vec(), val, v)),
                Ok(None) => {}
                Err(Error::NoConvergence { .. }) | Err(Error::Infeasible(_)) => failed.push(s.to_vec()),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    let gamma = values.iter().map(|(_, v, _)| *v).fold(f64::INFINITY, f64::min);
    if !gamma.is_finite() {
        return Err(Error::Infeasible("no support pattern is feasible".into()));
    }
    let optimal: Vec<&(Vec<usize>, f64, Matrix)> =
        values.iter().filter(|(_, v, _)| *v <= gamma * (1.0 + tol)).collect();
    let best = optimal
        .iter()
        .min_by_key(|(s, _, _)| s.len())
        .expect("the minimizer is optimal");
    let mut solution = Matrix::zeros(psi.rows(), k);
    for (j, &c) in best.0.iter().enumerate() {
        solution.set_col(c, &best.2.col(j));
    }
    Ok(OracleResult {
        optimal_objective: gamma,
        min_support_size: best.0.len(),
        optimal_supports: optimal.iter().map(|(s, _, _)| s.clone()).collect(),
        evaluated_patterns: evaluated,
        feasible_patterns: values.len(),
        failed_patterns: failed,
        solution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMode {
    Solver,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub support_size: Option<usize>,
    /// Support of the solver output before reduction (solver mode).
    pub solver_support: Option<usize>,
    pub r_phi: usize,
    pub r_psi: usize,
    pub general_position: Option<bool>,
    pub within_bounds: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub lower: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub spec: InstanceSpec,
    pub mode: ExperimentMode,
    pub trials: usize,
    /// `(support_size, count)`, ascending.
    pub rows: Vec<(usize, usize)>,
    pub bounds: Bounds,
    pub failures: usize,
    pub out_of_bounds: usize,
    pub outcomes: Vec<TrialOutcome>,
}

fn run_trial(spec: &InstanceSpec, t: u64, mode: ExperimentMode, config: &SolverConfig) -> TrialOutcome {
    let ts = spec.for_trial(t);
    let mut out = TrialOutcome {
        trial: t,
        support_size: None,
        solver_support: None,
        r_phi: spec.rank_phi,
        r_psi: spec.expected_rank_psi(),
        general_position: None,
        within_bounds: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let (phi, psi) = random_instance(&ts)?;
        out.r_phi = rank_rel(&phi)?;
        out.r_psi = rank_rel(&psi)?;
        let gp = general_position_check(
            &phi,
            out.r_phi,
            GeneralPositionMode::Sampled {
                trials: 200,
                seed: ts.seed,
            },
        )?;
        out.general_position = Some(gp);
        let size = match mode {
            ExperimentMode::Solver => {
                let p = MtlProblem::new(phi.clone(), psi.clone(), 0.0)?;
                let sol = solve_constrained(&p, config)?;
                out.solver_support = Some(mtl::support(&sol.v, config.support_eps).len());
                let (v, _) = reduce(&phi, &psi, &sol.v, &ReduceConfig::default())?;
                mtl::support(&v, config.support_eps).len()
            }
            ExperimentMode::Exhaustive => {
                exhaustive_min_support(&phi, &psi, K_MAX_GUARD, OPTIMALITY_RTOL, config)?.min_support_size
            }
        };
        out.support_size = Some(size);
        let lower_ok = !gp || size >= out.r_phi;
        out.within_bounds = Some(lower_ok && size <= out.r_phi * out.r_psi);
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

/// Runs `trials` independent instances. Each trial owns its RNG streams, so
/// the result does not depend on `threads`.
pub fn histogram_experiment(
    spec: &InstanceSpec,
    trials: usize,
    mode: ExperimentMode,
    config: &SolverConfig,
    threads: usize,
) -> Result<Histogram> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if mode == ExperimentMode::Exhaustive && spec.k > K_MAX_GUARD {
        return Err(Error::GuardExceeded(format!(
            "K = {} exceeds the exhaustive-search limit {K_MAX_GUARD}",
            spec.k
        )));
    }
    let run = || -> Vec<TrialOutcome> {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| run_trial(spec, t, mode, config))
            .collect()
    };
    let outcomes = if threads <= 1 {
        (0..trials as u64).map(|t| run_trial(spec, t, mode, config)).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(run)
    };
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut failures = 0;
    let mut out_of_bounds = 0;
    for o in &outcomes {
        match o.support_size {
            Some(s) => *counts.entry(s).or_default() += 1,
            None => failures += 1,
        }
        if o.within_bounds == Some(false) {
            out_of_bounds += 1;
        }
    }
    if failures as f64 > MAX_FAILURE_RATE * trials as f64 {
        let first = outcomes.iter().find_map(|o| o.error.clone()).unwrap_or_default();
        return Err(Error::NoConvergence {
            iterations: trials,
            detail: format!("{failures} of {trials} trials failed; first error: {first}"),
        });
    }
    let r_psi = spec.expected_rank_psi();
    Ok(Histogram {
        spec: *spec,
        mode,
        trials,
        rows: counts.into_iter().collect(),
        bounds: Bounds {
            lower: spec.rank_phi,
            upper: spec.rank_phi * r_psi,
        },
        failures,
        out_of_bounds,
        outcomes,
    })
}

/// `‖VΦ − Ψ‖_F`.
pub fn feasibility_residual(phi: &Matrix, psi: &Matrix, v: &Matrix) -> Result<f64> {
    Ok(frobenius_norm(&matmul(v, phi)?.sub(psi)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_column() -> (Matrix, Matrix) {
        (
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
        )
    }

    fn spec(d: usize, n: usize, k: usize, rp: usize, rs: usize, seed: u64) -> InstanceSpec {
        InstanceSpec {
            d,
            n,
            k,
            rank_phi: rp,
            rank_psi: rs,
            seed,
        }
    }

    #[test]
    fn instance_ranks_and_determinism() {
        let s = spec(3, 6, 10, 6, 3, 42);
        let (phi, psi) = random_instance(&s).unwrap();
        assert_eq!(rank_rel(&phi).unwrap(), 6);
        assert_eq!(rank_rel(&psi).unwrap(), 3);
        let (phi2, psi2) = random_instance(&s).unwrap();
        assert_eq!(phi.as_slice(), phi2.as_slice());
        assert_eq!(psi.as_slice(), psi2.as_slice());

        let low = spec(10, 20, 200, 2, 10, 1);
        let (phi, psi) = random_instance(&low).unwrap();
        assert_eq!(rank_rel(&phi).unwrap(), 2);
        assert_eq!(rank_rel(&psi).unwrap(), 2);
        assert!(spec(3, 4, 10, 5, 2, 0).validate().is_err());
    }

    #[test]
    fn exhaustive_three_column() {
        let (phi, psi) = three_column();
        let r = exhaustive_min_support(&phi, &psi, K_MAX_GUARD, OPTIMALITY_RTOL, &SolverConfig::default()).unwrap();
        assert!((r.optimal_objective - 1.0).abs() < 1e-9);
        assert_eq!(r.min_support_size, 1);
        assert_eq!(r.evaluated_patterns, 8);
        assert!(r.optimal_supports.contains(&vec![2]));
        assert!(r.failed_patterns.is_empty());
    }

    #[test]
    fn exhaustive_identity_forces_nonzero_columns() {
        let phi = Matrix::identity(4);
        let psi = Matrix::from_rows(&[vec![1.0, 0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]).unwrap();
        let r = exhaustive_min_support(&phi, &psi, K_MAX_GUARD, OPTIMALITY_RTOL, &SolverConfig::default()).unwrap();
        assert_eq!(r.min_support_size, 2);
        assert!((r.optimal_objective - (1.0 + 5f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn exhaustive_guard() {
        let phi = Matrix::identity(15);
        let psi = Matrix::zeros(1, 15);
        assert!(matches!(
            exhaustive_min_support(&phi, &psi, K_MAX_GUARD, OPTIMALITY_RTOL, &SolverConfig::default()),
            Err(Error::GuardExceeded(_))
        ));
    }

    #[test]
    fn exhaustive_random_within_bounds() {
        let s = spec(2, 3, 7, 3, 2, 5);
        let (phi, psi) = random_instance(&s).unwrap();
        let r = exhaustive_min_support(&phi, &psi, K_MAX_GUARD, OPTIMALITY_RTOL, &SolverConfig::default()).unwrap();
        assert!(
            r.min_support_size >= 3 && r.min_support_size <= 6,
            "{}",
            r.min_support_size
        );
        let full = solve_constrained(
            &MtlProblem::new(phi.clone(), psi.clone(), 0.0).unwrap(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((full.objective - r.optimal_objective).abs() <= 1e-6 * r.optimal_objective);
        assert!(feasibility_residual(&phi, &psi, &r.solution).unwrap() < 1e-8);
    }

    #[test]
    fn histogram_is_deterministic_and_thread_independent() {
        let s = spec(2, 3, 12, 3, 2, 9);
        let cfg = SolverConfig::default();
        let a = histogram_experiment(&s, 3, ExperimentMode::Solver, &cfg, 1).unwrap();
        let b = histogram_experiment(&s, 3, ExperimentMode::Solver, &cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
        let e = spec(2, 3, 6, 3, 2, 9);
        let h = histogram_experiment(&e, 1, ExperimentMode::Exhaustive, &cfg, 1).unwrap();
        assert_eq!(
            h,
            histogram_experiment(&e, 1, ExperimentMode::Exhaustive, &cfg, 1).unwrap()
        );
    }
}
