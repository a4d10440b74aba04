//! Command-line front end. Every subcommand reads containers, writes its
//! results under `--out` and reports through the exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::caratheodory::{reduce, ReduceConfig};
use crate::compress::{compress_network, ChainNet, CompressConfig};
use crate::container::{export_csv, read_container, write_container, write_container_with, Cell, Tensor};
use crate::error::{Error, Result};
use crate::mlp::{synthetic_classification, train_mlp, MlpConfig};
use crate::mtl::{solve_constrained, solve_regularized, KktMode, MtlProblem, SolverConfig};
use crate::norms::Dataset;
use crate::oracle::{
    exhaustive_min_support, histogram_experiment, random_instance, ExperimentMode, InstanceSpec, K_MAX_GUARD,
    OPTIMALITY_RTOL,
};
use crate::report::to_sorted_json_pretty;
use crate::tensor::{numerical_rank, Matrix, Threshold};
use crate::trainer::{
    active_neurons, balance_gap, generate_teacher_data, init_net, neuron_coordinates, shared_fraction, train,
    Regularizer, TeacherSpec, TrainConfig, ACTIVE_EPS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_BOUND: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "vvnet",
    version,
    about = "Multi-task lasso solvers, width bounds and layer compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the multi-task lasso for given features and targets.
    Solve(SolveArgs),
    /// Reduce the support of a feasible solution.
    Reduce(ReduceArgs),
    /// Exhaustive minimum-support search on a random instance.
    Oracle(OracleArgs),
    /// Support-size histograms over random instances.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Train a shallow network on teacher data.
    Train(TrainArgs),
    /// Train the two-hidden-layer MLP used for compression.
    TrainMlp(TrainMlpArgs),
    /// Compress layers of a chain network.
    Compress(CompressArgs),
    /// Print the numerical rank of a tensor.
    Rank(RankArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Features as `container:tensor`.
    #[arg(long)]
    phi: String,
    /// Targets as `container:tensor`.
    #[arg(long)]
    psi: String,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    constrained: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    phi: String,
    #[arg(long)]
    psi: String,
    #[arg(long)]
    v: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InstanceArgs {
    #[arg(long = "D")]
    d: usize,
    #[arg(long = "N")]
    n: usize,
    #[arg(long = "K")]
    k: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    rank_phi: usize,
    #[arg(long)]
    rank_psi: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Experiment {
    /// Solver plus reduction on every trial.
    LassoHist(LassoHistArgs),
    /// Exhaustive search on every trial.
    ExhaustiveHist(ExhaustiveHistArgs),
}

#[derive(Debug, Args)]
struct LassoHistArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    rank_phi: usize,
    #[arg(long)]
    rank_psi: usize,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExhaustiveHistArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    reg: Regularizer,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 200_000)]
    iters: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainMlpArgs {
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 1500)]
    iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompressArgs {
    /// Chain network container.
    #[arg(long)]
    model: PathBuf,
    /// Dataset container with tensors `X` and `Y`.
    #[arg(long)]
    data: PathBuf,
    /// One penalty for all layers, or one per compressed layer.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = crate::tensor::DEFAULT_RANK_THRESHOLD)]
    rank_threshold: f64,
    /// 1-based layer indices; all layers when omitted.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<usize>,
    /// Use the equality-constrained solve and support reduction.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    tensor: String,
    #[arg(long, default_value_t = crate::tensor::DEFAULT_RANK_THRESHOLD)]
    threshold: f64,
    /// Interpret the threshold relative to the largest singular value.
    #[arg(long)]
    relative: bool,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } | Error::SvdNoConvergence(_) | Error::Diverged(_) => EXIT_NO_CONVERGENCE,
        Error::ReductionStalled { .. } | Error::BoundViolation(_) => EXIT_BOUND,
        Error::Shape(_)
        | Error::NonFinite(_)
        | Error::InvalidArgument(_)
        | Error::Infeasible(_)
        | Error::GuardExceeded(_)
        | Error::Format(_)
        | Error::Io { .. } => EXIT_INPUT,
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Solve(a) => solve(a),
        Command::Reduce(a) => reduce_cmd(a),
        Command::Oracle(a) => oracle(a),
        Command::Experiment(Experiment::LassoHist(a)) => {
            let spec = instance_spec(&a.instance, a.rank_phi, a.rank_psi);
            experiment(spec, a.trials, ExperimentMode::Solver, a.threads, &a.out)
        }
        Command::Experiment(Experiment::ExhaustiveHist(a)) => {
            let i = &a.instance;
            let spec = instance_spec(i, i.k.min(i.n), i.d.min(i.n));
            experiment(spec, a.trials, ExperimentMode::Exhaustive, a.threads, &a.out)
        }
        Command::Train(a) => train_cmd(a),
        Command::TrainMlp(a) => train_mlp_cmd(a),
        Command::Compress(a) => compress_cmd(a),
        Command::Rank(a) => rank(a),
    }
}

/// Splits `container:tensor` at the last colon.
pub fn parse_tensor_ref(s: &str) -> Result<(PathBuf, String)> {
    match s.rsplit_once(':') {
        Some((path, name)) if !path.is_empty() && !name.is_empty() => Ok((PathBuf::from(path), name.to_string())),
        _ => Err(Error::InvalidArgument(format!("expected container:tensor, got {s:?}"))),
    }
}

fn load_matrix(reference: &str) -> Result<Matrix> {
    let (path, name) = parse_tensor_ref(reference)?;
    read_container(&path)?.matrix(&name)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_sorted_json_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn solve(a: SolveArgs) -> Result<i32> {
    let phi = load_matrix(&a.phi)?;
    let psi = load_matrix(&a.psi)?;
    let lambda = match (a.lambda, a.constrained) {
        (Some(l), _) => l,
        (None, true) => 0.0,
        (None, false) => {
            return Err(Error::InvalidArgument(
                "--lambda is required without --constrained".into(),
            ))
        }
    };
    let problem = MtlProblem::new(phi, psi, lambda)?;
    let mut config = SolverConfig::default();
    if let Some(m) = a.max_iters {
        config.max_iters = m;
    }
    let (sol, mode) = if a.constrained {
        (solve_constrained(&problem, &config)?, KktMode::Constrained)
    } else {
        (solve_regularized(&problem, &config)?, KktMode::Regularized)
    };
    prepare_out(&a.out)?;
    write_container(&a.out.join("solution"), &[Tensor::from_matrix("V", &sol.v)])?;
    write_json(&a.out.join("report.json"), &sol.report(&problem, mode)?)?;
    if !sol.converged {
        eprintln!(
            "warning: solver stopped after {} iterations without converging",
            sol.iterations
        );
        return Ok(EXIT_NO_CONVERGENCE);
    }
    Ok(EXIT_OK)
}

fn reduce_cmd(a: ReduceArgs) -> Result<i32> {
    let phi = load_matrix(&a.phi)?;
    let psi = load_matrix(&a.psi)?;
    let v = load_matrix(&a.v)?;
    let (reduced, trace) = reduce(&phi, &psi, &v, &ReduceConfig::default())?;
    prepare_out(&a.out)?;
    write_container(&a.out.join("reduced"), &[Tensor::from_matrix("V", &reduced)])?;
    write_json(&a.out.join("report.json"), &trace)?;
    Ok(EXIT_OK)
}

fn instance_spec(i: &InstanceArgs, rank_phi: usize, rank_psi: usize) -> InstanceSpec {
    InstanceSpec {
        d: i.d,
        n: i.n,
        k: i.k,
        rank_phi,
        rank_psi,
        seed: i.seed,
    }
}

#[derive(Serialize)]
struct OracleReport<'a> {
    spec: &'a InstanceSpec,
    #[serde(flatten)]
    result: &'a crate::oracle::OracleResult,
}

fn oracle(a: OracleArgs) -> Result<i32> {
    let spec = instance_spec(&a.instance, a.rank_phi, a.rank_psi);
    let (phi, psi) = random_instance(&spec)?;
    let result = exhaustive_min_support(&phi, &psi, K_MAX_GUARD, OPTIMALITY_RTOL, &SolverConfig::default())?;
    prepare_out(&a.out)?;
    write_container(
        &a.out.join("instance"),
        &[
            Tensor::from_matrix("Phi", &phi),
            Tensor::from_matrix("Psi", &psi),
            Tensor::from_matrix("V", &result.solution),
        ],
    )?;
    write_json(
        &a.out.join("report.json"),
        &OracleReport {
            spec: &spec,
            result: &result,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct HistogramSummary<'a> {
    spec: &'a InstanceSpec,
    mode: ExperimentMode,
    trials: usize,
    bounds: &'a crate::oracle::Bounds,
    failures: usize,
    out_of_bounds: usize,
    histogram: Vec<(usize, usize)>,
}

fn experiment(spec: InstanceSpec, trials: usize, mode: ExperimentMode, threads: usize, out: &Path) -> Result<i32> {
    let h = histogram_experiment(&spec, trials, mode, &SolverConfig::default(), threads)?;
    prepare_out(out)?;
    let rows: Vec<Vec<Cell>> = h.rows.iter().map(|&(s, c)| vec![s.into(), c.into()]).collect();
    export_csv(&out.join("histogram.csv"), &["support_size", "count"], &rows)?;
    let opt = |x: Option<usize>| x.map(Cell::from).unwrap_or_else(|| Cell::from(""));
    let flag = |x: Option<bool>| Cell::from(x.map(|b| if b { "true" } else { "false" }).unwrap_or(""));
    let trial_rows: Vec<Vec<Cell>> = h
        .outcomes
        .iter()
        .map(|o| {
            vec![
                Cell::Int(o.trial as i64),
                opt(o.support_size),
                opt(o.solver_support),
                o.r_phi.into(),
                o.r_psi.into(),
                flag(o.general_position),
                flag(o.within_bounds),
                Cell::Text(o.error.clone().unwrap_or_default()),
            ]
        })
        .collect();
    export_csv(
        &out.join("trials.csv"),
        &[
            "trial",
            "support_size",
            "solver_support",
            "r_phi",
            "r_psi",
            "general_position",
            "within_bounds",
            "error",
        ],
        &trial_rows,
    )?;
    write_json(
        &out.join("report.json"),
        &HistogramSummary {
            spec: &h.spec,
            mode: h.mode,
            trials: h.trials,
            bounds: &h.bounds,
            failures: h.failures,
            out_of_bounds: h.out_of_bounds,
            histogram: h.rows.clone(),
        },
    )?;
    if h.out_of_bounds > 0 {
        eprintln!("error: {} trials fell outside the bounds", h.out_of_bounds);
        return Ok(EXIT_BOUND);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TrainReport {
    config: TrainConfig,
    teacher: TeacherSpec,
    width: usize,
    active_neurons: usize,
    shared_fraction: f64,
    balance_gap: f64,
    final_mse: f64,
    final_objective: f64,
}

/// Student width of the shallow experiment.
pub const STUDENT_WIDTH: usize = 150;

fn train_cmd(a: TrainArgs) -> Result<i32> {
    let teacher = TeacherSpec::new(a.seed);
    let (data, _) = generate_teacher_data(&teacher)?;
    let config = TrainConfig {
        reg: a.reg,
        lambda: a.lambda,
        lr: a.lr,
        iters: a.iters,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let net = init_net(STUDENT_WIDTH, teacher.d, teacher.out_dim, config.init_scale, a.seed);
    let (trained, trace) = train(&net, &data, &config)?;
    prepare_out(&a.out)?;
    write_container_with(&a.out.join("net"), &trained.to_tensors(), trained.attributes())?;
    let coords = neuron_coordinates(&trained)?;
    let rows: Vec<Vec<Cell>> = coords
        .iter()
        .map(|c| {
            let mut row = vec![Cell::Real(c.theta), Cell::Real(c.b), Cell::Real(c.v_norm)];
            row.extend(c.masses.iter().map(|&m| Cell::Real(m)));
            row
        })
        .collect();
    export_csv(
        &a.out.join("neurons.csv"),
        &["theta", "b", "v_norm", "v1", "v2", "v3"],
        &rows,
    )?;
    let trace_rows: Vec<Vec<Cell>> = trace.objective.iter().map(|&(i, o)| vec![i.into(), o.into()]).collect();
    export_csv(&a.out.join("trace.csv"), &["iter", "objective"], &trace_rows)?;
    let loss = trained.squared_loss(&data)?;
    write_json(
        &a.out.join("report.json"),
        &TrainReport {
            config,
            teacher,
            width: STUDENT_WIDTH,
            active_neurons: active_neurons(&trained, ACTIVE_EPS).len(),
            shared_fraction: shared_fraction(&trained, ACTIVE_EPS),
            balance_gap: balance_gap(&trained, ACTIVE_EPS),
            final_mse: loss / (data.len() * teacher.out_dim) as f64,
            final_objective: trace.objective.last().map(|p| p.1).unwrap_or(f64::NAN),
        },
    )?;
    Ok(EXIT_OK)
}

/// Input dimension and class count of the compression dataset.
pub const MLP_FEATURES: usize = 20;
pub const MLP_CLASSES: usize = 10;

fn train_mlp_cmd(a: TrainMlpArgs) -> Result<i32> {
    let data = synthetic_classification(a.samples, MLP_FEATURES, MLP_CLASSES, a.seed)?;
    let config = MlpConfig {
        lambda: a.lambda,
        iters: a.iters,
        seed: a.seed,
        ..MlpConfig::default()
    };
    let (net, trace) = train_mlp(&data, &config)?;
    let chain = net.to_chain()?;
    prepare_out(&a.out)?;
    write_container_with(&a.out.join("model"), &chain.to_tensors(), chain.attributes())?;
    write_container(
        &a.out.join("data"),
        &[Tensor::from_matrix("X", &data.x), Tensor::from_matrix("Y", &data.y)],
    )?;
    let rows: Vec<Vec<Cell>> = trace
        .points
        .iter()
        .map(|&(i, l, o)| vec![i.into(), l.into(), o.into()])
        .collect();
    export_csv(&a.out.join("trace.csv"), &["iter", "loss", "objective"], &rows)?;
    Ok(EXIT_OK)
}

fn compress_cmd(a: CompressArgs) -> Result<i32> {
    let chain = ChainNet::from_container(&read_container(&a.model)?)?;
    let dc = read_container(&a.data)?;
    let data = Dataset::new(dc.matrix("X")?, dc.matrix("Y")?)?;
    let n_layers = chain.layers.len();
    let layers: Vec<usize> = if a.layers.is_empty() {
        (1..=n_layers).collect()
    } else {
        a.layers.clone()
    };
    if let Some(&bad) = layers.iter().find(|&&l| l == 0 || l > n_layers) {
        return Err(Error::InvalidArgument(format!("layer {bad} outside 1..={n_layers}")));
    }
    let lambdas: Vec<f64> = match a.lambda.len() {
        1 => vec![a.lambda[0]; layers.len()],
        n if n == layers.len() => a.lambda.clone(),
        n => {
            return Err(Error::InvalidArgument(format!(
                "{n} penalties for {} layers",
                layers.len()
            )))
        }
    };
    let mut configs: Vec<Option<CompressConfig>> = vec![None; n_layers];
    for (&l, &lambda) in layers.iter().zip(&lambdas) {
        let mut c = CompressConfig::new(lambda);
        c.rank_threshold = a.rank_threshold;
        c.exact = a.exact;
        configs[l - 1] = Some(c);
    }
    let snapshots = chain.snapshots(&data.x)?;
    let (compressed, report) = compress_network(&snapshots, &configs, &data)?;
    let out_chain = ChainNet::new(compressed.into_iter().map(|s| s.layer).collect())?;
    prepare_out(&a.out)?;
    write_container_with(&a.out.join("model"), &out_chain.to_tensors(), out_chain.attributes())?;
    write_json(&a.out.join("report.json"), &report)?;
    Ok(EXIT_OK)
}

fn rank(a: RankArgs) -> Result<i32> {
    let m = load_matrix(&a.tensor)?;
    let threshold = if a.relative {
        Threshold::Relative(a.threshold)
    } else {
        Threshold::Absolute(a.threshold)
    };
    println!("{}", numerical_rank(&m, threshold)?.rank);
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_refs_split_at_last_colon() {
        assert_eq!(
            parse_tensor_ref("a/b:c:X").unwrap(),
            (PathBuf::from("a/b:c"), "X".to_string())
        );
        assert!(parse_tensor_ref("nocolon").is_err());
        assert!(parse_tensor_ref(":X").is_err());
        assert!(parse_tensor_ref("path:").is_err());
    }

    #[test]
    fn usage_errors_and_help() {
        assert_eq!(run(["vvnet"]), EXIT_USAGE);
        assert_eq!(run(["vvnet", "--help"]), EXIT_OK);
        assert_eq!(
            run([
                "vvnet",
                "experiment",
                "lasso-hist",
                "--D",
                "2",
                "--N",
                "2",
                "--K",
                "3",
                "--rank-phi",
                "2",
                "--rank-psi",
                "2",
                "--trials",
                "1",
                "--out",
                "x"
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Format("x".into())), EXIT_INPUT);
        assert_eq!(
            exit_code(&Error::NoConvergence {
                iterations: 1,
                detail: String::new()
            }),
            EXIT_NO_CONVERGENCE
        );
        assert_eq!(exit_code(&Error::BoundViolation("x".into())), EXIT_BOUND);
    }
}
