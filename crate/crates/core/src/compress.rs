//! Layer compression: replace a layer's output weights by a group-sparse
//! solution that reproduces the same outputs on the training features, then
//! prune and rebalance.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::caratheodory::{reduce, ReduceConfig};
use crate::container::{Tensor, TensorContainer};
use crate::error::{Error, Result};
use crate::mtl::{regularized_objective, solve_constrained, solve_regularized, MtlProblem, SolverConfig};
use crate::norms::{Activation, AtomicNet, Dataset, Neuron, COALESCE_TOL};
use crate::rng::CounterRng;
use crate::tensor::{frobenius_norm, matmul, norm2, numerical_rank, Matrix, Threshold};

/// Relative tolerance for the chain-consistency check.
pub const CHAIN_RTOL: f64 = 1e-6;
/// Compressed Σθ² may exceed the original's by at most this fraction.
pub const SUM_SQ_SLACK: f64 = 0.01;
pub const PROBE_PERTURBATIONS: usize = 100;
/// KKT tolerance (relative to λ) for the layer lasso. Tiny penalties on
/// over-complete layers converge slowly and the output residual, not exact
/// optimality, is what compression needs.
pub const COMPRESS_KKT_TOL: f64 = 0.1;

/// One layer `z ↦ V σ(W [z; 1])` together with the inputs it sees.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSnapshot {
    pub layer: AtomicNet,
    /// `d_in × N`, one column per training example.
    pub inputs: Matrix,
}

impl LayerSnapshot {
    pub fn new(layer: AtomicNet, inputs: Matrix) -> Result<Self> {
        if inputs.rows() != layer.input_dim() {
            return Err(Error::Shape(format!(
                "inputs have {} rows, layer expects {}",
                inputs.rows(),
                layer.input_dim()
            )));
        }
        if inputs.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("layer inputs".into()));
        }
        Ok(Self { layer, inputs })
    }

    pub fn outputs(&self) -> Result<Matrix> {
        self.layer.forward(&self.inputs)
    }
}

/// Post-activation features of the normalized layer and the outputs they
/// produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// `K × N`.
    pub phi: Matrix,
    /// `D × N`.
    pub psi: Matrix,
    /// Unit-norm input weights, one row per neuron (zero rows for dead ones).
    pub w_unit: Matrix,
    /// Output weights with the input norms absorbed, `D × K`.
    pub v_scaled: Matrix,
}

pub fn extract_features(layer: &LayerSnapshot) -> Result<Features> {
    let net = &layer.layer;
    let (k, p, dout) = (net.width(), net.input_dim() + 1, net.output_dim());
    let mut w_unit = Matrix::zeros(k, p);
    let mut v_scaled = Matrix::zeros(dout, k);
    for (i, n) in net.neurons.iter().enumerate() {
        let s = norm2(&n.w);
        if s == 0.0 {
            if n.v.iter().any(|&x| x != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "neuron {i} has zero input weight and nonzero output weight"
                )));
            }
            continue;
        }
        for j in 0..p {
            w_unit.set(i, j, n.w[j] / s);
        }
        for j in 0..dout {
            v_scaled.set(j, i, n.v[j] * s);
        }
    }
    let n = layer.inputs.cols();
    let xbar = layer.inputs.stack_rows(&Matrix::from_vec(1, n, vec![1.0; n])?)?;
    let mut phi = matmul(&w_unit, &xbar)?;
    let act = net.activation;
    for r in 0..k {
        for c in 0..n {
            phi.set(r, c, act.apply(phi.get(r, c)));
        }
    }
    let psi = matmul(&v_scaled, &phi)?;
    Ok(Features {
        phi,
        psi,
        w_unit,
        v_scaled,
    })
}

impl Features {
    /// Folds neurons with identical unit input weights into the first of
    /// each group, summing their output weights. `Ψ` is unchanged and the
    /// group norm can only drop.
    pub fn merge_duplicates(&self) -> Result<(Features, usize)> {
        let k = self.w_unit.rows();
        let mut owner: Vec<usize> = (0..k).collect();
        for i in 0..k {
            if owner[i] != i || self.w_unit.row(i).iter().all(|&x| x == 0.0) {
                continue;
            }
            for j in i + 1..k {
                if owner[j] == j
                    && self
                        .w_unit
                        .row(i)
                        .iter()
                        .zip(self.w_unit.row(j))
                        .all(|(a, b)| (a - b).abs() <= COALESCE_TOL)
                {
                    owner[j] = i;
                }
            }
        }
        let keep: Vec<usize> = (0..k).filter(|&i| owner[i] == i).collect();
        let mut v_scaled = Matrix::zeros(self.v_scaled.rows(), keep.len());
        for (slot, &i) in keep.iter().enumerate() {
            for j in (0..k).filter(|&j| owner[j] == i) {
                for r in 0..v_scaled.rows() {
                    v_scaled.set(r, slot, v_scaled.get(r, slot) + self.v_scaled.get(r, j));
                }
            }
        }
        let phi = self.phi.select_rows(&keep);
        let psi = matmul(&v_scaled, &phi)?;
        Ok((
            Features {
                phi,
                psi,
                w_unit: self.w_unit.select_rows(&keep),
                v_scaled,
            },
            k - keep.len(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressConfig {
    pub lambda: f64,
    pub rank_threshold: f64,
    pub solver: SolverConfig,
    /// Solve the equality-constrained problem and reduce its support instead
    /// of the penalized one.
    pub exact: bool,
}

impl CompressConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            rank_threshold: crate::tensor::DEFAULT_RANK_THRESHOLD,
            solver: SolverConfig {
                kkt_tol: COMPRESS_KKT_TOL,
                ..SolverConfig::default()
            },
            exact: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub width_before: usize,
    pub width_after: usize,
    /// Neurons folded into an identical twin before solving.
    pub merged_duplicates: usize,
    pub r_phi: usize,
    pub r_psi: usize,
    pub bound: usize,
    /// `‖V̂Φ − Ψ‖_F / ‖Ψ‖_F`.
    pub output_residual: f64,
    /// Σθ² of the rebalanced layer before and after.
    pub objective_sum_sq_before: f64,
    pub objective_sum_sq_after: f64,
    pub lambda: f64,
    pub mode: &'static str,
    pub solver_iterations: usize,
    pub solver_objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

fn sum_sq(net: &AtomicNet) -> f64 {
    2.0 * net.weight_decay_cost()
}

/// Σθ² of the layer after rebalancing: `2 Σₖ ‖wₖ‖‖vₖ‖`.
pub fn rebalanced_sum_sq(net: &AtomicNet) -> f64 {
    2.0 * net.path_norm()
}

pub fn compress_layer(layer: &LayerSnapshot, config: &CompressConfig) -> Result<(LayerSnapshot, CompressionReport)> {
    if !(config.rank_threshold > 0.0) {
        return Err(Error::InvalidArgument("rank threshold must be positive".into()));
    }
    let (f, merged) = extract_features(layer)?.merge_duplicates()?;
    let th = Threshold::Absolute(config.rank_threshold);
    let r_phi = numerical_rank(&f.phi, th)?.rank;
    let r_psi = numerical_rank(&f.psi, th)?.rank;
    let net = &layer.layer;
    let mut report = CompressionReport {
        width_before: net.width(),
        width_after: 0,
        merged_duplicates: merged,
        r_phi,
        r_psi,
        bound: r_phi * r_psi,
        output_residual: 0.0,
        objective_sum_sq_before: rebalanced_sum_sq(net),
        objective_sum_sq_after: 0.0,
        lambda: config.lambda,
        mode: if config.exact { "constrained" } else { "regularized" },
        solver_iterations: 0,
        solver_objective: 0.0,
        kkt_residual: 0.0,
        converged: true,
    };
    let empty = AtomicNet::new(net.input_dim(), net.output_dim(), net.activation);
    if f.psi.is_zero() {
        return Ok((LayerSnapshot::new(empty, layer.inputs.clone())?, report));
    }

    let problem = MtlProblem::new(f.phi.clone(), f.psi.clone(), config.lambda)?;
    let v_hat = if config.exact {
        let sol = solve_constrained(&problem, &config.solver)?;
        let (v, _) = reduce(&f.phi, &f.psi, &sol.v, &ReduceConfig::default())?;
        report.solver_iterations = sol.iterations;
        report.solver_objective = crate::mtl::group_norm(&v);
        report.kkt_residual = sol.kkt_residual;
        report.converged = sol.converged;
        v
    } else {
        let sol = solve_regularized(&problem, &config.solver)?;
        if !sol.converged {
            return Err(Error::NoConvergence {
                iterations: sol.iterations,
                detail: format!("layer lasso, kkt residual {:.3e}", sol.kkt_residual),
            });
        }
        report.solver_iterations = sol.iterations;
        report.kkt_residual = sol.kkt_residual;
        // The original weights fit exactly; never return anything worse,
        // which keeps Σ‖v̂ₖ‖ ≤ Σ‖ṽₖ‖.
        let original = regularized_objective(&problem, &f.v_scaled)?;
        if sol.objective <= original {
            report.solver_objective = sol.objective;
            sol.v
        } else {
            report.solver_objective = original;
            f.v_scaled.clone()
        }
    };

    let keep = crate::mtl::support(&v_hat, config.solver.support_eps);
    let mut out = empty;
    for &k in &keep {
        let v = v_hat.col(k);
        let s = norm2(&v).sqrt();
        out.push(Neuron {
            w: f.w_unit.row(k).iter().map(|x| x * s).collect(),
            v: v.iter().map(|x| x / s).collect(),
        })?;
    }
    let psi_hat = matmul(&v_hat.select_cols(&keep), &f.phi.select_rows(&keep))?;
    report.width_after = out.width();
    report.output_residual = frobenius_norm(&psi_hat.sub(&f.psi)?) / frobenius_norm(&f.psi);
    report.objective_sum_sq_after = sum_sq(&out);
    Ok((LayerSnapshot::new(out, layer.inputs.clone())?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    /// `maxᵢ ‖f(xᵢ) − g(xᵢ)‖₂ / maxᵢ ‖f(xᵢ)‖₂` over the probes.
    pub max_relative_discrepancy: f64,
    pub sum_sq_before: f64,
    pub sum_sq_after: f64,
    pub sum_sq_delta: f64,
    pub flagged: bool,
}

/// Compares the two layers on `probes`; flags a discrepancy above
/// `tolerance` or a Σθ² rise beyond [`SUM_SQ_SLACK`].
pub fn verify_compression(
    original: &LayerSnapshot,
    compressed: &LayerSnapshot,
    probes: &Matrix,
    tolerance: f64,
) -> Result<VerifyReport> {
    let (a, b) = (&original.layer, &compressed.layer);
    if a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim() {
        return Err(Error::Shape(format!(
            "layers map {}→{} and {}→{}",
            a.input_dim(),
            a.output_dim(),
            b.input_dim(),
            b.output_dim()
        )));
    }
    let fa = a.forward(probes)?;
    let fb = b.forward(probes)?;
    let diff = fa.sub(&fb)?;
    let scale = (0..fa.cols()).map(|i| norm2(&fa.col(i))).fold(0.0, f64::max);
    let worst = (0..diff.cols()).map(|i| norm2(&diff.col(i))).fold(0.0, f64::max);
    let max_relative_discrepancy = if scale > 0.0 {
        worst / scale
    } else if worst > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let sum_sq_before = rebalanced_sum_sq(a);
    let sum_sq_after = rebalanced_sum_sq(b);
    Ok(VerifyReport {
        max_relative_discrepancy,
        sum_sq_before,
        sum_sq_after,
        sum_sq_delta: sum_sq_after - sum_sq_before,
        flagged: max_relative_discrepancy > tolerance || sum_sq_after > (1.0 + SUM_SQ_SLACK) * sum_sq_before,
    })
}

/// The inputs themselves followed by Gaussian perturbations with standard
/// deviation a tenth of each feature's spread.
pub fn default_probes(inputs: &Matrix, seed: u64) -> Matrix {
    let (d, n) = inputs.shape();
    let std: Vec<f64> = (0..d)
        .map(|r| {
            let row = inputs.row(r);
            let m = row.iter().sum::<f64>() / n.max(1) as f64;
            (row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n.max(1) as f64).sqrt()
        })
        .collect();
    let mut rng = CounterRng::stream(seed, "probes", 0);
    let extra = if n == 0 { 0 } else { PROBE_PERTURBATIONS };
    let mut out = Matrix::zeros(d, n + extra);
    for i in 0..n {
        for r in 0..d {
            out.set(r, i, inputs.get(r, i));
        }
    }
    for j in 0..extra {
        let src = rng.below(n);
        for r in 0..d {
            out.set(r, n + j, inputs.get(r, src) + 0.1 * std[r] * rng.standard_normal());
        }
    }
    out
}

/// A chain of layers, each feeding the next: `zₗ = Vₗ σ(Wₗ [zₗ₋₁; 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainNet {
    pub layers: Vec<AtomicNet>,
}

impl ChainNet {
    pub fn new(layers: Vec<AtomicNet>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a chain needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} values, layer {} expects {}",
                    i + 1,
                    pair[0].output_dim(),
                    i + 2,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.output_dim()).unwrap_or(0)
    }

    /// Inputs seen by every layer, followed by the final outputs.
    pub fn activations(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut out = vec![x.clone()];
        for l in &self.layers {
            let next = l.forward(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.activations(x)?.pop().expect("nonempty"))
    }

    /// `(1/N) Σᵢ ‖yᵢ − f(xᵢ)‖²`.
    pub fn mean_squared_loss(&self, data: &Dataset) -> Result<f64> {
        let r = self.forward(&data.x)?.sub(&data.y)?;
        let n = frobenius_norm(&r);
        Ok(n * n / data.len().max(1) as f64)
    }

    pub fn snapshots(&self, x: &Matrix) -> Result<Vec<LayerSnapshot>> {
        let acts = self.activations(x)?;
        self.layers
            .iter()
            .zip(acts)
            .map(|(l, a)| LayerSnapshot::new(l.clone(), a))
            .collect()
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    Tensor::from_matrix(format!("layer{}.W", i + 1), &l.w_matrix()),
                    Tensor::from_matrix(format!("layer{}.V", i + 1), &l.v_matrix()),
                ]
            })
            .collect()
    }

    pub fn attributes(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::from([("layers".to_string(), self.layers.len().to_string())]);
        for (i, l) in self.layers.iter().enumerate() {
            out.insert(format!("layer{}.activation", i + 1), l.activation.to_string());
        }
        out
    }

    /// Reads `layer1.W`, `layer1.V`, `layer2.W`, ... until a layer is missing.
    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let mut layers = Vec::new();
        let mut i = 1;
        while c.record(&format!("layer{i}.W")).is_some() {
            let act = c
                .attributes
                .get(&format!("layer{i}.activation"))
                .map(|s| s.parse())
                .transpose()?
                .unwrap_or(Activation::Relu);
            let w = c.matrix(&format!("layer{i}.W"))?;
            let v = c.matrix(&format!("layer{i}.V"))?;
            layers.push(AtomicNet::from_matrices(&w, &v, act)?);
            i += 1;
        }
        if layers.is_empty() {
            return Err(Error::Format("container has no layer1.W tensor".into()));
        }
        Self::new(layers)
    }
}

fn relative_gap(a: &Matrix, b: &Matrix) -> Result<f64> {
    let scale = frobenius_norm(a).max(frobenius_norm(b)).max(1.0);
    Ok(frobenius_norm(&a.sub(b)?) / scale)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEntry {
    /// 1-based layer index.
    pub layer: usize,
    #[serde(flatten)]
    pub report: CompressionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkReport {
    pub layers: Vec<LayerEntry>,
    pub loss_before: f64,
    pub loss_after: f64,
    /// `‖F̂(X) − F(X)‖_F / ‖F(X)‖_F` for the whole chain on the dataset.
    pub output_residual: f64,
    pub widths_before: Vec<usize>,
    pub widths_after: Vec<usize>,
}

/// Compresses the layers with a configuration, last to first, re-deriving
/// downstream inputs after each step. Layers with `None` are left alone.
pub fn compress_network(
    snapshots: &[LayerSnapshot],
    configs: &[Option<CompressConfig>],
    data: &Dataset,
) -> Result<(Vec<LayerSnapshot>, NetworkReport)> {
    if snapshots.len() != configs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} layers but {} configurations",
            snapshots.len(),
            configs.len()
        )));
    }
    let chain = ChainNet::new(snapshots.iter().map(|s| s.layer.clone()).collect())?;
    let acts = chain.activations(&data.x)?;
    for (i, s) in snapshots.iter().enumerate() {
        let gap = relative_gap(&s.inputs, &acts[i])?;
        if gap > CHAIN_RTOL {
            return Err(Error::InvalidArgument(format!(
                "chain inconsistency at layer {}: stored inputs differ by {gap:.3e}",
                i + 1
            )));
        }
    }
    let before_out = acts.last().expect("nonempty").clone();
    let loss_before = chain.mean_squared_loss(data)?;

    let mut layers = chain.layers.clone();
    let mut entries = Vec::new();
    for i in (0..layers.len()).rev() {
        let Some(cfg) = &configs[i] else { continue };
        // Upstream layers are untouched so the stored inputs are current.
        let (compressed, report) = compress_layer(&snapshots[i], cfg)?;
        layers[i] = compressed.layer;
        entries.push(LayerEntry { layer: i + 1, report });
    }
    let compressed = ChainNet::new(layers)?;
    let out = compressed.snapshots(&data.x)?;
    let after_out = compressed.forward(&data.x)?;
    let scale = frobenius_norm(&before_out);
    let report = NetworkReport {
        layers: entries,
        loss_before,
        loss_after: compressed.mean_squared_loss(data)?,
        output_residual: if scale > 0.0 {
            frobenius_norm(&after_out.sub(&before_out)?) / scale
        } else {
            frobenius_norm(&after_out)
        },
        widths_before: chain.layers.iter().map(|l| l.width()).collect(),
        widths_after: compressed.layers.iter().map(|l| l.width()).collect(),
    };
    Ok((out, report))
}
