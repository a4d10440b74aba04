//! Full-batch Adam training of shallow vector-valued networks.
//!
//! Parameters are flattened as `θ = [W row-major (K×(d+1)); V neuron-major
//! (K×D)]`, so `θ[k(d+1) + j] = wₖⱼ` and `θ[K(d+1) + kD + i] = vₖᵢ`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::norms::{Activation, AtomicNet, Dataset, Neuron};
use crate::rng::CounterRng;
use crate::tensor::{norm2, Matrix};

pub const ACTIVE_EPS: f64 = 1e-3;
pub const TRACE_EVERY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regularizer {
    #[serde(rename = "wd")]
    WeightDecay,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "none")]
    None,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::WeightDecay => "wd",
            Regularizer::L1 => "l1",
            Regularizer::None => "none",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wd" | "weight_decay" => Ok(Regularizer::WeightDecay),
            "l1" => Ok(Regularizer::L1),
            "none" => Ok(Regularizer::None),
            _ => Err(Error::InvalidArgument(format!("unknown regularizer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub reg: Regularizer,
    pub lambda: f64,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Standard deviation of the initial weights; `1/√K` when unset.
    pub init_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            reg: Regularizer::WeightDecay,
            lambda: 0.0,
            lr: 2e-3,
            iters: 200_000,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init_scale: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if self.iters == 0 {
            return Err(Error::InvalidArgument("iters must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TeacherSpec {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "D")]
    pub out_dim: usize,
    pub teacher_width: usize,
    pub seed: u64,
}

impl TeacherSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            n: 50,
            d: 2,
            out_dim: 3,
            teacher_width: 5,
            seed,
        }
    }
}

/// Gaussian inputs labelled by a random ReLU teacher with `N(0, 1)` weights.
pub fn generate_teacher_data(spec: &TeacherSpec) -> Result<(Dataset, AtomicNet)> {
    if spec.n == 0 || spec.d == 0 || spec.out_dim == 0 {
        return Err(Error::InvalidArgument("teacher dimensions must be positive".into()));
    }
    let mut rng = CounterRng::stream(spec.seed, "teacher.x", 0);
    let x = Matrix::from_fn(spec.d, spec.n, |_, _| rng.standard_normal());
    let mut rng = CounterRng::stream(spec.seed, "teacher.net", 0);
    let neurons = (0..spec.teacher_width)
        .map(|_| Neuron {
            w: (0..=spec.d).map(|_| rng.standard_normal()).collect(),
            v: (0..spec.out_dim).map(|_| rng.standard_normal()).collect(),
        })
        .collect();
    let teacher = AtomicNet::with_neurons(spec.d, spec.out_dim, Activation::Relu, neurons)?;
    let y = teacher.forward(&x)?;
    Ok((Dataset::new(x, y)?, teacher))
}

/// Student with i.i.d. `N(0, scale²)` weights drawn from the `student` stream.
pub fn init_net(width: usize, d: usize, out_dim: usize, scale: Option<f64>, seed: u64) -> AtomicNet {
    let scale = scale.unwrap_or(1.0 / (width.max(1) as f64).sqrt());
    let mut rng = CounterRng::stream(seed, "student", 0);
    let neurons = (0..width)
        .map(|_| Neuron {
            w: (0..=d).map(|_| scale * rng.standard_normal()).collect(),
            v: (0..out_dim).map(|_| scale * rng.standard_normal()).collect(),
        })
        .collect();
    AtomicNet::with_neurons(d, out_dim, Activation::Relu, neurons).expect("consistent shapes")
}

pub fn params(net: &AtomicNet) -> Vec<f64> {
    let mut out: Vec<f64> = net.neurons.iter().flat_map(|n| n.w.iter().copied()).collect();
    out.extend(net.neurons.iter().flat_map(|n| n.v.iter().copied()));
    out
}

pub fn set_params(net: &mut AtomicNet, theta: &[f64]) {
    let p = net.input_dim() + 1;
    let k = net.width();
    let dout = net.output_dim();
    assert_eq!(theta.len(), k * (p + dout), "parameter length");
    for (i, n) in net.neurons.iter_mut().enumerate() {
        n.w.copy_from_slice(&theta[i * p..(i + 1) * p]);
        n.v.copy_from_slice(&theta[k * p + i * dout..k * p + (i + 1) * dout]);
    }
}

pub fn regularization(reg: Regularizer, lambda: f64, theta: &[f64]) -> f64 {
    match reg {
        Regularizer::WeightDecay => 0.5 * lambda * theta.iter().map(|x| x * x).sum::<f64>(),
        Regularizer::L1 => lambda * theta.iter().map(|x| x.abs()).sum::<f64>(),
        Regularizer::None => 0.0,
    }
}

/// Precomputed inputs with the bias coordinate appended, one row per sample.
struct Batch {
    xbar: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    p: usize,
    dout: usize,
}

impl Batch {
    fn new(net: &AtomicNet, data: &Dataset) -> Result<Self> {
        let (d, n) = data.x.shape();
        if d != net.input_dim() || data.y.rows() != net.output_dim() {
            return Err(Error::Shape(format!(
                "data is {}→{}, net is {}→{}",
                d,
                data.y.rows(),
                net.input_dim(),
                net.output_dim()
            )));
        }
        let p = d + 1;
        let mut xbar = vec![1.0; n * p];
        for i in 0..n {
            for j in 0..d {
                xbar[i * p + j] = data.x.get(j, i);
            }
        }
        let dout = data.y.rows();
        let mut y = vec![0.0; n * dout];
        for i in 0..n {
            for j in 0..dout {
                y[i * dout + j] = data.y.get(j, i);
            }
        }
        Ok(Self { xbar, y, n, p, dout })
    }
}

/// Scratch buffers reused across iterations.
struct Workspace {
    z: Vec<f64>,
    f: Vec<f64>,
}

/// Squared loss and its gradient (loss only, no regularizer) at `θ`.
fn loss_grad(act: Activation, k: usize, theta: &[f64], b: &Batch, ws: &mut Workspace, grad: &mut [f64]) -> f64 {
    let (n, p, dout) = (b.n, b.p, b.dout);
    let voff = k * p;
    ws.f.iter_mut().for_each(|x| *x = 0.0);
    for kk in 0..k {
        let w = &theta[kk * p..(kk + 1) * p];
        let v = &theta[voff + kk * dout..voff + (kk + 1) * dout];
        for i in 0..n {
            let xi = &b.xbar[i * p..(i + 1) * p];
            let z: f64 = w.iter().zip(xi).map(|(a, c)| a * c).sum();
            ws.z[kk * n + i] = z;
            let a = act.apply(z);
            if a != 0.0 {
                let fi = &mut ws.f[i * dout..(i + 1) * dout];
                for j in 0..dout {
                    fi[j] += v[j] * a;
                }
            }
        }
    }
    // f ← f − y (the residual).
    let mut loss = 0.0;
    for (fi, yi) in ws.f.iter_mut().zip(&b.y) {
        *fi -= yi;
        loss += *fi * *fi;
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    for kk in 0..k {
        let (gw_all, gv_all) = grad.split_at_mut(voff);
        let gw = &mut gw_all[kk * p..(kk + 1) * p];
        let gv = &mut gv_all[kk * dout..(kk + 1) * dout];
        let v = &theta[voff + kk * dout..voff + (kk + 1) * dout];
        for i in 0..n {
            let z = ws.z[kk * n + i];
            let a = act.apply(z);
            let ri = &ws.f[i * dout..(i + 1) * dout];
            if a != 0.0 {
                for j in 0..dout {
                    gv[j] += 2.0 * ri[j] * a;
                }
            }
            let ds = act.derivative(z);
            if ds != 0.0 {
                let vr: f64 = v.iter().zip(ri).map(|(a, c)| a * c).sum();
                let s = 2.0 * ds * vr;
                let xi = &b.xbar[i * p..(i + 1) * p];
                for j in 0..p {
                    gw[j] += s * xi[j];
                }
            }
        }
    }
    loss
}

fn add_reg_grad(reg: Regularizer, lambda: f64, theta: &[f64], grad: &mut [f64]) {
    match reg {
        Regularizer::WeightDecay => grad.iter_mut().zip(theta).for_each(|(g, t)| *g += lambda * t),
        Regularizer::L1 => grad.iter_mut().zip(theta).for_each(|(g, t)| {
            if *t != 0.0 {
                *g += lambda * t.signum();
            }
        }),
        Regularizer::None => {}
    }
}

/// Training objective and its (sub)gradient in the flat parameter order.
pub fn objective_and_gradient(
    net: &AtomicNet,
    data: &Dataset,
    reg: Regularizer,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let b = Batch::new(net, data)?;
    let theta = params(net);
    let k = net.width();
    let mut ws = Workspace {
        z: vec![0.0; k * b.n],
        f: vec![0.0; b.n * b.dout],
    };
    let mut grad = vec![0.0; theta.len()];
    let loss = loss_grad(net.activation, k, &theta, &b, &mut ws, &mut grad);
    add_reg_grad(reg, lambda, &theta, &mut grad);
    Ok((loss + regularization(reg, lambda, &theta), grad))
}

/// Training objective `Σᵢ‖yᵢ − f(xᵢ)‖² + R(θ)`.
pub fn training_objective(net: &AtomicNet, data: &Dataset, reg: Regularizer, lambda: f64) -> Result<f64> {
    Ok(net.squared_loss(data)? + regularization(reg, lambda, &params(net)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    /// `(iteration, objective)` every [`TRACE_EVERY`] iterations and at the end.
    pub objective: Vec<(usize, f64)>,
}

pub fn train(net: &AtomicNet, data: &Dataset, config: &TrainConfig) -> Result<(AtomicNet, TrainTrace)> {
    config.validate()?;
    let b = Batch::new(net, data)?;
    let k = net.width();
    let mut theta = params(net);
    let mut ws = Workspace {
        z: vec![0.0; k * b.n],
        f: vec![0.0; b.n * b.dout],
    };
    let mut grad = vec![0.0; theta.len()];
    let mut m = vec![0.0; theta.len()];
    let mut s = vec![0.0; theta.len()];
    let (b1, b2, eps, lr) = (config.adam_beta1, config.adam_beta2, config.adam_eps, config.lr);
    let mut trace = TrainTrace { objective: Vec::new() };
    let (mut p1, mut p2) = (1.0f64, 1.0f64);
    for it in 0..config.iters {
        let loss = loss_grad(net.activation, k, &theta, &b, &mut ws, &mut grad);
        let obj = loss + regularization(config.reg, config.lambda, &theta);
        if !obj.is_finite() {
            return Err(Error::Diverged(it));
        }
        if it % TRACE_EVERY == 0 {
            trace.objective.push((it, obj));
        }
        add_reg_grad(config.reg, config.lambda, &theta, &mut grad);
        p1 *= b1;
        p2 *= b2;
        let c1 = 1.0 / (1.0 - p1);
        let c2 = 1.0 / (1.0 - p2);
        for i in 0..theta.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            s[i] = b2 * s[i] + (1.0 - b2) * g * g;
            theta[i] -= lr * (m[i] * c1) / ((s[i] * c2).sqrt() + eps);
        }
    }
    let mut out = net.clone();
    set_params(&mut out, &theta);
    let final_obj = training_objective(&out, data, config.reg, config.lambda)?;
    if !final_obj.is_finite() {
        return Err(Error::Diverged(config.iters));
    }
    trace.objective.push((config.iters, final_obj));
    Ok((out, trace))
}

/// Neurons whose output weight has ℓ¹ norm above `eps`.
pub fn active_neurons(net: &AtomicNet, eps: f64) -> Vec<usize> {
    (0..net.width())
        .filter(|&k| net.neurons[k].v.iter().map(|x| x.abs()).sum::<f64>() > eps)
        .collect()
}

/// Fraction of active neurons with at least two outputs above `eps`.
pub fn shared_fraction(net: &AtomicNet, eps: f64) -> f64 {
    let active = active_neurons(net, eps);
    if active.is_empty() {
        return 0.0;
    }
    let shared = active
        .iter()
        .filter(|&&k| net.neurons[k].v.iter().filter(|x| x.abs() > eps).count() >= 2)
        .count();
    shared as f64 / active.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronCoordinate {
    pub theta: f64,
    pub b: f64,
    pub v_norm: f64,
    pub masses: Vec<f64>,
}

/// Polar coordinates of 2-D neurons after absorbing `‖(w₁, w₂)‖` into `v`.
pub fn neuron_coordinates(net: &AtomicNet) -> Result<Vec<NeuronCoordinate>> {
    if net.input_dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "neuron coordinates need d = 2, got {}",
            net.input_dim()
        )));
    }
    let active = active_neurons(net, 0.0);
    net.neurons
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let s = (n.w[0] * n.w[0] + n.w[1] * n.w[1]).sqrt();
            if s == 0.0 {
                if active.binary_search(&k).is_ok() {
                    return Err(Error::InvalidArgument(format!(
                        "neuron {k} has zero input weight and nonzero output weight"
                    )));
                }
                return Ok(NeuronCoordinate {
                    theta: 0.0,
                    b: 0.0,
                    v_norm: 0.0,
                    masses: vec![0.0; n.v.len()],
                });
            }
            let mut theta = n.w[1].atan2(n.w[0]);
            if theta <= -std::f64::consts::PI {
                theta = std::f64::consts::PI;
            }
            let v: Vec<f64> = n.v.iter().map(|x| x * s).collect();
            Ok(NeuronCoordinate {
                theta,
                b: n.w[2] / s,
                v_norm: norm2(&v),
                masses: v.iter().map(|x| x.abs()).collect(),
            })
        })
        .collect()
}

/// Largest relative gap `|‖w‖ − ‖v‖| / max(‖w‖, ‖v‖)` over active neurons.
pub fn balance_gap(net: &AtomicNet, eps_active: f64) -> f64 {
    active_neurons(net, eps_active)
        .into_iter()
        .map(|k| {
            let (a, b) = (norm2(&net.neurons[k].w), norm2(&net.neurons[k].v));
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (a - b).abs() / m
            }
        })
        .fold(0.0, f64::max)
}
