//! Finite-width vector-valued networks viewed as atomic measures.
//!
//! A network `x ↦ Σₖ vₖ σ(wₖᵀ[x; 1])` with a positively homogeneous `σ` is
//! represented by the measure `Σₖ vₖ δ_{wₖ/‖wₖ‖}` once input-weight norms are
//! absorbed into the output weights. Its variation norm is `Σₖ ‖vₖ‖₂` over
//! the coalesced atoms.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::container::{Tensor, TensorContainer};
use crate::error::{Error, Result};
use crate::tensor::{norm2, Matrix};

/// Two normalized input weights closer than this are treated as one atom.
pub const COALESCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Abs,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::LeakyRelu(a) => {
                if t > 0.0 {
                    t
                } else {
                    a * t
                }
            }
            Activation::Abs => t.abs(),
            Activation::Linear => t,
        }
    }

    /// Derivative with the value at the kink fixed to that of the left piece
    /// (zero for ReLU).
    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if t > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Abs => {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky_relu({a})"),
            Activation::Abs => write!(f, "abs"),
            Activation::Linear => write!(f, "linear"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "abs" => Ok(Activation::Abs),
            "linear" => Ok(Activation::Linear),
            _ => {
                let slope = s
                    .strip_prefix("leaky_relu(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.parse::<f64>().ok())
                    .filter(|a| a.is_finite())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown activation {s:?}")))?;
                Ok(Activation::LeakyRelu(slope))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neuron {
    /// Input weights; the last entry multiplies the constant 1.
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

/// Inputs `x` (d×N) and targets `y` (D×N), one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::Shape(format!("{} inputs but {} targets", x.cols(), y.cols())));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicNet {
    d: usize,
    out_dim: usize,
    pub neurons: Vec<Neuron>,
    pub activation: Activation,
}

impl AtomicNet {
    pub fn new(d: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            d,
            out_dim,
            neurons: Vec::new(),
            activation,
        }
    }

    pub fn with_neurons(d: usize, out_dim: usize, activation: Activation, neurons: Vec<Neuron>) -> Result<Self> {
        let mut net = Self::new(d, out_dim, activation);
        for n in neurons {
            net.push(n)?;
        }
        Ok(net)
    }

    /// Builds from `W` (K×(d+1)) and `V` (D×K).
    pub fn from_matrices(w: &Matrix, v: &Matrix, activation: Activation) -> Result<Self> {
        if w.rows() != v.cols() || w.cols() == 0 {
            return Err(Error::Shape(format!(
                "W is {}x{}, V is {}x{}",
                w.rows(),
                w.cols(),
                v.rows(),
                v.cols()
            )));
        }
        let neurons = (0..w.rows())
            .map(|k| Neuron {
                w: w.row(k).to_vec(),
                v: v.col(k),
            })
            .collect();
        Self::with_neurons(w.cols() - 1, v.rows(), activation, neurons)
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.out_dim
    }

    pub fn width(&self) -> usize {
        self.neurons.len()
    }

    pub fn push(&mut self, n: Neuron) -> Result<()> {
        if n.w.len() != self.d + 1 || n.v.len() != self.out_dim {
            return Err(Error::Shape(format!(
                "neuron with |w|={}, |v|={} in a net with d={}, D={}",
                n.w.len(),
                n.v.len(),
                self.d,
                self.out_dim
            )));
        }
        if !n.w.iter().chain(&n.v).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("neuron weights".into()));
        }
        self.neurons.push(n);
        Ok(())
    }

    pub fn w_matrix(&self) -> Matrix {
        Matrix::from_fn(self.width(), self.d + 1, |k, j| self.neurons[k].w[j])
    }

    pub fn v_matrix(&self) -> Matrix {
        Matrix::from_fn(self.out_dim, self.width(), |i, k| self.neurons[k].v[i])
    }

    #[inline]
    fn pre_activation(&self, w: &[f64], x: &[f64]) -> f64 {
        w[..self.d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.d]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Shape(format!(
                "input has dimension {}, net expects {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.out_dim];
        for n in &self.neurons {
            let a = self.activation.apply(self.pre_activation(&n.w, x));
            if a != 0.0 {
                out.iter_mut().zip(&n.v).for_each(|(o, v)| *o += v * a);
            }
        }
        Ok(out)
    }

    /// `L ‖x̄‖₂ Σₖ ‖vₖ‖₂ ‖wₖ‖₂` with `L` the activation's Lipschitz constant:
    /// the magnitude that bounds evaluation round-off, including
    /// cancellation inside `wₖᵀx̄`.
    pub fn evaluation_scale(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let lip = self.activation.apply(1.0).abs().max(self.activation.apply(-1.0).abs());
        let xbar = (x.iter().map(|t| t * t).sum::<f64>() + 1.0).sqrt();
        Ok(lip * xbar * self.path_norm())
    }

    /// Evaluates every column of `x` (d×N), returning D×N.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.d {
            return Err(Error::Shape(format!(
                "inputs have {} rows, net expects {}",
                x.rows(),
                self.d
            )));
        }
        let n = x.cols();
        let xt = x.transpose();
        let mut out = Matrix::zeros(self.out_dim, n);
        for neuron in &self.neurons {
            for i in 0..n {
                let a = self.activation.apply(self.pre_activation(&neuron.w, xt.row(i)));
                if a != 0.0 {
                    for (r, v) in neuron.v.iter().enumerate() {
                        out.set(r, i, out.get(r, i) + v * a);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Absorbs `‖wₖ‖₂` into `vₖ`; neurons with `vₖ = 0` are dropped.
    pub fn normalize(&self) -> Result<Self> {
        let mut out = Self::new(self.d, self.out_dim, self.activation);
        for (k, n) in self.neurons.iter().enumerate() {
            if n.v.iter().all(|&x| x == 0.0) {
                continue;
            }
            let s = norm2(&n.w);
            if s == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "neuron {k} has zero input weight and nonzero output weight"
                )));
            }
            out.neurons.push(Neuron {
                w: n.w.iter().map(|x| x / s).collect(),
                v: n.v.iter().map(|x| x * s).collect(),
            });
        }
        Ok(out)
    }

    /// Normalizes, then gives every neuron equal input and output norms.
    pub fn rebalance(&self) -> Result<Self> {
        let mut out = self.normalize()?;
        for n in &mut out.neurons {
            let s = norm2(&n.v).sqrt();
            n.w.iter_mut().for_each(|x| *x *= s);
            n.v.iter_mut().for_each(|x| *x /= s);
        }
        Ok(out)
    }

    /// `Σₖ ‖vₖ‖₂ ‖wₖ‖₂`.
    pub fn path_norm(&self) -> f64 {
        self.neurons.iter().map(|n| norm2(&n.v) * norm2(&n.w)).sum()
    }

    /// `½ Σₖ (‖vₖ‖² + ‖wₖ‖²)`.
    pub fn weight_decay_cost(&self) -> f64 {
        0.5 * self
            .neurons
            .iter()
            .map(|n| n.v.iter().chain(&n.w).map(|x| x * x).sum::<f64>())
            .sum::<f64>()
    }

    /// The coalesced atomic measure of the normalized net.
    pub fn measure(&self) -> Result<AtomicMeasure> {
        let normalized = self.normalize()?;
        let mut atoms: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for n in normalized.neurons {
            let hit = atoms
                .iter_mut()
                .find(|(u, _)| u.iter().zip(&n.w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= COALESCE_TOL);
            match hit {
                Some((_, a)) => a.iter_mut().zip(&n.v).for_each(|(a, v)| *a += v),
                None => atoms.push((n.w, n.v)),
            }
        }
        Ok(AtomicMeasure { atoms })
    }

    pub fn variation_norm(&self) -> Result<f64> {
        Ok(self.measure()?.atoms.iter().map(|(_, a)| norm2(a)).sum())
    }

    /// Removes neuron `i` and adds its output weight to neuron `j`.
    pub fn merge_neurons(&self, i: usize, j: usize) -> Result<Self> {
        let k = self.width();
        if i >= k || j >= k || i == j {
            return Err(Error::InvalidArgument(format!(
                "cannot merge neuron {i} into {j} in a net of width {k}"
            )));
        }
        let mut out = self.clone();
        let vi = out.neurons[i].v.clone();
        out.neurons[j].v.iter_mut().zip(&vi).for_each(|(a, b)| *a += b);
        out.neurons.remove(i);
        Ok(out)
    }

    /// `Σᵢ ‖yᵢ − f(xᵢ)‖² `.
    pub fn squared_loss(&self, data: &Dataset) -> Result<f64> {
        if data.y.rows() != self.out_dim {
            return Err(Error::Shape(format!(
                "targets have {} rows, net has {} outputs",
                data.y.rows(),
                self.out_dim
            )));
        }
        let f = self.forward(&data.x)?;
        Ok(f.as_slice()
            .iter()
            .zip(data.y.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// Squared loss plus `λ` times the variation norm.
    pub fn objective(&self, data: &Dataset, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        Ok(self.squared_loss(data)? + lambda * self.variation_norm()?)
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        vec![
            Tensor::from_matrix("W", &self.w_matrix()),
            Tensor::from_matrix("V", &self.v_matrix()),
        ]
    }

    pub fn attributes(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("activation".to_string(), self.activation.to_string())])
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let activation = c
            .attributes
            .get("activation")
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(Activation::Relu);
        Self::from_matrices(&c.matrix("W")?, &c.matrix("V")?, activation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureNorm {
    /// `Σₖ ‖aₖ‖_p`.
    PM,
    /// `(Σⱼ (Σₖ |aₖⱼ|)^p)^{1/p}`.
    MP,
}

/// Finite sum of vector-weighted Dirac masses at distinct unit locations.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    pub atoms: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AtomicMeasure {
    pub fn norm(&self, p: f64, mode: MeasureNorm) -> Result<f64> {
        measure_norm(self, p, mode)
    }
}

pub fn measure_norm(m: &AtomicMeasure, p: f64, mode: MeasureNorm) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    let pnorm = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        if p.is_infinite() {
            xs.fold(0.0, |m, x| m.max(x.abs()))
        } else {
            xs.map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        }
    };
    Ok(match mode {
        MeasureNorm::PM => m.atoms.iter().map(|(_, a)| pnorm(&mut a.iter().copied())).sum(),
        MeasureNorm::MP => {
            let dim = m.atoms.first().map_or(0, |(_, a)| a.len());
            let totals: Vec<f64> = (0..dim)
                .map(|j| m.atoms.iter().map(|(_, a)| a[j].abs()).sum())
                .collect();
            pnorm(&mut totals.into_iter())
        }
    })
}
