//! A two-hidden-layer ReLU network trained with Adam and weight decay, used
//! as the subject of layer compression.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::compress::ChainNet;
use crate::error::{Error, Result};
use crate::norms::{Activation, AtomicNet, Dataset};
use crate::rng::CounterRng;
use crate::tensor::Matrix;

/// Gaussian clusters around random centers, labels one-hot encoded.
pub fn synthetic_classification(n: usize, d: usize, classes: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 || classes < 2 {
        return Err(Error::InvalidArgument(
            "need samples, features and at least two classes".into(),
        ));
    }
    let mut rng = CounterRng::stream(seed, "classes.centers", 0);
    let centers = Matrix::from_fn(classes, d, |_, _| 1.5 * rng.standard_normal());
    let mut rng = CounterRng::stream(seed, "classes.samples", 0);
    let mut x = Matrix::zeros(d, n);
    let mut y = Matrix::zeros(classes, n);
    for i in 0..n {
        let c = rng.below(classes);
        y.set(c, i, 1.0);
        for r in 0..d {
            x.set(r, i, centers.get(c, r) + rng.standard_normal());
        }
    }
    Dataset::new(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlpConfig {
    pub widths: [usize; 2],
    pub lambda: f64,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            widths: [256, 256],
            lambda: 1e-4,
            lr: 1e-3,
            iters: 1500,
            seed: 0,
        }
    }
}

/// `x ↦ W₃ σ(W₂ [σ(W₁ [x; 1]); 1])`; the output layer has no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
}

fn with_ones(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().insert_row(m.nrows(), 1.0)
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|x| if x > 0.0 { x } else { 0.0 })
}

impl Mlp {
    /// He initialization from the `mlp.init` stream.
    pub fn init(d: usize, widths: [usize; 2], classes: usize, seed: u64) -> Self {
        let mut rng = CounterRng::stream(seed, "mlp.init", 0);
        let mut layer = |rows: usize, cols: usize, fan_in: usize| {
            let s = (2.0 / fan_in as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols).map(|_| s * rng.standard_normal()).collect();
            DMatrix::from_row_slice(rows, cols, &data)
        };
        Self {
            w1: layer(widths[0], d + 1, d),
            w2: layer(widths[1], widths[0] + 1, widths[0]),
            w3: layer(classes, widths[1], widths[1]),
        }
    }

    pub fn forward(&self, x: &Matrix) -> DMatrix<f64> {
        let h1 = relu(&(&self.w1 * with_ones(&x.to_nalgebra())));
        let h2 = relu(&(&self.w2 * with_ones(&h1)));
        &self.w3 * h2
    }

    pub fn sum_sq(&self) -> f64 {
        self.w1.norm_squared() + self.w2.norm_squared() + self.w3.norm_squared()
    }

    /// Mean squared loss, weight-decay objective and gradients (`W₁, W₂, W₃`).
    fn loss_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> (f64, f64, [DMatrix<f64>; 3]) {
        let n = x.ncols() as f64;
        let xb = with_ones(x);
        let p1 = &self.w1 * &xb;
        let h1b = with_ones(&relu(&p1));
        let p2 = &self.w2 * &h1b;
        let h2 = relu(&p2);
        let r = &self.w3 * &h2 - y;
        let loss = r.norm_squared() / n;
        let g_out = r * (2.0 / n);
        let g3 = &g_out * h2.transpose() + &self.w3 * lambda;
        let mut g_p2 = self.w3.transpose() * &g_out;
        g_p2.zip_apply(&p2, |g, p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        let g2 = &g_p2 * h1b.transpose() + &self.w2 * lambda;
        let k1 = self.w1.nrows();
        let mut g_p1 = self.w2.columns(0, k1).transpose() * &g_p2;
        g_p1.zip_apply(&p1, |g, p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        let g1 = &g_p1 * xb.transpose() + &self.w1 * lambda;
        (loss, loss + 0.5 * lambda * self.sum_sq(), [g1, g2, g3])
    }

    /// The network as a chain of two layers: the first with identity output
    /// weights, the second with `W₃` as its output weights.
    pub fn to_chain(&self) -> Result<ChainNet> {
        let k1 = self.w1.nrows();
        let l1 = AtomicNet::from_matrices(
            &Matrix::from_nalgebra(&self.w1),
            &Matrix::identity(k1),
            Activation::Relu,
        )?;
        let l2 = AtomicNet::from_matrices(
            &Matrix::from_nalgebra(&self.w2),
            &Matrix::from_nalgebra(&self.w3),
            Activation::Relu,
        )?;
        ChainNet::new(vec![l1, l2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlpTrace {
    /// `(iteration, mean squared loss, objective)` every 100 iterations and
    /// at the end.
    pub points: Vec<(usize, f64, f64)>,
}

pub fn train_mlp(data: &Dataset, config: &MlpConfig) -> Result<(Mlp, MlpTrace)> {
    if !(config.lr > 0.0) || config.iters == 0 || !(config.lambda >= 0.0) {
        return Err(Error::InvalidArgument(
            "lr > 0, iters ≥ 1 and lambda ≥ 0 required".into(),
        ));
    }
    let mut net = Mlp::init(data.x.rows(), config.widths, data.y.rows(), config.seed);
    let x = data.x.to_nalgebra();
    let y = data.y.to_nalgebra();
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let zeros = |m: &DMatrix<f64>| DMatrix::<f64>::zeros(m.nrows(), m.ncols());
    let mut m = [zeros(&net.w1), zeros(&net.w2), zeros(&net.w3)];
    let mut s = m.clone();
    let (mut p1, mut p2) = (1.0f64, 1.0f64);
    let mut trace = MlpTrace { points: Vec::new() };
    for it in 0..config.iters {
        let (loss, obj, grads) = net.loss_grad(&x, &y, config.lambda);
        if !obj.is_finite() {
            return Err(Error::Diverged(it));
        }
        if it % 100 == 0 {
            trace.points.push((it, loss, obj));
        }
        p1 *= b1;
        p2 *= b2;
        let (c1, c2) = (1.0 / (1.0 - p1), 1.0 / (1.0 - p2));
        let params = [&mut net.w1, &mut net.w2, &mut net.w3];
        for (((w, g), mi), si) in params.into_iter().zip(&grads).zip(&mut m).zip(&mut s) {
            for j in 0..w.len() {
                mi[j] = b1 * mi[j] + (1.0 - b1) * g[j];
                si[j] = b2 * si[j] + (1.0 - b2) * g[j] * g[j];
                w[j] -= config.lr * (mi[j] * c1) / ((si[j] * c2).sqrt() + eps);
            }
        }
    }
    let (loss, obj, _) = net.loss_grad(&x, &y, config.lambda);
    trace.points.push((config.iters, loss, obj));
    Ok((net, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_matches_forward() {
        let data = synthetic_classification(40, 5, 3, 1).unwrap();
        let net = Mlp::init(5, [7, 6], 3, 2);
        let chain = net.to_chain().unwrap();
        let a = Matrix::from_nalgebra(&net.forward(&data.x));
        let b = chain.forward(&data.x).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-12 * a.max_abs().max(1.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let data = synthetic_classification(15, 3, 3, 4).unwrap();
        let net = Mlp::init(3, [5, 4], 3, 5);
        let (x, y) = (data.x.to_nalgebra(), data.y.to_nalgebra());
        let lambda = 0.05;
        let (_, _, g) = net.loss_grad(&x, &y, lambda);
        let h = 1e-6;
        for layer in 0..3 {
            for j in 0..g[layer].len() {
                let eval = |delta: f64| {
                    let mut p = net.clone();
                    [&mut p.w1, &mut p.w2, &mut p.w3][layer][j] += delta;
                    p.loss_grad(&x, &y, lambda).1
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = g[layer][j];
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                    "layer {layer} entry {j}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let data = synthetic_classification(60, 4, 3, 7).unwrap();
        let cfg = MlpConfig {
            widths: [12, 10],
            iters: 300,
            ..Default::default()
        };
        let (a, ta) = train_mlp(&data, &cfg).unwrap();
        let (b, _) = train_mlp(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(ta.points.last().unwrap().1 < 0.5 * ta.points[0].1);
    }
}
