//! Minimal dense-layer substrate with exact manual backpropagation.
//!
//! All arithmetic is f64 with a fixed summation order; given identical
//! inputs every operation here is bitwise deterministic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor, // [in_dim x out_dim]
    pub bias: Tensor,    // [out_dim]
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape().len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "dense layer: weights {:?}, bias {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        if weights.cols() != bias.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "dense layer: weights out dim {} vs bias dim {}",
                weights.cols(),
                bias.shape()[0]
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform initialization from the experiment RNG.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        DenseLayer {
            weights: Tensor::from_vec(&[in_dim, out_dim], data).unwrap(),
            bias: Tensor::zeros(&[out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Forward intermediates needed for an exact backward pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerCache {
    pub input: Tensor,
    pub pre_activation: Tensor,
}

/// Per-layer parameter gradients, same shapes as (weights, bias).
pub type ParamGrads = Vec<(Tensor, Tensor)>;

pub fn mlp_forward(layers: &[DenseLayer], input: &Tensor) -> Result<(Tensor, Vec<LayerCache>)> {
    if input.shape().len() != 2 || input.rows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "mlp_forward: input shape {:?}",
            input.shape()
        )));
    }
    let mut caches = Vec::with_capacity(layers.len());
    let mut current = input.clone();
    for layer in layers {
        if current.cols() != layer.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "mlp_forward: input cols {} vs layer in_dim {}",
                current.cols(),
                layer.in_dim()
            )));
        }
        let mut pre = current.matmul(&layer.weights)?;
        for r in 0..pre.rows() {
            for c in 0..pre.cols() {
                let v = pre.at(r, c) + layer.bias.data()[c];
                pre.set(r, c, v);
            }
        }
        let mut out = pre.clone();
        if layer.activation == Activation::Relu {
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        caches.push(LayerCache {
            input: current,
            pre_activation: pre,
        });
        current = out;
    }
    current.check_finite("mlp_forward")?;
    Ok((current, caches))
}

pub fn mlp_backward(
    layers: &[DenseLayer],
    caches: &[LayerCache],
    grad_output: &Tensor,
) -> Result<(Tensor, ParamGrads)> {
    if layers.len() != caches.len() {
        return Err(Error::ShapeMismatch(format!(
            "mlp_backward: {} layers vs {} caches",
            layers.len(),
            caches.len()
        )));
    }
    let mut grad = grad_output.clone();
    let mut param_grads_rev: ParamGrads = Vec::with_capacity(layers.len());
    for (layer, cache) in layers.iter().zip(caches.iter()).rev() {
        if !grad.same_shape(&cache.pre_activation) {
            return Err(Error::ShapeMismatch(format!(
                "mlp_backward: upstream grad {:?} vs pre-activation {:?}",
                grad.shape(),
                cache.pre_activation.shape()
            )));
        }
        // Gate through the activation.
        let mut grad_pre = grad;
        if layer.activation == Activation::Relu {
            for (g, p) in grad_pre
                .data_mut()
                .iter_mut()
                .zip(cache.pre_activation.data().iter())
            {
                if *p <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let grad_w = cache.input.transpose()?.matmul(&grad_pre)?;
        let mut grad_b = Tensor::zeros(&[layer.out_dim()]);
        for r in 0..grad_pre.rows() {
            for c in 0..grad_pre.cols() {
                grad_b.data_mut()[c] += grad_pre.at(r, c);
            }
        }
        grad = grad_pre.matmul(&layer.weights.transpose()?)?;
        param_grads_rev.push((grad_w, grad_b));
    }
    grad.check_finite("mlp_backward")?;
    param_grads_rev.reverse();
    Ok((grad, param_grads_rev))
}

/// One plain SGD step, parameter entry minus lr times gradient entry.
pub fn sgd_step(layers: &mut [DenseLayer], grads: &ParamGrads, lr: f64) -> Result<()> {
    if layers.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "sgd_step: {} layers vs {} gradients",
            layers.len(),
            grads.len()
        )));
    }
    for (layer, (gw, gb)) in layers.iter_mut().zip(grads.iter()) {
        if !layer.weights.same_shape(gw) || !layer.bias.same_shape(gb) {
            return Err(Error::ShapeMismatch("sgd_step: gradient shape".into()));
        }
        for (w, g) in layer.weights.data_mut().iter_mut().zip(gw.data().iter()) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias.data_mut().iter_mut().zip(gb.data().iter()) {
            *b -= lr * g;
        }
    }
    Ok(())
}

/// Central finite differences over every parameter entry; the test oracle
/// for the analytic backward pass.
pub fn finite_diff_grad<F>(loss_fn: F, layers: &[DenseLayer], h: f64) -> Result<ParamGrads>
where
    F: Fn(&[DenseLayer]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::DomainError("finite_diff_grad: h must be > 0".into()));
    }
    let mut work = layers.to_vec();
    let mut grads = Vec::with_capacity(layers.len());
    for li in 0..layers.len() {
        let mut gw = Tensor::zeros(layers[li].weights.shape());
        for i in 0..gw.len() {
            let orig = work[li].weights.data()[i];
            work[li].weights.data_mut()[i] = orig + h;
            let lp = loss_fn(&work)?;
            work[li].weights.data_mut()[i] = orig - h;
            let lm = loss_fn(&work)?;
            work[li].weights.data_mut()[i] = orig;
            let g = (lp - lm) / (2.0 * h);
            if !g.is_finite() {
                return Err(Error::NonFinite("finite_diff_grad"));
            }
            gw.data_mut()[i] = g;
        }
        let mut gb = Tensor::zeros(layers[li].bias.shape());
        for i in 0..gb.len() {
            let orig = work[li].bias.data()[i];
            work[li].bias.data_mut()[i] = orig + h;
            let lp = loss_fn(&work)?;
            work[li].bias.data_mut()[i] = orig - h;
            let lm = loss_fn(&work)?;
            work[li].bias.data_mut()[i] = orig;
            let g = (lp - lm) / (2.0 * h);
            if !g.is_finite() {
                return Err(Error::NonFinite("finite_diff_grad"));
            }
            gb.data_mut()[i] = g;
        }
        grads.push((gw, gb));
    }
    Ok(grads)
}

/// Total number of scalar parameters across layers.
pub fn param_count(layers: &[DenseLayer]) -> usize {
    layers
        .iter()
        .map(|l| l.weights.len() + l.bias.len())
        .sum()
}
