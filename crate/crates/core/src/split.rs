//! Split learning computation: client-side forward to cut-layer
//! activations, server-side logit-adjusted loss, backpropagated
//! activation gradients, and both update rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, DenseLayer, LayerCache, ParamGrads};
use crate::tensor::Tensor;

/// Floor applied to P_k(y) for classes absent from a client before the log.
const ABSENT_CLASS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitModel {
    pub client_layers: Vec<DenseLayer>,
    pub server_layers: Vec<DenseLayer>,
    pub num_classes: usize,
}

impl SplitModel {
    pub fn new(
        client_layers: Vec<DenseLayer>,
        server_layers: Vec<DenseLayer>,
        num_classes: usize,
    ) -> Result<Self> {
        let cut_out = client_layers
            .last()
            .ok_or_else(|| Error::ValidationError("split model: empty client side".into()))?
            .out_dim();
        let server_in = server_layers
            .first()
            .ok_or_else(|| Error::ValidationError("split model: empty server side".into()))?
            .in_dim();
        if cut_out != server_in {
            return Err(Error::ShapeMismatch(format!(
                "split model: cut dim {cut_out} vs server input {server_in}"
            )));
        }
        if server_layers.last().unwrap().out_dim() != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "split model: server output {} vs {} classes",
                server_layers.last().unwrap().out_dim(),
                num_classes
            )));
        }
        Ok(SplitModel {
            client_layers,
            server_layers,
            num_classes,
        })
    }

    /// Cut dimension d: the activation width exchanged over the wire.
    pub fn cut_dim(&self) -> usize {
        self.client_layers.last().unwrap().out_dim()
    }
}

/// A minibatch of cut-layer activations in flight to (or at) the server.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationBatch {
    pub activations: Tensor, // [B x d]
    pub labels: Vec<usize>,
    pub client_id: usize,
    /// Training progress n(A), stamped by the server on receipt.
    pub progress_stamp: u64,
    /// Label distribution P_k of the producing client.
    pub label_dist: Vec<f64>,
}

impl ActivationBatch {
    pub fn rows(&self) -> usize {
        self.activations.rows()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.labels.len() != self.activations.rows() {
            return Err(Error::ShapeMismatch(format!(
                "activation batch: {} labels vs {} rows",
                self.labels.len(),
                self.activations.rows()
            )));
        }
        if self.label_dist.len() != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "activation batch: label_dist length {} vs {} classes",
                self.label_dist.len(),
                num_classes
            )));
        }
        let sum: f64 = self.label_dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.label_dist.iter().any(|p| *p < 0.0) {
            return Err(Error::ValidationError(format!(
                "activation batch: label_dist sums to {sum}"
            )));
        }
        Ok(())
    }
}

/// Normalized label histogram over `num_classes` classes.
pub fn label_histogram(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut hist = vec![0.0; num_classes];
    for &y in labels {
        hist[y] += 1.0;
    }
    let total = labels.len() as f64;
    if total > 0.0 {
        for h in &mut hist {
            *h /= total;
        }
    }
    hist
}

/// Client-side forward pass producing the activation batch that goes up
/// the wire, plus the caches needed for the later backward pass.
pub fn client_forward(
    client_layers: &[DenseLayer],
    inputs: &Tensor,
    labels: &[usize],
    client_id: usize,
    label_dist: Vec<f64>,
) -> Result<(ActivationBatch, Vec<LayerCache>)> {
    if labels.len() != inputs.rows() || inputs.rows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "client_forward: {} labels vs {} input rows",
            labels.len(),
            inputs.rows()
        )));
    }
    let (activations, caches) = nn::mlp_forward(client_layers, inputs)?;
    Ok((
        ActivationBatch {
            activations,
            labels: labels.to_vec(),
            client_id,
            progress_stamp: 0,
            label_dist,
        },
        caches,
    ))
}

/// Softmax cross-entropy over logit-adjusted scores s_y + log P_k(y).
///
/// The returned gradient is exact for the mean-over-batch loss.
pub fn logit_adjusted_loss(
    logits: &Tensor,
    labels: &[usize],
    label_dist: &[f64],
) -> Result<(f64, Tensor)> {
    let (b, m) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "logit_adjusted_loss: {} labels vs {} rows",
            labels.len(),
            b
        )));
    }
    if label_dist.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "logit_adjusted_loss: label_dist length {} vs {} classes",
            label_dist.len(),
            m
        )));
    }
    for &y in labels {
        if label_dist[y] <= 0.0 {
            return Err(Error::ZeroClassProbability(y));
        }
    }
    let log_prior: Vec<f64> = label_dist
        .iter()
        .map(|p| p.max(ABSENT_CLASS_FLOOR).ln())
        .collect();

    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&[b, m]);
    let inv_b = 1.0 / b as f64;
    for r in 0..b {
        // Stable softmax over adjusted scores.
        let mut max_adj = f64::NEG_INFINITY;
        for c in 0..m {
            let adj = logits.at(r, c) + log_prior[c];
            if adj > max_adj {
                max_adj = adj;
            }
        }
        let mut denom = 0.0;
        for c in 0..m {
            denom += (logits.at(r, c) + log_prior[c] - max_adj).exp();
        }
        let y = labels[r];
        let adj_y = logits.at(r, y) + log_prior[y] - max_adj;
        loss += denom.ln() - adj_y;
        for c in 0..m {
            let p = (logits.at(r, c) + log_prior[c] - max_adj).exp() / denom;
            let indicator = if c == y { 1.0 } else { 0.0 };
            grad.set(r, c, (p - indicator) * inv_b);
        }
    }
    loss *= inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("logit_adjusted_loss"));
    }
    grad.check_finite("logit_adjusted_loss")?;
    Ok((loss, grad))
}

/// One server-side forward+backward pass over an activation batch:
/// loss, server parameter gradients, and the activation gradient G_k.
pub fn server_loss_and_grads(
    server_layers: &[DenseLayer],
    batch: &ActivationBatch,
) -> Result<(f64, ParamGrads, Tensor)> {
    let (logits, caches) = nn::mlp_forward(server_layers, &batch.activations)?;
    let (loss, grad_logits) = logit_adjusted_loss(&logits, &batch.labels, &batch.label_dist)?;
    let (grad_activations, grad_params) = nn::mlp_backward(server_layers, &caches, &grad_logits)?;
    Ok((loss, grad_params, grad_activations))
}

/// One SGD step on the server-side model over a drained concat batch.
/// Returns the pre-step loss.
pub fn server_update(
    server_layers: &mut Vec<DenseLayer>,
    concat_batch: &ActivationBatch,
    lr: f64,
) -> Result<f64> {
    let (loss, grad_params, _) = server_loss_and_grads(server_layers, concat_batch)?;
    nn::sgd_step(server_layers, &grad_params, lr)?;
    Ok(loss)
}

/// One SGD step on the client-side model, chaining the received
/// activation gradient G_k through the cached forward pass.
pub fn client_backward_update(
    client_layers: &mut Vec<DenseLayer>,
    caches: &[LayerCache],
    grad_activations: &Tensor,
    lr: f64,
) -> Result<()> {
    let last = caches
        .last()
        .ok_or_else(|| Error::StaleCache("no cached forward pass".into()))?;
    if !grad_activations.same_shape(&last.pre_activation) {
        return Err(Error::StaleCache(format!(
            "gradient {:?} vs cached activations {:?}",
            grad_activations.shape(),
            last.pre_activation.shape()
        )));
    }
    let (_, grad_params) = nn::mlp_backward(client_layers, caches, grad_activations)?;
    nn::sgd_step(client_layers, &grad_params, lr)
}
