//! Per-label streaming weighted Gaussian activation distributions:
//! dynamic weighted mean/variance recurrences, a direct batch oracle,
//! balance-aware generation planning, and Gaussian sampling.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::split::{label_histogram, ActivationBatch};
use crate::tensor::Tensor;

/// A label needs at least this many observed rows before its estimator
/// may be sampled from (variance needs two points).
pub const MIN_SAMPLES: usize = 2;

const CHOLESKY_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceMode {
    Diagonal,
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Covariance {
    /// Per-coordinate variances.
    Diagonal(Vec<f64>),
    /// Row-major d x d matrix.
    Full(Vec<f64>),
}

/// Streaming weighted estimator (mu, Sigma, S, count) for one label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelGaussian {
    pub mean: Vec<f64>,
    pub cov: Covariance,
    pub weight_sum: f64,
    pub sample_count: usize,
}

impl LabelGaussian {
    pub fn new(dim: usize, mode: CovarianceMode) -> Self {
        let cov = match mode {
            CovarianceMode::Diagonal => Covariance::Diagonal(vec![0.0; dim]),
            CovarianceMode::Full => Covariance::Full(vec![0.0; dim * dim]),
        };
        LabelGaussian {
            mean: vec![0.0; dim],
            cov,
            weight_sum: 0.0,
            sample_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_eligible(&self) -> bool {
        self.sample_count >= MIN_SAMPLES
    }

    /// Dynamic weighted update: with S_N = S_{N-1} + s,
    ///   mu_N    = (S_{N-1} mu_{N-1} + s A) / S_N
    ///   Sigma_N = [S_{N-1}(Sigma_{N-1} + dmu dmu^T) + s (mu_N - A)(mu_N - A)^T] / S_N
    /// where dmu = mu_N - mu_{N-1}. Diagonal mode keeps only the
    /// diagonal of the rank-one terms.
    pub fn update(&mut self, row: &[f64], weight: f64) -> Result<()> {
        let d = self.dim();
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if weight <= 0.0 || !weight.is_finite() {
            return Err(Error::DomainError(format!(
                "estimator update: weight {weight} must be positive and finite"
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("update_label_gaussian"));
        }
        let s_prev = self.weight_sum;
        let s_new = s_prev + weight;
        let mut new_mean = vec![0.0; d];
        for i in 0..d {
            new_mean[i] = (s_prev * self.mean[i] + weight * row[i]) / s_new;
        }
        let dmu: Vec<f64> = (0..d).map(|i| new_mean[i] - self.mean[i]).collect();
        let dev: Vec<f64> = (0..d).map(|i| new_mean[i] - row[i]).collect();
        match &mut self.cov {
            Covariance::Diagonal(var) => {
                for i in 0..d {
                    var[i] = (s_prev * (var[i] + dmu[i] * dmu[i]) + weight * dev[i] * dev[i])
                        / s_new;
                }
            }
            Covariance::Full(cov) => {
                for i in 0..d {
                    for j in 0..d {
                        cov[i * d + j] = (s_prev * (cov[i * d + j] + dmu[i] * dmu[j])
                            + weight * dev[i] * dev[j])
                            / s_new;
                    }
                }
            }
        }
        self.mean = new_mean;
        self.weight_sum = s_new;
        self.sample_count += 1;
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("update_label_gaussian"));
        }
        Ok(())
    }
}

/// Direct weighted mean and (biased, weight-normalized) covariance over a
/// full stream; the independent oracle for the streaming recurrences.
pub fn batch_weighted_stats_oracle(
    rows: &[Vec<f64>],
    weights: &[f64],
    mode: CovarianceMode,
) -> Result<(Vec<f64>, Covariance)> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("batch_weighted_stats_oracle"));
    }
    if rows.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| *w <= 0.0) {
        return Err(Error::DomainError(
            "batch_weighted_stats_oracle: weights must be positive".into(),
        ));
    }
    let d = rows[0].len();
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; d];
    for (row, w) in rows.iter().zip(weights.iter()) {
        for i in 0..d {
            mean[i] += w * row[i];
        }
    }
    for m in &mut mean {
        *m /= total;
    }
    let cov = match mode {
        CovarianceMode::Diagonal => {
            let mut var = vec![0.0; d];
            for (row, w) in rows.iter().zip(weights.iter()) {
                for i in 0..d {
                    let dev = row[i] - mean[i];
                    var[i] += w * dev * dev;
                }
            }
            for v in &mut var {
                *v /= total;
            }
            Covariance::Diagonal(var)
        }
        CovarianceMode::Full => {
            let mut cov = vec![0.0; d * d];
            for (row, w) in rows.iter().zip(weights.iter()) {
                for i in 0..d {
                    for j in 0..d {
                        cov[i * d + j] += w * (row[i] - mean[i]) * (row[j] - mean[j]);
                    }
                }
            }
            for v in &mut cov {
                *v /= total;
            }
            Covariance::Full(cov)
        }
    };
    Ok((mean, cov))
}

/// Nondecreasing weighting function s(n) of training progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightingFn {
    /// s(n) = n
    Linear,
    /// s(n) = a * n^b
    Polynomial { a: f64, b: f64 },
    /// s(n) = a * e^(b n)
    Exponential { a: f64, b: f64 },
}

impl WeightingFn {
    pub fn eval(&self, n: u64) -> f64 {
        let n = n as f64;
        match self {
            WeightingFn::Linear => n,
            WeightingFn::Polynomial { a, b } => a * n.powf(*b),
            WeightingFn::Exponential { a, b } => a * (b * n).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            WeightingFn::Linear => true,
            WeightingFn::Polynomial { a, b } => *a > 0.0 && *b >= 0.0,
            WeightingFn::Exponential { a, b } => *a > 0.0 && *b >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ValidationError(
                "weighting function must be positive and nondecreasing for n >= 1".into(),
            ))
        }
    }
}

/// Plan how many rows to generate per label so the upcoming server update
/// sees each label with (up to `cap` extra rows) the same amount of data.
///
/// target = max buffered count; a label gets min(target - count, remaining
/// cap) rows if its estimator is eligible, 0 otherwise.
pub fn plan_generation(
    label_counts: &[usize],
    estimators: &BTreeMap<usize, LabelGaussian>,
    cap: usize,
) -> BTreeMap<usize, usize> {
    let mut plan = BTreeMap::new();
    let target = match label_counts.iter().max() {
        Some(&t) => t,
        None => return plan,
    };
    let mut remaining = cap;
    for (y, &count) in label_counts.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let eligible = estimators.get(&y).map(|g| g.is_eligible()).unwrap_or(false);
        if !eligible || count >= target {
            continue;
        }
        let want = (target - count).min(remaining);
        if want > 0 {
            plan.insert(y, want);
            remaining -= want;
        }
    }
    plan
}

fn cholesky(matrix: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = matrix[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    if sum.abs() < 1e-12 {
                        // Degenerate direction, collapse to zero.
                        l[i * d + i] = 0.0;
                        continue;
                    }
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                let diag = l[j * d + j];
                l[i * d + j] = if diag > 0.0 { sum / diag } else { 0.0 };
            }
        }
    }
    Some(l)
}

/// Draw the planned number of rows per label from the label estimators.
/// Diagonal: mu + sqrt(var) * z. Full: mu + L z with L the Cholesky
/// factor (retried once with +1e-9 I jitter).
pub fn sample_activations<R: Rng>(
    estimators: &BTreeMap<usize, LabelGaussian>,
    plan: &BTreeMap<usize, usize>,
    num_classes: usize,
    progress_stamp: u64,
    clamp_nonnegative: bool,
    rng: &mut R,
) -> Result<ActivationBatch> {
    let dim = estimators
        .values()
        .next()
        .map(|g| g.dim())
        .unwrap_or(0);
    let total: usize = plan.values().sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (&y, &count) in plan {
        if count == 0 {
            continue;
        }
        let g = estimators.get(&y).ok_or(Error::IneligibleLabel(y))?;
        if !g.is_eligible() {
            return Err(Error::IneligibleLabel(y));
        }
        match &g.cov {
            Covariance::Diagonal(var) => {
                let std: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
                for _ in 0..count {
                    for i in 0..g.dim() {
                        let z: f64 = StandardNormal.sample(rng);
                        let mut v = g.mean[i] + std[i] * z;
                        if clamp_nonnegative && v < 0.0 {
                            v = 0.0;
                        }
                        data.push(v);
                    }
                    labels.push(y);
                }
            }
            Covariance::Full(cov) => {
                let d = g.dim();
                let l = match cholesky(cov, d) {
                    Some(l) => l,
                    None => {
                        let mut jittered = cov.clone();
                        for i in 0..d {
                            jittered[i * d + i] += CHOLESKY_JITTER;
                        }
                        cholesky(&jittered, d).ok_or(Error::NonPsd(y))?
                    }
                };
                for _ in 0..count {
                    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                    for i in 0..d {
                        let mut v = g.mean[i];
                        for k in 0..=i {
                            v += l[i * d + k] * z[k];
                        }
                        if clamp_nonnegative && v < 0.0 {
                            v = 0.0;
                        }
                        data.push(v);
                    }
                    labels.push(y);
                }
            }
        }
    }
    let rows = labels.len();
    let label_dist = label_histogram(&labels, num_classes);
    Ok(ActivationBatch {
        activations: Tensor::from_vec(&[rows, dim.max(1)], data)?,
        labels,
        client_id: usize::MAX,
        progress_stamp,
        label_dist,
    })
}
