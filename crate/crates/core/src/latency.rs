//! Wireless uplink latency model: log-distance path loss, Shannon rate
//! over an orthogonal channel share, payload transfer and compute times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseLayer;

/// Static per-client wireless/compute profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: usize,
    /// Distance to the server in km, in (0, radius].
    pub distance_km: f64,
    /// Compute capacity in FLOPs per second.
    pub flops_capacity: f64,
    /// Transmit power in watts.
    pub tx_power_watts: f64,
    /// Local dataset size |D_k|.
    pub data_size: usize,
}

/// Log-distance path loss: 128.1 + 37.6 log10(r) dB, r in km.
pub fn path_loss_db(r_km: f64) -> Result<f64> {
    if r_km <= 0.0 {
        return Err(Error::DomainError(format!(
            "path_loss_db: distance {r_km} must be > 0"
        )));
    }
    Ok(128.1 + 37.6 * r_km.log10())
}

/// Shannon uplink rate over an orthogonal bandwidth share:
/// rate = W log2(1 + P g / (N0 W)), with channel gain
/// g = 10^(-path_loss/10) and N0 = 10^(-174/10) * 1e-3 W/Hz.
pub fn uplink_rate_bps(profile: &ClientProfile, bandwidth_hz: f64) -> Result<f64> {
    if bandwidth_hz <= 0.0 {
        return Err(Error::DomainError(format!(
            "uplink_rate_bps: bandwidth {bandwidth_hz} must be > 0"
        )));
    }
    let pl_db = path_loss_db(profile.distance_km)?;
    let gain = 10f64.powf(-pl_db / 10.0);
    let n0_w_per_hz = 10f64.powf(-174.0 / 10.0) * 1e-3;
    let snr = profile.tx_power_watts * gain / (n0_w_per_hz * bandwidth_hz);
    Ok(bandwidth_hz * (1.0 + snr).log2())
}

/// Transfer time in seconds for a payload at the given rate.
pub fn transfer_time(bytes: usize, rate_bps: f64) -> Result<f64> {
    if rate_bps <= 0.0 {
        return Err(Error::DomainError(format!(
            "transfer_time: rate {rate_bps} must be > 0"
        )));
    }
    Ok(8.0 * bytes as f64 / rate_bps)
}

/// Compute time in seconds for a FLOP count at a given capacity.
pub fn compute_time(flops_needed: f64, flops_capacity: f64) -> Result<f64> {
    if flops_needed <= 0.0 || flops_capacity <= 0.0 {
        return Err(Error::DomainError(format!(
            "compute_time: flops {flops_needed} at capacity {flops_capacity}"
        )));
    }
    Ok(flops_needed / flops_capacity)
}

/// Dense forward cost: 2 * B * in * out per layer.
pub fn forward_flops(layers: &[DenseLayer], batch_size: usize) -> f64 {
    layers
        .iter()
        .map(|l| 2.0 * batch_size as f64 * l.in_dim() as f64 * l.out_dim() as f64)
        .sum()
}

/// Backward is charged at twice the forward cost.
pub fn backward_flops(layers: &[DenseLayer], batch_size: usize) -> f64 {
    2.0 * forward_flops(layers, batch_size)
}

/// Activation payload: 4 bytes per float plus 1 byte per label.
pub fn activation_payload_bytes(batch_rows: usize, cut_dim: usize) -> usize {
    batch_rows * cut_dim * 4 + batch_rows
}

/// Model payload: 4 bytes per parameter.
pub fn model_payload_bytes(layers: &[DenseLayer]) -> usize {
    crate::nn::param_count(layers) * 4
}
