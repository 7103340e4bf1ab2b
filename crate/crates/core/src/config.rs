//! Experiment configuration: flat `key = value` text with `[section]`
//! headers, §-style defaults, validation, and normalized round-tripping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::actdist::{CovarianceMode, WeightingFn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Full method: buffered async exchange plus generative activations.
    Gas,
    /// Ablation: identical schedule with generation forced off.
    AsyncNogen,
    /// Synchronous split federated learning baseline.
    Sync,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "gas" => Some(Mode::Gas),
            "async_nogen" => Some(Mode::AsyncNogen),
            "sync" => Some(Mode::Sync),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Gas => "gas",
            Mode::AsyncNogen => "async_nogen",
            Mode::Sync => "sync",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    Synthetic {
        classes: usize,
        per_class: usize,
        dim: usize,
        sep: f64,
        /// Fraction of samples held out for the test set.
        test_fraction: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Optional cap on train/test sizes (0 = use all).
        train_limit: usize,
        test_limit: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionSpec {
    Shard { shards_per_client: usize },
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    // [run]
    pub mode: Mode,
    pub seed: u64,
    pub global_iterations: u64, // T
    pub eval_every: u64,
    pub measure_dissimilarity: bool,
    pub dissim_probe_per_class: usize,
    pub trace: bool,
    pub checkpoint_at: Option<u64>,
    pub out_dir: Option<PathBuf>,

    // [clients]
    pub num_clients: usize,     // K
    pub concurrent_clients: usize, // C
    pub local_iterations: u64,  // E
    pub batch_size: usize,      // B

    // [buffers]
    pub activation_buffer_batches: usize, // Q_s
    pub model_buffer_capacity: usize,     // Q_c

    // [train]
    pub learning_rate: f64,
    pub weighting: WeightingFn,
    pub covariance: CovarianceMode,
    /// Max generated rows per server update; 0 means the Q_s * B default.
    pub generation_cap: usize,
    pub clamp_generated: bool,

    // [data]
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,

    // [model]
    pub hidden_widths: Vec<usize>,
    /// Number of layers on the client side of the cut.
    pub cut_index: usize,

    // [latency]
    pub cell_radius_km: f64,
    pub total_bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub tx_power_watts: f64,
    pub flops_min: f64,
    pub flops_max: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Gas,
            seed: 0,
            global_iterations: 50,
            eval_every: 1,
            measure_dissimilarity: false,
            dissim_probe_per_class: 8,
            trace: false,
            checkpoint_at: None,
            out_dir: None,
            num_clients: 20,
            concurrent_clients: 10,
            local_iterations: 20,
            batch_size: 32,
            activation_buffer_batches: 10,
            model_buffer_capacity: 10,
            learning_rate: 0.01,
            weighting: WeightingFn::Linear,
            covariance: CovarianceMode::Diagonal,
            generation_cap: 0,
            clamp_generated: false,
            dataset: DatasetSpec::Synthetic {
                classes: 4,
                per_class: 500,
                dim: 16,
                sep: 3.0,
                test_fraction: 0.2,
            },
            partition: PartitionSpec::Shard {
                shards_per_client: 2,
            },
            hidden_widths: vec![16],
            cut_index: 1,
            cell_radius_km: 1.0,
            total_bandwidth_hz: 10e6,
            noise_dbm_per_hz: -174.0,
            tx_power_watts: 0.2,
            flops_min: 1e9,
            flops_max: 1e10,
        }
    }
}

impl ExperimentConfig {
    /// Effective cap on generated rows per server update.
    pub fn effective_generation_cap(&self) -> usize {
        if self.generation_cap == 0 {
            self.activation_buffer_batches * self.batch_size
        } else {
            self.generation_cap
        }
    }

    /// Static per-client bandwidth share W / C.
    pub fn bandwidth_share_hz(&self) -> f64 {
        self.total_bandwidth_hz / self.concurrent_clients as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ValidationError(msg));
        if self.concurrent_clients == 0 || self.concurrent_clients > self.num_clients {
            return fail(format!(
                "need 0 < C <= K, got C={} K={}",
                self.concurrent_clients, self.num_clients
            ));
        }
        if self.model_buffer_capacity == 0
            || self.model_buffer_capacity > self.concurrent_clients
        {
            return fail(format!(
                "need 0 < Q_c <= C so aggregation can complete, got Q_c={} C={}",
                self.model_buffer_capacity, self.concurrent_clients
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.activation_buffer_batches == 0 {
            return fail("activation buffer (Q_s) must be >= 1".into());
        }
        if self.learning_rate <= 0.0 {
            return fail(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if self.local_iterations == 0 || self.global_iterations == 0 {
            return fail("E and T must be >= 1".into());
        }
        if self.eval_every == 0 {
            return fail("eval_every must be >= 1".into());
        }
        self.weighting.validate()?;
        if self.hidden_widths.is_empty() {
            return fail("model needs at least one hidden width".into());
        }
        // Total layer count is hidden_widths.len() + 1 (final classifier layer).
        let total_layers = self.hidden_widths.len() + 1;
        if self.cut_index == 0 || self.cut_index >= total_layers {
            return fail(format!(
                "cut_index {} must be in [1, {})",
                self.cut_index, total_layers
            ));
        }
        if self.cell_radius_km <= 0.0 || self.total_bandwidth_hz <= 0.0 {
            return fail("latency: radius and bandwidth must be > 0".into());
        }
        if self.tx_power_watts <= 0.0 {
            return fail("latency: tx power must be > 0".into());
        }
        if self.flops_min <= 0.0 || self.flops_max < self.flops_min {
            return fail(format!(
                "latency: FLOPs range [{}, {}] invalid",
                self.flops_min, self.flops_max
            ));
        }
        match &self.dataset {
            DatasetSpec::Synthetic {
                classes,
                per_class,
                dim,
                sep,
                test_fraction,
            } => {
                if *classes == 0 || *per_class == 0 || *dim == 0 {
                    return fail("synthetic dataset parameters must be positive".into());
                }
                if *classes > *dim {
                    return fail("synthetic dataset: classes must be <= dim".into());
                }
                if *sep < 0.0 || *test_fraction <= 0.0 || *test_fraction >= 1.0 {
                    return fail("synthetic dataset: bad sep or test_fraction".into());
                }
            }
            DatasetSpec::Idx { .. } => {}
        }
        match &self.partition {
            PartitionSpec::Shard { shards_per_client } => {
                if *shards_per_client == 0 {
                    return fail("shard partition: shards_per_client must be >= 1".into());
                }
            }
            PartitionSpec::Dirichlet { alpha } => {
                if *alpha <= 0.0 {
                    return fail("dirichlet partition: alpha must be > 0".into());
                }
            }
        }
        Ok(())
    }

    /// Normalized flat key=value rendering; `parse` of this text
    /// reproduces the config exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "global_iterations = {}", self.global_iterations);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "measure_dissimilarity = {}", self.measure_dissimilarity);
        let _ = writeln!(s, "dissim_probe_per_class = {}", self.dissim_probe_per_class);
        let _ = writeln!(s, "trace = {}", self.trace);
        if let Some(t) = self.checkpoint_at {
            let _ = writeln!(s, "checkpoint_at = {t}");
        }
        if let Some(d) = &self.out_dir {
            let _ = writeln!(s, "out_dir = {}", d.display());
        }
        let _ = writeln!(s, "\n[clients]");
        let _ = writeln!(s, "num_clients = {}", self.num_clients);
        let _ = writeln!(s, "concurrent_clients = {}", self.concurrent_clients);
        let _ = writeln!(s, "local_iterations = {}", self.local_iterations);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "\n[buffers]");
        let _ = writeln!(s, "activation_buffer_batches = {}", self.activation_buffer_batches);
        let _ = writeln!(s, "model_buffer_capacity = {}", self.model_buffer_capacity);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let weighting = match self.weighting {
            WeightingFn::Linear => "linear".to_string(),
            WeightingFn::Polynomial { a, b } => format!("poly:{a},{b}"),
            WeightingFn::Exponential { a, b } => format!("exp:{a},{b}"),
        };
        let _ = writeln!(s, "weighting = {weighting}");
        let cov = match self.covariance {
            CovarianceMode::Diagonal => "diag",
            CovarianceMode::Full => "full",
        };
        let _ = writeln!(s, "covariance = {cov}");
        let _ = writeln!(s, "generation_cap = {}", self.generation_cap);
        let _ = writeln!(s, "clamp_generated = {}", self.clamp_generated);
        let _ = writeln!(s, "\n[data]");
        match &self.dataset {
            DatasetSpec::Synthetic {
                classes,
                per_class,
                dim,
                sep,
                test_fraction,
            } => {
                let _ = writeln!(s, "source = synthetic");
                let _ = writeln!(s, "synth_classes = {classes}");
                let _ = writeln!(s, "synth_per_class = {per_class}");
                let _ = writeln!(s, "synth_dim = {dim}");
                let _ = writeln!(s, "synth_sep = {sep}");
                let _ = writeln!(s, "test_fraction = {test_fraction}");
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => {
                let _ = writeln!(s, "source = idx");
                let _ = writeln!(s, "train_images = {}", train_images.display());
                let _ = writeln!(s, "train_labels = {}", train_labels.display());
                let _ = writeln!(s, "test_images = {}", test_images.display());
                let _ = writeln!(s, "test_labels = {}", test_labels.display());
                let _ = writeln!(s, "train_limit = {train_limit}");
                let _ = writeln!(s, "test_limit = {test_limit}");
            }
        }
        match &self.partition {
            PartitionSpec::Shard { shards_per_client } => {
                let _ = writeln!(s, "partition = shard:{shards_per_client}");
            }
            PartitionSpec::Dirichlet { alpha } => {
                let _ = writeln!(s, "partition = dirichlet:{alpha}");
            }
        }
        let _ = writeln!(s, "\n[model]");
        let widths: Vec<String> = self.hidden_widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "hidden_widths = {}", widths.join(","));
        let _ = writeln!(s, "cut_index = {}", self.cut_index);
        let _ = writeln!(s, "\n[latency]");
        let _ = writeln!(s, "cell_radius_km = {}", self.cell_radius_km);
        let _ = writeln!(s, "total_bandwidth_hz = {}", self.total_bandwidth_hz);
        let _ = writeln!(s, "noise_dbm_per_hz = {}", self.noise_dbm_per_hz);
        let _ = writeln!(s, "tx_power_watts = {}", self.tx_power_watts);
        let _ = writeln!(s, "flops_min = {}", self.flops_min);
        let _ = writeln!(s, "flops_max = {}", self.flops_max);
        s
    }
}

/// Parse the flat key=value config text. Missing keys fall back to the
/// §5-style defaults; the result is validated.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::ParseError {
                    line: lineno,
                    msg: format!("malformed section header {line:?}"),
                });
            }
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ParseError {
            line: lineno,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let full_key = if section.is_empty() {
            key.trim().to_string()
        } else {
            format!("{section}.{}", key.trim())
        };
        kv.insert(full_key, (lineno, value.trim().to_string()));
    }

    let mut cfg = ExperimentConfig::default();
    let mut dataset_source: Option<String> = None;
    let mut idx_paths: BTreeMap<&str, PathBuf> = BTreeMap::new();
    let mut idx_limits = (0usize, 0usize);
    let mut synth = (4usize, 500usize, 16usize, 3.0f64, 0.2f64);

    macro_rules! bad {
        ($line:expr, $($arg:tt)*) => {
            return Err(Error::ParseError { line: $line, msg: format!($($arg)*) })
        };
    }

    for (key, (line, value)) in &kv {
        let line = *line;
        macro_rules! num {
            ($ty:ty) => {
                match value.parse::<$ty>() {
                    Ok(v) => v,
                    Err(e) => bad!(line, "field {key}: {e}"),
                }
            };
        }
        match key.as_str() {
            "run.mode" => match Mode::parse(value) {
                Some(m) => cfg.mode = m,
                None => bad!(line, "field {key}: unknown mode {value:?}"),
            },
            "run.seed" => cfg.seed = num!(u64),
            "run.global_iterations" => cfg.global_iterations = num!(u64),
            "run.eval_every" => cfg.eval_every = num!(u64),
            "run.measure_dissimilarity" => cfg.measure_dissimilarity = num!(bool),
            "run.dissim_probe_per_class" => cfg.dissim_probe_per_class = num!(usize),
            "run.trace" => cfg.trace = num!(bool),
            "run.checkpoint_at" => cfg.checkpoint_at = Some(num!(u64)),
            "run.out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
            "clients.num_clients" => cfg.num_clients = num!(usize),
            "clients.concurrent_clients" => cfg.concurrent_clients = num!(usize),
            "clients.local_iterations" => cfg.local_iterations = num!(u64),
            "clients.batch_size" => cfg.batch_size = num!(usize),
            "buffers.activation_buffer_batches" => {
                cfg.activation_buffer_batches = num!(usize)
            }
            "buffers.model_buffer_capacity" => cfg.model_buffer_capacity = num!(usize),
            "train.learning_rate" => cfg.learning_rate = num!(f64),
            "train.weighting" => {
                cfg.weighting = parse_weighting(value)
                    .ok_or_else(|| Error::ParseError {
                        line,
                        msg: format!("field {key}: bad weighting {value:?}"),
                    })?
            }
            "train.covariance" => match value.as_str() {
                "diag" => cfg.covariance = CovarianceMode::Diagonal,
                "full" => cfg.covariance = CovarianceMode::Full,
                _ => bad!(line, "field {key}: expected diag or full"),
            },
            "train.generation_cap" => cfg.generation_cap = num!(usize),
            "train.clamp_generated" => cfg.clamp_generated = num!(bool),
            "data.source" => dataset_source = Some(value.clone()),
            "data.synth_classes" => synth.0 = num!(usize),
            "data.synth_per_class" => synth.1 = num!(usize),
            "data.synth_dim" => synth.2 = num!(usize),
            "data.synth_sep" => synth.3 = num!(f64),
            "data.test_fraction" => synth.4 = num!(f64),
            "data.train_images" => {
                idx_paths.insert("train_images", PathBuf::from(value));
            }
            "data.train_labels" => {
                idx_paths.insert("train_labels", PathBuf::from(value));
            }
            "data.test_images" => {
                idx_paths.insert("test_images", PathBuf::from(value));
            }
            "data.test_labels" => {
                idx_paths.insert("test_labels", PathBuf::from(value));
            }
            "data.train_limit" => idx_limits.0 = num!(usize),
            "data.test_limit" => idx_limits.1 = num!(usize),
            "data.partition" => {
                cfg.partition = parse_partition(value).ok_or_else(|| Error::ParseError {
                    line,
                    msg: format!("field {key}: bad partition {value:?}"),
                })?
            }
            "model.hidden_widths" => {
                let mut widths = Vec::new();
                for part in value.split(',') {
                    match part.trim().parse::<usize>() {
                        Ok(w) => widths.push(w),
                        Err(e) => bad!(line, "field {key}: {e}"),
                    }
                }
                cfg.hidden_widths = widths;
            }
            "model.cut_index" => cfg.cut_index = num!(usize),
            "latency.cell_radius_km" => cfg.cell_radius_km = num!(f64),
            "latency.total_bandwidth_hz" => cfg.total_bandwidth_hz = num!(f64),
            "latency.noise_dbm_per_hz" => cfg.noise_dbm_per_hz = num!(f64),
            "latency.tx_power_watts" => cfg.tx_power_watts = num!(f64),
            "latency.flops_min" => cfg.flops_min = num!(f64),
            "latency.flops_max" => cfg.flops_max = num!(f64),
            _ => bad!(line, "unknown field {key}"),
        }
    }

    match dataset_source.as_deref() {
        None | Some("synthetic") => {
            cfg.dataset = DatasetSpec::Synthetic {
                classes: synth.0,
                per_class: synth.1,
                dim: synth.2,
                sep: synth.3,
                test_fraction: synth.4,
            };
        }
        Some("idx") => {
            let get = |k: &str| -> Result<PathBuf> {
                idx_paths.get(k).cloned().ok_or_else(|| {
                    Error::ValidationError(format!("idx dataset requires data.{k}"))
                })
            };
            cfg.dataset = DatasetSpec::Idx {
                train_images: get("train_images")?,
                train_labels: get("train_labels")?,
                test_images: get("test_images")?,
                test_labels: get("test_labels")?,
                train_limit: idx_limits.0,
                test_limit: idx_limits.1,
            };
        }
        Some(other) => {
            return Err(Error::ValidationError(format!(
                "unknown dataset source {other:?}"
            )))
        }
    }

    cfg.validate()?;
    Ok(cfg)
}

fn parse_weighting(s: &str) -> Option<WeightingFn> {
    if s == "linear" {
        return Some(WeightingFn::Linear);
    }
    let (kind, args) = s.split_once(':')?;
    let (a, b) = args.split_once(',')?;
    let a = a.trim().parse().ok()?;
    let b = b.trim().parse().ok()?;
    match kind {
        "poly" => Some(WeightingFn::Polynomial { a, b }),
        "exp" => Some(WeightingFn::Exponential { a, b }),
        _ => None,
    }
}

fn parse_partition(s: &str) -> Option<PartitionSpec> {
    let (kind, arg) = s.split_once(':')?;
    match kind {
        "shard" => Some(PartitionSpec::Shard {
            shards_per_client: arg.trim().parse().ok()?,
        }),
        "dirichlet" => Some(PartitionSpec::Dirichlet {
            alpha: arg.trim().parse().ok()?,
        }),
        _ => None,
    }
}

/// Hex SHA-256 of the normalized config text, binding checkpoints to
/// the config that produced them.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(cfg.to_config_string().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
