//! Deterministic discrete-event engine for the buffered asynchronous
//! split learning protocol: heterogeneous client compute, uplink
//! transfer delays, dispatch, staleness tracking, and the server's
//! store / generate / update / aggregate cycle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::actdist::{plan_generation, sample_activations, LabelGaussian};
use crate::buffers::{ActivationBuffer, BufferStatus, ModelBuffer};
use crate::config::{DatasetSpec, ExperimentConfig, Mode, PartitionSpec};
use crate::data::{
    dirichlet_partition, load_idx, shard_partition, synthetic_gaussian_dataset, Dataset,
};
use crate::error::{Error, Result};
use crate::latency::{
    activation_payload_bytes, backward_flops, compute_time, forward_flops, model_payload_bytes,
    transfer_time, uplink_rate_bps, ClientProfile,
};
use crate::metrics::{
    evaluate_accuracy, gradient_dissimilarity, DissimSample, MetricsLog, MetricsRow,
};
use crate::nn::{Activation, DenseLayer, LayerCache};
use crate::split::{
    client_backward_update, client_forward, label_histogram, server_loss_and_grads,
    server_update, ActivationBatch, SplitModel,
};

// Named RNG streams derived from the master seed, so that ablations
// perturb only their own stream.
const STREAM_DATA: u64 = 0;
const STREAM_PARTITION: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SELECT: u64 = 3;
const STREAM_PROFILES: u64 = 4;
const STREAM_GENERATION: u64 = 5;
const STREAM_MINIBATCH_BASE: u64 = 1000;

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent named RNG stream derived from the master seed.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha20Rng {
    let mut state = master_seed ^ stream.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(seed)
}

/// Uniform draw from the idle (non-dispatched) clients.
pub fn select_client<R: Rng>(idle_clients: &[usize], rng: &mut R) -> Result<usize> {
    if idle_clients.is_empty() {
        return Err(Error::NoIdleClient);
    }
    Ok(idle_clients[rng.gen_range(0..idle_clients.len())])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EventKind {
    ClientDispatch {
        client: usize,
    },
    ActivationArrival {
        client: usize,
        batch: ActivationBatch,
    },
    ModelArrival {
        client: usize,
        params: Vec<DenseLayer>,
        dispatch_version: u64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ClientDispatch { .. } => "client_dispatch",
            EventKind::ActivationArrival { .. } => "activation_arrival",
            EventKind::ModelArrival { .. } => "model_arrival",
        }
    }

    pub fn client(&self) -> usize {
        match self {
            EventKind::ClientDispatch { client }
            | EventKind::ActivationArrival { client, .. }
            | EventKind::ModelArrival { client, .. } => *client,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

/// Per-client training state while dispatched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientRuntime {
    pub model: Vec<DenseLayer>,
    pub local_iter: u64,
    pub caches: Option<Vec<LayerCache>>,
    pub dispatch_version: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub rows_stored: u64,
    pub rows_consumed: u64,
    pub models_stored: u64,
    pub models_consumed: u64,
    pub server_updates: u64,
    pub aggregations: u64,
    pub arrivals_per_client: Vec<u64>,
    pub max_staleness: u64,
}

/// Immutable run environment rebuilt deterministically from the config:
/// datasets, partition, client profiles. Not part of checkpoints.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub config: ExperimentConfig,
    pub client_datasets: Vec<Dataset>,
    pub client_label_dists: Vec<Vec<f64>>,
    pub profiles: Vec<ClientProfile>,
    pub test_set: Dataset,
    /// Balanced probe rows used to build the dissimilarity reference.
    pub probe_set: Dataset,
    pub num_classes: usize,
    pub input_dim: usize,
}

impl SimEnv {
    pub fn build(config: ExperimentConfig) -> Result<SimEnv> {
        config.validate()?;
        let (train, test) = load_datasets(&config)?;
        let num_classes = train.num_classes.max(test.num_classes);
        let input_dim = train.feature_dim();
        if test.feature_dim() != input_dim {
            return Err(Error::ShapeMismatch(format!(
                "train dim {} vs test dim {}",
                input_dim,
                test.feature_dim()
            )));
        }

        let mut part_rng = stream_rng(config.seed, STREAM_PARTITION);
        let partition = match config.partition {
            PartitionSpec::Shard { shards_per_client } => {
                shard_partition(&train, config.num_clients, shards_per_client, &mut part_rng)?
            }
            PartitionSpec::Dirichlet { alpha } => {
                dirichlet_partition(&train, config.num_clients, alpha, &mut part_rng)?
            }
        };
        let client_datasets: Vec<Dataset> = partition
            .client_indices
            .iter()
            .map(|idx| {
                let mut ds = train.subset(idx);
                ds.num_classes = num_classes;
                ds
            })
            .collect();
        let client_label_dists: Vec<Vec<f64>> = client_datasets
            .iter()
            .map(|ds| label_histogram(&ds.labels, num_classes))
            .collect();

        let mut prof_rng = stream_rng(config.seed, STREAM_PROFILES);
        let profiles: Vec<ClientProfile> = (0..config.num_clients)
            .map(|id| {
                // Area-uniform placement in the cell.
                let u: f64 = prof_rng.gen_range(0.0..1.0f64);
                let distance_km = (config.cell_radius_km * u.sqrt()).max(1e-3);
                let flops_capacity = prof_rng.gen_range(config.flops_min..=config.flops_max);
                ClientProfile {
                    id,
                    distance_km,
                    flops_capacity,
                    tx_power_watts: config.tx_power_watts,
                    data_size: client_datasets[id].len(),
                }
            })
            .collect();

        // Balanced probe: first `probe_per_class` test rows of each class.
        let mut probe_indices = Vec::new();
        for class in 0..num_classes {
            let mut taken = 0;
            for (i, &y) in test.labels.iter().enumerate() {
                if y == class {
                    probe_indices.push(i);
                    taken += 1;
                    if taken == config.dissim_probe_per_class {
                        break;
                    }
                }
            }
        }
        let mut probe_set = test.subset(&probe_indices);
        probe_set.num_classes = num_classes;
        let mut test_set = test;
        test_set.num_classes = num_classes;

        Ok(SimEnv {
            config,
            client_datasets,
            client_label_dists,
            profiles,
            test_set,
            probe_set,
            num_classes,
            input_dim,
        })
    }

    /// Stacked layer widths input -> hidden... -> classes.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.input_dim];
        widths.extend_from_slice(&self.config.hidden_widths);
        widths.push(self.num_classes);
        widths
    }

    /// Fresh split model from the init RNG stream.
    pub fn init_model(&self) -> Result<SplitModel> {
        let widths = self.layer_widths();
        let mut rng = stream_rng(self.config.seed, STREAM_INIT);
        let n_layers = widths.len() - 1;
        let layers: Vec<DenseLayer> = (0..n_layers)
            .map(|i| {
                let act = if i == n_layers - 1 {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                DenseLayer::init(widths[i], widths[i + 1], act, &mut rng)
            })
            .collect();
        let cut = self.config.cut_index;
        SplitModel::new(layers[..cut].to_vec(), layers[cut..].to_vec(), self.num_classes)
    }
}

fn balanced_head(ds: &Dataset, limit: usize) -> Dataset {
    if limit == 0 || limit >= ds.len() {
        return ds.clone();
    }
    let per_class = limit / ds.num_classes.max(1);
    let mut indices = Vec::with_capacity(limit);
    let mut counts = vec![0usize; ds.num_classes];
    for (i, &y) in ds.labels.iter().enumerate() {
        if counts[y] < per_class {
            counts[y] += 1;
            indices.push(i);
        }
        if indices.len() == per_class * ds.num_classes {
            break;
        }
    }
    ds.subset(&indices)
}

fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &config.dataset {
        DatasetSpec::Synthetic {
            classes,
            per_class,
            dim,
            sep,
            test_fraction,
        } => {
            let mut rng = stream_rng(config.seed, STREAM_DATA);
            let full = synthetic_gaussian_dataset(*classes, *per_class, *dim, *sep, &mut rng)?;
            // Per-class tail split keeps both sides balanced.
            let test_per_class = ((*per_class as f64) * test_fraction).round() as usize;
            let test_per_class = test_per_class.clamp(1, per_class - 1);
            let mut train_idx = Vec::new();
            let mut test_idx = Vec::new();
            for class in 0..*classes {
                let start = class * per_class;
                let split = start + per_class - test_per_class;
                train_idx.extend(start..split);
                test_idx.extend(split..start + per_class);
            }
            Ok((full.subset(&train_idx), full.subset(&test_idx)))
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
            test_limit,
        } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            Ok((balanced_head(&train, *train_limit), balanced_head(&test, *test_limit)))
        }
    }
}

/// Mutable simulator state; everything a checkpoint must capture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimCore {
    pub sim_time: f64,
    pub next_seq: u64,
    /// Server-side training progress n, advances per server update.
    pub progress: u64,
    /// Aggregation index t.
    pub agg_index: u64,
    pub server_layers: Vec<DenseLayer>,
    /// Latest aggregated client-side model.
    pub client_model: Vec<DenseLayer>,
    pub act_buffer: ActivationBuffer,
    pub model_buffer: ModelBuffer,
    pub estimators: BTreeMap<usize, LabelGaussian>,
    pub runtimes: Vec<Option<ClientRuntime>>,
    pub minibatch_rngs: Vec<ChaCha20Rng>,
    pub select_rng: ChaCha20Rng,
    pub gen_rng: ChaCha20Rng,
    pub events: Vec<Event>,
    pub metrics: MetricsLog,
    pub counters: Counters,
    pub last_accuracy: f64,
    pub last_dissim: Option<(f64, f64)>,
    pub trace_lines: Vec<String>,
    pub done: bool,
}

pub struct Simulation {
    pub env: SimEnv,
    pub core: SimCore,
}

impl Simulation {
    pub fn new(env: SimEnv) -> Result<Simulation> {
        let config = &env.config;
        if config.mode == Mode::Sync {
            return Err(Error::ValidationError(
                "event-driven simulation does not run in sync mode".into(),
            ));
        }
        let model = env.init_model()?;
        let minibatch_rngs = (0..config.num_clients)
            .map(|k| stream_rng(config.seed, STREAM_MINIBATCH_BASE + k as u64))
            .collect();
        let core = SimCore {
            sim_time: 0.0,
            next_seq: 0,
            progress: 1,
            agg_index: 0,
            server_layers: model.server_layers,
            client_model: model.client_layers,
            act_buffer: ActivationBuffer::new(
                config.activation_buffer_batches * config.batch_size,
            )?,
            model_buffer: ModelBuffer::new(config.model_buffer_capacity)?,
            estimators: BTreeMap::new(),
            runtimes: vec![None; config.num_clients],
            minibatch_rngs,
            select_rng: stream_rng(config.seed, STREAM_SELECT),
            gen_rng: stream_rng(config.seed, STREAM_GENERATION),
            events: Vec::new(),
            metrics: MetricsLog::default(),
            counters: Counters {
                arrivals_per_client: vec![0; config.num_clients],
                ..Counters::default()
            },
            last_accuracy: 0.0,
            last_dissim: None,
            trace_lines: Vec::new(),
            done: false,
        };
        let mut sim = Simulation { env, core };
        sim.dispatch_initial_clients()?;
        Ok(sim)
    }

    fn dispatch_initial_clients(&mut self) -> Result<()> {
        let k = self.env.config.num_clients;
        let c = self.env.config.concurrent_clients;
        // Partial Fisher-Yates draw of C distinct clients.
        let mut pool: Vec<usize> = (0..k).collect();
        for i in 0..c {
            let j = i + self.core.select_rng.gen_range(0..pool.len() - i);
            pool.swap(i, j);
        }
        for &client in &pool[..c] {
            self.schedule(0.0, EventKind::ClientDispatch { client });
        }
        Ok(())
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        let seq = self.core.next_seq;
        self.core.next_seq += 1;
        self.core.events.push(Event { time, seq, kind });
    }

    fn pop_next_event(&mut self) -> Option<Event> {
        if self.core.events.is_empty() {
            return None;
        }
        let mut best = 0;
        for i in 1..self.core.events.len() {
            let e = &self.core.events[i];
            let b = &self.core.events[best];
            if e.time < b.time || (e.time == b.time && e.seq < b.seq) {
                best = i;
            }
        }
        Some(self.core.events.remove(best))
    }

    fn uplink_rate(&self, client: usize) -> Result<f64> {
        uplink_rate_bps(
            &self.env.profiles[client],
            self.env.config.bandwidth_share_hz(),
        )
    }

    /// Sample a minibatch, run the client-side forward pass, and schedule
    /// the activation's arrival at the server.
    fn start_forward(&mut self, client: usize, start_time: f64) -> Result<()> {
        let b = self.env.config.batch_size;
        let ds = &self.env.client_datasets[client];
        let indices: Vec<usize> = {
            let rng = &mut self.core.minibatch_rngs[client];
            (0..b).map(|_| rng.gen_range(0..ds.len())).collect()
        };
        let mb = ds.subset(&indices);
        let runtime = self.core.runtimes[client]
            .as_mut()
            .ok_or_else(|| Error::StaleCache(format!("client {client} not dispatched")))?;
        let (batch, caches) = client_forward(
            &runtime.model,
            &mb.features,
            &mb.labels,
            client,
            self.env.client_label_dists[client].clone(),
        )?;
        runtime.caches = Some(caches);
        let cut_dim = runtime.model.last().unwrap().out_dim();
        let fwd = compute_time(
            forward_flops(&runtime.model, b),
            self.env.profiles[client].flops_capacity,
        )?;
        let up = transfer_time(activation_payload_bytes(b, cut_dim), self.uplink_rate(client)?)?;
        self.schedule(
            start_time + fwd + up,
            EventKind::ActivationArrival { client, batch },
        );
        Ok(())
    }

    fn reference_batch(&self) -> Result<ActivationBatch> {
        let probe = &self.env.probe_set;
        let (batch, _) = client_forward(
            &self.core.client_model,
            &probe.features,
            &probe.labels,
            usize::MAX,
            label_histogram(&probe.labels, self.env.num_classes),
        )?;
        Ok(batch)
    }

    fn handle_activation_arrival(
        &mut self,
        client: usize,
        mut batch: ActivationBatch,
        now: f64,
    ) -> Result<()> {
        let config = &self.env.config;
        let m = self.env.num_classes;
        batch.progress_stamp = self.core.progress;
        self.core.counters.arrivals_per_client[client] += 1;

        // Distribution update at store time, one row at a time.
        let weight = config.weighting.eval(batch.progress_stamp);
        let cut_dim = batch.activations.cols();
        for r in 0..batch.rows() {
            let y = batch.labels[r];
            let est = self
                .core
                .estimators
                .entry(y)
                .or_insert_with(|| LabelGaussian::new(cut_dim, config.covariance));
            est.update(batch.activations.row(r), weight)?;
        }

        let rows = batch.rows();
        let status = self.core.act_buffer.store_activation(batch.clone())?;
        self.core.counters.rows_stored += rows as u64;

        if status == BufferStatus::Full {
            let reference = if config.measure_dissimilarity {
                Some(self.reference_batch()?)
            } else {
                None
            };
            let pre = if let Some(r) = &reference {
                let buffered = peek_concat(&self.core.act_buffer, m)?;
                Some(gradient_dissimilarity(&self.core.server_layers, &buffered, r)?)
            } else {
                None
            };
            let generated = if config.mode == Mode::Gas {
                let counts = self.core.act_buffer.label_counts(m);
                let plan =
                    plan_generation(&counts, &self.core.estimators, config.effective_generation_cap());
                Some(sample_activations(
                    &self.core.estimators,
                    &plan,
                    m,
                    self.core.progress,
                    config.clamp_generated,
                    &mut self.core.gen_rng,
                )?)
            } else {
                None
            };
            let concat = self.core.act_buffer.drain_concat(generated, m)?;
            self.core.counters.rows_consumed +=
                (config.activation_buffer_batches * config.batch_size) as u64;
            if let (Some(r), Some(pre)) = (&reference, pre) {
                let post = gradient_dissimilarity(&self.core.server_layers, &concat, r)?;
                self.core.metrics.dissim.push(DissimSample {
                    server_update_index: self.core.counters.server_updates,
                    sim_time: now,
                    pre_generation: pre,
                    post_generation: post,
                });
                self.core.last_dissim = Some((pre, post));
            }
            server_update(&mut self.core.server_layers, &concat, config.learning_rate)?;
            self.core.counters.server_updates += 1;
            self.core.progress += 1;
        }

        // G_k with the server model as it exists after any buffer-triggered
        // update in this same event.
        let (_, _, grad_act) = server_loss_and_grads(&self.core.server_layers, &batch)?;

        let lr = config.learning_rate;
        let e_local = config.local_iterations;
        let runtime = self.core.runtimes[client]
            .as_mut()
            .ok_or_else(|| Error::StaleCache(format!("client {client} not dispatched")))?;
        let caches = runtime
            .caches
            .take()
            .ok_or_else(|| Error::StaleCache(format!("client {client} has no cached forward")))?;
        client_backward_update(&mut runtime.model, &caches, &grad_act, lr)?;
        runtime.local_iter += 1;

        let bwd = compute_time(
            backward_flops(&runtime.model, config.batch_size),
            self.env.profiles[client].flops_capacity,
        )?;
        if runtime.local_iter < e_local {
            self.start_forward(client, now + bwd)?;
        } else {
            let params = runtime.model.clone();
            let dispatch_version = runtime.dispatch_version;
            let up = transfer_time(model_payload_bytes(&params), self.uplink_rate(client)?)?;
            self.schedule(
                now + bwd + up,
                EventKind::ModelArrival {
                    client,
                    params,
                    dispatch_version,
                },
            );
        }
        Ok(())
    }

    fn handle_model_arrival(
        &mut self,
        client: usize,
        params: Vec<DenseLayer>,
        dispatch_version: u64,
        now: f64,
    ) -> Result<()> {
        let staleness = self.core.agg_index - dispatch_version;
        if staleness > self.core.counters.max_staleness {
            self.core.counters.max_staleness = staleness;
        }
        let status = self.core.model_buffer.store_model(
            client,
            params,
            self.env.profiles[client].data_size,
            staleness,
        )?;
        self.core.counters.models_stored += 1;
        self.core.runtimes[client] = None;

        if status == BufferStatus::Full {
            let agg = self.core.model_buffer.aggregate_models()?;
            self.core.counters.models_consumed += self.env.config.model_buffer_capacity as u64;
            self.core.client_model = agg;
            self.core.agg_index += 1;
            self.core.counters.aggregations += 1;
            self.emit_metrics_row(now)?;
            if self.core.agg_index >= self.env.config.global_iterations {
                self.core.done = true;
            }
        }
        if !self.core.done {
            let idle: Vec<usize> = (0..self.env.config.num_clients)
                .filter(|&i| self.core.runtimes[i].is_none())
                .collect();
            let next = select_client(&idle, &mut self.core.select_rng)?;
            self.schedule(now, EventKind::ClientDispatch { client: next });
        }
        Ok(())
    }

    fn emit_metrics_row(&mut self, now: f64) -> Result<()> {
        let t = self.core.agg_index;
        if t % self.env.config.eval_every == 0 || t == self.env.config.global_iterations {
            self.core.last_accuracy = evaluate_accuracy(
                &self.core.client_model,
                &self.core.server_layers,
                &self.env.test_set,
            )?;
        }
        let (pre, post) = match self.core.last_dissim {
            Some((a, b)) => (Some(a), Some(b)),
            None => (None, None),
        };
        self.core.metrics.push_row(MetricsRow {
            aggregation_index: t,
            sim_time: now,
            server_update_count: self.core.counters.server_updates,
            test_accuracy: self.core.last_accuracy,
            grad_dissim_pre: pre,
            grad_dissim_post: post,
            act_buffer_rows: self.core.act_buffer.current_rows(),
            model_buffer_len: self.core.model_buffer.len(),
        })
    }

    /// Process one event. Returns false when the run has completed.
    pub fn step(&mut self) -> Result<bool> {
        if self.core.done {
            return Ok(false);
        }
        let event = match self.pop_next_event() {
            Some(e) => e,
            None => {
                return Err(Error::ValidationError(
                    "event queue exhausted before reaching T aggregations".into(),
                ))
            }
        };
        debug_assert!(event.time >= self.core.sim_time);
        self.core.sim_time = event.time;
        let result = match event.kind.clone() {
            EventKind::ClientDispatch { client } => {
                self.core.runtimes[client] = Some(ClientRuntime {
                    model: self.core.client_model.clone(),
                    local_iter: 0,
                    caches: None,
                    dispatch_version: self.core.agg_index,
                });
                self.start_forward(client, event.time)
            }
            EventKind::ActivationArrival { client, batch } => {
                self.handle_activation_arrival(client, batch, event.time)
            }
            EventKind::ModelArrival {
                client,
                params,
                dispatch_version,
            } => self.handle_model_arrival(client, params, dispatch_version, event.time),
        };
        // Abort with run context on numeric failures.
        result.map_err(|e| match e {
            Error::NonFinite(ctx) => Error::ValidationError(format!(
                "numeric abort at t={} client={}: non-finite value in {ctx}",
                event.time,
                event.kind.client()
            )),
            other => other,
        })?;
        if self.env.config.trace {
            self.core.trace_lines.push(format!(
                "{{\"time\":{},\"seq\":{},\"kind\":\"{}\",\"client\":{},\"act_buffer_rows\":{},\"model_buffer_len\":{}}}",
                event.time,
                event.seq,
                event.kind.name(),
                event.kind.client(),
                self.core.act_buffer.current_rows(),
                self.core.model_buffer.len()
            ));
        }
        Ok(!self.core.done)
    }

    /// Run to completion (T aggregations).
    pub fn run(&mut self) -> Result<()> {
        while self.step()? {}
        Ok(())
    }

    pub fn final_model(&self) -> SplitModel {
        SplitModel {
            client_layers: self.core.client_model.clone(),
            server_layers: self.core.server_layers.clone(),
            num_classes: self.env.num_classes,
        }
    }
}

/// Concatenate the buffered batches without draining, for measurement.
fn peek_concat(buf: &ActivationBuffer, num_classes: usize) -> Result<ActivationBatch> {
    let entries = buf.entries();
    if entries.is_empty() {
        return Err(Error::EmptyInput("peek_concat"));
    }
    let tensors: Vec<&crate::tensor::Tensor> = entries.iter().map(|e| &e.activations).collect();
    let labels: Vec<usize> = entries
        .iter()
        .flat_map(|e| e.labels.iter().copied())
        .collect();
    let label_dist = label_histogram(&labels, num_classes);
    Ok(ActivationBatch {
        activations: crate::tensor::Tensor::vstack(&tensors)?,
        labels,
        client_id: usize::MAX,
        progress_stamp: 0,
        label_dist,
    })
}
