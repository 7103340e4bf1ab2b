//! Run orchestration: mode dispatch, the synchronous baseline loop,
//! checkpoint save/resume, and output files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::metrics::{emit_csv, emit_jsonl, evaluate_accuracy, MetricsLog, MetricsRow};
use crate::nn::sgd_step;
use crate::split::{
    client_backward_update, client_forward, server_loss_and_grads, ActivationBatch, SplitModel,
};
use crate::tensor::Tensor;
use crate::sim::{stream_rng, SimCore, SimEnv, Simulation};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config_text: String,
    pub core: SimCore,
}

pub struct RunOutput {
    pub metrics: MetricsLog,
    pub model: SplitModel,
    pub trace_lines: Vec<String>,
}

pub fn save_checkpoint(path: &Path, config: &ExperimentConfig, core: &SimCore) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        config_hash: config_hash(config),
        config_text: config.to_config_string(),
        core: core.clone(),
    };
    let json = serde_json::to_string(&ckpt).map_err(|e| Error::CheckpointDecode(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ExperimentConfig, SimCore)> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::CheckpointDecode(e.to_string()))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            got: ckpt.version,
        });
    }
    let config = crate::config::parse_config(&ckpt.config_text)?;
    if config_hash(&config) != ckpt.config_hash {
        return Err(Error::ConfigHashMismatch);
    }
    Ok((config, ckpt.core))
}

fn drive(sim: &mut Simulation, checkpoint_path: Option<&Path>) -> Result<()> {
    let checkpoint_at = sim.env.config.checkpoint_at;
    let mut last_agg = sim.core.agg_index;
    loop {
        let more = sim.step()?;
        if sim.core.agg_index != last_agg {
            last_agg = sim.core.agg_index;
            if let (Some(at), Some(path)) = (checkpoint_at, checkpoint_path) {
                if last_agg == at {
                    save_checkpoint(path, &sim.env.config, &sim.core)?;
                }
            }
        }
        if !more {
            return Ok(());
        }
    }
}

fn write_outputs(out_dir: &Path, out: &RunOutput, config: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut csv = fs::File::create(out_dir.join("metrics.csv"))?;
    emit_csv(&out.metrics, &mut csv)?;
    let mut jsonl = fs::File::create(out_dir.join("metrics.jsonl"))?;
    emit_jsonl(&out.metrics, &mut jsonl)?;
    if config.trace {
        let mut f = fs::File::create(out_dir.join("trace.jsonl"))?;
        for line in &out.trace_lines {
            writeln!(f, "{line}")?;
        }
    }
    if config.measure_dissimilarity {
        let mut f = fs::File::create(out_dir.join("dissim.csv"))?;
        writeln!(f, "server_update_index,sim_time,pre_generation,post_generation")?;
        for s in &out.metrics.dissim {
            writeln!(
                f,
                "{},{},{},{}",
                s.server_update_index, s.sim_time, s.pre_generation, s.post_generation
            )?;
        }
    }
    let model_json =
        serde_json::to_string(&out.model).map_err(|e| Error::CheckpointDecode(e.to_string()))?;
    fs::write(out_dir.join("final_model.json"), model_json)?;
    Ok(())
}

/// Run a configured experiment to completion. If `out_dir` is given,
/// write metrics.csv / metrics.jsonl / final_model.json (plus
/// trace.jsonl and dissim.csv when enabled) into it.
pub fn run_experiment(config: ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    config.validate()?;
    let out = match config.mode {
        Mode::Sync => {
            let env = SimEnv::build(config.clone())?;
            run_sync(&env)?
        }
        Mode::Gas | Mode::AsyncNogen => {
            let env = SimEnv::build(config.clone())?;
            let mut sim = Simulation::new(env)?;
            let ckpt_path: Option<PathBuf> =
                out_dir.map(|d| d.join("checkpoint.json"));
            if config.checkpoint_at.is_some() {
                if let Some(d) = out_dir {
                    fs::create_dir_all(d)?;
                }
            }
            drive(&mut sim, ckpt_path.as_deref())?;
            RunOutput {
                metrics: sim.core.metrics.clone(),
                model: sim.final_model(),
                trace_lines: sim.core.trace_lines.clone(),
            }
        }
    };
    if let Some(dir) = out_dir {
        write_outputs(dir, &out, &config)?;
    }
    Ok(out)
}

/// Resume an event-driven run from a checkpoint file and run it to
/// completion.
pub fn resume_experiment(checkpoint: &Path, out_dir: Option<&Path>) -> Result<RunOutput> {
    let (config, core) = load_checkpoint(checkpoint)?;
    if config.mode == Mode::Sync {
        return Err(Error::ValidationError(
            "sync mode runs do not support checkpointing".into(),
        ));
    }
    let env = SimEnv::build(config.clone())?;
    let mut sim = Simulation { env, core };
    if !sim.core.done {
        // Resumed runs do not re-save at checkpoint_at.
        drive(&mut sim, None)?;
    }
    let out = RunOutput {
        metrics: sim.core.metrics.clone(),
        model: sim.final_model(),
        trace_lines: sim.core.trace_lines.clone(),
    };
    if let Some(dir) = out_dir {
        write_outputs(dir, &out, &config)?;
    }
    Ok(out)
}

/// Synchronous split federated learning baseline: every round, C
/// selected clients run E lockstep iterations against the server; the
/// server consumes the C concatenated activation batches each
/// iteration, and the round ends with a data-size weighted average of
/// the client models. Simulated time advances by the slowest client's
/// round time.
pub fn run_sync(env: &SimEnv) -> Result<RunOutput> {
    let config = &env.config;
    let model = env.init_model()?;
    let mut server_layers = model.server_layers;
    let mut client_model = model.client_layers;
    let mut select_rng = stream_rng(config.seed, 3);
    let mut minibatch_rngs: Vec<_> = (0..config.num_clients)
        .map(|k| stream_rng(config.seed, 1000 + k as u64))
        .collect();
    let mut metrics = MetricsLog::default();
    let mut sim_time = 0.0;
    let mut server_update_count = 0u64;
    let mut last_accuracy = 0.0;

    for t in 1..=config.global_iterations {
        // Draw C distinct participants.
        let mut pool: Vec<usize> = (0..config.num_clients).collect();
        for i in 0..config.concurrent_clients {
            let j = i + select_rng.gen_range(0..pool.len() - i);
            pool.swap(i, j);
        }
        let participants: Vec<usize> = pool[..config.concurrent_clients].to_vec();

        let mut models: Vec<Vec<crate::nn::DenseLayer>> = participants
            .iter()
            .map(|_| client_model.clone())
            .collect();
        let mut round_time: f64 = 0.0;

        for _ in 0..config.local_iterations {
            // All clients forward on their own minibatch.
            let mut batches: Vec<ActivationBatch> = Vec::with_capacity(participants.len());
            let mut caches = Vec::with_capacity(participants.len());
            for (i, &k) in participants.iter().enumerate() {
                let ds = &env.client_datasets[k];
                let indices: Vec<usize> = {
                    let rng = &mut minibatch_rngs[k];
                    (0..config.batch_size)
                        .map(|_| rng.gen_range(0..ds.len()))
                        .collect()
                };
                let mb = ds.subset(&indices);
                let (batch, cache) = client_forward(
                    &models[i],
                    &mb.features,
                    &mb.labels,
                    k,
                    env.client_label_dists[k].clone(),
                )?;
                batches.push(batch);
                caches.push(cache);
            }
            // Server: one step on the concatenated activations.
            let tensors: Vec<&Tensor> = batches.iter().map(|b| &b.activations).collect();
            let labels: Vec<usize> = batches
                .iter()
                .flat_map(|b| b.labels.iter().copied())
                .collect();
            let concat = ActivationBatch {
                activations: Tensor::vstack(&tensors)?,
                labels: labels.clone(),
                client_id: usize::MAX,
                progress_stamp: t,
                label_dist: crate::split::label_histogram(&labels, env.num_classes),
            };
            let (_, grads, _) = server_loss_and_grads(&server_layers, &concat)?;
            // Client cut gradients come from the same server model the
            // forward pass used; the server steps afterwards.
            let mut grad_slices = Vec::with_capacity(participants.len());
            for batch in &batches {
                let (_, _, g) = server_loss_and_grads(&server_layers, batch)?;
                grad_slices.push(g);
            }
            sgd_step(&mut server_layers, &grads, config.learning_rate)?;
            server_update_count += 1;
            for (i, _) in participants.iter().enumerate() {
                client_backward_update(
                    &mut models[i],
                    &caches[i],
                    &grad_slices[i],
                    config.learning_rate,
                )?;
            }
        }

        // Round wall time: slowest participant (compute + uplinks).
        for (i, &k) in participants.iter().enumerate() {
            let prof = &env.profiles[k];
            let rate = crate::latency::uplink_rate_bps(prof, config.bandwidth_share_hz())?;
            let cut_dim = models[i].last().unwrap().out_dim();
            let fwd = crate::latency::compute_time(
                crate::latency::forward_flops(&models[i], config.batch_size),
                prof.flops_capacity,
            )?;
            let bwd = crate::latency::compute_time(
                crate::latency::backward_flops(&models[i], config.batch_size),
                prof.flops_capacity,
            )?;
            let act_up = crate::latency::transfer_time(
                crate::latency::activation_payload_bytes(config.batch_size, cut_dim),
                rate,
            )?;
            let model_up = crate::latency::transfer_time(
                crate::latency::model_payload_bytes(&models[i]),
                rate,
            )?;
            let client_time =
                (fwd + bwd + act_up) * config.local_iterations as f64 + model_up;
            round_time = round_time.max(client_time);
        }
        sim_time += round_time;

        // Data-size weighted aggregation in ascending client order.
        let mut order: Vec<usize> = (0..participants.len()).collect();
        order.sort_by_key(|&i| participants[i]);
        let total_data: f64 = order
            .iter()
            .map(|&i| env.profiles[participants[i]].data_size as f64)
            .sum();
        let mut agg = models[order[0]].clone();
        for layer in agg.iter_mut() {
            for w in layer.weights.data_mut().iter_mut() {
                *w = 0.0;
            }
            for b in layer.bias.data_mut().iter_mut() {
                *b = 0.0;
            }
        }
        for &i in &order {
            let w = env.profiles[participants[i]].data_size as f64 / total_data;
            for (al, ml) in agg.iter_mut().zip(models[i].iter()) {
                for (a, m) in al.weights.data_mut().iter_mut().zip(ml.weights.data().iter()) {
                    *a += w * m;
                }
                for (a, m) in al.bias.data_mut().iter_mut().zip(ml.bias.data().iter()) {
                    *a += w * m;
                }
            }
        }
        client_model = agg;

        if t % config.eval_every == 0 || t == config.global_iterations {
            last_accuracy = evaluate_accuracy(&client_model, &server_layers, &env.test_set)?;
        }
        metrics.push_row(MetricsRow {
            aggregation_index: t,
            sim_time,
            server_update_count,
            test_accuracy: last_accuracy,
            grad_dissim_pre: None,
            grad_dissim_post: None,
            act_buffer_rows: 0,
            model_buffer_len: 0,
        })?;
    }

    Ok(RunOutput {
        metrics,
        model: SplitModel {
            client_layers: client_model,
            server_layers,
            num_classes: env.num_classes,
        },
        trace_lines: Vec::new(),
    })
}
