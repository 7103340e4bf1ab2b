use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use gas_core::actdist::{CovarianceMode, LabelGaussian};
use gas_core::config::{DatasetSpec, ExperimentConfig, PartitionSpec};
use gas_core::nn::{mlp_backward, mlp_forward, Activation, DenseLayer};
use gas_core::sim::{SimEnv, Simulation};
use gas_core::split::logit_adjusted_loss;
use gas_core::Tensor;

fn bench_streaming_update(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let d = 64;
    let rows: Vec<Vec<f64>> = (0..256)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    c.bench_function("streaming_update_diag_d64", |b| {
        b.iter(|| {
            let mut est = LabelGaussian::new(d, CovarianceMode::Diagonal);
            for (i, row) in rows.iter().enumerate() {
                est.update(row, 1.0 + i as f64).unwrap();
            }
            est
        })
    });
    c.bench_function("streaming_update_full_d64", |b| {
        b.iter(|| {
            let mut est = LabelGaussian::new(d, CovarianceMode::Full);
            for (i, row) in rows.iter().enumerate() {
                est.update(row, 1.0 + i as f64).unwrap();
            }
            est
        })
    });
}

fn bench_forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let layers = vec![
        DenseLayer::init(784, 64, Activation::Relu, &mut rng),
        DenseLayer::init(64, 10, Activation::Identity, &mut rng),
    ];
    let x = Tensor::from_vec(
        &[32, 784],
        (0..32 * 784).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..32).map(|_| rng.gen_range(0..10)).collect();
    let dist = vec![0.1; 10];
    c.bench_function("mlp_forward_784_64_10_b32", |b| {
        b.iter(|| mlp_forward(&layers, &x).unwrap())
    });
    c.bench_function("mlp_forward_backward_784_64_10_b32", |b| {
        b.iter(|| {
            let (out, caches) = mlp_forward(&layers, &x).unwrap();
            let (_, grad_logits) = logit_adjusted_loss(&out, &labels, &dist).unwrap();
            mlp_backward(&layers, &caches, &grad_logits).unwrap()
        })
    });
}

fn bench_simulation_step(c: &mut Criterion) {
    let config = ExperimentConfig {
        num_clients: 8,
        concurrent_clients: 4,
        local_iterations: 4,
        global_iterations: u64::MAX,
        batch_size: 16,
        activation_buffer_batches: 4,
        model_buffer_capacity: 4,
        dataset: DatasetSpec::Synthetic {
            classes: 4,
            per_class: 200,
            dim: 16,
            sep: 3.0,
            test_fraction: 0.2,
        },
        partition: PartitionSpec::Shard {
            shards_per_client: 2,
        },
        hidden_widths: vec![16],
        cut_index: 1,
        ..ExperimentConfig::default()
    };
    let env = SimEnv::build(config).unwrap();
    c.bench_function("simulation_step_gas", |b| {
        b.iter_batched(
            || Simulation::new(env.clone()).unwrap(),
            |mut sim| {
                for _ in 0..64 {
                    sim.step().unwrap();
                }
                sim
            },
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_streaming_update,
    bench_forward_backward,
    bench_simulation_step
);
criterion_main!(benches);
