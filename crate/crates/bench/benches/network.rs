use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mmdr_core::ppo::arch_for;
use mmdr_core::{stream_rng, ActorCritic, OutputGrads, PipelineMode, RunConfig};
use ndarray::Array2;
use rand::Rng;

fn network(mode: PipelineMode) -> ActorCritic {
    let run = RunConfig::for_mode(mode);
    ActorCritic::new(arch_for(&run.env_config(), run.ppo.init_log_std), &mut stream_rng(0, 0)).unwrap()
}

fn inputs(net: &ActorCritic, batch: usize) -> (Array2<f64>, Array2<f32>) {
    let arch = net.arch();
    let mut rng = stream_rng(1, 0);
    let p = Array2::from_shape_fn((batch, arch.proprio_dim), |_| rng.random_range(-1.0..1.0));
    let depth_len = if arch.use_vision { arch.depth_len() } else { 0 };
    let d = Array2::from_shape_fn((batch, depth_len), |_| rng.random_range(0.3f32..10.0));
    (p, d)
}

fn bench_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    for (mode, batch) in [(PipelineMode::Mmdr, 1), (PipelineMode::Mmdr, 16), (PipelineMode::StateOnly, 16)] {
        let net = network(mode);
        let (p, d) = inputs(&net, batch);
        group.bench_function(format!("{}/batch{batch}", mode.as_str()), |b| {
            b.iter(|| net.forward(black_box(p.view()), black_box(d.view())).unwrap())
        });
    }
    group.finish();
}

fn bench_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    group.sample_size(10);
    for mode in [PipelineMode::Mmdr, PipelineMode::StateOnly] {
        let mut net = network(mode);
        let batch = 1024;
        let (p, d) = inputs(&net, batch);
        let mut grads = OutputGrads::zeros(batch, net.arch().action_dim);
        grads.d_value.fill(1.0 / batch as f64);
        group.bench_function(format!("{}/batch{batch}", mode.as_str()), |b| {
            b.iter(|| {
                net.params_mut().zero_grads();
                net.forward_recorded(p.view(), d.view()).unwrap();
                net.backward(&grads).unwrap();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_forward, bench_backward);
criterion_main!(benches);
