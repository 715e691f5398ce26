use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mmdr_core::{
    assemble_observation, render_depth, stream_rng, DepthImage, EnvConfig, EpisodeDelays, EpisodeRandomization,
    PipelineConfig, PipelineMode, RandomizationRanges, SampleBuffer, SimEnv, TimestampedSample, World, WorldConfig,
};
use rand::Rng;

fn buffers() -> (SampleBuffer<Vec<f64>>, SampleBuffer<DepthImage>) {
    let mut proprio = SampleBuffer::new(64);
    for i in 0..64 {
        let t = i as f64 / 400.0;
        proprio.push(TimestampedSample::new(t, vec![t; 8])).unwrap();
    }
    let mut visual = SampleBuffer::new(16);
    for i in 0..16 {
        visual
            .push(TimestampedSample::new(i as f64 / 25.0, DepthImage::filled(32, 32, 0.3 + i as f32 * 0.5)))
            .unwrap();
    }
    (proprio, visual)
}

fn bench_buffers(c: &mut Criterion) {
    let (proprio, _) = buffers();
    c.bench_function("query_interpolated/proprio64", |b| {
        b.iter(|| proprio.query_interpolated(black_box(0.16), black_box(0.0137)).unwrap())
    });
    c.bench_function("push/proprio_evicting", |b| {
        let mut buf = proprio.clone();
        let mut t = 1.0;
        b.iter(|| {
            t += 0.0025;
            buf.push(TimestampedSample::new(t, vec![t; 8])).unwrap();
        })
    });
}

fn bench_assemble(c: &mut Criterion) {
    let (proprio, visual) = buffers();
    let mut group = c.benchmark_group("assemble_observation");
    for mode in PipelineMode::ALL {
        let cfg = PipelineConfig::for_mode(mode);
        let delays = EpisodeDelays {
            proprio_delay: 0.02,
            visual_delay: 0.05,
            visual_indices_seed: 1,
        };
        let mut rng = stream_rng(0, 0);
        group.bench_function(mode.as_str(), |b| {
            b.iter(|| assemble_observation(&cfg, &proprio, &visual, 0.6, &delays, 0.04, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn bench_env(c: &mut Criterion) {
    let world = World::reset(&WorldConfig::default(), EpisodeRandomization::nominal(), &mut stream_rng(3, 0)).unwrap();
    c.bench_function("render_depth/32x32", |b| b.iter(|| render_depth(black_box(&world))));

    let mut group = c.benchmark_group("control_step");
    for mode in [PipelineMode::Mmdr, PipelineMode::Interpolation, PipelineMode::StateOnly] {
        let cfg = EnvConfig::new(WorldConfig::default(), PipelineConfig::for_mode(mode), RandomizationRanges::default());
        let mut env = SimEnv::new(cfg, stream_rng(4, 0)).unwrap();
        let mut rng = stream_rng(4, 1);
        group.bench_function(mode.as_str(), |b| {
            b.iter_batched(
                || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                |action| {
                    if env.is_done() {
                        env.reset().unwrap();
                    }
                    env.control_step(action).unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, bench_buffers, bench_assemble, bench_env);
criterion_main!(benches);
