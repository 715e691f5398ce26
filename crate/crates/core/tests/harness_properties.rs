use std::collections::BTreeMap;

use mmdr_core::harness::{EvalRow, ProtocolKind};
use mmdr_core::nn::read_checkpoint;
use mmdr_core::{evaluate, stream_rng, train, EvalProtocol, EvalReport, PipelineMode, RunConfig, SimEnv};
use proptest::prelude::*;

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

proptest! {
    #[test]
    fn summaries_match_recomputation_from_raw_rows(
        cells in prop::collection::vec((0usize..2, 1u64..6, 0.0f64..12.0, 0u32..500), 1..80),
    ) {
        let methods = ["mmdr", "no_delay"];
        let rows: Vec<EvalRow> = cells
            .iter()
            .enumerate()
            .map(|(i, &(m, seed, d, c))| EvalRow {
                method: methods[m].into(),
                protocol: "moving_obstacles".into(),
                seed,
                episode: i,
                moving_distance: d,
                collision_steps: c,
                collision_count: c / 3,
                episode_length: 500,
                proprio_delay: 0.05,
                visual_delay: 0.07,
            })
            .collect();
        let report = EvalReport::from_rows(rows.clone());

        let mut groups: BTreeMap<&str, BTreeMap<u64, Vec<&EvalRow>>> = BTreeMap::new();
        for r in &rows {
            groups.entry(r.method.as_str()).or_default().entry(r.seed).or_default().push(r);
        }
        prop_assert_eq!(report.summaries.len(), groups.len());
        for (method, seeds) in &groups {
            let s = report.summary(method, "moving_obstacles").expect("summary present");
            let dist: Vec<f64> = seeds.values().map(|v| v.iter().map(|r| r.moving_distance).sum::<f64>() / v.len() as f64).collect();
            let coll: Vec<f64> = seeds.values().map(|v| v.iter().map(|r| r.collision_steps as f64).sum::<f64>() / v.len() as f64).collect();
            prop_assert_eq!(s.seeds, seeds.len());
            prop_assert_eq!(s.episodes, seeds.values().map(Vec::len).sum::<usize>());
            prop_assert!(close(s.moving_distance_mean, dist.iter().sum::<f64>() / dist.len() as f64));
            prop_assert!(close(s.collision_steps_mean, coll.iter().sum::<f64>() / coll.len() as f64));
            prop_assert!(close(s.moving_distance_std, sample_std(&dist)));
            prop_assert!(close(s.collision_steps_std, sample_std(&coll)));
        }
    }
}

#[test]
fn injected_modality_delays_are_uncorrelated() {
    let run = RunConfig::for_mode(PipelineMode::Mmdr);
    for kind in [ProtocolKind::TrainEnvRandomDelay, ProtocolKind::MovingObstacles] {
        let protocol = EvalProtocol::new(kind, &run.eval);
        let mut cfg = protocol.env_config(&run);
        cfg.world.obstacle_count = [0, 0];
        let mut env = SimEnv::new(cfg, stream_rng(17, 0)).unwrap();
        let (mut p, mut v) = (Vec::new(), Vec::new());
        for _ in 0..4000 {
            env.reset().unwrap();
            let d = env.injected_delays().expect("delayed protocol injects latency");
            assert!((0.04..=0.12).contains(&d.proprio) && (0.04..=0.12).contains(&d.visual));
            p.push(d.proprio);
            v.push(d.visual);
        }
        let n = p.len() as f64;
        let (mp, mv) = (p.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
        let cov: f64 = p.iter().zip(&v).map(|(a, b)| (a - mp) * (b - mv)).sum();
        let sp: f64 = p.iter().map(|a| (a - mp).powi(2)).sum::<f64>().sqrt();
        let sv: f64 = v.iter().map(|b| (b - mv).powi(2)).sum::<f64>().sqrt();
        let corr = cov / (sp * sv);
        assert!(corr.abs() < 0.05, "{kind}: correlation {corr}");
    }
}

#[test]
fn evaluation_is_repeatable_and_leaves_checkpoints_alone() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = RunConfig::for_mode(PipelineMode::Mmdr);
    run.world.max_episode_steps = 20;
    run.ppo.total_samples = 32;
    run.ppo.batch_size = 32;
    run.ppo.minibatches = 2;
    run.ppo.num_envs = 2;
    run.ppo.epochs = 1;
    train(&run.env_config(), &run.ppo, 4, Some(dir.path()), run.to_metadata(), &mut |_| {}).unwrap();
    let path = dir.path().join("final.ckpt");
    let bytes = std::fs::read(&path).unwrap();

    let protocol = EvalProtocol {
        episodes_per_seed: 2,
        seeds: vec![1, 2],
        ..EvalProtocol::new(ProtocolKind::MovingObstacles, &run.eval)
    };
    let ckpt = read_checkpoint(&path).unwrap();
    let a = evaluate(&ckpt, &protocol).unwrap();
    let b = evaluate(&read_checkpoint(&path).unwrap(), &protocol).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.rows.len(), 4);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    // Delays are drawn per (seed, episode): a single-episode protocol
    // reproduces the first episode of each seed.
    let single = EvalProtocol {
        episodes_per_seed: 1,
        seeds: vec![2],
        ..protocol.clone()
    };
    let c = evaluate(&ckpt, &single).unwrap();
    assert_eq!(c.rows[0], a.rows[2]);
}
