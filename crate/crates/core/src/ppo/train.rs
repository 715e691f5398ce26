use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{collect_rollout, compute_gae, normalize_advantages, ppo_update, PpoConfig, PpoError, RolloutWorkers};
use crate::env::{stream_rng, EnvConfig, PROPRIO_DIM};
use crate::nn::{write_checkpoint, ActorCritic, Adam, AdamConfig, ArchConfig};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 2;

pub const METRICS_HEADER: &str = "batch_index,samples,mean_return,mean_moving_distance,mean_collision_steps,policy_loss,value_loss,kl,clip_fraction,wall_seconds";

/// Network architecture matching the observations `env` produces.
pub fn arch_for(env: &EnvConfig, init_log_std: f64) -> ArchConfig {
    let p = &env.pipeline;
    ArchConfig {
        init_log_std,
        ..ArchConfig::for_pipeline(
            p.mode,
            PROPRIO_DIM * p.proprio_history,
            p.stack_count,
            (env.world.depth_height, env.world.depth_width),
        )
    }
}

/// One line of the training metrics file. Episode means cover the episodes
/// that finished during the batch's rollout and are NaN when none did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMetrics {
    pub batch_index: u64,
    pub samples: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_moving_distance: f64,
    pub mean_collision_steps: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub wall_seconds: f64,
}

impl BatchMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3}",
            self.batch_index,
            self.samples,
            self.mean_return,
            self.mean_moving_distance,
            self.mean_collision_steps,
            self.policy_loss,
            self.value_loss,
            self.kl,
            self.clip_fraction,
            self.wall_seconds
        )
    }
}

pub struct TrainOutcome {
    pub net: ActorCritic,
    pub metrics: Vec<BatchMetrics>,
    /// Every checkpoint written, the final one last.
    pub checkpoints: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PpoError + '_ {
    move |source| PpoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Alternates rollout collection and PPO updates until `cfg.total_samples`
/// transitions have been consumed.
///
/// With an output directory, writes `metrics.csv` as batches complete,
/// `checkpoint_<samples>.ckpt` every `cfg.checkpoint_every` batches and
/// `final.ckpt` at the end. A non-finite loss dumps `aborted.ckpt` before
/// the error is returned.
pub fn train(
    env: &EnvConfig,
    cfg: &PpoConfig,
    seed: u64,
    out_dir: Option<&Path>,
    metadata: serde_json::Value,
    progress: &mut dyn FnMut(&BatchMetrics),
) -> Result<TrainOutcome, PpoError> {
    cfg.validate()?;
    env.validate()
        .map_err(|source| PpoError::Env { env: 0, source })?;
    let mut net = ActorCritic::new(arch_for(env, cfg.init_log_std), &mut stream_rng(seed, INIT_STREAM))?;
    let mut opt = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        net.params().len(),
    );
    let mut shuffle_rng = stream_rng(seed, SHUFFLE_STREAM);
    let mut workers = RolloutWorkers::new(env, cfg.num_envs, seed)?;

    let mut csv = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("metrics.csv");
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            writeln!(w, "{METRICS_HEADER}").map_err(io_err(&path))?;
            Some((w, path))
        }
        None => None,
    };

    let save = |net: &ActorCritic, name: String, samples: u64| -> Result<Option<PathBuf>, PpoError> {
        let Some(dir) = out_dir else { return Ok(None) };
        let path = dir.join(name);
        write_checkpoint(&path, net, seed, samples, metadata.clone())?;
        Ok(Some(path))
    };

    let start = Instant::now();
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let mut samples = 0u64;
    for batch_index in 0..cfg.num_batches() {
        let (traj, episodes) = collect_rollout(&net, &mut workers, cfg.batch_size)?;
        samples += traj.len() as u64;
        let (mut adv, returns) = compute_gae(&traj, cfg.gamma, cfg.gae_lambda);
        normalize_advantages(&mut adv);
        let stats = match ppo_update(&mut net, &mut opt, &traj, &adv, &returns, cfg, &mut shuffle_rng) {
            Ok(s) => s,
            Err(e @ PpoError::NonFiniteLoss { .. }) => {
                save(&net, "aborted.ckpt".into(), samples)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let m = BatchMetrics {
            batch_index,
            samples,
            episodes: episodes.len(),
            mean_return: mean(episodes.iter().map(|e| e.episode_return)),
            mean_moving_distance: mean(episodes.iter().map(|e| e.metrics.moving_distance)),
            mean_collision_steps: mean(episodes.iter().map(|e| e.metrics.collision_steps as f64)),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            kl: stats.kl,
            clip_fraction: stats.clip_fraction,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if let Some((w, path)) = csv.as_mut() {
            writeln!(w, "{}", m.csv_row()).map_err(io_err(path))?;
            w.flush().map_err(io_err(path))?;
        }
        progress(&m);
        metrics.push(m);
        let last = batch_index + 1 == cfg.num_batches();
        if !last && cfg.checkpoint_every > 0 && (batch_index + 1) % cfg.checkpoint_every as u64 == 0 {
            checkpoints.extend(save(&net, format!("checkpoint_{samples:09}.ckpt"), samples)?);
        }
    }
    checkpoints.extend(save(&net, "final.ckpt".into(), samples)?);
    Ok(TrainOutcome {
        net,
        metrics,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{PipelineConfig, PipelineMode};
    use crate::env::WorldConfig;
    use crate::randomization::RandomizationRanges;

    fn tiny() -> (EnvConfig, PpoConfig) {
        let env = EnvConfig::new(
            WorldConfig::default(),
            PipelineConfig::for_mode(PipelineMode::StateOnly),
            RandomizationRanges::default(),
        );
        let cfg = PpoConfig {
            total_samples: 64,
            batch_size: 64,
            minibatches: 4,
            num_envs: 2,
            epochs: 1,
            ..PpoConfig::default()
        };
        (env, cfg)
    }

    #[test]
    fn one_batch_is_one_cycle() {
        let (env, cfg) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&env, &cfg, 1, Some(dir.path()), serde_json::Value::Null, &mut |_| {}).unwrap();
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics[0].samples, 64);
        assert_eq!(out.checkpoints, vec![dir.path().join("final.ckpt")]);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn sample_accounting_rounds_up_to_whole_batches() {
        let (env, cfg) = tiny();
        let cfg = PpoConfig { total_samples: 150, ..cfg };
        let out = train(&env, &cfg, 1, None, serde_json::Value::Null, &mut |_| {}).unwrap();
        assert_eq!(out.metrics.len(), 3);
        assert_eq!(out.metrics.last().unwrap().samples, 3 * 64);
    }
}
