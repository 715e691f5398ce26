use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalConfig, HarnessError, RunConfig};
use crate::env::{stream_rng, EnvConfig, LatencyInjection, SimEnv};
use crate::nn::{ActorCritic, Checkpoint};
use crate::ppo::arch_for;

/// Evaluation episodes use RNG stream `EPISODE_STREAM_BASE + episode`.
const EPISODE_STREAM_BASE: u64 = 1 << 32;

/// Longest test-time delay accepted by a protocol.
pub const MAX_TEST_DELAY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    TrainEnvRandomDelay,
    MovingObstacles,
    AblationK,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [Self::TrainEnvRandomDelay, Self::MovingObstacles, Self::AblationK];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TrainEnvRandomDelay => "train_env_random_delay",
            Self::MovingObstacles => "moving_obstacles",
            Self::AblationK => "ablation_k",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "unknown protocol '{s}' (expected train_env_random_delay, moving_obstacles or ablation_k)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub kind: ProtocolKind,
    /// Per-episode test delay range, applied to each modality independently.
    pub delay_range: [f64; 2],
    pub episodes_per_seed: usize,
    pub seeds: Vec<u64>,
    pub moving_obstacles: bool,
    pub obstacle_speed: [f64; 2],
}

impl EvalProtocol {
    pub fn new(kind: ProtocolKind, cfg: &EvalConfig) -> Self {
        Self {
            kind,
            delay_range: cfg.delay_range,
            episodes_per_seed: cfg.episodes_per_seed,
            seeds: cfg.seeds.clone(),
            moving_obstacles: kind == ProtocolKind::MovingObstacles,
            obstacle_speed: cfg.moving_obstacle_speed,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let [lo, hi] = self.delay_range;
        if !(0.0 <= lo && lo <= hi && hi <= MAX_TEST_DELAY) {
            return Err(HarnessError::Config(format!(
                "test delay range [{lo}, {hi}] must lie within [0, {MAX_TEST_DELAY}] s"
            )));
        }
        if self.seeds.is_empty() || self.episodes_per_seed == 0 {
            return Err(HarnessError::Config("a protocol needs seeds and episodes".into()));
        }
        Ok(())
    }

    /// Reported numbers need at least three seeds.
    pub fn is_reportable(&self) -> bool {
        self.seeds.len() >= 3
    }

    /// The environment a policy trained under `run` is tested in.
    pub fn env_config(&self, run: &RunConfig) -> EnvConfig {
        let mut world = run.world.clone();
        if self.moving_obstacles {
            world.obstacle_speed = self.obstacle_speed;
        }
        let mut env = EnvConfig::new(world, run.pipeline.without_synthetic_delays(), run.randomization.clone());
        let [lo, hi] = self.delay_range;
        if hi > 0.0 {
            env.latency = Some(LatencyInjection::uniform(lo, hi));
        }
        env
    }
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub protocol: String,
    pub seed: u64,
    pub episode: usize,
    pub moving_distance: f64,
    pub collision_steps: u32,
    pub collision_count: u32,
    pub episode_length: usize,
    pub proprio_delay: f64,
    pub visual_delay: f64,
}

pub const REPORT_HEADER: &str = "method,protocol,seed,episode,moving_distance,collision_steps,collision_count,episode_length,proprio_delay,visual_delay";

impl EvalRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.protocol,
            self.seed,
            self.episode,
            self.moving_distance,
            self.collision_steps,
            self.collision_count,
            self.episode_length,
            self.proprio_delay,
            self.visual_delay
        )
    }
}

/// Mean and spread over seeds of one (method, protocol) cell. Per-seed
/// values are episode means; `*_std` is the sample standard deviation of
/// those seed means (zero for a single seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub protocol: String,
    pub seeds: usize,
    pub episodes: usize,
    pub moving_distance_mean: f64,
    pub moving_distance_std: f64,
    pub collision_steps_mean: f64,
    pub collision_steps_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<Summary>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Aggregates rows per (method, protocol) in order of first appearance.
pub fn summarize(rows: &[EvalRow]) -> Vec<Summary> {
    let mut cells: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.protocol.clone());
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .map(|(method, protocol)| {
            let cell: Vec<&EvalRow> = rows.iter().filter(|r| r.method == method && r.protocol == protocol).collect();
            let mut seeds: Vec<u64> = cell.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let per_seed = |f: &dyn Fn(&EvalRow) -> f64| -> Vec<f64> {
                seeds
                    .iter()
                    .map(|s| {
                        let v: Vec<f64> = cell.iter().filter(|r| r.seed == *s).map(|r| f(r)).collect();
                        v.iter().sum::<f64>() / v.len() as f64
                    })
                    .collect()
            };
            let (dm, ds) = mean_std(&per_seed(&|r| r.moving_distance));
            let (cm, cs) = mean_std(&per_seed(&|r| r.collision_steps as f64));
            Summary {
                method,
                protocol,
                seeds: seeds.len(),
                episodes: cell.len(),
                moving_distance_mean: dm,
                moving_distance_std: ds,
                collision_steps_mean: cm,
                collision_steps_std: cs,
            }
        })
        .collect()
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let summaries = summarize(&rows);
        Self { rows, summaries }
    }

    pub fn merge(reports: impl IntoIterator<Item = EvalReport>) -> Self {
        Self::from_rows(reports.into_iter().flat_map(|r| r.rows).collect())
    }

    pub fn summary(&self, method: &str, protocol: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.method == method && s.protocol == protocol)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// Writes the raw rows to `path` and the aggregates to `<path>.summary.csv`.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let io = |source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(path, self.to_csv()).map_err(io)?;
        let mut name = path.as_os_str().to_owned();
        name.push(".summary.csv");
        let mut f = fs::File::create(&name).map_err(io)?;
        writeln!(f, "method,protocol,seeds,episodes,moving_distance_mean,moving_distance_std,collision_steps_mean,collision_steps_std").map_err(io)?;
        for s in &self.summaries {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                s.method,
                s.protocol,
                s.seeds,
                s.episodes,
                s.moving_distance_mean,
                s.moving_distance_std,
                s.collision_steps_mean,
                s.collision_steps_std
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Runs one episode with the mean action and returns its row.
fn run_episode(
    net: &ActorCritic,
    env_cfg: &EnvConfig,
    method: &str,
    protocol: &str,
    seed: u64,
    episode: usize,
) -> Result<EvalRow, HarnessError> {
    let mut env = SimEnv::new(env_cfg.clone(), stream_rng(seed, EPISODE_STREAM_BASE + episode as u64))?;
    let mut obs = env.reset()?;
    let delays = env.injected_delays().unwrap_or_default();
    loop {
        let out = net.forward_one(&obs.proprio, &obs.depth)?;
        let step = env.control_step([out.mean[0], out.mean[1]])?;
        if step.done() {
            return Ok(EvalRow {
                method: method.to_string(),
                protocol: protocol.to_string(),
                seed,
                episode,
                moving_distance: step.metrics.moving_distance,
                collision_steps: step.metrics.collision_steps,
                collision_count: step.metrics.collision_count,
                episode_length: env.steps(),
                proprio_delay: delays.proprio,
                visual_delay: delays.visual,
            });
        }
        obs = step.observation;
    }
}

/// Evaluates a network trained under `run` with the deterministic policy.
/// Every episode owns an RNG derived from its (seed, episode index) pair.
pub fn evaluate_network(net: &ActorCritic, run: &RunConfig, protocol: &EvalProtocol) -> Result<EvalReport, HarnessError> {
    protocol.validate()?;
    let env_cfg = protocol.env_config(run);
    env_cfg.validate()?;
    let expected = arch_for(&env_cfg, net.arch().init_log_std);
    if *net.arch() != expected {
        return Err(HarnessError::ArchMismatch {
            method: run.pipeline.mode,
        });
    }
    let method = run.pipeline.mode.as_str();
    let mut rows = Vec::new();
    for &seed in &protocol.seeds {
        for ep in 0..protocol.episodes_per_seed {
            rows.push(run_episode(net, &env_cfg, method, protocol.kind.as_str(), seed, ep)?);
        }
    }
    Ok(EvalReport::from_rows(rows))
}

/// The run configuration stored in a checkpoint's metadata.
pub fn checkpoint_run_config(ckpt: &Checkpoint) -> Result<RunConfig, HarnessError> {
    serde_json::from_value(ckpt.header.metadata.clone()).map_err(|e| HarnessError::MissingMetadata(e.to_string()))
}

pub fn evaluate(ckpt: &Checkpoint, protocol: &EvalProtocol) -> Result<EvalReport, HarnessError> {
    let run = checkpoint_run_config(ckpt)?;
    let net = ckpt.clone().into_network()?;
    evaluate_network(&net, &run, protocol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::PipelineMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(method: &str, seed: u64, d: f64, c: u32) -> EvalRow {
        EvalRow {
            method: method.into(),
            protocol: "p".into(),
            seed,
            episode: 0,
            moving_distance: d,
            collision_steps: c,
            collision_count: 0,
            episode_length: 1,
            proprio_delay: 0.0,
            visual_delay: 0.0,
        }
    }

    #[test]
    fn summary_is_over_seed_means() {
        let rows = vec![row("a", 1, 1.0, 0), row("a", 1, 3.0, 2), row("a", 2, 6.0, 4), row("b", 1, 0.5, 1)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        // seed means 2 and 6
        assert_eq!(s[0].moving_distance_mean, 4.0);
        assert!((s[0].moving_distance_std - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[0].collision_steps_mean, 2.5);
        assert_eq!(s[1].seeds, 1);
        assert_eq!(s[1].moving_distance_std, 0.0);
    }

    #[test]
    fn protocol_names_parse() {
        for k in ProtocolKind::ALL {
            assert_eq!(k.as_str().parse::<ProtocolKind>().unwrap(), k);
        }
        assert!("warp".parse::<ProtocolKind>().is_err());
    }

    #[test]
    fn architecture_must_match_method() {
        let run = RunConfig::for_mode(PipelineMode::Mmdr);
        let other = RunConfig::for_mode(PipelineMode::StateOnly);
        let net = ActorCritic::new(arch_for(&other.env_config(), -0.5), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let protocol = EvalProtocol {
            episodes_per_seed: 1,
            seeds: vec![1],
            ..EvalProtocol::new(ProtocolKind::TrainEnvRandomDelay, &run.eval)
        };
        assert!(matches!(
            evaluate_network(&net, &run, &protocol),
            Err(HarnessError::ArchMismatch { .. })
        ));
    }

    #[test]
    fn rejects_unservable_delays() {
        let mut p = EvalProtocol::new(ProtocolKind::TrainEnvRandomDelay, &EvalConfig::default());
        p.delay_range = [0.5, 2.0];
        assert!(p.validate().is_err());
    }
}
