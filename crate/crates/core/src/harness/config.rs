use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::delay::{PipelineConfig, PipelineMode};
use crate::env::{EnvConfig, WorldConfig};
use crate::ppo::PpoConfig;
use crate::randomization::RandomizationRanges;

/// Evaluation settings shared by every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Test-time sensor delay range in seconds, drawn per episode and per
    /// modality. `[0, 0]` disables injection.
    pub delay_range: [f64; 2],
    pub episodes_per_seed: usize,
    pub seeds: Vec<u64>,
    /// Obstacle speed range of the moving-obstacle protocol.
    pub moving_obstacle_speed: [f64; 2],
    /// Frames per sub-buffer evaluated by the `k` ablation.
    pub ablation_ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            delay_range: [0.04, 0.12],
            episodes_per_seed: 20,
            seeds: vec![1, 2, 3, 4, 5],
            moving_obstacle_speed: [0.05, 0.2],
            ablation_ks: vec![4, 8, 16],
        }
    }
}

/// Everything that determines a training or evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub pipeline: PipelineConfig,
    pub randomization: RandomizationRanges,
    pub ppo: PpoConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_mode(PipelineMode::Mmdr)
    }
}

impl RunConfig {
    pub fn for_mode(mode: PipelineMode) -> Self {
        Self {
            world: WorldConfig::default(),
            pipeline: PipelineConfig::for_mode(mode),
            randomization: RandomizationRanges::default(),
            ppo: PpoConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Parses a config file. Pipeline keys absent from the file take the
    /// defaults of the selected mode, which is `mode` if given, else the
    /// file's `pipeline.mode`, else MMDR.
    pub fn from_toml_str(text: &str, mode: Option<PipelineMode>) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let mut pipeline = match table.remove("pipeline") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(HarnessError::Config("[pipeline] must be a table".into())),
            None => toml::Table::new(),
        };
        let file_mode = match pipeline.get("mode") {
            Some(v) => Some(
                v.clone()
                    .try_into::<PipelineMode>()
                    .map_err(|e| HarnessError::Config(format!("pipeline.mode: {e}")))?,
            ),
            None => None,
        };
        let mode = mode.or(file_mode).unwrap_or(PipelineMode::Mmdr);
        pipeline.insert("mode".into(), toml::Value::try_from(mode).expect("mode serializes"));
        let mut base = toml::Table::try_from(PipelineConfig::for_mode(mode)).expect("pipeline serializes");
        base.extend(pipeline);
        table.insert("pipeline".into(), toml::Value::Table(base));
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, or the built-in defaults when `path` is `default`.
    pub fn load(path: &str, mode: Option<PipelineMode>) -> Result<Self, HarnessError> {
        if path == "default" {
            let cfg = Self::for_mode(mode.unwrap_or(PipelineMode::Mmdr));
            cfg.validate()?;
            return Ok(cfg);
        }
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_toml_str(&text, mode)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_toml_string()).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// JSON form stored in checkpoint headers; read back by
    /// [`checkpoint_run_config`](super::checkpoint_run_config).
    pub fn to_metadata(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig::new(self.world.clone(), self.pipeline.clone(), self.randomization.clone())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.ppo.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let [lo, hi] = self.eval.delay_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(HarnessError::Config(format!("eval.delay_range [{lo}, {hi}] is not a valid range")));
        }
        if self.eval.episodes_per_seed == 0 || self.eval.seeds.is_empty() {
            return Err(HarnessError::Config("eval needs at least one seed and one episode".into()));
        }
        let [slo, shi] = self.eval.moving_obstacle_speed;
        if !(slo.is_finite() && shi.is_finite() && 0.0 <= slo && slo <= shi) {
            return Err(HarnessError::Config("eval.moving_obstacle_speed is not a valid range".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string();
        for section in ["[world]", "[pipeline]", "[randomization]", "[ppo]", "[eval]"] {
            assert!(text.contains(section), "missing {section}");
        }
        assert_eq!(RunConfig::from_toml_str(&text, None).unwrap(), cfg);
    }

    #[test]
    fn mode_override_takes_that_modes_defaults() {
        let cfg = RunConfig::from_toml_str("[ppo]\nbatch_size = 32\nminibatches = 4\nnum_envs = 2\n", Some(PipelineMode::NoDelay)).unwrap();
        assert_eq!(cfg.pipeline, PipelineConfig::for_mode(PipelineMode::NoDelay));
        assert_eq!(cfg.ppo.batch_size, 32);
    }

    #[test]
    fn explicit_pipeline_keys_win() {
        let cfg = RunConfig::from_toml_str("[pipeline]\nmode = \"frame_extract\"\nk = 8\n", None).unwrap();
        assert_eq!(cfg.pipeline.mode, PipelineMode::FrameExtract);
        assert_eq!(cfg.pipeline.k, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[world]\nwarp_drive = true\n", None).is_err());
        assert!(RunConfig::from_toml_str("[ppo]\nminibatches = 7\n", None).is_err());
    }

    #[test]
    fn default_keyword_needs_no_file() {
        let cfg = RunConfig::load("default", Some(PipelineMode::StateOnly)).unwrap();
        assert_eq!(cfg.pipeline.mode, PipelineMode::StateOnly);
    }
}
