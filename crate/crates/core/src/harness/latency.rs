//! Effective sensor delays of each pipeline under a measured latency profile.
//!
//! Sensor streams are simulated on their own jittered clocks. Every sample
//! carries its capture time as its value, so the observation a pipeline
//! assembles directly tells how old each modality is when the resulting
//! action reaches the actuators.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::delay::{sample_episode_delays, ObservationPipeline, PipelineConfig, PipelineMode};
use crate::env::stream_rng;
use crate::image::DepthImage;

/// Mean and standard deviation of a duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub mean: f64,
    pub std: f64,
}

impl Jitter {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    /// Gaussian draw, floored at a tenth of the mean so clocks always advance.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mean + self.std * z).max(0.1 * self.mean)
    }
}

/// Update intervals of the sensors and the compute/actuation latencies of
/// the control loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub depth_interval: Jitter,
    pub joint_interval: Jitter,
    pub imu_interval: Jitter,
    pub inference: Jitter,
    pub actuation: Jitter,
}

impl Default for LatencyProfile {
    fn default() -> Self {
        Self {
            depth_interval: Jitter::new(0.033, 0.004),
            joint_interval: Jitter::new(0.0025, 0.001),
            imu_interval: Jitter::new(0.0025, 0.001),
            inference: Jitter::new(0.040, 0.009),
            actuation: Jitter::new(0.0025, 0.001),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        }
    }
}

/// Measured stream intervals and effective delays for one pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub mode: PipelineMode,
    pub depth_interval: Stat,
    pub joint_interval: Stat,
    pub imu_interval: Stat,
    /// Age of the newest proprio entry when the action is applied.
    pub proprio_delay: Stat,
    /// Age of the newest and oldest stacked frame when the action is
    /// applied; empty for modes without vision.
    pub visual_delay_newest: Stat,
    pub visual_delay_oldest: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub duration: f64,
    pub control_hz: u32,
    /// Control ticks per sampled set of pipeline delays.
    pub episode_ticks: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            duration: 600.0,
            control_hz: 25,
            episode_ticks: 500,
            seed: 0,
        }
    }
}

fn arrival_times<R: Rng + ?Sized>(j: Jitter, until: f64, rng: &mut R) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = Vec::new();
    while t <= until {
        out.push(t);
        t += j.sample(rng);
    }
    out
}

fn intervals(times: &[f64]) -> Vec<f64> {
    times.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Simulates `settings.duration` seconds of sensor traffic and runs each
/// mode's pipeline at the control rate. All modes see the same streams.
pub fn bench_delays(profile: &LatencyProfile, modes: &[PipelineMode], settings: &BenchSettings) -> Result<Vec<DelayStats>, HarnessError> {
    let mut rng = stream_rng(settings.seed, 0);
    let depth = arrival_times(profile.depth_interval, settings.duration, &mut rng);
    let joint = arrival_times(profile.joint_interval, settings.duration, &mut rng);
    let imu = arrival_times(profile.imu_interval, settings.duration, &mut rng);
    let mut proprio: Vec<f64> = joint.iter().chain(&imu).copied().collect();
    proprio.sort_by(f64::total_cmp);
    proprio.dedup();

    let dt = 1.0 / settings.control_hz as f64;
    let ticks = (settings.duration / dt) as usize;
    let latency: Vec<f64> = (0..ticks)
        .map(|_| profile.inference.sample(&mut rng) + profile.actuation.sample(&mut rng))
        .collect();

    let mut out = Vec::new();
    for &mode in modes {
        let config = PipelineConfig::for_mode(mode);
        // Enough proprio history for the deepest query at the densest rate.
        let span = config.max_proprio_delay() + (config.proprio_history as f64 + 1.0) * dt;
        let capacity = (span / (0.1 * profile.joint_interval.mean.min(profile.imu_interval.mean))).ceil() as usize + 2;
        let mut pipe = ObservationPipeline::new(config.clone(), capacity, settings.control_hz)?;
        let mut delay_rng = stream_rng(settings.seed, 1);
        let (mut pi, mut di) = (0usize, 0usize);
        let mut last_frame = f64::NEG_INFINITY;
        let (mut p_delay, mut v_new, mut v_old) = (Vec::new(), Vec::new(), Vec::new());
        for tick in 0..ticks {
            if tick % settings.episode_ticks.max(1) == 0 {
                pipe.begin_episode(sample_episode_delays(&config, &mut delay_rng));
            }
            let now = tick as f64 * dt;
            while pi < proprio.len() && proprio[pi] <= now {
                pipe.push_proprio(proprio[pi], vec![proprio[pi]])?;
                pi += 1;
            }
            while di < depth.len() && depth[di] <= now {
                di += 1;
            }
            if mode.uses_vision() && di > 0 && depth[di - 1] > last_frame {
                let t = depth[di - 1];
                pipe.push_frame(t, DepthImage::filled(1, 1, t as f32))?;
                last_frame = t;
            }
            let obs = match pipe.assemble(now) {
                Ok(o) => o,
                Err(crate::delay::DelayError::ColdBuffer { .. } | crate::delay::DelayError::EmptyBuffer) => continue,
                Err(e) => return Err(e.into()),
            };
            let applied = now + latency[tick];
            p_delay.push(applied - obs.proprio[0]);
            if mode.uses_vision() {
                v_new.push(applied - obs.depth[0] as f64);
                v_old.push(applied - *obs.depth.last().expect("non-empty stack") as f64);
            }
        }
        out.push(DelayStats {
            mode,
            depth_interval: Stat::of(&intervals(&depth)),
            joint_interval: Stat::of(&intervals(&joint)),
            imu_interval: Stat::of(&intervals(&imu)),
            proprio_delay: Stat::of(&p_delay),
            visual_delay_newest: Stat::of(&v_new),
            visual_delay_oldest: Stat::of(&v_old),
        });
    }
    Ok(out)
}

pub fn render_delay_stats(stats: &[DelayStats]) -> String {
    let mut out = String::new();
    if let Some(s) = stats.first() {
        let _ = writeln!(
            out,
            "stream intervals: depth {:.3} ± {:.3} s, joint {:.4} ± {:.4} s, imu {:.4} ± {:.4} s",
            s.depth_interval.mean,
            s.depth_interval.std,
            s.joint_interval.mean,
            s.joint_interval.std,
            s.imu_interval.mean,
            s.imu_interval.std
        );
    }
    let _ = writeln!(
        out,
        "{:<14} {:>16}  {:>16}  {:>16}",
        "mode", "proprio_delay", "visual_newest", "visual_oldest"
    );
    let cell = |s: &Stat| {
        if s.count == 0 {
            "-".to_string()
        } else {
            format!("{:.3} ± {:.3}", s.mean, s.std)
        }
    };
    for s in stats {
        let _ = writeln!(
            out,
            "{:<14} {:>16}  {:>16}  {:>16}",
            s.mode.as_str(),
            cell(&s.proprio_delay),
            cell(&s.visual_delay_newest),
            cell(&s.visual_delay_oldest)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_interval_mean_matches_profile() {
        let stats = bench_delays(
            &LatencyProfile::default(),
            &[PipelineMode::NoDelay],
            &BenchSettings {
                duration: 300.0,
                ..BenchSettings::default()
            },
        )
        .unwrap();
        assert!((stats[0].depth_interval.mean - 0.033).abs() < 5e-4);
        assert!((stats[0].joint_interval.mean - 0.0025).abs() < 1e-4);
    }

    #[test]
    fn synthetic_delays_add_age() {
        let stats = bench_delays(
            &LatencyProfile::default(),
            &[PipelineMode::NoDelay, PipelineMode::FixedDelay, PipelineMode::StateOnly],
            &BenchSettings {
                duration: 60.0,
                ..BenchSettings::default()
            },
        )
        .unwrap();
        let none = &stats[0];
        let fixed = &stats[1];
        // Newest data is at most one sensor interval old before inference.
        assert!(none.proprio_delay.mean > 0.04 && none.proprio_delay.mean < 0.05);
        assert!((fixed.proprio_delay.mean - none.proprio_delay.mean - 0.04).abs() < 0.005);
        assert!(fixed.visual_delay_newest.mean > none.visual_delay_newest.mean + 0.02);
        assert_eq!(stats[2].visual_delay_newest.count, 0);
    }
}
