//! The planar robot world and its sensor-to-policy plumbing.
//!
//! [`World`] integrates the physics at `sim_hz`. [`SimEnv`] wraps a world
//! with the camera clock, optional test-time sensor latency, and the
//! observation pipeline, and exposes the control-rate step contract.

mod config;
pub mod render;
pub mod world;

use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::WorldConfig;
pub use render::render_depth;
pub use world::{wrap_angle, Contact, Obstacle, RobotState, World, PROPRIO_DIM};

use crate::delay::{
    sample_episode_delays, DelayDistribution, DelayError, Observation, ObservationPipeline, PipelineConfig,
    SampleBuffer, TimestampedSample,
};
use crate::image::DepthImage;
use crate::randomization::{corrupt_depth, sample_episode_randomization, RandomizationRanges};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
    #[error("could only place {placed} of {requested} obstacles")]
    ObstacleSampling { placed: usize, requested: usize },
    #[error("action contains non-finite values")]
    NonFiniteAction,
    #[error("robot state became non-finite")]
    NonFiniteState,
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("step called before reset")]
    NotReset,
    #[error(transparent)]
    Pipeline(#[from] DelayError),
}

/// `clip(v, 0, v_target) + 0.1 * alive - 0.005 * |u|^2`.
pub fn compute_reward(forward_velocity: f64, command: [f64; 2], alive: bool, target_velocity: f64) -> f64 {
    let forward = forward_velocity.clamp(0.0, target_velocity);
    let alive = if alive { 1.0 } else { 0.0 };
    let energy = -(command[0] * command[0] + command[1] * command[1]);
    forward + 0.1 * alive + 0.005 * energy
}

/// Evaluation metrics accumulated over one episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Net displacement along +x.
    pub moving_distance: f64,
    /// Control steps with any robot-obstacle contact.
    pub collision_steps: u32,
    /// Distinct contact events.
    pub collision_count: u32,
}

/// Sensor latency injected at test time, drawn independently per modality
/// for every episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyInjection {
    pub proprio: DelayDistribution,
    pub visual: DelayDistribution,
}

impl LatencyInjection {
    pub fn uniform(lower: f64, upper: f64) -> Self {
        let d = DelayDistribution { lower, upper };
        Self { proprio: d, visual: d }
    }
}

/// Everything needed to build a [`SimEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub world: WorldConfig,
    pub pipeline: PipelineConfig,
    pub randomization: RandomizationRanges,
    pub latency: Option<LatencyInjection>,
    pub record_trace: bool,
}

impl EnvConfig {
    pub fn new(world: WorldConfig, pipeline: PipelineConfig, randomization: RandomizationRanges) -> Self {
        Self {
            world,
            pipeline,
            randomization,
            latency: None,
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.world.validate()?;
        self.pipeline.validate()?;
        self.randomization
            .validate()
            .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        if let Some(lat) = &self.latency {
            lat.proprio.validate()?;
            lat.visual.validate()?;
        }
        if self.pipeline.mode.uses_vision() {
            let dt = self.world.control_dt();
            let needed = self.pipeline.max_visual_delay() + (self.pipeline.stack_count - 1) as f64 * dt;
            let span = (self.pipeline.visual_capacity() - 1) as f64 * dt;
            if needed > span + 1e-9 {
                return Err(EnvError::InvalidConfig(format!(
                    "visual buffer spans {span:.3} s but the pipeline needs {needed:.3} s"
                )));
            }
        }
        Ok(())
    }
}

/// One row of an optional episode trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub tick: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub reward: f64,
    pub contact: bool,
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> io::Result<()> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "tick,x,y,heading,reward,contact")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.tick, r.x, r.y, r.heading, r.reward, r.contact as u8
        )?;
    }
    out.flush()
}

/// Result of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    /// Newest undelayed proprioceptive snapshot.
    pub proprio: Vec<f64>,
    /// Whether a camera frame reached the visual buffer this step.
    pub new_frame: bool,
    pub reward: f64,
    pub terminated: bool,
    /// Horizon reached without termination.
    pub truncated: bool,
    pub contact: bool,
    /// Totals for the episode so far.
    pub metrics: EpisodeMetrics,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Delays applied to the sensor streams in the current episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InjectedDelays {
    pub proprio: f64,
    pub visual: f64,
}

struct LatencyBuffers {
    proprio: SampleBuffer<Vec<f64>>,
    frames: SampleBuffer<DepthImage>,
    delays: InjectedDelays,
    last_delivered: f64,
}

/// A world plus its sensors, observation pipeline and RNG stream.
pub struct SimEnv {
    config: EnvConfig,
    world: Option<World>,
    pipeline: ObservationPipeline,
    latency: Option<LatencyBuffers>,
    rng: ChaCha8Rng,
    offset_substeps: u64,
    next_camera_tick: u64,
    latest_frame: Option<(f64, DepthImage)>,
    metrics: EpisodeMetrics,
    prev_contact: bool,
    steps: usize,
    episode_return: f64,
    done: bool,
    proprio_pushes: usize,
    trace: Vec<TraceRow>,
}

impl SimEnv {
    pub fn new(config: EnvConfig, rng: ChaCha8Rng) -> Result<Self, EnvError> {
        config.validate()?;
        let w = &config.world;
        let p = &config.pipeline;
        let sim_hz = w.sim_hz as f64;
        let history_span = (p.proprio_history - 1) as f64 * w.control_dt();
        let proprio_capacity = ((p.max_proprio_delay() + history_span) * sim_hz).ceil() as usize + 2;
        let pipeline = ObservationPipeline::new(p.clone(), proprio_capacity, w.control_hz)?;

        let spc = w.substeps_per_control() as u64;
        let mut offset = proprio_capacity as u64 + (p.visual_capacity() as u64 + 1) * spc;
        let latency = config.latency.map(|lat| {
            let raw_p = (lat.proprio.upper * sim_hz).ceil() as usize + 2;
            let raw_f = (lat.visual.upper * w.camera_hz).ceil() as usize + 3;
            offset = offset.max(raw_p as u64 + (raw_f as u64 + 1) * spc);
            LatencyBuffers {
                proprio: SampleBuffer::new(raw_p),
                frames: SampleBuffer::new(raw_f),
                delays: InjectedDelays::default(),
                last_delivered: 0.0,
            }
        });
        Ok(Self {
            config,
            world: None,
            pipeline,
            latency,
            rng,
            offset_substeps: offset,
            next_camera_tick: 0,
            latest_frame: None,
            metrics: EpisodeMetrics::default(),
            prev_contact: false,
            steps: 0,
            episode_return: 0.0,
            done: true,
            proprio_pushes: 0,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Replaces the RNG stream used by subsequent resets.
    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    /// Mutable access for tests and scripted scenarios.
    pub fn world_mut(&mut self) -> Option<&mut World> {
        self.world.as_mut()
    }

    pub fn pipeline(&self) -> &ObservationPipeline {
        &self.pipeline
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        self.metrics
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn injected_delays(&self) -> Option<InjectedDelays> {
        self.latency.as_ref().map(|l| l.delays)
    }

    pub fn proprio_pushes(&self) -> usize {
        self.proprio_pushes
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Timestamp used by the sensor buffers for a given substep count.
    fn sensor_time(&self, substeps: u64) -> f64 {
        (self.offset_substeps + substeps) as f64 / self.config.world.sim_hz as f64
    }

    fn camera_tick_substep(&self, tick: u64) -> u64 {
        let w = &self.config.world;
        (tick as f64 * w.sim_hz as f64 / w.camera_hz).ceil() as u64
    }

    fn capture_frame(&mut self, world: &World) -> DepthImage {
        let mut frame = render_depth(world);
        corrupt_depth(&mut frame, &self.config.randomization, &mut self.rng);
        frame
    }

    /// Samples a new episode and pre-fills every buffer with the initial
    /// observation so delayed queries are servable from the first step.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let randomization = sample_episode_randomization(&self.config.randomization, &mut self.rng);
        let world = World::reset(&self.config.world, randomization, &mut self.rng)?;
        self.reset_with_world(world)
    }

    /// Like [`SimEnv::reset`] but with a caller-built world.
    pub fn reset_with_world(&mut self, world: World) -> Result<Observation, EnvError> {
        let delays = sample_episode_delays(&self.config.pipeline, &mut self.rng);
        self.pipeline.begin_episode(delays);
        let vision = self.config.pipeline.mode.uses_vision();
        let spc = self.config.world.substeps_per_control() as u64;
        let now = self.sensor_time(0);
        let snapshot = world.robot.proprio();
        let frame = if vision { Some(self.capture_frame(&world)) } else { None };

        let p_cap = self.pipeline.proprio_buffer().capacity() as u64;
        for i in (0..p_cap).rev() {
            self.pipeline
                .push_proprio(self.sensor_time(0) - i as f64 / self.config.world.sim_hz as f64, snapshot.clone())?;
        }
        if let Some(frame) = &frame {
            let v_cap = self.pipeline.visual_buffer().capacity() as u64;
            for j in (0..v_cap).rev() {
                let t = (self.offset_substeps - j * spc) as f64 / self.config.world.sim_hz as f64;
                self.pipeline.push_frame(t, frame.clone())?;
            }
        }
        if let Some(lat) = self.latency.as_mut() {
            let inj = self.config.latency.expect("latency buffers imply a latency config");
            lat.delays = InjectedDelays {
                proprio: inj.proprio.sample(&mut self.rng),
                visual: inj.visual.sample(&mut self.rng),
            };
            lat.proprio.clear();
            lat.frames.clear();
            let sim_hz = self.config.world.sim_hz as f64;
            for i in (0..lat.proprio.capacity() as u64).rev() {
                lat.proprio
                    .push(TimestampedSample::new(now - i as f64 / sim_hz, snapshot.clone()))?;
            }
            if let Some(frame) = &frame {
                let cap = lat.frames.capacity() as u64;
                for j in (0..cap).rev() {
                    let t = (self.offset_substeps - j * spc) as f64 / sim_hz;
                    lat.frames.push(TimestampedSample::new(t, frame.clone()))?;
                }
            }
            lat.last_delivered = now;
        }

        self.world = Some(world);
        self.next_camera_tick = 1;
        self.latest_frame = None;
        self.metrics = EpisodeMetrics::default();
        self.prev_contact = false;
        self.steps = 0;
        self.episode_return = 0.0;
        self.done = false;
        self.proprio_pushes = 0;
        self.trace.clear();
        Ok(self.pipeline.assemble(now)?)
    }

    /// Holds `action` for one control period of `sim_hz / control_hz`
    /// substeps, feeding the sensor buffers along the way.
    pub fn control_step(&mut self, action: [f64; 2]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(if self.world.is_none() {
                EnvError::NotReset
            } else {
                EnvError::EpisodeOver
            });
        }
        if !action.iter().all(|a| a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let mut world = self.world.take().ok_or(EnvError::NotReset)?;
        let result = self.advance(&mut world, action);
        self.world = Some(world);
        result
    }

    fn advance(&mut self, world: &mut World, action: [f64; 2]) -> Result<StepResult, EnvError> {
        let spc = self.config.world.substeps_per_control();
        let vision = self.config.pipeline.mode.uses_vision();
        let x_start = world.robot.x;
        let mut any_contact = false;
        let mut head_on = false;
        let mut sum_sq = [0.0; 2];

        for _ in 0..spc {
            let contact = world.substep(action)?;
            any_contact |= contact.contact;
            head_on |= contact.head_on;
            sum_sq[0] += world.robot.command[0].powi(2);
            sum_sq[1] += world.robot.command[1].powi(2);

            let t = self.sensor_time(world.substeps());
            let snapshot = world.robot.proprio();
            let delivered = match self.latency.as_mut() {
                Some(lat) => {
                    lat.proprio.push(TimestampedSample::new(t, snapshot))?;
                    lat.proprio.query_interpolated(t, lat.delays.proprio)?
                }
                None => snapshot,
            };
            self.pipeline.push_proprio(t, delivered)?;
            self.proprio_pushes += 1;

            if vision && world.substeps() >= self.camera_tick_substep(self.next_camera_tick) {
                let frame = self.capture_frame(world);
                if let Some(lat) = self.latency.as_mut() {
                    lat.frames.push(TimestampedSample::new(t, frame.clone()))?;
                }
                self.latest_frame = Some((t, frame));
                self.next_camera_tick += 1;
            }
        }

        let now = self.sensor_time(world.substeps());
        let mut new_frame = false;
        if vision {
            match self.latency.as_mut() {
                Some(lat) => {
                    let sample = lat.frames.nearest_older(now - lat.delays.visual)?;
                    if sample.time > lat.last_delivered {
                        let (capture, frame) = (sample.time, sample.value.clone());
                        lat.last_delivered = capture;
                        self.pipeline.push_frame(capture + lat.delays.visual, frame)?;
                        new_frame = true;
                    }
                }
                None => {
                    if let Some((t, frame)) = self.latest_frame.take() {
                        self.pipeline.push_frame(t, frame)?;
                        new_frame = true;
                    }
                }
            }
        }

        let cfg = &self.config.world;
        if any_contact {
            self.metrics.collision_steps += 1;
            if !self.prev_contact {
                self.metrics.collision_count += 1;
            }
        }
        self.prev_contact = any_contact;
        self.metrics.moving_distance = world.robot.x;

        let speed = world.robot.vx.hypot(world.robot.vy);
        let terminated = head_on
            || world.robot.yaw_rate.abs() > cfg.max_spin_rate
            || speed > cfg.speed_limit_factor * cfg.target_velocity
            || !world.inside_arena();
        self.steps += 1;
        let truncated = !terminated && self.steps >= cfg.max_episode_steps;

        let forward_velocity = (world.robot.x - x_start) / cfg.control_dt();
        let rms = [(sum_sq[0] / spc as f64).sqrt(), (sum_sq[1] / spc as f64).sqrt()];
        let reward = compute_reward(forward_velocity, rms, !terminated, cfg.target_velocity);
        self.episode_return += reward;
        self.done = terminated || truncated;

        if self.config.record_trace {
            self.trace.push(TraceRow {
                tick: self.steps,
                x: world.robot.x,
                y: world.robot.y,
                heading: world.robot.heading,
                reward,
                contact: any_contact,
            });
        }

        Ok(StepResult {
            observation: self.pipeline.assemble(now)?,
            proprio: world.robot.proprio(),
            new_frame,
            reward,
            terminated,
            truncated,
            contact: any_contact,
            metrics: self.metrics,
        })
    }
}

/// Independent RNG stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
