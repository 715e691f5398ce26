//! Multi-modal delay randomization for vision-guided locomotion policies.
//!
//! The crate is organized bottom-up:
//!
//! * [`delay`] buffers timestamped sensor streams and assembles policy
//!   observations under six strategies, including per-modality delay
//!   randomization.
//! * [`randomization`] samples per-episode dynamics parameters and corrupts
//!   depth frames with holes.
//! * [`env`] is a planar robot world with a 400 Hz PD-driven actuator, a
//!   raycast depth camera and box obstacles.
//! * [`nn`] implements the dual-encoder actor-critic with hand-written
//!   backpropagation and Adam.
//! * [`ppo`] collects rollouts through the observation pipeline and runs the
//!   clipped-surrogate update.
//! * [`harness`] holds run configuration, evaluation protocols, baseline
//!   comparison and the `k` ablation.

pub mod delay;
pub mod env;
pub mod harness;
pub mod image;
pub mod nn;
pub mod ppo;
pub mod randomization;

pub use delay::{
    assemble_observation, frame_extract_indices, mmdr_select_indices, sample_episode_delays, DelayDistribution,
    DelayError, EpisodeDelays, Observation, ObservationPipeline, PipelineConfig, PipelineMode, SampleBuffer,
    TimestampedSample,
};
pub use env::{
    compute_reward, render_depth, stream_rng, Contact, EnvConfig, EnvError, EpisodeMetrics, LatencyInjection,
    Obstacle, RobotState, SimEnv, StepResult, World, WorldConfig,
};
pub use image::{DepthImage, DEPTH_MAX, DEPTH_MIN};
pub use randomization::{
    corrupt_depth, sample_episode_randomization, EpisodeRandomization, RandomizationRanges, Range,
};
pub use nn::{ActorCritic, Adam, AdamConfig, ArchConfig, NeuralError, OutputGrads, ParameterSet, PolicyBatch, PolicyOutput};
pub use ppo::{collect_rollout, compute_gae, ppo_update, train, PpoConfig, PpoError, Trajectory};
pub use harness::{evaluate, EvalProtocol, EvalReport, HarnessError, ProtocolKind, RunConfig};
