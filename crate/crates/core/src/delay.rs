//! Timestamped multi-rate sensor buffers and observation assembly.
//!
//! Every sensor stream is kept in a [`SampleBuffer`], a bounded history of
//! [`TimestampedSample`]s. Index 0 always refers to the newest entry.
//!
//! Six assembly strategies are supported (see [`PipelineMode`]). The delay
//! randomized mode serves the proprioceptive stream with a per-episode delay
//! through linear interpolation, and the visual stream by drawing one frame
//! from each of `stack_count` consecutive sub-buffers of `k` frames.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::DepthImage;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("sample time {time} is not after newest buffered time {newest}")]
    NonMonotonic { time: f64, newest: f64 },
    #[error("sample shape {found:?} does not match buffer shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("sample time must be finite and non-negative, got {0}")]
    InvalidTime(f64),
    #[error("query on an empty buffer")]
    EmptyBuffer,
    #[error("delay must be finite and non-negative, got {0}")]
    InvalidDelay(f64),
    #[error("buffer not warmed up: need {needed} entries, have {available}")]
    ColdBuffer { needed: usize, available: usize },
    #[error("invalid delay distribution [{lower}, {upper}]")]
    InvalidDistribution { lower: f64, upper: f64 },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

/// A value a [`SampleBuffer`] can hold and interpolate.
pub trait SampleValue: Clone {
    /// Shape key; all samples in one buffer must agree on it.
    fn shape(&self) -> (usize, usize);

    /// `self + weight * (other - self)`, elementwise.
    fn lerp(&self, other: &Self, weight: f64) -> Self;
}

impl SampleValue for Vec<f64> {
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }

    fn lerp(&self, other: &Self, weight: f64) -> Self {
        self.iter()
            .zip(other)
            .map(|(a, b)| a + weight * (b - a))
            .collect()
    }
}

impl SampleValue for DepthImage {
    fn shape(&self) -> (usize, usize) {
        DepthImage::shape(self)
    }

    fn lerp(&self, other: &Self, weight: f64) -> Self {
        let data = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(&a, &b)| (a as f64 + weight * (b as f64 - a as f64)) as f32)
            .collect();
        DepthImage::from_vec(self.height(), self.width(), data)
    }
}

/// A value together with its capture time in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampedSample<V> {
    pub time: f64,
    pub value: V,
}

impl<V> TimestampedSample<V> {
    pub fn new(time: f64, value: V) -> Self {
        Self { time, value }
    }
}

/// Bounded history of one sensor stream, oldest entries evicted first.
#[derive(Debug, Clone)]
pub struct SampleBuffer<V> {
    capacity: usize,
    // Stored oldest -> newest.
    entries: VecDeque<TimestampedSample<V>>,
}

impl<V: SampleValue> SampleBuffer<V> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Entry at `index`, where 0 is the newest.
    pub fn get(&self, index: usize) -> Option<&TimestampedSample<V>> {
        let len = self.entries.len();
        if index < len {
            self.entries.get(len - 1 - index)
        } else {
            None
        }
    }

    pub fn newest(&self) -> Option<&TimestampedSample<V>> {
        self.entries.back()
    }

    pub fn oldest(&self) -> Option<&TimestampedSample<V>> {
        self.entries.front()
    }

    /// Iterates newest first.
    pub fn iter(&self) -> impl Iterator<Item = &TimestampedSample<V>> {
        self.entries.iter().rev()
    }

    /// Appends `sample` as the new index-0 entry.
    pub fn push(&mut self, sample: TimestampedSample<V>) -> Result<(), DelayError> {
        if !sample.time.is_finite() || sample.time < 0.0 {
            return Err(DelayError::InvalidTime(sample.time));
        }
        if let Some(newest) = self.entries.back() {
            if sample.time <= newest.time {
                return Err(DelayError::NonMonotonic {
                    time: sample.time,
                    newest: newest.time,
                });
            }
            let expected = newest.value.shape();
            let found = sample.value.shape();
            if expected != found {
                return Err(DelayError::ShapeMismatch { expected, found });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(sample);
        Ok(())
    }

    /// Value at `now - delay`, linearly interpolated between the two
    /// bracketing entries. Queries outside the buffered span clamp to the
    /// newest or oldest entry.
    pub fn query_interpolated(&self, now: f64, delay: f64) -> Result<V, DelayError> {
        if !delay.is_finite() || delay < 0.0 {
            return Err(DelayError::InvalidDelay(delay));
        }
        if !now.is_finite() {
            return Err(DelayError::InvalidTime(now));
        }
        let newest = self.entries.back().ok_or(DelayError::EmptyBuffer)?;
        let oldest = self.entries.front().ok_or(DelayError::EmptyBuffer)?;
        let query = now - delay;
        if query >= newest.time {
            return Ok(newest.value.clone());
        }
        if query <= oldest.time {
            return Ok(oldest.value.clone());
        }
        // oldest.time < query < newest.time, so 1 <= upper < len.
        let upper = self.entries.partition_point(|s| s.time <= query);
        let a = &self.entries[upper - 1];
        let b = &self.entries[upper];
        let weight = (query - a.time) / (b.time - a.time);
        Ok(a.value.lerp(&b.value, weight))
    }

    /// Newest entry whose time is at or before `query`; clamps to the oldest.
    pub fn nearest_older(&self, query: f64) -> Result<&TimestampedSample<V>, DelayError> {
        if self.entries.is_empty() {
            return Err(DelayError::EmptyBuffer);
        }
        let upper = self.entries.partition_point(|s| s.time <= query);
        Ok(&self.entries[upper.saturating_sub(1)])
    }
}

/// Uniform delay range in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayDistribution {
    pub lower: f64,
    pub upper: f64,
}

impl DelayDistribution {
    pub fn new(lower: f64, upper: f64) -> Result<Self, DelayError> {
        let dist = Self { lower, upper };
        dist.validate()?;
        Ok(dist)
    }

    pub const fn constant(value: f64) -> Self {
        Self {
            lower: value,
            upper: value,
        }
    }

    pub const fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        let ok = self.lower.is_finite()
            && self.upper.is_finite()
            && 0.0 <= self.lower
            && self.lower <= self.upper;
        if ok {
            Ok(())
        } else {
            Err(DelayError::InvalidDistribution {
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lower == self.upper {
            self.lower
        } else {
            rng.random_range(self.lower..=self.upper)
        }
    }
}

/// Observation assembly strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    Mmdr,
    NoDelay,
    FrameExtract,
    FixedDelay,
    Interpolation,
    StateOnly,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 6] = [
        PipelineMode::Mmdr,
        PipelineMode::NoDelay,
        PipelineMode::FrameExtract,
        PipelineMode::FixedDelay,
        PipelineMode::Interpolation,
        PipelineMode::StateOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineMode::Mmdr => "mmdr",
            PipelineMode::NoDelay => "no_delay",
            PipelineMode::FrameExtract => "frame_extract",
            PipelineMode::FixedDelay => "fixed_delay",
            PipelineMode::Interpolation => "interpolation",
            PipelineMode::StateOnly => "state_only",
        }
    }

    pub fn uses_vision(&self) -> bool {
        !matches!(self, PipelineMode::StateOnly)
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = DelayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        PipelineMode::ALL
            .into_iter()
            .find(|m| m.as_str() == key || (key == "ours" && *m == PipelineMode::Mmdr))
            .ok_or_else(|| DelayError::InvalidConfig(format!("unknown pipeline mode `{s}`")))
    }
}

/// Parameters of one observation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    /// Frames per visual sub-buffer.
    pub k: usize,
    /// Number of stacked depth frames.
    pub stack_count: usize,
    /// Number of stacked proprioceptive states.
    pub proprio_history: usize,
    pub proprio_delay: DelayDistribution,
    /// Delay applied to both modalities in `FixedDelay` mode.
    pub fixed_delay: f64,
    /// Per-episode visual delay range in `Interpolation` mode.
    pub visual_delay: DelayDistribution,
    /// Draw the MMDR frame indices once per episode instead of every step.
    pub freeze_indices_per_episode: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_mode(PipelineMode::Mmdr)
    }
}

impl PipelineConfig {
    /// Defaults for each method: only the delay-randomized methods carry a
    /// training-time proprioceptive delay.
    pub fn for_mode(mode: PipelineMode) -> Self {
        let k = match mode {
            PipelineMode::NoDelay | PipelineMode::StateOnly => 1,
            _ => 4,
        };
        let proprio_delay = match mode {
            PipelineMode::Mmdr | PipelineMode::Interpolation => DelayDistribution {
                lower: 0.0,
                upper: 0.04,
            },
            _ => DelayDistribution::zero(),
        };
        Self {
            mode,
            k,
            stack_count: 4,
            proprio_history: 3,
            proprio_delay,
            fixed_delay: 0.04,
            visual_delay: DelayDistribution {
                lower: 0.0,
                upper: 0.12,
            },
            freeze_indices_per_episode: false,
        }
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        if self.k == 0 || self.stack_count == 0 || self.proprio_history == 0 {
            return Err(DelayError::InvalidConfig(
                "k, stack_count and proprio_history must be positive".into(),
            ));
        }
        if !self.fixed_delay.is_finite() || self.fixed_delay < 0.0 {
            return Err(DelayError::InvalidDelay(self.fixed_delay));
        }
        self.proprio_delay.validate()?;
        self.visual_delay.validate()?;
        Ok(())
    }

    /// Visual buffer length, `stack_count * k`.
    pub fn visual_capacity(&self) -> usize {
        self.stack_count * self.k
    }

    /// Time covered by a full visual buffer when one frame arrives per
    /// control step.
    pub fn visual_span(&self, control_hz: u32) -> f64 {
        self.visual_capacity() as f64 / control_hz as f64
    }

    /// Largest synthetic proprioceptive delay this pipeline can request.
    pub fn max_proprio_delay(&self) -> f64 {
        match self.mode {
            PipelineMode::FixedDelay => self.fixed_delay,
            _ => self.proprio_delay.upper,
        }
    }

    /// Largest synthetic visual delay this pipeline can request.
    pub fn max_visual_delay(&self) -> f64 {
        match self.mode {
            PipelineMode::FixedDelay => self.fixed_delay,
            PipelineMode::Interpolation => self.visual_delay.upper,
            _ => 0.0,
        }
    }

    /// The same pipeline with every synthetic delay removed: interpolation
    /// and fixed offsets read the newest data, sub-buffer sampling reads the
    /// newest frame of each group.
    pub fn without_synthetic_delays(&self) -> Self {
        let mut cfg = self.clone();
        cfg.proprio_delay = DelayDistribution::zero();
        cfg.visual_delay = DelayDistribution::zero();
        cfg.fixed_delay = 0.0;
        if cfg.mode == PipelineMode::Mmdr {
            cfg.mode = PipelineMode::FrameExtract;
        }
        cfg
    }
}

/// Delays drawn once at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeDelays {
    pub proprio_delay: f64,
    pub visual_delay: f64,
    /// Seed of the frame-selection stream used in MMDR mode.
    pub visual_indices_seed: u64,
}

impl EpisodeDelays {
    pub fn none() -> Self {
        Self {
            proprio_delay: 0.0,
            visual_delay: 0.0,
            visual_indices_seed: 0,
        }
    }
}

pub fn sample_episode_delays<R: Rng + ?Sized>(config: &PipelineConfig, rng: &mut R) -> EpisodeDelays {
    let proprio_delay = match config.mode {
        PipelineMode::FixedDelay => config.fixed_delay,
        _ => config.proprio_delay.sample(rng),
    };
    let visual_delay = match config.mode {
        PipelineMode::FixedDelay => config.fixed_delay,
        PipelineMode::Interpolation => config.visual_delay.sample(rng),
        _ => 0.0,
    };
    EpisodeDelays {
        proprio_delay,
        visual_delay,
        visual_indices_seed: rng.random(),
    }
}

/// One index per sub-buffer, `i_j` uniform on `[j*k, (j+1)*k - 1]`,
/// newest group first.
pub fn mmdr_select_indices<R: Rng + ?Sized>(k: usize, stack_count: usize, rng: &mut R) -> Vec<usize> {
    (0..stack_count)
        .map(|j| j * k + rng.random_range(0..k))
        .collect()
}

/// Newest frame of each consecutive group of `k`: `(0, k, 2k, ...)`.
pub fn frame_extract_indices(k: usize, stack_count: usize) -> Vec<usize> {
    (0..stack_count).map(|j| j * k).collect()
}

/// Policy input: stacked delayed proprioceptive states and depth frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `proprio_history` snapshots, newest first.
    pub proprio: Vec<f64>,
    /// `stack_count` frames in row-major order, newest first. Empty for
    /// state-only pipelines that never buffer frames.
    pub depth: Vec<f32>,
}

/// Builds the policy input for the configured mode at time `now`.
///
/// `control_dt` spaces successive proprioceptive states and, for the
/// time-based visual modes, successive stacked frames.
pub fn assemble_observation<R: Rng + ?Sized>(
    config: &PipelineConfig,
    proprio: &SampleBuffer<Vec<f64>>,
    visual: &SampleBuffer<DepthImage>,
    now: f64,
    delays: &EpisodeDelays,
    control_dt: f64,
    rng: &mut R,
) -> Result<Observation, DelayError> {
    let mut proprio_out = Vec::new();
    for h in 0..config.proprio_history {
        let state = proprio.query_interpolated(now - h as f64 * control_dt, delays.proprio_delay)?;
        proprio_out.extend_from_slice(&state);
    }

    if config.mode == PipelineMode::StateOnly {
        let frame_len = visual.newest().map_or(0, |s| s.value.len());
        return Ok(Observation {
            proprio: proprio_out,
            depth: vec![0.0; frame_len * config.stack_count],
        });
    }

    let needed = config.visual_capacity();
    if visual.len() < needed {
        return Err(DelayError::ColdBuffer {
            needed,
            available: visual.len(),
        });
    }

    let mut depth = Vec::new();
    let mut extend_indexed = |indices: &[usize]| {
        for &i in indices {
            let frame = visual.get(i).expect("warm buffer holds every index");
            depth.extend_from_slice(frame.value.as_slice());
        }
    };
    match config.mode {
        PipelineMode::NoDelay => {
            extend_indexed(&(0..config.stack_count).collect::<Vec<_>>());
        }
        PipelineMode::FrameExtract => {
            extend_indexed(&frame_extract_indices(config.k, config.stack_count));
        }
        PipelineMode::Mmdr => {
            extend_indexed(&mmdr_select_indices(config.k, config.stack_count, rng));
        }
        PipelineMode::FixedDelay => {
            for j in 0..config.stack_count {
                let query = now - delays.visual_delay - j as f64 * control_dt;
                depth.extend_from_slice(visual.nearest_older(query)?.value.as_slice());
            }
        }
        PipelineMode::Interpolation => {
            for j in 0..config.stack_count {
                let frame = visual.query_interpolated(now - j as f64 * control_dt, delays.visual_delay)?;
                depth.extend_from_slice(frame.as_slice());
            }
        }
        PipelineMode::StateOnly => unreachable!(),
    }
    Ok(Observation {
        proprio: proprio_out,
        depth,
    })
}

/// Owns both buffers of one environment together with the episode's delays.
#[derive(Debug, Clone)]
pub struct ObservationPipeline {
    config: PipelineConfig,
    proprio: SampleBuffer<Vec<f64>>,
    visual: SampleBuffer<DepthImage>,
    delays: EpisodeDelays,
    index_rng: ChaCha8Rng,
    control_dt: f64,
}

impl ObservationPipeline {
    /// `proprio_capacity` must cover the largest delay the pipeline will be
    /// asked to serve plus the stacked history.
    pub fn new(config: PipelineConfig, proprio_capacity: usize, control_hz: u32) -> Result<Self, DelayError> {
        config.validate()?;
        let visual = SampleBuffer::new(config.visual_capacity());
        Ok(Self {
            proprio: SampleBuffer::new(proprio_capacity),
            visual,
            delays: EpisodeDelays::none(),
            index_rng: ChaCha8Rng::seed_from_u64(0),
            control_dt: 1.0 / control_hz as f64,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn delays(&self) -> &EpisodeDelays {
        &self.delays
    }

    pub fn proprio_buffer(&self) -> &SampleBuffer<Vec<f64>> {
        &self.proprio
    }

    pub fn visual_buffer(&self) -> &SampleBuffer<DepthImage> {
        &self.visual
    }

    /// Clears both buffers and installs a new episode's delays.
    pub fn begin_episode(&mut self, delays: EpisodeDelays) {
        self.proprio.clear();
        self.visual.clear();
        self.index_rng = ChaCha8Rng::seed_from_u64(delays.visual_indices_seed);
        self.delays = delays;
    }

    pub fn push_proprio(&mut self, time: f64, value: Vec<f64>) -> Result<(), DelayError> {
        self.proprio.push(TimestampedSample::new(time, value))
    }

    pub fn push_frame(&mut self, time: f64, frame: DepthImage) -> Result<(), DelayError> {
        self.visual.push(TimestampedSample::new(time, frame))
    }

    pub fn assemble(&mut self, now: f64) -> Result<Observation, DelayError> {
        if self.config.freeze_indices_per_episode {
            self.index_rng = ChaCha8Rng::seed_from_u64(self.delays.visual_indices_seed);
        }
        assemble_observation(
            &self.config,
            &self.proprio,
            &self.visual,
            now,
            &self.delays,
            self.control_dt,
            &mut self.index_rng,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_buffer(points: &[(f64, f64)], capacity: usize) -> SampleBuffer<Vec<f64>> {
        let mut buf = SampleBuffer::new(capacity);
        for &(t, v) in points {
            buf.push(TimestampedSample::new(t, vec![v])).unwrap();
        }
        buf
    }

    #[test]
    fn push_into_empty_buffer() {
        let buf = scalar_buffer(&[(0.0, 1.0)], 4);
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.get(0).unwrap().time, 0.0);
    }

    #[test]
    fn push_evicts_oldest() {
        let mut buf = scalar_buffer(&[(0.1, 0.0), (0.2, 0.0)], 2);
        buf.push(TimestampedSample::new(0.3, vec![0.0])).unwrap();
        let times: Vec<f64> = buf.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.3, 0.2]);
    }

    #[test]
    fn duplicate_time_is_rejected() {
        let mut buf = scalar_buffer(&[(0.2, 0.0)], 4);
        let err = buf.push(TimestampedSample::new(0.2, vec![1.0])).unwrap_err();
        assert!(matches!(err, DelayError::NonMonotonic { .. }));
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut buf = scalar_buffer(&[(0.0, 0.0)], 4);
        let err = buf.push(TimestampedSample::new(0.1, vec![1.0, 2.0])).unwrap_err();
        assert_eq!(
            err,
            DelayError::ShapeMismatch {
                expected: (1, 1),
                found: (2, 1)
            }
        );
    }

    #[test]
    fn negative_time_is_rejected() {
        let mut buf: SampleBuffer<Vec<f64>> = SampleBuffer::new(2);
        assert!(buf.push(TimestampedSample::new(-0.1, vec![0.0])).is_err());
        assert!(buf.push(TimestampedSample::new(f64::NAN, vec![0.0])).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let buf = scalar_buffer(&[(0.0, 0.0), (0.01, 1.0)], 8);
        let mid = buf.query_interpolated(0.01, 0.005).unwrap()[0];
        assert!((mid - 0.5).abs() < 1e-12);
        assert_eq!(buf.query_interpolated(0.01, 0.0).unwrap(), vec![1.0]);
        assert_eq!(buf.query_interpolated(0.01, 0.05).unwrap(), vec![0.0]);
    }

    #[test]
    fn interpolation_errors() {
        let empty: SampleBuffer<Vec<f64>> = SampleBuffer::new(2);
        assert_eq!(empty.query_interpolated(0.0, 0.0), Err(DelayError::EmptyBuffer));
        let buf = scalar_buffer(&[(0.0, 0.0)], 2);
        assert!(matches!(
            buf.query_interpolated(0.0, f64::INFINITY),
            Err(DelayError::InvalidDelay(_))
        ));
        assert!(matches!(buf.query_interpolated(0.0, -1.0), Err(DelayError::InvalidDelay(_))));
    }

    #[test]
    fn nearest_older_picks_frame_at_or_before_query() {
        let buf = scalar_buffer(&[(0.0, 0.0), (0.04, 1.0), (0.08, 2.0)], 8);
        assert_eq!(buf.nearest_older(0.079).unwrap().value, vec![1.0]);
        assert_eq!(buf.nearest_older(0.08).unwrap().value, vec![2.0]);
        assert_eq!(buf.nearest_older(-1.0).unwrap().value, vec![0.0]);
    }

    #[test]
    fn frame_extract_examples() {
        assert_eq!(frame_extract_indices(4, 4), vec![0, 4, 8, 12]);
        assert_eq!(frame_extract_indices(1, 4), vec![0, 1, 2, 3]);
        assert_eq!(frame_extract_indices(16, 4), vec![0, 16, 32, 48]);
    }

    #[test]
    fn mmdr_with_unit_groups_is_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(mmdr_select_indices(1, 4, &mut rng), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn degenerate_delay_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cfg = PipelineConfig::for_mode(PipelineMode::Mmdr);
        cfg.proprio_delay = DelayDistribution::constant(0.04);
        for _ in 0..100 {
            assert_eq!(sample_episode_delays(&cfg, &mut rng).proprio_delay, 0.04);
        }
    }

    #[test]
    fn invalid_distribution_is_rejected() {
        assert!(DelayDistribution::new(0.1, 0.05).is_err());
        assert!(DelayDistribution::new(-0.1, 0.05).is_err());
        assert!(DelayDistribution::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("mmdr".parse::<PipelineMode>().unwrap(), PipelineMode::Mmdr);
        assert_eq!("no-delay".parse::<PipelineMode>().unwrap(), PipelineMode::NoDelay);
        assert_eq!("State_Only".parse::<PipelineMode>().unwrap(), PipelineMode::StateOnly);
        assert!("bogus".parse::<PipelineMode>().is_err());
    }

    #[test]
    fn cold_visual_buffer_is_an_error() {
        let cfg = PipelineConfig::for_mode(PipelineMode::Mmdr);
        let proprio = scalar_buffer(&[(0.0, 0.0)], 4);
        let mut visual = SampleBuffer::new(cfg.visual_capacity());
        visual
            .push(TimestampedSample::new(0.0, DepthImage::filled(2, 2, 1.0)))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = assemble_observation(&cfg, &proprio, &visual, 0.0, &EpisodeDelays::none(), 0.04, &mut rng)
            .unwrap_err();
        assert_eq!(
            err,
            DelayError::ColdBuffer {
                needed: 16,
                available: 1
            }
        );
    }

    #[test]
    fn frozen_indices_repeat_within_episode() {
        let mut cfg = PipelineConfig::for_mode(PipelineMode::Mmdr);
        cfg.freeze_indices_per_episode = true;
        let mut pipe = ObservationPipeline::new(cfg, 8, 25).unwrap();
        pipe.begin_episode(EpisodeDelays {
            visual_indices_seed: 77,
            ..EpisodeDelays::none()
        });
        pipe.push_proprio(0.0, vec![0.0]).unwrap();
        for i in 0..16 {
            pipe.push_frame(i as f64 * 0.04, DepthImage::filled(1, 1, i as f32)).unwrap();
        }
        let first = pipe.assemble(0.6).unwrap();
        for _ in 0..10 {
            assert_eq!(pipe.assemble(0.6).unwrap(), first);
        }
    }
}
