//! Per-episode physical randomization and depth-map hole corruption.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{DepthImage, DEPTH_MAX};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid randomization range `{name}`: [{lower}, {upper}]")]
pub struct RangeError {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
}

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lower: f64,
    pub upper: f64,
}

impl Range {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub const fn constant(value: f64) -> Self {
        Self::new(value, value)
    }

    pub fn is_valid(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite() && self.lower <= self.upper
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

/// Ranges for every randomized quantity.
///
/// The scale factors act on the planar robot's first-order dynamics: mass and
/// inertia scale translational and rotational response, lateral friction
/// scales velocity damping, and motor friction is a constant drive loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationRanges {
    pub mass_scale: Range,
    pub motor_friction: Range,
    pub motor_strength_scale: Range,
    pub lateral_friction: Range,
    pub inertia_scale: Range,
    /// Seconds. Informational: the observation pipeline owns delay sampling.
    pub proprio_latency: Range,
    pub kp: Range,
    pub kd: Range,
    /// Inclusive range of hole pixels per depth frame.
    pub hole_pixels: (usize, usize),
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            mass_scale: Range::new(0.8, 1.2),
            motor_friction: Range::new(0.0, 0.05),
            motor_strength_scale: Range::new(0.8, 1.2),
            lateral_friction: Range::new(0.5, 1.25),
            inertia_scale: Range::new(0.5, 1.5),
            proprio_latency: Range::new(0.0, 0.04),
            kp: Range::new(40.0, 90.0),
            kd: Range::new(0.4, 0.8),
            hole_pixels: (3, 30),
        }
    }
}

impl RandomizationRanges {
    /// No randomization: unit scales, the deployed PD gains, no holes.
    pub fn nominal() -> Self {
        Self {
            mass_scale: Range::constant(1.0),
            motor_friction: Range::constant(0.0),
            motor_strength_scale: Range::constant(1.0),
            lateral_friction: Range::constant(1.0),
            inertia_scale: Range::constant(1.0),
            proprio_latency: Range::constant(0.0),
            kp: Range::constant(40.0),
            kd: Range::constant(0.6),
            hole_pixels: (0, 0),
        }
    }

    fn named(&self) -> [(&'static str, Range); 8] {
        [
            ("mass_scale", self.mass_scale),
            ("motor_friction", self.motor_friction),
            ("motor_strength_scale", self.motor_strength_scale),
            ("lateral_friction", self.lateral_friction),
            ("inertia_scale", self.inertia_scale),
            ("proprio_latency", self.proprio_latency),
            ("kp", self.kp),
            ("kd", self.kd),
        ]
    }

    pub fn validate(&self) -> Result<(), RangeError> {
        for (name, r) in self.named() {
            if !r.is_valid() {
                return Err(RangeError {
                    name,
                    lower: r.lower,
                    upper: r.upper,
                });
            }
        }
        let positive = [
            ("mass_scale", self.mass_scale),
            ("inertia_scale", self.inertia_scale),
            ("kp", self.kp),
        ];
        for (name, r) in positive {
            if r.lower <= 0.0 {
                return Err(RangeError {
                    name,
                    lower: r.lower,
                    upper: r.upper,
                });
            }
        }
        for (name, r) in [
            ("motor_friction", self.motor_friction),
            ("motor_strength_scale", self.motor_strength_scale),
            ("lateral_friction", self.lateral_friction),
            ("proprio_latency", self.proprio_latency),
            ("kd", self.kd),
        ] {
            if r.lower < 0.0 {
                return Err(RangeError {
                    name,
                    lower: r.lower,
                    upper: r.upper,
                });
            }
        }
        let (lo, hi) = self.hole_pixels;
        if lo > hi {
            return Err(RangeError {
                name: "hole_pixels",
                lower: lo as f64,
                upper: hi as f64,
            });
        }
        Ok(())
    }
}

/// One draw of every randomized quantity, fixed for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRandomization {
    pub mass_scale: f64,
    pub motor_friction: f64,
    pub motor_strength_scale: f64,
    pub lateral_friction: f64,
    pub inertia_scale: f64,
    pub proprio_latency: f64,
    pub kp: f64,
    pub kd: f64,
}

impl EpisodeRandomization {
    pub fn nominal() -> Self {
        Self {
            mass_scale: 1.0,
            motor_friction: 0.0,
            motor_strength_scale: 1.0,
            lateral_friction: 1.0,
            inertia_scale: 1.0,
            proprio_latency: 0.0,
            kp: 40.0,
            kd: 0.6,
        }
    }

    pub fn within(&self, ranges: &RandomizationRanges) -> bool {
        ranges.mass_scale.contains(self.mass_scale)
            && ranges.motor_friction.contains(self.motor_friction)
            && ranges.motor_strength_scale.contains(self.motor_strength_scale)
            && ranges.lateral_friction.contains(self.lateral_friction)
            && ranges.inertia_scale.contains(self.inertia_scale)
            && ranges.proprio_latency.contains(self.proprio_latency)
            && ranges.kp.contains(self.kp)
            && ranges.kd.contains(self.kd)
    }
}

pub fn sample_episode_randomization<R: Rng + ?Sized>(
    ranges: &RandomizationRanges,
    rng: &mut R,
) -> EpisodeRandomization {
    EpisodeRandomization {
        mass_scale: ranges.mass_scale.sample(rng),
        motor_friction: ranges.motor_friction.sample(rng),
        motor_strength_scale: ranges.motor_strength_scale.sample(rng),
        lateral_friction: ranges.lateral_friction.sample(rng),
        inertia_scale: ranges.inertia_scale.sample(rng),
        proprio_latency: ranges.proprio_latency.sample(rng),
        kp: ranges.kp.sample(rng),
        kd: ranges.kd.sample(rng),
    }
}

/// Sets a uniformly drawn number of distinct pixels to the maximum depth.
/// Returns the number of pixels written.
pub fn corrupt_depth<R: Rng + ?Sized>(
    image: &mut DepthImage,
    ranges: &RandomizationRanges,
    rng: &mut R,
) -> usize {
    let (lo, hi) = ranges.hole_pixels;
    if hi == 0 || image.is_empty() {
        return 0;
    }
    let n = rng.random_range(lo..=hi).min(image.len());
    let pixels = image.as_mut_slice();
    for i in index::sample(rng, pixels.len(), n) {
        pixels[i] = DEPTH_MAX;
    }
    n
}
