//! Depth images as produced by the simulated head camera.

use serde::{Deserialize, Serialize};

/// Nearest depth the camera reports, in meters.
pub const DEPTH_MIN: f32 = 0.3;
/// Farthest depth the camera reports; also the value written into holes.
pub const DEPTH_MAX: f32 = 10.0;

/// A row-major grid of depth values in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DepthImage {
    /// An image filled with a single value.
    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Wraps raw row-major data. Panics if `data.len() != height * width`.
    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width, "depth image data length");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    /// Clamps every pixel into `[DEPTH_MIN, DEPTH_MAX]`.
    pub fn clip(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(DEPTH_MIN, DEPTH_MAX);
        }
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}
