//! Actor-critic network with separate proprioceptive encoders, one shared
//! convolutional depth encoder, Gaussian policy utilities, Adam and binary
//! checkpoints.

mod adam;
mod checkpoint;
mod gaussian;
pub mod layers;
mod network;
mod params;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{manifest_path, read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use gaussian::{entropy, log_prob, log_prob_grads, LOG_STD_MAX, LOG_STD_MIN};
pub use layers::ConvSpec;
pub use network::{ActorCritic, OutputGrads, PolicyBatch, PolicyOutput};
pub use params::{orthogonal_init, BlockId, BlockSpec, Layout, ParameterSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::PipelineMode;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("{what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("backward called without a recorded forward pass")]
    NoForwardPass,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

/// Sizes of every layer. The default matches a 3-step proprio history and a
/// stack of four 32x32 depth frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub proprio_dim: usize,
    /// Hidden widths of the proprio encoder; the last entry is the feature width.
    pub proprio_layers: Vec<usize>,
    /// When false the visual encoder is absent and the heads see only the
    /// proprio feature.
    pub use_vision: bool,
    pub depth_height: usize,
    pub depth_width: usize,
    /// Stacked frames, fed as input channels.
    pub depth_frames: usize,
    pub convs: Vec<ConvSpec>,
    pub visual_feature: usize,
    pub head_hidden: usize,
    pub action_dim: usize,
    pub init_log_std: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let conv = |out_channels| ConvSpec {
            out_channels,
            kernel: 4,
            stride: 2,
        };
        Self {
            proprio_dim: 24,
            proprio_layers: vec![128, 256],
            use_vision: true,
            depth_height: 32,
            depth_width: 32,
            depth_frames: 4,
            convs: vec![conv(8), conv(16), conv(32)],
            visual_feature: 256,
            head_hidden: 128,
            action_dim: 2,
            init_log_std: -0.5,
        }
    }
}

impl ArchConfig {
    /// Architecture consuming the observations produced for `mode`.
    pub fn for_pipeline(mode: PipelineMode, proprio_dim: usize, stack_count: usize, depth_hw: (usize, usize)) -> Self {
        Self {
            proprio_dim,
            use_vision: mode.uses_vision(),
            depth_height: depth_hw.0,
            depth_width: depth_hw.1,
            depth_frames: stack_count,
            ..Self::default()
        }
    }

    pub fn depth_len(&self) -> usize {
        if self.use_vision {
            self.depth_height * self.depth_width * self.depth_frames
        } else {
            0
        }
    }

    pub fn proprio_feature(&self) -> usize {
        self.proprio_layers.last().copied().unwrap_or(self.proprio_dim)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidArchitecture(m.to_string()));
        if self.proprio_dim == 0 || self.action_dim == 0 || self.head_hidden == 0 {
            return bad("proprio_dim, action_dim and head_hidden must be positive");
        }
        if self.proprio_layers.is_empty() || self.proprio_layers.contains(&0) {
            return bad("proprio encoder needs at least one non-empty layer");
        }
        if !self.init_log_std.is_finite() {
            return bad("init_log_std must be finite");
        }
        if self.use_vision {
            if self.depth_frames == 0 || self.visual_feature == 0 || self.convs.is_empty() {
                return bad("visual encoder needs frames, convolutions and a feature width");
            }
            let (mut h, mut w, mut c) = (self.depth_height, self.depth_width, self.depth_frames);
            for spec in &self.convs {
                let g = layers::ConvGeometry::new(h, w, c, *spec)
                    .ok_or_else(|| NeuralError::InvalidArchitecture(format!("convolution {spec:?} does not fit {h}x{w}")))?;
                if spec.out_channels == 0 {
                    return bad("convolution with zero output channels");
                }
                (h, w, c) = (g.out_h, g.out_w, g.out_c);
            }
        }
        Ok(())
    }
}
