use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::gaussian::{LOG_STD_MAX, LOG_STD_MIN};
use super::layers::{col2im, im2col, linear_backward, linear_forward, tanh_backward, tanh_inplace, ConvGeometry};
use super::params::{orthogonal_init, BlockId, Layout, ParameterSet};
use super::{ArchConfig, NeuralError};
use crate::image::DEPTH_MIN;

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_OUT_GAIN: f64 = 0.01;
const VALUE_OUT_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: BlockId,
    b: BlockId,
    gain: f64,
}

impl Dense {
    fn declare(layout: &mut Layout, name: &str, inputs: usize, outputs: usize, gain: f64) -> Self {
        Self {
            w: layout.push(format!("{name}.weight"), vec![outputs, inputs]),
            b: layout.push(format!("{name}.bias"), vec![outputs]),
            gain,
        }
    }

    fn forward(&self, p: &ParameterSet, x: ArrayView2<f64>) -> Array2<f64> {
        linear_forward(x, p.matrix(self.w), p.vector(self.b))
    }

    fn backward(&self, p: &mut ParameterSet, x: ArrayView2<f64>, dy: ArrayView2<f64>, want_dx: bool) -> Option<Array2<f64>> {
        let spec = p.layout().block(self.w).clone();
        let bspec = p.layout().block(self.b).clone();
        let (values, grads) = (&p.values, &mut p.grads);
        let w = ArrayView2::from_shape((spec.shape[0], spec.shape[1]), &values[spec.range()]).expect("2-d block");
        let (gw, gb) = split_two(grads, spec.range(), bspec.range());
        let dw = ndarray::ArrayViewMut2::from_shape((spec.shape[0], spec.shape[1]), gw).expect("2-d block");
        let db = ndarray::ArrayViewMut1::from(gb);
        linear_backward(x, w, dy, dw, db, want_dx)
    }
}

/// Two disjoint mutable ranges of one slice.
fn split_two(v: &mut [f64], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start || b.end <= a.start, "overlapping blocks");
    if a.start < b.start {
        let (lo, hi) = v.split_at_mut(b.start);
        (&mut lo[a], &mut hi[..b.end - b.start])
    } else {
        let (lo, hi) = v.split_at_mut(a.start);
        (&mut hi[..a.end - a.start], &mut lo[b])
    }
}

/// Stack of dense layers, tanh after every layer except optionally the last.
#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<Dense>,
    activate_last: bool,
}

#[derive(Debug, Clone)]
struct MlpTape {
    /// Input of every layer, then the final output.
    acts: Vec<Array2<f64>>,
}

impl Mlp {
    fn forward(&self, p: &ParameterSet, x: Array2<f64>, record: bool) -> (Array2<f64>, Option<MlpTape>) {
        let mut acts = Vec::new();
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(p, h.view());
            if i + 1 < self.layers.len() || self.activate_last {
                tanh_inplace(&mut y);
            }
            if record {
                acts.push(h);
            }
            h = y;
        }
        if record {
            acts.push(h.clone());
            (h, Some(MlpTape { acts }))
        } else {
            (h, None)
        }
    }

    fn backward(&self, p: &mut ParameterSet, tape: &MlpTape, dy: Array2<f64>, want_dx: bool) -> Option<Array2<f64>> {
        let n = self.layers.len();
        let mut d = dy;
        for i in (0..n).rev() {
            if i + 1 < n || self.activate_last {
                d = tanh_backward(&tape.acts[i + 1], d);
            }
            d = self.layers[i].backward(p, tape.acts[i].view(), d.view(), i > 0 || want_dx)?;
        }
        Some(d)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    dense: Dense,
    geometry: ConvGeometry,
}

#[derive(Debug, Clone)]
struct VisualEncoder {
    convs: Vec<ConvLayer>,
    fc: Dense,
}

#[derive(Debug, Clone)]
struct VisualTape {
    cols: Vec<Array2<f64>>,
    /// Activated output of every convolution, `(batch, positions * channels)`.
    acts: Vec<Array2<f64>>,
    feature: Array2<f64>,
}

impl VisualEncoder {
    fn forward(&self, p: &ParameterSet, x: Array2<f64>, record: bool) -> (Array2<f64>, Option<VisualTape>) {
        let batch = x.nrows();
        let mut cols = Vec::new();
        let mut acts = Vec::new();
        let mut h = x;
        for conv in &self.convs {
            let g = &conv.geometry;
            let col = im2col(h.view(), g);
            let mut y = conv.dense.forward(p, col.view());
            tanh_inplace(&mut y);
            let y = y
                .into_shape_with_order((batch, g.out_len()))
                .expect("contiguous convolution output");
            if record {
                cols.push(col);
                acts.push(y.clone());
            }
            h = y;
        }
        let mut feature = self.fc.forward(p, h.view());
        tanh_inplace(&mut feature);
        let tape = record.then(|| VisualTape {
            cols,
            acts,
            feature: feature.clone(),
        });
        (feature, tape)
    }

    fn backward(&self, p: &mut ParameterSet, tape: &VisualTape, d_feature: Array2<f64>) {
        let batch = d_feature.nrows();
        let d = tanh_backward(&tape.feature, d_feature);
        let last = tape.acts.last().expect("at least one convolution");
        let mut d = self.fc.backward(p, last.view(), d.view(), true).expect("input gradient requested");
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let g = &conv.geometry;
            let dy = tanh_backward(&tape.acts[i], d);
            let dy = dy
                .into_shape_with_order((batch * g.positions(), g.out_c))
                .expect("contiguous convolution gradient");
            match conv.dense.backward(p, tape.cols[i].view(), dy.view(), i > 0) {
                Some(dcol) => d = col2im(dcol.view(), g, batch),
                None => break,
            }
        }
    }
}

/// Outputs for a single observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Outputs for a batch of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBatch {
    /// `(batch, action_dim)`.
    pub mean: Array2<f64>,
    /// Clamped log standard deviation, shared by every row.
    pub log_std: Vec<f64>,
    pub value: Array1<f64>,
}

impl PolicyBatch {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn row(&self, i: usize) -> PolicyOutput {
        PolicyOutput {
            mean: self.mean.row(i).to_vec(),
            log_std: self.log_std.clone(),
            value: self.value[i],
        }
    }
}

/// Loss gradients with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads {
    pub d_mean: Array2<f64>,
    pub d_value: Array1<f64>,
    pub d_log_std: Vec<f64>,
}

impl OutputGrads {
    pub fn zeros(batch: usize, action_dim: usize) -> Self {
        Self {
            d_mean: Array2::zeros((batch, action_dim)),
            d_value: Array1::zeros(batch),
            d_log_std: vec![0.0; action_dim],
        }
    }
}

#[derive(Debug, Clone)]
struct Tape {
    batch: usize,
    policy_proprio: MlpTape,
    value_proprio: MlpTape,
    visual: Option<VisualTape>,
    policy_head: MlpTape,
    value_head: MlpTape,
}

#[derive(Debug, Clone)]
pub struct ActorCritic {
    arch: ArchConfig,
    policy_proprio: Mlp,
    value_proprio: Mlp,
    visual: Option<VisualEncoder>,
    policy_head: Mlp,
    log_std: BlockId,
    value_head: Mlp,
    params: ParameterSet,
    tape: Option<Tape>,
}

impl ActorCritic {
    /// Builds the network with seeded orthogonal weights and zero biases.
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, rng: &mut R) -> Result<Self, NeuralError> {
        let mut net = Self::zeroed(arch)?;
        let dense: Vec<Dense> = net.dense_layers();
        for d in dense {
            let shape = net.params.layout().block(d.w).shape.clone();
            let w = orthogonal_init(shape[0], shape[1], d.gain, rng);
            net.params.slice_mut(d.w).copy_from_slice(&w);
        }
        let init = net.arch.init_log_std;
        net.params.slice_mut(net.log_std).iter_mut().for_each(|v| *v = init);
        Ok(net)
    }

    /// Builds the network around existing parameter values.
    pub fn from_values(arch: ArchConfig, values: Vec<f64>) -> Result<Self, NeuralError> {
        let mut net = Self::zeroed(arch)?;
        if values.len() != net.params.len() {
            return Err(NeuralError::ShapeMismatch {
                what: "parameter count",
                expected: net.params.len(),
                actual: values.len(),
            });
        }
        net.params.values = values;
        Ok(net)
    }

    fn zeroed(arch: ArchConfig) -> Result<Self, NeuralError> {
        arch.validate()?;
        let mut layout = Layout::default();
        let proprio_mlp = |layout: &mut Layout, name: &str| {
            let mut inputs = arch.proprio_dim;
            let layers = arch
                .proprio_layers
                .iter()
                .enumerate()
                .map(|(i, &out)| {
                    let d = Dense::declare(layout, &format!("{name}.fc{i}"), inputs, out, HIDDEN_GAIN);
                    inputs = out;
                    d
                })
                .collect();
            Mlp {
                layers,
                activate_last: true,
            }
        };
        let policy_proprio = proprio_mlp(&mut layout, "policy_proprio");
        let value_proprio = proprio_mlp(&mut layout, "value_proprio");

        let visual = if arch.use_vision {
            let (mut h, mut w, mut c) = (arch.depth_height, arch.depth_width, arch.depth_frames);
            let mut convs = Vec::new();
            for (i, spec) in arch.convs.iter().enumerate() {
                let geometry = ConvGeometry::new(h, w, c, *spec).expect("validated geometry");
                let dense = Dense::declare(&mut layout, &format!("visual.conv{i}"), geometry.patch_len(), geometry.out_c, HIDDEN_GAIN);
                convs.push(ConvLayer { dense, geometry });
                (h, w, c) = (geometry.out_h, geometry.out_w, geometry.out_c);
            }
            let fc = Dense::declare(&mut layout, "visual.fc", h * w * c, arch.visual_feature, HIDDEN_GAIN);
            Some(VisualEncoder { convs, fc })
        } else {
            None
        };

        let head_in = arch.proprio_feature() + if arch.use_vision { arch.visual_feature } else { 0 };
        let head = |layout: &mut Layout, name: &str, outputs: usize, gain: f64| Mlp {
            layers: vec![
                Dense::declare(layout, &format!("{name}.fc0"), head_in, arch.head_hidden, HIDDEN_GAIN),
                Dense::declare(layout, &format!("{name}.fc1"), arch.head_hidden, outputs, gain),
            ],
            activate_last: false,
        };
        let policy_head = head(&mut layout, "policy_head", arch.action_dim, POLICY_OUT_GAIN);
        let log_std = layout.push("log_std", vec![arch.action_dim]);
        let value_head = head(&mut layout, "value_head", 1, VALUE_OUT_GAIN);

        Ok(Self {
            arch,
            policy_proprio,
            value_proprio,
            visual,
            policy_head,
            log_std,
            value_head,
            params: ParameterSet::zeros(layout),
            tape: None,
        })
    }

    fn dense_layers(&self) -> Vec<Dense> {
        let mut out: Vec<Dense> = Vec::new();
        out.extend(&self.policy_proprio.layers);
        out.extend(&self.value_proprio.layers);
        if let Some(v) = &self.visual {
            out.extend(v.convs.iter().map(|c| c.dense));
            out.push(v.fc);
        }
        out.extend(&self.policy_head.layers);
        out.extend(&self.value_head.layers);
        out
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        self.params.layout()
    }

    /// Ids of the blocks belonging to the visual encoder; empty without vision.
    pub fn visual_blocks(&self) -> Vec<BlockId> {
        match &self.visual {
            Some(v) => v
                .convs
                .iter()
                .map(|c| c.dense)
                .chain(std::iter::once(v.fc))
                .flat_map(|d| [d.w, d.b])
                .collect(),
            None => Vec::new(),
        }
    }

    /// Clamped log standard deviation and a mask of entries inside the clamp.
    fn log_std_values(&self) -> (Vec<f64>, Vec<bool>) {
        let raw = self.params.slice(self.log_std);
        (
            raw.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
            raw.iter().map(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(v)).collect(),
        )
    }

    /// Converts frame-major depth rows to channels-last inverse depth.
    fn visual_input(&self, depth: ArrayView2<f32>) -> Array2<f64> {
        let (h, w, c) = (self.arch.depth_height, self.arch.depth_width, self.arch.depth_frames);
        let plane = h * w;
        let mut x = Array2::<f64>::zeros((depth.nrows(), plane * c));
        for (src, mut dst) in depth.outer_iter().zip(x.outer_iter_mut()) {
            for ch in 0..c {
                for px in 0..plane {
                    let d = (src[ch * plane + px] as f64).max(DEPTH_MIN as f64);
                    dst[px * c + ch] = DEPTH_MIN as f64 / d;
                }
            }
        }
        x
    }

    fn check_inputs(&self, proprio: &ArrayView2<f64>, depth: &ArrayView2<f32>) -> Result<(), NeuralError> {
        if proprio.ncols() != self.arch.proprio_dim {
            return Err(NeuralError::ShapeMismatch {
                what: "proprio width",
                expected: self.arch.proprio_dim,
                actual: proprio.ncols(),
            });
        }
        if self.arch.use_vision {
            if depth.ncols() != self.arch.depth_len() {
                return Err(NeuralError::ShapeMismatch {
                    what: "depth stack width",
                    expected: self.arch.depth_len(),
                    actual: depth.ncols(),
                });
            }
            if depth.nrows() != proprio.nrows() {
                return Err(NeuralError::ShapeMismatch {
                    what: "depth batch",
                    expected: proprio.nrows(),
                    actual: depth.nrows(),
                });
            }
        }
        Ok(())
    }

    fn run(&self, proprio: ArrayView2<f64>, depth: ArrayView2<f32>, record: bool) -> Result<(PolicyBatch, Option<Tape>), NeuralError> {
        self.check_inputs(&proprio, &depth)?;
        let p = &self.params;
        let (pp, pp_tape) = self.policy_proprio.forward(p, proprio.to_owned(), record);
        let (vp, vp_tape) = self.value_proprio.forward(p, proprio.to_owned(), record);
        let (vis, vis_tape) = match &self.visual {
            Some(enc) => {
                let (f, t) = enc.forward(p, self.visual_input(depth), record);
                (Some(f), t)
            }
            None => (None, None),
        };
        let join = |a: Array2<f64>| match &vis {
            Some(v) => ndarray::concatenate(Axis(1), &[a.view(), v.view()]).expect("same batch"),
            None => a,
        };
        let (mean, ph_tape) = self.policy_head.forward(p, join(pp), record);
        let (value, vh_tape) = self.value_head.forward(p, join(vp), record);
        let value = value.column(0).to_owned();
        let (log_std, _) = self.log_std_values();
        if !mean.iter().chain(value.iter()).all(|v| v.is_finite()) {
            return Err(NeuralError::NonFinite("network output"));
        }
        let tape = if record {
            Some(Tape {
                batch: proprio.nrows(),
                policy_proprio: pp_tape.expect("recorded"),
                value_proprio: vp_tape.expect("recorded"),
                visual: vis_tape,
                policy_head: ph_tape.expect("recorded"),
                value_head: vh_tape.expect("recorded"),
            })
        } else {
            None
        };
        Ok((PolicyBatch { mean, log_std, value }, tape))
    }

    /// Evaluates a batch without recording anything. `depth` rows hold the
    /// frame stack newest frame first, each frame row-major; it is ignored
    /// when the architecture has no visual encoder.
    pub fn forward(&self, proprio: ArrayView2<f64>, depth: ArrayView2<f32>) -> Result<PolicyBatch, NeuralError> {
        self.run(proprio, depth, false).map(|(out, _)| out)
    }

    pub fn forward_one(&self, proprio: &[f64], depth: &[f32]) -> Result<PolicyOutput, NeuralError> {
        let p = ArrayView2::from_shape((1, proprio.len()), proprio).expect("row vector");
        let d = ArrayView2::from_shape((1, depth.len()), depth).expect("row vector");
        Ok(self.forward(p, d)?.row(0))
    }

    /// Evaluates a batch and keeps the intermediate values for [`backward`].
    ///
    /// [`backward`]: ActorCritic::backward
    pub fn forward_recorded(&mut self, proprio: ArrayView2<f64>, depth: ArrayView2<f32>) -> Result<PolicyBatch, NeuralError> {
        let (out, tape) = self.run(proprio, depth, true)?;
        self.tape = tape;
        Ok(out)
    }

    /// Accumulates parameter gradients for the last recorded forward pass
    /// into `params().grads`, consuming the recording.
    pub fn backward(&mut self, grads: &OutputGrads) -> Result<(), NeuralError> {
        let tape = self.tape.take().ok_or(NeuralError::NoForwardPass)?;
        let a = self.arch.action_dim;
        if grads.d_mean.dim() != (tape.batch, a) || grads.d_value.len() != tape.batch || grads.d_log_std.len() != a {
            return Err(NeuralError::ShapeMismatch {
                what: "output gradient batch",
                expected: tape.batch,
                actual: grads.d_value.len(),
            });
        }
        let feature = self.arch.proprio_feature();
        let (_, inside) = self.log_std_values();
        let p = &mut self.params;

        let d_ph = self
            .policy_head
            .backward(p, &tape.policy_head, grads.d_mean.clone(), true)
            .expect("input gradient requested");
        let d_value = grads.d_value.clone().insert_axis(Axis(1));
        let d_vh = self
            .value_head
            .backward(p, &tape.value_head, d_value, true)
            .expect("input gradient requested");

        self.policy_proprio
            .backward(p, &tape.policy_proprio, d_ph.slice(s![.., ..feature]).to_owned(), false);
        self.value_proprio
            .backward(p, &tape.value_proprio, d_vh.slice(s![.., ..feature]).to_owned(), false);
        if let (Some(enc), Some(vt)) = (&self.visual, &tape.visual) {
            // Both heads read the same feature, so their gradients add.
            let d_vis = &d_ph.slice(s![.., feature..]) + &d_vh.slice(s![.., feature..]);
            enc.backward(p, vt, d_vis);
        }

        let range = p.layout().block(self.log_std).range();
        for ((g, d), ok) in p.grads[range].iter_mut().zip(&grads.d_log_std).zip(inside) {
            if ok {
                *g += d;
            }
        }
        Ok(())
    }
}
