use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Name, shape and position of one parameter block in the flat storage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Index of a block inside a [`Layout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub(crate) usize);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    blocks: Vec<BlockSpec>,
    total: usize,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> BlockId {
        let spec = BlockSpec {
            name: name.into(),
            shape,
            offset: self.total,
        };
        self.total += spec.len();
        self.blocks.push(spec);
        BlockId(self.blocks.len() - 1)
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &BlockSpec {
        &self.blocks[id.0]
    }

    pub fn find(&self, name: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.name == name).map(BlockId)
    }

    /// Total scalar count.
    pub fn size(&self) -> usize {
        self.total
    }
}

/// All network weights in one flat vector, with a gradient slot per weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    layout: Layout,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl ParameterSet {
    pub fn zeros(layout: Layout) -> Self {
        let n = layout.size();
        Self {
            layout,
            values: vec![0.0; n],
            grads: vec![0.0; n],
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn slice(&self, id: BlockId) -> &[f64] {
        &self.values[self.layout.block(id).range()]
    }

    pub fn slice_mut(&mut self, id: BlockId) -> &mut [f64] {
        let range = self.layout.block(id).range();
        &mut self.values[range]
    }

    pub fn matrix(&self, id: BlockId) -> ArrayView2<'_, f64> {
        let b = self.layout.block(id);
        ArrayView2::from_shape((b.shape[0], b.shape[1]), &self.values[b.range()]).expect("2-d block")
    }

    pub fn vector(&self, id: BlockId) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.slice(id))
    }

    pub fn grad_matrix_mut(&mut self, id: BlockId) -> ArrayViewMut2<'_, f64> {
        let b = self.layout.block(id);
        let shape = (b.shape[0], b.shape[1]);
        let range = b.range();
        ArrayViewMut2::from_shape(shape, &mut self.grads[range]).expect("2-d block")
    }

    pub fn grad_vector_mut(&mut self, id: BlockId) -> ArrayViewMut1<'_, f64> {
        let range = self.layout.block(id).range();
        ArrayViewMut1::from(&mut self.grads[range])
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Fills a `rows x cols` row-major matrix with `gain` times a matrix with
/// orthonormal rows (or columns, whichever is shorter).
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    // n vectors of length m, orthonormalized by modified Gram-Schmidt.
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            let (r, c) = if rows <= cols { (i, j) } else { (j, i) };
            out[r * cols + c] = gain * x;
        }
    }
    out
}
