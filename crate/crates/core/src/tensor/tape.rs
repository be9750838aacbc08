use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// A dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Dimension(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when viewed as a 2-D matrix (1-D tensors are one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    /// Number of columns when viewed as a 2-D matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// Gaussian-initialized tensor, scaled by `std`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut ChaCha20Rng) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            // Box-Muller from two uniforms keeps us off rand_distr.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            data.push(z * std);
        }
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tid(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Tid, b: Tid },
    Add { a: Tid, b: Tid },
    AddRow { a: Tid, bias: Tid },
    AddConst { a: Tid },
    Scale { a: Tid, c: f64 },
    Mul { a: Tid, b: Tid },
    Relu { a: Tid },
    Sigmoid { a: Tid },
    Tanh { a: Tid },
    Softmax { a: Tid, axis: usize },
    LayerNorm { a: Tid, gamma: Tid, beta: Tid, eps: f64 },
    Dropout { a: Tid, mask: Vec<f64> },
    Embedding { table: Tid, ids: Vec<usize> },
    SliceCols { a: Tid, start: usize },
    ConcatCols { parts: Vec<Tid> },
    ConcatRows { parts: Vec<Tid> },
    Transpose { a: Tid },
    FrameStack { a: Tid, kernel: usize, stride: usize },
    Sum { a: Tid },
    Mean { a: Tid },
    CrossEntropy { logits: Tid, targets: Vec<Option<usize>>, smoothing: f64 },
    /// Scalar node whose gradient w.r.t. its single parent was computed by
    /// the op itself (used by the CTC loss).
    OpaqueScalar { a: Tid, grad: Vec<f64> },
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
}

/// Reverse-mode autodiff tape. Nodes are appended in execution order, so
/// walking the tape backwards is a reverse topological traversal that
/// touches each node exactly once.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: Tid) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: Tid) -> &[f64] {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Tid> {
        if !value.all_finite() {
            return Err(Error::Training(format!(
                "non-finite value produced by {:?}",
                op_name(&op)
            )));
        }
        let grad = vec![0.0; value.numel()];
        self.nodes.push(Node { value, grad, op });
        Ok(Tid(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, t: Tensor) -> Result<Tid> {
        self.push(t, Op::Leaf)
    }

    /// Constant input that never receives gradient (masks, positional tables).
    pub fn constant(&mut self, t: Tensor) -> Tid {
        let grad = vec![0.0; t.numel()];
        self.nodes.push(Node {
            value: t,
            grad,
            op: Op::Leaf,
        });
        Tid(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul {}x{} . {}x{}",
                m, k, k2, n
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = ta.data[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &tb.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        self.push(Tensor::from_vec(&[m, n], out)?, Op::MatMul { a, b })
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape != tb.shape {
            return Err(Error::Dimension(format!(
                "add {:?} vs {:?}",
                ta.shape, tb.shape
            )));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        self.push(Tensor::from_vec(&ta.shape.clone(), data)?, Op::Add { a, b })
    }

    /// Adds a length-N bias vector to every row of an MxN matrix.
    pub fn add_row(&mut self, a: Tid, bias: Tid) -> Result<Tid> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let n = ta.cols();
        if tb.numel() != n {
            return Err(Error::Dimension(format!(
                "add_row bias len {} vs {} cols",
                tb.numel(),
                n
            )));
        }
        let rows = ta.rows();
        let mut data = ta.data.clone();
        for r in 0..rows {
            for c in 0..n {
                data[r * n + c] += tb.data[c];
            }
        }
        self.push(
            Tensor::from_vec(&ta.shape.clone(), data)?,
            Op::AddRow { a, bias },
        )
    }

    /// Adds a constant tensor (same shape). The constant gets no gradient.
    pub fn add_const(&mut self, a: Tid, c: &Tensor) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        if ta.shape != c.shape {
            return Err(Error::Dimension(format!(
                "add_const {:?} vs {:?}",
                ta.shape, c.shape
            )));
        }
        let data: Vec<f64> = ta.data.iter().zip(&c.data).map(|(x, y)| x + y).collect();
        // -inf from attention masks is legal here; finiteness is re-checked
        // after the following softmax.
        let t = Tensor::from_vec(&ta.shape.clone(), data)?;
        let grad = vec![0.0; t.numel()];
        self.nodes.push(Node {
            value: t,
            grad,
            op: Op::AddConst { a },
        });
        Ok(Tid(self.nodes.len() - 1))
    }

    pub fn scale(&mut self, a: Tid, c: f64) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x * c).collect();
        self.push(Tensor::from_vec(&ta.shape.clone(), data)?, Op::Scale { a, c })
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape != tb.shape {
            return Err(Error::Dimension(format!(
                "mul {:?} vs {:?}",
                ta.shape, tb.shape
            )));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        self.push(Tensor::from_vec(&ta.shape.clone(), data)?, Op::Mul { a, b })
    }

    pub fn relu(&mut self, a: Tid) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x.max(0.0)).collect();
        self.push(Tensor::from_vec(&ta.shape.clone(), data)?, Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: Tid) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        self.push(Tensor::from_vec(&ta.shape.clone(), data)?, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: Tid) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x.tanh()).collect();
        self.push(Tensor::from_vec(&ta.shape.clone(), data)?, Op::Tanh { a })
    }

    /// Numerically stable softmax along `axis` of a 1-D or 2-D tensor.
    /// A slice that is entirely -inf has no well-defined distribution and
    /// is rejected.
    pub fn softmax(&mut self, a: Tid, axis: usize) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let rank = ta.shape.len();
        if axis >= rank.max(1) {
            return Err(Error::Dimension(format!(
                "softmax axis {} on rank-{} tensor",
                axis, rank
            )));
        }
        let (rows, cols, row_major) = match (rank, axis) {
            (1, 0) => (1usize, ta.shape[0], true),
            (2, 1) => (ta.shape[0], ta.shape[1], true),
            (2, 0) => (ta.shape[1], ta.shape[0], false),
            _ => {
                return Err(Error::Dimension(format!(
                    "softmax on rank-{} tensor",
                    rank
                )))
            }
        };
        let idx = |r: usize, c: usize| -> usize {
            if row_major {
                r * cols + c
            } else {
                c * rows + r
            }
        };
        let mut data = vec![0.0; ta.numel()];
        for r in 0..rows {
            let mut mx = f64::NEG_INFINITY;
            for c in 0..cols {
                mx = mx.max(ta.data[idx(r, c)]);
            }
            if mx == f64::NEG_INFINITY {
                return Err(Error::DegenerateInput(
                    "softmax over a fully -inf slice".into(),
                ));
            }
            let mut sum = 0.0;
            for c in 0..cols {
                let e = (ta.data[idx(r, c)] - mx).exp();
                data[idx(r, c)] = e;
                sum += e;
            }
            for c in 0..cols {
                data[idx(r, c)] /= sum;
            }
        }
        self.push(
            Tensor::from_vec(&ta.shape.clone(), data)?,
            Op::Softmax { a, axis },
        )
    }

    pub fn layer_norm(&mut self, a: Tid, gamma: Tid, beta: Tid, eps: f64) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        let tg = &self.nodes[gamma.0].value;
        let tb = &self.nodes[beta.0].value;
        if tg.numel() != cols || tb.numel() != cols {
            return Err(Error::Dimension(format!(
                "layer_norm gamma/beta len {}/{} vs {} cols",
                tg.numel(),
                tb.numel(),
                cols
            )));
        }
        let mut data = vec![0.0; ta.numel()];
        for r in 0..rows {
            let row = &ta.data[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for c in 0..cols {
                data[r * cols + c] = (row[c] - mean) * inv * tg.data[c] + tb.data[c];
            }
        }
        self.push(
            Tensor::from_vec(&ta.shape.clone(), data)?,
            Op::LayerNorm { a, gamma, beta, eps },
        )
    }

    /// Inverted dropout. `rate == 0` is the identity; draws come from the
    /// caller's RNG stream so runs are reproducible from one seed.
    pub fn dropout(&mut self, a: Tid, rate: f64, rng: &mut ChaCha20Rng) -> Result<Tid> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate {}", rate)));
        }
        let ta = &self.nodes[a.0].value;
        if rate == 0.0 {
            let mask = vec![1.0; ta.numel()];
            let value = ta.clone();
            return self.push(value, Op::Dropout { a, mask });
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..ta.numel())
            .map(|_| {
                if rng.gen_range(0.0..1.0) < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data = ta.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
        self.push(Tensor::from_vec(&ta.shape.clone(), data)?, Op::Dropout { a, mask })
    }

    /// Gathers rows of `table` by id; output is `ids.len() x D`.
    pub fn embedding(&mut self, table: Tid, ids: &[usize]) -> Result<Tid> {
        let tt = &self.nodes[table.0].value;
        let (v, d) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Dimension(format!(
                    "embedding id {} out of range {}",
                    id, v
                )));
            }
            data.extend_from_slice(&tt.data[id * d..(id + 1) * d]);
        }
        self.push(
            Tensor::from_vec(&[ids.len(), d], data)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, a: Tid, start: usize, width: usize) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        if start + width > cols {
            return Err(Error::Dimension(format!(
                "slice_cols {}..{} of {} cols",
                start,
                start + width,
                cols
            )));
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&ta.data[r * cols + start..r * cols + start + width]);
        }
        self.push(
            Tensor::from_vec(&[rows, width], data)?,
            Op::SliceCols { a, start },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Tid]) -> Result<Tid> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_cols of nothing".into()));
        }
        let rows = self.nodes[parts[0].0].value.rows();
        let total: usize = parts
            .iter()
            .map(|p| self.nodes[p.0].value.cols())
            .sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let t = &self.nodes[p.0].value;
                if t.rows() != rows {
                    return Err(Error::Dimension("concat_cols row mismatch".into()));
                }
                let c = t.cols();
                data.extend_from_slice(&t.data[r * c..(r + 1) * c]);
            }
        }
        self.push(
            Tensor::from_vec(&[rows, total], data)?,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn concat_rows(&mut self, parts: &[Tid]) -> Result<Tid> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_rows of nothing".into()));
        }
        let cols = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            if t.cols() != cols {
                return Err(Error::Dimension("concat_rows col mismatch".into()));
            }
            rows += t.rows();
            data.extend_from_slice(&t.data);
        }
        self.push(
            Tensor::from_vec(&[rows, cols], data)?,
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn transpose(&mut self, a: Tid) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = ta.data[r * cols + c];
            }
        }
        self.push(Tensor::from_vec(&[cols, rows], data)?, Op::Transpose { a })
    }

    /// Stacks `kernel` consecutive rows with the given stride; the strided
    /// front-end of the encoder is two of these followed by a linear layer.
    pub fn frame_stack(&mut self, a: Tid, kernel: usize, stride: usize) -> Result<Tid> {
        let ta = &self.nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        if rows < kernel {
            return Err(Error::Dimension(format!(
                "frame_stack kernel {} over {} rows",
                kernel, rows
            )));
        }
        let out_rows = (rows - kernel) / stride + 1;
        let mut data = Vec::with_capacity(out_rows * kernel * cols);
        for r in 0..out_rows {
            let base = r * stride;
            data.extend_from_slice(&ta.data[base * cols..(base + kernel) * cols]);
        }
        self.push(
            Tensor::from_vec(&[out_rows, kernel * cols], data)?,
            Op::FrameStack { a, kernel, stride },
        )
    }

    pub fn sum(&mut self, a: Tid) -> Result<Tid> {
        let s = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    pub fn mean(&mut self, a: Tid) -> Result<Tid> {
        let t = &self.nodes[a.0].value;
        let s = t.data.iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean { a })
    }

    /// Mean cross entropy of `logits` (LxV) against per-row targets; `None`
    /// rows are ignored. With `smoothing` > 0 the target distribution is
    /// (1-eps) one-hot + eps uniform.
    pub fn cross_entropy(
        &mut self,
        logits: Tid,
        targets: &[Option<usize>],
        smoothing: f64,
    ) -> Result<Tid> {
        let tl = &self.nodes[logits.0].value;
        let (rows, cols) = (tl.rows(), tl.cols());
        if targets.len() != rows {
            return Err(Error::Dimension(format!(
                "cross_entropy {} targets vs {} rows",
                targets.len(),
                rows
            )));
        }
        let valid = targets.iter().flatten().count();
        if valid == 0 {
            return Err(Error::DegenerateInput(
                "cross_entropy with all positions ignored".into(),
            ));
        }
        let mut loss = 0.0;
        for (r, tgt) in targets.iter().enumerate() {
            let Some(t) = tgt else { continue };
            if *t >= cols {
                return Err(Error::Dimension(format!(
                    "target id {} out of vocab {}",
                    t, cols
                )));
            }
            let row = &tl.data[r * cols..(r + 1) * cols];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            let mut l = -(1.0 - smoothing) * (row[*t] - lse);
            if smoothing > 0.0 {
                let mean_lp: f64 =
                    row.iter().map(|x| x - lse).sum::<f64>() / cols as f64;
                l -= smoothing * mean_lp;
            }
            loss += l;
        }
        self.push(
            Tensor::scalar(loss / valid as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                smoothing,
            },
        )
    }

    /// Scalar node with a precomputed gradient w.r.t. its parent. The parent
    /// gradient must not depend on anything upstream (it is scaled linearly
    /// by the incoming gradient during backward).
    pub fn opaque_scalar(&mut self, a: Tid, value: f64, grad: Vec<f64>) -> Result<Tid> {
        if grad.len() != self.nodes[a.0].value.numel() {
            return Err(Error::Dimension("opaque_scalar grad size".into()));
        }
        self.push(Tensor::scalar(value), Op::OpaqueScalar { a, grad })
    }

    /// Backpropagates from a scalar node. Nodes are visited exactly once,
    /// in reverse creation order.
    pub fn backward(&mut self, loss: Tid) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Dimension("backward from a non-scalar node".into()));
        }
        self.nodes[loss.0].grad[0] = 1.0;
        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut self.nodes[i].grad);
            if g.iter().all(|&v| v == 0.0) {
                self.nodes[i].grad = g;
                continue;
            }
            self.backward_node(i, &g)?;
            self.nodes[i].grad = g;
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, g: &[f64]) -> Result<()> {
        // Ops read values immutably and accumulate into parent grads; split
        // borrows via raw indices.
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = {
                    let t = &self.nodes[a.0].value;
                    (t.rows(), t.cols())
                };
                let n = self.nodes[b.0].value.cols();
                // dA = dC . B^T
                let mut da = vec![0.0; m * k];
                {
                    let bt = &self.nodes[b.0].value.data;
                    for r in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for c in 0..n {
                                acc += g[r * n + c] * bt[p * n + c];
                            }
                            da[r * k + p] = acc;
                        }
                    }
                }
                // dB = A^T . dC
                let mut db = vec![0.0; k * n];
                {
                    let at = &self.nodes[a.0].value.data;
                    for p in 0..k {
                        for r in 0..m {
                            let av = at[r * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for c in 0..n {
                                db[p * n + c] += av * g[r * n + c];
                            }
                        }
                    }
                }
                accumulate(&mut self.nodes[a.0].grad, &da);
                accumulate(&mut self.nodes[b.0].grad, &db);
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                accumulate(&mut self.nodes[a.0].grad, g);
                accumulate(&mut self.nodes[b.0].grad, g);
            }
            Op::AddRow { a, bias } => {
                let (a, bias) = (*a, *bias);
                accumulate(&mut self.nodes[a.0].grad, g);
                let n = self.nodes[bias.0].value.numel();
                let rows = g.len() / n;
                for r in 0..rows {
                    for c in 0..n {
                        self.nodes[bias.0].grad[c] += g[r * n + c];
                    }
                }
            }
            Op::AddConst { a } => {
                let a = *a;
                accumulate(&mut self.nodes[a.0].grad, g);
            }
            Op::Scale { a, c } => {
                let (a, c) = (*a, *c);
                for (dst, gv) in self.nodes[a.0].grad.iter_mut().zip(g) {
                    *dst += gv * c;
                }
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                let bd = self.nodes[b.0].value.data.clone();
                for ((dst, gv), bv) in self.nodes[a.0].grad.iter_mut().zip(g).zip(&bd) {
                    *dst += gv * bv;
                }
                let ad = self.nodes[a.0].value.data.clone();
                for ((dst, gv), av) in self.nodes[b.0].grad.iter_mut().zip(g).zip(&ad) {
                    *dst += gv * av;
                }
            }
            Op::Relu { a } => {
                let a = *a;
                let vals = self.nodes[a.0].value.data.clone();
                for ((dst, gv), x) in self.nodes[a.0].grad.iter_mut().zip(g).zip(&vals) {
                    if *x > 0.0 {
                        *dst += gv;
                    }
                }
            }
            Op::Sigmoid { a } => {
                let a = *a;
                let ys = self.nodes[i].value.data.clone();
                for ((dst, gv), y) in self.nodes[a.0].grad.iter_mut().zip(g).zip(&ys) {
                    *dst += gv * y * (1.0 - y);
                }
            }
            Op::Tanh { a } => {
                let a = *a;
                let ys = self.nodes[i].value.data.clone();
                for ((dst, gv), y) in self.nodes[a.0].grad.iter_mut().zip(g).zip(&ys) {
                    *dst += gv * (1.0 - y * y);
                }
            }
            Op::Softmax { a, axis } => {
                let (a, axis) = (*a, *axis);
                let y = self.nodes[i].value.clone();
                let rank = y.shape.len();
                let (rows, cols, row_major) = match (rank, axis) {
                    (1, 0) => (1usize, y.shape[0], true),
                    (2, 1) => (y.shape[0], y.shape[1], true),
                    _ => (y.shape[1], y.shape[0], false),
                };
                let idx = |r: usize, c: usize| -> usize {
                    if row_major {
                        r * cols + c
                    } else {
                        c * rows + r
                    }
                };
                for r in 0..rows {
                    let mut dot = 0.0;
                    for c in 0..cols {
                        dot += g[idx(r, c)] * y.data[idx(r, c)];
                    }
                    for c in 0..cols {
                        let k = idx(r, c);
                        self.nodes[a.0].grad[k] += y.data[k] * (g[k] - dot);
                    }
                }
            }
            Op::LayerNorm { a, gamma, beta, eps } => {
                let (a, gamma, beta, eps) = (*a, *gamma, *beta, *eps);
                let x = self.nodes[a.0].value.clone();
                let gam = self.nodes[gamma.0].value.data.clone();
                let (rows, cols) = (x.rows(), x.cols());
                for r in 0..rows {
                    let row = &x.data[r * cols..(r + 1) * cols];
                    let mean = row.iter().sum::<f64>() / cols as f64;
                    let var =
                        row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let gr = &g[r * cols..(r + 1) * cols];
                    let gg: Vec<f64> = gr.iter().zip(&gam).map(|(gv, gm)| gv * gm).collect();
                    let mean_gg = gg.iter().sum::<f64>() / cols as f64;
                    let mean_gg_xhat =
                        gg.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                    for c in 0..cols {
                        self.nodes[a.0].grad[r * cols + c] +=
                            (gg[c] - mean_gg - xhat[c] * mean_gg_xhat) * inv;
                        self.nodes[gamma.0].grad[c] += gr[c] * xhat[c];
                        self.nodes[beta.0].grad[c] += gr[c];
                    }
                }
            }
            Op::Dropout { a, mask } => {
                let a = *a;
                let mask = mask.clone();
                for ((dst, gv), m) in self.nodes[a.0].grad.iter_mut().zip(g).zip(&mask) {
                    *dst += gv * m;
                }
            }
            Op::Embedding { table, ids } => {
                let table = *table;
                let ids = ids.clone();
                let d = self.nodes[table.0].value.cols();
                for (r, id) in ids.iter().enumerate() {
                    for c in 0..d {
                        self.nodes[table.0].grad[id * d + c] += g[r * d + c];
                    }
                }
            }
            Op::SliceCols { a, start } => {
                let (a, start) = (*a, *start);
                let cols = self.nodes[a.0].value.cols();
                let rows = self.nodes[a.0].value.rows();
                let width = g.len() / rows;
                for r in 0..rows {
                    for c in 0..width {
                        self.nodes[a.0].grad[r * cols + start + c] += g[r * width + c];
                    }
                }
            }
            Op::ConcatCols { parts } => {
                let parts = parts.clone();
                let rows = self.nodes[parts[0].0].value.rows();
                let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
                let mut offset = 0;
                for p in &parts {
                    let c = self.nodes[p.0].value.cols();
                    for r in 0..rows {
                        for cc in 0..c {
                            self.nodes[p.0].grad[r * c + cc] += g[r * total + offset + cc];
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows { parts } => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in &parts {
                    let n = self.nodes[p.0].value.numel();
                    accumulate(&mut self.nodes[p.0].grad, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::Transpose { a } => {
                let a = *a;
                let (rows, cols) = {
                    let t = &self.nodes[a.0].value;
                    (t.rows(), t.cols())
                };
                for r in 0..rows {
                    for c in 0..cols {
                        self.nodes[a.0].grad[r * cols + c] += g[c * rows + r];
                    }
                }
            }
            Op::FrameStack { a, kernel, stride } => {
                let (a, kernel, stride) = (*a, *kernel, *stride);
                let cols = self.nodes[a.0].value.cols();
                let out_rows = g.len() / (kernel * cols);
                for r in 0..out_rows {
                    let base = r * stride;
                    for k in 0..kernel {
                        for c in 0..cols {
                            self.nodes[a.0].grad[(base + k) * cols + c] +=
                                g[r * kernel * cols + k * cols + c];
                        }
                    }
                }
            }
            Op::Sum { a } => {
                let a = *a;
                for dst in self.nodes[a.0].grad.iter_mut() {
                    *dst += g[0];
                }
            }
            Op::Mean { a } => {
                let a = *a;
                let n = self.nodes[a.0].value.numel() as f64;
                for dst in self.nodes[a.0].grad.iter_mut() {
                    *dst += g[0] / n;
                }
            }
            Op::CrossEntropy { logits, targets, smoothing } => {
                let (logits, smoothing) = (*logits, *smoothing);
                let targets = targets.clone();
                let tl = self.nodes[logits.0].value.clone();
                let cols = tl.cols();
                let valid = targets.iter().flatten().count() as f64;
                for (r, tgt) in targets.iter().enumerate() {
                    let Some(t) = tgt else { continue };
                    let row = &tl.data[r * cols..(r + 1) * cols];
                    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|x| (x - mx).exp()).sum();
                    for c in 0..cols {
                        let p = (row[c] - mx).exp() / sum;
                        let q = if c == *t { 1.0 - smoothing } else { 0.0 }
                            + smoothing / cols as f64;
                        self.nodes[logits.0].grad[r * cols + c] += g[0] * (p - q) / valid;
                    }
                }
            }
            Op::OpaqueScalar { a, grad } => {
                let a = *a;
                let grad = grad.clone();
                for (dst, gv) in self.nodes[a.0].grad.iter_mut().zip(&grad) {
                    *dst += g[0] * gv;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::Add { .. } => "add",
        Op::AddRow { .. } => "add_row",
        Op::AddConst { .. } => "add_const",
        Op::Scale { .. } => "scale",
        Op::Mul { .. } => "mul",
        Op::Relu { .. } => "relu",
        Op::Sigmoid { .. } => "sigmoid",
        Op::Tanh { .. } => "tanh",
        Op::Softmax { .. } => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Dropout { .. } => "dropout",
        Op::Embedding { .. } => "embedding",
        Op::SliceCols { .. } => "slice_cols",
        Op::ConcatCols { .. } => "concat_cols",
        Op::ConcatRows { .. } => "concat_rows",
        Op::Transpose { .. } => "transpose",
        Op::FrameStack { .. } => "frame_stack",
        Op::Sum { .. } => "sum",
        Op::Mean { .. } => "mean",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::OpaqueScalar { .. } => "opaque_scalar",
    }
}

/// Sinusoidal positional encoding table, `len x dim`.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for j in 0..dim {
            let angle = pos as f64 / 10000f64.powf((2 * (j / 2)) as f64 / dim as f64);
            data[pos * dim + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor {
        shape: vec![len, dim],
        data,
    }
}
