//! Wengert tape: records forward primitives, replays them in reverse for
//! gradients, and can record the adjoint pass itself as ordinary tape nodes
//! so that gradients are differentiable again (double backward).

use std::collections::HashMap;

use super::kernels as k;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::TapeError;

pub type NodeId = usize;

/// Role of a leaf node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    /// Trainable parameter; a gradient target.
    Param,
    /// Differentiable input (e.g. the interpolate x-hat of the penalty term).
    Input,
    /// Constant; never receives a gradient.
    Const,
}

/// Every operation the tape can record.
#[derive(Debug, Clone)]
pub enum Op<F: Scalar> {
    Leaf(LeafKind),
    // elementwise, same shape
    Add,
    Sub,
    Mul,
    // elementwise, unary
    ScalarMul(F),
    AddScalar(F),
    Square,
    Sqrt,
    Recip,
    Ln,
    Sigmoid,
    Relu,
    LeakyRelu(F),
    Clamp(F, F),
    // dense / convolution
    MatMul { ta: bool, tb: bool },
    Conv2d { stride: usize, pad: usize },
    ConvInputGrad { stride: usize, pad: usize, in_h: usize, in_w: usize },
    ConvWeightGrad { stride: usize, pad: usize, kh: usize, kw: usize },
    BiasAdd,
    SumToBias,
    BroadcastBias { shape: Vec<usize> },
    // reductions and their adjoint broadcasts
    SumAll,
    MeanAll,
    FrobeniusSq,
    SumPerSample,
    BroadcastScalar { shape: Vec<usize> },
    BroadcastPerSample { shape: Vec<usize> },
    // shape
    Reshape { shape: Vec<usize> },
    Pad2d(usize),
    Crop2d(usize),
    RepeatChannels(usize),
    FoldChannels(usize),
}

impl<F: Scalar> Op<F> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "elementwise_mul",
            Op::ScalarMul(_) => "scalar_mul",
            Op::AddScalar(_) => "add_scalar",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Recip => "recip",
            Op::Ln => "ln",
            Op::Sigmoid => "sigmoid",
            Op::Relu => "relu",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Clamp(_, _) => "clamp",
            Op::MatMul { .. } => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvInputGrad { .. } => "conv2d_input_grad",
            Op::ConvWeightGrad { .. } => "conv2d_weight_grad",
            Op::BiasAdd => "bias_add",
            Op::SumToBias => "sum_to_bias",
            Op::BroadcastBias { .. } => "broadcast_bias",
            Op::SumAll => "sum",
            Op::MeanAll => "mean",
            Op::FrobeniusSq => "frobenius_sq",
            Op::SumPerSample => "sum_per_sample",
            Op::BroadcastScalar { .. } => "broadcast_scalar",
            Op::BroadcastPerSample { .. } => "broadcast_per_sample",
            Op::Reshape { .. } => "reshape",
            Op::Pad2d(_) => "pad",
            Op::Crop2d(_) => "crop",
            Op::RepeatChannels(_) => "repeat_channels",
            Op::FoldChannels(_) => "fold_channels",
        }
    }
}

/// One recorded operation: kind, input node ids, and the forward value.
#[derive(Debug, Clone)]
pub struct Node<F: Scalar> {
    pub op: Op<F>,
    pub inputs: Vec<NodeId>,
    pub value: Tensor<F>,
}

/// Append-only computation record. Nodes are topologically ordered by
/// construction: every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
    recording: bool,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), recording: true }
    }

    /// A tape that refuses to record the adjoint pass as nodes; double
    /// backward is rejected on it.
    pub fn new_inference() -> Self {
        Tape { nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node<F> {
        &self.nodes[id]
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id].value.shape()
    }

    /// Ids of parameter and input leaves, in insertion order.
    pub fn roots(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf(LeafKind::Param) | Op::Leaf(LeafKind::Input)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Drop all nodes past `len` (used to release adjoint nodes after a
    /// value-only backward). Ids at or above `len` become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn leaf(&mut self, value: Tensor<F>, kind: LeafKind) -> NodeId {
        self.push(Op::Leaf(kind), vec![], value)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> NodeId {
        self.leaf(value, LeafKind::Const)
    }

    fn push(&mut self, op: Op<F>, inputs: Vec<NodeId>, value: Tensor<F>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { op, inputs, value });
        id
    }

    fn check_id(&self, id: NodeId) -> Result<(), TapeError> {
        if id >= self.nodes.len() {
            return Err(TapeError::UnknownNode(id));
        }
        Ok(())
    }

    // -- elementwise builders ------------------------------------------------

    fn binary_same_shape(&mut self, op: Op<F>, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TapeError::ShapeMismatch {
                op: op.name(),
                detail: format!("{sa:?} vs {sb:?}"),
            });
        }
        let value = eval_op(&op, &[self.value(a), self.value(b)]);
        Ok(self.push(op, vec![a, b], value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary_same_shape(Op::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary_same_shape(Op::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary_same_shape(Op::Mul, a, b)
    }

    fn unary(&mut self, op: Op<F>, a: NodeId) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        let value = eval_op(&op, &[self.value(a)]);
        Ok(self.push(op, vec![a], value))
    }

    pub fn scalar_mul(&mut self, c: F, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::ScalarMul(c), a)
    }

    pub fn add_scalar(&mut self, c: F, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::AddScalar(c), a)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::Square, a)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::Sqrt, a)
    }

    pub fn recip(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::Recip, a)
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::Ln, a)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::Sigmoid, a)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::Relu, a)
    }

    pub fn leaky_relu(&mut self, slope: F, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::LeakyRelu(slope), a)
    }

    pub fn clamp(&mut self, lo: F, hi: F, a: NodeId) -> Result<NodeId, TapeError> {
        if lo >= hi {
            return Err(TapeError::ShapeMismatch {
                op: "clamp",
                detail: format!("lo {lo} must be < hi {hi}"),
            });
        }
        self.unary(Op::Clamp(lo, hi), a)
    }

    // -- dense / conv builders -----------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.matmul_t(false, false, a, b)
    }

    pub fn matmul_t(&mut self, ta: bool, tb: bool, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 {
            return Err(TapeError::Rank { op: "matmul", expected: 2, got: sa });
        }
        if sb.len() != 2 {
            return Err(TapeError::Rank { op: "matmul", expected: 2, got: sb });
        }
        let ka = if ta { sa[0] } else { sa[1] };
        let kb = if tb { sb[1] } else { sb[0] };
        if ka != kb {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dims {ka} vs {kb} (a {sa:?} ta={ta}, b {sb:?} tb={tb})"),
            });
        }
        let op = Op::MatMul { ta, tb };
        let value = eval_op(&op, &[self.value(a), self.value(b)]);
        Ok(self.push(op, vec![a, b], value))
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> Result<NodeId, TapeError> {
        self.check_id(x)?;
        self.check_id(w)?;
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 {
            return Err(TapeError::Rank { op: "conv2d", expected: 4, got: sx });
        }
        if sw.len() != 4 {
            return Err(TapeError::Rank { op: "conv2d", expected: 4, got: sw });
        }
        if stride == 0 {
            return Err(TapeError::ShapeMismatch { op: "conv2d", detail: "stride must be >= 1".into() });
        }
        if sx[1] != sw[1] {
            return Err(TapeError::ShapeMismatch {
                op: "conv2d",
                detail: format!("input channels {} vs kernel channels {}", sx[1], sw[1]),
            });
        }
        if sx[2] + 2 * pad < sw[2] || sx[3] + 2 * pad < sw[3] {
            return Err(TapeError::ShapeMismatch {
                op: "conv2d",
                detail: format!(
                    "kernel {}x{} larger than padded input {}x{}",
                    sw[2],
                    sw[3],
                    sx[2] + 2 * pad,
                    sx[3] + 2 * pad
                ),
            });
        }
        let op = Op::Conv2d { stride, pad };
        let value = eval_op(&op, &[self.value(x), self.value(w)]);
        Ok(self.push(op, vec![x, w], value))
    }

    pub fn bias_add(&mut self, x: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.check_id(x)?;
        self.check_id(b)?;
        let sx = self.shape(x).to_vec();
        let sb = self.shape(b).to_vec();
        if !(sx.len() == 2 || sx.len() == 4) {
            return Err(TapeError::Rank { op: "bias_add", expected: 4, got: sx });
        }
        if sb.len() != 1 || sb[0] != k::bias_len(&sx) {
            return Err(TapeError::ShapeMismatch {
                op: "bias_add",
                detail: format!("bias {sb:?} does not match channel axis of {sx:?}"),
            });
        }
        let value = eval_op(&Op::BiasAdd, &[self.value(x), self.value(b)]);
        Ok(self.push(Op::BiasAdd, vec![x, b], value))
    }

    // -- reductions / shape --------------------------------------------------

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::SumAll, a)
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::MeanAll, a)
    }

    pub fn frobenius_sq(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::FrobeniusSq, a)
    }

    pub fn sum_per_sample(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(Op::SumPerSample, a)
    }

    /// Broadcast a scalar node over `shape`.
    pub fn unary_broadcast(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        if !self.value(a).is_scalar() {
            return Err(TapeError::ShapeMismatch {
                op: "broadcast_scalar",
                detail: format!("expected scalar input, got {:?}", self.shape(a)),
            });
        }
        self.unary(Op::BroadcastScalar { shape }, a)
    }

    /// Broadcast a per-sample vector [B] over a [B, ...] shape.
    pub fn broadcast_per_sample(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        let sa = self.shape(a);
        if sa.len() != 1 || sa[0] != shape[0] {
            return Err(TapeError::ShapeMismatch {
                op: "broadcast_per_sample",
                detail: format!("batch vector {sa:?} does not lead shape {shape:?}"),
            });
        }
        self.unary(Op::BroadcastPerSample { shape }, a)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() {
            return Err(TapeError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.shape(a), shape),
            });
        }
        self.unary(Op::Reshape { shape }, a)
    }

    /// Flatten [B, ...] to [B, rest].
    pub fn flatten(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        let s = self.shape(a);
        let b = s[0];
        let rest: usize = s.iter().skip(1).product();
        self.reshape(a, vec![b, rest])
    }

    pub fn pad2d(&mut self, a: NodeId, p: usize) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        if self.shape(a).len() != 4 {
            return Err(TapeError::Rank { op: "pad", expected: 4, got: self.shape(a).to_vec() });
        }
        self.unary(Op::Pad2d(p), a)
    }

    pub fn crop2d(&mut self, a: NodeId, p: usize) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        let s = self.shape(a);
        if s.len() != 4 {
            return Err(TapeError::Rank { op: "crop", expected: 4, got: s.to_vec() });
        }
        if s[2] <= 2 * p || s[3] <= 2 * p {
            return Err(TapeError::ShapeMismatch {
                op: "crop",
                detail: format!("border {p} too large for {}x{}", s[2], s[3]),
            });
        }
        self.unary(Op::Crop2d(p), a)
    }

    pub fn repeat_channels(&mut self, a: NodeId, times: usize) -> Result<NodeId, TapeError> {
        self.check_id(a)?;
        if self.shape(a).len() != 4 {
            return Err(TapeError::Rank { op: "repeat_channels", expected: 4, got: self.shape(a).to_vec() });
        }
        self.unary(Op::RepeatChannels(times), a)
    }

    // -- backward ------------------------------------------------------------

    /// Reverse sweep computing d(output)/d(leaf) for the requested leaves.
    ///
    /// The adjoint computation is appended to the tape as ordinary nodes, so
    /// each returned gradient is itself a differentiable tape node.
    pub fn backward_graph(
        &mut self,
        output: NodeId,
        wrt: &[NodeId],
    ) -> Result<HashMap<NodeId, NodeId>, TapeError> {
        if !self.recording {
            return Err(TapeError::ShapeMismatch {
                op: "backward",
                detail: "tape is not in recording mode; gradient-of-gradient unavailable".into(),
            });
        }
        self.backward_impl(output, wrt)
    }

    /// Reverse sweep returning gradient values only. The adjoint nodes are
    /// dropped afterwards, leaving the tape at its pre-call length.
    pub fn backward(
        &mut self,
        output: NodeId,
        wrt: &[NodeId],
    ) -> Result<HashMap<NodeId, Tensor<F>>, TapeError> {
        let mark = self.nodes.len();
        let ids = self.backward_impl(output, wrt)?;
        let grads = ids
            .into_iter()
            .map(|(leaf, gid)| (leaf, self.nodes[gid].value.clone()))
            .collect();
        self.truncate(mark);
        Ok(grads)
    }

    fn backward_impl(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<HashMap<NodeId, NodeId>, TapeError> {
        self.check_id(output)?;
        for &w in wrt {
            self.check_id(w)?;
        }
        if !self.value(output).is_scalar() {
            return Err(TapeError::NonScalarOutput(self.shape(output).to_vec()));
        }
        let upto = output + 1;

        // descends[n]: some wrt leaf flows into n.
        let mut descends = vec![false; upto];
        for &w in wrt {
            if w < upto {
                descends[w] = true;
            }
        }
        for i in 0..upto {
            if !descends[i] {
                descends[i] = self.nodes[i].inputs.iter().any(|&j| descends[j]);
            }
        }
        // feeds[n]: n flows into the output.
        let mut feeds = vec![false; upto];
        feeds[output] = true;
        for i in (0..upto).rev() {
            if feeds[i] {
                for &j in &self.nodes[i].inputs.clone() {
                    feeds[j] = true;
                }
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; upto];
        adjoint[output] = Some(self.constant(Tensor::scalar(F::one())));

        for nid in (0..upto).rev() {
            if !(feeds[nid] && descends[nid]) {
                continue;
            }
            let Some(g) = adjoint[nid] else { continue };
            let node_op = self.nodes[nid].op.clone();
            if matches!(node_op, Op::Leaf(_)) {
                continue;
            }
            let inputs = self.nodes[nid].inputs.clone();
            let contributions = self.input_grads(&node_op, nid, &inputs, g)?;
            for (input_id, contrib) in contributions {
                if !descends[input_id] {
                    continue;
                }
                adjoint[input_id] = Some(match adjoint[input_id] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib)?,
                });
            }
        }

        let mut out = HashMap::new();
        for &w in wrt {
            let gid = match adjoint.get(w).copied().flatten() {
                Some(gid) => gid,
                None => self.constant(Tensor::zeros(self.shape(w).to_vec())),
            };
            out.insert(w, gid);
        }
        Ok(out)
    }

    /// Vector-Jacobian products of one node: for each differentiable input,
    /// the contribution to its adjoint, built as tape nodes.
    fn input_grads(
        &mut self,
        op: &Op<F>,
        nid: NodeId,
        inputs: &[NodeId],
        g: NodeId,
    ) -> Result<Vec<(NodeId, NodeId)>, TapeError> {
        let out = match op {
            Op::Leaf(_) => vec![],
            Op::Add => vec![(inputs[0], g), (inputs[1], g)],
            Op::Sub => {
                let neg = self.scalar_mul(-F::one(), g)?;
                vec![(inputs[0], g), (inputs[1], neg)]
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let da = self.mul(g, b)?;
                let db = self.mul(g, a)?;
                vec![(a, da), (b, db)]
            }
            Op::ScalarMul(c) => vec![(inputs[0], self.scalar_mul(*c, g)?)],
            Op::AddScalar(_) => vec![(inputs[0], g)],
            Op::Square => {
                let xg = self.mul(g, inputs[0])?;
                vec![(inputs[0], self.scalar_mul(F::from_f64(2.0), xg)?)]
            }
            Op::Sqrt => {
                // d sqrt(x) = g / (2 sqrt(x)); reuse the forward output.
                let inv = self.recip(nid)?;
                let half = self.scalar_mul(F::from_f64(0.5), inv)?;
                vec![(inputs[0], self.mul(g, half)?)]
            }
            Op::Recip => {
                // d (1/x) = -g / x^2 = -g * y^2
                let y2 = self.square(nid)?;
                let gy2 = self.mul(g, y2)?;
                vec![(inputs[0], self.scalar_mul(-F::one(), gy2)?)]
            }
            Op::Ln => {
                let inv = self.recip(inputs[0])?;
                vec![(inputs[0], self.mul(g, inv)?)]
            }
            Op::Sigmoid => {
                // g * y * (1 - y)
                let neg_y = self.scalar_mul(-F::one(), nid)?;
                let one_minus = self.add_scalar(F::one(), neg_y)?;
                let prod = self.mul(nid, one_minus)?;
                vec![(inputs[0], self.mul(g, prod)?)]
            }
            Op::Relu => {
                let mask = step_mask(self.value(inputs[0]), F::zero());
                let m = self.constant(mask);
                vec![(inputs[0], self.mul(g, m)?)]
            }
            Op::LeakyRelu(slope) => {
                let mask = step_mask(self.value(inputs[0]), *slope);
                let m = self.constant(mask);
                vec![(inputs[0], self.mul(g, m)?)]
            }
            Op::Clamp(lo, hi) => {
                let x = self.value(inputs[0]);
                let mask = x.map(|v| if v > *lo && v < *hi { F::one() } else { F::zero() });
                let m = self.constant(mask);
                vec![(inputs[0], self.mul(g, m)?)]
            }
            Op::MatMul { ta, tb } => {
                let (a, b) = (inputs[0], inputs[1]);
                // y = op_a(A) op_b(B); adjoints follow from trace identities.
                let da = if !ta {
                    self.matmul_t(false, !tb, g, b)?
                } else {
                    self.matmul_t(*tb, true, b, g)?
                };
                let db = if !tb {
                    self.matmul_t(!ta, false, a, g)?
                } else {
                    self.matmul_t(true, *ta, g, a)?
                };
                vec![(a, da), (b, db)]
            }
            Op::Conv2d { stride, pad } => {
                let (x, w) = (inputs[0], inputs[1]);
                let (in_h, in_w) = (self.shape(x)[2], self.shape(x)[3]);
                let (kh, kw) = (self.shape(w)[2], self.shape(w)[3]);
                let (stride, pad) = (*stride, *pad);
                let dx = self.push_conv_input_grad(g, w, stride, pad, in_h, in_w);
                let dw = self.push_conv_weight_grad(x, g, stride, pad, kh, kw);
                vec![(x, dx), (w, dw)]
            }
            Op::ConvInputGrad { stride, pad, .. } => {
                // node = A_w^T(g_in) with inputs (g_in, w)
                let (g_in, w) = (inputs[0], inputs[1]);
                let (stride, pad) = (*stride, *pad);
                let (kh, kw) = (self.shape(w)[2], self.shape(w)[3]);
                let dg = self.conv2d(g, w, stride, pad)?;
                let dw = self.push_conv_weight_grad(g, g_in, stride, pad, kh, kw);
                vec![(g_in, dg), (w, dw)]
            }
            Op::ConvWeightGrad { stride, pad, .. } => {
                // node = sum_b corr(x_b, g_b) with inputs (x, g_in)
                let (x, g_in) = (inputs[0], inputs[1]);
                let (stride, pad) = (*stride, *pad);
                let (in_h, in_w) = (self.shape(x)[2], self.shape(x)[3]);
                let dx = self.push_conv_input_grad(g_in, g, stride, pad, in_h, in_w);
                let dg = self.conv2d(x, g, stride, pad)?;
                vec![(x, dx), (g_in, dg)]
            }
            Op::BiasAdd => {
                let (x, b) = (inputs[0], inputs[1]);
                let db = self.unary(Op::SumToBias, g)?;
                vec![(x, g), (b, db)]
            }
            Op::SumToBias => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![(inputs[0], self.unary(Op::BroadcastBias { shape }, g)?)]
            }
            Op::BroadcastBias { .. } => vec![(inputs[0], self.unary(Op::SumToBias, g)?)],
            Op::SumAll => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![(inputs[0], self.unary(Op::BroadcastScalar { shape }, g)?)]
            }
            Op::MeanAll => {
                let shape = self.shape(inputs[0]).to_vec();
                let n = F::from_f64(self.value(inputs[0]).numel() as f64);
                let b = self.unary(Op::BroadcastScalar { shape }, g)?;
                vec![(inputs[0], self.scalar_mul(F::one() / n, b)?)]
            }
            Op::FrobeniusSq => {
                let shape = self.shape(inputs[0]).to_vec();
                let b = self.unary(Op::BroadcastScalar { shape }, g)?;
                let xb = self.mul(inputs[0], b)?;
                vec![(inputs[0], self.scalar_mul(F::from_f64(2.0), xb)?)]
            }
            Op::SumPerSample => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![(inputs[0], self.unary(Op::BroadcastPerSample { shape }, g)?)]
            }
            Op::BroadcastScalar { .. } => vec![(inputs[0], self.sum_all(g)?)],
            Op::BroadcastPerSample { .. } => vec![(inputs[0], self.sum_per_sample(g)?)],
            Op::Reshape { .. } => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![(inputs[0], self.reshape(g, shape)?)]
            }
            Op::Pad2d(p) => vec![(inputs[0], self.crop2d(g, *p)?)],
            Op::Crop2d(p) => vec![(inputs[0], self.pad2d(g, *p)?)],
            Op::RepeatChannels(times) => vec![(inputs[0], self.unary(Op::FoldChannels(*times), g)?)],
            Op::FoldChannels(times) => vec![(inputs[0], self.unary(Op::RepeatChannels(*times), g)?)],
        };
        Ok(out)
    }

    fn push_conv_input_grad(
        &mut self,
        g: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
    ) -> NodeId {
        let op = Op::ConvInputGrad { stride, pad, in_h, in_w };
        let value = eval_op(&op, &[self.value(g), self.value(w)]);
        self.push(op, vec![g, w], value)
    }

    fn push_conv_weight_grad(
        &mut self,
        x: NodeId,
        g: NodeId,
        stride: usize,
        pad: usize,
        kh: usize,
        kw: usize,
    ) -> NodeId {
        let op = Op::ConvWeightGrad { stride, pad, kh, kw };
        let value = eval_op(&op, &[self.value(x), self.value(g)]);
        self.push(op, vec![x, g], value)
    }
}

/// 1 where x > 0, `slope` elsewhere (including exactly 0).
fn step_mask<F: Scalar>(x: &Tensor<F>, slope: F) -> Tensor<F> {
    x.map(|v| if v > F::zero() { F::one() } else { slope })
}

/// Forward evaluation of one op over resolved input tensors. Shared by the
/// tape builders and the untaped network evaluators.
pub fn eval_op<F: Scalar>(op: &Op<F>, inputs: &[&Tensor<F>]) -> Tensor<F> {
    match op {
        Op::Leaf(_) => unreachable!("leaves are not evaluated"),
        Op::Add => zip_map(inputs[0], inputs[1], |a, b| a + b),
        Op::Sub => zip_map(inputs[0], inputs[1], |a, b| a - b),
        Op::Mul => zip_map(inputs[0], inputs[1], |a, b| a * b),
        Op::ScalarMul(c) => inputs[0].map(|v| v * *c),
        Op::AddScalar(c) => inputs[0].map(|v| v + *c),
        Op::Square => inputs[0].map(|v| v * v),
        Op::Sqrt => inputs[0].map(|v| v.sqrt()),
        Op::Recip => inputs[0].map(|v| F::one() / v),
        Op::Ln => inputs[0].map(|v| v.ln()),
        Op::Sigmoid => inputs[0].map(|v| F::one() / (F::one() + (-v).exp())),
        Op::Relu => inputs[0].map(|v| if v > F::zero() { v } else { F::zero() }),
        Op::LeakyRelu(s) => {
            let s = *s;
            inputs[0].map(|v| if v > F::zero() { v } else { v * s })
        }
        Op::Clamp(lo, hi) => {
            let (lo, hi) = (*lo, *hi);
            inputs[0].map(|v| if v < lo { lo } else if v > hi { hi } else { v })
        }
        Op::MatMul { ta, tb } => {
            let a = inputs[0];
            let b = inputs[1];
            let sa = a.shape();
            let sb = b.shape();
            let (m, kk) = if *ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
            let n = if *tb { sb[0] } else { sb[1] };
            let mut c = vec![F::zero(); m * n];
            F::gemm(*ta, *tb, m, kk, n, F::one(), a.data(), b.data(), F::zero(), &mut c);
            Tensor::new(vec![m, n], c)
        }
        Op::Conv2d { stride, pad } => k::conv2d(inputs[0], inputs[1], *stride, *pad),
        Op::ConvInputGrad { stride, pad, in_h, in_w } => {
            k::conv2d_input_grad(inputs[0], inputs[1], *stride, *pad, *in_h, *in_w)
        }
        Op::ConvWeightGrad { stride, pad, kh, kw } => {
            k::conv2d_weight_grad(inputs[0], inputs[1], *stride, *pad, *kh, *kw)
        }
        Op::BiasAdd => k::bias_add(inputs[0], inputs[1]),
        Op::SumToBias => k::sum_to_bias(inputs[0]),
        Op::BroadcastBias { shape } => k::broadcast_bias(inputs[0], shape),
        Op::SumAll => k::sum_all(inputs[0]),
        Op::MeanAll => k::mean_all(inputs[0]),
        Op::FrobeniusSq => k::frobenius_sq(inputs[0]),
        Op::SumPerSample => k::sum_per_sample(inputs[0]),
        Op::BroadcastScalar { shape } => k::broadcast_scalar(inputs[0], shape),
        Op::BroadcastPerSample { shape } => k::broadcast_per_sample(inputs[0], shape),
        Op::Reshape { shape } => inputs[0].clone().reshaped(shape.clone()),
        Op::Pad2d(p) => k::pad2d(inputs[0], *p),
        Op::Crop2d(p) => k::crop2d(inputs[0], *p),
        Op::RepeatChannels(times) => k::repeat_channels(inputs[0], *times),
        Op::FoldChannels(times) => k::fold_channels(inputs[0], *times),
    }
}

fn zip_map<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data().iter()).map(|(&x, &y)| f(x, y)).collect(),
    )
}
