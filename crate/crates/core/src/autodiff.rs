//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Values are eagerly computed `f32` tensors (`ArrayD<f32>`). Backward passes
//! emit new tape nodes instead of raw arrays, so a gradient is itself a
//! differentiable function of the graph inputs and second-order quantities
//! (gradient penalties) come out exact rather than approximated.
//!
//! All kernels are single-threaded with a fixed iteration order: two runs over
//! the same inputs produce bit-identical outputs.

use ndarray::{ArrayD, Axis, IxDyn};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f32),
    AddScalar(NodeId, f32),
    Powf(NodeId, f32),
    LeakyRelu(NodeId, f32),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Clamp(NodeId, f32, f32),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    Expand(NodeId),
    SumTo(NodeId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
    },
    ConvBackInput {
        gy: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
        in_hw: (usize, usize),
    },
    ConvBackWeight {
        gy: NodeId,
        x: NodeId,
        stride: usize,
        pad: usize,
        kernel: (usize, usize),
    },
    Upsample2x(NodeId),
    Upsample2xAdjoint(NodeId),
    AvgPool2(NodeId),
    AvgPool2Adjoint(NodeId),
}

struct Node {
    value: ArrayD<f32>,
    op: Op,
    needs_grad: bool,
}

/// A define-by-run computation tape.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f32> {
        &self.nodes[id.idx()].value
    }

    pub fn scalar(&self, id: NodeId) -> f32 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1);
        v.iter().copied().next().unwrap()
    }

    fn push(&mut self, value: ArrayD<f32>, op: Op, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.idx()].needs_grad
    }

    /// Inserts a tensor that participates in differentiation.
    pub fn var(&mut self, value: ArrayD<f32>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Inserts a tensor treated as a constant.
    pub fn constant(&mut self, value: ArrayD<f32>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_const(&mut self, v: f32) -> NodeId {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    // --- elementwise -----------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.idx()].value + &self.nodes[b.idx()].value;
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.idx()].value * &self.nodes[b.idx()].value;
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.idx()].value.mapv(|x| -x);
        let ng = self.needs(a);
        self.push(v, Op::Neg(a), ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> NodeId {
        let v = self.nodes[a.idx()].value.mapv(|x| c * x);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f32) -> NodeId {
        let v = self.nodes[a.idx()].value.mapv(|x| x + c);
        let ng = self.needs(a);
        self.push(v, Op::AddScalar(a, c), ng)
    }

    pub fn powf(&mut self, a: NodeId, p: f32) -> NodeId {
        let v = self.nodes[a.idx()].value.mapv(|x| x.powf(p));
        let ng = self.needs(a);
        self.push(v, Op::Powf(a, p), ng)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f32) -> NodeId {
        let v = self.nodes[a.idx()]
            .value
            .mapv(|x| if x >= 0.0 { x } else { slope * x });
        let ng = self.needs(a);
        self.push(v, Op::LeakyRelu(a, slope), ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.idx()].value.mapv(sigmoid_f);
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.idx()]
            .value
            .mapv(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        let ng = self.needs(a);
        self.push(v, Op::Softplus(a), ng)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f32, hi: f32) -> NodeId {
        let v = self.nodes[a.idx()].value.mapv(|x| x.clamp(lo, hi));
        let ng = self.needs(a);
        self.push(v, Op::Clamp(a, lo, hi), ng)
    }

    // --- shape -----------------------------------------------------------

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let src = &self.nodes[a.idx()].value;
        assert_eq!(
            src.len(),
            shape.iter().product::<usize>(),
            "reshape element count mismatch"
        );
        let data: Vec<f32> = src.iter().copied().collect();
        let v = ArrayD::from_shape_vec(IxDyn(shape), data).unwrap();
        let ng = self.needs(a);
        self.push(v, Op::Reshape(a), ng)
    }

    /// Numpy-style broadcast to `shape` (right-aligned, size-1 axes repeat).
    pub fn expand(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let v = self.nodes[a.idx()]
            .value
            .broadcast(IxDyn(shape))
            .unwrap_or_else(|| panic!("cannot broadcast {:?} to {:?}", self.nodes[a.idx()].value.shape(), shape))
            .to_owned();
        let ng = self.needs(a);
        self.push(v, Op::Expand(a), ng)
    }

    /// Sum-reduce to `shape`, the adjoint of [`Graph::expand`].
    pub fn sum_to(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let v = sum_to_val(&self.nodes[a.idx()].value, shape);
        let ng = self.needs(a);
        self.push(v, Op::SumTo(a), ng)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        self.sum_to(a, &[])
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a.idx()].value.len();
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f32)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.mean_all(sq)
    }

    // --- linear algebra ---------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_val(&self.nodes[a.idx()].value, &self.nodes[b.idx()].value);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Matmul(a, b), ng)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a.idx()].value;
        assert_eq!(src.ndim(), 2);
        let v = src.t().to_owned().into_dyn();
        let ng = self.needs(a);
        self.push(v, Op::Transpose(a), ng)
    }

    // --- spatial -----------------------------------------------------------

    /// 2-D convolution, `x: [N,C,H,W]`, `w: [O,C,kh,kw]`, symmetric zero padding.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> NodeId {
        let v = conv2d_val(
            &self.nodes[x.idx()].value,
            &self.nodes[w.idx()].value,
            stride,
            pad,
        );
        let ng = self.needs(x) || self.needs(w);
        self.push(v, Op::Conv2d { x, w, stride, pad }, ng)
    }

    fn conv_back_input(
        &mut self,
        gy: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
        in_hw: (usize, usize),
    ) -> NodeId {
        let v = conv2d_back_input_val(
            &self.nodes[gy.idx()].value,
            &self.nodes[w.idx()].value,
            stride,
            pad,
            in_hw,
        );
        let ng = self.needs(gy) || self.needs(w);
        self.push(
            v,
            Op::ConvBackInput {
                gy,
                w,
                stride,
                pad,
                in_hw,
            },
            ng,
        )
    }

    fn conv_back_weight(
        &mut self,
        gy: NodeId,
        x: NodeId,
        stride: usize,
        pad: usize,
        kernel: (usize, usize),
    ) -> NodeId {
        let v = conv2d_back_weight_val(
            &self.nodes[gy.idx()].value,
            &self.nodes[x.idx()].value,
            stride,
            pad,
            kernel,
        );
        let ng = self.needs(gy) || self.needs(x);
        self.push(
            v,
            Op::ConvBackWeight {
                gy,
                x,
                stride,
                pad,
                kernel,
            },
            ng,
        )
    }

    /// Bilinear 2x upsampling (half-pixel centers, edges clamped), `[N,C,H,W]`.
    pub fn upsample2x(&mut self, a: NodeId) -> NodeId {
        let v = upsample2x_val(&self.nodes[a.idx()].value);
        let ng = self.needs(a);
        self.push(v, Op::Upsample2x(a), ng)
    }

    fn upsample2x_adjoint(&mut self, a: NodeId) -> NodeId {
        let v = upsample2x_adjoint_val(&self.nodes[a.idx()].value);
        let ng = self.needs(a);
        self.push(v, Op::Upsample2xAdjoint(a), ng)
    }

    /// 2x2 mean pooling with stride 2, `[N,C,H,W]` with even H and W.
    pub fn avg_pool2(&mut self, a: NodeId) -> NodeId {
        let v = avg_pool2_val(&self.nodes[a.idx()].value);
        let ng = self.needs(a);
        self.push(v, Op::AvgPool2(a), ng)
    }

    fn avg_pool2_adjoint(&mut self, a: NodeId) -> NodeId {
        let v = avg_pool2_adjoint_val(&self.nodes[a.idx()].value);
        let ng = self.needs(a);
        self.push(v, Op::AvgPool2Adjoint(a), ng)
    }

    // --- backward ----------------------------------------------------------

    /// Reverse sweep from a scalar `root`. Returns one gradient node per `wrt`
    /// entry (`None` when the root does not depend on it). The returned nodes
    /// live on the same tape and can be differentiated again.
    pub fn grad(&mut self, root: NodeId, wrt: &[NodeId]) -> Vec<Option<NodeId>> {
        assert_eq!(
            self.nodes[root.idx()].value.len(),
            1,
            "grad root must be scalar"
        );
        let n = root.idx() + 1;
        let mut adj: Vec<Option<NodeId>> = vec![None; n];
        let seed = {
            let shape = self.nodes[root.idx()].value.shape().to_vec();
            self.constant(ArrayD::from_elem(IxDyn(&shape), 1.0))
        };
        adj[root.idx()] = Some(seed);

        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accum(&mut adj, a, g);
                    self.accum(&mut adj, b, g);
                }
                Op::Mul(a, b) => {
                    if self.needs(a) {
                        let ga = self.mul(g, b);
                        self.accum(&mut adj, a, ga);
                    }
                    if self.needs(b) {
                        let gb = self.mul(g, a);
                        self.accum(&mut adj, b, gb);
                    }
                }
                Op::Neg(a) => {
                    let ga = self.neg(g);
                    self.accum(&mut adj, a, ga);
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c);
                    self.accum(&mut adj, a, ga);
                }
                Op::AddScalar(a, _) => {
                    self.accum(&mut adj, a, g);
                }
                Op::Powf(a, p) => {
                    let d = self.powf(a, p - 1.0);
                    let d = self.scale(d, p);
                    let ga = self.mul(g, d);
                    self.accum(&mut adj, a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let mask = self.nodes[a.idx()]
                        .value
                        .mapv(|x| if x >= 0.0 { 1.0 } else { slope });
                    let mask = self.constant(mask);
                    let ga = self.mul(g, mask);
                    self.accum(&mut adj, a, ga);
                }
                Op::Sigmoid(a) => {
                    let out = NodeId(i as u32);
                    let one_minus = self.neg(out);
                    let one_minus = self.add_scalar(one_minus, 1.0);
                    let d = self.mul(out, one_minus);
                    let ga = self.mul(g, d);
                    self.accum(&mut adj, a, ga);
                }
                Op::Softplus(a) => {
                    let s = self.sigmoid(a);
                    let ga = self.mul(g, s);
                    self.accum(&mut adj, a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let mask = self.nodes[a.idx()]
                        .value
                        .mapv(|x| if x >= lo && x <= hi { 1.0 } else { 0.0 });
                    let mask = self.constant(mask);
                    let ga = self.mul(g, mask);
                    self.accum(&mut adj, a, ga);
                }
                Op::Matmul(a, b) => {
                    if self.needs(a) {
                        let bt = self.transpose(b);
                        let ga = self.matmul(g, bt);
                        self.accum(&mut adj, a, ga);
                    }
                    if self.needs(b) {
                        let at = self.transpose(a);
                        let gb = self.matmul(at, g);
                        self.accum(&mut adj, b, gb);
                    }
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g);
                    self.accum(&mut adj, a, ga);
                }
                Op::Reshape(a) => {
                    let shape = self.nodes[a.idx()].value.shape().to_vec();
                    let ga = self.reshape(g, &shape);
                    self.accum(&mut adj, a, ga);
                }
                Op::Expand(a) => {
                    let shape = self.nodes[a.idx()].value.shape().to_vec();
                    let ga = self.sum_to(g, &shape);
                    self.accum(&mut adj, a, ga);
                }
                Op::SumTo(a) => {
                    let shape = self.nodes[a.idx()].value.shape().to_vec();
                    let ga = self.expand(g, &shape);
                    self.accum(&mut adj, a, ga);
                }
                Op::Conv2d { x, w, stride, pad } => {
                    if self.needs(x) {
                        let hw = {
                            let s = self.nodes[x.idx()].value.shape();
                            (s[2], s[3])
                        };
                        let gx = self.conv_back_input(g, w, stride, pad, hw);
                        self.accum(&mut adj, x, gx);
                    }
                    if self.needs(w) {
                        let k = {
                            let s = self.nodes[w.idx()].value.shape();
                            (s[2], s[3])
                        };
                        let gw = self.conv_back_weight(g, x, stride, pad, k);
                        self.accum(&mut adj, w, gw);
                    }
                }
                Op::ConvBackInput {
                    gy,
                    w,
                    stride,
                    pad,
                    ..
                } => {
                    if self.needs(gy) {
                        let ggy = self.conv2d(g, w, stride, pad);
                        self.accum(&mut adj, gy, ggy);
                    }
                    if self.needs(w) {
                        let k = {
                            let s = self.nodes[w.idx()].value.shape();
                            (s[2], s[3])
                        };
                        let gw = self.conv_back_weight(gy, g, stride, pad, k);
                        self.accum(&mut adj, w, gw);
                    }
                }
                Op::ConvBackWeight {
                    gy,
                    x,
                    stride,
                    pad,
                    ..
                } => {
                    if self.needs(gy) {
                        let ggy = self.conv2d(x, g, stride, pad);
                        self.accum(&mut adj, gy, ggy);
                    }
                    if self.needs(x) {
                        let hw = {
                            let s = self.nodes[x.idx()].value.shape();
                            (s[2], s[3])
                        };
                        let gx = self.conv_back_input(gy, g, stride, pad, hw);
                        self.accum(&mut adj, x, gx);
                    }
                }
                Op::Upsample2x(a) => {
                    let ga = self.upsample2x_adjoint(g);
                    self.accum(&mut adj, a, ga);
                }
                Op::Upsample2xAdjoint(a) => {
                    let ga = self.upsample2x(g);
                    self.accum(&mut adj, a, ga);
                }
                Op::AvgPool2(a) => {
                    let ga = self.avg_pool2_adjoint(g);
                    self.accum(&mut adj, a, ga);
                }
                Op::AvgPool2Adjoint(a) => {
                    let ga = self.avg_pool2(g);
                    self.accum(&mut adj, a, ga);
                }
            }
        }

        wrt.iter()
            .map(|id| {
                if id.idx() < n {
                    adj[id.idx()]
                } else {
                    None
                }
            })
            .collect()
    }

    fn accum(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contrib: NodeId) {
        if !self.needs(target) {
            return;
        }
        adj[target.idx()] = Some(match adj[target.idx()] {
            Some(prev) => self.add(prev, contrib),
            None => contrib,
        });
    }
}

fn sigmoid_f(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// --- value kernels ---------------------------------------------------------

fn sum_to_val(x: &ArrayD<f32>, shape: &[usize]) -> ArrayD<f32> {
    let mut cur = x.to_owned();
    while cur.ndim() > shape.len() {
        cur = cur.sum_axis(Axis(0));
    }
    for ax in 0..shape.len() {
        if shape[ax] == 1 && cur.shape()[ax] != 1 {
            cur = cur.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        } else {
            assert_eq!(shape[ax], cur.shape()[ax], "sum_to incompatible shape");
        }
    }
    cur
}

fn matmul_val(a: &ArrayD<f32>, b: &ArrayD<f32>) -> ArrayD<f32> {
    assert_eq!(a.ndim(), 2);
    assert_eq!(b.ndim(), 2);
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    assert_eq!(k, k2, "matmul inner dimension mismatch");
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let (av, bv) = (a.as_slice().unwrap(), b.as_slice().unwrap());
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for l in 0..k {
            let ail = av[i * k + l];
            let brow = &bv[l * n..(l + 1) * n];
            for j in 0..n {
                orow[j] += ail * brow[j];
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[m, n]), out).unwrap()
}

fn dims4(x: &ArrayD<f32>) -> (usize, usize, usize, usize) {
    assert_eq!(x.ndim(), 4, "expected a 4-d tensor, got {:?}", x.shape());
    let s = x.shape();
    (s[0], s[1], s[2], s[3])
}

/// Copies `x` into a zero-padded buffer `[N,C,H+2p,W+2p]`.
fn pad_nchw(x: &ArrayD<f32>, pad: usize) -> (Vec<f32>, usize, usize) {
    let (n, c, h, w) = dims4(x);
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let xs = x.as_standard_layout();
    let xv = xs.as_slice().unwrap();
    let mut out = vec![0.0f32; n * c * ph * pw];
    for nc in 0..n * c {
        for y in 0..h {
            let src = &xv[nc * h * w + y * w..nc * h * w + y * w + w];
            let dst_off = nc * ph * pw + (y + pad) * pw + pad;
            out[dst_off..dst_off + w].copy_from_slice(src);
        }
    }
    (out, ph, pw)
}

fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

fn conv2d_val(x: &ArrayD<f32>, w: &ArrayD<f32>, stride: usize, pad: usize) -> ArrayD<f32> {
    let (n, c, h, wd) = dims4(x);
    let (o, c2, kh, kw) = dims4(w);
    assert_eq!(c, c2, "conv2d channel mismatch");
    let (oh, ow) = (
        conv_out_len(h, kh, stride, pad),
        conv_out_len(wd, kw, stride, pad),
    );
    let (xp, _ph, pw) = pad_nchw(x, pad);
    let ws = w.as_standard_layout();
    let wv = ws.as_slice().unwrap();
    let mut out = vec![0.0f32; n * o * oh * ow];
    let ph = h + 2 * pad;
    for ni in 0..n {
        for oi in 0..o {
            let obase = (ni * o + oi) * oh * ow;
            for ci in 0..c {
                let xbase = (ni * c + ci) * ph * pw;
                for ki in 0..kh {
                    for kj in 0..kw {
                        let wv0 = wv[((oi * c + ci) * kh + ki) * kw + kj];
                        for oy in 0..oh {
                            let xrow = xbase + (oy * stride + ki) * pw + kj;
                            let orow = obase + oy * ow;
                            if stride == 1 {
                                let xs = &xp[xrow..xrow + ow];
                                let os = &mut out[orow..orow + ow];
                                for ox in 0..ow {
                                    os[ox] += wv0 * xs[ox];
                                }
                            } else {
                                for ox in 0..ow {
                                    out[orow + ox] += wv0 * xp[xrow + ox * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, o, oh, ow]), out).unwrap()
}

fn conv2d_back_input_val(
    gy: &ArrayD<f32>,
    w: &ArrayD<f32>,
    stride: usize,
    pad: usize,
    in_hw: (usize, usize),
) -> ArrayD<f32> {
    let (n, o, oh, ow) = dims4(gy);
    let (o2, c, kh, kw) = dims4(w);
    assert_eq!(o, o2, "conv back-input channel mismatch");
    let (h, wd) = in_hw;
    let (ph, pw) = (h + 2 * pad, wd + 2 * pad);
    let gys = gy.as_standard_layout();
    let gv = gys.as_slice().unwrap();
    let ws = w.as_standard_layout();
    let wv = ws.as_slice().unwrap();
    let mut dxp = vec![0.0f32; n * c * ph * pw];
    for ni in 0..n {
        for oi in 0..o {
            let gbase = (ni * o + oi) * oh * ow;
            for ci in 0..c {
                let xbase = (ni * c + ci) * ph * pw;
                for ki in 0..kh {
                    for kj in 0..kw {
                        let wv0 = wv[((oi * c + ci) * kh + ki) * kw + kj];
                        for oy in 0..oh {
                            let grow = gbase + oy * ow;
                            let xrow = xbase + (oy * stride + ki) * pw + kj;
                            if stride == 1 {
                                let ds = &mut dxp[xrow..xrow + ow];
                                let gs = &gv[grow..grow + ow];
                                for ox in 0..ow {
                                    ds[ox] += wv0 * gs[ox];
                                }
                            } else {
                                for ox in 0..ow {
                                    dxp[xrow + ox * stride] += wv0 * gv[grow + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    // crop padding
    let mut dx = vec![0.0f32; n * c * h * wd];
    for nc in 0..n * c {
        for y in 0..h {
            let src = nc * ph * pw + (y + pad) * pw + pad;
            let dst = nc * h * wd + y * wd;
            dx[dst..dst + wd].copy_from_slice(&dxp[src..src + wd]);
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, h, wd]), dx).unwrap()
}

fn conv2d_back_weight_val(
    gy: &ArrayD<f32>,
    x: &ArrayD<f32>,
    stride: usize,
    pad: usize,
    kernel: (usize, usize),
) -> ArrayD<f32> {
    let (n, o, oh, ow) = dims4(gy);
    let (n2, c, h, _wd) = dims4(x);
    assert_eq!(n, n2, "conv back-weight batch mismatch");
    let (kh, kw) = kernel;
    let (xp, _ph, pw) = pad_nchw(x, pad);
    let ph = h + 2 * pad;
    let gys = gy.as_standard_layout();
    let gv = gys.as_slice().unwrap();
    let mut dw = vec![0.0f32; o * c * kh * kw];
    for oi in 0..o {
        for ci in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let mut acc = 0.0f32;
                    for ni in 0..n {
                        let gbase = (ni * o + oi) * oh * ow;
                        let xbase = (ni * c + ci) * ph * pw;
                        for oy in 0..oh {
                            let grow = gbase + oy * ow;
                            let xrow = xbase + (oy * stride + ki) * pw + kj;
                            if stride == 1 {
                                let gs = &gv[grow..grow + ow];
                                let xs = &xp[xrow..xrow + ow];
                                for ox in 0..ow {
                                    acc += gs[ox] * xs[ox];
                                }
                            } else {
                                for ox in 0..ow {
                                    acc += gv[grow + ox] * xp[xrow + ox * stride];
                                }
                            }
                        }
                    }
                    dw[((oi * c + ci) * kh + ki) * kw + kj] = acc;
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[o, c, kh, kw]), dw).unwrap()
}

/// Interpolation taps for one output axis of length `2*len`.
/// Output i samples input at i/2 - 0.25, edges clamped.
fn bilinear_taps(len: usize) -> Vec<(usize, usize, f32, f32)> {
    let mut taps = Vec::with_capacity(2 * len);
    for i in 0..2 * len {
        let src = 0.5 * i as f32 - 0.25;
        let base = src.floor();
        let frac = src - base;
        let i0 = (base.max(0.0) as usize).min(len - 1);
        let i1 = ((base + 1.0).max(0.0) as usize).min(len - 1);
        taps.push((i0, i1, 1.0 - frac, frac));
    }
    taps
}

fn upsample2x_val(x: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, h, w) = dims4(x);
    let xs = x.as_standard_layout();
    let xv = xs.as_slice().unwrap();
    let vt = bilinear_taps(h);
    let ht = bilinear_taps(w);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; n * c * oh * ow];
    for nc in 0..n * c {
        let xb = nc * h * w;
        let ob = nc * oh * ow;
        for (oy, &(y0, y1, wy0, wy1)) in vt.iter().enumerate() {
            let r0 = xb + y0 * w;
            let r1 = xb + y1 * w;
            let orow = ob + oy * ow;
            for (ox, &(x0, x1, wx0, wx1)) in ht.iter().enumerate() {
                let top = wx0 * xv[r0 + x0] + wx1 * xv[r0 + x1];
                let bot = wx0 * xv[r1 + x0] + wx1 * xv[r1 + x1];
                out[orow + ox] = wy0 * top + wy1 * bot;
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, oh, ow]), out).unwrap()
}

fn upsample2x_adjoint_val(g: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, oh, ow) = dims4(g);
    assert!(oh % 2 == 0 && ow % 2 == 0);
    let (h, w) = (oh / 2, ow / 2);
    let gs = g.as_standard_layout();
    let gv = gs.as_slice().unwrap();
    let vt = bilinear_taps(h);
    let ht = bilinear_taps(w);
    let mut out = vec![0.0f32; n * c * h * w];
    for nc in 0..n * c {
        let gb = nc * oh * ow;
        let ob = nc * h * w;
        for (oy, &(y0, y1, wy0, wy1)) in vt.iter().enumerate() {
            let grow = gb + oy * ow;
            for (ox, &(x0, x1, wx0, wx1)) in ht.iter().enumerate() {
                let gvv = gv[grow + ox];
                out[ob + y0 * w + x0] += wy0 * wx0 * gvv;
                out[ob + y0 * w + x1] += wy0 * wx1 * gvv;
                out[ob + y1 * w + x0] += wy1 * wx0 * gvv;
                out[ob + y1 * w + x1] += wy1 * wx1 * gvv;
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), out).unwrap()
}

fn avg_pool2_val(x: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, h, w) = dims4(x);
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial dims");
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.as_standard_layout();
    let xv = xs.as_slice().unwrap();
    let mut out = vec![0.0f32; n * c * oh * ow];
    for nc in 0..n * c {
        let xb = nc * h * w;
        let ob = nc * oh * ow;
        for oy in 0..oh {
            let r0 = xb + 2 * oy * w;
            let r1 = r0 + w;
            let orow = ob + oy * ow;
            for ox in 0..ow {
                out[orow + ox] =
                    0.25 * (xv[r0 + 2 * ox] + xv[r0 + 2 * ox + 1] + xv[r1 + 2 * ox] + xv[r1 + 2 * ox + 1]);
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, oh, ow]), out).unwrap()
}

fn avg_pool2_adjoint_val(g: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, oh, ow) = dims4(g);
    let (h, w) = (2 * oh, 2 * ow);
    let gs = g.as_standard_layout();
    let gv = gs.as_slice().unwrap();
    let mut out = vec![0.0f32; n * c * h * w];
    for nc in 0..n * c {
        let gb = nc * oh * ow;
        let ob = nc * h * w;
        for oy in 0..oh {
            let grow = gb + oy * ow;
            let r0 = ob + 2 * oy * w;
            let r1 = r0 + w;
            for ox in 0..ow {
                let v = 0.25 * gv[grow + ox];
                out[r0 + 2 * ox] += v;
                out[r0 + 2 * ox + 1] += v;
                out[r1 + 2 * ox] += v;
                out[r1 + 2 * ox + 1] += v;
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), out).unwrap()
}
