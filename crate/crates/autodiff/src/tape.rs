use crate::error::{shape_err, AutodiffError, Result};
use crate::kernels::{
    self, chunk_len, col2im_at, conv_out, conv_transpose_out, gather_channels, im2col_at, scatter_channels, Geometry,
};
use crate::param::{ParamId, ParamStore, StatUpdate};
use crate::real::{matmul, Real};
use crate::tensor::Tensor;
use std::collections::{BTreeMap, HashMap, HashSet};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and report them for the running averages.
    Train,
    /// Normalize with the stored running statistics.
    Eval,
}

pub const BN_EPS: f64 = 1e-5;
/// Probability clamp used by the cross-entropy style losses.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, k: Var, b: Option<Var>, g: Geometry },
    ConvTranspose2d { x: Var, k: Var, b: Option<Var>, g: Geometry },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    AvgPool2 { x: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    Dense { x: Var, w: Var, b: Option<Var> },
    Concat { a: Var, b: Var },
    ConcatBatch { a: Var, b: Var },
    SliceBatch { x: Var, start: usize },
    Reshape { x: Var },
    Patches { x: Var, size: usize },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: T },
    Square { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    Focal { p: Var, target: Vec<T>, alpha: T, gamma: T },
    Bce { p: Var, target: Vec<T> },
    FocalLogits { z: Var, target: Vec<T>, alpha: T, gamma: T },
    BceLogits { z: Var, target: Vec<T> },
}

struct Node<T> {
    op: Op<T>,
    value: Option<Tensor<T>>,
    tracked: bool,
}

/// Ordered record of executed operations over parameters borrowed from a store.
pub struct Tape<'s, T: Real> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    bound: HashMap<ParamId, Var>,
    frozen: HashSet<ParamId>,
    stats: Vec<StatUpdate<T>>,
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to a recorded value, if it influenced the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().map(|(&id, t)| (id, t))
    }

    /// Adds parameter gradients into the store, restricted to ids accepted by `keep`.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>, keep: impl Fn(ParamId) -> bool) -> Result<()> {
        for (&id, g) in &self.params {
            if keep(id) {
                store.accumulate(id, g)?;
            }
        }
        Ok(())
    }
}

fn add_into<T: Real>(slot: &mut Option<Vec<T>>, len: usize, f: impl FnOnce(&mut [T])) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    f(buf);
}

impl<'s, T: Real> Tape<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Tape { store, nodes: Vec::new(), bound: HashMap::new(), frozen: HashSet::new(), stats: Vec::new() }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, tracked: bool) -> Var {
        self.nodes.push(Node { op, value: Some(value), tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn any_tracked(&self, vs: &[Option<Var>]) -> bool {
        vs.iter().flatten().any(|&v| self.tracked(v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// A constant that never receives gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// Copy of `v` cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    /// Parameters bound after this call act as constants: gradients still flow
    /// through them to their inputs but are not computed for the parameters.
    pub fn freeze(&mut self, ids: impl IntoIterator<Item = ParamId>) {
        self.frozen.extend(ids);
    }

    /// Binds a stored parameter; binding the same id twice returns the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let tracked = !self.frozen.contains(&id);
        self.nodes.push(Node { op: Op::Param(id), value: None, tracked });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        v
    }

    /// Batch statistics collected by training-mode batch norms so far.
    pub fn into_stat_updates(self) -> Vec<StatUpdate<T>> {
        self.stats
    }

    pub fn stat_updates(&self) -> &[StatUpdate<T>] {
        &self.stats
    }

    fn check_bias(&self, b: Option<Var>, channels: usize, op: &'static str) -> Result<()> {
        if let Some(b) = b {
            if self.value(b).len() != channels {
                return shape_err(op, format!("bias has {} entries for {channels} channels", self.value(b).len()));
            }
        }
        Ok(())
    }

    /// Cross-correlation with zero padding. Kernel shape is (Cout, Cin, kh, kw).
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("conv2d")?;
        let (co, ci, kh, kw) = self.value(k).dims4("conv2d")?;
        if ci != c {
            return shape_err("conv2d", format!("input has {c} channels, kernel expects {ci}"));
        }
        self.check_bias(b, co, "conv2d")?;
        let (Some(oh), Some(ow)) = (conv_out(h, kh, stride, pad), conv_out(w, kw, stride, pad)) else {
            return shape_err("conv2d", format!("{kh}x{kw} window does not fit {h}x{w} with padding {pad}"));
        };
        let g = Geometry { channels: c, height: h, width: w, kh, kw, stride, pad, out_h: oh, out_w: ow };
        let mut out = vec![T::zero(); n * co * oh * ow];
        {
            let (plane, chw) = (g.cols(), c * h * w);
            let cs = chunk_len(g.rows() * plane, n);
            let mut cols = vec![T::zero(); g.rows() * cs * plane];
            let mut tmp = vec![T::zero(); co * cs * plane];
            let xv = self.value(x).data();
            let kv = self.value(k).data();
            for s0 in (0..n).step_by(cs) {
                let m = cs.min(n - s0);
                let ld = m * plane;
                for j in 0..m {
                    im2col_at(&xv[(s0 + j) * chw..(s0 + j + 1) * chw], &g, &mut cols, ld, j * plane);
                }
                matmul(co, g.rows(), ld, kv, false, &cols[..g.rows() * ld], false, &mut tmp[..co * ld], false);
                scatter_channels(&tmp[..co * ld], m, co, plane, &mut out[s0 * co * plane..(s0 + m) * co * plane]);
            }
            if let Some(b) = b {
                add_channel_bias(&mut out, self.value(b).data(), n, co, oh * ow);
            }
        }
        let tracked = self.any_tracked(&[Some(x), Some(k), b]);
        let t = Tensor::new(&[n, co, oh, ow], out)?;
        Ok(self.push(Op::Conv2d { x, k, b, g }, t, tracked))
    }

    /// Transposed convolution (adjoint of [`Tape::conv2d`]). Kernel shape is (Cin, Cout, kh, kw).
    pub fn conv_transpose2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("conv_transpose2d")?;
        let (ci, co, kh, kw) = self.value(k).dims4("conv_transpose2d")?;
        if ci != c {
            return shape_err("conv_transpose2d", format!("input has {c} channels, kernel expects {ci}"));
        }
        self.check_bias(b, co, "conv_transpose2d")?;
        let (Some(oh), Some(ow)) = (conv_transpose_out(h, kh, stride, pad), conv_transpose_out(w, kw, stride, pad))
        else {
            return shape_err("conv_transpose2d", "empty output");
        };
        // geometry of the equivalent forward convolution mapping the output back to the input
        let g = Geometry { channels: co, height: oh, width: ow, kh, kw, stride, pad, out_h: h, out_w: w };
        let mut out = vec![T::zero(); n * co * oh * ow];
        {
            let (hw, out_plane) = (h * w, co * oh * ow);
            let cs = chunk_len(g.rows() * hw, n);
            let mut cols = vec![T::zero(); g.rows() * cs * hw];
            let mut xc = vec![T::zero(); c * cs * hw];
            let xv = self.value(x).data();
            let kv = self.value(k).data();
            for s0 in (0..n).step_by(cs) {
                let m = cs.min(n - s0);
                let ld = m * hw;
                gather_channels(&xv[s0 * c * hw..(s0 + m) * c * hw], m, c, hw, &mut xc);
                matmul(g.rows(), c, ld, kv, true, &xc[..c * ld], false, &mut cols[..g.rows() * ld], false);
                for j in 0..m {
                    let dst = &mut out[(s0 + j) * out_plane..(s0 + j + 1) * out_plane];
                    col2im_at(&cols, &g, dst, ld, j * hw);
                }
            }
            if let Some(b) = b {
                add_channel_bias(&mut out, self.value(b).data(), n, co, oh * ow);
            }
        }
        let tracked = self.any_tracked(&[Some(x), Some(k), b]);
        let t = Tensor::new(&[n, co, oh, ow], out)?;
        Ok(self.push(Op::ConvTranspose2d { x, k, b, g }, t, tracked))
    }

    /// 2x2 max pooling with stride 2; ties go to the first element in scan order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("max_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(AutodiffError::OddDimensions { op: "max_pool2", height: h, width: w });
        }
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let tracked = self.tracked(x);
        let t = Tensor::new(&[n, c, oh, ow], out)?;
        Ok(self.push(Op::MaxPool2 { x, argmax }, t, tracked))
    }

    /// 2x2 average pooling with stride 2.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("avg_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(AutodiffError::OddDimensions { op: "avg_pool2", height: h, width: w });
        }
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::lit(0.25);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let i = base + 2 * oy * w + 2 * ox;
                    out.push((xv[i] + xv[i + 1] + xv[i + w] + xv[i + w + 1]) * quarter);
                }
            }
        }
        let tracked = self.tracked(x);
        let t = Tensor::new(&[n, c, oh, ow], out)?;
        Ok(self.push(Op::AvgPool2 { x }, t, tracked))
    }

    /// Per-channel batch normalization over (N, H, W) with an affine transform.
    ///
    /// In training mode the batch statistics are recorded (variance unbiased) for
    /// [`ParamStore::apply_stat_updates`]; `running` holds the (mean, var) parameter ids.
    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (ParamId, ParamId),
        mode: BnMode,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("batch_norm2d")?;
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return shape_err("batch_norm2d", format!("affine parameters do not have {c} entries"));
        }
        let hw = h * w;
        let m = n * hw;
        let eps = T::lit(BN_EPS);
        let train = mode == BnMode::Train;
        if train && m <= 1 {
            return Err(AutodiffError::DegenerateBatch);
        }
        let xv = self.value(x).data();
        let (mean, var) = if train {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            let mf = T::from_usize(m).unwrap();
            for ch in 0..c {
                let mut acc = T::zero();
                for s in 0..n {
                    acc += xv[(s * c + ch) * hw..(s * c + ch + 1) * hw].iter().copied().sum::<T>();
                }
                let mu = acc / mf;
                let mut sq = T::zero();
                for s in 0..n {
                    for &v in &xv[(s * c + ch) * hw..(s * c + ch + 1) * hw] {
                        sq += (v - mu) * (v - mu);
                    }
                }
                mean[ch] = mu;
                var[ch] = sq / mf;
            }
            (mean, var)
        } else {
            (self.store.value(running.0).data().to_vec(), self.store.value(running.1).data().to_vec())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![T::zero(); n * c * hw];
        let mut out = vec![T::zero(); n * c * hw];
        for s in 0..n {
            for ch in 0..c {
                let r = (s * c + ch) * hw..(s * c + ch + 1) * hw;
                for i in r {
                    let xh = (xv[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        if train {
            let unbias = T::from_usize(m).unwrap() / T::from_usize(m - 1).unwrap();
            self.stats.push(StatUpdate {
                mean_id: running.0,
                var_id: running.1,
                mean,
                var: var.iter().map(|&v| v * unbias).collect(),
            });
        }
        let tracked = self.any_tracked(&[Some(x), Some(gamma), Some(beta)]);
        let t = Tensor::new(&[n, c, h, w], out)?;
        Ok(self.push(Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, t, tracked))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let slope = T::lit(slope);
        let t = self.value(x).map(|v| if v >= T::zero() { v } else { slope * v });
        let tracked = self.tracked(x);
        Ok(self.push(Op::LeakyRelu { x, slope }, t, tracked))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(kernels::sigmoid);
        let tracked = self.tracked(x);
        Ok(self.push(Op::Sigmoid { x }, t, tracked))
    }

    /// `y = x w^T + b` for x of shape (N, F) and w of shape (O, F).
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (&[n, f], &[o, fi]) = (&xs[..], &ws[..]) else {
            return shape_err("dense", format!("input {xs:?} and weight {ws:?} must both be 2-D"));
        };
        if f != fi {
            return shape_err("dense", format!("input width {f} does not match weight width {fi}"));
        }
        self.check_bias(b, o, "dense")?;
        let mut out = vec![T::zero(); n * o];
        matmul(n, f, o, self.value(x).data(), false, self.value(w).data(), true, &mut out, false);
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(o) {
                row.iter_mut().zip(bv).for_each(|(a, &bb)| *a += bb);
            }
        }
        let tracked = self.any_tracked(&[Some(x), Some(w), b]);
        let t = Tensor::new(&[n, o], out)?;
        Ok(self.push(Op::Dense { x, w, b }, t, tracked))
    }

    /// Concatenates two NCHW tensors along channels.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4("concat_channels")?;
        let (nb, cb, hb, wb) = self.value(b).dims4("concat_channels")?;
        if (n, h, w) != (nb, hb, wb) {
            return shape_err("concat_channels", format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * hw);
        for s in 0..n {
            out.extend_from_slice(&self.value(a).data()[s * ca * hw..(s + 1) * ca * hw]);
            out.extend_from_slice(&self.value(b).data()[s * cb * hw..(s + 1) * cb * hw]);
        }
        let tracked = self.any_tracked(&[Some(a), Some(b)]);
        let t = Tensor::new(&[n, ca + cb, h, w], out)?;
        Ok(self.push(Op::Concat { a, b }, t, tracked))
    }

    /// Stacks `b` after `a` along the leading axis.
    pub fn concat_batch(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.is_empty() || sa.len() != sb.len() || sa[1..] != sb[1..] {
            return shape_err("concat_batch", format!("{sa:?} vs {sb:?}"));
        }
        let mut shape = sa.to_vec();
        shape[0] += sb[0];
        let mut out = self.value(a).data().to_vec();
        out.extend_from_slice(self.value(b).data());
        let tracked = self.any_tracked(&[Some(a), Some(b)]);
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(Op::ConcatBatch { a, b }, t, tracked))
    }

    /// Samples `start..start + len` along the leading axis.
    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() || len == 0 || start + len > s[0] {
            return shape_err("slice_batch", format!("{start}..{} of {s:?}", start + len));
        }
        let per: usize = s[1..].iter().product();
        let mut shape = s;
        shape[0] = len;
        let t = Tensor::new(&shape, self.value(x).data()[start * per..(start + len) * per].to_vec())?;
        let tracked = self.tracked(x);
        Ok(self.push(Op::SliceBatch { x, start }, t, tracked))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let tracked = self.tracked(x);
        Ok(self.push(Op::Reshape { x }, t, tracked))
    }

    /// Flattens (N, ...) to (N, rest).
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let n = *s.first().ok_or_else(|| AutodiffError::Invalid("flatten of a scalar".into()))?;
        let rest = s[1..].iter().product();
        self.reshape(x, &[n, rest])
    }

    /// Cuts each (C, H, W) sample into non-overlapping `size x size` patches in row-major order.
    /// Output shape is (N * (H/size) * (W/size), C, size, size).
    pub fn patches(&mut self, x: Var, size: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("patches")?;
        if size == 0 || h % size != 0 || w % size != 0 {
            return shape_err("patches", format!("{h}x{w} is not divisible by {size}"));
        }
        let (ph, pw) = (h / size, w / size);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(xv.len());
        for s in 0..n {
            for py in 0..ph {
                for px in 0..pw {
                    for ch in 0..c {
                        for y in 0..size {
                            let start = ((s * c + ch) * h + py * size + y) * w + px * size;
                            out.extend_from_slice(&xv[start..start + size]);
                        }
                    }
                }
            }
        }
        let tracked = self.tracked(x);
        let t = Tensor::new(&[n * ph * pw, c, size, size], out)?;
        Ok(self.push(Op::Patches { x, size }, t, tracked))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut t = self.value(a).clone();
        t.data_mut().iter_mut().zip(self.value(b).data()).for_each(|(x, &y)| *x += y);
        let tracked = self.any_tracked(&[Some(a), Some(b)]);
        Ok(self.push(Op::Add { a, b }, t, tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut t = self.value(a).clone();
        t.data_mut().iter_mut().zip(self.value(b).data()).for_each(|(x, &y)| *x *= y);
        let tracked = self.any_tracked(&[Some(a), Some(b)]);
        Ok(self.push(Op::Mul { a, b }, t, tracked))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::lit(c);
        let t = self.value(x).map(|v| v * c);
        let tracked = self.tracked(x);
        Ok(self.push(Op::Scale { x, c }, t, tracked))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v * v);
        let tracked = self.tracked(x);
        Ok(self.push(Op::Square { x }, t, tracked))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(x).sum());
        let tracked = self.tracked(x);
        Ok(self.push(Op::Sum { x }, t, tracked))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let len = self.value(x).len();
        if len == 0 {
            return Err(AutodiffError::Invalid("mean of an empty tensor".into()));
        }
        let t = Tensor::scalar(self.value(x).sum() / T::from_usize(len).unwrap());
        let tracked = self.tracked(x);
        Ok(self.push(Op::Mean { x }, t, tracked))
    }

    fn loss_target(&self, p: Var, target: &Tensor<T>, op: &'static str) -> Result<Vec<T>> {
        if self.value(p).len() != target.len() || self.value(p).is_empty() {
            return shape_err(op, format!("prediction {:?} vs target {:?}", self.shape(p), target.shape()));
        }
        if target.data().iter().any(|&t| t != T::zero() && t != T::one()) {
            return Err(AutodiffError::Target);
        }
        Ok(target.data().to_vec())
    }

    /// Mean over elements of `-alpha (1 - p_t)^gamma ln p_t`, with p clamped to [1e-7, 1 - 1e-7].
    pub fn focal_loss(&mut self, p: Var, target: &Tensor<T>, alpha: f64, gamma: f64) -> Result<Var> {
        let target = self.loss_target(p, target, "focal_loss")?;
        let (alpha, gamma) = (T::lit(alpha), T::lit(gamma));
        let total: T = self
            .value(p)
            .data()
            .iter()
            .zip(&target)
            .map(|(&pv, &t)| {
                let pt = p_t(clamp_prob(pv), t);
                -alpha * (T::one() - pt).powf(gamma) * pt.ln()
            })
            .sum();
        let v = total / T::from_usize(target.len()).unwrap();
        let tracked = self.tracked(p);
        Ok(self.push(Op::Focal { p, target, alpha, gamma }, Tensor::scalar(v), tracked))
    }

    /// Mean binary cross entropy with p clamped to [1e-7, 1 - 1e-7].
    pub fn bce_loss(&mut self, p: Var, target: &Tensor<T>) -> Result<Var> {
        let target = self.loss_target(p, target, "bce_loss")?;
        let total: T = self
            .value(p)
            .data()
            .iter()
            .zip(&target)
            .map(|(&pv, &t)| -p_t(clamp_prob(pv), t).ln())
            .sum();
        let v = total / T::from_usize(target.len()).unwrap();
        let tracked = self.tracked(p);
        Ok(self.push(Op::Bce { p, target }, Tensor::scalar(v), tracked))
    }

    /// Focal loss on logits. The value equals `focal_loss(sigmoid(z))`, but the gradient is taken
    /// analytically in logit space so it does not vanish when the sigmoid saturates.
    pub fn focal_loss_logits(&mut self, z: Var, target: &Tensor<T>, alpha: f64, gamma: f64) -> Result<Var> {
        let target = self.loss_target(z, target, "focal_loss_logits")?;
        let (alpha, gamma) = (T::lit(alpha), T::lit(gamma));
        let total: T = self
            .value(z)
            .data()
            .iter()
            .zip(&target)
            .map(|(&zv, &t)| {
                let pt = clamp_prob(sigmoid(signed(zv, t)));
                -alpha * (T::one() - pt).powf(gamma) * pt.ln()
            })
            .sum();
        let v = total / T::from_usize(target.len()).unwrap();
        let tracked = self.tracked(z);
        Ok(self.push(Op::FocalLogits { z, target, alpha, gamma }, Tensor::scalar(v), tracked))
    }

    /// Binary cross entropy on logits, valued as `bce_loss(sigmoid(z))`.
    pub fn bce_loss_logits(&mut self, z: Var, target: &Tensor<T>) -> Result<Var> {
        let target = self.loss_target(z, target, "bce_loss_logits")?;
        let total: T = self
            .value(z)
            .data()
            .iter()
            .zip(&target)
            .map(|(&zv, &t)| -clamp_prob(sigmoid(signed(zv, t))).ln())
            .sum();
        let v = total / T::from_usize(target.len()).unwrap();
        let tracked = self.tracked(z);
        Ok(self.push(Op::BceLogits { z, target }, Tensor::scalar(v), tracked))
    }

    /// Reverse pass from a scalar loss. Gradients of parameters bound more than once are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backward_node(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        let mut params = BTreeMap::new();
        let mut nodes = Vec::with_capacity(grads.len());
        for (i, g) in grads.into_iter().enumerate() {
            let t = g.map(|g| Tensor::new(self.value(Var(i)).shape(), g).expect("gradient shape"));
            if let (Op::Param(id), Some(t)) = (&self.nodes[i].op, &t) {
                params.insert(*id, t.clone());
            }
            nodes.push(t);
        }
        Ok(Gradients { nodes, params })
    }

    fn backward_node(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let len = |v: Var| self.value(v).len();
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv2d { x, k, b, g } => {
                let (n, c, h, w) = self.value(*x).dims4("").unwrap();
                let co = self.shape(*k)[0];
                let (plane, chw, rows) = (g.cols(), c * h * w, g.rows());
                let xv = self.value(*x).data();
                let kv = self.value(*k).data();
                let (need_k, need_x) = (self.tracked(*k), self.tracked(*x));
                if need_k || need_x {
                    let cs = chunk_len(rows * plane, n);
                    let mut cols = vec![T::zero(); rows * cs * plane];
                    let mut gyc = vec![T::zero(); co * cs * plane];
                    let mut dk = need_k.then(|| vec![T::zero(); kv.len()]);
                    let mut dx = need_x.then(|| vec![T::zero(); xv.len()]);
                    for s0 in (0..n).step_by(cs) {
                        let m = cs.min(n - s0);
                        let ld = m * plane;
                        gather_channels(&gy[s0 * co * plane..(s0 + m) * co * plane], m, co, plane, &mut gyc);
                        if let Some(dk) = dk.as_mut() {
                            for j in 0..m {
                                im2col_at(&xv[(s0 + j) * chw..(s0 + j + 1) * chw], g, &mut cols, ld, j * plane);
                            }
                            matmul(co, ld, rows, &gyc[..co * ld], false, &cols[..rows * ld], true, dk, true);
                        }
                        if let Some(dx) = dx.as_mut() {
                            matmul(rows, co, ld, kv, true, &gyc[..co * ld], false, &mut cols[..rows * ld], false);
                            for j in 0..m {
                                col2im_at(&cols, g, &mut dx[(s0 + j) * chw..(s0 + j + 1) * chw], ld, j * plane);
                            }
                        }
                    }
                    if let Some(dk) = dk {
                        add_into(&mut grads[k.0], dk.len(), |acc| add_slice(acc, &dk));
                    }
                    if let Some(dx) = dx {
                        add_into(&mut grads[x.0], dx.len(), |acc| add_slice(acc, &dx));
                    }
                }
                if let Some(b) = b.filter(|&b| self.tracked(b)) {
                    add_into(&mut grads[b.0], co, |db| channel_sums(gy, n, co, g.cols(), db));
                }
            }
            Op::ConvTranspose2d { x, k, b, g } => {
                let (n, c, h, w) = self.value(*x).dims4("").unwrap();
                let co = g.channels;
                let out_plane = co * g.height * g.width;
                let xv = self.value(*x).data();
                let kv = self.value(*k).data();
                let need_k = self.tracked(*k);
                let need_x = self.tracked(*x);
                if need_k || need_x {
                    let (hw, rows) = (h * w, g.rows());
                    let cs = chunk_len(rows * hw, n);
                    let mut dcols = vec![T::zero(); rows * cs * hw];
                    let mut xc = vec![T::zero(); c * cs * hw];
                    let mut dk = need_k.then(|| vec![T::zero(); kv.len()]);
                    let mut dx = need_x.then(|| vec![T::zero(); xv.len()]);
                    for s0 in (0..n).step_by(cs) {
                        let m = cs.min(n - s0);
                        let ld = m * hw;
                        for j in 0..m {
                            let src = &gy[(s0 + j) * out_plane..(s0 + j + 1) * out_plane];
                            im2col_at(src, g, &mut dcols, ld, j * hw);
                        }
                        if let Some(dk) = dk.as_mut() {
                            gather_channels(&xv[s0 * c * hw..(s0 + m) * c * hw], m, c, hw, &mut xc);
                            matmul(c, ld, rows, &xc[..c * ld], false, &dcols[..rows * ld], true, dk, true);
                        }
                        if let Some(dx) = dx.as_mut() {
                            matmul(c, rows, ld, kv, false, &dcols[..rows * ld], false, &mut xc[..c * ld], false);
                            scatter_channels(&xc[..c * ld], m, c, hw, &mut dx[s0 * c * hw..(s0 + m) * c * hw]);
                        }
                    }
                    if let Some(dk) = dk {
                        add_into(&mut grads[k.0], dk.len(), |acc| add_slice(acc, &dk));
                    }
                    if let Some(dx) = dx {
                        add_into(&mut grads[x.0], dx.len(), |acc| add_slice(acc, &dx));
                    }
                }
                if let Some(b) = b.filter(|&b| self.tracked(b)) {
                    add_into(&mut grads[b.0], co, |db| channel_sums(gy, n, co, g.height * g.width, db));
                }
            }
            Op::MaxPool2 { x, argmax } => {
                add_into(&mut grads[x.0], len(*x), |dx| {
                    for (&idx, &g) in argmax.iter().zip(gy) {
                        dx[idx as usize] += g;
                    }
                });
            }
            Op::AvgPool2 { x } => {
                let (n, c, h, w) = self.value(*x).dims4("").unwrap();
                let quarter = T::lit(0.25);
                add_into(&mut grads[x.0], len(*x), |dx| {
                    let (oh, ow) = (h / 2, w / 2);
                    for plane in 0..n * c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = gy[(plane * oh + oy) * ow + ox] * quarter;
                                let i = plane * h * w + 2 * oy * w + 2 * ox;
                                dx[i] += g;
                                dx[i + 1] += g;
                                dx[i + w] += g;
                                dx[i + w + 1] += g;
                            }
                        }
                    }
                });
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let (n, c, h, w) = self.value(*x).dims4("").unwrap();
                let hw = h * w;
                let gv = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        for i in (s * c + ch) * hw..(s * c + ch + 1) * hw {
                            dgamma[ch] += gy[i] * xhat[i];
                            dbeta[ch] += gy[i];
                        }
                    }
                }
                if self.tracked(*x) {
                    let m = T::from_usize(n * hw).unwrap();
                    add_into(&mut grads[x.0], n * c * hw, |dx| {
                        for s in 0..n {
                            for ch in 0..c {
                                let scale = gv[ch] * inv_std[ch];
                                for i in (s * c + ch) * hw..(s * c + ch + 1) * hw {
                                    dx[i] += if *train {
                                        scale * (gy[i] - dbeta[ch] / m - xhat[i] * dgamma[ch] / m)
                                    } else {
                                        scale * gy[i]
                                    };
                                }
                            }
                        }
                    });
                }
                if self.tracked(*gamma) {
                    add_into(&mut grads[gamma.0], c, |d| add_slice(d, &dgamma));
                }
                if self.tracked(*beta) {
                    add_into(&mut grads[beta.0], c, |d| add_slice(d, &dbeta));
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                add_into(&mut grads[x.0], xv.len(), |dx| {
                    for ((d, &v), &g) in dx.iter_mut().zip(xv).zip(gy) {
                        *d += if v >= T::zero() { g } else { *slope * g };
                    }
                });
            }
            Op::Sigmoid { x } => {
                let yv = self.value(Var(i)).data();
                add_into(&mut grads[x.0], yv.len(), |dx| {
                    for ((d, &s), &g) in dx.iter_mut().zip(yv).zip(gy) {
                        *d += g * s * (T::one() - s);
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let (n, f) = (self.shape(*x)[0], self.shape(*x)[1]);
                let o = self.shape(*w)[0];
                if self.tracked(*x) {
                    let wv = self.value(*w).data();
                    add_into(&mut grads[x.0], n * f, |dx| matmul(n, o, f, gy, false, wv, false, dx, true));
                }
                if self.tracked(*w) {
                    let xv = self.value(*x).data();
                    add_into(&mut grads[w.0], o * f, |dw| matmul(o, n, f, gy, true, xv, false, dw, true));
                }
                if let Some(b) = b.filter(|&b| self.tracked(b)) {
                    add_into(&mut grads[b.0], o, |db| {
                        for row in gy.chunks(o) {
                            add_slice(db, row);
                        }
                    });
                }
            }
            Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4("").unwrap();
                let cb = self.shape(*b)[1];
                let hw = h * w;
                for (v, off, cv) in [(*a, 0, ca), (*b, ca, cb)] {
                    if !self.tracked(v) {
                        continue;
                    }
                    add_into(&mut grads[v.0], n * cv * hw, |d| {
                        for s in 0..n {
                            let src = &gy[(s * (ca + cb) + off) * hw..(s * (ca + cb) + off + cv) * hw];
                            add_slice(&mut d[s * cv * hw..(s + 1) * cv * hw], src);
                        }
                    });
                }
            }
            Op::ConcatBatch { a, b } => {
                let na = len(*a);
                for (v, range) in [(*a, 0..na), (*b, na..gy.len())] {
                    if self.tracked(v) {
                        add_into(&mut grads[v.0], range.len(), |d| add_slice(d, &gy[range.clone()]));
                    }
                }
            }
            Op::SliceBatch { x, start } => {
                let s = self.shape(*x);
                let per: usize = s[1..].iter().product();
                let off = start * per;
                add_into(&mut grads[x.0], len(*x), |d| add_slice(&mut d[off..off + gy.len()], gy));
            }
            Op::Reshape { x } => add_into(&mut grads[x.0], gy.len(), |d| add_slice(d, gy)),
            Op::Patches { x, size } => {
                let (n, c, h, w) = self.value(*x).dims4("").unwrap();
                let size = *size;
                let (ph, pw) = (h / size, w / size);
                add_into(&mut grads[x.0], n * c * h * w, |dx| {
                    let mut src = gy.chunks(size);
                    for s in 0..n {
                        for py in 0..ph {
                            for px in 0..pw {
                                for ch in 0..c {
                                    for y in 0..size {
                                        let start = ((s * c + ch) * h + py * size + y) * w + px * size;
                                        add_slice(&mut dx[start..start + size], src.next().unwrap());
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.tracked(v) {
                        add_into(&mut grads[v.0], gy.len(), |d| add_slice(d, gy));
                    }
                }
            }
            Op::Mul { a, b } => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.tracked(v) {
                        let ov = self.value(other).data();
                        add_into(&mut grads[v.0], gy.len(), |d| {
                            for ((d, &o), &g) in d.iter_mut().zip(ov).zip(gy) {
                                *d += o * g;
                            }
                        });
                    }
                }
            }
            Op::Scale { x, c } => add_into(&mut grads[x.0], gy.len(), |d| {
                for (d, &g) in d.iter_mut().zip(gy) {
                    *d += *c * g;
                }
            }),
            Op::Square { x } => {
                let xv = self.value(*x).data();
                let two = T::lit(2.0);
                add_into(&mut grads[x.0], xv.len(), |d| {
                    for ((d, &v), &g) in d.iter_mut().zip(xv).zip(gy) {
                        *d += two * v * g;
                    }
                });
            }
            Op::Sum { x } => {
                let g = gy[0];
                add_into(&mut grads[x.0], len(*x), |d| d.iter_mut().for_each(|d| *d += g));
            }
            Op::Mean { x } => {
                let g = gy[0] / T::from_usize(len(*x)).unwrap();
                add_into(&mut grads[x.0], len(*x), |d| d.iter_mut().for_each(|d| *d += g));
            }
            Op::Focal { p, target, alpha, gamma } => {
                let pv = self.value(*p).data();
                let scale = gy[0] / T::from_usize(pv.len()).unwrap();
                add_into(&mut grads[p.0], pv.len(), |d| {
                    for ((d, &praw), &t) in d.iter_mut().zip(pv).zip(target) {
                        let pt = p_t(clamp_prob(praw), t);
                        let q = T::one() - pt;
                        let mut dpt = q.powf(*gamma) / pt;
                        if *gamma != T::zero() {
                            dpt -= *gamma * q.powf(*gamma - T::one()) * pt.ln();
                        }
                        let sign = if t == T::one() { T::one() } else { -T::one() };
                        *d += -*alpha * dpt * sign * scale;
                    }
                });
            }
            Op::Bce { p, target } => {
                let pv = self.value(*p).data();
                let scale = gy[0] / T::from_usize(pv.len()).unwrap();
                add_into(&mut grads[p.0], pv.len(), |d| {
                    for ((d, &praw), &t) in d.iter_mut().zip(pv).zip(target) {
                        let pc = clamp_prob(praw);
                        *d += (pc - t) / (pc * (T::one() - pc)) * scale;
                    }
                });
            }
            Op::FocalLogits { z, target, alpha, gamma } => {
                let zv = self.value(*z).data();
                let scale = gy[0] / T::from_usize(zv.len()).unwrap();
                add_into(&mut grads[z.0], zv.len(), |d| {
                    for ((d, &zraw), &t) in d.iter_mut().zip(zv).zip(target) {
                        let s = signed(zraw, t);
                        let (pt, q) = (sigmoid(s), sigmoid(-s));
                        let ds = *gamma * q.powf(*gamma) * pt * log_sigmoid(s) - q.powf(*gamma + T::one());
                        *d += signed(*alpha * ds, t) * scale;
                    }
                });
            }
            Op::BceLogits { z, target } => {
                let zv = self.value(*z).data();
                let scale = gy[0] / T::from_usize(zv.len()).unwrap();
                add_into(&mut grads[z.0], zv.len(), |d| {
                    for ((d, &zraw), &t) in d.iter_mut().zip(zv).zip(target) {
                        *d += (sigmoid(zraw) - t) * scale;
                    }
                });
            }
        }
    }
}

// Gradients pass straight through the clamp so saturated wrong predictions still get a signal.
fn clamp_prob<T: Real>(p: T) -> T {
    let eps = T::lit(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

fn p_t<T: Real>(p: T, target: T) -> T {
    if target == T::one() {
        p
    } else {
        T::one() - p
    }
}

fn signed<T: Real>(z: T, target: T) -> T {
    if target == T::one() {
        z
    } else {
        -z
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn log_sigmoid<T: Real>(z: T) -> T {
    z.min(T::zero()) - (-z.abs()).exp().ln_1p()
}

fn add_slice<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}

fn add_channel_bias<T: Real>(out: &mut [T], bias: &[T], n: usize, c: usize, plane: usize) {
    for s in 0..n {
        for (ch, &bv) in bias.iter().enumerate().take(c) {
            out[(s * c + ch) * plane..(s * c + ch + 1) * plane].iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn channel_sums<T: Real>(gy: &[T], n: usize, c: usize, plane: usize, db: &mut [T]) {
    for s in 0..n {
        for (ch, d) in db.iter_mut().enumerate().take(c) {
            *d += gy[(s * c + ch) * plane..(s * c + ch + 1) * plane].iter().copied().sum::<T>();
        }
    }
}
