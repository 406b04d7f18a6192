use super::kernels::{self, axis_split, ConvGeom};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    ScaleBy { x: Var, weights: Var, index: usize },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, normalized: Vec<T>, inv_std: Vec<T> },
    Gelu { x: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape { x: Var },
    Narrow { x: Var, axis: usize, start: usize },
    Transpose { x: Var },
    Conv2d { x: Var, filters: Var, geom: ConvGeom, cols: Vec<T> },
    MeanPoolSpatial { x: Var },
    Sum { x: Var },
    CrossEntropy { logits: Var, target: usize, probs: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Append-only record of tensor operations.
///
/// Nodes are stored in creation order, which is a topological order because
/// an operation can only reference nodes that already exist. [`Graph::backward`]
/// walks that order in reverse and visits every node once.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Graph::backward`], if the node was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    // ---- operations -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} by {sb:?}")));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.data(a), self.data(b), n, k, m);
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::MatMul { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    /// Adds a `[d]` vector to every trailing `d`-slice of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = *self.shape(x).last().expect("tensors have rank >= 1");
        if self.shape(bias) != [d] {
            return Err(Error::dim(format!(
                "bias {:?} does not match trailing extent of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bv)| v + bv))
            .collect();
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, Op::AddBias { x, bias }, &[x, bias]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.data(x).iter().map(|&v| v * factor).collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data: out,
        };
        self.push(value, Op::Scale { x, factor }, &[x])
    }

    /// Multiplies `x` by the single entry `weights[index]`, differentiable in both.
    pub fn scale_by(&mut self, x: Var, weights: Var, index: usize) -> Result<Var> {
        let w = *self.data(weights).get(index).ok_or_else(|| {
            Error::dim(format!(
                "index {index} out of range for weights {:?}",
                self.shape(weights)
            ))
        })?;
        let out = self.data(x).iter().map(|&v| v * w).collect();
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, Op::ScaleBy { x, weights, index }, &[x, weights]))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim(format!("softmax axis {axis} for shape {shape:?}")));
        }
        if self.data(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput { op: "softmax" });
        }
        let out = kernels::softmax(self.data(x), &shape, axis);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Softmax { x, axis }, &[x]))
    }

    /// Normalizes each trailing `d`-slice with its population mean and
    /// variance, `(x - mean) / sqrt(var + eps) * gamma + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("rank >= 1");
        if d == 0 {
            return Err(Error::dim("layer norm over an empty axis"));
        }
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::dim(format!(
                "layer norm over {shape:?} with gamma {:?} and beta {:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        if eps <= T::zero() {
            return Err(Error::Contract("layer norm eps must be positive".into()));
        }
        let (g, b) = (self.data(gamma), self.data(beta));
        let dn = T::from_f64(d as f64);
        let rows = self.data(x).len() / d;
        let mut normalized = Vec::with_capacity(rows * d);
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * d);
        for row in self.data(x).chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for ((&v, &gv), &bv) in row.iter().zip(g).zip(b) {
                let xh = (v - mean) * is;
                normalized.push(xh);
                out.push(xh * gv + bv);
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|&v| v * kernels::normal_cdf(v)).collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data: out,
        };
        self.push(value, Op::Gelu { x }, &[x])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} for shape {base:?}")));
        }
        let mut extent = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim(format!(
                    "concat along axis {axis} of {base:?} and {s:?}"
                )));
            }
            extent += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = extent;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.data(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "narrow [{start}, {}) on axis {axis} of {shape:?}",
                start + len
            )));
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        let src = self.data(x);
        for o in 0..outer {
            let from = (o * n + start) * inner;
            out.extend_from_slice(&src[from..from + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let value = Tensor::new(new_shape, out)?;
        Ok(self.push(value, Op::Narrow { x, axis, start }, &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::dim(format!("transpose of rank-{} tensor", s.len())));
        }
        let (r, c) = (s[0], s[1]);
        let src = self.data(x);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out)?;
        Ok(self.push(value, Op::Transpose { x }, &[x]))
    }

    /// Valid cross-correlation of an `h×w×cin` image with `k×k×cin×cout` filters.
    pub fn conv2d(&mut self, x: Var, filters: Var, stride: usize) -> Result<Var> {
        let (sx, sf) = (self.shape(x), self.shape(filters));
        if sx.len() != 3 || sf.len() != 4 || sf[0] != sf[1] || sf[2] != sx[2] {
            return Err(Error::dim(format!("conv2d of input {sx:?} with filters {sf:?}")));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d stride must be positive".into()));
        }
        let geom = ConvGeom {
            h: sx[0],
            w: sx[1],
            cin: sx[2],
            k: sf[0],
            stride,
        };
        if geom.k > geom.h || geom.k > geom.w {
            return Err(Error::dim(format!(
                "conv2d filter {}x{} larger than input {}x{}",
                geom.k, geom.k, geom.h, geom.w
            )));
        }
        let cout = sf[3];
        let cols = kernels::im2col(self.data(x), geom);
        let positions = geom.out_h() * geom.out_w();
        let out = kernels::matmul(&cols, self.data(filters), positions, geom.patch_len(), cout);
        let value = Tensor::new(vec![geom.out_h(), geom.out_w(), cout], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                filters,
                geom,
                cols,
            },
            &[x, filters],
        ))
    }

    /// Averages an `h×w×c` tensor over both spatial axes, giving `[c]`.
    pub fn mean_pool_spatial(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(Error::dim(format!("spatial mean pool of {s:?}")));
        }
        let (area, c) = (s[0] * s[1], s[2]);
        let mut out = vec![T::zero(); c];
        for px in self.data(x).chunks_exact(c) {
            for (o, &v) in out.iter_mut().zip(px) {
                *o = *o + v;
            }
        }
        let inv = T::one() / T::from_f64(area as f64);
        out.iter_mut().for_each(|o| *o = *o * inv);
        let value = Tensor::new(vec![c], out)?;
        Ok(self.push(value, Op::MeanPoolSpatial { x }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    /// `-log softmax(logits)[target]` with a zero-based target index.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = self.data(logits);
        if target >= z.len() {
            return Err(Error::Contract(format!(
                "target {target} out of range for {} logits",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput { op: "cross_entropy" });
        }
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = z.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        let probs = z.iter().map(|&v| (v - max).exp() / sum).collect();
        let loss = lse - z[target];
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            &[logits],
        ))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{op} of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    // ---- reverse pass -----------------------------------------------------

    /// Populates gradients of `loss` with respect to every node that requires
    /// them. Contributions from several consumers are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, c) in contributions {
                let node = &mut self.nodes[v.0];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, &d)| *a = *a + d),
                    None => node.grad = Some(c),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, i: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                if self.wants(*a) {
                    let mut da = vec![T::zero(); n * k];
                    kernels::matmul_nt_acc(g, self.data(*b), n, k, m, &mut da);
                    out.push((*a, da));
                }
                if self.wants(*b) {
                    let mut db = vec![T::zero(); k * m];
                    kernels::matmul_tn_acc(self.data(*a), g, n, k, m, &mut db);
                    out.push((*b, db));
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        out.push((v, g.to_vec()));
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if self.wants(*x) {
                    out.push((*x, g.to_vec()));
                }
                if self.wants(*bias) {
                    let d = self.shape(*bias)[0];
                    let mut db = vec![T::zero(); d];
                    for row in g.chunks_exact(d) {
                        db.iter_mut().zip(row).for_each(|(a, &r)| *a = *a + r);
                    }
                    out.push((*bias, db));
                }
            }
            Op::Mul { a, b } => {
                if self.wants(*a) {
                    let d = g.iter().zip(self.data(*b)).map(|(&gv, &bv)| gv * bv).collect();
                    out.push((*a, d));
                }
                if self.wants(*b) {
                    let d = g.iter().zip(self.data(*a)).map(|(&gv, &av)| gv * av).collect();
                    out.push((*b, d));
                }
            }
            Op::Scale { x, factor } => {
                if self.wants(*x) {
                    out.push((*x, g.iter().map(|&gv| gv * *factor).collect()));
                }
            }
            Op::ScaleBy { x, weights, index } => {
                if self.wants(*x) {
                    let w = self.data(*weights)[*index];
                    out.push((*x, g.iter().map(|&gv| gv * w).collect()));
                }
                if self.wants(*weights) {
                    let mut dw = vec![T::zero(); self.value(*weights).numel()];
                    dw[*index] = g.iter().zip(self.data(*x)).map(|(&gv, &xv)| gv * xv).sum();
                    out.push((*weights, dw));
                }
            }
            Op::Softmax { x, axis } => {
                if self.wants(*x) {
                    let y = node.value.data();
                    let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                    let mut dx = vec![T::zero(); y.len()];
                    for o in 0..outer {
                        for k in 0..inner {
                            let idx = |a: usize| (o * n + a) * inner + k;
                            let dot: T = (0..n).map(|a| g[idx(a)] * y[idx(a)]).sum();
                            for a in 0..n {
                                dx[idx(a)] = y[idx(a)] * (g[idx(a)] - dot);
                            }
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let d = self.shape(*gamma)[0];
                let gm = self.data(*gamma);
                if self.wants(*x) {
                    let dn = T::from_f64(d as f64);
                    let mut dx = Vec::with_capacity(g.len());
                    for ((grow, xh), &is) in g
                        .chunks_exact(d)
                        .zip(normalized.chunks_exact(d))
                        .zip(inv_std)
                    {
                        let dxh: Vec<T> = grow.iter().zip(gm).map(|(&a, &b)| a * b).collect();
                        let sum_dxh: T = dxh.iter().copied().sum();
                        let sum_dxh_xh: T = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum();
                        for (&a, &h) in dxh.iter().zip(xh) {
                            dx.push(is / dn * (dn * a - sum_dxh - h * sum_dxh_xh));
                        }
                    }
                    out.push((*x, dx));
                }
                if self.wants(*gamma) {
                    let mut dg = vec![T::zero(); d];
                    for (grow, xh) in g.chunks_exact(d).zip(normalized.chunks_exact(d)) {
                        for ((a, &gv), &h) in dg.iter_mut().zip(grow).zip(xh) {
                            *a = *a + gv * h;
                        }
                    }
                    out.push((*gamma, dg));
                }
                if self.wants(*beta) {
                    let mut db = vec![T::zero(); d];
                    for grow in g.chunks_exact(d) {
                        db.iter_mut().zip(grow).for_each(|(a, &gv)| *a = *a + gv);
                    }
                    out.push((*beta, db));
                }
            }
            Op::Gelu { x } => {
                if self.wants(*x) {
                    let dx = g
                        .iter()
                        .zip(self.data(*x))
                        .map(|(&gv, &v)| {
                            gv * (kernels::normal_cdf(v) + v * kernels::normal_pdf(v))
                        })
                        .collect();
                    out.push((*x, dx));
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let n = self.shape(v)[*axis];
                    if self.wants(v) {
                        let mut d = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let from = (o * total + offset) * inner;
                            d.extend_from_slice(&g[from..from + n * inner]);
                        }
                        out.push((v, d));
                    }
                    offset += n;
                }
            }
            Op::Reshape { x } => {
                if self.wants(*x) {
                    out.push((*x, g.to_vec()));
                }
            }
            Op::Narrow { x, axis, start } => {
                if self.wants(*x) {
                    let (outer, n, inner) = axis_split(self.shape(*x), *axis);
                    let len = node.value.shape()[*axis];
                    let mut dx = vec![T::zero(); outer * n * inner];
                    for o in 0..outer {
                        let to = (o * n + start) * inner;
                        let from = o * len * inner;
                        dx[to..to + len * inner].copy_from_slice(&g[from..from + len * inner]);
                    }
                    out.push((*x, dx));
                }
            }
            Op::Transpose { x } => {
                if self.wants(*x) {
                    let s = self.shape(*x);
                    let (r, c) = (s[0], s[1]);
                    let mut dx = vec![T::zero(); r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = g[j * r + i];
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::Conv2d {
                x,
                filters,
                geom,
                cols,
            } => {
                let positions = geom.out_h() * geom.out_w();
                let plen = geom.patch_len();
                let cout = self.shape(*filters)[3];
                if self.wants(*x) {
                    let mut dcols = vec![T::zero(); positions * plen];
                    kernels::matmul_nt_acc(g, self.data(*filters), positions, plen, cout, &mut dcols);
                    let mut dx = vec![T::zero(); self.value(*x).numel()];
                    kernels::col2im_acc(&dcols, *geom, &mut dx);
                    out.push((*x, dx));
                }
                if self.wants(*filters) {
                    let mut df = vec![T::zero(); plen * cout];
                    kernels::matmul_tn_acc(cols, g, positions, plen, cout, &mut df);
                    out.push((*filters, df));
                }
            }
            Op::MeanPoolSpatial { x } => {
                if self.wants(*x) {
                    let s = self.shape(*x);
                    let area = s[0] * s[1];
                    let inv = T::one() / T::from_f64(area as f64);
                    let scaled: Vec<T> = g.iter().map(|&gv| gv * inv).collect();
                    let dx = (0..area).flat_map(|_| scaled.iter().copied()).collect();
                    out.push((*x, dx));
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    out.push((*x, vec![g[0]; self.value(*x).numel()]));
                }
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                if self.wants(*logits) {
                    let mut d: Vec<T> = probs.iter().map(|&p| p * g[0]).collect();
                    d[*target] = d[*target] - g[0];
                    out.push((*logits, d));
                }
            }
        }
        out
    }
}
