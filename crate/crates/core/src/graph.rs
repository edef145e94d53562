//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Forward calls append nodes; [`Graph::backward`] walks the tape in reverse
//! and accumulates gradients into every node that needs them. All primitives
//! are deterministic and reject non-finite outputs, so a NaN anywhere in a
//! model surfaces at the op that produced it instead of at the loss.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvDims, ConvTDims};
use crate::tensor::{Elem, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone)]
enum Op<E: Elem> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, E),
    AddBias(usize, usize),
    Matmul(usize, usize),
    Bmm(usize, usize),
    Reshape(usize),
    Permute { x: usize, axes: Vec<usize> },
    GatherRows { x: usize, idx: Vec<usize> },
    Concat { axis: usize, parts: Vec<usize> },
    Slice { x: usize, axis: usize, start: usize },
    Repeat0 { x: usize, times: usize },
    MeanAxis { x: usize, axis: usize },
    SumAll(usize),
    MeanAll(usize),
    Softmax { x: usize, axis: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize, mean: Vec<E>, inv_std: Vec<E> },
    Relu(usize),
    Gelu(usize),
    Conv2d { x: usize, w: usize, stride: usize, pad: usize },
    ConvT2d { x: usize, w: usize, stride: usize, pad: usize },
    Bilinear { x: usize, scale: usize },
    BatchNormTrain { x: usize, gamma: usize, beta: usize, mean: Vec<E>, inv_std: Vec<E> },
    BatchNormEval { x: usize, gamma: usize, beta: usize, mean: Vec<E>, inv_std: Vec<E> },
}

struct Node<E: Elem> {
    shape: Vec<usize>,
    data: Vec<E>,
    grad: Option<Vec<E>>,
    op: Op<E>,
    needs_grad: bool,
}

/// Statistics captured by a train-mode batch norm, for running-stat updates.
pub struct BatchStats<E: Elem> {
    pub mean: Vec<E>,
    pub var: Vec<E>,
}

pub struct Graph<E: Elem> {
    nodes: Vec<Node<E>>,
}

impl<E: Elem> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> Graph<E> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<E>, op: Op<E>, needs_grad: bool) -> Result<Var> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                op: op_name(&op).to_string(),
            });
        }
        self.nodes.push(Node {
            shape,
            data,
            grad: None,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Insert a leaf that will receive gradients.
    pub fn leaf(&mut self, value: &Tensor<E>) -> Result<Var> {
        self.push(value.shape().to_vec(), value.data().to_vec(), Op::Leaf, true)
    }

    /// Insert a constant leaf; no gradient is ever computed for it.
    pub fn constant(&mut self, value: &Tensor<E>) -> Result<Var> {
        self.push(value.shape().to_vec(), value.data().to_vec(), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, shape: &[usize], data: Vec<E>) -> Result<Var> {
        self.push(shape.to_vec(), data, Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[E] {
        &self.nodes[v.0].data
    }

    pub fn value(&self, v: Var) -> Tensor<E> {
        Tensor::new(&self.nodes[v.0].shape, self.nodes[v.0].data.clone()).expect("node shape")
    }

    pub fn grad(&self, v: Var) -> Option<&[E]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0].to_f64()
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    // ---- elementwise and shape ops ----

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeMismatch {
                op,
                expected: format!("{:?}", self.nodes[a.0].shape),
                got: format!("{:?}", self.nodes[b.0].shape),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(&[a.0, b.0]);
        self.push(shape, data, Op::Add(a.0, b.0), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x - y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(&[a.0, b.0]);
        self.push(shape, data, Op::Sub(a.0, b.0), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(&[a.0, b.0]);
        self.push(shape, data, Op::Mul(a.0, b.0), ng)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let f = E::from_f64(factor);
        let data = self.nodes[a.0].data.iter().map(|&x| x * f).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(&[a.0]);
        self.push(shape, data, Op::Scale(a.0, f), ng)
    }

    /// `a[..., c] + bias[c]`, broadcasting the bias over every leading axis.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let c = *self.nodes[a.0].shape.last().ok_or(Error::ShapeMismatch {
            op: "add_bias",
            expected: "rank >= 1".into(),
            got: "rank 0".into(),
        })?;
        if self.nodes[bias.0].shape != [c] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                expected: format!("[{c}]"),
                got: format!("{:?}", self.nodes[bias.0].shape),
            });
        }
        let bdata = &self.nodes[bias.0].data;
        let data = self.nodes[a.0]
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bdata[i % c])
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(&[a.0, bias.0]);
        self.push(shape, data, Op::AddBias(a.0, bias.0), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                expected: "[m,k] x [k,n]".into(),
                got: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![E::zero(); m * n];
        kernels::matmul(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n, &mut out);
        let ng = self.needs(&[a.0, b.0]);
        self.push(vec![m, n], out, Op::Matmul(a.0, b.0), ng)
    }

    /// Batched matmul: [b,m,k] x [b,k,n] -> [b,m,n].
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::ShapeMismatch {
                op: "bmm",
                expected: "[b,m,k] x [b,k,n]".into(),
                got: format!("{sa:?} x {sb:?}"),
            });
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![E::zero(); bs * m * n];
        for i in 0..bs {
            kernels::matmul(
                &self.nodes[a.0].data[i * m * k..(i + 1) * m * k],
                &self.nodes[b.0].data[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let ng = self.needs(&[a.0, b.0]);
        self.push(vec![bs, m, n], out, Op::Bmm(a.0, b.0), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                expected: format!("{} elements", self.nodes[a.0].data.len()),
                got: format!("{shape:?}"),
            });
        }
        let data = self.nodes[a.0].data.clone();
        let ng = self.needs(&[a.0]);
        self.push(shape.to_vec(), data, Op::Reshape(a.0), ng)
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let in_shape = self.nodes[a.0].shape.clone();
        if axes.len() != in_shape.len() {
            return Err(Error::ShapeMismatch {
                op: "permute",
                expected: format!("{} axes", in_shape.len()),
                got: format!("{axes:?}"),
            });
        }
        let mut seen = vec![false; axes.len()];
        for &ax in axes {
            if ax >= axes.len() || seen[ax] {
                return Err(Error::InvalidGeometry {
                    op: "permute",
                    detail: format!("axes {axes:?} is not a permutation"),
                });
            }
            seen[ax] = true;
        }
        let out_shape: Vec<usize> = axes.iter().map(|&ax| in_shape[ax]).collect();
        let data = permute_data(&self.nodes[a.0].data, &in_shape, axes);
        let ng = self.needs(&[a.0]);
        self.push(out_shape, data, Op::Permute { x: a.0, axes: axes.to_vec() }, ng)
    }

    /// Select rows of `a` viewed as `[rows, rest]`; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        let rows = shape[0];
        let rest: usize = shape[1..].iter().product();
        for &i in idx {
            if i >= rows {
                return Err(Error::InvalidGeometry {
                    op: "gather_rows",
                    detail: format!("index {i} out of {rows} rows"),
                });
            }
        }
        let src = &self.nodes[a.0].data;
        let mut data = Vec::with_capacity(idx.len() * rest);
        for &i in idx {
            data.extend_from_slice(&src[i * rest..(i + 1) * rest]);
        }
        let mut out_shape = shape;
        out_shape[0] = idx.len();
        let ng = self.needs(&[a.0]);
        self.push(out_shape, data, Op::GatherRows { x: a.0, idx: idx.to_vec() }, ng)
    }

    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput { op: "concat" });
        }
        let base = self.nodes[parts[0].0].shape.clone();
        if axis >= base.len() {
            return Err(Error::InvalidGeometry {
                op: "concat",
                detail: format!("axis {axis} out of rank {}", base.len()),
            });
        }
        let mut axis_total = 0;
        for p in parts {
            let s = &self.nodes[p.0].shape;
            if s.len() != base.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i])
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    expected: format!("{base:?} except axis {axis}"),
                    got: format!("{s:?}"),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = axis_total;
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = vec![E::zero(); outer * axis_total * inner];
        let mut offset = 0;
        for p in parts {
            let len = self.nodes[p.0].shape[axis];
            let src = &self.nodes[p.0].data;
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * len * inner;
                data[dst_base..dst_base + len * inner]
                    .copy_from_slice(&src[src_base..src_base + len * inner]);
            }
            offset += len;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let ng = self.needs(&ids);
        self.push(out_shape, data, Op::Concat { axis, parts: ids }, ng)
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::InvalidGeometry {
                op: "slice",
                detail: format!("axis {axis} [{start}..{}] of {shape:?}", start + len),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        let src = &self.nodes[a.0].data;
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let ng = self.needs(&[a.0]);
        self.push(out_shape, data, Op::Slice { x: a.0, axis, start }, ng)
    }

    /// Stack `times` copies of `a` along a new leading axis.
    pub fn repeat0(&mut self, a: Var, times: usize) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        let src = self.nodes[a.0].data.clone();
        let mut data = Vec::with_capacity(src.len() * times);
        for _ in 0..times {
            data.extend_from_slice(&src);
        }
        let mut out_shape = vec![times];
        out_shape.extend_from_slice(&shape);
        let ng = self.needs(&[a.0]);
        self.push(out_shape, data, Op::Repeat0 { x: a.0, times }, ng)
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        if axis >= shape.len() {
            return Err(Error::InvalidGeometry {
                op: "mean_axis",
                detail: format!("axis {axis} out of rank {}", shape.len()),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        if len == 0 {
            return Err(Error::EmptyInput { op: "mean_axis" });
        }
        let src = &self.nodes[a.0].data;
        let inv = E::from_f64(1.0 / len as f64);
        let mut data = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..len {
                let base = (o * len + i) * inner;
                for j in 0..inner {
                    data[o * inner + j] += src[base + j];
                }
            }
        }
        for v in data.iter_mut() {
            *v = *v * inv;
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let ng = self.needs(&[a.0]);
        self.push(out_shape, data, Op::MeanAxis { x: a.0, axis }, ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let mut acc = E::zero();
        for &v in &self.nodes[a.0].data {
            acc += v;
        }
        let ng = self.needs(&[a.0]);
        self.push(vec![1], vec![acc], Op::SumAll(a.0), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].data.len();
        if n == 0 {
            return Err(Error::EmptyInput { op: "mean_all" });
        }
        let mut acc = E::zero();
        for &v in &self.nodes[a.0].data {
            acc += v;
        }
        let ng = self.needs(&[a.0]);
        self.push(
            vec![1],
            vec![acc * E::from_f64(1.0 / n as f64)],
            Op::MeanAll(a.0),
            ng,
        )
    }

    /// Numerically-stable softmax along `axis` (max subtraction).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        if axis >= shape.len() {
            return Err(Error::InvalidGeometry {
                op: "softmax",
                detail: format!("axis {axis} out of rank {}", shape.len()),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = &self.nodes[a.0].data;
        let mut data = vec![E::zero(); src.len()];
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let mut mx = src[at(0)];
                for i in 1..len {
                    mx = mx.maximum(src[at(i)]);
                }
                let mut denom = E::zero();
                for i in 0..len {
                    let e = (src[at(i)] - mx).exp();
                    data[at(i)] = e;
                    denom += e;
                }
                for i in 0..len {
                    data[at(i)] = data[at(i)] / denom;
                }
            }
        }
        let ng = self.needs(&[a.0]);
        self.push(shape, data, Op::Softmax { x: a.0, axis }, ng)
    }

    /// Layer norm over the last axis with learnable affine.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.nodes[x.0].shape.clone();
        let c = *shape.last().ok_or(Error::ShapeMismatch {
            op: "layer_norm",
            expected: "rank >= 1".into(),
            got: "rank 0".into(),
        })?;
        if self.nodes[gamma.0].shape != [c] || self.nodes[beta.0].shape != [c] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                expected: format!("gamma and beta of [{c}]"),
                got: format!(
                    "{:?} and {:?}",
                    self.nodes[gamma.0].shape, self.nodes[beta.0].shape
                ),
            });
        }
        let rows = self.nodes[x.0].data.len() / c;
        let src = &self.nodes[x.0].data;
        let g = &self.nodes[gamma.0].data;
        let b = &self.nodes[beta.0].data;
        let inv_c = E::from_f64(1.0 / c as f64);
        let epse = E::from_f64(eps);
        let mut data = vec![E::zero(); src.len()];
        let mut means = Vec::with_capacity(rows);
        let mut inv_stds = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &src[r * c..(r + 1) * c];
            let mut mean = E::zero();
            for &v in row {
                mean += v;
            }
            mean = mean * inv_c;
            let mut var = E::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var = var * inv_c;
            let inv_std = E::one() / (var + epse).sqrt();
            for (i, &v) in row.iter().enumerate() {
                data[r * c + i] = (v - mean) * inv_std * g[i] + b[i];
            }
            means.push(mean);
            inv_stds.push(inv_std);
        }
        let ng = self.needs(&[x.0, gamma.0, beta.0]);
        self.push(
            shape,
            data,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                mean: means,
                inv_std: inv_stds,
            },
            ng,
        )
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let data = self.nodes[a.0]
            .data
            .iter()
            .map(|&x| x.maximum(E::zero()))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(&[a.0]);
        self.push(shape, data, Op::Relu(a.0), ng)
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let data = self.nodes[a.0].data.iter().map(|&x| gelu_fwd(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(&[a.0]);
        self.push(shape, data, Op::Gelu(a.0), ng)
    }

    /// NHWC convolution; bias, if any, goes through [`Graph::add_bias`].
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (&self.nodes[x.0].shape, &self.nodes[w.0].shape);
        if sx.len() != 4 || sw.len() != 4 || sx[3] != sw[2] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: "[n,h,w,cin] with [kh,kw,cin,cout]".into(),
                got: format!("{sx:?} with {sw:?}"),
            });
        }
        let out_h = kernels::conv_out_size(sx[1], sw[0], stride, pad).ok_or_else(|| {
            Error::InvalidGeometry {
                op: "conv2d",
                detail: format!("h={} k={} s={stride} p={pad}", sx[1], sw[0]),
            }
        })?;
        let out_w = kernels::conv_out_size(sx[2], sw[1], stride, pad).ok_or_else(|| {
            Error::InvalidGeometry {
                op: "conv2d",
                detail: format!("w={} k={} s={stride} p={pad}", sx[2], sw[1]),
            }
        })?;
        let d = ConvDims {
            batch: sx[0],
            in_h: sx[1],
            in_w: sx[2],
            in_c: sx[3],
            k_h: sw[0],
            k_w: sw[1],
            out_c: sw[3],
            out_h,
            out_w,
            stride,
            pad,
        };
        let mut out = vec![E::zero(); d.batch * out_h * out_w * d.out_c];
        kernels::conv2d(&self.nodes[x.0].data, &self.nodes[w.0].data, &d, &mut out);
        let ng = self.needs(&[x.0, w.0]);
        self.push(
            vec![d.batch, out_h, out_w, d.out_c],
            out,
            Op::Conv2d { x: x.0, w: w.0, stride, pad },
            ng,
        )
    }

    /// NHWC transposed convolution with weight layout [kh,kw,cin,cout].
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (&self.nodes[x.0].shape, &self.nodes[w.0].shape);
        if sx.len() != 4 || sw.len() != 4 || sx[3] != sw[2] {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose2d",
                expected: "[n,h,w,cin] with [kh,kw,cin,cout]".into(),
                got: format!("{sx:?} with {sw:?}"),
            });
        }
        let out_h =
            kernels::conv_transpose_out_size(sx[1], sw[0], stride, pad).ok_or_else(|| {
                Error::InvalidGeometry {
                    op: "conv_transpose2d",
                    detail: format!("h={} k={} s={stride} p={pad}", sx[1], sw[0]),
                }
            })?;
        let out_w =
            kernels::conv_transpose_out_size(sx[2], sw[1], stride, pad).ok_or_else(|| {
                Error::InvalidGeometry {
                    op: "conv_transpose2d",
                    detail: format!("w={} k={} s={stride} p={pad}", sx[2], sw[1]),
                }
            })?;
        let d = ConvTDims {
            batch: sx[0],
            in_h: sx[1],
            in_w: sx[2],
            in_c: sx[3],
            k_h: sw[0],
            k_w: sw[1],
            out_c: sw[3],
            out_h,
            out_w,
            stride,
            pad,
        };
        let mut out = vec![E::zero(); d.batch * out_h * out_w * d.out_c];
        kernels::conv_transpose2d(&self.nodes[x.0].data, &self.nodes[w.0].data, &d, &mut out);
        let ng = self.needs(&[x.0, w.0]);
        self.push(
            vec![d.batch, out_h, out_w, d.out_c],
            out,
            Op::ConvT2d { x: x.0, w: w.0, stride, pad },
            ng,
        )
    }

    /// Integer-factor bilinear upsampling, half-pixel convention.
    pub fn bilinear_resize(&mut self, x: Var, scale: usize) -> Result<Var> {
        let sx = self.nodes[x.0].shape.clone();
        if sx.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "bilinear_resize",
                expected: "[n,h,w,c]".into(),
                got: format!("{sx:?}"),
            });
        }
        if scale == 0 {
            return Err(Error::InvalidGeometry {
                op: "bilinear_resize",
                detail: "scale must be >= 1".into(),
            });
        }
        let (n, h, w, c) = (sx[0], sx[1], sx[2], sx[3]);
        let (oh, ow) = (h * scale, w * scale);
        let rows = kernels::bilinear_taps(oh, h, scale);
        let cols = kernels::bilinear_taps(ow, w, scale);
        let src = &self.nodes[x.0].data;
        let mut out = vec![E::zero(); n * oh * ow * c];
        for b in 0..n {
            for (y, &(y0, y1, fy)) in rows.iter().enumerate() {
                for (xo, &(x0, x1, fx)) in cols.iter().enumerate() {
                    let obase = ((b * oh + y) * ow + xo) * c;
                    let i00 = ((b * h + y0) * w + x0) * c;
                    let i01 = ((b * h + y0) * w + x1) * c;
                    let i10 = ((b * h + y1) * w + x0) * c;
                    let i11 = ((b * h + y1) * w + x1) * c;
                    let (w00, w01, w10, w11) = bilinear_weights::<E>(fy, fx);
                    for ch in 0..c {
                        out[obase + ch] = src[i00 + ch] * w00
                            + src[i01 + ch] * w01
                            + src[i10 + ch] * w10
                            + src[i11 + ch] * w11;
                    }
                }
            }
        }
        let ng = self.needs(&[x.0]);
        self.push(
            vec![n, oh, ow, c],
            out,
            Op::Bilinear { x: x.0, scale },
            ng,
        )
    }

    /// Channel-last batch norm over all leading axes. Train mode normalizes
    /// by the biased batch statistics and returns them so the caller can
    /// update running stats.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats<E>)> {
        let shape = self.nodes[x.0].shape.clone();
        let c = *shape.last().unwrap_or(&0);
        if c == 0 || self.nodes[gamma.0].shape != [c] || self.nodes[beta.0].shape != [c] {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                expected: format!("gamma/beta of [{c}]"),
                got: format!("{:?}", self.nodes[gamma.0].shape),
            });
        }
        let rows = self.nodes[x.0].data.len() / c;
        if rows == 0 {
            return Err(Error::EmptyInput { op: "batch_norm" });
        }
        let src = &self.nodes[x.0].data;
        let inv_rows = E::from_f64(1.0 / rows as f64);
        let mut mean = vec![E::zero(); c];
        for r in 0..rows {
            for ch in 0..c {
                mean[ch] += src[r * c + ch];
            }
        }
        for m in mean.iter_mut() {
            *m = *m * inv_rows;
        }
        let mut var = vec![E::zero(); c];
        for r in 0..rows {
            for ch in 0..c {
                let d = src[r * c + ch] - mean[ch];
                var[ch] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v = *v * inv_rows;
        }
        let epse = E::from_f64(eps);
        let inv_std: Vec<E> = var.iter().map(|&v| E::one() / (v + epse).sqrt()).collect();
        let g = &self.nodes[gamma.0].data;
        let b = &self.nodes[beta.0].data;
        let mut data = vec![E::zero(); src.len()];
        for r in 0..rows {
            for ch in 0..c {
                data[r * c + ch] = (src[r * c + ch] - mean[ch]) * inv_std[ch] * g[ch] + b[ch];
            }
        }
        let stats = BatchStats {
            mean: mean.clone(),
            var: var.clone(),
        };
        let ng = self.needs(&[x.0, gamma.0, beta.0]);
        let out = self.push(
            shape,
            data,
            Op::BatchNormTrain {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                mean,
                inv_std,
            },
            ng,
        )?;
        Ok((out, stats))
    }

    /// Eval-mode batch norm: running statistics are constants.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[E],
        running_var: &[E],
        eps: f64,
    ) -> Result<Var> {
        let shape = self.nodes[x.0].shape.clone();
        let c = *shape.last().unwrap_or(&0);
        if c == 0
            || self.nodes[gamma.0].shape != [c]
            || self.nodes[beta.0].shape != [c]
            || running_mean.len() != c
            || running_var.len() != c
        {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                expected: format!("stats of [{c}]"),
                got: format!("{} / {}", running_mean.len(), running_var.len()),
            });
        }
        let rows = self.nodes[x.0].data.len() / c;
        if rows == 0 {
            return Err(Error::EmptyInput { op: "batch_norm" });
        }
        let epse = E::from_f64(eps);
        let inv_std: Vec<E> = running_var
            .iter()
            .map(|&v| E::one() / (v + epse).sqrt())
            .collect();
        let src = &self.nodes[x.0].data;
        let g = &self.nodes[gamma.0].data;
        let b = &self.nodes[beta.0].data;
        let mut data = vec![E::zero(); src.len()];
        for r in 0..rows {
            for ch in 0..c {
                data[r * c + ch] =
                    (src[r * c + ch] - running_mean[ch]) * inv_std[ch] * g[ch] + b[ch];
            }
        }
        let ng = self.needs(&[x.0, gamma.0, beta.0]);
        self.push(
            shape,
            data,
            Op::BatchNormEval {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                mean: running_mean.to_vec(),
                inv_std,
            },
            ng,
        )
    }

    // ---- compositions ----

    /// Mean squared error between two equally-shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.mean_all(sq)
    }

    // ---- backward ----

    /// Run reverse-mode accumulation from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                expected: "scalar loss".into(),
                got: format!("{:?}", self.nodes[loss.0].shape),
            });
        }
        self.nodes[loss.0].grad = Some(vec![E::one()]);
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let g = self.nodes[i].grad.take().expect("checked above");
            self.backprop_node(i, &op, &g);
        }
        Ok(())
    }

    fn accum(&mut self, id: usize, contrib: Vec<E>) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut self.nodes[id].grad {
            Some(g) => {
                for (gg, c) in g.iter_mut().zip(contrib) {
                    *gg += c;
                }
            }
            None => self.nodes[id].grad = Some(contrib),
        }
    }

    fn backprop_node(&mut self, id: usize, op: &Op<E>, g: &[E]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(*a, g.to_vec());
                self.accum(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accum(*a, g.to_vec());
                self.accum(*b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let da: Vec<E> = g
                    .iter()
                    .zip(&self.nodes[*b].data)
                    .map(|(&gv, &bv)| gv * bv)
                    .collect();
                let db: Vec<E> = g
                    .iter()
                    .zip(&self.nodes[*a].data)
                    .map(|(&gv, &av)| gv * av)
                    .collect();
                self.accum(*a, da);
                self.accum(*b, db);
            }
            Op::Scale(a, f) => {
                self.accum(*a, g.iter().map(|&v| v * *f).collect());
            }
            Op::AddBias(a, b) => {
                let c = self.nodes[*b].data.len();
                let mut db = vec![E::zero(); c];
                for (i, &gv) in g.iter().enumerate() {
                    db[i % c] += gv;
                }
                self.accum(*a, g.to_vec());
                self.accum(*b, db);
            }
            Op::Matmul(a, b) => {
                let (m, k) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                let n = self.nodes[*b].shape[1];
                let mut da = vec![E::zero(); m * k];
                kernels::matmul_nt(g, &self.nodes[*b].data, m, n, k, &mut da);
                let mut db = vec![E::zero(); k * n];
                kernels::matmul_tn(&self.nodes[*a].data, g, m, k, n, &mut db);
                self.accum(*a, da);
                self.accum(*b, db);
            }
            Op::Bmm(a, b) => {
                let (bs, m, k) = (
                    self.nodes[*a].shape[0],
                    self.nodes[*a].shape[1],
                    self.nodes[*a].shape[2],
                );
                let n = self.nodes[*b].shape[2];
                let mut da = vec![E::zero(); bs * m * k];
                let mut db = vec![E::zero(); bs * k * n];
                for i in 0..bs {
                    kernels::matmul_nt(
                        &g[i * m * n..(i + 1) * m * n],
                        &self.nodes[*b].data[i * k * n..(i + 1) * k * n],
                        m,
                        n,
                        k,
                        &mut da[i * m * k..(i + 1) * m * k],
                    );
                    kernels::matmul_tn(
                        &self.nodes[*a].data[i * m * k..(i + 1) * m * k],
                        &g[i * m * n..(i + 1) * m * n],
                        m,
                        k,
                        n,
                        &mut db[i * k * n..(i + 1) * k * n],
                    );
                }
                self.accum(*a, da);
                self.accum(*b, db);
            }
            Op::Reshape(a) => {
                self.accum(*a, g.to_vec());
            }
            Op::Permute { x, axes } => {
                // inverse permutation routes the gradient back
                let mut inv = vec![0usize; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inv[ax] = i;
                }
                let out_shape = self.nodes[id].shape.clone();
                let dx = permute_data(g, &out_shape, &inv);
                self.accum(*x, dx);
            }
            Op::GatherRows { x, idx } => {
                let rest: usize = self.nodes[*x].shape[1..].iter().product();
                let mut dx = vec![E::zero(); self.nodes[*x].data.len()];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..rest {
                        dx[i * rest + j] += g[r * rest + j];
                    }
                }
                self.accum(*x, dx);
            }
            Op::Concat { axis, parts } => {
                let out_shape = self.nodes[id].shape.clone();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let total = out_shape[*axis];
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].shape[*axis];
                    let mut dp = vec![E::zero(); self.nodes[p].data.len()];
                    for o in 0..outer {
                        let src_base = (o * total + offset) * inner;
                        let dst_base = o * len * inner;
                        dp[dst_base..dst_base + len * inner]
                            .copy_from_slice(&g[src_base..src_base + len * inner]);
                    }
                    self.accum(p, dp);
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let in_shape = self.nodes[*x].shape.clone();
                let out_shape = self.nodes[id].shape.clone();
                let outer: usize = in_shape[..*axis].iter().product();
                let inner: usize = in_shape[*axis + 1..].iter().product();
                let len = out_shape[*axis];
                let mut dx = vec![E::zero(); self.nodes[*x].data.len()];
                for o in 0..outer {
                    let dst_base = (o * in_shape[*axis] + start) * inner;
                    let src_base = o * len * inner;
                    dx[dst_base..dst_base + len * inner]
                        .copy_from_slice(&g[src_base..src_base + len * inner]);
                }
                self.accum(*x, dx);
            }
            Op::Repeat0 { x, times } => {
                let n = self.nodes[*x].data.len();
                let mut dx = vec![E::zero(); n];
                for t in 0..*times {
                    for j in 0..n {
                        dx[j] += g[t * n + j];
                    }
                }
                self.accum(*x, dx);
            }
            Op::MeanAxis { x, axis } => {
                let in_shape = self.nodes[*x].shape.clone();
                let outer: usize = in_shape[..*axis].iter().product();
                let len = in_shape[*axis];
                let inner: usize = in_shape[*axis + 1..].iter().product();
                let inv = E::from_f64(1.0 / len as f64);
                let mut dx = vec![E::zero(); self.nodes[*x].data.len()];
                for o in 0..outer {
                    for i in 0..len {
                        for j in 0..inner {
                            dx[(o * len + i) * inner + j] = g[o * inner + j] * inv;
                        }
                    }
                }
                self.accum(*x, dx);
            }
            Op::SumAll(a) => {
                let n = self.nodes[*a].data.len();
                self.accum(*a, vec![g[0]; n]);
            }
            Op::MeanAll(a) => {
                let n = self.nodes[*a].data.len();
                let v = g[0] * E::from_f64(1.0 / n as f64);
                self.accum(*a, vec![v; n]);
            }
            Op::Softmax { x, axis } => {
                let shape = self.nodes[id].shape.clone();
                let outer: usize = shape[..*axis].iter().product();
                let len = shape[*axis];
                let inner: usize = shape[*axis + 1..].iter().product();
                let y = &self.nodes[id].data;
                let mut dx = vec![E::zero(); y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let mut dot = E::zero();
                        for i in 0..len {
                            dot += g[at(i)] * y[at(i)];
                        }
                        for i in 0..len {
                            dx[at(i)] = y[at(i)] * (g[at(i)] - dot);
                        }
                    }
                }
                self.accum(*x, dx);
            }
            Op::LayerNorm { x, gamma, beta, mean, inv_std } => {
                let c = self.nodes[*gamma].data.len();
                let rows = self.nodes[*x].data.len() / c;
                let src = &self.nodes[*x].data;
                let gam = &self.nodes[*gamma].data;
                let inv_c = E::from_f64(1.0 / c as f64);
                let mut dx = vec![E::zero(); src.len()];
                let mut dgamma = vec![E::zero(); c];
                let mut dbeta = vec![E::zero(); c];
                for r in 0..rows {
                    let m = mean[r];
                    let is = inv_std[r];
                    let mut sum_gg = E::zero();
                    let mut sum_gg_xhat = E::zero();
                    for i in 0..c {
                        let xhat = (src[r * c + i] - m) * is;
                        let gv = g[r * c + i];
                        dgamma[i] += gv * xhat;
                        dbeta[i] += gv;
                        let gg = gv * gam[i];
                        sum_gg += gg;
                        sum_gg_xhat += gg * xhat;
                    }
                    let mean_gg = sum_gg * inv_c;
                    let mean_gg_xhat = sum_gg_xhat * inv_c;
                    for i in 0..c {
                        let xhat = (src[r * c + i] - m) * is;
                        let gg = g[r * c + i] * gam[i];
                        dx[r * c + i] = is * (gg - mean_gg - xhat * mean_gg_xhat);
                    }
                }
                self.accum(*x, dx);
                self.accum(*gamma, dgamma);
                self.accum(*beta, dbeta);
            }
            Op::Relu(a) => {
                let dx: Vec<E> = self.nodes[*a]
                    .data
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| if x > E::zero() { gv } else { E::zero() })
                    .collect();
                self.accum(*a, dx);
            }
            Op::Gelu(a) => {
                let dx: Vec<E> = self.nodes[*a]
                    .data
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| gv * gelu_bwd(x))
                    .collect();
                self.accum(*a, dx);
            }
            Op::Conv2d { x, w, stride, pad } => {
                let (sx, sw) = (self.nodes[*x].shape.clone(), self.nodes[*w].shape.clone());
                let so = self.nodes[id].shape.clone();
                let d = ConvDims {
                    batch: sx[0],
                    in_h: sx[1],
                    in_w: sx[2],
                    in_c: sx[3],
                    k_h: sw[0],
                    k_w: sw[1],
                    out_c: sw[3],
                    out_h: so[1],
                    out_w: so[2],
                    stride: *stride,
                    pad: *pad,
                };
                if self.nodes[*x].needs_grad {
                    let mut dx = vec![E::zero(); self.nodes[*x].data.len()];
                    kernels::conv2d_backward_input(g, &self.nodes[*w].data, &d, &mut dx);
                    self.accum(*x, dx);
                }
                if self.nodes[*w].needs_grad {
                    let mut dw = vec![E::zero(); self.nodes[*w].data.len()];
                    kernels::conv2d_backward_weight(g, &self.nodes[*x].data, &d, &mut dw);
                    self.accum(*w, dw);
                }
            }
            Op::ConvT2d { x, w, stride, pad } => {
                let (sx, sw) = (self.nodes[*x].shape.clone(), self.nodes[*w].shape.clone());
                let so = self.nodes[id].shape.clone();
                let d = ConvTDims {
                    batch: sx[0],
                    in_h: sx[1],
                    in_w: sx[2],
                    in_c: sx[3],
                    k_h: sw[0],
                    k_w: sw[1],
                    out_c: sw[3],
                    out_h: so[1],
                    out_w: so[2],
                    stride: *stride,
                    pad: *pad,
                };
                if self.nodes[*x].needs_grad {
                    let mut dx = vec![E::zero(); self.nodes[*x].data.len()];
                    kernels::conv_transpose2d_backward_input(g, &self.nodes[*w].data, &d, &mut dx);
                    self.accum(*x, dx);
                }
                if self.nodes[*w].needs_grad {
                    let mut dw = vec![E::zero(); self.nodes[*w].data.len()];
                    kernels::conv_transpose2d_backward_weight(g, &self.nodes[*x].data, &d, &mut dw);
                    self.accum(*w, dw);
                }
            }
            Op::Bilinear { x, scale } => {
                let sx = self.nodes[*x].shape.clone();
                let (n, h, w, c) = (sx[0], sx[1], sx[2], sx[3]);
                let (oh, ow) = (h * scale, w * scale);
                let rows = kernels::bilinear_taps(oh, h, *scale);
                let cols = kernels::bilinear_taps(ow, w, *scale);
                let mut dx = vec![E::zero(); self.nodes[*x].data.len()];
                for b in 0..n {
                    for (y, &(y0, y1, fy)) in rows.iter().enumerate() {
                        for (xo, &(x0, x1, fx)) in cols.iter().enumerate() {
                            let gbase = ((b * oh + y) * ow + xo) * c;
                            let (w00, w01, w10, w11) = bilinear_weights::<E>(fy, fx);
                            let i00 = ((b * h + y0) * w + x0) * c;
                            let i01 = ((b * h + y0) * w + x1) * c;
                            let i10 = ((b * h + y1) * w + x0) * c;
                            let i11 = ((b * h + y1) * w + x1) * c;
                            for ch in 0..c {
                                let gv = g[gbase + ch];
                                dx[i00 + ch] += gv * w00;
                                dx[i01 + ch] += gv * w01;
                                dx[i10 + ch] += gv * w10;
                                dx[i11 + ch] += gv * w11;
                            }
                        }
                    }
                }
                self.accum(*x, dx);
            }
            Op::BatchNormTrain { x, gamma, beta, mean, inv_std } => {
                let c = self.nodes[*gamma].data.len();
                let rows = self.nodes[*x].data.len() / c;
                let src = &self.nodes[*x].data;
                let gam = &self.nodes[*gamma].data;
                let inv_rows = E::from_f64(1.0 / rows as f64);
                let mut dgamma = vec![E::zero(); c];
                let mut dbeta = vec![E::zero(); c];
                let mut sum_gg = vec![E::zero(); c];
                let mut sum_gg_xhat = vec![E::zero(); c];
                for r in 0..rows {
                    for ch in 0..c {
                        let xhat = (src[r * c + ch] - mean[ch]) * inv_std[ch];
                        let gv = g[r * c + ch];
                        dgamma[ch] += gv * xhat;
                        dbeta[ch] += gv;
                        let gg = gv * gam[ch];
                        sum_gg[ch] += gg;
                        sum_gg_xhat[ch] += gg * xhat;
                    }
                }
                let mut dx = vec![E::zero(); src.len()];
                for r in 0..rows {
                    for ch in 0..c {
                        let xhat = (src[r * c + ch] - mean[ch]) * inv_std[ch];
                        let gg = g[r * c + ch] * gam[ch];
                        dx[r * c + ch] = inv_std[ch]
                            * (gg - sum_gg[ch] * inv_rows - xhat * sum_gg_xhat[ch] * inv_rows);
                    }
                }
                self.accum(*x, dx);
                self.accum(*gamma, dgamma);
                self.accum(*beta, dbeta);
            }
            Op::BatchNormEval { x, gamma, beta, mean, inv_std } => {
                // running stats are constants, so this is a per-channel affine
                let c = self.nodes[*gamma].data.len();
                let rows = self.nodes[*x].data.len() / c;
                let src = &self.nodes[*x].data;
                let gam = &self.nodes[*gamma].data;
                let mut dx = vec![E::zero(); src.len()];
                let mut dgamma = vec![E::zero(); c];
                let mut dbeta = vec![E::zero(); c];
                for r in 0..rows {
                    for ch in 0..c {
                        let gv = g[r * c + ch];
                        let xhat = (src[r * c + ch] - mean[ch]) * inv_std[ch];
                        dx[r * c + ch] = gv * gam[ch] * inv_std[ch];
                        dgamma[ch] += gv * xhat;
                        dbeta[ch] += gv;
                    }
                }
                self.accum(*x, dx);
                self.accum(*gamma, dgamma);
                self.accum(*beta, dbeta);
            }
        }
    }
}

fn op_name<E: Elem>(op: &Op<E>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddBias(..) => "add_bias",
        Op::Matmul(..) => "matmul",
        Op::Bmm(..) => "bmm",
        Op::Reshape(..) => "reshape",
        Op::Permute { .. } => "permute",
        Op::GatherRows { .. } => "gather_rows",
        Op::Concat { .. } => "concat",
        Op::Slice { .. } => "slice",
        Op::Repeat0 { .. } => "repeat0",
        Op::MeanAxis { .. } => "mean_axis",
        Op::SumAll(..) => "sum_all",
        Op::MeanAll(..) => "mean_all",
        Op::Softmax { .. } => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Relu(..) => "relu",
        Op::Gelu(..) => "gelu",
        Op::Conv2d { .. } => "conv2d",
        Op::ConvT2d { .. } => "conv_transpose2d",
        Op::Bilinear { .. } => "bilinear_resize",
        Op::BatchNormTrain { .. } => "batch_norm",
        Op::BatchNormEval { .. } => "batch_norm",
    }
}

fn permute_data<E: Elem>(src: &[E], in_shape: &[usize], axes: &[usize]) -> Vec<E> {
    let ndim = in_shape.len();
    let out_shape: Vec<usize> = axes.iter().map(|&ax| in_shape[ax]).collect();
    let mut in_strides = vec![1usize; ndim];
    for i in (0..ndim.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let mut out = vec![src[0]; src.len()];
    if src.is_empty() {
        return Vec::new();
    }
    let mut coords = vec![0usize; ndim];
    for (flat, slot) in out.iter_mut().enumerate() {
        // decompose flat into out coords
        let mut rem = flat;
        for i in (0..ndim).rev() {
            coords[i] = rem % out_shape[i];
            rem /= out_shape[i];
        }
        let mut src_off = 0;
        for i in 0..ndim {
            src_off += coords[i] * in_strides[axes[i]];
        }
        *slot = src[src_off];
    }
    out
}

fn gelu_fwd<E: Elem>(x: E) -> E {
    let c0 = E::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let c1 = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    let u = c0 * (x + c1 * x * x * x);
    half * x * (E::one() + u.tanh())
}

fn gelu_bwd<E: Elem>(x: E) -> E {
    let c0 = E::from_f64(0.797_884_560_802_865_4);
    let c1 = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    let three = E::from_f64(3.0);
    let u = c0 * (x + c1 * x * x * x);
    let t = u.tanh();
    let du = c0 * (E::one() + three * c1 * x * x);
    half * (E::one() + t) + half * x * (E::one() - t * t) * du
}

fn bilinear_weights<E: Elem>(fy: f64, fx: f64) -> (E, E, E, E) {
    (
        E::from_f64((1.0 - fy) * (1.0 - fx)),
        E::from_f64((1.0 - fy) * fx),
        E::from_f64(fy * (1.0 - fx)),
        E::from_f64(fy * fx),
    )
}
