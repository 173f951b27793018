//! Operation kinds with their forward kernels and vector-Jacobian products.
//!
//! Image tensors are NHWC: `[batch, height, width, channels]`. Convolution
//! kernels are `[kh, kw, c_in, c_out]` so the innermost loop of both passes
//! runs over contiguous output channels.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dAttrs {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv2dAttrs {
    pub fn same(kernel: usize) -> Self {
        Conv2dAttrs { stride: 1, padding: kernel / 2, dilation: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolAttrs {
    pub window: usize,
    pub stride: usize,
    /// Padded cells never win the max.
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Inputs: image `[B,H,W,Cin]`, kernel `[KH,KW,Cin,Cout]`, bias `[Cout]`.
    Conv2d(Conv2dAttrs),
    MaxPool2d(PoolAttrs),
    Relu,
    Sigmoid,
    /// Inputs: `[B,In]`, weight `[In,Out]`, bias `[Out]`.
    Linear,
    /// Over the last axis.
    Softmax,
    /// Over the last axis.
    LogSoftmax,
    /// Align-corners bilinear resize of `[B,H,W,C]` to `[B,H*f,W*f,C]`.
    UpsampleBilinear {
        factor: usize,
    },
    Add,
    Sub,
    Mul,
    Div,
    /// Elementwise minimum; ties route the gradient to the first input.
    Min,
    Log,
    Square,
    AddScalar(f64),
    MulScalar(f64),
    /// `x mod period` into `[0, period)`; derivative 1 almost everywhere.
    Wrap {
        period: f64,
    },
    Sum,
    Mean,
    Reshape(Vec<usize>),
    Concat {
        axis: usize,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Conv2d(_) => "conv2d",
            Op::MaxPool2d(_) => "max_pool2d",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Linear => "linear",
            Op::Softmax => "softmax",
            Op::LogSoftmax => "log_softmax",
            Op::UpsampleBilinear { .. } => "upsample_bilinear",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Min => "min",
            Op::Log => "log",
            Op::Square => "square",
            Op::AddScalar(_) => "add_scalar",
            Op::MulScalar(_) => "mul_scalar",
            Op::Wrap { .. } => "wrap",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Reshape(_) => "reshape",
            Op::Concat { .. } => "concat",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Op::Conv2d(_) | Op::Linear => Some(3),
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Min => Some(2),
            Op::Concat { .. } => None,
            _ => Some(1),
        }
    }

    fn mismatch(&self, inputs: &[&Tensor]) -> Error {
        Error::ShapeMismatch { op: self.name(), shapes: inputs.iter().map(|t| t.shape().to_vec()).collect() }
    }
}

/// Evaluates `op` on `inputs`.
pub fn op_forward(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    match op.arity() {
        Some(n) if n != inputs.len() => return Err(op.mismatch(inputs)),
        None if inputs.is_empty() => return Err(op.mismatch(inputs)),
        _ => {}
    }
    match op {
        Op::Conv2d(a) => conv2d_forward(op, *a, inputs),
        Op::MaxPool2d(a) => max_pool_forward(op, *a, inputs[0]),
        Op::Relu => Ok(inputs[0].map(|v| v.max(0.0))),
        Op::Sigmoid => Ok(inputs[0].map(sigmoid)),
        Op::Linear => linear_forward(op, inputs),
        Op::Softmax => softmax_forward(op, inputs[0], false),
        Op::LogSoftmax => softmax_forward(op, inputs[0], true),
        Op::UpsampleBilinear { factor } => upsample_forward(op, *factor, inputs[0]),
        Op::Add => binary(op, inputs, |a, b| a + b),
        Op::Sub => binary(op, inputs, |a, b| a - b),
        Op::Mul => binary(op, inputs, |a, b| a * b),
        Op::Div => binary(op, inputs, |a, b| a / b),
        Op::Min => binary(op, inputs, |a, b| if a <= b { a } else { b }),
        Op::Log => Ok(inputs[0].map(f64::ln)),
        Op::Square => Ok(inputs[0].map(|v| v * v)),
        Op::AddScalar(c) => Ok(inputs[0].map(|v| v + c)),
        Op::MulScalar(c) => Ok(inputs[0].map(|v| v * c)),
        Op::Wrap { period } => {
            if !(*period > 0.0) {
                return Err(Error::InvalidArgument(format!("wrap period {period}")));
            }
            Ok(inputs[0].map(|v| v.rem_euclid(*period)))
        }
        Op::Sum => Ok(Tensor::scalar(inputs[0].sum())),
        Op::Mean => {
            if inputs[0].numel() == 0 {
                return Err(op.mismatch(inputs));
            }
            Ok(Tensor::scalar(inputs[0].sum() / inputs[0].numel() as f64))
        }
        Op::Reshape(shape) => inputs[0].clone().reshaped(shape.clone()),
        Op::Concat { axis } => concat_forward(op, *axis, inputs),
    }
}

/// Vector-Jacobian product of `op`: gradients w.r.t. each input for which
/// `needs[i]` is set.
pub fn op_backward(
    op: &Op,
    inputs: &[&Tensor],
    output: &Tensor,
    grad_out: &Tensor,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let mut grads: Vec<Option<Tensor>> = vec![None; inputs.len()];
    let unary = |f: &dyn Fn(usize) -> f64| -> Tensor {
        let x = inputs[0];
        let data = (0..x.numel()).map(f).collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    };
    let go = grad_out.data();
    match op {
        Op::Conv2d(a) => return conv2d_backward(*a, inputs, grad_out, needs),
        Op::MaxPool2d(a) => grads[0] = Some(max_pool_backward(*a, inputs[0], grad_out)),
        Op::Linear => return linear_backward(inputs, grad_out, needs),
        Op::Relu => {
            let x = inputs[0].data();
            grads[0] = Some(unary(&|i| if x[i] > 0.0 { go[i] } else { 0.0 }));
        }
        Op::Sigmoid => {
            let y = output.data();
            grads[0] = Some(unary(&|i| go[i] * y[i] * (1.0 - y[i])));
        }
        Op::Softmax | Op::LogSoftmax => {
            grads[0] = Some(softmax_backward(matches!(op, Op::LogSoftmax), output, grad_out));
        }
        Op::UpsampleBilinear { factor } => {
            grads[0] = Some(upsample_backward(*factor, inputs[0], grad_out));
        }
        Op::Add | Op::Sub => {
            let sign = if matches!(op, Op::Add) { 1.0 } else { -1.0 };
            grads[0] = needs[0].then(|| grad_out.clone());
            grads[1] = needs[1].then(|| grad_out.map(|g| sign * g));
        }
        Op::Mul => {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            grads[0] = needs[0].then(|| unary(&|i| go[i] * b[i]));
            grads[1] = needs[1].then(|| unary(&|i| go[i] * a[i]));
        }
        Op::Div => {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            grads[0] = needs[0].then(|| unary(&|i| go[i] / b[i]));
            grads[1] = needs[1].then(|| unary(&|i| -go[i] * a[i] / (b[i] * b[i])));
        }
        Op::Min => {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            grads[0] = needs[0].then(|| unary(&|i| if a[i] <= b[i] { go[i] } else { 0.0 }));
            grads[1] = needs[1].then(|| unary(&|i| if a[i] <= b[i] { 0.0 } else { go[i] }));
        }
        Op::Log => {
            let x = inputs[0].data();
            grads[0] = Some(unary(&|i| go[i] / x[i]));
        }
        Op::Square => {
            let x = inputs[0].data();
            grads[0] = Some(unary(&|i| 2.0 * x[i] * go[i]));
        }
        Op::AddScalar(_) | Op::Wrap { .. } => grads[0] = Some(grad_out.clone()),
        Op::MulScalar(c) => grads[0] = Some(grad_out.map(|g| g * c)),
        Op::Sum => grads[0] = Some(Tensor::full(inputs[0].shape(), grad_out.item())),
        Op::Mean => {
            let n = inputs[0].numel() as f64;
            grads[0] = Some(Tensor::full(inputs[0].shape(), grad_out.item() / n));
        }
        Op::Reshape(_) => {
            let g = grad_out.clone().reshaped(inputs[0].shape().to_vec());
            grads[0] = Some(g.expect("reshape preserves numel"));
        }
        Op::Concat { axis } => return concat_backward(*axis, inputs, grad_out, needs),
    }
    grads
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn binary(op: &Op, inputs: &[&Tensor], f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let (a, b) = (inputs[0], inputs[1]);
    if a.shape() != b.shape() {
        return Err(op.mismatch(inputs));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn dims4(t: &Tensor) -> Option<[usize; 4]> {
    match *t.shape() {
        [b, h, w, c] => Some([b, h, w, c]),
        _ => None,
    }
}

fn conv_out(size: usize, kernel: usize, a: Conv2dAttrs) -> Option<usize> {
    let span = a.dilation * (kernel - 1) + 1;
    let padded = size + 2 * a.padding;
    (padded >= span).then(|| (padded - span) / a.stride + 1)
}

struct ConvGeom {
    b: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    oh: usize,
    ow: usize,
}

fn conv_geom(op: &Op, a: Conv2dAttrs, inputs: &[&Tensor]) -> Result<ConvGeom> {
    if a.stride == 0 || a.dilation == 0 {
        return Err(Error::InvalidArgument("conv2d stride and dilation must be >= 1".into()));
    }
    let ([b, h, w, cin], [kh, kw, kcin, cout]) = match (dims4(inputs[0]), dims4(inputs[1])) {
        (Some(x), Some(k)) => (x, k),
        _ => return Err(op.mismatch(inputs)),
    };
    if kcin != cin || inputs[2].shape() != [cout] || kh == 0 || kw == 0 {
        return Err(op.mismatch(inputs));
    }
    let (Some(oh), Some(ow)) = (conv_out(h, kh, a), conv_out(w, kw, a)) else {
        return Err(op.mismatch(inputs));
    };
    Ok(ConvGeom { b, h, w, cin, kh, kw, cout, oh, ow })
}

/// Input coordinate hit by kernel tap `k` at output position `o`, if inside.
#[inline]
fn tap(o: usize, k: usize, a: Conv2dAttrs, size: usize) -> Option<usize> {
    let pos = (o * a.stride + k * a.dilation) as isize - a.padding as isize;
    (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
}

fn conv2d_forward(op: &Op, a: Conv2dAttrs, inputs: &[&Tensor]) -> Result<Tensor> {
    let g = conv_geom(op, a, inputs)?;
    let (x, k, bias) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
    let mut out = vec![0.0; g.b * g.oh * g.ow * g.cout];
    for n in 0..g.b {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let o0 = ((n * g.oh + oy) * g.ow + ox) * g.cout;
                let acc = &mut out[o0..o0 + g.cout];
                acc.copy_from_slice(bias);
                for ky in 0..g.kh {
                    let Some(iy) = tap(oy, ky, a, g.h) else { continue };
                    for kx in 0..g.kw {
                        let Some(ix) = tap(ox, kx, a, g.w) else { continue };
                        let x0 = ((n * g.h + iy) * g.w + ix) * g.cin;
                        let k0 = (ky * g.kw + kx) * g.cin * g.cout;
                        for ci in 0..g.cin {
                            let xv = x[x0 + ci];
                            if xv == 0.0 {
                                continue;
                            }
                            let row = &k[k0 + ci * g.cout..k0 + (ci + 1) * g.cout];
                            for (o, &kv) in acc.iter_mut().zip(row) {
                                *o += xv * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.b, g.oh, g.ow, g.cout], out)
}

fn conv2d_backward(a: Conv2dAttrs, inputs: &[&Tensor], grad_out: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
    let g = conv_geom(&Op::Conv2d(a), a, inputs).expect("validated in forward");
    let (x, k) = (inputs[0].data(), inputs[1].data());
    let go = grad_out.data();
    let mut gx = needs[0].then(|| vec![0.0; x.len()]);
    let mut gk = needs[1].then(|| vec![0.0; k.len()]);
    let mut gb = needs[2].then(|| vec![0.0; g.cout]);
    for n in 0..g.b {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let o0 = ((n * g.oh + oy) * g.ow + ox) * g.cout;
                let gout = &go[o0..o0 + g.cout];
                if let Some(gb) = gb.as_mut() {
                    for (b, &v) in gb.iter_mut().zip(gout) {
                        *b += v;
                    }
                }
                if gx.is_none() && gk.is_none() {
                    continue;
                }
                for ky in 0..g.kh {
                    let Some(iy) = tap(oy, ky, a, g.h) else { continue };
                    for kx in 0..g.kw {
                        let Some(ix) = tap(ox, kx, a, g.w) else { continue };
                        let x0 = ((n * g.h + iy) * g.w + ix) * g.cin;
                        let k0 = (ky * g.kw + kx) * g.cin * g.cout;
                        for ci in 0..g.cin {
                            let r0 = k0 + ci * g.cout;
                            if let Some(gx) = gx.as_mut() {
                                let row = &k[r0..r0 + g.cout];
                                let dot: f64 = row.iter().zip(gout).map(|(kv, gv)| kv * gv).sum();
                                gx[x0 + ci] += dot;
                            }
                            if let Some(gk) = gk.as_mut() {
                                let xv = x[x0 + ci];
                                if xv != 0.0 {
                                    for (w, &gv) in gk[r0..r0 + g.cout].iter_mut().zip(gout) {
                                        *w += xv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let wrap =
        |data: Option<Vec<f64>>, t: &Tensor| data.map(|d| Tensor::new(t.shape().to_vec(), d).expect("same shape"));
    vec![wrap(gx, inputs[0]), wrap(gk, inputs[1]), wrap(gb, inputs[2])]
}

fn pool_geom(a: PoolAttrs, x: &Tensor) -> Option<([usize; 4], usize, usize)> {
    let [b, h, w, c] = dims4(x)?;
    if a.window == 0 || a.stride == 0 || a.padding >= a.window {
        return None;
    }
    let out = |s: usize| {
        let padded = s + 2 * a.padding;
        (padded >= a.window).then(|| (padded - a.window) / a.stride + 1)
    };
    Some(([b, h, w, c], out(h)?, out(w)?))
}

/// Flat index of the first maximal element in each pooling window.
fn pool_argmax(a: PoolAttrs, x: &Tensor) -> ([usize; 4], Vec<usize>) {
    let ([b, h, w, c], oh, ow) = pool_geom(a, x).expect("validated in forward");
    let xd = x.data();
    let mut arg = vec![usize::MAX; b * oh * ow * c];
    let mut best = vec![f64::NEG_INFINITY; c];
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let o0 = ((n * oh + oy) * ow + ox) * c;
                best.fill(f64::NEG_INFINITY);
                for ky in 0..a.window {
                    let iy = (oy * a.stride + ky) as isize - a.padding as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kx in 0..a.window {
                        let ix = (ox * a.stride + kx) as isize - a.padding as isize;
                        if ix < 0 || ix as usize >= w {
                            continue;
                        }
                        let x0 = ((n * h + iy as usize) * w + ix as usize) * c;
                        for ch in 0..c {
                            let v = xd[x0 + ch];
                            if v > best[ch] || arg[o0 + ch] == usize::MAX {
                                best[ch] = v;
                                arg[o0 + ch] = x0 + ch;
                            }
                        }
                    }
                }
            }
        }
    }
    ([b, oh, ow, c], arg)
}

fn max_pool_forward(op: &Op, a: PoolAttrs, x: &Tensor) -> Result<Tensor> {
    if pool_geom(a, x).is_none() {
        return Err(op.mismatch(&[x]));
    }
    let (shape, arg) = pool_argmax(a, x);
    let data = arg.iter().map(|&i| x.data()[i]).collect();
    Tensor::new(shape.to_vec(), data)
}

fn max_pool_backward(a: PoolAttrs, x: &Tensor, grad_out: &Tensor) -> Tensor {
    let (_, arg) = pool_argmax(a, x);
    let mut gx = Tensor::zeros(x.shape());
    let gd = gx.data_mut();
    for (&i, &g) in arg.iter().zip(grad_out.data()) {
        gd[i] += g;
    }
    gx
}

fn linear_forward(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    let (x, w, bias) = (inputs[0], inputs[1], inputs[2]);
    let ([b, fin], [win, fout]) = match (x.shape(), w.shape()) {
        (&[b, fin], &[win, fout]) => ([b, fin], [win, fout]),
        _ => return Err(op.mismatch(inputs)),
    };
    if fin != win || bias.shape() != [fout] {
        return Err(op.mismatch(inputs));
    }
    let (xd, wd) = (x.data(), w.data());
    let mut out = Vec::with_capacity(b * fout);
    for n in 0..b {
        let mut row = bias.data().to_vec();
        for i in 0..fin {
            let xv = xd[n * fin + i];
            for (o, &wv) in row.iter_mut().zip(&wd[i * fout..(i + 1) * fout]) {
                *o += xv * wv;
            }
        }
        out.extend(row);
    }
    Tensor::new(vec![b, fout], out)
}

fn linear_backward(inputs: &[&Tensor], grad_out: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
    let (x, w) = (inputs[0], inputs[1]);
    let (b, fin) = (x.shape()[0], x.shape()[1]);
    let fout = w.shape()[1];
    let (xd, wd, go) = (x.data(), w.data(), grad_out.data());
    let mut gx = needs[0].then(|| Tensor::zeros(x.shape()));
    let mut gw = needs[1].then(|| Tensor::zeros(w.shape()));
    let mut gb = needs[2].then(|| Tensor::zeros(&[fout]));
    for n in 0..b {
        let grow = &go[n * fout..(n + 1) * fout];
        for i in 0..fin {
            let wrow = &wd[i * fout..(i + 1) * fout];
            if let Some(gx) = gx.as_mut() {
                gx.data_mut()[n * fin + i] += wrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
            }
            if let Some(gw) = gw.as_mut() {
                let xv = xd[n * fin + i];
                for (g, &v) in gw.data_mut()[i * fout..(i + 1) * fout].iter_mut().zip(grow) {
                    *g += xv * v;
                }
            }
        }
        if let Some(gb) = gb.as_mut() {
            for (g, &v) in gb.data_mut().iter_mut().zip(grow) {
                *g += v;
            }
        }
    }
    vec![gx, gw, gb]
}

fn softmax_forward(op: &Op, x: &Tensor, log: bool) -> Result<Tensor> {
    let k = match x.shape().last() {
        Some(&k) if k > 0 => k,
        _ => return Err(op.mismatch(&[x])),
    };
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        if log {
            let lse = max + denom.ln();
            row.iter_mut().for_each(|v| *v -= lse);
        } else {
            row.iter_mut().for_each(|v| *v = (*v - max).exp() / denom);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn softmax_backward(log: bool, y: &Tensor, grad_out: &Tensor) -> Tensor {
    let k = *y.shape().last().expect("validated in forward");
    let mut gx = Vec::with_capacity(y.numel());
    for (yr, gr) in y.data().chunks(k).zip(grad_out.data().chunks(k)) {
        if log {
            let gsum: f64 = gr.iter().sum();
            gx.extend(yr.iter().zip(gr).map(|(&l, &g)| g - l.exp() * gsum));
        } else {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            gx.extend(yr.iter().zip(gr).map(|(&p, &g)| p * (g - dot)));
        }
    }
    Tensor::new(y.shape().to_vec(), gx).expect("same shape")
}

/// Per-output-coordinate `(lo, hi, frac)` under align-corners sampling.
fn align_corners_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|o| {
            if dst == 1 || src == 1 {
                return (0, 0, 0.0);
            }
            let pos = (o * (src - 1)) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

fn upsample_forward(op: &Op, factor: usize, x: &Tensor) -> Result<Tensor> {
    let Some([b, h, w, c]) = dims4(x) else { return Err(op.mismatch(&[x])) };
    if factor == 0 {
        return Err(Error::InvalidArgument("upsample factor must be >= 1".into()));
    }
    let (oh, ow) = (h * factor, w * factor);
    let (ys, xs) = (align_corners_axis(h, oh), align_corners_axis(w, ow));
    let xd = x.data();
    let at = |n: usize, y: usize, xx: usize, ch: usize| xd[((n * h + y) * w + xx) * c + ch];
    let mut out = Vec::with_capacity(b * oh * ow * c);
    for n in 0..b {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                for ch in 0..c {
                    let (a, bb) = (at(n, y0, x0, ch), at(n, y0, x1, ch));
                    let (cc, d) = (at(n, y1, x0, ch), at(n, y1, x1, ch));
                    let top = a + fx * (bb - a);
                    let bottom = cc + fx * (d - cc);
                    out.push(top + fy * (bottom - top));
                }
            }
        }
    }
    Tensor::new(vec![b, oh, ow, c], out)
}

fn upsample_backward(factor: usize, x: &Tensor, grad_out: &Tensor) -> Tensor {
    let [b, h, w, c] = dims4(x).expect("validated in forward");
    let (oh, ow) = (h * factor, w * factor);
    let (ys, xs) = (align_corners_axis(h, oh), align_corners_axis(w, ow));
    let mut gx = Tensor::zeros(x.shape());
    let gd = gx.data_mut();
    let go = grad_out.data();
    let idx = |n: usize, y: usize, xx: usize, ch: usize| ((n * h + y) * w + xx) * c + ch;
    let mut o = 0;
    for n in 0..b {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                for ch in 0..c {
                    let g = go[o];
                    o += 1;
                    gd[idx(n, y0, x0, ch)] += g * (1.0 - fy) * (1.0 - fx);
                    gd[idx(n, y0, x1, ch)] += g * (1.0 - fy) * fx;
                    gd[idx(n, y1, x0, ch)] += g * fy * (1.0 - fx);
                    gd[idx(n, y1, x1, ch)] += g * fy * fx;
                }
            }
        }
    }
    gx
}

fn concat_forward(op: &Op, axis: usize, inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs[0].shape();
    if axis >= first.len() {
        return Err(op.mismatch(inputs));
    }
    for t in inputs {
        let s = t.shape();
        let ok = s.len() == first.len() && s.iter().zip(first).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(op.mismatch(inputs));
        }
    }
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let total_axis: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut out = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for t in inputs {
            let block = t.shape()[axis] * inner;
            out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
        }
    }
    let mut shape = first.to_vec();
    shape[axis] = total_axis;
    Tensor::new(shape, out)
}

fn concat_backward(axis: usize, inputs: &[&Tensor], grad_out: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
    let first = inputs[0].shape();
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let row: usize = grad_out.shape()[axis] * inner;
    let go = grad_out.data();
    let mut offset = 0;
    inputs
        .iter()
        .zip(needs)
        .map(|(t, &need)| {
            let block = t.shape()[axis] * inner;
            let start = offset;
            offset += block;
            need.then(|| {
                let mut data = Vec::with_capacity(t.numel());
                for o in 0..outer {
                    data.extend_from_slice(&go[o * row + start..o * row + start + block]);
                }
                Tensor::new(t.shape().to_vec(), data).expect("same shape")
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let y = op_forward(&Op::Relu, &[&Tensor::from_vec(vec![-1.0, 0.0, 2.0])]).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn constant_map_upsamples_to_constant() {
        let x = Tensor::full(&[1, 2, 2, 1], 0.37);
        let y = op_forward(&Op::UpsampleBilinear { factor: 16 }, &[&x]).unwrap();
        assert_eq!(y.shape(), &[1, 32, 32, 1]);
        assert!(y.data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn upsample_factor_one_is_identity() {
        let x = t(&[1, 2, 3, 2], &[1.0, -2.0, 3.5, 4.0, 0.1, 9.0, -7.0, 2.0, 1.5, 0.0, 6.0, 3.0]);
        let y = op_forward(&Op::UpsampleBilinear { factor: 1 }, &[&x]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn upsample_keeps_corners() {
        let x = t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let y = op_forward(&Op::UpsampleBilinear { factor: 4 }, &[&x]).unwrap();
        let d = y.data();
        assert_eq!((d[0], d[7], d[56], d[63]), (1.0, 2.0, 3.0, 4.0));
        // linear along the top edge
        assert!((d[1] - (1.0 + 1.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_conv_is_identity() {
        let x = t(&[1, 3, 4, 1], &(0..12).map(|v| v as f64 * 0.5 - 2.0).collect::<Vec<_>>());
        let mut k = Tensor::zeros(&[3, 3, 1, 1]);
        k.data_mut()[4] = 1.0;
        let y = op_forward(&Op::Conv2d(Conv2dAttrs::same(3)), &[&x, &k, &Tensor::zeros(&[1])]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dilated_conv_output_shape() {
        let x = Tensor::zeros(&[2, 6, 8, 3]);
        let k = Tensor::zeros(&[3, 3, 3, 5]);
        let b = Tensor::zeros(&[5]);
        for rate in [1, 2, 4] {
            let a = Conv2dAttrs { stride: 1, padding: rate, dilation: rate };
            let y = op_forward(&Op::Conv2d(a), &[&x, &k, &b]).unwrap();
            assert_eq!(y.shape(), &[2, 6, 8, 5]);
        }
        let a = Conv2dAttrs { stride: 2, padding: 1, dilation: 1 };
        let y = op_forward(&Op::Conv2d(a), &[&x, &k, &b]).unwrap();
        assert_eq!(y.shape(), &[2, 3, 4, 5]);
    }

    #[test]
    fn conv_channel_mismatch_names_op() {
        let x = Tensor::zeros(&[1, 4, 4, 2]);
        let k = Tensor::zeros(&[3, 3, 3, 1]);
        let err = op_forward(&Op::Conv2d(Conv2dAttrs::same(3)), &[&x, &k, &Tensor::zeros(&[1])]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv2d") && msg.contains("[3, 3, 3, 1]"), "{msg}");
    }

    #[test]
    fn max_pool_ties_route_to_first() {
        let x = t(&[1, 2, 2, 1], &[5.0, 5.0, 1.0, 5.0]);
        let a = PoolAttrs { window: 2, stride: 2, padding: 0 };
        let y = op_forward(&Op::MaxPool2d(a), &[&x]).unwrap();
        assert_eq!(y.data(), &[5.0]);
        let g = op_backward(&Op::MaxPool2d(a), &[&x], &y, &Tensor::full(&[1, 1, 1, 1], 1.0), &[true]);
        assert_eq!(g[0].as_ref().unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn padded_pool_ignores_padding() {
        let x = t(&[1, 1, 2, 1], &[-3.0, -4.0]);
        let a = PoolAttrs { window: 3, stride: 3, padding: 1 };
        let y = op_forward(&Op::MaxPool2d(a), &[&x]).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[-3.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, -1000.0, 0.0, 1000.0]);
        let y = op_forward(&Op::Softmax, &[&x]).unwrap();
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let l = op_forward(&Op::LogSoftmax, &[&x]).unwrap();
        assert!(l.all_finite());
    }

    #[test]
    fn concat_along_channels() {
        let a = t(&[1, 1, 2, 1], &[1.0, 2.0]);
        let b = t(&[1, 1, 2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let y = op_forward(&Op::Concat { axis: 3 }, &[&a, &b]).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 3]);
        assert_eq!(y.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn wrap_reduces_into_period() {
        let y = op_forward(&Op::Wrap { period: 1440.0 }, &[&Tensor::from_vec(vec![-1.0, 1440.0, 2900.0])]).unwrap();
        assert_eq!(y.data(), &[1439.0, 0.0, 20.0]);
    }

    #[test]
    fn binary_shape_mismatch() {
        let err = op_forward(&Op::Add, &[&Tensor::zeros(&[2]), &Tensor::zeros(&[3])]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { op: "add", .. }));
    }
}
