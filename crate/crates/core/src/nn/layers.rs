//! Primitive layers with explicit forward and backward passes.
//!
//! Sequence tensors are `[T, C]` for a single sample or `[B, T, C]` for a
//! batch. Dense inputs are `[D]` or `[B, D]`.

use crate::error::{arg_err, dim_err, Error, Result};
use crate::numerics::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, Rng, Tensor};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// `(batch, steps, channels)` of a sequence tensor.
pub(crate) fn seq_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [t, c] => Ok((1, t, c)),
        [b, t, c] => Ok((b, t, c)),
        ref s => Err(dim_err(format!("expected a [T, C] or [B, T, C] sequence, got {s:?}"))),
    }
}

fn check_kernel(kernel: &Tensor, bias: &Tensor, in_channels: usize) -> Result<(usize, usize)> {
    let [k, cin, cout] = *kernel.shape() else {
        return Err(dim_err(format!("kernel must be [k, Cin, Cout], got {:?}", kernel.shape())));
    };
    if cin != in_channels {
        return Err(dim_err(format!(
            "kernel expects {cin} input channels but input has {in_channels}"
        )));
    }
    if bias.shape() != [cout] {
        return Err(dim_err(format!("bias {:?} does not match {cout} output channels", bias.shape())));
    }
    Ok((k, cout))
}

/// Causal dilated convolution over a batch; output keeps the input length.
pub(crate) fn conv_forward_raw(x: &Tensor, kernel: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor> {
    if dilation == 0 {
        return Err(arg_err("dilation must be >= 1"));
    }
    let (b, t, cin) = seq_dims(x)?;
    let (k, cout) = check_kernel(kernel, bias, cin)?;
    let mut out = Vec::with_capacity(b * t * cout);
    for _ in 0..b * t {
        out.extend_from_slice(bias.data());
    }
    let xd = x.data();
    let kd = kernel.data();
    for s in 0..b {
        let xs = &xd[s * t * cin..(s + 1) * t * cin];
        let ys = &mut out[s * t * cout..(s + 1) * t * cout];
        for j in 0..k {
            let shift = (k - 1 - j) * dilation;
            if shift >= t {
                continue;
            }
            let rows = t - shift;
            matmul_acc(
                &xs[..rows * cin],
                &kd[j * cin * cout..(j + 1) * cin * cout],
                &mut ys[shift * cout..],
                rows,
                cin,
                cout,
            );
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank >= 2") = cout;
    Ok(Tensor::from_parts(shape, out))
}

/// Adjoint of [`conv_forward_raw`]: `(grad_x, grad_kernel, grad_bias)`.
pub(crate) fn conv_backward_raw(
    x: &Tensor,
    kernel: &Tensor,
    dilation: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, t, cin) = seq_dims(x)?;
    let [k, kcin, cout] = *kernel.shape() else {
        return Err(dim_err("kernel must be rank 3"));
    };
    if kcin != cin {
        return Err(dim_err("cached input does not match kernel"));
    }
    let (gb_, gt, gc) = seq_dims(grad_out)?;
    if (gb_, gt, gc) != (b, t, cout) {
        return Err(dim_err(format!(
            "grad_out {:?} does not match forward output [{b}, {t}, {cout}]",
            grad_out.shape()
        )));
    }
    let mut gx = vec![0.0; b * t * cin];
    let mut gk = vec![0.0; k * cin * cout];
    let mut gbias = vec![0.0; cout];
    let xd = x.data();
    let kd = kernel.data();
    let gd = grad_out.data();
    for row in gd.chunks_exact(cout) {
        for (g, &v) in gbias.iter_mut().zip(row) {
            *g += v;
        }
    }
    for s in 0..b {
        let xs = &xd[s * t * cin..(s + 1) * t * cin];
        let gys = &gd[s * t * cout..(s + 1) * t * cout];
        let gxs = &mut gx[s * t * cin..(s + 1) * t * cin];
        for j in 0..k {
            let shift = (k - 1 - j) * dilation;
            if shift >= t {
                continue;
            }
            let rows = t - shift;
            let kj = &kd[j * cin * cout..(j + 1) * cin * cout];
            matmul_a_bt_acc(&gys[shift * cout..], kj, &mut gxs[..rows * cin], rows, cout, cin);
            matmul_at_b_acc(
                &xs[..rows * cin],
                &gys[shift * cout..],
                &mut gk[j * cin * cout..(j + 1) * cin * cout],
                rows,
                cin,
                cout,
            );
        }
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(kernel.shape().to_vec(), gk),
        Tensor::from_parts(vec![cout], gbias),
    ))
}

/// State kept by a convolution forward pass for its backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache {
    input: Tensor,
    kernel: Tensor,
    dilation: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub grad_x: Tensor,
    pub grad_kernel: Tensor,
    pub grad_bias: Tensor,
}

/// `y[t,o] = bias[o] + Σ_j Σ_c kernel[j,c,o] · x[t − (k−1−j)·dilation, c]`,
/// with positions before the start of the sequence read as zero.
pub fn conv1d_causal_forward(
    x: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<(Tensor, ConvCache)> {
    let y = conv_forward_raw(x, kernel, bias, dilation)?.ensure_finite("conv1d_causal_forward")?;
    let cache = ConvCache {
        input: x.clone(),
        kernel: kernel.clone(),
        dilation,
    };
    Ok((y, cache))
}

pub fn conv1d_causal_backward(cache: &ConvCache, grad_out: &Tensor) -> Result<ConvGrads> {
    let (grad_x, grad_kernel, grad_bias) =
        conv_backward_raw(&cache.input, &cache.kernel, cache.dilation, grad_out)?;
    Ok(ConvGrads {
        grad_x,
        grad_kernel,
        grad_bias,
    })
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| v.max(0.0)).collect())
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(dim_err(format!(
            "relu input {:?} vs grad {:?}",
            input.shape(),
            grad_out.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}

/// Inverted dropout. Returns the output and the multiplicative mask.
pub fn dropout_forward(x: &Tensor, rate: f64, rng: &mut Rng, mode: Mode) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(arg_err(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Inference || rate == 0.0 {
        return Ok((x.clone(), Tensor::filled(x.shape(), 1.0)));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
        .collect();
    let y = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
    Ok((
        Tensor::from_parts(x.shape().to_vec(), y),
        Tensor::from_parts(x.shape().to_vec(), mask),
    ))
}

pub fn dropout_backward(mask: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if mask.shape() != grad_out.shape() {
        return Err(dim_err("dropout mask and gradient shapes differ"));
    }
    let data = mask.data().iter().zip(grad_out.data()).map(|(m, g)| m * g).collect();
    Ok(Tensor::from_parts(mask.shape().to_vec(), data))
}

fn dense_dims(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let (b, d) = match *x.shape() {
        [d] => (1, d),
        [b, d] => (b, d),
        ref s => return Err(dim_err(format!("dense input must be [D] or [B, D], got {s:?}"))),
    };
    let [wd, u] = *weight.shape() else {
        return Err(dim_err(format!("dense weight must be [D, U], got {:?}", weight.shape())));
    };
    if wd != d || bias.shape() != [u] {
        return Err(dim_err(format!(
            "dense input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    Ok((b, d, u))
}

/// `y = x·W + b`.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, d, u) = dense_dims(x, weight, bias)?;
    let mut out = Vec::with_capacity(b * u);
    for _ in 0..b {
        out.extend_from_slice(bias.data());
    }
    matmul_acc(x.data(), weight.data(), &mut out, b, d, u);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = u;
    Ok(Tensor::from_parts(shape, out))
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub grad_x: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
}

pub fn dense_backward(x: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let [d, u] = *weight.shape() else {
        return Err(dim_err("dense weight must be rank 2"));
    };
    let b = x.len() / d.max(1);
    if x.len() != b * d || grad_out.len() != b * u {
        return Err(dim_err(format!(
            "dense backward: input {:?}, weight {:?}, grad {:?}",
            x.shape(),
            weight.shape(),
            grad_out.shape()
        )));
    }
    let mut gx = vec![0.0; b * d];
    let mut gw = vec![0.0; d * u];
    let mut gb = vec![0.0; u];
    matmul_a_bt_acc(grad_out.data(), weight.data(), &mut gx, b, u, d);
    matmul_at_b_acc(x.data(), grad_out.data(), &mut gw, b, d, u);
    for row in grad_out.data().chunks_exact(u) {
        for (g, &v) in gb.iter_mut().zip(row) {
            *g += v;
        }
    }
    Ok(DenseGrads {
        grad_x: Tensor::from_parts(x.shape().to_vec(), gx),
        grad_weight: Tensor::from_parts(vec![d, u], gw),
        grad_bias: Tensor::from_parts(vec![u], gb),
    })
}

/// Row-major `[T, C] -> [T·C]` (or `[B, T, C] -> [B, T·C]`).
pub fn flatten(x: &Tensor) -> Result<Tensor> {
    match *x.shape() {
        [t, c] => x.reshape(&[t * c]),
        [b, t, c] => x.reshape(&[b, t * c]),
        ref s => Err(dim_err(format!("flatten expects rank 2 or 3, got {s:?}"))),
    }
}

/// Inverse of [`flatten`].
pub fn unflatten(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    x.reshape(shape)
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut probs = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = probs.len();
        let mut sum = 0.0;
        for &z in row {
            let e = (z - max).exp();
            sum += e;
            probs.push(e);
        }
        for p in &mut probs[start..] {
            *p /= sum;
        }
    }
    probs
}

fn logits_dims(logits: &Tensor) -> Result<(usize, usize)> {
    match *logits.shape() {
        [k] => Ok((1, k)),
        [b, k] => Ok((b, k)),
        ref s => Err(dim_err(format!("logits must be [K] or [B, K], got {s:?}"))),
    }
}

fn check_labels(labels: &[usize], batch: usize, k: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(dim_err(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::Label {
            index,
            label,
            num_classes: k,
        });
    }
    Ok(())
}

/// Mean sparse categorical cross-entropy and the softmax probabilities.
pub fn softmax_xent_forward(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = logits_dims(logits)?;
    check_labels(labels, b, k)?;
    let probs = softmax_rows(logits.data(), k);
    let mut loss = 0.0;
    for (row, &y) in logits.data().chunks_exact(k).zip(labels) {
        // log-sum-exp form of −log p_y keeps the loss finite even when p_y underflows
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("softmax_xent_forward".into()));
    }
    Ok((loss, Tensor::from_parts(logits.shape().to_vec(), probs)))
}

/// `(probs − onehot(labels)) / B`.
pub fn softmax_xent_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, k) = logits_dims(probs)?;
    check_labels(labels, b, k)?;
    let scale = 1.0 / b as f64;
    let mut g: Vec<f64> = probs.data().iter().map(|p| p * scale).collect();
    for (i, &y) in labels.iter().enumerate() {
        g[i * k + y] -= scale;
    }
    Ok(Tensor::from_parts(probs.shape().to_vec(), g))
}
