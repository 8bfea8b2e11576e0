//! Layer kernels on flat buffers.
//!
//! Convolution-stage activations are stored channel-major as `[C, B, L]`
//! (channel, batch, time) so that each output channel of a convolution is one
//! contiguous row of a single GEMM, and batch-norm statistics per channel run
//! over a contiguous slice. Dense activations are `[B, F]`.

/// Row-major `C = alpha · op(A) · op(B) + beta · C` where `op(A)` is `m × k`
/// and `op(B)` is `k × n`. `a_t`/`b_t` mark operands stored transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index dgemm touches given these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub batch: usize,
    pub in_len: usize,
}

impl ConvShape {
    pub fn out_len(&self) -> usize {
        self.in_len + 1 - self.kernel
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel
    }
}

/// Unrolls `[C, B, L]` into `[C·K, B·Lout]` patches.
pub fn im2col(x: &[f64], s: &ConvShape) -> Vec<f64> {
    let (lout, width) = (s.out_len(), s.batch * s.out_len());
    let mut cols = vec![0.0; s.patch() * width];
    for c in 0..s.in_channels {
        for k in 0..s.kernel {
            let row = &mut cols[(c * s.kernel + k) * width..][..width];
            for b in 0..s.batch {
                let src = &x[(c * s.batch + b) * s.in_len + k..][..lout];
                row[b * lout..(b + 1) * lout].copy_from_slice(src);
            }
        }
    }
    cols
}

/// Valid 1-D cross-correlation, stride 1. Weights are `[O, C, K]`.
/// Returns the `[O, B, Lout]` output and the patch matrix for backward.
pub fn conv_forward(x: &[f64], weight: &[f64], bias: &[f64], s: &ConvShape) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(x, s);
    let width = s.batch * s.out_len();
    let mut out = vec![0.0; s.out_channels * width];
    for (o, row) in out.chunks_mut(width).enumerate() {
        row.fill(bias[o]);
    }
    gemm(s.out_channels, s.patch(), width, weight, false, &cols, false, 1.0, &mut out);
    (out, cols)
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub fn conv_backward(
    grad_out: &[f64],
    cols: &[f64],
    weight: &[f64],
    s: &ConvShape,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> Vec<f64> {
    let (lout, width) = (s.out_len(), s.batch * s.out_len());
    for (o, row) in grad_out.chunks(width).enumerate() {
        grad_bias[o] += row.iter().sum::<f64>();
    }
    // dW += dY · colsᵀ
    gemm(s.out_channels, width, s.patch(), grad_out, false, cols, true, 1.0, grad_weight);
    // dcols = Wᵀ · dY
    let mut grad_cols = vec![0.0; s.patch() * width];
    gemm(s.patch(), s.out_channels, width, weight, true, grad_out, false, 0.0, &mut grad_cols);
    let mut grad_x = vec![0.0; s.in_channels * s.batch * s.in_len];
    for c in 0..s.in_channels {
        for k in 0..s.kernel {
            let row = &grad_cols[(c * s.kernel + k) * width..][..width];
            for b in 0..s.batch {
                let dst = &mut grad_x[(c * s.batch + b) * s.in_len + k..][..lout];
                for (d, g) in dst.iter_mut().zip(&row[b * lout..(b + 1) * lout]) {
                    *d += g;
                }
            }
        }
    }
    grad_x
}

pub const BN_EPS: f64 = 1e-5;

/// Per-channel statistics cached by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Training-mode batch norm over `[C, N]` with batch statistics.
pub fn batchnorm_forward_train(x: &[f64], gamma: &[f64], beta: &[f64]) -> (Vec<f64>, BatchNormCache) {
    let channels = gamma.len();
    let n = x.len() / channels;
    let mut out = vec![0.0; x.len()];
    let mut cache = BatchNormCache {
        normalized: vec![0.0; x.len()],
        inv_std: Vec::with_capacity(channels),
        mean: Vec::with_capacity(channels),
        var: Vec::with_capacity(channels),
    };
    for c in 0..channels {
        let row = &x[c * n..(c + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv_std = 1.0 / (var + BN_EPS).sqrt();
        let xhat = &mut cache.normalized[c * n..(c + 1) * n];
        let y = &mut out[c * n..(c + 1) * n];
        for i in 0..n {
            xhat[i] = (row[i] - mean) * inv_std;
            y[i] = gamma[c] * xhat[i] + beta[c];
        }
        cache.inv_std.push(inv_std);
        cache.mean.push(mean);
        cache.var.push(var);
    }
    (out, cache)
}

/// Evaluation-mode batch norm with stored running statistics.
pub fn batchnorm_forward_eval(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> Vec<f64> {
    let n = x.len() / gamma.len();
    let mut out = x.to_vec();
    for (c, row) in out.chunks_mut(n).enumerate() {
        let scale = gamma[c] / (running_var[c] + BN_EPS).sqrt();
        let shift = beta[c] - running_mean[c] * scale;
        for v in row {
            *v = *v * scale + shift;
        }
    }
    out
}

pub fn batchnorm_backward(
    grad_out: &[f64],
    cache: &BatchNormCache,
    gamma: &[f64],
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
) -> Vec<f64> {
    let n = grad_out.len() / gamma.len();
    let nf = n as f64;
    let mut grad_x = vec![0.0; grad_out.len()];
    for c in 0..gamma.len() {
        let dy = &grad_out[c * n..(c + 1) * n];
        let xhat = &cache.normalized[c * n..(c + 1) * n];
        let sum_dy: f64 = dy.iter().sum();
        let sum_dy_xhat: f64 = dy.iter().zip(xhat).map(|(d, h)| d * h).sum();
        grad_gamma[c] += sum_dy_xhat;
        grad_beta[c] += sum_dy;
        let k = gamma[c] * cache.inv_std[c] / nf;
        for (i, g) in grad_x[c * n..(c + 1) * n].iter_mut().enumerate() {
            *g = k * (nf * dy[i] - sum_dy - xhat[i] * sum_dy_xhat);
        }
    }
    grad_x
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward_in_place(grad: &mut [f64], output: &[f64]) {
    for (g, y) in grad.iter_mut().zip(output) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Non-overlapping max pooling over each row of length `len`; a trailing
/// partial window is dropped. Returns pooled values and argmax offsets.
pub fn maxpool_forward(x: &[f64], len: usize, pool: usize) -> (Vec<f64>, Vec<u8>) {
    let rows = x.len() / len;
    let out_len = len / pool;
    let mut out = Vec::with_capacity(rows * out_len);
    let mut argmax = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let row = &x[r * len..(r + 1) * len];
        for w in row.chunks_exact(pool) {
            let mut best = 0;
            for (i, v) in w.iter().enumerate().skip(1) {
                if *v > w[best] {
                    best = i;
                }
            }
            out.push(w[best]);
            argmax.push(best as u8);
        }
    }
    (out, argmax)
}

/// Routes each pooled gradient to the winning input position (first on ties).
pub fn maxpool_backward(grad_out: &[f64], argmax: &[u8], len: usize, pool: usize) -> Vec<f64> {
    let out_len = len / pool;
    let rows = grad_out.len() / out_len.max(1);
    let mut grad_x = vec![0.0; rows * len];
    for r in 0..rows {
        for j in 0..out_len {
            let idx = r * out_len + j;
            grad_x[r * len + j * pool + argmax[idx] as usize] = grad_out[idx];
        }
    }
    grad_x
}

/// `Y = X Wᵀ + b` with `X: [B, in]`, `W: [out, in]`.
pub fn dense_forward(x: &[f64], weight: &[f64], bias: &[f64], batch: usize) -> Vec<f64> {
    let (out_dim, in_dim) = (bias.len(), weight.len() / bias.len());
    let mut y = Vec::with_capacity(batch * out_dim);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(batch, in_dim, out_dim, x, false, weight, true, 1.0, &mut y);
    y
}

pub fn dense_backward(
    grad_out: &[f64],
    x: &[f64],
    weight: &[f64],
    batch: usize,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let out_dim = grad_bias.len();
    let in_dim = weight.len() / out_dim;
    for row in grad_out.chunks(out_dim) {
        for (g, d) in grad_bias.iter_mut().zip(row) {
            *g += d;
        }
    }
    // dW += dYᵀ · X
    gemm(out_dim, batch, in_dim, grad_out, true, x, false, 1.0, grad_weight);
    if !need_input_grad {
        return Vec::new();
    }
    let mut grad_x = vec![0.0; batch * in_dim];
    gemm(batch, out_dim, in_dim, grad_out, false, weight, false, 0.0, &mut grad_x);
    grad_x
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `targets`, and its
/// gradient with respect to the logits, `(p - t) / count`.
pub fn sigmoid_bce(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let count = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (z, t) in logits.iter().zip(targets) {
        // log(1 + e^z) - t z, written to avoid overflow
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(*z) - t) / count);
    }
    (loss / count, grad)
}
