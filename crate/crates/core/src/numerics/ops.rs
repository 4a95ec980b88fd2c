//! Stateless forward/backward primitives over two-dimensional tensors.

use alloc::vec;
use alloc::vec::Vec;

use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// GEMM kernels. All accumulate into `out`.

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    let mut bt = vec![T::zero(); k * n];
    for j in 0..n {
        for p in 0..k {
            bt[p * n + j] = b[j * k + p];
        }
    }
    gemm_nn(a, &bt, out, m, k, n);
}

/// `out[m×n] += a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &api) in arow.iter().enumerate() {
            if api == T::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
}

fn expect_2d<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    if t.dims().len() != 2 {
        return Err(Error::Shape {
            op,
            left: t.dims().to_vec(),
            right: vec![],
        });
    }
    Ok((t.dims()[0], t.dims()[1]))
}

// ---------------------------------------------------------------------------
// matmul

pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = expect_2d("matmul", a)?;
    let (k2, n) = expect_2d("matmul", b)?;
    if k != k2 {
        return Err(Error::Shape {
            op: "matmul",
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    let mut out = Tensor::zeros([m, n]);
    gemm_nn(a.data(), b.data(), out.data_mut(), m, k, n);
    Ok(out)
}

/// Gradients of `a·b` with respect to both operands.
pub fn matmul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, k) = expect_2d("matmul_backward", a)?;
    let (_, n) = expect_2d("matmul_backward", b)?;
    if grad_out.dims() != [m, n] || b.dims()[0] != k {
        return Err(Error::Shape {
            op: "matmul_backward",
            left: grad_out.dims().to_vec(),
            right: vec![m, n],
        });
    }
    let mut ga = Tensor::zeros([m, k]);
    gemm_nt(grad_out.data(), b.data(), ga.data_mut(), m, n, k);
    let mut gb = Tensor::zeros([k, n]);
    gemm_tn(a.data(), grad_out.data(), gb.data_mut(), k, m, n);
    Ok((ga, gb))
}

// ---------------------------------------------------------------------------
// conv1d over [L × C] sequences. Weight layout is [C_out × C_in × k].

pub fn conv1d_out_len(len: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || k == 0 || padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

fn conv_dims<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (len, c_in) = expect_2d("conv1d", input)?;
    let wd = weight.dims();
    if wd.len() != 3 || wd[1] != c_in {
        return Err(Error::Shape {
            op: "conv1d",
            left: input.dims().to_vec(),
            right: wd.to_vec(),
        });
    }
    let (c_out, k) = (wd[0], wd[2]);
    let l_out = conv1d_out_len(len, k, stride, padding).ok_or_else(|| Error::Shape {
        op: "conv1d",
        left: vec![len + 2 * padding],
        right: vec![k],
    })?;
    Ok((len, c_in, c_out, k, l_out))
}

/// Column matrix `[L_out × (C_in·k)]`, column index `c·k + tap`.
fn im2col<T: Real>(input: &[T], len: usize, c_in: usize, k: usize, stride: usize, padding: usize, l_out: usize) -> Vec<T> {
    let width = c_in * k;
    let mut cols = vec![T::zero(); l_out * width];
    for t in 0..l_out {
        let row = &mut cols[t * width..(t + 1) * width];
        for tap in 0..k {
            let pos = (t * stride + tap) as isize - padding as isize;
            if pos < 0 || pos as usize >= len {
                continue;
            }
            let src = &input[pos as usize * c_in..(pos as usize + 1) * c_in];
            for (c, &v) in src.iter().enumerate() {
                row[c * k + tap] = v;
            }
        }
    }
    cols
}

pub fn conv1d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (len, c_in, c_out, k, l_out) = conv_dims(input, weight, stride, padding)?;
    if bias.len() != c_out {
        return Err(Error::Shape {
            op: "conv1d bias",
            left: bias.dims().to_vec(),
            right: vec![c_out],
        });
    }
    let cols = im2col(input.data(), len, c_in, k, stride, padding, l_out);
    let mut out = Tensor::zeros([l_out, c_out]);
    for t in 0..l_out {
        out.row_mut(t).copy_from_slice(bias.data());
    }
    gemm_nt(&cols, weight.data(), out.data_mut(), l_out, c_in * k, c_out);
    Ok(out)
}

pub struct Conv1dGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv1d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<T>,
) -> Result<Conv1dGrads<T>> {
    let (len, c_in, c_out, k, l_out) = conv_dims(input, weight, stride, padding)?;
    if grad_out.dims() != [l_out, c_out] {
        return Err(Error::Shape {
            op: "conv1d_backward",
            left: grad_out.dims().to_vec(),
            right: vec![l_out, c_out],
        });
    }
    let width = c_in * k;
    let cols = im2col(input.data(), len, c_in, k, stride, padding, l_out);
    let mut gw = Tensor::zeros([c_out, c_in, k]);
    gemm_tn(grad_out.data(), &cols, gw.data_mut(), c_out, l_out, width);
    let mut gb = Tensor::zeros([c_out]);
    for t in 0..l_out {
        for (b, &g) in gb.data_mut().iter_mut().zip(grad_out.row(t)) {
            *b += g;
        }
    }
    let mut gcols = vec![T::zero(); l_out * width];
    gemm_nn(grad_out.data(), weight.data(), &mut gcols, l_out, c_out, width);
    let mut gx = Tensor::zeros([len, c_in]);
    for t in 0..l_out {
        let row = &gcols[t * width..(t + 1) * width];
        for tap in 0..k {
            let pos = (t * stride + tap) as isize - padding as isize;
            if pos < 0 || pos as usize >= len {
                continue;
            }
            let dst = gx.row_mut(pos as usize);
            for (c, d) in dst.iter_mut().enumerate() {
                *d += row[c * k + tap];
            }
        }
    }
    Ok(Conv1dGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

// ---------------------------------------------------------------------------
// nearest-neighbour temporal upsampling

pub fn upsample_nearest<T: Real>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (len, c) = expect_2d("upsample_nearest", input)?;
    if factor == 0 {
        return Err(Error::Config("upsample factor must be positive".into()));
    }
    let mut out = Tensor::zeros([len * factor, c]);
    for t in 0..len {
        for r in 0..factor {
            out.row_mut(t * factor + r).copy_from_slice(input.row(t));
        }
    }
    Ok(out)
}

pub fn upsample_nearest_backward<T: Real>(grad_out: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (len_up, c) = expect_2d("upsample_nearest_backward", grad_out)?;
    if factor == 0 || len_up % factor != 0 {
        return Err(Error::Shape {
            op: "upsample_nearest_backward",
            left: grad_out.dims().to_vec(),
            right: vec![factor],
        });
    }
    let mut gx = Tensor::zeros([len_up / factor, c]);
    for t in 0..len_up {
        let dst = gx.row_mut(t / factor);
        for (d, &g) in dst.iter_mut().zip(grad_out.row(t)) {
            *d += g;
        }
    }
    Ok(gx)
}

// ---------------------------------------------------------------------------
// single-group normalization over all N·C elements, per-channel affine

pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

pub fn groupnorm1<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, NormCache<T>)> {
    let (n, c) = expect_2d("groupnorm1", input)?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape {
            op: "groupnorm1",
            left: input.dims().to_vec(),
            right: gamma.dims().to_vec(),
        });
    }
    let count = T::of((n * c) as f64);
    let mean = input.sum() / count;
    let var = input.data().iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / count;
    let inv_std = T::one() / (var + eps).sqrt();
    let xhat = input.map(|x| (x - mean) * inv_std);
    let mut out = xhat.clone();
    for i in 0..n {
        for ((o, &g), &b) in out.row_mut(i).iter_mut().zip(gamma.data()).zip(beta.data()) {
            *o = *o * g + b;
        }
    }
    Ok((
        out,
        NormCache {
            xhat,
            inv_std: vec![inv_std],
        },
    ))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn groupnorm1_backward<T: Real>(
    cache: &NormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c) = (cache.xhat.rows(), cache.xhat.cols());
    let mut gg = Tensor::zeros([c]);
    let mut gb = Tensor::zeros([c]);
    let mut dxhat = Tensor::zeros([n, c]);
    for i in 0..n {
        let (xr, gr) = (cache.xhat.row(i), grad_out.row(i));
        for j in 0..c {
            gg.data_mut()[j] += gr[j] * xr[j];
            gb.data_mut()[j] += gr[j];
            dxhat.row_mut(i)[j] = gr[j] * gamma.data()[j];
        }
    }
    let count = T::of((n * c) as f64);
    let mean_d = dxhat.sum() / count;
    let mean_dx = dxhat
        .data()
        .iter()
        .zip(cache.xhat.data())
        .map(|(&d, &x)| d * x)
        .sum::<T>()
        / count;
    let inv = cache.inv_std[0];
    let mut gx = dxhat;
    for (g, &x) in gx.data_mut().iter_mut().zip(cache.xhat.data()) {
        *g = inv * (*g - mean_d - x * mean_dx);
    }
    (gx, gg, gb)
}

// ---------------------------------------------------------------------------
// row-wise normalizations used by the transformer

/// RMS normalization of each row with per-channel scale.
pub fn rms_norm<T: Real>(input: &Tensor<T>, gamma: &Tensor<T>, eps: T) -> (Tensor<T>, NormCache<T>) {
    let (n, c) = (input.rows(), input.cols());
    let mut xhat = Tensor::zeros([n, c]);
    let mut inv = Vec::with_capacity(n);
    for i in 0..n {
        let row = input.row(i);
        let ms = row.iter().map(|&x| x * x).sum::<T>() / T::of(c as f64);
        let r = T::one() / (ms + eps).sqrt();
        inv.push(r);
        for (h, &x) in xhat.row_mut(i).iter_mut().zip(row) {
            *h = x * r;
        }
    }
    let mut out = xhat.clone();
    for i in 0..n {
        for (o, &g) in out.row_mut(i).iter_mut().zip(gamma.data()) {
            *o *= g;
        }
    }
    (out, NormCache { xhat, inv_std: inv })
}

/// Returns `(grad_input, grad_gamma)`.
pub fn rms_norm_backward<T: Real>(cache: &NormCache<T>, gamma: &Tensor<T>, grad_out: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (n, c) = (cache.xhat.rows(), cache.xhat.cols());
    let mut gg = Tensor::zeros([c]);
    let mut gx = Tensor::zeros([n, c]);
    let cf = T::of(c as f64);
    for i in 0..n {
        let (xr, gr) = (cache.xhat.row(i), grad_out.row(i));
        let mut dot = T::zero();
        for j in 0..c {
            gg.data_mut()[j] += gr[j] * xr[j];
            dot += gr[j] * gamma.data()[j] * xr[j];
        }
        let r = cache.inv_std[i];
        let dst = gx.row_mut(i);
        for j in 0..c {
            dst[j] = r * (gr[j] * gamma.data()[j] - xr[j] * dot / cf);
        }
    }
    (gx, gg)
}

/// Layer normalization of each row with per-channel scale and shift.
pub fn layer_norm<T: Real>(input: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> (Tensor<T>, NormCache<T>) {
    let (n, c) = (input.rows(), input.cols());
    let cf = T::of(c as f64);
    let mut xhat = Tensor::zeros([n, c]);
    let mut inv = Vec::with_capacity(n);
    for i in 0..n {
        let row = input.row(i);
        let mean = row.iter().copied().sum::<T>() / cf;
        let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / cf;
        let r = T::one() / (var + eps).sqrt();
        inv.push(r);
        for (h, &x) in xhat.row_mut(i).iter_mut().zip(row) {
            *h = (x - mean) * r;
        }
    }
    let mut out = xhat.clone();
    for i in 0..n {
        for ((o, &g), &b) in out.row_mut(i).iter_mut().zip(gamma.data()).zip(beta.data()) {
            *o = *o * g + b;
        }
    }
    (out, NormCache { xhat, inv_std: inv })
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn layer_norm_backward<T: Real>(
    cache: &NormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c) = (cache.xhat.rows(), cache.xhat.cols());
    let cf = T::of(c as f64);
    let mut gg = Tensor::zeros([c]);
    let mut gb = Tensor::zeros([c]);
    let mut gx = Tensor::zeros([n, c]);
    for i in 0..n {
        let (xr, gr) = (cache.xhat.row(i), grad_out.row(i));
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for j in 0..c {
            gg.data_mut()[j] += gr[j] * xr[j];
            gb.data_mut()[j] += gr[j];
            let d = gr[j] * gamma.data()[j];
            sum_d += d;
            sum_dx += d * xr[j];
        }
        let r = cache.inv_std[i];
        let dst = gx.row_mut(i);
        for j in 0..c {
            let d = gr[j] * gamma.data()[j];
            dst[j] = r * (d - sum_d / cf - xr[j] * sum_dx / cf);
        }
    }
    (gx, gg, gb)
}

// ---------------------------------------------------------------------------
// pointwise activations

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| x.max(T::zero()))
}

pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (g, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    g
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).libm_exp())
}

pub fn silu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| x * sigmoid(x))
}

pub fn silu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (g, &x) in g.data_mut().iter_mut().zip(input.data()) {
        let s = sigmoid(x);
        *g *= s * (T::one() + x * (T::one() - s));
    }
    g
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let c = T::of(GELU_C);
    let a = T::of(0.044715);
    let half = T::of(0.5);
    input.map(|x| half * x * (T::one() + (c * (x + a * x * x * x)).libm_tanh()))
}

pub fn gelu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let c = T::of(GELU_C);
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let mut g = grad_out.clone();
    for (g, &x) in g.data_mut().iter_mut().zip(input.data()) {
        let u = c * (x + a * x * x * x);
        let t = u.libm_tanh();
        let du = c * (T::one() + T::of(3.0) * a * x * x);
        *g *= half * (T::one() + t) + half * x * (T::one() - t * t) * du;
    }
    g
}

// ---------------------------------------------------------------------------
// softmax and cross-entropy

/// Max-subtracted softmax of every row.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).libm_exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Stabilized `log Σ exp(row)`.
pub fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    max + row.iter().map(|&x| (x - max).libm_exp()).sum::<T>().libm_ln()
}

fn check_targets<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<()> {
    if logits.rows() != targets.len() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: logits.dims().to_vec(),
            right: vec![targets.len()],
        });
    }
    let v = logits.cols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
        return Err(Error::Index {
            what: "cross_entropy target",
            index: bad,
            limit: v,
        });
    }
    Ok(())
}

/// Mean over rows of `−log softmax(row)[target]`.
pub fn cross_entropy_from_logits<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<T> {
    check_targets(logits, targets)?;
    let mut total = T::zero();
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        total += log_sum_exp(row) - row[t];
    }
    Ok(total / T::of(targets.len() as f64))
}

/// Gradient of [`cross_entropy_from_logits`] with respect to the logits.
pub fn cross_entropy_backward<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<Tensor<T>> {
    check_targets(logits, targets)?;
    let mut g = softmax(logits);
    let inv = T::one() / T::of(targets.len() as f64);
    for (i, &t) in targets.iter().enumerate() {
        let row = g.row_mut(i);
        row[t] -= T::one();
        row.iter_mut().for_each(|x| *x *= inv);
    }
    Ok(g)
}
