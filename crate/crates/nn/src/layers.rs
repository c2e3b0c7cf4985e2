//! Numeric kernels: forward and backward passes for every layer kind.
//!
//! All kernels are batch-aware. Activations are laid out `[batch, channel,
//! spatial..]` row-major, parameters exactly as reported by
//! [`LayerKind::param_shapes`](crate::graph::LayerKind::param_shapes).
//! Backward functions return freshly allocated gradients; accumulation
//! across fan-out and tied parameters happens in the model driver.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Epsilon inside the batch-norm standard deviation.
pub const BN_EPS: f64 = 1e-5;

/// Momentum for batch-norm running statistics (`running = m * running +
/// (1 - m) * batch`).
pub const BN_MOMENTUM: f64 = 0.9;

fn batch_of<S: Scalar>(x: &Tensor<S>) -> usize {
    x.shape()[0]
}

// ---------------------------------------------------------------------------
// Fully connected primitives (shared by Dense and the recurrent cell).
// ---------------------------------------------------------------------------

/// `y[b, m] = bias[m] + x[b, :] . w[m, :]` for `x [B, N]`, `w [M, N]`.
pub fn affine_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    bias: Option<&Tensor<S>>,
) -> Tensor<S> {
    let b = batch_of(x);
    let n = w.shape()[1];
    let m = w.shape()[0];
    debug_assert_eq!(x.len(), b * n);
    let mut y = Tensor::zeros(&[b, m]);
    for bi in 0..b {
        let x_row = &x.data()[bi * n..(bi + 1) * n];
        let y_row = &mut y.data_mut()[bi * m..(bi + 1) * m];
        for (mi, yo) in y_row.iter_mut().enumerate() {
            let w_row = &w.data()[mi * n..(mi + 1) * n];
            let mut acc = bias.map_or(S::zero(), |bv| bv.data()[mi]);
            for (wv, xv) in w_row.iter().zip(x_row) {
                acc = acc + *wv * *xv;
            }
            *yo = acc;
        }
    }
    y
}

/// `dx[b, :] = sum_m dy[b, m] * w[m, :]`.
pub fn affine_backward_data<S: Scalar>(dy: &Tensor<S>, w: &Tensor<S>) -> Tensor<S> {
    let b = batch_of(dy);
    let m = w.shape()[0];
    let n = w.shape()[1];
    let mut dx = Tensor::zeros(&[b, n]);
    for bi in 0..b {
        let dy_row = &dy.data()[bi * m..(bi + 1) * m];
        let dx_row = &mut dx.data_mut()[bi * n..(bi + 1) * n];
        for (mi, &g) in dy_row.iter().enumerate() {
            if g == S::zero() {
                continue;
            }
            let w_row = &w.data()[mi * n..(mi + 1) * n];
            for (dxo, wv) in dx_row.iter_mut().zip(w_row) {
                *dxo = *dxo + g * *wv;
            }
        }
    }
    dx
}

/// Accumulates `dw[m, :] += sum_b dy[b, m] * x[b, :]` and, when present,
/// `db[m] += sum_b dy[b, m]`.
pub fn affine_backward_params<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    dw: &mut Tensor<S>,
    db: Option<&mut Tensor<S>>,
) {
    let b = batch_of(dy);
    let m = dw.shape()[0];
    let n = dw.shape()[1];
    for bi in 0..b {
        let dy_row = &dy.data()[bi * m..(bi + 1) * m];
        let x_row = &x.data()[bi * n..(bi + 1) * n];
        for (mi, &g) in dy_row.iter().enumerate() {
            if g == S::zero() {
                continue;
            }
            let dw_row = &mut dw.data_mut()[mi * n..(mi + 1) * n];
            for (dwo, xv) in dw_row.iter_mut().zip(x_row) {
                *dwo = *dwo + g * *xv;
            }
        }
    }
    if let Some(db) = db {
        for bi in 0..b {
            let dy_row = &dy.data()[bi * m..(bi + 1) * m];
            for (dbo, &g) in db.data_mut().iter_mut().zip(dy_row) {
                *dbo = *dbo + g;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 3x3 same-padding convolution.
// ---------------------------------------------------------------------------

/// Forward 3x3 convolution with unit stride and same padding.
///
/// `x [B, Ci, H, W]`, `w [Co, Ci, 3, 3]`, `bias [Co]` produce
/// `y [B, Co, H, W]`. The kernel is unrolled as nine shifted row
/// accumulations, so the inner loop is a contiguous saxpy.
pub fn conv2d_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, bias: &Tensor<S>) -> Tensor<S> {
    let (b, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let co = w.shape()[0];
    let mut y = Tensor::zeros(&[b, co, h, wd]);
    let plane = h * wd;
    for bi in 0..b {
        for oc in 0..co {
            let y_base = (bi * co + oc) * plane;
            {
                let bv = bias.data()[oc];
                for v in &mut y.data_mut()[y_base..y_base + plane] {
                    *v = bv;
                }
            }
            for ic in 0..ci {
                let x_base = (bi * ci + ic) * plane;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let wv = w.data()[((oc * ci + ic) * 3 + ky) * 3 + kx];
                        if wv == S::zero() {
                            continue;
                        }
                        // Valid output columns: 0 <= ox + kx - 1 < W.
                        let ox_lo = 1usize.saturating_sub(kx);
                        let ox_hi = (wd + 1 - kx).min(wd);
                        for oy in 0..h {
                            let iy = oy as isize + ky as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let x_row = x_base + iy as usize * wd;
                            let y_row = y_base + oy * wd;
                            let xs = &x.data()[x_row + ox_lo + kx - 1..x_row + ox_hi + kx - 1];
                            let ys = &mut y.data_mut()[y_row + ox_lo..y_row + ox_hi];
                            for (yo, xv) in ys.iter_mut().zip(xs) {
                                *yo = *yo + wv * *xv;
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Backward pass of [`conv2d_forward`]: gradients for the input, the
/// kernel, and the bias.
pub fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (b, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let co = w.shape()[0];
    let plane = h * wd;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[co]);

    for bi in 0..b {
        for oc in 0..co {
            let dy_base = (bi * co + oc) * plane;
            let dy_plane = &dy.data()[dy_base..dy_base + plane];

            let mut acc = S::zero();
            for &g in dy_plane {
                acc = acc + g;
            }
            db.data_mut()[oc] = db.data_mut()[oc] + acc;

            for ic in 0..ci {
                let x_base = (bi * ci + ic) * plane;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let ox_lo = 1usize.saturating_sub(kx);
                        let ox_hi = (wd + 1 - kx).min(wd);
                        // dw accumulates dy . shifted x; dx scatters dy
                        // through the flipped kernel.
                        let mut wg = S::zero();
                        for oy in 0..h {
                            let iy = oy as isize + ky as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let x_row = x_base + iy as usize * wd;
                            let dy_row = oy * wd;
                            let xs = &x.data()
                                [x_row + ox_lo + kx - 1..x_row + ox_hi + kx - 1];
                            let gs = &dy_plane[dy_row + ox_lo..dy_row + ox_hi];
                            for (xv, g) in xs.iter().zip(gs) {
                                wg = wg + *xv * *g;
                            }
                        }
                        let widx = ((oc * ci + ic) * 3 + ky) * 3 + kx;
                        dw.data_mut()[widx] = dw.data_mut()[widx] + wg;

                        let wv = w.data()[widx];
                        if wv == S::zero() {
                            continue;
                        }
                        for oy in 0..h {
                            let iy = oy as isize + ky as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dx_row = x_base + iy as usize * wd;
                            let dy_row = oy * wd;
                            let gs = &dy_plane[dy_row + ox_lo..dy_row + ox_hi];
                            let dxs = &mut dx.data_mut()
                                [dx_row + ox_lo + kx - 1..dx_row + ox_hi + kx - 1];
                            for (dxo, g) in dxs.iter_mut().zip(gs) {
                                *dxo = *dxo + wv * *g;
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// Batch normalisation.
// ---------------------------------------------------------------------------

/// Values saved by the training-mode forward pass for the backward pass.
pub struct BnCache<S> {
    /// Normalised activations before scale and shift.
    pub xhat: Tensor<S>,
    /// `1 / sqrt(var + eps)` per channel.
    pub inv_std: Vec<S>,
}

fn bn_geometry<S: Scalar>(x: &Tensor<S>, channels: usize) -> (usize, usize, usize) {
    let b = x.shape()[0];
    let rest: usize = x.shape()[2..].iter().product();
    debug_assert_eq!(x.shape()[1], channels);
    (b, rest, b * rest)
}

/// Training-mode batch norm: normalises with batch statistics and returns
/// the per-channel batch mean and (biased) variance so the caller can
/// update its running buffers.
#[allow(clippy::type_complexity)]
pub fn batchnorm_forward_train<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
) -> Result<(Tensor<S>, BnCache<S>, Vec<S>, Vec<S>)> {
    let channels = gamma.len();
    let (b, rest, n) = bn_geometry(x, channels);
    if n < 2 {
        return Err(Error::Shape(
            "batch norm needs at least 2 values per channel in training mode".into(),
        ));
    }
    let mut y = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    let mut inv_std = Vec::with_capacity(channels);
    let mut means = Vec::with_capacity(channels);
    let mut vars = Vec::with_capacity(channels);
    let n_s = S::from_f64(n as f64);
    for c in 0..channels {
        let mut sum = S::zero();
        let mut sq = S::zero();
        for bi in 0..b {
            let base = (bi * channels + c) * rest;
            for &v in &x.data()[base..base + rest] {
                sum = sum + v;
                sq = sq + v * v;
            }
        }
        let mean = sum / n_s;
        let var = (sq / n_s - mean * mean).max(S::zero());
        let istd = S::one() / (var + S::from_f64(BN_EPS)).sqrt();
        let (g, bt) = (gamma.data()[c], beta.data()[c]);
        for bi in 0..b {
            let base = (bi * channels + c) * rest;
            for i in base..base + rest {
                let xh = (x.data()[i] - mean) * istd;
                xhat.data_mut()[i] = xh;
                y.data_mut()[i] = g * xh + bt;
            }
        }
        inv_std.push(istd);
        means.push(mean);
        vars.push(var);
    }
    Ok((y, BnCache { xhat, inv_std }, means, vars))
}

/// Inference-mode batch norm using frozen running statistics.
pub fn batchnorm_forward_eval<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running_mean: &Tensor<S>,
    running_var: &Tensor<S>,
) -> Tensor<S> {
    let channels = gamma.len();
    let (b, rest, _) = bn_geometry(x, channels);
    let mut y = Tensor::zeros(x.shape());
    for c in 0..channels {
        let mean = running_mean.data()[c];
        let istd = S::one() / (running_var.data()[c] + S::from_f64(BN_EPS)).sqrt();
        let (g, bt) = (gamma.data()[c], beta.data()[c]);
        for bi in 0..b {
            let base = (bi * channels + c) * rest;
            for i in base..base + rest {
                y.data_mut()[i] = g * (x.data()[i] - mean) * istd + bt;
            }
        }
    }
    y
}

/// Backward pass for training-mode batch norm.
pub fn batchnorm_backward<S: Scalar>(
    dy: &Tensor<S>,
    cache: &BnCache<S>,
    gamma: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let channels = gamma.len();
    let (b, rest, n) = bn_geometry(dy, channels);
    let n_s = S::from_f64(n as f64);
    let mut dx = Tensor::zeros(dy.shape());
    let mut dgamma = Tensor::zeros(&[channels]);
    let mut dbeta = Tensor::zeros(&[channels]);
    for c in 0..channels {
        let mut sum_dy = S::zero();
        let mut sum_dy_xhat = S::zero();
        for bi in 0..b {
            let base = (bi * channels + c) * rest;
            for i in base..base + rest {
                let g = dy.data()[i];
                sum_dy = sum_dy + g;
                sum_dy_xhat = sum_dy_xhat + g * cache.xhat.data()[i];
            }
        }
        dbeta.data_mut()[c] = sum_dy;
        dgamma.data_mut()[c] = sum_dy_xhat;
        let scale = gamma.data()[c] * cache.inv_std[c];
        let mean_dy = sum_dy / n_s;
        let mean_dy_xhat = sum_dy_xhat / n_s;
        for bi in 0..b {
            let base = (bi * channels + c) * rest;
            for i in base..base + rest {
                let g = dy.data()[i];
                let xh = cache.xhat.data()[i];
                dx.data_mut()[i] = scale * (g - mean_dy - xh * mean_dy_xhat);
            }
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// Element-wise activations.
// ---------------------------------------------------------------------------

/// `max(x, slope * x)` element-wise.
pub fn leaky_relu_forward<S: Scalar>(x: &Tensor<S>, slope: f64) -> Tensor<S> {
    let a = S::from_f64(slope);
    x.map(|v| if v >= S::zero() { v } else { a * v })
}

/// Backward of [`leaky_relu_forward`], gated on the saved *input* sign.
pub fn leaky_relu_backward<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>, slope: f64) -> Tensor<S> {
    let a = S::from_f64(slope);
    let mut dx = Tensor::zeros(x.shape());
    for ((dxo, &xv), &g) in dx.data_mut().iter_mut().zip(x.data()).zip(dy.data()) {
        *dxo = if xv >= S::zero() { g } else { a * g };
    }
    dx
}

/// Logistic sigmoid element-wise.
pub fn sigmoid_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| S::one() / (S::one() + (-v).exp()))
}

/// Backward of sigmoid given the saved *output*.
pub fn sigmoid_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let mut dx = Tensor::zeros(y.shape());
    for ((dxo, &yv), &g) in dx.data_mut().iter_mut().zip(y.data()).zip(dy.data()) {
        *dxo = g * yv * (S::one() - yv);
    }
    dx
}

/// Hyperbolic tangent element-wise.
pub fn tanh_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| v.tanh())
}

/// Backward of tanh given the saved *output*.
pub fn tanh_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let mut dx = Tensor::zeros(y.shape());
    for ((dxo, &yv), &g) in dx.data_mut().iter_mut().zip(y.data()).zip(dy.data()) {
        *dxo = g * (S::one() - yv * yv);
    }
    dx
}

// ---------------------------------------------------------------------------
// Structural ops.
// ---------------------------------------------------------------------------

/// Concatenates batch tensors along the channel axis (axis 1).
pub fn concat_forward<S: Scalar>(inputs: &[&Tensor<S>]) -> Tensor<S> {
    let b = batch_of(inputs[0]);
    let rest: usize = inputs[0].shape()[2..].iter().product();
    let total_c: usize = inputs.iter().map(|t| t.shape()[1]).sum();
    let mut shape = inputs[0].shape().to_vec();
    shape[1] = total_c;
    let mut y = Tensor::zeros(&shape);
    let out_stride = total_c * rest;
    for bi in 0..b {
        let mut offset = bi * out_stride;
        for t in inputs {
            let chunk = t.shape()[1] * rest;
            let src = &t.data()[bi * chunk..(bi + 1) * chunk];
            y.data_mut()[offset..offset + chunk].copy_from_slice(src);
            offset += chunk;
        }
    }
    y
}

/// Splits an output gradient back into per-input gradients (inverse of
/// [`concat_forward`]).
pub fn concat_backward<S: Scalar>(dy: &Tensor<S>, input_shapes: &[&[usize]]) -> Vec<Tensor<S>> {
    let b = batch_of(dy);
    let rest: usize = dy.shape()[2..].iter().product();
    let out_stride = dy.shape()[1] * rest;
    let mut grads: Vec<Tensor<S>> = input_shapes.iter().map(|s| Tensor::zeros(s)).collect();
    for bi in 0..b {
        let mut offset = bi * out_stride;
        for g in grads.iter_mut() {
            let chunk = g.shape()[1] * rest;
            let dst_range = bi * chunk..(bi + 1) * chunk;
            g.data_mut()[dst_range].copy_from_slice(&dy.data()[offset..offset + chunk]);
            offset += chunk;
        }
    }
    grads
}

/// Element-wise sum of two equal-shaped tensors.
pub fn add_forward<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let mut y = a.clone();
    for (yo, &bv) in y.data_mut().iter_mut().zip(b.data()) {
        *yo = *yo + bv;
    }
    y
}

// ---------------------------------------------------------------------------
// Gated recurrent cell.
// ---------------------------------------------------------------------------

/// Borrowed view of the nine recurrent-cell parameter tensors, in the
/// order declared by `LayerKind::RecurrentCell::param_shapes`.
pub struct GruParams<'a, S> {
    pub w_update: &'a Tensor<S>,
    pub u_update: &'a Tensor<S>,
    pub b_update: &'a Tensor<S>,
    pub w_reset: &'a Tensor<S>,
    pub u_reset: &'a Tensor<S>,
    pub b_reset: &'a Tensor<S>,
    pub w_cand: &'a Tensor<S>,
    pub u_cand: &'a Tensor<S>,
    pub b_cand: &'a Tensor<S>,
}

impl<'a, S> GruParams<'a, S> {
    /// Builds the view from `(name, tensor)` pairs in declaration order.
    pub fn from_slice(params: &'a [(String, Tensor<S>)]) -> Self {
        GruParams {
            w_update: &params[0].1,
            u_update: &params[1].1,
            b_update: &params[2].1,
            w_reset: &params[3].1,
            u_reset: &params[4].1,
            b_reset: &params[5].1,
            w_cand: &params[6].1,
            u_cand: &params[7].1,
            b_cand: &params[8].1,
        }
    }
}

/// Gate activations saved for the backward pass.
pub struct GruCache<S> {
    pub update: Tensor<S>,
    pub reset: Tensor<S>,
    pub cand: Tensor<S>,
    pub reset_h: Tensor<S>,
}

/// Forward step of the gated recurrent cell.
///
/// ```text
/// z = sigmoid(x Wz' + h Uz' + bz)        (update gate)
/// r = sigmoid(x Wr' + h Ur' + br)        (reset gate)
/// c = tanh   (x Wc' + (r o h) Uc' + bc)  (candidate state)
/// h' = (1 - z) o h + z o c
/// ```
pub fn gru_forward<S: Scalar>(
    x: &Tensor<S>,
    h: &Tensor<S>,
    p: &GruParams<S>,
) -> (Tensor<S>, GruCache<S>) {
    let z_pre = add_forward(
        &affine_forward(x, p.w_update, Some(p.b_update)),
        &affine_forward(h, p.u_update, None),
    );
    let update = sigmoid_forward(&z_pre);
    let r_pre = add_forward(
        &affine_forward(x, p.w_reset, Some(p.b_reset)),
        &affine_forward(h, p.u_reset, None),
    );
    let reset = sigmoid_forward(&r_pre);
    let mut reset_h = reset.clone();
    for (rh, &hv) in reset_h.data_mut().iter_mut().zip(h.data()) {
        *rh = *rh * hv;
    }
    let c_pre = add_forward(
        &affine_forward(x, p.w_cand, Some(p.b_cand)),
        &affine_forward(&reset_h, p.u_cand, None),
    );
    let cand = tanh_forward(&c_pre);

    let mut h_next = Tensor::zeros(h.shape());
    for i in 0..h_next.len() {
        let z = update.data()[i];
        h_next.data_mut()[i] =
            (S::one() - z) * h.data()[i] + z * cand.data()[i];
    }
    (
        h_next,
        GruCache {
            update,
            reset,
            cand,
            reset_h,
        },
    )
}

/// Parameter gradients of one recurrent step, in declaration order.
pub struct GruGrads<S> {
    pub tensors: Vec<Tensor<S>>,
}

/// Backward step of the gated recurrent cell.
///
/// Returns `(dx, dh, parameter gradients)` for upstream gradient
/// `dh_next`.
pub fn gru_backward<S: Scalar>(
    x: &Tensor<S>,
    h: &Tensor<S>,
    p: &GruParams<S>,
    cache: &GruCache<S>,
    dh_next: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, GruGrads<S>) {
    let n = dh_next.len();
    let mut da_z = Tensor::zeros(dh_next.shape());
    let mut dc = Tensor::zeros(dh_next.shape());
    let mut dh = Tensor::zeros(h.shape());
    for i in 0..n {
        let g = dh_next.data()[i];
        let z = cache.update.data()[i];
        let c = cache.cand.data()[i];
        let hv = h.data()[i];
        da_z.data_mut()[i] = g * (c - hv) * z * (S::one() - z);
        dc.data_mut()[i] = g * z;
        dh.data_mut()[i] = g * (S::one() - z);
    }
    let da_c = tanh_backward(&cache.cand, &dc);

    // Candidate branch: x Wc' + (r o h) Uc'.
    let mut dw_cand = Tensor::zeros(p.w_cand.shape());
    let mut du_cand = Tensor::zeros(p.u_cand.shape());
    let mut db_cand = Tensor::zeros(p.b_cand.shape());
    affine_backward_params(&da_c, x, &mut dw_cand, Some(&mut db_cand));
    affine_backward_params(&da_c, &cache.reset_h, &mut du_cand, None);
    let mut dx = affine_backward_data(&da_c, p.w_cand);
    let d_reset_h = affine_backward_data(&da_c, p.u_cand);

    // Reset gate receives gradient through r o h.
    let mut dr = Tensor::zeros(h.shape());
    for i in 0..n {
        dr.data_mut()[i] = d_reset_h.data()[i] * h.data()[i];
        dh.data_mut()[i] = dh.data()[i] + d_reset_h.data()[i] * cache.reset.data()[i];
    }
    let da_r = sigmoid_backward(&cache.reset, &dr);

    let mut dw_reset = Tensor::zeros(p.w_reset.shape());
    let mut du_reset = Tensor::zeros(p.u_reset.shape());
    let mut db_reset = Tensor::zeros(p.b_reset.shape());
    affine_backward_params(&da_r, x, &mut dw_reset, Some(&mut db_reset));
    affine_backward_params(&da_r, h, &mut du_reset, None);
    dx = add_forward(&dx, &affine_backward_data(&da_r, p.w_reset));
    dh = add_forward(&dh, &affine_backward_data(&da_r, p.u_reset));

    // Update gate.
    let mut dw_update = Tensor::zeros(p.w_update.shape());
    let mut du_update = Tensor::zeros(p.u_update.shape());
    let mut db_update = Tensor::zeros(p.b_update.shape());
    affine_backward_params(&da_z, x, &mut dw_update, Some(&mut db_update));
    affine_backward_params(&da_z, h, &mut du_update, None);
    dx = add_forward(&dx, &affine_backward_data(&da_z, p.w_update));
    dh = add_forward(&dh, &affine_backward_data(&da_z, p.u_update));

    (
        dx,
        dh,
        GruGrads {
            tensors: vec![
                dw_update, du_update, db_update, dw_reset, du_reset, db_reset, dw_cand, du_cand,
                db_cand,
            ],
        },
    )
}
