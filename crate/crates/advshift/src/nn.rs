//! Convolution kernels, activations and logistic-loss scalar helpers.
//!
//! Convolutions are 3x3 with padding 1 and stride 1 or 2. Weights for a
//! layer are stored flat as `w[((co * cin + ci) * 3 + ky) * 3 + kx]` with a
//! separate bias slice `b[co]`. The backward routines are exact transposes
//! of the forward loops; gradient-check tests hold them to 1e-4 relative
//! error against central finite differences.

use crate::tensor::Tensor3;

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    LeakyRelu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if v >= 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
            Activation::Linear => v,
        }
    }

    /// Derivative recovered from the post-activation value. Valid for leaky
    /// ReLU because it preserves sign.
    #[inline]
    pub fn derivative_from_output(self, post: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if post >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Spatial output size of a padded 3x3 convolution.
pub fn conv_out_dim(input: usize, stride: usize) -> usize {
    (input - 1) / stride + 1
}

/// `out = conv(input) + bias`, then `act` applied elementwise.
pub fn conv3x3_forward(
    input: &Tensor3,
    w: &[f64],
    b: &[f64],
    cout: usize,
    stride: usize,
    act: Activation,
) -> Tensor3 {
    let cin = input.c;
    let (ih, iw) = (input.h, input.w);
    let (oh, ow) = (conv_out_dim(ih, stride), conv_out_dim(iw, stride));
    debug_assert_eq!(w.len(), cout * cin * 9);
    debug_assert_eq!(b.len(), cout);

    let mut out = Tensor3::zeros(cout, oh, ow);
    for co in 0..cout {
        let bias = b[co];
        let base = co * oh * ow;
        out.data[base..base + oh * ow].iter_mut().for_each(|v| *v = bias);
    }

    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..3usize {
                let (oy_lo, oy_hi) = out_range(ky, ih, oh, stride);
                for kx in 0..3usize {
                    let wv = w[((co * cin + ci) * 3 + ky) * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = out_range(kx, iw, ow, stride);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - 1;
                        let in_base = (ci * ih + iy) * iw;
                        let out_base = (co * oh + oy) * ow;
                        if stride == 1 {
                            let shift = kx.wrapping_sub(1);
                            let in_row =
                                &input.data[in_base + ox_lo.wrapping_add(shift)
                                    ..in_base + (ox_hi - 1).wrapping_add(shift) + 1];
                            let out_row = &mut out.data[out_base + ox_lo..out_base + ox_hi];
                            for (o, &i) in out_row.iter_mut().zip(in_row) {
                                *o += wv * i;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - 1;
                                out.data[out_base + ox] += wv * input.data[in_base + ix];
                            }
                        }
                    }
                }
            }
        }
    }

    if act != Activation::Linear {
        out.data.iter_mut().for_each(|v| *v = act.apply(*v));
    }
    out
}

/// Output-coordinate range for which `o * stride + k - 1` stays in `[0, in_dim)`.
#[inline]
fn out_range(k: usize, in_dim: usize, out_dim: usize, stride: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if in_dim + 1 > k {
        ((in_dim - k) / stride + 1).min(out_dim)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Converts a gradient w.r.t. post-activation values into a gradient w.r.t.
/// pre-activation values, in place.
pub fn activation_backward(dout: &mut Tensor3, post: &Tensor3, act: Activation) {
    if act == Activation::Linear {
        return;
    }
    for (g, &p) in dout.data.iter_mut().zip(&post.data) {
        *g *= act.derivative_from_output(p);
    }
}

/// Gradient w.r.t. the convolution input. `dpre` is the gradient w.r.t.
/// pre-activation outputs.
pub fn conv3x3_backward_input(
    dpre: &Tensor3,
    w: &[f64],
    cin: usize,
    ih: usize,
    iw: usize,
    stride: usize,
) -> Tensor3 {
    let (cout, oh, ow) = (dpre.c, dpre.h, dpre.w);
    let mut din = Tensor3::zeros(cin, ih, iw);
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..3usize {
                let (oy_lo, oy_hi) = out_range(ky, ih, oh, stride);
                for kx in 0..3usize {
                    let wv = w[((co * cin + ci) * 3 + ky) * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = out_range(kx, iw, ow, stride);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - 1;
                        let in_base = (ci * ih + iy) * iw;
                        let out_base = (co * oh + oy) * ow;
                        if stride == 1 {
                            let shift = kx.wrapping_sub(1);
                            let din_row = &mut din.data[in_base + ox_lo.wrapping_add(shift)
                                ..in_base + (ox_hi - 1).wrapping_add(shift) + 1];
                            let dpre_row = &dpre.data[out_base + ox_lo..out_base + ox_hi];
                            for (i, &o) in din_row.iter_mut().zip(dpre_row) {
                                *i += wv * o;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - 1;
                                din.data[in_base + ix] += wv * dpre.data[out_base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

/// Accumulates weight and bias gradients into `gw`/`gb`.
pub fn conv3x3_grad_params(
    dpre: &Tensor3,
    input: &Tensor3,
    stride: usize,
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let (cout, oh, ow) = (dpre.c, dpre.h, dpre.w);
    let cin = input.c;
    let (ih, iw) = (input.h, input.w);
    debug_assert_eq!(gw.len(), cout * cin * 9);
    debug_assert_eq!(gb.len(), cout);

    for co in 0..cout {
        let base = co * oh * ow;
        gb[co] += dpre.data[base..base + oh * ow].iter().sum::<f64>();
    }

    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..3usize {
                let (oy_lo, oy_hi) = out_range(ky, ih, oh, stride);
                for kx in 0..3usize {
                    let (ox_lo, ox_hi) = out_range(kx, iw, ow, stride);
                    let mut acc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - 1;
                        let in_base = (ci * ih + iy) * iw;
                        let out_base = (co * oh + oy) * ow;
                        if stride == 1 {
                            let shift = kx.wrapping_sub(1);
                            let in_row = &input.data[in_base + ox_lo.wrapping_add(shift)
                                ..in_base + (ox_hi - 1).wrapping_add(shift) + 1];
                            let dpre_row = &dpre.data[out_base + ox_lo..out_base + ox_hi];
                            for (&i, &o) in in_row.iter().zip(dpre_row) {
                                acc += i * o;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - 1;
                                acc += input.data[in_base + ix] * dpre.data[out_base + ox];
                            }
                        }
                    }
                    gw[((co * cin + ci) * 3 + ky) * 3 + kx] += acc;
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `-(t ln s(z) + (1-t) ln(1-s(z)))`.
#[inline]
pub fn bce_with_logit(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// d(bce)/dz = sigmoid(z) - t.
#[inline]
pub fn bce_grad(z: f64, t: f64) -> f64 {
    sigmoid(z) - t
}

/// Three-valued sign: sign(0) = 0, so dead pixels stay unperturbed.
#[inline]
pub fn sign3(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn naive_conv(
        input: &Tensor3,
        w: &[f64],
        b: &[f64],
        cout: usize,
        stride: usize,
    ) -> Tensor3 {
        let cin = input.c;
        let (oh, ow) = (conv_out_dim(input.h, stride), conv_out_dim(input.w, stride));
        let mut out = Tensor3::zeros(cout, oh, ow);
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * stride + ky) as isize - 1;
                                let ix = (ox * stride + kx) as isize - 1;
                                if iy < 0
                                    || ix < 0
                                    || iy >= input.h as isize
                                    || ix >= input.w as isize
                                {
                                    continue;
                                }
                                acc += w[((co * cin + ci) * 3 + ky) * 3 + kx]
                                    * input.at(ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    *out.at_mut(co, oy, ox) = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_reference() {
        let mut rng = crate::rng::derive(11, 99, 0);
        for &stride in &[1usize, 2] {
            let input = Tensor3::from_vec(
                3,
                6,
                6,
                (0..3 * 36).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let w: Vec<f64> = (0..4 * 3 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = conv3x3_forward(&input, &w, &b, 4, stride, Activation::Linear);
            let slow = naive_conv(&input, &w, &b, 4, stride);
            for (a, e) in fast.data.iter().zip(&slow.data) {
                assert!((a - e).abs() < 1e-12, "stride {stride}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn zero_weights_propagate_zero() {
        let input = Tensor3::zeros(3, 8, 8);
        let w = vec![0.0; 2 * 3 * 9];
        let b = vec![0.0; 2];
        let out = conv3x3_forward(&input, &w, &b, 2, 2, Activation::LeakyRelu);
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bce_is_stable_and_consistent() {
        for &(z, t) in &[(-30.0, 0.0), (30.0, 1.0), (0.0, 0.5), (2.5, 1.0), (-3.0, 0.0)] {
            let loss = bce_with_logit(z, t);
            assert!(loss.is_finite() && loss >= 0.0);
            // numeric derivative
            let h = 1e-6;
            let num = (bce_with_logit(z + h, t) - bce_with_logit(z - h, t)) / (2.0 * h);
            assert!((num - bce_grad(z, t)).abs() < 1e-6);
        }
    }

    #[test]
    fn sign_is_three_valued() {
        assert_eq!(sign3(4.2), 1.0);
        assert_eq!(sign3(-0.1), -1.0);
        assert_eq!(sign3(0.0), 0.0);
    }
}
