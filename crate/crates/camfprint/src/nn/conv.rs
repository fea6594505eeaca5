use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayView3, Axis, Ix2};

use super::{glorot_uniform, Param};

/// 2-D convolution, stride 1, zero-padded to preserve the spatial size
/// (kernel size must be odd). Weights are stored flattened as
/// `(out_ch, in_ch*k*k)` so forward and backward are single GEMMs per
/// sample over an im2col buffer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, rng: &mut impl rand::Rng) -> Self {
        assert!(k % 2 == 1, "same-padded conv needs an odd kernel");
        let fan_in = in_ch * k * k;
        let fan_out = out_ch * k * k;
        Conv2d {
            weight: Param::new(glorot_uniform(&[out_ch, fan_in], fan_in, fan_out, rng)),
            bias: Param::new(ndarray::ArrayD::zeros(ndarray::IxDyn(&[out_ch]))),
            in_ch,
            out_ch,
            k,
        }
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        debug_assert_eq!(c_in, self.in_ch);
        let p = h * w;
        let kk = self.k * self.k;
        let mut out = Array4::<f64>::zeros((n, self.out_ch, h, w));
        let mut col = Array2::<f64>::zeros((p, c_in * kk));
        let weight = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let bias = self.bias.value.as_slice().unwrap();
        for s in 0..n {
            im2col(x.index_axis(Axis(0), s), self.k, &mut col);
            // (O, K) x (K, P) -> (O, P), channels land contiguous
            let mut y = Array2::<f64>::zeros((self.out_ch, p));
            general_mat_mul(1.0, &weight, &col.t(), 0.0, &mut y);
            let mut out_s = out.index_axis_mut(Axis(0), s);
            let out_slice = out_s.as_slice_mut().unwrap();
            let y_slice = y.as_slice().unwrap();
            for o in 0..self.out_ch {
                let (src, dst) = (&y_slice[o * p..(o + 1) * p], &mut out_slice[o * p..(o + 1) * p]);
                let b = bias[o];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v + b;
                }
            }
        }
        out
    }

    /// Backward pass. `x` is the forward input; gradients accumulate into
    /// `weight.grad` / `bias.grad` and the input gradient is returned.
    pub fn backward(&mut self, x: &Array4<f64>, dout: &Array4<f64>) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        let p = h * w;
        let kk = self.k * self.k;
        let mut dx = Array4::<f64>::zeros((n, c_in, h, w));
        let mut col = Array2::<f64>::zeros((p, c_in * kk));
        let mut dcol = Array2::<f64>::zeros((p, c_in * kk));
        let weight = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut dw = self
            .weight
            .grad
            .view_mut()
            .into_dimensionality::<Ix2>()
            .unwrap();
        let db = self.bias.grad.as_slice_mut().unwrap();
        for s in 0..n {
            im2col(x.index_axis(Axis(0), s), self.k, &mut col);
            let dout_s = dout.index_axis(Axis(0), s);
            let dy = dout_s.to_shape((self.out_ch, p)).unwrap();
            // dW += dY (O,P) x col (P,K)
            general_mat_mul(1.0, &dy.view(), &col, 1.0, &mut dw);
            for o in 0..self.out_ch {
                db[o] += dy.row(o).sum();
            }
            // dcol = dYᵀ (P,O) x W (O,K)
            general_mat_mul(1.0, &dy.t(), &weight, 0.0, &mut dcol);
            col2im(&dcol, self.k, dx.index_axis_mut(Axis(0), s));
        }
        dx
    }
}

/// Unrolls `x` (C,H,W) into `col` (H*W, C*k*k) with zero padding of (k-1)/2;
/// row `y*W + x` holds the receptive field of output pixel (y, x). Interior
/// pixels copy whole k-length runs.
fn im2col(x: ArrayView3<'_, f64>, k: usize, col: &mut Array2<f64>) {
    let (c_in, h, w) = x.dim();
    let pad = (k - 1) / 2;
    let xs = x.to_slice().expect("conv input must be standard layout");
    let cs = col.as_slice_mut().unwrap();
    let row_len = c_in * k * k;
    for y in 0..h {
        for xx in 0..w {
            let base = (y * w + xx) * row_len;
            let left = pad.saturating_sub(xx);
            let right = (xx + k).saturating_sub(w + pad);
            let run = k - left - right;
            let src_x = xx + left - pad;
            let mut idx = base;
            for c in 0..c_in {
                let chan = c * h * w;
                for dy in 0..k {
                    let sy = y + dy;
                    if sy < pad || sy >= h + pad {
                        cs[idx..idx + k].fill(0.0);
                        idx += k;
                        continue;
                    }
                    let row_at = chan + (sy - pad) * w + src_x;
                    cs[idx..idx + left].fill(0.0);
                    cs[idx + left..idx + left + run].copy_from_slice(&xs[row_at..row_at + run]);
                    cs[idx + k - right..idx + k].fill(0.0);
                    idx += k;
                }
            }
        }
    }
}

/// Scatter-add inverse of [`im2col`].
fn col2im(dcol: &Array2<f64>, k: usize, mut dx: ndarray::ArrayViewMut3<'_, f64>) {
    let (c_in, h, w) = dx.dim();
    let pad = (k - 1) / 2;
    let ds = dcol.as_slice().unwrap();
    let out = dx.as_slice_mut().unwrap();
    let row_len = c_in * k * k;
    for y in 0..h {
        for xx in 0..w {
            let base = (y * w + xx) * row_len;
            let left = pad.saturating_sub(xx);
            let right = (xx + k).saturating_sub(w + pad);
            let run = k - left - right;
            let src_x = xx + left - pad;
            let mut idx = base;
            for c in 0..c_in {
                let chan = c * h * w;
                for dy in 0..k {
                    let sy = y + dy;
                    if sy < pad || sy >= h + pad {
                        idx += k;
                        continue;
                    }
                    let row_at = chan + (sy - pad) * w + src_x;
                    for t in 0..run {
                        out[row_at + t] += ds[idx + left + t];
                    }
                    idx += k;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(n^4) convolution, the independent reference for the
    /// im2col+GEMM path.
    fn conv_naive(x: &Array4<f64>, conv: &Conv2d) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        let k = conv.k;
        let pad = (k - 1) as isize / 2;
        let mut out = Array4::<f64>::zeros((n, conv.out_ch, h, w));
        for s in 0..n {
            for o in 0..conv.out_ch {
                for y in 0..h as isize {
                    for xx in 0..w as isize {
                        let mut acc = conv.bias.value[[o]];
                        for c in 0..c_in {
                            for dy in 0..k as isize {
                                for dx in 0..k as isize {
                                    let sy = y + dy - pad;
                                    let sx = xx + dx - pad;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    let wv = conv.weight.value
                                        [[o, c * k * k + dy as usize * k + dx as usize]];
                                    acc += wv * x[[s, c, sy as usize, sx as usize]];
                                }
                            }
                        }
                        out[[s, o, y as usize, xx as usize]] = acc;
                    }
                }
            }
        }
        out
    }

    fn random_input(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array4::zeros(shape);
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        x
    }

    #[test]
    fn gemm_conv_matches_naive_reference() {
        for (k, c_in, c_out) in [(1, 2, 3), (3, 3, 4), (5, 2, 2), (7, 1, 3)] {
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let conv = Conv2d::new(c_in, c_out, k, &mut rng);
            let x = random_input((2, c_in, 6, 5), 100 + k as u64);
            let fast = conv.forward(&x);
            let slow = conv_naive(&x, &conv);
            let max_err = (&fast - &slow).mapv(f64::abs).iter().fold(0.0, |a: f64, &b| a.max(b));
            assert!(max_err < 1e-12, "k={k}: max err {max_err}");
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y
        let k = 3;
        let (c, h, w) = (2, 5, 4);
        let x = random_input((1, c, h, w), 7);
        let mut col = Array2::zeros((h * w, c * k * k));
        im2col(x.index_axis(Axis(0), 0), k, &mut col);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = Array2::from_shape_fn((h * w, c * k * k), |_| rng.gen_range(-1.0..1.0));
        let lhs: f64 = (&col * &y).sum();
        let mut back = Array4::<f64>::zeros((1, c, h, w));
        col2im(&y, k, back.index_axis_mut(Axis(0), 0));
        let rhs: f64 = (&x * &back).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
