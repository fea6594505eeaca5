use ndarray::{Array1, Array4};

use super::Param;

/// Per-channel batch normalization over (N, H, W).
///
/// Training mode normalizes with biased batch statistics and keeps an
/// exponential moving average for inference; a weight snapshot therefore
/// freezes whatever running statistics existed at that point.
///
/// All passes run over contiguous (n, c) planes; this layer sits on the
/// widest tensors in the network, so per-element iterator overhead is not
/// affordable.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

pub struct BnCache {
    x_hat: Array4<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(ndarray::ArrayD::ones(ndarray::IxDyn(&[channels]))),
            beta: Param::new(ndarray::ArrayD::zeros(ndarray::IxDyn(&[channels]))),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward_train(&mut self, x: &Array4<f64>) -> (Array4<f64>, BnCache) {
        let (n, c, h, w) = x.dim();
        let hw = h * w;
        let m = (n * hw) as f64;
        let xs = x.as_slice().expect("bn input must be standard layout");
        let mut sum = vec![0.0f64; c];
        let mut sumsq = vec![0.0f64; c];
        for s in 0..n {
            for ch in 0..c {
                let plane = &xs[(s * c + ch) * hw..(s * c + ch + 1) * hw];
                let mut a = 0.0;
                let mut b = 0.0;
                for &v in plane {
                    a += v;
                    b += v * v;
                }
                sum[ch] += a;
                sumsq[ch] += b;
            }
        }
        let gamma = self.gamma.value.as_slice().unwrap();
        let beta = self.beta.value.as_slice().unwrap();
        let mut mean = vec![0.0f64; c];
        let mut inv_std = Array1::zeros(c);
        for ch in 0..c {
            mean[ch] = sum[ch] / m;
            let var = (sumsq[ch] / m - mean[ch] * mean[ch]).max(0.0);
            inv_std[ch] = 1.0 / (var + self.eps).sqrt();
            self.running_mean[ch] =
                (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
            self.running_var[ch] =
                (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var;
        }
        let mut x_hat = Array4::<f64>::zeros((n, c, h, w));
        let mut y = Array4::<f64>::zeros((n, c, h, w));
        {
            let xh = x_hat.as_slice_mut().unwrap();
            let ys = y.as_slice_mut().unwrap();
            for s in 0..n {
                for ch in 0..c {
                    let base = (s * c + ch) * hw;
                    let (mu, istd, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                    for i in base..base + hw {
                        let xhv = (xs[i] - mu) * istd;
                        xh[i] = xhv;
                        ys[i] = g * xhv + b;
                    }
                }
            }
        }
        (y, BnCache { x_hat, inv_std })
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let hw = h * w;
        let xs = x.as_slice().expect("bn input must be standard layout");
        let gamma = self.gamma.value.as_slice().unwrap();
        let beta = self.beta.value.as_slice().unwrap();
        let mut y = Array4::<f64>::zeros((n, c, h, w));
        let ys = y.as_slice_mut().unwrap();
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                let mu = self.running_mean[ch];
                let istd = 1.0 / (self.running_var[ch] + self.eps).sqrt();
                let (g, b) = (gamma[ch], beta[ch]);
                for i in base..base + hw {
                    ys[i] = g * (xs[i] - mu) * istd + b;
                }
            }
        }
        y
    }

    pub fn backward(&mut self, cache: &BnCache, dout: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = dout.dim();
        let hw = h * w;
        let m = (n * hw) as f64;
        let ds = dout.as_slice().expect("bn gradient must be standard layout");
        let xh = cache.x_hat.as_slice().unwrap();
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xh = vec![0.0f64; c];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                let mut a = 0.0;
                let mut b = 0.0;
                for i in base..base + hw {
                    a += ds[i];
                    b += ds[i] * xh[i];
                }
                sum_dy[ch] += a;
                sum_dy_xh[ch] += b;
            }
        }
        let gamma = self.gamma.value.as_slice().unwrap();
        {
            let dgamma = self.gamma.grad.as_slice_mut().unwrap();
            let dbeta = self.beta.grad.as_slice_mut().unwrap();
            for ch in 0..c {
                dgamma[ch] += sum_dy_xh[ch];
                dbeta[ch] += sum_dy[ch];
            }
        }
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                let scale = gamma[ch] * cache.inv_std[ch] / m;
                let (sd, sdx) = (sum_dy[ch], sum_dy_xh[ch]);
                for i in base..base + hw {
                    dxs[i] = scale * (m * ds[i] - sd - xh[i] * sdx);
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array4, Axis};

    #[test]
    fn train_output_is_normalized_per_channel() {
        let mut bn = BatchNorm2d::new(2);
        let mut x = Array4::zeros((3, 2, 4, 4));
        for (i, v) in x.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() * 3.0 + 1.0;
        }
        let (y, _) = bn.forward_train(&x);
        for ch in 0..2 {
            let lane = y.index_axis(Axis(1), ch);
            let m = lane.sum() / lane.len() as f64;
            let var = lane.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / lane.len() as f64;
            assert!(m.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-4); // eps slack
        }
    }

    #[test]
    fn constant_input_stays_finite() {
        let mut bn = BatchNorm2d::new(1);
        let x = Array4::from_elem((2, 1, 3, 3), 5.0);
        let (y, _) = bn.forward_train(&x);
        assert!(y.iter().all(|v| v.is_finite()));
        assert!(y.iter().all(|&v| v.abs() < 1e-6)); // zero variance -> zero x_hat
    }

    #[test]
    fn eval_uses_running_statistics() {
        let mut bn = BatchNorm2d::new(1);
        let x = Array4::from_elem((1, 1, 2, 2), 2.0);
        // before any training step: running mean 0, var 1
        let y = bn.forward_eval(&x);
        assert!((y[[0, 0, 0, 0]] - 2.0 / (1.0f64 + 1e-5).sqrt()).abs() < 1e-12);
        bn.forward_train(&x);
        let y2 = bn.forward_eval(&x);
        assert_ne!(y[[0, 0, 0, 0]], y2[[0, 0, 0, 0]]);
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let mut bn = BatchNorm2d::new(1);
        let mut x = Array4::zeros((1, 1, 2, 2));
        for (i, v) in x.iter_mut().enumerate() {
            *v = i as f64; // mean 1.5, biased var 1.25
        }
        bn.forward_train(&x);
        assert!((bn.running_mean[0] - 0.1 * 1.5).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 1.25)).abs() < 1e-12);
    }
}
