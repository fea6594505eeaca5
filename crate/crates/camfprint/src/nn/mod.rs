//! Minimal CNN building blocks: just what the two networks need, in f64,
//! with explicit forward/backward passes.
//!
//! Layers are cache-free: `forward` is a pure function of the parameters,
//! and `backward` takes whatever intermediate the caller kept (the layer
//! input, the activation output, the pooling argmax). Gradients accumulate
//! into each [`Param`], which makes weight sharing a non-event: backward
//! through a shared layer twice simply adds both contributions.

mod act;
mod batchnorm;
pub mod check;
mod conv;
mod dense;
mod loss;
mod pool;

pub use act::{relu, relu_backward, sigmoid, tanh_backward, tanh_forward, tanh_into};
pub use batchnorm::{BatchNorm2d, BnCache};
pub use conv::Conv2d;
pub use dense::Dense;
pub use loss::{
    bce_logits_backward, bce_logits_loss, softmax, softmax_xent_backward, softmax_xent_loss,
};
pub use pool::{MaxPool2d, PoolCache};

use ndarray::ArrayD;

/// A trainable tensor with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    velocity: ArrayD<f64>,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        let velocity = ArrayD::zeros(value.raw_dim());
        Param {
            value,
            grad,
            velocity,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Heavy-ball SGD: v <- m*v + (g + wd*w); w <- w - lr*v.
    pub fn sgd_step(&mut self, hyper: &SgdHyper) {
        ndarray::Zip::from(&mut self.velocity)
            .and(&self.grad)
            .and(&self.value)
            .for_each(|v, &g, &w| {
                *v = hyper.momentum * *v + g + hyper.weight_decay * w;
            });
        ndarray::Zip::from(&mut self.value)
            .and(&self.velocity)
            .for_each(|w, &v| {
                *w -= hyper.lr * v;
            });
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SgdHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Uniform access to every trainable tensor of a network, in a fixed order.
pub trait HasParams {
    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)>;

    fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    fn sgd_step(&mut self, hyper: &SgdHyper) {
        for (_, p) in self.params_mut() {
            p.sgd_step(hyper);
        }
    }
}

/// Glorot-uniform initialization over a freshly allocated tensor.
pub(crate) fn glorot_uniform(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl rand::Rng,
) -> ArrayD<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = ArrayD::zeros(ndarray::IxDyn(shape));
    for v in t.iter_mut() {
        *v = rng.gen_range(-limit..limit);
    }
    t
}
