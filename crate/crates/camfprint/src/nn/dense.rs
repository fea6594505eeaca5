use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Ix2};

use super::{glorot_uniform, Param};

/// Fully connected layer, weights stored as (out, in).
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl rand::Rng) -> Self {
        Dense {
            weight: Param::new(glorot_uniform(&[out_dim, in_dim], in_dim, out_dim, rng)),
            bias: Param::new(ndarray::ArrayD::zeros(ndarray::IxDyn(&[out_dim]))),
            in_dim,
            out_dim,
        }
    }

    /// x: (N, in) -> (N, out)
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let n = x.nrows();
        let weight = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut y = Array2::<f64>::zeros((n, self.out_dim));
        general_mat_mul(1.0, x, &weight.t(), 0.0, &mut y);
        let bias = self.bias.value.as_slice().unwrap();
        for mut row in y.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        y
    }

    /// `x` is the forward input; accumulates parameter gradients, returns dx.
    pub fn backward(&mut self, x: &Array2<f64>, dout: &Array2<f64>) -> Array2<f64> {
        let weight = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut dw = self
            .weight
            .grad
            .view_mut()
            .into_dimensionality::<Ix2>()
            .unwrap();
        general_mat_mul(1.0, &dout.t(), x, 1.0, &mut dw);
        let db = self.bias.grad.as_slice_mut().unwrap();
        for row in dout.rows() {
            for (g, &d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = Array2::<f64>::zeros((x.nrows(), self.in_dim));
        general_mat_mul(1.0, dout, &weight, 0.0, &mut dx);
        dx
    }
}
