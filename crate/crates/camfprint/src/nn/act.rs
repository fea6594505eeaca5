use ndarray::{Array, Dimension};

pub fn tanh_forward<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(f64::tanh)
}

/// In-place tanh for owned tensors; skips one allocation on the wide
/// conv-block outputs.
pub fn tanh_into<D: Dimension>(mut x: Array<f64, D>) -> Array<f64, D> {
    x.mapv_inplace(f64::tanh);
    x
}

/// `y` is the tanh output; d tanh = 1 - y^2.
pub fn tanh_backward<D: Dimension>(y: &Array<f64, D>, dout: &Array<f64, D>) -> Array<f64, D> {
    let mut dx = dout.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yv| {
        *d *= 1.0 - yv * yv;
    });
    dx
}

pub fn relu<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

/// `y` is the relu output; the gradient passes where the output is positive.
pub fn relu_backward<D: Dimension>(y: &Array<f64, D>, dout: &Array<f64, D>) -> Array<f64, D> {
    let mut dx = dout.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yv| {
        if yv <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn sigmoid_is_bounded_and_symmetric() {
        for z in [-700.0, -30.0, -1.0, 0.0, 1.0, 30.0, 700.0] {
            let s = sigmoid(z);
            assert!((0.0..=1.0).contains(&s));
            assert!((s + sigmoid(-z) - 1.0).abs() < 1e-12);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn relu_backward_masks_non_positive() {
        let x = arr1(&[-1.0, 0.0, 2.0]);
        let y = relu(&x);
        let dx = relu_backward(&y, &arr1(&[1.0, 1.0, 1.0]));
        assert_eq!(dx, arr1(&[0.0, 0.0, 1.0]));
    }
}
