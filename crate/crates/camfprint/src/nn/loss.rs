use ndarray::{Array1, Array2};

use super::act::sigmoid;

/// Row-wise softmax via logsumexp.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

/// Mean categorical cross-entropy; also returns the softmax probabilities
/// needed for the backward pass.
pub fn softmax_xent_loss(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    assert_eq!(n, labels.len());
    let mut loss = 0.0;
    for (row, &label) in logits.rows().into_iter().zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += lse - row[label];
    }
    (loss / n as f64, softmax(logits))
}

/// d(mean loss)/d(logits) = (probs - onehot) / N.
pub fn softmax_xent_backward(probs: &Array2<f64>, labels: &[usize]) -> Array2<f64> {
    let n = probs.nrows() as f64;
    let mut d = probs.clone();
    for (mut row, &label) in d.rows_mut().into_iter().zip(labels) {
        row[label] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    d
}

/// Mean binary cross-entropy on logits, stable for large |z|.
pub fn bce_logits_loss(logits: &Array1<f64>, targets: &Array1<f64>) -> f64 {
    assert_eq!(logits.len(), targets.len());
    let mut loss = 0.0;
    for (&z, &y) in logits.iter().zip(targets) {
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    }
    loss / logits.len() as f64
}

/// d(mean loss)/d(logits) = (sigmoid(z) - y) / N.
pub fn bce_logits_backward(logits: &Array1<f64>, targets: &Array1<f64>) -> Array1<f64> {
    let n = logits.len() as f64;
    let mut d = Array1::zeros(logits.len());
    for ((dv, &z), &y) in d.iter_mut().zip(logits).zip(targets) {
        *dv = (sigmoid(z) - y) / n;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&arr2(&[[1.0, 2.0, 3.0], [-100.0, 0.0, 100.0]]));
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn xent_of_uniform_logits_is_log_c() {
        let (loss, _) = softmax_xent_loss(&arr2(&[[0.0, 0.0, 0.0, 0.0]]), &[2]);
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_direct_formula_in_safe_range() {
        let z = arr1(&[0.3, -1.2, 2.0]);
        let y = arr1(&[1.0, 0.0, 1.0]);
        let direct = -(sigmoid(0.3).ln() + (1.0 - sigmoid(-1.2)).ln() + sigmoid(2.0).ln()) / 3.0;
        assert!((bce_logits_loss(&z, &y) - direct).abs() < 1e-12);
        // and survives extreme logits
        assert!(bce_logits_loss(&arr1(&[800.0, -800.0]), &arr1(&[0.0, 1.0])).is_finite());
    }
}
