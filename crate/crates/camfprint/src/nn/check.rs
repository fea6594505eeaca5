//! Central finite-difference gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HasParams;

/// Worst relative disagreement between the analytic gradients currently
/// stored in `net` and central finite differences of `loss_fn`.
///
/// `loss_fn` must recompute the exact loss whose backward pass filled the
/// gradients (same batch, same mode). Up to `samples_per_tensor`
/// coordinates per tensor are probed, chosen by `seed`.
pub fn max_rel_grad_error<N: HasParams>(
    net: &mut N,
    mut loss_fn: impl FnMut(&mut N) -> f64,
    samples_per_tensor: usize,
    h: f64,
    seed: u64,
) -> f64 {
    let analytic: Vec<Vec<f64>> = net
        .params_mut()
        .iter()
        .map(|(_, p)| p.grad.iter().cloned().collect())
        .collect();
    let sizes: Vec<usize> = analytic.iter().map(|g| g.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (t, &len) in sizes.iter().enumerate() {
        for _ in 0..samples_per_tensor.min(len) {
            let i = rng.gen_range(0..len);
            let original = {
                let mut params = net.params_mut();
                let v = params[t].1.value.iter_mut().nth(i).unwrap();
                let orig = *v;
                *v = orig + h;
                orig
            };
            let loss_plus = loss_fn(net);
            {
                let mut params = net.params_mut();
                *params[t].1.value.iter_mut().nth(i).unwrap() = original - h;
            }
            let loss_minus = loss_fn(net);
            {
                let mut params = net.params_mut();
                *params[t].1.value.iter_mut().nth(i).unwrap() = original;
            }
            let fd = (loss_plus - loss_minus) / (2.0 * h);
            let g = analytic[t][i];
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}
