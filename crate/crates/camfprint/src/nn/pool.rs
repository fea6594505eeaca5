use ndarray::Array4;

/// Max pooling with partial windows at the right/bottom edge, so any
/// nonzero spatial size survives (output = ceil(n / stride)). Ties go to
/// the first maximum in scan order.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub k: usize,
    pub stride: usize,
}

/// Flat (y*W + x) input index of each output element's maximum.
pub struct PoolCache {
    argmax: Vec<u32>,
    in_shape: (usize, usize, usize, usize),
}

impl MaxPool2d {
    pub fn new(k: usize, stride: usize) -> Self {
        MaxPool2d { k, stride }
    }

    pub fn out_size(&self, n: usize) -> usize {
        n.div_ceil(self.stride)
    }

    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, PoolCache) {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = (self.out_size(h), self.out_size(w));
        let mut out = Array4::<f64>::zeros((n, c, oh, ow));
        let mut argmax = vec![0u32; n * c * oh * ow];
        let xs = x.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        for plane_idx in 0..n * c {
            let plane = &xs[plane_idx * h * w..(plane_idx + 1) * h * w];
            let out_base = plane_idx * oh * ow;
            for oy in 0..oh {
                let y0 = oy * self.stride;
                let y1 = (y0 + self.k).min(h);
                let out_row = out_base + oy * ow;
                for ox in 0..ow {
                    let x0 = ox * self.stride;
                    let x1 = (x0 + self.k).min(w);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0u32;
                    for y in y0..y1 {
                        let row = &plane[y * w..y * w + w];
                        for (xx, &v) in row[x0..x1].iter().enumerate() {
                            if v > best {
                                best = v;
                                best_idx = (y * w + x0 + xx) as u32;
                            }
                        }
                    }
                    os[out_row + ox] = best;
                    argmax[out_row + ox] = best_idx;
                }
            }
        }
        (
            out,
            PoolCache {
                argmax,
                in_shape: (n, c, h, w),
            },
        )
    }

    pub fn backward(&self, cache: &PoolCache, dout: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = cache.in_shape;
        let (_, _, oh, ow) = dout.dim();
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        let ds = dx.as_slice_mut().unwrap();
        let dos = dout.as_slice().unwrap();
        for s in 0..n {
            for ch in 0..c {
                let in_base = (s * c + ch) * h * w;
                let out_base = (s * c + ch) * oh * ow;
                for i in 0..oh * ow {
                    ds[in_base + cache.argmax[out_base + i] as usize] += dos[out_base + i];
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_windows_keep_small_inputs_alive() {
        let pool = MaxPool2d::new(3, 3);
        assert_eq!(pool.out_size(64), 22);
        assert_eq!(pool.out_size(8), 3);
        assert_eq!(pool.out_size(2), 1);
        assert_eq!(pool.out_size(1), 1);
    }

    #[test]
    fn forward_picks_window_maxima() {
        let pool = MaxPool2d::new(3, 3);
        let mut x = Array4::<f64>::zeros((1, 1, 4, 4));
        for (i, v) in x.iter_mut().enumerate() {
            *v = i as f64;
        }
        let (y, _) = pool.forward(&x);
        // 4 -> 2 outputs per axis; second window is partial
        assert_eq!(y.dim(), (1, 1, 2, 2));
        assert_eq!(y[[0, 0, 0, 0]], 10.0); // max of rows 0..3, cols 0..3
        assert_eq!(y[[0, 0, 0, 1]], 11.0); // partial col window
        assert_eq!(y[[0, 0, 1, 1]], 15.0);
    }

    #[test]
    fn backward_routes_to_argmax_only() {
        let pool = MaxPool2d::new(3, 3);
        let mut x = Array4::<f64>::zeros((1, 1, 3, 3));
        x[[0, 0, 1, 2]] = 9.0;
        let (_, cache) = pool.forward(&x);
        let dout = Array4::from_elem((1, 1, 1, 1), 2.5);
        let dx = pool.backward(&cache, &dout);
        assert_eq!(dx[[0, 0, 1, 2]], 2.5);
        assert_eq!(dx.sum(), 2.5);
    }

    #[test]
    fn tie_breaks_to_first_in_scan_order() {
        let pool = MaxPool2d::new(3, 3);
        let x = Array4::<f64>::from_elem((1, 1, 3, 3), 1.0);
        let (_, cache) = pool.forward(&x);
        let dx = pool.backward(&cache, &Array4::from_elem((1, 1, 1, 1), 1.0));
        assert_eq!(dx[[0, 0, 0, 0]], 1.0);
    }
}
