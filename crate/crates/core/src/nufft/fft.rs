//! Multi-dimensional FFT over an `n^q` cube (row-major, axis 0 slowest).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;

/// Rows handed to one FFT batch call.
const BATCH_ROWS: usize = 64;

pub(crate) struct NdFft {
    n: usize,
    q: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl NdFft {
    pub fn new(n: usize, q: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            q,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.q as u32)
    }

    /// Unnormalized `sum_l g_l exp(-2 pi i k.l / n)`.
    pub fn forward(&self, grid: &mut [Complex64]) {
        self.run(grid, &self.forward);
    }

    /// Unnormalized `sum_k g_k exp(+2 pi i k.l / n)`.
    pub fn inverse(&self, grid: &mut [Complex64]) {
        self.run(grid, &self.inverse);
    }

    fn run(&self, grid: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        assert_eq!(grid.len(), self.len());
        let n = self.n;
        let rows = |data: &mut [Complex64]| {
            par::for_each_chunk_mut(data, n * BATCH_ROWS, |_, chunk| fft.process(chunk));
        };
        for axis in 0..self.q {
            let inner = n.pow((self.q - 1 - axis) as u32);
            if inner == 1 {
                rows(grid);
                continue;
            }
            let outer = grid.len() / (n * inner);
            // gather lines along `axis` into contiguous rows
            let mut tmp = vec![Complex64::new(0.0, 0.0); grid.len()];
            {
                let src: &[Complex64] = grid;
                par::for_each_chunk_mut(&mut tmp, n, |r, line| {
                    let (o, i) = (r / inner, r % inner);
                    let base = o * n * inner + i;
                    for (t, x) in line.iter_mut().enumerate() {
                        *x = src[base + t * inner];
                    }
                });
            }
            rows(&mut tmp);
            let _ = outer;
            let tmp = &tmp;
            par::for_each_chunk_mut(grid, inner, |c, chunk| {
                let (o, t) = (c / n, c % n);
                for (i, x) in chunk.iter_mut().enumerate() {
                    *x = tmp[(o * inner + i) * n + t];
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matches_naive_dft_3d() {
        let n = 4;
        let q = 3;
        let fft = NdFft::new(n, q);
        let data: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut out = data.clone();
        fft.forward(&mut out);
        for k in 0..64 {
            let kk = [k / 16, (k / 4) % 4, k % 4];
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..64 {
                let ll = [l / 16, (l / 4) % 4, l % 4];
                let ph: f64 = (0..3).map(|a| (kk[a] * ll[a]) as f64).sum::<f64>();
                acc += data[l] * Complex64::from_polar(1.0, -2.0 * PI * ph / n as f64);
            }
            assert!((acc - out[k]).norm() < 1e-12);
        }
        fft.inverse(&mut out);
        for (a, b) in out.iter().zip(&data) {
            assert!((a / 64.0 - b).norm() < 1e-13);
        }
    }
}
