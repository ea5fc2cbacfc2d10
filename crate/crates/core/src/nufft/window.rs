//! Spreading windows in grid units `t = n x`, supported on `|t| <= cutoff`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    KaiserBessel,
    Gaussian,
}

/// A window with its shape parameter, fixed by oversampling and cutoff.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    kind: WindowKind,
    cutoff: f64,
    shape: f64,
}

impl Window {
    pub fn new(kind: WindowKind, cutoff: usize, oversampling: f64) -> Self {
        let w = cutoff as f64;
        let shape = match kind {
            WindowKind::KaiserBessel => PI * (2.0 - 1.0 / oversampling),
            WindowKind::Gaussian => 2.0 * oversampling / (2.0 * oversampling - 1.0) * w / PI,
        };
        Self {
            kind,
            cutoff: w,
            shape,
        }
    }

    /// Window value at offset `t` (grid cells).
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t.abs() > self.cutoff {
            return 0.0;
        }
        match self.kind {
            WindowKind::KaiserBessel => {
                let s = (self.cutoff * self.cutoff - t * t).max(0.0).sqrt();
                let b = self.shape;
                if b * s < 1e-6 {
                    b / PI * (1.0 + b * b * s * s / 6.0)
                } else {
                    (b * s).sinh() / (PI * s)
                }
            }
            WindowKind::Gaussian => (-t * t / self.shape).exp(),
        }
    }

    /// Continuous Fourier transform `int psi(t) exp(-2 pi i xi t) dt` at `xi = k / n`.
    pub fn transform(&self, xi: f64) -> f64 {
        match self.kind {
            WindowKind::KaiserBessel => {
                // |k| <= m/2 keeps the argument non-negative for oversampling >= 1
                let arg = self.shape * self.shape - 4.0 * PI * PI * xi * xi;
                bessel_i0(self.cutoff * arg.max(0.0).sqrt())
            }
            WindowKind::Gaussian => (PI * self.shape).sqrt() * (-PI * PI * self.shape * xi * xi).exp(),
        }
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= y / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}
