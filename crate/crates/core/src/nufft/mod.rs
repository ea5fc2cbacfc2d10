//! Nonuniform FFTs on the torus `[-1/2, 1/2)^q`, `q <= 3`.
//!
//! Type 1 (`points -> frequencies`) evaluates
//! `S_k = sum_j w_j exp(-2 pi i k.x_j)` for every `k` in `I_m = [-m/2, m/2)^q`;
//! type 2 (`frequencies -> points`) evaluates `f(x_j) = sum_k c_k exp(2 pi i k.x_j)`.
//! Both go through an oversampled grid of `n >= oversampling * m` cells per
//! axis, a tensor-product spreading window of half-width `cutoff` cells and a
//! diagonal deconvolution by the window's Fourier transform.

mod fft;
mod window;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub(crate) use fft::NdFft;
pub use window::WindowKind;
use window::Window;

const MAX_CUTOFF: usize = 31;
const MAX_SPAN: usize = 2 * MAX_CUTOFF + 1;
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Accuracy knobs shared by every transform of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NufftOptions {
    pub oversampling: f64,
    pub cutoff: usize,
    pub window: WindowKind,
}

impl Default for NufftOptions {
    fn default() -> Self {
        Self {
            oversampling: 2.0,
            cutoff: 6,
            window: WindowKind::KaiserBessel,
        }
    }
}

/// Complex coefficients on `I_m^q`, centered layout (`k + m/2` per axis, axis 0 slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub dims: usize,
    pub m: usize,
    pub values: Vec<Complex64>,
}

impl CoefficientTable {
    pub fn zeros(dims: usize, m: usize) -> Self {
        Self {
            dims,
            m,
            values: vec![ZERO; m.pow(dims as u32)],
        }
    }

    /// Frequency vector of a flat index; only the first `dims` entries are meaningful.
    pub fn frequency(&self, index: usize) -> [i64; 3] {
        let mut k = [0i64; 3];
        let mut rest = index;
        for a in (0..self.dims).rev() {
            k[a] = (rest % self.m) as i64 - (self.m / 2) as i64;
            rest /= self.m;
        }
        k
    }

    /// Flat index of a frequency vector inside `I_m`.
    pub fn index(&self, k: &[i64]) -> Option<usize> {
        let half = (self.m / 2) as i64;
        let mut idx = 0usize;
        for &ka in k.iter().take(self.dims) {
            if ka < -half || ka >= half {
                return None;
            }
            idx = idx * self.m + (ka + half) as usize;
        }
        Some(idx)
    }

    pub fn get(&self, k: &[i64]) -> Option<Complex64> {
        self.index(k).map(|i| self.values[i])
    }

    /// Samples `sum_k c_k exp(2 pi i j.k / m)` on the centered grid `j / m`.
    pub fn inverse_samples(&self) -> Vec<f64> {
        let mut grid = self.to_fft_order();
        NdFft::new(self.m, self.dims).inverse(&mut grid);
        from_fft_order(&grid, self.m, self.dims)
            .into_iter()
            .map(|z| z.re)
            .collect()
    }

    fn to_fft_order(&self) -> Vec<Complex64> {
        let len = self.values.len();
        let mut out = vec![ZERO; len];
        for (c, v) in self.values.iter().enumerate() {
            out[centered_to_fft(c, self.m, self.dims)] = *v;
        }
        out
    }
}

/// Maps a centered flat index over `m^q` to the FFT-ordered flat index.
fn centered_to_fft(c: usize, m: usize, q: usize) -> usize {
    let mut rest = c;
    let mut digits = [0usize; 3];
    for a in (0..q).rev() {
        digits[a] = (rest % m + m / 2) % m;
        rest /= m;
    }
    digits[..q].iter().fold(0, |acc, &d| acc * m + d)
}

fn from_fft_order<T: Copy>(grid: &[T], m: usize, q: usize) -> Vec<T> {
    (0..grid.len()).map(|c| grid[centered_to_fft(c, m, q)]).collect()
}

/// Discrete Fourier coefficients `c_k = m^{-q} sum_j f(j/m) exp(-2 pi i j.k/m)` of
/// real samples given in centered layout on `j in I_m^q`.
pub fn grid_fft_coefficients(samples: &[f64], m: usize, dims: usize) -> Result<CoefficientTable> {
    if m % 2 != 0 || m == 0 || !(1..=3).contains(&dims) {
        return Err(Error::InvalidArgument(format!("grid size {m} must be even, dims {dims} in 1..=3")));
    }
    let len = m.pow(dims as u32);
    if samples.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: samples.len(),
        });
    }
    let mut grid = vec![ZERO; len];
    for (c, &s) in samples.iter().enumerate() {
        grid[centered_to_fft(c, m, dims)] = Complex64::new(s, 0.0);
    }
    NdFft::new(m, dims).forward(&mut grid);
    let scale = 1.0 / len as f64;
    let values = from_fft_order(&grid, m, dims)
        .into_iter()
        .map(|z| z * scale)
        .collect();
    Ok(CoefficientTable { dims, m, values })
}

/// Precomputed window weights of a point set on an oversampled grid.
pub struct PointGeometry {
    q: usize,
    len: usize,
    /// Lowest touched grid index per point and axis (may be negative).
    base: Vec<i64>,
    /// `(2 cutoff + 1)` window values per point and axis.
    weights: Vec<f64>,
    /// Points grouped by `base[axis 0] mod n`, ascending point order.
    buckets: Vec<Vec<u32>>,
}

impl PointGeometry {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> usize {
        self.q
    }
}

/// Immutable transform plan for fixed `(q, m)` and accuracy options.
pub struct NufftPlan {
    q: usize,
    m: usize,
    n: usize,
    options: NufftOptions,
    window: Window,
    /// `1 / psi_hat(k / n)` for `k in [-m/2, m/2)`.
    deconv: Vec<f64>,
    fft: NdFft,
}

impl std::fmt::Debug for NufftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NufftPlan")
            .field("q", &self.q)
            .field("m", &self.m)
            .field("n", &self.n)
            .field("options", &self.options)
            .finish()
    }
}

impl NufftPlan {
    pub fn new(q: usize, m: usize, options: NufftOptions) -> Result<Self> {
        if !(1..=3).contains(&q) {
            return Err(Error::InvalidArgument(format!("NUFFT dimension {q} not in 1..=3")));
        }
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidArgument(format!("grid size m = {m} must be even")));
        }
        if options.oversampling < 1.25 {
            return Err(Error::InvalidArgument(format!(
                "oversampling {} below 1.25",
                options.oversampling
            )));
        }
        if !(2..=MAX_CUTOFF).contains(&options.cutoff) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {} outside 2..={MAX_CUTOFF}",
                options.cutoff
            )));
        }
        let mut n = (options.oversampling * m as f64).ceil() as usize;
        n += n % 2;
        // every point must touch distinct cells along each axis
        let min_n = 2 * options.cutoff + 2;
        if n < min_n {
            n = min_n;
        }
        let sigma = n as f64 / m as f64;
        let window = Window::new(options.window, options.cutoff, sigma);
        let half = (m / 2) as i64;
        let deconv = (-half..half)
            .map(|k| 1.0 / window.transform(k as f64 / n as f64))
            .collect();
        Ok(Self {
            q,
            m,
            n,
            options,
            window,
            deconv,
            fft: NdFft::new(n, q),
        })
    }

    pub fn dims(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Oversampled grid size per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn options(&self) -> &NufftOptions {
        &self.options
    }

    /// Window weights for `points` (row-major `len x q`), each in `[-1/2, 1/2)`.
    pub fn geometry(&self, points: &[f64]) -> Result<PointGeometry> {
        let q = self.q;
        if points.len() % q != 0 {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: points.len() % q,
            });
        }
        if let Some(bad) = points.iter().position(|&x| !(-0.5..0.5).contains(&x)) {
            return Err(Error::PointOutOfDomain { index: bad / q });
        }
        let len = points.len() / q;
        let w = self.options.cutoff;
        let span = 2 * w + 1;
        let n = self.n as f64;
        let mut base = vec![0i64; len * q];
        let mut weights = vec![0.0; len * q * span];
        par::for_each_chunk_mut(&mut weights, q * span, |p, wts| {
            for a in 0..q {
                let t = points[p * q + a] * n;
                let lo = t.floor() as i64 - w as i64;
                for s in 0..span {
                    wts[a * span + s] = self.window.eval(t - (lo + s as i64) as f64);
                }
            }
        });
        for (p, b) in base.chunks_mut(q).enumerate() {
            for a in 0..q {
                b[a] = (points[p * q + a] * n).floor() as i64 - w as i64;
            }
        }
        let mut buckets = vec![Vec::new(); self.n];
        for p in 0..len {
            buckets[self.wrap(base[p * q])].push(p as u32);
        }
        Ok(PointGeometry {
            q,
            len,
            base,
            weights,
            buckets,
        })
    }

    #[inline]
    fn wrap(&self, l: i64) -> usize {
        l.rem_euclid(self.n as i64) as usize
    }

    /// Grid indices `wrap(start + s)` for `s < span`.
    #[inline]
    fn wrapped(&self, start: i64, span: usize) -> [usize; MAX_SPAN] {
        let mut out = [0; MAX_SPAN];
        let mut i = self.wrap(start);
        for o in out.iter_mut().take(span) {
            *o = i;
            i += 1;
            if i == self.n {
                i = 0;
            }
        }
        out
    }

    fn check_geometry(&self, geom: &PointGeometry) {
        assert_eq!(geom.q, self.q, "geometry built for another dimension");
        assert_eq!(geom.buckets.len(), self.n, "geometry built for another grid");
    }

    /// Spreads weighted points onto the oversampled grid (FFT layout).
    ///
    /// The grid is processed one axis-0 slab at a time; every slab visits its
    /// contributing points in a fixed order, so the result does not depend on
    /// the thread schedule.
    pub fn spread(&self, geom: &PointGeometry, values: &[Complex64]) -> Vec<Complex64> {
        self.check_geometry(geom);
        assert_eq!(values.len(), geom.len);
        let n = self.n;
        let q = self.q;
        let w = self.options.cutoff;
        let span = 2 * w + 1;
        let slab = n.pow(q as u32 - 1);
        let mut grid = vec![ZERO; n * slab];
        par::for_each_chunk_mut(&mut grid, slab, |l0, row| {
            for s0 in 0..span {
                let bucket = &geom.buckets[(l0 + n * 2 - s0) % n];
                for &p in bucket {
                    let p = p as usize;
                    let wts = &geom.weights[p * q * span..(p + 1) * q * span];
                    let c = values[p] * wts[s0];
                    match q {
                        1 => row[0] += c,
                        2 => {
                            let i1 = self.wrapped(geom.base[p * 2 + 1], span);
                            for s1 in 0..span {
                                row[i1[s1]] += c * wts[span + s1];
                            }
                        }
                        _ => {
                            let i1 = self.wrapped(geom.base[p * 3 + 1], span);
                            let i2 = self.wrapped(geom.base[p * 3 + 2], span);
                            let w2 = &wts[2 * span..3 * span];
                            for s1 in 0..span {
                                let c1 = c * wts[span + s1];
                                let r = &mut row[i1[s1] * n..(i1[s1] + 1) * n];
                                for (&i, &wt) in i2[..span].iter().zip(w2) {
                                    r[i] += c1 * wt;
                                }
                            }
                        }
                    }
                }
            }
        });
        grid
    }

    /// Interpolates an oversampled grid (FFT layout) at the points.
    pub fn interpolate(&self, geom: &PointGeometry, grid: &[Complex64]) -> Vec<Complex64> {
        self.check_geometry(geom);
        let n = self.n;
        let q = self.q;
        let span = 2 * self.options.cutoff + 1;
        par::map_range(geom.len, |p| {
            let wts = &geom.weights[p * q * span..(p + 1) * q * span];
            let b = &geom.base[p * q..(p + 1) * q];
            let mut acc = ZERO;
            match q {
                1 => {
                    let i0 = self.wrapped(b[0], span);
                    for s0 in 0..span {
                        acc += grid[i0[s0]] * wts[s0];
                    }
                }
                2 => {
                    let (i0, i1) = (self.wrapped(b[0], span), self.wrapped(b[1], span));
                    for s0 in 0..span {
                        let r = &grid[i0[s0] * n..(i0[s0] + 1) * n];
                        let mut inner = ZERO;
                        for s1 in 0..span {
                            inner += r[i1[s1]] * wts[span + s1];
                        }
                        acc += inner * wts[s0];
                    }
                }
                _ => {
                    let (i0, i1, i2) = (self.wrapped(b[0], span), self.wrapped(b[1], span), self.wrapped(b[2], span));
                    let w2 = &wts[2 * span..3 * span];
                    for s0 in 0..span {
                        let mut mid = ZERO;
                        for s1 in 0..span {
                            let r1 = (i0[s0] * n + i1[s1]) * n;
                            let r = &grid[r1..r1 + n];
                            let mut inner = ZERO;
                            for (&i, &wt) in i2[..span].iter().zip(w2) {
                                inner += r[i] * wt;
                            }
                            mid += inner * wts[span + s1];
                        }
                        acc += mid * wts[s0];
                    }
                }
            }
            acc
        })
    }

    /// Visits every `k in I_m^q` with its centered index, oversampled-grid index
    /// and combined deconvolution factor.
    fn for_each_mode(&self, mut f: impl FnMut(usize, usize, f64)) {
        let m = self.m;
        let half = (m / 2) as i64;
        let total = m.pow(self.q as u32);
        for c in 0..total {
            let mut rest = c;
            let mut fine = 0usize;
            let mut factor = 1.0;
            let mut stride = 1usize;
            for _ in 0..self.q {
                let d = rest % m;
                rest /= m;
                let k = d as i64 - half;
                fine += self.wrap(k) * stride;
                factor *= self.deconv[d];
                stride *= self.n;
            }
            f(c, fine, factor);
        }
    }

    /// Oversampled-grid spectrum -> deconvolved coefficients on `I_m`.
    pub(crate) fn extract_modes(&self, spectrum: &[Complex64]) -> CoefficientTable {
        let mut table = CoefficientTable::zeros(self.q, self.m);
        self.for_each_mode(|c, fine, factor| table.values[c] = spectrum[fine] * factor);
        table
    }

    /// Coefficients on `I_m` -> deconvolved, zero-padded oversampled spectrum.
    pub(crate) fn embed_modes(&self, coeffs: &CoefficientTable) -> Vec<Complex64> {
        let mut grid = vec![ZERO; self.fft.len()];
        self.for_each_mode(|c, fine, factor| grid[fine] = coeffs.values[c] * factor);
        grid
    }

    /// Multiplies an oversampled spectrum in place by `multiplier[k] * deconv(k)^2`
    /// on `I_m` and zeroes the rest; this fuses type-1, a diagonal scaling and type-2.
    pub(crate) fn filter_spectrum(&self, spectrum: &mut [Complex64], multiplier: &[f64]) {
        let mut out = vec![ZERO; spectrum.len()];
        self.for_each_mode(|c, fine, factor| {
            out[fine] = spectrum[fine] * (multiplier[c] * factor * factor)
        });
        spectrum.copy_from_slice(&out);
    }

    pub(crate) fn fft_forward(&self, grid: &mut [Complex64]) {
        self.fft.forward(grid);
    }

    pub(crate) fn fft_inverse(&self, grid: &mut [Complex64]) {
        self.fft.inverse(grid);
    }

    /// Type-1 transform: `S_k = sum_j w_j exp(-2 pi i k.x_j)`, `k in I_m^q`.
    pub fn type1(&self, points: &[f64], weights: &[Complex64]) -> Result<CoefficientTable> {
        let geom = self.geometry(points)?;
        if weights.len() != geom.len {
            return Err(Error::DimensionMismatch {
                expected: geom.len,
                got: weights.len(),
            });
        }
        Ok(self.type1_with(&geom, weights))
    }

    pub fn type1_with(&self, geom: &PointGeometry, weights: &[Complex64]) -> CoefficientTable {
        let mut grid = self.spread(geom, weights);
        self.fft.forward(&mut grid);
        self.extract_modes(&grid)
    }

    /// Type-2 transform: `f(x_j) = sum_k c_k exp(2 pi i k.x_j)`.
    pub fn type2(&self, coeffs: &CoefficientTable, points: &[f64]) -> Result<Vec<Complex64>> {
        let geom = self.geometry(points)?;
        Ok(self.type2_with(coeffs, &geom))
    }

    pub fn type2_with(&self, coeffs: &CoefficientTable, geom: &PointGeometry) -> Vec<Complex64> {
        assert_eq!((coeffs.dims, coeffs.m), (self.q, self.m), "coefficient table shape");
        let mut grid = self.embed_modes(coeffs);
        self.fft.inverse(&mut grid);
        self.interpolate(geom, &grid)
    }
}
