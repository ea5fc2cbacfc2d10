//! Additive kernels on feature windows and their exact dense evaluation.
//!
//! The additive kernel is `k(x, y) = sigma_f^2 * sum_s k_s(x^{W_s}, y^{W_s})`
//! with one radial sub-kernel per window. The dense routines here are the
//! reference against which the fast summation is checked.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::par;

/// Largest N accepted by the dense routines unless overridden.
pub const DEFAULT_DENSE_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-r^2 / (2 ell^2))`
    Gauss,
    /// `t exp(-t)` with `t = r^2 / (2 ell^2)`; scaled by `2 / ell` it is `dK/d ell`.
    DerGauss,
    /// `exp(-r / ell)`
    Matern12,
    /// `(r / ell) exp(-r / ell)`; scaled by `1 / ell` it is `dK/d ell`.
    DerMatern12,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Gauss,
        KernelFamily::DerGauss,
        KernelFamily::Matern12,
        KernelFamily::DerMatern12,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gauss => "gauss",
            KernelFamily::DerGauss => "der_gauss",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::DerMatern12 => "der_matern12",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// The non-derivative kernel a derivative family belongs to.
    pub fn base(self) -> Self {
        match self {
            KernelFamily::Gauss | KernelFamily::DerGauss => KernelFamily::Gauss,
            KernelFamily::Matern12 | KernelFamily::DerMatern12 => KernelFamily::Matern12,
        }
    }

    pub fn is_derivative(self) -> bool {
        matches!(self, KernelFamily::DerGauss | KernelFamily::DerMatern12)
    }

    /// Unit-scale radial profile as a function of the squared distance.
    #[inline]
    pub fn profile(self, r2: f64, ell: f64) -> f64 {
        match self {
            KernelFamily::Gauss => (-r2 / (2.0 * ell * ell)).exp(),
            KernelFamily::DerGauss => {
                let t = r2 / (2.0 * ell * ell);
                t * (-t).exp()
            }
            KernelFamily::Matern12 => (-r2.sqrt() / ell).exp(),
            KernelFamily::DerMatern12 => {
                let t = r2.sqrt() / ell;
                t * (-t).exp()
            }
        }
    }
}

/// Kernel family with its (prescaled) length-scale and signal variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub ell: f64,
    pub sigma_f: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, ell: f64, sigma_f: f64) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InvalidArgument(format!("ell must be positive, got {ell}")));
        }
        if !(sigma_f > 0.0 && sigma_f.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_f must be positive, got {sigma_f}")));
        }
        Ok(Self { family, ell, sigma_f })
    }

    /// Sub-kernel value at squared distance `r2`.
    #[inline]
    pub fn eval(&self, r2: f64) -> f64 {
        self.family.profile(r2, self.ell)
    }

    /// Factor multiplying each sub-kernel sum: `sigma_f^2`, times `2/ell`
    /// (derivative Gaussian) or `1/ell` (derivative Matern).
    pub fn window_prefactor(&self) -> f64 {
        let s2 = self.sigma_f * self.sigma_f;
        match self.family {
            KernelFamily::Gauss | KernelFamily::Matern12 => s2,
            KernelFamily::DerGauss => s2 * 2.0 / self.ell,
            KernelFamily::DerMatern12 => s2 / self.ell,
        }
    }

    pub fn with_family(&self, family: KernelFamily) -> Self {
        Self { family, ..*self }
    }

    pub fn with_ell(&self, ell: f64) -> Self {
        Self { ell, ..*self }
    }

    pub fn with_sigma_f(&self, sigma_f: f64) -> Self {
        Self { sigma_f, ..*self }
    }
}

/// Ordered feature windows (0-based indices internally, ascending within a window).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSet {
    windows: Vec<Vec<usize>>,
    d_max: usize,
}

impl WindowSet {
    pub fn new(windows: Vec<Vec<usize>>, d_max: usize) -> Result<Self> {
        if !(1..=3).contains(&d_max) {
            return Err(Error::InvalidDMax(d_max));
        }
        if windows.is_empty() {
            return Err(Error::InvalidWindows("at least one window required".into()));
        }
        let mut out = Vec::with_capacity(windows.len());
        for mut w in windows {
            w.sort_unstable();
            let len = w.len();
            w.dedup();
            if w.len() != len {
                return Err(Error::InvalidWindows(format!("repeated index in window {w:?}")));
            }
            if w.is_empty() || w.len() > d_max {
                return Err(Error::InvalidWindows(format!(
                    "window length {} outside 1..={d_max}",
                    w.len()
                )));
            }
            out.push(w);
        }
        Ok(Self { windows: out, d_max })
    }

    /// Windows given with 1-based feature indices.
    pub fn from_one_based(windows: Vec<Vec<usize>>, d_max: usize) -> Result<Self> {
        let mut zero = Vec::with_capacity(windows.len());
        for w in windows {
            if w.contains(&0) {
                return Err(Error::InvalidWindows("1-based indices expected".into()));
            }
            zero.push(w.into_iter().map(|j| j - 1).collect());
        }
        Self::new(zero, d_max)
    }

    pub fn windows(&self) -> &[Vec<usize>] {
        &self.windows
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.windows
            .iter()
            .map(|w| w.iter().map(|j| j + 1).collect())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// Longest window actually present.
    pub fn max_len(&self) -> usize {
        self.windows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Checks all indices against the number of features.
    pub fn validate_for(&self, d: usize) -> Result<()> {
        match self.windows.iter().flatten().find(|&&j| j >= d) {
            Some(j) => Err(Error::InvalidWindows(format!(
                "feature index {} exceeds d = {d}",
                j + 1
            ))),
            None => Ok(()),
        }
    }

    /// True when no feature appears in two windows.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.windows.iter().flatten().all(|j| seen.insert(*j))
    }

    /// Singleton window sets, one per window, with the same `d_max`.
    pub fn split(&self) -> Vec<WindowSet> {
        self.windows
            .iter()
            .map(|w| WindowSet {
                windows: vec![w.clone()],
                d_max: self.d_max,
            })
            .collect()
    }
}

/// Window-restricted copy of the points with its dimension.
pub(crate) struct WindowPoints {
    pub q: usize,
    pub coords: Vec<f64>,
}

impl WindowPoints {
    pub fn gather(ds: &Dataset, window: &[usize]) -> Self {
        Self {
            q: window.len(),
            coords: ds.window_points(window),
        }
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.q..(i + 1) * self.q]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dense(spec: &KernelSpec, ws: &WindowSet, x: &Dataset, n: usize, limit: usize) -> Result<()> {
    let _ = spec;
    ws.validate_for(x.n_features())?;
    if n > limit {
        return Err(Error::DenseLimitExceeded { n, limit });
    }
    Ok(())
}

/// Exact `K(targets, sources) v` for arbitrary index windows (no length limit).
pub fn dense_cross_matvec_raw(
    spec: &KernelSpec,
    windows: &[Vec<usize>],
    targets: &Dataset,
    sources: &Dataset,
    v: &[f64],
) -> Result<Vec<f64>> {
    if v.len() != sources.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: sources.n_samples(),
            got: v.len(),
        });
    }
    let pref = spec.window_prefactor();
    let tp: Vec<WindowPoints> = windows.iter().map(|w| WindowPoints::gather(targets, w)).collect();
    let sp: Vec<WindowPoints> = windows.iter().map(|w| WindowPoints::gather(sources, w)).collect();
    Ok(par::map_range(targets.n_samples(), |i| {
        let mut total = 0.0;
        for (t, s) in tp.iter().zip(&sp) {
            let xi = t.point(i);
            let mut acc = 0.0;
            for (j, vj) in v.iter().enumerate() {
                acc += spec.eval(sq_dist(xi, s.point(j))) * vj;
            }
            total += pref * acc;
        }
        total
    }))
}

/// Exact additive-kernel product `K v` in `O(P N^2 d_max)`; for the derivative
/// families this is `(dK/d ell) v`.
pub fn dense_matvec(spec: &KernelSpec, ws: &WindowSet, x: &Dataset, v: &[f64]) -> Result<Vec<f64>> {
    dense_matvec_with_limit(spec, ws, x, v, DEFAULT_DENSE_LIMIT)
}

pub fn dense_matvec_with_limit(
    spec: &KernelSpec,
    ws: &WindowSet,
    x: &Dataset,
    v: &[f64],
    limit: usize,
) -> Result<Vec<f64>> {
    check_dense(spec, ws, x, x.n_samples(), limit)?;
    dense_cross_matvec_raw(spec, ws.windows(), x, x, v)
}

/// Exact `K(test, train) v`.
pub fn dense_cross_matvec(
    spec: &KernelSpec,
    ws: &WindowSet,
    targets: &Dataset,
    sources: &Dataset,
    v: &[f64],
) -> Result<Vec<f64>> {
    ws.validate_for(sources.n_features())?;
    let work = targets.n_samples().max(sources.n_samples());
    if work > DEFAULT_DENSE_LIMIT {
        return Err(Error::DenseLimitExceeded {
            n: work,
            limit: DEFAULT_DENSE_LIMIT,
        });
    }
    dense_cross_matvec_raw(spec, ws.windows(), targets, sources, v)
}

/// `(dK/d sigma_f) v = (2 / sigma_f) K v` with `K` the non-derivative kernel.
pub fn dsigma_matvec(spec: &KernelSpec, ws: &WindowSet, x: &Dataset, v: &[f64]) -> Result<Vec<f64>> {
    let base = spec.with_family(spec.family.base());
    let mut out = dense_matvec(&base, ws, x, v)?;
    let f = 2.0 / spec.sigma_f;
    out.iter_mut().for_each(|o| *o *= f);
    Ok(out)
}

/// Materialized kernel matrix for arbitrary index windows.
pub fn dense_matrix_raw(spec: &KernelSpec, windows: &[Vec<usize>], x: &Dataset) -> Array2<f64> {
    let n = x.n_samples();
    let pref = spec.window_prefactor();
    let pts: Vec<WindowPoints> = windows.iter().map(|w| WindowPoints::gather(x, w)).collect();
    let mut data = vec![0.0; n * n];
    par::for_each_chunk_mut(&mut data, n.max(1), |i, row| {
        for p in &pts {
            let xi = p.point(i);
            for (j, r) in row.iter_mut().enumerate() {
                *r += pref * spec.eval(sq_dist(xi, p.point(j)));
            }
        }
    });
    Array2::from_shape_vec((n, n), data).expect("square shape")
}

/// Materialized additive kernel matrix (`N <= dense limit`).
pub fn dense_matrix(spec: &KernelSpec, ws: &WindowSet, x: &Dataset) -> Result<Array2<f64>> {
    check_dense(spec, ws, x, x.n_samples(), DEFAULT_DENSE_LIMIT)?;
    Ok(dense_matrix_raw(spec, ws.windows(), x))
}
