//! Lasso and elastic-net selection by cyclic coordinate descent.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    /// Stop once `gap / N` falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution {
    pub weights: Vec<f64>,
    pub sweeps: usize,
    pub gap: f64,
}

/// Objective `(1/2N)||Xw - y||^2 + lambda rho ||w||_1 + lambda (1 - rho)/2 ||w||^2`.
pub fn enet_objective(x: &Array2<f64>, y: &[f64], w: &[f64], lambda: f64, rho: f64) -> f64 {
    let n = x.nrows() as f64;
    let wv = ArrayView1::from(w);
    let r = x.dot(&wv) - ArrayView1::from(y);
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    r.dot(&r) / (2.0 * n) + lambda * rho * l1 + 0.5 * lambda * (1.0 - rho) * l2
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes the elastic-net objective on the given matrix as is.
pub fn coordinate_descent(x: &Array2<f64>, y: &[f64], lambda: f64, rho: f64, opts: &CdOptions) -> Result<CdSolution> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let nf = n as f64;
    let alpha = nf * lambda * rho;
    let beta = nf * lambda * (1.0 - rho);
    let norms: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let yv = ArrayView1::from(y);
    let mut w = vec![0.0; d];
    let mut r: Array1<f64> = yv.to_owned();
    let mut gap = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        for j in 0..d {
            if norms[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let old = w[j];
            let rho_j = col.dot(&r) + norms[j] * old;
            let new = soft(rho_j, alpha) / (norms[j] + beta);
            if new != old {
                r.scaled_add(old - new, &col);
                w[j] = new;
            }
        }
        gap = duality_gap(x, yv, &r, &w, alpha, beta);
        if gap / nf <= opts.tol {
            return Ok(CdSolution { weights: w, sweeps: sweep, gap });
        }
    }
    log::warn!("coordinate descent stopped with gap {gap:.3e}");
    Err(Error::NonConvergence(opts.max_sweeps))
}

fn duality_gap(x: &Array2<f64>, y: ArrayView1<f64>, r: &Array1<f64>, w: &[f64], alpha: f64, beta: f64) -> f64 {
    let wv = ArrayView1::from(w);
    let xta = x.t().dot(r) - &wv * beta;
    let dual_norm = xta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let r2 = r.dot(r);
    let w2 = wv.dot(&wv);
    let (konst, mut gap) = if dual_norm > alpha {
        let c = alpha / dual_norm;
        (c, 0.5 * (r2 + r2 * c * c))
    } else {
        (1.0, r2)
    };
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    gap += alpha * l1 - konst * r.dot(&y) + 0.5 * beta * (1.0 + konst * konst) * w2;
    gap.max(0.0)
}

/// Fitted sparse weights on the standardized subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub weights: Vec<f64>,
    /// 0-based indices with `|w| > thres`, ascending.
    pub selected: Vec<usize>,
    pub objective: f64,
    pub sweeps: usize,
}

impl Selection {
    /// All features by descending `|w|`, ties by index.
    pub fn order_by_magnitude(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.weights.len()).collect();
        idx.sort_by(|&a, &b| self.weights[b].abs().total_cmp(&self.weights[a].abs()).then(a.cmp(&b)));
        idx
    }

    pub fn selected_by_magnitude(&self) -> Vec<usize> {
        self.order_by_magnitude()
            .into_iter()
            .filter(|j| self.selected.binary_search(j).is_ok())
            .collect()
    }
}

/// Subset centered and scaled to unit variance (constant columns become 0).
pub fn standardized(ds: &Dataset, subset: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let sub = ds.subsample(subset, seed);
    let mut x = sub.features().clone();
    for mut col in x.axis_iter_mut(Axis(1)) {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.dot(&col) / n).sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|v| v / sd);
        } else {
            col.fill(0.0);
        }
    }
    let y = sub.targets();
    let my = y.sum() / y.len() as f64;
    (x, y.iter().map(|v| v - my).collect())
}

pub fn elastic_net_select(
    ds: &Dataset,
    lambda: f64,
    rho: f64,
    thres: f64,
    subset: usize,
    seed: u64,
) -> Result<Selection> {
    if !(lambda > 0.0) || !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "elastic net needs lambda > 0 and rho in (0, 1], got {lambda}, {rho}"
        )));
    }
    let (x, y) = standardized(ds, subset, seed);
    let sol = coordinate_descent(&x, &y, lambda, rho, &CdOptions::default())?;
    let objective = enet_objective(&x, &y, &sol.weights, lambda, rho);
    let selected = (0..sol.weights.len()).filter(|&j| sol.weights[j].abs() > thres).collect();
    Ok(Selection {
        weights: sol.weights,
        selected,
        objective,
        sweeps: sol.sweeps,
    })
}

pub fn lasso_select(ds: &Dataset, lambda: f64, thres: f64, subset: usize, seed: u64) -> Result<Selection> {
    elastic_net_select(ds, lambda, 1.0, thres, subset, seed)
}
