//! Feature grouping optimization over pairwise kernel weights.
//!
//! Every candidate pair `s` gets a Gaussian sub-kernel `K_s` with weight
//! `sigma_s^2`. On a subsample split into fit and validation halves the
//! objective is
//!
//! ```text
//! Z(sigma) = |C(sigma) (K(sigma) + beta I)^{-1} y_fit - y_val|^2 / N_val + lambda sum_s sigma_s
//! ```
//!
//! minimized over `sigma >= 0` by proximal gradient steps with backtracking.
//! With `e` the validation residual, `v` the fitted coefficients and
//! `w = (K + beta I)^{-1} C^T e`, the smooth part has gradient
//! `4 sigma_s / N_val * (e^T C_s v - w^T K_s v)`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ranking::mis_scores;
use crate::data::{Dataset, ScalingState};
use crate::error::{Error, Result};
use crate::kernel::WindowSet;
use crate::par;
use crate::solver::{cg_solve, CgOptions, MatrixOperator};

/// Above this many candidate pairs the features are pre-filtered by MIS.
pub const MAX_DENSE_PAIRS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FgoConfig {
    pub lambda: f64,
    /// Length-scale on the quarter-box scale.
    pub ell: f64,
    pub beta: f64,
    pub subset_size: usize,
    /// Restrict candidate pairs to the top features by MIS (`None`: all,
    /// subject to `MAX_DENSE_PAIRS`).
    pub candidates: Option<usize>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FgoConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            ell: 1.0,
            beta: 0.1,
            subset_size: 500,
            candidates: None,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

impl FgoConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("fgo.ell", self.ell), ("fgo.beta", self.beta), ("fgo.tol", self.tol)] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument("fgo.lambda must be nonnegative".into()));
        }
        if self.subset_size < 4 || self.max_iter == 0 {
            return Err(Error::InvalidArgument("fgo needs subset_size >= 4 and max_iter >= 1".into()));
        }
        if matches!(self.candidates, Some(c) if c < 2) {
            return Err(Error::InvalidArgument("fgo.candidates must be at least 2".into()));
        }
        Ok(())
    }
}

/// Optimized pair weights and the resulting windows.
#[derive(Debug, Clone)]
pub struct FgoOutcome {
    pub windows: WindowSet,
    /// Candidate pairs (0-based) with their final `sigma`.
    pub weights: Vec<([usize; 2], f64)>,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
}

/// Brings data onto the quarter box; returns the factor to apply to a
/// quarter-box length-scale.
fn quarter_box(ds: &Dataset) -> Result<(Dataset, f64)> {
    Ok(match ds.scaling() {
        ScalingState::Raw => (ds.zscore_normalize()?.minmax_to_quarter_box()?, 1.0),
        ScalingState::Zscored => (ds.minmax_to_quarter_box()?, 1.0),
        ScalingState::QuarterBox => (ds.clone(), 1.0),
        ScalingState::Prescaled { d_max } => (ds.clone(), 1.0 / (d_max as f64).sqrt()),
    })
}

fn pair_kernel(a: &Dataset, b: &Dataset, pair: [usize; 2], ell: f64) -> Array2<f64> {
    let pa = a.window_points(&pair);
    let pb = b.window_points(&pair);
    let (na, nb) = (a.n_samples(), b.n_samples());
    let inv = 1.0 / (2.0 * ell * ell);
    let mut data = vec![0.0; na * nb];
    par::for_each_chunk_mut(&mut data, nb.max(1), |i, row| {
        let (x0, x1) = (pa[2 * i], pa[2 * i + 1]);
        for (j, r) in row.iter_mut().enumerate() {
            let (d0, d1) = (x0 - pb[2 * j], x1 - pb[2 * j + 1]);
            *r = (-(d0 * d0 + d1 * d1) * inv).exp();
        }
    });
    Array2::from_shape_vec((na, nb), data).expect("kernel shape")
}

struct Problem {
    k: Vec<Array2<f64>>,
    c: Vec<Array2<f64>>,
    y_fit: Vec<f64>,
    y_val: Array1<f64>,
    beta: f64,
    lambda: f64,
}

struct Eval {
    smooth: f64,
    total: f64,
    v: Array1<f64>,
    e: Array1<f64>,
}

const INNER: CgOptions = CgOptions {
    tol: 1e-10,
    max_iter: 5000,
};

impl Problem {
    fn build(qb: &Dataset, pairs: &[[usize; 2]], cfg: &FgoConfig, factor: f64, seed: u64) -> Result<Self> {
        let sub = qb.subsample(cfg.subset_size, seed);
        let (fit, val) = sub.train_test_split(0.5, seed)?;
        let ell = cfg.ell * factor;
        Ok(Problem {
            k: pairs.iter().map(|&p| pair_kernel(&fit, &fit, p, ell)).collect(),
            c: pairs.iter().map(|&p| pair_kernel(&val, &fit, p, ell)).collect(),
            y_fit: fit.targets().to_vec(),
            y_val: val.targets().clone(),
            beta: cfg.beta,
            lambda: cfg.lambda,
        })
    }

    fn combine(mats: &[Array2<f64>], sigma: &[f64]) -> Array2<f64> {
        let mut out = Array2::zeros(mats[0].dim());
        for (m, s) in mats.iter().zip(sigma) {
            if *s > 0.0 {
                out.scaled_add(s * s, m);
            }
        }
        out
    }

    fn eval(&self, sigma: &[f64]) -> Result<Eval> {
        let kf = Self::combine(&self.k, sigma);
        let cf = Self::combine(&self.c, sigma);
        let v = Array1::from(cg_solve(&MatrixOperator(kf), &self.y_fit, self.beta, &INNER)?.solution);
        let e = cf.dot(&v) - &self.y_val;
        let smooth = e.dot(&e) / e.len() as f64;
        let total = smooth + self.lambda * sigma.iter().sum::<f64>();
        Ok(Eval { smooth, total, v, e })
    }

    fn gradient(&self, sigma: &[f64], ev: &Eval) -> Result<Vec<f64>> {
        let kf = Self::combine(&self.k, sigma);
        let cf = Self::combine(&self.c, sigma);
        let cte = cf.t().dot(&ev.e);
        let w = Array1::from(cg_solve(&MatrixOperator(kf), cte.as_slice().unwrap(), self.beta, &INNER)?.solution);
        let nv = ev.e.len() as f64;
        Ok(par::map_range(sigma.len(), |s| {
            if sigma[s] == 0.0 {
                return 0.0;
            }
            let a = ev.e.dot(&self.c[s].dot(&ev.v));
            let b = w.dot(&self.k[s].dot(&ev.v));
            4.0 * sigma[s] / nv * (a - b)
        }))
    }
}

fn candidate_pairs(ds: &Dataset, cfg: &FgoConfig, seed: u64) -> (Vec<usize>, Option<String>) {
    let d = ds.n_features();
    let mut cap = cfg.candidates.unwrap_or(d).min(d);
    let mut warning = None;
    while cap * (cap - 1) / 2 > MAX_DENSE_PAIRS {
        cap -= 1;
    }
    if cap < cfg.candidates.unwrap_or(d).min(d) {
        warning = Some(format!("fgo: candidate pairs limited to the top {cap} MIS features"));
    }
    if cap == d {
        return ((0..d).collect(), warning);
    }
    let mut feats = mis_scores(ds, 1000, seed).top(cap).to_vec();
    feats.sort_unstable();
    (feats, warning)
}

/// Optimizes pair weights on a subsample and keeps pairs with `sigma > thres`,
/// largest weight first.
pub fn fgo_windows(ds: &Dataset, cfg: &FgoConfig, thres: f64, seed: u64) -> Result<FgoOutcome> {
    cfg.validate()?;
    if ds.n_features() < 2 {
        return Err(Error::InvalidArgument("fgo needs d >= 2".into()));
    }
    let (qb, factor) = quarter_box(ds)?;
    let (feats, mut warning) = candidate_pairs(&qb, cfg, seed);
    let pairs: Vec<[usize; 2]> = feats
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| feats[i + 1..].iter().map(move |&b| [a, b]))
        .collect();
    let problem = Problem::build(&qb, &pairs, cfg, factor, seed)?;
    let p = pairs.len();
    let mut sigma = vec![(1.0 / p as f64).sqrt(); p];
    let mut cur = problem.eval(&sigma)?;
    let mut history = vec![cur.total];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let g = problem.gradient(&sigma, &cur)?;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = sigma
                .iter()
                .zip(&g)
                .map(|(s, gs)| if *s == 0.0 { 0.0 } else { (s - step * (gs + cfg.lambda)).max(0.0) })
                .collect();
            let ev = problem.eval(&trial)?;
            let diff: Vec<f64> = trial.iter().zip(&sigma).map(|(a, b)| a - b).collect();
            let lin: f64 = diff.iter().zip(&g).map(|(d, gs)| d * gs).sum();
            let quad: f64 = diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * step);
            if ev.smooth <= cur.smooth + lin + quad + 1e-15 {
                accepted = Some((trial, ev, diff));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ev, diff)) = accepted else {
            converged = true;
            break;
        };
        let moved = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let scale = trial.iter().fold(1.0f64, |m, s| m.max(*s));
        let drop = cur.total - ev.total;
        sigma = trial;
        cur = ev;
        history.push(cur.total);
        if moved <= cfg.tol * scale || drop.abs() <= cfg.tol * 1e-2 * cur.total.abs().max(1e-12) {
            converged = true;
            break;
        }
        step *= 2.0;
    }
    if !converged {
        log::warn!("fgo stopped after {iterations} iterations without meeting tol {}", cfg.tol);
    }
    let mut kept: Vec<usize> = (0..p).filter(|&s| sigma[s] > thres).collect();
    kept.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let windows = if kept.is_empty() {
        let top = mis_scores(&qb, 1000, seed).top(2).to_vec();
        let msg = format!(
            "fgo: every pair weight is zero; falling back to the top MIS pair {{{}, {}}}",
            top[0] + 1,
            top[1] + 1
        );
        log::warn!("{msg}");
        warning = Some(msg);
        vec![top]
    } else {
        kept.iter().map(|&s| pairs[s].to_vec()).collect()
    };
    Ok(FgoOutcome {
        windows: WindowSet::new(windows, 2)?,
        weights: pairs.into_iter().zip(sigma).collect(),
        history,
        iterations,
        converged,
        warning,
    })
}
