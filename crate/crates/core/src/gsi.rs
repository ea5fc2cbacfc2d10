//! ANOVA sensitivity indices of the fast-summation predictor.
//!
//! On window `W` the predictor is the trigonometric polynomial
//! `sum_k a_k c_k S_k exp(2 pi i k.x^W)` with `S_k` the adjoint sum of the
//! coefficients. Grouping `|a_k c_k S_k|^2` by the support of `k` gives the
//! variance of each ANOVA term; `k = 0` (the mean) is skipped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fastsum::{FastsumPlan, Preset};
use crate::grouping::consec_windows;
use crate::kernel::{KernelFamily, KernelSpec, WindowSet};
use crate::solver::{cg_solve, default_sigma_f, CgOptions};

/// A nonempty feature subset, 0-based and ascending.
pub type SubsetKey = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsiEntry {
    /// 1-based feature indices.
    pub subset: Vec<usize>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsiReport {
    /// Unnormalized variance `theta_v` per subset.
    pub theta: BTreeMap<SubsetKey, f64>,
    pub total_variance: f64,
    pub windows: WindowSet,
    pub family: KernelFamily,
    pub ell: f64,
    pub m: usize,
}

/// JSON layout of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsiRecord {
    pub indices: Vec<GsiEntry>,
    pub total_variance: f64,
    pub windows: Vec<Vec<usize>>,
    pub family: String,
    pub ell: f64,
    pub m: usize,
}

impl GsiReport {
    pub fn rho(&self, subset: &[usize]) -> f64 {
        self.theta.get(subset).map_or(0.0, |t| t / self.total_variance)
    }

    /// Subsets by descending `rho`, ties in lexicographic order.
    pub fn ranked(&self) -> Vec<(SubsetKey, f64)> {
        let mut out: Vec<(SubsetKey, f64)> = self
            .theta
            .iter()
            .map(|(k, t)| (k.clone(), t / self.total_variance))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn to_record(&self) -> GsiRecord {
        GsiRecord {
            indices: self
                .ranked()
                .into_iter()
                .map(|(k, rho)| GsiEntry {
                    subset: k.iter().map(|i| i + 1).collect(),
                    rho,
                })
                .collect(),
            total_variance: self.total_variance,
            windows: self.windows.to_one_based(),
            family: self.family.name().to_string(),
            ell: self.ell,
            m: self.m,
        }
    }
}

/// Local positions of the nonzero entries of `k`.
fn support(k: &[i64]) -> u8 {
    k.iter().enumerate().fold(0, |m, (a, &ka)| if ka != 0 { m | (1 << a) } else { m })
}

/// Computes `theta_v` for every nonempty subset of every window of the plan.
pub fn compute_gsi(plan: &FastsumPlan, v: &[f64]) -> Result<GsiReport> {
    let spec = plan.spec();
    let pref = spec.window_prefactor();
    let sums = plan.window_sums(v)?;
    let mut theta: BTreeMap<SubsetKey, f64> = BTreeMap::new();
    for (w, s) in plan.windows().windows().iter().zip(&sums) {
        let q = w.len();
        let table = plan.table(spec.family, q).expect("table for every window length");
        let mut partial = vec![0.0; 1 << q];
        for (idx, (c, sk)) in table.values.iter().zip(&s.values).enumerate() {
            let k = table.frequency(idx);
            let mask = support(&k[..q]);
            if mask != 0 {
                partial[mask as usize] += (c * sk * pref).norm_sqr();
            }
        }
        for (mask, t) in partial.into_iter().enumerate().skip(1) {
            let key: SubsetKey = (0..q).filter(|a| mask & (1 << a) != 0).map(|a| w[a]).collect();
            *theta.entry(key).or_insert(0.0) += t;
        }
    }
    let total_variance: f64 = theta.values().sum();
    if !(total_variance > 1e-300) {
        return Err(Error::ZeroVariance);
    }
    Ok(GsiReport {
        theta,
        total_variance,
        windows: plan.windows().clone(),
        family: spec.family,
        ell: spec.ell,
        m: plan.m(),
    })
}

/// Shortest prefix of the ranked subsets whose `rho` sum reaches `score`,
/// one window per subset.
pub fn select_windows_by_gsi(report: &GsiReport, score: f64, d_max: usize) -> Result<WindowSet> {
    if !(score > 0.0 && score < 1.0) {
        return Err(Error::InvalidArgument(format!("gsi score must lie in (0, 1), got {score}")));
    }
    let mut acc = 0.0;
    let mut windows = Vec::new();
    for (k, rho) in report.ranked() {
        windows.push(k);
        acc += rho;
        if acc >= score {
            break;
        }
    }
    WindowSet::new(windows, d_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsiConfig {
    /// Initial length-scale on the quarter-box scale.
    pub ell: f64,
    pub beta: f64,
    pub score: f64,
    pub preset: Preset,
    pub cg: CgOptions,
}

impl Default for GsiConfig {
    fn default() -> Self {
        Self {
            ell: 1.0,
            beta: 1.0,
            score: 0.99,
            preset: Preset::Default,
            cg: CgOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GsiOutcome {
    pub initial: WindowSet,
    pub report: GsiReport,
    pub windows: WindowSet,
    pub cg_iterations: usize,
}

/// Consecutive initial windows, Gaussian KRR fit by CG, then selection.
pub fn gsi_pipeline(ds: &Dataset, cfg: &GsiConfig) -> Result<GsiOutcome> {
    let d_max = ds.prescaled_d_max()?;
    let initial = consec_windows(ds.n_features(), d_max)?;
    let ell = cfg.ell / (d_max as f64).sqrt();
    let spec = KernelSpec::new(KernelFamily::Gauss, ell, default_sigma_f(&initial))?;
    let plan = FastsumPlan::new(&spec, &initial, cfg.preset, ds, Default::default())?;
    let fit = cg_solve(&plan, ds.targets().as_slice().expect("contiguous targets"), cfg.beta, &cfg.cg)?;
    let report = compute_gsi(&plan, &fit.solution)?;
    let windows = select_windows_by_gsi(&report, cfg.score, d_max)?;
    Ok(GsiOutcome {
        initial,
        report,
        windows,
        cg_iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastsum::build_plan;
    use crate::nufft::NufftOptions;
    use crate::solver::MatrixOperator;
    use ndarray::{Array1, Array2};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn prescaled(n: usize, d: usize, d_max: usize, seed: u64, y: impl Fn(&[f64]) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let t = Array1::from_shape_fn(n, |i| y(x.row(i).as_slice().unwrap()) + 0.01 * rng.random_range(-1.0..1.0));
        Dataset::new(x, t, None).unwrap().preprocess(d_max).unwrap()
    }

    fn brute_force(plan: &FastsumPlan, ds: &Dataset, v: &[f64]) -> BTreeMap<SubsetKey, f64> {
        let spec = plan.spec();
        let pref = spec.window_prefactor();
        let mut theta = BTreeMap::new();
        for w in plan.windows().windows() {
            let q = w.len();
            let table = plan.table(spec.family, q).unwrap();
            let pts = ds.window_points(w);
            for idx in 0..table.values.len() {
                let k = table.frequency(idx);
                if k[..q].iter().all(|&a| a == 0) {
                    continue;
                }
                let mut s = Complex64::new(0.0, 0.0);
                for (j, vj) in v.iter().enumerate() {
                    let phase: f64 = (0..q).map(|a| k[a] as f64 * pts[j * q + a]).sum();
                    s += Complex64::from_polar(*vj, -2.0 * PI * phase);
                }
                let key: SubsetKey = (0..q).filter(|&a| k[a] != 0).map(|a| w[a]).collect();
                *theta.entry(key).or_insert(0.0) += (table.values[idx] * s * pref).norm_sqr();
            }
        }
        theta
    }

    #[test]
    fn matches_brute_force() {
        let ds = prescaled(50, 4, 2, 1, |x| x[0] * x[1] + x[2]);
        let ws = consec_windows(4, 2).unwrap();
        let spec = KernelSpec::new(KernelFamily::Gauss, 0.2, 0.7).unwrap();
        let plan = build_plan(&spec, &ws, Preset::Custom(8), &ds).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = compute_gsi(&plan, &v).unwrap();
        let oracle = brute_force(&plan, &ds, &v);
        assert_eq!(report.theta.len(), 6);
        assert_eq!(report.theta.keys().collect::<Vec<_>>(), oracle.keys().collect::<Vec<_>>());
        for (k, t) in &oracle {
            let got = report.theta[k];
            assert!((got - t).abs() <= 1e-10 * t, "{k:?}: {got} vs {t}");
        }
        let sum: f64 = report.ranked().iter().map(|(_, r)| r).sum();
        assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scale_equivariance() {
        let ds = prescaled(80, 3, 3, 3, |x| x[0]);
        let ws = consec_windows(3, 3).unwrap();
        let spec = KernelSpec::new(KernelFamily::Gauss, 0.3, 1.0).unwrap();
        let plan = build_plan(&spec, &ws, Preset::Rough, &ds).unwrap();
        let v: Vec<f64> = (0..80).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let a = compute_gsi(&plan, &v).unwrap();
        let alpha = -3.5;
        let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
        let b = compute_gsi(&plan, &scaled).unwrap();
        assert_eq!(a.theta.len(), 7);
        for (k, t) in &a.theta {
            assert!((b.theta[k] - alpha * alpha * t).abs() <= 1e-12 * alpha * alpha * t);
            assert!((b.rho(k) - a.rho(k)).abs() <= 1e-12);
        }
        assert!(compute_gsi(&plan, &vec![0.0; 80]).is_err());
    }

    #[test]
    fn single_direction_dominates() {
        // sin(2 pi x_1) is a pure first mode along feature 1; a broad kernel
        // reproduces it with almost no dependence on feature 2
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((300, 2), |_| rng.random_range(-1.0..1.0));
        let base = Dataset::new(x, Array1::zeros(300), None).unwrap().preprocess(2).unwrap();
        let y: Vec<f64> = (0..300).map(|i| (2.0 * PI * base.features()[[i, 0]]).sin()).collect();
        let ws = WindowSet::new(vec![vec![0, 1]], 2).unwrap();
        let spec = KernelSpec::new(KernelFamily::Gauss, 1.0, 1.0).unwrap();
        let op = MatrixOperator(crate::kernel::dense_matrix(&spec, &ws, &base).unwrap());
        let v = cg_solve(&op, &y, 1e-6, &CgOptions { tol: 1e-10, max_iter: 5000 }).unwrap().solution;
        let plan = FastsumPlan::new(&spec, &ws, Preset::Fine, &base, NufftOptions::default()).unwrap();
        let r = compute_gsi(&plan, &v).unwrap();
        assert!(r.rho(&[0]) > 0.99, "{:?}", r.ranked());
        assert!(r.rho(&[1]) + r.rho(&[0, 1]) < 0.01);
        let oracle = brute_force(&plan, &base, &v);
        let total: f64 = oracle.values().sum();
        assert!((oracle[&vec![0]] / total - r.rho(&[0])).abs() < 1e-9);
    }

    fn report(rhos: &[(Vec<usize>, f64)]) -> GsiReport {
        GsiReport {
            theta: rhos.iter().cloned().collect(),
            total_variance: rhos.iter().map(|r| r.1).sum(),
            windows: WindowSet::new(vec![vec![0, 1, 2]], 3).unwrap(),
            family: KernelFamily::Gauss,
            ell: 1.0,
            m: 16,
        }
    }

    #[test]
    fn selection_prefix() {
        let r = report(&[(vec![0], 0.6), (vec![1], 0.3), (vec![2], 0.1)]);
        let ws = select_windows_by_gsi(&r, 0.8, 3).unwrap();
        assert_eq!(ws.windows(), &[vec![0], vec![1]]);
        let one = report(&[(vec![0, 1], 0.995), (vec![2], 0.005)]);
        assert_eq!(select_windows_by_gsi(&one, 0.99, 3).unwrap().len(), 1);
        let tie = report(&[(vec![1], 0.25), (vec![0, 2], 0.25), (vec![0], 0.25), (vec![2], 0.25)]);
        let ws = select_windows_by_gsi(&tie, 0.5, 3).unwrap();
        assert_eq!(ws.windows(), &[vec![0], vec![0, 2]]);
        assert!(select_windows_by_gsi(&r, 1.0, 3).is_err());
        let json = serde_json::to_string(&r.to_record()).unwrap();
        assert!(json.contains("\"subset\":[1]"));
    }

    #[test]
    fn pipeline_finds_interaction() {
        let ds = prescaled(1000, 4, 2, 7, |x| (2.0 * x[0] * x[1]).sin());
        let cfg = GsiConfig::default();
        let a = gsi_pipeline(&ds, &cfg).unwrap();
        let b = gsi_pipeline(&ds, &cfg).unwrap();
        assert_eq!(a.windows, b.windows);
        let covered: f64 = [vec![0], vec![1], vec![0, 1]].iter().map(|k| a.report.rho(k)).sum();
        assert!(covered > 0.5, "{:?}", a.report.ranked());
        assert!(a.windows.windows().iter().any(|w| w.iter().all(|&f| f < 2)));
        let low = gsi_pipeline(&ds, &GsiConfig { score: 0.5, ..cfg }).unwrap();
        assert!(low.windows.len() <= a.windows.len());
    }
}
