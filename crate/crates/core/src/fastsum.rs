//! NFFT-based fast summation for additive kernels.
//!
//! Every sub-kernel is replaced by the trigonometric polynomial interpolating
//! its periodic continuation on the `m^q` grid over `[-1/2, 1/2)^q`, so one
//! product costs a spread, two FFTs and an interpolation per window.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec, WindowSet};
use crate::nufft::{grid_fft_coefficients, CoefficientTable, NufftOptions, NufftPlan, PointGeometry};

/// Grid-size presets for the fast summation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fine,
    Default,
    Rough,
    Custom(usize),
}

impl Preset {
    pub fn m(self) -> usize {
        match self {
            Preset::Fine => 64,
            Preset::Default => 32,
            Preset::Rough => 16,
            Preset::Custom(m) => m,
        }
    }

    pub fn name(self) -> String {
        match self {
            Preset::Fine => "fine".into(),
            Preset::Default => "default".into(),
            Preset::Rough => "rough".into(),
            Preset::Custom(m) => format!("m{m}"),
        }
    }

    /// Accepts `fine`, `default`, `rough` or a bare even integer.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fine" => Some(Preset::Fine),
            "default" => Some(Preset::Default),
            "rough" => Some(Preset::Rough),
            other => other
                .parse::<usize>()
                .ok()
                .filter(|m| *m >= 2 && m % 2 == 0)
                .map(Preset::Custom),
        }
    }
}

/// Accuracy parameter `eta = ell pi m / sqrt(2)` of a prescaled length-scale.
pub fn eta(ell: f64, m: usize) -> f64 {
    ell * PI * m as f64 / std::f64::consts::SQRT_2
}

/// Fourier coefficients of the unit-scale kernel profile sampled on the
/// centered `m^q` grid (no smoothing at the boundary).
pub fn periodized_coefficients(family: KernelFamily, ell: f64, dims: usize, m: usize) -> Result<CoefficientTable> {
    let total = m.pow(dims as u32);
    let half = (m / 2) as f64;
    let samples: Vec<f64> = (0..total)
        .map(|c| {
            let mut rest = c;
            let mut r2 = 0.0;
            for _ in 0..dims {
                let x = ((rest % m) as f64 - half) / m as f64;
                r2 += x * x;
                rest /= m;
            }
            family.profile(r2, ell)
        })
        .collect();
    grid_fft_coefficients(&samples, m, dims)
}

struct SharedTable {
    family: KernelFamily,
    dims: usize,
    table: Arc<CoefficientTable>,
    /// Real part of the table, the multiplier applied in the spectrum.
    multiplier: Vec<f64>,
}

/// Precomputed fast-summation operator on a fixed prescaled dataset.
pub struct FastsumPlan {
    spec: KernelSpec,
    windows: WindowSet,
    preset: Preset,
    options: NufftOptions,
    /// Indexed by window length - 1.
    nufft: Vec<Option<NufftPlan>>,
    tables: Vec<SharedTable>,
    geometries: Vec<PointGeometry>,
    n_samples: usize,
    d_max: usize,
    warning: Option<String>,
}

impl std::fmt::Debug for FastsumPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FastsumPlan")
            .field("spec", &self.spec)
            .field("windows", &self.windows)
            .field("preset", &self.preset)
            .field("n_samples", &self.n_samples)
            .finish()
    }
}

/// Builds a plan with the default NUFFT options.
pub fn build_plan(spec: &KernelSpec, windows: &WindowSet, preset: Preset, data: &Dataset) -> Result<FastsumPlan> {
    FastsumPlan::new(spec, windows, preset, data, NufftOptions::default())
}

impl FastsumPlan {
    pub fn new(
        spec: &KernelSpec,
        windows: &WindowSet,
        preset: Preset,
        data: &Dataset,
        options: NufftOptions,
    ) -> Result<Self> {
        let d_max = data.prescaled_d_max()?;
        windows.validate_for(data.n_features())?;
        if windows.max_len() > d_max {
            return Err(Error::InvalidScaling {
                expected: format!("prescaled with d_max >= {}", windows.max_len()),
                found: data.scaling().to_string(),
            });
        }
        let m = preset.m();
        let eta = eta(spec.ell, m);
        let warning = (eta < 1.0).then(|| {
            let msg = format!(
                "eta = {eta:.3} < 1 for ell = {} and m = {m}: fast summation is inaccurate",
                spec.ell
            );
            log::warn!("{msg}");
            msg
        });

        let mut nufft: Vec<Option<NufftPlan>> = vec![None, None, None];
        let mut tables = Vec::new();
        let families = if spec.family.is_derivative() {
            vec![spec.family, spec.family.base()]
        } else {
            vec![spec.family]
        };
        for w in windows.windows() {
            let q = w.len();
            if nufft[q - 1].is_none() {
                nufft[q - 1] = Some(NufftPlan::new(q, m, options)?);
                for &family in &families {
                    let table = periodized_coefficients(family, spec.ell, q, m)?;
                    let multiplier = table.values.iter().map(|z| z.re).collect();
                    tables.push(SharedTable {
                        family,
                        dims: q,
                        table: Arc::new(table),
                        multiplier,
                    });
                }
            }
        }
        let mut geometries = Vec::with_capacity(windows.len());
        for w in windows.windows() {
            let plan = nufft[w.len() - 1].as_ref().expect("plan for every length");
            geometries.push(plan.geometry(&data.window_points(w))?);
        }
        Ok(Self {
            spec: *spec,
            windows: windows.clone(),
            preset,
            options,
            nufft,
            tables,
            geometries,
            n_samples: data.n_samples(),
            d_max,
            warning,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn windows(&self) -> &WindowSet {
        &self.windows
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn m(&self) -> usize {
        self.preset.m()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn eta(&self) -> f64 {
        eta(self.spec.ell, self.m())
    }

    /// Accuracy warning raised at construction, if any.
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Number of distinct coefficient tables held by the plan.
    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    /// Shared coefficient table of a family and window length.
    pub fn table(&self, family: KernelFamily, dims: usize) -> Option<&Arc<CoefficientTable>> {
        self.find_table(family, dims).map(|t| &t.table)
    }

    fn find_table(&self, family: KernelFamily, dims: usize) -> Option<&SharedTable> {
        self.tables.iter().find(|t| t.family == family && t.dims == dims)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_samples {
            return Err(Error::DimensionMismatch {
                expected: self.n_samples,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Sum over windows of `prefactor * K_s(targets, train) v`, complex before
    /// the real part is taken.
    fn apply(&self, family: KernelFamily, v: &[f64], targets: Option<&[PointGeometry]>) -> Vec<Complex64> {
        let spec = self.spec.with_family(family);
        let pref = spec.window_prefactor();
        let input: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let out_len = targets.map_or(self.n_samples, |t| t[0].len());
        let mut out = vec![Complex64::new(0.0, 0.0); out_len];
        for (s, w) in self.windows.windows().iter().enumerate() {
            let q = w.len();
            let plan = self.nufft[q - 1].as_ref().expect("plan for every length");
            let table = self.find_table(family, q).expect("table for every length");
            let mut grid = plan.spread(&self.geometries[s], &input);
            plan.fft_forward(&mut grid);
            plan.filter_spectrum(&mut grid, &table.multiplier);
            plan.fft_inverse(&mut grid);
            let geom = targets.map_or(&self.geometries[s], |t| &t[s]);
            for (o, r) in out.iter_mut().zip(plan.interpolate(geom, &grid)) {
                *o += r * pref;
            }
        }
        out
    }

    /// Per-window adjoint sums `S_k = sum_j v_j exp(-2 pi i k.x_j^W)` on `I_m^|W|`.
    pub(crate) fn window_sums(&self, v: &[f64]) -> Result<Vec<CoefficientTable>> {
        self.check_len(v)?;
        let input: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Ok(self
            .windows
            .windows()
            .iter()
            .enumerate()
            .map(|(s, w)| {
                let plan = self.nufft[w.len() - 1].as_ref().expect("plan for every length");
                plan.type1_with(&self.geometries[s], &input)
            })
            .collect())
    }

    fn real_part(out: Vec<Complex64>) -> (Vec<f64>, f64) {
        let norm = out.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
        let imag = out.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        let residue = if norm > 0.0 { imag / norm } else { imag };
        (out.into_iter().map(|z| z.re).collect(), residue)
    }

    /// Fast `K v`, plus the relative size of the discarded imaginary part.
    ///
    /// The residue is round-off except for the unpaired `k = -m/2` modes,
    /// whose sine parts do not cancel; it is small whenever the kernel's
    /// coefficients have decayed at the grid edge.
    pub fn matvec_with_residue(&self, v: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_len(v)?;
        Ok(Self::real_part(self.apply(self.spec.family, v, None)))
    }

    /// Fast additive-kernel product `K v` (for derivative families, `(dK/d ell) v`).
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let (out, residue) = self.matvec_with_residue(v)?;
        if residue > 1e-8 {
            log::debug!("fast matvec imaginary residue {residue:.2e}");
        }
        Ok(out)
    }

    /// Fast `K v` with the non-derivative kernel of the plan's family.
    pub fn base_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(Self::real_part(self.apply(self.spec.family.base(), v, None)).0)
    }

    /// `(dK/d sigma_f) v = (2 / sigma_f) K v`.
    pub fn dsigma_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.base_matvec(v)?;
        let f = 2.0 / self.spec.sigma_f;
        out.iter_mut().for_each(|o| *o *= f);
        Ok(out)
    }

    /// Fast cross product `K(targets, train) v` for prediction.
    pub fn cross_matvec(&self, targets: &Dataset, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        if targets.prescaled_d_max()? != self.d_max {
            return Err(Error::ScalingMismatch);
        }
        self.windows.validate_for(targets.n_features())?;
        if targets.n_samples() == 0 {
            return Ok(Vec::new());
        }
        let geoms = self
            .windows
            .windows()
            .iter()
            .map(|w| {
                self.nufft[w.len() - 1]
                    .as_ref()
                    .expect("plan for every length")
                    .geometry(&targets.window_points(w))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::real_part(self.apply(self.spec.family, v, Some(&geoms))).0)
    }

    pub fn options(&self) -> &NufftOptions {
        &self.options
    }
}

/// Convenience wrapper: `fast_matvec(plan, v)`.
pub fn fast_matvec(plan: &FastsumPlan, v: &[f64]) -> Result<Vec<f64>> {
    plan.matvec(v)
}

/// Convenience wrapper: `fast_dsigma_matvec(plan, v)`.
pub fn fast_dsigma_matvec(plan: &FastsumPlan, v: &[f64]) -> Result<Vec<f64>> {
    plan.dsigma_matvec(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{dense_cross_matvec, dense_matvec, dsigma_matvec};
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prescaled(n: usize, d: usize, d_max: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        Dataset::new(x, y, None).unwrap().preprocess(d_max).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    fn spec(family: KernelFamily, ell: f64, d_max: usize, p: usize) -> KernelSpec {
        KernelSpec::new(family, ell / (d_max as f64).sqrt(), (1.0 / p as f64).sqrt()).unwrap()
    }

    #[test]
    fn presets_and_parse() {
        assert_eq!(Preset::Default.m(), 32);
        assert_eq!(Preset::Fine.m(), 64);
        assert_eq!(Preset::Rough.m(), 16);
        assert_eq!(Preset::parse("fine"), Some(Preset::Fine));
        assert_eq!(Preset::parse("24"), Some(Preset::Custom(24)));
        assert_eq!(Preset::parse("7"), None);
    }

    #[test]
    fn equal_length_windows_share_one_table() {
        let x = prescaled(50, 6, 3, 1);
        let ws = WindowSet::new(vec![vec![0, 1, 2], vec![3, 4, 5]], 3).unwrap();
        let plan = build_plan(&spec(KernelFamily::Gauss, 1.0, 3, 2), &ws, Preset::Default, &x).unwrap();
        assert_eq!(plan.table_count(), 1);
        assert_eq!(plan.m(), 32);
    }

    #[test]
    fn rejects_unprescaled_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
        let ds = Dataset::new(x, Array1::zeros(20), None).unwrap();
        let ws = WindowSet::new(vec![vec![0, 1, 2]], 3).unwrap();
        let err = build_plan(&spec(KernelFamily::Gauss, 1.0, 3, 1), &ws, Preset::Default, &ds).unwrap_err();
        assert!(matches!(err, Error::InvalidScaling { .. }));
        let low = prescaled(20, 3, 2, 3);
        assert!(build_plan(&spec(KernelFamily::Gauss, 1.0, 3, 1), &ws, Preset::Default, &low).is_err());
    }

    #[test]
    fn broad_kernel_is_nearly_constant() {
        let t = periodized_coefficients(KernelFamily::Gauss, 3.0, 1, 32).unwrap();
        let c0 = t.get(&[0]).unwrap().norm();
        let rest = t
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| t.frequency(*i)[0] != 0)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        assert!(c0 > 100.0 * rest, "{c0} vs {rest}");
    }

    #[test]
    fn zero_vector_and_small_eta_warning() {
        let x = prescaled(40, 3, 3, 4);
        let ws = WindowSet::new(vec![vec![0, 1, 2]], 3).unwrap();
        let plan = build_plan(&spec(KernelFamily::Gauss, 1.0, 3, 1), &ws, Preset::Default, &x).unwrap();
        assert!(plan.matvec(&[0.0; 40]).unwrap().iter().all(|&z| z == 0.0));
        assert!(plan.warning().is_none());
        let tiny = build_plan(&spec(KernelFamily::Gauss, 0.01, 3, 1), &ws, Preset::Rough, &x).unwrap();
        assert!(tiny.warning().is_some());
        assert!(plan.matvec(&[0.0; 3]).is_err());
    }

    #[test]
    fn gauss_matches_dense_at_medium_length_scale() {
        let x = prescaled(1000, 3, 3, 5);
        let ws = WindowSet::new(vec![vec![0, 1, 2]], 3).unwrap();
        let sp = spec(KernelFamily::Gauss, 1.0, 3, 1);
        let v = vec![1.0; 1000];
        let exact = dense_matvec(&sp, &ws, &x, &v).unwrap();
        let plan = build_plan(&sp, &ws, Preset::Default, &x).unwrap();
        let (fast, residue) = plan.matvec_with_residue(&v).unwrap();
        assert!(rel_err(&fast, &exact) < 1e-3);
        // only the unpaired edge modes contribute; they sit at the approximation error level
        assert!(residue < 1e-3, "{residue}");
    }

    #[test]
    fn derivative_gauss_fine_preset() {
        let x = prescaled(500, 3, 3, 6);
        let ws = WindowSet::new(vec![vec![0, 1, 2]], 3).unwrap();
        let sp = spec(KernelFamily::DerGauss, 0.1, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let exact = dense_matvec(&sp, &ws, &x, &v).unwrap();
        let plan = build_plan(&sp, &ws, Preset::Fine, &x).unwrap();
        assert!(rel_err(&plan.matvec(&v).unwrap(), &exact) < 1e-3);
    }

    #[test]
    fn dsigma_is_exact_rescale() {
        let x = prescaled(200, 4, 2, 8);
        let ws = WindowSet::new(vec![vec![0, 1], vec![2, 3]], 2).unwrap();
        let sp = spec(KernelFamily::DerGauss, 1.0, 2, 2);
        let plan = build_plan(&sp, &ws, Preset::Default, &x).unwrap();
        let v: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let base = plan.base_matvec(&v).unwrap();
        let ds = plan.dsigma_matvec(&v).unwrap();
        let factor = 2.0 / sp.sigma_f;
        assert!((factor - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        for (a, b) in ds.iter().zip(&base) {
            assert_eq!(*a, b * factor);
        }
        let dense = dsigma_matvec(&sp, &ws, &x, &v).unwrap();
        assert!(rel_err(&ds, &dense) < 1e-3);
    }

    #[test]
    fn symmetric_and_linear() {
        let x = prescaled(300, 3, 3, 9);
        let ws = WindowSet::new(vec![vec![0, 1, 2]], 3).unwrap();
        for family in KernelFamily::ALL {
            let plan = build_plan(&spec(family, 1.0, 3, 1), &ws, Preset::Rough, &x).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let v: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let kv = plan.matvec(&v).unwrap();
            let kw = plan.matvec(&w).unwrap();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let nv = dot(&v, &v).sqrt();
            let nw = dot(&w, &w).sqrt();
            assert!((dot(&kv, &w) - dot(&v, &kw)).abs() <= 1e-8 * nv * nw, "{family:?}");
            let mix: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 2.5 * a - 0.5 * b).collect();
            let kmix = plan.matvec(&mix).unwrap();
            for i in 0..300 {
                let expect = 2.5 * kv[i] - 0.5 * kw[i];
                assert!((kmix[i] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn cross_matvec_matches_dense() {
        let all = prescaled(600, 4, 2, 11);
        let train = all.select_rows(&(0..400).collect::<Vec<_>>());
        let test = all.select_rows(&(400..600).collect::<Vec<_>>());
        let ws = WindowSet::new(vec![vec![0, 1], vec![2, 3], vec![1]], 2).unwrap();
        let sp = spec(KernelFamily::Gauss, 1.0, 2, 3);
        let plan = build_plan(&sp, &ws, Preset::Default, &train).unwrap();
        assert_eq!(plan.table_count(), 2);
        let v: Vec<f64> = (0..400).map(|i| ((i * 7) % 11) as f64 + 1.0).collect();
        let fast = plan.cross_matvec(&test, &v).unwrap();
        let exact = dense_cross_matvec(&sp, &ws, &test, &train, &v).unwrap();
        let err = rel_err(&fast, &exact);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn matern_default_preset() {
        let x = prescaled(400, 3, 3, 12);
        let ws = WindowSet::new(vec![vec![0, 1, 2]], 3).unwrap();
        let v = vec![1.0; 400];
        for family in [KernelFamily::Matern12, KernelFamily::DerMatern12] {
            let sp = spec(family, 1.0, 3, 1);
            let exact = dense_matvec(&sp, &ws, &x, &v).unwrap();
            let plan = build_plan(&sp, &ws, Preset::Default, &x).unwrap();
            assert!(rel_err(&plan.matvec(&v).unwrap(), &exact) < 1e-2, "{family:?}");
        }
    }
}
