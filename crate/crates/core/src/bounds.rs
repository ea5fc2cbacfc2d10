//! Analytic error bounds for the truncated Fourier expansion of the periodized
//! Gaussian and derivative Gaussian kernels, and the probe-based measurement
//! of the actual worst-case error.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::fastsum::{eta, periodized_coefficients};
use crate::kernel::KernelFamily;
use crate::nufft::CoefficientTable;
use crate::par;

pub const DEFAULT_PROBES: usize = 10_000;

/// `(ell, m)` together with `eta = ell pi m / sqrt(2) >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub ell: f64,
    pub m: usize,
    pub eta: f64,
}

impl BoundInputs {
    pub fn new(ell: f64, m: usize) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InvalidArgument(format!("ell must be positive, got {ell}")));
        }
        let eta = eta(ell, m);
        if eta < 1.0 {
            return Err(Error::EtaTooSmall(eta));
        }
        Ok(Self { ell, m, eta })
    }
}

/// Bound on `|c_{m/2}|`; for `ell >= 1/2` the larger factor `2 ell e^{-1/2}` is used.
pub fn gamma_term(b: &BoundInputs) -> f64 {
    let (e, l) = (b.eta, b.ell);
    let tail = if l < 0.5 {
        (-1.0 / (8.0 * l * l)).exp() / (e * e)
    } else {
        2.0 * l * (-0.5f64).exp() / (e * e)
    };
    l * (2.0 * PI).sqrt() * (-e * e).exp() + tail
}

/// Bound on the one-sided coefficient tail `sum_{k > m/2} |c_k|`.
pub fn a_term(b: &BoundInputs) -> f64 {
    let (e, l) = (b.eta, b.ell);
    let tail = if l < 0.5 {
        (-1.0 / (8.0 * l * l)).exp() / (SQRT_2 * l * PI * e)
    } else {
        SQRT_2 * (-0.5f64).exp() / (PI * e)
    };
    (-e * e).exp() / (2.0 * e * PI.sqrt()) + tail
}

fn der_branch() -> f64 {
    0.5 * (2.0 / (5.0 + 17f64.sqrt())).sqrt()
}

pub fn xi_term(b: &BoundInputs) -> f64 {
    let (e, l) = (b.eta, b.ell);
    let tail = if l <= der_branch() {
        (-1.0 / (8.0 * l * l)).exp() / (8.0 * e * e * l * l)
    } else {
        1.0 / (e * e) + 1.5 * l / (e * e)
    };
    (e * e + 0.5) * l * (2.0 * PI).sqrt() * (-e * e).exp() + tail
}

pub fn s_term(b: &BoundInputs) -> f64 {
    let (e, l) = (b.eta, b.ell);
    let tail = if l <= der_branch() {
        (-1.0 / (8.0 * l * l)).exp() / (8.0 * SQRT_2 * PI * l.powi(3) * e)
    } else {
        1.0 / (SQRT_2 * PI * l * e) + 3.0 / (2.0 * SQRT_2 * PI * e)
    };
    let g = (-e * e).exp();
    erfc(e) / 4.0 + e * g / (2.0 * PI.sqrt()) + g / (4.0 * PI.sqrt() * e) + tail
}

pub fn bound_gauss_3d(b: &BoundInputs) -> f64 {
    let g = gamma_term(b);
    15.0 * g * (g + 2.5) + 102.0 * a_term(b)
}

pub fn bound_der_3d(b: &BoundInputs) -> f64 {
    let (g, a, x, s) = (gamma_term(b), a_term(b), xi_term(b), s_term(b));
    (2.5 * x + 15.0 * g) * (15.0 + 12.0 * g) + 75.0 * s + 6.0 * a * (116.0 / 5.0 * s + 87.0)
}

pub fn bound_gauss_1d(b: &BoundInputs) -> f64 {
    2.0 * gamma_term(b) + 4.0 * a_term(b)
}

pub fn bound_der_1d(b: &BoundInputs) -> f64 {
    2.0 * xi_term(b) + 4.0 * s_term(b)
}

fn check_case(family: KernelFamily, dims: usize) -> Result<()> {
    if !matches!(family, KernelFamily::Gauss | KernelFamily::DerGauss) {
        return Err(Error::InvalidArgument(format!(
            "error bounds exist only for gauss and der_gauss, got {}",
            family.name()
        )));
    }
    if dims != 1 && dims != 3 {
        return Err(Error::InvalidArgument(format!("error bounds cover dims 1 and 3, got {dims}")));
    }
    Ok(())
}

/// Bound for a supported `(family, dims)` pair.
pub fn bound(family: KernelFamily, dims: usize, b: &BoundInputs) -> Result<f64> {
    check_case(family, dims)?;
    Ok(match (family, dims) {
        (KernelFamily::Gauss, 1) => bound_gauss_1d(b),
        (KernelFamily::Gauss, _) => bound_gauss_3d(b),
        (_, 1) => bound_der_1d(b),
        _ => bound_der_3d(b),
    })
}

/// Evaluates `sum_k c_k exp(2 pi i k x)` of a 1D table.
fn eval_1d(table: &CoefficientTable, x: f64) -> Complex64 {
    let half = (table.m / 2) as f64;
    let step = Complex64::from_polar(1.0, 2.0 * PI * x);
    let mut phase = Complex64::from_polar(1.0, -2.0 * PI * half * x);
    let mut acc = Complex64::new(0.0, 0.0);
    for c in &table.values {
        acc += c * phase;
        phase *= step;
    }
    acc
}

/// Trigonometric approximation of the unit-scale kernel, evaluated by direct
/// summation through the tensor-product structure of the grid coefficients.
pub struct SeparableApproximation {
    family: KernelFamily,
    dims: usize,
    ell: f64,
    f: CoefficientTable,
    g: Option<CoefficientTable>,
}

impl SeparableApproximation {
    pub fn new(family: KernelFamily, dims: usize, ell: f64, m: usize) -> Result<Self> {
        check_case(family, dims)?;
        let f = periodized_coefficients(KernelFamily::Gauss, ell, 1, m)?;
        let g = match family {
            KernelFamily::DerGauss => Some(periodized_coefficients(KernelFamily::DerGauss, ell, 1, m)?),
            _ => None,
        };
        Ok(Self { family, dims, ell, f, g })
    }

    pub fn approx(&self, r: &[f64]) -> Complex64 {
        let fs: Vec<Complex64> = r.iter().map(|&x| eval_1d(&self.f, x)).collect();
        match &self.g {
            None => fs.iter().product(),
            Some(g) => (0..self.dims)
                .map(|a| {
                    let mut term = eval_1d(g, r[a]);
                    for (b, fb) in fs.iter().enumerate() {
                        if b != a {
                            term *= fb;
                        }
                    }
                    term
                })
                .sum(),
        }
    }

    pub fn exact(&self, r: &[f64]) -> f64 {
        let r2: f64 = r.iter().map(|x| x * x).sum();
        self.family.profile(r2, self.ell)
    }

    pub fn error_at(&self, r: &[f64]) -> f64 {
        (self.approx(r) - self.exact(r)).norm()
    }
}

/// Largest error of the Fourier approximation over `n_probe` uniform points
/// of `[-1/2, 1/2]^dims`.
pub fn measure_worst_case(
    family: KernelFamily,
    dims: usize,
    ell: f64,
    m: usize,
    n_probe: usize,
    seed: u64,
) -> Result<f64> {
    let approx = SeparableApproximation::new(family, dims, ell, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<f64> = (0..n_probe * dims).map(|_| rng.random_range(-0.5..=0.5)).collect();
    Ok(par::max_range(n_probe, |i| approx.error_at(&probes[i * dims..(i + 1) * dims])))
}

/// One row of the bound-versus-measurement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub family: KernelFamily,
    pub dims: usize,
    pub ell: f64,
    pub m: usize,
    pub eta: f64,
    pub bound: f64,
    pub measured: Option<f64>,
    pub n_probe: usize,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.measured.is_none_or(|e| e <= self.bound)
    }
}

/// `count` log-spaced values from `10^lo` to `10^hi`.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Bound and measured error on every `(family, dims, ell, m)` cell with
/// `eta >= 1`; cells below that are skipped.
pub fn bound_table(
    families: &[KernelFamily],
    dims: &[usize],
    ells: &[f64],
    ms: &[usize],
    n_probe: usize,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    for &family in families {
        for &q in dims {
            for &m in ms {
                for &ell in ells {
                    let inputs = match BoundInputs::new(ell, m) {
                        Ok(b) => b,
                        Err(Error::EtaTooSmall(_)) => continue,
                        Err(e) => return Err(e),
                    };
                    let measured = if n_probe > 0 {
                        Some(measure_worst_case(family, q, ell, m, n_probe, seed)?)
                    } else {
                        None
                    };
                    out.push(BoundReport {
                        family,
                        dims: q,
                        ell,
                        m,
                        eta: inputs.eta,
                        bound: bound(family, q, &inputs)?,
                        measured,
                        n_probe,
                    });
                }
            }
        }
    }
    Ok(out)
}

// 15-point Kronrod nodes on [0, 1] with the embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature: bisects the interval with the largest
/// error estimate until the summed estimate drops below `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total_err = e;
    while total_err > tol && parts.len() < MAX_INTERVALS {
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3))
            .expect("non-empty");
        let (lo, hi, _, err) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (lv, le) = gk15(&f, lo, mid);
        let (rv, re) = gk15(&f, mid, hi);
        total_err += le + re - err;
        parts.push((lo, mid, lv, le));
        parts.push((mid, hi, rv, re));
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    parts.iter().map(|p| p.2).sum()
}

/// Fourier coefficient `int_{-1/2}^{1/2} exp(-r^2 / 2 ell^2) exp(2 pi i k r) dr`.
pub fn analytic_coeff_gauss_1d(ell: f64, k: i64) -> f64 {
    analytic_coeff_1d(KernelFamily::Gauss, ell, k)
}

/// Fourier coefficient of a 1D unit-scale profile on the unit torus.
pub fn analytic_coeff_1d(family: KernelFamily, ell: f64, k: i64) -> f64 {
    let w = 2.0 * PI * k as f64;
    // even integrand: integrate over [0, 1/2] and double
    2.0 * integrate(|r| family.profile(r * r, ell) * (w * r).cos(), 0.0, 0.5, 1e-16)
}

/// Continuous Fourier transform `int_R kappa(r) exp(-2 pi i k r) dr` of a 1D
/// profile, truncated where the Gaussian factor drops below `e^{-800}`.
pub fn fourier_transform_1d(family: KernelFamily, ell: f64, k: f64) -> f64 {
    let w = 2.0 * PI * k;
    let reach = 40.0 * ell;
    2.0 * integrate(|r| family.profile(r * r, ell) * (w * r).cos(), 0.0, reach, 1e-15 * ell)
}
