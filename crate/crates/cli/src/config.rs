//! Experiment configuration: a TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use fastadd::bounds::{logspace, DEFAULT_PROBES};
use fastadd::data::TargetColumn;
use fastadd::fastsum::Preset;
use fastadd::grouping::{GroupingConfig, Strategy, Technique};
use fastadd::kernel::{KernelFamily, DEFAULT_DENSE_LIMIT};
use fastadd::solver::DEFAULT_GRID;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Write timing columns; disable for byte-identical reruns.
    pub timing: bool,
    pub data: DataConfig,
    pub kernel: KernelConfig,
    pub grouping: GroupingSection,
    pub grid: GridSection,
    pub gsi: GsiSection,
    pub matvec: MatvecSection,
    pub bounds: BoundsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            timing: true,
            data: DataConfig::default(),
            kernel: KernelConfig::default(),
            grouping: GroupingSection::default(),
            grid: GridSection::default(),
            gsi: GsiSection::default(),
            matvec: MatvecSection::default(),
            bounds: BoundsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Column name or 0-based index; the last column when absent.
    pub target: Option<TargetColumn>,
    pub delimiter: char,
    /// Fraction of rows used for training.
    pub split: f64,
    /// Rows of the built-in `sin(x1 x2) + sin(x3 x4)` problem, used when `path` is absent.
    pub synthetic_n: Option<usize>,
    pub synthetic_d: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            target: None,
            delimiter: ',',
            split: 0.5,
            synthetic_n: None,
            synthetic_d: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    /// `fine`, `default`, `rough`, an even grid size, or `dense`.
    pub backend: String,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: "gauss".into(),
            backend: "default".into(),
            cg_tol: 1e-3,
            cg_max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingSection {
    pub technique: String,
    #[serde(flatten)]
    pub params: GroupingConfig,
}

impl Default for GroupingSection {
    fn default() -> Self {
        Self {
            technique: "consec".into(),
            params: GroupingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub ells: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            ells: DEFAULT_GRID.to_vec(),
            betas: DEFAULT_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsiSection {
    pub score: f64,
    pub ell: f64,
    pub beta: f64,
}

impl Default for GsiSection {
    fn default() -> Self {
        Self {
            score: 0.99,
            ell: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatvecSection {
    pub sizes: Vec<usize>,
    pub ells: Vec<f64>,
    pub presets: Vec<String>,
    pub families: Vec<String>,
    /// Features of the uniform test data, grouped consecutively by `d_max`.
    pub features: usize,
    pub d_max: usize,
    pub dense_limit: usize,
}

impl Default for MatvecSection {
    fn default() -> Self {
        Self {
            sizes: vec![1_000, 10_000, 100_000],
            ells: vec![1.0],
            presets: vec!["fine".into(), "default".into(), "rough".into()],
            families: vec!["gauss".into()],
            features: 3,
            d_max: 3,
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub families: Vec<String>,
    pub dims: Vec<usize>,
    pub ells: Vec<f64>,
    pub ms: Vec<usize>,
    pub probes: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            families: vec!["gauss".into(), "der_gauss".into()],
            dims: vec![1, 3],
            ells: logspace(-2.0, 1.0, 12),
            ms: vec![16, 32, 64],
            probes: DEFAULT_PROBES,
        }
    }
}

/// Invalid configuration; reported with exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn family(&self) -> Result<KernelFamily, ConfigError> {
        parse_family(&self.kernel.family)
    }

    pub fn technique(&self) -> Result<Technique, ConfigError> {
        Technique::parse(&self.grouping.technique)
            .ok_or_else(|| bad(format!("unknown technique '{}'", self.grouping.technique)))
    }

    pub fn backend(&self) -> Result<fastadd::solver::Backend, ConfigError> {
        if self.kernel.backend == "dense" {
            return Ok(fastadd::solver::Backend::Dense);
        }
        Ok(fastadd::solver::Backend::Fastsum(parse_preset(&self.kernel.backend)?))
    }

    pub fn cg(&self) -> fastadd::solver::CgOptions {
        fastadd::solver::CgOptions {
            tol: self.kernel.cg_tol,
            max_iter: self.kernel.cg_max_iter,
        }
    }

    pub fn grouping_config(&self) -> GroupingConfig {
        GroupingConfig {
            seed: self.seed,
            ..self.grouping.params.clone()
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.family()?;
        self.technique()?;
        self.backend()?;
        if let Some(p) = &self.data.path {
            if !p.is_file() {
                return Err(bad(format!("data file {} does not exist", p.display())));
            }
        }
        if !(self.data.split > 0.0 && self.data.split < 1.0) {
            return Err(bad("data.split must lie in (0, 1)"));
        }
        if !self.data.delimiter.is_ascii() {
            return Err(bad("data.delimiter must be an ASCII character"));
        }
        if !(self.kernel.cg_tol > 0.0) || self.kernel.cg_max_iter == 0 {
            return Err(bad("kernel.cg_tol and kernel.cg_max_iter must be positive"));
        }
        if !(1..=3).contains(&self.grouping.params.d_max) {
            return Err(bad(format!("grouping.d_max = {} must lie in 1..=3", self.grouping.params.d_max)));
        }
        positive("grid.ells", &self.grid.ells)?;
        positive("grid.betas", &self.grid.betas)?;
        positive("matvec.ells", &self.matvec.ells)?;
        positive("bounds.ells", &self.bounds.ells)?;
        if !(self.gsi.score > 0.0 && self.gsi.score <= 1.0) {
            return Err(bad("gsi.score must lie in (0, 1]"));
        }
        if !(self.gsi.ell > 0.0 && self.gsi.beta > 0.0) {
            return Err(bad("gsi.ell and gsi.beta must be positive"));
        }
        for f in self.matvec.families.iter().chain(&self.bounds.families) {
            parse_family(f)?;
        }
        for p in &self.matvec.presets {
            parse_preset(p)?;
        }
        if !(1..=3).contains(&self.matvec.d_max) || self.matvec.features == 0 {
            return Err(bad("matvec.d_max must lie in 1..=3 and matvec.features must be positive"));
        }
        if self.bounds.dims.iter().any(|d| ![1, 3].contains(d)) {
            return Err(bad("bounds.dims entries must be 1 or 3"));
        }
        Ok(())
    }
}

fn positive(name: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(bad(format!("{name} must be a nonempty list of positive values")));
    }
    Ok(())
}

pub fn parse_family(s: &str) -> Result<KernelFamily, ConfigError> {
    KernelFamily::parse(s).ok_or_else(|| bad(format!("unknown kernel family '{s}'")))
}

pub fn parse_preset(s: &str) -> Result<Preset, ConfigError> {
    Preset::parse(s).ok_or_else(|| bad(format!("unknown preset '{s}'")))
}

pub fn parse_strategy(s: &str) -> Result<Strategy, ConfigError> {
    Strategy::parse(s).ok_or_else(|| bad(format!("unknown strategy '{s}'")))
}
