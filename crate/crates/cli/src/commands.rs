use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use fastadd::bounds::{bound, measure_worst_case, BoundInputs};
use fastadd::data::{Dataset, TargetColumn};
use fastadd::fastsum::{build_plan, eta};
use fastadd::grouping::{consec_windows, group_features, GroupingOutcome, WindowSetRecord};
use fastadd::gsi::{gsi_pipeline, GsiConfig};
use fastadd::kernel::{dense_matvec_with_limit, KernelSpec};
use fastadd::solver::{default_sigma_f, grid_search, krr_fit, Backend, GridConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{parse_family, parse_preset, ConfigError, ExperimentConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<fastadd::Error> for CliError {
    fn from(e: fastadd::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json: {e}"))
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    outputs: Vec<String>,
    config: &'a ExperimentConfig,
}

fn write_manifest(cfg: &ExperimentConfig, command: &str, outputs: &[&str]) -> Result<()> {
    let m = Manifest {
        command,
        version: fastadd::VERSION,
        seed: cfg.seed,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        config: cfg,
    };
    write_json(&cfg.out_dir.join("manifest.json"), &m)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// CSV writer whose first line is the `#` schema comment.
fn csv_writer(path: &Path, schema: &str) -> Result<csv::Writer<fs::File>> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# schema: {schema}")?;
    Ok(csv::Writer::from_writer(f))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

/// `y = sin(x1 x2) + sin(x3 x4) + 0.1 u` with `x` uniform on `[-2, 2]^d`.
pub fn synthetic(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if d < 4 {
        return Err(CliError::Config("data.synthetic_d must be at least 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Array2<f64> = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let y = Array1::from_shape_fn(n, |i| {
        (x[[i, 0]] * x[[i, 1]]).sin() + (x[[i, 2]] * x[[i, 3]]).sin() + 0.1 * rng.random_range(-1.0..1.0)
    });
    Ok(Dataset::new(x, y, None)?)
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = match (&cfg.data.path, cfg.data.synthetic_n) {
        (Some(path), _) => {
            let delim = cfg.data.delimiter as u8;
            let target = match &cfg.data.target {
                Some(t) => t.clone(),
                None => {
                    let columns = csv::ReaderBuilder::new().delimiter(delim).from_path(path)?.headers()?.len();
                    TargetColumn::Index(columns.saturating_sub(1))
                }
            };
            Dataset::from_csv(path, &target, delim)?
        }
        (None, Some(n)) => synthetic(n, cfg.data.synthetic_d, cfg.seed)?,
        (None, None) => return Err(CliError::Config("no data: set data.path or data.synthetic_n".into())),
    };
    if ds.dropped_rows > 0 {
        log::warn!("dropped {} rows with missing or non-finite entries", ds.dropped_rows);
    }
    for w in &ds.warnings {
        log::warn!("{w}");
    }
    Ok(ds)
}

fn group(cfg: &ExperimentConfig, ds: &Dataset) -> Result<GroupingOutcome> {
    let out = group_features(ds, cfg.technique()?, &cfg.grouping_config())?;
    if let Some(w) = &out.warning {
        log::warn!("{w}");
    }
    Ok(out)
}

pub fn cmd_matvec_bench(cfg: &ExperimentConfig) -> Result<()> {
    prepare_out(cfg)?;
    let mc = &cfg.matvec;
    let ws = consec_windows(mc.features, mc.d_max)?;
    let sigma_f = default_sigma_f(&ws);
    let mut w = csv_writer(&cfg.out_dir.join("matvec.csv"), "fastadd.matvec.v1")?;
    w.write_record(["N", "ell", "preset", "family", "rel_error", "fast_seconds", "dense_seconds"])?;
    for &n in &mc.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(n as u64));
        let x: Array2<f64> = Array2::from_shape_fn((n, mc.features), |_| rng.random_range(-1.0..1.0));
        let ds = Dataset::new(x, Array1::zeros(n), None)?.preprocess(mc.d_max)?;
        let v = vec![1.0; n];
        for fam in &mc.families {
            let family = parse_family(fam)?;
            for &ell in &mc.ells {
                let spec = KernelSpec::new(family, ell / (mc.d_max as f64).sqrt(), sigma_f)?;
                let dense = if n <= mc.dense_limit {
                    let t = Instant::now();
                    let kv = dense_matvec_with_limit(&spec, &ws, &ds, &v, mc.dense_limit)?;
                    Some((kv, t.elapsed().as_secs_f64()))
                } else {
                    None
                };
                for p in &mc.presets {
                    let preset = parse_preset(p)?;
                    let t = Instant::now();
                    let plan = build_plan(&spec, &ws, preset, &ds)?;
                    let fast = plan.matvec(&v)?;
                    let fast_secs = t.elapsed().as_secs_f64();
                    let rel = dense.as_ref().map(|(kv, _)| {
                        let num: f64 = kv.iter().zip(&fast).map(|(a, b)| (a - b) * (a - b)).sum();
                        let den: f64 = kv.iter().map(|a| a * a).sum();
                        (num / den).sqrt()
                    });
                    let timed = |s: f64| cfg.timing.then_some(s);
                    w.write_record([
                        n.to_string(),
                        ell.to_string(),
                        preset.name(),
                        family.name().to_string(),
                        opt(rel),
                        opt(timed(fast_secs)),
                        opt(dense.as_ref().and_then(|(_, s)| timed(*s))),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    write_manifest(cfg, "matvec-bench", &["matvec.csv"])
}

pub fn cmd_error_bounds(cfg: &ExperimentConfig) -> Result<()> {
    prepare_out(cfg)?;
    let bc = &cfg.bounds;
    let mut w = csv_writer(&cfg.out_dir.join("error_bounds.csv"), "fastadd.error_bounds.v1")?;
    w.write_record(["family", "dims", "ell", "m", "eta", "bound", "measured", "applicable", "dominated"])?;
    for fam in &bc.families {
        let family = parse_family(fam)?;
        for &q in &bc.dims {
            for &m in &bc.ms {
                for &ell in &bc.ells {
                    let e = eta(ell, m);
                    let row = match BoundInputs::new(ell, m) {
                        Ok(inputs) => {
                            let b = bound(family, q, &inputs)?;
                            let measured = measure_worst_case(family, q, ell, m, bc.probes, cfg.seed)?;
                            [b.to_string(), measured.to_string(), "true".into(), (measured <= b).to_string()]
                        }
                        Err(fastadd::Error::EtaTooSmall(_)) => [String::new(), String::new(), "false".into(), String::new()],
                        Err(err) => return Err(err.into()),
                    };
                    let [b, meas, app, dom] = row;
                    w.write_record([family.name().to_string(), q.to_string(), ell.to_string(), m.to_string(), e.to_string(), b, meas, app, dom])?;
                }
            }
        }
    }
    w.flush()?;
    write_manifest(cfg, "error-bounds", &["error_bounds.csv"])
}

#[derive(Serialize)]
struct ModelArtifact {
    family: String,
    backend: String,
    /// Length-scale on the quarter-box scale and its prescaled value.
    ell: f64,
    ell_prescaled: f64,
    beta: f64,
    sigma_f: f64,
    windows: Vec<Vec<usize>>,
    rmse: f64,
    cg_iterations: usize,
    coefficients: Vec<f64>,
}

pub fn cmd_krr(cfg: &ExperimentConfig) -> Result<()> {
    prepare_out(cfg)?;
    let d_max = cfg.grouping.params.d_max;
    let ds = load_data(cfg)?.preprocess(d_max)?;
    let (train, test) = ds.train_test_split(cfg.data.split, cfg.seed)?;
    let t = Instant::now();
    let grouping = group(cfg, &train)?;
    let setup_secs = t.elapsed().as_secs_f64();
    let windows = &grouping.windows;
    log::info!("windows {:?} found in {setup_secs:.2}s", windows.to_one_based());
    let backend = cfg.backend()?;
    let grid = GridConfig {
        family: cfg.family()?,
        ells: cfg.grid.ells.clone(),
        betas: cfg.grid.betas.clone(),
        backend,
        sigma_f: None,
        cg: cfg.cg(),
        record_timing: cfg.timing,
    };
    let result = grid_search(&train, &test, windows, &grid)?;

    let mut w = csv_writer(&cfg.out_dir.join("grid.csv"), "fastadd.grid.v1")?;
    w.write_record(["ell", "beta", "rmse", "cg_iters_mean", "fit_seconds", "predict_seconds", "error"])?;
    for c in &result.cells {
        w.write_record([
            c.ell.to_string(),
            c.beta.to_string(),
            opt(c.rmse),
            opt(c.cg_iterations),
            opt(c.fit_seconds),
            opt(c.predict_seconds),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let record = grouping.record.clone();
    write_json(&cfg.out_dir.join("windows.json"), &WindowsOutput::new(record, grouping.warning.clone(), cfg.timing.then_some(setup_secs)))?;

    let best = result
        .best
        .ok_or_else(|| CliError::Numerical("every grid cell failed".into()))?;
    let spec = KernelSpec::new(grid.family, best.ell / (d_max as f64).sqrt(), default_sigma_f(windows))?;
    let model = krr_fit(&train, windows, &spec, best.beta, backend, &grid.cg)?;
    let artifact = ModelArtifact {
        family: grid.family.name().into(),
        backend: backend.name(),
        ell: best.ell,
        ell_prescaled: spec.ell,
        beta: best.beta,
        sigma_f: spec.sigma_f,
        windows: windows.to_one_based(),
        rmse: best.rmse.unwrap_or(f64::NAN),
        cg_iterations: model.iterations,
        coefficients: model.coefficients,
    };
    write_json(&cfg.out_dir.join("model.json"), &artifact)?;
    println!("best ell = {}, beta = {}, rmse = {:.6}", best.ell, best.beta, artifact.rmse);
    write_manifest(cfg, "krr", &["grid.csv", "windows.json", "model.json"])
}

#[derive(Serialize)]
struct WindowsOutput {
    #[serde(flatten)]
    record: WindowSetRecord,
    warning: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    setup_seconds: Option<f64>,
}

impl WindowsOutput {
    fn new(record: WindowSetRecord, warning: Option<String>, setup_seconds: Option<f64>) -> Self {
        Self { record, warning, setup_seconds }
    }
}

pub fn cmd_group(cfg: &ExperimentConfig) -> Result<()> {
    prepare_out(cfg)?;
    let ds = load_data(cfg)?.preprocess(cfg.grouping.params.d_max)?;
    let t = Instant::now();
    let out = group(cfg, &ds)?;
    let secs = t.elapsed().as_secs_f64();
    println!("{}", serde_json::to_string(&out.windows.to_one_based())?);
    write_json(&cfg.out_dir.join("windows.json"), &WindowsOutput::new(out.record, out.warning, cfg.timing.then_some(secs)))?;
    write_manifest(cfg, "group", &["windows.json"])
}

pub fn cmd_gsi(cfg: &ExperimentConfig) -> Result<()> {
    prepare_out(cfg)?;
    let d_max = cfg.grouping.params.d_max;
    let ds = load_data(cfg)?.preprocess(d_max)?;
    let preset = match cfg.backend()? {
        Backend::Fastsum(p) => p,
        Backend::Dense => return Err(CliError::Config("gsi needs a fastsum preset, not the dense backend".into())),
    };
    let gcfg = GsiConfig {
        ell: cfg.gsi.ell,
        beta: cfg.gsi.beta,
        score: cfg.gsi.score,
        preset,
        cg: cfg.cg(),
    };
    let out = gsi_pipeline(&ds, &gcfg)?;
    write_json(&cfg.out_dir.join("gsi.json"), &out.report.to_record())?;
    let record = WindowSetRecord::new(&out.windows, "gsi", None, cfg.seed);
    println!("{}", serde_json::to_string(&record.windows)?);
    write_json(&cfg.out_dir.join("windows.json"), &WindowsOutput::new(record, None, None))?;
    write_manifest(cfg, "gsi", &["gsi.json", "windows.json"])
}
