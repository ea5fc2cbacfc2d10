//! Dataset container and the preprocessing chain
//! raw -> z-scored -> quarter box -> prescaled.
//!
//! The fast summation works on the torus `[-1/2, 1/2)^q`, so every pair
//! difference restricted to a window must stay inside the fundamental cell.
//! Mapping each column into `[-1/4, 1/4]` and dividing by `sqrt(d_max)` gives
//! `|x_i^W - x_j^W|_2 <= 1/2` for every window `W` with `|W| <= d_max`.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a dataset sits in the preprocessing chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ScalingState {
    Raw,
    Zscored,
    QuarterBox,
    Prescaled { d_max: usize },
}

impl fmt::Display for ScalingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalingState::Raw => write!(f, "raw"),
            ScalingState::Zscored => write!(f, "zscored"),
            ScalingState::QuarterBox => write!(f, "quarter_box"),
            ScalingState::Prescaled { d_max } => write!(f, "prescaled({d_max})"),
        }
    }
}

/// Scaling constants for a superposition dimension `d_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactor {
    pub d_max: usize,
    /// Largest norm of a quarter-box point restricted to `d_max` coordinates.
    pub delta_max: f64,
    /// Multiplier applied to points and length-scales, `1 / sqrt(d_max)`.
    pub factor: f64,
}

impl ScalingFactor {
    pub fn new(d_max: usize) -> Result<Self> {
        if !(1..=3).contains(&d_max) {
            return Err(Error::InvalidDMax(d_max));
        }
        let root = (d_max as f64).sqrt();
        Ok(Self {
            d_max,
            delta_max: root / 4.0,
            factor: 1.0 / root,
        })
    }

    /// Length-scale on prescaled data for a length-scale chosen on the quarter box.
    pub fn scale_ell(&self, ell: f64) -> f64 {
        ell * self.factor
    }
}

/// Per-column affine map `x -> (x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreMap {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

/// Per-column affine map from `[lo, hi]` onto `[-1/4, 1/4]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterBoxMap {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl QuarterBoxMap {
    fn forward(&self, col: usize, x: f64) -> f64 {
        -0.25 + 0.5 * (x - self.lo[col]) / (self.hi[col] - self.lo[col])
    }

    fn inverse(&self, col: usize, y: f64) -> f64 {
        self.lo[col] + (y + 0.25) * 2.0 * (self.hi[col] - self.lo[col])
    }
}

/// Selects the target column when reading a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

/// `N x d` feature matrix with targets and the record of applied transforms.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Array1<f64>,
    feature_names: Vec<String>,
    scaling: ScalingState,
    zscore: Option<ZScoreMap>,
    quarter_box: Option<QuarterBoxMap>,
    /// Rows removed at ingestion because of missing or non-finite entries.
    pub dropped_rows: usize,
    /// Human-readable notes, e.g. dropped constant columns.
    pub warnings: Vec<String>,
}

impl Dataset {
    /// Builds a raw dataset, dropping every row that holds a non-finite value.
    pub fn new(
        features: Array2<f64>,
        targets: Array1<f64>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if targets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: targets.len(),
            });
        }
        let names = match feature_names {
            Some(names) if names.len() == d => names,
            Some(names) => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: names.len(),
                })
            }
            None => (1..=d).map(|j| format!("x{j}")).collect(),
        };
        let keep: Vec<usize> = (0..n)
            .filter(|&i| targets[i].is_finite() && features.row(i).iter().all(|v| v.is_finite()))
            .collect();
        if keep.is_empty() || d == 0 {
            return Err(Error::EmptyDataset);
        }
        let dropped = n - keep.len();
        let features = features.select(Axis(0), &keep);
        let targets = targets.select(Axis(0), &keep);
        Ok(Self {
            features,
            targets,
            feature_names: names,
            scaling: ScalingState::Raw,
            zscore: None,
            quarter_box: None,
            dropped_rows: dropped,
            warnings: Vec::new(),
        })
    }

    /// Reads a CSV file with a header row. Unparsable or non-finite fields drop the row.
    pub fn from_csv(path: impl AsRef<Path>, target: &TargetColumn, delimiter: u8) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let target_idx = match target {
            TargetColumn::Index(i) if *i < headers.len() => *i,
            TargetColumn::Index(i) => {
                return Err(Error::InvalidArgument(format!(
                    "target column index {i} out of range ({} columns)",
                    headers.len()
                )))
            }
            TargetColumn::Name(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::InvalidArgument(format!("target column '{name}' not found"))
            })?,
        };
        let d = headers.len() - 1;
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let mut values = Vec::new();
        let mut targets = Vec::new();
        let mut dropped = 0usize;
        for record in reader.records() {
            let record = record?;
            let parsed: Option<Vec<f64>> = record
                .iter()
                .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            match parsed {
                Some(row) if row.len() == headers.len() => {
                    for (i, v) in row.iter().enumerate() {
                        if i == target_idx {
                            targets.push(*v);
                        } else {
                            values.push(*v);
                        }
                    }
                }
                _ => dropped += 1,
            }
        }
        let n = targets.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let features = Array2::from_shape_vec((n, d), values)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut ds = Self::new(features, Array1::from(targets), Some(names))?;
        ds.dropped_rows += dropped;
        Ok(ds)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn scaling(&self) -> ScalingState {
        self.scaling
    }

    pub fn zscore_map(&self) -> Option<&ZScoreMap> {
        self.zscore.as_ref()
    }

    pub fn quarter_box_map(&self) -> Option<&QuarterBoxMap> {
        self.quarter_box.as_ref()
    }

    fn expect_state(&self, expected: ScalingState) -> Result<()> {
        if self.scaling != expected {
            return Err(Error::InvalidScaling {
                expected: expected.to_string(),
                found: self.scaling.to_string(),
            });
        }
        Ok(())
    }

    /// `d_max` of a prescaled dataset.
    pub fn prescaled_d_max(&self) -> Result<usize> {
        match self.scaling {
            ScalingState::Prescaled { d_max } => Ok(d_max),
            other => Err(Error::InvalidScaling {
                expected: "prescaled".into(),
                found: other.to_string(),
            }),
        }
    }

    fn keep_columns(&mut self, keep: &[usize]) {
        if keep.len() == self.n_features() {
            return;
        }
        self.features = self.features.select(Axis(1), keep);
        self.feature_names = keep.iter().map(|&j| self.feature_names[j].clone()).collect();
    }

    /// Standardizes every column and the targets (population variance).
    /// Constant columns are dropped and noted in `warnings`.
    pub fn zscore_normalize(&self) -> Result<Dataset> {
        self.expect_state(ScalingState::Raw)?;
        let n = self.n_samples() as f64;
        let mut out = self.clone();
        let mut keep = Vec::new();
        let mut means = Vec::new();
        let mut stds = Vec::new();
        for (j, col) in self.features.columns().into_iter().enumerate() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 1e-12 * mean.abs().max(1.0) {
                out.warnings
                    .push(format!("dropped constant column '{}'", self.feature_names[j]));
                log::warn!("dropping constant column '{}'", self.feature_names[j]);
                continue;
            }
            keep.push(j);
            means.push(mean);
            stds.push(std);
        }
        if keep.is_empty() {
            return Err(Error::EmptyDataset);
        }
        out.keep_columns(&keep);
        for (j, mut col) in out.features.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - means[j]) / stds[j]);
        }
        let t_mean = self.targets.sum() / n;
        let t_var = self.targets.iter().map(|v| (v - t_mean) * (v - t_mean)).sum::<f64>() / n;
        let t_std = if t_var > 0.0 { t_var.sqrt() } else { 1.0 };
        out.targets.mapv_inplace(|v| (v - t_mean) / t_std);
        out.zscore = Some(ZScoreMap {
            mean: means,
            std: stds,
            target_mean: t_mean,
            target_std: t_std,
        });
        out.scaling = ScalingState::Zscored;
        Ok(out)
    }

    /// Maps each column affinely from its `[min, max]` to `[-1/4, 1/4]`.
    pub fn minmax_to_quarter_box(&self) -> Result<Dataset> {
        self.expect_state(ScalingState::Zscored)?;
        let mut out = self.clone();
        let mut keep = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for (j, col) in self.features.columns().into_iter().enumerate() {
            let mn = col.iter().copied().fold(f64::INFINITY, f64::min);
            let mx = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if mx <= mn {
                out.warnings
                    .push(format!("dropped constant column '{}'", self.feature_names[j]));
                continue;
            }
            keep.push(j);
            lo.push(mn);
            hi.push(mx);
        }
        if keep.is_empty() {
            return Err(Error::EmptyDataset);
        }
        out.keep_columns(&keep);
        let map = QuarterBoxMap { lo, hi };
        for (j, mut col) in out.features.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| map.forward(j, v).clamp(-0.25, 0.25));
        }
        out.quarter_box = Some(map);
        out.scaling = ScalingState::QuarterBox;
        Ok(out)
    }

    /// Undoes the quarter-box map, returning z-scored features.
    pub fn inverse_quarter_box(&self) -> Result<Array2<f64>> {
        let map = self.quarter_box.as_ref().ok_or_else(|| Error::InvalidScaling {
            expected: "quarter_box".into(),
            found: self.scaling.to_string(),
        })?;
        let factor = match self.scaling {
            ScalingState::QuarterBox => 1.0,
            ScalingState::Prescaled { d_max } => (d_max as f64).sqrt(),
            other => {
                return Err(Error::InvalidScaling {
                    expected: "quarter_box".into(),
                    found: other.to_string(),
                })
            }
        };
        let mut out = self.features.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| map.inverse(j, v * factor));
        }
        Ok(out)
    }

    /// Divides the quarter-box points by `sqrt(d_max)` and returns the matching
    /// length-scale `ell / sqrt(d_max)`.
    pub fn prescale(&self, d_max: usize, ell: f64) -> Result<(Dataset, f64)> {
        let factor = ScalingFactor::new(d_max)?;
        self.expect_state(ScalingState::QuarterBox)?;
        if !(ell > 0.0) {
            return Err(Error::InvalidArgument(format!("length-scale must be positive, got {ell}")));
        }
        let mut out = self.clone();
        if d_max > 1 {
            out.features.mapv_inplace(|v| v * factor.factor);
        }
        out.scaling = ScalingState::Prescaled { d_max };
        Ok((out, factor.scale_ell(ell)))
    }

    /// Convenience: z-score, quarter box and prescale in one go.
    pub fn preprocess(&self, d_max: usize) -> Result<Dataset> {
        let (ds, _) = self
            .zscore_normalize()?
            .minmax_to_quarter_box()?
            .prescale(d_max, 1.0)?;
        Ok(ds)
    }

    /// Rows in the given order, sharing the scaling record.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut out = self.clone();
        out.features = self.features.select(Axis(0), rows);
        out.targets = self.targets.select(Axis(0), rows);
        out
    }

    /// Deterministic split; the train part receives `floor(N * fraction)` rows.
    pub fn train_test_split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let n = self.n_samples();
        let n_train = (n as f64 * fraction).floor() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train, test) = idx.split_at(n_train);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.select_rows(&train), self.select_rows(&test)))
    }

    /// Random subset of at most `size` rows (all rows when `size >= N`).
    pub fn subsample(&self, size: usize, seed: u64) -> Dataset {
        let n = self.n_samples();
        if size >= n {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut rows = idx[..size].to_vec();
        rows.sort_unstable();
        self.select_rows(&rows)
    }

    /// Points restricted to the (0-based) feature indices `window`, row-major `N x |window|`.
    pub fn window_points(&self, window: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_samples() * window.len());
        for row in self.features.rows() {
            out.extend(window.iter().map(|&j| row[j]));
        }
        out
    }

    pub fn same_scaling(&self, other: &Dataset) -> bool {
        self.scaling == other.scaling
            && self.quarter_box == other.quarter_box
            && self.zscore == other.zscore
            && self.n_features() == other.n_features()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        Dataset::new(
            array![[1.0, 5.0, -3.0], [2.0, 5.0, 0.0], [3.0, 5.0, 3.0]],
            array![1.0, 2.0, 4.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn zscore_column_and_constant_drop() {
        let z = toy().zscore_normalize().unwrap();
        assert_eq!(z.n_features(), 2);
        assert_eq!(z.warnings.len(), 1);
        let col = z.features().column(0);
        let mean = col.sum() / 3.0;
        let var = col.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zscore_matches_hand_computation() {
        let ds = Dataset::new(
            array![[0.0, 10.0], [2.0, 20.0], [4.0, 60.0], [6.0, 30.0]],
            array![0.0, 0.0, 1.0, 1.0],
            None,
        )
        .unwrap();
        let z = ds.zscore_normalize().unwrap();
        // column 0: mean 3, population std sqrt(5)
        let s0 = 5f64.sqrt();
        // column 1: mean 30, population variance (400+100+900+0)/4 = 350
        let s1 = 350f64.sqrt();
        let expected = [
            [-3.0 / s0, -20.0 / s1],
            [-1.0 / s0, -10.0 / s1],
            [1.0 / s0, 30.0 / s1],
            [3.0 / s0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..2 {
                assert!((z.features()[[i, j]] - expected[i][j]).abs() < 1e-14);
            }
        }
        assert_eq!(z.targets().to_vec(), vec![-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_finite_rows_dropped() {
        let ds = Dataset::new(
            array![[1.0, f64::NAN], [2.0, 1.0], [3.0, 2.0]],
            array![1.0, 2.0, f64::INFINITY],
            None,
        )
        .unwrap();
        assert_eq!(ds.n_samples(), 1);
        assert_eq!(ds.dropped_rows, 2);
        let empty = Dataset::new(array![[f64::NAN]], array![1.0], None);
        assert!(matches!(empty, Err(Error::EmptyDataset)));
    }

    #[test]
    fn quarter_box_endpoints_and_linearity() {
        let ds = toy().zscore_normalize().unwrap().minmax_to_quarter_box().unwrap();
        let col = ds.features().column(1);
        // [-3, 0, 3] standardizes to a symmetric column
        assert!((col[0] + 0.25).abs() < 1e-15);
        assert!(col[1].abs() < 1e-15);
        assert!((col[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn state_preconditions() {
        let raw = toy();
        assert!(matches!(raw.minmax_to_quarter_box(), Err(Error::InvalidScaling { .. })));
        assert!(matches!(raw.prescale(2, 1.0), Err(Error::InvalidScaling { .. })));
        let q = raw.zscore_normalize().unwrap().minmax_to_quarter_box().unwrap();
        assert!(matches!(q.prescale(0, 1.0), Err(Error::InvalidDMax(0))));
        assert!(matches!(q.prescale(4, 1.0), Err(Error::InvalidDMax(4))));
    }

    #[test]
    fn prescale_factors() {
        let q = toy().zscore_normalize().unwrap().minmax_to_quarter_box().unwrap();
        let (p1, ell1) = q.prescale(1, 0.7).unwrap();
        assert_eq!(p1.features(), q.features());
        assert_eq!(ell1, 0.7);
        let (_, ell3) = q.prescale(3, 1.0).unwrap();
        assert!((ell3 - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        for d in 1..=3 {
            let f = ScalingFactor::new(d).unwrap();
            assert!((f.delta_max * f.factor * 4.0 - 1.0).abs() < 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = Dataset::new(
            Array2::from_shape_fn((10, 1), |(i, _)| i as f64),
            Array1::from_shape_fn(10, |i| i as f64),
            None,
        )
        .unwrap();
        let (a, b) = ds.train_test_split(0.5, 7).unwrap();
        assert_eq!((a.n_samples(), b.n_samples()), (5, 5));
        let (a2, _) = ds.train_test_split(0.5, 7).unwrap();
        assert_eq!(a.targets(), a2.targets());
        let mut all: Vec<f64> = a.targets().iter().chain(b.targets().iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());

        let seven = ds.select_rows(&[0, 1, 2, 3, 4, 5, 6]);
        let (a, b) = seven.train_test_split(0.5, 1).unwrap();
        assert_eq!((a.n_samples(), b.n_samples()), (3, 4));
        assert!(ds.train_test_split(1.0, 0).is_err());
    }

    #[test]
    fn csv_ingestion_drops_bad_rows() {
        let dir = std::env::temp_dir().join(format!("fastadd-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        std::fs::write(&path, "a;y;b\n1;2;3\n4;;6\n7;8;NaN\n1.5;2.5;3.5\n").unwrap();
        let ds = Dataset::from_csv(&path, &TargetColumn::Name("y".into()), b';').unwrap();
        assert_eq!(ds.n_samples(), 2);
        assert_eq!(ds.dropped_rows, 2);
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.targets().to_vec(), vec![2.0, 2.5]);
        assert_eq!(ds.features()[[1, 1]], 3.5);
        std::fs::remove_dir_all(dir).ok();
    }
}
