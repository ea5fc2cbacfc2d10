//! Feature windows produced from data.

pub mod cluster;
pub mod fgo;
pub mod lasso;
pub mod ranking;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::WindowSet;

pub use cluster::{connected_components_windows, correlation_matrix};
pub use fgo::{fgo_windows, FgoConfig, FgoOutcome};
pub use lasso::{elastic_net_select, lasso_select, Selection};
pub use ranking::{fisher_scores, mis_scores, ImportanceRanking};

/// How ranked or selected features are laid out into windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Consec,
    Distr,
    Direct,
    Single,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Consec => "consec",
            Strategy::Distr => "distr",
            Strategy::Direct => "direct",
            Strategy::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "consec" => Some(Strategy::Consec),
            "distr" => Some(Strategy::Distr),
            "direct" => Some(Strategy::Direct),
            "single" => Some(Strategy::Single),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    Consec,
    Mis,
    Fisher,
    Lasso,
    En,
    Cc,
    Fgo,
}

impl Technique {
    pub const ALL: [Technique; 7] = [
        Technique::Consec,
        Technique::Mis,
        Technique::Fisher,
        Technique::Lasso,
        Technique::En,
        Technique::Cc,
        Technique::Fgo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Consec => "consec",
            Technique::Mis => "mis",
            Technique::Fisher => "fisher",
            Technique::Lasso => "lasso",
            Technique::En => "en",
            Technique::Cc => "cc",
            Technique::Fgo => "fgo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s.to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    pub d_max: usize,
    /// Total number of features kept (`None`: all).
    pub n_feat: Option<usize>,
    pub strategy: Strategy,
    pub subset_size: usize,
    pub threshold: f64,
    pub lasso_lambda: f64,
    pub en_lambda: f64,
    pub en_ratio: f64,
    pub cc_threshold: f64,
    pub fgo: FgoConfig,
    pub seed: u64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            d_max: 2,
            n_feat: None,
            strategy: Strategy::Consec,
            subset_size: 1000,
            threshold: 0.0,
            lasso_lambda: 0.01,
            en_lambda: 0.01,
            en_ratio: 0.5,
            cc_threshold: 0.5,
            fgo: FgoConfig::default(),
            seed: 0,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(1..=3).contains(&self.d_max) {
            return Err(Error::InvalidDMax(self.d_max));
        }
        if let Some(n) = self.n_feat {
            if n == 0 || n > d {
                return Err(Error::InvalidArgument(format!("n_feat = {n} must lie in 1..={d}")));
            }
        }
        let positive = [
            ("subset_size", self.subset_size as f64),
            ("lasso_lambda", self.lasso_lambda),
            ("en_lambda", self.en_lambda),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.en_ratio > 0.0 && self.en_ratio <= 1.0) {
            return Err(Error::InvalidArgument("en_ratio must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.cc_threshold) {
            return Err(Error::InvalidArgument("cc_threshold must lie in [0, 1]".into()));
        }
        if self.threshold < 0.0 || !self.threshold.is_finite() {
            return Err(Error::InvalidArgument("threshold must be nonnegative".into()));
        }
        self.fgo.validate()
    }
}

/// Serialized form of a window set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSetRecord {
    /// 1-based feature indices.
    pub windows: Vec<Vec<usize>>,
    pub technique: String,
    pub strategy: Option<String>,
    pub d_max: usize,
    pub n_feat: usize,
    pub seed: u64,
}

impl WindowSetRecord {
    pub fn new(ws: &WindowSet, technique: &str, strategy: Option<Strategy>, seed: u64) -> Self {
        Self {
            windows: ws.to_one_based(),
            technique: technique.to_string(),
            strategy: strategy.map(|s| s.name().to_string()),
            d_max: ws.d_max(),
            n_feat: ws.windows().iter().map(Vec::len).sum(),
            seed,
        }
    }

    pub fn to_window_set(&self) -> Result<WindowSet> {
        WindowSet::from_one_based(self.windows.clone(), self.d_max)
    }
}

/// Contiguous blocks `{0..d_max}, {d_max..2 d_max}, ...` (0-based).
pub fn consec_windows(d: usize, d_max: usize) -> Result<WindowSet> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    if !(1..=3).contains(&d_max) {
        return Err(Error::InvalidDMax(d_max));
    }
    let windows = (0..d).collect::<Vec<_>>().chunks(d_max).map(<[usize]>::to_vec).collect();
    WindowSet::new(windows, d_max)
}

/// Lays out the first `n_feat` entries of `order` (0-based indices, most
/// important first).
///
/// `distr` uses `P = min(n, max(d_max, ceil(n / d_max)))` windows and deals
/// the features round-robin; `direct` sorts the kept indices before chunking.
pub fn arrange(order: &[usize], strategy: Strategy, d_max: usize, n_feat: Option<usize>) -> Result<WindowSet> {
    if !(1..=3).contains(&d_max) {
        return Err(Error::InvalidDMax(d_max));
    }
    if order.is_empty() {
        return Err(Error::InvalidWindows("no features to arrange".into()));
    }
    let n = n_feat.unwrap_or(order.len()).min(order.len()).max(1);
    let kept = &order[..n];
    let windows: Vec<Vec<usize>> = match strategy {
        Strategy::Consec => kept.chunks(d_max).map(<[usize]>::to_vec).collect(),
        Strategy::Direct => {
            let mut sorted = kept.to_vec();
            sorted.sort_unstable();
            sorted.chunks(d_max).map(<[usize]>::to_vec).collect()
        }
        Strategy::Distr => {
            let p = n.min(d_max.max(n.div_ceil(d_max)));
            let mut w = vec![Vec::new(); p];
            for (i, &f) in kept.iter().enumerate() {
                w[i % p].push(f);
            }
            w
        }
        Strategy::Single => kept.iter().map(|&f| vec![f]).collect(),
    };
    WindowSet::new(windows, d_max)
}

/// Windows plus bookkeeping from one grouping run.
#[derive(Debug, Clone)]
pub struct GroupingOutcome {
    pub windows: WindowSet,
    pub record: WindowSetRecord,
    pub warning: Option<String>,
}

/// Runs one technique on a z-scored (or prescaled) dataset.
pub fn group_features(ds: &Dataset, technique: Technique, cfg: &GroupingConfig) -> Result<GroupingOutcome> {
    let d = ds.n_features();
    cfg.validate(d)?;
    let mut warning = None;
    let mut strategy = Some(cfg.strategy);
    let windows = match technique {
        Technique::Consec => {
            strategy = None;
            let ws = consec_windows(d, cfg.d_max)?;
            match cfg.n_feat {
                Some(n) if n < d => arrange(&(0..d).collect::<Vec<_>>(), Strategy::Consec, cfg.d_max, Some(n))?,
                _ => ws,
            }
        }
        Technique::Mis => arrange(&mis_scores(ds, cfg.subset_size, cfg.seed).order, cfg.strategy, cfg.d_max, cfg.n_feat)?,
        Technique::Fisher => arrange(
            &fisher_scores(ds, cfg.subset_size, cfg.seed).order,
            cfg.strategy,
            cfg.d_max,
            cfg.n_feat,
        )?,
        Technique::Lasso | Technique::En => {
            let sel = if technique == Technique::Lasso {
                lasso_select(ds, cfg.lasso_lambda, cfg.threshold, cfg.subset_size, cfg.seed)?
            } else {
                elastic_net_select(ds, cfg.en_lambda, cfg.en_ratio, cfg.threshold, cfg.subset_size, cfg.seed)?
            };
            let order = if sel.selected.is_empty() {
                warning = Some(format!(
                    "{} selected no feature; falling back to the full |w| ranking",
                    technique.name()
                ));
                sel.order_by_magnitude()
            } else {
                sel.selected_by_magnitude()
            };
            arrange(&order, cfg.strategy, cfg.d_max, cfg.n_feat)?
        }
        Technique::Cc => connected_components_windows(ds, cfg.cc_threshold, cfg.strategy, cfg.d_max, cfg.subset_size, cfg.seed)?,
        Technique::Fgo => {
            strategy = None;
            let out = fgo_windows(ds, &cfg.fgo, cfg.threshold, cfg.seed)?;
            warning = out.warning.clone();
            out.windows
        }
    };
    let record = WindowSetRecord::new(&windows, technique.name(), strategy, cfg.seed);
    Ok(GroupingOutcome {
        windows,
        record,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(ws: &WindowSet) -> Vec<Vec<usize>> {
        ws.to_one_based()
    }

    #[test]
    fn consec_examples() {
        assert_eq!(one_based(&consec_windows(6, 2).unwrap()), vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        assert_eq!(one_based(&consec_windows(6, 3).unwrap()), vec![vec![1, 2, 3], vec![4, 5, 6]]);
        assert_eq!(consec_windows(4, 1).unwrap().len(), 4);
        assert_eq!(one_based(&consec_windows(5, 2).unwrap()).last().unwrap(), &vec![5]);
        assert!(consec_windows(0, 2).is_err());
    }

    #[test]
    fn arrange_examples() {
        let order: Vec<usize> = [5, 2, 7, 1, 3, 6].iter().map(|i| i - 1).collect();
        let c = arrange(&order, Strategy::Consec, 3, Some(6)).unwrap();
        assert_eq!(c.windows(), &[vec![1, 4, 6], vec![0, 2, 5]]);
        let d = arrange(&order, Strategy::Distr, 3, Some(6)).unwrap();
        assert_eq!(one_based(&d), vec![vec![1, 5], vec![2, 3], vec![6, 7]]);
        let nz: Vec<usize> = [9, 2, 6, 5].iter().map(|i| i - 1).collect();
        let di = arrange(&nz, Strategy::Direct, 2, None).unwrap();
        assert_eq!(one_based(&di), vec![vec![2, 5], vec![6, 9]]);
        let s = arrange(&order, Strategy::Single, 3, Some(2)).unwrap();
        assert_eq!(one_based(&s), vec![vec![5], vec![2]]);
    }

    #[test]
    fn arrange_is_deterministic_and_disjoint() {
        let order = vec![4, 0, 3, 1, 2];
        for st in [Strategy::Consec, Strategy::Distr, Strategy::Direct, Strategy::Single] {
            for dm in 1..=3 {
                let a = arrange(&order, st, dm, None).unwrap();
                assert_eq!(a, arrange(&order, st, dm, None).unwrap());
                assert!(a.is_disjoint());
                assert!(a.max_len() <= dm);
                assert_eq!(a.windows().iter().map(Vec::len).sum::<usize>(), 5);
            }
        }
    }

    #[test]
    fn record_round_trip() {
        let ws = consec_windows(5, 2).unwrap();
        let rec = WindowSetRecord::new(&ws, "consec", None, 3);
        let json = serde_json::to_string(&rec).unwrap();
        let back: WindowSetRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_window_set().unwrap(), ws);
        assert_eq!(back.n_feat, 5);
        assert!(json.contains("[[1,2],[3,4],[5]]"));
    }

    #[test]
    fn config_validation() {
        let c = GroupingConfig::default();
        assert!(c.validate(5).is_ok());
        assert!(GroupingConfig { d_max: 4, ..c.clone() }.validate(5).is_err());
        assert!(GroupingConfig { n_feat: Some(6), ..c.clone() }.validate(5).is_err());
        assert!(GroupingConfig { lasso_lambda: 0.0, ..c }.validate(5).is_err());
        assert_eq!(
            Technique::ALL.map(|t| Technique::parse(t.name()).unwrap()),
            Technique::ALL
        );
    }
}
