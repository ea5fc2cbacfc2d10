//! Filter-style feature importance scores.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;

pub const MIS_BINS: usize = 16;
pub const FISHER_CLASSES: usize = 5;

/// Per-feature scores and the induced order (descending score, ties by index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub scores: Vec<f64>,
    /// 0-based feature indices, most important first.
    pub order: Vec<usize>,
}

impl ImportanceRanking {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self { scores, order }
    }

    /// The `n` best features.
    pub fn top(&self, n: usize) -> &[usize] {
        &self.order[..n.min(self.order.len())]
    }
}

/// Equal-frequency bin labels; tied values share the bin of their first rank.
pub fn quantile_bins(values: ArrayView1<f64>, bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let bin = (start * bins / n).min(bins - 1);
        for &i in &idx[start..end] {
            out[i] = bin;
        }
        start = end;
    }
    out
}

/// Plug-in mutual information (nats) of two discrete label vectors.
pub fn mutual_information(a: &[usize], b: &[usize], bins: usize) -> f64 {
    let n = a.len() as f64;
    let mut joint = vec![0.0; bins * bins];
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * bins + y] += 1.0;
        pa[x] += 1.0;
        pb[y] += 1.0;
    }
    let mut mi = 0.0;
    for x in 0..bins {
        for y in 0..bins {
            let c = joint[x * bins + y];
            if c > 0.0 {
                mi += c / n * (c * n / (pa[x] * pb[y])).ln();
            }
        }
    }
    mi.max(0.0)
}

fn occupied(labels: &[usize], bins: usize) -> usize {
    let mut seen = vec![false; bins];
    labels.iter().for_each(|&l| seen[l] = true);
    seen.iter().filter(|&&s| s).count()
}

/// Mutual information between every feature and the target on a random subset.
///
/// The plug-in estimate is shifted by the Miller-Madow term
/// `(B_x - 1)(B_y - 1) / 2N` and clamped at zero.
pub fn mis_scores(ds: &Dataset, subset: usize, seed: u64) -> ImportanceRanking {
    let sub = ds.subsample(subset, seed);
    let n = sub.n_samples() as f64;
    let yb = quantile_bins(sub.targets().view(), MIS_BINS);
    let by = occupied(&yb, MIS_BINS) as f64;
    let scores = (0..sub.n_features())
        .map(|j| {
            let xb = quantile_bins(sub.features().column(j), MIS_BINS);
            let bx = occupied(&xb, MIS_BINS) as f64;
            let bias = (bx - 1.0) * (by - 1.0) / (2.0 * n);
            (mutual_information(&xb, &yb, MIS_BINS) - bias).max(0.0)
        })
        .collect();
    ImportanceRanking::from_scores(scores)
}

/// Fisher score with the target cut into quantile classes.
pub fn fisher_scores(ds: &Dataset, subset: usize, seed: u64) -> ImportanceRanking {
    let sub = ds.subsample(subset, seed);
    let classes = quantile_bins(sub.targets().view(), FISHER_CLASSES);
    let scores = (0..sub.n_features())
        .map(|j| fisher_score(sub.features().column(j), &classes, FISHER_CLASSES))
        .collect();
    ImportanceRanking::from_scores(scores)
}

fn fisher_score(x: ArrayView1<f64>, classes: &[usize], k: usize) -> f64 {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let mut count = vec![0.0; k];
    let mut sum = vec![0.0; k];
    for (&v, &c) in x.iter().zip(classes) {
        count[c] += 1.0;
        sum[c] += v;
    }
    let mut within = 0.0;
    let mut between = 0.0;
    for c in 0..k {
        if count[c] == 0.0 {
            continue;
        }
        let mu = sum[c] / count[c];
        between += count[c] * (mu - mean) * (mu - mean);
        let var: f64 = x
            .iter()
            .zip(classes)
            .filter(|(_, &cc)| cc == c)
            .map(|(&v, _)| (v - mu) * (v - mu))
            .sum::<f64>()
            / count[c];
        within += count[c] * var;
    }
    if within > 0.0 {
        between / within
    } else if between > 0.0 {
        f64::MAX
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Array2<f64> = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] + 0.3 * x[[i, 1]].powi(2));
        let mut x2 = x.clone();
        // column 3 is a copy of the target
        for i in 0..n {
            x2[[i, 3]] = y[i];
        }
        Dataset::new(x2, y, None).unwrap()
    }

    #[test]
    fn order_ties_by_index() {
        let r = ImportanceRanking::from_scores(vec![0.5, 1.0, 0.5, 2.0]);
        assert_eq!(r.order, vec![3, 1, 0, 2]);
        assert_eq!(r.top(2), &[3, 1]);
    }

    #[test]
    fn bins_are_equal_frequency_and_share_ties() {
        let v = Array1::from(vec![5.0, 1.0, 3.0, 3.0, 2.0, 8.0, 7.0, 4.0]);
        let b = quantile_bins(v.view(), 4);
        assert_eq!(b, vec![2, 0, 1, 1, 0, 3, 3, 2]);
    }

    #[test]
    fn mis_properties() {
        let ds = data(1000, 1);
        let r = mis_scores(&ds, 1000, 0);
        assert_eq!(r.order[0], 3);
        assert!(r.scores.iter().all(|&s| s >= 0.0));
        assert!(r.scores[2] < 0.05, "{}", r.scores[2]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Array2::from_shape_fn((1000, 1), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(1000, |_| rng.random_range(-1.0..1.0));
        let nd = Dataset::new(noise, y, None).unwrap();
        let s = mis_scores(&nd, 1000, 0).scores[0];
        assert!(s < 0.05, "{s}");
        // strictly monotone transform leaves quantile bins unchanged
        let mut ex = ds.features().clone();
        ex.column_mut(0).mapv_inplace(f64::exp);
        let t = Dataset::new(ex, ds.targets().clone(), None).unwrap();
        assert_eq!(mis_scores(&t, 1000, 0).scores, r.scores);
        assert_eq!(mis_scores(&ds, 500, 4), mis_scores(&ds, 500, 4));
    }

    #[test]
    fn fisher_properties() {
        let n = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = Array1::from_shape_fn(n, |i| i as f64);
        let x = Array2::from_shape_fn((n, 3), |(i, j)| match j {
            0 => (i * FISHER_CLASSES / n) as f64,
            1 => rng.random_range(-1.0..1.0),
            _ => i as f64 / n as f64 + 0.2 * rng.random_range(-1.0..1.0),
        });
        let ds = Dataset::new(x.clone(), y.clone(), None).unwrap();
        let r = fisher_scores(&ds, n, 0);
        assert_eq!(r.order[0], 0);
        assert!(r.scores[0] > r.scores[2] && r.scores[2] > r.scores[1]);
        assert!(r.scores[1] < 0.05, "{}", r.scores[1]);
        let mut scaled = x.clone();
        scaled.column_mut(2).mapv_inplace(|v| 10.0 * v + 3.0);
        let rs = fisher_scores(&Dataset::new(scaled, y, None).unwrap(), n, 0);
        assert!((rs.scores[2] - r.scores[2]).abs() < 1e-9 * r.scores[2]);
        assert_eq!(rs.order, r.order);
    }
}
