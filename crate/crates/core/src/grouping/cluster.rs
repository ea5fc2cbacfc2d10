//! Windows from connected components of the thresholded correlation graph.

use ndarray::{Array2, Axis};
use petgraph::unionfind::UnionFind;

use super::ranking::mis_scores;
use super::Strategy;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::WindowSet;

/// Pearson correlation of the feature columns (0 for constant columns).
pub fn correlation_matrix(x: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut c = x.clone();
    let mut sd = vec![0.0; d];
    for (j, mut col) in c.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
        sd[j] = col.dot(&col).sqrt();
    }
    let g = c.t().dot(&c);
    Array2::from_shape_fn((d, d), |(a, b)| {
        if a == b {
            1.0
        } else if sd[a] > 0.0 && sd[b] > 0.0 {
            g[[a, b]] / (sd[a] * sd[b])
        } else {
            0.0
        }
    })
}

/// Components of `|corr| > threshold` (each sorted by `rank`), components
/// ordered by their best-ranked member.
pub fn components(corr: &Array2<f64>, threshold: f64, rank: &[usize]) -> Vec<Vec<usize>> {
    let d = corr.nrows();
    let mut uf = UnionFind::<usize>::new(d);
    for a in 0..d {
        for b in a + 1..d {
            if corr[[a, b]].abs() > threshold {
                uf.union(a, b);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; d];
    // visit in rank order so groups come out sorted by importance
    let mut by_rank: Vec<usize> = (0..d).collect();
    by_rank.sort_by_key(|&j| rank[j]);
    for j in by_rank {
        let l = labels[j];
        if slot[l] == usize::MAX {
            slot[l] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[l]].push(j);
    }
    groups
}

fn representative(corr: &Array2<f64>, threshold: f64, group: &[usize]) -> usize {
    let degree = |a: usize| group.iter().filter(|&&b| b != a && corr[[a, b]].abs() > threshold).count();
    let mut best = group[0];
    for &j in group {
        let (dj, db) = (degree(j), degree(best));
        if dj > db || (dj == db && j < best) {
            best = j;
        }
    }
    best
}

/// Components split into chunks of at most `d_max` in MIS order; with
/// `Strategy::Single` each component contributes its highest-degree member.
pub fn connected_components_windows(
    ds: &Dataset,
    threshold: f64,
    strategy: Strategy,
    d_max: usize,
    subset: usize,
    seed: u64,
) -> Result<WindowSet> {
    let d = ds.n_features();
    if d < 2 {
        return Err(Error::InvalidArgument("correlation clustering needs d >= 2".into()));
    }
    let sub = ds.subsample(subset, seed);
    let corr = correlation_matrix(sub.features());
    let order = mis_scores(ds, subset, seed).order;
    let mut rank = vec![0; d];
    order.iter().enumerate().for_each(|(r, &j)| rank[j] = r);
    let groups = components(&corr, threshold, &rank);
    let windows = match strategy {
        Strategy::Single => groups.iter().map(|g| vec![representative(&corr, threshold, g)]).collect(),
        _ => groups.iter().flat_map(|g| g.chunks(d_max).map(<[usize]>::to_vec)).collect(),
    };
    WindowSet::new(windows, d_max)
}
