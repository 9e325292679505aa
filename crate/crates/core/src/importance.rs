//! Out-of-bag permutation importance, delete-d jackknife variance and
//! normal-approximation confidence intervals.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::dataset::CompleteDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::forest::{fit_forest, Forest, ForestConfig, Tree};
use crate::rng::Stream;
use crate::stats::{pairwise_sum, z_two_sided};

/// Point estimate, jackknife variance and interval for one feature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportanceEstimate {
    pub feature: usize,
    pub point: f64,
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub k: usize,
    pub b: usize,
}

/// Loss increase on the OOB rows of `tree` when column `j` is replaced by
/// `permuted` (aligned with `oob`).
fn permuted_loss_increase(
    tree: &Tree,
    data: &CompleteDataset,
    oob: &[usize],
    j: usize,
    permuted: &[f64],
    baseline: &[f64],
) -> f64 {
    let x = &data.features;
    let y = &data.response;
    let mut acc = 0.0;
    for (k, &i) in oob.iter().enumerate() {
        let pred = tree.predict_with(|f| if f == j { permuted[k] } else { x.get(i, f) });
        let r = y[i] - pred;
        acc += r * r - baseline[k];
    }
    acc / oob.len() as f64
}

fn baseline_losses(tree: &Tree, data: &CompleteDataset, oob: &[usize]) -> Vec<f64> {
    oob.iter()
        .map(|&i| {
            let r = data.response[i] - tree.predict_with(|f| data.features.get(i, f));
            r * r
        })
        .collect()
}

fn tree_importance_inner(
    tree: &Tree,
    t: usize,
    j: usize,
    data: &CompleteDataset,
    rng: &mut impl Rng,
    baseline: Option<&[f64]>,
    oob: &[usize],
) -> Result<f64> {
    if oob.is_empty() {
        return Err(Error::EmptyOob(t));
    }
    if !tree.uses_feature(j) {
        return Ok(0.0);
    }
    let mut permuted: Vec<f64> = oob.iter().map(|&i| data.features.get(i, j)).collect();
    permuted.shuffle(rng);
    let owned;
    let baseline = match baseline {
        Some(b) => b,
        None => {
            owned = baseline_losses(tree, data, oob);
            &owned
        }
    };
    Ok(permuted_loss_increase(tree, data, oob, j, &permuted, baseline))
}

/// Permutation importance of feature `j` for tree `t` under squared loss.
///
/// `data` must be the forest's training data. A tree that never splits on `j`
/// scores exactly zero.
pub fn tree_importance(
    forest: &Forest,
    t: usize,
    j: usize,
    data: &CompleteDataset,
    rng: &mut impl Rng,
) -> Result<f64> {
    check_data(forest, data, j)?;
    let oob = forest.oob_indices(t)?;
    tree_importance_inner(&forest.trees()[t], t, j, data, rng, None, &oob)
}

fn check_data(forest: &Forest, data: &CompleteDataset, j: usize) -> Result<()> {
    if data.n() != forest.n_train() || data.p() != forest.n_features() {
        return Err(Error::Dimension("data does not match the forest's training set".into()));
    }
    if j >= data.p() {
        return Err(Error::InvalidParameter(format!("feature {j} out of range")));
    }
    Ok(())
}

/// Per-tree importances of every feature; `None` for trees with an empty OOB set.
///
/// The permutation for (tree `t`, feature `j`) comes from `stream.child(t).child(j)`.
fn per_tree_importances(forest: &Forest, data: &CompleteDataset, stream: Stream) -> Vec<Option<Vec<f64>>> {
    let p = data.p();
    exec::map_range(forest.trees().len(), |t| {
        let tree = &forest.trees()[t];
        let oob = tree.oob_rows();
        if oob.is_empty() {
            return None;
        }
        let baseline = baseline_losses(tree, data, &oob);
        let tree_stream = stream.child(t as u64);
        Some(
            (0..p)
                .map(|j| {
                    let mut rng = tree_stream.child(j as u64).rng();
                    tree_importance_inner(tree, t, j, data, &mut rng, Some(&baseline), &oob)
                        .expect("non-empty OOB set")
                })
                .collect(),
        )
    })
}

/// Forest permutation importance (mean over trees with non-empty OOB sets)
/// for every feature.
pub fn rfpim_all(forest: &Forest, data: &CompleteDataset, stream: Stream) -> Result<Vec<f64>> {
    if data.n() != forest.n_train() || data.p() != forest.n_features() {
        return Err(Error::Dimension("data does not match the forest's training set".into()));
    }
    let per_tree: Vec<Vec<f64>> = per_tree_importances(forest, data, stream).into_iter().flatten().collect();
    if per_tree.is_empty() {
        return Err(Error::NoOobTrees);
    }
    Ok((0..data.p())
        .map(|j| {
            let col: Vec<f64> = per_tree.iter().map(|v| v[j]).collect();
            pairwise_sum(&col) / col.len() as f64
        })
        .collect())
}

/// Forest permutation importance of feature `j`; agrees with `rfpim_all(..)[j]`.
pub fn rfpim(forest: &Forest, data: &CompleteDataset, j: usize, stream: Stream) -> Result<f64> {
    check_data(forest, data, j)?;
    let values: Vec<f64> = exec::map_range(forest.trees().len(), |t| {
        let tree = &forest.trees()[t];
        let oob = tree.oob_rows();
        if oob.is_empty() {
            return None;
        }
        let mut rng = stream.child(t as u64).child(j as u64).rng();
        tree_importance_inner(tree, t, j, data, &mut rng, None, &oob).ok()
    })
    .into_iter()
    .flatten()
    .collect();
    if values.is_empty() {
        return Err(Error::NoOobTrees);
    }
    Ok(pairwise_sum(&values) / values.len() as f64)
}

/// Default jackknife subsample size, `round(sqrt(n))`.
pub fn default_subsample_size(n: usize) -> usize {
    (n as f64).sqrt().round() as usize
}

/// Delete-d jackknife variance from the full-data value and the subsample values.
pub fn delete_d_variance(full: f64, subsample_values: &[f64], n: usize, b: usize) -> Result<f64> {
    if b >= n {
        return Err(Error::InvalidParameter(format!("subsample size {b} must be < n = {n}")));
    }
    if subsample_values.is_empty() {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let k = subsample_values.len();
    let sq: Vec<f64> = subsample_values.iter().map(|v| (v - full) * (v - full)).collect();
    Ok(b as f64 / ((n - b) as f64 * k as f64) * pairwise_sum(&sq))
}

/// Full-data importances and subsample importances for every feature.
///
/// Subsample `k` uses rows drawn from `stream.child(1).child(k)` and a fresh
/// forest seeded from that stream.
pub struct JackknifeRun {
    pub full: Vec<f64>,
    /// `subsamples[k][j]`.
    pub subsamples: Vec<Vec<f64>>,
    pub n: usize,
    pub b: usize,
}

impl JackknifeRun {
    pub fn variance(&self, j: usize) -> f64 {
        let vals: Vec<f64> = self.subsamples.iter().map(|s| s[j]).collect();
        delete_d_variance(self.full[j], &vals, self.n, self.b).expect("validated at construction")
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.full.len()).map(|j| self.variance(j)).collect()
    }
}

fn check_jackknife(n: usize, k: usize, b: usize) -> Result<()> {
    if b >= n {
        return Err(Error::InvalidParameter(format!("subsample size {b} must be < n = {n}")));
    }
    if b < 2 {
        return Err(Error::InvalidParameter(format!("subsample size {b} must be >= 2")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    Ok(())
}

/// Run the full-data fit plus `k` refits on size-`b` subsamples drawn without replacement.
pub fn jackknife_run(data: &CompleteDataset, cfg: &ForestConfig, k: usize, b: usize, stream: Stream) -> Result<JackknifeRun> {
    let n = data.n();
    check_jackknife(n, k, b)?;
    let full_stream = stream.child(0);
    let forest = fit_forest(data, &cfg.with_seed(full_stream.child(0).key()))?;
    let full = rfpim_all(&forest, data, full_stream.child(1))?;
    let sub_root = stream.child(1);
    let subsamples = exec::try_map_range(k, |kk| {
        let s = sub_root.child(kk as u64);
        let mut rng = s.child(0).rng();
        let mut rows = sample_indices(&mut rng, n, b).into_vec();
        rows.sort_unstable();
        let sub = data.subset_rows(&rows);
        let forest = fit_forest(&sub, &cfg.with_seed(s.child(1).key()))?;
        rfpim_all(&forest, &sub, s.child(2))
    })?;
    Ok(JackknifeRun { full, subsamples, n, b })
}

/// Delete-d jackknife variance of the importance of feature `j`.
pub fn jackknife_variance(
    data: &CompleteDataset,
    cfg: &ForestConfig,
    j: usize,
    k: usize,
    b: usize,
    stream: Stream,
) -> Result<f64> {
    if j >= data.p() {
        return Err(Error::InvalidParameter(format!("feature {j} out of range")));
    }
    Ok(jackknife_run(data, cfg, k, b, stream)?.variance(j))
}

/// Symmetric normal interval `point -/+ z_{1-alpha/2} * sqrt(variance)`.
pub fn ishwaran_ci(point: f64, variance: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(variance >= 0.0) {
        return Err(Error::InvalidParameter(format!("variance must be >= 0, got {variance}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let half = z_two_sided(alpha) * variance.sqrt();
    Ok((point - half, point + half))
}

/// Importance point estimates, jackknife variances and intervals for all features.
pub fn estimate_importance(
    data: &CompleteDataset,
    cfg: &ForestConfig,
    k: usize,
    b: usize,
    alpha: f64,
    stream: Stream,
) -> Result<Vec<ImportanceEstimate>> {
    let run = jackknife_run(data, cfg, k, b, stream)?;
    run.full
        .iter()
        .enumerate()
        .map(|(j, &point)| {
            let variance = run.variance(j);
            let (ci_lower, ci_upper) = ishwaran_ci(point, variance, alpha)?;
            Ok(ImportanceEstimate {
                feature: j,
                point,
                variance,
                ci_lower,
                ci_upper,
                alpha,
                k,
                b,
            })
        })
        .collect()
}
