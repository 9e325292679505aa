//! Chained-equation imputers with predictive mean matching.
//!
//! * [`ImputationMethod::PmmChained`] regresses each incomplete column on the
//!   others by least squares, refitting on a bootstrap of the observed rows in
//!   every visit, and can produce several independent imputations.
//! * [`ImputationMethod::RfChained`] fits a Random Forest per incomplete column
//!   and matches on out-of-bag predictions; it produces one imputation.
//!
//! Both only ever copy observed values into missing cells.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CompleteDataset, IncompleteDataset, Matrix};
use crate::error::{Error, Result};
use crate::exec;
use crate::forest::{fit_forest, ForestConfig};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationMethod {
    PmmChained,
    RfChained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputerConfig {
    pub method: ImputationMethod,
    /// Number of imputations (regression imputer only).
    pub r: usize,
    /// Chained sweeps; `None` uses 5 for the regression imputer and 10 for the forest imputer.
    pub maxit: Option<usize>,
    pub pmm_k: usize,
    pub rf_trees: usize,
    /// Minimum leaf size of the imputation forests.
    pub rf_nodesize: usize,
    /// Use the response as an additional predictor in every imputation model.
    pub use_response: bool,
    pub seed: u64,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        ImputerConfig {
            method: ImputationMethod::PmmChained,
            r: 5,
            maxit: None,
            pmm_k: 5,
            rf_trees: 200,
            rf_nodesize: 5,
            use_response: true,
            seed: 0,
        }
    }
}

impl ImputerConfig {
    pub fn resolved_maxit(&self) -> usize {
        self.maxit.unwrap_or(match self.method {
            ImputationMethod::PmmChained => 5,
            ImputationMethod::RfChained => 10,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidParameter("R must be >= 1".into()));
        }
        if self.pmm_k == 0 {
            return Err(Error::InvalidParameter("pmm_k must be >= 1".into()));
        }
        if self.resolved_maxit() == 0 {
            return Err(Error::InvalidParameter("maxit must be >= 1".into()));
        }
        if self.rf_trees == 0 || self.rf_nodesize == 0 {
            return Err(Error::InvalidParameter("rf_trees and rf_nodesize must be >= 1".into()));
        }
        Ok(())
    }
}

/// Completed datasets plus the mask they were imputed from.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputationSet {
    pub completed: Vec<CompleteDataset>,
    pub source_mask: Vec<bool>,
}

/// Pick one of the `k` observed values whose predictions are closest to
/// `pred_missing` (ties go to the lower row index).
pub fn pmm_match(pred_missing: f64, preds_obs: &[f64], values_obs: &[f64], k: usize, rng: &mut impl Rng) -> Result<f64> {
    if preds_obs.is_empty() {
        return Err(Error::Imputation("empty donor pool".into()));
    }
    if preds_obs.len() != values_obs.len() {
        return Err(Error::Dimension("donor predictions and values differ in length".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("pmm_k must be >= 1".into()));
    }
    let k = k.min(preds_obs.len());
    let mut keyed: Vec<(f64, usize)> = preds_obs
        .iter()
        .enumerate()
        .map(|(i, &p)| ((p - pred_missing).abs(), i))
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, by_key);
    }
    let donors = &mut keyed[..k];
    donors.sort_unstable_by(by_key);
    let pick = donors[rng.random_range(0..k)].1;
    Ok(values_obs[pick])
}

/// Impute all masked cells of `incomplete`.
pub fn impute(incomplete: &IncompleteDataset, cfg: &ImputerConfig) -> Result<ImputationSet> {
    cfg.validate()?;
    let targets = check_columns(incomplete, cfg.pmm_k)?;
    let root = Stream::new(cfg.seed);
    let completed = match cfg.method {
        ImputationMethod::PmmChained => exec::try_map_range(cfg.r, |r| {
            impute_regression_pmm(incomplete, cfg, &targets, root.child(r as u64))
        })?,
        ImputationMethod::RfChained => vec![impute_forest_pmm(incomplete, cfg, &targets, root.child(0))?],
    };
    Ok(ImputationSet {
        completed,
        source_mask: incomplete.mask().to_vec(),
    })
}

/// Columns with missing cells, after checking each has enough donors.
fn check_columns(ds: &IncompleteDataset, pmm_k: usize) -> Result<Vec<usize>> {
    let need = (pmm_k + 1).max(5);
    let mut targets = Vec::new();
    for j in 0..ds.p() {
        let observed = ds.column_mask(j).iter().filter(|&&m| m).count();
        if observed == ds.n() {
            continue;
        }
        if observed == 0 {
            return Err(Error::Imputation(format!("column `{}` is entirely missing", ds.names[j])));
        }
        if observed < need {
            return Err(Error::Imputation(format!(
                "column `{}` has {observed} observed values, need at least {need}",
                ds.names[j]
            )));
        }
        targets.push(j);
    }
    Ok(targets)
}

/// Every missing cell starts as a uniform draw from its column's observed values.
fn initial_fill(ds: &IncompleteDataset, rng: &mut impl Rng) -> Matrix {
    let observed: Vec<Vec<f64>> = (0..ds.p()).map(|j| ds.observed_values(j)).collect();
    ds.fill_features(|_, j| observed[j][rng.random_range(0..observed[j].len())])
}

fn finish(ds: &IncompleteDataset, features: Matrix) -> CompleteDataset {
    CompleteDataset {
        features,
        response: ds.response().to_vec(),
        names: ds.names.clone(),
        target: ds.target.clone(),
    }
}

/// Predictor matrix for target column `j`: every other column, optionally the response.
fn predictors(current: &Matrix, response: &[f64], j: usize, use_response: bool) -> Matrix {
    let others: Vec<usize> = (0..current.ncols()).filter(|&c| c != j).collect();
    let mut cols: Vec<Vec<f64>> = others.iter().map(|&c| current.col(c).to_vec()).collect();
    if use_response {
        cols.push(response.to_vec());
    }
    Matrix::from_columns(cols).expect("columns share a length")
}

/// Least squares with intercept and a small ridge on the normal equations.
fn least_squares(x: &Matrix, rows: &[usize], y: &[f64]) -> DVector<f64> {
    let q = x.ncols() + 1;
    let design = DMatrix::from_fn(rows.len(), q, |r, c| if c == 0 { 1.0 } else { x.get(rows[r], c - 1) });
    let target = DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]));
    let mut xtx = design.tr_mul(&design);
    for c in 0..q {
        xtx[(c, c)] += 1e-5 * xtx[(c, c)].max(1e-12);
    }
    let xty = design.tr_mul(&target);
    match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xtx
            .svd(true, true)
            .solve(&xty, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(q)),
    }
}

fn linear_predict(x: &Matrix, i: usize, beta: &DVector<f64>) -> f64 {
    beta[0] + (0..x.ncols()).map(|c| x.get(i, c) * beta[c + 1]).sum::<f64>()
}

fn impute_regression_pmm(ds: &IncompleteDataset, cfg: &ImputerConfig, targets: &[usize], stream: Stream) -> Result<CompleteDataset> {
    let mut rng = stream.rng();
    let mut current = initial_fill(ds, &mut rng);
    for _sweep in 0..cfg.resolved_maxit() {
        for &j in targets {
            let observed = ds.observed_rows(j);
            let missing: Vec<usize> = (0..ds.n()).filter(|&i| !ds.is_observed(i, j)).collect();
            let x = predictors(&current, ds.response(), j, cfg.use_response);
            let boot: Vec<usize> = (0..observed.len())
                .map(|_| observed[rng.random_range(0..observed.len())])
                .collect();
            let beta = least_squares(&x, &boot, current.col(j));
            let preds_obs: Vec<f64> = observed.iter().map(|&i| linear_predict(&x, i, &beta)).collect();
            let values_obs: Vec<f64> = observed.iter().map(|&i| ds.get(i, j)).collect();
            for &m in &missing {
                let pred = linear_predict(&x, m, &beta);
                let v = pmm_match(pred, &preds_obs, &values_obs, cfg.pmm_k, &mut rng)?;
                current.set(m, j, v);
            }
        }
    }
    Ok(finish(ds, current))
}

fn impute_forest_pmm(ds: &IncompleteDataset, cfg: &ImputerConfig, targets: &[usize], stream: Stream) -> Result<CompleteDataset> {
    let mut rng = stream.child(0).rng();
    let mut current = initial_fill(ds, &mut rng);
    let n_pred = ds.p() - 1 + usize::from(cfg.use_response);
    let mut previous_change = f64::INFINITY;
    for sweep in 0..cfg.resolved_maxit() {
        let snapshot = current.clone();
        let sweep_stream = stream.child(1 + sweep as u64);
        let mut change = 0.0;
        for &j in targets {
            let observed = ds.observed_rows(j);
            let missing: Vec<usize> = (0..ds.n()).filter(|&i| !ds.is_observed(i, j)).collect();
            let x = predictors(&current, ds.response(), j, cfg.use_response);
            let train = CompleteDataset::new(
                x.select_rows(&observed),
                observed.iter().map(|&i| ds.get(i, j)).collect(),
            )?;
            let forest_cfg = ForestConfig {
                ntree: cfg.rf_trees,
                mtry: Some(((n_pred as f64).sqrt().floor() as usize).clamp(1, n_pred.max(1))),
                nodesize: cfg.rf_nodesize,
                sample_with_replacement: true,
                seed: sweep_stream.child(j as u64).key(),
            };
            let forest = fit_forest(&train, &forest_cfg)?;
            let preds_obs: Vec<f64> = forest
                .oob_predictions(&train)
                .into_iter()
                .enumerate()
                .map(|(r, p)| p.unwrap_or_else(|| forest.predict(&train.features.row(r))))
                .collect();
            let values_obs = &train.response;
            for &m in &missing {
                let pred = forest.predict(&x.row(m));
                let v = pmm_match(pred, &preds_obs, values_obs, cfg.pmm_k, &mut rng)?;
                change += (v - current.get(m, j)).abs();
                current.set(m, j, v);
            }
        }
        if sweep > 0 && change > previous_change {
            // diverging: keep the previous sweep's imputation
            current = snapshot;
            break;
        }
        previous_change = change;
    }
    Ok(finish(ds, current))
}
