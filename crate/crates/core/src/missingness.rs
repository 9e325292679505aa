//! MCAR and MAR amputation of complete datasets.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CompleteDataset, IncompleteDataset};
use crate::error::{Error, Result};
use crate::stats::median;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mechanism {
    Mcar,
    Mar,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "MCAR",
            Mechanism::Mar => "MAR",
        })
    }
}

/// What to ampute; `cond_feature` is 0-based and only read for MAR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmputationSpec {
    pub mechanism: Mechanism,
    pub rate: f64,
    pub cond_feature: usize,
}

impl AmputationSpec {
    pub fn apply(&self, data: CompleteDataset, rng: &mut impl Rng) -> Result<IncompleteDataset> {
        match self.mechanism {
            Mechanism::Mcar => ampute_mcar(data, self.rate, rng),
            Mechanism::Mar => ampute_mar(data, self.rate, self.cond_feature, rng),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("missing rate must be in [0, 1), got {rate}")))
    }
}

/// Number of cells to mask out of `pool` candidates; rounds half away from zero.
pub fn masked_count(rate: f64, pool: usize) -> usize {
    ((rate * pool as f64).round() as usize).min(pool)
}

fn mask_columns(
    mask: &mut [bool],
    n: usize,
    columns: impl Iterator<Item = usize>,
    candidates: &[usize],
    count: usize,
    rng: &mut impl Rng,
) {
    for j in columns {
        for k in sample_indices(rng, candidates.len(), count) {
            mask[j * n + candidates[k]] = false;
        }
    }
}

/// Mask exactly `round(rate * n)` uniformly chosen rows in every column.
pub fn ampute_mcar(data: CompleteDataset, rate: f64, rng: &mut impl Rng) -> Result<IncompleteDataset> {
    check_rate(rate)?;
    let (n, p) = (data.n(), data.p());
    let rows: Vec<usize> = (0..n).collect();
    let mut mask = vec![true; n * p];
    mask_columns(&mut mask, n, 0..p, &rows, masked_count(rate, n), rng);
    IncompleteDataset::with_mask(data, mask)
}

/// Mask `round(rate * |C|)` rows of `C` in every column except `cond_feature`,
/// where `C` holds the rows strictly below the median of `cond_feature`.
///
/// If `C` is empty the other columns are amputed MCAR instead.
pub fn ampute_mar(data: CompleteDataset, rate: f64, cond_feature: usize, rng: &mut impl Rng) -> Result<IncompleteDataset> {
    check_rate(rate)?;
    let (n, p) = (data.n(), data.p());
    if cond_feature >= p {
        return Err(Error::InvalidParameter(format!(
            "conditioning feature {} out of range for p = {p}",
            cond_feature + 1
        )));
    }
    let col = data.features.col(cond_feature);
    let med = median(col);
    let mut candidates: Vec<usize> = (0..n).filter(|&i| col[i] < med).collect();
    if candidates.is_empty() {
        candidates = (0..n).collect();
    }
    let count = masked_count(rate, candidates.len());
    let mut mask = vec![true; n * p];
    mask_columns(&mut mask, n, (0..p).filter(|&j| j != cond_feature), &candidates, count, rng);
    IncompleteDataset::with_mask(data, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Matrix;
    use crate::rng::Stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn data(n: usize, p: usize, seed: u64) -> CompleteDataset {
        let mut rng = Stream::new(seed).rng();
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random()).collect()).collect();
        CompleteDataset::new(Matrix::from_columns(cols).unwrap(), (0..n).map(|i| i as f64).collect()).unwrap()
    }

    fn column_missing(ds: &IncompleteDataset, j: usize) -> usize {
        ds.column_mask(j).iter().filter(|&&m| !m).count()
    }

    #[test]
    fn zero_rate_masks_nothing() {
        let mut rng = Stream::new(1).rng();
        assert_eq!(ampute_mcar(data(20, 3, 1), 0.0, &mut rng).unwrap().missing_count(), 0);
        assert_eq!(ampute_mar(data(20, 3, 1), 0.0, 1, &mut rng).unwrap().missing_count(), 0);
    }

    #[test]
    fn mcar_fixed_count_per_column() {
        let ds = ampute_mcar(data(10, 4, 2), 0.3, &mut Stream::new(2).rng()).unwrap();
        for j in 0..4 {
            assert_eq!(column_missing(&ds, j), 3);
        }
        assert_eq!(ds.missing_count(), 12);
        let tiny = ampute_mcar(data(2, 3, 2), 0.5, &mut Stream::new(2).rng()).unwrap();
        for j in 0..3 {
            assert_eq!(column_missing(&tiny, j), 1);
        }
    }

    #[test]
    fn rate_and_index_errors() {
        let mut rng = Stream::new(1).rng();
        assert!(ampute_mcar(data(5, 2, 1), 1.0, &mut rng).is_err());
        assert!(ampute_mcar(data(5, 2, 1), -0.1, &mut rng).is_err());
        assert!(ampute_mar(data(5, 2, 1), 0.2, 2, &mut rng).is_err());
    }

    #[test]
    fn mar_constant_conditioning_column_falls_back_to_mcar() {
        let mut d = data(20, 3, 4);
        d.features.col_mut(1).fill(0.7);
        let ds = ampute_mar(d, 0.3, 1, &mut Stream::new(4).rng()).unwrap();
        assert_eq!(column_missing(&ds, 1), 0);
        assert_eq!(column_missing(&ds, 0), 6);
        assert_eq!(column_missing(&ds, 2), 6);
    }

    #[test]
    fn mar_counts_follow_candidate_set() {
        // 11 rows, median is the 6th order statistic -> 5 rows strictly below
        let ds = ampute_mar(data(11, 3, 6), 0.5, 0, &mut Stream::new(6).rng()).unwrap();
        assert_eq!(column_missing(&ds, 0), 0);
        assert_eq!(column_missing(&ds, 1), 3);
        assert_eq!(column_missing(&ds, 2), 3);
    }

    proptest! {
        #[test]
        fn mar_masks_only_below_median_rows(seed in any::<u64>(), rate in 0.0f64..0.95, cond in 0usize..4, n in 4usize..40) {
            let d = data(n, 4, seed);
            let col = d.features.col(cond).to_vec();
            let med = median(&col);
            let y = d.response.clone();
            let ds = ampute_mar(d, rate, cond, &mut Stream::new(seed).rng()).unwrap();
            let below = col.iter().filter(|&&v| v < med).count();
            prop_assert_eq!(column_missing(&ds, cond), 0);
            for j in (0..4).filter(|&j| j != cond) {
                prop_assert_eq!(column_missing(&ds, j), masked_count(rate, below));
                for i in 0..n {
                    if !ds.is_observed(i, j) {
                        prop_assert!(col[i] < med);
                    }
                }
            }
            prop_assert_eq!(ds.response(), &y[..]);
        }

        #[test]
        fn mcar_counts_are_deterministic(seed in any::<u64>(), rate in 0.0f64..0.99, n in 2usize..50) {
            let ds = ampute_mcar(data(n, 3, seed), rate, &mut Stream::new(seed).rng()).unwrap();
            for j in 0..3 {
                prop_assert_eq!(column_missing(&ds, j), masked_count(rate, n));
            }
            let again = ampute_mcar(data(n, 3, seed), rate, &mut Stream::new(seed).rng()).unwrap();
            prop_assert_eq!(ds.mask(), again.mask());
        }
    }
}
