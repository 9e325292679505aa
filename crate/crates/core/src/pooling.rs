//! Rubin's-rule pooling of per-imputation (point, variance) pairs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::importance::ishwaran_ci;
use crate::stats::{mean, pairwise_sum};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PooledEstimate {
    pub mean_point: f64,
    pub within_var: f64,
    pub between_var: f64,
    pub total_var: f64,
    pub r: usize,
}

/// Combine `R >= 2` imputation-specific estimates.
///
/// `total_var = within_var + (1 + 1/R) * between_var`, with `between_var` the
/// sample variance (divisor `R - 1`) of the points.
pub fn pool(points: &[f64], variances: &[f64]) -> Result<PooledEstimate> {
    let r = points.len();
    if r < 2 {
        return Err(Error::TooFewImputations(r));
    }
    if variances.len() != r {
        return Err(Error::Dimension(format!("{r} points but {} variances", variances.len())));
    }
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidParameter(format!("negative variance {v}")));
    }
    let mean_point = mean(points);
    let within_var = mean(variances);
    let sq: Vec<f64> = points.iter().map(|p| (p - mean_point) * (p - mean_point)).collect();
    let between_var = pairwise_sum(&sq) / (r - 1) as f64;
    let total_var = within_var + (1.0 + 1.0 / r as f64) * between_var;
    Ok(PooledEstimate {
        mean_point,
        within_var,
        between_var,
        total_var,
        r,
    })
}

/// Normal interval around the pooled mean using the total variance.
pub fn rubin_ci(est: &PooledEstimate, alpha: f64) -> Result<(f64, f64)> {
    ishwaran_ci(est.mean_point, est.total_var, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let e = pool(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]).unwrap();
        assert!((e.mean_point - 2.0).abs() < 1e-12);
        assert!((e.within_var - 0.2).abs() < 1e-12);
        assert!((e.between_var - 1.0).abs() < 1e-12);
        assert!((e.total_var - (0.2 + 4.0 / 3.0)).abs() < 1e-12);
        let (lo, hi) = rubin_ci(&e, 0.05).unwrap();
        assert!((lo + 0.426981).abs() < 1e-5 && (hi - 4.426981).abs() < 1e-5);
    }

    #[test]
    fn identical_imputations_have_no_between_variance() {
        let e = pool(&[0.4; 5], &[0.02; 5]).unwrap();
        assert_eq!(e.between_var, 0.0);
        assert!((e.total_var - 0.02).abs() < 1e-15);
        let z = pool(&[1.5, 1.5], &[0.0, 0.0]).unwrap();
        assert_eq!(rubin_ci(&z, 0.05).unwrap(), (1.5, 1.5));
    }

    #[test]
    fn errors() {
        assert!(matches!(pool(&[1.0], &[0.1]), Err(Error::TooFewImputations(1))));
        assert!(pool(&[1.0, 2.0], &[0.1, -0.1]).is_err());
        assert!(pool(&[1.0, 2.0], &[0.1]).is_err());
        let e = pool(&[1.0, 2.0], &[0.1, 0.1]).unwrap();
        assert!(rubin_ci(&e, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn pooling_invariants(
            pairs in prop::collection::vec((-5.0f64..5.0, 0.0f64..2.0), 2..10),
            rot in 0usize..10,
        ) {
            let points: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let vars: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let e = pool(&points, &vars).unwrap();
            prop_assert!(e.total_var >= e.within_var);
            prop_assert!(e.between_var >= 0.0);
            let all_equal = points.iter().all(|&p| p == points[0]);
            prop_assert_eq!(e.total_var == e.within_var, all_equal || e.between_var == 0.0);

            let k = rot % points.len();
            let mut rp = points.clone();
            let mut rv = vars.clone();
            rp.rotate_left(k);
            rv.rotate_left(k);
            let f = pool(&rp, &rv).unwrap();
            prop_assert!((e.mean_point - f.mean_point).abs() < 1e-12);
            prop_assert!((e.total_var - f.total_var).abs() < 1e-12);

            let (lo, hi) = rubin_ci(&e, 0.05).unwrap();
            let (wlo, whi) = ishwaran_ci(e.mean_point, e.within_var, 0.05).unwrap();
            prop_assert!(hi - lo >= whi - wlo - 1e-12);
            prop_assert!(((lo + hi) / 2.0 - e.mean_point).abs() < 1e-9);
        }
    }
}
