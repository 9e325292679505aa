//! The twelve benchmark regression functions, noise-feature padding and the
//! Monte-Carlo ground-truth importance oracle.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CompleteDataset, Matrix};
use crate::error::{Error, Result};
use crate::exec;
use crate::forest::{fit_forest, ForestConfig};
use crate::importance::rfpim_all;
use crate::rng::Stream;
use crate::stats::pairwise_sum;

/// One of the twelve data-generating functions, numbered 1 through 12.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GeneratorId(u8);

impl TryFrom<u8> for GeneratorId {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        GeneratorId::new(id)
    }
}

impl From<GeneratorId> for u8 {
    fn from(g: GeneratorId) -> u8 {
        g.0
    }
}

impl std::fmt::Display for GeneratorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug)]
enum FeatureLaw {
    Uniform(f64, f64),
    StdNormal,
}

impl FeatureLaw {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            FeatureLaw::Uniform(lo, hi) => lo + (hi - lo) * rng.random::<f64>(),
            FeatureLaw::StdNormal => StandardNormal.sample(rng),
        }
    }

    fn contains(self, x: f64) -> bool {
        match self {
            FeatureLaw::Uniform(lo, hi) => x >= lo && x <= hi,
            FeatureLaw::StdNormal => x.is_finite(),
        }
    }
}

impl GeneratorId {
    pub const ALL: [GeneratorId; 12] = [
        GeneratorId(1),
        GeneratorId(2),
        GeneratorId(3),
        GeneratorId(4),
        GeneratorId(5),
        GeneratorId(6),
        GeneratorId(7),
        GeneratorId(8),
        GeneratorId(9),
        GeneratorId(10),
        GeneratorId(11),
        GeneratorId(12),
    ];

    pub fn new(id: u8) -> Result<Self> {
        if (1..=12).contains(&id) {
            Ok(GeneratorId(id))
        } else {
            Err(Error::InvalidParameter(format!("generator id {id} not in 1..=12")))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Highest feature index (1-based) the regression function reads.
    pub fn arity(self) -> usize {
        match self.0 {
            1 => 5,
            2 | 3 => 4,
            4 | 5 => 10,
            6 => 8,
            7 => 9,
            8..=10 => 6,
            11 => 3,
            _ => 0,
        }
    }

    /// 0-based indices of the features the regression function depends on.
    pub fn signal_features(self) -> Vec<usize> {
        let one_based: &[usize] = match self.0 {
            1 => &[1, 2, 3, 4, 5],
            2 | 3 => &[1, 2, 3, 4],
            4 => &[1, 2, 3, 4, 6, 7, 8, 10],
            5 => &[1, 2, 4, 6, 8, 9, 10],
            6 => &[1, 2, 3, 4, 6, 8],
            7 => &[1, 2, 4, 8, 9],
            8..=10 => &[1, 2, 3, 4, 5, 6],
            11 => &[1, 2, 3],
            _ => &[],
        };
        one_based.iter().map(|j| j - 1).collect()
    }

    /// Law of the 0-based feature `j`; padding columns follow the ambient law.
    fn feature_law(self, j: usize) -> FeatureLaw {
        match self.0 {
            1 => FeatureLaw::Uniform(0.0, 1.0),
            2 | 3 => match j {
                0 => FeatureLaw::Uniform(0.0, 100.0),
                1 => FeatureLaw::Uniform(40.0 * PI, 560.0 * PI),
                3 => FeatureLaw::Uniform(1.0, 11.0),
                _ => FeatureLaw::Uniform(0.0, 1.0),
            },
            8 => FeatureLaw::Uniform(0.5, 1.0),
            12 => FeatureLaw::StdNormal,
            _ => FeatureLaw::Uniform(-1.0, 1.0),
        }
    }

    /// Standard deviation of the additive (or, for function 7, latent) noise.
    pub fn noise_sd(self) -> f64 {
        match self.0 {
            1 | 12 => 1.0,
            2 => 125.0,
            _ => 0.1,
        }
    }

    /// The response given features `x` (0-based) and a noise draw `eps`.
    fn response(self, x: &[f64], eps: f64) -> f64 {
        if self.0 == 7 {
            let latent = x[0] + x[3].powi(3) + x[8] + (x[1] * x[7]).sin() + eps;
            return if latent > 0.38 { 1.0 } else { 0.0 };
        }
        self.mean(x) + eps
    }

    /// Noiseless regression function.
    fn mean(self, x: &[f64]) -> f64 {
        match self.0 {
            1 => 10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4],
            2 => (x[0].powi(2) + (x[1] * x[2] - 1.0 / (x[1] * x[3])).powi(2)).sqrt(),
            3 => ((x[1] * x[2] - 1.0 / (x[1] * x[3])) / x[0]).atan(),
            4 => x[0] * x[1] + x[2].powi(2) + x[3] * x[6] + x[7] * x[9] - x[5].powi(2),
            5 => {
                let step1 = if x[0] > 0.0 { 1.0 } else { 0.0 };
                let step2 = if x[3] + x[5] - x[7] - x[8] > 1.0 + x[9] { 1.0 } else { 0.0 };
                step1 + x[1].powi(3) + step2 + (-x[1].powi(2)).exp()
            }
            6 => x[0].powi(2) + 3.0 * x[1].powi(2) * x[2] * (-x[3].abs()).exp() + x[5] - x[7],
            7 => {
                let latent = x[0] + x[3].powi(3) + x[8] + (x[1] * x[7]).sin();
                if latent > 0.38 {
                    1.0
                } else {
                    0.0
                }
            }
            8 => (x[0] + x[1] * x[2]).ln() - (x[3] / x[4] - x[5]).exp(),
            9 => x[0] * x[1].powi(2) * x[2].abs().sqrt() + (x[3] - x[4] * x[5]).floor(),
            10 => {
                x[2] * (x[0] + 1.0).powf(x[1].abs())
                    - (x[4].powi(2) / (x[3].abs() + x[4].abs() + x[5].abs())).sqrt()
            }
            11 => (x[0] - x[1]).cos() + (x[0] * x[2]).asin() - (x[1] - x[2].powi(2)).atan(),
            _ => 0.0,
        }
    }
}

/// Draw `n` rows with `p` features from generator `gen`.
pub fn generate(gen: GeneratorId, n: usize, p: usize, rng: &mut impl Rng) -> Result<CompleteDataset> {
    if p < gen.arity() {
        return Err(Error::InvalidParameter(format!(
            "generator {gen} needs p >= {}, got {p}",
            gen.arity()
        )));
    }
    if n < 2 {
        return Err(Error::TooSmall(format!("n must be >= 2, got {n}")));
    }
    let noise = Normal::new(0.0, gen.noise_sd()).expect("positive sd");
    let mut features = Matrix::zeros(n, p);
    let mut response = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, x) in row.iter_mut().enumerate() {
            *x = gen.feature_law(j).draw(rng);
            features.set(i, j, *x);
        }
        let eps = noise.sample(rng);
        response.push(gen.response(&row, eps));
    }
    CompleteDataset::new(features, response)
}

/// Noiseless regression function at `x`.
///
/// For function 7 this is the indicator evaluated without the latent noise.
pub fn true_regression(gen: GeneratorId, x: &[f64]) -> Result<f64> {
    if x.len() < gen.arity() {
        return Err(Error::Dimension(format!(
            "generator {gen} needs at least {} coordinates",
            gen.arity()
        )));
    }
    for (j, &v) in x.iter().enumerate() {
        if !gen.feature_law(j).contains(v) {
            return Err(Error::OutOfSupport(format!("x{} = {v} for generator {gen}", j + 1)));
        }
    }
    Ok(gen.mean(x))
}

/// Monte-Carlo ground-truth importances for one generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub generator: GeneratorId,
    pub scores: Vec<f64>,
    pub n_ref: usize,
    pub reps: usize,
    pub seed: u64,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.scores.len()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generator", "feature", "score", "reps", "n_ref", "seed"])?;
        for (j, s) in self.scores.iter().enumerate() {
            w.write_record([
                self.generator.to_string(),
                (j + 1).to_string(),
                s.to_string(),
                self.reps.to_string(),
                self.n_ref.to_string(),
                self.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Other(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            generator: u8,
            feature: usize,
            score: f64,
            reps: usize,
            n_ref: usize,
            seed: u64,
        }
        let mut rdr = csv::Reader::from_reader(input);
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let first = rows.first().ok_or_else(|| Error::Other("empty ground-truth file".into()))?;
        let mut scores = vec![0.0; rows.len()];
        for r in &rows {
            if r.feature == 0 || r.feature > rows.len() {
                return Err(Error::Other(format!("bad feature index {}", r.feature)));
            }
            scores[r.feature - 1] = r.score;
        }
        Ok(GroundTruth {
            generator: GeneratorId::new(first.generator)?,
            scores,
            n_ref: first.n_ref,
            reps: first.reps,
            seed: first.seed,
        })
    }
}

/// Average the forest importance over `reps` fresh complete datasets of size
/// `n_ref`; features outside the generator's signal set score exactly zero.
///
/// Repetition `r` draws from `Stream::new(seed).child(r)`.
pub fn ground_truth_importance(
    gen: GeneratorId,
    n_ref: usize,
    p: usize,
    reps: usize,
    forest_cfg: &ForestConfig,
    seed: u64,
) -> Result<GroundTruth> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    let root = Stream::new(seed);
    let signal = gen.signal_features();
    let per_rep = exec::try_map_range(reps, |r| {
        let s = root.child(r as u64);
        let data = generate(gen, n_ref, p, &mut s.child(0).rng())?;
        if signal.is_empty() {
            return Ok(vec![0.0; p]);
        }
        let forest = fit_forest(&data, &forest_cfg.with_seed(s.child(1).key()))?;
        rfpim_all(&forest, &data, s.child(2))
    })?;
    let mut scores = vec![0.0; p];
    for &j in &signal {
        let col: Vec<f64> = per_rep.iter().map(|v| v[j]).collect();
        scores[j] = pairwise_sum(&col) / reps as f64;
    }
    Ok(GroundTruth {
        generator: gen,
        scores,
        n_ref,
        reps,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_ids() {
        assert!(GeneratorId::new(0).is_err());
        assert!(GeneratorId::new(13).is_err());
        assert_eq!(GeneratorId::ALL.len(), 12);
        let total_signal: usize = GeneratorId::ALL.iter().map(|g| g.signal_features().len()).sum();
        assert_eq!(total_signal, 60);
        for g in GeneratorId::ALL {
            assert!(g.signal_features().iter().all(|&j| j < g.arity()));
        }
    }

    #[test]
    fn function_one_hand_values() {
        let g = GeneratorId::new(1).unwrap();
        let mut x = vec![0.5; 20];
        let v = true_regression(g, &x).unwrap();
        assert!((v - (10.0 * (PI / 4.0).sin() + 5.0 + 2.5)).abs() < 1e-12);
        assert!((v - 14.5711).abs() < 1e-4);
        x[0] = 0.0;
        x[3] = 0.0;
        x[4] = 0.0;
        assert_eq!(true_regression(g, &x).unwrap(), 0.0);
    }

    #[test]
    fn other_hand_values() {
        let g4 = GeneratorId::new(4).unwrap();
        assert_eq!(true_regression(g4, &[0.0; 20]).unwrap(), 0.0);
        let g8 = GeneratorId::new(8).unwrap();
        let v = true_regression(g8, &[1.0; 20]).unwrap();
        assert!((v - (2f64.ln() - 1.0)).abs() < 1e-12);
        assert!((v + 0.30685).abs() < 1e-5);
        let g12 = GeneratorId::new(12).unwrap();
        assert_eq!(true_regression(g12, &[3.0, -2.0, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn out_of_support_and_arity_errors() {
        let g1 = GeneratorId::new(1).unwrap();
        assert!(matches!(true_regression(g1, &[1.5; 20]), Err(Error::OutOfSupport(_))));
        assert!(true_regression(g1, &[0.5; 3]).is_err());
        let g4 = GeneratorId::new(4).unwrap();
        assert!(generate(g4, 10, 9, &mut Stream::new(1).rng()).is_err());
        assert!(generate(g4, 1, 20, &mut Stream::new(1).rng()).is_err());
    }

    #[test]
    fn function_twelve_is_pure_noise() {
        let g = GeneratorId::new(12).unwrap();
        let data = generate(g, 2000, 20, &mut Stream::new(3).rng()).unwrap();
        let m = crate::stats::mean(&data.response);
        let v = crate::stats::sample_variance(&data.response);
        assert!(m.abs() < 0.1 && (v - 1.0).abs() < 0.1);
        let truth = ground_truth_importance(g, 50, 20, 2, &ForestConfig { ntree: 5, ..Default::default() }, 1).unwrap();
        assert_eq!(truth.scores, vec![0.0; 20]);
    }

    #[test]
    fn samples_stay_in_support() {
        for g in GeneratorId::ALL {
            let data = generate(g, 200, 20, &mut Stream::new(u64::from(g.id())).rng()).unwrap();
            for i in 0..data.n() {
                let row = data.features.row(i);
                assert!(true_regression(g, &row).is_ok(), "generator {g} row {i}");
                assert!(data.response[i].is_finite());
            }
            if g.id() == 7 {
                assert!(data.response.iter().all(|&y| y == 0.0 || y == 1.0));
            }
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let g = GeneratorId::new(5).unwrap();
        let a = generate(g, 30, 20, &mut Stream::new(9).rng()).unwrap();
        let b = generate(g, 30, 20, &mut Stream::new(9).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn function_one_features_are_uniform() {
        let g = GeneratorId::new(1).unwrap();
        let data = generate(g, 100_000, 6, &mut Stream::new(17).rng()).unwrap();
        for j in 0..6 {
            let m = crate::stats::mean(data.features.col(j));
            assert!((m - 0.5).abs() < 0.01, "feature {j} mean {m}");
        }
    }

    #[test]
    fn ground_truth_csv_round_trip() {
        let truth = GroundTruth {
            generator: GeneratorId::new(3).unwrap(),
            scores: vec![0.25, 1e-17, 0.0],
            n_ref: 250,
            reps: 4,
            seed: 99,
        };
        let mut buf = Vec::new();
        truth.write_csv(&mut buf).unwrap();
        assert_eq!(GroundTruth::read_csv(&buf[..]).unwrap(), truth);
    }
}
