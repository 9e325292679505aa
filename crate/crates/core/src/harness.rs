//! Simulation and benchmark orchestration: generate, ampute, impute, estimate,
//! and summarise coverage and interval lengths.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{CompleteDataset, IncompleteDataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::forest::ForestConfig;
use crate::importance::{default_subsample_size, estimate_importance, ImportanceEstimate};
use crate::imputation::{impute, ImputationMethod, ImputerConfig};
use crate::missingness::{AmputationSpec, Mechanism};
use crate::pooling::{pool, rubin_ci};
use crate::rng::Stream;
use crate::simgen::{generate, ground_truth_importance, GeneratorId, GroundTruth};

/// Interval construction arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Complete data, no missingness.
    None,
    /// One regression-PMM imputation, Ishwaran interval.
    SinglePmm,
    /// One forest-PMM imputation, Ishwaran interval.
    SingleRf,
    /// R regression-PMM imputations pooled by Rubin's rule.
    RubinPmm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::None, Method::SinglePmm, Method::SingleRf, Method::RubinPmm];

    pub fn label(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::SinglePmm => "single_pmm",
            Method::SingleRf => "single_rf",
            Method::RubinPmm => "rubin_pmm",
        }
    }

    pub fn from_label(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Imputer settings shared by the imputation arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputerSettings {
    pub r: usize,
    pub maxit_pmm: usize,
    pub maxit_rf: usize,
    pub pmm_k: usize,
    pub rf_trees: usize,
    pub rf_nodesize: usize,
    pub use_response: bool,
}

impl Default for ImputerSettings {
    fn default() -> Self {
        ImputerSettings {
            r: 5,
            maxit_pmm: 5,
            maxit_rf: 10,
            pmm_k: 5,
            rf_trees: 200,
            rf_nodesize: 5,
            use_response: true,
        }
    }
}

impl ImputerSettings {
    pub fn imputer(&self, method: ImputationMethod, r: usize, seed: u64) -> ImputerConfig {
        ImputerConfig {
            method,
            r,
            maxit: Some(match method {
                ImputationMethod::PmmChained => self.maxit_pmm,
                ImputationMethod::RfChained => self.maxit_rf,
            }),
            pmm_k: self.pmm_k,
            rf_trees: self.rf_trees,
            rf_nodesize: self.rf_nodesize,
            use_response: self.use_response,
            seed,
        }
    }
}

/// One simulation condition plus the estimation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorId,
    pub n: usize,
    pub p: usize,
    pub mechanism: Mechanism,
    pub rate: f64,
    /// 0-based conditioning feature for MAR.
    pub cond_feature: usize,
    pub methods: Vec<Method>,
    pub n_sim: usize,
    pub alpha: f64,
    /// Forest hyperparameters; the seed is derived per fit and ignored here.
    pub forest: ForestConfig,
    pub imputer: ImputerSettings,
    pub jackknife_k: usize,
    /// Jackknife subsample size; `None` means `round(sqrt(n))`.
    pub jackknife_b: Option<usize>,
    pub ground_truth_reps: usize,
    pub ground_truth_n_ref: usize,
    pub benchmark_repetitions: usize,
    pub benchmark_rate: f64,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generator: GeneratorId::new(1).expect("valid id"),
            n: 250,
            p: 20,
            mechanism: Mechanism::Mcar,
            rate: 0.1,
            cond_feature: 1,
            methods: Method::ALL.to_vec(),
            n_sim: 200,
            alpha: 0.05,
            forest: ForestConfig::default(),
            imputer: ImputerSettings::default(),
            jackknife_k: 50,
            jackknife_b: None,
            ground_truth_reps: 200,
            ground_truth_n_ref: 250,
            benchmark_repetitions: 100,
            benchmark_rate: 0.1,
            master_seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return bad(format!("n: {} must be >= 2", self.n));
        }
        if self.p < self.generator.arity() {
            return bad(format!("p: {} too small for generator {}", self.p, self.generator));
        }
        if !(0.0..1.0).contains(&self.rate) {
            return bad(format!("rate: {} out of range [0, 1)", self.rate));
        }
        if !(0.0..1.0).contains(&self.benchmark_rate) {
            return bad(format!("benchmark.rate: {} out of range [0, 1)", self.benchmark_rate));
        }
        if self.cond_feature >= self.p {
            return bad(format!("cond_feature: {} out of range 1..={}", self.cond_feature + 1, self.p));
        }
        if self.methods.is_empty() {
            return bad("methods: must not be empty".into());
        }
        if self.n_sim == 0 {
            return bad("n_sim: must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha: {} out of range (0, 1)", self.alpha));
        }
        self.forest.validate(self.p).map_err(|e| Error::Config(format!("forest: {e}")))?;
        let im = &self.imputer;
        if im.r == 0 || im.pmm_k == 0 || im.maxit_pmm == 0 || im.maxit_rf == 0 || im.rf_trees == 0 || im.rf_nodesize == 0 {
            return bad("imputer: all counts must be >= 1".into());
        }
        if self.methods.contains(&Method::RubinPmm) && im.r < 2 {
            return bad(format!("imputer.r: {} must be >= 2 for rubin_pmm", im.r));
        }
        if self.jackknife_k == 0 {
            return bad("jackknife.k: must be >= 1".into());
        }
        let b = self.subsample_size(self.n);
        if b < 2 || b >= self.n {
            return bad(format!("jackknife.b: {b} must be in 2..{}", self.n));
        }
        if self.ground_truth_reps == 0 || self.ground_truth_n_ref < 2 {
            return bad("ground_truth: reps >= 1 and n_ref >= 2 required".into());
        }
        if self.benchmark_repetitions == 0 {
            return bad("benchmark.repetitions: must be >= 1".into());
        }
        Ok(())
    }

    pub fn subsample_size(&self, n: usize) -> usize {
        self.jackknife_b.unwrap_or_else(|| default_subsample_size(n))
    }

    pub fn amputation(&self) -> AmputationSpec {
        AmputationSpec {
            mechanism: self.mechanism,
            rate: self.rate,
            cond_feature: self.cond_feature,
        }
    }

    pub fn condition_id(&self) -> String {
        format!("g{}_n{}_{}_{}", self.generator, self.n, self.mechanism, self.rate)
    }

    /// Seed of the ground-truth computation for this configuration.
    pub fn ground_truth_seed(&self) -> u64 {
        Stream::new(self.master_seed)
            .path(&[STREAM_TRUTH, u64::from(self.generator.id())])
            .key()
    }
}

const STREAM_REPLICATES: u64 = 1;
const STREAM_TRUTH: u64 = 2;
const STREAM_BENCHMARK: u64 = 3;

/// Interval for one (replicate, method, feature).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub method: Method,
    /// 0-based.
    pub feature: usize,
    pub point: f64,
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
    pub length: f64,
    pub std_length: Option<f64>,
}

/// A method arm that could not produce intervals in one replicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmFailure {
    pub replicate: usize,
    pub method: Method,
    pub error: String,
}

/// Intervals for one arm on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmIntervals {
    pub method: Method,
    pub point: Vec<f64>,
    pub variance: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ArmIntervals {
    fn from_estimates(method: Method, est: &[ImportanceEstimate]) -> Self {
        ArmIntervals {
            method,
            point: est.iter().map(|e| e.point).collect(),
            variance: est.iter().map(|e| e.variance).collect(),
            lower: est.iter().map(|e| e.ci_lower).collect(),
            upper: est.iter().map(|e| e.ci_upper).collect(),
        }
    }
}

/// Estimation settings shared by the simulation and the benchmark.
struct ArmSettings<'a> {
    forest: &'a ForestConfig,
    imputer: &'a ImputerSettings,
    k: usize,
    b: usize,
    alpha: f64,
}

/// Run every requested arm on one (complete, amputed) pair.
///
/// Sub-streams: 2 complete-data fit, 3 regression imputation, 4.r its per-dataset
/// estimates, 5 forest imputation, 6 its estimate.
fn run_arms(
    complete: &CompleteDataset,
    incomplete: &IncompleteDataset,
    methods: &[Method],
    s: &ArmSettings<'_>,
    stream: Stream,
) -> Vec<(Method, Result<ArmIntervals>)> {
    let estimate = |data: &CompleteDataset, st: Stream| estimate_importance(data, s.forest, s.k, s.b, s.alpha, st);
    let wants = |m: Method| methods.contains(&m);

    let pmm_estimates: Option<Result<Vec<Vec<ImportanceEstimate>>>> =
        (wants(Method::SinglePmm) || wants(Method::RubinPmm)).then(|| {
            let r = if wants(Method::RubinPmm) { s.imputer.r } else { 1 };
            let cfg = s.imputer.imputer(ImputationMethod::PmmChained, r, stream.child(3).key());
            let set = impute(incomplete, &cfg)?;
            exec::try_map_range(set.completed.len(), |i| estimate(&set.completed[i], stream.child(4).child(i as u64)))
        });

    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let res = match m {
            Method::None => estimate(complete, stream.child(2)).map(|e| ArmIntervals::from_estimates(m, &e)),
            Method::SinglePmm => match pmm_estimates.as_ref().expect("computed above") {
                Ok(sets) => Ok(ArmIntervals::from_estimates(m, &sets[0])),
                Err(e) => Err(Error::Other(e.to_string())),
            },
            Method::RubinPmm => match pmm_estimates.as_ref().expect("computed above") {
                Ok(sets) => rubin_arm(sets, s.alpha),
                Err(e) => Err(Error::Other(e.to_string())),
            },
            Method::SingleRf => {
                let cfg = s.imputer.imputer(ImputationMethod::RfChained, 1, stream.child(5).key());
                impute(incomplete, &cfg)
                    .and_then(|set| estimate(&set.completed[0], stream.child(6)))
                    .map(|e| ArmIntervals::from_estimates(m, &e))
            }
        };
        out.push((m, res));
    }
    out
}

fn rubin_arm(sets: &[Vec<ImportanceEstimate>], alpha: f64) -> Result<ArmIntervals> {
    let p = sets[0].len();
    let mut arm = ArmIntervals {
        method: Method::RubinPmm,
        point: Vec::with_capacity(p),
        variance: Vec::with_capacity(p),
        lower: Vec::with_capacity(p),
        upper: Vec::with_capacity(p),
    };
    for j in 0..p {
        let points: Vec<f64> = sets.iter().map(|s| s[j].point).collect();
        let vars: Vec<f64> = sets.iter().map(|s| s[j].variance).collect();
        let pooled = pool(&points, &vars)?;
        let (lo, hi) = rubin_ci(&pooled, alpha)?;
        arm.point.push(pooled.mean_point);
        arm.variance.push(pooled.total_var);
        arm.lower.push(lo);
        arm.upper.push(hi);
    }
    Ok(arm)
}

/// Output of one replicate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplicateOutcome {
    pub results: Vec<ReplicateResult>,
    pub failures: Vec<ArmFailure>,
}

/// Steps generate, ampute, impute, estimate and evaluate for replicate `rep`.
///
/// All randomness derives from `(cfg.master_seed, rep)`.
pub fn run_replicate(cfg: &ExperimentConfig, rep: usize, truth: &GroundTruth) -> Result<ReplicateOutcome> {
    if truth.p() != cfg.p {
        return Err(Error::Dimension(format!("ground truth has {} features, config {}", truth.p(), cfg.p)));
    }
    let stream = Stream::new(cfg.master_seed).path(&[STREAM_REPLICATES, rep as u64]);
    let complete = generate(cfg.generator, cfg.n, cfg.p, &mut stream.child(0).rng())?;
    let incomplete = cfg.amputation().apply(complete.clone(), &mut stream.child(1).rng())?;
    let settings = ArmSettings {
        forest: &cfg.forest,
        imputer: &cfg.imputer,
        k: cfg.jackknife_k,
        b: cfg.subsample_size(cfg.n),
        alpha: cfg.alpha,
    };
    let mut outcome = ReplicateOutcome::default();
    for (method, res) in run_arms(&complete, &incomplete, &cfg.methods, &settings, stream) {
        match res {
            Ok(arm) => {
                for j in 0..cfg.p {
                    let (lo, hi) = (arm.lower[j], arm.upper[j]);
                    outcome.results.push(ReplicateResult {
                        replicate: rep,
                        method,
                        feature: j,
                        point: arm.point[j],
                        variance: arm.variance[j],
                        ci_lower: lo,
                        ci_upper: hi,
                        covered: lo <= truth.scores[j] && truth.scores[j] <= hi,
                        length: hi - lo,
                        std_length: None,
                    });
                }
            }
            Err(e) => {
                log::warn!("replicate {rep}: arm {method} failed: {e}");
                outcome.failures.push(ArmFailure {
                    replicate: rep,
                    method,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

/// All replicates of one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRun {
    pub config: ExperimentConfig,
    pub truth: GroundTruth,
    pub results: Vec<ReplicateResult>,
    pub failures: Vec<ArmFailure>,
}

/// Run `cfg.n_sim` replicates and fill standardized lengths against the
/// complete-data arm when it is configured.
pub fn run_simulation(cfg: &ExperimentConfig, truth: &GroundTruth) -> Result<SimulationRun> {
    cfg.validate()?;
    let done = AtomicUsize::new(0);
    let step = (cfg.n_sim / 10).max(1);
    let outcomes = exec::try_map_range(cfg.n_sim, |rep| {
        let out = run_replicate(cfg, rep, truth);
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if k.is_multiple_of(step) || k == cfg.n_sim {
            log::info!("{}: {k}/{} replicates", cfg.condition_id(), cfg.n_sim);
        }
        out
    })?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        results.extend(o.results);
        failures.extend(o.failures);
    }
    if cfg.methods.contains(&Method::None) {
        let reference = reference_mean_lengths(&results);
        for r in &mut results {
            r.std_length = reference
                .get(&r.feature)
                .filter(|&&m| m > 0.0)
                .map(|m| r.length / m);
        }
    }
    Ok(SimulationRun {
        config: cfg.clone(),
        truth: truth.clone(),
        results,
        failures,
    })
}

/// Mean complete-data interval length per feature.
fn reference_mean_lengths(results: &[ReplicateResult]) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.method == Method::None) {
        acc.entry(r.feature).or_default().push(r.length);
    }
    acc.into_iter().map(|(j, v)| (j, crate::stats::mean(&v))).collect()
}

/// Mean of `length / reference mean length` per (method, feature).
pub fn standardized_lengths(
    results: &[ReplicateResult],
    reference: &[ReplicateResult],
) -> Result<BTreeMap<(Method, usize), f64>> {
    let mut ref_len: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in reference {
        ref_len.entry(r.feature).or_default().push(r.length);
    }
    let ref_mean: BTreeMap<usize, f64> = ref_len.into_iter().map(|(j, v)| (j, crate::stats::mean(&v))).collect();
    let mut acc: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for r in results {
        let m = *ref_mean
            .get(&r.feature)
            .ok_or_else(|| Error::InvalidParameter(format!("no reference intervals for feature {}", r.feature + 1)))?;
        if !(m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reference intervals for feature {} have zero mean length",
                r.feature + 1
            )));
        }
        acc.entry((r.method, r.feature)).or_default().push(r.length / m);
    }
    Ok(acc.into_iter().map(|(k, v)| (k, crate::stats::mean(&v))).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Stratum {
    Zero,
    High,
    Moderate,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stratum::Zero => "ZERO",
            Stratum::High => "HIGH",
            Stratum::Moderate => "MODERATE",
        })
    }
}

/// Strata for every feature of every generator in `truths` (same order).
///
/// HIGH holds the `ceil(0.1 * total)` highest non-zero scores (ties broken by
/// generator, then feature); ZERO holds exact zeros; the rest are MODERATE.
pub fn stratify(truths: &[GroundTruth]) -> Vec<Vec<Stratum>> {
    let total: usize = truths.iter().map(GroundTruth::p).sum();
    let high_count = (total as f64 * 0.10).ceil() as usize;
    let mut nonzero: Vec<(f64, u8, usize, usize)> = Vec::new();
    for (g, t) in truths.iter().enumerate() {
        for (j, &s) in t.scores.iter().enumerate() {
            if s != 0.0 {
                nonzero.push((s, t.generator.id(), j, g));
            }
        }
    }
    nonzero.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<Vec<Stratum>> = truths.iter().map(|t| vec![Stratum::Zero; t.p()]).collect();
    for (rank, &(_, _, j, g)) in nonzero.iter().enumerate() {
        out[g][j] = if rank < high_count { Stratum::High } else { Stratum::Moderate };
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageEntry {
    pub method: Method,
    pub feature: usize,
    pub replicates: usize,
    pub coverage: f64,
    pub mean_std_length: Option<f64>,
}

/// Coverage and mean standardized length per (method, feature), plus strata.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub entries: Vec<CoverageEntry>,
    pub strata: Vec<Stratum>,
    pub truth: Vec<f64>,
}

impl CoverageReport {
    pub fn get(&self, method: Method, feature: usize) -> Option<&CoverageEntry> {
        self.entries.iter().find(|e| e.method == method && e.feature == feature)
    }

    /// Mean coverage of `method` over 0-based `features`; `None` if any is absent.
    pub fn mean_coverage(&self, method: Method, features: &[usize]) -> Option<f64> {
        let v: Option<Vec<f64>> = features.iter().map(|&j| self.get(method, j).map(|e| e.coverage)).collect();
        v.map(|v| crate::stats::mean(&v))
    }

    pub fn mean_std_length(&self, method: Method, features: &[usize]) -> Option<f64> {
        let v: Option<Vec<f64>> = features
            .iter()
            .map(|&j| self.get(method, j).and_then(|e| e.mean_std_length))
            .collect();
        v.map(|v| crate::stats::mean(&v))
    }
}

/// Fraction of replicates whose interval contains the ground truth, per (method, feature).
///
/// Pairs without any result are absent from the report.
pub fn coverage(results: &[ReplicateResult], truth: &GroundTruth) -> CoverageReport {
    let mut acc: BTreeMap<(Method, usize), (usize, usize, Vec<f64>)> = BTreeMap::new();
    for r in results {
        let e = acc.entry((r.method, r.feature)).or_default();
        let t = truth.scores[r.feature];
        e.0 += 1;
        e.1 += usize::from(r.ci_lower <= t && t <= r.ci_upper);
        if let Some(s) = r.std_length {
            e.2.push(s);
        }
    }
    let entries = acc
        .into_iter()
        .map(|((method, feature), (n, hit, std))| CoverageEntry {
            method,
            feature,
            replicates: n,
            coverage: hit as f64 / n as f64,
            mean_std_length: (std.len() == n).then(|| crate::stats::mean(&std)),
        })
        .collect();
    CoverageReport {
        entries,
        strata: stratify(std::slice::from_ref(truth)).remove(0),
        truth: truth.scores.clone(),
    }
}

fn config_hash_hex(value: &impl Serialize) -> String {
    let json = serde_json::to_string(value).expect("serializable");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Ground truth for `cfg`, read from / written to `cache_dir` when given.
///
/// The cache key covers generator, `n_ref`, `p`, reps, forest settings and seed.
pub fn ground_truth_cached(cfg: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<GroundTruth> {
    let seed = cfg.ground_truth_seed();
    let forest = cfg.forest.with_seed(0);
    let key = format!(
        "truth_g{}_n{}_p{}_reps{}_seed{}_{}.csv",
        cfg.generator,
        cfg.ground_truth_n_ref,
        cfg.p,
        cfg.ground_truth_reps,
        seed,
        config_hash_hex(&forest)
    );
    if let Some(dir) = cache_dir {
        let path = dir.join(&key);
        if path.exists() {
            let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let truth = GroundTruth::read_csv(file)?;
            log::info!("ground truth loaded from {}", path.display());
            return Ok(truth);
        }
    }
    log::info!("computing ground truth for generator {} ({} reps)", cfg.generator, cfg.ground_truth_reps);
    let truth = ground_truth_importance(
        cfg.generator,
        cfg.ground_truth_n_ref,
        cfg.p,
        cfg.ground_truth_reps,
        &cfg.forest,
        seed,
    )?;
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(&key);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        truth.write_csv(file)?;
    }
    Ok(truth)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl SimulationRun {
    pub fn coverage(&self) -> CoverageReport {
        coverage(&self.results, &self.truth)
    }

    /// Per-interval result table.
    pub fn write_results_csv<W: Write>(&self, out: W) -> Result<()> {
        let c = &self.config;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "condition_id", "generator", "n", "mechanism", "rate", "method", "replicate", "feature", "point",
            "variance", "ci_lower", "ci_upper", "covered", "std_length",
        ])?;
        let cond = c.condition_id();
        for r in &self.results {
            w.write_record([
                cond.clone(),
                c.generator.to_string(),
                c.n.to_string(),
                c.mechanism.to_string(),
                c.rate.to_string(),
                r.method.to_string(),
                r.replicate.to_string(),
                (r.feature + 1).to_string(),
                r.point.to_string(),
                r.variance.to_string(),
                r.ci_lower.to_string(),
                r.ci_upper.to_string(),
                r.covered.to_string(),
                opt(r.std_length),
            ])?;
        }
        w.flush().map_err(|e| Error::Other(e.to_string()))?;
        Ok(())
    }

    /// Coverage summary table.
    pub fn write_coverage_csv<W: Write>(&self, out: W) -> Result<()> {
        let report = self.coverage();
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "condition_id", "method", "feature", "stratum", "truth", "replicates", "coverage", "mean_std_length",
        ])?;
        let cond = self.config.condition_id();
        for e in &report.entries {
            w.write_record([
                cond.clone(),
                e.method.to_string(),
                (e.feature + 1).to_string(),
                report.strata[e.feature].to_string(),
                report.truth[e.feature].to_string(),
                e.replicates.to_string(),
                e.coverage.to_string(),
                opt(e.mean_std_length),
            ])?;
        }
        w.flush().map_err(|e| Error::Other(e.to_string()))?;
        Ok(())
    }

    pub fn write_failures_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "method", "error"])?;
        for f in &self.failures {
            w.write_record([f.replicate.to_string(), f.method.to_string(), f.error.clone()])?;
        }
        w.flush().map_err(|e| Error::Other(e.to_string()))?;
        Ok(())
    }
}

/// One standardized benchmark interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub feature: String,
    pub method: Method,
    pub repetition: usize,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub std_lower: f64,
    pub std_upper: f64,
    pub std_center: f64,
    pub std_length: f64,
}

/// Real-data benchmark: per repetition, ampute MCAR, run every arm, and
/// standardize intervals per feature against the complete-data interval
/// (center of the same repetition, mean length over repetitions).
pub fn run_benchmark(data: &IncompleteDataset, cfg: &ExperimentConfig) -> Result<Vec<BenchmarkRow>> {
    let complete = data
        .to_complete()
        .map_err(|_| Error::InvalidParameter("benchmark input must be fully observed".into()))?;
    let n = complete.n();
    let b = cfg.subsample_size(n);
    if b < 2 || b >= n {
        return Err(Error::InvalidParameter(format!("subsample size {b} invalid for n = {n}")));
    }
    if !(0.0..1.0).contains(&cfg.benchmark_rate) {
        return Err(Error::InvalidParameter(format!("benchmark rate {} out of range", cfg.benchmark_rate)));
    }
    cfg.forest.validate(complete.p())?;
    let settings = ArmSettings {
        forest: &cfg.forest,
        imputer: &cfg.imputer,
        k: cfg.jackknife_k,
        b,
        alpha: cfg.alpha,
    };
    let root = Stream::new(cfg.master_seed).child(STREAM_BENCHMARK);
    let mut methods = cfg.methods.clone();
    if !methods.contains(&Method::None) {
        methods.insert(0, Method::None);
    }
    let done = AtomicUsize::new(0);
    let reps = exec::try_map_range(cfg.benchmark_repetitions, |rep| -> Result<Vec<(Method, Result<ArmIntervals>)>> {
        let s = root.child(rep as u64);
        let incomplete = crate::missingness::ampute_mcar(complete.clone(), cfg.benchmark_rate, &mut s.child(1).rng())?;
        let arms = run_arms(&complete, &incomplete, &methods, &settings, s);
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        log::info!("benchmark: {k}/{} repetitions", cfg.benchmark_repetitions);
        Ok(arms)
    })?;

    let p = complete.p();
    let mut reference: Vec<&ArmIntervals> = Vec::with_capacity(reps.len());
    for arms in &reps {
        match arms.iter().find(|(m, _)| *m == Method::None).map(|(_, r)| r) {
            Some(Ok(arm)) => reference.push(arm),
            Some(Err(e)) => return Err(Error::Other(format!("complete-data intervals failed: {e}"))),
            None => unreachable!("reference arm always runs"),
        }
    }
    let mean_len: Vec<f64> = (0..p)
        .map(|j| {
            let v: Vec<f64> = reference.iter().map(|a| a.upper[j] - a.lower[j]).collect();
            crate::stats::mean(&v)
        })
        .collect();
    if let Some(j) = mean_len.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "complete-data intervals of `{}` have zero mean length",
            complete.names[j]
        )));
    }

    let mut rows = Vec::new();
    for (rep, arms) in reps.iter().enumerate() {
        let reference = reference[rep];
        for (method, res) in arms {
            if !cfg.methods.contains(method) {
                continue;
            }
            let arm = match res {
                Ok(a) => a,
                Err(e) => {
                    log::warn!("benchmark repetition {rep}: arm {method} failed: {e}");
                    continue;
                }
            };
            for j in 0..p {
                let center = (reference.lower[j] + reference.upper[j]) / 2.0;
                let std_lower = (arm.lower[j] - center) / mean_len[j];
                let std_upper = (arm.upper[j] - center) / mean_len[j];
                rows.push(BenchmarkRow {
                    feature: complete.names[j].clone(),
                    method: *method,
                    repetition: rep,
                    ci_lower: arm.lower[j],
                    ci_upper: arm.upper[j],
                    std_lower,
                    std_upper,
                    std_center: (std_lower + std_upper) / 2.0,
                    std_length: std_upper - std_lower,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "feature", "method", "repetition", "ci_lower", "ci_upper", "std_lower", "std_upper", "std_center",
        "std_length",
    ])?;
    for r in rows {
        w.write_record([
            r.feature.clone(),
            r.method.to_string(),
            r.repetition.to_string(),
            r.ci_lower.to_string(),
            r.ci_upper.to_string(),
            r.std_lower.to_string(),
            r.std_upper.to_string(),
            r.std_center.to_string(),
            r.std_length.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Other(e.to_string()))?;
    Ok(())
}
