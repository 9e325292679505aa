//! Strict JSON configuration for experiments.
//!
//! Every key is optional and falls back to the desk-scale default; unknown keys
//! are rejected with a spelling suggestion. See `docs/config.md` for the schema.

use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::harness::{ExperimentConfig, ImputerSettings, Method};
use crate::missingness::Mechanism;
use crate::simgen::GeneratorId;

const TOP_KEYS: &[&str] = &[
    "generator", "n", "p", "mechanism", "rate", "cond_feature", "methods", "n_sim", "alpha", "master_seed", "forest",
    "imputer", "jackknife", "ground_truth", "benchmark",
];
const FOREST_KEYS: &[&str] = &["ntree", "mtry", "nodesize", "sample_with_replacement"];
const IMPUTER_KEYS: &[&str] = &["r", "maxit_pmm", "maxit_rf", "pmm_k", "rf_trees", "rf_nodesize", "use_response"];
const JACKKNIFE_KEYS: &[&str] = &["k", "b"];
const TRUTH_KEYS: &[&str] = &["reps", "n_ref"];
const BENCHMARK_KEYS: &[&str] = &["repetitions", "rate"];

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawForest {
    ntree: Option<usize>,
    mtry: Option<usize>,
    nodesize: Option<usize>,
    sample_with_replacement: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawImputer {
    r: Option<usize>,
    maxit_pmm: Option<usize>,
    maxit_rf: Option<usize>,
    pmm_k: Option<usize>,
    rf_trees: Option<usize>,
    rf_nodesize: Option<usize>,
    use_response: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawJackknife {
    k: Option<usize>,
    b: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawTruth {
    reps: Option<usize>,
    n_ref: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawBenchmark {
    repetitions: Option<usize>,
    rate: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    generator: Option<u8>,
    n: Option<usize>,
    p: Option<usize>,
    mechanism: Option<String>,
    rate: Option<f64>,
    cond_feature: Option<usize>,
    methods: Option<Vec<String>>,
    n_sim: Option<usize>,
    alpha: Option<f64>,
    master_seed: Option<u64>,
    forest: RawForest,
    imputer: RawImputer,
    jackknife: RawJackknife,
    ground_truth: RawTruth,
    benchmark: RawBenchmark,
}

fn suggest(key: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .filter(|&(d, _)| d <= 2)
        .min()
        .map(|(_, k)| k.to_owned())
}

fn check_keys(map: &Map<String, Value>, known: &[&str], section: &str) -> Result<()> {
    for key in map.keys() {
        if !known.contains(&key.as_str()) {
            let place = if section.is_empty() { String::new() } else { format!(" in section `{section}`") };
            let hint = suggest(key, known).map_or_else(String::new, |s| format!("; did you mean `{s}`?"));
            return Err(Error::Config(format!("unknown key `{key}`{place}{hint}")));
        }
    }
    Ok(())
}

fn check_all_keys(root: &Value) -> Result<()> {
    let Value::Object(map) = root else {
        return Err(Error::Config("top level must be a JSON object".into()));
    };
    check_keys(map, TOP_KEYS, "")?;
    for (section, keys) in [
        ("forest", FOREST_KEYS),
        ("imputer", IMPUTER_KEYS),
        ("jackknife", JACKKNIFE_KEYS),
        ("ground_truth", TRUTH_KEYS),
        ("benchmark", BENCHMARK_KEYS),
    ] {
        match map.get(section) {
            None => {}
            Some(Value::Object(sub)) => check_keys(sub, keys, section)?,
            Some(_) => return Err(Error::Config(format!("section `{section}` must be an object"))),
        }
    }
    Ok(())
}

/// Parse a configuration document. Empty input yields all defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let root: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?
    };
    check_all_keys(&root)?;
    let raw: RawConfig = serde_json::from_value(root).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    let d = ExperimentConfig::default();
    let df = ForestConfig::default();
    let di = ImputerSettings::default();

    let generator = match raw.generator {
        Some(g) => GeneratorId::new(g).map_err(|_| Error::Config(format!("generator: {g} out of range 1..=12")))?,
        None => d.generator,
    };
    let mechanism = match raw.mechanism.as_deref() {
        None => d.mechanism,
        Some(m) if m.eq_ignore_ascii_case("mcar") => Mechanism::Mcar,
        Some(m) if m.eq_ignore_ascii_case("mar") => Mechanism::Mar,
        Some(m) => return Err(Error::Config(format!("mechanism: `{m}` is not MCAR or MAR"))),
    };
    let methods = match raw.methods {
        None => d.methods.clone(),
        Some(list) => {
            let mut out = Vec::new();
            for s in &list {
                let m = Method::from_label(s).ok_or_else(|| {
                    let labels: Vec<&str> = Method::ALL.iter().map(|m| m.label()).collect();
                    Error::Config(format!("methods: unknown method `{s}` (expected one of {})", labels.join(", ")))
                })?;
                if !out.contains(&m) {
                    out.push(m);
                }
            }
            out
        }
    };
    let cond_feature = match raw.cond_feature {
        Some(0) => return Err(Error::Config("cond_feature: features are numbered from 1".into())),
        Some(c) => c - 1,
        None => d.cond_feature,
    };
    if let Some(0) = raw.forest.mtry {
        return Err(Error::Config("forest.mtry: must be >= 1".into()));
    }

    let cfg = ExperimentConfig {
        generator,
        n: raw.n.unwrap_or(d.n),
        p: raw.p.unwrap_or(d.p),
        mechanism,
        rate: raw.rate.unwrap_or(d.rate),
        cond_feature,
        methods,
        n_sim: raw.n_sim.unwrap_or(d.n_sim),
        alpha: raw.alpha.unwrap_or(d.alpha),
        forest: ForestConfig {
            ntree: raw.forest.ntree.unwrap_or(df.ntree),
            mtry: raw.forest.mtry.or(df.mtry),
            nodesize: raw.forest.nodesize.unwrap_or(df.nodesize),
            sample_with_replacement: raw.forest.sample_with_replacement.unwrap_or(df.sample_with_replacement),
            seed: 0,
        },
        imputer: ImputerSettings {
            r: raw.imputer.r.unwrap_or(di.r),
            maxit_pmm: raw.imputer.maxit_pmm.unwrap_or(di.maxit_pmm),
            maxit_rf: raw.imputer.maxit_rf.unwrap_or(di.maxit_rf),
            pmm_k: raw.imputer.pmm_k.unwrap_or(di.pmm_k),
            rf_trees: raw.imputer.rf_trees.unwrap_or(di.rf_trees),
            rf_nodesize: raw.imputer.rf_nodesize.unwrap_or(di.rf_nodesize),
            use_response: raw.imputer.use_response.unwrap_or(di.use_response),
        },
        jackknife_k: raw.jackknife.k.unwrap_or(d.jackknife_k),
        jackknife_b: raw.jackknife.b.or(d.jackknife_b),
        ground_truth_reps: raw.ground_truth.reps.unwrap_or(d.ground_truth_reps),
        ground_truth_n_ref: raw.ground_truth.n_ref.unwrap_or(d.ground_truth_n_ref),
        benchmark_repetitions: raw.benchmark.repetitions.unwrap_or(d.benchmark_repetitions),
        benchmark_rate: raw.benchmark.rate.unwrap_or(d.benchmark_rate),
        master_seed: raw.master_seed.unwrap_or(d.master_seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}
