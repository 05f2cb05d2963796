//! Independent replicas with derived seeds, summarized per metric.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::metrics::Metrics;
use super::scenario::run_scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// 95% normal-approximation interval for the mean.
    pub ci_low: f64,
    pub ci_high: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let half = 1.96 * (var / n).sqrt();
        Summary {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub master_seed: u64,
    pub trials: u32,
    /// Dotted metric path -> summary over trials.
    pub metrics: BTreeMap<String, Summary>,
}

impl MonteCarlo {
    pub fn get(&self, path: &str) -> Option<&Summary> {
        self.metrics.get(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn table(&self) -> String {
        let mut s = format!("trials {} (master seed {})\n", self.trials, self.master_seed);
        s.push_str(&format!(
            "{:<36} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
            "metric", "mean", "ci95_low", "ci95_high", "min", "max"
        ));
        for (k, v) in &self.metrics {
            s.push_str(&format!(
                "{k:<36} {:>14.6} {:>14.6} {:>14.6} {:>14.6} {:>14.6}\n",
                v.mean, v.ci_low, v.ci_high, v.min, v.max
            ));
        }
        s
    }
}

/// Seed of trial `i` (splitmix64 of the master seed and index).
pub fn trial_seed(master: u64, i: u32) -> u64 {
    let mut z = master ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn numeric_leaves(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, f64)>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                numeric_leaves(&key, x, out);
            }
        }
        serde_json::Value::Number(n) => out.push((prefix.to_string(), n.as_f64().unwrap_or(0.0))),
        serde_json::Value::Bool(b) => out.push((prefix.to_string(), if *b { 1.0 } else { 0.0 })),
        _ => {}
    }
}

pub fn summarize(master_seed: u64, runs: &[Metrics]) -> MonteCarlo {
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in runs {
        let mut leaves = Vec::new();
        numeric_leaves("", &serde_json::to_value(m).expect("metrics serialize"), &mut leaves);
        for (k, x) in leaves {
            if k != "seed" {
                cols.entry(k).or_default().push(x);
            }
        }
    }
    MonteCarlo {
        master_seed,
        trials: runs.len() as u32,
        metrics: cols.into_iter().map(|(k, xs)| (k, Summary::of(&xs))).collect(),
    }
}

/// Runs every trial (on `jobs` threads) and returns the per-trial metrics in
/// trial order; the result does not depend on `jobs`.
pub fn run_trials(cfg: &ScenarioConfig, trials: u32, jobs: usize) -> Result<Vec<Metrics>, String> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let c = ScenarioConfig {
                    seed: trial_seed(cfg.seed, i),
                    ..cfg.clone()
                };
                run_scenario(&c).map(|o| o.metrics)
            })
            .collect()
    })
}

pub fn monte_carlo(cfg: &ScenarioConfig, trials: u32, jobs: usize) -> Result<MonteCarlo, String> {
    if trials < 2 {
        return Err("monte carlo needs at least 2 trials".into());
    }
    Ok(summarize(cfg.seed, &run_trials(cfg, trials, jobs)?))
}

/// `cfg` with one dotted key (e.g. `freshness.epsilon`) replaced.
pub fn with_override(cfg: &ScenarioConfig, key: &str, value: toml::Value) -> Result<ScenarioConfig, String> {
    let mut doc = toml::Value::try_from(cfg).map_err(|e| e.to_string())?;
    let mut slot = &mut doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let table = slot.as_table_mut().ok_or_else(|| format!("`{key}` does not name a config field"))?;
        if i + 1 == parts.len() {
            if !table.contains_key(*p) && !matches!(*p, "alpha_us") {
                return Err(format!("unknown config field `{key}`"));
            }
            table.insert(p.to_string(), value.clone());
            break;
        }
        slot = table.get_mut(*p).ok_or_else(|| format!("unknown config section in `{key}`"))?;
    }
    let out: ScenarioConfig = doc.try_into().map_err(|e: toml::de::Error| e.to_string())?;
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: toml::Value,
    pub summary: MonteCarlo,
}

/// Monte Carlo at each value of one config key.
pub fn sweep(
    cfg: &ScenarioConfig,
    key: &str,
    values: &[toml::Value],
    trials: u32,
    jobs: usize,
) -> Result<Vec<SweepPoint>, String> {
    values
        .iter()
        .map(|v| {
            let c = with_override(cfg, key, v.clone())?;
            Ok(SweepPoint {
                value: v.clone(),
                summary: monte_carlo(&c, trials, jobs)?,
            })
        })
        .collect()
}
