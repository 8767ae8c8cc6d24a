//! Problems x noise levels x seeds, with per-trial reports and aggregates.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{expression_r2, solution_check};
use super::problems::{problem, Problem};
use crate::error::{Error, Result};
use crate::policy::train::{train, write_log_csv, TrainResult};

/// Accuracy threshold on held-out R².
pub const ACCURACY_R2: f64 = 0.999;
pub const TRIAL_SCHEMA: &str = "symreg-trial/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub schema: String,
    pub problem: String,
    pub target: String,
    pub seed: u64,
    pub noise: f64,
    pub expression: Option<String>,
    pub best_reward: Option<f64>,
    pub r2_train: Option<f64>,
    pub r2_test: Option<f64>,
    pub raw_complexity: Option<usize>,
    pub epochs_to_best: Option<usize>,
    pub epochs_run: usize,
    pub solved: bool,
    pub accurate: bool,
    pub truncated: bool,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub noise: f64,
    pub trials: usize,
    pub errors: usize,
    pub solution_rate: f64,
    pub accuracy_rate: f64,
    pub mean_raw_complexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub trials: Vec<TrialReport>,
    pub aggregate: Vec<AggregateRow>,
    pub trial_files: Vec<PathBuf>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn trial_stem(problem: &str, noise: f64, seed: u64) -> String {
    format!("{problem}_noise{noise:?}_seed{seed}")
}

/// Runs one trial and also returns the raw training result when it finished.
pub fn run_trial(
    config: &ExperimentConfig,
    problem: &Problem,
    noise: f64,
    seed: u64,
) -> Result<(TrialReport, TrainResult)> {
    let start = Instant::now();
    let data = problem.generate(config.train_points, config.test_points, seed)?;
    let noisy = data.add_noise(noise, seed.wrapping_add(0x5eed))?;
    let (x_train, y_train) = noisy.train_data();
    let (x_test, y_test) = data.test_data();
    let library = config.library(problem.variables)?;
    let train_cfg = config.train_config()?;
    let result = train(&x_train, &y_train, &library, &train_cfg, seed)?;
    let truth = problem.truth();
    let best = result.best.as_ref();
    let report = TrialReport {
        schema: TRIAL_SCHEMA.into(),
        problem: problem.name.into(),
        target: problem.expression.into(),
        seed,
        noise,
        expression: best.map(|b| b.expression.to_infix()),
        best_reward: best.and_then(|b| finite(b.reward)),
        r2_train: best.and_then(|b| expression_r2(&b.expression, &x_train, &y_train)),
        r2_test: best.and_then(|b| {
            if x_test.first().is_none_or(Vec::is_empty) {
                None
            } else {
                expression_r2(&b.expression, &x_test, &y_test)
            }
        }),
        raw_complexity: best.map(|b| b.expression.complexity()),
        epochs_to_best: result.epochs_to_best(),
        epochs_run: result.log.len(),
        solved: best.is_some_and(|b| solution_check(&b.expression, &truth, &problem.domain())),
        accurate: false,
        truncated: result.truncated,
        error: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let accurate = report.r2_test.is_some_and(|r| r > ACCURACY_R2);
    Ok((TrialReport { accurate, ..report }, result))
}

fn failed_trial(problem: &str, target: &str, noise: f64, seed: u64, message: String, wall: f64) -> TrialReport {
    TrialReport {
        schema: TRIAL_SCHEMA.into(),
        problem: problem.into(),
        target: target.into(),
        seed,
        noise,
        expression: None,
        best_reward: None,
        r2_train: None,
        r2_test: None,
        raw_complexity: None,
        epochs_to_best: None,
        epochs_run: 0,
        solved: false,
        accurate: false,
        truncated: false,
        error: Some(message),
        wall_time_s: wall,
    }
}

/// Aggregates per noise level (in first-seen order); rates are over all
/// trials, failed ones counting as unsolved.
pub fn aggregate(trials: &[TrialReport]) -> Vec<AggregateRow> {
    let mut levels: Vec<f64> = Vec::new();
    for t in trials {
        if !levels.iter().any(|l| l.to_bits() == t.noise.to_bits()) {
            levels.push(t.noise);
        }
    }
    levels
        .into_iter()
        .map(|noise| {
            let group: Vec<&TrialReport> = trials.iter().filter(|t| t.noise.to_bits() == noise.to_bits()).collect();
            let n = group.len();
            let ks: Vec<usize> = group.iter().filter_map(|t| t.raw_complexity).collect();
            AggregateRow {
                noise,
                trials: n,
                errors: group.iter().filter(|t| t.error.is_some()).count(),
                solution_rate: group.iter().filter(|t| t.solved).count() as f64 / n as f64,
                accuracy_rate: group.iter().filter(|t| t.accurate).count() as f64 / n as f64,
                mean_raw_complexity: (!ks.is_empty()).then(|| ks.iter().sum::<usize>() as f64 / ks.len() as f64),
            }
        })
        .collect()
}

pub const AGGREGATE_HEADER: &str = "noise,trials,errors,solution_rate,accuracy_rate,mean_raw_complexity";

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{:?},{},{},{:?},{:?},{}",
            r.noise,
            r.trials,
            r.errors,
            r.solution_rate,
            r.accuracy_rate,
            r.mean_raw_complexity.map_or(String::new(), |v| format!("{v:?}"))
        )
        .unwrap();
    }
    s
}

fn curve_csv(result: &TrainResult) -> String {
    let mut s = String::from("epoch,mean_reward,std_reward,best_reward\n");
    for e in &result.log {
        writeln!(s, "{},{:?},{:?},{:?}", e.epoch + 1, e.mean_reward, e.std_reward, e.best_reward).unwrap();
    }
    s
}

/// Runs every trial, writing under `out`:
/// `trials/*.json`, `curves/*.csv`, `logs/*.csv`, `aggregate.csv`, `config.txt`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    config.validate()?;
    let problems: Vec<(String, Option<Problem>)> = config.problems.iter().map(|n| (n.clone(), problem(n))).collect();
    for dir in ["trials", "curves", "logs"] {
        std::fs::create_dir_all(out.join(dir))?;
    }
    std::fs::write(out.join("config.txt"), config.to_text())?;

    let mut trials = Vec::new();
    let mut trial_files = Vec::new();
    for (name, prob) in &problems {
        for &noise in &config.noise_levels {
            for &seed in &config.seeds {
                let stem = trial_stem(name, noise, seed);
                let start = Instant::now();
                let outcome = match prob {
                    None => Err(Error::Config(format!("unknown problem `{name}`"))),
                    Some(p) => catch_unwind(AssertUnwindSafe(|| run_trial(config, p, noise, seed)))
                        .unwrap_or_else(|panic| {
                            let msg = panic
                                .downcast_ref::<String>()
                                .cloned()
                                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                                .unwrap_or_else(|| "trial panicked".into());
                            Err(Error::Contract(msg))
                        }),
                };
                let report = match outcome {
                    Ok((report, result)) => {
                        std::fs::write(out.join("curves").join(format!("{stem}.csv")), curve_csv(&result))?;
                        write_log_csv(&out.join("logs").join(format!("{stem}.csv")), &result.log)?;
                        report
                    }
                    Err(e) => failed_trial(
                        name,
                        prob.map_or("", |p| p.expression),
                        noise,
                        seed,
                        e.to_string(),
                        start.elapsed().as_secs_f64(),
                    ),
                };
                let path = out.join("trials").join(format!("{stem}.json"));
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
                trial_files.push(path);
                trials.push(report);
            }
        }
    }
    let agg = aggregate(&trials);
    std::fs::write(out.join("aggregate.csv"), aggregate_csv(&agg))?;
    Ok(ExperimentSummary { trials, aggregate: agg, trial_files })
}

/// Trial JSON with the wall-time field removed, for reproducibility checks.
pub fn strip_wall_time(json: &str) -> Result<String> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("wall_time_s");
    }
    Ok(serde_json::to_string_pretty(&v)?)
}
