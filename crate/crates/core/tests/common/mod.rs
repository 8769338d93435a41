#![allow(dead_code)]

use adlift_core::engine::{Experiment, ExperimentConfig};
use adlift_core::LogRecord;

pub const CASE_STUDY: &str = include_str!("../../../../scenarios/case_study.json");
pub const FEATURE_POPULATION: &str = include_str!("../../../../scenarios/feature_population.json");

pub fn case_study(seed: u64) -> ExperimentConfig {
    let mut cfg: ExperimentConfig = serde_json::from_str(CASE_STUDY).unwrap();
    cfg.scenario.seed = seed;
    cfg
}

pub fn feature_population() -> ExperimentConfig {
    serde_json::from_str(FEATURE_POPULATION).unwrap()
}

/// Ground-truth TA-level CTRs `[r * K + k]` from theta_star and p_hat.
pub fn true_combination_ctrs(exp: &Experiment) -> Vec<f64> {
    let truth = exp.truth();
    let mut out = Vec::new();
    for r in 0..exp.creatives() {
        let row: Vec<f64> = (0..exp.contexts()).map(|j| truth.theta(r, j)).collect();
        for k in 0..exp.audiences() {
            out.push(exp.probs().aggregate(&row, k));
        }
    }
    out
}

/// Runs to completion, collecting every log record.
pub fn run_logged(exp: &mut Experiment) -> Vec<LogRecord> {
    let mut logs = Vec::new();
    exp.run_to_completion(|b| logs.extend(b.records.iter().cloned())).unwrap();
    logs
}
