use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audience::{self, TargetAudienceDef, UserFeatures, MAX_AUDIENCES};
use crate::bandit::{MAX_ARMS, MAX_CREATIVES, MIN_DRAWS};
use crate::sim::{CostSpec, FeatureDist};

pub const DEFAULT_THRESHOLD: f64 = 0.90;

fn default_gamma() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_draws() -> usize {
    crate::bandit::DEFAULT_DRAWS
}

/// Everything needed to set up and replay one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment_id: String,
    pub creatives: Vec<String>,
    pub target_audiences: Vec<TargetAudienceDef>,
    /// Monetary value of one click.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Mean display cost per impression, `[r][j]` over disjoint audiences.
    /// Zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_costs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub context_probs: ContextProbSource,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Monte Carlo draws per best-combination evaluation.
    #[serde(default = "default_draws")]
    pub draws: usize,
    pub scenario: ScenarioConfig,
}

/// Where `p_hat(j|k)` comes from. Fixed for the life of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContextProbSource {
    /// Derived from the simulated population: exact weights in context mode,
    /// a bin estimate over `sample_size` generated users in feature mode.
    Scenario {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_size: Option<usize>,
    },
    /// Explicit `J x K` table, `p_hat[j][k]`.
    Table { p_hat: Vec<Vec<f64>> },
    /// Bin estimate over a supplied reference sample.
    ReferenceSample { users: Vec<UserFeatures> },
}

impl Default for ContextProbSource {
    fn default() -> Self {
        ContextProbSource::Scenario { sample_size: None }
    }
}

/// Simulated traffic: ground truth, arrival process and batch schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// True CTR, `[r][j]`.
    pub theta_star: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<Vec<CostSpec<f64>>>>,
    pub population: PopulationConfig,
    /// Users per batch.
    pub batch_size: u64,
    pub max_batches: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationConfig {
    Contexts {
        weights: Vec<f64>,
        #[serde(default)]
        no_context: f64,
    },
    Features { features: Vec<FeatureDist> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CreativeExperiment,
    TargetAudienceExperiment,
}

/// One validation failure, addressed to a config field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub code: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, code: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_owned(),
            code: code.to_owned(),
            message: message.into(),
        }
    }
}

impl ExperimentConfig {
    pub fn kind(&self) -> ExperimentKind {
        if self.creatives.len() > 1 {
            ExperimentKind::CreativeExperiment
        } else {
            ExperimentKind::TargetAudienceExperiment
        }
    }

    /// Number of disjoint audiences implied by the TA count.
    pub fn context_count(&self) -> usize {
        (1usize << self.target_audiences.len().min(MAX_AUDIENCES)) - 1
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        let r = self.creatives.len();
        let k = self.target_audiences.len();

        if r == 0 {
            errs.push(FieldError::new("creatives", "NoCreatives", "at least one creative is required"));
        }
        if r > MAX_CREATIVES {
            errs.push(FieldError::new(
                "creatives",
                "TooManyCreatives",
                format!("{r} creatives given, at most {MAX_CREATIVES} allowed"),
            ));
        }
        let mut names: Vec<&String> = self.creatives.iter().collect();
        names.sort();
        names.dedup();
        if names.len() != r {
            errs.push(FieldError::new("creatives", "DuplicateCreative", "creative ids must be unique"));
        }
        if k == 0 {
            errs.push(FieldError::new(
                "target_audiences",
                "NoAudiences",
                "at least one target audience is required",
            ));
        }
        if k > MAX_AUDIENCES {
            errs.push(FieldError::new(
                "target_audiences",
                "TooManyAudiences",
                format!("{k} target audiences given, at most {MAX_AUDIENCES} allowed"),
            ));
        }
        if r * k > MAX_ARMS {
            errs.push(FieldError::new(
                "creatives",
                "TooManyArms",
                format!("{r} x {k} = {} combinations exceed the cap of {MAX_ARMS}", r * k),
            ));
        }
        if (1..=MAX_AUDIENCES).contains(&k) {
            if let Err(e) = audience::partition(&self.target_audiences) {
                errs.push(FieldError::new("target_audiences", "InvalidAudience", e.to_string()));
            }
        }
        if !(self.threshold > 0.5 && self.threshold < 1.0) {
            errs.push(FieldError::new(
                "threshold",
                "InvalidThreshold",
                format!("threshold {} must lie in (0.5, 1)", self.threshold),
            ));
        }
        if self.draws < MIN_DRAWS {
            errs.push(FieldError::new(
                "draws",
                "TooFewDraws",
                format!("draws must be at least {MIN_DRAWS}"),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            errs.push(FieldError::new("gamma", "InvalidGamma", "gamma must be positive"));
        }

        let shape_known = (1..=MAX_AUDIENCES).contains(&k) && (1..=MAX_CREATIVES).contains(&r);
        if shape_known {
            let j = self.context_count();
            if let Some(costs) = &self.display_costs {
                if costs.len() != r || costs.iter().any(|row| row.len() != j) {
                    errs.push(FieldError::new(
                        "display_costs",
                        "ShapeMismatch",
                        format!("expected {r} rows of {j} disjoint-audience costs"),
                    ));
                } else if costs.iter().flatten().any(|b| !(*b >= 0.0 && b.is_finite())) {
                    errs.push(FieldError::new("display_costs", "InvalidCost", "costs must be nonnegative"));
                }
            }
            let s = &self.scenario;
            if s.theta_star.len() != r || s.theta_star.iter().any(|row| row.len() != j) {
                errs.push(FieldError::new(
                    "scenario.theta_star",
                    "ShapeMismatch",
                    format!("expected {r} rows of {j} disjoint-audience CTRs"),
                ));
            }
            if let PopulationConfig::Contexts { weights, .. } = &s.population {
                if weights.len() != j {
                    errs.push(FieldError::new(
                        "scenario.population.weights",
                        "ShapeMismatch",
                        format!("expected {j} context weights"),
                    ));
                }
            }
            if let ContextProbSource::Table { p_hat } = &self.context_probs {
                if p_hat.len() != j || p_hat.iter().any(|row| row.len() != k) {
                    errs.push(FieldError::new(
                        "context_probs.p_hat",
                        "ShapeMismatch",
                        format!("expected {j} rows of {k} probabilities"),
                    ));
                }
            }
        }
        if self.scenario.max_batches == 0 {
            errs.push(FieldError::new("scenario.max_batches", "InvalidBatches", "max_batches must be positive"));
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audience::Clause;

    pub(crate) fn config(r: usize, k: usize) -> ExperimentConfig {
        let j = (1usize << k) - 1;
        ExperimentConfig {
            experiment_id: "t".into(),
            creatives: (0..r).map(|i| format!("c{i}")).collect(),
            target_audiences: (1..=k as u32)
                .map(|id| TargetAudienceDef::new(id, "ta", vec![Clause::between("x", 0.0, 1.0)]))
                .collect(),
            gamma: 1.0,
            display_costs: None,
            context_probs: ContextProbSource::default(),
            threshold: 0.9,
            draws: 1000,
            scenario: ScenarioConfig {
                theta_star: vec![vec![0.05; j]; r],
                costs: None,
                population: PopulationConfig::Contexts {
                    weights: vec![1.0 / j as f64; j],
                    no_context: 0.0,
                },
                batch_size: 100,
                max_batches: 10,
                seed: 1,
            },
        }
    }

    fn codes(c: &ExperimentConfig) -> Vec<String> {
        c.validate().unwrap_err().into_iter().map(|e| e.code).collect()
    }

    #[test]
    fn kind_follows_creative_count() {
        assert_eq!(config(3, 2).kind(), ExperimentKind::CreativeExperiment);
        assert_eq!(config(1, 3).kind(), ExperimentKind::TargetAudienceExperiment);
        assert!(config(3, 2).validate().is_ok());
        assert!(config(5, 5).validate().is_ok());
    }

    #[test]
    fn limits() {
        assert!(codes(&config(6, 2)).contains(&"TooManyCreatives".to_string()));
        let c = codes(&config(2, 6));
        assert!(c.contains(&"TooManyAudiences".to_string()));
        assert!(c.contains(&"TooManyArms".to_string()) || 2 * 6 <= MAX_ARMS);
        let c = codes(&config(6, 5));
        assert!(c.contains(&"TooManyArms".to_string()));
    }

    #[test]
    fn threshold_bounds() {
        let mut c = config(2, 1);
        c.threshold = 0.5;
        assert_eq!(codes(&c), vec!["InvalidThreshold"]);
        c.threshold = 1.0;
        assert_eq!(codes(&c), vec!["InvalidThreshold"]);
    }

    #[test]
    fn defaults_apply_when_omitted() {
        let json = r#"{
            "creatives": ["a", "b"],
            "target_audiences": [{"id": 1, "name": "all", "predicate": [{"feature": "x", "in": ["y"]}]}],
            "scenario": {
                "theta_star": [[0.1], [0.2]],
                "population": {"kind": "contexts", "weights": [1.0]},
                "batch_size": 10, "max_batches": 5, "seed": 3
            }
        }"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.threshold, 0.9);
        assert_eq!(c.draws, 10_000);
        assert_eq!(c.context_probs, ContextProbSource::Scenario { sample_size: None });
        assert!(c.validate().is_ok());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config(2, 2);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.scenario.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
