//! Experiment configuration: one TOML document describing the whole grid.
//!
//! Every field is optional; an empty document yields the six default
//! scenarios over the default effect and participation grids.
//!
//! ```toml
//! master_seed = 7
//! n_replicates = 50
//! methods = ["LM", "Lasso"]
//!
//! [[scenarios]]
//! confounding = "single_x3"
//! degree = 2
//!
//! [models.forest]
//! n_trees = 50
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{ConfoundingRule, CovariateSpec, OutcomeCoefficients};
use crate::error::{Error, Result};
use crate::models::{Method, ModelConfig};

pub const DEFAULT_MASTER_SEED: u64 = 20_240_101;
pub const DEFAULT_ATE_GRID: [f64; 5] = [-10.0, -5.0, 0.1, 5.0, 10.0];
pub const DEFAULT_PI_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confounding {
    /// Randomized assignment with probability `pi`.
    None,
    /// Assignment driven by the `x3` grade.
    SingleX3,
}

impl Confounding {
    pub fn as_str(self) -> &'static str {
        match self {
            Confounding::None => "none",
            Confounding::SingleX3 => "single_x3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Confounding::None),
            "single_x3" => Ok(Confounding::SingleX3),
            other => Err(Error::config("confounding", format!("unknown mode `{other}`"))),
        }
    }
}

/// A (confounding, degree) pair; identified as `1a`..`2c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub confounding: Confounding,
    pub degree: u32,
}

impl Scenario {
    pub const DEFAULTS: [Scenario; 6] = [
        Scenario::new(Confounding::None, 1),
        Scenario::new(Confounding::None, 2),
        Scenario::new(Confounding::None, 3),
        Scenario::new(Confounding::SingleX3, 1),
        Scenario::new(Confounding::SingleX3, 2),
        Scenario::new(Confounding::SingleX3, 3),
    ];

    pub const fn new(confounding: Confounding, degree: u32) -> Self {
        Scenario { confounding, degree }
    }

    pub fn id(&self) -> String {
        let group = match self.confounding {
            Confounding::None => '1',
            Confounding::SingleX3 => '2',
        };
        let letter = match self.degree {
            1 => 'a',
            2 => 'b',
            3 => 'c',
            _ => '?',
        };
        format!("{group}{letter}")
    }

    pub fn parse_id(id: &str) -> Result<Self> {
        let mut chars = id.trim().chars();
        let confounding = match chars.next() {
            Some('1') => Confounding::None,
            Some('2') => Confounding::SingleX3,
            _ => return Err(Error::config("scenario", format!("unknown scenario `{id}`"))),
        };
        let degree = match (chars.next().map(|c| c.to_ascii_lowercase()), chars.next()) {
            (Some('a'), None) => 1,
            (Some('b'), None) => 2,
            (Some('c'), None) => 3,
            _ => return Err(Error::config("scenario", format!("unknown scenario `{id}`"))),
        };
        Ok(Scenario { confounding, degree })
    }

    pub fn description(&self) -> String {
        let shape = match self.degree {
            1 => "linear",
            2 => "squared",
            3 => "cubed",
            _ => "unknown",
        };
        let mode = match self.confounding {
            Confounding::None => "no confounding",
            Confounding::SingleX3 => "confounding",
        };
        format!("{mode}, {shape}")
    }

    /// Stable index used to derive cell seeds; independent of list position.
    pub fn stable_index(&self) -> u64 {
        let group = match self.confounding {
            Confounding::None => 0,
            Confounding::SingleX3 => 1,
        };
        group * 3 + u64::from(self.degree.saturating_sub(1))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// The full experiment as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_samples: usize,
    pub n_replicates: usize,
    pub ate_true_grid: Vec<f64>,
    pub pi_grid: Vec<f64>,
    pub methods: Vec<Method>,
    /// Worker threads for replicate execution; 0 uses every available core.
    pub threads: usize,
    pub scenarios: Vec<Scenario>,
    pub covariates: CovariateSpec,
    pub outcome: OutcomeCoefficients,
    pub confounding_rule: ConfoundingRule,
    pub models: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: DEFAULT_MASTER_SEED,
            n_samples: 1000,
            n_replicates: 200,
            ate_true_grid: DEFAULT_ATE_GRID.to_vec(),
            pi_grid: DEFAULT_PI_GRID.to_vec(),
            methods: Method::ALL.to_vec(),
            threads: 0,
            scenarios: Scenario::DEFAULTS.to_vec(),
            covariates: CovariateSpec::default(),
            outcome: OutcomeCoefficients::default(),
            confounding_rule: ConfoundingRule::default(),
            models: ModelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text.get(s).unwrap_or("").trim().to_string())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::config("scenarios", "at least one scenario is required"));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if !(1..=3).contains(&s.degree) {
                return Err(Error::config(format!("scenarios[{i}].degree"), "must be 1, 2 or 3"));
            }
            if self.scenarios[..i].contains(s) {
                return Err(Error::config(format!("scenarios[{i}]"), format!("duplicate scenario {s}")));
            }
        }
        if self.ate_true_grid.is_empty() {
            return Err(Error::config("ate_true_grid", "must not be empty"));
        }
        for (i, &a) in self.ate_true_grid.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::config(format!("ate_true_grid[{i}]"), "must be finite"));
            }
            if a == 0.0 {
                return Err(Error::config(
                    format!("ate_true_grid[{i}]"),
                    "a true effect of 0 makes the percentage error divide by zero; use a small non-zero value such as 0.1",
                ));
            }
        }
        check_distinct("ate_true_grid", &self.ate_true_grid)?;
        if self.pi_grid.is_empty() {
            return Err(Error::config("pi_grid", "must not be empty"));
        }
        for (i, &p) in self.pi_grid.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config(format!("pi_grid[{i}]"), format!("must lie in (0, 1), got {p}")));
            }
        }
        check_distinct("pi_grid", &self.pi_grid)?;
        if self.n_samples < MIN_SAMPLES {
            return Err(Error::config("n_samples", format!("must be at least {MIN_SAMPLES}")));
        }
        if self.n_replicates == 0 {
            return Err(Error::config("n_replicates", "must be at least 1"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::config(format!("methods[{i}]"), format!("duplicate method {m}")));
            }
        }
        self.covariates.validate()?;
        let c = &self.outcome;
        if !(c.noise_sd >= 0.0 && c.noise_sd.is_finite()) {
            return Err(Error::config("outcome.noise_sd", "must be finite and non-negative"));
        }
        for (name, v) in [
            ("outcome.beta0", c.beta0),
            ("outcome.beta1", c.beta1),
            ("outcome.beta2", c.beta2),
            ("outcome.beta3", c.beta3),
            ("outcome.beta4", c.beta4),
        ] {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        self.confounding_rule.validate()?;
        self.models.validate()
    }

    /// One validated [`ScenarioConfig`] per configured scenario.
    pub fn scenario_configs(&self) -> Vec<ScenarioConfig> {
        self.scenarios
            .iter()
            .map(|&scenario| ScenarioConfig {
                scenario,
                master_seed: self.master_seed,
                n_samples: self.n_samples,
                n_replicates: self.n_replicates,
                ate_true_grid: self.ate_true_grid.clone(),
                pi_grid: self.pi_grid.clone(),
                methods: self.methods.clone(),
                covariates: self.covariates.clone(),
                outcome: self.outcome.clone(),
                confounding_rule: self.confounding_rule,
                models: self.models.clone(),
            })
            .collect()
    }
}

fn check_distinct(field: &str, values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(Error::config(format!("{field}[{i}]"), format!("duplicate value {v}")));
        }
    }
    Ok(())
}

/// Everything needed to run one scenario's cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub n_samples: usize,
    pub n_replicates: usize,
    pub ate_true_grid: Vec<f64>,
    pub pi_grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub covariates: CovariateSpec,
    pub outcome: OutcomeCoefficients,
    pub confounding_rule: ConfoundingRule,
    pub models: ModelConfig,
}

/// Parse and validate a config from inline TOML text.
pub fn parse_config(text: &str) -> Result<Vec<ScenarioConfig>> {
    Ok(ExperimentConfig::from_toml(text)?.scenario_configs())
}

/// Parse and validate a config file.
pub fn parse_config_file(path: &Path) -> Result<Vec<ScenarioConfig>> {
    Ok(ExperimentConfig::from_path(path)?.scenario_configs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let configs = parse_config("").unwrap();
        assert_eq!(configs.len(), 6);
        for c in &configs {
            assert_eq!(c.ate_true_grid, vec![-10.0, -5.0, 0.1, 5.0, 10.0]);
            assert_eq!(c.pi_grid, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
            assert_eq!(c.n_samples, 1000);
            assert_eq!(c.methods, Method::ALL.to_vec());
        }
        let ids: Vec<String> = configs.iter().map(|c| c.scenario.id()).collect();
        assert_eq!(ids, ["1a", "1b", "1c", "2a", "2b", "2c"]);
    }

    #[test]
    fn zero_effect_is_rejected_with_reason() {
        let err = parse_config("ate_true_grid = [-5.0, 0.0, 5.0]").unwrap_err();
        match err {
            Error::Config { field, message } => {
                assert_eq!(field, "ate_true_grid[1]");
                assert!(message.contains("divide by zero"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(parse_config("n_replicate = 5"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("[models.forest]\ntrees = 5"), Err(Error::Config { .. })));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let cases = [
            ("pi_grid = [0.5, 1.0]", "pi_grid[1]"),
            ("n_samples = 10", "n_samples"),
            ("n_replicates = 0", "n_replicates"),
            ("[[scenarios]]\nconfounding = \"none\"\ndegree = 4", "scenarios[0].degree"),
            ("[models.lasso]\nfolds = 1", "models.lasso.folds"),
            ("[confounding_rule]\nlower = 50.0\nupper = 40.0", "confounding_rule"),
        ];
        for (text, expected) in cases {
            match parse_config(text) {
                Err(Error::Config { field, .. }) => assert_eq!(field, expected, "{text}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn overrides_are_applied() {
        let text = "master_seed = 9\nn_replicates = 50\nmethods = [\"LM\"]\n[[scenarios]]\nconfounding = \"single_x3\"\ndegree = 2\n";
        let configs = parse_config(text).unwrap();
        assert_eq!(configs.len(), 1);
        assert_eq!(configs[0].n_replicates, 50);
        assert_eq!(configs[0].master_seed, 9);
        assert_eq!(configs[0].methods, vec![Method::Lm]);
        assert_eq!(configs[0].scenario.id(), "2b");
    }

    #[test]
    fn scenario_ids_round_trip() {
        for s in Scenario::DEFAULTS {
            assert_eq!(Scenario::parse_id(&s.id()).unwrap(), s);
        }
        assert!(Scenario::parse_id("3a").is_err());
        assert!(Scenario::parse_id("1d").is_err());
    }

    #[test]
    fn toml_echo_round_trips() {
        let mut config = ExperimentConfig::default();
        config.n_replicates = 17;
        config.models.forest.mtry = Some(2);
        let text = config.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = parse_config_file(Path::new("/nonexistent/cflab.toml")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
