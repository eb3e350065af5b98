use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trigger::TriggerConfig;
use super::EngineError;
use crate::archive::SamplerConfig;
use crate::bench::ModelId;
use crate::fit::FitConfig;
use crate::gateway::HttpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum GeneratorConfig {
    /// Scripted completions from a JSON file.
    Mock { script: PathBuf },
    Http(HttpConfig),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Http(HttpConfig::default())
    }
}

/// Run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, the data directory must hold this benchmark.
    pub benchmark: Option<ModelId>,
    pub seed: u64,
    /// Component named in the prompt contract.
    pub component: String,
    pub islands: usize,
    /// Iteration budget per loop.
    pub max_iterations: usize,
    pub candidates_per_iteration: usize,
    pub temperature: f64,
    /// Skeletons whose requirements are read on extension.
    pub top_k: usize,
    /// Signals admitted to the DE library before the first iteration.
    pub initial_variables: Vec<String>,
    /// Consecutive failed generator calls that end a loop.
    pub max_generator_failures: usize,
    /// Optional wall-clock limit for the whole run.
    pub time_budget_secs: Option<f64>,
    /// Run the AE loop after the DE loop.
    pub run_ae: bool,
    pub trigger: TriggerConfig,
    pub fit: FitConfig,
    pub sampler: SamplerConfig,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: None,
            seed: 0,
            component: "synchronous generator".into(),
            islands: 10,
            max_iterations: 50,
            candidates_per_iteration: 4,
            temperature: 1.2,
            top_k: 3,
            initial_variables: Vec::new(),
            max_generator_failures: 5,
            time_budget_secs: None,
            run_ae: true,
            trigger: TriggerConfig::default(),
            fit: FitConfig::default(),
            sampler: SamplerConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.islands == 0 {
            return bad("islands must be at least 1".into());
        }
        if self.candidates_per_iteration == 0 {
            return bad("candidates_per_iteration must be at least 1".into());
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        if self.max_generator_failures == 0 {
            return bad("max_generator_failures must be at least 1".into());
        }
        self.trigger.validate().or_else(|e| bad(format!("trigger: {e}")))?;
        self.fit.validate().or_else(bad)?;
        self.sampler.validate().or_else(bad)?;
        Ok(())
    }

    /// Parses TOML; a relative mock script path is taken relative to `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<RunConfig, EngineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        if let (GeneratorConfig::Mock { script }, Some(base)) = (&mut cfg.generator, base) {
            if script.is_relative() {
                *script = base.join(&*script);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text, path.parent())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_toml() {
        let cfg = RunConfig::from_toml("", None).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.islands, 10);
        assert_eq!(cfg.fit.steps, 2000);
        assert_eq!(cfg.sampler.tau_c, 0.2);
        assert_eq!(cfg.trigger.window, 3);
    }

    #[test]
    fn nested_sections() {
        let text = r#"
            seed = 7
            max_iterations = 12
            [fit]
            steps = 300
            [trigger]
            epsilon = 0.02
            gamma = 0.01
            window = 2
            [generator]
            backend = "mock"
            script = "script.json"
        "#;
        let cfg = RunConfig::from_toml(text, Some(Path::new("/cfg"))).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.fit.steps, 300);
        assert_eq!(cfg.fit.restarts, 3);
        assert_eq!(
            cfg.generator,
            GeneratorConfig::Mock {
                script: PathBuf::from("/cfg/script.json")
            }
        );
    }

    #[test]
    fn http_backend_section() {
        let text = "[generator]\nbackend = \"http\"\nbase_url = \"http://localhost:8000/v1\"\nmodel = \"local\"\n";
        let cfg = RunConfig::from_toml(text, None).unwrap();
        match cfg.generator {
            GeneratorConfig::Http(h) => {
                assert_eq!(h.model, "local");
                assert_eq!(h.max_attempts, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("islandz = 3", None).is_err());
        assert!(RunConfig::from_toml("islands = 0", None).is_err());
        assert!(RunConfig::from_toml("[trigger]\nepsilon = 0.01\ngamma = 0.5\nwindow = 3", None).is_err());
    }
}
