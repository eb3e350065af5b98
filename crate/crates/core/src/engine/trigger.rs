use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Continue,
    ExtendVariables,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    /// Stagnation threshold on best-score increments.
    pub epsilon: f64,
    /// Acceptance threshold: scores above `-gamma` are good enough.
    pub gamma: f64,
    /// Window length in iterations.
    pub window: usize,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            epsilon: 0.01,
            gamma: 0.01,
            window: 3,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon > 0.0 && self.gamma > 0.0) {
            return Err("epsilon and gamma must be positive".into());
        }
        if self.gamma > self.epsilon {
            return Err("gamma must not exceed epsilon".into());
        }
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        Ok(())
    }
}

/// Decides the next action from the best-score history `s*_0..s*_t`.
///
/// Extension needs `window` increments (`window + 1` scores), all `<= ε`,
/// with the current best still `<= -γ`. Termination needs the last `window`
/// scores all `> -γ`. Anything shorter continues.
pub fn check_trigger(history: &[f64], cfg: &TriggerConfig) -> Trigger {
    let r = cfg.window;
    let Some(&current) = history.last() else {
        return Trigger::Continue;
    };
    if history.len() > r {
        let tail = &history[history.len() - r - 1..];
        let stagnant = tail.windows(2).all(|w| w[1] - w[0] <= cfg.epsilon);
        if stagnant && current <= -cfg.gamma {
            return Trigger::ExtendVariables;
        }
    }
    if history.len() >= r && history[history.len() - r..].iter().all(|s| *s > -cfg.gamma) {
        return Trigger::Terminate;
    }
    Trigger::Continue
}
