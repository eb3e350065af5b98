//! Identified-model files: discovered skeletons or sparse-regression fits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::ModelId;
use crate::dsl::{parse, ParseError, Skeleton, SymbolScope, TargetKind};
use crate::fit::ScoredSkeleton;
use crate::sindy::SindyModel;

/// Canonical equations with their fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEquations {
    pub skeleton: String,
    pub targets: Vec<String>,
    pub params: Vec<f64>,
    pub score: f64,
    /// Admitted variables the equations may reference, besides states.
    pub variables: Vec<String>,
}

impl FittedEquations {
    pub fn from_scored(s: &ScoredSkeleton, variables: Vec<String>) -> FittedEquations {
        FittedEquations {
            skeleton: s.canonical_text(),
            targets: s.skeleton.targets.clone(),
            params: s.params.clone(),
            score: s.score,
            variables,
        }
    }

    pub fn parse(&self, kind: TargetKind, states: &[String]) -> Result<Skeleton, ParseError> {
        let scope = SymbolScope::new(states.iter().cloned(), self.variables.iter().cloned())?;
        parse(&self.skeleton, kind, &scope, &self.targets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveredModel {
    pub label: String,
    pub benchmark: Option<ModelId>,
    pub states: Vec<String>,
    pub de: FittedEquations,
    #[serde(default)]
    pub ae: Option<FittedEquations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Skeleton(DiscoveredModel),
    Sindy(SindyModel),
}

impl ModelFile {
    pub fn label(&self) -> &str {
        match self {
            ModelFile::Skeleton(m) => &m.label,
            ModelFile::Sindy(m) => &m.label,
        }
    }

    pub fn benchmark(&self) -> Option<ModelId> {
        match self {
            ModelFile::Skeleton(m) => m.benchmark,
            ModelFile::Sindy(m) => m.benchmark,
        }
    }

    pub fn states(&self) -> &[String] {
        match self {
            ModelFile::Skeleton(m) => &m.states,
            ModelFile::Sindy(m) => &m.states,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelFile::Skeleton(_) => "skeleton",
            ModelFile::Sindy(_) => "sindy",
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text + "\n")
    }

    pub fn load(path: &Path) -> Result<ModelFile, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_reparse() {
        let m = ModelFile::Skeleton(DiscoveredModel {
            label: "run".into(),
            benchmark: Some(ModelId::Swing2),
            states: vec!["delta".into(), "omega".into()],
            de: FittedEquations {
                skeleton: "ddelta/dt = p0*(omega - 1)\ndomega/dt = p1*(P_m - P_e)".into(),
                targets: vec!["delta".into(), "omega".into()],
                params: vec![314.0, 0.1],
                score: -1e-4,
                variables: vec!["P_m".into(), "P_e".into()],
            },
            ae: None,
        });
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"kind\":\"skeleton\""));
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let ModelFile::Skeleton(d) = back else { unreachable!() };
        let s = d.de.parse(TargetKind::De, &d.states).unwrap();
        assert_eq!(s.n_params, 2);
    }
}
