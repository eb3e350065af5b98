use serde::{Deserialize, Serialize};

use crate::dsl::TargetKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    State,
    Algebraic,
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableInfo {
    pub name: String,
    pub unit: String,
    pub description: String,
    pub kind: VarKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl VariableInfo {
    pub fn new(name: &str, unit: &str, description: &str, kind: VarKind) -> VariableInfo {
        VariableInfo {
            name: name.to_string(),
            unit: unit.to_string(),
            description: description.to_string(),
            kind,
            aliases: Vec::new(),
        }
    }

    pub fn with_aliases(mut self, aliases: &[&str]) -> VariableInfo {
        self.aliases = aliases.iter().map(|a| a.to_string()).collect();
        self
    }
}

/// Lowercase alphanumerics only: `v_f*`, `VF` and `vf` all normalize to `vf`.
fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Signals a benchmark can reveal on request, in fixed catalog order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalCatalog {
    pub signals: Vec<VariableInfo>,
}

impl SignalCatalog {
    pub fn get(&self, name: &str) -> Option<&VariableInfo> {
        self.signals.iter().find(|s| s.name == name)
    }

    /// Exact name first, then case- and punctuation-insensitive match on
    /// names and aliases.
    pub fn resolve(&self, requested: &str) -> Option<&VariableInfo> {
        if let Some(s) = self.get(requested) {
            return Some(s);
        }
        let key = normalize(requested);
        if key.is_empty() {
            return None;
        }
        self.signals.iter().find(|s| {
            normalize(&s.name) == key || s.aliases.iter().any(|a| normalize(a) == key)
        })
    }

    pub fn inputs(&self) -> impl Iterator<Item = &VariableInfo> {
        self.signals.iter().filter(|s| s.kind == VarKind::Input)
    }

    pub fn names(&self) -> Vec<String> {
        self.signals.iter().map(|s| s.name.clone()).collect()
    }
}

/// The admitted algebraic/input variables of one loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableLibrary {
    pub loop_kind: TargetKind,
    entries: Vec<VariableInfo>,
}

impl VariableLibrary {
    pub fn new(loop_kind: TargetKind) -> VariableLibrary {
        VariableLibrary {
            loop_kind,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[VariableInfo] {
        &self.entries
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }

    /// Appends `info` unless already present; returns whether it was added.
    pub fn admit(&mut self, info: VariableInfo) -> bool {
        if self.contains(&info.name) {
            return false;
        }
        self.entries.push(info);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
