use std::collections::BTreeSet;

use super::ast::Func;
use super::ParseError;

/// True for identifiers reserved as parameter placeholders (`p0`, `p1`, ...).
pub fn is_param_name(name: &str) -> bool {
    name.len() > 1 && name.starts_with('p') && name[1..].bytes().all(|b| b.is_ascii_digit())
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Names a skeleton may reference: the model states plus the admitted
/// algebraic/input variables. Function names are fixed (see [`Func`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolScope {
    states: Vec<String>,
    variables: Vec<String>,
}

impl SymbolScope {
    pub fn new<S: Into<String>, V: Into<String>>(
        states: impl IntoIterator<Item = S>,
        variables: impl IntoIterator<Item = V>,
    ) -> Result<SymbolScope, ParseError> {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let variables: Vec<String> = variables.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for name in states.iter().chain(&variables) {
            if !is_identifier(name) || is_param_name(name) || Func::from_name(name).is_some() {
                return Err(ParseError::InvalidScopeName(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(ParseError::InvalidScopeName(name.clone()));
            }
        }
        Ok(SymbolScope { states, variables })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// States followed by admitted variables, in declaration order.
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.states.iter().chain(&self.variables)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.all().any(|n| n == name)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty() && self.variables.is_empty()
    }
}
