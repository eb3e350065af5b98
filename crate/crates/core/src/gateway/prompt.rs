use std::fmt::Write as _;

use crate::dsl::{TargetKind, MAX_EXPONENT, MIN_EXPONENT};
use crate::engine::{VariableInfo, VariableLibrary};
use crate::fit::ScoredSkeleton;

use super::completion::{REQUIREMENTS_TAG, SKELETON_TAG};

/// Task contract shown to the generator at the top of every prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContract {
    pub kind: TargetKind,
    /// Component being modeled, e.g. "synchronous generator".
    pub component: String,
    pub states: Vec<VariableInfo>,
    pub library: VariableLibrary,
}

impl PromptContract {
    pub fn new(kind: TargetKind, component: &str, states: Vec<VariableInfo>, library: VariableLibrary) -> Self {
        PromptContract {
            kind,
            component: component.to_string(),
            states,
            library,
        }
    }

    fn task(&self) -> String {
        match self.kind {
            TargetKind::De => format!(
                "Complete the differential equations of a {} dynamic model: give the time \
                 derivative of every state as a function of the states, the admitted \
                 variables and trainable parameters.",
                self.component
            ),
            TargetKind::Ae => format!(
                "Complete the algebraic constraints of a {} dynamic model: give every target \
                 algebraic variable explicitly as a function of the states, the admitted \
                 variables and trainable parameters.",
                self.component
            ),
        }
    }

    fn lhs_form(&self) -> &'static str {
        match self.kind {
            TargetKind::De => "d<state>/dt = <expression>",
            TargetKind::Ae => "<variable> = <expression>",
        }
    }

    /// Deterministic contract text.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "## Role");
        let _ = writeln!(
            s,
            "You are a power-system modeling agent proposing equation skeletons for a {}.",
            self.component
        );
        let _ = writeln!(s, "\n## Task");
        let _ = writeln!(s, "{}", self.task());
        let _ = writeln!(s, "\n## Completion rules");
        let _ = writeln!(s, "1. Write exactly one line per target, of the form `{}`.", self.lhs_form());
        let _ = writeln!(
            s,
            "2. Use only `+ - * /`, parentheses, numeric literals, integer powers `^n` with n in [{MIN_EXPONENT}, {MAX_EXPONENT}], and the functions sin, cos, tan, exp, log, sqrt, tanh, abs."
        );
        let _ = writeln!(
            s,
            "3. Replace every unknown numeric coefficient with a trainable placeholder p0, p1, p2, ... (placeholders are shared across lines)."
        );
        let _ = writeln!(s, "4. Reference only the variables listed below.");
        let _ = writeln!(s, "5. Put the equations in a fenced block tagged `{SKELETON_TAG}`.");
        let _ = writeln!(s, "\n## Variables");
        let _ = writeln!(s, "States:");
        for v in &self.states {
            let _ = writeln!(s, "- {} [{}]: {}", v.name, v.unit, v.description);
        }
        let _ = writeln!(s, "Admitted algebraic and input variables:");
        if self.library.is_empty() {
            let _ = writeln!(s, "- (none yet)");
        }
        for v in self.library.entries() {
            let kind = match v.kind {
                crate::engine::VarKind::Input => "input",
                _ => "algebraic",
            };
            let _ = writeln!(s, "- {} [{}] ({}): {}", v.name, v.unit, kind, v.description);
        }
        let _ = writeln!(s, "\n## Parameters");
        let _ = writeln!(
            s,
            "Placeholders p0, p1, ... are fitted to measured trajectories by gradient descent; the score of a skeleton is the negative mean squared error after fitting (0 is perfect)."
        );
        let _ = writeln!(s, "\n## Variable requirements");
        let _ = writeln!(
            s,
            "If the model needs a variable that is not listed, declare it in a fenced block tagged `{REQUIREMENTS_TAG}` holding a JSON array such as [{{\"name\": \"<variable>\", \"justification\": \"<why>\"}}]."
        );
        s
    }
}

/// Assembles contract, scored examples (worst first) and an empty target stub.
pub fn build_prompt(contract: &PromptContract, examples: &[ScoredSkeleton], targets: &[String]) -> String {
    let mut s = contract.render();
    for (i, ex) in examples.iter().enumerate() {
        let _ = writeln!(s, "\n## Example {} (score {:.6})", i + 1, ex.score);
        let _ = writeln!(s, "```{SKELETON_TAG}");
        let _ = writeln!(s, "{}", ex.canonical_text());
        let _ = writeln!(s, "```");
    }
    let _ = writeln!(s, "\n## Target");
    match contract.kind {
        TargetKind::De => {
            let _ = writeln!(s, "Propose an improved skeleton for every state derivative:");
        }
        TargetKind::Ae => {
            let _ = writeln!(
                s,
                "Propose an improved explicit expression for every target algebraic variable:"
            );
        }
    }
    let _ = writeln!(s, "```{SKELETON_TAG}");
    for t in targets {
        match contract.kind {
            TargetKind::De => {
                let _ = writeln!(s, "d{t}/dt = ");
            }
            TargetKind::Ae => {
                let _ = writeln!(s, "{t} = ");
            }
        }
    }
    let _ = writeln!(s, "```");
    s
}
