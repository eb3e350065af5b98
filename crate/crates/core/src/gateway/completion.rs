use serde::{Deserialize, Serialize};

/// A variable the generator asks to have admitted into the library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub name: String,
    #[serde(default)]
    pub justification: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

impl Requirement {
    pub fn new(name: &str, justification: &str) -> Requirement {
        Requirement {
            name: name.to_string(),
            justification: justification.to_string(),
            kind: None,
        }
    }
}

/// One generator answer split into its skeleton and requirement blocks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub skeleton_text: String,
    pub requirements: Vec<Requirement>,
    pub raw: String,
}

pub const SKELETON_TAG: &str = "skeleton";
pub const REQUIREMENTS_TAG: &str = "requirements";

struct Block {
    tag: String,
    body: String,
}

fn fenced_blocks(text: &str) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut current: Option<Block> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        match current.take() {
            None => {
                if let Some(info) = trimmed.strip_prefix("```") {
                    current = Some(Block {
                        tag: info.trim().to_ascii_lowercase(),
                        body: String::new(),
                    });
                }
            }
            Some(mut b) => {
                if trimmed.starts_with("```") {
                    blocks.push(b);
                } else {
                    b.body.push_str(line);
                    b.body.push('\n');
                    current = Some(b);
                }
            }
        }
    }
    // An unterminated fence runs to the end of the text.
    if let Some(b) = current {
        blocks.push(b);
    }
    blocks
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RequirementItem {
    Full(Requirement),
    Name(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RequirementDoc {
    List(Vec<RequirementItem>),
    Wrapped { requirements: Vec<RequirementItem> },
}

fn parse_requirements(body: &str) -> Vec<Requirement> {
    match serde_json::from_str::<RequirementDoc>(body.trim()) {
        Ok(doc) => {
            let items = match doc {
                RequirementDoc::List(v) | RequirementDoc::Wrapped { requirements: v } => v,
            };
            items
                .into_iter()
                .map(|it| match it {
                    RequirementItem::Full(r) => r,
                    RequirementItem::Name(n) => Requirement::new(&n, ""),
                })
                .filter(|r| !r.name.trim().is_empty())
                .collect()
        }
        Err(e) => {
            log::warn!("ignoring malformed requirements block: {e}");
            Vec::new()
        }
    }
}

/// Extracts the first `skeleton` block and the first `requirements` (or
/// `json`) block. Never fails: missing blocks yield empty fields.
pub fn parse_completion(raw: &str) -> Completion {
    let blocks = fenced_blocks(raw);
    let skeleton_text = blocks
        .iter()
        .find(|b| b.tag == SKELETON_TAG)
        .or_else(|| blocks.iter().find(|b| b.tag.is_empty()))
        .map(|b| b.body.trim().to_string())
        .unwrap_or_default();
    let requirements = blocks
        .iter()
        .find(|b| b.tag == REQUIREMENTS_TAG || b.tag == "json")
        .map(|b| parse_requirements(&b.body))
        .unwrap_or_default();
    Completion {
        skeleton_text,
        requirements,
        raw: raw.to_string(),
    }
}
