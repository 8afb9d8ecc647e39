//! Expert rule sets: AST, text and JSON forms, and crisp evaluation.

mod ast;
mod boolean;
mod parser;

pub use ast::{
    Aggregation, Comparison, Direction, LeafRef, Literal, LogicOp, Measurement, Node, Predicate,
    RuleSet, ThetaVector,
};
pub use boolean::{classify_boolean, classify_sample, BooleanOutcome};
pub use parser::{parse_ruleset, parse_ruleset_json, to_dsl};

use std::path::Path;

use crate::error::Result;

/// Loads a `.rules` or `.rules.json` file, picking the format by extension.
pub fn load_ruleset(path: &Path) -> Result<RuleSet> {
    let text = std::fs::read_to_string(path)?;
    if path.to_string_lossy().ends_with(".json") {
        parse_ruleset_json(&text)
    } else {
        parse_ruleset(&text)
    }
}

pub fn save_ruleset(rules: &RuleSet, path: &Path) -> Result<()> {
    let text = if path.to_string_lossy().ends_with(".json") {
        serde_json::to_string_pretty(rules)?
    } else {
        to_dsl(rules)
    };
    std::fs::write(path, text)?;
    Ok(())
}
