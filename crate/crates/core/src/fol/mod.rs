//! First-order-logic rationales: line extraction, parsing and graph construction.
//!
//! LLM rationales arrive as free text. [`extract_fol_block`] keeps the lines
//! that look like logic, [`parse_fol_line`] turns each into a [`FolExpr`],
//! and [`build_fol_graph`] folds a list of expressions into a [`FolGraph`]
//! whose nodes are distinct predicates and whose edges come from connectives.

mod expr;
mod extract;
mod graph;
mod parser;

pub use expr::{canonical_predicate_string, FolExpr, Predicate};
pub use extract::{extract_fol_block, parse_llm_stance, FolBlock, LlmStance};
pub use graph::{build_fol_graph, FolEdge, FolGraph, FolNode, GraphError, NodeKind, RelationType};
pub use parser::{parse_fol_line, ParseError, MAX_NESTING};

/// Parses every extracted line of an LLM response, skipping malformed ones.
///
/// Returns the parsed expressions together with the number of lines that
/// failed to parse.
pub fn parse_rationale(response: &str) -> (Vec<FolExpr>, FolBlock, usize) {
    let block = extract_fol_block(response);
    let mut exprs = Vec::with_capacity(block.lines.len());
    let mut failed = 0;
    for line in &block.lines {
        match parse_fol_line(line) {
            Ok(e) => exprs.push(e),
            Err(_) => failed += 1,
        }
    }
    (exprs, block, failed)
}
