use serde::{Deserialize, Serialize};

/// Lines of an LLM response that look like first-order logic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolBlock {
    pub lines: Vec<String>,
    /// Non-empty prose lines that were discarded.
    pub dropped: usize,
}

/// The attitude the LLM states at the end of a P1 response. Kept as metadata
/// only; it never feeds the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LlmStance {
    Support,
    Opposed,
    Neutral,
}

fn has_call_syntax(line: &str) -> bool {
    let mut prev_ident = false;
    for c in line.chars() {
        if c == '(' && prev_ident {
            return true;
        }
        prev_ident = c.is_alphanumeric() || c == '_';
    }
    false
}

fn has_connective_symbol(line: &str) -> bool {
    line.contains(['∧', '∨', '¬', '→', '∀', '∃']) || line.contains("->")
}

fn strip_list_marker(line: &str) -> &str {
    let t = line.trim_start();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim_start();
        }
    }
    t
}

/// Drops a leading `Label:` when the label is plain words, e.g. `Premise 1:`.
fn strip_label(line: &str) -> &str {
    let Some(colon) = line.find(':') else { return line };
    let (label, rest) = (&line[..colon], &line[colon + 1..]);
    let lower = label.trim().to_ascii_lowercase();
    let plain = !label.trim().is_empty()
        && label.chars().all(|c| c.is_alphanumeric() || c == ' ' || c == '_')
        && !lower.starts_with("forall")
        && !lower.starts_with("exists");
    if plain && has_call_syntax(rest) {
        rest.trim_start()
    } else {
        line
    }
}

fn clean_line(raw: &str) -> String {
    let t = strip_list_marker(raw.trim());
    let t = t.trim().trim_matches('`').trim();
    let t = strip_label(t);
    t.trim().to_string()
}

/// Keeps the lines of `response` that contain predicate-call syntax or a
/// logical connective, in order. List markers and plain-word labels are
/// stripped from kept lines.
pub fn extract_fol_block(response: &str) -> FolBlock {
    let mut block = FolBlock::default();
    for raw in response.lines() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = clean_line(raw);
        if !line.is_empty() && (has_call_syntax(&line) || has_connective_symbol(&line)) {
            block.lines.push(line);
        } else {
            block.dropped += 1;
        }
    }
    block
}

/// Finds the concluding attitude statement, scanning prose lines from the end.
pub fn parse_llm_stance(response: &str) -> Option<LlmStance> {
    for line in response.lines().rev() {
        let cleaned = clean_line(line);
        if has_call_syntax(&cleaned) {
            continue;
        }
        let lower = line.to_lowercase();
        let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
        if words.contains(&"neutral") {
            return Some(LlmStance::Neutral);
        }
        if words.iter().any(|w| matches!(*w, "opposed" | "oppose" | "opposes" | "against")) {
            return Some(LlmStance::Opposed);
        }
        if words.iter().any(|w| matches!(*w, "support" | "supports" | "supportive" | "favor")) {
            return Some(LlmStance::Support);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_only_logic_lines() {
        let b = extract_fol_block("The claim holds.\nSupport(Masks)\nTherefore favor.");
        assert_eq!(b.lines, vec!["Support(Masks)"]);
        assert_eq!(b.dropped, 2);
    }

    #[test]
    fn empty_response() {
        assert_eq!(extract_fol_block(""), FolBlock::default());
    }

    #[test]
    fn connective_line_is_kept_verbatim() {
        let b = extract_fol_block("A(x) ∧ B(x) → C(x)\nnoise");
        assert_eq!(b.lines, vec!["A(x) ∧ B(x) → C(x)"]);
        assert_eq!(b.dropped, 1);
    }

    #[test]
    fn strips_markers_and_labels() {
        let b = extract_fol_block("1. Protect(Mask, Public)\n- `Harm(Virus)`\nPremise 2: A(x) -> B(x)\n∀x: P(x)");
        assert_eq!(b.lines, vec!["Protect(Mask, Public)", "Harm(Virus)", "A(x) -> B(x)", "∀x: P(x)"]);
    }

    #[test]
    fn prose_with_spaced_parenthesis_is_dropped() {
        let b = extract_fol_block("The policy (masks) is good");
        assert!(b.lines.is_empty());
    }

    #[test]
    fn stance_from_concluding_line() {
        let r = "Support(Masks)\nOppose(Virus)\nAttitude: Support";
        assert_eq!(parse_llm_stance(r), Some(LlmStance::Support));
        assert_eq!(parse_llm_stance("X(y)\nThe attitude is Opposed."), Some(LlmStance::Opposed));
        assert_eq!(parse_llm_stance("X(y)\nConclusion: Neutral"), Some(LlmStance::Neutral));
        assert_eq!(parse_llm_stance("Support(x)"), None);
    }
}
