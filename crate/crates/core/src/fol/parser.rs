//! Recursive-descent parser for single FOL lines.
//!
//! Precedence from tightest to loosest: `¬` > `∧` > `∨` > `→`. Binary levels
//! associate to the left. Quantifiers are stripped and their body parsed.

use std::fmt;

use super::expr::{FolExpr, Predicate};

/// Nesting depth past which the parser gives up instead of recursing further.
pub const MAX_NESTING: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the input line.
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at byte {}: expected one of [{}], found {}",
            self.offset,
            self.expected.join(", "),
            self.found
        )
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Connective {
    And,
    Or,
    Implies,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    depth: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

const RESERVED: &[&str] = &["AND", "OR", "NOT", "implies", "IMPLIES"];

/// Parses one line of FOL into an expression tree.
pub fn parse_fol_line(line: &str) -> Result<FolExpr, ParseError> {
    let mut p = Parser { src: line, pos: 0, depth: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error(&["predicate", "(", "¬"]));
    }
    let expr = p.parse_implies()?;
    p.skip_ws();
    // A trailing full stop or semicolon is common in LLM output.
    if matches!(p.peek(), Some('.') | Some(';')) {
        p.bump();
        p.skip_ws();
    }
    if !p.at_end() {
        return Err(p.error(&["∧", "∨", "→", "end of line"]));
    }
    Ok(expr)
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        let found = match self.peek() {
            None => "end of line".to_string(),
            Some(_) => {
                let snippet: String = self.rest().chars().take(12).collect();
                format!("{snippet:?}")
            }
        };
        ParseError {
            offset: self.pos,
            expected: expected.to_vec(),
            found,
        }
    }

    /// Identifier starting at the cursor, without consuming it.
    fn peek_ident(&self) -> Option<&'a str> {
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if is_ident_start(c) => {}
            _ => return None,
        }
        let end = chars
            .find(|(_, c)| !is_ident_char(*c))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        Some(&rest[..end])
    }

    fn peek_connective(&self) -> Option<(Connective, usize)> {
        let rest = self.rest();
        for (sym, conn) in [
            ("∧", Connective::And),
            ("&", Connective::And),
            ("∨", Connective::Or),
            ("|", Connective::Or),
            ("→", Connective::Implies),
            ("->", Connective::Implies),
        ] {
            if rest.starts_with(sym) {
                return Some((conn, sym.len()));
            }
        }
        match self.peek_ident()? {
            "AND" => Some((Connective::And, 3)),
            "OR" => Some((Connective::Or, 2)),
            w @ ("implies" | "IMPLIES") => Some((Connective::Implies, w.len())),
            _ => None,
        }
    }

    fn eat_connective(&mut self, want: Connective) -> bool {
        self.skip_ws();
        match self.peek_connective() {
            Some((c, len)) if c == want => {
                self.pos += len;
                true
            }
            _ => false,
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(ParseError {
                offset: self.pos,
                expected: vec!["shallower nesting"],
                found: format!("nesting deeper than {MAX_NESTING}"),
            });
        }
        Ok(())
    }

    fn parse_implies(&mut self) -> Result<FolExpr, ParseError> {
        self.enter()?;
        let mut lhs = self.parse_or()?;
        while self.eat_connective(Connective::Implies) {
            let rhs = self.parse_or()?;
            lhs = FolExpr::Implies(Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn parse_or(&mut self) -> Result<FolExpr, ParseError> {
        let mut items = vec![self.parse_and()?];
        while self.eat_connective(Connective::Or) {
            items.push(self.parse_and()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { FolExpr::Or(items) })
    }

    fn parse_and(&mut self) -> Result<FolExpr, ParseError> {
        let mut items = vec![self.parse_unary()?];
        while self.eat_connective(Connective::And) {
            items.push(self.parse_unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { FolExpr::And(items) })
    }

    fn eat_negation(&mut self) -> bool {
        for sym in ["¬", "~"] {
            if self.rest().starts_with(sym) {
                self.pos += sym.len();
                return true;
            }
        }
        if self.peek_ident() == Some("NOT") {
            self.pos += 3;
            return true;
        }
        false
    }

    fn eat_quantifier(&mut self) -> Result<bool, ParseError> {
        let rest = self.rest();
        let kw_len = if rest.starts_with('∀') || rest.starts_with('∃') {
            3
        } else {
            match self.peek_ident() {
                Some(w @ ("forall" | "exists" | "FORALL" | "EXISTS")) => {
                    // Only a quantifier when followed by a variable, not `(`.
                    let after = &rest[w.len()..];
                    if after.starts_with(char::is_whitespace) {
                        w.len()
                    } else {
                        return Ok(false);
                    }
                }
                _ => return Ok(false),
            }
        };
        self.pos += kw_len;
        loop {
            self.skip_ws();
            match self.peek_ident() {
                Some(v) if !RESERVED.contains(&v) => self.pos += v.len(),
                _ => return Err(self.error(&["quantified variable"])),
            }
            self.skip_ws();
            if self.peek() == Some(',') {
                let save = self.pos;
                self.bump();
                self.skip_ws();
                // `∀x, P(x)`: the comma ends the variable list.
                let body_next = self
                    .peek_ident()
                    .map(|w| self.rest()[w.len()..].starts_with('('))
                    .unwrap_or(true);
                if body_next {
                    self.pos = save + 1;
                    break;
                }
                continue;
            }
            break;
        }
        if matches!(self.peek(), Some('.') | Some(':')) {
            self.bump();
        }
        Ok(true)
    }

    fn parse_unary(&mut self) -> Result<FolExpr, ParseError> {
        self.enter()?;
        self.skip_ws();
        let start = self.pos;
        let out = if self.eat_negation() {
            match self.parse_unary()? {
                FolExpr::Atom(mut p) => {
                    p.negated = !p.negated;
                    p.surface = self.src[start..self.pos].trim_end().to_string();
                    FolExpr::Atom(p)
                }
                other => FolExpr::Not(Box::new(other)),
            }
        } else if self.eat_quantifier()? {
            self.parse_unary()?
        } else {
            self.parse_primary()?
        };
        self.depth -= 1;
        Ok(out)
    }

    fn parse_primary(&mut self) -> Result<FolExpr, ParseError> {
        self.skip_ws();
        if self.peek() == Some('(') {
            self.bump();
            let inner = self.parse_implies()?;
            self.skip_ws();
            if self.peek() != Some(')') {
                return Err(self.error(&[")", "∧", "∨", "→"]));
            }
            self.bump();
            return Ok(inner);
        }
        let start = self.pos;
        let name = match self.peek_ident() {
            Some(n) if !RESERVED.contains(&n) => n,
            _ => return Err(self.error(&["predicate", "(", "¬"])),
        };
        self.pos += name.len();
        let args = if self.peek() == Some('(') {
            self.bump();
            self.parse_args()?
        } else {
            Vec::new()
        };
        Ok(FolExpr::Atom(Predicate {
            name: name.to_string(),
            args,
            negated: false,
            surface: self.src[start..self.pos].to_string(),
        }))
    }

    /// Argument list after the opening parenthesis. Arguments are raw text
    /// split on top-level commas; nested parentheses are kept verbatim.
    fn parse_args(&mut self) -> Result<Vec<String>, ParseError> {
        let mut args = Vec::new();
        let mut depth = 0usize;
        let mut arg_start = self.pos;
        loop {
            let here = self.pos;
            match self.bump() {
                None => return Err(self.error(&[")"])),
                Some('(') => {
                    depth += 1;
                    if depth > MAX_NESTING {
                        self.pos = here;
                        return Err(self.error(&["shallower nesting"]));
                    }
                }
                Some(')') if depth > 0 => depth -= 1,
                Some(c @ (')' | ',')) if depth == 0 => {
                    let raw = self.src[arg_start..here].trim();
                    if raw.is_empty() {
                        // `P()` is a propositional atom; anything else empty is malformed.
                        if !(c == ')' && args.is_empty()) {
                            self.pos = here;
                            return Err(self.error(&["argument"]));
                        }
                    } else {
                        args.push(raw.split_whitespace().collect::<Vec<_>>().join(" "));
                    }
                    if c == ')' {
                        return Ok(args);
                    }
                    arg_start = self.pos;
                }
                Some(_) => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(name: &str, args: &[&str]) -> FolExpr {
        FolExpr::atom(name, args)
    }

    #[test]
    fn implication_with_two_args() {
        let e = parse_fol_line("Reduce(Vaccines,Risk) → Support(Vaccines)").unwrap();
        let want = FolExpr::implies(atom("Reduce", &["Vaccines", "Risk"]), atom("Support", &["Vaccines"]));
        assert!(e.structurally_eq(&want), "{e:?}");
    }

    #[test]
    fn negation_folds_into_leaf() {
        let e = parse_fol_line("¬Safe(Policy)").unwrap();
        match e {
            FolExpr::Atom(p) => {
                assert!(p.negated);
                assert_eq!(p.name, "Safe");
                assert_eq!(p.args, vec!["Policy"]);
                assert_eq!(p.surface, "¬Safe(Policy)");
            }
            other => panic!("expected atom, got {other:?}"),
        }
    }

    #[test]
    fn implies_binds_loosest() {
        let e = parse_fol_line("A(x) ∧ B(x) → C(x)").unwrap();
        let want = FolExpr::implies(FolExpr::And(vec![atom("A", &["x"]), atom("B", &["x"])]), atom("C", &["x"]));
        assert!(e.structurally_eq(&want));
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let e = parse_fol_line("A() | B() & C()").unwrap();
        let want = FolExpr::Or(vec![atom("A", &[]), FolExpr::And(vec![atom("B", &[]), atom("C", &[])])]);
        assert!(e.structurally_eq(&want));
    }

    #[test]
    fn implication_is_left_associative() {
        let e = parse_fol_line("A(x) -> B(x) implies C(x)").unwrap();
        let want = FolExpr::implies(FolExpr::implies(atom("A", &["x"]), atom("B", &["x"])), atom("C", &["x"]));
        assert!(e.structurally_eq(&want));
    }

    #[test]
    fn keyword_connectives() {
        let e = parse_fol_line("NOT A(x) AND B(x) OR C(x) IMPLIES D(x)").unwrap();
        let a = FolExpr::Atom(Predicate::new("A", vec!["x".into()]).negated());
        let want = FolExpr::implies(
            FolExpr::Or(vec![FolExpr::And(vec![a, atom("B", &["x"])]), atom("C", &["x"])]),
            atom("D", &["x"]),
        );
        assert!(e.structurally_eq(&want), "{e}");
    }

    #[test]
    fn negated_group_stays_a_not_node() {
        let e = parse_fol_line("~(A(x) ∨ B(x))").unwrap();
        assert!(matches!(e, FolExpr::Not(ref inner) if matches!(**inner, FolExpr::Or(_))));
    }

    #[test]
    fn double_negation_cancels_on_leaf() {
        let e = parse_fol_line("¬¬Safe(x)").unwrap();
        assert!(matches!(e, FolExpr::Atom(ref p) if !p.negated));
    }

    #[test]
    fn quantifiers_are_stripped() {
        let e = parse_fol_line("∀x (Mask(x) → Protect(x, Public))").unwrap();
        let want = FolExpr::implies(atom("Mask", &["x"]), atom("Protect", &["x", "Public"]));
        assert!(e.structurally_eq(&want));
        let e = parse_fol_line("∃y, z: Rel(y,z)").unwrap();
        assert!(e.structurally_eq(&atom("Rel", &["y", "z"])));
        let e = parse_fol_line("forall x. P(x)").unwrap();
        assert!(e.structurally_eq(&atom("P", &["x"])));
        let e = parse_fol_line("∀x, P(x)").unwrap();
        assert!(e.structurally_eq(&atom("P", &["x"])));
    }

    #[test]
    fn nested_terms_and_spaces_in_arguments() {
        let e = parse_fol_line("Cost(storage(video, cloud),  New   York).").unwrap();
        assert!(e.structurally_eq(&atom("Cost", &["storage(video, cloud)", "New York"])));
    }

    #[test]
    fn bare_identifier_is_propositional() {
        let e = parse_fol_line("Rain → Wet").unwrap();
        assert!(e.structurally_eq(&FolExpr::implies(atom("Rain", &[]), atom("Wet", &[]))));
    }

    #[test]
    fn errors_carry_offset_and_expectations() {
        let err = parse_fol_line("A(x) ∧").unwrap_err();
        assert_eq!(err.offset, "A(x) ∧".len());
        assert!(err.expected.contains(&"predicate"));

        let err = parse_fol_line("A(x) B(x)").unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(err.expected.contains(&"→"));

        let err = parse_fol_line("P(a,,b)").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(parse_fol_line("(A(x)").is_err());
        assert!(parse_fol_line("A(x").is_err());
        assert!(parse_fol_line("").is_err());
        assert!(parse_fol_line("AND").is_err());
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let s = format!("{}A(x){}", "(".repeat(10_000), ")".repeat(10_000));
        assert!(parse_fol_line(&s).is_err());
        let s = format!("P({}x{})", "(".repeat(10_000), ")".repeat(10_000));
        assert!(parse_fol_line(&s).is_err());
        let s = "¬".repeat(10_000) + "A(x)";
        assert!(parse_fol_line(&s).is_err());
    }
}
