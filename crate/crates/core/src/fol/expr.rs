use std::fmt;

use serde::{Deserialize, Serialize};

/// An atomic predicate such as `Reduce(Vaccines,Risk)` or `¬Safe(Policy)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub args: Vec<String>,
    pub negated: bool,
    /// Verbatim source text the predicate was parsed from.
    pub surface: String,
}

impl Predicate {
    pub fn new(name: impl Into<String>, args: Vec<String>) -> Self {
        let name = name.into();
        let mut p = Self {
            name,
            args,
            negated: false,
            surface: String::new(),
        };
        p.surface = canonical_predicate_string(&p);
        p
    }

    pub fn negated(mut self) -> Self {
        self.negated = !self.negated;
        self.surface = canonical_predicate_string(&self);
        self
    }

    /// Stable key used for deduplication and clustering.
    pub fn canonical(&self) -> String {
        canonical_predicate_string(self)
    }

    fn same_structure(&self, other: &Self) -> bool {
        self.name == other.name && self.args == other.args && self.negated == other.negated
    }
}

fn normalize_spaces(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders `[¬]Name(arg1,arg2,...)` with whitespace collapsed inside arguments.
pub fn canonical_predicate_string(p: &Predicate) -> String {
    let mut out = String::new();
    if p.negated {
        out.push('¬');
    }
    out.push_str(&normalize_spaces(&p.name));
    out.push('(');
    let args: Vec<String> = p.args.iter().map(|a| normalize_spaces(a)).collect();
    out.push_str(&args.join(","));
    out.push(')');
    out
}

/// Expression tree over predicate leaves.
///
/// `And` and `Or` carry at least two children; an unparenthesised chain of the
/// same connective is kept flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FolExpr {
    Atom(Predicate),
    Not(Box<FolExpr>),
    And(Vec<FolExpr>),
    Or(Vec<FolExpr>),
    Implies(Box<FolExpr>, Box<FolExpr>),
}

impl FolExpr {
    pub fn atom(name: &str, args: &[&str]) -> Self {
        FolExpr::Atom(Predicate::new(name, args.iter().map(|a| a.to_string()).collect()))
    }

    pub fn implies(a: FolExpr, b: FolExpr) -> Self {
        FolExpr::Implies(Box::new(a), Box::new(b))
    }

    /// Predicate leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Predicate>) {
        match self {
            FolExpr::Atom(p) => out.push(p),
            FolExpr::Not(e) => e.collect_leaves(out),
            FolExpr::And(cs) | FolExpr::Or(cs) => cs.iter().for_each(|c| c.collect_leaves(out)),
            FolExpr::Implies(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            FolExpr::Atom(_) => 1,
            FolExpr::Not(e) => 1 + e.depth(),
            FolExpr::And(cs) | FolExpr::Or(cs) => 1 + cs.iter().map(|c| c.depth()).max().unwrap_or(0),
            FolExpr::Implies(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Equality that ignores the verbatim `surface` of leaves.
    pub fn structurally_eq(&self, other: &FolExpr) -> bool {
        match (self, other) {
            (FolExpr::Atom(a), FolExpr::Atom(b)) => a.same_structure(b),
            (FolExpr::Not(a), FolExpr::Not(b)) => a.structurally_eq(b),
            (FolExpr::And(a), FolExpr::And(b)) | (FolExpr::Or(a), FolExpr::Or(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.structurally_eq(y))
            }
            (FolExpr::Implies(a1, b1), FolExpr::Implies(a2, b2)) => {
                a1.structurally_eq(a2) && b1.structurally_eq(b2)
            }
            _ => false,
        }
    }

    fn is_compound(&self) -> bool {
        matches!(self, FolExpr::And(_) | FolExpr::Or(_) | FolExpr::Implies(..))
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_compound() {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Prints in the accepted input grammar; re-parsing the output yields the
/// same tree.
impl fmt::Display for FolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FolExpr::Atom(p) => f.write_str(&p.canonical()),
            FolExpr::Not(e) => write!(f, "¬({e})"),
            FolExpr::And(cs) | FolExpr::Or(cs) => {
                let sep = if matches!(self, FolExpr::And(_)) { " ∧ " } else { " ∨ " };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    c.fmt_child(f)?;
                }
                Ok(())
            }
            FolExpr::Implies(a, b) => {
                a.fmt_child(f)?;
                f.write_str(" → ")?;
                b.fmt_child(f)
            }
        }
    }
}
