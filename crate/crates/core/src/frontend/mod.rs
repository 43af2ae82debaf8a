//! Surface syntax: parsing and printing of definitions, models, and
//! defaults files.
//!
//! A definition file has three kinds of items, in order: `syntax`
//! declarations, one `configuration`, and `rule` items. The grammar declared
//! by the syntax items is built into runtime tables ([`crate::grammar`]),
//! after which cell bodies and model text are parsed against it with an
//! Earley parser ([`earley`]). Parsing and printing are inverses: printing a
//! parsed definition and reparsing it yields the same definition, which is
//! what makes the printed form usable as a stable fingerprint.

mod lex;
pub mod earley;
mod parse;
mod print;

pub use earley::{UTok, UTokAt};
pub use lex::{LexError, RESERVED_LEXEMES, RESERVED_WORDS};
pub use parse::{parse_defaults, parse_definition, parse_model, parse_model_any, DefaultEntry};
pub use print::{print_definition, print_term};

use thiserror::Error;

use crate::grammar::Grammar;
use crate::term::{Sort, Term, VarKind};

/// Everything that can go wrong between source text and a checked
/// [`Definition`].
#[derive(Error, Clone, PartialEq, Debug)]
pub enum FrontendError {
    /// Malformed file structure: bad tokens, stray text, unclosed cells,
    /// misuse of reserved words.
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    /// Token stream is well formed but no grammar derivation covers it.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// At least two distinct parse trees cover the same input.
    #[error("ambiguous parse at line {line}: could be {alt1} or {alt2}")]
    Ambiguous {
        line: usize,
        alt1: String,
        alt2: String,
    },
    /// A sort is referenced but never declared.
    #[error("unknown sort {sort} at line {line}")]
    UnknownSort { line: usize, sort: String },
    /// Two cells share a name.
    #[error("duplicate cell name <{name}>")]
    DuplicateCellName { name: String },
    /// No configuration cell holds the `$PGM` input marker.
    #[error("no input cell: no configuration cell contains $PGM")]
    NoInputCell,
    /// A token cannot be given a sort from context.
    #[error("cannot determine a sort at line {line}: {message}")]
    UntypedTerm { line: usize, message: String },
}

impl From<LexError> for FrontendError {
    fn from(e: LexError) -> Self {
        FrontendError::Syntax {
            line: e.line,
            message: e.message,
        }
    }
}

/// One configuration cell: name, open-tag attributes, and initial contents.
/// The input cell's initial is the `$PGM` variable carrying the program
/// sort.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDecl {
    pub name: String,
    pub attrs: Vec<String>,
    pub initial: Term,
}

/// A rewrite rule: per-cell patterns in configuration order of mention, an
/// optional side condition, and a scheduling priority (smaller fires first,
/// default 50).
#[derive(Debug, Clone, PartialEq)]
pub struct RuleDecl {
    /// 1-based position among the definition's rules.
    pub id: usize,
    pub cells: Vec<(String, Term)>,
    pub requires: Option<Term>,
    pub priority: u32,
}

pub const DEFAULT_PRIORITY: u32 = 50;

impl RuleDecl {
    pub fn cell(&self, name: &str) -> Option<&Term> {
        self.cells.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Names of variables that bind on the left-hand side, in first-mention
    /// order across cells.
    pub fn lhs_var_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (_, body) in &self.cells {
            for name in body.project(crate::term::RwSide::Lhs).binding_var_names() {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }
}

/// A parsed, validated definition.
#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub grammar: Grammar,
    pub cells: Vec<CellDecl>,
    pub input_cell: String,
    pub output_cell: String,
    pub rules: Vec<RuleDecl>,
}

pub const INPUT_MARKER: &str = "$PGM";
pub const OUTPUT_ATTR: &str = "output";

impl Definition {
    pub fn cell(&self, name: &str) -> Option<&CellDecl> {
        self.cells.iter().find(|c| c.name == name)
    }

    pub fn rule(&self, id: usize) -> Option<&RuleDecl> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Sort of models fed to the input cell.
    pub fn input_sort(&self) -> Sort {
        match &self.cell(&self.input_cell).expect("input cell exists").initial {
            Term::Variable { name, sort, .. } if name == INPUT_MARKER => sort.clone(),
            other => unreachable!("input cell initial is always $PGM, found {other}"),
        }
    }

    /// Fresh variable-name pool: every variable name already used by any
    /// rule or cell, so synthesized names cannot capture.
    pub fn used_var_names(&self) -> std::collections::BTreeSet<String> {
        let mut used = std::collections::BTreeSet::new();
        for c in &self.cells {
            c.initial.for_each(&mut |t| {
                if let Term::Variable { name, .. } = t {
                    used.insert(name.clone());
                }
            });
        }
        for r in &self.rules {
            for (_, body) in &r.cells {
                body.for_each(&mut |t| {
                    if let Term::Variable { name, .. } = t {
                        used.insert(name.clone());
                    }
                });
            }
            if let Some(c) = &r.requires {
                c.for_each(&mut |t| {
                    if let Term::Variable { name, .. } = t {
                        used.insert(name.clone());
                    }
                });
            }
        }
        used
    }

    /// The unique token sort, when exactly one is declared. `#`-tokens in
    /// positions without grammar context (list elements in store values)
    /// default to it.
    pub fn sole_token_sort(&self) -> Option<Sort> {
        let mut it = self.grammar.token_sorts.iter();
        match (it.next(), it.next()) {
            (Some(s), None) => Some(s.clone()),
            _ => None,
        }
    }
}

/// True when the variable is the `$PGM` input marker.
pub fn is_input_marker(t: &Term) -> bool {
    matches!(t, Term::Variable { name, kind: VarKind::Named, .. } if name == INPUT_MARKER)
}
