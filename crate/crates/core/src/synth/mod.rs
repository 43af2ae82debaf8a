//! Synthesis of the two directioned definitions from one rewrite definition.
//!
//! [`forward`] turns a definition into its store-keeping variant: every
//! information-bearing rule gains a complement entry under a key built from
//! the rule id and the values both models share, so nothing the rule drops
//! is lost. [`backward`] produces the reverse-direction definition from the
//! same source, capturing what only the target model knows and asking for
//! defaults where the source model's exclusive values cannot be recovered.
//!
//! Both directions return definitions that have been printed and reparsed,
//! so rule ids, hidden anonymous names, and placeholder sorts are exactly
//! what a consumer of the printed text would see.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::analysis::{lint_definition, Diagnostic, RuleInfo, Severity};
use crate::frontend::{parse_definition, print_definition, Definition, FrontendError, RuleDecl};
use crate::term::{builtin, fresh_variable, Sort, Term, VarKind};

pub mod backward;
pub mod forward;

pub use backward::{
    apply_defaults, backward_rule, defaults_required, defaults_template, make_create_l,
    make_put_l, reverse_io, synthesize_backward, DefaultSlot,
};
pub use forward::{add_c_holder, make_create_r, make_put_r, synthesize_forward};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SynthError {
    #[error("definition has lint errors:\n{0}")]
    Lint(String),
    #[error("synthesized definition failed to reparse: {0}")]
    Reparse(#[from] FrontendError),
    #[error("no default provided for rule {rule_id} placeholder ?{index}?")]
    MissingDefault { rule_id: usize, index: u32 },
    #[error("default for rule {rule_id} ?{index}? does not fit sort {sort}: {detail}")]
    SortMismatch {
        rule_id: usize,
        index: u32,
        sort: String,
        detail: String,
    },
}

/// Refuses definitions whose lints include errors; warnings pass.
pub(crate) fn gate_lints(def: &Definition) -> Result<(), SynthError> {
    let diags: Vec<Diagnostic> = lint_definition(def)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if diags.is_empty() {
        Ok(())
    } else {
        let text = diags
            .iter()
            .map(Diagnostic::to_string)
            .collect::<Vec<_>>()
            .join("\n");
        Err(SynthError::Lint(text))
    }
}

/// Prints and reparses a constructed definition, normalizing ids, hidden
/// names, and placeholder sorts to what the printed text denotes.
pub(crate) fn canonicalize(def: &Definition) -> Result<Definition, SynthError> {
    Ok(parse_definition(&print_definition(def))?)
}

/// `base` itself when free, else `base0`, `base1`, ... The chosen name is
/// recorded as taken.
pub(crate) fn fresh_name(base: &str, taken: &mut BTreeSet<String>) -> String {
    let name = if taken.contains(base) {
        fresh_variable(base, taken)
    } else {
        base.to_string()
    };
    taken.insert(name.clone());
    name
}

/// Variable base name for a captured token: the first letter of its sort.
pub(crate) fn token_base(sort: &Sort) -> String {
    sort.0
        .chars()
        .next()
        .map(|c| c.to_ascii_uppercase().to_string())
        .unwrap_or_else(|| "V".to_string())
}

/// Every variable name a rule mentions (cells and condition).
pub(crate) fn rule_var_names(rule: &RuleDecl) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    let mut record = |t: &Term| {
        if let Term::Variable { name, .. } = t {
            names.insert(name.clone());
        }
    };
    for (_, body) in &rule.cells {
        body.for_each(&mut record);
    }
    if let Some(cond) = &rule.requires {
        cond.for_each(&mut record);
    }
    names
}

/// Store key for one rule: the rule id followed by the shared values.
pub(crate) fn key_term(rule_id: usize, info: &RuleInfo) -> Term {
    let mut elems = vec![Term::int(rule_id as i64)];
    elems.extend(info.common.iter().cloned());
    Term::list(elems)
}

/// Store value: the two missing-value lists, sides in fixed order.
pub(crate) fn value_term(miss_r: &[Term], miss_l: &[Term]) -> Term {
    Term::list(vec![
        Term::list(miss_r.to_vec()),
        Term::list(miss_l.to_vec()),
    ])
}

/// The store-consistency condition: the key is either absent or already
/// bound to exactly this value. Conjoined with the rule's own condition
/// when there is one.
pub(crate) fn consist_condition(
    store_var: &str,
    key: &Term,
    value: &Term,
    original: Option<&Term>,
) -> Term {
    let lookup = Term::apply(
        builtin::LOOKUP_OR_DEFAULT,
        vec![
            Term::var(store_var, Sort::k()),
            key.clone(),
            Term::empty_list(),
        ],
    );
    let fresh = Term::apply(builtin::EQ_K, vec![lookup.clone(), Term::empty_list()]);
    let same = Term::apply(builtin::EQ_K, vec![lookup, value.clone()]);
    let consist = Term::apply(builtin::OR_BOOL, vec![fresh, same]);
    match original {
        Some(cond) => Term::apply(builtin::AND_BOOL, vec![cond.clone(), consist]),
        None => consist,
    }
}

/// Rebuilds a term, replacing every node for which `f` returns a term;
/// replacements are not descended into.
pub(crate) fn rewrite_nodes(t: &Term, f: &mut impl FnMut(&Term) -> Option<Term>) -> Term {
    if let Some(replacement) = f(t) {
        return replacement;
    }
    match t {
        Term::Variable { .. } | Term::Token { .. } | Term::Empty(_) => t.clone(),
        Term::Apply { prod, args } => Term::Apply {
            prod: prod.clone(),
            args: args.iter().map(|a| rewrite_nodes(a, f)).collect(),
        },
        Term::List { elems, rest, at } => Term::List {
            elems: elems.iter().map(|e| rewrite_nodes(e, f)).collect(),
            rest: rest.as_ref().map(|r| Box::new(rewrite_nodes(r, f))),
            at: *at,
        },
        Term::Map { binds, rest } => Term::Map {
            binds: binds
                .iter()
                .map(|(k, v)| (rewrite_nodes(k, f), rewrite_nodes(v, f)))
                .collect(),
            rest: rest.as_ref().map(|r| Box::new(rewrite_nodes(r, f))),
        },
        Term::Rewrite { lhs, rhs } => Term::Rewrite {
            lhs: Box::new(rewrite_nodes(lhs, f)),
            rhs: Box::new(rewrite_nodes(rhs, f)),
        },
    }
}

/// A block of distinct anonymous variables, as a list term.
pub(crate) fn anon_block(len: usize, used: &mut BTreeSet<String>) -> Term {
    let elems = (0..len)
        .map(|_| {
            let name = fresh_variable("_", used);
            used.insert(name.clone());
            Term::Variable {
                name,
                sort: Sort::k(),
                kind: VarKind::Anonymous,
            }
        })
        .collect();
    Term::list(elems)
}
