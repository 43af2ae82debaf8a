//! Forward synthesis: the store-keeping variant of a definition.
//!
//! Two rules are derived from every rule that loses or invents information:
//!
//! * a creating rule (priority 51) that behaves like the original but also
//!   records `[ruleId, shared values] |-> [[lost values], [invented
//!   values]]` in the store, guarded so it never overwrites a conflicting
//!   entry;
//! * a replaying rule (priority 50, so it is tried first) that fires only
//!   when the store already holds an entry for the key, refreshes the lost
//!   values from the current source, and reuses the stored invented values
//!   instead of the rule's hard-coded ones.
//!
//! Rules that carry everything across unchanged are kept as they are.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::analysis::{analyze_definition, RuleInfo};
use crate::frontend::{CellDecl, Definition, RuleDecl};
use crate::term::{builtin, Sort, Term};

use super::{
    anon_block, canonicalize, consist_condition, fresh_name, gate_lints, key_term,
    rewrite_nodes, rule_var_names, token_base, value_term, SynthError,
};

/// Appends the complements-holder cell, picking a name that does not
/// collide with existing cells. Returns the new cell list and the chosen
/// name.
pub fn add_c_holder(cells: &[CellDecl]) -> (Vec<CellDecl>, String) {
    let mut taken: BTreeSet<String> = cells.iter().map(|c| c.name.clone()).collect();
    let name = fresh_name("c", &mut taken);
    let mut out = cells.to_vec();
    out.push(CellDecl {
        name: name.clone(),
        attrs: Vec::new(),
        initial: Term::empty_map(),
    });
    (out, name)
}

/// The store-writing variant of a rule. Returns the rule unchanged when it
/// neither loses nor invents values.
pub fn make_create_r(rule: &RuleDecl, info: &RuleInfo, store_cell: &str) -> RuleDecl {
    if info.miss_r.is_empty() && info.miss_l.is_empty() {
        return rule.clone();
    }
    let mut used = rule_var_names(rule);
    let store_var = fresh_name("Cp", &mut used);
    let key = key_term(rule.id, info);
    let value = value_term(&info.miss_r, &info.miss_l);
    let update = Term::apply(
        builtin::MAP_UPDATE,
        vec![
            Term::var(&store_var, Sort::k()),
            key.clone(),
            value.clone(),
        ],
    );
    let mut out = rule.clone();
    out.cells.push((
        store_cell.to_string(),
        Term::rewrite(Term::var(&store_var, Sort::map()), update),
    ));
    out.requires = Some(consist_condition(
        &store_var,
        &key,
        &value,
        rule.requires.as_ref(),
    ));
    out.priority = 51;
    out
}

/// Replaces every occurrence of the given tokens; used to turn invented
/// constants into variables.
pub(crate) fn replace_tokens(t: &Term, map: &BTreeMap<(String, String), Term>) -> Term {
    rewrite_nodes(t, &mut |node| match node {
        Term::Token { sort, text } => map.get(&(sort.0.clone(), text.clone())).cloned(),
        _ => None,
    })
}

/// Turns the rule's invented tokens into fresh variables, returning the
/// rewritten items and the replacement map.
pub(crate) fn tokens_to_variables(
    miss_l: &[Term],
    used: &mut BTreeSet<String>,
) -> (Vec<Term>, BTreeMap<(String, String), Term>) {
    let mut map = BTreeMap::new();
    let prime = miss_l
        .iter()
        .map(|item| match item {
            Term::Token { sort, text } => {
                let name = fresh_name(&token_base(sort), used);
                let var = Term::var(name, Sort::k());
                map.insert((sort.0.clone(), text.clone()), var.clone());
                var
            }
            other => other.clone(),
        })
        .collect();
    (prime, map)
}

/// The store-replaying variant of a rule, or `None` when the rule carries
/// everything across and needs no store entry.
pub fn make_put_r(rule: &RuleDecl, info: &RuleInfo, store_cell: &str) -> Option<RuleDecl> {
    if info.miss_r.is_empty() && info.miss_l.is_empty() {
        return None;
    }
    let mut used = rule_var_names(rule);
    let (miss_l_prime, tok_map) = tokens_to_variables(&info.miss_l, &mut used);
    let store_var = fresh_name("Cp", &mut used);
    let key = key_term(rule.id, info);
    let wildcards = anon_block(info.miss_r.len(), &mut used);
    let value_lhs = Term::list(vec![wildcards, Term::list(miss_l_prime.clone())]);
    let value_rhs = value_term(&info.miss_r, &miss_l_prime);

    let mut out = rule.clone();
    for (_, body) in &mut out.cells {
        *body = replace_tokens(body, &tok_map);
    }
    out.cells.push((
        store_cell.to_string(),
        Term::rewrite(
            Term::Map {
                binds: vec![(key.clone(), value_lhs)],
                rest: Some(Box::new(Term::var(&store_var, Sort::map()))),
            },
            Term::Map {
                binds: vec![(key, value_rhs)],
                rest: Some(Box::new(Term::var(&store_var, Sort::map()))),
            },
        ),
    ));
    out.priority = 50;
    Some(out)
}

/// The full forward synthesis: complements holder plus all creating rules,
/// then all replaying rules.
pub fn synthesize_forward(def: &Definition) -> Result<Definition, SynthError> {
    gate_lints(def)?;
    let (cells, store_cell) = add_c_holder(&def.cells);
    let infos = analyze_definition(def);
    let mut rules: Vec<RuleDecl> = def
        .rules
        .iter()
        .zip(&infos)
        .map(|(r, i)| make_create_r(r, i, &store_cell))
        .collect();
    rules.extend(
        def.rules
            .iter()
            .zip(&infos)
            .filter_map(|(r, i)| make_put_r(r, i, &store_cell)),
    );
    for (pos, rule) in rules.iter_mut().enumerate() {
        rule.id = pos + 1;
    }
    canonicalize(&Definition {
        grammar: def.grammar.clone(),
        cells,
        input_cell: def.input_cell.clone(),
        output_cell: def.output_cell.clone(),
        rules,
    })
}
