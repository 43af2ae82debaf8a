//! Backward synthesis: the reverse-direction definition.
//!
//! Reversing a rule swaps every `=>` in place, so construction sites become
//! match sites and vice versa. Reversing a definition additionally swaps the
//! input and output cells and derives, per information-bearing rule:
//!
//! * a creating rule (priority 51) whose match side captures values only the
//!   target model knows, and whose unrecoverable source-only values appear
//!   as numbered `?n?` placeholders to be filled from a defaults file;
//! * a replaying rule (priority 50) that recovers the source-only values
//!   from an existing store entry instead of asking for defaults, while
//!   refreshing the stored target-only values from the model at hand.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::analysis::{analyze_definition, RuleInfo};
use crate::frontend::{
    parse_model, parse_model_any, print_term, CellDecl, DefaultEntry, Definition, RuleDecl,
    INPUT_MARKER, OUTPUT_ATTR,
};
use crate::term::{builtin, Sort, Term, VarKind};

use super::forward::{add_c_holder, make_put_r};
use super::{
    anon_block, canonicalize, consist_condition, fresh_name, gate_lints, key_term,
    rewrite_nodes, rule_var_names, token_base, value_term, SynthError,
};

fn swap_rewrites(t: &Term) -> Term {
    match t {
        Term::Variable { .. } | Term::Token { .. } | Term::Empty(_) => t.clone(),
        Term::Apply { prod, args } => Term::Apply {
            prod: prod.clone(),
            args: args.iter().map(swap_rewrites).collect(),
        },
        Term::List { elems, rest, at } => Term::List {
            elems: elems.iter().map(swap_rewrites).collect(),
            rest: rest.as_ref().map(|r| Box::new(swap_rewrites(r))),
            at: *at,
        },
        Term::Map { binds, rest } => Term::Map {
            binds: binds
                .iter()
                .map(|(k, v)| (swap_rewrites(k), swap_rewrites(v)))
                .collect(),
            rest: rest.as_ref().map(|r| Box::new(swap_rewrites(r))),
        },
        Term::Rewrite { lhs, rhs } => Term::Rewrite {
            lhs: Box::new(swap_rewrites(rhs)),
            rhs: Box::new(swap_rewrites(lhs)),
        },
    }
}

/// The same rule running in the other direction: every `=>` swapped in
/// place, read-only cells, condition, and priority untouched.
pub fn backward_rule(rule: &RuleDecl) -> RuleDecl {
    let mut out = rule.clone();
    for (_, body) in &mut out.cells {
        *body = swap_rewrites(body);
    }
    out
}

/// Swaps the input and output roles of a cell list: the former input cell
/// is emptied and marked as output, the former output cell receives the
/// program marker (at sort K, since target models are untyped on intake).
/// Every other cell is untouched.
pub fn reverse_io(cells: &[CellDecl], input_cell: &str, output_cell: &str) -> Vec<CellDecl> {
    cells
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if c.name == input_cell {
                c.initial = Term::empty_k();
                if !c.attrs.iter().any(|a| a == OUTPUT_ATTR) {
                    c.attrs.push(OUTPUT_ATTR.to_string());
                }
            } else if c.name == output_cell {
                c.initial = Term::var(INPUT_MARKER, Sort::k());
                c.attrs.retain(|a| a != OUTPUT_ATTR);
            }
            c
        })
        .collect()
}

/// The backward store-writing variant of a rule: captures target-only
/// values, asks for source-only ones via placeholders, and records both.
/// Returns the plain reversed rule when there is nothing to record.
pub fn make_create_l(rule: &RuleDecl, info: &RuleInfo, store_cell: &str) -> RuleDecl {
    let mut out = backward_rule(rule);
    if info.miss_r.is_empty() && info.miss_l.is_empty() {
        return out;
    }
    let mut used = rule_var_names(&out);

    // Target-only tokens sit on the backward match side; turning them into
    // fresh variables captures whatever value the model actually carries.
    let mut tok_capture: BTreeMap<(String, String), Term> = BTreeMap::new();
    let captured: Vec<Term> = info
        .miss_l
        .iter()
        .map(|item| match item {
            Term::Token { sort, text } => {
                let name = fresh_name(&token_base(sort), &mut used);
                let var = Term::var(name, Sort::k());
                tok_capture.insert((sort.0.clone(), text.clone()), var.clone());
                var
            }
            other => other.clone(),
        })
        .collect();

    // Source-only values cannot be derived from the target model; each one
    // becomes a numbered placeholder, wherever it occurs.
    let mut var_ph: BTreeMap<String, Term> = BTreeMap::new();
    let mut tok_ph: BTreeMap<(String, String), Term> = BTreeMap::new();
    let mut placeholders = Vec::new();
    for (i, item) in info.miss_r.iter().enumerate() {
        let n = (i + 1) as u32;
        let sort = match item {
            Term::Variable { sort, .. } | Term::Token { sort, .. } => sort.clone(),
            other => unreachable!("missing-value items are leaves, found {other}"),
        };
        let ph = Term::Variable {
            name: format!("?{n}?"),
            sort,
            kind: VarKind::Placeholder(n),
        };
        match item {
            Term::Variable { name, .. } => {
                var_ph.insert(name.clone(), ph.clone());
            }
            Term::Token { sort, text } => {
                tok_ph.insert((sort.0.clone(), text.clone()), ph.clone());
            }
            _ => unreachable!(),
        }
        placeholders.push(ph);
    }

    for (_, body) in &mut out.cells {
        *body = rewrite_nodes(body, &mut |node| match node {
            Term::Variable { name, kind: VarKind::Named, .. } => var_ph.get(name).cloned(),
            Term::Token { sort, text } => tok_capture
                .get(&(sort.0.clone(), text.clone()))
                .or_else(|| tok_ph.get(&(sort.0.clone(), text.clone())))
                .cloned(),
            _ => None,
        });
    }
    // Conditions keep literal tokens literal: a guard comparing against a
    // constant still means that constant. Only source-only values change.
    out.requires = out.requires.as_ref().map(|cond| {
        rewrite_nodes(cond, &mut |node| match node {
            Term::Variable { name, kind: VarKind::Named, .. } => var_ph.get(name).cloned(),
            Term::Token { sort, text } => tok_ph.get(&(sort.0.clone(), text.clone())).cloned(),
            _ => None,
        })
    });

    let store_var = fresh_name("Cp", &mut used);
    let key = key_term(rule.id, info);
    let value = value_term(&placeholders, &captured);
    out.cells.push((
        store_cell.to_string(),
        Term::rewrite(
            Term::var(&store_var, Sort::map()),
            Term::apply(
                builtin::MAP_UPDATE,
                vec![Term::var(&store_var, Sort::k()), key.clone(), value.clone()],
            ),
        ),
    ));
    let cond = consist_condition(&store_var, &key, &value, out.requires.as_ref());
    out.requires = Some(cond);
    out.priority = 51;
    out
}

fn split_store_pattern(t: &Term) -> (Term, Term, Option<Term>) {
    match t {
        Term::Map { binds, rest } if binds.len() == 1 => (
            binds[0].0.clone(),
            binds[0].1.clone(),
            rest.as_deref().cloned(),
        ),
        other => panic!("store patterns are single-entry maps, found {other}"),
    }
}

fn value_blocks(t: &Term) -> (Term, Term) {
    match t {
        Term::List { elems, rest: None, .. } if elems.len() == 2 => {
            (elems[0].clone(), elems[1].clone())
        }
        other => panic!("store values hold two blocks, found {other}"),
    }
}

fn block_len(t: &Term) -> usize {
    match t {
        Term::List { elems, rest: None, .. } => elems.len(),
        Term::Empty(_) => 0,
        other => panic!("store value blocks are ground lists, found {other}"),
    }
}

/// The backward store-replaying variant, derived from the forward one by
/// reversal plus an exchange of which value block is matched blind: the
/// wildcards move from the source-only block to the target-only block, so
/// the rule recovers source values from the store and refreshes target
/// values from the model.
pub fn make_put_l(put_r: &RuleDecl, store_cell: &str) -> RuleDecl {
    let mut out = backward_rule(put_r);
    let mut used = rule_var_names(&out);
    let pos = out
        .cells
        .iter()
        .position(|(n, _)| n == store_cell)
        .expect("replaying rules carry a store cell");
    let (lhs, rhs) = match &out.cells[pos].1 {
        Term::Rewrite { lhs, rhs } => (lhs.as_ref().clone(), rhs.as_ref().clone()),
        other => panic!("the store cell of a replaying rule rewrites, found {other}"),
    };
    let (key, full, rest) = split_store_pattern(&lhs);
    let (_, blind, _) = split_store_pattern(&rhs);
    let (f0, f1) = value_blocks(&full);
    let (b0, b1) = value_blocks(&blind);
    // After reversal the complete value sits on the left; the right still
    // shows where the wildcards were. Rebuild with the blind block on the
    // opposite slot.
    let wild = if f0 != b0 {
        0
    } else if f1 != b1 {
        1
    } else {
        0
    };
    let new_lhs_val = if wild == 0 {
        Term::list(vec![f0.clone(), anon_block(block_len(&f1), &mut used)])
    } else {
        Term::list(vec![anon_block(block_len(&f0), &mut used), f1.clone()])
    };
    out.cells[pos].1 = Term::rewrite(
        Term::Map {
            binds: vec![(key.clone(), new_lhs_val)],
            rest: rest.clone().map(Box::new),
        },
        Term::Map {
            binds: vec![(key, full)],
            rest: rest.map(Box::new),
        },
    );
    out.priority = 50;
    out
}

/// The full backward synthesis: complements holder, reversed input/output
/// roles, all creating rules, then all replaying rules.
pub fn synthesize_backward(def: &Definition) -> Result<Definition, SynthError> {
    gate_lints(def)?;
    let (held, store_cell) = add_c_holder(&def.cells);
    let cells = reverse_io(&held, &def.input_cell, &def.output_cell);
    let infos = analyze_definition(def);
    let mut rules: Vec<RuleDecl> = def
        .rules
        .iter()
        .zip(&infos)
        .map(|(r, i)| make_create_l(r, i, &store_cell))
        .collect();
    rules.extend(
        def.rules
            .iter()
            .zip(&infos)
            .filter_map(|(r, i)| make_put_r(r, i, &store_cell))
            .map(|p| make_put_l(&p, &store_cell)),
    );
    for (pos, rule) in rules.iter_mut().enumerate() {
        rule.id = pos + 1;
    }
    canonicalize(&Definition {
        grammar: def.grammar.clone(),
        cells,
        input_cell: def.output_cell.clone(),
        output_cell: def.input_cell.clone(),
        rules,
    })
}

/// One placeholder a defaults file must fill: which rule, which number,
/// and the sort its replacement text is parsed at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefaultSlot {
    pub rule_id: usize,
    pub index: u32,
    pub sort: Sort,
}

/// Every placeholder in the definition, ordered by rule and number. The
/// slot sort is the most specific sort any occurrence is used at; sort K
/// means no occurrence pins one down.
pub fn defaults_required(def: &Definition) -> Vec<DefaultSlot> {
    let mut slots: BTreeMap<(usize, u32), Sort> = BTreeMap::new();
    for rule in &def.rules {
        let mut record = |t: &Term| {
            if let Term::Variable { kind: VarKind::Placeholder(n), sort, .. } = t {
                let entry = slots.entry((rule.id, *n)).or_insert_with(Sort::k);
                if !sort.is_k() && (entry.is_k() || def.grammar.fits(sort, entry)) {
                    *entry = sort.clone();
                }
            }
        };
        for (_, body) in &rule.cells {
            body.for_each(&mut record);
        }
        if let Some(cond) = &rule.requires {
            cond.for_each(&mut record);
        }
    }
    slots
        .into_iter()
        .map(|((rule_id, index), sort)| DefaultSlot { rule_id, index, sort })
        .collect()
}

/// Replaces every placeholder with its ground default. Entries that match
/// no placeholder are ignored; a placeholder without an entry, or an entry
/// whose text does not parse at the slot's sort, is an error.
pub fn apply_defaults(def: &Definition, entries: &[DefaultEntry]) -> Result<Definition, SynthError> {
    let mut repl: BTreeMap<(usize, u32), Term> = BTreeMap::new();
    for slot in defaults_required(def) {
        let entry = entries
            .iter()
            .find(|e| e.rule_id == slot.rule_id && e.index == slot.index)
            .ok_or(SynthError::MissingDefault {
                rule_id: slot.rule_id,
                index: slot.index,
            })?;
        let parsed = if slot.sort.is_k() {
            parse_model_any(def, &entry.text).map(|(t, _)| t)
        } else {
            parse_model(def, &entry.text, &slot.sort)
        };
        let term = parsed.map_err(|e| SynthError::SortMismatch {
            rule_id: slot.rule_id,
            index: slot.index,
            sort: slot.sort.0.clone(),
            detail: e.to_string(),
        })?;
        repl.insert((slot.rule_id, slot.index), term);
    }
    let mut out = def.clone();
    for rule in &mut out.rules {
        let id = rule.id;
        let mut fill = |node: &Term| match node {
            Term::Variable { kind: VarKind::Placeholder(n), .. } => repl.get(&(id, *n)).cloned(),
            _ => None,
        };
        for (_, body) in &mut rule.cells {
            *body = rewrite_nodes(body, &mut fill);
        }
        if let Some(cond) = &rule.requires {
            rule.requires = Some(rewrite_nodes(cond, &mut fill));
        }
    }
    canonicalize(&out)
}

/// A starting defaults file for a definition's backward direction. Slots
/// whose lost value is a literal are prefilled with it; slots for lost
/// variables are emitted as commented stubs naming the expected sort.
pub fn defaults_template(def: &Definition) -> Result<String, SynthError> {
    let bwd = synthesize_backward(def)?;
    let slots = defaults_required(&bwd);
    let infos = analyze_definition(def);
    let mut out = String::from(
        "// Backward defaults: one `rule <id> ?<n>? := <value>` line per placeholder.\n",
    );
    if slots.is_empty() {
        out.push_str("// No defaults required.\n");
        return Ok(out);
    }
    out.push_str(
        "// Prefilled lines restate literals the rules pin down; commented lines\n\
         // need a value of the stated sort.\n",
    );
    for slot in &slots {
        let item = &infos[slot.rule_id - 1].miss_r[(slot.index - 1) as usize];
        match item {
            Term::Token { .. } => {
                let _ = writeln!(
                    out,
                    "rule {} ?{}? := {}",
                    slot.rule_id,
                    slot.index,
                    print_term(item)
                );
            }
            _ => {
                let _ = writeln!(
                    out,
                    "// rule {} ?{}? := <{} value>",
                    slot.rule_id, slot.index, slot.sort
                );
            }
        }
    }
    Ok(out)
}
