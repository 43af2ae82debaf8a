//! Grammars: the `syntax` half of a definition.
//!
//! A definition declares user sorts and their productions. Productions whose
//! body is a single nonterminal are *injections*: they never show up as
//! `Apply` nodes, they only widen sort membership (an `Int` is an `Expr`
//! wherever `Expr ::= Int` is declared). A `syntax S` declaration with no
//! body makes `S` a token sort inhabited by `#`-prefixed literals.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::term::{builtin, ProdId, Sort, Term};

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ProdItem {
    /// A terminal literal, e.g. `"log"` or `"-["`.
    Literal(String),
    /// A sort reference.
    Nt(Sort),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Production {
    pub id: ProdId,
    pub sort: Sort,
    pub items: Vec<ProdItem>,
}

impl Production {
    pub fn is_injection(&self) -> bool {
        self.items.len() == 1 && matches!(self.items[0], ProdItem::Nt(_))
    }
    pub fn nt_sorts(&self) -> impl Iterator<Item = &Sort> {
        self.items.iter().filter_map(|i| match i {
            ProdItem::Nt(s) => Some(s),
            ProdItem::Literal(_) => None,
        })
    }
    /// Number of child slots an `Apply` node of this production carries.
    pub fn arity(&self) -> usize {
        self.nt_sorts().count()
    }
}

/// Canonical signature used as the production id: the sort, ` ::= `, then
/// items separated by single spaces, literals double-quoted.
pub fn prod_signature(sort: &Sort, items: &[ProdItem]) -> String {
    let mut s = format!("{} ::=", sort.0);
    for item in items {
        s.push(' ');
        match item {
            ProdItem::Literal(l) => {
                s.push('"');
                for c in l.chars() {
                    match c {
                        '"' => s.push_str("\\\""),
                        '\\' => s.push_str("\\\\"),
                        _ => s.push(c),
                    }
                }
                s.push('"');
            }
            ProdItem::Nt(n) => s.push_str(&n.0),
        }
    }
    s
}

#[derive(Error, Clone, PartialEq, Eq, Debug)]
pub enum GrammarError {
    #[error("production for {0} references undeclared sort {1}")]
    UnknownSort(String, String),
    #[error("sort {0} may not be redeclared")]
    BuiltinRedeclared(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grammar {
    /// All productions in declaration order.
    pub productions: Vec<Production>,
    /// User sorts declared without productions; inhabited by `#` tokens.
    pub token_sorts: BTreeSet<Sort>,
    /// Every declared user sort, in first-declaration order.
    pub declared: Vec<Sort>,
    by_id: BTreeMap<ProdId, usize>,
    by_sort: BTreeMap<Sort, Vec<usize>>,
    /// `upward[S]` = every sort that terms of sort `S` also belong to.
    upward: BTreeMap<Sort, BTreeSet<Sort>>,
}

impl Grammar {
    /// Assemble a grammar from `(sort, alternatives)` declarations, where an
    /// empty alternatives list declares a token sort.
    pub fn build(decls: &[(Sort, Vec<Vec<ProdItem>>)]) -> Result<Grammar, GrammarError> {
        let mut g = Grammar::default();
        let mut sig_counts: BTreeMap<String, usize> = BTreeMap::new();
        for (sort, alts) in decls {
            if sort.is_builtin() {
                return Err(GrammarError::BuiltinRedeclared(sort.0.clone()));
            }
            if !g.declared.contains(sort) {
                g.declared.push(sort.clone());
            }
            if alts.is_empty() {
                g.token_sorts.insert(sort.clone());
                continue;
            }
            for items in alts {
                let base = prod_signature(sort, items);
                let n = sig_counts.entry(base.clone()).or_insert(0);
                *n += 1;
                let id = if *n == 1 { base } else { format!("{base} #{n}") };
                g.productions.push(Production {
                    id: ProdId(id),
                    sort: sort.clone(),
                    items: items.clone(),
                });
            }
        }
        let declared_set: BTreeSet<&Sort> = g.declared.iter().collect();
        for p in &g.productions {
            for nt in p.nt_sorts() {
                let leaf_ok = matches!(nt.0.as_str(), "Int" | "String" | "Bool" | "Id");
                if !leaf_ok && !declared_set.contains(nt) {
                    return Err(GrammarError::UnknownSort(p.sort.0.clone(), nt.0.clone()));
                }
            }
        }
        for (i, p) in g.productions.iter().enumerate() {
            g.by_id.insert(p.id.clone(), i);
            g.by_sort.entry(p.sort.clone()).or_default().push(i);
        }
        g.compute_upward();
        Ok(g)
    }

    fn compute_upward(&mut self) {
        // Direct injection edges child -> parent, closed under iteration.
        let mut up: BTreeMap<Sort, BTreeSet<Sort>> = BTreeMap::new();
        for p in &self.productions {
            if p.is_injection() {
                if let ProdItem::Nt(child) = &p.items[0] {
                    up.entry(child.clone()).or_default().insert(p.sort.clone());
                }
            }
        }
        loop {
            let mut grew = false;
            let snapshot = up.clone();
            for (_, parents) in up.iter_mut() {
                let mut add = BTreeSet::new();
                for parent in parents.iter() {
                    if let Some(grand) = snapshot.get(parent) {
                        for gp in grand {
                            if !parents.contains(gp) {
                                add.insert(gp.clone());
                            }
                        }
                    }
                }
                if !add.is_empty() {
                    grew = true;
                    parents.extend(add);
                }
            }
            if !grew {
                break;
            }
        }
        self.upward = up;
    }

    pub fn production(&self, id: &ProdId) -> Option<&Production> {
        self.by_id.get(id).map(|&i| &self.productions[i])
    }

    pub fn production_at(&self, idx: usize) -> &Production {
        &self.productions[idx]
    }

    pub fn productions_of(&self, sort: &Sort) -> &[usize] {
        self.by_sort.get(sort).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_declared(&self, sort: &Sort) -> bool {
        sort.is_builtin() || self.declared.contains(sort)
    }

    pub fn is_token_sort(&self, sort: &Sort) -> bool {
        self.token_sorts.contains(sort)
    }

    /// Does a term of sort `child` also inhabit `wanted`?
    pub fn fits(&self, child: &Sort, wanted: &Sort) -> bool {
        wanted.is_k()
            || child == wanted
            || self.upward.get(child).map_or(false, |ups| ups.contains(wanted))
    }

    /// Principal sort of a term. Variables report their annotation; rewrites
    /// have no sort.
    pub fn sort_of(&self, t: &Term) -> Sort {
        match t {
            Term::Variable { sort, .. } => sort.clone(),
            Term::Token { sort, .. } => sort.clone(),
            Term::Empty(s) => s.clone(),
            Term::List { .. } => Sort::list(),
            Term::Map { .. } => Sort::map(),
            Term::Apply { prod, .. } => {
                if builtin::is_builtin(prod.as_str()) {
                    match prod.as_str() {
                        builtin::MAP_UPDATE | builtin::BIND => Sort::map(),
                        builtin::PLUS_INT => Sort::int(),
                        builtin::LOOKUP_OR_DEFAULT => Sort::k(),
                        _ => Sort::bool(),
                    }
                } else {
                    self.production(prod)
                        .map(|p| p.sort.clone())
                        .unwrap_or_else(|| Sort::new(prod.sort_name()))
                }
            }
            Term::Rewrite { .. } => Sort::k(),
        }
    }

    /// Does ground-or-pattern term `t` inhabit `wanted`?
    pub fn term_fits(&self, t: &Term, wanted: &Sort) -> bool {
        self.fits(&self.sort_of(t), wanted)
    }
}
