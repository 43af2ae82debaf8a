//! Earley parsing over the runtime grammar tables.
//!
//! Cell bodies and model text are parsed against grammars that only exist at
//! runtime, so the parser is a chart parser rather than generated code. The
//! grammar builder guarantees there are no empty productions, which keeps the
//! chart logic to the three classic operations (predict, scan, complete).
//!
//! Single-nonterminal productions are injections: they complete like any
//! production but contribute no tree node, the child stands in directly.
//! Ambiguity is therefore judged on the *collapsed* trees — two derivations
//! that differ only in injection chains are the same term, while two distinct
//! collapsed trees are a reportable ambiguity.

use std::collections::{BTreeMap, BTreeSet};

use crate::grammar::{Grammar, ProdItem};
use crate::term::{Sort, Term, VarKind};

use super::FrontendError;

/// Leaf tokens fed to the parser: everything a grammar slot can consume.
#[derive(Debug, Clone, PartialEq)]
pub enum UTok {
    /// Pattern variable (named, anonymous with its hidden name already
    /// assigned, or a `?N?` placeholder). `sort` is the annotation if any.
    Var {
        name: String,
        sort: Option<Sort>,
        kind: VarKind,
    },
    Int(String),
    Str(String),
    Hash(String),
    /// `true` / `false`.
    Bool(String),
    /// Ground identifier token (models only).
    Id(String),
    /// Grammar literal.
    Lit(String),
}

/// A leaf token with the 1-based source line it started on.
#[derive(Debug, Clone, PartialEq)]
pub struct UTokAt {
    pub tok: UTok,
    pub line: usize,
}

impl std::fmt::Display for UTok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UTok::Var { name, sort: None, .. } => write!(f, "{name}"),
            UTok::Var {
                name,
                sort: Some(s),
                ..
            } => write!(f, "{name}:{s}"),
            UTok::Int(t) | UTok::Hash(t) | UTok::Bool(t) | UTok::Id(t) | UTok::Lit(t) => {
                write!(f, "{t}")
            }
            UTok::Str(t) => write!(f, "{t:?}"),
        }
    }
}

/// The term a token yields when consumed at a slot of sort `want`, if it
/// fits there.
fn leaf_match(g: &Grammar, tok: &UTok, want: &Sort) -> Option<Term> {
    match tok {
        UTok::Var { name, sort, kind } => {
            let ok = match sort {
                None => true,
                // An annotated variable fits a slot when the annotation and
                // the slot sort are related in either direction: the
                // annotation may narrow the slot (Expr slot, Int variable) or
                // the variable may be deliberately wide (K variable at any
                // slot).
                Some(s) => {
                    want.is_k()
                        || s.is_k()
                        || g.fits(s, want)
                        || g.fits(want, s)
                }
            };
            if !ok {
                return None;
            }
            let var_sort = match kind {
                // Placeholders adopt the slot sort: that is what tells the
                // defaults machinery which grammar to parse replacements at.
                VarKind::Placeholder(_) => sort.clone().unwrap_or_else(|| want.clone()),
                _ => sort.clone().unwrap_or_else(Sort::k),
            };
            Some(Term::Variable {
                name: name.clone(),
                sort: var_sort,
                kind: kind.clone(),
            })
        }
        UTok::Int(t) => (*want == Sort::int()).then(|| Term::Token {
            sort: Sort::int(),
            text: t.clone(),
        }),
        UTok::Str(t) => (*want == Sort::string()).then(|| Term::Token {
            sort: Sort::string(),
            text: t.clone(),
        }),
        UTok::Bool(t) => (*want == Sort::bool()).then(|| Term::Token {
            sort: Sort::bool(),
            text: t.clone(),
        }),
        UTok::Id(t) => (*want == Sort::id()).then(|| Term::Token {
            sort: Sort::id(),
            text: t.clone(),
        }),
        UTok::Hash(t) => g.is_token_sort(want).then(|| Term::Token {
            sort: want.clone(),
            text: t.clone(),
        }),
        UTok::Lit(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Item {
    prod: usize,
    dot: usize,
    origin: usize,
}

/// Parses `toks` as exactly one of the `starts` sorts spanning the whole
/// input. Fails with `Parse` when no sort covers the input and with
/// `Ambiguous` when at least two distinct collapsed trees do.
pub fn parse_sorts(g: &Grammar, toks: &[UTokAt], starts: &[Sort]) -> Result<Term, FrontendError> {
    let first_line = toks.first().map(|t| t.line).unwrap_or(1);
    if toks.is_empty() {
        return Err(FrontendError::Parse {
            line: first_line,
            message: "empty input".into(),
        });
    }

    // Leaf-only shortcut: a start sort without productions (builtin leaf or
    // token sort) can still accept a single token.
    let mut leaf_hits: Vec<Term> = Vec::new();
    if toks.len() == 1 {
        for s in starts {
            if let Some(t) = leaf_match(g, &toks[0].tok, s) {
                if !leaf_hits.contains(&t) {
                    leaf_hits.push(t);
                }
            }
        }
    }

    let n = toks.len();
    let mut sets: Vec<Vec<Item>> = vec![Vec::new(); n + 1];
    let mut seen: Vec<BTreeSet<Item>> = vec![BTreeSet::new(); n + 1];
    // Completed spans: (sort, origin) -> set of (prod, end).
    let mut completed: BTreeMap<(Sort, usize), BTreeSet<(usize, usize)>> = BTreeMap::new();

    let push = |sets: &mut Vec<Vec<Item>>, seen: &mut Vec<BTreeSet<Item>>, at: usize, it: Item| {
        if seen[at].insert(it) {
            sets[at].push(it);
        }
    };

    for s in starts {
        for &p in g.productions_of(s) {
            push(&mut sets, &mut seen, 0, Item { prod: p, dot: 0, origin: 0 });
        }
    }

    for j in 0..=n {
        let mut idx = 0;
        while idx < sets[j].len() {
            let it = sets[j][idx];
            idx += 1;
            let prod = g.production_at(it.prod);
            if it.dot == prod.items.len() {
                // Complete.
                completed
                    .entry((prod.sort.clone(), it.origin))
                    .or_default()
                    .insert((it.prod, j));
                let parents: Vec<Item> = sets[it.origin]
                    .iter()
                    .copied()
                    .filter(|p2| {
                        let pp = g.production_at(p2.prod);
                        matches!(pp.items.get(p2.dot), Some(ProdItem::Nt(s2)) if *s2 == prod.sort)
                    })
                    .collect();
                for p2 in parents {
                    push(
                        &mut sets,
                        &mut seen,
                        j,
                        Item { prod: p2.prod, dot: p2.dot + 1, origin: p2.origin },
                    );
                }
                continue;
            }
            match &prod.items[it.dot] {
                ProdItem::Literal(l) => {
                    if j < n {
                        if let UTok::Lit(t) = &toks[j].tok {
                            if t == l {
                                push(
                                    &mut sets,
                                    &mut seen,
                                    j + 1,
                                    Item { prod: it.prod, dot: it.dot + 1, origin: it.origin },
                                );
                            }
                        }
                    }
                }
                ProdItem::Nt(x) => {
                    // Scan a leaf.
                    if j < n && leaf_match(g, &toks[j].tok, x).is_some() {
                        push(
                            &mut sets,
                            &mut seen,
                            j + 1,
                            Item { prod: it.prod, dot: it.dot + 1, origin: it.origin },
                        );
                    }
                    // Predict.
                    for &p in g.productions_of(x) {
                        push(&mut sets, &mut seen, j, Item { prod: p, dot: 0, origin: j });
                    }
                    // Instant completion for spans already closed at j
                    // (handles right recursion completing later via the
                    // parent scan above; nothing extra needed here because
                    // no production is empty).
                }
            }
        }
    }

    // Collect full-span derivations per start sort.
    let mut trees: Vec<Term> = leaf_hits;
    let mut memo: BTreeMap<(Sort, usize, usize), Vec<Term>> = BTreeMap::new();
    for s in starts {
        let derived = derive_sort(g, toks, &completed, &mut memo, s, 0, n);
        for t in derived {
            if !trees.contains(&t) {
                trees.push(t);
            }
            if trees.len() >= 2 {
                break;
            }
        }
        if trees.len() >= 2 {
            break;
        }
    }

    match trees.len() {
        0 => {
            // Furthest position with chart activity gives the best error
            // location.
            let far = (0..=n).rev().find(|&j| !sets[j].is_empty()).unwrap_or(0);
            let (line, what) = if far < n {
                (toks[far].line, format!("unexpected `{}`", toks[far].tok))
            } else {
                (toks[n - 1].line, "unexpected end of input".to_string())
            };
            let wanted: Vec<String> = starts.iter().map(|s| s.0.clone()).collect();
            Err(FrontendError::Parse {
                line,
                message: format!("{what} while parsing {}", wanted.join(" or ")),
            })
        }
        1 => Ok(trees.pop().unwrap()),
        _ => Err(FrontendError::Ambiguous {
            line: first_line,
            alt1: trees[0].to_string(),
            alt2: trees[1].to_string(),
        }),
    }
}

/// Enumerates up to two distinct collapsed trees of sort `want` spanning
/// `[i, j)`.
fn derive_sort(
    g: &Grammar,
    toks: &[UTokAt],
    completed: &BTreeMap<(Sort, usize), BTreeSet<(usize, usize)>>,
    memo: &mut BTreeMap<(Sort, usize, usize), Vec<Term>>,
    want: &Sort,
    i: usize,
    j: usize,
) -> Vec<Term> {
    let key = (want.clone(), i, j);
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    // Seed the memo to cut cycles (left recursion through injections).
    memo.insert(key.clone(), Vec::new());

    let mut out: Vec<Term> = Vec::new();
    // Leaf consumption of a single token.
    if j == i + 1 {
        if let Some(t) = leaf_match(g, &toks[i].tok, want) {
            out.push(t);
        }
    }
    if let Some(spans) = completed.get(&(want.clone(), i)) {
        let prods: Vec<usize> = spans
            .iter()
            .filter(|(_, end)| *end == j)
            .map(|(p, _)| *p)
            .collect();
        for p in prods {
            for t in derive_prod(g, toks, completed, memo, p, i, j) {
                if !out.contains(&t) {
                    out.push(t);
                }
                if out.len() >= 2 {
                    break;
                }
            }
            if out.len() >= 2 {
                break;
            }
        }
    }
    memo.insert(key, out.clone());
    out
}

/// Enumerates up to two distinct trees for production `p` spanning `[i, j)`.
fn derive_prod(
    g: &Grammar,
    toks: &[UTokAt],
    completed: &BTreeMap<(Sort, usize), BTreeSet<(usize, usize)>>,
    memo: &mut BTreeMap<(Sort, usize, usize), Vec<Term>>,
    p: usize,
    i: usize,
    j: usize,
) -> Vec<Term> {
    let prod = g.production_at(p);

    // Walks the production items, threading the input position and
    // collecting child terms for nonterminal items.
    fn go(
        g: &Grammar,
        toks: &[UTokAt],
        completed: &BTreeMap<(Sort, usize), BTreeSet<(usize, usize)>>,
        memo: &mut BTreeMap<(Sort, usize, usize), Vec<Term>>,
        items: &[ProdItem],
        pos: usize,
        end: usize,
        acc: &mut Vec<Term>,
        results: &mut Vec<Vec<Term>>,
    ) {
        if results.len() >= 2 {
            return;
        }
        match items.first() {
            None => {
                if pos == end {
                    results.push(acc.clone());
                }
            }
            Some(ProdItem::Literal(l)) => {
                if pos < end {
                    if let UTok::Lit(t) = &toks[pos].tok {
                        if t == l {
                            go(g, toks, completed, memo, &items[1..], pos + 1, end, acc, results);
                        }
                    }
                }
            }
            Some(ProdItem::Nt(x)) => {
                // Candidate split points: one-token leaves and completed
                // spans of sort `x` starting at `pos`.
                let mut ends: BTreeSet<usize> = BTreeSet::new();
                if pos < end && leaf_match(g, &toks[pos].tok, x).is_some() {
                    ends.insert(pos + 1);
                }
                if let Some(spans) = completed.get(&(x.clone(), pos)) {
                    for (_, e) in spans {
                        if *e <= end {
                            ends.insert(*e);
                        }
                    }
                }
                for mid in ends {
                    let subtrees = derive_sort(g, toks, completed, memo, x, pos, mid);
                    for t in subtrees {
                        acc.push(t);
                        go(g, toks, completed, memo, &items[1..], mid, end, acc, results);
                        acc.pop();
                        if results.len() >= 2 {
                            return;
                        }
                    }
                }
            }
        }
    }

    let mut child_lists: Vec<Vec<Term>> = Vec::new();
    let mut acc = Vec::new();
    go(
        g,
        toks,
        completed,
        memo,
        &prod.items,
        i,
        j,
        &mut acc,
        &mut child_lists,
    );

    let mut out = Vec::new();
    for children in child_lists {
        let t = if prod.is_injection() {
            // Transparent: the child stands in for the whole node. A
            // placeholder never arrives this way: it already matched the
            // outer sort directly, and admitting the injected copy would
            // duplicate the tree with a narrower adopted sort.
            let child = children.into_iter().next().expect("injection has one child");
            if matches!(&child, Term::Variable { kind: VarKind::Placeholder(_), .. }) {
                continue;
            }
            child
        } else {
            Term::Apply {
                prod: prod.id.clone(),
                args: children,
            }
        };
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}
