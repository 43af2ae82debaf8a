//! Rule classification and definition lints.
//!
//! Synthesis needs to know, for every rule, which variables and tokens
//! carry information across the cells and which are one-sided. This module
//! computes that split — [`RuleInfo`] — and checks the assumptions the
//! synthesized rules rely on ([`lint_definition`]).
//!
//! Classification counts every named variable and every token leaf of the
//! rule's cell bodies. A cell without `=>` contributes to both sides.
//! Production literals are part of the term structure (they live in the
//! production id, not in a leaf), so they are never classified; the same
//! goes for anything mentioned only in the side condition, which reads
//! bindings but does not move information between the models.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use crate::frontend::{Definition, RuleDecl};
use crate::term::{ElemsAt, RwSide, Sort, Term, VarKind};

/// How one rule's variables and tokens split across the rewrite arrow.
///
/// All four lists are pairwise disjoint, cover every named variable and
/// token of the rule body, and keep first-occurrence order as written.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleInfo {
    pub rule_id: usize,
    /// On both sides of `=>`, spanning different cells: the values the two
    /// models share.
    pub common: Vec<Term>,
    /// On both sides but within a single cell (rest variables and other
    /// anchors); they never enter a store key.
    pub context_vars: Vec<Term>,
    /// Only on the left-hand side: lost when rewriting left-to-right.
    pub miss_r: Vec<Term>,
    /// Only on the right-hand side: invented when rewriting left-to-right.
    pub miss_l: Vec<Term>,
}

/// Identity of a classified item: variables by name, tokens by sort and
/// text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ItemKey {
    Var(String),
    Tok(String, String),
}

fn item_key(t: &Term) -> Option<ItemKey> {
    match t {
        Term::Variable {
            name,
            kind: VarKind::Named,
            ..
        } => Some(ItemKey::Var(name.clone())),
        Term::Token { sort, text } => Some(ItemKey::Tok(sort.0.clone(), text.clone())),
        _ => None,
    }
}

/// Visits every subterm in the order it appears in the source text. This
/// differs from a plain structural walk for collections whose rest variable
/// is written first (`More [S]`, `Cp:Map K |-> V`).
fn text_order_walk(t: &Term, f: &mut impl FnMut(&Term)) {
    f(t);
    match t {
        Term::Variable { .. } | Term::Token { .. } | Term::Empty(_) => {}
        Term::Apply { args, .. } => {
            for a in args {
                text_order_walk(a, f);
            }
        }
        Term::List { elems, rest, at } => {
            let rest_first = matches!(at, ElemsAt::Back);
            if rest_first {
                if let Some(r) = rest {
                    text_order_walk(r, f);
                }
            }
            for e in elems {
                text_order_walk(e, f);
            }
            if !rest_first {
                if let Some(r) = rest {
                    text_order_walk(r, f);
                }
            }
        }
        Term::Map { binds, rest } => {
            if let Some(r) = rest {
                text_order_walk(r, f);
            }
            for (k, v) in binds {
                text_order_walk(k, f);
                text_order_walk(v, f);
            }
        }
        Term::Rewrite { lhs, rhs } => {
            text_order_walk(lhs, f);
            text_order_walk(rhs, f);
        }
    }
}

#[derive(Default)]
struct Occurrence {
    term: Option<Term>,
    order: usize,
    on_lhs: bool,
    on_rhs: bool,
    cells: BTreeSet<String>,
}

/// Classifies one rule's variables and tokens.
pub fn analyze_rule(rule: &RuleDecl) -> RuleInfo {
    let mut occs: BTreeMap<ItemKey, Occurrence> = BTreeMap::new();
    let mut next_order = 0usize;
    for (cell, body) in &rule.cells {
        // First pass fixes source order and the representative term.
        text_order_walk(body, &mut |t| {
            if let Some(key) = item_key(t) {
                let occ = occs.entry(key).or_default();
                if occ.term.is_none() {
                    occ.term = Some(t.clone());
                    occ.order = next_order;
                    next_order += 1;
                }
            }
        });
        // Second pass records sides; a cell without `=>` projects the same
        // term to both.
        for (side, is_lhs) in [(RwSide::Lhs, true), (RwSide::Rhs, false)] {
            let proj = body.project(side);
            text_order_walk(&proj, &mut |t| {
                if let Some(key) = item_key(t) {
                    let occ = occs.entry(key).or_default();
                    if is_lhs {
                        occ.on_lhs = true;
                    } else {
                        occ.on_rhs = true;
                    }
                    occ.cells.insert(cell.clone());
                }
            });
        }
    }

    let mut items: Vec<Occurrence> = occs.into_values().collect();
    items.sort_by_key(|o| o.order);

    let mut info = RuleInfo {
        rule_id: rule.id,
        common: Vec::new(),
        context_vars: Vec::new(),
        miss_r: Vec::new(),
        miss_l: Vec::new(),
    };
    for occ in items {
        let term = occ.term.expect("every recorded item has a term");
        match (occ.on_lhs, occ.on_rhs) {
            (true, true) if occ.cells.len() > 1 => info.common.push(term),
            (true, true) => info.context_vars.push(term),
            (true, false) => info.miss_r.push(term),
            (false, true) => info.miss_l.push(term),
            (false, false) => unreachable!("item recorded without a side"),
        }
    }
    info
}

/// Classifies every rule of a definition, in rule order.
pub fn analyze_definition(def: &Definition) -> Vec<RuleInfo> {
    def.rules.iter().map(analyze_rule).collect()
}

// ---------------------------------------------------------------------------
// Lints
// ---------------------------------------------------------------------------

pub const LHS_OVERLAP: &str = "lhs-overlap";
pub const RHS_OVERLAP: &str = "rhs-overlap";
pub const PLACEHOLDER_REMAINING: &str = "placeholder-remaining";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    /// Rules involved, in ascending id order.
    pub rules: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]: {}", self.severity, self.code, self.message)
    }
}

pub fn has_lint_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Replaces every variable with an anonymous hole, keeping constructors and
/// tokens: the shape a pattern matches, ignoring what it binds.
fn skeleton(t: &Term) -> Term {
    match t {
        Term::Variable { .. } => Term::Variable {
            name: "_".into(),
            sort: Sort::k(),
            kind: VarKind::Anonymous,
        },
        Term::Token { .. } | Term::Empty(_) => t.clone(),
        Term::Apply { prod, args } => Term::Apply {
            prod: prod.clone(),
            args: args.iter().map(skeleton).collect(),
        },
        Term::List { elems, rest, at } => Term::List {
            elems: elems.iter().map(skeleton).collect(),
            rest: rest.as_ref().map(|r| Box::new(skeleton(r))),
            at: *at,
        },
        Term::Map { binds, rest } => Term::Map {
            binds: binds
                .iter()
                .map(|(k, v)| (skeleton(k), skeleton(v)))
                .collect(),
            rest: rest.as_ref().map(|r| Box::new(skeleton(r))),
        },
        Term::Rewrite { .. } => unreachable!("skeletons are taken per side"),
    }
}

/// A rule's matching shape on one side: per-cell skeletons, keyed by cell
/// name so the order cells are written in does not matter.
fn side_skeleton(rule: &RuleDecl, side: RwSide) -> BTreeMap<String, Term> {
    rule.cells
        .iter()
        .map(|(cell, body)| (cell.clone(), skeleton(&body.project(side))))
        .collect()
}

/// Checks the assumptions synthesis relies on.
///
/// Overlap detection deliberately approximates: two rules are flagged when
/// their per-cell pattern skeletons are identical (variables erased).
/// Deciding real pattern-set intersection under side conditions is not
/// attempted; identical skeletons are the cases that break store keying in
/// practice. Left-side overlaps are warnings — the engine still picks
/// deterministically by priority and id — and right-side overlaps are
/// informational, since store keys embed the rule id anyway.
pub fn lint_definition(def: &Definition) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for rule in &def.rules {
        let mut ns: Vec<u32> = Vec::new();
        let mut record = |t: &Term| {
            if let Term::Variable {
                kind: VarKind::Placeholder(n),
                ..
            } = t
            {
                ns.push(*n);
            }
        };
        for (_, body) in &rule.cells {
            body.for_each(&mut record);
        }
        if let Some(cond) = &rule.requires {
            cond.for_each(&mut record);
        }
        ns.sort_unstable();
        ns.dedup();
        if !ns.is_empty() {
            let list = ns
                .iter()
                .map(|n| format!("?{n}?"))
                .collect::<Vec<_>>()
                .join(", ");
            out.push(Diagnostic {
                severity: Severity::Error,
                code: PLACEHOLDER_REMAINING,
                rules: vec![rule.id],
                message: format!("rule {} still contains {list}; fill defaults first", rule.id),
            });
        }
    }

    let lhs: Vec<_> = def
        .rules
        .iter()
        .map(|r| side_skeleton(r, RwSide::Lhs))
        .collect();
    let rhs: Vec<_> = def
        .rules
        .iter()
        .map(|r| side_skeleton(r, RwSide::Rhs))
        .collect();
    for i in 0..def.rules.len() {
        for j in i + 1..def.rules.len() {
            let (a, b) = (def.rules[i].id, def.rules[j].id);
            if lhs[i] == lhs[j] {
                out.push(Diagnostic {
                    severity: Severity::Warning,
                    code: LHS_OVERLAP,
                    rules: vec![a, b],
                    message: format!(
                        "rules {a} and {b} match the same left-hand shapes; \
                         the engine picks by priority, then lower id"
                    ),
                });
            }
            if rhs[i] == rhs[j] {
                out.push(Diagnostic {
                    severity: Severity::Info,
                    code: RHS_OVERLAP,
                    rules: vec![a, b],
                    message: format!(
                        "rules {a} and {b} produce the same right-hand shapes; \
                         store keys still tell them apart"
                    ),
                });
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_definition;
    use proptest::prelude::*;

    // -----------------------------------------------------------------
    // Independent oracle: classify by brute-force membership scans over
    // each side's projection, with its own traversal and its own keys.
    // Order is not checked here — only set content and the partition
    // invariants.
    // -----------------------------------------------------------------

    fn oracle_leaves(t: &Term, out: &mut Vec<String>) {
        match t {
            Term::Variable { name, kind, .. } => {
                if matches!(kind, VarKind::Named) {
                    out.push(format!("var {name}"));
                }
            }
            Term::Token { sort, text } => out.push(format!("tok {sort} {text:?}")),
            Term::Empty(_) => {}
            Term::Apply { args, .. } => args.iter().for_each(|a| oracle_leaves(a, out)),
            Term::List { elems, rest, .. } => {
                elems.iter().for_each(|e| oracle_leaves(e, out));
                if let Some(r) = rest {
                    oracle_leaves(r, out);
                }
            }
            Term::Map { binds, rest } => {
                binds.iter().for_each(|(k, v)| {
                    oracle_leaves(k, out);
                    oracle_leaves(v, out);
                });
                if let Some(r) = rest {
                    oracle_leaves(r, out);
                }
            }
            Term::Rewrite { lhs, rhs } => {
                oracle_leaves(lhs, out);
                oracle_leaves(rhs, out);
            }
        }
    }

    struct OracleSets {
        common: BTreeSet<String>,
        context: BTreeSet<String>,
        miss_r: BTreeSet<String>,
        miss_l: BTreeSet<String>,
    }

    fn oracle_classify(rule: &RuleDecl) -> OracleSets {
        let mut lhs_cells: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut rhs_cells: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (cell, body) in &rule.cells {
            let mut l = Vec::new();
            oracle_leaves(&body.project(RwSide::Lhs), &mut l);
            for item in l {
                lhs_cells.entry(item).or_default().insert(cell.clone());
            }
            let mut r = Vec::new();
            oracle_leaves(&body.project(RwSide::Rhs), &mut r);
            for item in r {
                rhs_cells.entry(item).or_default().insert(cell.clone());
            }
        }
        let mut sets = OracleSets {
            common: BTreeSet::new(),
            context: BTreeSet::new(),
            miss_r: BTreeSet::new(),
            miss_l: BTreeSet::new(),
        };
        let all: BTreeSet<String> = lhs_cells.keys().chain(rhs_cells.keys()).cloned().collect();
        for item in all {
            let ls = lhs_cells.get(&item);
            let rs = rhs_cells.get(&item);
            match (ls, rs) {
                (Some(ls), Some(rs)) => {
                    let cells: BTreeSet<&String> = ls.iter().chain(rs.iter()).collect();
                    if cells.len() > 1 {
                        sets.common.insert(item);
                    } else {
                        sets.context.insert(item);
                    }
                }
                (Some(_), None) => {
                    sets.miss_r.insert(item);
                }
                (None, Some(_)) => {
                    sets.miss_l.insert(item);
                }
                (None, None) => unreachable!(),
            }
        }
        sets
    }

    fn oracle_key(t: &Term) -> String {
        let mut v = Vec::new();
        oracle_leaves(t, &mut v);
        assert_eq!(v.len(), 1, "classified items are leaves");
        v.pop().unwrap()
    }

    fn assert_matches_oracle(rule: &RuleDecl) {
        let info = analyze_rule(rule);
        let sets = oracle_classify(rule);
        let got_common: BTreeSet<String> = info.common.iter().map(oracle_key).collect();
        let got_context: BTreeSet<String> = info.context_vars.iter().map(oracle_key).collect();
        let got_miss_r: BTreeSet<String> = info.miss_r.iter().map(oracle_key).collect();
        let got_miss_l: BTreeSet<String> = info.miss_l.iter().map(oracle_key).collect();
        assert_eq!(got_common, sets.common, "common for rule {}", rule.id);
        assert_eq!(got_context, sets.context, "context for rule {}", rule.id);
        assert_eq!(got_miss_r, sets.miss_r, "miss_r for rule {}", rule.id);
        assert_eq!(got_miss_l, sets.miss_l, "miss_l for rule {}", rule.id);
        // The four lists partition the items: pairwise disjoint and total.
        let mut all = Vec::new();
        all.extend(got_common);
        all.extend(got_context);
        all.extend(got_miss_r);
        all.extend(got_miss_l);
        let dedup: BTreeSet<&String> = all.iter().collect();
        assert_eq!(dedup.len(), all.len(), "classes overlap for rule {}", rule.id);
    }

    // -----------------------------------------------------------------

    const PAIR_DEF: &str = r#"
syntax Expr ::= Int | Id
syntax HCSPStat ::= "log" "(" Expr ")" | Id ":=" Expr
syntax UMLStat ::= Id "-[" Color "]>" Id ":" Expr
syntax Color

configuration
  <m> $PGM:Expr </m>
  <n> .List </n>
  <s> .K </s>

rule
  <m> [log(A), L := R] HCSPs:List => HCSPs </m>
  <n> UMLs:List => UMLs [P -[ #red ]> P : A] </n>
  <s> P </s>
"#;

    fn names(terms: &[Term]) -> Vec<String> {
        terms
            .iter()
            .map(|t| match t {
                Term::Variable { name, .. } => name.clone(),
                Term::Token { text, .. } => text.clone(),
                other => panic!("unexpected item {other}"),
            })
            .collect()
    }

    #[test]
    fn paired_statement_rule_classification() {
        let def = parse_definition(PAIR_DEF).unwrap();
        let info = analyze_rule(&def.rules[0]);
        assert_eq!(names(&info.common), vec!["A", "P"]);
        assert_eq!(names(&info.miss_r), vec!["L", "R"]);
        assert_eq!(names(&info.miss_l), vec!["#red"]);
        assert_eq!(names(&info.context_vars), vec!["HCSPs", "UMLs"]);
        assert_matches_oracle(&def.rules[0]);
    }

    #[test]
    fn identity_rule_is_pure_context() {
        let def = parse_definition(
            r#"
syntax A ::= "a"
configuration <m> $PGM:A </m> <n> .K </n>
rule <m> X => X </m>
"#,
        )
        .unwrap();
        let info = analyze_rule(&def.rules[0]);
        assert!(info.common.is_empty());
        assert!(info.miss_r.is_empty());
        assert!(info.miss_l.is_empty());
        assert_eq!(names(&info.context_vars), vec!["X"]);
    }

    #[test]
    fn anonymous_variables_are_not_classified() {
        let def = parse_definition(
            r#"
syntax A ::= "a"
configuration <m> $PGM:A </m> <n> .K </n>
rule <m> [_, X] Rest:List => Rest </m>
"#,
        )
        .unwrap();
        let info = analyze_rule(&def.rules[0]);
        assert_eq!(names(&info.miss_r), vec!["X"]);
        assert_eq!(names(&info.context_vars), vec!["Rest"]);
        assert!(info.common.is_empty() && info.miss_l.is_empty());
    }

    #[test]
    fn tokens_on_one_side_are_missing_values() {
        // The 0 token is invented going right; the shared name is common.
        let def = parse_definition(
            r#"
syntax Person ::= "person" Id | "citizen" Id Int
configuration <m> $PGM:Person </m> <n> .List </n>
rule
  <m> [person N] Rest:List => Rest </m>
  <n> Out:List => Out [citizen N 0] </n>
"#,
        )
        .unwrap();
        let info = analyze_rule(&def.rules[0]);
        assert_eq!(names(&info.common), vec!["N"]);
        assert_eq!(names(&info.miss_l), vec!["0"]);
        assert!(info.miss_r.is_empty());
        assert_matches_oracle(&def.rules[0]);
    }

    #[test]
    fn classification_survives_print_and_reparse() {
        let def = parse_definition(PAIR_DEF).unwrap();
        let printed = crate::frontend::print_definition(&def);
        let reparsed = parse_definition(&printed).unwrap();
        assert_eq!(analyze_definition(&def), analyze_definition(&reparsed));
    }

    #[test]
    fn duplicated_rule_reports_one_lhs_overlap() {
        let def = parse_definition(
            r#"
syntax A ::= "a" | "b"
configuration <m> $PGM:A </m> <n> .K </n>
rule <m> a => b </m>
rule <m> a => b </m>
rule <m> b => a </m>
"#,
        )
        .unwrap();
        let diags = lint_definition(&def);
        let lhs: Vec<_> = diags.iter().filter(|d| d.code == LHS_OVERLAP).collect();
        assert_eq!(lhs.len(), 1);
        assert_eq!(lhs[0].rules, vec![1, 2]);
        assert_eq!(lhs[0].severity, Severity::Warning);
        // The duplicate also produces the same output shape.
        let rhs: Vec<_> = diags.iter().filter(|d| d.code == RHS_OVERLAP).collect();
        assert_eq!(rhs.len(), 1);
        assert_eq!(rhs[0].severity, Severity::Info);
        assert!(!has_lint_errors(&diags));
    }

    #[test]
    fn variable_names_do_not_affect_overlap() {
        let def = parse_definition(
            r#"
syntax A ::= "a"
configuration <m> $PGM:A </m> <n> .K </n>
rule <m> [X] Rest:List => Rest </m>
rule <m> [Y] Tail:List => Tail </m>
"#,
        )
        .unwrap();
        let diags = lint_definition(&def);
        assert!(diags.iter().any(|d| d.code == LHS_OVERLAP));
    }

    #[test]
    fn remaining_placeholders_are_errors() {
        let def = parse_definition(
            r#"
syntax A ::= "a"
configuration <m> $PGM:A </m> <n> .K </n>
rule <m> a => ?2? </m>
"#,
        )
        .unwrap();
        let diags = lint_definition(&def);
        assert!(has_lint_errors(&diags));
        let d = diags
            .iter()
            .find(|d| d.code == PLACEHOLDER_REMAINING)
            .unwrap();
        assert_eq!(d.rules, vec![1]);
        assert!(d.message.contains("?2?"));
    }

    #[test]
    fn clean_definition_lints_clean() {
        let def = parse_definition(PAIR_DEF).unwrap();
        assert!(lint_definition(&def).is_empty());
    }

    // -----------------------------------------------------------------
    // Random rules against the oracle.
    // -----------------------------------------------------------------

    fn leaf_strategy() -> impl Strategy<Value = Term> {
        prop_oneof![
            prop::sample::select(vec!["A", "B", "C", "D"]).prop_map(|n| Term::var(n, Sort::k())),
            prop::sample::select(vec![0i64, 1, 2]).prop_map(Term::int),
            prop::sample::select(vec!["x", "y"]).prop_map(Term::id),
            Just(Term::Variable {
                name: "_7".into(),
                sort: Sort::k(),
                kind: VarKind::Anonymous,
            }),
        ]
    }

    fn tree_strategy() -> impl Strategy<Value = Term> {
        leaf_strategy().prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4)
                    .prop_map(|args| Term::apply("N ::= \"n\" K K", args)),
                (prop::collection::vec(inner.clone(), 1..3), any::<bool>()).prop_map(
                    |(elems, with_rest)| Term::List {
                        elems,
                        rest: with_rest.then(|| Box::new(Term::var("Rest", Sort::list()))),
                        at: ElemsAt::Front,
                    }
                ),
                (inner.clone(), inner).prop_map(|(k, v)| Term::Map {
                    binds: vec![(k, v)],
                    rest: Some(Box::new(Term::var("Store", Sort::map()))),
                }),
            ]
        })
    }

    fn body_strategy() -> impl Strategy<Value = Term> {
        (tree_strategy(), proptest::option::of(tree_strategy())).prop_map(|(lhs, rhs)| match rhs {
            None => lhs,
            Some(rhs) => Term::rewrite(lhs, rhs),
        })
    }

    proptest! {
        #[test]
        fn random_rules_match_oracle(
            bodies in prop::collection::vec(body_strategy(), 1..4),
        ) {
            let cells = ["m", "n", "s"];
            let rule = RuleDecl {
                id: 1,
                cells: bodies
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| (cells[i].to_string(), b))
                    .collect(),
                requires: None,
                priority: 50,
            };
            assert_matches_oracle(&rule);
        }
    }
}
