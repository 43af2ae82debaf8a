//! Execution certificates: portable evidence that a run was lawful.
//!
//! [`emit_certificate`] flattens a [`Trace`] into a value that names its
//! definition by digest and records every scheduling decision — which rule
//! fired, with which bindings, producing which state. [`check_certificate`]
//! replays those claims using only substitution, comparison, builtin
//! evaluation, and an applicability matcher of its own, so accepting a
//! certificate never requires trusting the engine that emitted it.
//!
//! A rejection is a value, not an error: it names the first offending step
//! and the way it offends. Step 0 stands for the header and the initial
//! state; a final state that could still rewrite is reported at the index of
//! the last step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{eval, State, Trace};
use crate::frontend::{print_definition, Definition, RuleDecl};
use crate::grammar::Grammar;
use crate::term::{
    canon_string, parse_canon, structurally_equal, substitute, RwSide, Sort, Substitution, Term,
    TermError, VarKind,
};

const FORMAT_NAME: &str = "kbx-cert";
const FORMAT_VERSION: &str = "1";

/// One recorded scheduling decision: rule `rule_id` fired under `binds`,
/// producing `next`. The pre-state is implied — the previous step's `next`,
/// or the certificate's initial state for the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct CertStep {
    pub rule_id: usize,
    pub binds: Substitution,
    pub next: State,
}

/// A full recorded run, pinned to one definition text by digest.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// Hex SHA-256 of the printed definition; see [`definition_digest`].
    pub digest: String,
    pub initial: State,
    pub steps: Vec<CertStep>,
}

/// Hex digest of the canonical definition text. Certificates name the
/// definition they certify by this value, so any change that survives a
/// reprint invalidates them, while formatting noise in the source file does
/// not.
pub fn definition_digest(def: &Definition) -> String {
    let hash = Sha256::digest(print_definition(def).as_bytes());
    let mut hex = String::with_capacity(2 * hash.len());
    for byte in hash {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Records a finished run as a checkable certificate.
pub fn emit_certificate(def: &Definition, trace: &Trace) -> Certificate {
    Certificate {
        digest: definition_digest(def),
        initial: trace.initial.clone(),
        steps: trace
            .steps
            .iter()
            .map(|s| CertStep {
                rule_id: s.rule_id,
                binds: s.binds.clone(),
                next: s.state.clone(),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Serializes a certificate. The output is line-oriented and deterministic:
/// a header naming the digest, an `initial` state block, then `step <id>` /
/// `next` blocks for every decision, closed by `end`. States and bindings
/// are written one per line as `name := term` with the term in canonical
/// form, which never spans lines.
pub fn certificate_text(cert: &Certificate) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{FORMAT_NAME} {FORMAT_VERSION} sha256:{}",
        cert.digest
    );
    out.push_str("initial\n");
    write_state(&cert.initial, &mut out);
    for step in &cert.steps {
        let _ = writeln!(out, "step {}", step.rule_id);
        for (name, value) in step.binds.iter() {
            let _ = writeln!(out, "{name} := {}", canon_string(value));
        }
        out.push_str("next\n");
        write_state(&step.next, &mut out);
    }
    out.push_str("end\n");
    out
}

fn write_state(state: &State, out: &mut String) {
    for (cell, value) in state.cells() {
        let _ = writeln!(out, "{cell} := {}", canon_string(value));
    }
}

#[derive(Error, Debug)]
pub enum CertParseError {
    #[error("line {line}: expected {expected}, found `{found}`")]
    Unexpected {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: {source}")]
    Term { line: usize, source: TermError },
}

fn unexpected(line: usize, expected: &str, found: &str) -> CertParseError {
    CertParseError::Unexpected {
        line,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// Parses the output of [`certificate_text`]. Strict: every line must be a
/// header, a block keyword, or a `name := term` entry, and nothing may
/// follow `end`.
pub fn parse_certificate(text: &str) -> Result<Certificate, CertParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .peekable();

    let (line, header) = lines
        .next()
        .ok_or_else(|| unexpected(1, "a certificate header", ""))?;
    let digest = match header.split_whitespace().collect::<Vec<_>>()[..] {
        [FORMAT_NAME, FORMAT_VERSION, rest] if rest.starts_with("sha256:") => {
            rest["sha256:".len()..].to_string()
        }
        _ => {
            return Err(unexpected(
                line,
                &format!("`{FORMAT_NAME} {FORMAT_VERSION} sha256:<hex>`"),
                header,
            ))
        }
    };

    expect_keyword(&mut lines, "initial")?;
    let initial = State::from_cells(read_entries(&mut lines)?);

    let mut steps = Vec::new();
    while let Some((_, l)) = lines.peek() {
        let Some(id_text) = l.strip_prefix("step ") else {
            break;
        };
        let (line, _) = lines.next().expect("peeked");
        let rule_id: usize = id_text
            .trim()
            .parse()
            .map_err(|_| unexpected(line, "a rule id after `step`", id_text))?;
        let theta = read_entries(&mut lines)?;
        let binds: Substitution = theta.iter().cloned().collect();
        if binds.len() != theta.len() {
            return Err(unexpected(line, "distinct binding names", "a duplicate"));
        }
        expect_keyword(&mut lines, "next")?;
        let next = State::from_cells(read_entries(&mut lines)?);
        steps.push(CertStep {
            rule_id,
            binds,
            next,
        });
    }

    expect_keyword(&mut lines, "end")?;
    if let Some((line, l)) = lines.next() {
        return Err(unexpected(line, "end of file", l));
    }
    Ok(Certificate {
        digest,
        initial,
        steps,
    })
}

fn expect_keyword<'a, I: Iterator<Item = (usize, &'a str)>>(
    lines: &mut std::iter::Peekable<I>,
    word: &str,
) -> Result<(), CertParseError> {
    match lines.next() {
        Some((_, l)) if l == word => Ok(()),
        Some((line, l)) => Err(unexpected(line, &format!("`{word}`"), l)),
        None => Err(unexpected(0, &format!("`{word}`"), "end of file")),
    }
}

/// Reads consecutive `name := term` lines. A line without the separator
/// ends the run; block keywords never contain it.
fn read_entries<'a, I: Iterator<Item = (usize, &'a str)>>(
    lines: &mut std::iter::Peekable<I>,
) -> Result<Vec<(String, Term)>, CertParseError> {
    let mut out = Vec::new();
    while let Some((_, l)) = lines.peek() {
        let Some((name, canon)) = l.split_once(" := ") else {
            break;
        };
        let (line, _) = lines.next().expect("peeked");
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(unexpected(line, "a cell or variable name", name));
        }
        let term =
            parse_canon(canon).map_err(|source| CertParseError::Term { line, source })?;
        out.push((name.to_string(), term));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checking
// ---------------------------------------------------------------------------

/// Why a certificate was rejected, attached to the step that exposed it.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    #[error("digest {found} does not name this definition (expected {expected})")]
    DigestMismatch { expected: String, found: String },
    #[error("state does not fit the configuration: {detail}")]
    MalformedState { detail: String },
    #[error("no rule has id {rule_id}")]
    UnknownRule { rule_id: usize },
    #[error("bindings do not fit the rule: {detail}")]
    BadBindings { detail: String },
    #[error("cell <{cell}> does not match the rule under the recorded bindings")]
    LhsMismatch { cell: String },
    #[error("cell <{cell}> does not continue from the preceding state")]
    ChainBreak { cell: String },
    #[error("side condition does not hold: {detail}")]
    ConditionFalse { detail: String },
    #[error("cell <{cell}> is not what the rule produces")]
    RhsMismatch { cell: String },
    #[error("rule {rule_id} is scheduled earlier and still applies")]
    EarlierRuleApplies { rule_id: usize },
    #[error("rule {rule_id} still applies to the final state")]
    NotStuck { rule_id: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Accepted { steps: usize },
    Rejected { step: usize, reason: RejectReason },
}

impl CheckOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, CheckOutcome::Accepted { .. })
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckOutcome::Accepted { steps } => write!(f, "accepted ({steps} steps)"),
            CheckOutcome::Rejected { step, reason } => {
                write!(f, "rejected at step {step}: {reason}")
            }
        }
    }
}

/// Verifies a certificate against a definition.
///
/// After the digest, every step must hold up to replay: the bindings cover
/// exactly the variables the rule's match side declares, rebuilding that
/// match side reproduces the preceding state, the side condition evaluates
/// to true, rebuilding the rewrite side (and leaving unmentioned cells
/// alone) reproduces the recorded next state, and no rule scheduled earlier
/// matches the preceding state. Finally the last state must admit no rule at
/// all — the run not only took lawful steps, it finished.
pub fn check_certificate(def: &Definition, cert: &Certificate) -> CheckOutcome {
    let expected = definition_digest(def);
    if cert.digest != expected {
        return rejected(
            0,
            RejectReason::DigestMismatch {
                expected,
                found: cert.digest.clone(),
            },
        );
    }
    if let Err(detail) = cells_fit(def, &cert.initial) {
        return rejected(0, RejectReason::MalformedState { detail });
    }

    let mut prev = &cert.initial;
    for (i, step) in cert.steps.iter().enumerate() {
        let index = i + 1;
        if let Err(detail) = cells_fit(def, &step.next) {
            return rejected(index, RejectReason::MalformedState { detail });
        }
        let Some(rule) = def.rule(step.rule_id) else {
            return rejected(
                index,
                RejectReason::UnknownRule {
                    rule_id: step.rule_id,
                },
            );
        };
        if let Err(reason) = check_step(def, rule, prev, step) {
            return rejected(index, reason);
        }
        prev = &step.next;
    }

    // The run must have stopped for a reason: nothing applies any more.
    if let Some(rule) = first_applicable(def, prev, None) {
        return rejected(
            cert.steps.len(),
            RejectReason::NotStuck { rule_id: rule.id },
        );
    }
    CheckOutcome::Accepted {
        steps: cert.steps.len(),
    }
}

fn rejected(step: usize, reason: RejectReason) -> CheckOutcome {
    CheckOutcome::Rejected { step, reason }
}

fn check_step(
    def: &Definition,
    rule: &RuleDecl,
    prev: &State,
    step: &CertStep,
) -> Result<(), RejectReason> {
    let theta = &step.binds;
    check_bindings(&def.grammar, rule, theta)?;

    // Rebuilding the match side must reproduce the preceding state. When it
    // does not, distinguish a lie about the match from a step recorded after
    // the wrong predecessor: the latter is still coherent with its own
    // outcome.
    for (cell, body) in &rule.cells {
        let built = substitute(&body.project(RwSide::Lhs), theta)
            .map_err(|e| RejectReason::BadBindings {
                detail: e.to_string(),
            })?;
        if !ground_eq(&built, prev.cell(cell)) {
            let reason = if step_coheres(rule, theta, &step.next) {
                RejectReason::ChainBreak { cell: cell.clone() }
            } else {
                RejectReason::LhsMismatch { cell: cell.clone() }
            };
            return Err(reason);
        }
    }

    if let Some(cond) = &rule.requires {
        let ground = substitute(cond, theta).map_err(|e| RejectReason::ConditionFalse {
            detail: e.to_string(),
        })?;
        match eval(&ground) {
            Ok(v) if v == Term::bool(true) => {}
            Ok(v) => {
                return Err(RejectReason::ConditionFalse {
                    detail: format!("evaluated to {v}"),
                })
            }
            Err(e) => {
                return Err(RejectReason::ConditionFalse {
                    detail: e.to_string(),
                })
            }
        }
    }

    // Rebuilding the rewrite side must reproduce the recorded next state,
    // and cells the rule does not mention must carry over untouched.
    for (cell, body) in &rule.cells {
        let built = substitute(&body.project(RwSide::Rhs), theta)
            .ok()
            .and_then(|t| eval(&t).ok());
        let produced = built.is_some_and(|t| ground_eq(&t, step.next.cell(cell)));
        if !produced {
            return Err(RejectReason::RhsMismatch { cell: cell.clone() });
        }
    }
    for (cell, value) in prev.cells() {
        if rule.cell(cell).is_none() && !ground_eq(value, step.next.cell(cell)) {
            return Err(RejectReason::RhsMismatch { cell: cell.clone() });
        }
    }

    // Priority soundness: an honest scheduler would have taken the first
    // applicable rule, so nothing scheduled before this one may match.
    if let Some(earlier) = first_applicable(def, prev, Some((rule.priority, rule.id))) {
        return Err(RejectReason::EarlierRuleApplies {
            rule_id: earlier.id,
        });
    }
    Ok(())
}

/// The bindings must map exactly the variables the rule's match side
/// declares, each to a ground term fitting every sort annotation that
/// variable carries.
fn check_bindings(
    g: &Grammar,
    rule: &RuleDecl,
    theta: &Substitution,
) -> Result<(), RejectReason> {
    let bad = |detail: String| RejectReason::BadBindings { detail };
    let mut wanted: BTreeMap<String, Vec<Sort>> = BTreeMap::new();
    for (_, body) in &rule.cells {
        let mut hole = false;
        body.project(RwSide::Lhs).for_each(&mut |t| {
            if let Term::Variable { name, sort, kind } = t {
                if matches!(kind, VarKind::Placeholder(_)) {
                    hole = true;
                } else {
                    wanted.entry(name.clone()).or_default().push(sort.clone());
                }
            }
        });
        if hole {
            return Err(bad(format!(
                "rule {} still has an unfilled placeholder",
                rule.id
            )));
        }
    }
    for name in theta.names() {
        if !wanted.contains_key(name) {
            return Err(bad(format!("`{name}` is not bound by the match side")));
        }
    }
    for (name, sorts) in &wanted {
        let Some(value) = theta.get(name) else {
            return Err(bad(format!("no binding for `{name}`")));
        };
        if !value.is_ground() {
            return Err(bad(format!("binding for `{name}` is not ground")));
        }
        for sort in sorts {
            if !g.term_fits(value, sort) {
                return Err(bad(format!("binding for `{name}` does not fit {sort}")));
            }
        }
    }
    Ok(())
}

/// A step is coherent when its own claim is internally consistent: the
/// recorded bindings rebuild exactly the recorded next state. A coherent
/// step that disagrees with its predecessor was spliced into the wrong place
/// in the chain, which is a different defect than lying about a match.
fn step_coheres(rule: &RuleDecl, theta: &Substitution, next: &State) -> bool {
    rule.cells.iter().all(|(cell, body)| {
        let Ok(built) = substitute(&body.project(RwSide::Rhs), theta) else {
            return false;
        };
        let Ok(value) = eval(&built) else {
            return false;
        };
        ground_eq(&value, next.cell(cell))
    })
}

fn cells_fit(def: &Definition, state: &State) -> Result<(), String> {
    let found: Vec<&str> = state.cells().iter().map(|(n, _)| n.as_str()).collect();
    let wanted: Vec<&str> = def.cells.iter().map(|c| c.name.as_str()).collect();
    if found != wanted {
        return Err(format!(
            "expected cells {}, found {}",
            wanted.join(", "),
            found.join(", ")
        ));
    }
    for (name, value) in state.cells() {
        if !value.is_ground() {
            return Err(format!("cell <{name}> is not ground"));
        }
    }
    Ok(())
}

/// Structural equality between terms that are ground by construction here,
/// so the comparison itself cannot fail.
fn ground_eq(a: &Term, b: &Term) -> bool {
    structurally_equal(a, b).unwrap_or(false)
}

// ---------------------------------------------------------------------------
// Applicability — the checker's own matcher
// ---------------------------------------------------------------------------

/// The first rule in scheduling order that applies to `state`, looking only
/// at rules strictly before `limit` when one is given.
fn first_applicable<'d>(
    def: &'d Definition,
    state: &State,
    limit: Option<(u32, usize)>,
) -> Option<&'d RuleDecl> {
    let mut order: Vec<&RuleDecl> = def.rules.iter().collect();
    order.sort_by_key(|r| (r.priority, r.id));
    order
        .into_iter()
        .take_while(|r| limit.is_none_or(|l| (r.priority, r.id) < l))
        .find(|r| rule_applies(&def.grammar, r, state))
}

/// Decides whether a rule applies, independently of the engine's matcher:
/// exhaustive backtracking that enumerates every way the patterns could
/// cover the state and asks whether any enumerated cover satisfies the side
/// condition. Slower than the engine, but small enough to audit — which is
/// the point, since a certificate is only as trustworthy as this function.
/// Unfilled placeholders match nothing, and a side condition that fails to
/// evaluate counts as the rule not applying; both situations abort the
/// engine outright, so no honest run ever reaches them.
fn rule_applies(g: &Grammar, rule: &RuleDecl, state: &State) -> bool {
    let mut covers = vec![Substitution::new()];
    for (cell, body) in &rule.cells {
        let pat = body.project(RwSide::Lhs);
        let subj = state.cell(cell);
        covers = covers
            .into_iter()
            .flat_map(|b| matches_under(g, &pat, subj, b))
            .collect();
        if covers.is_empty() {
            return false;
        }
    }
    covers.into_iter().any(|b| condition_holds(rule, &b))
}

fn condition_holds(rule: &RuleDecl, binds: &Substitution) -> bool {
    let Some(cond) = &rule.requires else {
        return true;
    };
    let Ok(ground) = substitute(cond, binds) else {
        return false;
    };
    matches!(eval(&ground), Ok(v) if v == Term::bool(true))
}

/// Every extension of `binds` under which `pat` matches `subj`.
fn matches_under(g: &Grammar, pat: &Term, subj: &Term, binds: Substitution) -> Vec<Substitution> {
    match pat {
        Term::Variable {
            kind: VarKind::Placeholder(_),
            ..
        } => Vec::new(),
        Term::Variable { name, sort, .. } => {
            if !g.term_fits(subj, sort) {
                return Vec::new();
            }
            match binds.get(name) {
                Some(prev) if ground_eq(prev, subj) => vec![binds],
                Some(_) => Vec::new(),
                None => {
                    let mut b = binds;
                    b.bind(name, subj.clone());
                    vec![b]
                }
            }
        }
        Term::Token { .. } | Term::Empty(_) => {
            if pat == subj {
                vec![binds]
            } else {
                Vec::new()
            }
        }
        Term::Apply { prod, args } => match subj {
            Term::Apply {
                prod: p2,
                args: a2,
            } if p2 == prod && a2.len() == args.len() => {
                matches_all(g, args.iter().zip(a2.iter()), binds)
            }
            _ => Vec::new(),
        },
        Term::List { elems, rest, at } => {
            let subj_elems: Vec<Term> = match subj {
                Term::List {
                    elems, rest: None, ..
                } => elems.clone(),
                Term::Empty(s) if *s == Sort::list() => Vec::new(),
                _ => return Vec::new(),
            };
            match rest {
                None => {
                    if subj_elems.len() != elems.len() {
                        return Vec::new();
                    }
                    matches_all(g, elems.iter().zip(subj_elems.iter()), binds)
                }
                Some(rest_pat) => {
                    if subj_elems.len() < elems.len() {
                        return Vec::new();
                    }
                    let (taken, remaining) = match at {
                        crate::term::ElemsAt::Front => subj_elems.split_at(elems.len()),
                        crate::term::ElemsAt::Back => {
                            let (rem, tak) =
                                subj_elems.split_at(subj_elems.len() - elems.len());
                            (tak, rem)
                        }
                    };
                    let leftover = Term::list(remaining.to_vec());
                    matches_all(g, elems.iter().zip(taken.iter()), binds)
                        .into_iter()
                        .flat_map(|b| matches_under(g, rest_pat, &leftover, b))
                        .collect()
                }
            }
        }
        Term::Map { binds: entries, rest } => {
            let subj_entries: Vec<(Term, Term)> = match subj {
                Term::Map { binds, rest: None } => binds.clone(),
                Term::Empty(s) if *s == Sort::map() => Vec::new(),
                _ => return Vec::new(),
            };
            match_map(g, entries, rest.as_deref(), subj_entries, binds)
        }
        Term::Rewrite { .. } => unreachable!("patterns are single-sided"),
    }
}

fn matches_all<'t>(
    g: &Grammar,
    pairs: impl Iterator<Item = (&'t Term, &'t Term)>,
    binds: Substitution,
) -> Vec<Substitution> {
    let mut covers = vec![binds];
    for (p, s) in pairs {
        covers = covers
            .into_iter()
            .flat_map(|b| matches_under(g, p, s, b))
            .collect();
        if covers.is_empty() {
            break;
        }
    }
    covers
}

/// Tries every assignment of pattern entries to distinct subject entries;
/// whatever is left over must satisfy the rest pattern, or be empty when
/// there is none.
fn match_map(
    g: &Grammar,
    pat_entries: &[(Term, Term)],
    pat_rest: Option<&Term>,
    remaining: Vec<(Term, Term)>,
    binds: Substitution,
) -> Vec<Substitution> {
    let Some(((key_pat, val_pat), more)) = pat_entries.split_first() else {
        let leftover = Term::map(remaining);
        return match pat_rest {
            None if matches!(leftover, Term::Empty(_)) => vec![binds],
            None => Vec::new(),
            Some(rest_pat) => matches_under(g, rest_pat, &leftover, binds),
        };
    };
    let mut out = Vec::new();
    for i in 0..remaining.len() {
        let mut rest_entries = remaining.clone();
        let (k, v) = rest_entries.remove(i);
        for b in matches_under(g, key_pat, &k, binds.clone()) {
            for b in matches_under(g, val_pat, &v, b) {
                out.extend(match_map(g, more, pat_rest, rest_entries.clone(), b));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::engine::{execute, match_rule, DEFAULT_MAX_STEPS};
    use crate::frontend::{parse_definition, parse_model};
    use crate::synth::synthesize_forward;

    /// Counts up to 3, logging every value it saw, then parks on `done`.
    /// Two rules at different priorities, a side condition, and a list
    /// pattern give a run with texture: four steps from `0`.
    const COUNT: &str = "\
syntax Val ::= Int | \"done\"

configuration <m> $PGM:Val </m> <log> .List </log>

rule <m> X:Int => X +Int 1 </m> <log> L:List => L [X] </log> requires X <Int 3

rule <m> X:Int => done </m> [priority(60)]
";

    fn count_def() -> Definition {
        parse_definition(COUNT).expect("count definition parses")
    }

    fn count_cert(model: &str) -> (Definition, Certificate) {
        let def = count_def();
        let program = parse_model(&def, model, &Sort::new("Val")).expect("model parses");
        let trace = execute(&def, &program, DEFAULT_MAX_STEPS).expect("run finishes");
        let cert = emit_certificate(&def, &trace);
        (def, cert)
    }

    #[test]
    fn digest_is_stable_across_reprints() {
        let def = count_def();
        let digest = definition_digest(&def);
        assert_eq!(digest.len(), 64);
        assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));

        let reparsed = parse_definition(&print_definition(&def)).expect("reprint parses");
        assert_eq!(definition_digest(&reparsed), digest);

        let mut other = def.clone();
        other.rules[0].priority = 49;
        assert_ne!(definition_digest(&other), digest);
    }

    #[test]
    fn serialized_text_layout_is_pinned() {
        let (def, cert) = count_cert("3");
        assert_eq!(cert.steps.len(), 1, "3 is not below 3, so only the park rule fires");
        let text = certificate_text(&cert);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("kbx-cert 1 sha256:{}", definition_digest(&def)));
        assert_eq!(
            &lines[1..7],
            &[
                "initial",
                "m := (tok Int \"3\")",
                "log := (empty List)",
                "step 2",
                "X := (tok Int \"3\")",
                "next",
            ]
        );
        assert_eq!(lines.last(), Some(&"end"));
    }

    #[test]
    fn emitted_text_round_trips() {
        let (_, cert) = count_cert("0");
        assert_eq!(cert.steps.len(), 4);
        let parsed = parse_certificate(&certificate_text(&cert)).expect("emitted text parses");
        assert_eq!(parsed, cert);
    }

    #[test]
    fn finished_run_is_accepted() {
        let (def, cert) = count_cert("0");
        assert_eq!(check_certificate(&def, &cert), CheckOutcome::Accepted { steps: 4 });
    }

    #[test]
    fn stuck_model_is_accepted_with_no_steps() {
        let (def, cert) = count_cert("done");
        assert_eq!(cert.steps.len(), 0);
        assert_eq!(check_certificate(&def, &cert), CheckOutcome::Accepted { steps: 0 });
    }

    #[test]
    fn synthesized_run_is_accepted() {
        let def = parse_definition(
            "\
syntax Src ::= \"go\" Int Int

syntax Tgt ::= \"ran\" Int

configuration <m> $PGM:Src </m> <n> .K </n>

rule <m> go N M => .K </m> <n> .K => ran N </n>
",
        )
        .expect("pair definition parses");
        let fwd = synthesize_forward(&def).expect("forward synthesis succeeds");
        let program = parse_model(&fwd, "go 7 9", &Sort::new("Src")).expect("model parses");
        let trace = execute(&fwd, &program, DEFAULT_MAX_STEPS).expect("run finishes");
        assert_eq!(trace.steps.len(), 1);
        let cert = emit_certificate(&fwd, &trace);
        assert_eq!(check_certificate(&fwd, &cert), CheckOutcome::Accepted { steps: 1 });
    }

    #[test]
    fn wrong_digest_is_rejected() {
        let (def, mut cert) = count_cert("0");
        cert.digest = cert.digest.chars().rev().collect();
        let out = check_certificate(&def, &cert);
        assert!(
            matches!(
                &out,
                CheckOutcome::Rejected {
                    step: 0,
                    reason: RejectReason::DigestMismatch { .. }
                }
            ),
            "got {out}"
        );
    }

    #[test]
    fn wrong_rule_id_is_rejected() {
        let (def, mut cert) = count_cert("0");
        cert.steps[0].rule_id = 99;
        assert_eq!(
            check_certificate(&def, &cert),
            CheckOutcome::Rejected {
                step: 1,
                reason: RejectReason::UnknownRule { rule_id: 99 }
            }
        );

        // An existing but different rule: the recorded bindings carry `L`,
        // which the park rule never binds.
        let (def, mut cert) = count_cert("0");
        cert.steps[0].rule_id = 2;
        let out = check_certificate(&def, &cert);
        assert!(
            matches!(
                &out,
                CheckOutcome::Rejected {
                    step: 1,
                    reason: RejectReason::BadBindings { .. }
                }
            ),
            "got {out}"
        );
    }

    #[test]
    fn altered_binding_is_rejected() {
        let (def, mut cert) = count_cert("0");
        cert.steps[1].binds.bind("X", Term::int(7));
        assert_eq!(
            check_certificate(&def, &cert),
            CheckOutcome::Rejected {
                step: 2,
                reason: RejectReason::LhsMismatch { cell: "m".into() }
            }
        );
    }

    #[test]
    fn altered_snapshot_is_rejected() {
        let (def, mut cert) = count_cert("0");
        cert.steps[1].next.set_cell("m", Term::int(9));
        assert_eq!(
            check_certificate(&def, &cert),
            CheckOutcome::Rejected {
                step: 2,
                reason: RejectReason::RhsMismatch { cell: "m".into() }
            }
        );
    }

    #[test]
    fn dropped_step_is_rejected() {
        let (def, mut cert) = count_cert("0");
        cert.steps.remove(1);
        // The step now at position 2 is a faithful rewrite spliced after the
        // wrong predecessor: a break in the chain, not a forged match.
        assert_eq!(
            check_certificate(&def, &cert),
            CheckOutcome::Rejected {
                step: 2,
                reason: RejectReason::ChainBreak { cell: "m".into() }
            }
        );
    }

    #[test]
    fn swapped_steps_are_rejected() {
        let (def, mut cert) = count_cert("0");
        cert.steps.swap(1, 2);
        assert_eq!(
            check_certificate(&def, &cert),
            CheckOutcome::Rejected {
                step: 2,
                reason: RejectReason::ChainBreak { cell: "m".into() }
            }
        );
    }

    #[test]
    fn skipping_an_earlier_rule_is_rejected() {
        // From 2, an honest scheduler must count (2 < 3) before it may park.
        // This certificate claims the park rule fired immediately; every
        // step-local check passes, only the scheduling claim is false.
        let (def, honest) = count_cert("2");
        let done = honest.final_cell("m");
        let mut binds = Substitution::new();
        binds.bind("X", Term::int(2));
        let cert = Certificate {
            digest: honest.digest.clone(),
            initial: honest.initial.clone(),
            steps: vec![CertStep {
                rule_id: 2,
                binds,
                next: State::from_cells(vec![
                    ("m".into(), done),
                    ("log".into(), Term::empty_list()),
                ]),
            }],
        };
        assert_eq!(
            check_certificate(&def, &cert),
            CheckOutcome::Rejected {
                step: 1,
                reason: RejectReason::EarlierRuleApplies { rule_id: 1 }
            }
        );
    }

    #[test]
    fn untrue_condition_is_rejected() {
        // A coherent count step from 3 — but 3 < 3 does not hold.
        let def = count_def();
        let mut binds = Substitution::new();
        binds.bind("X", Term::int(3));
        binds.bind("L", Term::empty_list());
        let cert = Certificate {
            digest: definition_digest(&def),
            initial: State::from_cells(vec![
                ("m".into(), Term::int(3)),
                ("log".into(), Term::empty_list()),
            ]),
            steps: vec![CertStep {
                rule_id: 1,
                binds,
                next: State::from_cells(vec![
                    ("m".into(), Term::int(4)),
                    ("log".into(), Term::list(vec![Term::int(3)])),
                ]),
            }],
        };
        let out = check_certificate(&def, &cert);
        assert!(
            matches!(
                &out,
                CheckOutcome::Rejected {
                    step: 1,
                    reason: RejectReason::ConditionFalse { .. }
                }
            ),
            "got {out}"
        );
    }

    #[test]
    fn unfinished_run_is_rejected() {
        let (def, mut cert) = count_cert("0");
        cert.steps.truncate(2);
        assert_eq!(
            check_certificate(&def, &cert),
            CheckOutcome::Rejected {
                step: 2,
                reason: RejectReason::NotStuck { rule_id: 1 }
            }
        );
    }

    #[test]
    fn misnamed_cell_is_rejected() {
        let (def, cert) = count_cert("0");
        let mut renamed = cert.clone();
        renamed.initial = State::from_cells(vec![
            ("m".into(), Term::int(0)),
            ("lug".into(), Term::empty_list()),
        ]);
        let out = check_certificate(&def, &renamed);
        assert!(
            matches!(
                &out,
                CheckOutcome::Rejected {
                    step: 0,
                    reason: RejectReason::MalformedState { .. }
                }
            ),
            "got {out}"
        );

        let mut truncated = cert;
        truncated.steps[0].next = State::from_cells(vec![("m".into(), Term::int(1))]);
        let out = check_certificate(&def, &truncated);
        assert!(
            matches!(
                &out,
                CheckOutcome::Rejected {
                    step: 1,
                    reason: RejectReason::MalformedState { .. }
                }
            ),
            "got {out}"
        );
    }

    impl Certificate {
        /// Test convenience: a cell of the final state.
        fn final_cell(&self, name: &str) -> Term {
            self.steps
                .last()
                .map(|s| &s.next)
                .unwrap_or(&self.initial)
                .cell(name)
                .clone()
        }
    }

    /// The checker's matcher and the engine's must agree rule by rule on
    /// whether anything applies — two independent implementations vouching
    /// for each other.
    #[test]
    fn checker_matcher_agrees_with_the_engine() {
        let store = parse_definition(
            "\
syntax Val ::= Int | Id

configuration <m> $PGM:Val </m> <s> .Map </s>

rule <m> K:Id => V </m> <s> S:Map [K] |-> V => S </s>

rule <m> X:Int => X </m> <s> S:Map [K] |-> K => S </s>
",
        )
        .expect("store definition parses");
        let entry = |k: Term, v: Term| Term::map(vec![(Term::list(vec![k]), v)]);
        let two = |a: (Term, Term), b: (Term, Term)| {
            Term::map(vec![
                (Term::list(vec![a.0]), a.1),
                (Term::list(vec![b.0]), b.1),
            ])
        };
        let store_states = [
            (Term::id("x"), entry(Term::id("x"), Term::int(5))),
            (Term::id("x"), entry(Term::id("y"), Term::int(5))),
            (
                Term::id("x"),
                two((Term::id("x"), Term::int(5)), (Term::id("y"), Term::int(6))),
            ),
            (Term::int(5), entry(Term::id("x"), Term::int(5))),
            (Term::int(7), entry(Term::id("x"), Term::id("x"))),
            (Term::int(7), entry(Term::id("x"), Term::id("y"))),
            (
                Term::int(7),
                two((Term::id("x"), Term::id("y")), (Term::id("z"), Term::id("z"))),
            ),
            (Term::int(7), Term::empty_map()),
        ];
        for (m, s) in store_states {
            agree_on(
                &store,
                State::from_cells(vec![("m".into(), m), ("s".into(), s)]),
            );
        }

        let lists = parse_definition(
            "\
syntax Val ::= Int

configuration <m> $PGM:K </m> <o> .List </o>

rule <m> [X, Y] R:List => R </m> <o> O:List => O [X, Y] </o>

rule <m> R:List [X] => R </m> <o> O:List => O [X] </o> [priority(60)]
",
        )
        .expect("list definition parses");
        let list_states = [
            Term::list(vec![Term::int(1), Term::int(2), Term::int(3)]),
            Term::list(vec![Term::int(1)]),
            Term::empty_list(),
            Term::int(5),
        ];
        for m in list_states {
            agree_on(
                &lists,
                State::from_cells(vec![("m".into(), m), ("o".into(), Term::empty_list())]),
            );
        }

        let count = count_def();
        let done = parse_model(&count, "done", &Sort::new("Val")).expect("done parses");
        for m in [Term::int(2), Term::int(5), done] {
            agree_on(
                &count,
                State::from_cells(vec![("m".into(), m), ("log".into(), Term::empty_list())]),
            );
        }
    }

    fn agree_on(def: &Definition, state: State) {
        for rule in &def.rules {
            let engine = match_rule(&def.grammar, rule, &state)
                .expect("engine matching succeeds")
                .is_some();
            assert_eq!(
                rule_applies(&def.grammar, rule, &state),
                engine,
                "rule {} disagrees on:\n{state}",
                rule.id
            );
        }
    }

    #[test]
    fn mangled_text_is_rejected_with_line_numbers() {
        let (_, cert) = count_cert("0");
        let text = certificate_text(&cert);

        let bad_header = text.replacen("kbx-cert 1", "kbx-cert 9", 1);
        assert!(matches!(
            parse_certificate(&bad_header),
            Err(CertParseError::Unexpected { line: 1, .. })
        ));

        // Line 6 is the first recorded binding.
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        assert!(lines[5].starts_with("L := "));
        lines[5] = "L := (garbled".to_string();
        assert!(matches!(
            parse_certificate(&lines.join("\n")),
            Err(CertParseError::Term { line: 6, .. })
        ));

        let truncated = text.trim_end_matches("end\n");
        assert!(matches!(
            parse_certificate(truncated),
            Err(CertParseError::Unexpected { .. })
        ));

        let trailing = format!("{text}extra\n");
        let Err(CertParseError::Unexpected { line, found, .. }) = parse_certificate(&trailing)
        else {
            panic!("trailing garbage must not parse")
        };
        assert_eq!(found, "extra");
        assert_eq!(line, text.lines().count() + 1);
    }

    // ----- serialization round-trip over arbitrary payloads ----------------

    fn leaf() -> impl Strategy<Value = Term> {
        prop_oneof![
            any::<i64>().prop_map(Term::int),
            prop::sample::select(vec![
                "",
                "a := b",
                "line\nbreak",
                "quote\" back\\slash",
                "tab\there",
                "plain words",
            ])
            .prop_map(Term::string),
            "[a-z][a-z0-9]{0,4}".prop_map(Term::id),
            Just(Term::empty_k()),
            Just(Term::empty_list()),
            Just(Term::empty_map()),
        ]
    }

    fn payload() -> impl Strategy<Value = Term> {
        leaf().prop_recursive(3, 24, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..3).prop_map(Term::list),
                prop::collection::vec((inner.clone(), inner.clone()), 0..3)
                    .prop_map(Term::map),
                ("[A-Za-z:=# \"]{1,10}", prop::collection::vec(inner, 0..3))
                    .prop_map(|(p, args)| Term::apply(p, args)),
            ]
        })
    }

    fn state_value() -> impl Strategy<Value = State> {
        (payload(), payload()).prop_map(|(a, b)| {
            State::from_cells(vec![("m".to_string(), a), ("n".to_string(), b)])
        })
    }

    fn step_value() -> impl Strategy<Value = CertStep> {
        (
            0usize..100,
            prop::collection::btree_map("[A-Z][a-z0-9]{0,3}", payload(), 0..3),
            state_value(),
        )
            .prop_map(|(rule_id, binds, next)| CertStep {
                rule_id,
                binds: binds.into_iter().collect(),
                next,
            })
    }

    proptest! {
        /// Any certificate survives serialization, whatever the payload
        /// terms contain — separators, quotes, escapes, line breaks.
        #[test]
        fn serialized_certificates_round_trip(
            digest in "[0-9a-f]{16}",
            initial in state_value(),
            steps in prop::collection::vec(step_value(), 0..4),
        ) {
            let cert = Certificate { digest, initial, steps };
            let text = certificate_text(&cert);
            let back = parse_certificate(&text).expect("emitted text parses");
            prop_assert_eq!(back, cert);
        }
    }
}
