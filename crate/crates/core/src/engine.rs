//! The rewrite engine: matching, rule application, and execution traces.
//!
//! A [`State`] is the configuration's cells with ground contents. One
//! [`step`] finds the first applicable rule — rules are tried by ascending
//! `(priority, id)` — and rewrites every cell the rule mentions.
//! [`execute`] iterates to a stuck state, recording the rule, the variable
//! bindings, and the state after each step; that trace is what certificates
//! and the synchronizer replay.
//!
//! Matching is structural. Map patterns are deferred until all other cells
//! have matched, so their keys are usually ground by the time they run;
//! bindings with non-ground keys fall back to bounded backtracking over the
//! subject's bindings in canonical order.

use std::fmt;

use thiserror::Error;

use crate::frontend::{Definition, RuleDecl};
use crate::grammar::Grammar;
use crate::term::{
    builtin, structurally_equal, substitute, ElemsAt, RwSide, Sort, Substitution, Term, TermError,
    VarKind,
};

/// Default bound on the number of rewrite steps in one execution.
pub const DEFAULT_MAX_STEPS: usize = 100_000;

/// Ground cell contents in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    cells: Vec<(String, Term)>,
}

impl State {
    /// The initial state for a program: configuration initials with the
    /// program in the input cell.
    pub fn initial(def: &Definition, program: &Term) -> Result<State, EngineError> {
        let input_sort = def.input_sort();
        if !def.grammar.term_fits(program, &input_sort) {
            return Err(EngineError::InputSort {
                expected: input_sort.0.clone(),
                found: def.grammar.sort_of(program).0.clone(),
            });
        }
        let cells = def
            .cells
            .iter()
            .map(|c| {
                let contents = if c.name == def.input_cell {
                    program.clone()
                } else {
                    c.initial.clone()
                };
                (c.name.clone(), contents)
            })
            .collect();
        Ok(State { cells })
    }

    /// Builds a state directly from cell contents; the caller is responsible
    /// for matching the configuration's cell order.
    pub fn from_cells(cells: Vec<(String, Term)>) -> State {
        State { cells }
    }

    pub fn cells(&self) -> &[(String, Term)] {
        &self.cells
    }

    pub fn cell(&self, name: &str) -> &Term {
        &self
            .cells
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("state has no cell <{name}>"))
            .1
    }

    pub fn set_cell(&mut self, name: &str, value: Term) {
        let slot = self
            .cells
            .iter_mut()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("state has no cell <{name}>"));
        slot.1 = value;
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, t) in &self.cells {
            writeln!(f, "<{name}> {} </{name}>", crate::frontend::print_term(t))?;
        }
        Ok(())
    }
}

/// One applied rewrite: which rule, with which bindings, producing which
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub rule_id: usize,
    pub binds: Substitution,
    pub state: State,
}

/// A full execution: the initial state and every step to the stuck state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub initial: State,
    pub steps: Vec<Step>,
}

impl Trace {
    pub fn final_state(&self) -> &State {
        self.steps.last().map(|s| &s.state).unwrap_or(&self.initial)
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EvalError {
    #[error("unknown builtin {0}")]
    UnknownBuiltin(String),
    #[error("type mismatch in {op}: {detail}")]
    TypeMismatch { op: String, detail: String },
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EngineError {
    #[error("step limit exceeded after {} steps", trace.steps.len())]
    StepLimitExceeded { trace: Box<Trace> },
    #[error("rule {rule_id} still has unfilled placeholders")]
    PlaceholderRemaining { rule_id: usize },
    #[error("program does not fit the input sort: expected {expected}, found {found}")]
    InputSort { expected: String, found: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Term(#[from] TermError),
}

// ---------------------------------------------------------------------------
// Builtin evaluation
// ---------------------------------------------------------------------------

fn int_of(t: &Term, op: &str) -> Result<i64, EvalError> {
    match t {
        Term::Token { sort, text } if *sort == Sort::int() => {
            text.parse().map_err(|_| EvalError::TypeMismatch {
                op: op.to_string(),
                detail: format!("bad integer token {text}"),
            })
        }
        other => Err(EvalError::TypeMismatch {
            op: op.to_string(),
            detail: format!("expected an Int, found {other}"),
        }),
    }
}

fn bool_of(t: &Term, op: &str) -> Result<bool, EvalError> {
    match t {
        Term::Token { sort, text } if *sort == Sort::bool() => Ok(text == "true"),
        other => Err(EvalError::TypeMismatch {
            op: op.to_string(),
            detail: format!("expected a Bool, found {other}"),
        }),
    }
}

fn map_binds_of(t: &Term, op: &str) -> Result<Vec<(Term, Term)>, EvalError> {
    match t {
        Term::Map { binds, rest: None } => Ok(binds.clone()),
        Term::Empty(s) if *s == Sort::map() => Ok(Vec::new()),
        other => Err(EvalError::TypeMismatch {
            op: op.to_string(),
            detail: format!("expected a Map, found {other}"),
        }),
    }
}

/// Evaluates every builtin application in a ground term, bottom-up.
pub fn eval(t: &Term) -> Result<Term, EvalError> {
    match t {
        Term::Apply { prod, args } => {
            let args: Vec<Term> = args.iter().map(eval).collect::<Result<_, _>>()?;
            let id = prod.as_str();
            if !id.starts_with('#') {
                return Ok(Term::Apply {
                    prod: prod.clone(),
                    args,
                });
            }
            match id {
                builtin::EQ_K => {
                    let eq = structurally_equal(&args[0], &args[1])?;
                    Ok(Term::bool(eq))
                }
                builtin::OR_BOOL => Ok(Term::bool(
                    bool_of(&args[0], id)? || bool_of(&args[1], id)?,
                )),
                builtin::AND_BOOL => Ok(Term::bool(
                    bool_of(&args[0], id)? && bool_of(&args[1], id)?,
                )),
                builtin::NOT_BOOL => Ok(Term::bool(!bool_of(&args[0], id)?)),
                builtin::LT_INT => Ok(Term::bool(int_of(&args[0], id)? < int_of(&args[1], id)?)),
                builtin::LE_INT => Ok(Term::bool(int_of(&args[0], id)? <= int_of(&args[1], id)?)),
                builtin::PLUS_INT => {
                    let sum = int_of(&args[0], id)?
                        .checked_add(int_of(&args[1], id)?)
                        .ok_or_else(|| EvalError::TypeMismatch {
                            op: id.to_string(),
                            detail: "integer overflow".into(),
                        })?;
                    Ok(Term::int(sum))
                }
                builtin::LOOKUP_OR_DEFAULT => {
                    let binds = map_binds_of(&args[0], id)?;
                    for (k, v) in &binds {
                        if structurally_equal(k, &args[1])? {
                            return Ok(v.clone());
                        }
                    }
                    Ok(args[2].clone())
                }
                builtin::MAP_UPDATE => {
                    let mut binds = map_binds_of(&args[0], id)?;
                    let key = args[1].clone();
                    let value = args[2].clone();
                    if let Some(slot) = binds
                        .iter_mut()
                        .find(|(k, _)| matches!(structurally_equal(k, &key), Ok(true)))
                    {
                        slot.1 = value;
                    } else {
                        binds.push((key, value));
                    }
                    Ok(Term::map(binds))
                }
                other => Err(EvalError::UnknownBuiltin(other.to_string())),
            }
        }
        Term::List { elems, rest: None, at } => {
            let elems: Vec<Term> = elems.iter().map(eval).collect::<Result<_, _>>()?;
            Ok(Term::List {
                elems,
                rest: None,
                at: *at,
            })
        }
        Term::Map { binds, rest: None } => {
            let binds: Vec<(Term, Term)> = binds
                .iter()
                .map(|(k, v)| Ok::<_, EvalError>((eval(k)?, eval(v)?)))
                .collect::<Result<_, _>>()?;
            Ok(Term::map(binds))
        }
        other => Ok(other.clone()),
    }
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

struct Matcher<'g> {
    g: &'g Grammar,
    rule_id: usize,
    /// Map patterns postponed to the end of the cell pass, with their
    /// subjects.
    deferred: Vec<(Term, Term)>,
}

impl<'g> Matcher<'g> {
    /// Binds `name` to `subj`, or checks consistency for a repeated
    /// variable.
    fn bind_var(
        &self,
        name: &str,
        sort: &Sort,
        subj: &Term,
        b: &mut Substitution,
    ) -> Result<bool, EngineError> {
        if !self.g.term_fits(subj, sort) {
            return Ok(false);
        }
        if let Some(prev) = b.get(name) {
            return Ok(structurally_equal(prev, subj)?);
        }
        b.bind(name, subj.clone());
        Ok(true)
    }

    fn term(&mut self, pat: &Term, subj: &Term, b: &mut Substitution) -> Result<bool, EngineError> {
        match pat {
            Term::Variable { name, sort, kind } => match kind {
                VarKind::Placeholder(_) => Err(EngineError::PlaceholderRemaining {
                    rule_id: self.rule_id,
                }),
                _ => self.bind_var(name, sort, subj, b),
            },
            Term::Token { sort, text } => Ok(matches!(
                subj,
                Term::Token { sort: s2, text: t2 } if s2 == sort && t2 == text
            )),
            Term::Empty(s) => Ok(matches!(subj, Term::Empty(s2) if s2 == s)),
            Term::Apply { prod, args } => match subj {
                Term::Apply {
                    prod: p2,
                    args: a2,
                } if p2 == prod && a2.len() == args.len() => {
                    for (p, s) in args.iter().zip(a2) {
                        if !self.term(p, s, b)? {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
                _ => Ok(false),
            },
            Term::List { elems, rest, at } => self.list(elems, rest.as_deref(), *at, subj, b),
            Term::Map { .. } => {
                self.deferred.push((pat.clone(), subj.clone()));
                Ok(true)
            }
            Term::Rewrite { .. } => unreachable!("patterns are single-sided"),
        }
    }

    fn list(
        &mut self,
        elems: &[Term],
        rest: Option<&Term>,
        at: ElemsAt,
        subj: &Term,
        b: &mut Substitution,
    ) -> Result<bool, EngineError> {
        let subj_elems: &[Term] = match subj {
            Term::List {
                elems, rest: None, ..
            } => elems,
            Term::Empty(s) if *s == Sort::list() => &[],
            _ => return Ok(false),
        };
        match rest {
            None => {
                if subj_elems.len() != elems.len() {
                    return Ok(false);
                }
                for (p, s) in elems.iter().zip(subj_elems) {
                    if !self.term(p, s, b)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Some(rest_pat) => {
                if subj_elems.len() < elems.len() {
                    return Ok(false);
                }
                let (taken, remaining): (&[Term], &[Term]) = match at {
                    ElemsAt::Front => {
                        (&subj_elems[..elems.len()], &subj_elems[elems.len()..])
                    }
                    ElemsAt::Back => {
                        let split = subj_elems.len() - elems.len();
                        (&subj_elems[split..], &subj_elems[..split])
                    }
                };
                for (p, s) in elems.iter().zip(taken) {
                    if !self.term(p, s, b)? {
                        return Ok(false);
                    }
                }
                let rest_subj = Term::list(remaining.to_vec());
                self.term(rest_pat, &rest_subj, b)
            }
        }
    }

    /// Solves the postponed map patterns, backtracking across them when
    /// keys contain still-unbound variables.
    fn solve_deferred(
        &mut self,
        b: Substitution,
    ) -> Result<Option<Substitution>, EngineError> {
        let deferred = std::mem::take(&mut self.deferred);
        self.solve_from(&deferred, 0, b)
    }

    fn solve_from(
        &mut self,
        deferred: &[(Term, Term)],
        idx: usize,
        b: Substitution,
    ) -> Result<Option<Substitution>, EngineError> {
        let Some((pat, subj)) = deferred.get(idx) else {
            return Ok(Some(b));
        };
        let (pat_binds, pat_rest) = match pat {
            Term::Map { binds, rest } => (binds.as_slice(), rest.as_deref()),
            _ => unreachable!("only map patterns are deferred"),
        };
        let subj_binds = match subj {
            Term::Map { binds, rest: None } => binds.clone(),
            Term::Empty(s) if *s == Sort::map() => Vec::new(),
            _ => return Ok(None),
        };
        self.map_binds(deferred, idx, pat_binds, pat_rest, subj_binds, b)
    }

    #[allow(clippy::too_many_arguments)]
    fn map_binds(
        &mut self,
        deferred: &[(Term, Term)],
        idx: usize,
        pat_binds: &[(Term, Term)],
        pat_rest: Option<&Term>,
        remaining: Vec<(Term, Term)>,
        b: Substitution,
    ) -> Result<Option<Substitution>, EngineError> {
        let Some(((key_pat, val_pat), more)) = pat_binds.split_first() else {
            // All bindings matched: the rest pattern takes what is left.
            let mut b = b;
            let leftover = Term::map(remaining);
            match pat_rest {
                None => {
                    if !matches!(leftover, Term::Empty(_)) {
                        return Ok(None);
                    }
                }
                Some(rest_pat) => {
                    if !self.term(rest_pat, &leftover, &mut b)? {
                        return Ok(None);
                    }
                }
            }
            return self.solve_from(deferred, idx + 1, b);
        };

        // A key whose variables are all bound picks its entry directly.
        if let Ok(ground_key) = substitute(key_pat, &b) {
            let pos = {
                let mut found = None;
                for (i, (k, _)) in remaining.iter().enumerate() {
                    if structurally_equal(k, &ground_key)? {
                        found = Some(i);
                        break;
                    }
                }
                found
            };
            let Some(i) = pos else { return Ok(None) };
            let mut b2 = b;
            let mut rest_entries = remaining;
            let (_, v) = rest_entries.remove(i);
            if !self.term(val_pat, &v, &mut b2)? {
                return Ok(None);
            }
            return self.map_binds(deferred, idx, more, pat_rest, rest_entries, b2);
        }

        // Otherwise try each remaining entry in canonical order.
        for i in 0..remaining.len() {
            let mut b2 = b.clone();
            let mut rest_entries = remaining.clone();
            let (k, v) = rest_entries.remove(i);
            if !self.term(key_pat, &k, &mut b2)? {
                continue;
            }
            if !self.term(val_pat, &v, &mut b2)? {
                continue;
            }
            if let Some(solved) =
                self.map_binds(deferred, idx, more, pat_rest, rest_entries, b2)?
            {
                return Ok(Some(solved));
            }
        }
        Ok(None)
    }
}

/// Tries a rule against a state. `Some(bindings)` when every cell pattern
/// matches and the side condition holds.
pub fn match_rule(
    g: &Grammar,
    rule: &RuleDecl,
    state: &State,
) -> Result<Option<Substitution>, EngineError> {
    let mut m = Matcher {
        g,
        rule_id: rule.id,
        deferred: Vec::new(),
    };
    let mut b = Substitution::new();
    for (cell, body) in &rule.cells {
        let pat = body.project(RwSide::Lhs);
        if !m.term(&pat, state.cell(cell), &mut b)? {
            return Ok(None);
        }
    }
    let Some(b) = m.solve_deferred(b)? else {
        return Ok(None);
    };
    if let Some(cond) = &rule.requires {
        let ground = substitute(cond, &b).map_err(|e| match e {
            TermError::UnresolvedPlaceholder(_) => EngineError::PlaceholderRemaining {
                rule_id: rule.id,
            },
            other => EngineError::Term(other),
        })?;
        if eval(&ground)? != Term::bool(true) {
            return Ok(None);
        }
    }
    Ok(Some(b))
}

/// Applies a matched rule: rewrites every mentioned cell.
pub fn apply_rule(
    rule: &RuleDecl,
    binds: &Substitution,
    state: &State,
) -> Result<State, EngineError> {
    let mut next = state.clone();
    for (cell, body) in &rule.cells {
        let rhs = body.project(RwSide::Rhs);
        let built = substitute(&rhs, binds).map_err(|e| match e {
            TermError::UnresolvedPlaceholder(_) => EngineError::PlaceholderRemaining {
                rule_id: rule.id,
            },
            other => EngineError::Term(other),
        })?;
        next.set_cell(cell, eval(&built)?);
    }
    Ok(next)
}

/// Rule indices in scheduling order: ascending priority, then id.
pub fn rule_order(def: &Definition) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..def.rules.len()).collect();
    idx.sort_by_key(|&i| (def.rules[i].priority, def.rules[i].id));
    idx
}

/// One scheduling decision: the first applicable rule in `(priority, id)`
/// order, or `None` when the state is stuck.
pub fn step(def: &Definition, state: &State) -> Result<Option<Step>, EngineError> {
    for i in rule_order(def) {
        let rule = &def.rules[i];
        if let Some(binds) = match_rule(&def.grammar, rule, state)? {
            let next = apply_rule(rule, &binds, state)?;
            return Ok(Some(Step {
                rule_id: rule.id,
                binds,
                state: next,
            }));
        }
    }
    Ok(None)
}

/// Runs a program to its stuck state, recording the full trace.
pub fn execute(def: &Definition, program: &Term, max_steps: usize) -> Result<Trace, EngineError> {
    let initial = State::initial(def, program)?;
    execute_from(def, initial, max_steps)
}

/// Runs from an existing state (used when replaying or resuming).
pub fn execute_from(
    def: &Definition,
    initial: State,
    max_steps: usize,
) -> Result<Trace, EngineError> {
    let mut trace = Trace {
        initial,
        steps: Vec::new(),
    };
    loop {
        let current = trace.final_state().clone();
        match step(def, &current)? {
            None => return Ok(trace),
            Some(s) => {
                if trace.steps.len() >= max_steps {
                    return Err(EngineError::StepLimitExceeded {
                        trace: Box::new(trace),
                    });
                }
                trace.steps.push(s);
            }
        }
    }
}
