//! Synchronization workflows over a synthesized definition pair.
//!
//! Each workflow composes the same two passes: an *extraction* run of one
//! direction that fills the complements store from the model it consumes,
//! and a *rebuild* run of the other direction that regenerates that model,
//! reading the store to recover whatever its input cannot say. Both runs are
//! plain executions of the paired definitions; this module adds the store
//! plumbing, the verdicts, and the round-tripping report.

use thiserror::Error;

use crate::cert::{emit_certificate, Certificate};
use crate::engine::{execute_from, EngineError, State, Trace};
use crate::frontend::{parse_model_any, print_term, Definition};
use crate::term::{structurally_equal, Sort, Term};

#[derive(Error, Debug)]
pub enum SyncError {
    #[error("definition has no complements cell (the last cell must be a spare `.Map` cell)")]
    NoStoreCell,
    #[error("run exceeded {limit} steps")]
    NonTermination { limit: usize },
    #[error("run stalled with input remaining in <{cell}>: {leftover}")]
    Stalled { cell: String, leftover: String },
    #[error("execution failed: {0}")]
    ExecutionFailed(#[from] EngineError),
}

/// How the rebuilt model relates to the one that was already there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The rebuilt model equals the input model: nothing needed to change.
    Consistent,
    /// The rebuilt model differs: the edit propagated.
    Synchronized,
}

/// The outcome of one synchronization: both models, the store that now
/// relates them, and a certificate for each of the two runs that produced
/// them.
#[derive(Debug, Clone)]
pub struct SyncResult {
    pub source: Term,
    pub target: Term,
    pub store: Term,
    pub forward_cert: Certificate,
    pub backward_cert: Certificate,
    pub verdict: Verdict,
}

/// One cell whose regenerated contents differ from what consistency
/// requires, with both sides printed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellDiff {
    pub cell: String,
    pub expected: String,
    pub found: String,
}

impl std::fmt::Display for CellDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "cell <{}>: expected `{}`, found `{}`",
            self.cell, self.expected, self.found
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    Inconsistent(Vec<CellDiff>),
}

impl Consistency {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Consistency::Consistent)
    }
}

/// One round-tripping law, with printed witnesses when it fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawOutcome {
    pub holds: bool,
    pub witnesses: Vec<String>,
}

/// Both round-tripping laws: rebuilding the target and then the source must
/// land back on the source with the store unchanged, and symmetrically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundtripReport {
    pub forward_then_back: LawOutcome,
    pub backward_then_forward: LawOutcome,
}

impl RoundtripReport {
    pub fn all_hold(&self) -> bool {
        self.forward_then_back.holds && self.backward_then_forward.holds
    }
}

/// The complements cell of a synthesized definition: synthesis appends it
/// last, holding an empty map, distinct from the input and output cells.
pub fn store_cell_name(def: &Definition) -> Result<&str, SyncError> {
    let last = def.cells.last().ok_or(SyncError::NoStoreCell)?;
    let spare = last.name != def.input_cell && last.name != def.output_cell;
    let empty_map = matches!(&last.initial, Term::Empty(s) if *s == Sort::map());
    if spare && empty_map {
        Ok(&last.name)
    } else {
        Err(SyncError::NoStoreCell)
    }
}

/// One finished run: its trace plus the final output-cell and store-cell
/// contents.
struct Pass {
    trace: Trace,
    output: Term,
    store: Term,
}

/// Executes `def` on `model`, optionally seeding the complements store, and
/// insists the run finished its input: a stuck state that still holds input
/// means some construct no rule could consume.
fn run_pass(
    def: &Definition,
    model: &Term,
    store: Option<&Term>,
    max_steps: usize,
) -> Result<Pass, SyncError> {
    let store_cell = store_cell_name(def)?;
    let mut state = State::initial(def, model)?;
    if let Some(c) = store {
        state.set_cell(store_cell, c.clone());
    }
    let trace = match execute_from(def, state, max_steps) {
        Ok(t) => t,
        Err(EngineError::StepLimitExceeded { .. }) => {
            return Err(SyncError::NonTermination { limit: max_steps })
        }
        Err(e) => return Err(SyncError::ExecutionFailed(e)),
    };
    let last = trace.final_state();
    let leftover = last.cell(&def.input_cell);
    if !matches!(leftover, Term::Empty(_)) {
        return Err(SyncError::Stalled {
            cell: def.input_cell.clone(),
            leftover: print_term(leftover),
        });
    }
    let output = last.cell(&def.output_cell).clone();
    let store = last.cell(store_cell).clone();
    Ok(Pass {
        trace,
        output,
        store,
    })
}

/// Model equality for verdicts: structural, with a printed-then-reparsed
/// fallback so that formatting is never treated as information.
fn models_equal(def: &Definition, a: &Term, b: &Term) -> bool {
    if structurally_equal(a, b).unwrap_or(false) {
        return true;
    }
    let reparse = |t: &Term| parse_model_any(def, &print_term(t)).map(|(t, _)| t);
    match (reparse(a), reparse(b)) {
        (Ok(ra), Ok(rb)) => structurally_equal(&ra, &rb).unwrap_or(false),
        _ => false,
    }
}

/// Propagates the source model to the target side. The target's own
/// information is extracted into the store first, so target-only details
/// survive the rebuild.
pub fn sync_forward(
    fwd: &Definition,
    bwd: &Definition,
    source: &Term,
    target: &Term,
    max_steps: usize,
) -> Result<SyncResult, SyncError> {
    let extract = run_pass(bwd, target, None, max_steps)?;
    let rebuild = run_pass(fwd, source, Some(&extract.store), max_steps)?;
    let verdict = if models_equal(fwd, &rebuild.output, target) {
        Verdict::Consistent
    } else {
        Verdict::Synchronized
    };
    Ok(SyncResult {
        source: source.clone(),
        target: rebuild.output,
        store: rebuild.store,
        forward_cert: emit_certificate(fwd, &rebuild.trace),
        backward_cert: emit_certificate(bwd, &extract.trace),
        verdict,
    })
}

/// Propagates the target model back to the source side; mirror image of
/// [`sync_forward`].
pub fn sync_backward(
    fwd: &Definition,
    bwd: &Definition,
    source: &Term,
    target: &Term,
    max_steps: usize,
) -> Result<SyncResult, SyncError> {
    let extract = run_pass(fwd, source, None, max_steps)?;
    let rebuild = run_pass(bwd, target, Some(&extract.store), max_steps)?;
    let verdict = if models_equal(fwd, &rebuild.output, source) {
        Verdict::Consistent
    } else {
        Verdict::Synchronized
    };
    Ok(SyncResult {
        source: rebuild.output,
        target: target.clone(),
        store: rebuild.store,
        forward_cert: emit_certificate(fwd, &extract.trace),
        backward_cert: emit_certificate(bwd, &rebuild.trace),
        verdict,
    })
}

/// Decides whether two models already relate, without changing either:
/// regenerating the target from the source (through the target's own
/// extracted store) must land on the target, and replaying the backward
/// direction with the resulting store must land back on the source. A
/// failure reports the offending cell with both sides printed.
pub fn check_consistency(
    fwd: &Definition,
    bwd: &Definition,
    source: &Term,
    target: &Term,
    max_steps: usize,
) -> Result<Consistency, SyncError> {
    let extract = run_pass(bwd, target, None, max_steps)?;
    let rebuild = run_pass(fwd, source, Some(&extract.store), max_steps)?;
    let replay = run_pass(bwd, target, Some(&rebuild.store), max_steps)?;
    let mut diffs = Vec::new();
    if !models_equal(fwd, &rebuild.output, target) {
        diffs.push(CellDiff {
            cell: fwd.output_cell.clone(),
            expected: print_term(target),
            found: print_term(&rebuild.output),
        });
    }
    if !models_equal(fwd, &replay.output, source) {
        diffs.push(CellDiff {
            cell: bwd.output_cell.clone(),
            expected: print_term(source),
            found: print_term(&replay.output),
        });
    }
    Ok(if diffs.is_empty() {
        Consistency::Consistent
    } else {
        Consistency::Inconsistent(diffs)
    })
}

/// Checks both round-tripping laws on a model pair. Failures — including
/// runs that fail outright — become report entries rather than errors.
pub fn roundtrip_test(
    fwd: &Definition,
    bwd: &Definition,
    source: &Term,
    target: &Term,
    max_steps: usize,
) -> RoundtripReport {
    RoundtripReport {
        forward_then_back: law(fwd, bwd, source, target, max_steps),
        backward_then_forward: law(bwd, fwd, target, source, max_steps),
    }
}

/// One direction of the round-trip: extract a store from `b`, push `a`
/// through `first` with it, push the result back through `second`, and
/// demand the original `a` and an unchanged store. The other law is the
/// same check with every role swapped.
fn law(
    first: &Definition,
    second: &Definition,
    a: &Term,
    b: &Term,
    max_steps: usize,
) -> LawOutcome {
    match law_witnesses(first, second, a, b, max_steps) {
        Ok(witnesses) => LawOutcome {
            holds: witnesses.is_empty(),
            witnesses,
        },
        Err(e) => LawOutcome {
            holds: false,
            witnesses: vec![format!("execution failed: {e}")],
        },
    }
}

fn law_witnesses(
    first: &Definition,
    second: &Definition,
    a: &Term,
    b: &Term,
    max_steps: usize,
) -> Result<Vec<String>, SyncError> {
    let extract = run_pass(second, b, None, max_steps)?;
    let there = run_pass(first, a, Some(&extract.store), max_steps)?;
    let back = run_pass(second, &there.output, Some(&there.store), max_steps)?;
    let mut witnesses = Vec::new();
    if !models_equal(first, &back.output, a) {
        witnesses.push(
            CellDiff {
                cell: second.output_cell.clone(),
                expected: print_term(a),
                found: print_term(&back.output),
            }
            .to_string(),
        );
    }
    if !structurally_equal(&back.store, &there.store).unwrap_or(false) {
        witnesses.push(
            CellDiff {
                cell: store_cell_name(second)?.to_string(),
                expected: print_term(&there.store),
                found: print_term(&back.store),
            }
            .to_string(),
        );
    }
    Ok(witnesses)
}
