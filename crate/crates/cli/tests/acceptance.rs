//! The acceptance suite: eight end-to-end criteria over the shipped corpus,
//! each printing one PASS/FAIL line. Budgets and tolerances are pinned as
//! constants next to the criteria that use them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bxt_core::cert::{check_certificate, CheckOutcome, RejectReason};
use bxt_core::engine::{execute, DEFAULT_MAX_STEPS};
use bxt_core::frontend::{
    parse_defaults, parse_definition, parse_model, parse_model_any, print_definition, print_term,
    Definition,
};
use bxt_core::sync::{check_consistency, roundtrip_test, sync_backward, sync_forward, Consistency, Verdict};
use bxt_core::synth::{apply_defaults, defaults_required, synthesize_backward, synthesize_forward};
use bxt_core::term::{structurally_equal, substitute, RwSide, Sort, Term};

/// Criterion 1: rebuilding against an empty store must mirror the original
/// one-directional run, within this wall-clock budget for the whole corpus.
const MIRROR_BUDGET: Duration = Duration::from_secs(5);

/// Criterion 2: both round-trip laws, on the corpus pairs plus at least
/// this many generated models of bounded depth, within this budget.
const RANDOM_MODELS: usize = 200;
const MAX_MODEL_DEPTH: usize = 6;
const LAWS_BUDGET: Duration = Duration::from_secs(60);
const RANDOM_SEED: u64 = 0xB1D1;

/// Criterion 3: every corpus run must fit this many steps, and each step
/// must replay in reverse exactly.
const REPLAY_STEP_LIMIT: usize = 50;

/// Criterion 6: certificate checking budget.
const CERT_BUDGET: Duration = Duration::from_secs(30);

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn read(rel: &str) -> String {
    let path = repo(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Pair {
    ux: Definition,
    fwd: Definition,
    bwd: Definition,
}

fn load(def_rel: &str, defaults_rel: Option<&str>) -> Pair {
    let ux = parse_definition(&read(def_rel)).unwrap();
    let fwd = synthesize_forward(&ux).unwrap();
    let mut bwd = synthesize_backward(&ux).unwrap();
    if let Some(rel) = defaults_rel {
        bwd = apply_defaults(&bwd, &parse_defaults(&read(rel)).unwrap()).unwrap();
    }
    Pair { ux, fwd, bwd }
}

fn traffic() -> Pair {
    load("corpus/defs/hcsp-uml.kbx", Some("corpus/defs/hcsp-uml.kbxd"))
}

fn family() -> Pair {
    load("corpus/defs/family-person.kbx", None)
}

fn cases() -> Vec<(&'static str, Pair, bool)> {
    vec![
        ("traffic", traffic(), true),
        ("traffic-custom-color", traffic(), true),
        ("traffic-edited", traffic(), false),
        ("traffic-broken", traffic(), false),
        ("family-basic", family(), true),
        ("family-larger", family(), true),
    ]
}

fn fixture(pair: &Pair, case: &str, file: &str) -> Term {
    let text = read(&format!("corpus/cases/{case}/{file}"));
    parse_model_any(&pair.ux, &text)
        .unwrap_or_else(|e| panic!("{case}/{file}: {e}"))
        .0
}

fn criterion(n: usize, name: &str, run: impl FnOnce() -> Result<(), String>) {
    let started = Instant::now();
    match run() {
        Ok(()) => println!("PASS {n}: {name} ({} ms)", started.elapsed().as_millis()),
        Err(why) => {
            println!("FAIL {n}: {name} — {why}");
            panic!("acceptance criterion {n} ({name}) failed: {why}");
        }
    }
}

// ---------------------------------------------------------------------------
// 1. Mirror property
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_forward_mirrors_the_one_directional_run() {
    criterion(1, "forward with an empty store mirrors the one-directional run", || {
        let started = Instant::now();
        for (name, pair, _) in cases() {
            let source = fixture(&pair, name, "source.txt");
            let plain = execute(&pair.ux, &source, DEFAULT_MAX_STEPS)
                .map_err(|e| format!("{name}: {e}"))?;
            let synth = execute(&pair.fwd, &source, DEFAULT_MAX_STEPS)
                .map_err(|e| format!("{name}: {e}"))?;
            let a = plain.final_state().cell(&pair.ux.output_cell);
            let b = synth.final_state().cell(&pair.fwd.output_cell);
            if !structurally_equal(a, b).map_err(|e| e.to_string())? {
                return Err(format!("{name}: `{}` vs `{}`", print_term(a), print_term(b)));
            }
        }
        let took = started.elapsed();
        if took > MIRROR_BUDGET {
            return Err(format!("took {took:?}, budget {MIRROR_BUDGET:?}"));
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 2. Round-trip laws on the corpus and on random models
// ---------------------------------------------------------------------------

const MESSAGES: &[&str] = &["Go", "Stop", "Run 10 meters", "Wait here", "All clear", "Look left"];
const VARS: &[&str] = &["x", "y", "s", "status", "count", "light"];
const SENDS: &[(&str, i64)] = &[("button", 0), ("button", 1), ("gate", 2), ("alarm", 3)];
const RECVS: &[(&str, &str)] = &[("button", "status"), ("gate", "x"), ("alarm", "y")];
const FAMILIES: &[(&str, &str)] = &[
    ("smith", "anna"),
    ("jones", "max"),
    ("lee", "kim"),
    ("wong", "ren"),
    ("diaz", "eva"),
    ("cole", "ben"),
];

/// A random well-formed process: up to four statements, with every store
/// key drawn without replacement so no two statements collide.
fn random_traffic_program(rng: &mut ChaCha8Rng) -> String {
    let mut messages = MESSAGES.to_vec();
    messages.shuffle(rng);
    let mut values: Vec<i64> = (0..8).collect();
    values.shuffle(rng);
    let mut sends = SENDS.to_vec();
    sends.shuffle(rng);
    let mut recvs = RECVS.to_vec();
    recvs.shuffle(rng);

    let budget = rng.gen_range(1..=4usize);
    let mut stmts: Vec<String> = Vec::new();
    while stmts.len() < budget {
        match rng.gen_range(0..5) {
            0 if budget - stmts.len() >= 2 => {
                if let Some(m) = messages.pop() {
                    let v = VARS[rng.gen_range(0..VARS.len())];
                    stmts.push(format!("log ( \"{m}\" )"));
                    stmts.push(format!("{v} := {}", rng.gen_range(0..20)));
                }
            }
            1 => {
                if let Some(val) = values.pop() {
                    stmts.push(format!("{} := {val}", VARS[rng.gen_range(0..VARS.len())]));
                }
            }
            2 => {
                if let Some((ch, v)) = sends.pop() {
                    stmts.push(format!("{ch} ! {v}"));
                }
            }
            3 => {
                if let Some((ch, x)) = recvs.pop() {
                    stmts.push(format!("{ch} ? {x}"));
                }
            }
            _ => stmts.push("skip".to_string()),
        }
    }
    stmts.join(" ;\n")
}

fn random_family_records(rng: &mut ChaCha8Rng) -> String {
    let mut pool = FAMILIES.to_vec();
    pool.shuffle(rng);
    let n = rng.gen_range(1..=4usize);
    pool.truncate(n);
    pool.iter()
        .map(|(l, f)| format!("family {l} member {f}"))
        .collect::<Vec<_>>()
        .join(" ;\n")
}

fn term_depth(t: &Term) -> usize {
    let below = match t {
        Term::Apply { args, .. } => args.iter().map(term_depth).max().unwrap_or(0),
        Term::List { elems, rest, .. } => elems
            .iter()
            .map(term_depth)
            .chain(rest.as_deref().map(term_depth))
            .max()
            .unwrap_or(0),
        Term::Map { binds, rest } => binds
            .iter()
            .map(|(k, v)| term_depth(k).max(term_depth(v)))
            .chain(rest.as_deref().map(term_depth))
            .max()
            .unwrap_or(0),
        Term::Rewrite { lhs, rhs } => term_depth(lhs).max(term_depth(rhs)),
        _ => 0,
    };
    1 + below
}

fn laws_hold_for(pair: &Pair, text: &str) -> Result<(), String> {
    let source = parse_model(&pair.ux, text, &pair.ux.input_sort()).map_err(|e| format!("{text}: {e}"))?;
    let depth = term_depth(&source);
    if depth > MAX_MODEL_DEPTH {
        return Err(format!("generated model depth {depth} exceeds {MAX_MODEL_DEPTH}: {text}"));
    }
    let trace = execute(&pair.fwd, &source, DEFAULT_MAX_STEPS).map_err(|e| format!("{text}: {e}"))?;
    let target = trace.final_state().cell(&pair.fwd.output_cell).clone();
    let report = roundtrip_test(&pair.fwd, &pair.bwd, &source, &target, DEFAULT_MAX_STEPS);
    if !report.all_hold() {
        return Err(format!(
            "{text}: {:?} {:?}",
            report.forward_then_back.witnesses, report.backward_then_forward.witnesses
        ));
    }
    Ok(())
}

#[test]
fn criterion_2_round_trip_laws_hold() {
    criterion(2, "round-trip laws hold on corpus pairs and random models", || {
        let started = Instant::now();
        for (name, pair, _) in cases() {
            let source = fixture(&pair, name, "source.txt");
            let target = fixture(&pair, name, "target.txt");
            let report = roundtrip_test(&pair.fwd, &pair.bwd, &source, &target, DEFAULT_MAX_STEPS);
            if !report.all_hold() {
                return Err(format!(
                    "{name}: {:?} {:?}",
                    report.forward_then_back.witnesses, report.backward_then_forward.witnesses
                ));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_SEED);
        let tpair = traffic();
        let fpair = family();
        let mut checked = 0usize;
        while checked < RANDOM_MODELS {
            laws_hold_for(&tpair, &random_traffic_program(&mut rng))?;
            laws_hold_for(&fpair, &random_family_records(&mut rng))?;
            checked += 2;
        }
        if checked < RANDOM_MODELS {
            return Err(format!("only {checked} random models checked"));
        }
        let took = started.elapsed();
        if took > LAWS_BUDGET {
            return Err(format!("took {took:?}, budget {LAWS_BUDGET:?}"));
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 3. Reversed-step replay
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_reversed_steps_replay_every_snapshot() {
    criterion(3, "reversing each fired rule replays every snapshot exactly", || {
        for (name, pair, _) in cases() {
            let source = fixture(&pair, name, "source.txt");
            let trace = execute(&pair.ux, &source, DEFAULT_MAX_STEPS)
                .map_err(|e| format!("{name}: {e}"))?;
            if trace.steps.len() > REPLAY_STEP_LIMIT {
                return Err(format!(
                    "{name}: {} steps exceed the {REPLAY_STEP_LIMIT}-step window",
                    trace.steps.len()
                ));
            }
            let mut prev = &trace.initial;
            for (i, step) in trace.steps.iter().enumerate() {
                let rule = pair.ux.rule(step.rule_id).unwrap();
                for (cell, body) in &rule.cells {
                    // The reversed rule must match this snapshot under the
                    // recorded bindings and rewrite it to its predecessor.
                    let matches_here = substitute(&body.project(RwSide::Rhs), &step.binds)
                        .map_err(|e| format!("{name} step {i}: {e}"))?;
                    let rewrites_back = substitute(&body.project(RwSide::Lhs), &step.binds)
                        .map_err(|e| format!("{name} step {i}: {e}"))?;
                    let here_ok = structurally_equal(&matches_here, step.state.cell(cell))
                        .map_err(|e| e.to_string())?;
                    let back_ok = structurally_equal(&rewrites_back, prev.cell(cell))
                        .map_err(|e| e.to_string())?;
                    if !here_ok || !back_ok {
                        return Err(format!("{name} step {i}: cell <{cell}> does not replay"));
                    }
                }
                for (cell, value) in prev.cells() {
                    if rule.cell(cell).is_none() {
                        let unchanged = structurally_equal(value, step.state.cell(cell))
                            .map_err(|e| e.to_string())?;
                        if !unchanged {
                            return Err(format!(
                                "{name} step {i}: untouched cell <{cell}> changed"
                            ));
                        }
                    }
                }
                prev = &step.state;
            }
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 4. Synthesized shape of the message-pair definition
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_synthesized_rules_match_the_documented_shape() {
    criterion(4, "message-pair synthesis has the documented shape", || {
        let ux = parse_definition(&read("corpus/snippets/log-assign.kbx")).unwrap();
        let fwd = synthesize_forward(&ux).map_err(|e| e.to_string())?;
        let bwd = synthesize_backward(&ux).map_err(|e| e.to_string())?;

        for (label, def) in [("forward", &fwd), ("backward", &bwd)] {
            if def.rules.len() != 2 {
                return Err(format!("{label}: expected create+put, got {} rules", def.rules.len()));
            }
            if def.rules[0].priority != 51 || def.rules[1].priority != 50 {
                return Err(format!(
                    "{label}: priorities {}/{}, expected 51/50",
                    def.rules[0].priority, def.rules[1].priority
                ));
            }
            for rule in &def.rules {
                let mut names: Vec<&str> = rule.cells.iter().map(|(c, _)| c.as_str()).collect();
                names.sort_unstable();
                if names != ["c", "m", "n", "s"] {
                    return Err(format!("{label}: rule {} touches cells {names:?}", rule.id));
                }
            }
            let printed = print_definition(def);
            if !printed.contains("[1, A, P]") {
                return Err(format!("{label}: store key is not the 3-part [1, A, P]:\n{printed}"));
            }
        }

        // The create rule materializes the arrow with its written default
        // color, and the put rule preserves whatever color is stored.
        if !print_definition(&fwd).contains("#black") {
            return Err("forward create lost the default color".to_string());
        }

        // The backward direction loses the assignment: exactly two
        // placeholders, an Id and an Int.
        let slots = defaults_required(&bwd);
        let got: Vec<(usize, u32, &str)> =
            slots.iter().map(|s| (s.rule_id, s.index, s.sort.0.as_str())).collect();
        if got != [(1, 1, "Id"), (1, 2, "Int")] {
            return Err(format!("placeholder slots: {got:?}"));
        }

        // Reversed input/output wiring.
        if bwd.input_cell != "n" || bwd.output_cell != "m" {
            return Err(format!("backward io: {} -> {}", bwd.input_cell, bwd.output_cell));
        }
        if fwd.input_cell != "m" || fwd.output_cell != "n" {
            return Err(format!("forward io: {} -> {}", fwd.input_cell, fwd.output_cell));
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 5. Stale-diagram recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_edit_propagates_and_colors_survive() {
    criterion(5, "resync updates the edited text and keeps the chosen color", || {
        let pair = traffic();
        let source = fixture(&pair, "traffic-edited", "source.txt");
        let stale = fixture(&pair, "traffic-edited", "target.txt");
        let golden = fixture(&pair, "traffic-edited", "resynced-target.txt");
        let result = sync_forward(&pair.fwd, &pair.bwd, &source, &stale, DEFAULT_MAX_STEPS)
            .map_err(|e| e.to_string())?;
        if result.verdict != Verdict::Synchronized {
            return Err("expected the edit to propagate".to_string());
        }
        if result.target != golden {
            return Err(format!("resynced target:\n{}", print_term(&result.target)));
        }
        let printed = print_term(&result.target);
        for needle in [
            r##"pedestrian -[ #blue ]> pedestrian : "Run 5 meters""##,
            r##"pedestrian -[ #red ]> pedestrian : "Light is green""##,
        ] {
            if !printed.contains(needle) {
                return Err(format!("missing `{needle}` in `{printed}`"));
            }
        }
        if printed.contains("Run 10 meters") {
            return Err("stale text survived the resync".to_string());
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 6. Certificate soundness
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_certificates_accept_and_mutants_are_rejected() {
    criterion(6, "all run certificates accept; every mutation class rejects", || {
        let started = Instant::now();

        let mut accepted = 0usize;
        let mut keep: Option<(Definition, bxt_core::cert::Certificate)> = None;
        for (name, pair, _) in cases() {
            let source = fixture(&pair, name, "source.txt");
            let target = fixture(&pair, name, "target.txt");
            for result in [
                sync_forward(&pair.fwd, &pair.bwd, &source, &target, DEFAULT_MAX_STEPS)
                    .map_err(|e| format!("{name}: {e}"))?,
                sync_backward(&pair.fwd, &pair.bwd, &source, &target, DEFAULT_MAX_STEPS)
                    .map_err(|e| format!("{name}: {e}"))?,
            ] {
                for (def, cert) in
                    [(&pair.fwd, &result.forward_cert), (&pair.bwd, &result.backward_cert)]
                {
                    let outcome = check_certificate(def, cert);
                    if !outcome.is_accepted() {
                        return Err(format!("{name}: {outcome}"));
                    }
                    accepted += 1;
                    if keep.is_none() && cert.steps.len() >= 10 {
                        keep = Some((def.clone(), cert.clone()));
                    }
                }
            }
        }
        if accepted != 24 {
            return Err(format!("expected 24 certificates, checked {accepted}"));
        }

        // Six mutation classes, each rejected at the step it corrupts. Pick
        // the first step that binds a plain identifier so the altered
        // substitution stays well-sorted and fails only the match itself.
        let (def, good) = keep.ok_or("no certificate long enough to mutate")?;
        let (k, victim) = good
            .steps
            .iter()
            .enumerate()
            .take(good.steps.len() - 1)
            .find_map(|(i, step)| {
                step.binds
                    .iter()
                    .find(|(_, v)| matches!(v, Term::Token { sort, .. } if *sort == Sort::id()))
                    .map(|(n, _)| (i, n.clone()))
            })
            .ok_or("no step binds a plain identifier")?;
        let expect = |label: &str,
                      cert: bxt_core::cert::Certificate,
                      step: usize,
                      reason_ok: &dyn Fn(&RejectReason) -> bool|
         -> Result<(), String> {
            match check_certificate(&def, &cert) {
                CheckOutcome::Rejected { step: s, reason } if s == step && reason_ok(&reason) => Ok(()),
                other => Err(format!("{label}: expected rejection at step {step}, got {other}")),
            }
        };

        let mut wrong_digest = good.clone();
        wrong_digest.digest = format!("0{}", &wrong_digest.digest[1..]);
        expect("digest", wrong_digest, 0, &|r| matches!(r, RejectReason::DigestMismatch { .. }))?;

        let mut wrong_rule = good.clone();
        wrong_rule.steps[k].rule_id = 99;
        expect("rule id", wrong_rule, k + 1, &|r| matches!(r, RejectReason::UnknownRule { rule_id: 99 }))?;

        let mut wrong_binding = good.clone();
        wrong_binding.steps[k].binds.bind(&victim, Term::id("nobody"));
        expect("binding", wrong_binding, k + 1, &|r| matches!(r, RejectReason::LhsMismatch { .. }))?;

        let mut wrong_snapshot = good.clone();
        let cell = def.output_cell.clone();
        wrong_snapshot.steps[k].next.set_cell(&cell, Term::empty_k());
        expect("snapshot", wrong_snapshot, k + 1, &|r| matches!(r, RejectReason::RhsMismatch { .. }))?;

        let mut dropped = good.clone();
        dropped.steps.remove(k);
        expect("dropped step", dropped, k + 1, &|r| matches!(r, RejectReason::ChainBreak { .. }))?;

        let mut swapped = good.clone();
        swapped.steps.swap(k, k + 1);
        expect("swapped steps", swapped, k + 1, &|r| matches!(r, RejectReason::ChainBreak { .. }))?;

        let took = started.elapsed();
        if took > CERT_BUDGET {
            return Err(format!("took {took:?}, budget {CERT_BUDGET:?}"));
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 7. Consistency detection
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_the_broken_pair_is_detected() {
    criterion(7, "the broken pair is inconsistent and the diff names the gap", || {
        let pair = traffic();
        let source = fixture(&pair, "traffic-broken", "source.txt");
        let target = fixture(&pair, "traffic-broken", "target.txt");
        let verdict = check_consistency(&pair.fwd, &pair.bwd, &source, &target, DEFAULT_MAX_STEPS)
            .map_err(|e| e.to_string())?;
        let diffs = match verdict {
            Consistency::Consistent => return Err("expected an inconsistency".to_string()),
            Consistency::Inconsistent(diffs) => diffs,
        };
        let first = diffs.first().ok_or("no diffs reported")?;
        if first.cell != pair.fwd.output_cell {
            return Err(format!("first diff names <{}>", first.cell));
        }
        if !first.found.contains("button ! 0") || first.expected.contains("button ! 0") {
            return Err(format!("diff does not localize the missing send: {first}"));
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 8. Determinism of the benchmark runner
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_bench_is_deterministic() {
    criterion(8, "two bench runs emit byte-identical artifacts", || {
        let root = repo("");
        let mut artifacts: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
        let mut tables: Vec<String> = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let out = Command::new(env!("CARGO_BIN_EXE_bxt"))
                .current_dir(&root)
                .args(["--porcelain", "bench", "corpus", "--emit"])
                .arg(dir.path())
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!(
                    "bench failed: {}\n{}",
                    String::from_utf8_lossy(&out.stdout),
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
            let mut files = BTreeMap::new();
            for entry in std::fs::read_dir(dir.path()).map_err(|e| e.to_string())? {
                let path = entry.map_err(|e| e.to_string())?.path();
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
            }
            artifacts.push(files);
            // The table is stable too, apart from wall-clock times.
            let stable = String::from_utf8_lossy(&out.stdout)
                .lines()
                .map(|l| {
                    l.split_whitespace()
                        .filter(|w| !w.starts_with("time_ms="))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect::<Vec<_>>()
                .join("\n");
            tables.push(stable);
        }
        if artifacts[0].is_empty() {
            return Err("bench emitted nothing".to_string());
        }
        if artifacts[0] != artifacts[1] {
            let differing: Vec<&String> = artifacts[0]
                .iter()
                .filter(|(k, v)| artifacts[1].get(*k) != Some(v))
                .map(|(k, _)| k)
                .collect();
            return Err(format!("artifacts differ between runs: {differing:?}"));
        }
        if tables[0] != tables[1] {
            return Err("bench reports differ between runs".to_string());
        }
        Ok(())
    });
}
