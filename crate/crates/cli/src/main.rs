//! `bxt` — synthesize, run, and check bidirectional transformations.
//!
//! A single rewrite definition describes how a source model becomes a
//! target model. This tool synthesizes the two synchronizing directions
//! from it, runs them over model files, reports consistency, and checks
//! the trace certificates the runs leave behind.
//!
//! Exit codes are stable: 0 success, 1 a law or consistency check failed,
//! 2 usage or parse errors, 3 backward defaults still required.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bxt_core::analysis::{lint_definition, Severity};
use bxt_core::cert::{
    certificate_text, check_certificate, definition_digest, parse_certificate, CheckOutcome,
};
use bxt_core::engine::DEFAULT_MAX_STEPS;
use bxt_core::frontend::{
    parse_defaults, parse_definition, parse_model, parse_model_any, print_definition, print_term,
    Definition,
};
use bxt_core::sync::{
    check_consistency, roundtrip_test, sync_backward, sync_forward, Consistency, SyncResult,
    Verdict,
};
use bxt_core::synth::{
    apply_defaults, defaults_required, defaults_template, synthesize_backward, synthesize_forward,
    SynthError,
};
use bxt_core::term::{Sort, Term};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DEFAULTS: u8 = 3;

/// Environment variable consulted for the step budget when `--max-steps`
/// is not given.
const MAX_STEPS_VAR: &str = "BXT_MAX_STEPS";

#[derive(Parser)]
#[command(
    name = "bxt",
    version,
    about = "Bidirectional transformations from single rewrite definitions",
    after_help = "Exit codes: 0 success, 1 law/consistency failure, 2 usage/parse error, \
                  3 defaults required."
)]
struct Cli {
    /// Emit machine-readable key=value lines instead of prose.
    #[arg(long, global = true)]
    porcelain: bool,

    /// Step budget per execution; overrides BXT_MAX_STEPS (default 100000).
    #[arg(long, global = true)]
    max_steps: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a definition (or a model under it) and print the canonical form.
    Parse {
        /// Definition file.
        def: PathBuf,
        /// Model file to parse under the definition's grammar.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Sort to parse the model at; inferred when omitted.
        #[arg(long, requires = "model")]
        sort: Option<String>,
    },
    /// Report the analysis diagnostics for a definition.
    Lint {
        /// Definition file.
        def: PathBuf,
    },
    /// Synthesize both directions into a directory.
    Synth {
        /// Definition file.
        def: PathBuf,
        /// Defaults file filling the backward placeholders.
        #[arg(long)]
        defaults: Option<PathBuf>,
        /// Output directory for forward.kbx, backward.kbx, and (when
        /// placeholders remain) defaults.template.kbxd.
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize the forward direction and print or write it.
    SynthForward {
        /// Definition file.
        def: PathBuf,
        /// Write here instead of standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Synthesize the backward direction and print or write it.
    SynthBackward {
        /// Definition file.
        def: PathBuf,
        /// Defaults file filling the backward placeholders.
        #[arg(long)]
        defaults: Option<PathBuf>,
        /// Write here instead of standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Propagate an edit: rebuild one model from the other.
    Sync {
        #[command(flatten)]
        pair: PairArgs,
        /// Which side wins: forward rebuilds the target from the source.
        #[arg(long, value_enum, default_value_t = Direction::Forward)]
        direction: Direction,
        /// Write the rebuilt model here as well as printing it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write forward.kbxc and backward.kbxc run certificates here.
        #[arg(long)]
        emit_certs: Option<PathBuf>,
    },
    /// Decide whether a model pair is consistent.
    Check {
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Check both round-trip laws on a model pair.
    Roundtrip {
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Re-verify a run certificate against a definition.
    CheckCert {
        /// The definition the certificate names (a synthesized direction).
        def: PathBuf,
        /// Certificate file.
        cert: PathBuf,
    },
    /// Run every corpus case: synthesis, laws, consistency, certificates.
    Bench {
        /// Corpus directory containing `cases/*/case.kbxp` manifests.
        #[arg(default_value = "corpus")]
        corpus: PathBuf,
        /// Write per-case artifacts (definitions, stores, certificates) here.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
}

/// The inputs every synchronization-style command shares.
#[derive(Args)]
struct PairArgs {
    /// Definition file (the single rewrite definition, not a direction).
    def: PathBuf,
    /// Defaults file filling the backward placeholders.
    #[arg(long)]
    defaults: Option<PathBuf>,
    /// Source-side model file.
    #[arg(long)]
    source: PathBuf,
    /// Target-side model file.
    #[arg(long)]
    target: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    Forward,
    Backward,
}

/// An error that chooses its own exit code instead of the default 2.
#[derive(Debug)]
struct ExitWith(u8, String);

impl fmt::Display for ExitWith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for ExitWith {}

fn exit_with(code: u8, msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ExitWith(code, msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if let Some(ExitWith(code, msg)) = e.downcast_ref::<ExitWith>() {
                eprintln!("error: {msg}");
                ExitCode::from(*code)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let budget = step_budget(cli)?;
    match &cli.command {
        Cmd::Parse { def, model, sort } => cmd_parse(cli, def, model.as_deref(), sort.as_deref()),
        Cmd::Lint { def } => cmd_lint(cli, def),
        Cmd::Synth { def, defaults, out } => cmd_synth(cli, def, defaults.as_deref(), out),
        Cmd::SynthForward { def, out } => cmd_synth_forward(def, out.as_deref()),
        Cmd::SynthBackward { def, defaults, out } => {
            cmd_synth_backward(def, defaults.as_deref(), out.as_deref())
        }
        Cmd::Sync { pair, direction, out, emit_certs } => {
            cmd_sync(cli, pair, *direction, out.as_deref(), emit_certs.as_deref(), budget)
        }
        Cmd::Check { pair } => cmd_check(cli, pair, budget),
        Cmd::Roundtrip { pair } => cmd_roundtrip(cli, pair, budget),
        Cmd::CheckCert { def, cert } => cmd_check_cert(cli, def, cert),
        Cmd::Bench { corpus, emit } => cmd_bench(cli, corpus, emit.as_deref(), budget),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn step_budget(cli: &Cli) -> Result<usize> {
    if let Some(n) = cli.max_steps {
        return Ok(n);
    }
    match std::env::var(MAX_STEPS_VAR) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| exit_with(EXIT_USAGE, format!("{MAX_STEPS_VAR} must be a number, got `{raw}`"))),
        Err(_) => Ok(DEFAULT_MAX_STEPS),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut owned;
    let text = if text.ends_with('\n') {
        text
    } else {
        owned = text.to_string();
        owned.push('\n');
        &owned
    };
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_definition(path: &Path) -> Result<Definition> {
    parse_definition(&read_file(path)?).map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn load_model(def: &Definition, path: &Path, sort: Option<&str>) -> Result<Term> {
    let text = read_file(path)?;
    let parsed = match sort {
        Some(s) => parse_model(def, &text, &Sort::new(s)),
        None => parse_model_any(def, &text).map(|(t, _)| t),
    };
    parsed.map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// Synthesizes both directions, applying the defaults file when given.
/// An incomplete defaults file surfaces as exit 3, a malformed one as 2.
fn synth_pair(def_path: &Path, defaults: Option<&Path>) -> Result<(Definition, Definition, Definition)> {
    let ux = load_definition(def_path)?;
    let fwd = synthesize_forward(&ux)
        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", def_path.display())))?;
    let mut bwd = synthesize_backward(&ux)
        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", def_path.display())))?;
    if let Some(p) = defaults {
        let entries = parse_defaults(&read_file(p)?)
            .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", p.display())))?;
        bwd = apply_defaults(&bwd, &entries).map_err(|e| match e {
            SynthError::MissingDefault { .. } => exit_with(EXIT_DEFAULTS, format!("{}: {e}", p.display())),
            other => exit_with(EXIT_USAGE, format!("{}: {other}", p.display())),
        })?;
    }
    Ok((ux, fwd, bwd))
}

/// Refuses to run a backward direction that still has placeholders.
fn require_filled(bwd: &Definition) -> Result<()> {
    let slots = defaults_required(bwd);
    if slots.is_empty() {
        return Ok(());
    }
    let list = slots
        .iter()
        .map(|s| format!("rule {} ?{}? ({})", s.rule_id, s.index, s.sort))
        .collect::<Vec<_>>()
        .join(", ");
    Err(exit_with(
        EXIT_DEFAULTS,
        format!("defaults required before running backward: {list}; pass --defaults, or run `bxt synth` for a template"),
    ))
}

// ---------------------------------------------------------------------------
// parse / lint
// ---------------------------------------------------------------------------

fn cmd_parse(cli: &Cli, def_path: &Path, model: Option<&Path>, sort: Option<&str>) -> Result<u8> {
    let def = load_definition(def_path)?;
    match model {
        None => {
            if cli.porcelain {
                println!("rules={}", def.rules.len());
                println!("cells={}", def.cells.len());
                println!("digest={}", definition_digest(&def));
            } else {
                print!("{}", ensure_newline(print_definition(&def)));
            }
        }
        Some(m) => {
            let text = read_file(m)?;
            let (term, at) = match sort {
                Some(s) => {
                    let sort = Sort::new(s);
                    let t = parse_model(&def, &text, &sort)
                        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", m.display())))?;
                    (t, sort)
                }
                None => parse_model_any(&def, &text)
                    .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", m.display())))?,
            };
            if cli.porcelain {
                println!("sort={at}");
                println!("model={}", print_term(&term));
            } else {
                println!("{}", print_term(&term));
            }
        }
    }
    Ok(0)
}

fn cmd_lint(cli: &Cli, def_path: &Path) -> Result<u8> {
    let def = load_definition(def_path)?;
    let diags = lint_definition(&def);
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    let warnings = diags.iter().filter(|d| d.severity == Severity::Warning).count();
    if cli.porcelain {
        for d in &diags {
            println!("diagnostic={d}");
        }
        println!("errors={errors}");
        println!("warnings={warnings}");
    } else {
        for d in &diags {
            println!("{d}");
        }
        println!("{errors} errors, {warnings} warnings");
    }
    Ok(if errors > 0 { EXIT_USAGE } else { 0 })
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(cli: &Cli, def_path: &Path, defaults: Option<&Path>, out: &Path) -> Result<u8> {
    let ux = load_definition(def_path)?;
    let fwd = synthesize_forward(&ux)
        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", def_path.display())))?;
    let raw_bwd = synthesize_backward(&ux)
        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", def_path.display())))?;

    // Fill what the defaults file covers; an incomplete file leaves the
    // backward direction raw so the template below can name what is missing.
    let mut incomplete: Option<String> = None;
    let bwd = match defaults {
        Some(p) => {
            let entries = parse_defaults(&read_file(p)?)
                .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", p.display())))?;
            match apply_defaults(&raw_bwd, &entries) {
                Ok(filled) => filled,
                Err(e @ SynthError::MissingDefault { .. }) => {
                    incomplete = Some(format!("{}: {e}", p.display()));
                    raw_bwd
                }
                Err(other) => return Err(exit_with(EXIT_USAGE, format!("{}: {other}", p.display()))),
            }
        }
        None => raw_bwd,
    };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let fwd_path = out.join("forward.kbx");
    let bwd_path = out.join("backward.kbx");
    write_file(&fwd_path, &print_definition(&fwd))?;
    write_file(&bwd_path, &print_definition(&bwd))?;

    let slots = defaults_required(&bwd);
    let template_path = if slots.is_empty() {
        None
    } else {
        let path = out.join("defaults.template.kbxd");
        let template = defaults_template(&ux)
            .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", def_path.display())))?;
        write_file(&path, &template)?;
        Some(path)
    };

    if cli.porcelain {
        println!("forward={}", fwd_path.display());
        println!("backward={}", bwd_path.display());
        if let Some(t) = &template_path {
            println!("template={}", t.display());
        }
        println!("missing={}", slots.len());
    } else {
        println!("wrote {}", fwd_path.display());
        println!("wrote {}", bwd_path.display());
        if let Some(t) = &template_path {
            println!("wrote {} ({} placeholders to fill)", t.display(), slots.len());
        }
    }
    if let Some(msg) = incomplete {
        eprintln!("note: {msg}");
    }
    Ok(if slots.is_empty() { 0 } else { EXIT_DEFAULTS })
}

fn cmd_synth_forward(def_path: &Path, out: Option<&Path>) -> Result<u8> {
    let ux = load_definition(def_path)?;
    let fwd = synthesize_forward(&ux)
        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", def_path.display())))?;
    emit_definition(&fwd, out)
}

fn cmd_synth_backward(def_path: &Path, defaults: Option<&Path>, out: Option<&Path>) -> Result<u8> {
    let (_, _, bwd) = synth_pair(def_path, defaults)?;
    let slots = defaults_required(&bwd);
    if !slots.is_empty() {
        eprintln!(
            "note: {} placeholders remain; apply a defaults file before running this direction",
            slots.len()
        );
    }
    emit_definition(&bwd, out)
}

fn emit_definition(def: &Definition, out: Option<&Path>) -> Result<u8> {
    let text = ensure_newline(print_definition(def));
    match out {
        Some(p) => {
            write_file(p, &text)?;
            println!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn ensure_newline(mut text: String) -> String {
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text
}

// ---------------------------------------------------------------------------
// sync / check / roundtrip
// ---------------------------------------------------------------------------

struct LoadedPair {
    fwd: Definition,
    bwd: Definition,
    source: Term,
    target: Term,
}

fn load_pair(pair: &PairArgs) -> Result<LoadedPair> {
    let (ux, fwd, bwd) = synth_pair(&pair.def, pair.defaults.as_deref())?;
    require_filled(&bwd)?;
    let source = load_model(&ux, &pair.source, None)?;
    let target = load_model(&ux, &pair.target, None)?;
    Ok(LoadedPair { fwd, bwd, source, target })
}

fn cmd_sync(
    cli: &Cli,
    pair: &PairArgs,
    direction: Direction,
    out: Option<&Path>,
    emit_certs: Option<&Path>,
    budget: usize,
) -> Result<u8> {
    let p = load_pair(pair)?;
    let result: SyncResult = match direction {
        Direction::Forward => sync_forward(&p.fwd, &p.bwd, &p.source, &p.target, budget),
        Direction::Backward => sync_backward(&p.fwd, &p.bwd, &p.source, &p.target, budget),
    }
    .map_err(|e| exit_with(EXIT_FAILED, e.to_string()))?;

    let (label, rebuilt) = match direction {
        Direction::Forward => ("target", &result.target),
        Direction::Backward => ("source", &result.source),
    };
    let verdict = match result.verdict {
        Verdict::Consistent => "consistent",
        Verdict::Synchronized => "synchronized",
    };

    if let Some(p) = out {
        write_file(p, &print_term(rebuilt))?;
    }
    let mut cert_paths = Vec::new();
    if let Some(dir) = emit_certs {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, cert) in [
            ("forward.kbxc", &result.forward_cert),
            ("backward.kbxc", &result.backward_cert),
        ] {
            let path = dir.join(name);
            write_file(&path, &certificate_text(cert))?;
            cert_paths.push(path);
        }
    }

    if cli.porcelain {
        println!("verdict={verdict}");
        println!("{label}={}", print_term(rebuilt));
        println!("store={}", print_term(&result.store));
        for p in &cert_paths {
            println!("cert={}", p.display());
        }
    } else {
        println!("verdict: {verdict}");
        println!("{label}: {}", print_term(rebuilt));
        println!("store: {}", print_term(&result.store));
        if let Some(p) = out {
            println!("wrote {}", p.display());
        }
        for p in &cert_paths {
            println!("wrote {}", p.display());
        }
    }
    Ok(0)
}

fn cmd_check(cli: &Cli, pair: &PairArgs, budget: usize) -> Result<u8> {
    let p = load_pair(pair)?;
    let verdict = check_consistency(&p.fwd, &p.bwd, &p.source, &p.target, budget)
        .map_err(|e| exit_with(EXIT_FAILED, e.to_string()))?;
    match verdict {
        Consistency::Consistent => {
            if cli.porcelain {
                println!("verdict=consistent");
            } else {
                println!("consistent");
            }
            Ok(0)
        }
        Consistency::Inconsistent(diffs) => {
            if cli.porcelain {
                println!("verdict=inconsistent");
                for d in &diffs {
                    println!("diff={d}");
                }
            } else {
                println!("inconsistent:");
                for d in &diffs {
                    println!("  {d}");
                }
            }
            Ok(EXIT_FAILED)
        }
    }
}

fn cmd_roundtrip(cli: &Cli, pair: &PairArgs, budget: usize) -> Result<u8> {
    let p = load_pair(pair)?;
    let report = roundtrip_test(&p.fwd, &p.bwd, &p.source, &p.target, budget);
    let all = report.all_hold();
    for (name, law) in [
        ("forward-then-back", &report.forward_then_back),
        ("backward-then-forward", &report.backward_then_forward),
    ] {
        if cli.porcelain {
            println!("{}={}", name.replace('-', "_"), law.holds);
            for w in &law.witnesses {
                println!("witness={w}");
            }
        } else {
            println!("{name}: {}", if law.holds { "holds" } else { "violated" });
            for w in &law.witnesses {
                println!("  {w}");
            }
        }
    }
    Ok(if all { 0 } else { EXIT_FAILED })
}

fn cmd_check_cert(cli: &Cli, def_path: &Path, cert_path: &Path) -> Result<u8> {
    let def = load_definition(def_path)?;
    let cert = parse_certificate(&read_file(cert_path)?)
        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", cert_path.display())))?;
    let outcome = check_certificate(&def, &cert);
    if cli.porcelain {
        match &outcome {
            CheckOutcome::Accepted { steps } => {
                println!("outcome=accepted");
                println!("steps={steps}");
            }
            CheckOutcome::Rejected { step, reason } => {
                println!("outcome=rejected");
                println!("step={step}");
                println!("reason={reason}");
            }
        }
    } else {
        println!("{outcome}");
    }
    Ok(if outcome.is_accepted() { 0 } else { EXIT_FAILED })
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

/// One corpus case manifest: `key = value` lines, `//` comments, paths
/// relative to the manifest's directory.
struct CaseManifest {
    name: String,
    definition: PathBuf,
    defaults: Option<PathBuf>,
    source: PathBuf,
    target: PathBuf,
    expected_consistent: bool,
    resynced: Option<PathBuf>,
}

fn parse_manifest(path: &Path) -> Result<CaseManifest> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let text = read_file(path)?;
    let mut name = None;
    let mut definition = None;
    let mut defaults = None;
    let mut source = None;
    let mut target = None;
    let mut expected = None;
    let mut resynced = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split("//").next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("{}:{}: expected `key = value`", path.display(), i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "name" => name = Some(value.to_string()),
            "definition" => definition = Some(base.join(value)),
            "defaults" => defaults = Some(base.join(value)),
            "source" => source = Some(base.join(value)),
            "target" => target = Some(base.join(value)),
            "resynced" => resynced = Some(base.join(value)),
            "expected" => {
                expected = Some(match value {
                    "consistent" => true,
                    "inconsistent" => false,
                    other => anyhow::bail!(
                        "{}:{}: expected `consistent` or `inconsistent`, got `{other}`",
                        path.display(),
                        i + 1
                    ),
                })
            }
            other => anyhow::bail!("{}:{}: unknown key `{other}`", path.display(), i + 1),
        }
    }
    let missing = |what: &str| anyhow::anyhow!("{}: missing `{what}`", path.display());
    Ok(CaseManifest {
        name: name.ok_or_else(|| missing("name"))?,
        definition: definition.ok_or_else(|| missing("definition"))?,
        defaults,
        source: source.ok_or_else(|| missing("source"))?,
        target: target.ok_or_else(|| missing("target"))?,
        expected_consistent: expected.ok_or_else(|| missing("expected"))?,
        resynced,
    })
}

struct CaseReport {
    name: String,
    laws: bool,
    verdict: bool,
    certs: bool,
    steps: usize,
    millis: u128,
    note: Option<String>,
}

impl CaseReport {
    fn ok(&self) -> bool {
        self.laws && self.verdict && self.certs && self.note.is_none()
    }

    fn failed(name: &str, note: String) -> CaseReport {
        CaseReport {
            name: name.to_string(),
            laws: false,
            verdict: false,
            certs: false,
            steps: 0,
            millis: 0,
            note: Some(note),
        }
    }
}

fn run_case(manifest: &CaseManifest, budget: usize, emit: Option<&Path>) -> Result<CaseReport> {
    let started = Instant::now();
    let (ux, fwd, bwd) = synth_pair(&manifest.definition, manifest.defaults.as_deref())?;
    require_filled(&bwd)?;

    // Synthesized text must survive a reparse before anything runs it.
    for dir in [&fwd, &bwd] {
        let reparsed = parse_definition(&print_definition(dir))
            .map_err(|e| anyhow::anyhow!("synthesized direction does not reparse: {e}"))?;
        if &reparsed != dir {
            anyhow::bail!("synthesized direction changes under reparse");
        }
    }

    let source = load_model(&ux, &manifest.source, None)?;
    let target = load_model(&ux, &manifest.target, None)?;

    let laws = roundtrip_test(&fwd, &bwd, &source, &target, budget).all_hold();

    let consistency = check_consistency(&fwd, &bwd, &source, &target, budget)
        .map_err(|e| anyhow::anyhow!("consistency check failed to run: {e}"))?;
    let mut verdict = consistency.is_consistent() == manifest.expected_consistent;

    let run = sync_forward(&fwd, &bwd, &source, &target, budget)
        .map_err(|e| anyhow::anyhow!("sync failed to run: {e}"))?;
    if let Some(golden) = &manifest.resynced {
        let expected = load_model(&ux, golden, None)?;
        if run.target != expected {
            verdict = false;
        }
    }

    let certs = check_certificate(&fwd, &run.forward_cert).is_accepted()
        && check_certificate(&bwd, &run.backward_cert).is_accepted();
    let steps = run.forward_cert.steps.len() + run.backward_cert.steps.len();

    if let Some(dir) = emit {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let stem = |suffix: &str| dir.join(format!("{}.{suffix}", manifest.name));
        write_file(&stem("forward.kbx"), &print_definition(&fwd))?;
        write_file(&stem("backward.kbx"), &print_definition(&bwd))?;
        write_file(&stem("store.txt"), &print_term(&run.store))?;
        write_file(&stem("forward.kbxc"), &certificate_text(&run.forward_cert))?;
        write_file(&stem("backward.kbxc"), &certificate_text(&run.backward_cert))?;
    }

    Ok(CaseReport {
        name: manifest.name.clone(),
        laws,
        verdict,
        certs,
        steps,
        millis: started.elapsed().as_millis(),
        note: None,
    })
}

fn cmd_bench(cli: &Cli, corpus: &Path, emit: Option<&Path>, budget: usize) -> Result<u8> {
    let cases_dir = corpus.join("cases");
    let mut manifest_paths = Vec::new();
    let entries = fs::read_dir(&cases_dir)
        .map_err(|e| exit_with(EXIT_USAGE, format!("{}: {e}", cases_dir.display())))?;
    for entry in entries {
        let path = entry?.path().join("case.kbxp");
        if path.is_file() {
            manifest_paths.push(path);
        }
    }
    manifest_paths.sort();
    if manifest_paths.is_empty() {
        return Err(exit_with(
            EXIT_USAGE,
            format!("no case.kbxp manifests under {}", cases_dir.display()),
        ));
    }

    let mut reports = Vec::new();
    for path in &manifest_paths {
        let report = match parse_manifest(path) {
            Ok(manifest) => run_case(&manifest, budget, emit).unwrap_or_else(|e| {
                CaseReport::failed(&manifest.name, format!("{e:#}"))
            }),
            Err(e) => CaseReport::failed(&path.display().to_string(), format!("{e:#}")),
        };
        reports.push(report);
    }

    let failures = reports.iter().filter(|r| !r.ok()).count();
    if cli.porcelain {
        for r in &reports {
            let mut line = format!(
                "case={} ok={} laws={} verdict={} certs={} steps={} time_ms={}",
                r.name,
                r.ok(),
                r.laws,
                r.verdict,
                r.certs,
                r.steps,
                r.millis
            );
            if let Some(note) = &r.note {
                line.push_str(&format!(" note={note}"));
            }
            println!("{line}");
        }
        println!("cases={} failures={failures}", reports.len());
    } else {
        let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        println!(
            "{:<width$}  {:<6}  {:<5}  {:<7}  {:<5}  {:>5}  {:>8}",
            "case", "result", "laws", "verdict", "certs", "steps", "time"
        );
        for r in &reports {
            println!(
                "{:<width$}  {:<6}  {:<5}  {:<7}  {:<5}  {:>5}  {:>6}ms",
                r.name,
                if r.ok() { "pass" } else { "FAIL" },
                if r.laws { "ok" } else { "no" },
                if r.verdict { "ok" } else { "no" },
                if r.certs { "ok" } else { "no" },
                r.steps,
                r.millis
            );
            if let Some(note) = &r.note {
                println!("{:<width$}  note: {note}", "");
            }
        }
        if failures == 0 {
            println!("all {} cases pass", reports.len());
        } else {
            println!("{failures} of {} cases failed", reports.len());
        }
    }
    Ok(if failures == 0 { 0 } else { EXIT_FAILED })
}
