//! Batch verification CLI: refinement and parameterized model checks,
//! litmus evaluation and campaigns, and the exhaustive trace-theory sweep.
//!
//! Exit codes: 0 pass, 2 property violation (counterexample written to a
//! file), 3 budget exhausted, 64 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tsoverify::litmus;
use tsoverify::mc::{explore, format_counterexample, ExploreError, ExploreOptions};
use tsoverify::param;
use tsoverify::protocol::{build_model, ProtocolConfig, ProtocolState};
use tsoverify::tsolb;

const EXIT_PASS: u8 = 0;
const EXIT_VIOLATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_USAGE: u8 = 64;

/// Output directory: `--output-dir`, else $TSOVERIFY_OUT, else `.`.
fn output_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("TSOVERIFY_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_report(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let _ = std::fs::create_dir_all(dir);
    let path = dir.join(name);
    if let Err(e) = std::fs::write(&path, contents) {
        eprintln!("warning: could not write {}: {e}", path.display());
    }
    path
}

#[derive(Parser)]
#[command(name = "tsoverify", version, about = "Model-checking toolkit for a lazy coherence protocol against TSO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Protocol verification runs.
    Verify {
        #[command(subcommand)]
        what: VerifyCmd,
    },
    /// Litmus test evaluation.
    Litmus {
        #[command(subcommand)]
        what: LitmusCmd,
    },
    /// Operational trace-model checks.
    Tsolb {
        #[command(subcommand)]
        what: TsolbCmd,
    },
    /// Exploration statistics without property checking detail.
    Explore {
        #[command(subcommand)]
        what: ExploreCmd,
    },
}

#[derive(Args)]
struct SizeArgs {
    #[arg(long, default_value_t = 2)]
    procs: usize,
    #[arg(long, default_value_t = 2)]
    addrs: usize,
    #[arg(long, default_value_t = 2)]
    vals: u8,
    /// Per-destination network buffer bound (default 2*procs).
    #[arg(long)]
    net_max: Option<usize>,
}

impl SizeArgs {
    fn config(&self) -> Result<ProtocolConfig, String> {
        let cfg = ProtocolConfig::new(self.procs, self.addrs, self.vals)
            .map_err(|e| e.to_string())?;
        Ok(match self.net_max {
            Some(n) if n == 0 => return Err("--net-max must be positive".into()),
            Some(n) => cfg.with_net_max(n),
            None => cfg,
        })
    }
}

#[derive(Args)]
struct BudgetArgs {
    /// Maximum number of distinct states to visit.
    #[arg(long, default_value_t = 10_000_000)]
    max_states: usize,
    /// Worker threads for frontier expansion.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory for counterexample and report files.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl BudgetArgs {
    fn options(&self) -> ExploreOptions<ProtocolState> {
        ExploreOptions {
            max_states: self.max_states,
            workers: self.workers.max(1),
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Exhaustively check the Match refinement invariant, the structural
    /// invariants and deadlock freedom on the concrete protocol.
    Refinement {
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Parameterized check: abstract-cache model plus concrete lemma check.
    Param {
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Restriction file (`restrict <rule> when <pred> because <lemmas>`).
        #[arg(long)]
        restrictions: PathBuf,
        /// Lemma file (`lemma <name>: forall <vars>: <pred>`).
        #[arg(long)]
        lemmas: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Axiomatic,
    Tsolb,
    Both,
}

#[derive(Subcommand)]
enum LitmusCmd {
    /// Evaluate one litmus file.
    Run {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = EngineArg::Both)]
        engine: EngineArg,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Differential campaign over seeded random tests.
    Campaign {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TsolbCmd {
    /// Exhaustive sweep of all traces up to a depth, checking the logical
    /// time construction and the TSO axioms on every trace.
    CheckTheorem {
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 2)]
        procs: usize,
        #[arg(long, default_value_t = 2)]
        addrs: usize,
        #[arg(long, default_value_t = 2)]
        vals: u8,
        /// Cross-check every Nth trace against the full checker (0 = off).
        #[arg(long, default_value_t = 0)]
        cross_check_every: u64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExploreCmd {
    /// Explore the protocol and print state counts and statistics only.
    Dump {
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        budget: BudgetArgs,
    },
}

#[derive(Serialize)]
struct RunSummary<'a> {
    command: &'a str,
    pass: bool,
    states: u64,
    transitions: u64,
    depth: usize,
    elapsed_ms: u128,
    violation: Option<&'a str>,
    counterexample_file: Option<String>,
}

fn emit_summary(dir: &Path, name: &str, summary: &RunSummary) {
    let json = serde_json::to_string_pretty(summary).expect("serializable");
    println!("{json}");
    write_report(dir, &format!("{name}.json"), &json);
}

fn budget_exit(e: &ExploreError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        ExploreError::Budget { .. } => ExitCode::from(EXIT_BUDGET),
        _ => ExitCode::from(EXIT_VIOLATION),
    }
}

fn verify_refinement(size: &SizeArgs, budget: &BudgetArgs) -> ExitCode {
    let cfg = match size.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let dir = output_dir(&budget.output_dir);
    let model = build_model(cfg);
    let start = Instant::now();
    let report = match explore(&model, &budget.options()) {
        Ok(r) => r,
        Err(e) => return budget_exit(&e),
    };
    let kind = report.violation.as_ref().map(|v| format!("{:?}", v.kind));
    let mut cx_file = None;
    if let Some(v) = &report.violation {
        let path = write_report(&dir, "refinement-counterexample.txt", &format_counterexample(&model.name, v));
        eprintln!("counterexample written to {}", path.display());
        cx_file = Some(path.display().to_string());
    }
    emit_summary(
        &dir,
        "refinement-summary",
        &RunSummary {
            command: "verify refinement",
            pass: report.ok(),
            states: report.stats.states,
            transitions: report.stats.transitions,
            depth: report.stats.depth,
            elapsed_ms: start.elapsed().as_millis(),
            violation: kind.as_deref(),
            counterexample_file: cx_file,
        },
    );
    if report.ok() {
        ExitCode::from(EXIT_PASS)
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn verify_param(
    size: &SizeArgs,
    budget: &BudgetArgs,
    restrictions: &Path,
    lemmas: &Path,
) -> ExitCode {
    let cfg = match size.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let dir = output_dir(&budget.output_dir);
    let read = |p: &Path| match std::fs::read_to_string(p) {
        Ok(t) => Ok(t),
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", p.display());
            Err(ExitCode::from(EXIT_USAGE))
        }
    };
    let (rtext, ltext) = match (read(restrictions), read(lemmas)) {
        (Ok(r), Ok(l)) => (r, l),
        (Err(c), _) | (_, Err(c)) => return c,
    };
    let parse = |t: &str, what: &str| match param::parse_param_file(t) {
        Ok(x) => Ok(x),
        Err(e) => {
            eprintln!("error parsing {what}: {e}");
            Err(ExitCode::from(EXIT_USAGE))
        }
    };
    let (rs, _) = match parse(&rtext, "restrictions") {
        Ok(x) => x,
        Err(c) => return c,
    };
    let (_, ls) = match parse(&ltext, "lemmas") {
        Ok(x) => x,
        Err(c) => return c,
    };
    let start = Instant::now();

    // Phase 1: every lemma must hold on the fully concrete model.
    let lemma_report = match param::check_lemmas_concrete(cfg, &ls, &budget.options()) {
        Ok(r) => r,
        Err(e) => return budget_exit(&e),
    };
    if let Some((name, v)) = &lemma_report.failure {
        let path = write_report(&dir, "param-lemma-counterexample.txt", &format_counterexample("concrete lemma check", v));
        eprintln!("lemma {name} fails on the concrete model; counterexample written to {}", path.display());
        emit_summary(
            &dir,
            "param-summary",
            &RunSummary {
                command: "verify param",
                pass: false,
                states: lemma_report.stats.states,
                transitions: lemma_report.stats.transitions,
                depth: lemma_report.stats.depth,
                elapsed_ms: start.elapsed().as_millis(),
                violation: Some(name),
                counterexample_file: Some(path.display().to_string()),
            },
        );
        return ExitCode::from(EXIT_VIOLATION);
    }
    println!(
        "concrete lemmas hold ({} states)",
        lemma_report.stats.states
    );

    // Phase 2: the abstract model with restrictions must be clean.
    let am = match param::abstractify(cfg, rs, ls) {
        Ok(am) => am,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let report = match param::check_parameterized(&am, budget.options()) {
        Ok(r) => r,
        Err(e) => return budget_exit(&e),
    };
    let kind = report.violation.as_ref().map(|v| format!("{:?}", v.kind));
    let mut cx_file = None;
    if let Some(v) = &report.violation {
        let mut text = format_counterexample(&am.model.name, v);
        if let Some(t) = &report.abstract_trigger {
            text.push_str(&format!("\ntriggering abstract send: {t}\n"));
        }
        let path = write_report(&dir, "param-counterexample.txt", &text);
        eprintln!("counterexample written to {}", path.display());
        if let Some(t) = &report.abstract_trigger {
            eprintln!("triggering abstract send: {t}");
        }
        cx_file = Some(path.display().to_string());
    }
    emit_summary(
        &dir,
        "param-summary",
        &RunSummary {
            command: "verify param",
            pass: report.pass(),
            states: report.stats.states,
            transitions: report.stats.transitions,
            depth: report.stats.depth,
            elapsed_ms: start.elapsed().as_millis(),
            violation: kind.as_deref(),
            counterexample_file: cx_file,
        },
    );
    if report.pass() {
        ExitCode::from(EXIT_PASS)
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn engine_list(e: EngineArg) -> Vec<litmus::Engine> {
    match e {
        EngineArg::Axiomatic => vec![litmus::Engine::Axiomatic],
        EngineArg::Tsolb => vec![litmus::Engine::TsoLb],
        EngineArg::Both => vec![litmus::Engine::Axiomatic, litmus::Engine::TsoLb],
    }
}

fn litmus_run(file: &Path, engine: EngineArg, out: &Option<PathBuf>) -> ExitCode {
    let dir = output_dir(out);
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let test = match litmus::parse(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut lines = Vec::new();
    let mut mismatch = false;
    if matches!(engine, EngineArg::Both) {
        match litmus::compare(&test) {
            Ok(c) => {
                lines.push(format!(
                    "{}: axiomatic={:?} tsolb={:?} {}",
                    test.name, c.axiomatic.verdict, c.tsolb.verdict, c.classification
                ));
                for (eng, verdict) in [
                    (litmus::Engine::Axiomatic, c.axiomatic.verdict),
                    (litmus::Engine::TsoLb, c.tsolb.verdict),
                ] {
                    if let Some(expected) = test.expected.get(&eng) {
                        if *expected != verdict {
                            mismatch = true;
                            lines.push(format!(
                                "  MISMATCH: {eng:?} expected {expected:?}, got {verdict:?}"
                            ));
                        }
                    }
                }
            }
            Err(e) => return budget_exit_litmus(&e),
        }
    } else {
        for eng in engine_list(engine) {
            match litmus::evaluate(&test, eng) {
                Ok(ev) => {
                    lines.push(format!("{}: {eng:?}={:?}", test.name, ev.verdict));
                    if let Some(expected) = test.expected.get(&eng) {
                        if *expected != ev.verdict {
                            mismatch = true;
                            lines.push(format!(
                                "  MISMATCH: {eng:?} expected {expected:?}, got {:?}",
                                ev.verdict
                            ));
                        }
                    }
                }
                Err(e) => return budget_exit_litmus(&e),
            }
        }
    }
    let text = lines.join("\n");
    println!("{text}");
    write_report(&dir, "litmus-result.txt", &text);
    if mismatch {
        ExitCode::from(EXIT_VIOLATION)
    } else {
        ExitCode::from(EXIT_PASS)
    }
}

fn budget_exit_litmus(e: &litmus::EvalError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_BUDGET)
}

fn litmus_campaign(seed: u64, count: u64, out: &Option<PathBuf>) -> ExitCode {
    let dir = output_dir(out);
    let params = litmus::GenParams::default();
    let mut soundness_bugs = 0u64;
    let mut gaps = 0u64;
    let mut consistent = 0u64;
    let mut lines = Vec::new();
    for i in 0..count {
        let test = litmus::generate_random(seed.wrapping_add(i), params);
        match litmus::compare(&test) {
            Ok(c) => {
                match c.classification {
                    litmus::Classification::SoundnessBug => {
                        soundness_bugs += 1;
                        lines.push(format!("seed {}: SOUNDNESS-BUG\n{test}", seed.wrapping_add(i)));
                    }
                    litmus::Classification::StrictnessGap => gaps += 1,
                    litmus::Classification::Consistent => consistent += 1,
                }
            }
            Err(e) => {
                eprintln!("error on seed {}: {e}", seed.wrapping_add(i));
                return ExitCode::from(EXIT_BUDGET);
            }
        }
    }
    let summary = format!(
        "campaign: {count} tests, seed base {seed}\nCONSISTENT: {consistent}\nSTRICTNESS-GAP: {gaps}\nSOUNDNESS-BUG: {soundness_bugs}\n"
    );
    println!("{summary}");
    let mut full = summary;
    if !lines.is_empty() {
        full.push_str(&lines.join("\n"));
    }
    write_report(&dir, "campaign-report.txt", &full);
    if soundness_bugs > 0 {
        ExitCode::from(EXIT_VIOLATION)
    } else {
        ExitCode::from(EXIT_PASS)
    }
}

#[allow(clippy::too_many_arguments)]
fn tsolb_check_theorem(
    depth: usize,
    procs: usize,
    addrs: usize,
    vals: u8,
    cross_check_every: u64,
    out: &Option<PathBuf>,
) -> ExitCode {
    let dir = output_dir(out);
    let cfg = match tsolb::LbConfig::new(procs, addrs, vals) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if procs > 4 || addrs > 4 || depth > 12 {
        eprintln!("error: sweep supports at most 4 procs, 4 addrs, depth 12");
        return ExitCode::from(EXIT_USAGE);
    }
    let start = Instant::now();
    let report = tsolb::theorem_sweep(cfg, depth, cross_check_every);
    let mut text = format!(
        "traces checked: {}\ncross-checked: {}\nproposition failures (no single logical order): {}\naxiom failures: {}\nelapsed: {:?}\n",
        report.traces_checked,
        report.cross_checked,
        report.proposition_failures,
        report.axiom_failures,
        start.elapsed(),
    );
    if let Some(tr) = &report.first_proposition_failure {
        text.push_str(&format!(
            "first proposition counterexample:\n{}",
            tr.dump()
        ));
    }
    if let Some(tr) = &report.first_axiom_failure {
        text.push_str(&format!("first axiom counterexample:\n{}", tr.dump()));
    }
    println!("{text}");
    write_report(&dir, "theorem-sweep.txt", &text);
    // The axioms are the soundness claim; a proposition failure only means
    // the single-order construction does not exist for some trace.
    if report.axioms_pass() {
        ExitCode::from(EXIT_PASS)
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn explore_dump(size: &SizeArgs, budget: &BudgetArgs) -> ExitCode {
    let cfg = match size.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let model = build_model(cfg);
    let start = Instant::now();
    match explore(&model, &budget.options()) {
        Ok(r) => {
            println!(
                "model: {}\nstates: {}\ntransitions: {}\ndepth: {}\nviolation: {}\nelapsed: {:?}",
                model.name,
                r.stats.states,
                r.stats.transitions,
                r.stats.depth,
                r.violation
                    .as_ref()
                    .map_or("none".to_string(), |v| format!("{:?}", v.kind)),
                start.elapsed(),
            );
            ExitCode::from(EXIT_PASS)
        }
        Err(e) => budget_exit(&e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own exit code is 2; the documented usage code is 64.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::from(EXIT_PASS)
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match &cli.command {
        Command::Verify { what } => match what {
            VerifyCmd::Refinement { size, budget } => verify_refinement(size, budget),
            VerifyCmd::Param {
                size,
                budget,
                restrictions,
                lemmas,
            } => verify_param(size, budget, restrictions, lemmas),
        },
        Command::Litmus { what } => match what {
            LitmusCmd::Run {
                file,
                engine,
                output_dir,
            } => litmus_run(file, *engine, output_dir),
            LitmusCmd::Campaign {
                seed,
                count,
                output_dir,
            } => litmus_campaign(*seed, *count, output_dir),
        },
        Command::Tsolb { what } => match what {
            TsolbCmd::CheckTheorem {
                depth,
                procs,
                addrs,
                vals,
                cross_check_every,
                output_dir,
            } => tsolb_check_theorem(*depth, *procs, *addrs, *vals, *cross_check_every, output_dir),
        },
        Command::Explore { what } => match what {
            ExploreCmd::Dump { size, budget } => explore_dump(size, budget),
        },
    }
}
