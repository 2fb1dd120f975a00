//! Command-line driver for the private-web-search simulator.
//!
//! Exit codes: 0 on success, 2 on configuration or precondition errors,
//! 3 when a malicious-mode run aborts (the culprit is in `abort.txt`).

use clap::{Args, Parser, Subcommand};
use pws_core::harness::{
    run_experiment, Experiment, FaultInjection, FaultKind, FaultPlan, MockEngine,
};
use pws_core::metrics::PartyId;
use pws_core::protocol::{Mode, ProtocolConfig};
use pws_core::{
    assign_groups, generate_params, malgrp_bound, malgrp_exact, params_to_text, rational_to_f64,
    BulletinBoard,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pws", version, about = "Private web search protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate group and sharing-field parameters and write params.txt.
    Params(ParamsArgs),
    /// Execute one protocol run and write its artifacts.
    Run(RunArgs),
    /// Fan out independent runs over a range of seeds.
    Sweep(SweepArgs),
    /// Simulate group construction over the public bulletin board.
    Group(GroupArgs),
    /// Evaluate the malicious-grouping probability.
    Lemma(LemmaArgs),
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    bits: u64,
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    n: Option<u32>,
    #[arg(long = "N")]
    managers: Option<u32>,
    /// semi-honest | malicious
    #[arg(long)]
    mode: Option<String>,
    /// Modulus bit length.
    #[arg(long)]
    bits: Option<u64>,
    /// Shuffle-proof repetitions in malicious mode.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated query strings; defaults to q0..q{n-1}.
    #[arg(long)]
    queries: Option<String>,
    /// JSON config file; explicit flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scripted fault, `kind:party` (e.g. `shuffle:3`, `key:2`); repeatable.
    /// Kinds: key, plaintext, shuffle, equivocate, replay.
    #[arg(long = "fault")]
    faults: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of seeds to run.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    seed_start: u64,
}

#[derive(Args)]
struct GroupArgs {
    /// Registered user count.
    #[arg(long)]
    nu: u32,
    /// Group size.
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct LemmaArgs {
    /// Total user count.
    #[arg(long)]
    nu: u64,
    /// Corrupted user count.
    #[arg(long)]
    t: u64,
    /// Group size (even).
    #[arg(long)]
    n: u64,
    /// Optional Monte Carlo trial count.
    #[arg(long)]
    mc: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// File form of the run configuration; flags override any field.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<u32>,
    #[serde(rename = "N")]
    managers: Option<u32>,
    mode: Option<String>,
    bits: Option<u64>,
    k: Option<u32>,
    seed: Option<u64>,
    queries: Option<Vec<String>>,
    out: Option<PathBuf>,
    fault: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
struct ResolvedRun {
    n: u32,
    managers: u32,
    mode: Mode,
    bits: u64,
    k: u32,
    seed: u64,
    queries: Vec<String>,
    out: PathBuf,
    faults: Vec<FaultInjection>,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "semi-honest" => Ok(Mode::SemiHonest),
        "malicious" => Ok(Mode::Malicious),
        other => Err(format!(
            "unknown mode {other:?}; use semi-honest or malicious"
        )),
    }
}

fn parse_fault(spec: &str) -> Result<FaultInjection, String> {
    let (kind, party) = spec
        .split_once(':')
        .ok_or_else(|| format!("fault {spec:?} is not of the form kind:party"))?;
    let kind = FaultKind::parse(kind).ok_or_else(|| {
        format!("unknown fault kind {kind:?}; use key, plaintext, shuffle, equivocate, or replay")
    })?;
    let index: u32 = party
        .parse()
        .map_err(|_| format!("fault party {party:?} is not an index"))?;
    let party = if kind == FaultKind::BadKeyProof {
        PartyId::Manager(index)
    } else {
        PartyId::User(index)
    };
    Ok(FaultInjection::new(kind, party))
}

fn resolve_run(args: &RunArgs) -> Result<ResolvedRun, String> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("cannot parse config {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let n = args
        .n
        .or(file.n)
        .ok_or("group size --n is required (flag or config file)")?;
    let managers = args.managers.or(file.managers).unwrap_or(3);
    let mode = parse_mode(
        args.mode
            .as_deref()
            .or(file.mode.as_deref())
            .unwrap_or("semi-honest"),
    )?;
    let bits = args.bits.or(file.bits).unwrap_or(512);
    let k = args.k.or(file.k).unwrap_or(40);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let queries = match (&args.queries, file.queries) {
        (Some(list), _) => list.split(',').map(str::to_string).collect(),
        (None, Some(list)) => list,
        (None, None) => (0..n).map(|i| format!("q{i}")).collect(),
    };
    let out = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("."));
    let fault_specs: Vec<String> = if args.faults.is_empty() {
        file.fault.unwrap_or_default()
    } else {
        args.faults.clone()
    };
    let faults = fault_specs
        .iter()
        .map(|s| parse_fault(s))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ResolvedRun {
        n,
        managers,
        mode,
        bits,
        k,
        seed,
        queries,
        out,
        faults,
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn build_protocol_config(run: &ResolvedRun) -> Result<ProtocolConfig, String> {
    let (params, field) =
        generate_params(run.bits, run.n, &run.seed.to_be_bytes()).map_err(|e| e.to_string())?;
    let config = ProtocolConfig {
        n: run.n,
        managers: run.managers,
        mode: run.mode,
        shuffle_reps: run.k,
        params,
        field,
        seed: run.seed,
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

/// Execute one resolved run and write its artifacts into `dir`.
fn execute_run(run: &ResolvedRun, dir: &Path) -> Result<ExitCode, String> {
    let config = build_protocol_config(run)?;
    if run.queries.len() != run.n as usize {
        return Err(format!(
            "expected {} queries, got {}",
            run.n,
            run.queries.len()
        ));
    }
    let plan = FaultPlan {
        faults: run.faults.clone(),
    };
    let experiment: Experiment =
        run_experiment(&config, &run.queries, &plan, &MockEngine).map_err(|e| e.to_string())?;

    write_file(
        dir,
        "params.txt",
        &params_to_text(&config.params, &config.field),
    )?;
    write_file(dir, "metrics.csv", &experiment.metrics_csv)?;
    write_file(dir, "events.log", &experiment.events_log)?;
    write_file(dir, "summary.json", &experiment.summary_json)?;
    write_file(dir, "results.csv", &experiment.results_csv)?;

    match &experiment.report.result {
        Ok(outcome) => {
            println!(
                "run complete: n={}, mode={}, rounds={}, recovered {} of {} terms, out={}",
                run.n,
                run.mode.as_str(),
                experiment.report.metrics.rounds,
                outcome.recovered_terms.len(),
                run.n,
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(abort) => {
            write_file(dir, "abort.txt", &format!("{}\n", abort.to_line()))?;
            eprintln!("protocol aborted: {}", abort.to_line());
            Ok(ExitCode::from(3))
        }
    }
}

fn cmd_params(args: &ParamsArgs) -> Result<ExitCode, String> {
    let (params, field) =
        generate_params(args.bits, args.n, &args.seed.to_be_bytes()).map_err(|e| e.to_string())?;
    write_file(&args.out, "params.txt", &params_to_text(&params, &field))?;
    println!(
        "parameters written: {} ({}-bit modulus, {}-bit sharing field)",
        args.out.join("params.txt").display(),
        params.bits_p(),
        field.q_tilde.bits()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode, String> {
    let base = resolve_run(&args.run)?;
    let mut aborted = 0u64;
    for seed in args.seed_start..args.seed_start + args.seeds {
        let mut run = base.clone();
        run.seed = seed;
        let dir = base.out.join(format!("seed-{seed}"));
        let code = execute_run(&run, &dir)?;
        if code != ExitCode::SUCCESS {
            aborted += 1;
        }
    }
    println!(
        "sweep complete: {} seeds starting at {}, {} aborted",
        args.seeds, args.seed_start, aborted
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_group(args: &GroupArgs) -> Result<ExitCode, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let mut board = BulletinBoard::new();
    for i in 0..args.nu {
        board
            .register(
                &format!("user{i}"),
                &format!("10.0.{}.{}", i / 250, i % 250),
                &mut rng,
            )
            .map_err(|e| e.to_string())?;
    }
    board.close_registration();
    let outcome = assign_groups(&board, args.n).map_err(|e| e.to_string())?;
    write_file(&args.out, "board.txt", &board.to_file_string())?;
    write_file(
        &args.out,
        "assignments.csv",
        &pws_core::group_setup::assignments_to_csv(&outcome),
    )?;
    println!(
        "group setup: {} users into {} groups of {}, {} unplaced, out={}",
        args.nu,
        outcome.n_groups,
        args.n,
        outcome.unplaced.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_lemma(args: &LemmaArgs) -> Result<ExitCode, String> {
    let exact = malgrp_exact(args.nu, args.t, args.n).map_err(|e| e.to_string())?;
    println!("n_u={}, t={}, n={}", args.nu, args.t, args.n);
    println!("exact: {:.6e}", rational_to_f64(&exact));
    match malgrp_bound(args.nu, args.t, args.n) {
        Ok(bound) => println!("bound: {:.6e}", rational_to_f64(&bound)),
        Err(e) => println!("bound: undefined ({e})"),
    }
    if let Some(trials) = args.mc {
        let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
        let n_groups = (args.nu / args.n) as f64;
        let hits = (0..trials)
            .filter(|_| {
                pws_core::group_setup::malgrp_trial(
                    args.nu as u32,
                    args.t as u32,
                    args.n as u32,
                    &mut rng,
                )
            })
            .count();
        println!(
            "monte-carlo ({trials} trials): {:.6e}",
            hits as f64 / trials as f64 / n_groups
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Params(args) => cmd_params(args),
        Command::Run(args) => match resolve_run(args) {
            Ok(run) => execute_run(&run, &run.out.clone()),
            Err(e) => return fail(e),
        },
        Command::Sweep(args) => cmd_sweep(args),
        Command::Group(args) => cmd_group(args),
        Command::Lemma(args) => cmd_lemma(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => fail(e),
    }
}
