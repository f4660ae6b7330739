//! Batch front-end for the protocol simulator.
//!
//! Four subcommands: `security-calc` evaluates the closed-form bounds,
//! `simulate` runs the scenario-by-attenuation grid and emits table and
//! figure data, `optimize-keyrate` wraps the finite-key program, and
//! `attack-demo` measures adversaries against their bounds.
//!
//! Exit codes: 0 success, 2 configuration error, 3 all runs failed.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hepuf_qkd::attacks::run_adversary_suite;
use hepuf_qkd::channel::{AdversaryHook, ChannelParams};
use hepuf_qkd::extractor::{extractable_length, rounds_needed};
use hepuf_qkd::finite_key::{finite_key_optimize, FiniteKeyProblem};
use hepuf_qkd::protocol::{run_full, Scenario, ScenarioConfig, SessionReport};
use hepuf_qkd::security::{
    auth_cost, compose_budget, hepuf_cheat_bound, min_sample_size, AuthCostBreakdown,
    MessageProfile,
};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    AllRunsFailed(usize),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::AllRunsFailed(n) => write!(f, "all {n} runs failed"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(
    name = "hepuf-qkd",
    about = "Simulator and security calculator for a PUF-authenticated entanglement-based QKD protocol",
    version
)]
struct Cli {
    /// Master seed; overrides any config-file seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for emitted artifacts; stdout only when absent.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Stdout format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the cheat bound, minimum sample size, extraction lengths
    /// and the authentication cost table.
    SecurityCalc(SecurityCalcArgs),
    /// Run the scenario-by-attenuation grid from a config file.
    Simulate(SimulateArgs),
    /// Maximize the final key length for a sifted block.
    OptimizeKeyrate(OptimizeArgs),
    /// Measure adversary success rates against their analytical bounds.
    AttackDemo(AttackArgs),
}

#[derive(Args)]
struct SecurityCalcArgs {
    /// Device bias.
    #[arg(long)]
    delta: f64,
    /// Target failure probability for the authentication subroutine.
    #[arg(long)]
    eps: f64,
    /// Smoothing parameter for extraction (defaults to --eps).
    #[arg(long)]
    eps_stat: Option<f64>,
    /// Raw bit count to evaluate the extractable length for.
    #[arg(long)]
    raw_len: Option<usize>,
    /// Target pool length to invert into a round count.
    #[arg(long)]
    target_len: Option<usize>,
    /// States per round used by the round-count inversion.
    #[arg(long, default_value_t = 44)]
    m: usize,
    /// Sifted block length for the authentication cost table.
    #[arg(long)]
    b: Option<usize>,
    /// Error rate for the authentication cost table.
    #[arg(long, default_value_t = 0.0055)]
    qber: f64,
    /// Scenario for the cost table (1 skips the basis row).
    #[arg(long, default_value_t = 2)]
    scenario: u8,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML (or .json) run-grid description.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Sifted key length in bits.
    #[arg(long)]
    b: usize,
    /// Observed error rate.
    #[arg(long)]
    qber: f64,
    /// Security exponent (total budget 10^-s, correction budget 10^-(s+2)).
    #[arg(long)]
    s: f64,
    /// Reconciliation efficiency.
    #[arg(long, default_value_t = 1.06)]
    f_ec: f64,
    /// Syndrome length override.
    #[arg(long)]
    syndrome_len: Option<usize>,
    /// Error-verification tag length override.
    #[arg(long)]
    ev_tag_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackKind {
    GuessPuf,
    Tamper,
    Intercept,
    Control,
    All,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum, default_value_t = AttackKind::All)]
    attack: AttackKind,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// States per authentication round for the impersonation attack.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Device bias assumed by both the device and the guesser.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Source fidelity for the simulated channel.
    #[arg(long, default_value_t = 1.0)]
    fidelity: f64,
    /// Fraction of signals the interceptor touches.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CliError::Config(_) => ExitCode::from(2),
                CliError::AllRunsFailed(_) => ExitCode::from(3),
                CliError::Io(_) => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::SecurityCalc(args) => security_calc(&cli, args),
        Command::Simulate(args) => simulate(&cli, args),
        Command::OptimizeKeyrate(args) => optimize_keyrate(&cli, args),
        Command::AttackDemo(args) => attack_demo(&cli, args),
    }
}

fn write_artifact(cli: &Cli, name: &str, content: &str) -> Result<Option<PathBuf>, CliError> {
    match &cli.out_dir {
        None => Ok(None),
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            let path = dir.join(name);
            std::fs::write(&path, content)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(Some(path))
        }
    }
}

// ---------------------------------------------------------------- security-calc

#[derive(Serialize)]
struct SecurityCalcReport {
    delta: f64,
    eps: f64,
    eps_stat: f64,
    m_min: usize,
    cheat_bound_at_m_min: f64,
    cheat_bound_log2_at_m_min: f64,
    extractable_len: Option<usize>,
    rounds_needed: Option<usize>,
    budget: hepuf_qkd::security::EpsilonBudget,
    auth_cost: Option<AuthCostBreakdown>,
}

fn security_calc(cli: &Cli, args: &SecurityCalcArgs) -> Result<(), CliError> {
    if !(0.0..=0.5).contains(&args.delta) {
        return Err(CliError::Config(format!(
            "delta {} outside [0, 0.5]",
            args.delta
        )));
    }
    if !(args.eps > 0.0 && args.eps < 1.0) {
        return Err(CliError::Config(format!("eps {} outside (0, 1)", args.eps)));
    }
    let eps_stat = args.eps_stat.unwrap_or(args.eps);
    let m_min =
        min_sample_size(args.delta, args.eps).map_err(|e| CliError::Config(e.to_string()))?;
    let bound = hepuf_cheat_bound(args.delta, m_min);

    let extractable = args
        .raw_len
        .map(|raw| extractable_length(raw, args.delta, eps_stat));
    let rounds = match args.target_len {
        None => None,
        Some(target) => Some(
            rounds_needed(target, args.m, args.delta, eps_stat)
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
    };

    let budget = compose_budget(args.eps, [1.0, 1.0, 1.0, 1.0]);
    let cost = args.b.map(|b| {
        let mut problem = FiniteKeyProblem::new(b, args.qber, budget.exponent(), 1.06);
        problem.eps_qkd = Some(budget.eps_qkd - budget.eps_a);
        let sol = finite_key_optimize(&problem);
        let profile = MessageProfile::calibrated(
            args.scenario == 2,
            b,
            sol.k.max(1),
            sol.n.max(1),
            sol.syndrome_len,
            sol.ell,
            sol.ev_tag_len,
        );
        auth_cost(args.scenario == 2, &profile, budget.eps_a)
    });

    let report = SecurityCalcReport {
        delta: args.delta,
        eps: args.eps,
        eps_stat,
        m_min,
        cheat_bound_at_m_min: bound.linear(),
        cheat_bound_log2_at_m_min: bound.log2(),
        extractable_len: extractable,
        rounds_needed: rounds,
        budget,
        auth_cost: cost,
    };
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    println!("{json}");
    write_artifact(cli, "security_calc.json", &json)?;
    Ok(())
}

// -------------------------------------------------------------------- simulate

fn run_seed(base: u64, scenario: u8, att_index: usize, trial: usize) -> u64 {
    base.wrapping_add(scenario as u64)
        .wrapping_add(1_000_003u64.wrapping_mul(att_index as u64))
        .wrapping_add(7919u64.wrapping_mul(trial as u64))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let mut run_config = RunConfig::load(&args.config)?;
    if let Some(seed) = cli.seed {
        run_config.seed = seed;
    }

    let mut csv = String::from(SessionReport::CSV_HEADER);
    csv.push('\n');
    let mut qber_series = String::from("scenario,attenuation_db_total,seed,raw_len,qber_pct\n");
    let mut skr_series = String::from("scenario,attenuation_db_total,seed,skr_bps\n");
    let mut reports: Vec<SessionReport> = Vec::new();
    let mut failures = 0usize;
    let mut total = 0usize;

    for &scenario in &run_config.scenarios {
        for (att_index, &att) in run_config.attenuations_db_total.iter().enumerate() {
            for trial in 0..run_config.trials {
                total += 1;
                let cell = run_config.cell(scenario, att);
                let seed = run_seed(run_config.seed, scenario, att_index, trial);
                match run_full(&cell, seed) {
                    Ok(report) => {
                        let _ = writeln!(csv, "{}", report.csv_row());
                        let _ = writeln!(skr_series, "{scenario},{att},{seed},{}", report.skr_bps);
                        if let Some(record) = &report.raw_record {
                            for (raw_len, qber) in qber_checkpoints(record) {
                                let _ = writeln!(
                                    qber_series,
                                    "{scenario},{att},{seed},{raw_len},{}",
                                    100.0 * qber
                                );
                            }
                        }
                        reports.push(report);
                    }
                    Err(err) => {
                        failures += 1;
                        let msg = err.to_string().replace(',', ";");
                        let _ = writeln!(csv, "{scenario},{att},0,{},0,0,0,0,0,0,{msg}", cell.m);
                    }
                }
            }
        }
    }

    let json = serde_json::to_string_pretty(&reports).expect("serializable");
    match write_artifact(cli, "results.csv", &csv)? {
        Some(path) => {
            write_artifact(cli, "results.json", &json)?;
            write_artifact(cli, "qber_series.csv", &qber_series)?;
            write_artifact(cli, "skr_series.csv", &skr_series)?;
            println!("wrote {} and companion series files", path.display());
            for report in &reports {
                println!(
                    "scenario {} at {} dB: ell = {}, skr = {:.4} bps{}",
                    report.scenario,
                    report.attenuation_db_total,
                    report.ell,
                    report.skr_bps,
                    match report.abort_reason {
                        None => String::new(),
                        Some(r) => format!(" (abort: {r:?})"),
                    }
                );
            }
        }
        None => match cli.format {
            Format::Csv => print!("{csv}"),
            Format::Json => println!("{json}"),
        },
    }

    if failures == total {
        return Err(CliError::AllRunsFailed(total));
    }
    Ok(())
}

/// Cumulative error-rate convergence along the sifted key, 50 checkpoints.
fn qber_checkpoints(record: &hepuf_qkd::protocol::RawKeyRecord) -> Vec<(usize, f64)> {
    let b = record.x.len();
    if b == 0 {
        return Vec::new();
    }
    let points = 50usize.min(b);
    let mut out = Vec::with_capacity(points);
    let mut errors = 0usize;
    let mut next_mark = 1usize;
    for i in 0..b {
        if record.x.get(i) != record.y.get(i) {
            errors += 1;
        }
        if i + 1 == (b * next_mark) / points {
            out.push((i + 1, errors as f64 / (i + 1) as f64));
            next_mark += 1;
        }
    }
    out
}

// ------------------------------------------------------------- optimize-keyrate

fn optimize_keyrate(cli: &Cli, args: &OptimizeArgs) -> Result<(), CliError> {
    if args.b == 0 {
        return Err(CliError::Config("b must be positive".into()));
    }
    if !(0.0..=0.5).contains(&args.qber) {
        return Err(CliError::Config(format!(
            "qber {} outside [0, 0.5]",
            args.qber
        )));
    }
    if args.s <= 0.0 {
        return Err(CliError::Config("s must be positive".into()));
    }
    let mut problem = FiniteKeyProblem::new(args.b, args.qber, args.s, args.f_ec);
    problem.syndrome_len = args.syndrome_len;
    problem.ev_tag_len = args.ev_tag_len;
    let solution = finite_key_optimize(&problem);
    let json = serde_json::to_string_pretty(&solution).expect("serializable");
    println!("{json}");
    write_artifact(cli, "keyrate_solution.json", &json)?;
    Ok(())
}

// ------------------------------------------------------------------ attack-demo

fn attack_demo(cli: &Cli, args: &AttackArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    if !(0.0..=0.5).contains(&args.delta) {
        return Err(CliError::Config(format!(
            "delta {} outside [0, 0.5]",
            args.delta
        )));
    }
    let channel = ChannelParams {
        fidelity: args.fidelity,
        ..ChannelParams::default()
    };
    let mut config = ScenarioConfig::new(Scenario::Two, channel);
    config.m = args.m;
    config.puf_injected_bias = args.delta;

    let hooks: Vec<AdversaryHook> = match args.attack {
        AttackKind::GuessPuf => vec![AdversaryHook::GuessPuf {
            guess_bias: args.delta,
        }],
        AttackKind::Tamper => vec![AdversaryHook::TamperClassical {
            target: None,
            bit_index: 0,
        }],
        AttackKind::Intercept => vec![AdversaryHook::InterceptResend {
            fraction: args.fraction,
        }],
        AttackKind::Control => vec![AdversaryHook::None],
        AttackKind::All => vec![
            AdversaryHook::GuessPuf {
                guess_bias: args.delta,
            },
            AdversaryHook::TamperClassical {
                target: None,
                bit_index: 0,
            },
            AdversaryHook::InterceptResend {
                fraction: args.fraction,
            },
            AdversaryHook::None,
        ],
    };

    let seed = cli.seed.unwrap_or(7);
    let report = run_adversary_suite(&config, &hooks, args.trials, seed)
        .map_err(|e| CliError::Config(e.to_string()))?;

    for entry in &report.entries {
        let name = match &entry.hook {
            AdversaryHook::GuessPuf { .. } => "guess-puf",
            AdversaryHook::TamperClassical { .. } => "tamper",
            AdversaryHook::InterceptResend { .. } => "intercept-resend",
            AdversaryHook::None => "control",
        };
        let within = entry.measured_rate <= entry.bound + 3.0 * entry.sigma;
        println!(
            "{name}: measured {:.6} vs reference {:.6} (+3 sigma {:.6}) over {} trials -> {}",
            entry.measured_rate,
            entry.bound,
            entry.bound + 3.0 * entry.sigma,
            entry.trials,
            if within {
                "within bound"
            } else {
                "EXCEEDS BOUND"
            }
        );
        if let Some(abort_rate) = entry.abort_rate {
            println!("{name}: session abort rate {abort_rate:.3}");
        }
    }
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    match &cli.out_dir {
        Some(_) => {
            write_artifact(cli, "attack_report.json", &json)?;
        }
        None => println!("{json}"),
    }
    Ok(())
}
