use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};
use kinetic_toolkit::{compare_reports, run, Report, RunConfig, Subcommand, ToolError, ToolResult};

#[derive(Parser)]
#[command(name = "toolkit", about = "Runs kinetic-core verifications from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json, timing.json and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(ClapSubcommand)]
enum Command {
    CheckKernel(RunArgs),
    BoltzmannReport(RunArgs),
    CdvAudit(RunArgs),
    KolmogorovSolve(RunArgs),
    ScalingAudit(RunArgs),
    HarnackExperiment(RunArgs),
    BarrierVerify(RunArgs),
    CoverDemo(RunArgs),
    InkspotsAudit(RunArgs),
    /// Field-by-field differences of two report.json files.
    Compare { a: PathBuf, b: PathBuf },
}

fn execute(sub: Subcommand, args: RunArgs) -> ToolResult<bool> {
    let mut cfg = RunConfig::load(&args.config)?;
    if cfg.subcommand != sub {
        return Err(ToolError::Schema(format!("config is for `{}`, invoked as `{sub}`", cfg.subcommand)));
    }
    cfg.out = args.out.or(cfg.out);
    cfg.workers = args.workers.or(cfg.workers);
    let report = run(&cfg)?;
    for c in &report.checks {
        let value = c.value.map_or("non-finite".to_string(), |v| format!("{v:.6e}"));
        println!("{} {:<32} {value}{}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail.as_ref().map_or(String::new(), |d| format!("  ({d})")));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if cfg.out.is_none() {
        print!("{}", String::from_utf8_lossy(&report.canonical_bytes()));
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compare { a, b } => Report::read(&a).and_then(|ra| Report::read(&b).map(|rb| (ra, rb))).and_then(|(ra, rb)| {
            let deltas = compare_reports(&ra, &rb)?;
            println!("{}", serde_json::to_string_pretty(&deltas).expect("deltas serialize"));
            Ok(deltas.is_empty())
        }),
        Command::CheckKernel(a) => execute(Subcommand::CheckKernel, a),
        Command::BoltzmannReport(a) => execute(Subcommand::BoltzmannReport, a),
        Command::CdvAudit(a) => execute(Subcommand::CdvAudit, a),
        Command::KolmogorovSolve(a) => execute(Subcommand::KolmogorovSolve, a),
        Command::ScalingAudit(a) => execute(Subcommand::ScalingAudit, a),
        Command::HarnackExperiment(a) => execute(Subcommand::HarnackExperiment, a),
        Command::BarrierVerify(a) => execute(Subcommand::BarrierVerify, a),
        Command::CoverDemo(a) => execute(Subcommand::CoverDemo, a),
        Command::InkspotsAudit(a) => execute(Subcommand::InkspotsAudit, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
