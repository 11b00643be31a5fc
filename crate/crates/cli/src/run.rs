//! Dispatch of one validated config to its subcommand.

use std::time::Instant;

use crate::commands::{barrier, boltzmann, covering, kernel, kolmogorov};
use crate::config::{RunConfig, Subcommand};
use crate::error::{ToolError, ToolResult};
use crate::report::{Report, Timing};

/// Runs `cfg` on a pool of `cfg.workers` threads (all cores when unset) and
/// writes the report into `cfg.out` when set.
///
/// Reductions are sequential over collected results, so the report does not
/// depend on the worker count.
pub fn run(cfg: &RunConfig) -> ToolResult<Report> {
    cfg.validate()?;
    if let Some(out) = &cfg.out {
        std::fs::create_dir_all(out).map_err(|e| ToolError::Io(format!("{}: {e}", out.display())))?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| ToolError::Schema(format!("worker pool: {e}")))?;
    let start = Instant::now();
    let mut report = Report::new(cfg);
    pool.install(|| dispatch(cfg, &mut report))?;
    let unused = report.unused_tolerances();
    if !unused.is_empty() {
        return Err(ToolError::Schema(format!("tolerances name no check of {}: {}", cfg.subcommand, unused.join(", "))));
    }
    report.timing = Some(Timing { seconds: start.elapsed().as_secs_f64(), workers: pool.current_num_threads() });
    if let Some(out) = &cfg.out {
        report.write(out)?;
    }
    Ok(report)
}

fn dispatch(cfg: &RunConfig, report: &mut Report) -> ToolResult<()> {
    match cfg.subcommand {
        Subcommand::CheckKernel => kernel::run(cfg, report),
        Subcommand::BoltzmannReport => boltzmann::run_report(cfg, report),
        Subcommand::CdvAudit => boltzmann::run_cdv(cfg, report),
        Subcommand::KolmogorovSolve => kolmogorov::run_solve(cfg, report),
        Subcommand::ScalingAudit => kolmogorov::run_scaling(cfg, report),
        Subcommand::HarnackExperiment => kolmogorov::run_harnack(cfg, report),
        Subcommand::BarrierVerify => barrier::run(cfg, report),
        Subcommand::CoverDemo => covering::run_cover(cfg, report),
        Subcommand::InkspotsAudit => covering::run_inkspots(cfg, report),
    }
}
