//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use kinetic_toolkit::{run, Report, RunConfig, Subcommand};

struct Criterion {
    id: u32,
    title: &'static str,
    subcommand: Subcommand,
    /// Empty means every check of the report.
    checks: &'static [&'static str],
    limit_seconds: Option<f64>,
}

const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, title: "Kolmogorov fundamental solution mass and sign", subcommand: Subcommand::KolmogorovSolve, checks: &[], limit_seconds: Some(60.0) },
    Criterion { id: 2, title: "L^p scaling of J(t)", subcommand: Subcommand::ScalingAudit, checks: &[], limit_seconds: Some(120.0) },
    Criterion { id: 3, title: "fractional Laplacian constants at d=1, s=1/2", subcommand: Subcommand::CheckKernel, checks: &[], limit_seconds: Some(60.0) },
    Criterion {
        id: 4,
        title: "Boltzmann cancellation two-path check at d=2",
        subcommand: Subcommand::BoltzmannReport,
        checks: &["cancellation_two_path", "maxwellian_equilibrium"],
        limit_seconds: Some(600.0),
    },
    Criterion { id: 5, title: "change-of-variables and Carleman identities at d=3", subcommand: Subcommand::CdvAudit, checks: &[], limit_seconds: Some(300.0) },
    Criterion { id: 6, title: "even-increment symmetry of K_f", subcommand: Subcommand::BoltzmannReport, checks: &["even_increment_symmetry"], limit_seconds: None },
    Criterion { id: 7, title: "interval stacking, stacked cylinders and Vitali", subcommand: Subcommand::CoverDemo, checks: &[], limit_seconds: None },
    Criterion { id: 8, title: "ink-spots conclusion and seed stability of c", subcommand: Subcommand::InkspotsAudit, checks: &[], limit_seconds: None },
    Criterion {
        id: 9,
        title: "barrier suite at s=0.25, λ=1, Λ=10",
        subcommand: Subcommand::BarrierVerify,
        checks: &[
            "b1_margin",
            "b1_margin_covers_theta",
            "phi2_level",
            "grid_points",
            "p_ladder",
            "subsolution_residual",
            "delta_region",
            "kernel_feasibility",
            "certificates",
        ],
        limit_seconds: Some(900.0),
    },
    Criterion {
        id: 10,
        title: "extremal-operator axioms",
        subcommand: Subcommand::BarrierVerify,
        checks: &["plus_minus_reflection", "superadditivity", "quadratic_lower_bound"],
        limit_seconds: None,
    },
    Criterion { id: 11, title: "weak-Harnack ratio at d=1, s=1/2", subcommand: Subcommand::HarnackExperiment, checks: &[], limit_seconds: None },
];

fn config(sub: Subcommand, workers: usize) -> RunConfig {
    let mut c = RunConfig::new(sub, 0);
    c.workers = Some(workers);
    c
}

fn describe(report: &Report, names: &[&str]) -> Vec<String> {
    report
        .checks
        .iter()
        .filter(|c| names.is_empty() || names.contains(&c.name.as_str()))
        .filter(|c| !c.passed)
        .map(|c| match &c.detail {
            Some(d) => format!("{} = {:?} ({d})", c.name, c.value),
            None => format!("{} = {:?} vs {}", c.name, c.value, c.tolerance),
        })
        .collect()
}

fn main() -> ExitCode {
    let mut runs: BTreeMap<Subcommand, Result<(Report, f64), String>> = BTreeMap::new();
    for c in &CRITERIA {
        runs.entry(c.subcommand).or_insert_with(|| {
            let start = Instant::now();
            run(&config(c.subcommand, 1)).map(|r| (r, start.elapsed().as_secs_f64())).map_err(|e| e.to_string())
        });
    }
    let mut failed = Vec::new();
    for c in &CRITERIA {
        let (ok, note) = match &runs[&c.subcommand] {
            Err(e) => (false, format!("error: {e}")),
            Ok((report, secs)) => {
                let missing: Vec<&str> = c.checks.iter().copied().filter(|n| report.check(n).is_none()).collect();
                let mut problems = describe(report, c.checks);
                problems.extend(missing.iter().map(|n| format!("{n} was not recorded")));
                if let Some(limit) = c.limit_seconds {
                    if *secs >= limit {
                        problems.push(format!("runtime {secs:.1} s exceeds {limit} s"));
                    }
                }
                let note = if problems.is_empty() { format!("{secs:.1} s") } else { problems.join("; ") };
                (problems.is_empty(), note)
            }
        };
        println!("criterion {:>2} {}  {}: {note}", c.id, if ok { "PASS" } else { "FAIL" }, c.title);
        if !ok {
            failed.push(c.id);
        }
    }

    // Same seed, different worker counts: canonical bytes must agree.
    let mut diverged = Vec::new();
    for (sub, first) in &runs {
        let Ok((a, _)) = first else { continue };
        match run(&config(*sub, 3)) {
            Ok(b) if b.canonical_bytes() == a.canonical_bytes() => {}
            Ok(_) => diverged.push(format!("{sub} differs")),
            Err(e) => diverged.push(format!("{sub}: {e}")),
        }
    }
    let ok = diverged.is_empty() && runs.values().all(|r| r.is_ok());
    let note = if ok { format!("{} subcommands byte-identical at 1 and 3 workers", runs.len()) } else { diverged.join("; ") };
    println!("criterion 12 {}  determinism across worker counts: {note}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        failed.push(12);
    }

    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
