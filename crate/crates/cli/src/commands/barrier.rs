//! `barrier-verify`: extremal-operator axioms and the barrier suite for `s < 1/2`.

use kinetic_core::barriers::{
    b1_margin, barrier_subsolution_residual, extremal_minus, largest_safe_level, phi2_inequality, BarrierConstants, BarrierParams,
    KernelClass, KernelClassParams, SubsolutionGrid,
};
use kinetic_core::calib::frozen_barrier_constants;
use kinetic_core::Error as CoreError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{read_pinned, sha256_hex, RunConfig};
use crate::error::{Context, ToolError, ToolResult};
use crate::report::{Provenance, Relation, Report};

use super::rng_for;

type Smooth = Box<dyn Fn(&[f64]) -> f64 + Sync>;

/// `a·sin(k w + c) + b·exp(−w²)` with seeded coefficients.
fn random_smooth(rng: &mut ChaCha8Rng) -> Smooth {
    let (a, b, c, k) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0), rng.gen_range(0.3..3.0));
    Box::new(move |w: &[f64]| a * (k * w[0] + c).sin() + b * (-w[0] * w[0]).exp())
}

fn load_constants(cfg: &RunConfig) -> ToolResult<(BarrierConstants, String)> {
    match &cfg.constants {
        Some(r) => {
            let bytes = read_pinned(&r.path, &r.sha256)?;
            let c: BarrierConstants = serde_json::from_slice(&bytes).map_err(|e| ToolError::Schema(format!("{}: {e}", r.path.display())))?;
            Ok((c, sha256_hex(&bytes)))
        }
        None => {
            let c = frozen_barrier_constants();
            let bytes = serde_json::to_vec(&c).expect("constants serialize");
            Ok((c, sha256_hex(&bytes)))
        }
    }
}

pub fn run(cfg: &RunConfig, report: &mut Report) -> ToolResult<()> {
    if !matches!(cfg.d, None | Some(1)) {
        return Err(ToolError::Schema("barrier-verify runs in d = 1".into()));
    }
    let (k, hash) = load_constants(cfg)?;
    report.constants_sha256 = Some(hash);
    let s = cfg.s.unwrap_or(k.s);
    let lambda = cfg.param("lambda", k.lambda);
    let big_lambda = cfg.param("big_lambda", k.big_lambda);
    if (s, lambda, big_lambda) != (k.s, k.lambda, k.big_lambda) {
        return Err(ToolError::Schema(format!(
            "constants were calibrated for (s, λ, Λ) = ({}, {}, {}), the run asks for ({s}, {lambda}, {big_lambda})",
            k.s, k.lambda, k.big_lambda
        )));
    }
    let class = KernelClass::new(KernelClassParams { s, lambda, big_lambda, ..Default::default() }).context("kernel class")?;
    let lp = Provenance::LinearProgram;
    let mut rng = rng_for(cfg, 0);

    // Axioms of the extremal operators.
    let pairs = cfg.count("axiom_pairs", 50)?;
    let (mut reflect, mut superadd, mut cert_err) = (0.0f64, f64::INFINITY, 0.0f64);
    let mut cert_fail = 0usize;
    for _ in 0..pairs {
        let (f, g) = (random_smooth(&mut rng), random_smooth(&mut rng));
        let v = [rng.gen_range(-1.5..1.5)];
        let inc_f = class.increments(&*f, &v).context("increments")?;
        let inc_g = class.increments(&*g, &v).context("increments")?;
        let inc_sum: Vec<f64> = inc_f.iter().zip(&inc_g).map(|(a, b)| a + b).collect();
        let inc_neg: Vec<f64> = inc_f.iter().map(|a| -a).collect();
        let mf = class.minus_from_increments(inc_f.clone()).context("M^- f")?;
        let mg = class.minus_from_increments(inc_g).context("M^- g")?;
        let ms = class.minus_from_increments(inc_sum).context("M^-(f+g)")?;
        let pn = class.plus_from_increments(inc_neg.clone()).context("M^+(-f)")?;
        reflect = reflect.max((pn.value + mf.value).abs());
        superadd = superadd.min(ms.value - mf.value - mg.value);
        for (inc, e) in [(&inc_f, &mf), (&inc_neg, &pn)] {
            let c = class.revalidate(inc, e);
            cert_err = cert_err.max(c.objective_error.abs()).max(c.duality_gap.abs()).max((-c.min_slack).max(0.0)).max(c.dual_violation);
            if !c.holds(1e-9) {
                cert_fail += 1;
            }
        }
    }
    report.record("plus_minus_reflection", reflect, 1e-9, Relation::AtMost, lp);
    report.record("superadditivity", superadd, -1e-9, Relation::AtLeast, lp);
    let mut quad = f64::INFINITY;
    for e in [1.0, -1.0] {
        let q = move |w: &[f64]| if w[0].abs() < 1.0 { (-w[0] * e).max(0.0).powi(2) } else { 0.0 };
        quad = quad.min(extremal_minus(&class, &q, &[0.0]).context("M^- of the truncated quadratic")?.value);
    }
    report.record("quadratic_lower_bound", quad - lambda, -1e-9, Relation::AtLeast, lp);
    report.record_with(
        "certificates",
        cert_err,
        1e-9,
        Relation::AtMost,
        lp,
        format!("{cert_fail} of {} certificates failed to revalidate", 2 * pairs),
    );

    // Boundary layer of B_1.
    let n1 = cfg.count("b1_points", 2000)?;
    let m = b1_margin(&class, k.delta_b1, n1).context("B1 margin")?;
    report.record("b1_margin", m.margin, 0.0, Relation::Above, lp);
    report.measure("b1_margin", m.margin, 1e-9, lp, json!({ "delta": m.delta, "argmin": m.argmin, "points": m.points, "theta": k.theta }));
    report.record("b1_margin_covers_theta", m.margin - k.theta, 0.0, Relation::AtLeast, lp);

    // Level set of φ2 and the subsolution ladder.
    let n = cfg.grid_or(&[160])[0];
    let bp = BarrierParams::new(s, k.t0, k.p, k.rho).context("barrier parameters")?;
    let level = phi2_inequality(&class, &bp, n).context("φ2 inequality")?;
    let safe = largest_safe_level(level.iter().map(|q| (q.phi2, q.residual)));
    report.record("phi2_level", safe, k.delta, Relation::AtLeast, lp);
    let grid = SubsolutionGrid { horizon: 1.0, nt: cfg.count("time_nodes", 4)?, n };
    let cap = cfg.param("p_max", 64.0);
    report.record("grid_points", grid.points() as f64, 1e5, Relation::AtLeast, Provenance::ClosedForm);
    match barrier_subsolution_residual(&class, &bp, &grid, cap.max(k.p), Some(k.delta)) {
        Ok(rep) => {
            report.record_with(
                "p_ladder",
                rep.p,
                cap,
                Relation::AtMost,
                lp,
                format!("first rung with a nonpositive residual is p = {}; the grid needs p ≥ {:.4e}", rep.p, rep.p_required),
            );
            report.record("subsolution_residual", rep.max_residual, 0.0, Relation::AtMost, lp);
            // No grid point below δ makes the check vacuous.
            let region = rep.delta_region_max.filter(|x| x.is_finite()).unwrap_or(0.0);
            report.record("delta_region", region, 0.0, Relation::AtMost, lp);
            report.record("kernel_feasibility", rep.min_slack, -1e-9, Relation::AtLeast, lp);
            report.measure("p_required", rep.p_required, 0.0, lp, json!({ "ladder": rep.ladder, "points": rep.points, "rho": k.rho, "t0": k.t0 }));
        }
        Err(CoreError::CheckFailed(msg)) => {
            report.record_with("p_ladder", f64::INFINITY, cap, Relation::AtMost, lp, msg);
        }
        Err(e) => return Err(e).context("subsolution ladder"),
    }
    Ok(())
}
