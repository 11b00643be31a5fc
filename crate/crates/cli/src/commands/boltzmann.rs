//! `boltzmann-report` and `cdv-audit`.

use std::sync::Arc;

use kinetic_core::boltzmann::{
    boltzmann_spec, cancellation_convolution, carleman_identity_residual, change_of_variables_residuals, collision_bilinear, BoltzmannKernel,
    CarlemanOptions, CdvOptions, CrossSection, TestFunction,
};
use kinetic_core::grid::{GridFunction, Profile};
use kinetic_core::kernel::antisymmetric_pv;
use kinetic_core::quad::RadialEngine;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Context, ToolError, ToolResult};
use crate::report::{Provenance, Relation, Report};

use super::{rng_for, uniform_ball};

fn maxwellian(d: usize, nodes: usize) -> ToolResult<Arc<GridFunction>> {
    let g = GridFunction::sample(Profile::maxwellian(d, 1.0, 1.0), &vec![-6.0; d], &vec![6.0; d], &vec![nodes; d]).context("sampling Maxwellian")?;
    Ok(Arc::new(g))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

pub fn run_report(cfg: &RunConfig, report: &mut Report) -> ToolResult<()> {
    let d = cfg.d.unwrap_or(2);
    if !(2..=3).contains(&d) {
        return Err(ToolError::Schema(format!("boltzmann-report needs d ∈ {{2, 3}}, got {d}")));
    }
    let cs = CrossSection::new(d, cfg.gamma.unwrap_or(0.0), cfg.s.unwrap_or(0.5)).context("cross-section")?;
    let f = maxwellian(d, cfg.count("maxwellian_nodes", 25)?)?;
    let engine = RadialEngine { rtol: cfg.param("pv_rtol", 1e-5), ..Default::default() };
    let mut rng: ChaCha8Rng = rng_for(cfg, 0);
    let q = Provenance::Quadrature;

    // Principal value of the antisymmetric part against the convolution formula.
    let spec = boltzmann_spec(f.clone(), cs, f64::INFINITY, CarlemanOptions::default()).context("Boltzmann kernel")?;
    let probes: Vec<Vec<f64>> = (0..cfg.probes.unwrap_or(20)).map(|_| uniform_ball(&mut rng, d, 1.0)).collect();
    let mut worst = (0.0f64, Vec::new());
    let mut rows = Vec::new();
    for v in &probes {
        let pv = antisymmetric_pv(&spec, v, |_| 1.0, &engine, 0.5).context("principal value")?.value;
        let (cb, conv) = cancellation_convolution(&f, v, &cs, &engine).context("cancellation convolution")?;
        let gap = relative_gap(pv, conv);
        if gap >= worst.0 {
            worst = (gap, v.clone());
        }
        rows.push(json!({ "v": v, "pv": pv, "convolution": conv, "c_b": cb }));
    }
    report.record("cancellation_two_path", worst.0, 0.02, Relation::AtMost, q);
    report.measure("cancellation_two_path", worst.0, engine.rtol, q, json!({ "worst_v": worst.1, "probes": rows }));

    // K_f(v, v+w) = K_f(v, v−w).
    let k = BoltzmannKernel::new(f.clone(), cs, CarlemanOptions::default()).context("Boltzmann kernel")?;
    let mut asym = (0.0f64, Vec::new(), Vec::new());
    for _ in 0..cfg.count("symmetry_triples", 100)? {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let plus: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
        let a = k.carleman(&v, &plus).context("Carleman kernel")?;
        let b = k.carleman(&v, &minus).context("Carleman kernel")?;
        let gap = relative_gap(a, b);
        if gap >= asym.0 {
            asym = (gap, v, w);
        }
    }
    report.record("even_increment_symmetry", asym.0, 1e-6, Relation::AtMost, q);
    report.measure("even_increment_symmetry", asym.0, CarlemanOptions::default().rtol, q, json!({ "v": asym.1, "w": asym.2 }));

    // Q(M, M) = 0.
    let v = uniform_ball(&mut rng, d, 0.5);
    let eq_engine = RadialEngine { rtol: 1e-6, ..Default::default() };
    let col = collision_bilinear(f.clone(), &f, &v, &cs, CarlemanOptions::default(), &eq_engine).context("collision operator")?;
    let eq = if col.q2 == 0.0 { col.total.abs() } else { (col.total / col.q2).abs() };
    report.record("maxwellian_equilibrium", eq, 1e-4, Relation::AtMost, q);
    report.measure("collision_terms", col.total, eq_engine.rtol, q, json!({ "v": v, "q1": col.q1, "q2": col.q2 }));
    Ok(())
}

/// The smooth change-of-variables family on `ℝ^d`.
pub fn cdv_family(d: usize) -> Vec<TestFunction> {
    let at = |c: &[f64]| c[..d].to_vec();
    vec![
        TestFunction::Gaussian { center: vec![0.0; d], sigma: 0.8 },
        TestFunction::Gaussian { center: at(&[0.4, -0.2, 0.3]), sigma: 0.6 },
        TestFunction::Gaussian { center: at(&[-0.3, 0.5, 0.1]), sigma: 1.0 },
        TestFunction::Odd { sigma: 0.7, axis: 0 },
        TestFunction::Odd { sigma: 0.9, axis: d - 1 },
    ]
}

pub fn run_cdv(cfg: &RunConfig, report: &mut Report) -> ToolResult<()> {
    let d = cfg.d.unwrap_or(3);
    if !(2..=3).contains(&d) {
        return Err(ToolError::Schema(format!("cdv-audit needs d ∈ {{2, 3}}, got {d}")));
    }
    let o = CdvOptions::default();
    let q = Provenance::Quadrature;
    let mut worst: std::collections::BTreeMap<String, (f64, serde_json::Value)> = Default::default();
    for tf in cdv_family(d) {
        for r in [0.5, 1.0] {
            for res in change_of_variables_residuals(&tf, d, r, &o).context("change-of-variables identities")? {
                let e = worst.entry(res.name.clone()).or_insert((0.0, json!(null)));
                if res.residual >= e.0 {
                    *e = (res.residual, json!({ "function": tf, "r": r, "lhs": res.lhs, "rhs": res.rhs }));
                }
            }
        }
    }
    let mut rng: ChaCha8Rng = rng_for(cfg, 0);
    let co = CdvOptions { panels: cfg.count("carleman_panels", 8)?, order: 12 };
    let mut carleman = (0.0f64, json!(null));
    for _ in 0..cfg.count("members", 5)? {
        let mut pick = || -> Vec<f64> { (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect() };
        let (v, a, b) = (pick(), pick(), pick());
        let res = carleman_identity_residual(&v, &a, &b, &co).context("Carleman identity")?;
        if res.residual >= carleman.0 {
            carleman = (res.residual, json!({ "v": v, "a": a, "b": b, "lhs": res.lhs, "rhs": res.rhs }));
        }
    }
    worst.insert("carleman".into(), carleman);
    for (name, (value, witness)) in worst {
        report.record(&name, value, 1e-3, Relation::AtMost, q);
        report.measure(&name, value, 0.0, q, witness);
    }
    Ok(())
}
