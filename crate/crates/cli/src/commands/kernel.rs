//! `check-kernel`: measured hypothesis constants of a jump kernel.

use std::sync::Arc;

use kinetic_core::bilinear::BilinearOptions;
use kinetic_core::grid::{GridFunction, Profile};
use kinetic_core::kernel::{ellipticity_report, CheckOptions, ConeRestricted, KernelSpec, Modulated, Tabulated, Truncated};
use kinetic_core::quad::sphere_area;
use serde_json::json;

use crate::config::{read_pinned, KernelConfig, RunConfig};
use crate::error::{Context, ToolError, ToolResult};
use crate::report::{Provenance, Relation, Report};

/// Closed-form constants of `scale·|w|^{−d−2s}`: tail form (i) and nondegeneracy.
pub fn fractional_laplacian_targets(d: usize, s: f64, scale: f64) -> (f64, f64) {
    let area = sphere_area(d);
    (scale * area / (2.0 * s), scale * area / (2.0 * d as f64 * (2.0 - 2.0 * s)))
}

fn build(cfg: &RunConfig, d: usize, s: f64) -> ToolResult<KernelSpec> {
    let kc = cfg.kernel.clone().unwrap_or(KernelConfig::FractionalLaplacian { scale: 1.0, radius: None });
    let spec = match kc {
        KernelConfig::FractionalLaplacian { scale, radius } => KernelSpec::fractional_laplacian(d, s, scale, radius.unwrap_or(f64::INFINITY)),
        KernelConfig::Truncated { scale, cutoff } => {
            let base = KernelSpec::fractional_laplacian(d, s, scale, f64::INFINITY).context("base kernel")?;
            KernelSpec::new(Arc::new(Truncated { inner: base.kernel, cutoff }), s, cutoff.max(1.0), true, "truncated")
        }
        KernelConfig::Cone { aperture, axis } => {
            if axis.len() != d {
                return Err(ToolError::Schema(format!("cone axis has {} entries, d = {d}", axis.len())));
            }
            KernelSpec::new(Arc::new(ConeRestricted { s, axis, aperture }), s, f64::INFINITY, true, "cone")
        }
        KernelConfig::Modulated { amplitude } => {
            KernelSpec::new(Arc::new(Modulated::gaussian(s, amplitude, vec![0.0; d])), s, f64::INFINITY, false, "modulated")
        }
        KernelConfig::Tabulated { path, sha256 } => {
            read_pinned(&path, &sha256)?;
            let table = GridFunction::read(&path).context("reading kernel table")?;
            if table.dim() != 2 * d {
                return Err(ToolError::Schema(format!("kernel table has {} axes, expected {}", table.dim(), 2 * d)));
            }
            KernelSpec::new(Arc::new(Tabulated { s, table }), s, f64::INFINITY, false, "tabulated")
        }
    };
    spec.context("kernel")
}

/// Compactly supported test functions sampled with `n` nodes per axis.
pub fn coercivity_family(d: usize, n: usize) -> ToolResult<Vec<GridFunction>> {
    let at = |c: f64| {
        let mut v = vec![0.0; d];
        v[0] = c;
        v
    };
    let members = [
        Profile::Bump { center: at(0.0), radius: 1.0, amplitude: 1.0 },
        Profile::Bump { center: at(0.3), radius: 0.6, amplitude: 2.0 },
        Profile::ModulatedBump { center: at(0.0), radius: 1.0, amplitude: 1.0, wavevector: at(3.0), phase: 0.4 },
        Profile::Sum {
            terms: vec![
                Profile::Bump { center: at(-0.5), radius: 0.4, amplitude: 1.0 },
                Profile::Bump { center: at(0.5), radius: 0.4, amplitude: -0.5 },
            ],
        },
    ];
    members
        .into_iter()
        .map(|p| {
            // Every member lives in B_1(0); the box leaves a zero margin.
            GridFunction::sample(p, &vec![-1.25; d], &vec![1.25; d], &vec![n; d]).context("sampling coercivity family")
        })
        .collect()
}

pub fn run(cfg: &RunConfig, report: &mut Report) -> ToolResult<()> {
    let d = cfg.d.unwrap_or(1);
    let s = cfg.s.unwrap_or(0.5);
    if d > 3 {
        return Err(ToolError::Schema(format!("check-kernel supports d ≤ 3, got {d}")));
    }
    let spec = build(cfg, d, s)?;
    let mut opts = CheckOptions::default();
    if let Some(p) = cfg.probes {
        opts.probe_count = p;
    }
    let n = cfg.grid_or(&[121])[0];
    let bo = BilinearOptions { outer_panels: cfg.count("coercivity_panels", 12)?, ..Default::default() };
    let shift = cfg.param("l2_shift", 0.0);
    let family = if d <= 2 { Some(coercivity_family(d, n)?) } else { None };
    let er = ellipticity_report(&spec, &opts, family.as_deref().map(|f| (shift, f, &bo))).context("ellipticity report")?;
    let q = Provenance::Quadrature;
    let rtol = opts.engine.rtol;
    for (name, w) in [
        ("upper.tail_i", &er.upper.tail_i),
        ("upper.tail_ii", &er.upper.tail_ii),
        ("upper.annulus_i", &er.upper.annulus_i),
        ("upper.annulus_ii", &er.upper.annulus_ii),
        ("upper.moment_i", &er.upper.moment_i),
        ("upper.moment_ii", &er.upper.moment_ii),
        ("cancellation0", &er.cancellation0),
        ("cancellation1", &er.cancellation1),
        ("nondegeneracy", &er.nondegeneracy),
    ] {
        report.measure(name, w.value, rtol, q, json!(w));
    }
    report.measure("upper.max_form_ratio", er.upper.max_form_ratio, rtol, q, json!(null));
    if let Some(c) = &er.coercivity {
        report.measure("coercivity", c.value, rtol, q, json!({ "witness": c.witness, "ratios": c.ratios, "l2_shift": shift, "nodes": n }));
    }
    match &cfg.kernel {
        None | Some(KernelConfig::FractionalLaplacian { .. }) => {
            let scale = match &cfg.kernel {
                Some(KernelConfig::FractionalLaplacian { scale, .. }) => *scale,
                _ => 1.0,
            };
            let (tail, nondeg) = fractional_laplacian_targets(d, s, scale);
            report.record("upper_bound_form_i", er.upper.tail_i.value, 1e-3, Relation::Near { target: tail }, q);
            report.record("nondegeneracy", er.nondegeneracy.value, 1e-3, Relation::Near { target: nondeg }, q);
            report.record("cancellation0", er.cancellation0.value, 1e-4, Relation::AtMost, q);
            report.record("cancellation1", er.cancellation1.value, 1e-4, Relation::AtMost, q);
            // Without the L² shift the Rayleigh quotient is exactly scale/2.
            if let (Some(c), true) = (&er.coercivity, shift == 0.0) {
                report.record("coercivity_ratio", c.value, 1e-3, Relation::Near { target: 0.5 * scale }, q);
            }
        }
        Some(_) => {
            report.record("nondegeneracy_positive", er.nondegeneracy.value, 0.0, Relation::Above, q);
            report.record("upper_bound_finite", er.upper.max(), f64::MAX, Relation::AtMost, q);
            if !spec.symmetric {
                report.warnings.push("non-symmetric kernel: cancellation constants are measured, not gated".into());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_match_known_values() {
        let (t, n) = fractional_laplacian_targets(1, 0.5, 1.0);
        assert!((t - 2.0).abs() < 1e-15 && (n - 1.0).abs() < 1e-15);
        let (t, n) = fractional_laplacian_targets(2, 0.5, 2.0);
        assert!((t - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((n - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn family_vanishes_on_the_box_boundary() {
        for f in coercivity_family(1, 41).unwrap() {
            assert_eq!(f.values[0], 0.0);
            assert_eq!(*f.values.last().unwrap(), 0.0);
        }
    }
}
