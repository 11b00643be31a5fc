//! `cover-demo` and `inkspots-audit` (`d = 1`, phase space `(t, x, v)`).

use kinetic_core::covering::{
    inkspots_audit, inkspots_instance, interval_stack_measures, stacked_union_ratio, vitali_audit, DyadicFamily, InkSpotsMode,
    MIN_VOXELS_PER_RADIUS,
};
use kinetic_core::geometry::{PhasePoint, SlantedCylinder};
use kinetic_core::voxel::VoxelGrid;
use num_rational::Ratio;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Context, ToolError, ToolResult};
use crate::report::{Provenance, Relation, Report};

use super::rng_for;

const MULTIPLICITIES: [u32; 3] = [1, 2, 5];

fn require_d1(cfg: &RunConfig) -> ToolResult<()> {
    match cfg.d {
        None | Some(1) => Ok(()),
        Some(d) => Err(ToolError::Schema(format!("{} runs in d = 1 only, got d = {d}", cfg.subcommand))),
    }
}

/// Radius uniform in `radii`, top uniform in `(−1 + r^{2s}, 0) × (−spread, spread)²`.
fn cylinder(rng: &mut ChaCha8Rng, radii: (f64, f64), s: f64, spread: f64) -> ToolResult<SlantedCylinder> {
    let r = rng.gen_range(radii.0..radii.1);
    let t = rng.gen_range(-1.0 + r.powf(2.0 * s)..0.0);
    let top = PhasePoint::new(t, vec![rng.gen_range(-spread..spread)], vec![rng.gen_range(-spread..spread)]);
    SlantedCylinder::new(top, r, s).context("cylinder")
}

/// Grid covering every `Q̄^m` of a family with radii in `[r_min, 1/2]`, tops in
/// `[−1, 0] × [−1, 1]²`, refined `2^level` times beyond the minimum resolution.
fn stacking_grid(m: u32, s: f64, r_min: f64, level: u32) -> ToolResult<VoxelGrid> {
    // Velocities inside a cylinder reach |v0| + r ≤ 3/2; transport runs over [−1, t_hi].
    let (r_max, vmax) = (0.5f64, 1.5);
    let t_hi = m as f64 * r_max.powf(2.0 * s);
    let x_hi = 1.0 + vmax * (1.0 + t_hi) + (m as f64 + 2.0) * r_max.powf(1.0 + 2.0 * s);
    let lo = [-1.0, -x_hi, -1.0 - r_max];
    let hi = [t_hi, x_hi, 1.0 + r_max];
    let need = [r_min.powf(2.0 * s), 2.0 * r_min.powf(1.0 + 2.0 * s), 2.0 * r_min];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let h = need[a] / MIN_VOXELS_PER_RADIUS;
        dims[a] = (((hi[a] - lo[a]) / h).ceil() as usize) << level;
    }
    VoxelGrid::new(lo, hi, dims).context("voxel grid")
}

pub fn run_cover(cfg: &RunConfig, report: &mut Report) -> ToolResult<()> {
    require_d1(cfg)?;
    let s = cfg.s.unwrap_or(0.5);

    // Interval stacking in exact rational arithmetic.
    let mut rng = rng_for(cfg, 0);
    let families = cfg.count("interval_families", 10_000)?;
    let mut violations = 0usize;
    let mut worst = Vec::new();
    for m in MULTIPLICITIES {
        let mut min_ratio = f64::INFINITY;
        for _ in 0..families {
            let n = rng.gen_range(1..12);
            let iv: Vec<(Ratio<i64>, Ratio<i64>)> = (0..n)
                .map(|_| (Ratio::new(rng.gen_range(-60..60), rng.gen_range(1..7)), Ratio::new(rng.gen_range(1..40), rng.gen_range(1..7))))
                .collect();
            let (delayed, original) = interval_stack_measures(&iv, m);
            if delayed * Ratio::from_integer(m as i64 + 1) < original * Ratio::from_integer(m as i64) {
                violations += 1;
            }
            let q = delayed / original;
            min_ratio = min_ratio.min(*q.numer() as f64 / *q.denom() as f64);
        }
        worst.push(json!({ "m": m, "min_ratio": min_ratio, "bound": m as f64 / (m as f64 + 1.0) }));
    }
    report.record("interval_stacking_violations", violations as f64, 0.0, Relation::AtMost, Provenance::ExactArithmetic);
    report.measure("interval_stacking", families as f64, 0.0, Provenance::ExactArithmetic, json!(worst));

    // Voxel ratio of stacked slanted cylinders under one refinement.
    let mut rng = rng_for(cfg, 1);
    let count = cfg.count("cylinder_families", 100)?;
    let r_min = 0.25;
    let mut grids = Vec::new();
    for m in MULTIPLICITIES {
        grids.push((stacking_grid(m, s, r_min, 0)?, stacking_grid(m, s, r_min, 1)?));
    }
    let (mut fails, mut not_shrinking, mut max_delta, mut min_margin) = (0usize, 0usize, 0.0f64, f64::INFINITY);
    for k in 0..count {
        let m_idx = k % MULTIPLICITIES.len();
        let m = MULTIPLICITIES[m_idx];
        let size = rng.gen_range(1..6);
        let fam: Vec<SlantedCylinder> = (0..size).map(|_| cylinder(&mut rng, (r_min, 0.5), s, 1.0)).collect::<ToolResult<_>>()?;
        let (coarse, fine) = &grids[m_idx];
        let a = stacked_union_ratio(&fam, m, coarse).context("stacked ratio")?;
        let b = stacked_union_ratio(&fam, m, fine).context("stacked ratio")?;
        fails += usize::from(!a.holds) + usize::from(!b.holds);
        not_shrinking += usize::from(!(b.delta_grid < a.delta_grid));
        max_delta = max_delta.max(b.delta_grid);
        min_margin = min_margin.min(b.ratio - b.bound);
    }
    report.record("stacked_ratio_failures", fails as f64, 0.0, Relation::AtMost, Provenance::Voxel);
    report.record("delta_grid_not_shrinking", not_shrinking as f64, 0.0, Relation::AtMost, Provenance::Voxel);
    report.measure("delta_grid_fine", max_delta, 0.0, Provenance::Voxel, json!({ "families": count, "min_ratio_minus_bound": min_margin }));

    // Vitali selection: disjointness and containment of the k-scaled selection.
    let mut rng = rng_for(cfg, 2);
    let samples = cfg.count("vitali_samples", 10_000)?;
    let (mut uncovered, mut overlapping, mut selected) = (0usize, 0usize, 0usize);
    let mut k_factor = 0.0;
    for _ in 0..count {
        let fam: Vec<SlantedCylinder> =
            (0..50).map(|_| cylinder(&mut rng, (0.05, 0.3), s, 0.7)).collect::<ToolResult<_>>()?;
        let a = vitali_audit(&fam, samples, &mut rng).context("Vitali audit")?;
        uncovered += a.uncovered;
        overlapping += usize::from(!a.pairwise_disjoint);
        selected += a.selected.len();
        k_factor = a.k;
    }
    report.record("vitali_uncovered", uncovered as f64, 0.0, Relation::AtMost, Provenance::MonteCarlo);
    report.record("vitali_overlapping", overlapping as f64, 0.0, Relation::AtMost, Provenance::ClosedForm);
    report.measure("vitali_selected_mean", selected as f64 / count.max(1) as f64, 0.0, Provenance::ClosedForm, json!({ "k": k_factor, "samples": samples }));
    Ok(())
}

pub fn run_inkspots(cfg: &RunConfig, report: &mut Report) -> ToolResult<()> {
    require_d1(cfg)?;
    let s = cfg.s.unwrap_or(0.5);
    let dims = cfg.grid_or(&[32, 128, 32]);
    if dims.len() != 3 {
        return Err(ToolError::Schema("inkspots-audit needs `grid` = [nt, nx, nv]".into()));
    }
    let grid = VoxelGrid::new([-1.0, -1.0, -1.0], [0.0, 1.0, 1.0], [dims[0], dims[1], dims[2]]).context("voxel grid")?;
    let family = DyadicFamily { j_max: cfg.count("j_max", 2)? as u32, ..Default::default() };
    let instances = cfg.count("instances", 50)?;
    let seeds = cfg.count("seeds_per_instance", 4)?;
    let (mut failures, mut violations, mut worst_spread) = (0usize, 0usize, 1.0f64);
    let mut rows = Vec::new();
    let mut stream = 0u64;
    for m in [1u32, 2, 4] {
        for mu in [0.1, 0.25] {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for _ in 0..instances {
                stream += 1;
                let mut rng = rng_for(cfg, stream);
                let (e, f) = inkspots_instance(&grid, s, m, mu, &family, InkSpotsMode::Theorem, seeds, &mut rng).context("ink-spots instance")?;
                let r = inkspots_audit(&e, &f, mu, m, s, &family, InkSpotsMode::Theorem).context("ink-spots audit")?;
                failures += usize::from(!(r.holds && r.c_sup > 0.0));
                violations += r.hypothesis_violations;
                lo = lo.min(r.c_sup);
                hi = hi.max(r.c_sup);
            }
            let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            worst_spread = worst_spread.max(spread);
            rows.push(json!({ "m": m, "mu": mu, "c_sup_min": lo, "c_sup_max": hi, "spread": spread }));
        }
    }
    report.record("inkspots_failures", failures as f64, 0.0, Relation::AtMost, Provenance::Voxel);
    report.record("hypothesis_violations", violations as f64, 0.0, Relation::AtMost, Provenance::Voxel);
    report.record("c_seed_spread", worst_spread, 2.0, Relation::AtMost, Provenance::Voxel);
    report.measure("c_sup", worst_spread, 0.0, Provenance::Voxel, json!({ "instances": instances, "grid": dims, "cells": rows }));
    Ok(())
}
