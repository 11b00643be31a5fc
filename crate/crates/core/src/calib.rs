//! Constants calibrated once and frozen, each next to the routine that
//! re-derives it. Tests re-run the routines and check that the frozen values
//! are still on the safe side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::barriers::{
    b1_margin, barrier_subsolution_residual, extremal_minus, largest_safe_level, phi1, phi2_inequality, BarrierConstants, BarrierParams,
    KernelClass, SubsolutionGrid,
};
use crate::bilinear::{energy_form, sobolev_seminorm, BilinearOptions, SeminormDomain};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, Profile};
use crate::kernel::KernelSpec;

/// `C` of the one-smooth-function energy estimate for the fractional
/// Laplacian (`d = 1`, `s = 1/2`): twice the largest requirement seen on
/// [`second_bound_pairs`] with seed 0 and `ε ∈ {0.1, 1}`.
pub const SECOND_BOUND_CONSTANT: f64 = 2.0 * 0.017;

/// Smooth `φ` and mollified indicators `g ≥ 0` on `ℝ`.
pub fn second_bound_pairs(seed: u64, count: usize) -> Result<Vec<(GridFunction, GridFunction)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = rng.gen_range(-0.5..0.5);
            let phi = Profile::ModulatedBump {
                center: vec![c],
                radius: rng.gen_range(0.8..1.5),
                amplitude: rng.gen_range(0.5..2.0),
                wavevector: vec![rng.gen_range(0.0..4.0)],
                phase: rng.gen_range(0.0..6.3),
            };
            let r = rng.gen_range(0.3..1.0);
            let cg = rng.gen_range(-0.5..0.5);
            let g = Profile::SmoothIndicator { center: vec![cg], radius: r, width: rng.gen_range(0.2..0.6) * r, height: rng.gen_range(0.5..2.0) };
            let phi = GridFunction::sample(phi, &[c - 1.6], &[c + 1.6], &[97])?;
            let g = GridFunction::sample(g, &[cg - 1.2 * r], &[cg + 1.2 * r], &[61])?;
            Ok((phi, g))
        })
        .collect()
}

/// Smallest `C` making every residual of the estimate nonnegative on `pairs × eps`.
pub fn second_bound_requirement(spec: &KernelSpec, pairs: &[(GridFunction, GridFunction)], eps: &[f64], opts: &BilinearOptions) -> Result<f64> {
    let mut need = 0.0f64;
    for (phi, g) in pairs {
        let lhs = energy_form(spec, phi, g, opts)?.total;
        let semi = sobolev_seminorm(g, spec.s, &SeminormDomain::Whole, opts)?;
        let c1 = phi.c1_norm();
        for &e in eps {
            let weight = c1 * c1 * g.positivity_measure() / e + phi.c2_norm() * g.lp_norm(1.0);
            if weight > 0.0 {
                need = need.max((lhs - e * semi * semi) / weight);
            }
        }
    }
    Ok(need)
}

/// Frozen barrier constants for `s = 1/4`, `λ = 1`, `Λ = 10` on the default
/// kernel-class discretization, from [`calibrate_barrier`] with
/// `t0 = 1`, `ρ = 1/2`, 2000 boundary points and a 200² support grid.
pub fn frozen_barrier_constants() -> BarrierConstants {
    BarrierConstants { s: 0.25, lambda: 1.0, big_lambda: 10.0, delta_b1: 0.0425, theta: 2.04, delta: 1.567e-8, t0: 1.0, p: 4096.0, rho: 0.5 }
}

/// Calibration settings for [`calibrate_barrier`].
#[derive(Debug, Clone, Copy)]
pub struct BarrierCalibration {
    pub t0: f64,
    pub rho: f64,
    /// Boundary-layer points per half-axis of `B1`.
    pub b1_points: usize,
    /// Support grid per axis for the `φ2` inequality and the `p` search.
    pub support: usize,
    /// Cap of the unrestricted `p` search.
    pub p_cap: f64,
}

impl Default for BarrierCalibration {
    fn default() -> Self {
        Self { t0: 1.0, rho: 0.5, b1_points: 2000, support: 200, p_cap: 1048576.0 }
    }
}

/// Finds `δ_b1`, `θ`, `δ` and the smallest dyadic `p` on the grids, each level
/// halved for safety before it is reported.
pub fn calibrate_barrier(class: &KernelClass, cal: &BarrierCalibration) -> Result<BarrierConstants> {
    let p = &class.params;
    let n = cal.b1_points;
    let f = |w: &[f64]| phi1(w);
    let mut layer = Vec::new();
    for i in 0..n {
        let r = (i as f64 + 0.5) / n as f64;
        let v = phi1(&[r]);
        if v < 1.0 {
            let m = extremal_minus(class, &f, &[r])?.value;
            layer.push((v, if m > 0.0 { 0.0 } else { 1.0 }));
        }
    }
    let delta_b1 = 0.5 * largest_safe_level(layer);
    let theta = b1_margin(class, delta_b1, n)?.margin;
    if !(theta > 0.0) {
        return Err(Error::CheckFailed(format!("no positive boundary margin at δ = {delta_b1}")));
    }
    let bp = BarrierParams::new(p.s, cal.t0, 1.0, cal.rho)?;
    let level = phi2_inequality(class, &bp, cal.support)?;
    let delta = 0.5 * largest_safe_level(level.iter().map(|q| (q.phi2, q.residual)));
    let grid = SubsolutionGrid { horizon: 1.0, nt: 3, n: cal.support };
    let rep = barrier_subsolution_residual(class, &bp, &grid, cal.p_cap, Some(delta))?;
    Ok(BarrierConstants { s: p.s, lambda: p.lambda, big_lambda: p.big_lambda, delta_b1, theta, delta, t0: cal.t0, p: rep.p, rho: cal.rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::KernelClassParams;

    fn fast() -> BilinearOptions {
        BilinearOptions { outer_panels: 12, outer_order: 6, ..Default::default() }
    }

    fn fl() -> KernelSpec {
        KernelSpec::fractional_laplacian(1, 0.5, 1.0, f64::INFINITY).unwrap()
    }

    #[test]
    fn second_bound_constant_rederives() {
        let need = second_bound_requirement(&fl(), &second_bound_pairs(0, 6).unwrap(), &[0.1, 1.0], &fast()).unwrap();
        assert!(need > 0.0 && need <= 0.017, "{need}");
    }

    #[test]
    fn second_bound_holds_on_fresh_pairs() {
        for seed in 1..4 {
            let need = second_bound_requirement(&fl(), &second_bound_pairs(seed, 6).unwrap(), &[0.1, 1.0], &fast()).unwrap();
            assert!(need <= SECOND_BOUND_CONSTANT, "seed {seed}: {need}");
        }
    }

    #[test]
    fn frozen_barrier_constants_are_safe() {
        let fz = frozen_barrier_constants();
        let class = KernelClass::new(KernelClassParams { s: fz.s, lambda: fz.lambda, big_lambda: fz.big_lambda, ..Default::default() }).unwrap();
        let m = b1_margin(&class, fz.delta_b1, 2000).unwrap();
        assert!(m.margin >= fz.theta, "{} < {}", m.margin, fz.theta);
        let bp = BarrierParams::new(fz.s, fz.t0, fz.p, fz.rho).unwrap();
        let level = phi2_inequality(&class, &bp, 100).unwrap();
        assert!(fz.delta <= largest_safe_level(level.iter().map(|q| (q.phi2, q.residual))));
        let grid = SubsolutionGrid { horizon: 1.0, nt: 3, n: 100 };
        let rep = barrier_subsolution_residual(&class, &bp, &grid, fz.p, Some(fz.delta)).unwrap();
        assert_eq!(rep.p, fz.p);
        assert!(rep.delta_region_max.unwrap_or(f64::NEG_INFINITY) <= 0.0);
    }
}
