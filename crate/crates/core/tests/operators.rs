//! Kernel constants, the Kolmogorov propagator and barrier constants end to end.

use kinetic_core::barriers::{b1_margin, KernelClass, KernelClassParams};
use kinetic_core::calib::frozen_barrier_constants;
use kinetic_core::grid::{GridFunction, Profile};
use kinetic_core::kernel::{ellipticity_report, CheckOptions, KernelSpec};
use kinetic_core::kolmogorov::{fundamental_solution_grid, PropagatorGrid};

#[test]
fn fractional_laplacian_constants_at_half() {
    let spec = KernelSpec::fractional_laplacian(1, 0.5, 1.0, 1.0).unwrap();
    let opts = CheckOptions { probe_count: 5, direction_count: 8, radius_exponents: (-3, 1), ..Default::default() };
    let er = ellipticity_report(&spec, &opts, None).unwrap();
    // |S^0| = 2: tail 2/(2s) = 2 and nondegeneracy 2/(2·(2 − 2s)) = 1.
    assert!((er.upper.tail_i.value - 2.0).abs() < 1e-3, "{}", er.upper.tail_i.value);
    assert!((er.nondegeneracy.value - 1.0).abs() < 1e-3, "{}", er.nondegeneracy.value);
    assert!(er.cancellation0.value < 1e-4 && er.cancellation1.value < 1e-4);
}

#[test]
fn fundamental_solution_is_a_probability_density() {
    for s in [0.5, 0.7] {
        let g = PropagatorGrid::new(s, 12.0, 12.0, 256, 256).unwrap().with_wrap_tol(1.0);
        for t in [0.5, 1.0] {
            let j = fundamental_solution_grid(t, &g.scaled(t)).unwrap();
            assert!((j.mass - 1.0).abs() < 1e-6, "s = {s}, t = {t}: mass {}", j.mass);
            assert!(j.min > -1e-8, "s = {s}, t = {t}: min {}", j.min);
        }
    }
}

#[test]
fn grid_functions_round_trip_exactly() {
    let f = GridFunction::sample(Profile::maxwellian(2, 1.0, 0.7), &[-3.0, -3.0], &[3.0, 3.0], &[17, 19]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.grid");
    f.write(&path).unwrap();
    let back = GridFunction::read(&path).unwrap();
    assert_eq!(back.values, f.values);
    assert_eq!(back.dims, f.dims);
}

#[test]
fn frozen_constants_round_trip_and_keep_a_positive_margin() {
    let k = frozen_barrier_constants();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("constants.json");
    k.write(&path).unwrap();
    assert_eq!(kinetic_core::barriers::BarrierConstants::read(&path).unwrap(), k);
    let class = KernelClass::new(KernelClassParams { s: k.s, lambda: k.lambda, big_lambda: k.big_lambda, ..Default::default() }).unwrap();
    let m = b1_margin(&class, k.delta_b1, 200).unwrap();
    assert!(m.margin >= k.theta, "margin {} below θ = {}", m.margin, k.theta);
}
