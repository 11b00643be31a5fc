//! Group structure, cylinders, covering audits and voxel IO through the public API.

use kinetic_core::covering::{interval_stack_measures, vitali_audit};
use kinetic_core::geometry::{group_inverse, group_product, kinetic_scale, PhasePoint, SlantedCylinder};
use kinetic_core::voxel::{VoxelGrid, VoxelSet};
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point() -> impl Strategy<Value = PhasePoint> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(t, x, v)| PhasePoint::new(t, vec![x], vec![v]))
}

fn close(a: &PhasePoint, b: &PhasePoint) -> bool {
    (a.t - b.t).abs() < 1e-12 && (a.x[0] - b.x[0]).abs() < 1e-12 && (a.v[0] - b.v[0]).abs() < 1e-12
}

proptest! {
    #[test]
    fn group_laws(a in point(), b in point(), c in point()) {
        prop_assert!(close(&group_product(&group_product(&a, &b), &c), &group_product(&a, &group_product(&b, &c))));
        prop_assert!(close(&group_product(&a, &group_inverse(&a)), &PhasePoint::identity(1)));
    }

    #[test]
    fn scaling_is_an_automorphism(a in point(), b in point(), r in 0.2..3.0f64, s in 0.1..0.9f64) {
        let lhs = kinetic_scale(&group_product(&a, &b), r, s).unwrap();
        let rhs = group_product(&kinetic_scale(&a, r, s).unwrap(), &kinetic_scale(&b, r, s).unwrap());
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn interval_stacking_is_exact(raw in proptest::collection::vec((-50i64..50, 1i64..20, 1i64..5), 1..10), m in 1u32..6) {
        let iv: Vec<(Ratio<i64>, Ratio<i64>)> = raw.iter().map(|&(a, h, q)| (Ratio::new(a, q), Ratio::new(h, q))).collect();
        let (delayed, original) = interval_stack_measures(&iv, m);
        prop_assert!(delayed * Ratio::from_integer(m as i64 + 1) >= original * Ratio::from_integer(m as i64));
    }
}

#[test]
fn cylinder_membership_follows_the_shear() {
    let q = SlantedCylinder::new(PhasePoint::new(0.0, vec![0.0], vec![1.0]), 0.5, 0.5).unwrap();
    // At t = −0.4 the position center has moved to x = −0.4.
    assert!(q.contains(&PhasePoint::new(-0.4, vec![-0.4], vec![1.0])));
    assert!(!q.contains(&PhasePoint::new(-0.4, vec![0.0], vec![1.0])));
    assert!(!q.contains(&PhasePoint::new(0.1, vec![0.0], vec![1.0])));
}

#[test]
fn vitali_selection_covers_random_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let fam: Vec<SlantedCylinder> = (0..30)
            .map(|_| {
                let r = rng.gen_range(0.05..0.3);
                let top = PhasePoint::new(rng.gen_range(-0.5..0.0), vec![rng.gen_range(-0.7..0.7)], vec![rng.gen_range(-0.7..0.7)]);
                SlantedCylinder::new(top, r, 0.4).unwrap()
            })
            .collect();
        let a = vitali_audit(&fam, 3000, &mut rng).unwrap();
        assert_eq!(a.uncovered, 0);
        assert!(a.pairwise_disjoint && !a.selected.is_empty());
    }
}

#[test]
fn voxel_sets_round_trip_through_files() {
    let grid = VoxelGrid::new([-1.0, -1.0, -1.0], [0.0, 1.0, 1.0], [16, 32, 16]).unwrap();
    let mut e = VoxelSet::empty(grid);
    e.insert(&SlantedCylinder::new(PhasePoint::new(-0.2, vec![0.1], vec![0.3]), 0.5, 0.5).unwrap());
    assert!(e.count() > 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.vox");
    e.write(&path).unwrap();
    let back = VoxelSet::read(&path).unwrap();
    assert_eq!(back.count(), e.count());
    assert!(back.is_subset(&e).unwrap() && e.is_subset(&back).unwrap());
}
