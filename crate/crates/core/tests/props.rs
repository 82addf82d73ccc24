//! Property tests over the geometry and scheduling invariants.

use lawnsim::scheduler::{apply_operator, tour_length, Operator, Schedule};
use lawnsim::seeding::rng_from_seed;
use lawnsim::world::{
    coverage_radius, line_of_sight, segment_intersects_box, Building, EnvironmentMap, Vec3,
};
use proptest::prelude::*;

fn arb_vec3() -> impl Strategy<Value = Vec3> {
    (0.0..1000.0f64, 0.0..1000.0f64, 0.0..200.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn arb_building() -> impl Strategy<Value = Building> {
    (
        0.0..800.0f64,
        20.0..200.0f64,
        0.0..800.0f64,
        20.0..200.0f64,
        20.0..150.0f64,
    )
        .prop_map(|(x0, dx, y0, dy, h)| Building {
            x_min: x0,
            x_max: x0 + dx,
            y_min: y0,
            y_max: y0 + dy,
            height: h,
        })
}

/// Independent oracle: uniform point samples along the segment, tested for
/// closed-box containment.
fn sampled_hit(p0: &Vec3, p1: &Vec3, b: &Building, n: usize) -> bool {
    (0..=n).any(|i| {
        let t = i as f64 / n as f64;
        let x = p0.x + (p1.x - p0.x) * t;
        let y = p0.y + (p1.y - p0.y) * t;
        let z = p0.z + (p1.z - p0.z) * t;
        b.footprint_contains(x, y) && (0.0..=b.height).contains(&z)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn slab_test_never_misses_sampled_hits(p0 in arb_vec3(), p1 in arb_vec3(), b in arb_building()) {
        prop_assume!(p0 != p1);
        // The sampling oracle only proves presence; a sampled hit that the
        // slab test rejects is always a bug.
        if sampled_hit(&p0, &p1, &b, 512) {
            prop_assert!(segment_intersects_box(&p0, &p1, &b));
        }
    }

    #[test]
    fn line_of_sight_is_symmetric(p0 in arb_vec3(), p1 in arb_vec3(), b in arb_building()) {
        prop_assume!(p0 != p1);
        let env = EnvironmentMap {
            side_xy: 1000.0,
            max_alt: 150.0,
            buildings: vec![b],
            users: vec![],
            bs_position: Vec3::new(0.0, 0.0, 30.0),
        };
        prop_assert_eq!(line_of_sight(&env, &p0, &p1), line_of_sight(&env, &p1, &p0));
    }

    #[test]
    fn coverage_radius_monotone(z in 1.0..150.0f64, beta in 0.0..1.2f64, dz in 0.1..20.0f64, db in 0.01..0.3f64) {
        let r = coverage_radius(z, beta).unwrap();
        prop_assert!(coverage_radius(z + dz, beta).unwrap() > r);
        if beta + db < std::f64::consts::FRAC_PI_2 {
            prop_assert!(coverage_radius(z, beta + db).unwrap() > r);
        }
    }

    #[test]
    fn operators_preserve_permutations(k in 2usize..12, seed in 0u64..1000, steps in 1usize..60) {
        let mut rng = rng_from_seed(seed);
        let mut sched = Schedule::identity(k);
        let users: Vec<Vec3> = (0..k).map(|i| Vec3::new(i as f64 * 7.0, (i * i % 13) as f64, 0.0)).collect();
        for step in 0..steps {
            let op = match step % 3 {
                0 => Operator::Swap,
                1 => Operator::InsertMove,
                _ => Operator::ReverseSubsequence,
            };
            sched = apply_operator(&sched, op, &mut rng);
            prop_assert!(sched.validate(k).is_ok());
            prop_assert!(tour_length(&Vec3::new(0.0, 0.0, 0.0), &sched, &users).is_ok());
        }
    }
}

#[test]
fn beta_ordering_gives_wider_comm_disc() {
    // Communication coverage must exceed sensing coverage at equal altitude
    // whenever beta_com > beta_sen.
    for z in [10.0, 45.0, 100.0, 140.0] {
        let sen = coverage_radius(z, std::f64::consts::FRAC_PI_6).unwrap();
        let com = coverage_radius(z, std::f64::consts::FRAC_PI_4).unwrap();
        assert!(com > sen);
    }
}
