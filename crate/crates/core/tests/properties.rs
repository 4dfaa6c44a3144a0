use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sensorgame::gaussian_info::{mutual_information, JointGaussian};
use sensorgame::models::{resolve_heading, wrap_angle};
use sensorgame::planner::{plan_game, LearnerParams};
use sensorgame::verify::{random_instance, random_plan, InstanceShape};

fn spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

proptest! {
    #[test]
    fn mutual_information_nonnegative_and_symmetric(
        seed in prop::collection::vec(-3.0f64..3.0, 36),
    ) {
        let cov = spd(6, &seed);
        let joint = JointGaussian::new(cov, vec![(0u8, 2), (1u8, 2), (2u8, 2)]).unwrap();
        let ab = mutual_information(&joint, &[0], &[1], &[]).unwrap();
        let ba = mutual_information(&joint, &[1], &[0], &[]).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        let ab_c = mutual_information(&joint, &[0], &[1], &[2]).unwrap();
        let ba_c = mutual_information(&joint, &[1], &[0], &[2]).unwrap();
        prop_assert!(ab_c >= 0.0);
        prop_assert!((ab_c - ba_c).abs() <= 1e-9 * ab_c.max(1.0));
        // Chain rule: I(x; a, b) = I(x; a) + I(x; b | a).
        let both = mutual_information(&joint, &[0], &[1, 2], &[]).unwrap();
        let second = mutual_information(&joint, &[0], &[2], &[1]).unwrap();
        prop_assert!((both - ab - second).abs() <= 1e-8 * both.max(1.0));
    }

    #[test]
    fn heading_turn_is_bounded(
        prev in -10.0f64..10.0,
        max_turn in 0.01f64..3.1,
        sx in -100.0f64..100.0, sy in -100.0f64..100.0,
        tx in -100.0f64..100.0, ty in -100.0f64..100.0,
    ) {
        let h = resolve_heading(prev, max_turn, (sx, sy), (tx, ty));
        prop_assert!(h > -std::f64::consts::PI - 1e-12 && h <= std::f64::consts::PI + 1e-12);
        prop_assert!(wrap_angle(h - prev).abs() <= max_turn + 1e-9);
        // When the bearing is reachable it is hit exactly.
        let bearing = (ty - sy).atan2(tx - sx);
        if wrap_angle(bearing - prev).abs() < max_turn && (tx, ty) != (sx, sy) {
            prop_assert!(wrap_angle(h - bearing).abs() < 1e-9);
        }
    }

    #[test]
    fn wrap_angle_is_idempotent(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        prop_assert!((wrap_angle(w) - w).abs() < 1e-12);
        prop_assert!((w - a).rem_euclid(2.0 * std::f64::consts::PI).min(
            (a - w).rem_euclid(2.0 * std::f64::consts::PI)) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn potential_nonnegative_and_plans_feasible(seed in any::<u64>(), n in 1usize..4, k in 1usize..4, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, InstanceShape::new(n, k, m));
        let plan = random_plan(&mut rng, &inst.game);
        prop_assert!(plan.is_feasible(&inst.game.sensors));
        prop_assert!(inst.game.potential(&plan).unwrap() >= 0.0);
        let res = plan_game(&inst.game, &LearnerParams { rng_seed: seed, ..Default::default() }).unwrap();
        prop_assert!(res.plan.is_feasible(&inst.game.sensors));
        prop_assert!(res.potential_value >= 0.0);
    }
}
