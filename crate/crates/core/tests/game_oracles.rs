use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensorgame::game::{GameVar, InfoContext};
use sensorgame::gaussian_info::mutual_information;
use sensorgame::planner::action_set;
use sensorgame::verify::{
    alignment_error, random_instance, random_plan, stacked_joint_covariance, undecomposed_information,
    InstanceShape,
};

fn shapes() -> impl Iterator<Item = InstanceShape> {
    (1..=3).flat_map(|n| (1..=3).flat_map(move |k| (1..=3).map(move |m| InstanceShape::new(n, k, m))))
}

#[test]
fn assembled_joint_matches_stacked_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for shape in shapes() {
        let inst = random_instance(&mut rng, shape);
        let plan = random_plan(&mut rng, &inst.game);
        for j in 0..inst.game.num_targets() {
            let meas = inst.game.observers(&plan, j, |_| false);
            let joint = inst.game.assemble_joint(j, &meas).unwrap();
            let oracle = stacked_joint_covariance(&inst, j, &meas);
            let got = joint.cov();
            let scale = oracle.amax().max(1.0);
            assert!((got - &oracle).amax() <= 1e-9 * scale, "shape {shape:?}");
            checked += meas.len();
        }
    }
    assert!(checked > 0);
}

#[test]
fn local_utility_equals_potential_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for shape in shapes() {
        let inst = random_instance(&mut rng, shape);
        let plan = random_plan(&mut rng, &inst.game);
        let err = alignment_error(&inst.game, &plan).unwrap();
        assert!(err < 1e-8, "shape {shape:?}: {err}");
    }
}

#[test]
fn potential_matches_undecomposed_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for shape in shapes() {
        let inst = random_instance(&mut rng, shape);
        for _ in 0..3 {
            let plan = random_plan(&mut rng, &inst.game);
            let a = inst.game.potential(&plan).unwrap();
            let b = undecomposed_information(&inst, &plan).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn deviations_to_other_targets_do_not_move_unrelated_utility() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let inst = random_instance(&mut rng, InstanceShape::new(2, 2, 2));
        let plan = random_plan(&mut rng, &inst.game);
        let players: Vec<_> = plan.players().collect();
        let me = players[rng.random_range(0..players.len())];
        let mine = *plan.action(me);
        let base = inst.game.local_utility(me, &mine, &plan).unwrap();
        for other in players.iter().filter(|p| **p != me) {
            for a in action_set(&inst.game, &plan, *other) {
                let was = plan.action(*other).target;
                if a.target == mine.target || was == mine.target {
                    continue;
                }
                let dev = plan.with_action(*other, a);
                let u = inst.game.local_utility(me, &mine, &dev).unwrap();
                assert!((u - base).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn info_context_matches_generic_conditional_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..40 {
        let inst = random_instance(&mut rng, InstanceShape::new(3, 3, 1));
        let plan = random_plan(&mut rng, &inst.game);
        let meas = inst.game.observers(&plan, 0, |_| false);
        if meas.len() < 2 {
            continue;
        }
        let (new, rest) = meas.split_at(2);
        let steps: Vec<usize> = new.iter().map(|m| m.step()).collect();
        let ctx = InfoContext::new(&inst.game, 0, &steps, rest).unwrap();
        let fast = ctx.gain(new).unwrap();
        let joint = inst.game.assemble_joint(0, &meas).unwrap();
        let z: Vec<GameVar> = new.iter().map(|m| GameVar::Meas(m.player)).collect();
        let g: Vec<GameVar> = rest.iter().map(|m| GameVar::Meas(m.player)).collect();
        let slow = mutual_information(&joint, &[GameVar::State(inst.game.horizon())], &z, &g).unwrap();
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }
}

#[test]
fn more_observers_never_reduce_potential() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, InstanceShape::new(2, 2, 1));
        let plan = random_plan(&mut rng, &inst.game);
        let all = inst.game.observers(&plan, 0, |_| false);
        let full = inst.game.target_information(0, &all).unwrap();
        for drop in 0..all.len() {
            let mut fewer = all.clone();
            fewer.remove(drop);
            let part = inst.game.target_information(0, &fewer).unwrap();
            assert!(part <= full + 1e-10);
        }
    }
}
