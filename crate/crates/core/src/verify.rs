//! Self-checks on small random games: utility/potential alignment, the
//! per-target decomposition of the potential, and equilibrium certificates.
//!
//! The oracles here deliberately avoid the planner's fast paths: covariances
//! come from an explicitly stacked linear-Gaussian system, equilibria are
//! checked by trying every unilateral deviation, and optima by enumeration.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::game::{build_tables, JointPlan, MeasurementModel, PlanAction, PlayerId, SensingGame, SensorSpec};
use crate::gaussian_info::{mutual_information, JointGaussian};
use crate::models::{CvModel, Point, RadarNoiseParams, SensorCaps, SensorPose, TargetState};
use crate::planner::{action_set, plan_game, LearnerParams, PlanResult};
use crate::tracker::{TargetBelief, TrackBank};

/// A random planning instance with everything needed to rebuild its
/// covariances from first principles.
#[derive(Debug, Clone)]
pub struct Instance {
    pub bank: TrackBank,
    pub model: CvModel,
    pub game: SensingGame,
}

/// Shape of generated instances.
#[derive(Debug, Clone, Copy)]
pub struct InstanceShape {
    pub sensors: usize,
    pub horizon: usize,
    pub targets: usize,
    /// Move directions per step; 4 with equal distances gives 5 locations.
    pub directions: usize,
    pub equal_distances: bool,
}

impl InstanceShape {
    pub fn new(sensors: usize, horizon: usize, targets: usize) -> Self {
        InstanceShape {
            sensors,
            horizon,
            targets,
            directions: 8,
            equal_distances: false,
        }
    }

    /// Five locations per step (stay plus four directions).
    pub fn compact(mut self) -> Self {
        self.directions = 4;
        self.equal_distances = true;
        self
    }
}

fn random_spd4<R: Rng>(rng: &mut R) -> Matrix4<f64> {
    let pos = [rng.random_range(50.0..400.0), rng.random_range(50.0..400.0)];
    let vel = [rng.random_range(1.0..10.0), rng.random_range(1.0..10.0)];
    let d = Matrix4::from_diagonal(&Vector4::new(pos[0], pos[1], vel[0], vel[1]));
    let mut a = Matrix4::identity();
    for i in 0..4 {
        for j in 0..i {
            a[(i, j)] = rng.random_range(-0.3..0.3);
        }
    }
    let s = d.map(f64::sqrt);
    let c = a * a.transpose();
    s * c * s
}

pub fn random_instance<R: Rng>(rng: &mut R, shape: InstanceShape) -> Instance {
    let model = CvModel {
        dt: 1.0,
        q: rng.random_range(0.05..2.0),
    };
    let beliefs = (0..shape.targets)
        .map(|j| {
            let mean = TargetState::new(
                rng.random_range(-150.0..150.0),
                rng.random_range(-150.0..150.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            TargetBelief::new(j, mean, random_spd4(rng))
        })
        .collect();
    let bank = TrackBank::new(beliefs);
    let sensors = (0..shape.sensors)
        .map(|i| {
            let z = 250.0 + 60.0 * i as f64;
            let d1 = rng.random_range(20.0..50.0);
            let d2 = if shape.equal_distances { d1 } else { 2.0 * d1 };
            SensorSpec {
                pose: SensorPose::new(
                    rng.random_range(-300.0..300.0),
                    rng.random_range(-300.0..300.0),
                    z,
                    rng.random_range(-PI..PI),
                ),
                caps: SensorCaps {
                    move_step_distances: [d1, d2],
                    max_turn: PI / 2.0,
                    fov_half_angle: PI / 4.0,
                    range_min: z,
                    range_max: z + 450.0,
                    boresight_depression: 0.5,
                    num_directions: shape.directions,
                },
                noise: RadarNoiseParams {
                    theta_bw: rng.random_range(0.03..0.1),
                    k_m: 1.6,
                    delta_r: rng.random_range(5.0..30.0),
                    snr_ref: rng.random_range(20.0..200.0),
                    r_ref: 500.0,
                },
            }
        })
        .collect();
    let game = SensingGame::new(build_tables(&bank, &model, shape.horizon), sensors);
    Instance { bank, model, game }
}

/// Random single-step-feasible plan with uniformly chosen targets.
pub fn random_plan<R: Rng>(rng: &mut R, game: &SensingGame) -> JointPlan {
    let kk = game.horizon();
    let m = game.num_targets();
    let mut actions = Vec::new();
    for s in &game.sensors {
        let offsets = s.caps.move_offsets();
        let mut cur = s.pose.position();
        for _ in 0..kk {
            let (dx, dy) = offsets[rng.random_range(0..offsets.len())];
            cur = (cur.0 + dx, cur.1 + dy);
            actions.push(PlanAction::new(cur, rng.random_range(0..m)));
        }
    }
    JointPlan::new(game.num_sensors(), kk, actions).expect("sized plan")
}

/// Covariance of `[x_K; z_1; ...; z_m]` for one target, obtained by pushing
/// the independent sources `[x_0; w_1..w_K; v_1..v_m]` through the explicit
/// linear system `x_k = F x_{k-1} + w_k`, `z = H x_k + v`.
pub fn stacked_joint_covariance(inst: &Instance, target: usize, meas: &[MeasurementModel]) -> DMatrix<f64> {
    let kk = inst.game.horizon();
    let (f, q) = inst.model.cv_transition(1);
    let m = meas.len();
    let n_src = 4 + 4 * kk + 2 * m;
    let mut src = DMatrix::<f64>::zeros(n_src, n_src);
    src.view_mut((0, 0), (4, 4)).copy_from(&inst.bank.beliefs[target].cov);
    for s in 0..kk {
        src.view_mut((4 + 4 * s, 4 + 4 * s), (4, 4)).copy_from(&q);
    }
    for (i, mm) in meas.iter().enumerate() {
        let o = 4 + 4 * kk + 2 * i;
        src.view_mut((o, o), (2, 2)).copy_from(&mm.r);
    }
    // state_map[k]: 4 x n_src matrix expressing x_k in the sources.
    let mut state_map = vec![DMatrix::<f64>::zeros(4, n_src)];
    state_map[0].view_mut((0, 0), (4, 4)).copy_from(&Matrix4::<f64>::identity());
    for k in 1..=kk {
        let prev = &state_map[k - 1];
        let fd = DMatrix::from_fn(4, 4, |i, j| f[(i, j)]);
        let mut next = &fd * prev;
        for i in 0..4 {
            next[(i, 4 + 4 * (k - 1) + i)] += 1.0;
        }
        state_map.push(next);
    }
    let mut a = DMatrix::<f64>::zeros(4 + 2 * m, n_src);
    a.view_mut((0, 0), (4, n_src)).copy_from(&state_map[kk]);
    for (i, mm) in meas.iter().enumerate() {
        let hd = DMatrix::from_fn(2, 4, |r, c| mm.h[(r, c)]);
        let row = &hd * &state_map[mm.step()];
        a.view_mut((4 + 2 * i, 0), (2, n_src)).copy_from(&row);
        a[(4 + 2 * i, 4 + 4 * kk + 2 * i)] += 1.0;
        a[(4 + 2 * i + 1, 4 + 4 * kk + 2 * i + 1)] += 1.0;
    }
    &a * src * a.transpose()
}

/// `I(X_K; Z)` over all targets at once, from one block joint built with the
/// stacked-system oracle (no per-target split of the information).
pub fn undecomposed_information(inst: &Instance, plan: &JointPlan) -> Result<f64> {
    let game = &inst.game;
    let mtargets = game.num_targets();
    let per_target: Vec<Vec<MeasurementModel>> = (0..mtargets)
        .map(|j| game.observers(plan, j, |_| false))
        .collect();
    let total_meas: usize = per_target.iter().map(|v| v.len()).sum();
    let n = 4 * mtargets + 2 * total_meas;
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut labels: Vec<(UVar, usize)> = (0..mtargets).map(|j| (UVar::State(j), 4)).collect();
    let mut meas_off = 4 * mtargets;
    for (j, meas) in per_target.iter().enumerate() {
        let c = stacked_joint_covariance(inst, j, meas);
        let idx: Vec<usize> = (0..4)
            .map(|i| 4 * j + i)
            .chain((0..2 * meas.len()).map(|i| meas_off + i))
            .collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                cov[(ia, ib)] = c[(a, b)];
            }
        }
        meas_off += 2 * meas.len();
    }
    for (j, meas) in per_target.iter().enumerate() {
        for mm in meas {
            labels.push((UVar::Meas(j, mm.player), 2));
        }
    }
    let joint = JointGaussian::new(cov, labels)?;
    let x: Vec<UVar> = (0..mtargets).map(UVar::State).collect();
    let z: Vec<UVar> = per_target
        .iter()
        .enumerate()
        .flat_map(|(j, v)| v.iter().map(move |m| UVar::Meas(j, m.player)))
        .collect();
    mutual_information(&joint, &x, &z, &[])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UVar {
    State(usize),
    Meas(usize, PlayerId),
}

/// Largest `|Δu - Δφ|` over every pair of actions of every player.
pub fn alignment_error(game: &SensingGame, plan: &JointPlan) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in plan.players() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in action_set(game, plan, p) {
            let dev = plan.with_action(p, a);
            let diff = game.local_utility(p, &a, plan)? - game.potential(&dev)?;
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        if hi >= lo {
            worst = worst.max(hi - lo);
        }
    }
    Ok(worst)
}

/// Largest potential gain any single player could obtain by deviating.
pub fn best_unilateral_gain(game: &SensingGame, plan: &JointPlan) -> Result<f64> {
    let base = game.potential(plan)?;
    let mut best = 0.0f64;
    for p in plan.players() {
        for a in action_set(game, plan, p) {
            best = best.max(game.potential(&plan.with_action(p, a))? - base);
        }
    }
    Ok(best)
}

/// All feasible single-sensor paths of length `horizon`, positions only.
fn sensor_paths(spec: &SensorSpec, horizon: usize) -> Vec<Vec<Point>> {
    let mut paths = vec![vec![]];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for p in &paths {
            let cur = p.last().copied().unwrap_or(spec.pose.position());
            let mut seen = std::collections::HashSet::new();
            for (dx, dy) in spec.caps.move_offsets() {
                let q = (cur.0 + dx, cur.1 + dy);
                if seen.insert(((q.0 * 1e6).round() as i64, (q.1 * 1e6).round() as i64)) {
                    let mut np = p.clone();
                    np.push(q);
                    next.push(np);
                }
            }
        }
        paths = next;
    }
    paths
}

/// Number of feasible joint plans.
pub fn joint_plan_count(game: &SensingGame) -> usize {
    let kk = game.horizon();
    let m = game.num_targets();
    game.sensors
        .iter()
        .map(|s| sensor_paths(s, kk).len() * m.pow(kk as u32))
        .product()
}

/// Global optimum of the potential by exhaustive enumeration.
pub fn brute_force_optimum(game: &SensingGame) -> Result<(f64, JointPlan)> {
    let kk = game.horizon();
    let m = game.num_targets();
    let per_sensor: Vec<Vec<Vec<PlanAction>>> = game
        .sensors
        .iter()
        .map(|s| {
            let mut out = Vec::new();
            for path in sensor_paths(s, kk) {
                for code in 0..m.pow(kk as u32) {
                    let mut c = code;
                    let acts = path
                        .iter()
                        .map(|&loc| {
                            let j = c % m;
                            c /= m;
                            PlanAction::new(loc, j)
                        })
                        .collect();
                    out.push(acts);
                }
            }
            out
        })
        .collect();
    let mut idx = vec![0usize; per_sensor.len()];
    let mut best: Option<(f64, JointPlan)> = None;
    loop {
        let acts: Vec<PlanAction> = idx
            .iter()
            .enumerate()
            .flat_map(|(s, &i)| per_sensor[s][i].iter().copied())
            .collect();
        let plan = JointPlan::new(game.num_sensors(), kk, acts)?;
        let v = game.potential(&plan)?;
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, plan));
        }
        let mut s = 0;
        loop {
            if s == idx.len() {
                return Ok(best.expect("at least one plan"));
            }
            idx[s] += 1;
            if idx[s] < per_sensor[s].len() {
                break;
            }
            idx[s] = 0;
            s += 1;
        }
    }
}

/// One line of the `verify` report.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the built-in invariant suites on small random instances.
pub fn run_builtin_checks(seed: u64, instances: usize) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut align_worst = 0.0f64;
    let mut decomp_worst = 0.0f64;
    for i in 0..instances {
        let shape = InstanceShape::new(1 + i % 3, 1 + (i / 3) % 3, 1 + (i / 9) % 3);
        let inst = random_instance(&mut rng, shape);
        let plan = random_plan(&mut rng, &inst.game);
        align_worst = align_worst.max(alignment_error(&inst.game, &plan)?);
        let phi = inst.game.potential(&plan)?;
        decomp_worst = decomp_worst.max((phi - undecomposed_information(&inst, &plan)?).abs());
    }
    let mut nash_fail = 0;
    let mut converged = 0;
    let nash_runs = instances.clamp(1, 100);
    for s in 0..nash_runs {
        let inst = random_instance(&mut rng, InstanceShape::new(3, 2, 2).compact());
        let params = LearnerParams {
            rng_seed: s as u64,
            ..Default::default()
        };
        let res: PlanResult = plan_game(&inst.game, &params)?;
        if res.converged {
            converged += 1;
            if best_unilateral_gain(&inst.game, &res.plan)? > 1e-8 {
                nash_fail += 1;
            }
        }
    }
    Ok(vec![
        CheckReport {
            name: "alignment",
            passed: align_worst < 1e-8,
            detail: format!("max |du - dphi| = {align_worst:.3e} over {instances} instances"),
        },
        CheckReport {
            name: "decomposition",
            passed: decomp_worst < 1e-8,
            detail: format!("max |sum_j I_j - I| = {decomp_worst:.3e} over {instances} instances"),
        },
        CheckReport {
            name: "nash",
            passed: nash_fail == 0 && converged * 100 >= 99 * nash_runs,
            detail: format!("{converged}/{nash_runs} converged, {nash_fail} with an improving deviation"),
        },
    ])
}
