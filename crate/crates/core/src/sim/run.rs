//! One simulated tracking run.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix4, Vector2, Vector4};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{build_tables, PlanAction, SensingGame, SensorSpec};
use crate::models::{
    in_sensing_region, measure, noise_covariance, propagate_truth_cv, propagate_truth_dubins, resolve_heading,
    scan_angle, wrap_angle, CvModel, DubinsTruth, Point, RangeBearing, SensorPose, TargetState,
};
use crate::planner::{
    enforce_intermediate_targets, execute_olf, execute_open_loop, plan_game, plan_myopic_game, LearnerParams,
    PlanResult,
};
use crate::tracker::{ekf_update, TargetBelief, TrackBank};

use super::config::{PlanMode, ScenarioConfig, TargetKind};

/// Planner wall time of a run. Not part of the bit-stable outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub planning_s: f64,
    pub total_s: f64,
}

/// Per-run metrics. Index `t` of the per-step vectors is time step `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: PlanMode,
    pub seed: u64,
    pub target_kinds: Vec<TargetKind>,
    /// Position error `|truth_xy - mean_xy|` after the update, `[step][target]`.
    pub position_error: Vec<Vec<f64>>,
    /// Potential (planned information, nats) of the plan executed at each step.
    pub potential: Vec<f64>,
    pub plan_calls: usize,
    pub converged_plans: usize,
    pub inner_cap_hits: usize,
    pub total_utility_evals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_times: Option<WallTimes>,
}

impl RunMetrics {
    pub fn num_steps(&self) -> usize {
        self.position_error.len()
    }
}

/// One sensor's executed action and its outcome at a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedAction {
    pub pose: SensorPose,
    pub target: usize,
    /// Whether the true target lay in the sensing region.
    pub detected: bool,
    pub measurement: Option<RangeBearing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub truth: Vec<TargetState>,
    pub belief_means: Vec<[f64; 4]>,
    pub actions: Vec<ExecutedAction>,
    /// Whether a new plan was made before this step.
    pub replanned: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub steps: Vec<StepLog>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
enum Truth {
    Cv { state: TargetState, q: f64 },
    Dubins { state: DubinsTruth, amplitude: f64, period: f64, phase: f64 },
}

impl Truth {
    fn state(&self) -> TargetState {
        match self {
            Truth::Cv { state, .. } => *state,
            Truth::Dubins { state, .. } => state.as_target_state(),
        }
    }
}

/// A queued step: what each sensor does and where its beam should point.
#[derive(Debug, Clone)]
struct Command {
    actions: Vec<PlanAction>,
    aims: Vec<Point>,
}

/// Independent random streams of a run.
struct Streams {
    init: ChaCha8Rng,
    truth: ChaCha8Rng,
    meas: ChaCha8Rng,
    planner: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let make = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        Streams {
            init: make(1),
            truth: make(2),
            meas: make(3),
            planner: make(4),
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn initial_truth(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Truth> {
    let m = &cfg.map;
    let ri = &cfg.random_init;
    let dt = cfg.filter.dt;
    cfg.targets
        .iter()
        .map(|t| {
            let pos = t.position.unwrap_or_else(|| {
                [
                    rng.random_range(m.x_min + ri.margin..=m.x_max - ri.margin),
                    rng.random_range(m.y_min + ri.margin..=m.y_max - ri.margin),
                ]
            });
            let vel = t.velocity.unwrap_or_else(|| {
                let speed = t.speed.unwrap_or_else(|| rng.random_range(ri.speed_min..=ri.speed_max));
                let dir = rng.random_range(-PI..PI);
                [speed * dir.cos(), speed * dir.sin()]
            });
            match t.kind {
                TargetKind::Cv => Truth::Cv {
                    state: TargetState::new(pos[0], pos[1], vel[0], vel[1]),
                    q: t.q.unwrap_or(cfg.filter.q),
                },
                TargetKind::Dubins => {
                    let phase = t.turn_phase.unwrap_or_else(|| rng.random_range(-PI..PI));
                    Truth::Dubins {
                        state: DubinsTruth {
                            x: pos[0],
                            y: pos[1],
                            heading: vel[1].atan2(vel[0]),
                            speed: vel[0].hypot(vel[1]),
                            turn_rate: 0.0,
                        },
                        amplitude: t.turn_amplitude,
                        period: t.turn_period / dt,
                        phase,
                    }
                }
            }
        })
        .collect()
}

fn initial_sensors(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<SensorSpec> {
    let m = &cfg.map;
    let margin = cfg.random_init.margin;
    cfg.sensors
        .iter()
        .map(|s| {
            let pos = s.position.unwrap_or_else(|| {
                [
                    rng.random_range(m.x_min + margin..=m.x_max - margin),
                    rng.random_range(m.y_min + margin..=m.y_max - margin),
                ]
            });
            let theta = s.theta.unwrap_or_else(|| rng.random_range(-PI..PI));
            SensorSpec {
                pose: SensorPose::new(pos[0], pos[1], s.z, theta),
                caps: s.caps,
                noise: s.noise,
            }
        })
        .collect()
}

fn initial_bank(cfg: &ScenarioConfig, truth: &[Truth], rng: &mut ChaCha8Rng) -> TrackBank {
    let f = &cfg.filter;
    let sd = Vector4::new(f.init_pos_std, f.init_pos_std, f.init_vel_std, f.init_vel_std);
    let cov = Matrix4::from_diagonal(&sd.component_mul(&sd));
    TrackBank::new(
        truth
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let noise = Vector4::from_fn(|i, _| sd[i] * normal(rng));
                let mean = TargetState::from_vector(&(t.state().to_vector() + noise));
                TargetBelief::new(j, mean, cov)
            })
            .collect(),
    )
}

/// Advances a Dubins vehicle one filter step; mirrors the heading at map edges.
fn step_dubins(state: &DubinsTruth, turn_rate: f64, dt: f64, cfg: &ScenarioConfig) -> DubinsTruth {
    let scaled = DubinsTruth {
        speed: state.speed * dt,
        turn_rate: turn_rate * dt,
        ..*state
    };
    let mut next = propagate_truth_dubins(&scaled);
    let m = &cfg.map;
    let (mut hx, mut hy) = (next.heading.cos(), next.heading.sin());
    if next.x < m.x_min || next.x > m.x_max {
        next.x = if next.x < m.x_min { 2.0 * m.x_min - next.x } else { 2.0 * m.x_max - next.x };
        next.x = next.x.clamp(m.x_min, m.x_max);
        hx = -hx;
    }
    if next.y < m.y_min || next.y > m.y_max {
        next.y = if next.y < m.y_min { 2.0 * m.y_min - next.y } else { 2.0 * m.y_max - next.y };
        next.y = next.y.clamp(m.y_min, m.y_max);
        hy = -hy;
    }
    DubinsTruth {
        heading: hy.atan2(hx),
        speed: state.speed,
        turn_rate,
        ..next
    }
}

fn advance_truth(truth: &mut [Truth], cfg: &ScenarioConfig, t: usize, rng: &mut ChaCha8Rng) {
    for tr in truth.iter_mut() {
        match tr {
            Truth::Cv { state, q } => {
                let model = CvModel { dt: cfg.filter.dt, q: *q };
                *state = propagate_truth_cv(state, &model, rng, &cfg.map);
            }
            Truth::Dubins {
                state,
                amplitude,
                period,
                phase,
            } => {
                let rate = *amplitude * (2.0 * PI * t as f64 / *period + *phase).sin();
                *state = step_dubins(state, rate, cfg.filter.dt, cfg);
            }
        }
    }
}

/// Plans from the current beliefs and returns the commands to queue.
fn make_plan(
    cfg: &ScenarioConfig,
    mode: PlanMode,
    bank: &TrackBank,
    sensors: &[SensorSpec],
    params: &LearnerParams,
) -> Result<(PlanResult, Vec<Command>)> {
    let model = cfg.model();
    let horizon = match mode {
        PlanMode::Myopic => 2,
        PlanMode::Ol | PlanMode::Olf => cfg.planning.horizon,
    };
    let game = SensingGame::new(build_tables(bank, &model, horizon), sensors.to_vec());
    let mut result = match mode {
        PlanMode::Myopic => plan_myopic_game(&game, params)?,
        _ => plan_game(&game, params)?,
    };
    let executed = match mode {
        PlanMode::Olf => cfg.planning.commit,
        _ => horizon,
    };
    if mode != PlanMode::Myopic {
        let adjusted = enforce_intermediate_targets(&game, &result.plan, executed)?;
        if adjusted != result.plan {
            result.potential_value = game.potential(&adjusted)?;
            result.plan = adjusted;
        }
    }
    let steps = match mode {
        PlanMode::Olf => execute_olf(&result.plan, cfg.planning.commit),
        _ => execute_open_loop(&result.plan),
    };
    let commands = steps
        .into_iter()
        .enumerate()
        .map(|(k, actions)| {
            let aims = actions
                .iter()
                .map(|a| game.tables.predicted_position(a.target, k + 1))
                .collect();
            Command { actions, aims }
        })
        .collect();
    Ok((result, commands))
}

/// Simulates `cfg` in `mode` with the given seed.
pub fn run_scenario_mode(cfg: &ScenarioConfig, mode: PlanMode, seed: u64) -> Result<(RunMetrics, RunLog)> {
    let started = Instant::now();
    let mut rngs = Streams::new(seed);
    let mut truth = initial_truth(cfg, &mut rngs.init);
    let mut sensors = initial_sensors(cfg, &mut rngs.init);
    let mut bank = initial_bank(cfg, &truth, &mut rngs.init);
    let model = cfg.model();
    let mut metrics = RunMetrics {
        mode,
        seed,
        target_kinds: cfg.targets.iter().map(|t| t.kind).collect(),
        position_error: Vec::with_capacity(cfg.run.num_steps),
        potential: Vec::with_capacity(cfg.run.num_steps),
        plan_calls: 0,
        converged_plans: 0,
        inner_cap_hits: 0,
        total_utility_evals: 0,
        wall_times: None,
    };
    let mut log = RunLog::default();
    let mut queue: std::collections::VecDeque<Command> = Default::default();
    let mut current_potential = 0.0;
    let mut planning_s = 0.0;

    for t in 1..=cfg.run.num_steps {
        let replanned = queue.is_empty();
        if replanned {
            let params = LearnerParams {
                rng_seed: rngs.planner.next_u64(),
                ..cfg.planning.learner
            };
            let t0 = Instant::now();
            let (result, commands) = make_plan(cfg, mode, &bank, &sensors, &params)?;
            planning_s += t0.elapsed().as_secs_f64();
            metrics.plan_calls += 1;
            metrics.converged_plans += result.converged as usize;
            metrics.inner_cap_hits += result.inner_cap_hits;
            metrics.total_utility_evals += result.total_utility_evals;
            if !result.converged {
                log.warnings.push(format!(
                    "step {t}: planner stopped at the outer iteration cap ({})",
                    cfg.planning.learner.max_outer_iters
                ));
            }
            current_potential = result.potential_value;
            queue.extend(commands);
        }
        let cmd = queue.pop_front().expect("a plan yields at least one step");

        advance_truth(&mut truth, cfg, t, &mut rngs.truth);
        bank.predict_all(&model);

        let mut actions = Vec::with_capacity(sensors.len());
        for (i, spec) in sensors.iter_mut().enumerate() {
            let act = cmd.actions[i];
            let theta = resolve_heading(spec.pose.theta, spec.caps.max_turn, act.location, cmd.aims[i]);
            spec.pose = spec.pose.moved_to(act.location, theta);
            let true_state = truth[act.target].state();
            let detected = in_sensing_region(&spec.pose, &spec.caps, true_state.position());
            let mut measurement = None;
            if detected {
                let z = noisy_measurement(spec, true_state.position(), &mut rngs.meas);
                match update_belief(&bank.beliefs[act.target], spec, &z) {
                    Ok(b) => bank.beliefs[act.target] = b,
                    Err(e) => log.warnings.push(format!("step {t}: sensor {i} update skipped: {e}")),
                }
                measurement = Some(z);
            }
            actions.push(ExecutedAction {
                pose: spec.pose,
                target: act.target,
                detected,
                measurement,
            });
        }

        let errs = truth
            .iter()
            .zip(&bank.beliefs)
            .map(|(tr, b)| {
                let p = tr.state().position();
                (p.0 - b.mean[0]).hypot(p.1 - b.mean[1])
            })
            .collect();
        metrics.position_error.push(errs);
        metrics.potential.push(current_potential);
        log.steps.push(StepLog {
            step: t,
            truth: truth.iter().map(Truth::state).collect(),
            belief_means: bank.beliefs.iter().map(|b| [b.mean[0], b.mean[1], b.mean[2], b.mean[3]]).collect(),
            actions,
            replanned,
        });
    }
    metrics.wall_times = Some(WallTimes {
        planning_s,
        total_s: started.elapsed().as_secs_f64(),
    });
    Ok((metrics, log))
}

/// Simulates `cfg` in its configured planning mode.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<(RunMetrics, RunLog)> {
    run_scenario_mode(cfg, cfg.planning.mode, seed)
}

/// Range and azimuth of the true target corrupted with noise drawn at the
/// true geometry.
fn noisy_measurement<R: Rng + ?Sized>(spec: &SensorSpec, target: Point, rng: &mut R) -> RangeBearing {
    let clean = measure(&spec.pose, target);
    let psi = scan_angle(&spec.pose, spec.caps.boresight_depression, target);
    let r = noise_covariance(&spec.noise, clean.r, psi);
    let l = r.cholesky().map(|c| c.l()).unwrap_or_else(|| r.map(|v| v.max(0.0).sqrt()));
    let w = l * Vector2::new(normal(rng), normal(rng));
    RangeBearing {
        r: clean.r + w[0],
        phi: wrap_angle(clean.phi + w[1]),
    }
}

/// EKF update with the noise covariance evaluated at the predicted geometry.
fn update_belief(belief: &TargetBelief, spec: &SensorSpec, z: &RangeBearing) -> Result<TargetBelief> {
    let predicted = belief.position();
    let pr = measure(&spec.pose, predicted).r;
    if !pr.is_finite() {
        return Err(Error::DegenerateGeometry);
    }
    let psi = scan_angle(&spec.pose, spec.caps.boresight_depression, predicted);
    let r = noise_covariance(&spec.noise, pr, psi.min(PI / 2.0 - 1e-3));
    ekf_update(belief, &spec.pose, z, &r)
}
