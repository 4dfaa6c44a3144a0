//! Double-loop JSFP planner with backward initialization, the two-step myopic
//! baseline, and the open-loop / open-loop-feedback execution schedules.

pub mod jsfp;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::{build_tables, InfoContext, JointPlan, MeasurementModel, PlanAction, PlayerId, SensingGame, SensorSpec};
use crate::models::{candidate_locations, is_single_step, CvModel, Point};
use crate::tracker::TrackBank;

pub use jsfp::{argmax_tiebreak, run_jsfp, InnerOutcome, LearnerParams, RepeatedGame};

/// Outcome of one planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan: JointPlan,
    pub potential_value: f64,
    pub outer_iters: usize,
    pub total_utility_evals: usize,
    pub converged: bool,
    /// Inner loops stopped by the iteration cap.
    pub inner_cap_hits: usize,
}

fn dedup_points(points: impl IntoIterator<Item = Point>) -> Vec<Point> {
    let mut seen = HashSet::new();
    points
        .into_iter()
        .filter(|p| seen.insert(((p.0 * 1e6).round() as i64, (p.1 * 1e6).round() as i64)))
        .collect()
}

fn single_step_set(spec: &SensorSpec, from: Point) -> Vec<Point> {
    dedup_points(spec.caps.move_offsets().into_iter().map(|(dx, dy)| (from.0 + dx, from.1 + dy)))
}

/// Locations available to `(sensor, step)` that keep the sensor's path
/// feasible given its neighbouring steps in `plan`.
pub fn feasible_locations(game: &SensingGame, plan: &JointPlan, player: PlayerId) -> Vec<Point> {
    let spec = &game.sensors[player.sensor];
    let prev = if player.step == 1 {
        spec.pose.position()
    } else {
        plan.action(PlayerId::new(player.sensor, player.step - 1)).location
    };
    let mut out = single_step_set(spec, prev);
    if player.step < plan.horizon() {
        let next = plan.action(PlayerId::new(player.sensor, player.step + 1)).location;
        out.retain(|p| is_single_step(&spec.caps, *p, next));
    }
    out
}

/// Full action list of a player in `plan`, ordered by (location, target).
pub fn action_set(game: &SensingGame, plan: &JointPlan, player: PlayerId) -> Vec<PlanAction> {
    let m = game.num_targets();
    feasible_locations(game, plan, player)
        .into_iter()
        .flat_map(|loc| (0..m).map(move |j| PlanAction::new(loc, j)))
        .collect()
}

fn same_point(a: Point, b: Point) -> bool {
    (a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6
}

/// The game among the sensors at one horizon step, all other steps frozen.
pub struct StepGame<'a> {
    game: &'a SensingGame,
    base: JointPlan,
    step: usize,
    actions: Vec<Vec<PlanAction>>,
    models: Vec<Vec<Option<MeasurementModel>>>,
    frozen: Vec<Option<MeasurementModel>>,
}

impl<'a> StepGame<'a> {
    pub fn new(game: &'a SensingGame, plan: &JointPlan, step: usize) -> Self {
        let n = game.num_sensors();
        let actions: Vec<Vec<PlanAction>> = (0..n)
            .map(|i| action_set(game, plan, PlayerId::new(i, step)))
            .collect();
        let models = actions
            .iter()
            .enumerate()
            .map(|(i, acts)| {
                acts.iter()
                    .map(|a| game.measurement_model(PlayerId::new(i, step), a))
                    .collect()
            })
            .collect();
        let frozen = plan
            .players()
            .map(|p| {
                if p.step == step {
                    None
                } else {
                    game.measurement_model(p, plan.action(p))
                }
            })
            .collect();
        StepGame {
            game,
            base: plan.clone(),
            step,
            actions,
            models,
            frozen,
        }
    }

    pub fn actions(&self, sensor: usize) -> &[PlanAction] {
        &self.actions[sensor]
    }

    /// Profile index of the plan's current actions.
    pub fn profile_of(&self, plan: &JointPlan) -> Vec<usize> {
        (0..self.game.num_sensors())
            .map(|i| {
                let cur = plan.action(PlayerId::new(i, self.step));
                self.actions[i]
                    .iter()
                    .position(|a| a.target == cur.target && same_point(a.location, cur.location))
                    .expect("current action is feasible")
            })
            .collect()
    }

    pub fn apply(&self, plan: &mut JointPlan, profile: &[usize]) {
        for (i, &a) in profile.iter().enumerate() {
            plan.set_action(PlayerId::new(i, self.step), self.actions[i][a]);
        }
    }

    fn observers(&self, me: usize, target: usize, profile: &[usize]) -> Vec<MeasurementModel> {
        let mut out: Vec<MeasurementModel> = self
            .base
            .players()
            .zip(&self.frozen)
            .filter(|(p, m)| m.is_some() && self.base.action(*p).target == target)
            .filter_map(|(_, m)| *m)
            .collect();
        for (i, &a) in profile.iter().enumerate() {
            if i != me && self.actions[i][a].target == target {
                if let Some(m) = self.models[i][a] {
                    out.push(m);
                }
            }
        }
        out
    }
}

impl RepeatedGame for StepGame<'_> {
    fn num_players(&self) -> usize {
        self.game.num_sensors()
    }

    fn num_actions(&self, player: usize) -> usize {
        self.actions[player].len()
    }

    fn utilities(&self, player: usize, profile: &[usize]) -> Result<Vec<f64>> {
        let m = self.game.num_targets();
        let mut contexts = Vec::with_capacity(m);
        for j in 0..m {
            let obs = self.observers(player, j, profile);
            contexts.push(InfoContext::new(self.game, j, &[self.step], &obs)?);
        }
        self.actions[player]
            .iter()
            .zip(&self.models[player])
            .map(|(a, model)| match model {
                Some(model) => contexts[a.target].gain(std::slice::from_ref(model)),
                None => Ok(0.0),
            })
            .collect()
    }
}

/// Runs the inner repeated game at `step`, updating `plan` in place.
pub fn run_inner_jsfp(
    game: &SensingGame,
    plan: &mut JointPlan,
    step: usize,
    params: &LearnerParams,
    rng: &mut ChaCha8Rng,
) -> Result<InnerOutcome> {
    let sg = StepGame::new(game, plan, step);
    let mut profile = sg.profile_of(plan);
    let out = run_jsfp(&sg, &mut profile, params, rng)?;
    sg.apply(plan, &profile);
    Ok(out)
}

/// Backward greedy initialization: from the last step to the first, each
/// sensor picks the best action inside its `k`-step reachable region given the
/// decisions already made. Paths are then repaired to single-step feasibility.
pub fn initialize_backward(game: &SensingGame) -> Result<JointPlan> {
    let kk = game.horizon();
    let m = game.num_targets();
    let mut plan = JointPlan::stay(&game.sensors, kk);
    let mut decided: Vec<MeasurementModel> = Vec::new();
    let mut informative = vec![vec![false; kk]; game.num_sensors()];
    for k in (1..=kk).rev() {
        for (i, spec) in game.sensors.iter().enumerate() {
            let me = PlayerId::new(i, k);
            let region = candidate_locations(&spec.pose, &spec.caps, k);
            let mut best = (0.0f64, PlanAction::new(spec.pose.position(), 0), None);
            for j in 0..m {
                let obs: Vec<MeasurementModel> = decided
                    .iter()
                    .filter(|d| plan.action(d.player).target == j)
                    .copied()
                    .collect();
                let ctx = InfoContext::new(game, j, &[k], &obs)?;
                for &loc in &region {
                    let a = PlanAction::new(loc, j);
                    if let Some(model) = game.measurement_model(me, &a) {
                        let g = ctx.gain(std::slice::from_ref(&model))?;
                        if g > best.0 + 1e-12 * best.0.abs().max(1.0) {
                            best = (g, a, Some(model));
                        }
                    }
                }
            }
            plan.set_action(me, best.1);
            if let Some(model) = best.2 {
                decided.push(model);
                informative[i][k - 1] = true;
            }
        }
    }
    repair_paths(game, &mut plan, &informative);
    Ok(plan)
}

/// Forward sweep making each step one move from its predecessor. Each step is
/// projected onto the single-step set of its predecessor, aiming at the next
/// informative waypoint while keeping it within reach.
fn repair_paths(game: &SensingGame, plan: &mut JointPlan, informative: &[Vec<bool>]) {
    let kk = plan.horizon();
    for (i, spec) in game.sensors.iter().enumerate() {
        let reach = spec.caps.move_step_distances[0].max(spec.caps.move_step_distances[1]);
        let mut cur = spec.pose.position();
        for k in 1..=kk {
            let waypoint = (k..=kk).find(|&w| informative[i][w - 1]);
            let goal_step = waypoint.unwrap_or(k);
            let goal = plan.action(PlayerId::new(i, goal_step)).location;
            let options = single_step_set(spec, cur);
            let dist = |p: &Point| ((p.0 - goal.0).powi(2) + (p.1 - goal.1).powi(2)).sqrt();
            let budget = (goal_step - k) as f64 * reach + 1e-9;
            let within: Vec<Point> = options.iter().copied().filter(|p| dist(p) <= budget).collect();
            let pool = if within.is_empty() { &options } else { &within };
            let mut choice = pool[0];
            for p in pool.iter() {
                if dist(p) < dist(&choice) - 1e-12 {
                    choice = *p;
                }
            }
            let target = plan.action(PlayerId::new(i, k)).target;
            plan.set_action(PlayerId::new(i, k), PlanAction::new(choice, target));
            cur = choice;
        }
    }
}

/// Full double-loop learner on an already built game.
pub fn plan_game(game: &SensingGame, params: &LearnerParams) -> Result<PlanResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut plan = initialize_backward(game)?;
    let kk = game.horizon();
    let mut result = PlanResult {
        plan: plan.clone(),
        potential_value: 0.0,
        outer_iters: 0,
        total_utility_evals: 0,
        converged: false,
        inner_cap_hits: 0,
    };
    while result.outer_iters < params.max_outer_iters {
        result.outer_iters += 1;
        let mut changed = false;
        let mut all_converged = true;
        for k in (1..=kk).rev() {
            let out = run_inner_jsfp(game, &mut plan, k, params, &mut rng)?;
            result.total_utility_evals += out.utility_evals;
            result.inner_cap_hits += out.cap_hit as usize;
            changed |= out.changed;
            all_converged &= out.converged;
        }
        if !changed && all_converged {
            result.converged = true;
            break;
        }
    }
    result.potential_value = game.potential(&plan)?;
    result.plan = plan;
    Ok(result)
}

/// Non-myopic `K`-step plan from the current beliefs.
pub fn plan_nonmyopic(
    bank: &TrackBank,
    sensors: &[SensorSpec],
    model: &CvModel,
    horizon: usize,
    params: &LearnerParams,
) -> Result<PlanResult> {
    let game = SensingGame::new(build_tables(bank, model, horizon), sensors.to_vec());
    plan_game(&game, params)
}

/// Two-step game in which each sensor is one player choosing both locations
/// and a single target observed at both steps.
pub struct MyopicGame<'a> {
    game: &'a SensingGame,
    /// Per sensor: (location at step 1, location at step 2, target).
    actions: Vec<Vec<(Point, Point, usize)>>,
    models: Vec<Vec<[Option<MeasurementModel>; 2]>>,
}

impl<'a> MyopicGame<'a> {
    /// `game` must have a horizon of 2.
    pub fn new(game: &'a SensingGame) -> Self {
        assert_eq!(game.horizon(), 2, "the myopic game spans two steps");
        let m = game.num_targets();
        let mut actions = Vec::new();
        let mut models = Vec::new();
        for (i, spec) in game.sensors.iter().enumerate() {
            let mut acts = Vec::new();
            let mut mods = Vec::new();
            for p1 in single_step_set(spec, spec.pose.position()) {
                for p2 in single_step_set(spec, p1) {
                    for j in 0..m {
                        acts.push((p1, p2, j));
                        mods.push([
                            game.measurement_model(PlayerId::new(i, 1), &PlanAction::new(p1, j)),
                            game.measurement_model(PlayerId::new(i, 2), &PlanAction::new(p2, j)),
                        ]);
                    }
                }
            }
            actions.push(acts);
            models.push(mods);
        }
        MyopicGame {
            game,
            actions,
            models,
        }
    }

    pub fn actions(&self, sensor: usize) -> &[(Point, Point, usize)] {
        &self.actions[sensor]
    }

    pub fn to_plan(&self, profile: &[usize]) -> JointPlan {
        let acts = profile
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| {
                let (p1, p2, j) = self.actions[i][a];
                [PlanAction::new(p1, j), PlanAction::new(p2, j)]
            })
            .collect();
        JointPlan::new(profile.len(), 2, acts).expect("two actions per sensor")
    }

    /// Greedy sequential start: each sensor best-responds to those before it.
    fn greedy_profile(&self) -> Result<Vec<usize>> {
        let n = self.actions.len();
        let mut profile = vec![0; n];
        let mut active = vec![false; n];
        for i in 0..n {
            let masked: Vec<usize> = (0..n).map(|s| if active[s] { profile[s] } else { usize::MAX }).collect();
            let u = self.utilities_masked(i, &masked)?;
            profile[i] = argmax_tiebreak(&u, 0);
            active[i] = true;
        }
        Ok(profile)
    }

    fn utilities_masked(&self, player: usize, profile: &[usize]) -> Result<Vec<f64>> {
        let m = self.game.num_targets();
        let mut contexts = Vec::with_capacity(m);
        for j in 0..m {
            let obs: Vec<MeasurementModel> = profile
                .iter()
                .enumerate()
                .filter(|(i, &a)| *i != player && a != usize::MAX && self.actions[*i][a].2 == j)
                .flat_map(|(i, &a)| self.models[i][a].iter().flatten().copied())
                .collect();
            contexts.push(InfoContext::new(self.game, j, &[1, 2], &obs)?);
        }
        self.actions[player]
            .iter()
            .zip(&self.models[player])
            .map(|(a, mods)| {
                let own: Vec<MeasurementModel> = mods.iter().flatten().copied().collect();
                contexts[a.2].gain(&own)
            })
            .collect()
    }
}

impl RepeatedGame for MyopicGame<'_> {
    fn num_players(&self) -> usize {
        self.actions.len()
    }

    fn num_actions(&self, player: usize) -> usize {
        self.actions[player].len()
    }

    fn utilities(&self, player: usize, profile: &[usize]) -> Result<Vec<f64>> {
        self.utilities_masked(player, profile)
    }
}

/// Myopic baseline on an already built two-step game.
pub fn plan_myopic_game(game: &SensingGame, params: &LearnerParams) -> Result<PlanResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mg = MyopicGame::new(game);
    let mut profile = mg.greedy_profile()?;
    let mut result = PlanResult {
        plan: mg.to_plan(&profile),
        potential_value: 0.0,
        outer_iters: 0,
        total_utility_evals: 0,
        converged: false,
        inner_cap_hits: 0,
    };
    while result.outer_iters < params.max_outer_iters {
        result.outer_iters += 1;
        let out = run_jsfp(&mg, &mut profile, params, &mut rng)?;
        result.total_utility_evals += out.utility_evals;
        result.inner_cap_hits += out.cap_hit as usize;
        if out.converged {
            result.converged = true;
            break;
        }
    }
    result.plan = mg.to_plan(&profile);
    result.potential_value = game.potential(&result.plan)?;
    Ok(result)
}

/// Myopic baseline: two-step horizon, one target per sensor for both steps.
pub fn plan_myopic(
    bank: &TrackBank,
    sensors: &[SensorSpec],
    model: &CvModel,
    params: &LearnerParams,
) -> Result<PlanResult> {
    let game = SensingGame::new(build_tables(bank, model, 2), sensors.to_vec());
    plan_myopic_game(&game, params)
}

/// The actions every sensor executes at one time step.
pub type StepCommand = Vec<PlanAction>;

fn step_command(plan: &JointPlan, step: usize) -> StepCommand {
    (0..plan.num_sensors())
        .map(|i| *plan.action(PlayerId::new(i, step)))
        .collect()
}

/// Open loop: every planned step is executed before replanning.
pub fn execute_open_loop(plan: &JointPlan) -> Vec<StepCommand> {
    (1..=plan.horizon()).map(|k| step_command(plan, k)).collect()
}

/// Open-loop feedback: only the first `commit` steps are executed; after the
/// first, each sensor keeps measuring the target it measured first.
pub fn execute_olf(plan: &JointPlan, commit: usize) -> Vec<StepCommand> {
    let commit = commit.clamp(1, plan.horizon());
    let first = step_command(plan, 1);
    (1..=commit)
        .map(|k| {
            step_command(plan, k)
                .into_iter()
                .zip(&first)
                .map(|(a, f)| PlanAction::new(a.location, f.target))
                .collect()
        })
        .collect()
}

/// Applies the intermediate-step rule to the first `executed` steps of
/// `plan`: decisions are taken at odd steps and every even step measures the
/// target of the step before it. Where that changes a target, the sensor's
/// location at the even step becomes its best feasible location for the
/// inherited target (the planned location wins ties).
pub fn enforce_intermediate_targets(game: &SensingGame, plan: &JointPlan, executed: usize) -> Result<JointPlan> {
    let mut out = plan.clone();
    let last = executed.min(plan.horizon());
    for k in (2..=last).step_by(2) {
        for i in 0..plan.num_sensors() {
            let me = PlayerId::new(i, k);
            let inherited = out.action(PlayerId::new(i, k - 1)).target;
            let current = *out.action(me);
            if current.target == inherited {
                continue;
            }
            let mut best = PlanAction::new(current.location, inherited);
            let mut best_u = game.local_utility(me, &best, &out)?;
            for loc in feasible_locations(game, &out, me) {
                let cand = PlanAction::new(loc, inherited);
                let u = game.local_utility(me, &cand, &out)?;
                if u > best_u + 1e-12 * best_u.abs().max(1.0) {
                    best = cand;
                    best_u = u;
                }
            }
            out.set_action(me, best);
        }
    }
    Ok(out)
}
