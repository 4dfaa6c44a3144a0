//! The sensing potential game.
//!
//! Players are `(sensor, step)` pairs over a `K`-step horizon. A player's action
//! is a sensing location plus the target it measures. The potential is the
//! mutual information between the terminal target states and every planned
//! measurement; it splits into independent per-target terms because targets
//! move independently. A player's utility is the conditional information its
//! own measurement adds given every other measurement of the same target,
//! which makes utility differences equal potential differences.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix2x4, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_info::{clamp_mi, log_det_matrix, mutual_information, schur_complement, JointGaussian};
use crate::models::{
    in_sensing_region, measure, measurement_jacobian, noise_covariance, resolve_heading, scan_angle,
    CvModel, Point, RadarNoiseParams, SensorCaps, SensorPose, TargetState,
};
use crate::tracker::{predict_horizon, HorizonPrediction, TrackBank};

/// Measurement dimension (range, azimuth).
pub const MEAS_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlayerId {
    pub sensor: usize,
    /// Horizon step, 1-based.
    pub step: usize,
}

impl PlayerId {
    pub fn new(sensor: usize, step: usize) -> Self {
        PlayerId { sensor, step }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanAction {
    pub location: Point,
    pub target: usize,
}

impl PlanAction {
    pub fn new(location: Point, target: usize) -> Self {
        PlanAction { location, target }
    }
}

/// One action per player, stored sensor-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPlan {
    num_sensors: usize,
    horizon: usize,
    actions: Vec<PlanAction>,
}

impl JointPlan {
    pub fn new(num_sensors: usize, horizon: usize, actions: Vec<PlanAction>) -> Result<Self> {
        if actions.len() != num_sensors * horizon {
            return Err(Error::DimensionMismatch(format!(
                "plan needs {} actions, got {}",
                num_sensors * horizon,
                actions.len()
            )));
        }
        Ok(JointPlan {
            num_sensors,
            horizon,
            actions,
        })
    }

    /// Every sensor stays at its current location and looks at target 0.
    pub fn stay(sensors: &[SensorSpec], horizon: usize) -> Self {
        let actions = sensors
            .iter()
            .flat_map(|s| std::iter::repeat_n(PlanAction::new(s.pose.position(), 0), horizon))
            .collect();
        JointPlan {
            num_sensors: sensors.len(),
            horizon,
            actions,
        }
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn index(&self, p: PlayerId) -> usize {
        debug_assert!(p.sensor < self.num_sensors && p.step >= 1 && p.step <= self.horizon);
        p.sensor * self.horizon + (p.step - 1)
    }

    pub fn action(&self, p: PlayerId) -> &PlanAction {
        &self.actions[self.index(p)]
    }

    pub fn set_action(&mut self, p: PlayerId, a: PlanAction) {
        let i = self.index(p);
        self.actions[i] = a;
    }

    pub fn with_action(&self, p: PlayerId, a: PlanAction) -> JointPlan {
        let mut out = self.clone();
        out.set_action(p, a);
        out
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> + '_ {
        (0..self.num_sensors)
            .flat_map(move |s| (1..=self.horizon).map(move |k| PlayerId::new(s, k)))
    }

    /// Location sequence of one sensor.
    pub fn path(&self, sensor: usize) -> Vec<Point> {
        (1..=self.horizon)
            .map(|k| self.action(PlayerId::new(sensor, k)).location)
            .collect()
    }

    /// Each step reachable from the previous one by a single move.
    pub fn is_feasible(&self, sensors: &[SensorSpec]) -> bool {
        sensors.iter().enumerate().all(|(i, s)| {
            let mut prev = s.pose.position();
            self.path(i).into_iter().all(|p| {
                let ok = crate::models::is_single_step(&s.caps, prev, p);
                prev = p;
                ok
            })
        })
    }

    /// Headings obtained by chaining the turn limit along each sensor's path,
    /// aiming at the predicted position of the selected target.
    pub fn chained_headings(&self, game: &SensingGame) -> Vec<Vec<f64>> {
        (0..self.num_sensors)
            .map(|i| {
                let s = &game.sensors[i];
                let mut theta = s.pose.theta;
                (1..=self.horizon)
                    .map(|k| {
                        let a = self.action(PlayerId::new(i, k));
                        let tgt = game.tables.predicted_position(a.target, k);
                        theta = resolve_heading(theta, s.caps.max_turn, a.location, tgt);
                        theta
                    })
                    .collect()
            })
            .collect()
    }
}

/// A sensing platform as seen by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub pose: SensorPose,
    pub caps: SensorCaps,
    pub noise: RadarNoiseParams,
}

/// Open-loop predictions and transition powers for one planning instant.
#[derive(Debug, Clone)]
pub struct GameTables {
    horizon: usize,
    predictions: Vec<HorizonPrediction>,
    /// `transitions[d]` is the transition over `d` steps, `transitions[0] = I`.
    transitions: Vec<Matrix4<f64>>,
}

pub fn build_tables(bank: &TrackBank, model: &CvModel, horizon: usize) -> GameTables {
    assert!(horizon >= 1, "planning horizon must be at least 1");
    let predictions = predict_horizon(bank, model, horizon);
    let transitions = (0..=horizon)
        .map(|d| {
            if d == 0 {
                Matrix4::identity()
            } else {
                model.cv_transition(d).0
            }
        })
        .collect();
    GameTables {
        horizon,
        predictions,
        transitions,
    }
}

impl GameTables {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_targets(&self) -> usize {
        self.predictions.len()
    }

    pub fn prediction(&self, target: usize) -> &HorizonPrediction {
        &self.predictions[target]
    }

    pub fn transition(&self, steps: usize) -> &Matrix4<f64> {
        &self.transitions[steps]
    }

    pub fn predicted_position(&self, target: usize, step: usize) -> Point {
        let m = self.predictions[target].mean(step);
        (m[0], m[1])
    }

    /// `Cov(x_k, x_l)` for horizon steps `k`, `l`.
    pub fn state_cross_cov(&self, target: usize, k: usize, l: usize) -> Matrix4<f64> {
        let p = &self.predictions[target];
        if k <= l {
            p.cov(k) * self.transitions[l - k].transpose()
        } else {
            self.transitions[k - l] * p.cov(l)
        }
    }
}

/// Linearized measurement of one player: `z = H x_step + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementModel {
    pub player: PlayerId,
    pub h: Matrix2x4<f64>,
    pub r: Matrix2<f64>,
}

impl MeasurementModel {
    pub fn step(&self) -> usize {
        self.player.step
    }
}

/// Variables of a per-target joint Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameVar {
    /// Target state at horizon step `k`.
    State(usize),
    Meas(PlayerId),
}

/// The game: tables for one planning instant plus the sensor platforms.
#[derive(Debug, Clone)]
pub struct SensingGame {
    pub tables: GameTables,
    pub sensors: Vec<SensorSpec>,
}

impl SensingGame {
    pub fn new(tables: GameTables, sensors: Vec<SensorSpec>) -> Self {
        SensingGame { tables, sensors }
    }

    pub fn horizon(&self) -> usize {
        self.tables.horizon
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn num_targets(&self) -> usize {
        self.tables.num_targets()
    }

    /// Heading used when evaluating `action` for `player`: aimed at the
    /// predicted target position, within the rotation reachable from the
    /// current heading after `step` turns.
    pub fn planning_heading(&self, player: PlayerId, action: &PlanAction) -> f64 {
        let s = &self.sensors[player.sensor];
        let limit = (s.caps.max_turn * player.step as f64).min(PI);
        let tgt = self.tables.predicted_position(action.target, player.step);
        resolve_heading(s.pose.theta, limit, action.location, tgt)
    }

    pub fn planning_pose(&self, player: PlayerId, action: &PlanAction) -> SensorPose {
        let s = &self.sensors[player.sensor];
        s.pose.moved_to(action.location, self.planning_heading(player, action))
    }

    /// Measurement model for `action`, or `None` when the predicted target
    /// position lies outside the sensing region (no detection, no information).
    pub fn measurement_model(&self, player: PlayerId, action: &PlanAction) -> Option<MeasurementModel> {
        let s = &self.sensors[player.sensor];
        let pose = self.planning_pose(player, action);
        let mean = self.tables.predictions[action.target].mean(player.step);
        let predicted = TargetState::from_vector(mean);
        let tgt = predicted.position();
        if !in_sensing_region(&pose, &s.caps, tgt) {
            return None;
        }
        let h = measurement_jacobian(&pose, &predicted).ok()?;
        let r = measure(&pose, tgt).r;
        let psi = scan_angle(&pose, s.caps.boresight_depression, tgt);
        Some(MeasurementModel {
            player,
            h,
            r: noise_covariance(&s.noise, r, psi),
        })
    }

    /// Models of every player in `plan` observing `target`, skipping players
    /// for which `skip` holds and those without a detection.
    pub fn observers(
        &self,
        plan: &JointPlan,
        target: usize,
        skip: impl Fn(PlayerId) -> bool,
    ) -> Vec<MeasurementModel> {
        plan.players()
            .filter(|p| !skip(*p))
            .filter(|p| plan.action(*p).target == target)
            .filter_map(|p| self.measurement_model(p, plan.action(p)))
            .collect()
    }

    /// Joint Gaussian over the terminal state of `target` and the given
    /// measurements (in order).
    pub fn assemble_joint(&self, target: usize, meas: &[MeasurementModel]) -> Result<JointGaussian<GameVar>> {
        let kk = self.horizon();
        let n = 4 + MEAS_DIM * meas.len();
        let mut cov = DMatrix::<f64>::zeros(n, n);
        let pred = &self.tables.predictions[target];
        cov.view_mut((0, 0), (4, 4)).copy_from(pred.cov(kk));
        for (a, ma) in meas.iter().enumerate() {
            let ka = ma.step();
            if ka < 1 || ka > kk {
                return Err(Error::DimensionMismatch(format!("measurement step {ka} outside horizon")));
            }
            let oa = 4 + MEAS_DIM * a;
            let zx = ma.h * self.tables.state_cross_cov(target, ka, kk);
            cov.view_mut((oa, 0), (2, 4)).copy_from(&zx);
            cov.view_mut((0, oa), (4, 2)).copy_from(&zx.transpose());
            for (b, mb) in meas.iter().enumerate().skip(a) {
                let ob = 4 + MEAS_DIM * b;
                let mut zz = ma.h * self.tables.state_cross_cov(target, ka, mb.step()) * mb.h.transpose();
                if a == b {
                    zz += ma.r;
                }
                cov.view_mut((oa, ob), (2, 2)).copy_from(&zz);
                cov.view_mut((ob, oa), (2, 2)).copy_from(&zz.transpose());
            }
        }
        let mut labels = vec![(GameVar::State(kk), 4)];
        labels.extend(meas.iter().map(|m| (GameVar::Meas(m.player), MEAS_DIM)));
        JointGaussian::new(cov, labels)
    }

    /// Information the given measurements carry about the terminal state of
    /// `target`.
    pub fn target_information(&self, target: usize, meas: &[MeasurementModel]) -> Result<f64> {
        if meas.is_empty() {
            return Ok(0.0);
        }
        let joint = self.assemble_joint(target, meas)?;
        let z: Vec<GameVar> = meas.iter().map(|m| GameVar::Meas(m.player)).collect();
        mutual_information(&joint, &[GameVar::State(self.horizon())], &z, &[])
    }

    /// The potential: terminal-state information summed over targets.
    pub fn potential(&self, plan: &JointPlan) -> Result<f64> {
        (0..self.num_targets())
            .map(|j| self.target_information(j, &self.observers(plan, j, |_| false)))
            .sum()
    }

    /// Conditional information of `me`'s measurement under `my_action` given
    /// every other measurement of the same target in `plan`.
    pub fn local_utility(&self, me: PlayerId, my_action: &PlanAction, plan: &JointPlan) -> Result<f64> {
        let Some(model) = self.measurement_model(me, my_action) else {
            return Ok(0.0);
        };
        let others = self.observers(plan, my_action.target, |p| p == me);
        let ctx = InfoContext::new(self, my_action.target, &[me.step], &others)?;
        ctx.gain(&[model])
    }
}

/// Target-state covariances over a set of horizon steps, conditioned on a
/// fixed set of measurements, with and without the terminal state also given.
///
/// Once built, the information gain of any new measurement at one of these
/// steps costs a constant amount of work.
#[derive(Debug, Clone)]
pub struct InfoContext {
    steps: Vec<usize>,
    /// `Cov(x_S | Z)`.
    given_meas: DMatrix<f64>,
    /// `Cov(x_S | Z, x_K)`.
    given_meas_and_terminal: DMatrix<f64>,
    single: Vec<(Matrix4<f64>, Matrix4<f64>)>,
}

impl InfoContext {
    pub fn new(game: &SensingGame, target: usize, steps: &[usize], observers: &[MeasurementModel]) -> Result<Self> {
        let kk = game.horizon();
        let tables = &game.tables;
        let mut steps: Vec<usize> = steps.to_vec();
        steps.sort_unstable();
        steps.dedup();
        // States of interest followed by the terminal state.
        let mut states = steps.clone();
        states.push(kk);
        let ns = 4 * states.len();
        let nz = MEAS_DIM * observers.len();
        let mut p_ss = DMatrix::<f64>::zeros(ns, ns);
        for (a, &ka) in states.iter().enumerate() {
            for (b, &kb) in states.iter().enumerate() {
                p_ss.view_mut((4 * a, 4 * b), (4, 4))
                    .copy_from(&tables.state_cross_cov(target, ka, kb));
            }
        }
        let mut p_sz = DMatrix::<f64>::zeros(ns, nz);
        for (a, &ka) in states.iter().enumerate() {
            for (c, m) in observers.iter().enumerate() {
                let blk = tables.state_cross_cov(target, ka, m.step()) * m.h.transpose();
                p_sz.view_mut((4 * a, MEAS_DIM * c), (4, 2)).copy_from(&blk);
            }
        }
        let mut p_zz = DMatrix::<f64>::zeros(nz, nz);
        for (a, ma) in observers.iter().enumerate() {
            for (b, mb) in observers.iter().enumerate().skip(a) {
                let mut blk = ma.h * tables.state_cross_cov(target, ma.step(), mb.step()) * mb.h.transpose();
                if a == b {
                    blk += ma.r;
                }
                p_zz.view_mut((MEAS_DIM * a, MEAS_DIM * b), (2, 2)).copy_from(&blk);
                p_zz.view_mut((MEAS_DIM * b, MEAS_DIM * a), (2, 2)).copy_from(&blk.transpose());
            }
        }
        let cond = schur_complement(&p_ss, &p_sz, &p_zz)?;
        let n = 4 * steps.len();
        let given_meas = cond.view((0, 0), (n, n)).clone_owned();
        let given_meas_and_terminal = {
            let terminal = cond.view((n, n), (4, 4)).clone_owned();
            let cross = cond.view((0, n), (n, 4)).clone_owned();
            let mut out = schur_complement(&given_meas, &cross, &terminal)?;
            // x_K itself is known exactly once conditioned on.
            for (a, &k) in steps.iter().enumerate() {
                if k == kk {
                    out.view_mut((4 * a, 0), (4, n)).fill(0.0);
                    out.view_mut((0, 4 * a), (n, 4)).fill(0.0);
                }
            }
            out
        };
        let single = (0..steps.len())
            .map(|a| {
                let g: Matrix4<f64> = given_meas.fixed_view::<4, 4>(4 * a, 4 * a).into_owned();
                let b: Matrix4<f64> = given_meas_and_terminal.fixed_view::<4, 4>(4 * a, 4 * a).into_owned();
                (g, b)
            })
            .collect();
        Ok(InfoContext {
            steps,
            given_meas,
            given_meas_and_terminal,
            single,
        })
    }

    fn slot(&self, step: usize) -> Result<usize> {
        self.steps
            .iter()
            .position(|&s| s == step)
            .ok_or_else(|| Error::DimensionMismatch(format!("step {step} not in context")))
    }

    /// `I(x_K; z_new | Z)` for new measurements at steps covered by the context.
    pub fn gain(&self, meas: &[MeasurementModel]) -> Result<f64> {
        match meas {
            [] => Ok(0.0),
            [m] => {
                let (g, b) = &self.single[self.slot(m.step())?];
                let a = m.h * g * m.h.transpose() + m.r;
                let c = m.h * b * m.h.transpose() + m.r;
                let (da, dc) = (det2(&a), det2(&c));
                if !(da > 0.0 && dc > 0.0) {
                    return Err(Error::SingularMatrix);
                }
                Ok(clamp_mi(0.5 * (da.ln() - dc.ln())))
            }
            _ => {
                let n = 4 * self.steps.len();
                let mut h = DMatrix::<f64>::zeros(MEAS_DIM * meas.len(), n);
                let mut r = DMatrix::<f64>::zeros(MEAS_DIM * meas.len(), MEAS_DIM * meas.len());
                for (i, m) in meas.iter().enumerate() {
                    let s = self.slot(m.step())?;
                    h.view_mut((MEAS_DIM * i, 4 * s), (2, 4)).copy_from(&m.h);
                    r.view_mut((MEAS_DIM * i, MEAS_DIM * i), (2, 2)).copy_from(&m.r);
                }
                let a = &h * &self.given_meas * h.transpose() + &r;
                let c = &h * &self.given_meas_and_terminal * h.transpose() + &r;
                Ok(clamp_mi(0.5 * (log_det_matrix(&a)? - log_det_matrix(&c)?)))
            }
        }
    }
}

fn det2(m: &Matrix2<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - 0.5 * (m[(0, 1)] * m[(1, 0)] + m[(1, 0)] * m[(0, 1)])
}
