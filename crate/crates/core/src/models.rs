//! Target motion, sensor platform kinematics and the radar-like measurement
//! model.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar position.
pub type Point = (f64, f64);

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl TargetState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        TargetState { x, y, vx, vy }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.vx, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        TargetState::new(v[0], v[1], v[2], v[3])
    }

    pub fn position(&self) -> Point {
        (self.x, self.y)
    }
}

/// Nearly-constant-velocity model (continuous white noise acceleration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvModel {
    pub dt: f64,
    pub q: f64,
}

impl CvModel {
    /// Transition and process-noise matrices over `steps * dt`.
    pub fn cv_transition(&self, steps: usize) -> (Matrix4<f64>, Matrix4<f64>) {
        assert!(steps >= 1, "cv_transition needs at least one step");
        let t = self.dt * steps as f64;
        let f = Matrix4::new(
            1.0, 0.0, t, 0.0, //
            0.0, 1.0, 0.0, t, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        let t2 = t * t / 2.0;
        let t3 = t * t * t / 3.0;
        let q = Matrix4::new(
            t3, 0.0, t2, 0.0, //
            0.0, t3, 0.0, t2, //
            t2, 0.0, t, 0.0, //
            0.0, t2, 0.0, t,
        ) * self.q;
        (f, q)
    }
}

/// Axis-aligned map rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl MapBounds {
    pub fn contains(&self, p: Point) -> bool {
        p.0 >= self.x_min && p.0 <= self.x_max && p.1 >= self.y_min && p.1 <= self.y_max
    }
}

/// Mirrors a coordinate back into `[lo, hi]`, returning whether it crossed.
fn reflect(v: &mut f64, lo: f64, hi: f64) -> bool {
    if *v > hi {
        *v = 2.0 * hi - *v;
        *v = v.max(lo);
        true
    } else if *v < lo {
        *v = 2.0 * lo - *v;
        *v = v.min(hi);
        true
    } else {
        false
    }
}

/// One step of CV truth motion with sampled process noise. Velocity components
/// change sign when the target crosses a map edge.
pub fn propagate_truth_cv<R: Rng + ?Sized>(
    state: &TargetState,
    model: &CvModel,
    rng: &mut R,
    bounds: &MapBounds,
) -> TargetState {
    let (f, q) = model.cv_transition(1);
    let mut next = f * state.to_vector();
    if model.q > 0.0 {
        let l = q
            .cholesky()
            .expect("white-noise acceleration covariance is positive definite")
            .l();
        let w = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        next += l * w;
    }
    let mut s = TargetState::from_vector(&next);
    if reflect(&mut s.x, bounds.x_min, bounds.x_max) {
        s.vx = -s.vx;
    }
    if reflect(&mut s.y, bounds.y_min, bounds.y_max) {
        s.vy = -s.vy;
    }
    s
}

/// Constant-speed planar vehicle with a per-step turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsTruth {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub turn_rate: f64,
}

impl DubinsTruth {
    pub fn position(&self) -> Point {
        (self.x, self.y)
    }

    /// State expressed in CV coordinates.
    pub fn as_target_state(&self) -> TargetState {
        TargetState::new(
            self.x,
            self.y,
            self.speed * self.heading.cos(),
            self.speed * self.heading.sin(),
        )
    }
}

pub fn propagate_truth_dubins(state: &DubinsTruth) -> DubinsTruth {
    let heading = wrap_angle(state.heading + state.turn_rate);
    DubinsTruth {
        x: state.x + state.speed * heading.cos(),
        y: state.y + state.speed * heading.sin(),
        heading,
        ..*state
    }
}

/// Sensor position and heading. `z` is the fixed flight altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
}

impl SensorPose {
    pub fn new(x: f64, y: f64, z: f64, theta: f64) -> Self {
        SensorPose {
            x,
            y,
            z,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        (self.x, self.y)
    }

    pub fn moved_to(&self, p: Point, theta: f64) -> SensorPose {
        SensorPose::new(p.0, p.1, self.z, theta)
    }
}

fn default_directions() -> usize {
    8
}

/// Platform mobility and sensing limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorCaps {
    pub move_step_distances: [f64; 2],
    pub max_turn: f64,
    pub fov_half_angle: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub boresight_depression: f64,
    /// Number of evenly spaced move directions (8 unless overridden).
    #[serde(default = "default_directions")]
    pub num_directions: usize,
}

impl SensorCaps {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let [a, b] = self.move_step_distances;
        if !(a > 0.0 && b > 0.0) {
            return Err("move_step_distances must be positive".into());
        }
        if !(self.max_turn > 0.0 && self.max_turn <= PI) {
            return Err("max_turn must lie in (0, pi]".into());
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle < PI / 2.0) {
            return Err("fov_half_angle must lie in (0, pi/2)".into());
        }
        if !(self.range_min < self.range_max) {
            return Err("range_min must be below range_max".into());
        }
        if self.num_directions == 0 {
            return Err("num_directions must be at least 1".into());
        }
        Ok(())
    }

    /// Offsets of one move: stay first, then each direction at each distance.
    pub fn move_offsets(&self) -> Vec<Point> {
        let mut out = vec![(0.0, 0.0)];
        for d in 0..self.num_directions {
            let ang = 2.0 * PI * d as f64 / self.num_directions as f64;
            for dist in self.move_step_distances {
                out.push((dist * ang.cos(), dist * ang.sin()));
            }
        }
        out
    }
}

/// Radar error-model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarNoiseParams {
    pub theta_bw: f64,
    pub k_m: f64,
    pub delta_r: f64,
    pub snr_ref: f64,
    pub r_ref: f64,
}

impl RadarNoiseParams {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let all = [self.theta_bw, self.k_m, self.delta_r, self.snr_ref, self.r_ref];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err("all radar noise parameters must be positive".into())
        }
    }

    /// SNR at slant range `r` under fourth-power radar-equation scaling.
    pub fn snr(&self, r: f64) -> f64 {
        self.snr_ref * (self.r_ref / r).powi(4)
    }
}

/// Range and azimuth of a target as seen from a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBearing {
    pub r: f64,
    pub phi: f64,
}

impl RangeBearing {
    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.r, self.phi)
    }
}

pub fn measure(pose: &SensorPose, target: Point) -> RangeBearing {
    let dx = target.0 - pose.x;
    let dy = target.1 - pose.y;
    RangeBearing {
        r: (dx * dx + dy * dy + pose.z * pose.z).sqrt(),
        phi: dy.atan2(dx),
    }
}

/// Jacobian of `(r, φ)` with respect to `(x, y, ẋ, ẏ)` at `predicted`.
pub fn measurement_jacobian(pose: &SensorPose, predicted: &TargetState) -> Result<Matrix2x4<f64>> {
    let dx = predicted.x - pose.x;
    let dy = predicted.y - pose.y;
    let rho2 = dx * dx + dy * dy;
    if rho2 < 1e-18 {
        return Err(Error::DegenerateGeometry);
    }
    let r = (rho2 + pose.z * pose.z).sqrt();
    Ok(Matrix2x4::new(
        dx / r,
        dy / r,
        0.0,
        0.0,
        -dy / rho2,
        dx / rho2,
        0.0,
        0.0,
    ))
}

/// Angle between the boresight (heading tilted down by the fixed depression)
/// and the line of sight to a ground point.
pub fn scan_angle(pose: &SensorPose, depression: f64, target: Point) -> f64 {
    let dx = target.0 - pose.x;
    let dy = target.1 - pose.y;
    let r = (dx * dx + dy * dy + pose.z * pose.z).sqrt();
    let (sd, cd) = depression.sin_cos();
    let b = [pose.theta.cos() * cd, pose.theta.sin() * cd, -sd];
    let l = [dx / r, dy / r, -pose.z / r];
    let c = b[0] * l[0] + b[1] * l[1] + b[2] * l[2];
    c.clamp(-1.0, 1.0).acos()
}

/// `R = diag(σ_R², σ_φ²)` for slant range `r` and scan angle `psi`.
pub fn noise_covariance(params: &RadarNoiseParams, r: f64, psi: f64) -> Matrix2<f64> {
    let snr2 = (2.0 * params.snr(r)).sqrt();
    let sigma_phi = (params.theta_bw / psi.cos()) / (params.k_m * snr2);
    let sigma_r = params.delta_r / snr2;
    Matrix2::new(sigma_r * sigma_r, 0.0, 0.0, sigma_phi * sigma_phi)
}

/// Closed region test: slant range within bounds and horizontal bearing within
/// the half field of view around the heading.
pub fn in_sensing_region(pose: &SensorPose, caps: &SensorCaps, target: Point) -> bool {
    let m = measure(pose, target);
    if m.r < caps.range_min || m.r > caps.range_max {
        return false;
    }
    wrap_angle(m.phi - pose.theta).abs() <= caps.fov_half_angle
}

fn point_key(p: Point) -> (i64, i64) {
    const Q: f64 = 1e-6;
    ((p.0 / Q).round() as i64, (p.1 / Q).round() as i64)
}

/// Sensing locations reachable from `pose` by exactly `k` single-step moves
/// (stay counts as a move), deduplicated, in breadth-first order.
pub fn candidate_locations(pose: &SensorPose, caps: &SensorCaps, k: usize) -> Vec<Point> {
    assert!(k >= 1, "candidate_locations needs k >= 1");
    let offsets = caps.move_offsets();
    let mut frontier = vec![pose.position()];
    for _ in 0..k {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for &p in &frontier {
            for &(ox, oy) in &offsets {
                let q = (p.0 + ox, p.1 + oy);
                if seen.insert(point_key(q)) {
                    next.push(q);
                }
            }
        }
        frontier = next;
    }
    frontier
}

/// True when `to` is one single-step move away from `from`.
pub fn is_single_step(caps: &SensorCaps, from: Point, to: Point) -> bool {
    let key = point_key(to);
    caps.move_offsets()
        .iter()
        .any(|&(ox, oy)| point_key((from.0 + ox, from.1 + oy)) == key)
}

/// Heading that points at the target from the sensing location, limited to a
/// turn of `max_turn` from `prev_theta`.
pub fn resolve_heading(prev_theta: f64, max_turn: f64, sensing: Point, target: Point) -> f64 {
    let dx = target.0 - sensing.0;
    let dy = target.1 - sensing.1;
    if dx == 0.0 && dy == 0.0 {
        return wrap_angle(prev_theta);
    }
    let desired = dy.atan2(dx);
    let delta = wrap_angle(desired - prev_theta);
    if delta.abs() <= max_turn {
        wrap_angle(desired)
    } else {
        wrap_angle(prev_theta + max_turn.copysign(delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn caps() -> SensorCaps {
        SensorCaps {
            move_step_distances: [20.0, 40.0],
            max_turn: PI / 4.0,
            fov_half_angle: PI / 6.0,
            range_min: 100.0,
            range_max: 1000.0,
            boresight_depression: 0.3,
            num_directions: 8,
        }
    }

    #[test]
    fn transition_unit_step() {
        let (f, q) = CvModel { dt: 1.0, q: 1.0 }.cv_transition(1);
        let f_exp = Matrix4::new(
            1., 0., 1., 0., 0., 1., 0., 1., 0., 0., 1., 0., 0., 0., 0., 1.,
        );
        let q_exp = Matrix4::new(
            1. / 3., 0., 0.5, 0., 0., 1. / 3., 0., 0.5, 0.5, 0., 1., 0., 0., 0.5, 0., 1.,
        );
        assert_eq!(f, f_exp);
        assert_abs_diff_eq!(q, q_exp, epsilon = 1e-15);
        let half = CvModel { dt: 0.5, q: 1.0 }.cv_transition(2);
        assert_eq!(half.0, f);
        assert_abs_diff_eq!(half.1, q, epsilon = 1e-15);
    }

    #[test]
    fn transition_composes() {
        let m = CvModel { dt: 0.7, q: 2.3 };
        let (f1, q1) = m.cv_transition(1);
        let (f2, q2) = m.cv_transition(2);
        assert_abs_diff_eq!(f2, f1 * f1, epsilon = 1e-15);
        assert_abs_diff_eq!(q2, f1 * q1 * f1.transpose() + q1, epsilon = 1e-9);
    }

    #[test]
    fn noiseless_cv_and_reflection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = MapBounds {
            x_min: -10.0,
            x_max: 10.0,
            y_min: -10.0,
            y_max: 10.0,
        };
        let m = CvModel { dt: 1.0, q: 0.0 };
        let s = propagate_truth_cv(&TargetState::new(0., 0., 1., 0.), &m, &mut rng, &b);
        assert_eq!(s, TargetState::new(1., 0., 1., 0.));
        let s = propagate_truth_cv(&TargetState::new(10., 0., 2., 0.), &m, &mut rng, &b);
        assert_eq!(s.vx, -2.0);
        assert_eq!(s.x, 8.0);
    }

    #[test]
    fn seeded_cv_is_reproducible() {
        let b = MapBounds {
            x_min: 0.0,
            x_max: 600.0,
            y_min: 0.0,
            y_max: 600.0,
        };
        let m = CvModel { dt: 1.0, q: 0.5 };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = TargetState::new(300., 300., 3., -2.);
            for _ in 0..50 {
                s = propagate_truth_cv(&s, &m, &mut rng, &b);
            }
            s
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn dubins_straight_and_loop() {
        let s = DubinsTruth {
            x: 0.,
            y: 0.,
            heading: 0.,
            speed: 1.,
            turn_rate: 0.,
        };
        let n = propagate_truth_dubins(&s);
        assert_abs_diff_eq!(n.x, 1.0);
        assert_abs_diff_eq!(n.y, 0.0);
        let mut s = DubinsTruth {
            turn_rate: PI / 2.0,
            ..s
        };
        for _ in 0..4 {
            s = propagate_truth_dubins(&s);
        }
        assert_abs_diff_eq!(wrap_angle(s.heading), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dubins_matches_discrete_arc() {
        // Closed form of the discrete recursion: positions are sums of
        // speed * (cos, sin)(n * w) for n = 1..N, a geometric series.
        let (w, v, n) = (0.1f64, 2.0f64, 10usize);
        let mut s = DubinsTruth {
            x: 0.,
            y: 0.,
            heading: 0.,
            speed: v,
            turn_rate: w,
        };
        for _ in 0..n {
            s = propagate_truth_dubins(&s);
        }
        let nf = n as f64;
        let common = v * (nf * w / 2.0).sin() / (w / 2.0).sin();
        let mid = (nf + 1.0) * w / 2.0;
        assert_abs_diff_eq!(s.x, common * mid.cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(s.y, common * mid.sin(), epsilon = 1e-9);
    }

    #[test]
    fn measure_cases() {
        let m = measure(&SensorPose::new(0., 0., 500., 0.), (0., 0.));
        assert_eq!((m.r, m.phi), (500.0, 0.0));
        let m = measure(&SensorPose::new(0., 0., 3., 1.), (4., 0.));
        assert_abs_diff_eq!(m.r, 5.0);
        assert_eq!(m.phi, 0.0);
        let m = measure(&SensorPose::new(0., 0., 490., 0.), (100., 100.));
        assert_abs_diff_eq!(m.r, (10000f64 + 10000. + 240100.).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.phi, PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_hand_values() {
        let pose = SensorPose::new(0., 0., 3., 0.);
        let h = measurement_jacobian(&pose, &TargetState::new(4., 0., 5., 6.)).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 0.8, epsilon = 1e-15);
        for r in 0..2 {
            assert_eq!(h[(r, 2)], 0.0);
            assert_eq!(h[(r, 3)], 0.0);
        }
        assert!(matches!(
            measurement_jacobian(&pose, &TargetState::new(0., 0., 1., 1.)),
            Err(Error::DegenerateGeometry)
        ));
    }

    #[test]
    fn noise_scaling() {
        let p = RadarNoiseParams {
            theta_bw: 0.05,
            k_m: 1.6,
            delta_r: 15.0,
            snr_ref: 100.0,
            r_ref: 600.0,
        };
        let r0 = noise_covariance(&p, 600.0, 0.0);
        let sphi = p.theta_bw / (p.k_m * (2.0 * p.snr_ref).sqrt());
        assert_abs_diff_eq!(r0[(1, 1)].sqrt(), sphi, epsilon = 1e-15);
        let r2 = noise_covariance(&p, 1200.0, 0.0);
        assert_abs_diff_eq!(r2[(0, 0)].sqrt() / r0[(0, 0)].sqrt(), 4.0, epsilon = 1e-12);
        let r3 = noise_covariance(&p, 600.0, PI / 3.0);
        assert_abs_diff_eq!(r3[(1, 1)].sqrt() / r0[(1, 1)].sqrt(), 2.0, epsilon = 1e-12);
        assert_eq!(r3[(0, 1)], 0.0);
    }

    #[test]
    fn sensing_region_cases() {
        let c = caps();
        let pose = SensorPose::new(0., 0., 300., 0.);
        assert!(in_sensing_region(&pose, &c, (400., 0.)));
        assert!(!in_sensing_region(&pose, &c, (-400., 0.)));
        // Exactly on the cone edge.
        let edge = (400.0 * c.fov_half_angle.cos(), 400.0 * c.fov_half_angle.sin());
        let on_edge = SensorCaps {
            fov_half_angle: wrap_angle(edge.1.atan2(edge.0)),
            ..c
        };
        assert!(in_sensing_region(&pose, &on_edge, edge));
        // Too far.
        assert!(!in_sensing_region(&pose, &c, (2000., 0.)));
    }

    #[test]
    fn candidate_sets() {
        let c = caps();
        let pose = SensorPose::new(5., 5., 300., 0.);
        let s1 = candidate_locations(&pose, &c, 1);
        assert_eq!(s1.len(), 17);
        assert_eq!(s1[0], (5., 5.));
        let same = SensorCaps {
            move_step_distances: [20.0, 20.0],
            ..c
        };
        assert_eq!(candidate_locations(&pose, &same, 1).len(), 9);
    }

    #[test]
    fn candidate_two_step_matches_composition() {
        let c = caps();
        let pose = SensorPose::new(0., 0., 300., 0.);
        let s2 = candidate_locations(&pose, &c, 2);
        let mut brute = HashSet::new();
        for p1 in candidate_locations(&pose, &c, 1) {
            for p2 in candidate_locations(&pose.moved_to(p1, 0.), &c, 1) {
                brute.insert(point_key(p2));
            }
        }
        let got: HashSet<_> = s2.iter().map(|p| point_key(*p)).collect();
        assert_eq!(got, brute);
        assert_eq!(got.len(), s2.len());
    }

    #[test]
    fn heading_resolution() {
        assert_abs_diff_eq!(resolve_heading(0.0, 0.5, (0., 0.), (1., 0.3)), 0.3f64.atan2(1.0));
        assert_abs_diff_eq!(
            resolve_heading(0.2, PI / 4.0, (0., 0.), (-1., -(0.2f64).tan())),
            0.2 + PI / 4.0,
            epsilon = 1e-12
        );
        // prev = 3, desired = -3: short way is through the ±π seam.
        let desired = -3.0f64;
        let h = resolve_heading(3.0, 0.1, (0., 0.), (desired.cos(), desired.sin()));
        assert_abs_diff_eq!(h, wrap_angle(3.1), epsilon = 1e-12);
    }

    #[test]
    fn heading_wrap_dense_grid() {
        // Oracle: among all headings within max_turn of prev, pick the one
        // minimizing circular distance to the desired bearing.
        let max_turn = 0.4;
        for i in 0..72 {
            for j in 0..72 {
                let prev = -PI + (i as f64 + 0.5) * 2.0 * PI / 72.0;
                let desired = -PI + (j as f64 + 0.25) * 2.0 * PI / 72.0;
                let got = resolve_heading(prev, max_turn, (0., 0.), (desired.cos(), desired.sin()));
                let mut best = (f64::INFINITY, 0.0);
                for s in 0..=4000 {
                    let cand = prev - max_turn + 2.0 * max_turn * s as f64 / 4000.0;
                    let d = wrap_angle(desired - cand).abs();
                    if d < best.0 {
                        best = (d, cand);
                    }
                }
                assert!(wrap_angle(got - best.1).abs() < 1e-3, "prev {prev} desired {desired}");
                assert!(wrap_angle(got - prev).abs() <= max_turn + 1e-12);
            }
        }
    }
}
