//! Per-target extended Kalman filter bank.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{measure, measurement_jacobian, wrap_angle, CvModel, RangeBearing, SensorPose, TargetState};

/// Gaussian belief over one target's `[x, y, ẋ, ẏ]` state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBelief {
    pub target_id: usize,
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl TargetBelief {
    pub fn new(target_id: usize, mean: TargetState, cov: Matrix4<f64>) -> Self {
        TargetBelief {
            target_id,
            mean: mean.to_vector(),
            cov,
        }
    }

    pub fn state(&self) -> TargetState {
        TargetState::from_vector(&self.mean)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }
}

fn symmetrize4(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

pub fn ekf_predict(belief: &TargetBelief, model: &CvModel) -> TargetBelief {
    let (f, q) = model.cv_transition(1);
    TargetBelief {
        target_id: belief.target_id,
        mean: f * belief.mean,
        cov: symmetrize4(&(f * belief.cov * f.transpose() + q)),
    }
}

/// Kalman update for a given linearization: `h` is the measurement Jacobian and
/// `innovation` the (already wrapped) residual. Joseph-form covariance.
pub fn kalman_update(
    belief: &TargetBelief,
    h: &Matrix2x4<f64>,
    innovation: &Vector2<f64>,
    r: &Matrix2<f64>,
) -> Result<TargetBelief> {
    let s = h * belief.cov * h.transpose() + r;
    let s = (s + s.transpose()) * 0.5;
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularInnovation)?;
    let gain = belief.cov * h.transpose() * s_inv;
    let ikh = Matrix4::identity() - gain * h;
    let cov = ikh * belief.cov * ikh.transpose() + gain * r * gain.transpose();
    Ok(TargetBelief {
        target_id: belief.target_id,
        mean: belief.mean + gain * innovation,
        cov: symmetrize4(&cov),
    })
}

/// EKF update with a range-azimuth measurement taken from `pose`, linearized
/// at the predicted mean.
pub fn ekf_update(
    belief: &TargetBelief,
    pose: &SensorPose,
    z: &RangeBearing,
    r: &Matrix2<f64>,
) -> Result<TargetBelief> {
    let predicted = belief.state();
    let h = measurement_jacobian(pose, &predicted)?;
    let zhat = measure(pose, predicted.position());
    let innovation = Vector2::new(z.r - zhat.r, wrap_angle(z.phi - zhat.phi));
    kalman_update(belief, &h, &innovation, r)
}

/// One belief per target plus the absolute step index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackBank {
    pub beliefs: Vec<TargetBelief>,
    pub step: usize,
}

impl TrackBank {
    pub fn new(beliefs: Vec<TargetBelief>) -> Self {
        TrackBank { beliefs, step: 0 }
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn predict_all(&mut self, model: &CvModel) {
        for b in &mut self.beliefs {
            *b = ekf_predict(b, model);
        }
        self.step += 1;
    }
}

/// Open-loop prediction `k = 1..=K` steps ahead for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPrediction {
    pub means: Vec<Vector4<f64>>,
    pub covs: Vec<Matrix4<f64>>,
}

impl HorizonPrediction {
    /// Mean at horizon step `k` (1-based).
    pub fn mean(&self, k: usize) -> &Vector4<f64> {
        &self.means[k - 1]
    }

    pub fn cov(&self, k: usize) -> &Matrix4<f64> {
        &self.covs[k - 1]
    }
}

pub fn predict_horizon(bank: &TrackBank, model: &CvModel, horizon: usize) -> Vec<HorizonPrediction> {
    assert!(horizon >= 1, "prediction horizon must be at least 1");
    bank.beliefs
        .iter()
        .map(|b| {
            let mut cur = b.clone();
            let mut means = Vec::with_capacity(horizon);
            let mut covs = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                cur = ekf_predict(&cur, model);
                means.push(cur.mean);
                covs.push(cur.cov);
            }
            HorizonPrediction { means, covs }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn belief() -> TargetBelief {
        TargetBelief::new(
            0,
            TargetState::new(100., 50., 2., -1.),
            Matrix4::from_diagonal(&Vector4::new(400., 300., 4., 9.)),
        )
    }

    #[test]
    fn predict_noiseless_shift() {
        let b = belief();
        let p = ekf_predict(&b, &CvModel { dt: 1.0, q: 0.0 });
        assert_eq!(p.mean, Vector4::new(102., 49., 2., -1.));
        let (f, _) = CvModel { dt: 1.0, q: 0.0 }.cv_transition(1);
        assert_abs_diff_eq!(p.cov, f * b.cov * f.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn predict_identity_cov_by_hand() {
        let b = TargetBelief::new(0, TargetState::new(0., 0., 0., 0.), Matrix4::identity());
        let p = ekf_predict(&b, &CvModel { dt: 1.0, q: 1.0 });
        // F Fᵀ = [[2,0,1,0],[0,2,0,1],[1,0,1,0],[0,1,0,1]]; add Q.
        let expected = Matrix4::new(
            2. + 1. / 3., 0., 1.5, 0., //
            0., 2. + 1. / 3., 0., 1.5, //
            1.5, 0., 2., 0., //
            0., 1.5, 0., 2.,
        );
        assert_abs_diff_eq!(p.cov, expected, epsilon = 1e-14);
    }

    #[test]
    fn two_predicts_equal_two_step_transition() {
        let m = CvModel { dt: 0.5, q: 3.0 };
        let b = belief();
        let twice = ekf_predict(&ekf_predict(&b, &m), &m);
        let (f2, q2) = m.cv_transition(2);
        assert_abs_diff_eq!(twice.mean, f2 * b.mean, epsilon = 1e-10);
        assert_abs_diff_eq!(twice.cov, f2 * b.cov * f2.transpose() + q2, epsilon = 1e-10);
    }

    #[test]
    fn uninformative_measurement_leaves_prior() {
        let b = belief();
        let pose = SensorPose::new(0., 0., 500., 0.);
        let z = RangeBearing { r: 700.0, phi: 0.7 };
        let r = Matrix2::identity() * 1e12;
        let post = ekf_update(&b, &pose, &z, &r).unwrap();
        assert!((post.mean - b.mean).norm() < 1e-6);
    }

    #[test]
    fn update_never_increases_trace() {
        let b = belief();
        let pose = SensorPose::new(-50., 20., 500., 0.);
        for scale in [1e-4, 1e-2, 1.0, 100.0] {
            let r = Matrix2::new(25.0, 0.0, 0.0, 1e-4) * scale;
            let z = measure(&pose, (110., 40.));
            let post = ekf_update(&b, &pose, &z, &r).unwrap();
            assert!(post.cov.trace() <= b.cov.trace() + 1e-9);
            assert!(post.cov.symmetric_eigen().eigenvalues.min() > -1e-9);
        }
    }

    #[test]
    fn angle_seam_symmetric() {
        let b = TargetBelief::new(
            0,
            TargetState::new(-300., 1e-3, 0., 0.),
            Matrix4::from_diagonal(&Vector4::new(100., 100., 1., 1.)),
        );
        let pose = SensorPose::new(0., 0., 400., 0.);
        let r = Matrix2::new(4.0, 0.0, 0.0, 1e-4);
        let eps = 1e-3;
        let a = ekf_update(&b, &pose, &RangeBearing { r: 500.0, phi: std::f64::consts::PI - eps }, &r).unwrap();
        let c = ekf_update(
            &b,
            &pose,
            &RangeBearing { r: 500.0, phi: -std::f64::consts::PI - eps + 2.0 * std::f64::consts::PI },
            &r,
        )
        .unwrap();
        assert_abs_diff_eq!(a.mean, c.mean, epsilon = 1e-8);
        // Same geometry measured as -π + ε after wrap.
        let d = ekf_update(
            &b,
            &pose,
            &RangeBearing { r: 500.0, phi: wrap_angle(std::f64::consts::PI - eps) - 2.0 * std::f64::consts::PI },
            &r,
        )
        .unwrap();
        assert_abs_diff_eq!(a.mean, d.mean, epsilon = 1e-8);
        assert_abs_diff_eq!(a.cov, d.cov, epsilon = 1e-8);
    }

    #[test]
    fn horizon_matches_iterated_predicts() {
        let m = CvModel { dt: 1.0, q: 0.4 };
        let bank = TrackBank::new(vec![belief()]);
        let h = predict_horizon(&bank, &m, 4);
        let mut cur = belief();
        for k in 1..=4 {
            cur = ekf_predict(&cur, &m);
            assert_abs_diff_eq!(*h[0].mean(k), cur.mean, epsilon = 1e-10);
            assert_abs_diff_eq!(*h[0].cov(k), cur.cov, epsilon = 1e-10);
        }
        let h1 = predict_horizon(&bank, &m, 1);
        assert_eq!(h1[0].means[0], ekf_predict(&belief(), &m).mean);
    }

    #[test]
    fn horizon_noiseless_straight_line() {
        let m = CvModel { dt: 1.0, q: 0.0 };
        let bank = TrackBank::new(vec![belief()]);
        let h = predict_horizon(&bank, &m, 3);
        for k in 1..=3 {
            let kf = k as f64;
            assert_abs_diff_eq!(*h[0].mean(k), Vector4::new(100. + 2. * kf, 50. - kf, 2., -1.));
        }
    }
}
