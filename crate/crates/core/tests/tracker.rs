use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sensorgame::models::{measure, wrap_angle, CvModel, RangeBearing, SensorPose, TargetState};
use sensorgame::tracker::{ekf_predict, ekf_update, TargetBelief};

fn gaussian4(rng: &mut ChaCha8Rng, cov: &Matrix4<f64>) -> Vector4<f64> {
    let l = cov.cholesky().unwrap().l();
    l * Vector4::from_fn(|_, _| StandardNormal.sample(rng))
}

/// Average normalized estimation error squared over many runs stays close to
/// the state dimension when the filter model matches the truth.
#[test]
fn nees_is_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = CvModel { dt: 1.0, q: 0.1 };
    let (f, q) = model.cv_transition(1);
    let pose = SensorPose::new(0.0, 0.0, 300.0, 0.0);
    let r = Matrix2::new(4.0, 0.0, 0.0, 0.003f64.powi(2));
    let p0 = Matrix4::from_diagonal(&Vector4::new(25.0, 25.0, 1.0, 1.0));
    let (runs, steps) = (200, 40);
    let mut total = 0.0;
    let mut count = 0.0;
    for _ in 0..runs {
        let mut truth = Vector4::new(400.0, 100.0, -2.0, 3.0);
        let mut belief = TargetBelief::new(0, TargetState::from_vector(&(truth + gaussian4(&mut rng, &p0))), p0);
        for k in 0..steps {
            truth = f * truth + gaussian4(&mut rng, &q);
            belief = ekf_predict(&belief, &model);
            let clean = measure(&pose, (truth[0], truth[1]));
            let noise = r.map(f64::sqrt) * Vector2::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let z = RangeBearing {
                r: clean.r + noise[0],
                phi: wrap_angle(clean.phi + noise[1]),
            };
            belief = ekf_update(&belief, &pose, &z, &r).unwrap();
            if k >= steps / 2 {
                let e = truth - belief.mean;
                total += (e.transpose() * belief.cov.try_inverse().unwrap() * e)[0];
                count += 1.0;
            }
        }
    }
    let nees = total / count;
    assert!((3.6..=4.4).contains(&nees), "average NEES {nees}");
}

#[test]
fn update_shrinks_uncertainty_along_measured_directions() {
    let model = CvModel { dt: 1.0, q: 0.5 };
    let pose = SensorPose::new(0.0, 0.0, 250.0, 0.0);
    let prior = TargetBelief::new(
        0,
        TargetState::new(300.0, 50.0, 1.0, 0.0),
        Matrix4::from_diagonal(&Vector4::new(100.0, 100.0, 4.0, 4.0)),
    );
    let predicted = ekf_predict(&prior, &model);
    let z = measure(&pose, predicted.position());
    let r = Matrix2::new(1.0, 0.0, 0.0, 1e-4);
    let post = ekf_update(&predicted, &pose, &z, &r).unwrap();
    assert!(post.cov.trace() < predicted.cov.trace());
    // A measurement equal to its prediction leaves the mean unchanged.
    assert!((post.mean - predicted.mean).amax() < 1e-9);
    assert!(post.cov.symmetric_eigenvalues().iter().all(|v| *v > 0.0));
}
