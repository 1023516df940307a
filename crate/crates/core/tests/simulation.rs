mod common;

use smp_control::expansion::FeedbackGain;
use smp_control::montecarlo::{simulate, SimulationSpec, ThetaSchedule};
use smp_control::tensor::{Matrix, Vector};

#[test]
fn sample_mean_and_second_moment_match_family() {
    let draws = 100_000;
    for (name, dist) in common::theorem_instances() {
        let theta = common::ramp_theta(dist.parameter_dim());
        let (mean, cov) = dist.moments_at(&theta).unwrap();
        let second = dist.second_moment_at(&theta).unwrap();
        let mut r = common::rng(17);
        let size = mean.len();
        let mut acc = Vector::zeros(size);
        let mut acc2 = Matrix::zeros(size, size);
        for _ in 0..draws {
            let (a, b) = dist.sample_system(&theta, &mut r).unwrap();
            let v = Vector::from_iterator(size, a.iter().chain(b.iter()).copied());
            acc += &v;
            acc2 += &v * v.transpose();
        }
        let m = draws as f64;
        for i in 0..size {
            let sd = cov[(i, i)].sqrt();
            let tol = 5.0 * sd / m.sqrt() + 1e-9;
            assert!((acc[i] / m - mean[i]).abs() <= tol, "{name}: mean component {i}");
        }
        let err = (acc2 / m - &second).abs().max();
        assert!(err < 5e-3, "{name}: second moment off by {err}");
    }
}

#[test]
fn expanded_system_predicts_second_moment_on_short_horizon() {
    let x0 = Vector::from_row_slice(&[1.0, 1.0]);
    let gain = common::fixed_gain();
    for (name, dist) in common::theorem_instances() {
        let d = dist.parameter_dim();
        for theta in [
            ThetaSchedule::Constant {
                theta: common::ramp_theta(d),
            },
            ThetaSchedule::random(d, 15, 3),
        ] {
            let z = common::worst_z_score(&dist, &gain, &theta, &x0, 15, 4000, 5);
            assert!(z <= 5.0, "{name}: worst z-score {z}");
        }
    }
}

#[test]
fn single_path_is_reproducible() {
    let (_, dist) = common::theorem_instances().swap_remove(3);
    let spec = SimulationSpec {
        x0: Vector::from_row_slice(&[1.0, -0.5]),
        gain: Some(FeedbackGain::zeros(1, 2)),
        theta: ThetaSchedule::random(3, 20, 8),
        steps: 20,
        paths: 1,
        seed: 99,
    };
    let a = simulate(&dist, &spec).unwrap();
    let b = simulate(&dist, &spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.path_count(), 1);
}
