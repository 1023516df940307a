#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use smp_control::expansion::{block_moment_matrices, lift_state, FeedbackGain};
use smp_control::benchmark;
use smp_control::montecarlo::{simulate, ParametricGaussian, SimulationSpec, ThetaSchedule};
use smp_control::tensor::{Matrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

/// `X Xᵀ` for a square Gaussian `X`, optionally low rank.
pub fn random_psd(r: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let x = gaussian_matrix(r, n, rank);
    &x * x.transpose()
}

/// A Gaussian matrix pushed away from singularity.
pub fn well_conditioned(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    gaussian_matrix(r, n, n) + Matrix::identity(n, n) * (2.0 + n as f64)
}

pub fn theorem_instances() -> Vec<(&'static str, ParametricGaussian)> {
    benchmark::gaussian_family_examples()
}

pub fn fixed_gain() -> FeedbackGain {
    benchmark::example_gain()
}

pub fn ramp_theta(d: usize) -> Vec<f64> {
    benchmark::ramp_theta(d)
}

/// Largest `|MC − expanded| / stderr` over every component and `t ≤ steps`.
/// Components with zero stderr must match to 1e-9 (relative) or the result is infinite.
pub fn worst_z_score(
    dist: &ParametricGaussian,
    gain: &FeedbackGain,
    theta: &ThetaSchedule,
    x0: &Vector,
    steps: usize,
    paths: usize,
    seed: u64,
) -> f64 {
    let s = dist.vertex_set().unwrap();
    let e = block_moment_matrices(&s);
    let traj = e
        .propagate(&theta.weights(&s).unwrap(), gain, &lift_state(x0), steps)
        .unwrap();
    let ens = simulate(
        dist,
        &SimulationSpec {
            x0: x0.clone(),
            gain: Some(gain.clone()),
            theta: theta.clone(),
            steps,
            paths,
            seed,
        },
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for t in 0..=steps {
        let (mean, se) = ens.empirical_second_moment(t).unwrap();
        for i in 0..mean.len() {
            let diff = (mean[i] - traj.states[t][i]).abs();
            if se[i] > 0.0 {
                worst = worst.max(diff / se[i]);
            } else if diff > 1e-9 * (1.0 + traj.states[t][i].abs()) {
                worst = f64::INFINITY;
            }
        }
    }
    worst
}

pub fn max_abs<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}
