//! A two-state, one-input system with uncertain mean and covariance.
//!
//! `v = vec([A, B])` is Gaussian with mean `Σ θ_k μ^(k)` and covariance
//! `Σ θ_k Σ^(k)`, `θ` in the 3-simplex. The mean drift matrix is an upper
//! triangular Jordan-like block whose diagonal ranges over 0.9–1.05, so
//! the open loop is not mean-square stable.

use crate::expansion::FeedbackGain;
use crate::model::{SmpVertexSet, UncertainMeanCov};
use crate::montecarlo::ParametricGaussian;
use crate::tensor::{Matrix, Vector};

/// Default design parameters used with this system.
pub const BETA_TILDE: f64 = 0.97;
pub const ETA: f64 = 0.1;
pub const Z_UB: f64 = 10.0;
pub const DELTA: f64 = 1e-8;
pub const X0: [f64; 2] = [1.0, 1.0];

fn equicorrelated(size: usize, diag: f64, off: f64) -> Matrix {
    Matrix::from_fn(size, size, |i, j| if i == j { diag } else { off })
}

fn v6(x: [f64; 6]) -> Vector {
    Vector::from_row_slice(&x)
}

/// Mean and covariance vertices of the benchmark.
pub fn uncertain_mean_cov_benchmark() -> UncertainMeanCov {
    let means = [
        [0.90, 0.0, 0.2, 0.9, 0.0, 1.0],
        [1.00, 0.0, 0.2, 0.9, 0.0, 0.8],
        [1.05, 0.0, 0.2, 0.9, 0.0, 1.2],
    ];
    UncertainMeanCov {
        n: 2,
        m: 1,
        means: means.iter().map(|m| Vector::from_row_slice(m)).collect(),
        covariances: vec![
            equicorrelated(6, 0.06, -0.01),
            equicorrelated(6, 0.02, 0.01),
            equicorrelated(6, 0.01, 0.0),
        ],
    }
}

pub fn benchmark_vertex_set() -> SmpVertexSet {
    SmpVertexSet::from_uncertain_mean_cov(&uncertain_mean_cov_benchmark()).expect("benchmark data is valid")
}

pub fn benchmark_x0() -> Vector {
    Vector::from_row_slice(&X0)
}

/// One moderate-noise two-state, one-input instance of each Gaussian family,
/// used to check the expanded system against Monte Carlo estimates.
pub fn gaussian_family_examples() -> Vec<(&'static str, ParametricGaussian)> {
    vec![
        (
            "iid",
            ParametricGaussian::Iid {
                n: 2,
                m: 1,
                mean: v6([0.8, 0.1, 0.2, 0.9, 0.3, 1.0]),
                cov: equicorrelated(6, 0.02, 0.005),
            },
        ),
        (
            "deterministic_polytope",
            ParametricGaussian::DeterministicPolytope {
                n: 2,
                m: 1,
                vertices: vec![
                    v6([0.9, 0.0, 0.3, 0.8, 0.0, 1.0]),
                    v6([0.6, 0.2, 0.1, 1.0, 0.5, 0.8]),
                    v6([1.0, -0.1, 0.2, 0.7, 0.2, 1.2]),
                ],
            },
        ),
        (
            "random_polytope",
            ParametricGaussian::RandomPolytope {
                n: 2,
                m: 1,
                means: vec![v6([0.9, 0.0, 0.3, 0.8, 0.0, 1.0]), v6([0.6, 0.2, 0.1, 1.0, 0.5, 0.8])],
                covs: vec![equicorrelated(6, 0.02, 0.0), equicorrelated(6, 0.03, 0.01)],
            },
        ),
        (
            "uncertain_mean_cov",
            ParametricGaussian::UncertainMeanCov(UncertainMeanCov {
                n: 2,
                m: 1,
                means: vec![
                    v6([0.9, 0.0, 0.2, 0.9, 0.0, 1.0]),
                    v6([1.0, 0.0, 0.2, 0.9, 0.0, 0.8]),
                    v6([1.05, 0.0, 0.2, 0.9, 0.0, 1.2]),
                ],
                covariances: vec![
                    equicorrelated(6, 0.03, -0.005),
                    equicorrelated(6, 0.02, 0.005),
                    equicorrelated(6, 0.01, 0.0),
                ],
            }),
        ),
    ]
}

/// Fixed gain used with [`gaussian_family_examples`].
pub fn example_gain() -> FeedbackGain {
    FeedbackGain::new(Matrix::from_row_slice(1, 2, &[0.3, 0.5])).expect("1x2 gain")
}

/// `θ` with weights proportional to `1, 2, …, d`.
pub fn ramp_theta(d: usize) -> Vec<f64> {
    let total = (d * (d + 1) / 2) as f64;
    (1..=d).map(|i| i as f64 / total).collect()
}
