//! Monte Carlo simulation of the stochastic closed loop `x_{t+1} = (A_t − B_t K) x_t`.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path
//! index), and the draws inside a path are consumed in time order, so an
//! ensemble is bitwise reproducible regardless of how paths are scheduled
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SmpError};
use crate::expansion::{FeedbackGain, WeightSchedule};
use crate::model::{SmpVertexSet, UncertainMeanCov, WeightVector, SIMPLEX_TOL};
use crate::tensor::{self, half_dim, Matrix, SymMatrix, Vector};

/// Eigenvalues of a covariance down to this (relative) level are clamped to zero.
const COV_CLAMP: f64 = 1e-10;

/// Conditional Gaussian laws of `v = vec([A, B])` for the system classes
/// with an explicit SMP description.
#[derive(Debug, Clone, PartialEq)]
pub enum ParametricGaussian {
    /// `v ~ N(μ, Σ)` regardless of `θ`.
    Iid { n: usize, m: usize, mean: Vector, cov: Matrix },
    /// `v = Σ θ_i v^(i)`.
    DeterministicPolytope { n: usize, m: usize, vertices: Vec<Vector> },
    /// `v = Σ θ_i v_i` with independent `v_i ~ N(μ_i, Σ_i)`.
    RandomPolytope { n: usize, m: usize, means: Vec<Vector>, covs: Vec<Matrix> },
    /// `v ~ N(Σ θ_k μ^(k), Σ θ_k Σ^(k))`.
    UncertainMeanCov(UncertainMeanCov),
}

impl ParametricGaussian {
    pub fn n(&self) -> usize {
        match self {
            Self::Iid { n, .. } | Self::DeterministicPolytope { n, .. } | Self::RandomPolytope { n, .. } => *n,
            Self::UncertainMeanCov(u) => u.n,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Self::Iid { m, .. } | Self::DeterministicPolytope { m, .. } | Self::RandomPolytope { m, .. } => *m,
            Self::UncertainMeanCov(u) => u.m,
        }
    }

    /// Length of `θ`.
    pub fn parameter_dim(&self) -> usize {
        match self {
            Self::Iid { .. } => 1,
            Self::DeterministicPolytope { vertices, .. } => vertices.len(),
            Self::RandomPolytope { means, .. } => means.len(),
            Self::UncertainMeanCov(u) => u.means.len(),
        }
    }

    /// The SMP vertex set generated by this family.
    pub fn vertex_set(&self) -> Result<SmpVertexSet> {
        match self {
            Self::Iid { n, m, mean, cov } => SmpVertexSet::from_iid(*n, *m, &(mean * mean.transpose() + cov)),
            Self::DeterministicPolytope { n, m, vertices } => {
                SmpVertexSet::from_deterministic_polytope(*n, *m, vertices)
            }
            Self::RandomPolytope { n, m, means, covs } => {
                if means.len() != covs.len() {
                    return Err(dim_err("random polytope covariances", means.len(), covs.len()));
                }
                let d = means.len();
                let grid: Vec<Vec<Matrix>> = (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| {
                                let outer = &means[i] * means[j].transpose();
                                if i == j {
                                    outer + &covs[i]
                                } else {
                                    outer
                                }
                            })
                            .collect()
                    })
                    .collect();
                SmpVertexSet::from_random_polytope(*n, *m, &grid)
            }
            Self::UncertainMeanCov(u) => SmpVertexSet::from_uncertain_mean_cov(u),
        }
    }

    /// Mean and covariance of `v` given `θ`.
    pub fn moments_at(&self, theta: &[f64]) -> Result<(Vector, Matrix)> {
        let d = self.parameter_dim();
        if theta.len() != d {
            return Err(dim_err("θ", d, theta.len()));
        }
        check_simplex(theta)?;
        let size = self.n() * (self.n() + self.m());
        Ok(match self {
            Self::Iid { mean, cov, .. } => (mean.clone(), cov.clone()),
            Self::DeterministicPolytope { vertices, .. } => {
                let mut mean = Vector::zeros(size);
                for (t, v) in theta.iter().zip(vertices) {
                    mean += v * *t;
                }
                (mean, Matrix::zeros(size, size))
            }
            Self::RandomPolytope { means, covs, .. } => {
                let mut mean = Vector::zeros(size);
                let mut cov = Matrix::zeros(size, size);
                for ((t, mu), c) in theta.iter().zip(means).zip(covs) {
                    mean += mu * *t;
                    cov += c * (*t * *t);
                }
                (mean, cov)
            }
            Self::UncertainMeanCov(u) => (u.mean_at(theta), u.covariance_at(theta)),
        })
    }

    /// `E[v vᵀ | θ]`.
    pub fn second_moment_at(&self, theta: &[f64]) -> Result<Matrix> {
        let (mean, cov) = self.moments_at(theta)?;
        Ok(&mean * mean.transpose() + cov)
    }

    pub fn sampler_at(&self, theta: &[f64]) -> Result<GaussianSampler> {
        let (mean, cov) = self.moments_at(theta)?;
        GaussianSampler::new(mean, &cov)
    }

    /// Draws `(A, B)` for one step.
    pub fn sample_system<R: Rng>(&self, theta: &[f64], rng: &mut R) -> Result<(Matrix, Matrix)> {
        let v = self.sampler_at(theta)?.sample(rng);
        let n = self.n();
        let nn = n * n;
        Ok((
            Matrix::from_column_slice(n, n, &v.as_slice()[..nn]),
            Matrix::from_column_slice(n, self.m(), &v.as_slice()[nn..]),
        ))
    }
}

fn check_simplex(theta: &[f64]) -> Result<()> {
    let sum: f64 = theta.iter().sum();
    if theta.iter().any(|t| !t.is_finite() || *t < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(SmpError::InvalidWeights(format!("θ = {theta:?} is not in the simplex")));
    }
    Ok(())
}

/// `v = μ + R ξ` with `R Rᵀ = Σ` and `ξ` standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSampler {
    mean: Vector,
    root: Matrix,
    /// Columns of `root` that are not identically zero.
    active: Vec<usize>,
}

impl GaussianSampler {
    pub fn new(mean: Vector, cov: &Matrix) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(dim_err("covariance", mean.len(), cov.nrows()));
        }
        let eig = tensor::sym_eig(&SymMatrix::new(cov)?)?;
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        let mut root = eig.eigenvectors.clone();
        let mut active = Vec::new();
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -COV_CLAMP * scale {
                return Err(SmpError::Factorization(format!(
                    "covariance has eigenvalue {lam:e} below the clamp level"
                )));
            }
            let s = lam.max(0.0).sqrt();
            root.column_mut(j).scale_mut(s);
            if s > 0.0 {
                active.push(j);
            }
        }
        Ok(Self { mean, root, active })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vector {
        let mut v = self.mean.clone();
        for &j in &self.active {
            let xi: f64 = rng.sample(StandardNormal);
            v.axpy(xi, &self.root.column(j), 1.0);
        }
        v
    }
}

/// Uncertain parameter over time; shared by every path of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSchedule {
    Constant { theta: Vec<f64> },
    /// `thetas[t]` drives the step `t → t+1`.
    Sequence { thetas: Vec<Vec<f64>> },
}

impl ThetaSchedule {
    pub fn at(&self, t: usize) -> &[f64] {
        match self {
            ThetaSchedule::Constant { theta } => theta,
            ThetaSchedule::Sequence { thetas } => &thetas[t],
        }
    }

    pub fn check(&self, d: usize, steps: usize) -> Result<()> {
        let all: Vec<&Vec<f64>> = match self {
            ThetaSchedule::Constant { theta } => vec![theta],
            ThetaSchedule::Sequence { thetas } => {
                if thetas.len() < steps {
                    return Err(dim_err("θ sequence length", steps, thetas.len()));
                }
                thetas.iter().collect()
            }
        };
        for th in all {
            if th.len() != d {
                return Err(dim_err("θ", d, th.len()));
            }
            check_simplex(th)?;
        }
        Ok(())
    }

    /// The matching vertex-weight schedule of an SMP description.
    pub fn weights(&self, s: &SmpVertexSet) -> Result<WeightSchedule> {
        Ok(match self {
            ThetaSchedule::Constant { theta } => WeightSchedule::Constant(s.weights_for(theta)?),
            ThetaSchedule::Sequence { thetas } => WeightSchedule::Sequence(
                thetas.iter().map(|th| s.weights_for(th)).collect::<Result<Vec<WeightVector>>>()?,
            ),
        })
    }

    /// Uniform draws from the simplex, one per step.
    pub fn random(d: usize, steps: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas = (0..steps)
            .map(|_| {
                let e: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let sum: f64 = e.iter().sum();
                e.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        ThetaSchedule::Sequence { thetas }
    }

    /// Cycles through the simplex corners.
    pub fn switching_corners(d: usize, steps: usize) -> Self {
        let thetas = (0..steps)
            .map(|t| {
                let mut th = vec![0.0; d];
                th[t % d] = 1.0;
                th
            })
            .collect();
        ThetaSchedule::Sequence { thetas }
    }
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub x0: Vector,
    pub gain: Option<FeedbackGain>,
    pub theta: ThetaSchedule,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
}

/// `paths` sample paths of `x_0 … x_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    n: usize,
    steps: usize,
    paths: usize,
    /// `states[(path·(T+1) + t)·n + i]`.
    states: Vec<f64>,
    pub theta: ThetaSchedule,
    pub seed: u64,
    pub gain: Option<FeedbackGain>,
}

impl TrajectoryEnsemble {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.steps
    }

    pub fn path_count(&self) -> usize {
        self.paths
    }

    pub fn state(&self, path: usize, t: usize) -> &[f64] {
        let start = (path * (self.steps + 1) + t) * self.n;
        &self.states[start..start + self.n]
    }

    /// Sample mean of `vech(x_t x_tᵀ)` and its componentwise standard error.
    pub fn empirical_second_moment(&self, t: usize) -> Result<(Vector, Vector)> {
        if t > self.steps {
            return Err(SmpError::IndexOutOfRange {
                index: t,
                count: self.steps + 1,
            });
        }
        let nt = half_dim(self.n);
        let mut sum = vec![0.0; nt];
        let mut sumsq = vec![0.0; nt];
        for p in 0..self.paths {
            let x = self.state(p, t);
            let mut k = 0;
            for j in 0..self.n {
                for i in j..self.n {
                    let y = x[i] * x[j];
                    sum[k] += y;
                    sumsq[k] += y * y;
                    k += 1;
                }
            }
        }
        Ok(mean_and_stderr(&sum, &sumsq, self.paths))
    }

    /// Sample mean of `‖x_t‖²` and its standard error.
    pub fn mean_square_norm(&self, t: usize) -> (f64, f64) {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for p in 0..self.paths {
            let y: f64 = self.state(p, t).iter().map(|x| x * x).sum();
            sum += y;
            sumsq += y * y;
        }
        let (m, s) = mean_and_stderr(&[sum], &[sumsq], self.paths);
        (m[0], s[0])
    }
}

fn mean_and_stderr(sum: &[f64], sumsq: &[f64], count: usize) -> (Vector, Vector) {
    let c = count as f64;
    let mean = Vector::from_iterator(sum.len(), sum.iter().map(|s| s / c));
    let stderr = Vector::from_iterator(
        sum.len(),
        sum.iter().zip(sumsq).map(|(s, q)| {
            if count < 2 {
                return 0.0;
            }
            let var = ((q - s * s / c) / (c - 1.0)).max(0.0);
            (var / c).sqrt()
        }),
    );
    (mean, stderr)
}

#[allow(clippy::too_many_arguments)]
fn run_path(samplers: &[GaussianSampler], constant: bool, n: usize, m: usize, k: &Matrix, seed: u64, path: usize, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    let steps = out.len() / n - 1;
    let nn = n * n;
    let mut u = vec![0.0; m];
    for t in 0..steps {
        let sampler = if constant { &samplers[0] } else { &samplers[t] };
        let v = sampler.sample(&mut rng);
        let (cur, next) = out[t * n..(t + 2) * n].split_at_mut(n);
        for (r, ur) in u.iter_mut().enumerate() {
            *ur = (0..n).map(|j| k[(r, j)] * cur[j]).sum();
        }
        for (i, xi) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += v[j * n + i] * cur[j];
            }
            for (r, ur) in u.iter().enumerate() {
                acc -= v[nn + r * n + i] * ur;
            }
            *xi = acc;
        }
    }
}

/// Samples `spec.paths` independent closed-loop paths.
pub fn simulate(dist: &ParametricGaussian, spec: &SimulationSpec) -> Result<TrajectoryEnsemble> {
    let (n, m) = (dist.n(), dist.m());
    if spec.paths == 0 {
        return Err(SmpError::OutOfRange {
            name: "paths".into(),
            reason: "at least one path is required".into(),
        });
    }
    if spec.x0.len() != n {
        return Err(dim_err("x0", n, spec.x0.len()));
    }
    let k = match &spec.gain {
        Some(g) => {
            if g.matrix().shape() != (m, n) {
                return Err(dim_err("gain", format!("{m}x{n}"), format!("{}x{}", g.m(), g.n())));
            }
            g.matrix().clone()
        }
        None => Matrix::zeros(m, n),
    };
    spec.theta.check(dist.parameter_dim(), spec.steps)?;
    let constant = matches!(spec.theta, ThetaSchedule::Constant { .. });
    let samplers: Vec<GaussianSampler> = if constant {
        vec![dist.sampler_at(spec.theta.at(0))?]
    } else {
        (0..spec.steps).map(|t| dist.sampler_at(spec.theta.at(t))).collect::<Result<_>>()?
    };
    let stride = (spec.steps + 1) * n;
    let mut states = vec![0.0; spec.paths * stride];
    for chunk in states.chunks_mut(stride) {
        chunk[..n].copy_from_slice(spec.x0.as_slice());
    }
    let work = |(path, chunk): (usize, &mut [f64])| run_path(&samplers, constant, n, m, &k, spec.seed, path, chunk);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        states.par_chunks_mut(stride).enumerate().for_each(work);
    }
    #[cfg(not(feature = "parallel"))]
    states.chunks_mut(stride).enumerate().for_each(work);
    Ok(TrajectoryEnsemble {
        n,
        steps: spec.steps,
        paths: spec.paths,
        states,
        theta: spec.theta.clone(),
        seed: spec.seed,
        gain: spec.gain.clone(),
    })
}

/// Least-squares fit of `log √E‖x_t‖²` against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `exp(slope)`.
    pub beta_hat: f64,
    /// `exp(intercept)`, an empirical stand-in for the constant in the rate bound.
    pub alpha_hat: f64,
    pub r_squared: f64,
    pub t_start: usize,
    pub t_end: usize,
}

/// Fits the decay rate of `√E‖x_t‖²` over `t_start..=t_end` (whole horizon by default).
pub fn estimate_decay_rate(ens: &TrajectoryEnsemble, window: Option<(usize, usize)>) -> Result<DecayFit> {
    let series: Vec<f64> = (0..=ens.horizon()).map(|t| ens.mean_square_norm(t).0).collect();
    fit_decay(&series, window)
}

/// Same fit on a given series of mean-square norms `E‖x_t‖²`.
pub fn fit_decay(mean_square: &[f64], window: Option<(usize, usize)>) -> Result<DecayFit> {
    let horizon = mean_square.len().saturating_sub(1);
    let (t0, t1) = window.unwrap_or((0, horizon));
    if t1 > horizon || t1 <= t0 {
        return Err(SmpError::OutOfRange {
            name: "window".into(),
            reason: format!("({t0}, {t1}) is not a valid window for horizon {horizon}"),
        });
    }
    let mut pts = Vec::with_capacity(t1 - t0 + 1);
    for (t, &ms) in mean_square.iter().enumerate().take(t1 + 1).skip(t0) {
        if !(ms > 0.0) || !ms.is_finite() {
            return Err(SmpError::Degenerate(format!("E‖x_{t}‖² = {ms:e} is not positive")));
        }
        pts.push((t as f64, 0.5 * ms.ln()));
    }
    let count = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / count;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        beta_hat: slope.exp(),
        alpha_hat: intercept.exp(),
        r_squared,
        t_start: t0,
        t_end: t1,
    })
}
