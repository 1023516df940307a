//! Second-moment polytopic (SMP) vertex sets and their constructors.
//!
//! An SMP system is described by symmetric vertices `M^(k)` of size
//! `n(n+m)` and a weight map `φ` from the uncertain parameter `θ` into the
//! probability simplex, such that `E[v vᵀ | θ] = Σ_k φ(θ)_k M^(k)` with
//! `v = vec([A, B])`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SmpError};
use crate::tensor::{self, Matrix, SymMatrix, Vector};

/// Tolerance for simplex membership of `θ`.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Tolerance for weight vectors in `ℙ_N`.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;
const WEIGHT_NEG_TOL: f64 = 1e-12;

/// Whether the uncertain parameter is constant in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeVariation {
    #[default]
    #[serde(alias = "TI")]
    Ti,
    #[serde(alias = "TV")]
    Tv,
}

/// How the uncertain parameter `θ` is mapped onto vertex weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightMap {
    /// `φ(θ) ≡ 1`; a single vertex.
    Constant,
    /// `φ(θ) = θ` with `θ` in the `d`-simplex.
    Identity { d: usize },
    /// `φ(θ) = vec(θθᵀ)` with `θ` in the `d`-simplex (`N = d²`).
    Quadratic { d: usize },
    /// Weights are supplied directly as points of `ℙ_N`.
    Direct,
}

impl WeightMap {
    /// Length of the parameter `θ` this map expects.
    pub fn parameter_dim(&self, vertex_count: usize) -> usize {
        match *self {
            WeightMap::Constant => 1,
            WeightMap::Identity { d } | WeightMap::Quadratic { d } => d,
            WeightMap::Direct => vertex_count,
        }
    }

    pub fn apply(&self, theta: &[f64], vertex_count: usize) -> Result<WeightVector> {
        match *self {
            WeightMap::Constant => Ok(WeightVector::single()),
            WeightMap::Identity { d } => {
                if theta.len() != d {
                    return Err(dim_err("weight map θ", d, theta.len()));
                }
                WeightVector::new(check_simplex(theta)?)
            }
            WeightMap::Quadratic { d } => {
                if theta.len() != d {
                    return Err(dim_err("weight map θ", d, theta.len()));
                }
                phi_quadratic(theta)
            }
            WeightMap::Direct => {
                if theta.len() != vertex_count {
                    return Err(dim_err("direct weights", vertex_count, theta.len()));
                }
                WeightVector::new(theta.to_vec())
            }
        }
    }
}

/// A point of the probability simplex `ℙ_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates the weights; entries above `-1e-12` are clamped to zero.
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SmpError::InvalidWeights("empty weight vector".into()));
        }
        for (k, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(SmpError::InvalidWeights(format!("weight {k} is not finite")));
            }
            if *w < 0.0 {
                if *w < -WEIGHT_NEG_TOL {
                    return Err(SmpError::InvalidWeights(format!("weight {k} = {w} is negative")));
                }
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(SmpError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn single() -> Self {
        Self(vec![1.0])
    }

    /// The `k`-th simplex corner.
    pub fn corner(n: usize, k: usize) -> Self {
        let mut w = vec![0.0; n];
        w[k] = 1.0;
        Self(w)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_simplex(theta: &[f64]) -> Result<Vec<f64>> {
    if theta.is_empty() {
        return Err(SmpError::InvalidWeights("empty parameter vector".into()));
    }
    let mut out = theta.to_vec();
    for (i, t) in out.iter_mut().enumerate() {
        if !t.is_finite() || *t < -SIMPLEX_TOL {
            return Err(SmpError::InvalidWeights(format!(
                "θ[{i}] = {t} lies outside the simplex"
            )));
        }
        if *t < 0.0 {
            *t = 0.0;
        }
    }
    let sum: f64 = out.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(SmpError::InvalidWeights(format!("θ sums to {sum}, not 1")));
    }
    Ok(out)
}

/// `φ(θ) = vec(θθᵀ)`: entry `j·d + i` (zero-based) is `θ_i θ_j`.
pub fn phi_quadratic(theta: &[f64]) -> Result<WeightVector> {
    let theta = check_simplex(theta)?;
    let d = theta.len();
    let mut w = vec![0.0; d * d];
    for j in 0..d {
        for i in 0..d {
            w[j * d + i] = theta[i] * theta[j];
        }
    }
    // (Σθ)² may drift from 1 by a few ulps after clamping
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        w.iter_mut().for_each(|x| *x /= sum);
    }
    WeightVector::new(w)
}

/// Vertex description of an SMP system.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpVertexSet {
    n: usize,
    m: usize,
    vertices: Vec<Matrix>,
    time_variation: TimeVariation,
    weight_map: WeightMap,
}

impl SmpVertexSet {
    /// Builds a vertex set, symmetrizing each vertex on the way in.
    pub fn new(
        n: usize,
        m: usize,
        vertices: Vec<Matrix>,
        time_variation: TimeVariation,
        weight_map: WeightMap,
    ) -> Result<Self> {
        if n == 0 {
            return Err(SmpError::OutOfRange {
                name: "n".into(),
                reason: "state dimension must be at least 1".into(),
            });
        }
        if vertices.is_empty() {
            return Err(SmpError::InvalidInput("an SMP system needs at least one vertex".into()));
        }
        let size = n * (n + m);
        let mut sym = Vec::with_capacity(vertices.len());
        for (k, v) in vertices.iter().enumerate() {
            if v.shape() != (size, size) {
                return Err(dim_err(
                    &format!("vertex {k}"),
                    format!("{size}x{size}"),
                    format!("{}x{}", v.nrows(), v.ncols()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SmpError::InvalidInput(format!("vertex {k} has non-finite entries")));
            }
            sym.push(SymMatrix::new(v)?.into_matrix());
        }
        let expected = match weight_map {
            WeightMap::Constant => 1,
            WeightMap::Identity { d } => d,
            WeightMap::Quadratic { d } => d * d,
            WeightMap::Direct => sym.len(),
        };
        if expected != sym.len() {
            return Err(dim_err("vertex count for weight map", expected, sym.len()));
        }
        Ok(Self {
            n,
            m,
            vertices: sym,
            time_variation,
            weight_map,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `n(n+m)`, the length of `v = vec([A, B])`.
    pub fn moment_dim(&self) -> usize {
        self.n * (self.n + self.m)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Matrix] {
        &self.vertices
    }

    pub fn vertex(&self, k: usize) -> &Matrix {
        &self.vertices[k]
    }

    pub fn time_variation(&self) -> TimeVariation {
        self.time_variation
    }

    pub fn weight_map(&self) -> WeightMap {
        self.weight_map
    }

    pub fn with_time_variation(mut self, tv: TimeVariation) -> Self {
        self.time_variation = tv;
        self
    }

    /// Weights `φ(θ)` for a parameter value.
    pub fn weights_for(&self, theta: &[f64]) -> Result<WeightVector> {
        self.weight_map.apply(theta, self.vertices.len())
    }

    /// `Σ_k w_k M^(k)`.
    pub fn weighted_moment(&self, w: &WeightVector) -> Result<Matrix> {
        if w.len() != self.vertices.len() {
            return Err(dim_err("weight vector", self.vertices.len(), w.len()));
        }
        let size = self.moment_dim();
        let mut out = Matrix::zeros(size, size);
        for (wk, mk) in w.as_slice().iter().zip(&self.vertices) {
            if *wk != 0.0 {
                out += mk * *wk;
            }
        }
        Ok(out)
    }

    /// Diagnostics for an already-built vertex set (symmetry holds by construction).
    pub fn validate(&self) -> ValidationReport {
        validate_vertices(self.n, self.m, &self.vertices)
    }

    /// i.i.d. system: a single vertex `E[v vᵀ]`, `φ ≡ 1`.
    pub fn from_iid(n: usize, m: usize, second_moment: &Matrix) -> Result<Self> {
        check_moment_dim(n, m, second_moment.nrows(), "second moment")?;
        Self::new(
            n,
            m,
            vec![second_moment.clone()],
            TimeVariation::Ti,
            WeightMap::Constant,
        )
    }

    /// Deterministic polytope with vertices `v^(1..d)`:
    /// `M^(d·j + i) = (v_i v_jᵀ + v_j v_iᵀ)/2` (zero-based), `φ(θ) = vec(θθᵀ)`.
    pub fn from_deterministic_polytope(n: usize, m: usize, vertex_vectors: &[Vector]) -> Result<Self> {
        let d = vertex_vectors.len();
        if d == 0 {
            return Err(SmpError::InvalidInput("no polytope vertices given".into()));
        }
        for (k, v) in vertex_vectors.iter().enumerate() {
            check_moment_dim(n, m, v.len(), &format!("polytope vertex {k}"))?;
        }
        let mut vertices = Vec::with_capacity(d * d);
        for j in 0..d {
            for i in 0..d {
                let vi = &vertex_vectors[i];
                let vj = &vertex_vectors[j];
                vertices.push((vi * vj.transpose() + vj * vi.transpose()) * 0.5);
            }
        }
        Self::new(n, m, vertices, TimeVariation::Ti, WeightMap::Quadratic { d })
    }

    /// Random polytope: `grid[i][j] = E[v_i v_jᵀ]` for the stochastic vertices,
    /// `M^(d·j + i) = (E[v_i v_jᵀ] + E[v_j v_iᵀ])/2`.
    pub fn from_random_polytope(n: usize, m: usize, cross_moments: &[Vec<Matrix>]) -> Result<Self> {
        let d = cross_moments.len();
        if d == 0 {
            return Err(SmpError::InvalidInput("empty cross-moment grid".into()));
        }
        for (i, row) in cross_moments.iter().enumerate() {
            if row.len() != d {
                return Err(dim_err(&format!("cross-moment grid row {i}"), d, row.len()));
            }
            for (j, e) in row.iter().enumerate() {
                if e.nrows() != e.ncols() {
                    return Err(SmpError::NotSquare {
                        rows: e.nrows(),
                        cols: e.ncols(),
                    });
                }
                check_moment_dim(n, m, e.nrows(), &format!("cross moment ({i},{j})"))?;
            }
        }
        let mut vertices = Vec::with_capacity(d * d);
        for j in 0..d {
            for (i, row) in cross_moments.iter().enumerate() {
                vertices.push((&row[j] + &cross_moments[j][i]) * 0.5);
            }
        }
        Self::new(n, m, vertices, TimeVariation::Ti, WeightMap::Quadratic { d })
    }

    /// Uncertain mean and covariance, both affine in `θ`.
    ///
    /// The second moment expands to
    /// `Σ_i Σ_j θ_i θ_j (μ_i μ_jᵀ + μ_j μ_iᵀ)/2 + (Σ_j θ_j) Σ_i θ_i Σ_i`,
    /// so vertex `d·j + i` (zero-based) is `(μ_i μ_jᵀ + μ_j μ_iᵀ)/2 + Σ_i`.
    /// The covariance carries only the index `i`: summing `θ_i θ_j` over `j`
    /// returns the affine weight `θ_i`.
    pub fn from_uncertain_mean_cov(u: &UncertainMeanCov) -> Result<Self> {
        u.check()?;
        let d = u.means.len();
        let mut vertices = Vec::with_capacity(d * d);
        for j in 0..d {
            for i in 0..d {
                let mi = &u.means[i];
                let mj = &u.means[j];
                vertices.push((mi * mj.transpose() + mj * mi.transpose()) * 0.5 + &u.covariances[i]);
            }
        }
        Self::new(u.n, u.m, vertices, TimeVariation::Ti, WeightMap::Quadratic { d })
    }

    /// Constant mean with covariance affine in `θ`: `M^(k) = μμᵀ + Σ^(k)`, `φ(θ) = θ`.
    pub fn from_mean_cov_polytope(n: usize, m: usize, mean: &Vector, covariances: &[Matrix]) -> Result<Self> {
        check_moment_dim(n, m, mean.len(), "mean")?;
        if covariances.is_empty() {
            return Err(SmpError::InvalidInput("no covariance vertices given".into()));
        }
        let outer = mean * mean.transpose();
        let vertices = covariances.iter().map(|c| &outer + c).collect();
        Self::new(
            n,
            m,
            vertices,
            TimeVariation::Ti,
            WeightMap::Identity { d: covariances.len() },
        )
    }
}

fn check_moment_dim(n: usize, m: usize, len: usize, what: &str) -> Result<()> {
    let size = n * (n + m);
    if len != size {
        return Err(dim_err(&format!("{what} (n={n}, m={m})"), size, len));
    }
    Ok(())
}

/// Mean vectors and covariance matrices that are affine in `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainMeanCov {
    pub n: usize,
    pub m: usize,
    pub means: Vec<Vector>,
    pub covariances: Vec<Matrix>,
}

impl UncertainMeanCov {
    pub fn parameter_dim(&self) -> usize {
        self.means.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(SmpError::InvalidInput("uncertain mean/covariance needs d_θ ≥ 1".into()));
        }
        if self.means.len() != self.covariances.len() {
            return Err(dim_err(
                "covariance count",
                self.means.len(),
                self.covariances.len(),
            ));
        }
        for (k, mu) in self.means.iter().enumerate() {
            check_moment_dim(self.n, self.m, mu.len(), &format!("mean {k}"))?;
        }
        for (k, c) in self.covariances.iter().enumerate() {
            let size = self.n * (self.n + self.m);
            if c.shape() != (size, size) {
                return Err(dim_err(
                    &format!("covariance {k}"),
                    format!("{size}x{size}"),
                    format!("{}x{}", c.nrows(), c.ncols()),
                ));
            }
            let min = tensor::min_eigenvalue(c)?;
            if min < -1e-10 {
                return Err(SmpError::InvalidInput(format!(
                    "covariance {k} is not PSD (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(())
    }

    /// Mean `Σ θ_k μ^(k)`.
    pub fn mean_at(&self, theta: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.n * (self.n + self.m));
        for (t, mu) in theta.iter().zip(&self.means) {
            out += mu * *t;
        }
        out
    }

    /// Covariance `Σ θ_k Σ^(k)`.
    pub fn covariance_at(&self, theta: &[f64]) -> Matrix {
        let size = self.n * (self.n + self.m);
        let mut out = Matrix::zeros(size, size);
        for (t, c) in theta.iter().zip(&self.covariances) {
            out += c * *t;
        }
        out
    }
}

/// Outcome of [`validate_vertices`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub dimension_errors: Vec<String>,
    pub symmetry_violations: Vec<SymmetryViolation>,
    /// Minimum eigenvalue per vertex; negative values are informational.
    pub vertex_min_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryViolation {
    pub vertex: usize,
    pub row: usize,
    pub col: usize,
    pub difference: f64,
}

impl ValidationReport {
    /// Symmetry and dimensions are hard requirements; PSD status is not.
    pub fn is_ok(&self) -> bool {
        self.dimension_errors.is_empty() && self.symmetry_violations.is_empty()
    }

    pub fn non_psd_vertices(&self) -> Vec<usize> {
        self.vertex_min_eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &e)| e < -1e-8)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Checks raw (not yet symmetrized) vertices.
pub fn validate_vertices(n: usize, m: usize, vertices: &[Matrix]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let size = n * (n + m);
    if n == 0 {
        report.dimension_errors.push("state dimension n must be at least 1".into());
    }
    if vertices.is_empty() {
        report.dimension_errors.push("no vertices".into());
    }
    for (k, v) in vertices.iter().enumerate() {
        if v.shape() != (size, size) {
            report.dimension_errors.push(format!(
                "vertex {k}: expected {size}x{size}, got {}x{}",
                v.nrows(),
                v.ncols()
            ));
            report.vertex_min_eigenvalues.push(f64::NAN);
            continue;
        }
        let scale = v.amax().max(1.0);
        for j in 0..size {
            for i in (j + 1)..size {
                let diff = v[(i, j)] - v[(j, i)];
                if !(diff.abs() <= 1e-12 * scale) {
                    report.symmetry_violations.push(SymmetryViolation {
                        vertex: k,
                        row: j,
                        col: i,
                        difference: diff,
                    });
                }
            }
        }
        let min = SymMatrix::new(v)
            .and_then(|s| tensor::sym_eig(&s))
            .map(|e| e.min_eigenvalue())
            .unwrap_or(f64::NAN);
        report.vertex_min_eigenvalues.push(min);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_quadratic_cases() {
        let w = phi_quadratic(&[1.0, 0.0]).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let w = phi_quadratic(&[0.5, 0.5]).unwrap();
        assert_eq!(w.as_slice(), &[0.25; 4]);
        assert!(phi_quadratic(&[0.7, 0.7]).is_err());
        assert!(phi_quadratic(&[1.1, -0.1]).is_err());
        // tiny negatives are clamped
        let w = phi_quadratic(&[1.0 + 5e-10, -5e-10]).unwrap();
        assert!(w.as_slice().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn weight_vector_rules() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.0 + 1e-12, -1e-13]).is_ok());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn iid_identity() {
        let s = SmpVertexSet::from_iid(2, 1, &Matrix::identity(6, 6)).unwrap();
        assert_eq!(s.vertex_count(), 1);
        assert_eq!(s.vertex(0), &Matrix::identity(6, 6));
        assert!(SmpVertexSet::from_iid(2, 2, &Matrix::identity(6, 6)).is_err());
    }

    #[test]
    fn iid_rank_one() {
        let mu = Vector::from_vec(vec![1., 0., 0., 1., 0., 0.]);
        let s = SmpVertexSet::from_iid(2, 1, &(&mu * mu.transpose())).unwrap();
        let e = tensor::sym_eig(&SymMatrix::new(s.vertex(0)).unwrap()).unwrap();
        assert!((e.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!(e.eigenvalues.iter().skip(1).all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn deterministic_single_vertex() {
        let v = Vector::from_vec(vec![1., 0., 0., 1., 0., 0.]);
        let s = SmpVertexSet::from_deterministic_polytope(2, 1, std::slice::from_ref(&v)).unwrap();
        assert_eq!(s.vertex_count(), 1);
        assert_eq!(s.vertex(0), &(&v * v.transpose()));
    }

    #[test]
    fn random_polytope_identity_grid() {
        let i6 = Matrix::identity(6, 6);
        let z6 = Matrix::zeros(6, 6);
        let grid = vec![vec![i6.clone(), z6.clone()], vec![z6.clone(), i6.clone()]];
        let s = SmpVertexSet::from_random_polytope(2, 1, &grid).unwrap();
        assert_eq!(s.vertex(0), &i6);
        assert_eq!(s.vertex(3), &i6);
        assert_eq!(s.vertex(1), &z6);
        assert_eq!(s.vertex(2), &z6);
        let bad = vec![vec![i6.clone()], vec![i6.clone(), i6]];
        assert!(SmpVertexSet::from_random_polytope(2, 1, &bad).is_err());
    }

    #[test]
    fn uncertain_mean_cov_scalar() {
        let u = UncertainMeanCov {
            n: 2,
            m: 1,
            means: vec![Vector::zeros(6)],
            covariances: vec![Matrix::identity(6, 6)],
        };
        let s = SmpVertexSet::from_uncertain_mean_cov(&u).unwrap();
        assert_eq!(s.vertex_count(), 1);
        assert_eq!(s.vertex(0), &Matrix::identity(6, 6));
    }

    #[test]
    fn mean_cov_polytope_cases() {
        let s = SmpVertexSet::from_mean_cov_polytope(2, 1, &Vector::zeros(6), &[Matrix::identity(6, 6)]).unwrap();
        assert_eq!(s.vertex(0), &Matrix::identity(6, 6));
        let mut mu = Vector::zeros(6);
        mu[0] = 1.0;
        let s = SmpVertexSet::from_mean_cov_polytope(2, 1, &mu, &[Matrix::zeros(6, 6), Matrix::zeros(6, 6)]).unwrap();
        for k in 0..2 {
            assert_eq!(s.vertex(k), &(&mu * mu.transpose()));
        }
    }

    #[test]
    fn validation_flags_asymmetry() {
        let mut v = Matrix::identity(6, 6);
        v[(0, 1)] = 0.3;
        let report = validate_vertices(2, 1, &[v]);
        assert!(!report.is_ok());
        assert_eq!(report.symmetry_violations.len(), 1);
        assert_eq!((report.symmetry_violations[0].row, report.symmetry_violations[0].col), (0, 1));

        let ok = validate_vertices(2, 1, &vec![Matrix::identity(6, 6); 9]);
        assert!(ok.is_ok());

        let wrong = validate_vertices(2, 1, &[Matrix::identity(5, 5)]);
        assert_eq!(wrong.dimension_errors.len(), 1);
    }

    #[test]
    fn vertices_are_symmetrized_on_ingestion() {
        let mut v = Matrix::identity(2, 2);
        v[(0, 1)] = 1.0;
        let s = SmpVertexSet::new(1, 1, vec![v], TimeVariation::Ti, WeightMap::Constant).unwrap();
        assert_eq!(s.vertex(0)[(0, 1)], 0.5);
        assert_eq!(s.vertex(0)[(1, 0)], 0.5);
    }
}
