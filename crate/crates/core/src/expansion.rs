//! The expanded deterministic system whose state is `vech(E[x xᵀ])`.
//!
//! Each vertex `M` of size `n(n+m)` is read as an `(n+m) × (n+m)` grid of
//! `n × n` blocks `M_{i,j}`. With zero-based block indices the four
//! block-moment matrices are assembled column by column:
//!
//! | matrix | size      | column            | contents              |
//! |--------|-----------|-------------------|-----------------------|
//! | `F_aa` | n² × n²   | `n·j + i`         | `vec(M_{i, j})`       |
//! | `F_ab` | n² × nm   | `m·j + i'`        | `vec(M_{n+i', j})`    |
//! | `F_ba` | n² × nm   | `n·j' + i`        | `vec(M_{i, n+j'})`    |
//! | `F_bb` | n² × m²   | `m·j' + i'`       | `vec(M_{n+i', n+j'})` |
//!
//! with `i, j < n` and `i', j' < m`. For a deterministic `v = vec([A, B])`
//! this gives `F_aa = A⊗A`, `F_ab = A⊗B`, `F_ba = B⊗A`, `F_bb = B⊗B`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SmpError};
use crate::model::{SmpVertexSet, WeightVector};
use crate::tensor::{self, half_dim, Matrix, Vector};

/// State feedback `u = -K x`, `K` of size `m × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainRepr", into = "GainRepr")]
pub struct FeedbackGain {
    k: Matrix,
}

impl FeedbackGain {
    pub fn new(k: Matrix) -> Result<Self> {
        if k.iter().any(|x| !x.is_finite()) {
            return Err(SmpError::InvalidInput("gain has non-finite entries".into()));
        }
        Ok(Self { k })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self { k: Matrix::zeros(m, n) }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.k
    }

    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    pub fn n(&self) -> usize {
        self.k.ncols()
    }
}

#[derive(Serialize, Deserialize)]
struct GainRepr {
    m: usize,
    n: usize,
    k: Vec<Vec<f64>>,
}

impl TryFrom<GainRepr> for FeedbackGain {
    type Error = SmpError;

    fn try_from(r: GainRepr) -> Result<Self> {
        if r.k.len() != r.m || r.k.iter().any(|row| row.len() != r.n) {
            return Err(dim_err("gain rows", format!("{}x{}", r.m, r.n), "ragged or mis-sized rows"));
        }
        FeedbackGain::new(Matrix::from_fn(r.m, r.n, |i, j| r.k[i][j]))
    }
}

impl From<FeedbackGain> for GainRepr {
    fn from(g: FeedbackGain) -> Self {
        GainRepr {
            m: g.m(),
            n: g.n(),
            k: g.k.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

/// Block-moment matrices of one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexBlocks {
    pub aa: Matrix,
    pub ab: Matrix,
    pub ba: Matrix,
    pub bb: Matrix,
}

/// Block-moment matrices for every vertex of an SMP system.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedVertices {
    n: usize,
    m: usize,
    blocks: Vec<VertexBlocks>,
}

fn block(mat: &Matrix, n: usize, bi: usize, bj: usize) -> Vector {
    tensor::vec(&mat.view((bi * n, bj * n), (n, n)).into_owned())
}

/// Reads one vertex into its four block-moment matrices.
pub fn vertex_blocks(vertex: &Matrix, n: usize, m: usize) -> Result<VertexBlocks> {
    let size = n * (n + m);
    if vertex.shape() != (size, size) {
        return Err(dim_err(
            "vertex",
            format!("{size}x{size}"),
            format!("{}x{}", vertex.nrows(), vertex.ncols()),
        ));
    }
    let nn = n * n;
    let mut aa = Matrix::zeros(nn, nn);
    let mut ab = Matrix::zeros(nn, n * m);
    let mut ba = Matrix::zeros(nn, n * m);
    let mut bb = Matrix::zeros(nn, m * m);
    for j in 0..n {
        for i in 0..n {
            aa.set_column(n * j + i, &block(vertex, n, i, j));
        }
        for ip in 0..m {
            ab.set_column(m * j + ip, &block(vertex, n, n + ip, j));
        }
    }
    for jp in 0..m {
        for i in 0..n {
            ba.set_column(n * jp + i, &block(vertex, n, i, n + jp));
        }
        for ip in 0..m {
            bb.set_column(m * jp + ip, &block(vertex, n, n + ip, n + jp));
        }
    }
    Ok(VertexBlocks { aa, ab, ba, bb })
}

/// Builds the block-moment matrices of every vertex.
pub fn block_moment_matrices(s: &SmpVertexSet) -> ExpandedVertices {
    let blocks = s
        .vertices()
        .iter()
        .map(|v| vertex_blocks(v, s.n(), s.m()).expect("vertex dimensions checked on construction"))
        .collect();
    ExpandedVertices {
        n: s.n(),
        m: s.m(),
        blocks,
    }
}

impl VertexBlocks {
    /// `F_aa − F_ab(I⊗K) − F_ba(K⊗I) + F_bb(K⊗K)`.
    pub fn closed_loop(&self, k: &Matrix) -> Matrix {
        let n = k.ncols();
        let i_n = Matrix::identity(n, n);
        let mut f = self.aa.clone();
        if k.nrows() > 0 {
            f -= &self.ab * tensor::kron(&i_n, k);
            f -= &self.ba * tensor::kron(k, &i_n);
            f += &self.bb * tensor::kron(k, k);
        }
        f
    }
}

impl ExpandedVertices {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Expanded state dimension `ñ = n(n+1)/2`.
    pub fn n_tilde(&self) -> usize {
        half_dim(self.n)
    }

    pub fn vertex_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self, k: usize) -> Result<&VertexBlocks> {
        self.blocks.get(k).ok_or(SmpError::IndexOutOfRange {
            index: k,
            count: self.blocks.len(),
        })
    }

    pub fn all_blocks(&self) -> &[VertexBlocks] {
        &self.blocks
    }

    fn check_gain(&self, k: &FeedbackGain) -> Result<()> {
        if k.matrix().shape() != (self.m, self.n) {
            return Err(dim_err(
                "gain",
                format!("{}x{}", self.m, self.n),
                format!("{}x{}", k.m(), k.n()),
            ));
        }
        Ok(())
    }

    /// `F^(k)(K)` of size `n² × n²` (zero-based `k`).
    pub fn closed_loop_vertex(&self, k: usize, gain: &FeedbackGain) -> Result<Matrix> {
        self.check_gain(gain)?;
        Ok(self.blocks(k)?.closed_loop(gain.matrix()))
    }

    /// `𝒞(F^(k)(K))` of size `ñ × ñ`.
    pub fn compressed_vertex(&self, k: usize, gain: &FeedbackGain) -> Result<Matrix> {
        tensor::compress(&self.closed_loop_vertex(k, gain)?, self.n)
    }

    /// `𝒞(Σ_k w_k F^(k)(K))`.
    pub fn expanded_closed_loop(&self, w: &WeightVector, gain: &FeedbackGain) -> Result<Matrix> {
        self.check_gain(gain)?;
        if w.len() != self.blocks.len() {
            return Err(dim_err("weight vector", self.blocks.len(), w.len()));
        }
        let nn = self.n * self.n;
        let mut f = Matrix::zeros(nn, nn);
        for (wk, b) in w.as_slice().iter().zip(&self.blocks) {
            if *wk != 0.0 {
                f += b.closed_loop(gain.matrix()) * *wk;
            }
        }
        tensor::compress(&f, self.n)
    }

    /// Runs the expanded system for `steps` steps.
    pub fn propagate(
        &self,
        schedule: &WeightSchedule,
        gain: &FeedbackGain,
        x0: &Vector,
        steps: usize,
    ) -> Result<ExpandedTrajectory> {
        let nt = self.n_tilde();
        if x0.len() != nt {
            return Err(dim_err("expanded initial state", nt, x0.len()));
        }
        schedule.check(steps, self.blocks.len())?;
        let mut states = Vec::with_capacity(steps + 1);
        states.push(x0.clone());
        let mut cached: Option<Matrix> = None;
        for t in 0..steps {
            let a = match schedule {
                WeightSchedule::Constant(w) => {
                    if cached.is_none() {
                        cached = Some(self.expanded_closed_loop(w, gain)?);
                    }
                    cached.clone().expect("set above")
                }
                WeightSchedule::Sequence(seq) => self.expanded_closed_loop(&seq[t], gain)?,
            };
            let next = &a * &states[t];
            states.push(next);
        }
        Ok(ExpandedTrajectory {
            states,
            schedule: schedule.clone(),
        })
    }
}

/// `x̃_0 = vech(x0 x0ᵀ)`.
pub fn lift_state(x0: &Vector) -> Vector {
    tensor::vech(&(x0 * x0.transpose())).expect("outer product is square")
}

/// Vertex weights over time.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSchedule {
    /// Time-invariant weights.
    Constant(WeightVector),
    /// `weights[t]` is used for the step `t → t+1`.
    Sequence(Vec<WeightVector>),
}

impl WeightSchedule {
    pub fn at(&self, t: usize) -> &WeightVector {
        match self {
            WeightSchedule::Constant(w) => w,
            WeightSchedule::Sequence(seq) => &seq[t],
        }
    }

    fn check(&self, steps: usize, vertices: usize) -> Result<()> {
        match self {
            WeightSchedule::Constant(w) => {
                if w.len() != vertices {
                    return Err(dim_err("weight vector", vertices, w.len()));
                }
            }
            WeightSchedule::Sequence(seq) => {
                if seq.len() < steps {
                    return Err(dim_err("weight sequence length", steps, seq.len()));
                }
                if let Some(w) = seq.iter().find(|w| w.len() != vertices) {
                    return Err(dim_err("weight vector", vertices, w.len()));
                }
            }
        }
        Ok(())
    }
}

/// Expanded states `x̃_0 … x̃_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedTrajectory {
    pub states: Vec<Vector>,
    pub schedule: WeightSchedule,
}

impl ExpandedTrajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// `E‖x_t‖² = tr E[x_t x_tᵀ]`, read off the diagonal entries of `x̃_t`.
    pub fn mean_square_norm(&self, t: usize, n: usize) -> f64 {
        (0..n).map(|i| self.states[t][tensor::lower_index(n, i, i)]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TimeVariation, WeightMap};

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn block_layout_n2_m1() {
        // entries encode their own (row, col) so the layout can be read back
        let v = Matrix::from_fn(6, 6, |i, j| (10 * (i + 1) + j + 1) as f64);
        let b = vertex_blocks(&v, 2, 1).unwrap();
        assert_eq!(b.ab.shape(), (4, 2));
        assert_eq!(b.ab.column(0).as_slice(), &[51.0, 61.0, 52.0, 62.0]);
        assert_eq!(b.ab.column(1).as_slice(), &[53.0, 63.0, 54.0, 64.0]);
        assert_eq!(b.ba.column(0).as_slice(), &[15.0, 25.0, 16.0, 26.0]);
        assert_eq!(b.ba.column(1).as_slice(), &[35.0, 45.0, 36.0, 46.0]);
        assert_eq!(b.bb.as_slice(), &[55.0, 65.0, 56.0, 66.0]);
        assert_eq!(b.aa.column(1).as_slice(), &[31.0, 41.0, 32.0, 42.0]);
        assert_eq!(b.aa.column(2).as_slice(), &[13.0, 23.0, 14.0, 24.0]);
    }

    #[test]
    fn zero_vertex_gives_zero_blocks() {
        let b = vertex_blocks(&Matrix::zeros(6, 6), 2, 1).unwrap();
        assert!(b.aa.iter().chain(b.ab.iter()).chain(b.ba.iter()).chain(b.bb.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_matches_kronecker() {
        let a = matrix(2, 2, &[0.3, -1.2, 0.7, 0.5]);
        let bm = matrix(2, 1, &[1.0, -0.4]);
        let k = matrix(1, 2, &[0.2, 0.9]);
        let mut ab = Matrix::zeros(2, 3);
        ab.view_mut((0, 0), (2, 2)).copy_from(&a);
        ab.view_mut((0, 2), (2, 1)).copy_from(&bm);
        let v = tensor::vec(&ab);
        let s = SmpVertexSet::from_deterministic_polytope(2, 1, &[v]).unwrap();
        let e = block_moment_matrices(&s);
        let gain = FeedbackGain::new(k.clone()).unwrap();
        let f = e.closed_loop_vertex(0, &gain).unwrap();
        let acl = &a - &bm * &k;
        let expect = tensor::kron(&acl, &acl);
        assert!((&f - &expect).amax() < 1e-14);
        assert!((e.blocks(0).unwrap().ab.clone() - tensor::kron(&a, &bm)).amax() < 1e-14);
        assert!((e.blocks(0).unwrap().ba.clone() - tensor::kron(&bm, &a)).amax() < 1e-14);
    }

    #[test]
    fn zero_gain_and_index_errors() {
        let v = Matrix::from_fn(6, 6, |i, j| ((i + 1) * (j + 1)) as f64);
        let s = SmpVertexSet::new(2, 1, vec![v], TimeVariation::Ti, WeightMap::Constant).unwrap();
        let e = block_moment_matrices(&s);
        let f = e.closed_loop_vertex(0, &FeedbackGain::zeros(1, 2)).unwrap();
        assert_eq!(f, e.blocks(0).unwrap().aa);
        assert!(matches!(
            e.closed_loop_vertex(1, &FeedbackGain::zeros(1, 2)),
            Err(SmpError::IndexOutOfRange { .. })
        ));
        assert!(e.closed_loop_vertex(0, &FeedbackGain::zeros(2, 2)).is_err());
    }

    #[test]
    fn aa_only_ignores_gain() {
        let mut v = Matrix::zeros(6, 6);
        v.view_mut((0, 0), (4, 4)).fill_with_identity();
        let s = SmpVertexSet::new(2, 1, vec![v], TimeVariation::Ti, WeightMap::Constant).unwrap();
        let e = block_moment_matrices(&s);
        let k = FeedbackGain::new(matrix(1, 2, &[3.0, -7.0])).unwrap();
        assert_eq!(e.closed_loop_vertex(0, &k).unwrap(), e.blocks(0).unwrap().aa);
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift_state(&Vector::from_vec(vec![1.0, 1.0])).as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(lift_state(&Vector::from_vec(vec![1.0, 2.0])).as_slice(), &[1.0, 2.0, 4.0]);
        assert_eq!(lift_state(&Vector::zeros(2)).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn propagate_nilpotent_toy() {
        // x_{t+1} = A x_t with A = [[0,1],[0,0]]: x0=[1,1] → [1,0] → [0,0]
        let a = matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let v = tensor::vec(&a);
        let s = SmpVertexSet::from_deterministic_polytope(2, 0, &[v]).unwrap();
        let e = block_moment_matrices(&s);
        let x0 = lift_state(&Vector::from_vec(vec![1.0, 1.0]));
        let traj = e
            .propagate(&WeightSchedule::Constant(WeightVector::single()), &FeedbackGain::zeros(0, 2), &x0, 2)
            .unwrap();
        assert_eq!(traj.states[1].as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(traj.states[2].as_slice(), &[0.0, 0.0, 0.0]);
        let t0 = e
            .propagate(&WeightSchedule::Constant(WeightVector::single()), &FeedbackGain::zeros(0, 2), &x0, 0)
            .unwrap();
        assert_eq!(t0.states, vec![x0]);
    }

    #[test]
    fn expanded_closed_loop_is_affine_in_weights() {
        let v1 = Matrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1);
        let v2 = Matrix::from_fn(6, 6, |i, j| ((i * 2 + j * 5) % 7) as f64 * 0.05);
        let s = SmpVertexSet::new(2, 1, vec![v1, v2], TimeVariation::Ti, WeightMap::Direct).unwrap();
        let e = block_moment_matrices(&s);
        let k = FeedbackGain::new(matrix(1, 2, &[0.4, -0.3])).unwrap();
        let w1 = WeightVector::new(vec![0.9, 0.1]).unwrap();
        let w2 = WeightVector::new(vec![0.2, 0.8]).unwrap();
        let mid = WeightVector::new(vec![0.55, 0.45]).unwrap();
        let avg = (e.expanded_closed_loop(&w1, &k).unwrap() + e.expanded_closed_loop(&w2, &k).unwrap()) * 0.5;
        assert!((e.expanded_closed_loop(&mid, &k).unwrap() - avg).amax() < 1e-14);
    }
}
