//! State-feedback synthesis through a rank-one constrained LMI.
//!
//! Substituting `K = L H⁻¹` and `P = GᵀQG` with `G = 𝒞(H⊗H)⁻¹` turns the
//! cubic stability condition into a quadratic one in `(Q, H, L)`. Collecting
//! `x = [vec H; vec L]` into `Z = x xᵀ` makes every quadratic term linear in
//! `Z`; the only non-convex requirement left is `rank Z = 1`, which is
//! approached by repeatedly minimizing `tr Z − ν₁(Z′)ᵀ Z ν₁(Z′)` around the
//! previous iterate `Z′`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SmpError};
use crate::expansion::{block_moment_matrices, ExpandedVertices, FeedbackGain, VertexBlocks};
use crate::model::{SmpVertexSet, TimeVariation};
use crate::sdp::{
    self, AffineBlockBuilder, LinearConstraint, SdpProblem, SdpStatus, SolverConfig, SymVar, VarAllocator,
};
use crate::stability::{self, CertificateFamily, GainCertificate, StabilityQuery};
use crate::tensor::{self, half_dim, Matrix, SymMatrix, Vector};

/// Iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub beta_tilde: f64,
    /// Margin on `S_lmi^(k)` and `Q^(k)`.
    pub eta: f64,
    /// Bound on `tr Z`.
    pub z_ub: f64,
    /// Stop once `ε` fails to drop by more than `delta`.
    pub delta: f64,
    /// Maximum number of SDPs solved.
    pub max_iter: usize,
    pub family: CertificateFamily,
    /// Largest accepted `ε(Z*)/λ₁(Z*)`.
    pub quality_threshold: f64,
    /// `H` is rejected above this condition number.
    pub max_condition: f64,
    /// Margin used by the downstream certification.
    pub cert_eta: f64,
    pub solver: SolverConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            beta_tilde: 0.97,
            eta: 0.1,
            z_ub: 10.0,
            delta: 1e-8,
            max_iter: 50,
            family: CertificateFamily::PerVertex,
            quality_threshold: 1e-4,
            max_condition: 1e12,
            cert_eta: stability::DEFAULT_CERT_ETA,
            solver: SolverConfig::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn check(&self) -> Result<()> {
        stability::check_beta_tilde(self.beta_tilde)?;
        let bad = |name: &str, reason: &str| SmpError::OutOfRange {
            name: name.into(),
            reason: reason.into(),
        };
        if !(self.eta >= 0.0) {
            return Err(bad("eta", "must be non-negative"));
        }
        if !(self.z_ub > 0.0) {
            return Err(bad("z_ub", "must be positive"));
        }
        if !(self.delta >= 0.0) {
            return Err(bad("delta", "must be non-negative"));
        }
        if self.max_iter == 0 {
            return Err(bad("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// `F_hh(Z), F_hl(Z), F_lh(Z), F_ll(Z)`; equal to `H⊗H, H⊗L, L⊗H, L⊗L`
/// when `Z = [vec H; vec L][vec H; vec L]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMaps {
    pub hh: Matrix,
    pub hl: Matrix,
    pub lh: Matrix,
    pub ll: Matrix,
}

/// Rows `i·n..` of `Z` hold column `i` of `H`; rows `n² + i·m..` hold column `i` of `L`.
pub fn block_maps(z: &Matrix, n: usize, m: usize) -> Result<BlockMaps> {
    let size = n * (n + m);
    if z.shape() != (size, size) {
        return Err(dim_err(
            "Z",
            format!("{size}x{size}"),
            format!("{}x{}", z.nrows(), z.ncols()),
        ));
    }
    let h_row = |i: usize| i * n;
    let l_row = |i: usize| n * n + i * m;
    let take = |r: usize, c: usize, rows: usize, cols: usize| tensor::vec(&z.view((r, c), (rows, cols)).into_owned());
    let mut hh = Matrix::zeros(n * n, n * n);
    let mut hl = Matrix::zeros(m * n, n * n);
    let mut lh = Matrix::zeros(n * m, n * n);
    let mut ll = Matrix::zeros(m * m, n * n);
    for j in 0..n {
        for i in 0..n {
            let col = n * j + i;
            hh.set_column(col, &take(h_row(i), h_row(j), n, n));
            hl.set_column(col, &take(l_row(i), h_row(j), m, n));
            lh.set_column(col, &take(h_row(i), l_row(j), n, m));
            ll.set_column(col, &take(l_row(i), l_row(j), m, m));
        }
    }
    Ok(BlockMaps { hh, hl, lh, ll })
}

fn lower_left_from_maps(b: &VertexBlocks, maps: &BlockMaps) -> Matrix {
    let mut f = &b.aa * &maps.hh;
    if maps.ll.nrows() > 0 {
        f -= &b.ab * &maps.hl;
        f -= &b.ba * &maps.lh;
        f += &b.bb * &maps.ll;
    }
    f
}

fn corner_block(hh: &Matrix, q: &Matrix, n: usize) -> Result<Matrix> {
    let c = tensor::compress(hh, n)?;
    Ok(&c + c.transpose() - q)
}

fn check_q(q: &Matrix, nt: usize) -> Result<()> {
    if q.shape() != (nt, nt) {
        return Err(dim_err("Q", format!("{nt}x{nt}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    Ok(())
}

/// `S_qmi` for vertex `k`.
pub fn build_s_qmi(
    e: &ExpandedVertices,
    k: usize,
    q: &Matrix,
    h: &Matrix,
    l: &Matrix,
    beta_tilde: f64,
) -> Result<Matrix> {
    let (n, m) = (e.n(), e.m());
    check_q(q, half_dim(n))?;
    if h.shape() != (n, n) || l.shape() != (m, n) {
        return Err(dim_err(
            "(H, L)",
            format!("{n}x{n}, {m}x{n}"),
            format!("{}x{}, {}x{}", h.nrows(), h.ncols(), l.nrows(), l.ncols()),
        ));
    }
    let maps = BlockMaps {
        hh: tensor::kron(h, h),
        hl: tensor::kron(h, l),
        lh: tensor::kron(l, h),
        ll: tensor::kron(l, l),
    };
    assemble(e.blocks(k)?, &maps, q, n, beta_tilde)
}

/// `S_lmi` for vertex `k`; affine in `(Q, Z)`.
pub fn build_s_lmi(e: &ExpandedVertices, k: usize, q: &Matrix, z: &Matrix, beta_tilde: f64) -> Result<Matrix> {
    let n = e.n();
    check_q(q, half_dim(n))?;
    let maps = block_maps(z, n, e.m())?;
    assemble(e.blocks(k)?, &maps, q, n, beta_tilde)
}

fn assemble(b: &VertexBlocks, maps: &BlockMaps, q: &Matrix, n: usize, beta_tilde: f64) -> Result<Matrix> {
    let bl = tensor::compress(&lower_left_from_maps(b, maps), n)?;
    let br = corner_block(&maps.hh, q, n)?;
    Ok(tensor::sym_block2(&(q * (beta_tilde * beta_tilde)), &bl, &br))
}

/// `Σ_{i≥2} |λ_i(Z)|`.
pub fn epsilon(z: &Matrix) -> Result<f64> {
    let eig = tensor::sym_eig(&SymMatrix::new(z)?)?;
    Ok(eig.eigenvalues.iter().skip(1).map(|x| x.abs()).sum())
}

/// `tr Z − ν₁(Z′)ᵀ Z ν₁(Z′)`, an upper bound on `ε(Z)` for PSD `Z`.
pub fn epsilon_hat(z: &Matrix, z_prev: &Matrix) -> Result<f64> {
    if z_prev.iter().all(|x| *x == 0.0) {
        return Err(SmpError::InvalidInput("ε̂ needs a nonzero previous iterate".into()));
    }
    if z.shape() != z_prev.shape() {
        return Err(dim_err(
            "ε̂ operands",
            format!("{}x{}", z_prev.nrows(), z_prev.ncols()),
            format!("{}x{}", z.nrows(), z.ncols()),
        ));
    }
    let nu = tensor::sym_eig(&SymMatrix::new(z_prev)?)?.eigenvector(0);
    Ok(z.trace() - (nu.transpose() * z * &nu)[(0, 0)])
}

/// `K = L H⁻¹`, rejecting `H` with condition number above `max_condition`.
pub fn recover_gain(h: &Matrix, l: &Matrix, max_condition: f64) -> Result<FeedbackGain> {
    let sv = h.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smax / smin > max_condition {
        return Err(SmpError::ExtractionFailure(format!(
            "H is singular or ill-conditioned (condition number {:e})",
            smax / smin
        )));
    }
    let hinv = h
        .clone()
        .try_inverse()
        .ok_or_else(|| SmpError::ExtractionFailure("H is not invertible".into()))?;
    FeedbackGain::new(l * hinv)
}

/// Rank-one factor of a PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFactor {
    /// `λ₁ ν₁ ν₁ᵀ`.
    pub z_hat: Matrix,
    pub h: Matrix,
    pub l: Matrix,
    pub lambda1: f64,
    pub epsilon: f64,
    /// `ε(Z)/λ₁`.
    pub quality: f64,
}

/// `[vec H; vec L] = √λ₁ ν₁`, with `ν₁` signed so its largest-magnitude entry is positive.
pub fn rank_one_extract(z: &Matrix, n: usize, m: usize) -> Result<RankOneFactor> {
    let size = n * (n + m);
    if z.shape() != (size, size) {
        return Err(dim_err("Z", format!("{size}x{size}"), format!("{}x{}", z.nrows(), z.ncols())));
    }
    let eig = tensor::sym_eig(&SymMatrix::new(z)?)?;
    let lambda1 = eig.eigenvalues[0];
    if !(lambda1 > 0.0) {
        return Err(SmpError::ExtractionFailure(format!(
            "largest eigenvalue {lambda1:e} is not positive"
        )));
    }
    let nu = eig.eigenvector(0);
    let x: Vector = &nu * lambda1.sqrt();
    let h = Matrix::from_column_slice(n, n, &x.as_slice()[..n * n]);
    let l = Matrix::from_column_slice(m, n, &x.as_slice()[n * n..]);
    let eps: f64 = eig.eigenvalues.iter().skip(1).map(|v| v.abs()).sum();
    Ok(RankOneFactor {
        z_hat: &x * x.transpose(),
        h,
        l,
        lambda1,
        epsilon: eps,
        quality: eps / lambda1,
    })
}

/// One solved SDP of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// One-based iteration index.
    pub ell: usize,
    pub epsilon: f64,
    pub lambda1: f64,
    pub trace: f64,
    pub objective: f64,
    pub status: SdpStatus,
    pub newton_steps: usize,
}

impl IterationRecord {
    pub fn optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Final iterate of the SDP sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneCandidate {
    pub z: Matrix,
    pub q: Vec<Matrix>,
    pub trace: Vec<IterationRecord>,
}

impl RankOneCandidate {
    /// `ε` non-increasing across consecutive steps that were both solved to optimality.
    pub fn epsilon_monotone(&self, slack: f64) -> bool {
        self.trace
            .windows(2)
            .filter(|w| w[0].optimal() && w[1].optimal())
            .all(|w| w[1].epsilon <= w[0].epsilon + slack)
    }
}

struct Layout {
    z: SymVar,
    q: Vec<SymVar>,
    dim: usize,
}

fn build_problem(e: &ExpandedVertices, cfg: &SynthesisConfig, family: CertificateFamily) -> (SdpProblem, Layout) {
    let (n, m) = (e.n(), e.m());
    let nt = half_dim(n);
    let size = n * (n + m);
    let mut alloc = VarAllocator::new();
    let zv = alloc.sym(size);
    let count = match family {
        CertificateFamily::PerVertex => e.vertex_count(),
        CertificateFamily::Identical => 1,
    };
    let qs: Vec<SymVar> = (0..count).map(|_| alloc.sym(nt)).collect();
    let builder = AffineBlockBuilder::new(alloc.dim());
    let mut p = SdpProblem::new(alloc.dim());
    for k in 0..e.vertex_count() {
        let qv = qs[if count == 1 { 0 } else { k }];
        let blocks = e.blocks(k).expect("index in range");
        p.blocks.push(builder.build(zv.range().chain(qv.range()), |x| {
            let maps = block_maps(&zv.unpack(x), n, m).expect("layout fixed");
            let s = assemble(blocks, &maps, &qv.unpack(x), n, cfg.beta_tilde).expect("layout fixed");
            s - Matrix::identity(2 * nt, 2 * nt) * cfg.eta
        }));
    }
    for qv in &qs {
        p.blocks
            .push(builder.build(qv.range(), |x| qv.unpack(x) - Matrix::identity(nt, nt) * cfg.eta));
    }
    p.blocks.push(builder.build(zv.range(), |x| zv.unpack(x)));
    p.linear.push(LinearConstraint {
        coeffs: trace_coeffs(&zv),
        bound: cfg.z_ub,
    });
    let dim = alloc.dim();
    (p, Layout { z: zv, q: qs, dim })
}

fn trace_coeffs(zv: &SymVar) -> Vec<(usize, f64)> {
    (0..zv.n).map(|i| (zv.offset + tensor::lower_index(zv.n, i, i), 1.0)).collect()
}

/// Linear objective `tr Z − νᵀZν` in packed coordinates.
fn surrogate_objective(zv: &SymVar, nu: Option<&Vector>, dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for (i, v) in trace_coeffs(zv) {
        c[i] = v;
    }
    if let Some(nu) = nu {
        let mut k = zv.offset;
        for j in 0..zv.n {
            for i in j..zv.n {
                let w = if i == j { nu[i] * nu[i] } else { 2.0 * nu[i] * nu[j] };
                c[k] -= w;
                k += 1;
            }
        }
    }
    c
}

/// Runs the iterative SDP: `ℓ = 1` minimizes `tr Z`, later steps minimize
/// `ε̂(Z, Z^(ℓ−1))` warm-started at the previous solution, until
/// `ε(Z^(ℓ)) ≥ ε(Z^(ℓ−1)) − δ` or the iteration cap.
pub fn iterate_sdp(e: &ExpandedVertices, cfg: &SynthesisConfig, family: CertificateFamily) -> Result<RankOneCandidate> {
    cfg.check()?;
    let (mut problem, layout) = build_problem(e, cfg, family);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut last: Option<Vec<f64>> = None;
    for ell in 1..=cfg.max_iter {
        let nu = match &last {
            Some(x) => Some(
                tensor::sym_eig(&SymMatrix::new(&layout.z.unpack(x))?)?.eigenvector(0),
            ),
            None => None,
        };
        problem.objective = surrogate_objective(&layout.z, nu.as_ref(), layout.dim);
        let sol = sdp::solve(&problem, &cfg.solver, last.as_deref())?;
        if sol.status == SdpStatus::InfeasibleDetected {
            if ell == 1 {
                return Err(SmpError::SynthesisInfeasible {
                    margin: sol.phase1_margin.unwrap_or(f64::NAN),
                });
            }
            break;
        }
        if sol.residual < 0.0 {
            // an iterate outside the feasible set cannot seed the next step
            if ell == 1 {
                return Err(SmpError::Solver(format!("synthesis SDP returned {:?}", sol.status)));
            }
            break;
        }
        let zmat = layout.z.unpack(&sol.z);
        let eig = tensor::sym_eig(&SymMatrix::new(&zmat)?)?;
        let eps: f64 = eig.eigenvalues.iter().skip(1).map(|v| v.abs()).sum();
        trace.push(IterationRecord {
            ell,
            epsilon: eps,
            lambda1: eig.eigenvalues[0],
            trace: zmat.trace(),
            objective: sol.objective,
            status: sol.status,
            newton_steps: sol.iterations,
        });
        last = Some(sol.z);
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2].epsilon;
            if eps >= prev - cfg.delta {
                break;
            }
        }
    }
    let x = last.ok_or_else(|| SmpError::Solver("no synthesis iterate".into()))?;
    Ok(RankOneCandidate {
        z: layout.z.unpack(&x),
        q: layout.q.iter().map(|qv| qv.unpack(&x)).collect(),
        trace,
    })
}

/// Which family of conditions the extracted design satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Exponential rate `β̃ < 1`.
    ExponentialRate,
    /// Robust stability, `β̃ = 1` with the `η` margin as strictness.
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisStatus {
    /// The rank-one design passed every re-check.
    Verified,
    /// `ε(Z*)/λ₁` stayed above the threshold.
    QualityRejected,
    /// The extracted design failed the LMI or certification re-check.
    VerificationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub status: SynthesisStatus,
    pub gain: FeedbackGain,
    #[serde(with = "crate::io::matrix_rows")]
    pub h: Matrix,
    #[serde(with = "crate::io::matrix_rows")]
    pub l: Matrix,
    #[serde(with = "crate::io::matrix_list")]
    pub q: Vec<Matrix>,
    #[serde(with = "crate::io::matrix_rows")]
    pub z: Matrix,
    #[serde(with = "crate::io::matrix_rows")]
    pub z_hat: Matrix,
    pub lambda1: f64,
    pub epsilon: f64,
    pub quality: f64,
    pub condition: Option<Condition>,
    /// `min_k λ_min(S_lmi^(k)(Q^(k), Ẑ*))`.
    pub lmi_margin_at_rank_one: f64,
    /// Smallest eigenvalue of the congruence witness `P = GᵀQG`, `G = 𝒞(H⊗H)⁻¹`.
    pub congruence_margin: f64,
    pub certificate: Option<GainCertificate>,
    pub trace: Vec<IterationRecord>,
    pub family: CertificateFamily,
    pub beta_tilde: f64,
}

impl SynthesisResult {
    pub fn is_verified(&self) -> bool {
        self.status == SynthesisStatus::Verified
    }
}

/// Runs the iteration, extracts `(H, L)`, recovers `K` and re-checks it.
pub fn synthesize(s: &SmpVertexSet, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    let e = block_moment_matrices(s);
    synthesize_expanded(&e, s.time_variation(), cfg)
}

pub fn synthesize_expanded(e: &ExpandedVertices, tv: TimeVariation, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    let family = cfg.family.for_time_variation(tv);
    let cand = iterate_sdp(e, cfg, family)?;
    let f = rank_one_extract(&cand.z, e.n(), e.m())?;
    let gain = recover_gain(&f.h, &f.l, cfg.max_condition)?;

    let mut lmi_margin = f64::INFINITY;
    for k in 0..e.vertex_count() {
        let q = if cand.q.len() == 1 { &cand.q[0] } else { &cand.q[k] };
        let s = build_s_lmi(e, k, q, &f.z_hat, cfg.beta_tilde)?;
        lmi_margin = lmi_margin.min(tensor::min_eigenvalue(&s)?);
    }
    for q in &cand.q {
        lmi_margin = lmi_margin.min(tensor::min_eigenvalue(q)?);
    }

    let g = congruence_g(&f.h)?;
    let p: Vec<Matrix> = cand.q.iter().map(|q| g.transpose() * q * &g).collect();
    let congruence_margin = stability::witness_margin(e, &gain, &p, &g, cfg.beta_tilde)?;

    let quality_ok = f.quality <= cfg.quality_threshold;
    let lmi_ok = lmi_margin >= -stability::VERIFY_SLACK;
    let certificate = if quality_ok && lmi_ok {
        let mut q = StabilityQuery::new(e, &gain, cfg.beta_tilde);
        q.family = family;
        q.time_variation = tv;
        q.eta = cfg.cert_eta;
        q.solver = cfg.solver;
        Some(stability::certify(&q)?)
    } else {
        None
    };
    let certified = certificate.as_ref().is_some_and(|c| c.is_certified());
    let status = if !quality_ok {
        SynthesisStatus::QualityRejected
    } else if lmi_ok && certified {
        SynthesisStatus::Verified
    } else {
        SynthesisStatus::VerificationFailed
    };
    let condition = (status == SynthesisStatus::Verified).then_some(if cfg.beta_tilde < 1.0 {
        Condition::ExponentialRate
    } else {
        Condition::Robust
    });
    Ok(SynthesisResult {
        status,
        gain,
        h: f.h,
        l: f.l,
        q: cand.q,
        z: cand.z,
        z_hat: f.z_hat,
        lambda1: f.lambda1,
        epsilon: f.epsilon,
        quality: f.quality,
        condition,
        lmi_margin_at_rank_one: lmi_margin,
        congruence_margin,
        certificate,
        trace: cand.trace,
        family,
        beta_tilde: cfg.beta_tilde,
    })
}

/// `G = 𝒞(H⊗H)⁻¹`.
pub fn congruence_g(h: &Matrix) -> Result<Matrix> {
    let n = h.nrows();
    tensor::compress(&tensor::kron(h, h), n)?
        .try_inverse()
        .ok_or_else(|| SmpError::ExtractionFailure("𝒞(H⊗H) is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one(h: &Matrix, l: &Matrix) -> Matrix {
        let mut x = Vector::zeros(h.len() + l.len());
        x.as_mut_slice()[..h.len()].copy_from_slice(h.as_slice());
        x.as_mut_slice()[h.len()..].copy_from_slice(l.as_slice());
        &x * x.transpose()
    }

    #[test]
    fn block_maps_of_rank_one() {
        let h = Matrix::from_row_slice(2, 2, &[1.0, 0.3, -0.7, 2.0]);
        let l = Matrix::from_row_slice(1, 2, &[0.4, -1.1]);
        let maps = block_maps(&rank_one(&h, &l), 2, 1).unwrap();
        assert!((maps.hh - tensor::kron(&h, &h)).amax() < 1e-14);
        assert!((maps.hl - tensor::kron(&h, &l)).amax() < 1e-14);
        assert!((maps.lh - tensor::kron(&l, &h)).amax() < 1e-14);
        assert!((maps.ll - tensor::kron(&l, &l)).amax() < 1e-14);
    }

    #[test]
    fn block_maps_identity_and_zero() {
        let h = Matrix::identity(2, 2);
        let l = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let maps = block_maps(&rank_one(&h, &l), 2, 1).unwrap();
        assert_eq!(maps.hh, Matrix::identity(4, 4));
        let zero = block_maps(&Matrix::zeros(6, 6), 2, 1).unwrap();
        assert!(zero.hh.iter().chain(zero.ll.iter()).all(|x| *x == 0.0));
    }

    #[test]
    fn epsilon_examples() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![5.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
        assert!((epsilon(&d).unwrap() - 1.0).abs() < 1e-14);
        let x = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        assert!(epsilon(&(&x * x.transpose())).unwrap() < 1e-12);
        let i3 = Matrix::identity(3, 3);
        let e1 = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0, 0.0]));
        assert!((epsilon_hat(&i3, &e1).unwrap() - 2.0).abs() < 1e-14);
        assert!(epsilon_hat(&i3, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn extraction_sign_invariance() {
        let h = Matrix::from_row_slice(2, 2, &[1.5, 0.2, -0.3, 0.8]);
        let l = Matrix::from_row_slice(1, 2, &[0.6, -0.9]);
        let f = rank_one_extract(&rank_one(&h, &l), 2, 1).unwrap();
        let k0 = recover_gain(&h, &l, 1e12).unwrap();
        let k1 = recover_gain(&f.h, &f.l, 1e12).unwrap();
        assert!((k0.matrix() - k1.matrix()).amax() < 1e-12);
        let kneg = recover_gain(&(-&h), &(-&l), 1e12).unwrap();
        assert_eq!(kneg.matrix(), k0.matrix());
        assert!(f.quality < 1e-12);
    }

    #[test]
    fn extraction_identity_quality() {
        let f = rank_one_extract(&Matrix::identity(6, 6), 2, 1).unwrap();
        assert!((f.quality - 5.0).abs() < 1e-12);
        assert!(rank_one_extract(&Matrix::zeros(6, 6), 2, 1).is_err());
    }

    #[test]
    fn singular_h_rejected() {
        let h = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let l = Matrix::zeros(1, 2);
        assert!(matches!(recover_gain(&h, &l, 1e12), Err(SmpError::ExtractionFailure(_))));
    }
}
