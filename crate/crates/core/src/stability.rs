//! Mean-square stability certificates for a fixed feedback gain.
//!
//! For each vertex the cubic matrix function
//!
//! ```text
//! S_cmi = [ β̃²P            𝒞(F(K))ᵀG ]
//!         [ Gᵀ𝒞(F(K))      Gᵀ + G − P ]
//! ```
//!
//! is required to be positive semidefinite together with `P ≻ 0`. For fixed
//! `K` this is an LMI in `(P^(k), G)`. Its feasibility implies that the
//! expanded closed loop contracts at rate `β̃` in the worst case, i.e. the
//! MS rate is `β = √β̃`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SmpError};
use crate::expansion::{ExpandedVertices, FeedbackGain};
use crate::model::TimeVariation;
use crate::sdp::{self, AffineBlockBuilder, LmiBlock, SdpProblem, SdpStatus, SolverConfig, VarAllocator};
use crate::tensor::{self, half_dim, Matrix};

/// Default certification margin standing in for strict inequalities.
pub const DEFAULT_CERT_ETA: f64 = 1e-6;
/// Eigenvalue slack tolerated when re-verifying a witness.
pub const VERIFY_SLACK: f64 = 1e-8;

/// Whether each vertex has its own Lyapunov-type matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateFamily {
    #[default]
    PerVertex,
    Identical,
}

impl CertificateFamily {
    /// Time-varying parameters require a common matrix.
    pub fn for_time_variation(self, tv: TimeVariation) -> Self {
        match tv {
            TimeVariation::Tv => CertificateFamily::Identical,
            TimeVariation::Ti => self,
        }
    }
}

impl std::str::FromStr for CertificateFamily {
    type Err = SmpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-vertex" => Ok(Self::PerVertex),
            "identical" => Ok(Self::Identical),
            other => Err(SmpError::InvalidInput(format!(
                "unknown certificate family `{other}` (expected per-vertex or identical)"
            ))),
        }
    }
}

/// `β = √β̃`.
pub fn ms_rate_from_expanded(beta_tilde: f64) -> Result<f64> {
    check_beta_tilde(beta_tilde)?;
    Ok(beta_tilde.sqrt())
}

pub(crate) fn check_beta_tilde(beta_tilde: f64) -> Result<()> {
    if !(beta_tilde > 0.0 && beta_tilde <= 1.0) {
        return Err(SmpError::OutOfRange {
            name: "beta_tilde".into(),
            reason: format!("{beta_tilde} is not in (0, 1]"),
        });
    }
    Ok(())
}

/// `S_cmi` for vertex `k` (zero-based).
pub fn build_s_cmi(
    e: &ExpandedVertices,
    k: usize,
    p: &Matrix,
    g: &Matrix,
    gain: &FeedbackGain,
    beta_tilde: f64,
) -> Result<Matrix> {
    let c = e.compressed_vertex(k, gain)?;
    s_cmi_from_compressed(&c, p, g, beta_tilde)
}

pub(crate) fn s_cmi_from_compressed(c: &Matrix, p: &Matrix, g: &Matrix, beta_tilde: f64) -> Result<Matrix> {
    let nt = c.nrows();
    for (name, x) in [("P", p), ("G", g)] {
        if x.shape() != (nt, nt) {
            return Err(dim_err(
                &format!("S_cmi {name}"),
                format!("{nt}x{nt}"),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
    }
    let tl = p * (beta_tilde * beta_tilde);
    let bl = g.transpose() * c;
    let br = g.transpose() + g - p;
    Ok(tensor::sym_block2(&tl, &bl, &br))
}

/// A certification request.
#[derive(Debug, Clone)]
pub struct StabilityQuery<'a> {
    pub expanded: &'a ExpandedVertices,
    pub gain: &'a FeedbackGain,
    pub beta_tilde: f64,
    pub family: CertificateFamily,
    pub time_variation: TimeVariation,
    pub eta: f64,
    pub solver: SolverConfig,
}

impl<'a> StabilityQuery<'a> {
    pub fn new(expanded: &'a ExpandedVertices, gain: &'a FeedbackGain, beta_tilde: f64) -> Self {
        Self {
            expanded,
            gain,
            beta_tilde,
            family: CertificateFamily::PerVertex,
            time_variation: TimeVariation::Ti,
            eta: DEFAULT_CERT_ETA,
            solver: SolverConfig::default(),
        }
    }

    pub fn effective_family(&self) -> CertificateFamily {
        self.family.for_time_variation(self.time_variation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateStatus {
    Certified,
    NotCertified,
}

/// Outcome of [`certify`]. A `NotCertified` status is inconclusive: the
/// conditions are sufficient, not necessary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub status: CertificateStatus,
    pub beta_tilde: f64,
    /// MS rate `√β̃` implied when certified.
    pub beta: f64,
    pub eta: f64,
    pub family: CertificateFamily,
    /// Margin reported by the solver.
    pub solver_margin: f64,
    /// `min(λ_min(S_cmi^(k)), λ_min(P^(k)))` recomputed from the witness.
    pub verified_margin: f64,
    pub solver_status: SdpStatus,
    #[serde(with = "crate::io::matrix_list")]
    pub p: Vec<Matrix>,
    #[serde(with = "crate::io::matrix_rows")]
    pub g: Matrix,
    #[serde(with = "crate::io::matrix_rows")]
    pub k: Matrix,
}

impl GainCertificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::Certified
    }

    /// `P` used for vertex `k`.
    pub fn p_for(&self, k: usize) -> &Matrix {
        if self.p.len() == 1 {
            &self.p[0]
        } else {
            &self.p[k]
        }
    }
}

/// Smallest eigenvalue over all `S_cmi^(k)` and `P^(k)` for a candidate witness.
pub fn witness_margin(
    e: &ExpandedVertices,
    gain: &FeedbackGain,
    p: &[Matrix],
    g: &Matrix,
    beta_tilde: f64,
) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for k in 0..e.vertex_count() {
        let pk = if p.len() == 1 { &p[0] } else { &p[k] };
        let s = build_s_cmi(e, k, pk, g, gain, beta_tilde)?;
        margin = margin.min(tensor::min_eigenvalue(&s)?);
    }
    for pk in p {
        margin = margin.min(tensor::min_eigenvalue(pk)?);
    }
    Ok(margin)
}

/// Maximizes `t` subject to `S_cmi^(k) ⪰ tI`, `P^(k) ⪰ tI` and the
/// normalization `P^(k) ⪯ I` (the conditions are homogeneous in `(P, G)`);
/// certifies when `t* ≥ η` and an eigenvalue re-check of the witness agrees.
pub fn certify(q: &StabilityQuery) -> Result<GainCertificate> {
    check_beta_tilde(q.beta_tilde)?;
    if !(q.eta >= 0.0) {
        return Err(SmpError::OutOfRange {
            name: "eta".into(),
            reason: "margin must be non-negative".into(),
        });
    }
    let e = q.expanded;
    if q.gain.matrix().shape() != (e.m(), e.n()) {
        return Err(dim_err(
            "gain",
            format!("{}x{}", e.m(), e.n()),
            format!("{}x{}", q.gain.m(), q.gain.n()),
        ));
    }
    let nt = half_dim(e.n());
    let family = q.effective_family();
    let count = match family {
        CertificateFamily::PerVertex => e.vertex_count(),
        CertificateFamily::Identical => 1,
    };
    let mut alloc = VarAllocator::new();
    let ps: Vec<_> = (0..count).map(|_| alloc.sym(nt)).collect();
    let gv = alloc.mat(nt, nt);
    let builder = AffineBlockBuilder::new(alloc.dim());
    let compressed: Vec<Matrix> = (0..e.vertex_count())
        .map(|k| e.compressed_vertex(k, q.gain))
        .collect::<Result<_>>()?;

    let mut problem = SdpProblem::new(alloc.dim());
    for (k, c) in compressed.iter().enumerate() {
        let pv = ps[if count == 1 { 0 } else { k }];
        let vars = pv.range().chain(gv.range());
        problem.blocks.push(builder.build(vars, |z| {
            s_cmi_from_compressed(c, &pv.unpack(z), &gv.unpack(z), q.beta_tilde).expect("dimensions fixed above")
        }));
    }
    for pv in &ps {
        problem.blocks.push(builder.build(pv.range(), |z| pv.unpack(z)));
        problem
            .blocks
            .push(builder.build(pv.range(), |z| Matrix::identity(nt, nt) - pv.unpack(z)));
    }

    // start from P = I/2, G = I/2, which satisfies both normalization blocks
    let mut warm = vec![0.0; alloc.dim()];
    for pv in &ps {
        pv.pack_into(&(Matrix::identity(nt, nt) * 0.5), &mut warm);
    }
    gv.pack_into(&(Matrix::identity(nt, nt) * 0.5), &mut warm);

    let res = sdp::solve_feasibility(&problem, &q.solver, Some(&warm))?;
    if matches!(res.solution.status, SdpStatus::NumericalFailure) && !res.margin.is_finite() {
        return Err(SmpError::Solver("certification SDP failed".into()));
    }
    let p: Vec<Matrix> = ps.iter().map(|pv| pv.unpack(&res.z)).collect();
    let g = gv.unpack(&res.z);
    let verified = witness_margin(e, q.gain, &p, &g, q.beta_tilde)?;
    let certified = res.margin >= q.eta && verified >= q.eta.min(res.margin) - VERIFY_SLACK && verified > 0.0;
    Ok(GainCertificate {
        status: if certified {
            CertificateStatus::Certified
        } else {
            CertificateStatus::NotCertified
        },
        beta_tilde: q.beta_tilde,
        beta: q.beta_tilde.sqrt(),
        eta: q.eta,
        family,
        solver_margin: res.margin,
        verified_margin: verified,
        solver_status: res.solution.status,
        p,
        g,
        k: q.gain.matrix().clone(),
    })
}

/// Re-checks a stored certificate against the vertex set.
pub fn verify_certificate(e: &ExpandedVertices, cert: &GainCertificate) -> Result<bool> {
    let gain = FeedbackGain::new(cert.k.clone())?;
    let margin = witness_margin(e, &gain, &cert.p, &cert.g, cert.beta_tilde)?;
    Ok(margin >= -VERIFY_SLACK && cert.p.iter().all(|p| tensor::min_eigenvalue(p).map(|x| x > 0.0).unwrap_or(false)))
}

/// LMI blocks of the certification problem, exposed for solver dumps.
pub fn certification_blocks(q: &StabilityQuery) -> Result<Vec<LmiBlock>> {
    let e = q.expanded;
    let nt = half_dim(e.n());
    let mut alloc = VarAllocator::new();
    let count = match q.effective_family() {
        CertificateFamily::PerVertex => e.vertex_count(),
        CertificateFamily::Identical => 1,
    };
    let ps: Vec<_> = (0..count).map(|_| alloc.sym(nt)).collect();
    let gv = alloc.mat(nt, nt);
    let builder = AffineBlockBuilder::new(alloc.dim());
    let mut blocks = Vec::new();
    for k in 0..e.vertex_count() {
        let c = e.compressed_vertex(k, q.gain)?;
        let pv = ps[if count == 1 { 0 } else { k }];
        blocks.push(builder.build(pv.range().chain(gv.range()), |z| {
            s_cmi_from_compressed(&c, &pv.unpack(z), &gv.unpack(z), q.beta_tilde).expect("dimensions fixed")
        }));
    }
    Ok(blocks)
}
