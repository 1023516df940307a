//! A small dense semidefinite programming solver.
//!
//! Problems have the form
//!
//! ```text
//! minimize    cᵀz
//! subject to  F_j(z) = A_j0 + Σ_i z_i A_ji ⪰ 0      (LMI blocks)
//!             g_lᵀz ≤ h_l                            (scalar constraints)
//! ```
//!
//! and are solved with a primal log-det barrier method; see [`solver`].

mod builder;
mod solver;

pub use builder::{AffineBlockBuilder, MatVar, SymVar, VarAllocator};
pub use solver::{solve, solve_feasibility, FeasibilityResult};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SmpError};
use crate::tensor::Matrix;

/// One affine symmetric-matrix constraint `A_0 + Σ z_i A_i ⪰ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiBlock {
    pub size: usize,
    #[serde(with = "crate::io::matrix_rows")]
    pub constant: Matrix,
    /// `(variable index, coefficient)`; each variable appears at most once.
    pub terms: Vec<LmiTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiTerm {
    pub var: usize,
    #[serde(with = "crate::io::matrix_rows")]
    pub coeff: Matrix,
}

impl LmiBlock {
    pub fn constant(m: Matrix) -> Self {
        Self {
            size: m.nrows(),
            constant: m,
            terms: Vec::new(),
        }
    }

    pub fn evaluate(&self, z: &[f64]) -> Matrix {
        let mut f = self.constant.clone();
        for t in &self.terms {
            let zi = z[t.var];
            if zi != 0.0 {
                f += &t.coeff * zi;
            }
        }
        f
    }
}

/// `coeffs · z ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn slack(&self, z: &[f64]) -> f64 {
        self.bound - self.coeffs.iter().map(|(i, a)| a * z[*i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
    pub linear: Vec<LinearConstraint>,
}

impl SdpProblem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: vec![0.0; dim],
            blocks: Vec::new(),
            linear: Vec::new(),
        }
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, x)| c * x).sum()
    }

    /// Barrier degree: total block size plus scalar constraint count.
    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum::<usize>() + self.linear.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.objective.len() != self.dim {
            return Err(dim_err("SDP objective", self.dim, self.objective.len()));
        }
        for (j, b) in self.blocks.iter().enumerate() {
            if b.constant.shape() != (b.size, b.size) {
                return Err(dim_err(&format!("LMI block {j} constant"), b.size, b.constant.nrows()));
            }
            let mut seen = vec![false; self.dim];
            for t in &b.terms {
                if t.var >= self.dim {
                    return Err(SmpError::IndexOutOfRange {
                        index: t.var,
                        count: self.dim,
                    });
                }
                if seen[t.var] {
                    return Err(SmpError::InvalidInput(format!(
                        "variable {} repeated in LMI block {j}",
                        t.var
                    )));
                }
                seen[t.var] = true;
                if t.coeff.shape() != (b.size, b.size) {
                    return Err(dim_err(&format!("LMI block {j} coefficient"), b.size, t.coeff.nrows()));
                }
            }
        }
        for l in &self.linear {
            if let Some((i, _)) = l.coeffs.iter().find(|(i, _)| *i >= self.dim) {
                return Err(SmpError::IndexOutOfRange {
                    index: *i,
                    count: self.dim,
                });
            }
        }
        Ok(())
    }
}

/// Solver tolerances and barrier schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative duality-gap target `ν/t ≤ tol·max(1, |cᵀz|)`.
    pub tol: f64,
    /// Cap on the total number of Newton steps (both phases).
    pub max_iter: usize,
    /// Initial barrier weight `μ = 1/t`.
    pub mu0: f64,
    /// Factor applied to `μ` after each centering.
    pub mu_factor: f64,
    /// Centering stops once half the squared Newton decrement is below this.
    pub newton_tol: f64,
    /// Eigenvalue slack accepted by the verification pass.
    pub feas_tol: f64,
    /// Relative KKT stationarity accepted by the verification pass.
    pub kkt_tol: f64,
    /// Box `|z_i| ≤ R` used by the phase-1 and margin problems.
    pub box_radius: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            mu0: 1.0,
            mu_factor: 0.2,
            newton_tol: 1e-9,
            feas_tol: 1e-8,
            kkt_tol: 1e-6,
            box_radius: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    InfeasibleDetected,
    IterationCap,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub status: SdpStatus,
    /// Most negative block eigenvalue or scalar slack at `z` (positive when strictly feasible).
    pub residual: f64,
    /// Relative stationarity residual of the barrier-implied dual point.
    pub kkt_residual: f64,
    /// Duality-gap bound `ν/t` at exit.
    pub gap: f64,
    pub iterations: usize,
    /// Phase-1 margin when phase 1 ran.
    pub phase1_margin: Option<f64>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}
