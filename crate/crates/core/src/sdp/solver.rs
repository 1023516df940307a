//! Primal log-det barrier path following.
//!
//! For a barrier weight `t` the centering problem is
//! `min t·cᵀz − Σ_j log det F_j(z) − Σ_l log(h_l − g_lᵀz)`, solved by damped
//! Newton steps that keep every iterate strictly feasible. `t` grows by
//! `1/mu_factor` after each centering until the gap bound `ν/t` is small.
//! A starting point is found with the phase-1 problem
//! `max s  s.t.  F_j(z) ⪰ sI, g_lᵀz + s ≤ h_l, |z_i| ≤ R`.

use nalgebra::Cholesky;

use super::{LinearConstraint, LmiTerm, SdpProblem, SdpSolution, SdpStatus, SolverConfig};
use crate::error::{Result, SmpError};
use crate::tensor::{self, Matrix, SymMatrix};

const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-14;
const UNBOUNDED: f64 = 1e12;
/// Newton steps allowed per centering before it counts as stalled.
const CENTERING_CAP: usize = 60;

/// Barrier value at `z`, or `None` when `z` is not strictly feasible.
fn barrier_value(p: &SdpProblem, z: &[f64]) -> Option<f64> {
    let mut phi = 0.0;
    for b in &p.blocks {
        let chol = Cholesky::new(b.evaluate(z))?;
        let logdet: f64 = chol.l_dirty().diagonal().iter().take(b.size).map(|d| d.ln()).sum::<f64>() * 2.0;
        if !logdet.is_finite() {
            return None;
        }
        phi -= logdet;
    }
    for l in &p.linear {
        let s = l.slack(z);
        if !(s > 0.0) {
            return None;
        }
        phi -= s.ln();
    }
    Some(phi)
}

struct Derivatives {
    /// Gradient of the barrier alone.
    grad: Vec<f64>,
    hess: Matrix,
}

fn derivatives(p: &SdpProblem, z: &[f64]) -> Option<Derivatives> {
    let dim = p.dim;
    let mut grad = vec![0.0; dim];
    let mut hess = Matrix::zeros(dim, dim);
    for b in &p.blocks {
        let finv = Cholesky::new(b.evaluate(z))?.inverse();
        let prods: Vec<Matrix> = b.terms.iter().map(|t| &finv * &t.coeff).collect();
        let trans: Vec<Matrix> = prods.iter().map(|m| m.transpose()).collect();
        for (a, ta) in b.terms.iter().enumerate() {
            grad[ta.var] -= prods[a].trace();
            for (c, tc) in b.terms.iter().enumerate().skip(a) {
                let h = prods[a].dot(&trans[c]);
                hess[(ta.var, tc.var)] += h;
                if a != c {
                    hess[(tc.var, ta.var)] += h;
                }
            }
        }
    }
    for l in &p.linear {
        let s = l.slack(z);
        if !(s > 0.0) {
            return None;
        }
        for &(i, ai) in &l.coeffs {
            grad[i] += ai / s;
            for &(k, ak) in &l.coeffs {
                hess[(i, k)] += ai * ak / (s * s);
            }
        }
    }
    Some(Derivatives { grad, hess })
}

/// Solves `H d = −g`, adding a growing ridge when `H` is not positive definite.
fn newton_direction(hess: &Matrix, g: &[f64]) -> Option<Vec<f64>> {
    let dim = g.len();
    let rhs = nalgebra::DVector::from_iterator(dim, g.iter().map(|x| -x));
    let scale = (0..dim).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..dim {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = Cholesky::new(h) {
            let d = ch.solve(&rhs);
            if d.iter().all(|x| x.is_finite()) {
                return Some(d.as_slice().to_vec());
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Centering {
    Centered,
    Stalled,
    IterationCap,
    Failed,
}

/// Damped Newton centering for weight `t`; updates `z` in place.
fn center(p: &SdpProblem, z: &mut [f64], t: f64, cfg: &SolverConfig, iters: &mut usize) -> Centering {
    let mut f = match barrier_value(p, z) {
        Some(phi) => t * p.objective_value(z) + phi,
        None => return Centering::Failed,
    };
    let mut steps = 0;
    loop {
        if *iters >= cfg.max_iter {
            return Centering::IterationCap;
        }
        if steps >= CENTERING_CAP {
            return Centering::Stalled;
        }
        steps += 1;
        let Some(d) = derivatives(p, z) else {
            return Centering::Failed;
        };
        let g: Vec<f64> = d.grad.iter().zip(&p.objective).map(|(gb, c)| t * c + gb).collect();
        let Some(dz) = newton_direction(&d.hess, &g) else {
            return Centering::Failed;
        };
        *iters += 1;
        let slope: f64 = g.iter().zip(&dz).map(|(a, b)| a * b).sum();
        if -slope / 2.0 <= cfg.newton_tol {
            return Centering::Centered;
        }
        let mut alpha = 1.0;
        let mut trial = z.to_vec();
        loop {
            for i in 0..z.len() {
                trial[i] = z[i] + alpha * dz[i];
            }
            if let Some(phi) = barrier_value(p, &trial) {
                let ft = t * p.objective_value(&trial) + phi;
                if ft <= f + ARMIJO * alpha * slope {
                    // no measurable decrease left at this precision
                    let flat = f - ft <= 1e-15 * f.abs().max(1.0);
                    f = ft;
                    if flat && alpha < 1.0 {
                        z.copy_from_slice(&trial);
                        return Centering::Stalled;
                    }
                    break;
                }
            }
            alpha *= BACKTRACK;
            if alpha < MIN_STEP {
                return Centering::Stalled;
            }
        }
        z.copy_from_slice(&trial);
        if z.iter().any(|x| x.abs() > UNBOUNDED) {
            return Centering::Failed;
        }
    }
}

fn strictly_feasible(p: &SdpProblem, z: &[f64]) -> bool {
    z.len() == p.dim && z.iter().all(|x| x.is_finite()) && barrier_value(p, z).is_some()
}

/// Smallest block eigenvalue or scalar slack at `z`.
fn constraint_residual(p: &SdpProblem, z: &[f64]) -> f64 {
    let mut r = f64::INFINITY;
    for b in &p.blocks {
        let min = SymMatrix::new(&b.evaluate(z))
            .and_then(|s| tensor::sym_eig(&s))
            .map(|e| e.min_eigenvalue())
            .unwrap_or(f64::NEG_INFINITY);
        r = r.min(min);
    }
    for l in &p.linear {
        r = r.min(l.slack(z));
    }
    r
}

/// Verifies the dual point implied by one Newton step at `(z, t)`:
/// `W_j = (F_j⁻¹ − F_j⁻¹ ΔF_j F_j⁻¹)/t` and `λ_l = (1/s_l + g_lᵀΔz/s_l²)/t`.
/// Returns the larger of the relative stationarity residual
/// `‖c − Σ tr(A_ji W_j) + Σ λ_l g_l‖∞ / (1 + ‖c‖∞)` and the relative dual
/// infeasibility (negative eigenvalues of `W_j`, negative `λ_l`).
fn kkt_residual(p: &SdpProblem, z: &[f64], t: f64) -> f64 {
    let Some(d) = derivatives(p, z) else {
        return f64::INFINITY;
    };
    let g: Vec<f64> = d.grad.iter().zip(&p.objective).map(|(gb, c)| t * c + gb).collect();
    let Some(dz) = newton_direction(&d.hess, &g) else {
        return f64::INFINITY;
    };
    let mut r = p.objective.clone();
    let mut dual_neg = 0.0f64;
    let mut dual_scale = 0.0f64;
    for b in &p.blocks {
        let Some(chol) = Cholesky::new(b.evaluate(z)) else {
            return f64::INFINITY;
        };
        let finv = chol.inverse();
        let mut df = Matrix::zeros(b.size, b.size);
        for term in &b.terms {
            df += &term.coeff * dz[term.var];
        }
        let w = (&finv - &finv * df * &finv) / t;
        for term in &b.terms {
            r[term.var] -= w.dot(&term.coeff);
        }
        let eig = SymMatrix::new(&w).and_then(|s| tensor::sym_eig(&s));
        match eig {
            Ok(e) => {
                dual_neg = dual_neg.max(-e.min_eigenvalue());
                dual_scale = dual_scale.max(e.max_eigenvalue());
            }
            Err(_) => return f64::INFINITY,
        }
    }
    for l in &p.linear {
        let s = l.slack(z);
        let gd: f64 = l.coeffs.iter().map(|(i, a)| a * dz[*i]).sum();
        let lam = (1.0 / s + gd / (s * s)) / t;
        for &(i, a) in &l.coeffs {
            r[i] += lam * a;
        }
        dual_neg = dual_neg.max(-lam);
        dual_scale = dual_scale.max(lam);
    }
    let cmax = p.objective.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let stationarity = r.iter().fold(0.0f64, |a, x| a.max(x.abs())) / (1.0 + cmax);
    stationarity.max(dual_neg / (1.0 + dual_scale))
}

struct PathResult {
    status: SdpStatus,
    t: f64,
}

/// Path following from a strictly feasible `z`. `stop` is consulted after
/// every centering and may end the run early with a status.
fn follow_path(
    p: &SdpProblem,
    z: &mut [f64],
    cfg: &SolverConfig,
    iters: &mut usize,
    mut stop: impl FnMut(&[f64], f64) -> Option<SdpStatus>,
) -> PathResult {
    let nu = p.degree() as f64;
    let mut t = 1.0 / cfg.mu0;
    loop {
        let outcome = center(p, z, t, cfg, iters);
        match outcome {
            Centering::Failed => {
                return PathResult {
                    status: SdpStatus::NumericalFailure,
                    t,
                }
            }
            Centering::IterationCap => {
                return PathResult {
                    status: SdpStatus::IterationCap,
                    t,
                }
            }
            Centering::Centered | Centering::Stalled => {}
        }
        let gap = nu / t;
        if let Some(status) = stop(z, gap) {
            return PathResult { status, t };
        }
        let scale = p.objective_value(z).abs().max(1.0);
        if gap <= cfg.tol * scale {
            return PathResult {
                status: SdpStatus::Optimal,
                t,
            };
        }
        if outcome == Centering::Stalled {
            // progress is limited by round-off; accept a near-converged point
            let status = if gap <= 1e-6 * scale {
                SdpStatus::Optimal
            } else {
                SdpStatus::NumericalFailure
            };
            return PathResult { status, t };
        }
        t /= cfg.mu_factor;
    }
}

fn with_margin_variable(p: &SdpProblem, shift_linear: bool, radius: f64) -> SdpProblem {
    let s = p.dim;
    let mut q = SdpProblem::new(p.dim + 1);
    q.objective[s] = -1.0;
    for b in &p.blocks {
        let mut nb = b.clone();
        nb.terms.push(LmiTerm {
            var: s,
            coeff: -Matrix::identity(b.size, b.size),
        });
        q.blocks.push(nb);
    }
    for l in &p.linear {
        let mut nl = l.clone();
        if shift_linear {
            nl.coeffs.push((s, 1.0));
        }
        q.linear.push(nl);
    }
    for i in 0..p.dim {
        q.linear.push(LinearConstraint {
            coeffs: vec![(i, 1.0)],
            bound: radius,
        });
        q.linear.push(LinearConstraint {
            coeffs: vec![(i, -1.0)],
            bound: radius,
        });
    }
    q
}

fn initial_margin(p: &SdpProblem, z: &[f64]) -> f64 {
    let r = constraint_residual(p, z);
    if r.is_finite() {
        r - 1.0
    } else {
        -1.0
    }
}

/// Solves `p`, starting from `warm` when it is strictly feasible.
pub fn solve(p: &SdpProblem, cfg: &SolverConfig, warm: Option<&[f64]>) -> Result<SdpSolution> {
    p.check()?;
    if let Some(w) = warm {
        if w.len() != p.dim {
            return Err(crate::error::dim_err("warm start", p.dim, w.len()));
        }
    }
    let mut iters = 0;
    let mut phase1_margin = None;
    let mut z: Vec<f64> = match warm {
        Some(w) if strictly_feasible(p, w) => w.to_vec(),
        _ => {
            let z0: Vec<f64> = warm
                .map(|w| w.iter().map(|x| x.clamp(-0.5 * cfg.box_radius, 0.5 * cfg.box_radius)).collect())
                .unwrap_or_else(|| vec![0.0; p.dim]);
            match phase_one(p, &z0, cfg, &mut iters) {
                PhaseOne::Feasible(z, s) => {
                    phase1_margin = Some(s);
                    z
                }
                PhaseOne::Infeasible(z, s) => {
                    return Ok(finish(p, z, SdpStatus::InfeasibleDetected, f64::NAN, iters, Some(s), cfg));
                }
                PhaseOne::Failed(z, status) => {
                    return Ok(finish(p, z, status, f64::NAN, iters, None, cfg));
                }
            }
        }
    };
    if p.blocks.is_empty() && p.linear.is_empty() {
        let status = if p.objective.iter().all(|c| *c == 0.0) {
            SdpStatus::Optimal
        } else {
            SdpStatus::NumericalFailure
        };
        return Ok(finish(p, z, status, f64::INFINITY, iters, phase1_margin, cfg));
    }
    let res = follow_path(p, &mut z, cfg, &mut iters, |_, _| None);
    Ok(finish(p, z, res.status, res.t, iters, phase1_margin, cfg))
}

enum PhaseOne {
    Feasible(Vec<f64>, f64),
    Infeasible(Vec<f64>, f64),
    Failed(Vec<f64>, SdpStatus),
}

fn phase_one(p: &SdpProblem, z0: &[f64], cfg: &SolverConfig, iters: &mut usize) -> PhaseOne {
    let q = with_margin_variable(p, true, cfg.box_radius);
    let s_idx = p.dim;
    let mut y = z0.to_vec();
    y.push(initial_margin(p, z0));
    let mut verdict: Option<bool> = None;
    let res = follow_path(&q, &mut y, cfg, iters, |y, gap| {
        let s = y[s_idx];
        if s > 0.0 {
            verdict = Some(true);
            Some(SdpStatus::Optimal)
        } else if s + gap < 0.0 {
            verdict = Some(false);
            Some(SdpStatus::InfeasibleDetected)
        } else {
            None
        }
    });
    let s = y[s_idx];
    y.truncate(s_idx);
    match verdict {
        Some(true) => PhaseOne::Feasible(y, s),
        Some(false) => PhaseOne::Infeasible(y, s),
        // converged with s ≤ 0: no strictly feasible point within tolerance
        None if res.status == SdpStatus::Optimal => PhaseOne::Infeasible(y, s),
        None => PhaseOne::Failed(y, res.status),
    }
}

fn finish(
    p: &SdpProblem,
    z: Vec<f64>,
    mut status: SdpStatus,
    t: f64,
    iterations: usize,
    phase1_margin: Option<f64>,
    cfg: &SolverConfig,
) -> SdpSolution {
    let residual = constraint_residual(p, &z);
    let kkt = if t.is_finite() { kkt_residual(p, &z, t) } else { f64::NAN };
    if status == SdpStatus::Optimal && (residual < -cfg.feas_tol || !(kkt <= cfg.kkt_tol)) && t.is_finite() {
        status = SdpStatus::NumericalFailure;
    }
    SdpSolution {
        objective: p.objective_value(&z),
        z,
        status,
        residual,
        kkt_residual: kkt,
        gap: p.degree() as f64 / t,
        iterations,
        phase1_margin,
    }
}

/// Outcome of [`solve_feasibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    /// Largest `t` with every block `⪰ tI` and every scalar slack `≥ t`.
    pub margin: f64,
    pub z: Vec<f64>,
    pub solution: SdpSolution,
}

impl FeasibilityResult {
    pub fn witness(&self, eta: f64) -> Option<&[f64]> {
        (self.solution.is_optimal() && self.margin >= eta).then_some(self.z.as_slice())
    }
}

/// Maximizes the uniform margin `t` of all constraints of `p` (its objective
/// is ignored) inside the box `|z_i| ≤ box_radius`.
pub fn solve_feasibility(p: &SdpProblem, cfg: &SolverConfig, warm: Option<&[f64]>) -> Result<FeasibilityResult> {
    p.check()?;
    let q = with_margin_variable(p, true, cfg.box_radius);
    let mut y: Vec<f64> = match warm {
        Some(w) if w.len() == p.dim => w.iter().map(|x| x.clamp(-0.5 * cfg.box_radius, 0.5 * cfg.box_radius)).collect(),
        _ => vec![0.0; p.dim],
    };
    let margin0 = initial_margin(p, &y);
    y.push(margin0);
    let mut iters = 0;
    let res = follow_path(&q, &mut y, cfg, &mut iters, |_, _| None);
    let sol = finish(&q, y.clone(), res.status, res.t, iters, None, cfg);
    if sol.status == SdpStatus::NumericalFailure && sol.iterations == 0 {
        return Err(SmpError::Solver("margin problem could not be started".into()));
    }
    let margin = y[p.dim];
    y.truncate(p.dim);
    Ok(FeasibilityResult { margin, z: y, solution: sol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::LmiBlock;

    fn m(rows: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, rows, data)
    }

    fn two_by_two() -> SdpProblem {
        // min z  s.t. [[z,1],[1,z]] ⪰ 0
        let mut p = SdpProblem::new(1);
        p.objective[0] = 1.0;
        p.blocks.push(LmiBlock {
            size: 2,
            constant: m(2, &[0.0, 1.0, 1.0, 0.0]),
            terms: vec![LmiTerm {
                var: 0,
                coeff: Matrix::identity(2, 2),
            }],
        });
        p
    }

    #[test]
    fn analytic_two_by_two() {
        let sol = solve(&two_by_two(), &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "{sol:?}");
        assert!((sol.z[0] - 1.0).abs() < 1e-6, "{}", sol.z[0]);
        assert!(sol.phase1_margin.is_some());
    }

    #[test]
    fn warm_start_skips_phase_one() {
        let sol = solve(&two_by_two(), &SolverConfig::default(), Some(&[3.0])).unwrap();
        assert!(sol.phase1_margin.is_none());
        assert!((sol.z[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_negative_block_is_infeasible() {
        let mut p = SdpProblem::new(1);
        p.blocks.push(LmiBlock {
            size: 1,
            constant: m(1, &[-1.0]),
            terms: vec![LmiTerm {
                var: 0,
                coeff: Matrix::zeros(1, 1),
            }],
        });
        let sol = solve(&p, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.status, SdpStatus::InfeasibleDetected);
    }

    #[test]
    fn margin_of_constant_blocks() {
        let mut p = SdpProblem::new(1);
        p.blocks.push(LmiBlock {
            size: 2,
            constant: Matrix::identity(2, 2),
            terms: vec![LmiTerm {
                var: 0,
                coeff: Matrix::zeros(2, 2),
            }],
        });
        let r = solve_feasibility(&p, &SolverConfig::default(), None).unwrap();
        assert!((r.margin - 1.0).abs() < 1e-6, "{r:?}");
        assert!(r.witness(0.5).is_some());

        let mut q = SdpProblem::new(1);
        q.blocks.push(LmiBlock::constant(m(2, &[1.0, 0.0, 0.0, -1.0])));
        let r = solve_feasibility(&q, &SolverConfig::default(), None).unwrap();
        assert!((r.margin + 1.0).abs() < 1e-6);
        assert!(r.witness(0.0).is_none());
    }

    #[test]
    fn linear_constraints_bound_the_objective() {
        // min -z0 - z1  s.t. z0 + z1 ≤ 1, diag(z0, z1) ⪰ 0
        let mut p = SdpProblem::new(2);
        p.objective = vec![-1.0, -1.0];
        p.blocks.push(LmiBlock {
            size: 2,
            constant: Matrix::zeros(2, 2),
            terms: vec![
                LmiTerm {
                    var: 0,
                    coeff: m(2, &[1.0, 0.0, 0.0, 0.0]),
                },
                LmiTerm {
                    var: 1,
                    coeff: m(2, &[0.0, 0.0, 0.0, 1.0]),
                },
            ],
        });
        p.linear.push(LinearConstraint {
            coeffs: vec![(0, 1.0), (1, 1.0)],
            bound: 1.0,
        });
        let sol = solve(&p, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "{sol:?}");
        assert!((sol.objective + 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_iterates() {
        let a = solve(&two_by_two(), &SolverConfig::default(), None).unwrap();
        let b = solve(&two_by_two(), &SolverConfig::default(), None).unwrap();
        assert_eq!(a, b);
    }
}
