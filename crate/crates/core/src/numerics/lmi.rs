//! Complex linear matrix inequalities on top of the real-cone interior-point core.
//!
//! An [`LmiProblem`] reads
//!
//! ```text
//! maximize   c^T x
//! subject to F0_j + Σ_i x_i F_ij ⪰ 0   for every block j
//!            x_i ≥ 0                   for nonnegative variables
//! ```
//!
//! Complex blocks go through [`real_embed`]; blocks whose data are all real are
//! passed through directly.

use super::hermitian::{de_embed, real_embed, HermitianMatrix, RMatrix, RVector};
use super::ipm::{self, ConeProgram, ConeStatus, IpmSettings};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
const MAX_BLOCK_DIM: usize = 128;
const MAX_VARS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarSign {
    Free,
    Nonnegative,
}

#[derive(Clone, Debug)]
pub struct LmiBlock {
    pub f0: HermitianMatrix,
    /// Sparse list of `(variable index, F_i)`; absent variables have `F_i = 0`.
    pub coeffs: Vec<(usize, HermitianMatrix)>,
}

impl LmiBlock {
    pub fn new(f0: HermitianMatrix) -> Self {
        Self { f0, coeffs: Vec::new() }
    }

    pub fn with(mut self, var: usize, f: HermitianMatrix) -> Self {
        self.coeffs.push((var, f));
        self
    }

    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    /// `F0 + Σ x_i F_i`.
    pub fn evaluate(&self, x: &[f64]) -> HermitianMatrix {
        let mut m = self.f0.as_matrix().clone();
        for (i, f) in &self.coeffs {
            m += f.as_matrix() * nalgebra::Complex::new(x[*i], 0.0);
        }
        HermitianMatrix::hermitian_part(&m)
    }

    fn is_real(&self) -> bool {
        self.f0.is_real() && self.coeffs.iter().all(|(_, f)| f.is_real())
    }
}

#[derive(Clone, Debug)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
    pub var_sign: Vec<VarSign>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    /// `Z_j ⪰ 0` with `Σ_j tr(F_ij Z_j) + c_i = ±s_i` (sign multipliers for nonnegative variables).
    pub dual_blocks: Vec<HermitianMatrix>,
    /// Multipliers of `x_i ≥ 0`; zero for free variables.
    pub sign_multipliers: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// For `Infeasible`: `Z_j ⪰ 0` with `Σ tr(F0_j Z_j) < 0`, `Σ tr(F_ij Z_j) = 0` for free
    /// and `≤ 0` for nonnegative variables.
    pub certificate: Option<Vec<HermitianMatrix>>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub enum Feasibility {
    /// A point with every block PSD (to tolerance).
    Feasible { x: Vec<f64>, margin: f64 },
    /// Normalized infeasibility certificate, see [`SdpSolution::certificate`].
    Infeasible { certificate: Vec<HermitianMatrix>, margin: f64 },
    /// The phase-1 solve did not converge.
    Indeterminate { margin: f64 },
}

impl LmiProblem {
    pub fn new(num_vars: usize, objective: Vec<f64>) -> Self {
        Self {
            num_vars,
            objective,
            blocks: Vec::new(),
            var_sign: vec![VarSign::Free; num_vars],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars || self.var_sign.len() != self.num_vars {
            return Err(Error::Structural(
                "objective and sign vectors must have one entry per variable".into(),
            ));
        }
        if self.num_vars > MAX_VARS {
            return Err(Error::Config(format!(
                "{} variables exceeds the limit of {MAX_VARS}",
                self.num_vars
            )));
        }
        for (j, b) in self.blocks.iter().enumerate() {
            if b.dim() > MAX_BLOCK_DIM {
                return Err(Error::Config(format!(
                    "block {j} has dimension {} > {MAX_BLOCK_DIM}",
                    b.dim()
                )));
            }
            for (i, f) in &b.coeffs {
                if *i >= self.num_vars {
                    return Err(Error::Structural(format!(
                        "block {j} references variable {i} out of range"
                    )));
                }
                if f.dim() != b.dim() {
                    return Err(Error::Structural(format!(
                        "block {j}: coefficient of variable {i} has dimension {} != {}",
                        f.dim(),
                        b.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over all blocks and sign constraints at `x`.
    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for b in &self.blocks {
            m = m.min(super::hermitian::hermitian_eig(&b.evaluate(x)).min());
        }
        for (i, s) in self.var_sign.iter().enumerate() {
            if *s == VarSign::Nonnegative {
                m = m.min(x[i]);
            }
        }
        m
    }
}

/// Real embedding bookkeeping for one LMI block.
#[derive(Clone, Copy)]
struct BlockMap {
    embedded: bool,
}

fn to_real(h: &HermitianMatrix, embedded: bool) -> RMatrix {
    if embedded {
        real_embed(h)
    } else {
        h.real_part()
    }
}

fn from_real(x: &RMatrix, embedded: bool) -> HermitianMatrix {
    if embedded {
        de_embed(x).scale(2.0)
    } else {
        HermitianMatrix::hermitian_part(&x.map(|v| nalgebra::Complex::new(v, 0.0)))
    }
}

/// Builds the standard-form program. The first `p.blocks.len()` cone blocks are the LMI
/// blocks, followed by one 1x1 block per nonnegative variable. `scales` divides block data.
fn build_program(
    p: &LmiProblem,
    scales: &[f64],
    extra_vars: usize,
) -> (ConeProgram, Vec<BlockMap>, Vec<usize>) {
    let maps: Vec<BlockMap> = p
        .blocks
        .iter()
        .map(|b| BlockMap { embedded: !b.is_real() })
        .collect();
    let nonneg: Vec<usize> = (0..p.num_vars)
        .filter(|&i| p.var_sign[i] == VarSign::Nonnegative)
        .collect();
    let mut dims: Vec<usize> = p
        .blocks
        .iter()
        .zip(&maps)
        .map(|(b, m)| if m.embedded { 2 * b.dim() } else { b.dim() })
        .collect();
    dims.extend(std::iter::repeat(1).take(nonneg.len()));
    let mut prog = ConeProgram::new(dims, p.num_vars + extra_vars);
    for (j, (b, m)) in p.blocks.iter().zip(&maps).enumerate() {
        prog.c[j] = to_real(&b.f0, m.embedded) / scales[j];
        for (i, f) in &b.coeffs {
            prog.add_a(*i, j, &to_real(f, m.embedded), -1.0 / scales[j]);
        }
    }
    let nb = p.blocks.len();
    for (k, &i) in nonneg.iter().enumerate() {
        prog.add_a_scalar(i, nb + k, -1.0);
    }
    (prog, maps, nonneg)
}

/// Solves the LMI problem. When the interior-point iteration does not converge, a phase-1
/// problem decides between `Infeasible` (with certificate), `Unbounded` and `MaxIter`.
pub fn sdp_solve(p: &LmiProblem, tol: f64, max_iter: usize) -> Result<SdpSolution> {
    p.validate()?;
    let scales = vec![1.0; p.blocks.len()];
    let (mut prog, maps, nonneg) = build_program(p, &scales, 0);
    for (i, c) in p.objective.iter().enumerate() {
        prog.b[i] = *c;
    }
    let sol = ipm::solve(&prog, &IpmSettings { tol, max_iter });

    let x: Vec<f64> = sol.y.iter().copied().collect();
    let dual_blocks: Vec<HermitianMatrix> = maps
        .iter()
        .enumerate()
        .map(|(j, m)| from_real(&sol.x[j], m.embedded))
        .collect();
    let mut sign_multipliers = vec![0.0; p.num_vars];
    for (k, &i) in nonneg.iter().enumerate() {
        sign_multipliers[i] = sol.x[p.blocks.len() + k][(0, 0)];
    }
    let objective = p.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    let mut out = SdpSolution {
        status: SdpStatus::Optimal,
        x,
        dual_blocks,
        sign_multipliers,
        objective,
        kkt_residual: sol.residual,
        certificate: None,
        iterations: sol.iterations,
    };
    if sol.status == ConeStatus::Converged {
        return Ok(out);
    }
    match lmi_feasibility(p, tol, max_iter)? {
        Feasibility::Infeasible { certificate, .. } => {
            out.status = SdpStatus::Infeasible;
            out.certificate = Some(certificate);
        }
        Feasibility::Feasible { .. } => {
            // A feasible LMI whose optimum is not reached: the primal objective grows without
            // bound exactly when the dual (P) is infeasible, which shows up as a diverging y.
            let ynorm = sol.y.amax();
            let bounded_scale = 1e6 * (1.0 + p.objective.iter().fold(0.0_f64, |a, c| a.max(c.abs())));
            out.status = if sol.status == ConeStatus::Stalled || ynorm > bounded_scale {
                SdpStatus::Unbounded
            } else {
                SdpStatus::MaxIter
            };
        }
        Feasibility::Indeterminate { .. } => out.status = SdpStatus::MaxIter,
    }
    Ok(out)
}

/// Phase-1 feasibility: maximize `t` subject to `F0 + Σ x_i F_i ⪰ t I` (each block scaled to
/// unit max-abs), `x_i ≥ t` for nonnegative variables and `t ≤ 1`.
/// `t* < -tol` is reported as infeasible with the dual block certificate.
pub fn lmi_feasibility(p: &LmiProblem, tol: f64, max_iter: usize) -> Result<Feasibility> {
    p.validate()?;
    let scales: Vec<f64> = p
        .blocks
        .iter()
        .map(|b| {
            let s = b
                .coeffs
                .iter()
                .fold(b.f0.max_abs(), |a, (_, f)| a.max(f.max_abs()));
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let (mut prog, maps, nonneg) = build_program(p, &scales, 1);
    let t = p.num_vars;
    prog.b[t] = 1.0;
    for (j, d) in prog.dims.clone().iter().enumerate() {
        if j < p.blocks.len() {
            prog.add_a(t, j, &RMatrix::identity(*d, *d), 1.0);
        } else {
            prog.add_a_scalar(t, j, 1.0);
        }
    }
    // Cap block: 1 - t ≥ 0.
    let cap = prog.dims.len();
    prog.dims.push(1);
    prog.c.push(RMatrix::from_element(1, 1, 1.0));
    for row in prog.a.iter_mut() {
        row.push(None);
    }
    prog.add_a_scalar(t, cap, 1.0);

    let sol = ipm::solve(&prog, &IpmSettings { tol, max_iter });
    let margin = sol.y[t];
    let x: Vec<f64> = sol.y.iter().take(p.num_vars).copied().collect();
    let _ = nonneg;
    if sol.status != ConeStatus::Converged {
        // Accept a clear verdict from the best iterate when it is decisive.
        if sol.residual < tol.sqrt() && margin.abs() > tol.sqrt() {
            // fall through to the verdict below
        } else {
            return Ok(Feasibility::Indeterminate { margin });
        }
    }
    if margin >= -tol {
        Ok(Feasibility::Feasible { x, margin })
    } else {
        let certificate = maps
            .iter()
            .enumerate()
            .map(|(j, m)| from_real(&sol.x[j], m.embedded).scale(1.0 / scales[j]))
            .collect();
        Ok(Feasibility::Infeasible { certificate, margin })
    }
}

/// Checks an infeasibility certificate by direct arithmetic; returns `tr(F0 Z)` (negative
/// for a valid certificate) or `None` when a coupling condition fails.
pub fn verify_certificate(p: &LmiProblem, z: &[HermitianMatrix], tol: f64) -> Option<f64> {
    let mut f0z = 0.0;
    let mut fz = RVector::zeros(p.num_vars);
    let mut scale = 0.0_f64;
    for (b, zj) in p.blocks.iter().zip(z) {
        if super::hermitian::hermitian_eig(zj).min() < -tol * zj.max_abs().max(1.0) {
            return None;
        }
        f0z += b.f0.trace_product(zj);
        scale = scale.max(b.f0.max_abs() * zj.trace().abs());
        for (i, f) in &b.coeffs {
            fz[*i] += f.trace_product(zj);
            scale = scale.max(f.max_abs() * zj.trace().abs());
        }
    }
    for i in 0..p.num_vars {
        let bad = match p.var_sign[i] {
            VarSign::Free => fz[i].abs() > tol * scale.max(1e-300),
            VarSign::Nonnegative => fz[i] > tol * scale.max(1e-300),
        };
        if bad {
            return None;
        }
    }
    Some(f0z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;

    fn herm(rows: &[[(f64, f64); 2]; 2]) -> HermitianMatrix {
        let m = crate::numerics::hermitian::CMatrix::from_fn(2, 2, |i, j| {
            Complex::new(rows[i][j].0, rows[i][j].1)
        });
        HermitianMatrix::new(m).unwrap()
    }

    #[test]
    fn min_eigenvalue_as_lmi() {
        // maximize t s.t. Q - t I ⪰ 0.
        let q = herm(&[[(2.0, 0.0), (0.5, 0.5)], [(0.5, -0.5), (1.0, 0.0)]]);
        let mut p = LmiProblem::new(1, vec![1.0]);
        p.blocks
            .push(LmiBlock::new(q.clone()).with(0, HermitianMatrix::identity(2).scale(-1.0)));
        let sol = sdp_solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let lmin = crate::numerics::hermitian::hermitian_eig(&q).min();
        assert!((sol.objective - lmin).abs() < 1e-7);
        // Dual: tr(Z) = 1, objective tr(Q Z).
        assert!((sol.dual_blocks[0].trace() - 1.0).abs() < 1e-7);
        assert!((q.trace_product(&sol.dual_blocks[0]) - lmin).abs() < 1e-7);
    }

    #[test]
    fn infeasible_lmi_has_certificate() {
        // -I + x * diag(1, -1) ⪰ 0 is infeasible.
        let mut p = LmiProblem::new(1, vec![0.0]);
        p.blocks.push(
            LmiBlock::new(HermitianMatrix::identity(2).scale(-1.0))
                .with(0, HermitianMatrix::diagonal(&[1.0, -1.0])),
        );
        match lmi_feasibility(&p, 1e-8, 100).unwrap() {
            Feasibility::Infeasible { certificate, .. } => {
                let v = verify_certificate(&p, &certificate, 1e-6).expect("valid certificate");
                assert!(v < 0.0);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let sol = sdp_solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn nonnegative_variable_binds() {
        // maximize -x s.t. x ≥ 0 and [[1, 0],[0, 1 + x]] ⪰ 0 -> 0.
        let mut p = LmiProblem::new(1, vec![-1.0]);
        p.var_sign[0] = VarSign::Nonnegative;
        p.blocks.push(
            LmiBlock::new(HermitianMatrix::identity(2)).with(0, HermitianMatrix::diagonal(&[0.0, 1.0])),
        );
        let sol = sdp_solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.x[0].abs() < 1e-7);
        assert!((sol.sign_multipliers[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unbounded_lmi() {
        // maximize x s.t. I + x I ⪰ 0.
        let mut p = LmiProblem::new(1, vec![1.0]);
        p.blocks
            .push(LmiBlock::new(HermitianMatrix::identity(2)).with(0, HermitianMatrix::identity(2)));
        let sol = sdp_solve(&p, 1e-8, 200).unwrap();
        assert_eq!(sol.status, SdpStatus::Unbounded);
    }
}
