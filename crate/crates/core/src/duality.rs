//! Uplink-downlink duality with an indefinite uplink noise matrix `λI − Q`.
//!
//! A fixed point of the uplink power update with every `Z_k = λI − Q + Σ_{i≠k} q_i h_i h_i^H`
//! positive definite, together with a coupling matrix certified as an M-matrix, is an
//! optimal primal-dual pair for the weighted downlink problem: `q` is feasible for its
//! dual LMI, the recovered downlink powers are nonnegative, and both objectives equal
//! `σ² Σ q`.

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::Serialize;

use crate::bfim::{q_b_aoa, q_beta, BeamformerSet, BetaMatrix, Scenario};
use crate::error::{Error, Result};
use crate::model::SensingMoments;
use crate::numerics::{
    hermitian_eig, lmi_feasibility, sdp_solve, CMatrix, CVector, Feasibility, HermitianMatrix, LmiBlock,
    LmiProblem, RMatrix, RVector, SdpStatus, VarSign, C64, DEFAULT_MAX_ITER,
};
use crate::sdr::{admissibility_lmi, extract_rank_one, solve_weighted_power_sdr, SdrOptions, WeightedPower};

/// Relative tolerance under which entries of `M⁻¹` still count as nonnegative.
pub const M_MATRIX_TOL: f64 = 1e-12;

/// Coupling matrix `[M]_ii = |h_i^H u_i|²/γ_i`, `[M]_ij = −|h_i^H u_j|²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingMatrix(RMatrix);

impl CouplingMatrix {
    /// Accepts a square matrix with positive diagonal and nonpositive off-diagonal.
    pub fn new(m: RMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Structural("coupling matrix must be square".into()));
        }
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if i == j && !(v > 0.0) {
                    return Err(Error::Structural(format!("diagonal entry {i} is {v}, must be positive")));
                }
                if i != j && v > 0.0 {
                    return Err(Error::Structural(format!("off-diagonal entry ({i},{j}) is positive")));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

pub fn build_coupling(u: &CMatrix, s: &Scenario) -> Result<CouplingMatrix> {
    let k = s.num_users();
    if u.ncols() != k || u.nrows() != s.n_tx() {
        return Err(Error::Structural("receive beamformer matrix has the wrong shape".into()));
    }
    let g = s.h.adjoint() * u;
    let mut m = RMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = if i == j { g[(i, i)].norm_sqr() / s.gamma[i] } else { -g[(i, j)].norm_sqr() };
        }
        if m[(i, i)] == 0.0 {
            return Err(Error::Structural(format!("user {i} has zero gain along its receive beamformer")));
        }
    }
    CouplingMatrix::new(m)
}

#[derive(Clone, Debug, Serialize)]
pub enum MWitness {
    /// `p = M⁻¹ 1 ≥ 0`, so `M p = 1 > 0`; the inverse is entrywise nonnegative.
    Positive { p: Vec<f64>, min_inverse_entry: f64 },
    /// An entry of `M⁻¹` below tolerance.
    NegativeEntry { row: usize, col: usize, value: f64 },
    /// Numerically singular; `null_vector` spans the smallest singular direction.
    Singular { null_vector: Vec<f64>, smallest_singular_value: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct MCertificate {
    pub verdict: bool,
    pub witness: MWitness,
}

impl MCertificate {
    /// Re-checks the witness by direct arithmetic against `m`.
    pub fn verify(&self, m: &RMatrix) -> bool {
        match &self.witness {
            MWitness::Positive { p, .. } => {
                let p = RVector::from_column_slice(p);
                let mp = m * &p;
                let scale = m.amax() * p.amax();
                self.verdict
                    && p.iter().all(|v| *v >= -M_MATRIX_TOL * p.amax())
                    && mp.iter().all(|v| *v > 1e-9 * scale.max(f64::MIN_POSITIVE))
            }
            MWitness::NegativeEntry { row, col, value } => {
                !self.verdict
                    && m.clone().try_inverse().map_or(false, |inv| {
                        (inv[(*row, *col)] - value).abs() <= 1e-6 * inv.amax() && *value < 0.0
                    })
            }
            MWitness::Singular { null_vector, .. } => {
                let v = RVector::from_column_slice(null_vector);
                !self.verdict && (m * &v).norm() <= 1e-10 * m.amax() * v.norm()
            }
        }
    }
}

fn smallest_singular(m: &RMatrix) -> (f64, f64, Vec<f64>) {
    let svd = m.clone().svd(false, true);
    let sv = &svd.singular_values;
    let (imin, &smin) = sv.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let smax = sv.max();
    let v = svd.v_t.as_ref().unwrap().row(imin).transpose();
    (smin, smax, v.iter().copied().collect())
}

/// Decides whether a Z-matrix is a nonsingular M-matrix by inverse nonnegativity.
pub fn is_m_matrix(m: &CouplingMatrix) -> MCertificate {
    is_m_matrix_raw(m.matrix())
}

fn is_m_matrix_raw(m: &RMatrix) -> MCertificate {
    let (smin, smax, null) = smallest_singular(m);
    let inv = if smin > 1e-13 * smax { m.clone().try_inverse() } else { None };
    let Some(inv) = inv else {
        return MCertificate {
            verdict: false,
            witness: MWitness::Singular { null_vector: null, smallest_singular_value: smin },
        };
    };
    let scale = inv.amax();
    let (mut row, mut col, mut min) = (0, 0, f64::INFINITY);
    for i in 0..inv.nrows() {
        for j in 0..inv.ncols() {
            if inv[(i, j)] < min {
                (row, col, min) = (i, j, inv[(i, j)]);
            }
        }
    }
    if min >= -M_MATRIX_TOL * scale {
        let p = inv.column_sum();
        MCertificate {
            verdict: true,
            witness: MWitness::Positive { p: p.iter().copied().collect(), min_inverse_entry: min },
        }
    } else {
        MCertificate { verdict: false, witness: MWitness::NegativeEntry { row, col, value: min } }
    }
}

/// Characterization by inverse nonnegativity.
pub fn m_matrix_by_inverse(m: &RMatrix) -> bool {
    is_m_matrix_raw(m).verdict
}

/// Characterization by a positive vector: maximize `t` over `p ≥ 0`, `Σ p ≤ 1`,
/// `M p ≥ t 1`, and test `t* > 0`.
pub fn m_matrix_by_positive_vector(m: &RMatrix) -> Result<bool> {
    let n = m.nrows();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut p = LmiProblem::new(n + 1, objective);
    for i in 0..n {
        p.var_sign[i] = VarSign::Nonnegative;
    }
    let one = |v: f64| HermitianMatrix::diagonal(&[v]);
    for i in 0..n {
        let mut b = LmiBlock::new(one(0.0));
        for j in 0..n {
            if m[(i, j)] != 0.0 {
                b = b.with(j, one(m[(i, j)] / scale));
            }
        }
        p.blocks.push(b.with(n, one(-1.0)));
    }
    let mut budget = LmiBlock::new(one(1.0));
    for j in 0..n {
        budget = budget.with(j, one(-1.0));
    }
    p.blocks.push(budget);
    let sol = sdp_solve(&p, 1e-10, DEFAULT_MAX_ITER)?;
    match sol.status {
        SdpStatus::Optimal => Ok(sol.objective > 1e-9),
        _ => Err(Error::Solver(format!("positive-vector test ended with {:?}", sol.status))),
    }
}

/// Characterization by the splitting `M = D − F`, `D = diag(M)`: `D > 0`, `F ≥ 0` and
/// `ρ(D⁻¹F) < 1`.
pub fn m_matrix_by_splitting(m: &RMatrix) -> bool {
    let n = m.nrows();
    if (0..n).any(|i| !(m[(i, i)] > 0.0)) {
        return false;
    }
    let mut g = RMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if m[(i, j)] > 0.0 {
                    return false;
                }
                g[(i, j)] = -m[(i, j)] / m[(i, i)];
            }
        }
    }
    let rho = g.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    rho < 1.0
}

/// `[ω]_k = u_k^H (λI − Q) u_k`.
pub fn uplink_noise(u: &CMatrix, lambda: f64, q: &HermitianMatrix) -> Vec<f64> {
    let n0 = q.scale(-1.0).shifted(lambda);
    u.column_iter().map(|c| n0.quad_form(&c.into_owned())).collect()
}

fn require_certified(m: &CouplingMatrix, cert: &MCertificate) -> Result<RMatrix> {
    if !cert.verdict || !cert.verify(m.matrix()) {
        return Err(Error::Contract("coupling matrix is not a certified M-matrix".into()));
    }
    m.matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Contract("coupling matrix is singular".into()))
}

/// `p = σ² M⁻¹ 1`.
pub fn recover_downlink_powers(m: &CouplingMatrix, cert: &MCertificate, sigma2: f64) -> Result<Vec<f64>> {
    let inv = require_certified(m, cert)?;
    Ok((inv.column_sum() * sigma2).iter().map(|v| v.max(0.0)).collect())
}

/// `q = M^{-T} ω`; a negative entry signals an inadmissible pair.
pub fn recover_uplink_powers(m: &CouplingMatrix, cert: &MCertificate, omega: &[f64]) -> Result<Vec<f64>> {
    let inv = require_certified(m, cert)?;
    let q = inv.transpose() * RVector::from_column_slice(omega);
    let scale = q.amax().max(RVector::from_column_slice(omega).amax());
    if let Some((k, v)) = q.iter().enumerate().find(|(_, v)| **v < -1e-9 * scale.max(1.0)) {
        return Err(Error::Unbounded(format!(
            "uplink power {k} is negative ({v:.3e}); the multiplier pair is not admissible"
        )));
    }
    Ok(q.iter().map(|v| v.max(0.0)).collect())
}

#[derive(Clone, Debug)]
pub enum Admissibility {
    /// `witness` is a feasible point of the dual LMI; `margin` is the phase-1 value
    /// (or the smallest eigenvalue of `λI − Q` when that matrix is itself positive definite).
    Admissible { witness: Vec<f64>, margin: f64 },
    Inadmissible { certificate: Vec<HermitianMatrix>, margin: f64 },
    Indeterminate { margin: f64 },
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Admissibility::Admissible { .. })
    }
}

/// Admissibility of `(λ, Q)` via feasibility of the dual LMI.
pub fn check_admissible_q(lambda: f64, q: &HermitianMatrix, s: &Scenario, tol: f64) -> Result<Admissibility> {
    // Unit-scale data; the witness scales back by `kappa`, margins stay relative.
    let kappa = lambda.abs().max(q.max_abs()).max(f64::MIN_POSITIVE);
    let n0 = q.scale(-1.0).shifted(lambda);
    let e = hermitian_eig(&n0).min();
    if e > 0.0 && Cholesky::new(n0.as_matrix().clone()).is_some() {
        return Ok(Admissibility::Admissible { witness: vec![0.0; s.num_users()], margin: e / kappa });
    }
    let p = admissibility_lmi(lambda / kappa, &q.scale(1.0 / kappa), s);
    Ok(match lmi_feasibility(&p, tol, DEFAULT_MAX_ITER)? {
        Feasibility::Feasible { x, margin } => {
            Admissibility::Admissible { witness: x.into_iter().map(|v| v * kappa).collect(), margin }
        }
        Feasibility::Infeasible { certificate, margin } => Admissibility::Inadmissible { certificate, margin },
        Feasibility::Indeterminate { margin } => Admissibility::Indeterminate { margin },
    })
}

/// Smallest admissible `λ` for `Q`, to absolute accuracy `tol`. The returned value is the
/// upper end of the final bracket and was itself classified admissible.
pub fn lambda_min(q: &HermitianMatrix, s: &Scenario, tol: f64) -> Result<f64> {
    let e = hermitian_eig(q);
    let span = e.max().abs().max(e.min().abs()).max(f64::MIN_POSITIVE);
    let mut hi = e.max() + tol.max(1e-12 * span);
    while !check_admissible_q(hi, q, s, 1e-10)?.is_admissible() {
        hi += span;
    }
    let mut lo = e.min() - span;
    while check_admissible_q(lo, q, s, 1e-10)?.is_admissible() {
        lo -= 2.0 * (hi - lo);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if check_admissible_q(mid, q, s, 1e-10)?.is_admissible() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn check_admissible(lambda: f64, beta: &BetaMatrix, s: &Scenario, m: &SensingMoments) -> Result<Admissibility> {
    check_admissible_q(lambda, &q_beta(beta, m, s), s, 1e-9)
}

#[derive(Clone, Copy, Debug)]
pub struct FixedPairOptions {
    /// Fixed-point stopping tolerance on `‖I(q) − q‖_∞ / (1 + ‖q‖_∞)`.
    pub tol: f64,
    pub max_iter: usize,
    pub newton: bool,
    pub sdr: SdrOptions,
}

impl Default for FixedPairOptions {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: 20_000, newton: true, sdr: SdrOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPairPath {
    Duality,
    SdrFallback,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualState {
    pub lambda: f64,
    #[serde(skip)]
    pub u: CMatrix,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
    pub coupling: Option<CouplingMatrix>,
    pub certificate: Option<MCertificate>,
}

#[derive(Clone, Debug)]
pub struct FixedPairSolution {
    pub beamformers: BeamformerSet,
    pub value: f64,
    pub state: DualState,
    pub path: FixedPairPath,
    pub iterations: usize,
    /// Number of times the definiteness safeguard shifted a denominator matrix.
    pub shifts: usize,
}

struct Evaluation {
    /// `I_k(q) = γ_k / (h_k^H Z_k⁻¹ h_k)`.
    next: RVector,
    /// Columns `Z_k⁻¹ h_k`.
    zinv_h: CMatrix,
    /// `|h_k^H Z_k⁻¹ h_i|²` used by the Newton Jacobian.
    cross: RMatrix,
    definite: bool,
    shifted: bool,
}

fn evaluate(n0: &CMatrix, s: &Scenario, q: &RVector, shift_if_needed: bool) -> Option<Evaluation> {
    let k = s.num_users();
    let n = s.n_tx();
    let mut next = RVector::zeros(k);
    let mut zinv_h = CMatrix::zeros(n, k);
    let mut cross = RMatrix::zeros(k, k);
    let mut definite = true;
    let mut shifted = false;
    for u in 0..k {
        let mut z = n0.clone();
        for i in 0..k {
            if i != u && q[i] != 0.0 {
                let h = s.h.column(i);
                z += &h * h.adjoint() * C64::from(q[i]);
            }
        }
        let chol = match Cholesky::new(z.clone()) {
            Some(c) => c,
            None => {
                definite = false;
                if !shift_if_needed {
                    return None;
                }
                shifted = true;
                let zh = HermitianMatrix::hermitian_part(&z);
                let lmin = hermitian_eig(&zh).min();
                let eps = 1e-9 * zh.max_abs().max(1e-300);
                Cholesky::new(zh.shifted(-lmin + eps).into_inner())?
            }
        };
        let x = chol.solve(&s.h.column(u).into_owned());
        let g = s.h.column(u).dotc(&x).re;
        if !(g > 0.0) {
            return None;
        }
        next[u] = s.gamma[u] / g;
        for i in 0..k {
            if i != u {
                cross[(u, i)] = s.h.column(i).dotc(&x).norm_sqr();
            }
        }
        zinv_h.set_column(u, &x);
    }
    Some(Evaluation { next, zinv_h, cross, definite, shifted })
}

fn residual(q: &RVector, next: &RVector) -> f64 {
    (next - q).amax() / (1.0 + q.amax())
}

enum FixedPointOutcome {
    Converged { q: RVector, eval: Evaluation, iterations: usize, shifts: usize },
    /// A feasible iterate already needs more than the power cap.
    ExceedsCap { q: RVector },
    Failed { reason: String },
}

/// Iterates the uplink power update from a feasible starting point. Each accepted point
/// stays feasible for the dual LMI, so the sequence is nondecreasing.
fn fixed_point(n0: &CMatrix, s: &Scenario, q0: RVector, opts: &FixedPairOptions, power_cap: Option<f64>) -> FixedPointOutcome {
    let k = s.num_users();
    let mut q = q0;
    let mut shifts = 0;
    for it in 0..opts.max_iter {
        let Some(ev) = evaluate(n0, s, &q, true) else {
            return FixedPointOutcome::Failed { reason: "denominator matrix lost definiteness".into() };
        };
        if ev.shifted {
            shifts += 1;
        }
        if let Some(cap) = power_cap {
            // q is feasible here, so σ² Σ q bounds the downlink power from below.
            if s.sigma2 * q.sum() > cap {
                return FixedPointOutcome::ExceedsCap { q };
            }
        }
        if residual(&q, &ev.next) <= opts.tol {
            let q = ev.next.clone();
            return match evaluate(n0, s, &q, false) {
                Some(ev) => FixedPointOutcome::Converged { q, eval: ev, iterations: it + 1, shifts },
                None => FixedPointOutcome::Failed { reason: "fixed point has an indefinite denominator".into() },
            };
        }
        let mut candidate = ev.next.clone();
        if opts.newton && ev.definite {
            // Newton step on F(q) = q − I(q).
            let mut jac = RMatrix::identity(k, k);
            for u in 0..k {
                for i in 0..k {
                    if i != u {
                        jac[(u, i)] = -ev.next[u] * ev.next[u] * ev.cross[(u, i)] / s.gamma[u];
                    }
                }
            }
            if let Some(step) = jac.lu().solve(&(&ev.next - &q)) {
                let qn = &q + step;
                if qn.iter().all(|v| *v >= 0.0 && v.is_finite()) {
                    if let Some(evn) = evaluate(n0, s, &qn, false) {
                        let feasible = qn.iter().zip(evn.next.iter()).all(|(a, b)| *a <= b * (1.0 + 1e-12));
                        if feasible {
                            candidate = candidate.zip_map(&qn, f64::max);
                        }
                    }
                }
            }
        }
        if candidate.iter().any(|v| !v.is_finite()) {
            return FixedPointOutcome::Failed { reason: "uplink powers diverged".into() };
        }
        q = candidate;
    }
    FixedPointOutcome::Failed { reason: format!("no convergence in {} iterations", opts.max_iter) }
}

/// Assembles `U`, `M_U`, powers and certificates at a converged fixed point.
fn certify(n0h: &HermitianMatrix, lambda: f64, s: &Scenario, q: &RVector, ev: &Evaluation) -> Result<(DualState, BeamformerSet, f64)> {
    let k = s.num_users();
    let mut u = CMatrix::zeros(s.n_tx(), k);
    for j in 0..k {
        let x = ev.zinv_h.column(j).into_owned();
        let phase = s.h.column(j).dotc(&x);
        let mut col = x / C64::from(phase.norm());
        // Make h^H u real and positive.
        let g = s.h.column(j).dotc(&col);
        col *= g.conj() / C64::from(g.norm());
        let nrm = col.norm();
        u.set_column(j, &(col / C64::from(nrm)));
    }
    let coupling = build_coupling(&u, s)?;
    let cert = is_m_matrix(&coupling);
    let omega: Vec<f64> = u.column_iter().map(|c| n0h.quad_form(&c.into_owned())).collect();
    let mut state = DualState {
        lambda,
        u: u.clone(),
        q: q.iter().copied().collect(),
        p: Vec::new(),
        omega: omega.clone(),
        phi: Vec::new(),
        coupling: Some(coupling.clone()),
        certificate: Some(cert.clone()),
    };
    if !cert.verdict {
        return Err(Error::Contract("coupling matrix at the fixed point is not an M-matrix".into()));
    }
    let p = recover_downlink_powers(&coupling, &cert, s.sigma2)?;
    let phi = recover_uplink_powers(&coupling, &cert, &omega)?;
    let v = CMatrix::from_fn(s.n_tx(), k, |i, j| u[(i, j)] * C64::from(p[j].sqrt()));
    let value: f64 = omega.iter().zip(&p).map(|(w, p)| w * p).sum();
    state.p = p;
    state.phi = phi;
    Ok((state, BeamformerSet::new(v), value))
}

fn state_from_beamformers(lambda: f64, v: &BeamformerSet, q: &HermitianMatrix, s: &Scenario, z: Vec<f64>) -> DualState {
    let k = s.num_users();
    let u = CMatrix::from_fn(s.n_tx(), k, |i, j| {
        let nrm = v.v.column(j).norm();
        if nrm > 0.0 { v.v[(i, j)] / C64::from(nrm) } else { C64::from(0.0) }
    });
    let coupling = build_coupling(&u, s).ok();
    let certificate = coupling.as_ref().map(is_m_matrix);
    DualState {
        lambda,
        omega: uplink_noise(&u, lambda, q),
        u,
        q: z.clone(),
        p: v.powers(),
        phi: z,
        coupling,
        certificate,
    }
}

fn sdr_fallback(lambda: f64, q: &HermitianMatrix, s: &Scenario, opts: &FixedPairOptions, iterations: usize, shifts: usize) -> Result<FixedPairSolution> {
    match solve_weighted_power_sdr(lambda, q, s, &opts.sdr)? {
        WeightedPower::Bounded { covariances, z, .. } => {
            let v = extract_rank_one(&covariances, s)?;
            let n0 = q.scale(-1.0).shifted(lambda);
            let value = v.v.column_iter().map(|c| n0.quad_form(&c.into_owned())).sum();
            let state = state_from_beamformers(lambda, &v, q, s, z);
            Ok(FixedPairSolution { beamformers: v, value, state, path: FixedPairPath::SdrFallback, iterations, shifts })
        }
        WeightedPower::Unbounded { .. } => Err(Error::Unbounded(format!("pair with λ = {lambda} is not admissible"))),
    }
}

/// Solves `min Σ v_k^H (λI − Q) v_k` subject to the SINR constraints through the uplink.
/// `witness`, when given, must be feasible for the dual LMI at `λ` (for instance the
/// uplink powers of a solved pair with a smaller `λ`).
pub fn solve_fixed_pair(
    lambda: f64,
    q: &HermitianMatrix,
    s: &Scenario,
    opts: &FixedPairOptions,
    witness: Option<&[f64]>,
) -> Result<FixedPairSolution> {
    s.validate()?;
    let k = s.num_users();
    let n0h = q.scale(-1.0).shifted(lambda);
    let n0 = n0h.as_matrix().clone();
    let start = match witness {
        Some(w) => RVector::from_column_slice(w),
        None => match check_admissible_q(lambda, q, s, 1e-9)? {
            Admissibility::Admissible { witness, margin } => {
                if margin <= 0.0 {
                    return sdr_fallback(lambda, q, s, opts, 0, 0);
                }
                RVector::from_vec(witness)
            }
            Admissibility::Inadmissible { .. } => {
                return Err(Error::Unbounded(format!("pair with λ = {lambda} is not admissible")))
            }
            Admissibility::Indeterminate { margin } => {
                return Err(Error::Solver(format!("admissibility undecided (phase-1 margin {margin:.3e})")))
            }
        },
    };
    if start.len() != k {
        return Err(Error::Structural("witness length must equal the number of users".into()));
    }
    let mut failures = 0;
    let mut total_iter = 0;
    let mut total_shifts = 0;
    for attempt in 0..2 {
        let o = FixedPairOptions { newton: opts.newton && attempt == 0, ..*opts };
        match fixed_point(&n0, s, start.clone(), &o, None) {
            FixedPointOutcome::Converged { q: qf, eval, iterations, shifts } => {
                total_iter += iterations;
                total_shifts += shifts;
                match certify(&n0h, lambda, s, &qf, &eval) {
                    Ok((state, v, value)) => {
                        return Ok(FixedPairSolution {
                            beamformers: v,
                            value,
                            state,
                            path: FixedPairPath::Duality,
                            iterations: total_iter,
                            shifts: total_shifts,
                        })
                    }
                    Err(_) => failures += 1,
                }
            }
            FixedPointOutcome::ExceedsCap { .. } => unreachable!("no cap requested"),
            FixedPointOutcome::Failed { .. } => failures += 1,
        }
        if failures >= 2 {
            break;
        }
    }
    sdr_fallback(lambda, q, s, opts, total_iter, total_shifts)
}

/// Classical minimum-power beamforming (`λ = 1`, `Q = 0`).
/// Returns `Infeasible` with the uplink powers as certificate when the targets need more
/// than the power budget.
pub fn min_power_beamforming(s: &Scenario, opts: &FixedPairOptions) -> Result<FixedPairSolution> {
    s.validate()?;
    let n = s.n_tx();
    let zero = HermitianMatrix::zeros(n);
    let n0h = HermitianMatrix::identity(n);
    let o = FixedPairOptions { max_iter: opts.max_iter.max(100_000), ..*opts };
    match fixed_point(n0h.as_matrix(), s, RVector::zeros(s.num_users()), &o, Some(s.power)) {
        FixedPointOutcome::Converged { q, eval, iterations, shifts } => {
            let (state, v, value) = certify(&n0h, 1.0, s, &q, &eval)?;
            if value > s.power * (1.0 + 1e-9) {
                return Err(Error::Infeasible {
                    reason: format!("minimum power {value:.6e} exceeds the budget {}", s.power),
                    certificate: q.iter().copied().collect(),
                });
            }
            let _ = zero;
            Ok(FixedPairSolution { beamformers: v, value, state, path: FixedPairPath::Duality, iterations, shifts })
        }
        FixedPointOutcome::ExceedsCap { q } => Err(Error::Infeasible {
            reason: format!(
                "feasible uplink powers already need σ²Σq = {:.6e} > P = {}",
                s.sigma2 * q.sum(),
                s.power
            ),
            certificate: q.iter().copied().collect(),
        }),
        FixedPointOutcome::Failed { reason } => Err(Error::Solver(format!("minimum-power iteration: {reason}"))),
    }
}

/// Whether the SINR targets are attainable with unlimited power, decided by the classical
/// uplink iteration with a budget of `1e15 σ²`.
pub fn sinr_feasible(s: &Scenario) -> Result<bool> {
    let relaxed = Scenario { power: f64::INFINITY, ..s.clone() };
    let n0 = HermitianMatrix::identity(s.n_tx());
    let o = FixedPairOptions { max_iter: 100_000, ..Default::default() };
    Ok(match fixed_point(n0.as_matrix(), &relaxed, RVector::zeros(s.num_users()), &o, Some(1e15 * s.sigma2)) {
        FixedPointOutcome::Converged { .. } => true,
        FixedPointOutcome::ExceedsCap { .. } => false,
        FixedPointOutcome::Failed { reason } => return Err(Error::Solver(reason)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Admissible,
    Inadmissible,
    Indeterminate,
}

#[derive(Clone, Debug)]
pub struct AdmissibleSweep {
    pub im_b: f64,
    pub lambdas: Vec<f64>,
    pub re_bs: Vec<f64>,
    /// `verdicts[r][l]` for `re_bs[r]`, `lambdas[l]`.
    pub verdicts: Vec<Vec<Verdict>>,
    /// Largest eigenvalue of `Q_b` per `re_b`.
    pub psd_boundary: Vec<f64>,
}

impl AdmissibleSweep {
    pub fn is_psd_cell(&self, r: usize, l: usize) -> bool {
        self.lambdas[l] >= self.psd_boundary[r]
    }
}

/// Admissibility verdicts of `(λ, b = re_b + i im_b)` with `Q = Q_b`.
pub fn sweep_admissible(s: &Scenario, m: &SensingMoments, im_b: f64, lambdas: &[f64], re_bs: &[f64], tol: f64) -> Result<AdmissibleSweep> {
    if lambdas.is_empty() || re_bs.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    s.validate()?;
    let qs: Vec<HermitianMatrix> = re_bs.iter().map(|&r| q_b_aoa(C64::new(r, im_b), m)).collect();
    let psd_boundary: Vec<f64> = qs.iter().map(|q| hermitian_eig(q).max()).collect();
    let cells: Vec<(usize, usize)> = (0..re_bs.len()).flat_map(|r| (0..lambdas.len()).map(move |l| (r, l))).collect();
    let results: Vec<Verdict> = cells
        .par_iter()
        .map(|&(r, l)| match check_admissible_q(lambdas[l], &qs[r], s, tol) {
            Ok(Admissibility::Admissible { .. }) => Verdict::Admissible,
            Ok(Admissibility::Inadmissible { .. }) => Verdict::Inadmissible,
            _ => Verdict::Indeterminate,
        })
        .collect();
    let verdicts = (0..re_bs.len()).map(|r| results[r * lambdas.len()..(r + 1) * lambdas.len()].to_vec()).collect();
    Ok(AdmissibleSweep { im_b, lambdas: lambdas.to_vec(), re_bs: re_bs.to_vec(), verdicts, psd_boundary })
}

/// `u = v / ‖v‖` columnwise for a given receive direction set.
pub fn normalize_columns(u: &CMatrix) -> CMatrix {
    let mut out = u.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= C64::from(n);
        }
    }
    out
}

#[allow(dead_code)]
fn column(u: &CMatrix, j: usize) -> CVector {
    u.column(j).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rm(rows: usize, data: &[f64]) -> RMatrix {
        RMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn identity_is_m_matrix() {
        let c = is_m_matrix(&CouplingMatrix::new(RMatrix::identity(3, 3)).unwrap());
        assert!(c.verdict && c.verify(&RMatrix::identity(3, 3)));
    }

    #[test]
    fn negative_inverse_is_rejected() {
        let m = rm(2, &[0.125, -0.5, -0.5, 0.25]);
        let c = is_m_matrix(&CouplingMatrix::new(m.clone()).unwrap());
        assert!(!c.verdict && c.verify(&m));
        let inv = m.try_inverse().unwrap();
        assert!(inv.iter().all(|v| *v < 0.0));
        assert!((inv[(0, 0)] + 8.0 / 7.0).abs() < 1e-12 && (inv[(0, 1)] + 16.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn diagonally_dominant_z_matrix_passes_all_tests() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut m = RMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { -rng.random_range(0.0..1.0) });
            for i in 0..4 {
                let off: f64 = (0..4).filter(|&j| j != i).map(|j| -m[(i, j)]).sum();
                m[(i, i)] = off + rng.random_range(0.01..1.0);
            }
            assert!((m.clone() * RVector::from_element(4, 1.0)).iter().all(|v| *v > 0.0));
            assert!(m_matrix_by_inverse(&m));
            assert!(m_matrix_by_splitting(&m));
            assert!(m_matrix_by_positive_vector(&m).unwrap());
        }
    }

    #[test]
    fn coupling_rejects_bad_pattern() {
        assert!(CouplingMatrix::new(rm(2, &[1.0, 0.5, -0.1, 1.0])).is_err());
        assert!(CouplingMatrix::new(rm(2, &[0.0, -0.5, -0.1, 1.0])).is_err());
    }

    #[test]
    fn orthogonal_channels_give_diagonal_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_scenario(&mut rng, 3, 2);
        s.h = CMatrix::from_row_slice(3, 2, &[C64::from(2.0), C64::from(0.0), C64::from(0.0), C64::from(1.0), C64::from(0.0), C64::from(0.0)]);
        let u = normalize_columns(&s.h);
        let m = build_coupling(&u, &s).unwrap();
        assert_eq!(m.matrix()[(0, 1)], 0.0);
        assert!((m.matrix()[(0, 0)] - 4.0 / s.gamma[0]).abs() < 1e-12);
        let cert = is_m_matrix(&m);
        let p = recover_downlink_powers(&m, &cert, 2.0).unwrap();
        assert!((p[0] - 2.0 * s.gamma[0] / 4.0).abs() < 1e-12);
        let q = recover_uplink_powers(&m, &cert, &[0.3, 0.5]).unwrap();
        assert!((q[1] - s.gamma[1] * 0.5).abs() < 1e-12);
    }

    #[test]
    fn uncertified_powers_are_a_contract_violation() {
        let m = CouplingMatrix::new(rm(2, &[0.125, -0.5, -0.5, 0.25])).unwrap();
        let cert = is_m_matrix(&m);
        assert!(matches!(recover_downlink_powers(&m, &cert, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn min_power_meets_targets_with_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = random_scenario(&mut rng, 4, 3);
        let sol = min_power_beamforming(&s, &Default::default()).unwrap();
        for (a, g) in sol.beamformers.sinrs(&s).iter().zip(&s.gamma) {
            assert!((a / g - 1.0).abs() < 1e-9);
        }
        assert!((sol.beamformers.total_power() - sol.value).abs() < 1e-9 * sol.value);
    }

    #[test]
    fn min_power_reports_infeasibility_with_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut s = random_scenario(&mut rng, 2, 2);
        s.gamma = vec![1e4, 1e4];
        match min_power_beamforming(&s, &Default::default()) {
            Err(Error::Infeasible { certificate, .. }) => {
                assert!(s.sigma2 * certificate.iter().sum::<f64>() > s.power)
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn classical_duality_matches_relaxation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = random_scenario(&mut rng, 4, 3);
        let sol = min_power_beamforming(&s, &Default::default()).unwrap();
        let fp = solve_fixed_pair(1.0, &HermitianMatrix::zeros(4), &s, &Default::default(), None).unwrap();
        match solve_weighted_power_sdr(1.0, &HermitianMatrix::zeros(4), &s, &SdrOptions::default()).unwrap() {
            WeightedPower::Bounded { value, .. } => {
                assert!((value - sol.value).abs() < 1e-6 * sol.value);
                assert!((fp.value - sol.value).abs() < 1e-10 * sol.value);
            }
            _ => panic!("bounded expected"),
        }
    }

    #[test]
    fn uplink_noise_of_eigenvector() {
        let q = HermitianMatrix::diagonal(&[2.0, 5.0]);
        let u = CMatrix::from_row_slice(2, 1, &[C64::from(0.0), C64::from(1.0)]);
        assert!((uplink_noise(&u, 3.0, &q)[0] + 2.0).abs() < 1e-15);
    }
}
