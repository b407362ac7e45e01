//! Semidefinite relaxation baseline.
//!
//! The BCRB problem is lifted to covariances `R_k ⪰ 0` and each weighted term
//! `w_ℓ e_ℓ^T J⁻¹ e_ℓ` becomes a Schur-complement block
//! `[[J, √w_ℓ e_ℓ], [√w_ℓ e_ℓ^T, d_ℓ]] ⪰ 0`. The program is posed directly in the
//! standard primal form of the interior-point core so that the covariances are primal
//! variables and the power multiplier is a plain dual variable.

use nalgebra::Cholesky;

use crate::bfim::{bcrb_cov, beta_star_cov, fisher_cov, q_beta, BeamformerSet, BetaMatrix, Scenario, NUM_PARAMS};
use crate::error::{Error, Result};
use crate::model::SensingMoments;
use crate::numerics::ipm::{self, ConeProgram, ConeStatus, IpmSettings};
use crate::numerics::{
    de_embed, hermitian_eig, real_embed, sdp_solve, CMatrix, HermitianMatrix, LmiBlock, LmiProblem, RMatrix,
    SdpStatus, VarSign, C64, DEFAULT_MAX_ITER,
};

#[derive(Clone, Copy, Debug)]
pub struct SdrOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Reweighting rounds of the rank-one refinement (0 disables it).
    pub refine_rounds: usize,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: DEFAULT_MAX_ITER, refine_rounds: 8 }
    }
}

#[derive(Clone, Debug)]
pub struct BcrbSdrSolution {
    pub covariances: Vec<HermitianMatrix>,
    /// `Tr(W J⁻¹)` at the returned covariances.
    pub objective: f64,
    /// Objective value reported by the conic solver.
    pub sdp_objective: f64,
    /// Dual objective of the relaxation, a lower bound on the optimal BCRB.
    pub sdp_dual_objective: f64,
    /// Multiplier of the power constraint, projected into the admissible set when the raw
    /// value misses it.
    pub lambda: f64,
    /// Multiplier as read from the conic solver.
    pub lambda_raw: f64,
    pub lambda_projected: bool,
    /// `β_ℓ = √w_ℓ J⁻¹ e_ℓ` at the solution.
    pub beta: BetaMatrix,
    pub sinr_multipliers: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn half_embed(h: &HermitianMatrix) -> RMatrix {
    real_embed(h) * 0.5
}

fn sym_unit(n: usize, a: usize, b: usize) -> RMatrix {
    let mut e = RMatrix::zeros(n, n);
    if a == b {
        e[(a, a)] = 1.0;
    } else {
        e[(a, b)] = 0.5;
        e[(b, a)] = 0.5;
    }
    e
}

/// Adds SINR rows `0..K` and the power row `K` over covariance blocks `0..K` and slack
/// blocks `K..=2K`. The power row is an inequality `tr R ≤ P`.
fn add_sinr_power_rows(prog: &mut ConeProgram, s: &Scenario) {
    let k = s.num_users();
    let outers: Vec<RMatrix> = (0..k).map(|u| half_embed(&HermitianMatrix::outer(&s.channel(u)))).collect();
    for u in 0..k {
        for i in 0..k {
            let scale = if i == u { 1.0 / s.gamma[u] } else { -1.0 };
            prog.add_a(u, i, &outers[u], scale);
        }
        prog.add_a_scalar(u, k + u, -1.0);
        prog.b[u] = s.sigma2;
    }
    let eye = half_embed(&HermitianMatrix::identity(s.n_tx()));
    for i in 0..k {
        prog.add_a(k, i, &eye, 1.0);
    }
    prog.add_a_scalar(k, 2 * k, 1.0);
    prog.b[k] = s.power;
}

fn covariances_from(x: &[RMatrix], k: usize) -> Vec<HermitianMatrix> {
    x.iter().take(k).map(de_embed).collect()
}

fn total(covs: &[HermitianMatrix]) -> CMatrix {
    let n = covs[0].dim();
    covs.iter().fold(CMatrix::zeros(n, n), |acc, r| acc + r.as_matrix())
}

fn check_status(status: ConeStatus, what: &str, residual: f64, tol: f64) -> Result<()> {
    match status {
        ConeStatus::Converged => Ok(()),
        _ if residual <= tol.sqrt() * 1e-2 => Ok(()),
        _ => Err(Error::Solver(format!(
            "{what}: interior-point method stopped ({status:?}) with residual {residual:.3e}"
        ))),
    }
}

/// Solves the lifted BCRB problem.
pub fn solve_bcrb_sdr(s: &Scenario, m: &SensingMoments, opts: &SdrOptions) -> Result<BcrbSdrSolution> {
    s.validate()?;
    // Strict SINR feasibility within the power budget; surfaces a certificate otherwise.
    crate::duality::min_power_beamforming(s, &Default::default())?;

    let k = s.num_users();
    let n = s.n_tx();
    let l = NUM_PARAMS;
    let active: Vec<usize> = (0..l).filter(|&i| s.weights[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::Config("the lifted problem needs at least one positive weight".into()));
    }

    // Reference point for the Schur-block scaling.
    let r0 = CMatrix::identity(n, n) * C64::from(s.power / n as f64);
    let j0 = fisher_cov(&r0, m, s)?.j;
    let j0_inv = Cholesky::new(j0.clone())
        .ok_or_else(|| Error::DegeneratePrior("reference information matrix is singular".into()))?
        .inverse();
    let d: Vec<f64> = (0..l).map(|a| 1.0 / j0[(a, a)].sqrt()).collect();

    let entries: Vec<(usize, usize)> = (0..=l).flat_map(|a| (a..=l).map(move |b| (a, b))).collect();
    // (L+1)(L+2)/2 - 1 rows per block: every entry except the free corner.
    let per_block = entries.len() - 1;
    let num_rows = k + 1 + active.len() * per_block;

    let mut dims = vec![2 * n; k];
    dims.extend(std::iter::repeat(1).take(k + 1));
    dims.extend(std::iter::repeat(l + 1).take(active.len()));
    let mut prog = ConeProgram::new(dims, num_rows);
    add_sinr_power_rows(&mut prog, s);

    let grams = m.derivative_grams();
    let herm: Vec<Vec<RMatrix>> = (0..l)
        .map(|a| (0..l).map(|b| half_embed(&HermitianMatrix::hermitian_part(&grams[a][b]))).collect())
        .collect();
    let c = fisher_cov(&CMatrix::zeros(n, n), m, s)?.c;
    let pref = s.prefactor();

    let mut sigma2 = Vec::with_capacity(active.len());
    let mut row = k + 1;
    for (bi, &ell) in active.iter().enumerate() {
        let block = 2 * k + 1 + bi;
        let w = s.weights[ell];
        let sig2 = w * j0_inv[(ell, ell)];
        sigma2.push(sig2);
        prog.c[block][(l, l)] = sig2;
        for &(a, b) in &entries {
            if a == l && b == l {
                continue;
            }
            prog.add_a(row, block, &sym_unit(l + 1, a, b), 1.0);
            if b < l {
                let f = d[a] * d[b];
                for u in 0..k {
                    prog.add_a(row, u, &herm[a][b], -f * pref);
                }
                prog.b[row] = f * c[(a, b)];
            } else if a == ell {
                prog.b[row] = d[a] * w.sqrt() / sig2.sqrt();
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, num_rows);

    let sol = ipm::solve(&prog, &IpmSettings { tol: opts.tol, max_iter: opts.max_iter });
    check_status(sol.status, "BCRB relaxation", sol.residual, opts.tol)?;

    let covariances = covariances_from(&sol.x, k);
    let r_total = total(&covariances);
    let objective = bcrb_cov(&r_total, m, s)?;
    let beta = beta_star_cov(&r_total, s, m)?;
    let lambda_raw = (-sol.y[k]).max(0.0);
    let (lambda, lambda_projected) = project_multiplier(lambda_raw, &q_beta(&beta, m, s), s, opts.tol)?;
    Ok(BcrbSdrSolution {
        covariances,
        objective,
        sdp_objective: sol.primal_objective,
        sdp_dual_objective: sol.dual_objective,
        lambda,
        lambda_raw,
        lambda_projected,
        beta,
        sinr_multipliers: (0..k).map(|u| sol.y[u]).collect(),
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// At a degenerate optimum `λ*` sits on the boundary of the admissible set and the solver
/// only resolves it to about `√tol`; such values are moved just inside.
fn project_multiplier(raw: f64, q: &HermitianMatrix, s: &Scenario, tol: f64) -> Result<(f64, bool)> {
    use crate::duality::{check_admissible_q, lambda_min, Admissibility};
    if let Admissibility::Admissible { margin, .. } = check_admissible_q(raw, q, s, 1e-9)? {
        if margin > 0.0 {
            return Ok((raw, false));
        }
    }
    let scale = hermitian_eig(q).max().abs().max(raw).max(f64::MIN_POSITIVE);
    let lmin = lambda_min(q, s, 1e-9 * scale)?;
    Ok((lmin.max(raw) + tol.sqrt() * scale, true))
}

/// Linearly independent Hermitian parts of the derivative Grams (Frobenius Gram-Schmidt).
fn sensing_functionals(m: &SensingMoments) -> Vec<HermitianMatrix> {
    let grams = m.derivative_grams();
    let mut basis: Vec<CMatrix> = Vec::new();
    let mut out = Vec::new();
    for a in 0..NUM_PARAMS {
        for b in a..NUM_PARAMS {
            let f = HermitianMatrix::hermitian_part(&grams[a][b]);
            let norm = f.as_matrix().norm();
            if norm == 0.0 {
                continue;
            }
            let mut r = f.as_matrix().clone();
            for q in &basis {
                let proj = crate::numerics::trace_product(&q.adjoint(), &r);
                r -= q * proj;
            }
            let rn = r.norm();
            if rn > 1e-9 * norm {
                basis.push(r / C64::from(rn));
                out.push(f);
            }
        }
    }
    out
}

fn is_rank_one(r: &HermitianMatrix, tol: f64) -> bool {
    let e = hermitian_eig(r);
    let n = e.values.len();
    n < 2 || e.values[n - 2].max(0.0) <= tol * e.values[n - 1].max(f64::MIN_POSITIVE)
}

/// Searches the optimal face of the relaxation for rank-one covariances: the sensing
/// functionals `tr(F R)` of the total covariance are held fixed (so the BCRB is unchanged)
/// while a reweighted trace objective drives each `R_k` towards rank one.
pub fn refine_rank_one(
    covs: &[HermitianMatrix],
    s: &Scenario,
    m: &SensingMoments,
    opts: &SdrOptions,
) -> Result<Vec<HermitianMatrix>> {
    let k = s.num_users();
    let n = s.n_tx();
    if covs.iter().all(|r| is_rank_one(r, 1e-9)) || opts.refine_rounds == 0 {
        return Ok(covs.to_vec());
    }
    let funcs = sensing_functionals(m);
    let r_total = HermitianMatrix::hermitian_part(&total(covs));
    let values: Vec<f64> = funcs.iter().map(|f| f.trace_product(&r_total)).collect();

    let mut dims = vec![2 * n; k];
    dims.extend(std::iter::repeat(1).take(k + 1));
    let mut base = ConeProgram::new(dims, k + 1 + funcs.len());
    add_sinr_power_rows(&mut base, s);
    for (fi, f) in funcs.iter().enumerate() {
        let row = k + 1 + fi;
        let e = half_embed(f);
        for u in 0..k {
            base.add_a(row, u, &e, 1.0);
        }
        base.b[row] = values[fi];
    }

    let mut current = covs.to_vec();
    let mut weights: Vec<HermitianMatrix> = vec![HermitianMatrix::identity(n); k];
    for _ in 0..opts.refine_rounds {
        let mut prog = base.clone();
        for u in 0..k {
            prog.c[u] = half_embed(&weights[u]);
        }
        let sol = ipm::solve(&prog, &IpmSettings { tol: opts.tol, max_iter: opts.max_iter });
        if check_status(sol.status, "rank-one refinement", sol.residual, opts.tol).is_err() {
            break;
        }
        current = covariances_from(&sol.x, k);
        if current.iter().all(|r| is_rank_one(r, 1e-9)) {
            break;
        }
        weights = current
            .iter()
            .map(|r| {
                let eps = 1e-3 * r.trace().max(f64::MIN_POSITIVE) / n as f64;
                let inv = r
                    .shifted(eps)
                    .as_matrix()
                    .clone()
                    .try_inverse()
                    .unwrap_or_else(|| CMatrix::identity(n, n));
                let h = HermitianMatrix::hermitian_part(&inv);
                h.scale(1.0 / h.max_abs())
            })
            .collect();
    }
    Ok(current)
}

/// `v_k = R_k h_k / √(h_k^H R_k h_k)`.
pub fn extract_rank_one(covs: &[HermitianMatrix], s: &Scenario) -> Result<BeamformerSet> {
    let k = s.num_users();
    if covs.len() != k {
        return Err(Error::Structural(format!("expected {k} covariances, got {}", covs.len())));
    }
    let mut v = CMatrix::zeros(s.n_tx(), k);
    for u in 0..k {
        let h = s.channel(u);
        let rh = covs[u].as_matrix() * &h;
        let g = h.dotc(&rh).re;
        let scale = covs[u].max_abs() * h.norm_squared();
        if !(g > 1e-14 * scale.max(f64::MIN_POSITIVE)) || g <= 0.0 {
            return Err(Error::Domain(format!(
                "user {u}: covariance carries no power along its channel"
            )));
        }
        v.set_column(u, &(rh / C64::from(g.sqrt())));
    }
    Ok(BeamformerSet::new(v))
}

/// `R̃_k = R_k + (R − Σ_i R_i)/K`.
pub fn map_extended_sdr(r_total: &HermitianMatrix, covs: &[HermitianMatrix], tol: f64) -> Result<Vec<HermitianMatrix>> {
    if covs.is_empty() {
        return Err(Error::Structural("no covariances".into()));
    }
    let slack = r_total.sub(&HermitianMatrix::hermitian_part(&total(covs)));
    let min = hermitian_eig(&slack).min();
    if min < -tol * r_total.max_abs().max(1.0) {
        return Err(Error::Structural(format!(
            "total covariance does not dominate the sum of user covariances (min eigenvalue {min:.3e})"
        )));
    }
    let share = slack.scale(1.0 / covs.len() as f64);
    Ok(covs.iter().map(|r| r.add(&share)).collect())
}

/// The dual of the weighted downlink problem as an LMI in `z ≥ 0`:
/// `λI − Q + Σ_{i≠k} z_i h_i h_i^H − (z_k/γ_k) h_k h_k^H ⪰ 0` for every `k`,
/// maximizing `σ² Σ z`.
pub fn admissibility_lmi(lambda: f64, q: &HermitianMatrix, s: &Scenario) -> LmiProblem {
    let k = s.num_users();
    let base = q.scale(-1.0).shifted(lambda);
    let mut p = LmiProblem::new(k, vec![s.sigma2; k]);
    p.var_sign = vec![VarSign::Nonnegative; k];
    let outers: Vec<HermitianMatrix> = (0..k).map(|u| HermitianMatrix::outer(&s.channel(u))).collect();
    for u in 0..k {
        let mut b = LmiBlock::new(base.clone());
        for i in 0..k {
            let f = if i == u { outers[i].scale(-1.0 / s.gamma[i]) } else { outers[i].clone() };
            b = b.with(i, f);
        }
        p.blocks.push(b);
    }
    p
}

#[derive(Clone, Debug)]
pub enum WeightedPower {
    Bounded {
        covariances: Vec<HermitianMatrix>,
        value: f64,
        /// Optimal dual variables (uplink powers).
        z: Vec<f64>,
    },
    /// Covariance directions that keep every SINR constraint and strictly decrease the
    /// objective.
    Unbounded { ray: Vec<HermitianMatrix> },
}

/// Relaxation of `min Σ v_k^H (λI − Q) v_k` subject to the SINR constraints.
pub fn solve_weighted_power_sdr(lambda: f64, q: &HermitianMatrix, s: &Scenario, opts: &SdrOptions) -> Result<WeightedPower> {
    s.validate()?;
    // Unit-scale data; values and multipliers scale back by `kappa`, covariances do not.
    let kappa = lambda.abs().max(q.max_abs()).max(f64::MIN_POSITIVE);
    let p = admissibility_lmi(lambda / kappa, &q.scale(1.0 / kappa), s);
    let sol = sdp_solve(&p, opts.tol, opts.max_iter)?;
    match sol.status {
        SdpStatus::Optimal => Ok(WeightedPower::Bounded {
            covariances: sol.dual_blocks,
            value: sol.objective * kappa,
            z: sol.x.iter().map(|z| z * kappa).collect(),
        }),
        SdpStatus::Infeasible => Ok(WeightedPower::Unbounded { ray: sol.certificate.unwrap_or_default() }),
        SdpStatus::Unbounded => match crate::duality::sinr_feasible(s) {
            Ok(false) => Err(Error::Infeasible {
                reason: "SINR targets cannot be met by any beamformers".into(),
                certificate: sol.x,
            }),
            _ => Err(Error::Solver(format!(
                "weighted power relaxation stalled near the admissibility boundary (residual {:.3e})",
                sol.kkt_residual
            ))),
        },
        SdpStatus::MaxIter => Err(Error::Solver(format!(
            "weighted power relaxation did not converge (residual {:.3e})",
            sol.kkt_residual
        ))),
    }
}

/// Beamformers from the relaxation: refinement on the optimal face, then extraction.
pub fn sdr_beamformers(sol: &BcrbSdrSolution, s: &Scenario, m: &SensingMoments, opts: &SdrOptions) -> Result<BeamformerSet> {
    let refined = refine_rank_one(&sol.covariances, s, m, opts)?;
    extract_rank_one(&refined, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfim::bcrb;
    use crate::model::{compute_moments, ArrayGeometry, ScalarPrior};
    use crate::random::{random_psd, random_scenario};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn extraction_preserves_channel_gain_and_is_dominated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_scenario(&mut rng, 4, 3);
        let covs: Vec<HermitianMatrix> =
            (0..3).map(|_| HermitianMatrix::hermitian_part(&random_psd(&mut rng, 4))).collect();
        let v = extract_rank_one(&covs, &s).unwrap();
        for u in 0..3 {
            let r_star = HermitianMatrix::outer(&v.v.column(u).into_owned());
            for i in 0..3 {
                let h = s.channel(i);
                assert!((r_star.quad_form(&h) - covs[u].quad_form(&h)).abs() < 1e-10 * (1.0 + covs[u].quad_form(&h)) || i != u);
            }
            assert!(hermitian_eig(&covs[u].sub(&r_star)).min() >= -1e-10);
        }
    }

    #[test]
    fn rank_one_input_returns_parallel_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_scenario(&mut rng, 3, 1);
        let x = crate::random::random_channels(&mut rng, 3, 1).column(0).into_owned();
        let v = extract_rank_one(&[HermitianMatrix::outer(&x)], &s).unwrap();
        let c = v.v.column(0).dotc(&x).norm();
        assert!((c - v.v.column(0).norm() * x.norm()).abs() < 1e-10 * c);
    }

    #[test]
    fn extended_map_sums_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let covs: Vec<HermitianMatrix> =
            (0..3).map(|_| HermitianMatrix::hermitian_part(&random_psd(&mut rng, 3))).collect();
        let extra = HermitianMatrix::hermitian_part(&random_psd(&mut rng, 3));
        let tot = HermitianMatrix::hermitian_part(&total(&covs)).add(&extra);
        let mapped = map_extended_sdr(&tot, &covs, 1e-12).unwrap();
        let sum = HermitianMatrix::hermitian_part(&total(&mapped));
        assert!(sum.sub(&tot).max_abs() < 1e-12);
        for (a, b) in mapped.iter().zip(&covs) {
            assert!(hermitian_eig(&a.sub(b)).min() >= -1e-12);
        }
        let single = map_extended_sdr(&tot, &covs[..1], 1e-12).unwrap();
        assert!(single[0].sub(&tot).max_abs() < 1e-12);
        assert!(map_extended_sdr(&covs[0], &covs, 1e-9).is_err());
    }

    /// One antenna: the SDR optimum matches a grid search over the power split.
    #[test]
    fn single_antenna_matches_grid_search() {
        let s = Scenario {
            geometry: ArrayGeometry::new(1, 1).unwrap(),
            h: CMatrix::from_row_slice(1, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 2.0)]),
            gamma: vec![0.2, 0.3],
            sigma2: 1.0,
            power: 4.0,
            symbols_t: 1.0,
            alpha_prior: ScalarPrior::ComplexGaussian { mean: [1.0, 0.5], variance: 1.0 },
            theta_prior: ScalarPrior::RealGaussian { mean: 0.0, variance: 0.2 },
            weights: vec![1.0, 1.0, 1.0],
        };
        let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 16).unwrap();
        let sol = solve_bcrb_sdr(&s, &m, &SdrOptions::default()).unwrap();
        // With a single antenna the BCRB depends only on the total power, so the grid runs
        // over feasible splits (p1, p2) and keeps the best total.
        let mut best = f64::INFINITY;
        let steps = 2000;
        for i in 0..=steps {
            for j in 0..=steps / 10 {
                let p1 = s.power * i as f64 / steps as f64;
                let p2 = (s.power - p1) * j as f64 / (steps / 10) as f64;
                let v = BeamformerSet::new(CMatrix::from_row_slice(1, 2, &[C64::from(p1.sqrt()), C64::from(p2.sqrt())]));
                if v.sinrs(&s).iter().zip(&s.gamma).all(|(a, g)| *a >= *g) {
                    best = best.min(bcrb(&v, &s, &m).unwrap());
                }
            }
        }
        assert!((sol.objective - best).abs() <= 1e-3 * best, "{} vs {}", sol.objective, best);
    }
}
