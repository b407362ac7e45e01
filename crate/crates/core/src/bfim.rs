//! Bayesian Fisher information, the weighted BCRB metric, and the sensing
//! direction matrices used by the saddle-point formulation.
//!
//! Parameters are ordered `(Re α, Im α, θ)`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrayGeometry, ScalarPrior, SensingMoments};
use crate::numerics::{trace_product, CMatrix, HermitianMatrix, RMatrix, RVector, C64};

/// Number of sensing parameters for the angle-of-arrival family.
pub const NUM_PARAMS: usize = 3;

/// A full problem instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    /// `N_T × K`, column `k` is `h_k`.
    pub h: CMatrix,
    /// Linear SINR targets.
    pub gamma: Vec<f64>,
    pub sigma2: f64,
    pub power: f64,
    pub symbols_t: f64,
    pub alpha_prior: ScalarPrior,
    pub theta_prior: ScalarPrior,
    /// Diagonal of `W`.
    pub weights: Vec<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let k = self.gamma.len();
        if k == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        if self.h.nrows() != self.geometry.n_tx || self.h.ncols() != k {
            return Err(Error::Structural(format!(
                "channel matrix is {}x{}, expected {}x{}",
                self.h.nrows(),
                self.h.ncols(),
                self.geometry.n_tx,
                k
            )));
        }
        if self.gamma.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::Config("SINR targets must be positive".into()));
        }
        if !(self.sigma2 > 0.0 && self.power > 0.0 && self.symbols_t > 0.0) {
            return Err(Error::Config("noise power, power budget and T must be positive".into()));
        }
        if self.weights.len() != NUM_PARAMS || self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("weights must be {NUM_PARAMS} nonnegative numbers")));
        }
        if !matches!(self.alpha_prior, ScalarPrior::ComplexGaussian { .. }) {
            return Err(Error::Config("the reflection coefficient prior must be complex gaussian".into()));
        }
        if matches!(self.theta_prior, ScalarPrior::ComplexGaussian { .. }) {
            return Err(Error::Config("the angle prior must be real gaussian or uniform".into()));
        }
        self.alpha_prior.validate()?;
        self.theta_prior.validate()?;
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.gamma.len()
    }

    pub fn n_tx(&self) -> usize {
        self.geometry.n_tx
    }

    pub fn channel(&self, k: usize) -> nalgebra::DVector<C64> {
        self.h.column(k).into_owned()
    }

    /// `2T / σ²`.
    pub fn prefactor(&self) -> f64 {
        2.0 * self.symbols_t / self.sigma2
    }
}

/// Downlink beamformers as the columns of `V`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BeamformerSet {
    pub v: CMatrix,
}

impl BeamformerSet {
    pub fn new(v: CMatrix) -> Self {
        Self { v }
    }

    pub fn covariance(&self) -> CMatrix {
        &self.v * self.v.adjoint()
    }

    pub fn total_power(&self) -> f64 {
        self.v.norm_squared()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.v.column_iter().map(|c| c.norm_squared()).collect()
    }

    /// `|h_k^H v_k|^2 / (Σ_{i≠k} |h_k^H v_i|^2 + σ²)`.
    pub fn sinrs(&self, s: &Scenario) -> Vec<f64> {
        let g = s.h.adjoint() * &self.v;
        (0..s.num_users())
            .map(|k| {
                let sig = g[(k, k)].norm_sqr();
                let interf: f64 = (0..self.v.ncols()).filter(|&i| i != k).map(|i| g[(k, i)].norm_sqr()).sum();
                sig / (interf + s.sigma2)
            })
            .collect()
    }

    pub fn is_feasible(&self, s: &Scenario, tol: f64) -> bool {
        self.total_power() <= s.power * (1.0 + tol)
            && self.sinrs(s).iter().zip(&s.gamma).all(|(a, g)| *a >= g * (1.0 - tol))
    }
}

#[derive(Clone, Debug)]
pub struct FisherDecomposition {
    pub c: RMatrix,
    pub t: RMatrix,
    pub j: RMatrix,
}

/// Columns `β_ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaMatrix(pub RMatrix);

impl BetaMatrix {
    pub fn zeros() -> Self {
        Self(RMatrix::zeros(NUM_PARAMS, NUM_PARAMS))
    }

    pub fn column(&self, l: usize) -> RVector {
        self.0.column(l).into_owned()
    }
}

/// `C` for normalized prior variances `σ_α²`, `σ_θ²` (the physical variances are
/// `σ_α² σ² / 2T` per real component of `α` and `σ_θ² σ² / 2T` for `θ`).
pub fn prior_fim_normalized(sigma_alpha2: f64, sigma_theta2: f64, prefactor: f64) -> Result<RMatrix> {
    if !(sigma_alpha2 > 0.0 && sigma_theta2 > 0.0) {
        return Err(Error::Config("prior variances must be positive".into()));
    }
    Ok(RMatrix::from_diagonal(&RVector::from_vec(vec![
        prefactor / sigma_alpha2,
        prefactor / sigma_alpha2,
        prefactor / sigma_theta2,
    ])))
}

/// Prior information of the scenario. A uniform angle prior is replaced by the gaussian
/// of equal variance.
pub fn prior_fim_c(s: &Scenario) -> Result<RMatrix> {
    let va = s.alpha_prior.variance();
    let vt = s.theta_prior.variance();
    if !(va > 0.0 && vt > 0.0) {
        return Err(Error::Config("prior variances must be positive".into()));
    }
    let p = s.prefactor();
    prior_fim_normalized(p * va / 2.0, p * vt, p)
}

/// `T_ij = (2T/σ²) Re tr(K_ij R)` for the transmit covariance `R = V V^H`.
pub fn data_fim_cov(r: &CMatrix, m: &SensingMoments, s: &Scenario) -> RMatrix {
    let k = m.derivative_grams();
    let p = s.prefactor();
    let mut t = RMatrix::zeros(NUM_PARAMS, NUM_PARAMS);
    for i in 0..NUM_PARAMS {
        for j in i..NUM_PARAMS {
            let v = p * trace_product(&k[i][j], r).re;
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    t
}

pub fn data_fim_t(v: &BeamformerSet, m: &SensingMoments, s: &Scenario) -> RMatrix {
    data_fim_cov(&v.covariance(), m, s)
}

pub fn fisher_cov(r: &CMatrix, m: &SensingMoments, s: &Scenario) -> Result<FisherDecomposition> {
    let c = prior_fim_c(s)?;
    let t = data_fim_cov(r, m, s);
    let j = &c + &t;
    Ok(FisherDecomposition { c, t, j })
}

fn inverse_spd(j: &RMatrix) -> Result<RMatrix> {
    Cholesky::new(j.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::DegeneratePrior("Bayesian information matrix is not positive definite".into()))
}

/// `Tr(W J⁻¹)` for `R = Σ_k R_k`.
pub fn bcrb_cov(r: &CMatrix, m: &SensingMoments, s: &Scenario) -> Result<f64> {
    let f = fisher_cov(r, m, s)?;
    let inv = inverse_spd(&f.j)?;
    Ok((0..NUM_PARAMS).map(|l| s.weights[l] * inv[(l, l)]).sum())
}

pub fn bcrb(v: &BeamformerSet, s: &Scenario, m: &SensingMoments) -> Result<f64> {
    bcrb_cov(&v.covariance(), m, s)
}

/// `β_ℓ = √w_ℓ J⁻¹ e_ℓ`.
pub fn beta_star_cov(r: &CMatrix, s: &Scenario, m: &SensingMoments) -> Result<BetaMatrix> {
    let f = fisher_cov(r, m, s)?;
    let inv = inverse_spd(&f.j)?;
    let mut b = RMatrix::zeros(NUM_PARAMS, NUM_PARAMS);
    for l in 0..NUM_PARAMS {
        let w = s.weights[l].sqrt();
        b.set_column(l, &(inv.column(l) * w));
    }
    Ok(BetaMatrix(b))
}

pub fn beta_star(v: &BeamformerSet, s: &Scenario, m: &SensingMoments) -> Result<BetaMatrix> {
    beta_star_cov(&v.covariance(), s, m)
}

/// `Σ_ℓ (2 √w_ℓ β_ℓ^T e_ℓ − β_ℓ^T J β_ℓ)`.
pub fn saddle_objective(beta: &BetaMatrix, j: &RMatrix, s: &Scenario) -> f64 {
    (0..NUM_PARAMS)
        .map(|l| {
            let b = beta.column(l);
            2.0 * s.weights[l].sqrt() * b[l] - (b.transpose() * j * &b)[(0, 0)]
        })
        .sum()
}

/// Concave part `Σ_ℓ (2 √w_ℓ β_ℓ^T e_ℓ − β_ℓ^T C β_ℓ)`.
pub fn beta_prior_term(beta: &BetaMatrix, c: &RMatrix, s: &Scenario) -> f64 {
    saddle_objective(beta, c, s)
}

/// `Q_β = (2T/σ²) Σ_ℓ Σ_ij β_ℓi β_ℓj K_ij` (Hermitian part).
pub fn q_beta(beta: &BetaMatrix, m: &SensingMoments, s: &Scenario) -> HermitianMatrix {
    let k = m.derivative_grams();
    let n = m.dim();
    let mut q = CMatrix::zeros(n, n);
    for l in 0..NUM_PARAMS {
        let b = beta.column(l);
        for i in 0..NUM_PARAMS {
            for j in 0..NUM_PARAMS {
                let c = b[i] * b[j];
                if c != 0.0 {
                    q += &k[i][j] * C64::from(c);
                }
            }
        }
    }
    HermitianMatrix::hermitian_part(&q).scale(s.prefactor())
}

/// `Q_b = |b|² m_aa + b m_da^H + conj(b) m_da + m_dd`.
pub fn q_b_aoa(b: C64, m: &SensingMoments) -> HermitianMatrix {
    let q = m.m_aa.as_matrix() * C64::from(b.norm_sqr())
        + m.m_da.adjoint() * b
        + &m.m_da * b.conj()
        + m.m_dd.as_matrix();
    HermitianMatrix::hermitian_part(&q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compute_moments;
    use crate::random::{random_psd, random_scenario};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_normalized_prior_is_identity() {
        let c = prior_fim_normalized(1.0, 1.0, 1.0).unwrap();
        assert_eq!(c, RMatrix::identity(3, 3));
        let c2 = prior_fim_normalized(1.0, 1.0, 2.0).unwrap();
        assert_eq!(c2, RMatrix::identity(3, 3) * 2.0);
    }

    #[test]
    fn uniform_angle_prior_uses_matched_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_scenario(&mut rng, 2, 2);
        let d = 30f64.to_radians();
        s.theta_prior = ScalarPrior::Uniform { lo: -d, hi: d };
        let c = prior_fim_c(&s).unwrap();
        assert!((c[(2, 2)] - 3.0 / (d * d)).abs() < 1e-12);
    }

    /// Cofactor inverse of a 3x3 matrix.
    fn cofactor_inverse(a: &RMatrix) -> RMatrix {
        let c = |i: usize, j: usize| {
            let r: Vec<usize> = (0..3).filter(|&x| x != i).collect();
            let k: Vec<usize> = (0..3).filter(|&x| x != j).collect();
            let m = a[(r[0], k[0])] * a[(r[1], k[1])] - a[(r[0], k[1])] * a[(r[1], k[0])];
            if (i + j) % 2 == 0 { m } else { -m }
        };
        let det: f64 = (0..3).map(|j| a[(0, j)] * c(0, j)).sum();
        RMatrix::from_fn(3, 3, |i, j| c(j, i) / det)
    }

    #[test]
    fn bcrb_matches_cofactor_and_schur_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut s = random_scenario(&mut rng, 4, 2);
            let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 32).unwrap();
            let r = random_psd(&mut rng, 4);
            let f = fisher_cov(&r, &m, &s).unwrap();
            let inv = cofactor_inverse(&f.j);
            let expect: f64 = (0..3).map(|l| s.weights[l] * inv[(l, l)]).sum();
            let got = bcrb_cov(&r, &m, &s).unwrap();
            assert!((got - expect).abs() < 1e-10 * expect.abs());

            // θ-only weight: Schur complement of the α block.
            s.weights = vec![0.0, 0.0, 1.0];
            let j = &f.j;
            let a = j.view((0, 0), (2, 2)).into_owned();
            let rvec = j.view((0, 2), (2, 1)).into_owned();
            let schur = j[(2, 2)] - (rvec.transpose() * a.try_inverse().unwrap() * &rvec)[(0, 0)];
            let got = bcrb_cov(&r, &m, &s).unwrap();
            assert!((got - 1.0 / schur).abs() < 1e-10 * got);
        }
    }

    #[test]
    fn zero_beamformers_give_prior_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_scenario(&mut rng, 3, 2);
        s.weights = vec![1.0, 1.0, 1.0];
        let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 16).unwrap();
        let c = prior_fim_c(&s).unwrap();
        let got = bcrb_cov(&CMatrix::zeros(3, 3), &m, &s).unwrap();
        let expect: f64 = (0..3).map(|l| 1.0 / c[(l, l)]).sum();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn beta_star_reproduces_bcrb() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut s = random_scenario(&mut rng, 4, 3);
            s.weights = vec![0.5, 0.0, 2.0];
            let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 32).unwrap();
            let r = random_psd(&mut rng, 4);
            let beta = beta_star_cov(&r, &s, &m).unwrap();
            assert!(beta.column(1).iter().all(|v| *v == 0.0));
            let f = fisher_cov(&r, &m, &s).unwrap();
            let obj = saddle_objective(&beta, &f.j, &s);
            let b = bcrb_cov(&r, &m, &s).unwrap();
            assert!((obj - b).abs() < 1e-10 * (1.0 + b.abs()));
            assert!(beta.0[(2, 2)] > 0.0);
        }
    }

    #[test]
    fn q_beta_matches_quadratic_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_scenario(&mut rng, 4, 2);
        let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 32).unwrap();
        for _ in 0..20 {
            let beta = BetaMatrix(RMatrix::from_fn(3, 3, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0)));
            let r = random_psd(&mut rng, 4);
            let t = data_fim_cov(&r, &m, &s);
            let lhs: f64 = (0..3).map(|l| (beta.column(l).transpose() * &t * beta.column(l))[(0, 0)]).sum();
            let q = q_beta(&beta, &m, &s);
            let rhs = trace_product(q.as_matrix(), &r).re;
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn q_b_is_scaled_q_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_scenario(&mut rng, 3, 2);
        let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 32).unwrap();
        for _ in 0..10 {
            let b = C64::new(rand::Rng::random_range(&mut rng, -2.0..2.0), rand::Rng::random_range(&mut rng, -2.0..2.0));
            let mut beta = BetaMatrix::zeros();
            beta.0[(0, 2)] = b.re;
            beta.0[(1, 2)] = b.im;
            beta.0[(2, 2)] = 1.0;
            let q = q_beta(&beta, &m, &s);
            let qb = q_b_aoa(b, &m).scale(s.prefactor());
            assert!(q.sub(&qb).max_abs() < 1e-10 * (1.0 + q.max_abs()));
            assert!(crate::numerics::hermitian_eig(&q_b_aoa(b, &m)).min() >= -1e-10);
        }
        assert!(q_b_aoa(C64::new(0.0, 0.0), &m).sub(&m.m_dd).max_abs() == 0.0);
    }
}
