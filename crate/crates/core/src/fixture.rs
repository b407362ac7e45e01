//! Two-user counterexample showing that the M-matrix condition cannot be dropped from the
//! uplink problem once `λI − Q_b` is indefinite.

use serde::Serialize;

use crate::bfim::{q_b_aoa, Scenario};
use crate::duality::{is_m_matrix, lambda_min, solve_fixed_pair, CouplingMatrix, MWitness};
use crate::error::Result;
use crate::model::{compute_moments, ArrayGeometry, ScalarPrior, DEFAULT_QUADRATURE_NODES};
use crate::numerics::{hermitian_eig, is_psd, CMatrix, CVector, HermitianMatrix, RMatrix, C64};
use crate::sdr::{solve_weighted_power_sdr, SdrOptions, WeightedPower};

pub const PRINTED_Q_B: [[f64; 2]; 2] = [[1.2566, -0.0458], [-0.0458, 1.2566]];
pub const PRINTED_EIGENVALUES: [f64; 2] = [1.2108, 1.3024];
pub const PRINTED_LAMBDA_MIN: f64 = 1.297;
pub const PRINTED_F_DL: f64 = 0.1435;
pub const PRINTED_OMEGA: f64 = -0.0024;
pub const LAMBDA: f64 = 1.3;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FixtureTolerances {
    pub q_b: f64,
    pub eigenvalues: f64,
    pub lambda_min: f64,
    pub f_dl: f64,
    pub omega: f64,
}

impl Default for FixtureTolerances {
    fn default() -> Self {
        Self { q_b: 1e-3, eigenvalues: 1e-3, lambda_min: 5e-3, f_dl: 1e-3, omega: 1e-4 }
    }
}

impl FixtureTolerances {
    pub fn uniform(tol: f64) -> Self {
        Self { q_b: tol, eigenvalues: tol, lambda_min: tol, f_dl: tol, omega: tol }
    }
}

#[derive(Clone, Debug)]
pub struct FixtureInput {
    pub gamma: [f64; 2],
    pub sigma2: f64,
    pub lambda: f64,
}

impl Default for FixtureInput {
    fn default() -> Self {
        Self { gamma: [4.0, 2.0], sigma2: 1.0, lambda: LAMBDA }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixtureCheck {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tol: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixtureReport {
    pub checks: Vec<FixtureCheck>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&FixtureCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    fn near(&mut self, name: &str, value: f64, expected: f64, tol: f64, detail: impl Into<String>) {
        let pass = (value - expected).abs() <= tol;
        self.checks.push(FixtureCheck { name: name.into(), value, expected, tol, pass, detail: detail.into() });
    }

    fn holds(&mut self, name: &str, pass: bool, value: f64, detail: impl Into<String>) {
        self.checks.push(FixtureCheck {
            name: name.into(),
            value,
            expected: f64::NAN,
            tol: 0.0,
            pass,
            detail: detail.into(),
        });
    }
}

pub fn printed_q_b() -> HermitianMatrix {
    let p = PRINTED_Q_B;
    HermitianMatrix::from_real(&RMatrix::from_row_slice(2, 2, &[p[0][0], p[0][1], p[1][0], p[1][1]])).expect("symmetric literal")
}

/// Two users with `h_1 = e_1`, `h_2 = e_2`, `α ~ CN(0, 1)`, `θ ~ N(0, 1)`.
pub fn fixture_scenario(input: &FixtureInput) -> Result<Scenario> {
    Ok(Scenario {
        geometry: ArrayGeometry::new(2, 2)?,
        h: CMatrix::identity(2, 2),
        gamma: input.gamma.to_vec(),
        sigma2: input.sigma2,
        power: 1e6,
        symbols_t: 1.0,
        alpha_prior: ScalarPrior::ComplexGaussian { mean: [0.0, 0.0], variance: 1.0 },
        theta_prior: ScalarPrior::RealGaussian { mean: 0.0, variance: 1.0 },
        weights: vec![0.0, 0.0, 1.0],
    })
}

pub fn run_appendix_d(input: &FixtureInput, tol: &FixtureTolerances) -> Result<FixtureReport> {
    let s = fixture_scenario(input)?;
    let mut rep = FixtureReport { checks: Vec::new() };

    // Q_b recomputed from the stated priors.
    let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, DEFAULT_QUADRATURE_NODES)?;
    let q_prior = q_b_aoa(C64::new(1.0, 0.0), &m);
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let v = q_prior.get(i, j);
        rep.near(
            &format!("q_b[{i}][{j}]"),
            v.re,
            PRINTED_Q_B[i][j],
            tol.q_b,
            format!("recomputed from the priors by {}-node quadrature (imag {:.3e})", m.quadrature_nodes, v.im),
        );
    }

    // Every later quantity is built from the printed matrix.
    let q = printed_q_b();
    let eig = hermitian_eig(&q);
    for (k, expected) in PRINTED_EIGENVALUES.iter().enumerate() {
        rep.near(&format!("rho_{}", 2 - k), eig.values[k], *expected, tol.eigenvalues, "eigenvalue of the printed Q_b");
    }
    let w1 = CVector::from_vec(vec![C64::from(1.0), C64::from(-1.0)]) / C64::from(2f64.sqrt());
    let w2 = CVector::from_vec(vec![C64::from(1.0), C64::from(1.0)]) / C64::from(2f64.sqrt());
    let align = |k: usize, w: &CVector| eig.vectors.column(k).dotc(w).norm();
    rep.near("w1_alignment", align(1, &w1), 1.0, 1e-12, "|<w1, top eigenvector>|");
    rep.near("w2_alignment", align(0, &w2), 1.0, 1e-12, "|<w2, bottom eigenvector>|");

    let lmin = lambda_min(&q, &s, 1e-6)?;
    rep.near("lambda_min", lmin, PRINTED_LAMBDA_MIN, tol.lambda_min, "bisection on dual LMI feasibility");

    let n0 = q.scale(-1.0).shifted(input.lambda);
    let psd = is_psd(&n0, 1e-12);
    rep.holds("not_psd", !psd, hermitian_eig(&n0).min(), "lambda I - Q_b has a negative eigenvalue");

    let omega = n0.quad_form(&w1);
    rep.near("omega", omega, PRINTED_OMEGA, tol.omega, "w1^H (lambda I - Q_b) w1");

    let sdr_value = match solve_weighted_power_sdr(input.lambda, &q, &s, &SdrOptions::default())? {
        WeightedPower::Bounded { value, .. } => value,
        WeightedPower::Unbounded { .. } => f64::INFINITY,
    };
    rep.near("f_dl", sdr_value, PRINTED_F_DL, tol.f_dl, "weighted downlink power by SDR");
    match solve_fixed_pair(input.lambda, &q, &s, &Default::default(), None) {
        Ok(fp) => rep.near(
            "f_dl_duality",
            fp.value,
            sdr_value,
            1e-6 * sdr_value.abs().max(1.0),
            format!("certified uplink fixed point ({:?})", fp.path),
        ),
        Err(e) => rep.holds("f_dl_duality", false, f64::NAN, e.to_string()),
    }

    // Uplink with u_1 = u_2 = w_1 and no M-matrix condition.
    let gain = 0.5;
    let q_ul = (8.0 / 3.0) * omega.abs();
    // Equal gains and equal powers give both users the same uplink SINR.
    let sinr = gain * q_ul / (gain * q_ul + omega);
    let feasible = gain * q_ul + omega > 0.0 && input.gamma.iter().all(|g| sinr >= g * (1.0 - 1e-12));
    rep.holds("uplink_feasible", feasible, q_ul, format!("q1 = q2 = {q_ul:.6e}, SINR {sinr:.4}"));
    rep.holds(
        "uplink_below_downlink",
        2.0 * q_ul < sdr_value,
        2.0 * q_ul,
        format!("q1 + q2 = {:.6e} < f_dl = {sdr_value:.6e}", 2.0 * q_ul),
    );

    let u = CMatrix::from_columns(&[w1.clone(), w1]);
    let g = s.h.adjoint() * &u;
    let mm = RMatrix::from_fn(2, 2, |i, j| {
        if i == j { g[(i, i)].norm_sqr() / input.gamma[i] } else { -g[(i, j)].norm_sqr() }
    });
    let coupling = CouplingMatrix::new(mm.clone())?;
    let cert = is_m_matrix(&coupling);
    rep.holds("m_matrix_rejected", !cert.verdict && cert.verify(&mm), mm[(0, 0)], "coupling matrix of U = [w1, w1]");
    let inv = mm.clone().try_inverse();
    let all_negative = inv.as_ref().is_some_and(|i| i.iter().all(|v| *v < 0.0));
    let detail = match &cert.witness {
        MWitness::NegativeEntry { row, col, value } => format!("inverse entry ({row},{col}) = {value:.6}"),
        other => format!("{other:?}"),
    };
    rep.holds("inverse_all_negative", all_negative, inv.map_or(f64::NAN, |i| i.max()), detail);
    let p = mm.try_inverse().map(|i| i * nalgebra::DVector::from_element(2, input.sigma2));
    let infeasible = p.as_ref().is_some_and(|p| p.iter().all(|v| *v < 0.0));
    rep.holds(
        "downlink_infeasible",
        infeasible,
        p.as_ref().map_or(f64::NAN, |p| p[0]),
        "M p >= sigma^2 1 forces negative powers",
    );
    Ok(rep)
}
