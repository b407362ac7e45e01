//! Uniform linear arrays, sensing priors and prior-averaged channel moments.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, HermitianMatrix, C64};

pub const DEFAULT_QUADRATURE_NODES: usize = 64;
pub const BEAM_PATTERN_FLOOR_DB: f64 = -120.0;

/// Half-wavelength uniform linear arrays at the transmitter and the sensing receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
}

impl ArrayGeometry {
    pub fn new(n_tx: usize, n_rx: usize) -> Result<Self> {
        if n_tx == 0 || n_rx == 0 {
            return Err(Error::Config("array sizes must be at least 1".into()));
        }
        Ok(Self { n_tx, n_rx })
    }

    fn len(&self, side: Side) -> usize {
        match side {
            Side::Tx => self.n_tx,
            Side::Rx => self.n_rx,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

/// Prior of a scalar parameter. `ComplexGaussian` is circularly symmetric with
/// `variance = E|x - mean|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarPrior {
    RealGaussian { mean: f64, variance: f64 },
    ComplexGaussian { mean: [f64; 2], variance: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ScalarPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarPrior::RealGaussian { mean, variance } => {
                if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
                    return Err(Error::Config(format!("invalid gaussian prior variance {variance}")));
                }
            }
            ScalarPrior::ComplexGaussian { mean, variance } => {
                if !(variance > 0.0 && variance.is_finite() && mean.iter().all(|m| m.is_finite())) {
                    return Err(Error::Config(format!("invalid complex gaussian prior variance {variance}")));
                }
            }
            ScalarPrior::Uniform { lo, hi } => {
                if !(hi > lo && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::Config(format!("invalid uniform prior [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> C64 {
        match *self {
            ScalarPrior::RealGaussian { mean, .. } => C64::new(mean, 0.0),
            ScalarPrior::ComplexGaussian { mean, .. } => C64::new(mean[0], mean[1]),
            ScalarPrior::Uniform { lo, hi } => C64::new(0.5 * (lo + hi), 0.0),
        }
    }

    /// `E|x - E x|^2`.
    pub fn variance(&self) -> f64 {
        match *self {
            ScalarPrior::RealGaussian { variance, .. } | ScalarPrior::ComplexGaussian { variance, .. } => variance,
            ScalarPrior::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
        }
    }

    /// `E|x|^2`.
    pub fn second_moment(&self) -> f64 {
        self.mean().norm_sqr() + self.variance()
    }

    /// Quadrature nodes and probability weights for a real-valued parameter.
    pub fn quadrature(&self, nodes: usize) -> Result<Vec<(f64, f64)>> {
        let n = NonZeroUsize::new(nodes).ok_or_else(|| Error::Config("zero quadrature nodes".into()))?;
        match *self {
            ScalarPrior::RealGaussian { mean, variance } => {
                let rule = GaussHermite::new(n);
                let scale = (2.0 * variance).sqrt();
                let total: f64 = rule.as_node_weight_pairs().iter().map(|p| p.1).sum();
                Ok(rule
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (mean + scale * x, w / total))
                    .collect())
            }
            ScalarPrior::Uniform { lo, hi } => {
                let rule = GaussLegendre::new(n);
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                Ok(rule
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (mid + half * x, 0.5 * w))
                    .collect())
            }
            ScalarPrior::ComplexGaussian { .. } => Err(Error::Config(
                "angle prior must be real gaussian or uniform".into(),
            )),
        }
    }
}

/// `a_n = exp(i π n sin θ)`, `n = 0..N-1`.
pub fn steering(g: &ArrayGeometry, theta: f64, side: Side) -> CVector {
    let s = theta.sin();
    CVector::from_fn(g.len(side), |n, _| C64::from_polar(1.0, PI * n as f64 * s))
}

/// Componentwise `d a / d θ`.
pub fn steering_derivative(g: &ArrayGeometry, theta: f64, side: Side) -> CVector {
    let (s, c) = theta.sin_cos();
    CVector::from_fn(g.len(side), |n, _| {
        let k = PI * n as f64;
        C64::new(0.0, k * c) * C64::from_polar(1.0, k * s)
    })
}

/// `A = a_R a_T^H` and its angle derivative.
pub fn combined_response(g: &ArrayGeometry, theta: f64) -> (CMatrix, CMatrix) {
    let at = steering(g, theta, Side::Tx);
    let ar = steering(g, theta, Side::Rx);
    let dat = steering_derivative(g, theta, Side::Tx);
    let dar = steering_derivative(g, theta, Side::Rx);
    let a = &ar * at.adjoint();
    let da = &dar * at.adjoint() + &ar * dat.adjoint();
    (a, da)
}

/// Prior-averaged moments of the sensing channel `G = α A(θ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensingMoments {
    /// `E[A^H A]`.
    pub m_aa: HermitianMatrix,
    /// `E[α A^H Ȧ]` (not Hermitian in general).
    pub m_da: CMatrix,
    /// `E[|α|^2 Ȧ^H Ȧ]`.
    pub m_dd: HermitianMatrix,
    pub quadrature_nodes: usize,
}

impl SensingMoments {
    pub fn dim(&self) -> usize {
        self.m_aa.dim()
    }

    /// Grams `K_ij = E[Ġ_i^H Ġ_j]` of the derivatives with respect to
    /// `(Re α, Im α, θ)`.
    pub fn derivative_grams(&self) -> [[CMatrix; 3]; 3] {
        let i = C64::new(0.0, 1.0);
        let aa = self.m_aa.as_matrix().clone();
        let da = self.m_da.clone();
        let ad = da.adjoint();
        [
            [aa.clone(), &aa * i, da.clone()],
            [&aa * (-i), aa.clone(), &da * (-i)],
            [ad.clone(), &ad * i, self.m_dd.as_matrix().clone()],
        ]
    }
}

pub fn compute_moments(
    g: &ArrayGeometry,
    alpha_prior: &ScalarPrior,
    theta_prior: &ScalarPrior,
    nodes: usize,
) -> Result<SensingMoments> {
    alpha_prior.validate()?;
    theta_prior.validate()?;
    if nodes < 8 {
        return Err(Error::Config(format!("at least 8 quadrature nodes required, got {nodes}")));
    }
    let rule = theta_prior.quadrature(nodes)?;
    let n = g.n_tx;
    let zero = CMatrix::zeros(n, n);
    let (aa, ad, dd) = rule
        .iter()
        .map(|&(theta, w)| {
            let (a, da) = combined_response(g, theta);
            let ah = a.adjoint();
            (&ah * &a * C64::from(w), &ah * &da * C64::from(w), da.adjoint() * &da * C64::from(w))
        })
        .fold((zero.clone(), zero.clone(), zero), |acc, t| (acc.0 + t.0, acc.1 + t.1, acc.2 + t.2));
    let mean = alpha_prior.mean();
    Ok(SensingMoments {
        m_aa: HermitianMatrix::hermitian_part(&aa),
        m_da: ad * mean,
        m_dd: HermitianMatrix::hermitian_part(&(dd * C64::from(alpha_prior.second_moment()))),
        quadrature_nodes: nodes,
    })
}

/// Transmit beam pattern `a_T(θ)^H V V^H a_T(θ)` and its per-user parts.
#[derive(Clone, Debug)]
pub struct BeamPattern {
    pub theta: Vec<f64>,
    pub total: Vec<f64>,
    /// `per_user[k][g]` is `|a_T(θ_g)^H v_k|^2`.
    pub per_user: Vec<Vec<f64>>,
}

pub fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(BEAM_PATTERN_FLOOR_DB)
    } else {
        BEAM_PATTERN_FLOOR_DB
    }
}

impl BeamPattern {
    pub fn total_db(&self) -> Vec<f64> {
        self.total.iter().map(|&p| to_db(p)).collect()
    }

    pub fn per_user_db(&self) -> Vec<Vec<f64>> {
        self.per_user.iter().map(|u| u.iter().map(|&p| to_db(p)).collect()).collect()
    }
}

/// `v` holds the beamformers as columns.
pub fn beam_pattern(g: &ArrayGeometry, v: &CMatrix, theta_grid: &[f64]) -> BeamPattern {
    let rows: Vec<Vec<f64>> = theta_grid
        .par_iter()
        .map(|&t| {
            let a = steering(g, t, Side::Tx);
            (0..v.ncols()).map(|k| a.dotc(&v.column(k)).norm_sqr()).collect()
        })
        .collect();
    let k = v.ncols();
    let per_user = (0..k).map(|u| rows.iter().map(|r| r[u]).collect()).collect();
    let total = rows.iter().map(|r| r.iter().sum()).collect();
    BeamPattern { theta: theta_grid.to_vec(), total, per_user }
}

/// `count` equally spaced angles in radians covering `[lo_deg, hi_deg]`.
pub fn degree_grid(lo_deg: f64, hi_deg: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo_deg.to_radians()];
    }
    (0..count)
        .map(|i| (lo_deg + (hi_deg - lo_deg) * i as f64 / (count - 1) as f64).to_radians())
        .collect()
}
