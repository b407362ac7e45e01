//! Seeded random instances for property suites and examples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bfim::Scenario;
use crate::model::{ArrayGeometry, ScalarPrior};
use crate::numerics::{CMatrix, C64};

/// Standard circularly-symmetric complex gaussian, `E|z|² = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_channels<R: Rng + ?Sized>(rng: &mut R, n_tx: usize, k: usize) -> CMatrix {
    CMatrix::from_fn(n_tx, k, |_, _| complex_gaussian(rng))
}

/// Random PSD matrix `B B^H / n`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let b = random_channels(rng, n, n);
    &b * b.adjoint() / C64::from(n as f64)
}

/// Random angle-of-arrival scenario: `h_ij ~ CN(0,1)`, targets in `[-3, 3]` dB, `P = 10`,
/// `σ² = 1`, `T = 1`, `α ~ CN(1, 1)`, `θ ~ N(0, 0.05)`, angle-only weight.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, n_tx: usize, k: usize) -> Scenario {
    Scenario {
        geometry: ArrayGeometry { n_tx, n_rx: n_tx },
        h: random_channels(rng, n_tx, k),
        gamma: (0..k).map(|_| 10f64.powf(rng.random_range(-3.0..3.0) / 10.0)).collect(),
        sigma2: 1.0,
        power: 10.0,
        symbols_t: 1.0,
        alpha_prior: ScalarPrior::ComplexGaussian { mean: [1.0, 0.0], variance: 1.0 },
        theta_prior: ScalarPrior::RealGaussian { mean: 0.0, variance: 0.05 },
        weights: vec![0.0, 0.0, 1.0],
    }
}
