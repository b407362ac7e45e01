//! Outer optimization over `(λ, β)`.
//!
//! For fixed `β` the inner problem `min_V g(β, V)` is solved through the uplink: the
//! power multiplier `λ` is bisected until the fixed-pair solution meets the power budget
//! with equality. The resulting value `h(β)` is a lower bound on the optimal BCRB, while
//! `bcrb(V)` of every iterate is an upper bound, so the pair certifies a gap.

use serde::{Serialize, Serializer};

use crate::bfim::{
    bcrb, beta_prior_term, beta_star, fisher_cov, prior_fim_c, q_b_aoa, q_beta, saddle_objective, BeamformerSet,
    BetaMatrix, Scenario, NUM_PARAMS,
};
use crate::duality::{min_power_beamforming, solve_fixed_pair, DualState, FixedPairOptions, FixedPairPath, FixedPairSolution};
use crate::error::{Error, Result};
use crate::model::SensingMoments;
use crate::numerics::{hermitian_eig, CMatrix, HermitianMatrix, RMatrix, C64};
use crate::sdr::{sdr_beamformers, solve_bcrb_sdr, SdrOptions};

/// Perspective coordinates of the angle column `β_3 = (b_1, b_2, b_3)`:
/// `a = b_3`, `b = (b_1 + i b_2)/b_3`.
pub fn aoa_scalarize(beta3: [f64; 3]) -> Result<(f64, C64)> {
    let [b1, b2, b3] = beta3;
    if !(b3 > 0.0) || !b1.is_finite() || !b2.is_finite() || !b3.is_finite() {
        return Err(Error::Domain(format!("third component must be positive and finite, got {b3}")));
    }
    Ok((b3, C64::new(b1 / b3, b2 / b3)))
}

pub fn aoa_unscalarize(a: f64, b: C64) -> [f64; 3] {
    let ab = b * a;
    [ab.re, ab.im, a]
}

/// Optimal scale `a* = 1/(|b|² C_11 + C_33 + (2T/σ²) Tr(Q_b R))` for a fixed direction `b`.
pub fn optimal_a(b: C64, r: &CMatrix, s: &Scenario, m: &SensingMoments) -> Result<f64> {
    let c = prior_fim_c(s)?;
    let qb = q_b_aoa(b, m);
    let t = s.prefactor() * qb.trace_product(&HermitianMatrix::hermitian_part(r));
    let denom = b.norm_sqr() * c[(0, 0)] + c[(2, 2)] + t;
    if !(denom > 0.0) {
        return Err(Error::Domain("scalarized denominator is not positive".into()));
    }
    Ok(1.0 / denom)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Assumption1 {
    Sufficient(String),
    Unknown(String),
}

impl Assumption1 {
    pub fn is_sufficient(&self) -> bool {
        matches!(self, Assumption1::Sufficient(_))
    }
}

/// Sufficient conditions for optimality without dedicated sensing beams.
pub fn check_assumption1_counts(num_params: usize, k: usize, aoa: bool, zero_mean_alpha: bool) -> Assumption1 {
    if 4 * k >= num_params * (num_params + 1) {
        return Assumption1::Sufficient(format!("K = {k} >= L(L+1)/4 with L = {num_params}"));
    }
    if zero_mean_alpha && k >= 1 {
        return Assumption1::Sufficient("zero-mean reflection coefficient and K >= 1".into());
    }
    if aoa && k >= 2 {
        return Assumption1::Sufficient(format!("angle estimation with K = {k} >= 2"));
    }
    let caveat = if aoa && k == 1 {
        "with a single user and a nonzero-mean reflection coefficient an additional sensing beam can be necessary"
    } else {
        "no sufficient condition applies; the conditions are not necessary"
    };
    Assumption1::Unknown(caveat.into())
}

pub fn check_assumption1(s: &Scenario) -> Assumption1 {
    let zero_mean = s.alpha_prior.mean().norm() == 0.0;
    check_assumption1_counts(NUM_PARAMS, s.num_users(), true, zero_mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolvePath {
    Sdr,
    Duality,
    #[default]
    Both,
}

#[derive(Clone, Copy, Debug)]
pub struct IsacOptions {
    pub path: SolvePath,
    /// Relative BCRB change counted as stagnation.
    pub outer_tol: f64,
    /// Consecutive stagnating iterations before stopping.
    pub patience: usize,
    pub max_outer: usize,
    /// Relative certified gap `(bcrb − h)/bcrb` that stops the loop early.
    pub gap_tol: f64,
    pub sdr: SdrOptions,
    pub fixed: FixedPairOptions,
}

impl Default for IsacOptions {
    fn default() -> Self {
        Self {
            path: SolvePath::Both,
            outer_tol: 1e-6,
            patience: 3,
            max_outer: 100,
            gap_tol: 1e-10,
            sdr: SdrOptions::default(),
            fixed: FixedPairOptions::default(),
        }
    }
}

fn ser_cmatrix<S: Serializer>(v: &BeamformerSet, ser: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Cm {
        rows: usize,
        cols: usize,
        re: Vec<Vec<f64>>,
        im: Vec<Vec<f64>>,
    }
    let m = &v.v;
    let rows = |f: fn(&C64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
    Cm { rows: m.nrows(), cols: m.ncols(), re: rows(|z| z.re), im: rows(|z| z.im) }.serialize(ser)
}

fn ser_rmatrix<S: Serializer>(b: &BetaMatrix, ser: S) -> std::result::Result<S::Ok, S::Error> {
    let m = &b.0;
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(ser)
}

/// Result of one solution path.
#[derive(Clone, Debug, Serialize)]
pub struct PathResult {
    #[serde(serialize_with = "ser_cmatrix")]
    pub beamformers: BeamformerSet,
    pub bcrb: f64,
    pub sinrs: Vec<f64>,
    pub powers: Vec<f64>,
    pub total_power: f64,
    pub lambda: f64,
    #[serde(serialize_with = "ser_rmatrix")]
    pub beta: BetaMatrix,
    /// `(a, Re b, Im b)` of the angle column, when it is scalarizable.
    pub scalarized: Option<[f64; 3]>,
}

impl PathResult {
    fn new(v: BeamformerSet, lambda: f64, s: &Scenario, m: &SensingMoments) -> Result<Self> {
        let beta = beta_star(&v, s, m)?;
        let col = beta.column(2);
        let scalarized = aoa_scalarize([col[0], col[1], col[2]]).ok().map(|(a, b)| [a, b.re, b.im]);
        Ok(Self {
            bcrb: bcrb(&v, s, m)?,
            sinrs: v.sinrs(s),
            powers: v.powers(),
            total_power: v.total_power(),
            lambda,
            beta,
            scalarized,
            beamformers: v,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SdrReport {
    pub result: PathResult,
    pub sdp_objective: f64,
    pub sdp_dual_objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterIterate {
    pub iteration: usize,
    pub bcrb: f64,
    /// Lower bound `h(β)` at the accepted `β`.
    pub lower_bound: f64,
    pub lambda: f64,
    pub step: f64,
    pub total_power: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GapCertified,
    Stagnated,
    NoAscent,
    IterationCap,
    CommunicationOnly,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub result: PathResult,
    pub lower_bound: f64,
    /// `(bcrb − lower_bound)/bcrb`.
    pub certified_gap: f64,
    pub trajectory: Vec<OuterIterate>,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub fixed_pair_path: FixedPairPath,
    pub certificate: Option<DualState>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub path: SolvePath,
    pub assumption1: Assumption1,
    pub sdr: Option<SdrReport>,
    pub duality: Option<DualityReport>,
    /// `(bcrb_duality − bcrb_sdr)/bcrb_sdr` when both paths ran.
    pub gap: Option<f64>,
    /// Result selected for output: the duality path when it converged, else the SDR path.
    pub selected: PathResult,
    pub selected_path: SolvePath,
    pub converged: bool,
    pub sdr_fallback: bool,
}

fn communication_only(s: &Scenario) -> bool {
    s.weights.iter().all(|w| *w == 0.0)
}

fn run_sdr(s: &Scenario, m: &SensingMoments, opts: &IsacOptions) -> Result<SdrReport> {
    if communication_only(s) {
        let mp = min_power_beamforming(s, &opts.fixed)?;
        return Ok(SdrReport { result: PathResult::new(mp.beamformers, 0.0, s, m)?, sdp_objective: 0.0, sdp_dual_objective: 0.0, kkt_residual: 0.0, iterations: 0 });
    }
    let sol = solve_bcrb_sdr(s, m, &opts.sdr)?;
    let v = sdr_beamformers(&sol, s, m, &opts.sdr)?;
    Ok(SdrReport {
        result: PathResult::new(v, sol.lambda, s, m)?,
        sdp_objective: sol.sdp_objective,
        sdp_dual_objective: sol.sdp_dual_objective,
        kkt_residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// Fixed-pair solves along the `λ` ray for one `Q`, reusing solved pairs as warm witnesses.
struct LambdaRay<'a> {
    q: &'a HermitianMatrix,
    s: &'a Scenario,
    opts: &'a FixedPairOptions,
    rho: f64,
    cache: Vec<(f64, Vec<f64>)>,
}

impl<'a> LambdaRay<'a> {
    fn new(q: &'a HermitianMatrix, s: &'a Scenario, opts: &'a FixedPairOptions) -> Self {
        Self { rho: hermitian_eig(q).max().max(0.0), q, s, opts, cache: Vec::new() }
    }

    /// `None` when the pair is inadmissible or the solve fails.
    fn solve(&mut self, lambda: f64) -> Option<FixedPairSolution> {
        let witness = if lambda > self.rho {
            None
        } else {
            self.cache.iter().filter(|(l, _)| *l < lambda).max_by(|a, b| a.0.total_cmp(&b.0)).map(|(_, q)| q.clone())
        };
        let sol = solve_fixed_pair(lambda, self.q, self.s, self.opts, witness.as_deref()).ok()?;
        if sol.value.is_finite() && sol.beamformers.total_power().is_finite() {
            self.cache.push((lambda, sol.state.q.clone()));
            Some(sol)
        } else {
            None
        }
    }

    fn power(sol: &Option<FixedPairSolution>) -> f64 {
        sol.as_ref().map_or(f64::INFINITY, |s| s.beamformers.total_power())
    }

    /// Smallest admissible `λ ≥ 0` whose solution meets the budget, by bracketing and bisection.
    fn tight(&mut self) -> Result<(f64, FixedPairSolution)> {
        let p = self.s.power;
        let base = self.rho.max(f64::MIN_POSITIVE.sqrt());
        let mut span = 0.5 * base;
        let mut hi = self.rho + span;
        let mut hi_sol = self.solve(hi);
        let mut guard = 0;
        while Self::power(&hi_sol) > p {
            span *= 2.0;
            hi = self.rho + span;
            hi_sol = self.solve(hi);
            guard += 1;
            if guard > 200 {
                return Err(Error::Solver("could not bracket the power multiplier from above".into()));
            }
        }
        let mut lo = (self.rho - 0.5 * base).max(0.0);
        let mut lo_span = 0.5 * base;
        loop {
            let sol = self.solve(lo);
            if Self::power(&sol) > p {
                break;
            }
            (hi, hi_sol) = (lo, sol);
            if lo == 0.0 {
                return Ok((0.0, hi_sol.expect("solved")));
            }
            lo_span *= 2.0;
            lo = (self.rho - lo_span).max(0.0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) || hi - lo <= 1e-15 * hi {
                break;
            }
            let sol = self.solve(mid);
            let pw = Self::power(&sol);
            if pw > p {
                lo = mid;
            } else {
                (hi, hi_sol) = (mid, sol);
                if p - pw <= 1e-11 * p {
                    break;
                }
            }
        }
        Ok((hi, hi_sol.expect("upper end is always solved")))
    }
}

struct InnerSolution {
    lambda: f64,
    pair: FixedPairSolution,
    lower_bound: f64,
}

fn solve_inner(beta: &BetaMatrix, c: &RMatrix, s: &Scenario, m: &SensingMoments, opts: &IsacOptions) -> Result<InnerSolution> {
    let q = q_beta(beta, m, s);
    let mut ray = LambdaRay::new(&q, s, &opts.fixed);
    let (lambda, pair) = ray.tight()?;
    let t = q.trace_product(&HermitianMatrix::hermitian_part(&pair.beamformers.covariance()));
    let lower_bound = beta_prior_term(beta, c, s) - t;
    Ok(InnerSolution { lambda, pair, lower_bound })
}

fn run_duality(s: &Scenario, m: &SensingMoments, opts: &IsacOptions) -> Result<DualityReport> {
    let init = min_power_beamforming(s, &opts.fixed)?;
    if communication_only(s) {
        return Ok(DualityReport {
            result: PathResult::new(init.beamformers, 0.0, s, m)?,
            lower_bound: 0.0,
            certified_gap: 0.0,
            trajectory: Vec::new(),
            stop_reason: StopReason::CommunicationOnly,
            converged: true,
            fixed_pair_path: init.path,
            certificate: Some(init.state),
            error: None,
        });
    }
    let c = prior_fim_c(s)?;
    let mut beta = beta_star(&init.beamformers, s, m)?;
    let mut inner = solve_inner(&beta, &c, s, m, opts)?;
    let mut current_bcrb = bcrb(&inner.pair.beamformers, s, m)?;
    let mut best = (current_bcrb, inner.pair.clone(), inner.lambda);
    let init_bcrb = bcrb(&init.beamformers, s, m)?;
    if init_bcrb < best.0 {
        best = (init_bcrb, init.clone(), 1.0);
    }
    let mut lower = inner.lower_bound;
    let mut trajectory = vec![OuterIterate {
        iteration: 0,
        bcrb: current_bcrb,
        lower_bound: lower,
        lambda: inner.lambda,
        step: 1.0,
        total_power: inner.pair.beamformers.total_power(),
    }];
    let mut eta: f64 = 1.0;
    let mut stagnant = 0;
    let mut stop = StopReason::IterationCap;
    for it in 1..=opts.max_outer {
        if (best.0 - lower) / best.0 <= opts.gap_tol {
            stop = StopReason::GapCertified;
            break;
        }
        let target = beta_star(&inner.pair.beamformers, s, m)?;
        let dir = RMatrix::from(&target.0 - &beta.0);
        if dir.amax() <= 1e-15 * beta.0.amax() {
            stop = StopReason::GapCertified;
            break;
        }
        let mut accepted = None;
        while eta >= 1.0 / 1024.0 {
            let cand = BetaMatrix(&beta.0 + &dir * eta);
            if let Ok(sol) = solve_inner(&cand, &c, s, m, opts) {
                if sol.lower_bound > lower {
                    accepted = Some((cand, sol));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((cand, sol)) = accepted else {
            stop = StopReason::NoAscent;
            break;
        };
        beta = cand;
        inner = sol;
        lower = inner.lower_bound;
        let new_bcrb = bcrb(&inner.pair.beamformers, s, m)?;
        if new_bcrb < best.0 {
            best = (new_bcrb, inner.pair.clone(), inner.lambda);
        }
        trajectory.push(OuterIterate {
            iteration: it,
            bcrb: new_bcrb,
            lower_bound: lower,
            lambda: inner.lambda,
            step: eta,
            total_power: inner.pair.beamformers.total_power(),
        });
        let change = (new_bcrb - current_bcrb).abs() / current_bcrb;
        current_bcrb = new_bcrb;
        eta = (2.0 * eta).min(1.0);
        stagnant = if change < opts.outer_tol { stagnant + 1 } else { 0 };
        if (best.0 - lower) / best.0 <= opts.gap_tol {
            stop = StopReason::GapCertified;
            break;
        }
        if stagnant >= opts.patience {
            stop = StopReason::Stagnated;
            break;
        }
    }
    let (bc, pair, lambda) = best;
    Ok(DualityReport {
        certified_gap: (bc - lower) / bc,
        lower_bound: lower,
        converged: match stop {
            StopReason::GapCertified | StopReason::Stagnated => true,
            StopReason::NoAscent => (bc - lower) / bc <= opts.outer_tol,
            _ => false,
        },
        result: PathResult::new(pair.beamformers, lambda, s, m)?,
        trajectory,
        stop_reason: stop,
        fixed_pair_path: pair.path,
        certificate: Some(pair.state),
        error: None,
    })
}

/// Full ISAC solve along the requested path(s).
pub fn solve_isac(s: &Scenario, m: &SensingMoments, opts: &IsacOptions) -> Result<SolveReport> {
    s.validate()?;
    if m.dim() != s.n_tx() {
        return Err(Error::Structural("moments do not match the transmit array".into()));
    }
    // Strict feasibility check with a certificate on failure.
    min_power_beamforming(s, &opts.fixed)?;
    let assumption1 = check_assumption1(s);
    let want_sdr = opts.path != SolvePath::Duality;
    let mut sdr = if want_sdr { Some(run_sdr(s, m, opts)?) } else { None };
    let duality = if opts.path != SolvePath::Sdr {
        Some(run_duality(s, m, opts).unwrap_or_else(|e| failed_duality(s, m, opts, e)))
    } else {
        None
    };
    let dual_ok = duality.as_ref().is_some_and(|d| d.converged);
    let mut sdr_fallback = false;
    if duality.is_some() && !dual_ok && sdr.is_none() {
        sdr = Some(run_sdr(s, m, opts)?);
        sdr_fallback = true;
    }
    let gap = match (&sdr, &duality) {
        (Some(a), Some(b)) if b.result.bcrb.is_finite() => Some((b.result.bcrb - a.result.bcrb) / a.result.bcrb),
        _ => None,
    };
    let (selected, selected_path) = match (&duality, &sdr) {
        (Some(d), _) if d.converged => (d.result.clone(), SolvePath::Duality),
        (_, Some(r)) => (r.result.clone(), SolvePath::Sdr),
        _ => unreachable!("one path always produces a result"),
    };
    if duality.is_some() && !dual_ok {
        sdr_fallback = true;
    }
    Ok(SolveReport {
        path: opts.path,
        assumption1,
        sdr,
        converged: duality.as_ref().map_or(true, |d| d.converged),
        duality,
        gap,
        selected,
        selected_path,
        sdr_fallback,
    })
}

fn failed_duality(s: &Scenario, m: &SensingMoments, opts: &IsacOptions, e: Error) -> DualityReport {
    let v = min_power_beamforming(s, &opts.fixed).map(|p| p.beamformers).unwrap_or_else(|_| BeamformerSet::new(CMatrix::zeros(s.n_tx(), s.num_users())));
    let result = PathResult::new(v.clone(), f64::NAN, s, m).unwrap_or(PathResult {
        bcrb: f64::NAN,
        sinrs: v.sinrs(s),
        powers: v.powers(),
        total_power: v.total_power(),
        lambda: f64::NAN,
        beta: BetaMatrix::zeros(),
        scalarized: None,
        beamformers: v,
    });
    DualityReport {
        result,
        lower_bound: f64::NAN,
        certified_gap: f64::NAN,
        trajectory: Vec::new(),
        stop_reason: StopReason::Failed,
        converged: false,
        fixed_pair_path: FixedPairPath::Duality,
        certificate: None,
        error: Some(e.to_string()),
    }
}

/// Relative change of the saddle objective when `β` is replaced by `β*(V)`.
pub fn saddle_stationarity(beta: &BetaMatrix, v: &BeamformerSet, s: &Scenario, m: &SensingMoments) -> Result<f64> {
    let j = fisher_cov(&v.covariance(), m, s)?.j;
    let here = saddle_objective(beta, &j, s);
    let best = saddle_objective(&beta_star(v, s, m)?, &j, s);
    Ok((best - here).abs() / best.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalarization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let b = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(1e-3..5.0)];
            let (a, c) = aoa_scalarize(b).unwrap();
            let back = aoa_unscalarize(a, c);
            for i in 0..3 {
                assert!((back[i] - b[i]).abs() <= 1e-12 * b[i].abs().max(1.0));
            }
        }
        assert_eq!(aoa_scalarize([0.0, 0.0, 1.0]).unwrap(), (1.0, C64::new(0.0, 0.0)));
        assert!(matches!(aoa_scalarize([1.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(aoa_scalarize([1.0, 0.0, -2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn assumption1_cases() {
        assert!(check_assumption1_counts(3, 3, false, false).is_sufficient());
        assert!(!check_assumption1_counts(3, 2, false, false).is_sufficient());
        assert!(check_assumption1_counts(3, 2, true, false).is_sufficient());
        assert!(check_assumption1_counts(3, 1, true, true).is_sufficient());
        match check_assumption1_counts(3, 1, true, false) {
            Assumption1::Unknown(r) => assert!(r.contains("additional sensing beam")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn optimal_a_matches_beta_star() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_scenario(&mut rng, 4, 2);
        let m = crate::model::compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 32).unwrap();
        let v = min_power_beamforming(&s, &Default::default()).unwrap().beamformers;
        let beta = beta_star(&v, &s, &m).unwrap();
        let col = beta.column(2);
        let (a, b) = aoa_scalarize([col[0], col[1], col[2]]).unwrap();
        let a_star = optimal_a(b, &v.covariance(), &s, &m).unwrap();
        assert!(a_star > 0.0);
        assert!((a_star - a).abs() <= 1e-9 * a);
    }

    #[test]
    fn paths_agree_on_small_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = random_scenario(&mut rng, 4, 2);
        let m = crate::model::compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 32).unwrap();
        let rep = solve_isac(&s, &m, &IsacOptions::default()).unwrap();
        let d = rep.duality.as_ref().unwrap();
        assert!(d.converged, "{:?}", d.stop_reason);
        assert!(rep.gap.unwrap().abs() < 1e-3, "gap {:?}", rep.gap);
        assert!((rep.selected.bcrb - bcrb(&rep.selected.beamformers, &s, &m).unwrap()).abs() <= 1e-8 * rep.selected.bcrb);
        assert!(d.result.beamformers.is_feasible(&s, 1e-8));
    }

    #[test]
    fn communication_only_is_min_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = random_scenario(&mut rng, 4, 2);
        s.weights = vec![0.0; 3];
        let m = crate::model::compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 16).unwrap();
        let rep = solve_isac(&s, &m, &IsacOptions::default()).unwrap();
        let mp = min_power_beamforming(&s, &Default::default()).unwrap();
        assert!((rep.selected.total_power - mp.value).abs() < 1e-9 * mp.value);
        assert_eq!(rep.duality.unwrap().stop_reason, StopReason::CommunicationOnly);
    }
}
