//! Scenario files: JSON schema, validation with line-precise messages, and conversion to a
//! solver [`Scenario`].

use std::path::Path;

use isac_core::bfim::{Scenario, NUM_PARAMS};
use isac_core::model::{steering, ArrayGeometry, ScalarPrior, Side};
use isac_core::numerics::{CMatrix, C64};
use isac_core::random::complex_gaussian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub geometry: GeometrySpec,
    pub users: Vec<UserSpec>,
    pub power: f64,
    pub noise_power: f64,
    #[serde(rename = "symbols_T")]
    pub symbols_t: f64,
    pub prior: PriorSpec,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub n_tx: usize,
    pub n_rx: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSpec>,
    pub sinr_db: f64,
}

/// Explicit `[re, im]` entries, or `"random"` for a seeded `CN(0, 1)` draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Entries(Vec<[f64; 2]>),
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub alpha: AlphaSpec,
    pub theta: ThetaSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSpec {
    pub mean_re: f64,
    pub mean_im: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaKind {
    Uniform,
    Gaussian,
}

/// `uniform`: `θ ∈ [c − δ, c + δ]`; `gaussian`: mean `c`, standard deviation `δ`.
/// `params = [c]` in degrees, empty for `c = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub kind: ThetaKind,
    #[serde(default)]
    pub params: Vec<f64>,
    pub delta_deg: f64,
}

/// 1-based line and column of the first `"key":` in `text`.
fn locate_key(text: &str, key: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&needle) {
        let at = from + pos;
        let rest = text[at + needle.len()..].trim_start();
        if rest.starts_with(':') {
            let line = text[..at].matches('\n').count() + 1;
            let col = at - text[..at].rfind('\n').map_or(0, |i| i + 1) + 1;
            return Some((line, col));
        }
        from = at + needle.len();
    }
    None
}

struct Locator<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Locator<'_> {
    fn err(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        match locate_key(self.text, key) {
            Some((l, c)) => CliError::Schema(format!("{}:{l}:{c}: `{key}`: {msg}", self.origin)),
            None => CliError::Schema(format!("{}: `{key}`: {msg}", self.origin)),
        }
    }

    /// Line of the `i`-th occurrence of `key`, for per-user messages.
    fn err_nth(&self, key: &str, i: usize, msg: impl std::fmt::Display) -> CliError {
        let needle = format!("\"{key}\"");
        let mut seen = 0;
        let mut from = 0;
        while let Some(pos) = self.text[from..].find(&needle) {
            let at = from + pos;
            if self.text[at + needle.len()..].trim_start().starts_with(':') {
                if seen == i {
                    let line = self.text[..at].matches('\n').count() + 1;
                    return CliError::Schema(format!("{}:{line}: user {i}: `{key}`: {msg}", self.origin));
                }
                seen += 1;
            }
            from = at + needle.len();
        }
        self.err("users", format!("user {i}: {msg}"))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
            let full = e.to_string();
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let msg = full.strip_suffix(&suffix).unwrap_or(&full);
            CliError::Schema(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
        })?;
        file.validate(&Locator { text, origin })?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("{}: cannot read scenario: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn validate(&self, loc: &Locator) -> Result<(), CliError> {
        if self.geometry.n_tx == 0 {
            return Err(loc.err("n_tx", "must be at least 1"));
        }
        if self.geometry.n_rx == 0 {
            return Err(loc.err("n_rx", "must be at least 1"));
        }
        if self.users.is_empty() {
            return Err(loc.err("users", "at least one user is required"));
        }
        let (mut n_angle, mut n_channel, mut n_sinr) = (0, 0, 0);
        for (i, u) in self.users.iter().enumerate() {
            if !u.sinr_db.is_finite() {
                return Err(loc.err_nth("sinr_db", n_sinr, "must be a finite number of dB"));
            }
            n_sinr += 1;
            match (&u.angle_deg, &u.channel) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(loc.err_nth("sinr_db", i, "exactly one of `angle_deg` and `channel` is required"));
                }
                (Some(a), None) => {
                    if !(a.is_finite() && a.abs() <= 90.0) {
                        return Err(loc.err_nth("angle_deg", n_angle, "must lie in [-90, 90]"));
                    }
                    n_angle += 1;
                }
                (None, Some(ChannelSpec::Keyword(k))) => {
                    if k != "random" {
                        return Err(loc.err_nth("channel", n_channel, format!("unknown keyword {k:?}, expected \"random\"")));
                    }
                    n_channel += 1;
                }
                (None, Some(ChannelSpec::Entries(e))) => {
                    if e.len() != self.geometry.n_tx {
                        return Err(loc.err_nth(
                            "channel",
                            n_channel,
                            format!("has {} entries, expected n_tx = {}", e.len(), self.geometry.n_tx),
                        ));
                    }
                    if e.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(loc.err_nth("channel", n_channel, "entries must be finite"));
                    }
                    n_channel += 1;
                }
            }
        }
        if !positive(self.power) {
            return Err(loc.err("power", "must be positive"));
        }
        if !positive(self.noise_power) {
            return Err(loc.err("noise_power", "must be positive"));
        }
        if !positive(self.symbols_t) {
            return Err(loc.err("symbols_T", "must be positive"));
        }
        let a = &self.prior.alpha;
        if !(a.mean_re.is_finite() && a.mean_im.is_finite()) {
            return Err(loc.err("alpha", "mean must be finite"));
        }
        if !positive(a.variance) {
            return Err(loc.err("variance", "alpha variance must be positive"));
        }
        let t = &self.prior.theta;
        if t.params.len() > 1 || t.params.iter().any(|p| !p.is_finite()) {
            return Err(loc.err("params", "expected [] or [center_deg]"));
        }
        if !positive(t.delta_deg) {
            return Err(loc.err("delta_deg", "must be positive"));
        }
        if self.weights.len() != NUM_PARAMS {
            return Err(loc.err("weights", format!("expected {NUM_PARAMS} entries [re alpha, im alpha, theta]")));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(loc.err("weights", "entries must be nonnegative"));
        }
        Ok(())
    }

    pub fn theta_prior(&self) -> ScalarPrior {
        let t = &self.prior.theta;
        let c = t.params.first().copied().unwrap_or(0.0).to_radians();
        let d = t.delta_deg.to_radians();
        match t.kind {
            ThetaKind::Uniform => ScalarPrior::Uniform { lo: c - d, hi: c + d },
            ThetaKind::Gaussian => ScalarPrior::RealGaussian { mean: c, variance: d * d },
        }
    }

    /// Random channels are drawn in user order from a generator seeded with `seed`.
    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let geometry = ArrayGeometry::new(self.geometry.n_tx, self.geometry.n_rx)?;
        let k = self.users.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut h = CMatrix::zeros(geometry.n_tx, k);
        for (i, u) in self.users.iter().enumerate() {
            match (&u.angle_deg, &u.channel) {
                (Some(a), _) => h.set_column(i, &steering(&geometry, a.to_radians(), Side::Tx)),
                (_, Some(ChannelSpec::Entries(e))) => {
                    for (r, z) in e.iter().enumerate() {
                        h[(r, i)] = C64::new(z[0], z[1]);
                    }
                }
                (_, Some(ChannelSpec::Keyword(_))) => {
                    for r in 0..geometry.n_tx {
                        h[(r, i)] = complex_gaussian(&mut rng);
                    }
                }
                (None, None) => unreachable!("validated"),
            }
        }
        let a = &self.prior.alpha;
        let s = Scenario {
            geometry,
            h,
            gamma: self.users.iter().map(|u| 10f64.powf(u.sinr_db / 10.0)).collect(),
            sigma2: self.noise_power,
            power: self.power,
            symbols_t: self.symbols_t,
            alpha_prior: ScalarPrior::ComplexGaussian { mean: [a.mean_re, a.mean_im], variance: a.variance },
            theta_prior: self.theta_prior(),
            weights: self.weights.clone(),
        };
        s.validate()?;
        Ok(s)
    }
}
