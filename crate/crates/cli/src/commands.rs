use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use isac_core::bfim::{fisher_cov, q_b_aoa, Scenario};
use isac_core::duality::{sweep_admissible, AdmissibleSweep, Verdict};
use isac_core::fixture::{run_appendix_d, FixtureInput, FixtureReport, FixtureTolerances};
use isac_core::maxmin::{solve_isac, IsacOptions, SolvePath, SolveReport};
use isac_core::model::{beam_pattern, compute_moments, SensingMoments, DEFAULT_QUADRATURE_NODES};
use isac_core::numerics::{hermitian_eig, CMatrix, HermitianMatrix, C64};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{self, Artifacts};
use crate::scenario::ScenarioFile;

pub const BEAM_GRID_POINTS: usize = 1441;

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "Bayesian CRB beamforming for integrated sensing and communications")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize beamformers for a scenario and write report.json and beampattern.csv.
    Solve(SolveArgs),
    /// Classify a (lambda, Re b) grid at fixed Im b and write admissible.csv.
    SweepAdmissible(SweepArgs),
    /// Recompute the two-user counterexample and check it against its reference constants.
    FixtureAppendixD(FixtureArgs),
    /// Write the sensing moments of a scenario to moments.json.
    MomentsDump(MomentsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PathArg {
    Sdr,
    Duality,
    Both,
}

impl From<PathArg> for SolvePath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Sdr => SolvePath::Sdr,
            PathArg::Duality => SolvePath::Duality,
            PathArg::Both => SolvePath::Both,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub path: PathArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Quadrature nodes for the sensing moments.
    #[arg(long, default_value_t = DEFAULT_QUADRATURE_NODES)]
    pub nodes: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub im_b: f64,
    /// `LO:HI`; defaults to `0 : 1.2 max ρ_max(Q_b)` over the Re b range.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_range: Option<String>,
    #[arg(long, default_value = "-2:2", allow_hyphen_values = true)]
    pub reb_range: String,
    /// `N` for an N×N grid, or `NREBxNLAMBDA`.
    #[arg(long, default_value = "40")]
    pub cells: String,
    /// Phase-1 tolerance of the admissibility test.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_QUADRATURE_NODES)]
    pub nodes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Override every comparison tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// SINR targets `G1,G2` as linear ratios.
    #[arg(long)]
    pub gamma: Option<String>,
    /// Also write fixture.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value_t = DEFAULT_QUADRATURE_NODES)]
    pub nodes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Caps the global thread pool at `ISAC_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ISAC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Schema(format!("ISAC_THREADS must be a positive integer, got {v:?}")))?;
        // A pool built earlier in the process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a command and returns the text for standard output.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::SweepAdmissible(a) => cmd_sweep_admissible(&a),
        Command::FixtureAppendixD(a) => cmd_fixture_appendix_d(&a),
        Command::MomentsDump(a) => cmd_moments_dump(&a),
    }
}

fn load(path: &Path, nodes: usize) -> Result<(Scenario, SensingMoments), CliError> {
    if nodes == 0 {
        return Err(CliError::Schema("--nodes must be at least 1".into()));
    }
    let s = ScenarioFile::load(path)?.to_scenario()?;
    let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, nodes)?;
    Ok((s, m))
}

pub fn beam_grid_deg() -> Vec<f64> {
    let step = 180.0 / (BEAM_GRID_POINTS - 1) as f64;
    (0..BEAM_GRID_POINTS).map(|i| -90.0 + step * i as f64).collect()
}

pub fn solve_scenario(s: &Scenario, m: &SensingMoments, path: SolvePath) -> Result<SolveReport, CliError> {
    let opts = IsacOptions { path, ..Default::default() };
    Ok(solve_isac(s, m, &opts)?)
}

pub fn cmd_solve(a: &SolveArgs) -> Result<String, CliError> {
    let (s, m) = load(&a.scenario, a.nodes)?;
    let report = solve_scenario(&s, &m, a.path.into())?;
    let grid = beam_grid_deg();
    let rad: Vec<f64> = grid.iter().map(|d| d.to_radians()).collect();
    let pattern = beam_pattern(&s.geometry, &report.selected.beamformers.v, &rad);

    let mut art = Artifacts::default();
    art.add_json(output::REPORT_JSON, &report)?;
    art.add(output::BEAMPATTERN_CSV, output::beampattern_csv(&grid, &pattern)?);
    art.write(&a.out)?;

    let mut msg = format!(
        "selected {:?} path: bcrb {:.10e}, total power {:.6}",
        report.selected_path, report.selected.bcrb, report.selected.total_power
    );
    if let Some(g) = report.gap {
        msg.push_str(&format!(", relative gap duality vs sdr {g:.3e}"));
    }
    if report.sdr_fallback {
        msg.push_str(" (duality path did not converge; sdr result used)");
    }
    Ok(msg)
}

fn parse_range(flag: &str, text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Schema(format!("--{flag}: expected LO:HI with LO <= HI, got {text:?}"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn parse_cells(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Schema(format!("--cells: expected N or NREBxNLAMBDA, got {text:?}"));
    let parse = |t: &str| t.trim().parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(bad);
    match text.split_once(['x', 'X']) {
        Some((r, l)) => Ok((parse(r)?, parse(l)?)),
        None => {
            let n = parse(text)?;
            Ok((n, n))
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub admissible: usize,
    pub inadmissible: usize,
    pub indeterminate: usize,
    pub psd_cells: usize,
    pub psd_cells_admissible: usize,
    pub non_psd_admissible: usize,
    pub monotone_columns: usize,
    pub columns: usize,
}

impl SweepSummary {
    /// Containment `PSD ⊆ admissible`, with at least one admissible non-PSD cell.
    pub fn strictly_contains_psd(&self) -> bool {
        self.psd_cells == self.psd_cells_admissible && self.non_psd_admissible > 0
    }
}

pub fn summarize(sw: &AdmissibleSweep) -> SweepSummary {
    let mut sum = SweepSummary {
        admissible: 0,
        inadmissible: 0,
        indeterminate: 0,
        psd_cells: 0,
        psd_cells_admissible: 0,
        non_psd_admissible: 0,
        monotone_columns: 0,
        columns: sw.re_bs.len(),
    };
    for (r, row) in sw.verdicts.iter().enumerate() {
        let mut seen = false;
        let mut monotone = true;
        for (l, v) in row.iter().enumerate() {
            let adm = *v == Verdict::Admissible;
            match v {
                Verdict::Admissible => sum.admissible += 1,
                Verdict::Inadmissible => sum.inadmissible += 1,
                Verdict::Indeterminate => sum.indeterminate += 1,
            }
            if sw.is_psd_cell(r, l) {
                sum.psd_cells += 1;
                sum.psd_cells_admissible += adm as usize;
            } else if adm {
                sum.non_psd_admissible += 1;
            }
            monotone &= !seen || adm;
            seen |= adm;
        }
        sum.monotone_columns += monotone as usize;
    }
    sum
}

/// Grids for a sweep; the default `λ` range covers every `ρ_max(Q_b)` with 20% headroom.
pub fn sweep_grids(
    m: &SensingMoments,
    im_b: f64,
    lambda_range: Option<(f64, f64)>,
    reb_range: (f64, f64),
    cells: (usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    let re_bs = linspace(reb_range.0, reb_range.1, cells.0);
    let (lo, hi) = lambda_range.unwrap_or_else(|| {
        let rho = re_bs
            .iter()
            .map(|&r| hermitian_eig(&q_b_aoa(C64::new(r, im_b), m)).max())
            .fold(0.0, f64::max);
        (0.0, 1.2 * rho)
    });
    (linspace(lo, hi, cells.1), re_bs)
}

pub fn cmd_sweep_admissible(a: &SweepArgs) -> Result<String, CliError> {
    let lambda_range = a.lambda_range.as_deref().map(|t| parse_range("lambda-range", t)).transpose()?;
    let reb_range = parse_range("reb-range", &a.reb_range)?;
    let cells = parse_cells(&a.cells)?;
    if !(a.im_b.is_finite() && a.tol >= 0.0) {
        return Err(CliError::Schema("--im-b must be finite and --tol nonnegative".into()));
    }
    let (s, m) = load(&a.scenario, a.nodes)?;
    let (lambdas, re_bs) = sweep_grids(&m, a.im_b, lambda_range, reb_range, cells);
    let sw = sweep_admissible(&s, &m, a.im_b, &lambdas, &re_bs, a.tol)?;

    let mut art = Artifacts::default();
    art.add(output::ADMISSIBLE_CSV, output::admissible_csv(&sw)?);
    art.write(&a.out)?;

    let sum = summarize(&sw);
    Ok(format!(
        "{} admissible, {} inadmissible, {} indeterminate; PSD cells admissible {}/{}; admissible non-PSD cells {}; monotone columns {}/{}",
        sum.admissible,
        sum.inadmissible,
        sum.indeterminate,
        sum.psd_cells_admissible,
        sum.psd_cells,
        sum.non_psd_admissible,
        sum.monotone_columns,
        sum.columns
    ))
}

pub fn fixture_report(a: &FixtureArgs) -> Result<FixtureReport, CliError> {
    let tol = a.tol.map_or_else(FixtureTolerances::default, FixtureTolerances::uniform);
    let mut input = FixtureInput::default();
    if let Some(text) = &a.gamma {
        let g: Vec<f64> = text.split(',').filter_map(|t| t.trim().parse().ok()).collect();
        if g.len() != 2 || text.split(',').count() != 2 || g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(CliError::Schema(format!("--gamma: expected two positive numbers G1,G2, got {text:?}")));
        }
        input.gamma = [g[0], g[1]];
    }
    if a.tol.is_some_and(|t| !(t >= 0.0)) {
        return Err(CliError::Schema("--tol must be nonnegative".into()));
    }
    Ok(run_appendix_d(&input, &tol)?)
}

pub fn cmd_fixture_appendix_d(a: &FixtureArgs) -> Result<String, CliError> {
    let rep = fixture_report(a)?;
    if let Some(dir) = &a.out {
        let mut art = Artifacts::default();
        art.add_json("fixture.json", &rep)?;
        art.write(dir)?;
    }
    let lines: Vec<String> = rep
        .checks
        .iter()
        .map(|c| {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            if c.expected.is_nan() {
                format!("{verdict} {:<22} value {:.6e}  {}", c.name, c.value, c.detail)
            } else {
                format!(
                    "{verdict} {:<22} value {:.6e} expected {:.6e} tol {:.1e}  {}",
                    c.name, c.value, c.expected, c.tol, c.detail
                )
            }
        })
        .collect();
    let text = lines.join("\n");
    if rep.passed() {
        Ok(text)
    } else {
        let names: Vec<&str> = rep.failures().iter().map(|c| c.name.as_str()).collect();
        Err(CliError::Fixture(format!("{text}\nfailing: {}", names.join(", "))))
    }
}

#[derive(Serialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    /// Row-major `[re, im]` pairs.
    entries: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        let entries = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| [m[(i, j)].re, m[(i, j)].im])).collect();
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }
}

impl From<&HermitianMatrix> for MatrixJson {
    fn from(m: &HermitianMatrix) -> Self {
        Self::from(m.as_matrix())
    }
}

#[derive(Serialize)]
struct MomentsJson {
    quadrature_nodes: usize,
    prefactor: f64,
    m_aa: MatrixJson,
    m_da: MatrixJson,
    m_dd: MatrixJson,
    prior_fim: Vec<Vec<f64>>,
}

pub fn cmd_moments_dump(a: &MomentsArgs) -> Result<String, CliError> {
    let (s, m) = load(&a.scenario, a.nodes)?;
    let n = s.n_tx();
    let c = fisher_cov(&CMatrix::zeros(n, n), &m, &s)?.c;
    let dump = MomentsJson {
        quadrature_nodes: m.quadrature_nodes,
        prefactor: s.prefactor(),
        m_aa: (&m.m_aa).into(),
        m_da: (&m.m_da).into(),
        m_dd: (&m.m_dd).into(),
        prior_fim: (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect(),
    };
    let mut art = Artifacts::default();
    art.add_json("moments.json", &dump)?;
    art.write(&a.out)?;
    Ok(format!("moments of a {n}-element array with {} nodes", m.quadrature_nodes))
}
