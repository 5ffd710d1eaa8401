//! Amplitude sweeps, blowup-time measurement with refinement confirmation,
//! and fits of the exponential lifespan law.
//!
//! The exponential law makes tiny-amplitude runs astronomically long, so a
//! sweep targets the largest amplitude range where blowup occurs within the
//! horizon and reports local fit quality over that window, never asymptotic
//! constants.  Survived runs are censored, not imputed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::system::{blowup_time, solve_coupled, BlowupVerdict, CoupledOpts, DataFamily, ProfileSet};

/// Library default horizon (the sweep preset uses a smaller one to stay
/// inside the desk-scale runtime budget).
pub const DEFAULT_HORIZON: f64 = 16384.0;

/// Minimum number of cells across the data support `[-1, 1]`.
pub const MIN_SUPPORT_CELLS: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub set: ProfileSet,
    pub c: f64,
    /// Amplitudes, sorted descending.
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    /// Threshold = factor x initial amplitude.
    pub threshold_factor: f64,
    pub dx: f64,
    pub cfl: f64,
    /// Storage stride for the monitor levels.
    pub stride: usize,
    /// Run a half-step confirmation for each finite blowup time.
    pub confirm: bool,
    /// Parallel workers for the runs of one sweep.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            set: ProfileSet::Pessimal,
            c: 2.0,
            epsilons: default_epsilons(),
            horizon: 512.0,
            threshold_factor: crate::system::BLOWUP_THRESHOLD_FACTOR,
            dx: 1.0 / 32.0,
            cfl: 0.8,
            stride: 64,
            confirm: true,
            workers: 2,
        }
    }
}

/// Default amplitude ladder: geometric descent through the measurable
/// window of the pessimal family.
pub fn default_epsilons() -> Vec<f64> {
    let mut eps = Vec::new();
    let mut e = 6.0;
    for _ in 0..10 {
        eps.push((e * 1000.0f64).round() / 1000.0);
        e *= 0.88;
    }
    eps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    BlewUp(f64),
    Survived,
    /// Blowup before `4 + 10 dt`: the amplitude is outside the asymptotic
    /// regime entirely.
    Immediate(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LifespanRecord {
    pub epsilon: f64,
    pub outcome: Outcome,
    pub threshold: f64,
    pub nx: usize,
    pub dt: f64,
    /// Blowup time stable within 10% under one (dx, dt) halving.
    pub refinement_confirmed: Option<bool>,
    /// Confirmation value when run.
    pub t_star_refined: Option<f64>,
}

impl LifespanRecord {
    pub fn t_star(&self) -> Option<f64> {
        match self.outcome {
            Outcome::BlewUp(t) | Outcome::Immediate(t) => Some(t),
            Outcome::Survived => None,
        }
    }
}

fn sweep_grid(c: f64, horizon: f64, dx: f64, cfl: f64, stride: usize) -> Result<Grid> {
    if 2.0 / dx < MIN_SUPPORT_CELLS as f64 {
        return Err(Error::Config(format!(
            "dx = {dx} puts fewer than {MIN_SUPPORT_CELLS} cells across the data support"
        )));
    }
    let x_max = c * horizon + 1.0;
    let mut nx = (2.0 * x_max / dx).ceil() as usize;
    nx += nx % 2;
    Grid::with_cfl(x_max, nx, horizon, cfl, c, stride)
}

fn run_once(cfg: &SweepConfig, epsilon: f64, horizon: f64, dx: f64) -> Result<(Outcome, f64, usize, f64)> {
    let grid = sweep_grid(cfg.c, horizon, dx, cfg.cfl, cfg.stride)?;
    let fam = DataFamily::new(cfg.set, epsilon)?;
    let amp = fam.initial_amplitude(&grid);
    let threshold = if amp > 0.0 { cfg.threshold_factor * amp } else { f64::INFINITY };
    let opts = CoupledOpts { stride: cfg.stride, blowup_threshold: Some(threshold), ..Default::default() };
    let sol = solve_coupled(&fam, cfg.c, &grid, &opts)?;
    let verdict = blowup_time(&sol.v, &sol.w, threshold)?;
    let outcome = match verdict {
        BlowupVerdict::Survived => Outcome::Survived,
        BlowupVerdict::BlewUp(t) => {
            if t <= grid.t_start + 10.0 * grid.dt {
                Outcome::Immediate(t)
            } else {
                Outcome::BlewUp(t)
            }
        }
    };
    Ok((outcome, threshold, grid.nx, grid.dt))
}

/// Runs the sweep: one confirmed record per amplitude, early exit once two
/// consecutive amplitudes survive the horizon (smaller ones will too; a
/// monotonicity heuristic, recorded as such by the censored entries).
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<LifespanRecord>> {
    if cfg.epsilons.is_empty() {
        return Err(Error::Parameter("sweep needs at least one amplitude".into()));
    }
    if cfg.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Parameter("amplitudes must be positive".into()));
    }
    if cfg.epsilons.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Parameter("amplitudes must be sorted descending".into()));
    }

    let mut records: Vec<LifespanRecord> = Vec::new();
    let mut consecutive_survivals = 0usize;
    let chunk = cfg.workers.max(1);
    let mut idx = 0;
    while idx < cfg.epsilons.len() && consecutive_survivals < 2 {
        let batch: Vec<f64> = cfg.epsilons[idx..(idx + chunk).min(cfg.epsilons.len())].to_vec();
        idx += batch.len();
        let outcomes: Vec<Result<(Outcome, f64, usize, f64)>> = batch
            .par_iter()
            .map(|&eps| run_once(cfg, eps, cfg.horizon, cfg.dx))
            .collect();
        for (eps, res) in batch.iter().zip(outcomes) {
            let (outcome, threshold, nx, dt) = res?;
            let mut record = LifespanRecord {
                epsilon: *eps,
                outcome,
                threshold,
                nx,
                dt,
                refinement_confirmed: None,
                t_star_refined: None,
            };
            if let Some(t_star) = record.t_star() {
                consecutive_survivals = 0;
                if cfg.confirm {
                    // confirm on a half-step grid over a shortened horizon
                    let horizon = (1.3 * t_star).min(cfg.horizon).max(t_star + 8.0);
                    let (o2, ..) = run_once(cfg, *eps, horizon, cfg.dx / 2.0)?;
                    let t2 = match o2 {
                        Outcome::BlewUp(t) | Outcome::Immediate(t) => Some(t),
                        Outcome::Survived => None,
                    };
                    record.t_star_refined = t2;
                    record.refinement_confirmed = Some(t2.map_or(false, |t| (t - t_star).abs() <= 0.1 * t_star));
                }
            } else {
                consecutive_survivals += 1;
            }
            records.push(record);
        }
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Slope of `log T*` against `eps^{-2}`.
    pub c_tilde: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub censored_count: usize,
    /// `[min, max]` of the per-point slopes `(log T* - intercept) eps^2`,
    /// bracketing the measured law; vacuous when no finite points exist.
    pub slope_corridor: Option<(f64, f64)>,
    pub sufficient: bool,
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Least-squares line through `(eps^{-2}, log T*)` over the finite records.
pub fn fit_exp_law(records: &[LifespanRecord]) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.t_star().map(|t| (r.epsilon.powi(-2), t.ln())))
        .collect();
    let censored = records.len() - pts.len();
    if pts.len() < 3 {
        return Ok(FitResult {
            c_tilde: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
            n_points: pts.len(),
            censored_count: censored,
            slope_corridor: None,
            sufficient: false,
        });
    }
    let (slope, intercept, r2) = least_squares(&pts);
    let slopes: Vec<f64> = pts.iter().map(|(x, y)| (y - intercept) / x).collect();
    let corridor = slopes
        .iter()
        .fold(None, |acc: Option<(f64, f64)>, s| match acc {
            None => Some((*s, *s)),
            Some((lo, hi)) => Some((lo.min(*s), hi.max(*s))),
        });
    Ok(FitResult {
        c_tilde: slope,
        intercept,
        r_squared: r2,
        n_points: pts.len(),
        censored_count: censored,
        slope_corridor: corridor,
        sufficient: true,
    })
}

/// Candidate lifespan laws compared by fit quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Law {
    /// `log T* ~ eps^{-2}` (the exponential law at quadratic rate).
    ExpInverseSquare,
    /// `log T* ~ eps^{-1}` (almost global existence at linear rate).
    ExpInverse,
    /// `T* ~ eps^{-2}` (polynomial lifespan).
    PolyInverseSquare,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawFit {
    pub law: Law,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawComparison {
    pub fits: Vec<LawFit>,
    pub winner: Law,
    pub n_points: usize,
}

/// Fits all candidate laws over the finite records and ranks them by r^2.
pub fn competing_law_test(records: &[LifespanRecord]) -> Result<LawComparison> {
    let finite: Vec<(f64, f64)> = records.iter().filter_map(|r| r.t_star().map(|t| (r.epsilon, t))).collect();
    if finite.len() < 4 {
        return Err(Error::Insufficient(format!(
            "competing-law test needs at least 4 finite blowup times, got {}",
            finite.len()
        )));
    }
    let transforms: [(Law, fn(f64) -> f64, fn(f64) -> f64); 3] = [
        (Law::ExpInverseSquare, |e| e.powi(-2), |t| t.ln()),
        (Law::ExpInverse, |e| e.powi(-1), |t| t.ln()),
        (Law::PolyInverseSquare, |e| e.powi(-2), |t| t),
    ];
    let mut fits = Vec::new();
    for (law, fx, fy) in transforms {
        let pts: Vec<(f64, f64)> = finite.iter().map(|(e, t)| (fx(*e), fy(*t))).collect();
        let (slope, intercept, r2) = least_squares(&pts);
        fits.push(LawFit { law, slope, intercept, r_squared: r2 });
    }
    let winner = fits.iter().max_by(|a, b| a.r_squared.total_cmp(&b.r_squared)).unwrap().law;
    Ok(LawComparison { fits, winner, n_points: finite.len() })
}
