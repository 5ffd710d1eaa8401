//! The coupled two-speed system and its Picard iteration.
//!
//! ```text
//!     box   V = x^{-1} W d_t V,
//!     box_c W = x^{-1} (d_t V)^2,      c > 1,
//! ```
//!
//! with odd data `(eps V0, eps V1, eps W0, eps W1)` supported in |x| <= 1 at
//! t = 4.  The direct solver co-evolves both fields; the Picard iteration
//! solves, for each j, two linear equations forced by iterate j - 1.  Both
//! use the same lagged time difference `(V^n - V^{n-1})/dt` inside the
//! forcing, so the iteration's fixed point is exactly the direct scheme.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::norms::{self, NormReport};
use crate::waveop::{
    solve_linear, stencil_window, BlowupMarker, Forcing, InitialData, Parity, SolveOpts, SpaceTimeTrace,
    MAX_COURANT,
};

// ---------------------------------------------------------------------------
// Data families
// ---------------------------------------------------------------------------

/// Which profile of a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    V0,
    V1,
    W0,
    W1,
}

/// Shipped profile sets; every profile is odd, smooth, supported in |x| <= 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSet {
    /// All four profiles equal `x exp(-1/(1-x^2))`.
    Bump,
    /// Zero positions, large `V1`: drives the `(d_t V)^2` source hard.
    Pessimal,
}

/// Initial-data family: a profile set at amplitude `epsilon`, optionally
/// perturbed by a small seeded smooth odd field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataFamily {
    pub set: ProfileSet,
    pub epsilon: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Relative size of the seeded perturbation (0 disables it).
    #[serde(default)]
    pub perturbation: f64,
}

/// Odd base bump `x exp(-1/(1-x^2))` on |x| < 1.
fn odd_bump(x: f64) -> f64 {
    x * crate::waveop::smooth_bump(x)
}

impl DataFamily {
    pub fn new(set: ProfileSet, epsilon: f64) -> Result<DataFamily> {
        if !(epsilon >= 0.0) {
            return Err(Error::Parameter(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        Ok(DataFamily { set, epsilon, seed: None, perturbation: 0.0 })
    }

    /// Profile value before the epsilon scaling.
    pub fn profile(&self, which: Component, x: f64) -> f64 {
        let base = match (self.set, which) {
            (ProfileSet::Bump, _) => odd_bump(x),
            (ProfileSet::Pessimal, Component::V1) => 4.0 * odd_bump(x),
            (ProfileSet::Pessimal, _) => 0.0,
        };
        base + self.perturbation_term(which, x)
    }

    fn perturbation_term(&self, which: Component, x: f64) -> f64 {
        let Some(seed) = self.seed else { return 0.0 };
        if self.perturbation == 0.0 {
            return 0.0;
        }
        let comp_idx = match which {
            Component::V0 => 0,
            Component::V1 => 1,
            Component::W0 => 2,
            Component::W1 => 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(comp_idx));
        let coeffs: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let phi = crate::waveop::smooth_bump(x);
        let mut p = 0.0;
        let mut xp = x;
        for a in coeffs {
            p += a * xp * phi;
            xp *= x * x;
        }
        self.perturbation * p
    }

    /// Epsilon-scaled data slices on a grid.
    pub fn sample(&self, grid: &Grid) -> SystemData {
        let eps = self.epsilon;
        SystemData {
            v: InitialData::from_fns(
                grid,
                |x| eps * self.profile(Component::V0, x),
                |x| eps * self.profile(Component::V1, x),
            ),
            w: InitialData::from_fns(
                grid,
                |x| eps * self.profile(Component::W0, x),
                |x| eps * self.profile(Component::W1, x),
            ),
        }
    }

    /// Max absolute value over all four scaled slices; the default blowup
    /// threshold is 1e3 times this.
    pub fn initial_amplitude(&self, grid: &Grid) -> f64 {
        let d = self.sample(grid);
        d.v.position
            .iter()
            .chain(&d.v.velocity)
            .chain(&d.w.position)
            .chain(&d.w.velocity)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Sampled data for both fields.
pub struct SystemData {
    pub v: InitialData,
    pub w: InitialData,
}

/// Ratio of the default blowup threshold to the initial amplitude.
pub const BLOWUP_THRESHOLD_FACTOR: f64 = 1e3;

// ---------------------------------------------------------------------------
// Direct coupled solve
// ---------------------------------------------------------------------------

/// Time discretization of `d_t V` inside the forcings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingTime {
    /// `(V^n - V^{n-1})/dt`, centered half a level back; keeps the scheme
    /// explicit and matches the Picard fixed point.
    Lagged,
    /// Predictor/corrector pass with the time-centered difference.
    Corrected,
}

#[derive(Debug, Clone)]
pub struct CoupledOpts {
    pub stride: usize,
    /// `None` uses `1e3 x initial amplitude` (infinite for zero data).
    pub blowup_threshold: Option<f64>,
    pub forcing_time: ForcingTime,
    pub record_forcing: bool,
    /// `false` switches the couplings off (homogeneous evolution).
    pub nonlinearity: bool,
}

impl Default for CoupledOpts {
    fn default() -> Self {
        CoupledOpts {
            stride: 1,
            blowup_threshold: None,
            forcing_time: ForcingTime::Lagged,
            record_forcing: false,
            nonlinearity: true,
        }
    }
}

pub struct CoupledSolution {
    pub v: SpaceTimeTrace,
    pub w: SpaceTimeTrace,
    pub v_forcing: Option<SpaceTimeTrace>,
    pub w_forcing: Option<SpaceTimeTrace>,
    /// Threshold actually applied.
    pub threshold: f64,
    pub blowup: Option<BlowupMarker>,
}

struct FieldBuffers {
    prev: Vec<f64>,
    curr: Vec<f64>,
    scratch: Vec<f64>,
}

/// Co-evolves the coupled system up to the horizon or to blowup.
pub fn solve_coupled(data: &DataFamily, c: f64, grid: &Grid, opts: &CoupledOpts) -> Result<CoupledSolution> {
    if !(c > 1.0) {
        return Err(Error::Parameter(format!("the second speed must satisfy c > 1, got {c}")));
    }
    if grid.courant(c) > MAX_COURANT + 1e-12 {
        return Err(Error::Config(format!(
            "courant number {:.4} at speed {c} exceeds {MAX_COURANT}",
            grid.courant(c)
        )));
    }
    if grid.n_steps % opts.stride != 0 {
        return Err(Error::Config("n_steps must be a multiple of the store stride".into()));
    }
    let sampled = data.sample(grid);
    let scale = data.initial_amplitude(grid);
    if sampled.v.odd_violation(grid).max(sampled.w.odd_violation(grid)) > 1e-12 * scale.max(1.0) {
        return Err(Error::Validation("family data is not odd".into()));
    }
    let threshold = opts
        .blowup_threshold
        .unwrap_or(if scale > 0.0 { BLOWUP_THRESHOLD_FACTOR * scale } else { f64::INFINITY });

    let nx = grid.nx;
    let dt = grid.dt;
    let dt2 = dt * dt;
    let lam_v2 = grid.courant(1.0).powi(2);
    let lam_w2 = grid.courant(c).powi(2);

    let mut v = FieldBuffers { prev: vec![0.0; nx], curr: vec![0.0; nx], scratch: vec![0.0; nx] };
    let mut w = FieldBuffers { prev: vec![0.0; nx], curr: vec![0.0; nx], scratch: vec![0.0; nx] };
    let mut fv = vec![0.0; nx];
    let mut fw = vec![0.0; nx];

    let mut v_trace = SpaceTimeTrace::with_capacity(grid.clone(), Some(1.0), opts.stride, Parity::Odd);
    let mut w_trace = SpaceTimeTrace::with_capacity(grid.clone(), Some(c), opts.stride, Parity::Odd);
    let mut v_ftrace = opts
        .record_forcing
        .then(|| SpaceTimeTrace::with_capacity(grid.clone(), None, opts.stride, Parity::Odd));
    let mut w_ftrace = opts
        .record_forcing
        .then(|| SpaceTimeTrace::with_capacity(grid.clone(), None, opts.stride, Parity::Odd));

    // support window: data live in |x| <= 1; both speeds spread < 1 cell/step
    let (mut wlo, mut whi) = {
        let r = grid.nodes_within(1.0 + 2.0 * grid.dx);
        (r.start, r.end)
    };

    let on = opts.nonlinearity;
    // forcing at level n from a time difference of V
    macro_rules! fill {
        ($dtv:expr, $wcur:expr, $lo:expr, $hi:expr) => {
            for i in $lo..$hi {
                if on {
                    let x = grid.x(i);
                    let d = $dtv(i);
                    fv[i] = $wcur[i] * d / x;
                    fw[i] = d * d / x;
                } else {
                    fv[i] = 0.0;
                    fw[i] = 0.0;
                }
            }
        };
    }

    // Level 0 and the forcing at t = 4 (uses the exact velocity data).
    v_trace.push_level(&sampled.v.position);
    w_trace.push_level(&sampled.w.position);
    fill!(|i: usize| sampled.v.velocity[i], &sampled.w.position, wlo, whi);
    if let (Some(ft), Some(gt)) = (&mut v_ftrace, &mut w_ftrace) {
        ft.push_level(&fv);
        gt.push_level(&fw);
    }

    // Taylor starts.
    let taylor = |pos: &[f64], vel: &[f64], f: &[f64], c2: f64, out: &mut [f64], lo: usize, hi: usize| {
        for i in lo..hi {
            let left = if i == 0 { -pos[0] } else { pos[i - 1] };
            let right = if i == nx - 1 { -pos[nx - 1] } else { pos[i + 1] };
            let lap = (left - 2.0 * pos[i] + right) / (grid.dx * grid.dx);
            out[i] = pos[i] + dt * vel[i] + 0.5 * dt2 * (c2 * lap + f[i]);
        }
    };
    wlo = wlo.saturating_sub(1);
    whi = (whi + 1).min(nx);
    taylor(&sampled.v.position, &sampled.v.velocity, &fv, 1.0, &mut v.curr, wlo, whi);
    taylor(&sampled.w.position, &sampled.w.velocity, &fw, c * c, &mut w.curr, wlo, whi);
    v.prev.copy_from_slice(&sampled.v.position);
    w.prev.copy_from_slice(&sampled.w.position);
    if opts.stride == 1 {
        v_trace.push_level(&v.curr);
        w_trace.push_level(&w.curr);
        if v_ftrace.is_some() {
            fill!(|i: usize| (v.curr[i] - v.prev[i]) / dt, &w.curr, wlo, whi);
            v_ftrace.as_mut().unwrap().push_level(&fv);
            w_ftrace.as_mut().unwrap().push_level(&fw);
        }
    }

    let mut blowup: Option<BlowupMarker> = None;
    for n in 1..grid.n_steps {
        wlo = wlo.saturating_sub(1);
        whi = (whi + 1).min(nx);
        fill!(|i: usize| (v.curr[i] - v.prev[i]) / dt, &w.curr, wlo, whi);

        let mut worst = stencil_window(&mut v.scratch, &v.prev, &v.curr, Some(&fv), lam_v2, dt2, wlo, whi);

        if let ForcingTime::Corrected = opts.forcing_time {
            // corrector: re-fill with the centered difference through the
            // predicted level, then re-step both fields
            let vpred = v.scratch.clone();
            fill!(|i: usize| (vpred[i] - v.prev[i]) / (2.0 * dt), &w.curr, wlo, whi);
            worst = stencil_window(&mut v.scratch, &v.prev, &v.curr, Some(&fv), lam_v2, dt2, wlo, whi);
        }
        let worst_w = stencil_window(&mut w.scratch, &w.prev, &w.curr, Some(&fw), lam_w2, dt2, wlo, whi);
        worst = worst.max(worst_w);

        for f in [&mut v, &mut w] {
            std::mem::swap(&mut f.prev, &mut f.curr);
            std::mem::swap(&mut f.curr, &mut f.scratch);
        }

        if !worst.is_finite() || worst > threshold {
            blowup = Some(BlowupMarker { time: grid.t(n + 1), step: n + 1 });
            break;
        }
        if (n + 1) % opts.stride == 0 {
            v_trace.push_level(&v.curr);
            w_trace.push_level(&w.curr);
            if v_ftrace.is_some() {
                fill!(|i: usize| (v.curr[i] - v.prev[i]) / dt, &w.curr, wlo, whi);
                v_ftrace.as_mut().unwrap().push_level(&fv);
                w_ftrace.as_mut().unwrap().push_level(&fw);
            }
        }
    }

    v_trace.blowup = blowup;
    w_trace.blowup = blowup;
    Ok(CoupledSolution { v: v_trace, w: w_trace, v_forcing: v_ftrace, w_forcing: w_ftrace, threshold, blowup })
}

// ---------------------------------------------------------------------------
// Blowup detection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlowupVerdict {
    /// First stored time where the monitor exceeded the threshold.
    BlewUp(f64),
    Survived,
}

/// Scans stored levels for `max(|V|, |W|, energy density)` exceeding the
/// threshold; a solver-side marker wins if it is earlier.
pub fn blowup_time(v: &SpaceTimeTrace, w: &SpaceTimeTrace, threshold: f64) -> Result<BlowupVerdict> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter("threshold must be positive".into()));
    }
    let cv = v.speed.unwrap_or(1.0);
    let cw = w.speed.unwrap_or(1.0);
    let levels = v.n_levels().min(w.n_levels());
    let nx = v.grid.nx;
    let dts = v.dt_store();
    let dx = v.grid.dx;
    let mut found: Option<f64> = None;
    'outer: for k in 0..levels {
        for (tr, c) in [(v, cv), (w, cw)] {
            let row = tr.level(k);
            for i in 0..nx {
                let vt = if levels < 3 {
                    0.0
                } else if k == 0 {
                    (-3.0 * tr.value(0, i) + 4.0 * tr.value(1, i) - tr.value(2, i)) / (2.0 * dts)
                } else if k == levels - 1 {
                    (3.0 * tr.value(k, i) - 4.0 * tr.value(k - 1, i) + tr.value(k - 2, i)) / (2.0 * dts)
                } else {
                    (tr.value(k + 1, i) - tr.value(k - 1, i)) / (2.0 * dts)
                };
                let left = if i == 0 { -row[0] } else { row[i - 1] };
                let right = if i == nx - 1 { -row[nx - 1] } else { row[i + 1] };
                let vx = (right - left) / (2.0 * dx);
                let dens = vt * vt + c * c * vx * vx;
                let amp = row[i].abs();
                if !amp.is_finite() || amp > threshold || !dens.is_finite() || dens > threshold {
                    found = Some(tr.level_time(k));
                    break 'outer;
                }
            }
        }
    }
    let marker = v.blowup.or(w.blowup).map(|m| m.time);
    Ok(match (found, marker) {
        (Some(a), Some(b)) => BlowupVerdict::BlewUp(a.min(b)),
        (Some(a), None) => BlowupVerdict::BlewUp(a),
        (None, Some(b)) => BlowupVerdict::BlewUp(b),
        (None, None) => BlowupVerdict::Survived,
    })
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PicardOpts {
    pub j_max: usize,
    /// S order used in the norm reports.
    pub k_used: usize,
    pub compute_norms: bool,
    pub blowup_threshold: Option<f64>,
    /// Spill completed iterates to disk as trace files.
    pub spill_dir: Option<PathBuf>,
}

impl Default for PicardOpts {
    fn default() -> Self {
        PicardOpts { j_max: 8, k_used: 2, compute_norms: true, blowup_threshold: None, spill_dir: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateRow {
    pub j: usize,
    pub m_report: Option<NormReport>,
    pub a_value: Option<f64>,
    pub a_terms: Option<Vec<f64>>,
    pub contraction_ratio: Option<f64>,
    pub blowup: Option<f64>,
}

/// Rolling record of the iteration: per-iterate norms plus the last two
/// trace pairs (older iterates spill to disk when requested).
pub struct IterationLedger {
    pub rows: Vec<IterateRow>,
    pub k_used: usize,
    /// `(V_{j_max}, W_{j_max})`.
    pub last: Option<(SpaceTimeTrace, SpaceTimeTrace)>,
    /// `(V_{j_max - 1}, W_{j_max - 1})`.
    pub prev: Option<(SpaceTimeTrace, SpaceTimeTrace)>,
}

/// Runs the iteration: `V_0 = W_0 = 0`; iterate j solves the two linear
/// equations forced by iterate j - 1 with the shared data.
pub fn picard_iterate(data: &DataFamily, c: f64, grid: &Grid, opts: &PicardOpts) -> Result<IterationLedger> {
    if opts.j_max < 1 {
        return Err(Error::Parameter("j_max must be at least 1".into()));
    }
    if !(c > 1.0) {
        return Err(Error::Parameter(format!("the second speed must satisfy c > 1, got {c}")));
    }
    let sampled = data.sample(grid);
    let scale = data.initial_amplitude(grid);
    let threshold = opts
        .blowup_threshold
        .unwrap_or(if scale > 0.0 { BLOWUP_THRESHOLD_FACTOR * scale } else { f64::INFINITY });
    let solve_opts = SolveOpts { stride: 1, record_forcing: false, blowup_threshold: Some(threshold), full_window: false };

    let zero_v = SpaceTimeTrace::zeros(grid.clone(), Some(1.0), 1, Parity::Odd);
    let zero_w = SpaceTimeTrace::zeros(grid.clone(), Some(c), 1, Parity::Odd);
    let mut prev_pair: (SpaceTimeTrace, SpaceTimeTrace) = (zero_v, zero_w);
    let mut prev_prev: Option<(SpaceTimeTrace, SpaceTimeTrace)> = None;
    let mut rows: Vec<IterateRow> = Vec::new();

    for j in 1..=opts.j_max {
        let nx = grid.nx;
        let dt = grid.dt;
        let pair = {
            let (vp, wp) = (&prev_pair.0, &prev_pair.1);
            let vvel = &sampled.v.velocity;
            // lagged d_t of the previous iterate; level 0 uses the exact data
            let dtv_prev = move |n: usize, i: usize| -> f64 {
                if n == 0 {
                    vvel[i]
                } else {
                    (vp.value(n, i) - vp.value(n - 1, i)) / dt
                }
            };
            let fv = move |n: usize, buf: &mut [f64]| {
                for (i, b) in buf.iter_mut().enumerate().take(nx) {
                    *b = wp.value(n, i) * dtv_prev(n, i) / vp.grid.x(i);
                }
            };
            let fw = move |n: usize, buf: &mut [f64]| {
                for (i, b) in buf.iter_mut().enumerate().take(nx) {
                    let d = dtv_prev(n, i);
                    *b = d * d / vp.grid.x(i);
                }
            };
            // iterate 1 is homogeneous: the previous pair is identically zero
            if j == 1 {
                (
                    solve_linear(&sampled.v, Forcing::None, 1.0, grid, &solve_opts)?.trace,
                    solve_linear(&sampled.w, Forcing::None, c, grid, &solve_opts)?.trace,
                )
            } else {
                (
                    solve_linear(&sampled.v, Forcing::Levels(&fv), 1.0, grid, &solve_opts)?.trace,
                    solve_linear(&sampled.w, Forcing::Levels(&fw), c, grid, &solve_opts)?.trace,
                )
            }
        };
        let blowup_t = pair.0.blowup.or(pair.1.blowup).map(|m| m.time);

        let mut row = IterateRow {
            j,
            m_report: None,
            a_value: None,
            a_terms: None,
            contraction_ratio: None,
            blowup: blowup_t,
        };
        if blowup_t.is_none() && opts.compute_norms {
            let m = norms::assemble_m(&pair.0, &pair.1, c, opts.k_used)?;
            let a = norms::assemble_a(&pair.0, &pair.1, &prev_pair.0, &prev_pair.1, c, opts.k_used)?;
            row.a_value = Some(a.total);
            row.a_terms = Some(a.terms.to_vec());
            row.m_report = Some(m);
            if let Some(prev_a) = rows.last().and_then(|r| r.a_value) {
                if prev_a > 0.0 {
                    row.contraction_ratio = Some(row.a_value.unwrap() / prev_a);
                }
            }
        }
        rows.push(row);

        if let Some(dir) = &opts.spill_dir {
            if let Some((ov, ow)) = prev_prev.take() {
                let tag = j.saturating_sub(2);
                std::fs::create_dir_all(dir)?;
                crate::tracefile::write_trace(
                    &dir.join(format!("v_{tag}.trace")),
                    &ov,
                    &serde_json::json!({ "iterate": tag }),
                )?;
                crate::tracefile::write_trace(
                    &dir.join(format!("w_{tag}.trace")),
                    &ow,
                    &serde_json::json!({ "iterate": tag }),
                )?;
            }
        }
        prev_prev = Some(std::mem::replace(&mut prev_pair, pair));

        if blowup_t.is_some() {
            break;
        }
    }

    Ok(IterationLedger { rows, k_used: opts.k_used, last: Some(prev_pair), prev: prev_prev })
}

/// Bisects for the largest amplitude at which the iteration still contracts
/// with ratio <= `target` for every j >= 3.
pub fn find_contraction_epsilon(
    set: ProfileSet,
    c: f64,
    grid: &Grid,
    j_max: usize,
    target: f64,
    bisection_steps: usize,
) -> Result<f64> {
    let contracts = |eps: f64| -> Result<bool> {
        let fam = DataFamily::new(set, eps)?;
        let opts = PicardOpts { j_max, k_used: 1, compute_norms: true, ..Default::default() };
        let ledger = picard_iterate(&fam, c, grid, &opts)?;
        if ledger.rows.iter().any(|r| r.blowup.is_some()) {
            return Ok(false);
        }
        Ok(ledger
            .rows
            .iter()
            .filter(|r| r.j >= 3)
            .all(|r| r.contraction_ratio.map_or(false, |q| q <= target)))
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    // grow hi until contraction fails (or give up at a large amplitude)
    while contracts(hi)? && hi < 64.0 {
        lo = hi;
        hi *= 2.0;
    }
    if lo == 0.0 {
        // even the first probe failed; shrink until it contracts
        lo = hi / 2.0;
        while lo > 1e-6 && !contracts(lo)? {
            hi = lo;
            lo /= 2.0;
        }
        if lo <= 1e-6 {
            return Err(Error::Insufficient("no contracting amplitude found above 1e-6".into()));
        }
    }
    for _ in 0..bisection_steps {
        let mid = 0.5 * (lo + hi);
        if contracts(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

// ---------------------------------------------------------------------------
// Radial reconstruction
// ---------------------------------------------------------------------------

/// Reconstructs the 3-d radial fields `v = V/r`, `w = W/r`.  Odd V makes the
/// quotient finite at the origin (staggered nodes never sit at x = 0); the
/// result is even in x.
pub fn reconstruct_3d(v: &SpaceTimeTrace, w: &SpaceTimeTrace) -> Result<(SpaceTimeTrace, SpaceTimeTrace)> {
    let mut out = Vec::with_capacity(2);
    for tr in [v, w] {
        if tr.parity != Parity::Odd {
            return Err(Error::Validation("3-d reconstruction requires odd traces".into()));
        }
        let mut rec = tr.clone();
        rec.parity = Parity::Even;
        let nx = tr.grid.nx;
        for k in 0..tr.n_levels() {
            for i in 0..nx {
                rec.samples[k * nx + i] = tr.value(k, i) / tr.grid.x(i);
            }
        }
        out.push(rec);
    }
    let w3 = out.pop().unwrap();
    let v3 = out.pop().unwrap();
    Ok((v3, w3))
}
