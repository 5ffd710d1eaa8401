//! Linear constant-speed wave stepping on the full line.
//!
//! The scheme is the explicit 3-level leapfrog for `(d_t^2 - c^2 d_x^2) V = F`
//! on the staggered grid of [`Grid`], with odd reflection at the domain walls
//! (a Dirichlet wall halfway between the last node and its ghost).  The first
//! step is seeded by a second-order Taylor expansion so the whole solve is
//! second order in both steps.
//!
//! Compactly supported runs step only an active index window that grows one
//! cell per step, which is exact for this stencil.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid;

/// Spatial symmetry of a sampled field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Odd,
    Even,
    None,
}

/// Marks the first time level at which a solve left the finite regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupMarker {
    /// Time of the first bad level.
    pub time: f64,
    /// Step index of the first bad level.
    pub step: usize,
}

/// A sampled field on the space-time grid, t-major, every `stride`-th time
/// level retained.  A trace either spans the full grid or ends early with a
/// [`BlowupMarker`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeTrace {
    pub grid: Grid,
    /// Propagation speed of the equation the field solves; `None` for
    /// derived fields.
    pub speed: Option<f64>,
    pub stride: usize,
    pub parity: Parity,
    /// `n_levels * grid.nx` values, level-major.
    pub samples: Vec<f64>,
    pub blowup: Option<BlowupMarker>,
}

impl SpaceTimeTrace {
    pub fn with_capacity(grid: Grid, speed: Option<f64>, stride: usize, parity: Parity) -> SpaceTimeTrace {
        let levels = grid.n_steps / stride + 1;
        SpaceTimeTrace {
            samples: Vec::with_capacity(levels * grid.nx),
            grid,
            speed,
            stride,
            parity,
            blowup: None,
        }
    }

    /// All-zero trace covering the full time span.
    pub fn zeros(grid: Grid, speed: Option<f64>, stride: usize, parity: Parity) -> SpaceTimeTrace {
        let levels = grid.n_steps / stride + 1;
        let nx = grid.nx;
        SpaceTimeTrace { samples: vec![0.0; levels * nx], grid, speed, stride, parity, blowup: None }
    }

    /// Trace with the same shape and metadata, zero samples.
    pub fn zeros_like(&self) -> SpaceTimeTrace {
        SpaceTimeTrace {
            samples: vec![0.0; self.samples.len()],
            grid: self.grid.clone(),
            speed: None,
            stride: self.stride,
            parity: Parity::None,
            blowup: self.blowup,
        }
    }

    #[inline]
    pub fn n_levels(&self) -> usize {
        self.samples.len() / self.grid.nx
    }

    /// Time spacing between stored levels.
    #[inline]
    pub fn dt_store(&self) -> f64 {
        self.stride as f64 * self.grid.dt
    }

    #[inline]
    pub fn level_time(&self, k: usize) -> f64 {
        self.grid.t(k * self.stride)
    }

    #[inline]
    pub fn level(&self, k: usize) -> &[f64] {
        &self.samples[k * self.grid.nx..(k + 1) * self.grid.nx]
    }

    #[inline]
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.samples[k * self.grid.nx + i]
    }

    pub fn push_level(&mut self, slice: &[f64]) {
        debug_assert_eq!(slice.len(), self.grid.nx);
        self.samples.extend_from_slice(slice);
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest deviation from the declared parity across all levels.
    pub fn parity_violation(&self) -> f64 {
        let nx = self.grid.nx;
        let mut worst = 0.0f64;
        for k in 0..self.n_levels() {
            let row = self.level(k);
            for i in 0..nx / 2 {
                let j = nx - 1 - i;
                let d = match self.parity {
                    Parity::Odd => row[i] + row[j],
                    Parity::Even => row[i] - row[j],
                    Parity::None => 0.0,
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// Index range of nodes where level `k` is nonzero.
    pub fn support_range(&self, k: usize) -> Option<(usize, usize)> {
        let row = self.level(k);
        let lo = row.iter().position(|v| *v != 0.0)?;
        let hi = row.iter().rposition(|v| *v != 0.0)?;
        Some((lo, hi))
    }

    /// True when the trace vanishes identically within `margin` cells of the
    /// domain edges at every level.
    pub fn supported_away_from_edges(&self, margin: usize) -> bool {
        let nx = self.grid.nx;
        if 2 * margin >= nx {
            return false;
        }
        (0..self.n_levels()).all(|k| {
            let row = self.level(k);
            row[..margin].iter().all(|v| *v == 0.0) && row[nx - margin..].iter().all(|v| *v == 0.0)
        })
    }

    /// Plain L2 distance over all stored samples (cell measure dx * dt_store).
    pub fn l2_distance(&self, other: &SpaceTimeTrace) -> Result<f64> {
        if self.samples.len() != other.samples.len() || self.grid != other.grid {
            return Err(Error::Validation("trace shape mismatch".into()));
        }
        let cell = self.grid.dx * self.dt_store();
        let s: f64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((s * cell).sqrt())
    }
}

// ---------------------------------------------------------------------------
// Stepping kernel
// ---------------------------------------------------------------------------

/// Two-level state of the leapfrog recursion.
#[derive(Debug, Clone)]
pub struct StepperState {
    /// Slice at `t_{n-1}`.
    pub prev: Vec<f64>,
    /// Slice at `t_n`.
    pub curr: Vec<f64>,
    /// Index of the current level.
    pub n: usize,
    /// Courant number `c dt / dx`.
    pub courant: f64,
}

/// Courant bound enforced by the production solvers.
pub const MAX_COURANT: f64 = 0.9;

/// Store every level while the full trace stays below this many samples.
pub const FULL_STORAGE_SAMPLES: usize = 1_000_000;
/// Hard cap on stored samples; the stride grows to respect it.
pub const MAX_STORAGE_SAMPLES: usize = 100_000_000;

/// Storage stride policy: 1 while the full trace fits in
/// [`FULL_STORAGE_SAMPLES`], otherwise the smallest stride keeping the
/// stored trace within [`MAX_STORAGE_SAMPLES`].
pub fn auto_stride(grid: &Grid) -> usize {
    let full = (grid.n_steps + 1) * grid.nx;
    if full <= FULL_STORAGE_SAMPLES {
        return 1;
    }
    let level_cap = (MAX_STORAGE_SAMPLES / grid.nx).max(2);
    grid.n_steps / level_cap + 1
}

const PAR_THRESHOLD: usize = 65_536;

/// One leapfrog update over the index window `[lo, hi)`, odd reflection at
/// the domain walls.  Returns the max of |next| over the window, with
/// non-finite values mapped to +inf.
pub(crate) fn stencil_window(
    next: &mut [f64],
    prev: &[f64],
    curr: &[f64],
    forcing: Option<&[f64]>,
    lam2: f64,
    dt2: f64,
    lo: usize,
    hi: usize,
) -> f64 {
    let nx = curr.len();
    let mut worst = 0.0f64;
    #[inline]
    fn upd(
        next: &mut [f64],
        prev: &[f64],
        curr: &[f64],
        forcing: Option<&[f64]>,
        lam2: f64,
        dt2: f64,
        worst: &mut f64,
        i: usize,
        left: f64,
        right: f64,
    ) {
        let f = forcing.map_or(0.0, |f| f[i]);
        let v = 2.0 * curr[i] - prev[i] + lam2 * (left + right - 2.0 * curr[i]) + dt2 * f;
        next[i] = v;
        if v.is_finite() {
            if v.abs() > *worst {
                *worst = v.abs();
            }
        } else {
            *worst = f64::INFINITY;
        }
    }
    let a = lo.max(1);
    let b = hi.min(nx - 1);
    if lo == 0 {
        upd(next, prev, curr, forcing, lam2, dt2, &mut worst, 0, -curr[0], curr[1]);
    }
    if b > a && b - a > PAR_THRESHOLD {
        let base = a;
        let worst_par = next[a..b]
            .par_chunks_mut(16_384)
            .enumerate()
            .map(|(ci, chunk)| {
                let s = base + ci * 16_384;
                let mut m = 0.0f64;
                for (k, out) in chunk.iter_mut().enumerate() {
                    let i = s + k;
                    let f = forcing.map_or(0.0, |f| f[i]);
                    let v = 2.0 * curr[i] - prev[i] + lam2 * (curr[i - 1] + curr[i + 1] - 2.0 * curr[i]) + dt2 * f;
                    *out = v;
                    if v.is_finite() {
                        if v.abs() > m {
                            m = v.abs();
                        }
                    } else {
                        m = f64::INFINITY;
                    }
                }
                m
            })
            .reduce(|| 0.0f64, f64::max);
        worst = worst.max(worst_par);
    } else {
        for i in a..b {
            upd(next, prev, curr, forcing, lam2, dt2, &mut worst, i, curr[i - 1], curr[i + 1]);
        }
    }
    if hi == nx && nx >= 2 {
        upd(next, prev, curr, forcing, lam2, dt2, &mut worst, nx - 1, curr[nx - 2], -curr[nx - 1]);
    }
    worst
}

/// Advances a [`StepperState`] one level.
///
/// Refuses Courant numbers above 1 (the stencil's hard stability edge; the
/// production solvers stay at or below [`MAX_COURANT`], while unit Courant is
/// admitted for the exact-transport regime) and non-finite forcing.
pub fn leapfrog_step(state: &mut StepperState, forcing: Option<&[f64]>, c: f64, grid: &Grid) -> Result<()> {
    let lam = grid.courant(c);
    if lam > 1.0 + 1e-12 {
        return Err(Error::Config(format!("courant number {lam} exceeds 1; refusing to step")));
    }
    if (lam - state.courant).abs() > 1e-12 {
        return Err(Error::Config("stepper state was built for a different courant number".into()));
    }
    if let Some(f) = forcing {
        if f.len() != grid.nx {
            return Err(Error::Validation("forcing slice length mismatch".into()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite forcing".into()));
        }
    }
    let mut next = vec![0.0; grid.nx];
    stencil_window(&mut next, &state.prev, &state.curr, forcing, lam * lam, grid.dt * grid.dt, 0, grid.nx);
    state.prev = std::mem::replace(&mut state.curr, next);
    state.n += 1;
    Ok(())
}

impl StepperState {
    /// Seeds the recursion from two consecutive slices.
    pub fn from_slices(prev: Vec<f64>, curr: Vec<f64>, n: usize, c: f64, grid: &Grid) -> StepperState {
        StepperState { prev, curr, n, courant: grid.courant(c) }
    }
}

// ---------------------------------------------------------------------------
// Linear solves
// ---------------------------------------------------------------------------

/// Position/velocity data on the initial slice t = 4.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl InitialData {
    pub fn from_fns(grid: &Grid, f0: impl Fn(f64) -> f64, f1: impl Fn(f64) -> f64) -> InitialData {
        let position = (0..grid.nx).map(|i| f0(grid.x(i))).collect();
        let velocity = (0..grid.nx).map(|i| f1(grid.x(i))).collect();
        InitialData { position, velocity }
    }

    pub fn zero(grid: &Grid) -> InitialData {
        InitialData { position: vec![0.0; grid.nx], velocity: vec![0.0; grid.nx] }
    }

    /// Largest odd-parity violation across both slices.
    pub fn odd_violation(&self, grid: &Grid) -> f64 {
        let mut worst = 0.0f64;
        for slice in [&self.position, &self.velocity] {
            for i in 0..grid.nx / 2 {
                worst = worst.max((slice[i] + slice[grid.mirror(i)]).abs());
            }
        }
        worst
    }

    fn support_window(&self, grid: &Grid) -> (usize, usize) {
        let mut lo = grid.nx;
        let mut hi = 0usize;
        for slice in [&self.position, &self.velocity] {
            if let Some(p) = slice.iter().position(|v| *v != 0.0) {
                lo = lo.min(p);
            }
            if let Some(p) = slice.iter().rposition(|v| *v != 0.0) {
                hi = hi.max(p + 1);
            }
        }
        if lo >= hi {
            // zero data: empty window until forcing says otherwise
            (grid.nx / 2, grid.nx / 2)
        } else {
            (lo, hi)
        }
    }
}

/// Forcing supplied to a linear solve.
pub enum Forcing<'a> {
    None,
    /// Analytic forcing `(t, x) -> F`; disables the support window.
    Fn(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
    /// Fills the forcing slice for step `n`.  The caller guarantees the
    /// forcing is supported inside the expanding data window (true for the
    /// couplings of the reduced system).
    Levels(&'a (dyn Fn(usize, &mut [f64]) + Sync)),
}

/// Options for [`solve_linear`] and the coupled solver.
#[derive(Debug, Clone)]
pub struct SolveOpts {
    pub stride: usize,
    /// Also record the forcing at stored levels.
    pub record_forcing: bool,
    /// Amplitude bound; exceeding it (or any non-finite value) truncates the
    /// trace with a blowup marker.  Non-finite values always truncate.
    pub blowup_threshold: Option<f64>,
    /// Step the full domain even for compact data.
    pub full_window: bool,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts { stride: 1, record_forcing: false, blowup_threshold: None, full_window: false }
    }
}

/// Result of a linear solve.
pub struct LinearSolution {
    pub trace: SpaceTimeTrace,
    /// Recorded forcing at the stored levels, when requested.
    pub forcing: Option<SpaceTimeTrace>,
}

/// Solves `(d_t^2 - c^2 d_x^2) V = F` on `[4, t_end]` from odd data.
///
/// The first step is the Taylor start
/// `V(4 + dt) = V0 + dt V1 + dt^2/2 (c^2 V0'' + F(4))` with the second
/// x-derivative taken discretely.  Odd parity of data and forcing is
/// preserved by the stencil.
pub fn solve_linear(ic: &InitialData, forcing: Forcing<'_>, c: f64, grid: &Grid, opts: &SolveOpts) -> Result<LinearSolution> {
    if ic.position.len() != grid.nx || ic.velocity.len() != grid.nx {
        return Err(Error::Validation("initial data length does not match the grid".into()));
    }
    let scale = ic
        .position
        .iter()
        .chain(&ic.velocity)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if ic.odd_violation(grid) > 1e-12 * scale.max(1.0) {
        return Err(Error::Validation("initial data is not odd".into()));
    }
    let lam = grid.courant(c);
    if lam > MAX_COURANT + 1e-12 {
        return Err(Error::Config(format!(
            "courant number {lam:.4} exceeds {MAX_COURANT}; refine dt or coarsen dx"
        )));
    }
    if grid.n_steps % opts.stride != 0 {
        return Err(Error::Config("n_steps must be a multiple of the store stride".into()));
    }

    let nx = grid.nx;
    let lam2 = lam * lam;
    let dt = grid.dt;
    let dt2 = dt * dt;

    let full_window = opts.full_window || matches!(forcing, Forcing::Fn(_));
    let (mut wlo, mut whi) = if full_window { (0, nx) } else { ic.support_window(grid) };

    let mut fslice = vec![0.0; nx];
    let fill_forcing = |n: usize, buf: &mut [f64]| match &forcing {
        Forcing::None => false,
        Forcing::Fn(f) => {
            let t = grid.t(n);
            for (i, v) in buf.iter_mut().enumerate() {
                *v = f(t, grid.x(i));
            }
            true
        }
        Forcing::Levels(f) => {
            f(n, buf);
            true
        }
    };

    let mut trace = SpaceTimeTrace::with_capacity(grid.clone(), Some(c), opts.stride, Parity::Odd);
    let mut forcing_trace = if opts.record_forcing {
        Some(SpaceTimeTrace::with_capacity(grid.clone(), None, opts.stride, Parity::Odd))
    } else {
        None
    };

    // Level 0.
    let have_f0 = fill_forcing(0, &mut fslice);
    if have_f0 && fslice.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite forcing at the initial level".into()));
    }
    trace.push_level(&ic.position);
    if let Some(ft) = &mut forcing_trace {
        ft.push_level(&fslice);
    }

    // Taylor start: level 1.
    let c2 = c * c;
    let mut curr = vec![0.0; nx];
    {
        let p = &ic.position;
        wlo = wlo.saturating_sub(1);
        whi = (whi + 1).min(nx);
        for i in wlo..whi {
            let left = if i == 0 { -p[0] } else { p[i - 1] };
            let right = if i == nx - 1 { -p[nx - 1] } else { p[i + 1] };
            let lap = (left - 2.0 * p[i] + right) / (grid.dx * grid.dx);
            let f = if have_f0 { fslice[i] } else { 0.0 };
            curr[i] = p[i] + dt * ic.velocity[i] + 0.5 * dt2 * (c2 * lap + f);
        }
    }
    let zeros = vec![0.0; nx];
    let mut prev = ic.position.clone();
    if opts.stride == 1 {
        let have = fill_forcing(1, &mut fslice);
        trace.push_level(&curr);
        if let Some(ft) = &mut forcing_trace {
            ft.push_level(if have { &fslice } else { &zeros });
        }
    }

    let mut scratch = vec![0.0; nx];
    let mut blowup: Option<BlowupMarker> = None;

    for n in 1..grid.n_steps {
        let have_f = fill_forcing(n, &mut fslice);
        wlo = wlo.saturating_sub(1);
        whi = (whi + 1).min(nx);
        let worst = stencil_window(
            &mut scratch,
            &prev,
            &curr,
            if have_f { Some(&fslice) } else { None },
            lam2,
            dt2,
            wlo,
            whi,
        );
        // rotate: prev <- curr <- scratch <- old prev
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut scratch);

        let bad = !worst.is_finite() || opts.blowup_threshold.map_or(false, |thr| worst > thr);
        if bad {
            blowup = Some(BlowupMarker { time: grid.t(n + 1), step: n + 1 });
            break;
        }
        if (n + 1) % opts.stride == 0 {
            trace.push_level(&curr);
            if let Some(ft) = &mut forcing_trace {
                let have = fill_forcing(n + 1, &mut fslice);
                ft.push_level(if have { &fslice } else { &zeros });
            }
        }
    }

    trace.blowup = blowup;
    if let Some(ft) = &mut forcing_trace {
        ft.blowup = blowup;
    }
    Ok(LinearSolution { trace, forcing: forcing_trace })
}

// ---------------------------------------------------------------------------
// Discrete energy
// ---------------------------------------------------------------------------

/// Energy `int (d_t V)^2 + c^2 (d_x V)^2 dx` at a stored level, centered
/// differences inside, one-sided second-order at the first and last level.
pub fn discrete_energy(trace: &SpaceTimeTrace, t: f64) -> Result<f64> {
    let c = trace.speed.ok_or_else(|| Error::Validation("energy needs an equation speed".into()))?;
    let dts = trace.dt_store();
    let k_f = (t - trace.grid.t_start) / dts;
    let k = k_f.round() as usize;
    if (k_f - k as f64).abs() > 1e-6 || k >= trace.n_levels() {
        return Err(Error::Domain(format!("t = {t} is not a stored time level; interpolation refused")));
    }
    let n = trace.n_levels();
    if n < 3 {
        return Err(Error::Validation("need at least 3 stored levels".into()));
    }
    let nx = trace.grid.nx;
    let dx = trace.grid.dx;
    let row = trace.level(k);
    let mut e = 0.0;
    for i in 0..nx {
        let vt = if k == 0 {
            (-3.0 * trace.value(0, i) + 4.0 * trace.value(1, i) - trace.value(2, i)) / (2.0 * dts)
        } else if k == n - 1 {
            (3.0 * trace.value(n - 1, i) - 4.0 * trace.value(n - 2, i) + trace.value(n - 3, i)) / (2.0 * dts)
        } else {
            (trace.value(k + 1, i) - trace.value(k - 1, i)) / (2.0 * dts)
        };
        let left = if i == 0 { -row[0] } else { row[i - 1] };
        let right = if i == nx - 1 { -row[nx - 1] } else { row[i + 1] };
        let vx = (right - left) / (2.0 * dx);
        e += vt * vt + c * c * vx * vx;
    }
    Ok(e * dx)
}

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

/// Exact solutions used as oracles for convergence and estimate audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Manufactured {
    /// Odd pair of counter-propagating bumps
    /// `A (g(x - c s) - g(-x - c s))`, `s = t - 4`, `g` a smooth bump.
    DalembertBump { center: f64, width: f64, speed: f64, amplitude: f64 },
    /// Zero-velocity start `A (G(x - c s) + G(x + c s))/2` with the odd
    /// profile `G(y) = y exp(-1/(1-y^2))`: carries both characteristic
    /// families, so good-derivative content is present early on.
    SplitBump { speed: f64, amplitude: f64 },
    /// `A sin(kx) cos(c k s)`; pick `k = m pi / x_max` so the Dirichlet
    /// walls are exact.
    StandingWave { k: f64, speed: f64, amplitude: f64 },
}

/// Smooth compactly supported bump `exp(-1/(1 - z^2))` on |z| < 1.
#[inline]
pub fn smooth_bump(z: f64) -> f64 {
    if z.abs() < 1.0 {
        (-1.0 / (1.0 - z * z)).exp()
    } else {
        0.0
    }
}

/// d/dz of [`smooth_bump`].
#[inline]
pub fn smooth_bump_prime(z: f64) -> f64 {
    if z.abs() < 1.0 {
        let d = 1.0 - z * z;
        smooth_bump(z) * (-2.0 * z / (d * d))
    } else {
        0.0
    }
}

impl Manufactured {
    pub fn validate(&self) -> Result<()> {
        match self {
            Manufactured::DalembertBump { width, speed, .. } => {
                if !(*width > 0.0) {
                    return Err(Error::Parameter(format!("bump width must be positive, got {width}")));
                }
                if !(*speed > 0.0) {
                    return Err(Error::Parameter("speed must be positive".into()));
                }
            }
            Manufactured::SplitBump { speed, .. } => {
                if !(*speed > 0.0) {
                    return Err(Error::Parameter("speed must be positive".into()));
                }
            }
            Manufactured::StandingWave { k, speed, .. } => {
                if !(*k > 0.0) {
                    return Err(Error::Parameter(format!("wavenumber must be positive, got {k}")));
                }
                if !(*speed > 0.0) {
                    return Err(Error::Parameter("speed must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        match self {
            Manufactured::DalembertBump { speed, .. } => *speed,
            Manufactured::SplitBump { speed, .. } => *speed,
            Manufactured::StandingWave { speed, .. } => *speed,
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let s = t - crate::geometry::T_START;
        match self {
            Manufactured::DalembertBump { center, width, speed, amplitude } => {
                let g = |y: f64| smooth_bump((y - center) / width);
                amplitude * (g(x - speed * s) - g(-x - speed * s))
            }
            Manufactured::SplitBump { speed, amplitude } => {
                let g = |y: f64| y * smooth_bump(y);
                0.5 * amplitude * (g(x - speed * s) + g(x + speed * s))
            }
            Manufactured::StandingWave { k, speed, amplitude } => amplitude * (k * x).sin() * (speed * k * s).cos(),
        }
    }

    pub fn eval_dt(&self, t: f64, x: f64) -> f64 {
        let s = t - crate::geometry::T_START;
        match self {
            Manufactured::DalembertBump { center, width, speed, amplitude } => {
                let gp = |y: f64| smooth_bump_prime((y - center) / width) / width;
                amplitude * (-speed) * (gp(x - speed * s) - gp(-x - speed * s))
            }
            Manufactured::SplitBump { speed, amplitude } => {
                let gp = |y: f64| smooth_bump(y) + y * smooth_bump_prime(y);
                0.5 * amplitude * speed * (-gp(x - speed * s) + gp(x + speed * s))
            }
            Manufactured::StandingWave { k, speed, amplitude } => {
                -amplitude * speed * k * (k * x).sin() * (speed * k * s).sin()
            }
        }
    }

    pub fn eval_dx(&self, t: f64, x: f64) -> f64 {
        let s = t - crate::geometry::T_START;
        match self {
            Manufactured::DalembertBump { center, width, speed, amplitude } => {
                let gp = |y: f64| smooth_bump_prime((y - center) / width) / width;
                amplitude * (gp(x - speed * s) + gp(-x - speed * s))
            }
            Manufactured::SplitBump { speed, amplitude } => {
                let gp = |y: f64| smooth_bump(y) + y * smooth_bump_prime(y);
                0.5 * amplitude * (gp(x - speed * s) + gp(x + speed * s))
            }
            Manufactured::StandingWave { k, speed, amplitude } => amplitude * *k * (k * x).cos() * (speed * k * s).cos(),
        }
    }

    pub fn initial_data(&self, grid: &Grid) -> InitialData {
        InitialData::from_fns(grid, |x| self.eval(grid.t_start, x), |x| self.eval_dt(grid.t_start, x))
    }
}

/// Samples an exact solution onto a trace.
pub fn manufactured_solution(kind: &Manufactured, grid: &Grid, stride: usize) -> Result<SpaceTimeTrace> {
    kind.validate()?;
    if grid.n_steps % stride != 0 {
        return Err(Error::Config("n_steps must be a multiple of the store stride".into()));
    }
    let mut trace = SpaceTimeTrace::with_capacity(grid.clone(), Some(kind.speed()), stride, Parity::Odd);
    let mut row = vec![0.0; grid.nx];
    for k in 0..=grid.n_steps / stride {
        let t = grid.t(k * stride);
        for (i, v) in row.iter_mut().enumerate() {
            *v = kind.eval(t, grid.x(i));
        }
        trace.push_level(&row);
    }
    Ok(trace)
}
