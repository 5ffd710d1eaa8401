//! Scaling-vector-field calculus on traces.
//!
//! The scaling field is `S = t d_t + x d_x` (equal to `t d_t + r d_r` on
//! odd/even fields).  Powers of S applied to a trace are computed two ways:
//!
//! * `finite_difference`: centered differences on the stored samples, with
//!   second-order one-sided stencils at the first/last level and at the
//!   domain edges.  Noise compounds with each application, so the order is
//!   capped at [`K_MAX_FD`].
//! * `commuted_pde`: solve the commuted equations.  Since `[box, S] = 2 box`,
//!   `box(S^m V) = (S + 2)^m box V`, and the data of `S^m V` at t = 4 follow
//!   recursively from the data one level down.  Capped at [`K_MAX_COMMUTED`].
//!
//! Null derivatives use `d_r = sign(x) d_x` so one stored trace on the whole
//! line serves both half-lines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveop::{solve_linear, Forcing, InitialData, LinearSolution, Parity, SolveOpts, SpaceTimeTrace};

/// Below this many samples the level loops stay sequential.
const PAR_SAMPLES: usize = 1 << 18;

/// Largest sensible iterated-S order per method.
pub const K_MAX_FD: usize = 3;
pub const K_MAX_COMMUTED: usize = 7;

/// Operators recorded in a derived trace's word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpSym {
    S,
    Dt,
    Dx,
    Dr,
    Du,
    Dubar,
    Duc,
    DubarC,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeriveMethod {
    FiniteDifference,
    CommutedPde,
}

/// A trace together with the operator word that produced it.
#[derive(Debug, Clone)]
pub struct DerivedTrace {
    pub trace: SpaceTimeTrace,
    pub word: Vec<OpSym>,
    pub method: DeriveMethod,
}

impl DerivedTrace {
    pub fn base(trace: SpaceTimeTrace) -> DerivedTrace {
        DerivedTrace { trace, word: Vec::new(), method: DeriveMethod::FiniteDifference }
    }

    fn derived(trace: SpaceTimeTrace, mut word: Vec<OpSym>, op: OpSym, method: DeriveMethod) -> DerivedTrace {
        word.push(op);
        DerivedTrace { trace, word, method }
    }
}

/// Null direction selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullDir {
    /// `d_u = (d_t - d_r)/2`
    U,
    /// `d_ubar = (d_t + d_r)/2`
    Ubar,
    /// `d_{u_c} = (d_t - c d_r)/(2c)`
    Uc,
    /// `d_{ubar_c} = (d_t + c d_r)/(2c)`
    UbarC,
}

fn check_shape(trace: &SpaceTimeTrace) -> Result<()> {
    if trace.n_levels() < 3 {
        return Err(Error::Validation("need at least 3 stored time levels".into()));
    }
    if trace.grid.nx < 4 {
        return Err(Error::Validation("need at least 4 spatial nodes".into()));
    }
    Ok(())
}

fn flip(p: Parity) -> Parity {
    match p {
        Parity::Odd => Parity::Even,
        Parity::Even => Parity::Odd,
        Parity::None => Parity::None,
    }
}

/// Centered time derivative, one-sided second order at the end levels.
/// Level rows are independent and computed in parallel on large traces.
pub fn dt_field(trace: &SpaceTimeTrace) -> Result<SpaceTimeTrace> {
    check_shape(trace)?;
    let n = trace.n_levels();
    let nx = trace.grid.nx;
    let h = trace.dt_store();
    let mut out = trace.zeros_like();
    out.parity = trace.parity;
    let fill = |k: usize, orow: &mut [f64]| {
        for (i, o) in orow.iter_mut().enumerate() {
            *o = if k == 0 {
                (-3.0 * trace.value(0, i) + 4.0 * trace.value(1, i) - trace.value(2, i)) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * trace.value(n - 1, i) - 4.0 * trace.value(n - 2, i) + trace.value(n - 3, i)) / (2.0 * h)
            } else {
                (trace.value(k + 1, i) - trace.value(k - 1, i)) / (2.0 * h)
            };
        }
    };
    if trace.samples.len() > PAR_SAMPLES {
        out.samples.par_chunks_mut(nx).enumerate().for_each(|(k, orow)| fill(k, orow));
    } else {
        out.samples.chunks_mut(nx).enumerate().for_each(|(k, orow)| fill(k, orow));
    }
    Ok(out)
}

/// Centered space derivative, one-sided second order at the domain edges.
pub fn dx_field(trace: &SpaceTimeTrace) -> Result<SpaceTimeTrace> {
    check_shape(trace)?;
    let nx = trace.grid.nx;
    let h = trace.grid.dx;
    let mut out = trace.zeros_like();
    out.parity = flip(trace.parity);
    let fill = |k: usize, orow: &mut [f64]| {
        let row = trace.level(k);
        orow[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * h);
        for i in 1..nx - 1 {
            orow[i] = (row[i + 1] - row[i - 1]) / (2.0 * h);
        }
        orow[nx - 1] = (3.0 * row[nx - 1] - 4.0 * row[nx - 2] + row[nx - 3]) / (2.0 * h);
    };
    if trace.samples.len() > PAR_SAMPLES {
        out.samples.par_chunks_mut(nx).enumerate().for_each(|(k, orow)| fill(k, orow));
    } else {
        out.samples.chunks_mut(nx).enumerate().for_each(|(k, orow)| fill(k, orow));
    }
    Ok(out)
}

/// Radial derivative `sign(x) d_x`.
pub fn dr_field(trace: &SpaceTimeTrace) -> Result<SpaceTimeTrace> {
    let mut out = dx_field(trace)?;
    let nx = trace.grid.nx;
    for k in 0..out.n_levels() {
        for i in 0..nx {
            if trace.grid.x(i) < 0.0 {
                out.samples[k * nx + i] = -out.samples[k * nx + i];
            }
        }
    }
    out.parity = trace.parity;
    Ok(out)
}

/// One null derivative of a trace.
pub fn null_derivative(input: &DerivedTrace, which: NullDir, c: f64) -> Result<DerivedTrace> {
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("speed must be positive, got {c}")));
    }
    let dt = dt_field(&input.trace)?;
    let dr = dr_field(&input.trace)?;
    let (a, b, op) = match which {
        NullDir::U => (0.5, -0.5, OpSym::Du),
        NullDir::Ubar => (0.5, 0.5, OpSym::Dubar),
        NullDir::Uc => (0.5 / c, -0.5, OpSym::Duc),
        NullDir::UbarC => (0.5 / c, 0.5, OpSym::DubarC),
    };
    let mut out = dt;
    for (o, r) in out.samples.iter_mut().zip(&dr.samples) {
        *o = a * *o + b * *r;
    }
    out.parity = input.trace.parity;
    Ok(DerivedTrace::derived(out, input.word.clone(), op, input.method))
}

/// One application of `S = t d_t + x d_x` by finite differencing.
pub fn apply_s(input: &DerivedTrace) -> Result<DerivedTrace> {
    let s_count = input.word.iter().filter(|o| **o == OpSym::S).count();
    if s_count >= K_MAX_FD {
        return Err(Error::Parameter(format!(
            "finite-difference S order {} exceeds the cap {K_MAX_FD}",
            s_count + 1
        )));
    }
    let trace = apply_s_raw(&input.trace)?;
    Ok(DerivedTrace::derived(trace, input.word.clone(), OpSym::S, input.method))
}

pub(crate) fn apply_s_raw(trace: &SpaceTimeTrace) -> Result<SpaceTimeTrace> {
    check_shape(trace)?;
    let dt = dt_field(trace)?;
    let dx = dx_field(trace)?;
    let nx = trace.grid.nx;
    let mut out = trace.zeros_like();
    out.parity = trace.parity;
    for k in 0..trace.n_levels() {
        let t = trace.level_time(k);
        for i in 0..nx {
            let x = trace.grid.x(i);
            out.samples[k * nx + i] = t * dt.value(k, i) + x * dx.value(k, i);
        }
    }
    Ok(out)
}

/// `S^0 .. S^k` of a trace by iterated finite differencing.
pub fn apply_s_power(trace: &SpaceTimeTrace, k: usize) -> Result<Vec<DerivedTrace>> {
    if k > K_MAX_FD {
        return Err(Error::Parameter(format!(
            "finite-difference S order {k} exceeds the cap {K_MAX_FD}; use the commuted route"
        )));
    }
    let mut out = vec![DerivedTrace::base(trace.clone())];
    for _ in 0..k {
        out.push(apply_s(out.last().unwrap())?);
    }
    Ok(out)
}

/// Discrete d'Alembertian `(d_t^2 - c^2 d_x^2)` of a trace; centered second
/// differences inside, one-sided 4-point at end levels and domain edges.
pub fn box_residual(input: &DerivedTrace, c: f64) -> Result<DerivedTrace> {
    let trace = &input.trace;
    check_shape(trace)?;
    if trace.n_levels() < 4 {
        return Err(Error::Validation("box residual needs at least 4 stored levels".into()));
    }
    let n = trace.n_levels();
    let nx = trace.grid.nx;
    let ht = trace.dt_store();
    let hx = trace.grid.dx;
    let mut out = trace.zeros_like();
    out.parity = trace.parity;
    let d2t = |k: usize, i: usize| -> f64 {
        if k == 0 {
            (2.0 * trace.value(0, i) - 5.0 * trace.value(1, i) + 4.0 * trace.value(2, i) - trace.value(3, i)) / (ht * ht)
        } else if k == n - 1 {
            (2.0 * trace.value(n - 1, i) - 5.0 * trace.value(n - 2, i) + 4.0 * trace.value(n - 3, i)
                - trace.value(n - 4, i))
                / (ht * ht)
        } else {
            (trace.value(k + 1, i) - 2.0 * trace.value(k, i) + trace.value(k - 1, i)) / (ht * ht)
        }
    };
    let d2x = |k: usize, i: usize| -> f64 {
        let row = trace.level(k);
        if i == 0 {
            (2.0 * row[0] - 5.0 * row[1] + 4.0 * row[2] - row[3]) / (hx * hx)
        } else if i == nx - 1 {
            (2.0 * row[nx - 1] - 5.0 * row[nx - 2] + 4.0 * row[nx - 3] - row[nx - 4]) / (hx * hx)
        } else {
            (row[i + 1] - 2.0 * row[i] + row[i - 1]) / (hx * hx)
        }
    };
    for k in 0..n {
        for i in 0..nx {
            out.samples[k * nx + i] = d2t(k, i) - c * c * d2x(k, i);
        }
    }
    Ok(DerivedTrace::derived(out, input.word.clone(), OpSym::Box, input.method))
}

// ---------------------------------------------------------------------------
// Commuted-PDE route
// ---------------------------------------------------------------------------

/// Inputs of the commuted cascade: the original data and, if the base
/// equation was forced, its stride-1 recorded forcing.
pub struct SCascadeInput<'a> {
    pub ic: &'a InitialData,
    pub forcing: Option<&'a SpaceTimeTrace>,
    pub c: f64,
    pub grid: &'a crate::geometry::Grid,
}

fn slice_dx(slice: &[f64], dx: f64, odd_walls: bool) -> Vec<f64> {
    let nx = slice.len();
    let mut out = vec![0.0; nx];
    let gl = if odd_walls { -slice[0] } else { slice[0] };
    let gr = if odd_walls { -slice[nx - 1] } else { slice[nx - 1] };
    out[0] = (slice[1] - gl) / (2.0 * dx);
    for i in 1..nx - 1 {
        out[i] = (slice[i + 1] - slice[i - 1]) / (2.0 * dx);
    }
    out[nx - 1] = (gr - slice[nx - 2]) / (2.0 * dx);
    out
}

fn slice_d2x(slice: &[f64], dx: f64, odd_walls: bool) -> Vec<f64> {
    let nx = slice.len();
    let mut out = vec![0.0; nx];
    let gl = if odd_walls { -slice[0] } else { slice[0] };
    let gr = if odd_walls { -slice[nx - 1] } else { slice[nx - 1] };
    out[0] = (gl - 2.0 * slice[0] + slice[1]) / (dx * dx);
    for i in 1..nx - 1 {
        out[i] = (slice[i + 1] - 2.0 * slice[i] + slice[i - 1]) / (dx * dx);
    }
    out[nx - 1] = (slice[nx - 2] - 2.0 * slice[nx - 1] + gr) / (dx * dx);
    out
}

/// Solves the cascade `box(S^m V) = (S+2)^m box V` for m = 0..k and returns
/// the commuted-method traces.  The data of `S^m V` at t = 4 are
/// `pos_m = 4 vel_{m-1} + x pos_{m-1}'` and
/// `vel_m = vel_{m-1} + 4 (c^2 pos_{m-1}'' + G_{m-1}(4)) + x vel_{m-1}'`,
/// with `G_m = (S + 2) G_{m-1}` applied to the recorded forcing by finite
/// differencing.
pub fn solve_s_cascade(input: &SCascadeInput<'_>, k: usize, stride: usize) -> Result<Vec<DerivedTrace>> {
    if k > K_MAX_COMMUTED {
        return Err(Error::Parameter(format!("commuted S order {k} exceeds the cap {K_MAX_COMMUTED}")));
    }
    if let Some(f) = input.forcing {
        if f.stride != 1 || f.n_levels() != input.grid.n_steps + 1 {
            return Err(Error::Validation("cascade forcing must be stored at stride 1 over the full span".into()));
        }
    }
    let grid = input.grid;
    let opts = SolveOpts { stride, ..Default::default() };
    let mut out = Vec::with_capacity(k + 1);
    let mut pos = input.ic.position.clone();
    let mut vel = input.ic.velocity.clone();
    let mut g: Option<SpaceTimeTrace> = input.forcing.cloned();

    for m in 0..=k {
        let ic = InitialData { position: pos.clone(), velocity: vel.clone() };
        let sol: LinearSolution = match &g {
            None => solve_linear(&ic, Forcing::None, input.c, grid, &opts)?,
            Some(gt) => {
                let nx = grid.nx;
                let filler = move |n: usize, buf: &mut [f64]| {
                    buf.copy_from_slice(&gt.samples[n * nx..(n + 1) * nx]);
                };
                solve_linear(&ic, Forcing::Levels(&filler), input.c, grid, &opts)?
            }
        };
        out.push(DerivedTrace {
            trace: sol.trace,
            word: vec![OpSym::S; m],
            method: DeriveMethod::CommutedPde,
        });
        if m == k {
            break;
        }

        // data one level up
        let g4: Vec<f64> = match &g {
            Some(gt) => gt.level(0).to_vec(),
            None => vec![0.0; grid.nx],
        };
        let posp = slice_dx(&pos, grid.dx, true);
        let velp = slice_dx(&vel, grid.dx, true);
        let pospp = slice_d2x(&pos, grid.dx, true);
        let c2 = input.c * input.c;
        let mut npos = vec![0.0; grid.nx];
        let mut nvel = vec![0.0; grid.nx];
        for i in 0..grid.nx {
            let x = grid.x(i);
            npos[i] = 4.0 * vel[i] + x * posp[i];
            nvel[i] = vel[i] + 4.0 * (c2 * pospp[i] + g4[i]) + x * velp[i];
        }
        pos = npos;
        vel = nvel;

        // forcing one level up: G <- (S + 2) G
        if let Some(gt) = g.take() {
            let mut sg = apply_s_raw(&gt)?;
            for (o, v) in sg.samples.iter_mut().zip(&gt.samples) {
                *o += 2.0 * v;
            }
            sg.stride = 1;
            g = Some(sg);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Abs-sum fields for norms and estimate audits
// ---------------------------------------------------------------------------

/// Derivative applied *inside* the S power: the summand is `|S^j (D f)|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerDeriv {
    Id,
    Du,
    Dubar,
    DubarC,
    /// Pair `(d_t, d_r)`; the summand is the Euclidean magnitude
    /// `sqrt((S^j d_t f)^2 + (S^j d_r f)^2)`.
    Grad,
}

/// Derivative applied *outside* the S power: the summand is `|D (S^j f)|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OuterDeriv {
    Id,
    Dr,
    Dubar,
    DubarC,
    Grad,
    /// Discrete d'Alembertian at the given speed.
    Box,
}

/// `sum_{j<=k} |S^j (D f)|` with the derivative inside.
pub fn s_abs_sum_inner(trace: &SpaceTimeTrace, k: usize, deriv: InnerDeriv, c: f64) -> Result<SpaceTimeTrace> {
    let bases: Vec<SpaceTimeTrace> = match deriv {
        InnerDeriv::Id => vec![trace.clone()],
        InnerDeriv::Du => vec![null_derivative(&DerivedTrace::base(trace.clone()), NullDir::U, 1.0)?.trace],
        InnerDeriv::Dubar => vec![null_derivative(&DerivedTrace::base(trace.clone()), NullDir::Ubar, 1.0)?.trace],
        InnerDeriv::DubarC => vec![null_derivative(&DerivedTrace::base(trace.clone()), NullDir::UbarC, c)?.trace],
        InnerDeriv::Grad => vec![dt_field(trace)?, dr_field(trace)?],
    };
    accumulate_s_chain(bases, k)
}

/// `sum_{j<=k} |D (S^j f)|` with the derivative outside.
pub fn s_abs_sum_outer(trace: &SpaceTimeTrace, k: usize, deriv: OuterDeriv, c: f64) -> Result<SpaceTimeTrace> {
    if k > K_MAX_FD {
        return Err(Error::Parameter(format!("finite-difference S order {k} exceeds the cap {K_MAX_FD}")));
    }
    let mut acc = trace.zeros_like();
    acc.parity = Parity::None;
    let mut cur = trace.clone();
    for j in 0..=k {
        if j > 0 {
            cur = apply_s_raw(&cur)?;
        }
        let dcur = DerivedTrace::base(cur.clone());
        match deriv {
            OuterDeriv::Id => add_abs(&mut acc, &cur),
            OuterDeriv::Dr => add_abs(&mut acc, &dr_field(&cur)?),
            OuterDeriv::Dubar => add_abs(&mut acc, &null_derivative(&dcur, NullDir::Ubar, 1.0)?.trace),
            OuterDeriv::DubarC => add_abs(&mut acc, &null_derivative(&dcur, NullDir::UbarC, c)?.trace),
            OuterDeriv::Box => add_abs(&mut acc, &box_residual(&dcur, c)?.trace),
            OuterDeriv::Grad => {
                let dt = dt_field(&cur)?;
                let dr = dr_field(&cur)?;
                for ((a, p), q) in acc.samples.iter_mut().zip(&dt.samples).zip(&dr.samples) {
                    *a += (p * p + q * q).sqrt();
                }
            }
        }
    }
    Ok(acc)
}

fn add_abs(acc: &mut SpaceTimeTrace, term: &SpaceTimeTrace) {
    for (a, v) in acc.samples.iter_mut().zip(&term.samples) {
        *a += v.abs();
    }
}

fn accumulate_s_chain(bases: Vec<SpaceTimeTrace>, k: usize) -> Result<SpaceTimeTrace> {
    if k > K_MAX_FD {
        return Err(Error::Parameter(format!("finite-difference S order {k} exceeds the cap {K_MAX_FD}")));
    }
    let mut acc = bases[0].zeros_like();
    acc.parity = Parity::None;
    let mut chains = bases;
    for j in 0..=k {
        if j > 0 {
            for ch in chains.iter_mut() {
                *ch = apply_s_raw(ch)?;
            }
        }
        if chains.len() == 1 {
            add_abs(&mut acc, &chains[0]);
        } else {
            for ((a, p), q) in acc.samples.iter_mut().zip(&chains[0].samples).zip(&chains[1].samples) {
                *a += (p * p + q * q).sqrt();
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Grid, T_START};
    use crate::waveop::{manufactured_solution, Manufactured};

    fn sample(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> SpaceTimeTrace {
        let mut tr = SpaceTimeTrace::with_capacity(grid.clone(), None, 1, Parity::None);
        let mut row = vec![0.0; grid.nx];
        for n in 0..=grid.n_steps {
            let t = grid.t(n);
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(t, grid.x(i));
            }
            tr.push_level(&row);
        }
        tr
    }

    #[test]
    fn euler_identity_bilinear() {
        // V = t x is homogeneous of degree 2: S V = 2 t x, exactly for the
        // second-order stencils.
        let grid = Grid::with_cfl(2.0, 64, 6.0, 0.8, 1.0, 1).unwrap();
        let tr = sample(&grid, |t, x| t * x);
        let s = apply_s(&DerivedTrace::base(tr.clone())).unwrap();
        for k in 0..s.trace.n_levels() {
            for i in 0..grid.nx {
                let want = 2.0 * s.trace.level_time(k) * grid.x(i);
                assert!((s.trace.value(k, i) - want).abs() < 1e-10);
            }
        }
        assert_eq!(s.word, vec![OpSym::S]);
    }

    #[test]
    fn euler_identity_homogeneous() {
        // Degree-2 field t^2 + x^2 and S^2(t^2) = 4 t^2.
        let grid = Grid::with_cfl(2.0, 64, 6.0, 0.8, 1.0, 1).unwrap();
        let tr = sample(&grid, |t, x| t * t + x * x);
        let s = apply_s_raw(&tr).unwrap();
        for k in 0..tr.n_levels() {
            for i in 0..grid.nx {
                assert!((s.value(k, i) - 2.0 * tr.value(k, i)).abs() < 1e-9);
            }
        }
        let t2 = sample(&grid, |t, _| t * t);
        let powers = apply_s_power(&t2, 2).unwrap();
        assert_eq!(powers.len(), 3);
        for k in 0..t2.n_levels() {
            let t = t2.level_time(k);
            assert!((powers[2].trace.value(k, 5) - 4.0 * t * t).abs() < 1e-8);
        }
        // k = 0 is the identity
        assert_eq!(powers[0].trace.samples, t2.samples);
        assert!(apply_s_power(&t2, K_MAX_FD + 1).is_err());
    }

    #[test]
    fn null_derivative_annihilation() {
        // An incoming profile f(t + x) on the x > 0 half is a function of
        // ubar, killed by d_u there.
        let grid = Grid::with_cfl(8.0, 1024, 6.0, 0.8, 1.0, 1).unwrap();
        let f = |y: f64| (-((y - 9.0) * (y - 9.0))).exp();
        let tr = sample(&grid, |t, x| f(t + x));
        let du = null_derivative(&DerivedTrace::base(tr.clone()), NullDir::U, 1.0).unwrap();
        let mut worst = 0.0f64;
        for k in 1..du.trace.n_levels() - 1 {
            for i in 0..grid.nx {
                if grid.x(i) > 0.5 && grid.x(i) < grid.x_max - 0.5 {
                    worst = worst.max(du.trace.value(k, i).abs());
                }
            }
        }
        assert!(worst < 5e-4, "d_u on incoming wave: {worst}");

        // d_u + d_ubar = d_t up to round-off.
        let dub = null_derivative(&DerivedTrace::base(tr.clone()), NullDir::Ubar, 1.0).unwrap();
        let dt = dt_field(&tr).unwrap();
        let mut w2 = 0.0f64;
        for idx in 0..dt.samples.len() {
            w2 = w2.max((du.trace.samples[idx] + dub.trace.samples[idx] - dt.samples[idx]).abs());
        }
        assert!(w2 < 1e-12, "linear combination identity: {w2}");
    }

    #[test]
    fn speed_c_annihilation() {
        // g(x - c t) on x > 0 is a function of u_c; d_{ubar_c} kills it.
        let c = 2.0;
        let grid = Grid::with_cfl(16.0, 2048, 6.0, 0.8, c, 1).unwrap();
        let g = |y: f64| (-(y + 7.0) * (y + 7.0)).exp();
        let tr = sample(&grid, |t, x| g(x - c * t));
        let dbc = null_derivative(&DerivedTrace::base(tr), NullDir::UbarC, c).unwrap();
        let mut worst = 0.0f64;
        for k in 1..dbc.trace.n_levels() - 1 {
            for i in 0..grid.nx {
                if grid.x(i) > 0.5 && grid.x(i) < grid.x_max - 0.5 {
                    worst = worst.max(dbc.trace.value(k, i).abs());
                }
            }
        }
        assert!(worst < 5e-4, "d_ubar_c on outgoing speed-c wave: {worst}");
    }

    #[test]
    fn box_residual_free_wave_second_order() {
        let mut prev: Option<f64> = None;
        for lvl in 0..2 {
            let nx = 1024 << lvl;
            let grid = Grid::with_cfl(4.0, nx, 5.5, 0.8, 1.0, 1).unwrap();
            let kind = Manufactured::DalembertBump { center: 0.5, width: 0.5, speed: 1.0, amplitude: 1.0 };
            let tr = manufactured_solution(&kind, &grid, 1).unwrap();
            let res = box_residual(&DerivedTrace::base(tr), 1.0).unwrap();
            let n = res.trace.n_levels();
            let mut worst = 0.0f64;
            for k in 2..n - 2 {
                for i in 2..grid.nx - 2 {
                    worst = worst.max(res.trace.value(k, i).abs());
                }
            }
            if let Some(p) = prev {
                assert!(p / worst > 3.0, "box residual order: {p} -> {worst}");
            }
            prev = Some(worst);
        }
    }

    #[test]
    fn box_matches_recorded_forcing() {
        use crate::waveop::{solve_linear, Forcing, InitialData, SolveOpts};
        let grid = Grid::with_cfl(6.0, 768, 6.0, 0.8, 1.0, 1).unwrap();
        let f = |t: f64, x: f64| {
            let s = t - T_START;
            if x.abs() < 2.0 { x * (-s).exp() } else { 0.0 }
        };
        let opts = SolveOpts { record_forcing: true, ..Default::default() };
        let sol = solve_linear(&InitialData::zero(&grid), Forcing::Fn(&f), 1.0, &grid, &opts).unwrap();
        let res = box_residual(&DerivedTrace::base(sol.trace), 1.0).unwrap();
        let ft = sol.forcing.unwrap();
        // compare in L2 over interior levels
        let mut num = 0.0;
        let mut den = 0.0;
        let n = res.trace.n_levels();
        for k in 2..n - 2 {
            for i in 2..grid.nx - 2 {
                let d = res.trace.value(k, i) - ft.value(k, i);
                num += d * d;
                den += ft.value(k, i) * ft.value(k, i);
            }
        }
        let rel = (num / den.max(1e-300)).sqrt();
        assert!(rel < 2e-3, "box vs recorded forcing: rel {rel}");
    }

    #[test]
    fn commutator_box_s_is_2box() {
        // box(SV) - S(box V) - 2 box V = O(dx^2) on smooth traces.
        let mut prev: Option<f64> = None;
        for lvl in 0..2 {
            let nx = 256 << lvl;
            let grid = Grid::with_cfl(2.0, nx, 6.0, 0.8, 1.0, 1).unwrap();
            let tr = sample(&grid, |t, x| ((x - 0.2 * t) * 0.8).sin() * (-0.1 * (t - 4.0)).exp());
            let base = DerivedTrace::base(tr.clone());
            let sv = apply_s(&base).unwrap();
            let box_sv = box_residual(&sv, 1.0).unwrap();
            let box_v = box_residual(&base, 1.0).unwrap();
            let s_box_v = apply_s_raw(&box_v.trace).unwrap();
            let mut worst = 0.0f64;
            let n = tr.n_levels();
            for k in 2..n - 2 {
                for i in 2..grid.nx - 2 {
                    let r = box_sv.trace.value(k, i) - s_box_v.value(k, i) - 2.0 * box_v.trace.value(k, i);
                    worst = worst.max(r.abs());
                }
            }
            if let Some(p) = prev {
                let order = (p / worst).log2();
                assert!(order > 1.8, "commutator order {order}");
            }
            prev = Some(worst);
        }
    }

    #[test]
    fn commutator_duc_s() {
        // [d_{u_c}, S] = d_{u_c}: d_{u_c}(SV) - S(d_{u_c}V) = d_{u_c}V + O(dx^2).
        let c = 2.0;
        let mut prev: Option<f64> = None;
        for lvl in 0..2 {
            let nx = 256 << lvl;
            let grid = Grid::with_cfl(2.0, nx, 6.0, 0.8, c, 1).unwrap();
            let tr = sample(&grid, |t, x| (0.7 * x).cos() * (0.3 * t).sin());
            let base = DerivedTrace::base(tr.clone());
            let sv = apply_s(&base).unwrap();
            let duc_sv = null_derivative(&sv, NullDir::Uc, c).unwrap();
            let duc_v = null_derivative(&base, NullDir::Uc, c).unwrap();
            let s_duc_v = apply_s_raw(&duc_v.trace).unwrap();
            let mut worst = 0.0f64;
            let n = tr.n_levels();
            for k in 2..n - 2 {
                for i in 2..grid.nx - 2 {
                    if grid.x(i).abs() > 0.25 {
                        let r = duc_sv.trace.value(k, i) - s_duc_v.value(k, i) - duc_v.trace.value(k, i);
                        worst = worst.max(r.abs());
                    }
                }
            }
            if let Some(p) = prev {
                let order = (p / worst).log2();
                assert!(order > 1.8, "[duc, S] order {order}");
            }
            prev = Some(worst);
        }
    }

    #[test]
    fn cross_method_agreement_on_free_wave() {
        // finite-difference vs commuted S and S^2 on a free wave.
        let kind = Manufactured::DalembertBump { center: 0.5, width: 0.4, speed: 1.0, amplitude: 1.0 };
        let mut gaps = Vec::new();
        for lvl in 0..2 {
            let nx = 1024 << lvl;
            let grid = Grid::with_cfl(6.0, nx, 8.0, 0.8, 1.0, 1).unwrap();
            let ic = kind.initial_data(&grid);
            let sol = crate::waveop::solve_linear(&ic, Forcing::None, 1.0, &grid, &SolveOpts::default()).unwrap();
            let commuted = solve_s_cascade(&SCascadeInput { ic: &ic, forcing: None, c: 1.0, grid: &grid }, 2, 1).unwrap();
            let fd = apply_s_power(&sol.trace, 2).unwrap();
            let mut lvl_gaps = Vec::new();
            for m in 1..=2 {
                let a = &fd[m].trace;
                let b = &commuted[m].trace;
                let mut num = 0.0;
                let mut den = 0.0;
                for idx in 0..a.samples.len() {
                    let d = a.samples[idx] - b.samples[idx];
                    num += d * d;
                    den += b.samples[idx] * b.samples[idx];
                }
                lvl_gaps.push((num / den).sqrt());
            }
            gaps.push(lvl_gaps);
        }
        assert!(gaps[0][0] < 5e-2, "S^1 gap {}", gaps[0][0]);
        assert!(gaps[0][1] < 1e-1, "S^2 gap {}", gaps[0][1]);
        assert!(gaps[1][0] < gaps[0][0] && gaps[1][1] < gaps[0][1], "gaps must shrink: {gaps:?}");
    }

    #[test]
    fn s_preserves_odd_parity() {
        let grid = Grid::with_cfl(4.0, 256, 6.0, 0.8, 1.0, 1).unwrap();
        let kind = Manufactured::DalembertBump { center: 0.5, width: 0.35, speed: 1.0, amplitude: 1.0 };
        let tr = manufactured_solution(&kind, &grid, 1).unwrap();
        let mut s = apply_s_raw(&tr).unwrap();
        s.parity = Parity::Odd;
        assert!(s.parity_violation() < 1e-12);
    }

    #[test]
    fn too_few_levels_rejected() {
        let grid = Grid::with_dt(1.0, 16, 4.5, 0.25, 1).unwrap();
        let mut tr = SpaceTimeTrace::with_capacity(grid.clone(), None, 1, Parity::None);
        tr.push_level(&vec![0.0; 16]);
        tr.push_level(&vec![0.0; 16]);
        assert!(apply_s_raw(&tr).is_err());
    }
}
