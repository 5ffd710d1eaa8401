//! Grids, null coordinates, sigma weights, and the dyadic space-time
//! decomposition of the light cone.
//!
//! The decomposition splits the support cone `{r <= c t - (4c-1)}` into
//! dyadic time blocks `t in [tau, 2 tau)` and, within each block, into
//! r-bands near the spatial origin, (ct-r)-bands near the light cone, and
//! one outer region away from both.  Plain regions partition the cone up to
//! measure-zero boundaries; enlarged regions (factor > 1) stretch every
//! defining interval in both directions and are used on the right-hand side
//! of the inequality audits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Japanese bracket `<y> = sqrt(1 + y^2)`.
#[inline]
pub fn jap(y: f64) -> f64 {
    (1.0 + y * y).sqrt()
}

/// Largest power of two `<= x`, for `x >= 1`.  Exact via the exponent bits.
#[inline]
pub fn largest_dyadic_leq(x: f64) -> f64 {
    debug_assert!(x >= 1.0 && x.is_finite());
    let exp = (x.to_bits() >> 52) as i64 - 1023;
    f64::powi(2.0, exp as i32)
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform staggered space-time grid on `[-x_max, x_max] x [4, t_end]`.
///
/// Spatial nodes sit at half-integers, `x_i = -x_max + (i + 1/2) dx`, so no
/// node ever lies at x = 0; combined with odd symmetry this keeps the
/// `x^{-1}` forcings of the reduced system finite without regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_max: f64,
    pub nx: usize,
    pub dx: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_steps: usize,
}

/// Initial time slice shared by every run.
pub const T_START: f64 = 4.0;

impl Grid {
    /// Builds a grid from a target time step.  `n_steps` is rounded up so
    /// that the final level lands exactly on `t_end` and is a multiple of
    /// `stride`; `dt` shrinks accordingly.
    pub fn with_dt(x_max: f64, nx: usize, t_end: f64, dt_target: f64, stride: usize) -> Result<Grid> {
        if !(x_max > 0.0) {
            return Err(Error::Config(format!("x_max must be positive, got {x_max}")));
        }
        if nx < 4 || nx % 2 != 0 {
            return Err(Error::Config(format!(
                "nx must be an even integer >= 4, got {nx} (odd nx places a node at x = 0)"
            )));
        }
        if !(t_end > T_START) {
            return Err(Error::Config(format!("t_end must exceed {T_START}, got {t_end}")));
        }
        if !(dt_target > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt_target}")));
        }
        if stride == 0 {
            return Err(Error::Config("store stride must be >= 1".into()));
        }
        let dx = 2.0 * x_max / nx as f64;
        let span = t_end - T_START;
        let mut n_steps = (span / dt_target).ceil() as usize;
        n_steps = n_steps.max(stride);
        if n_steps % stride != 0 {
            n_steps += stride - n_steps % stride;
        }
        let dt = span / n_steps as f64;
        Ok(Grid { x_max, nx, dx, t_start: T_START, t_end, dt, n_steps })
    }

    /// Builds a grid whose time step satisfies `fast_speed * dt / dx = cfl`.
    pub fn with_cfl(x_max: f64, nx: usize, t_end: f64, cfl: f64, fast_speed: f64, stride: usize) -> Result<Grid> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {cfl}")));
        }
        if !(fast_speed > 0.0) {
            return Err(Error::Config(format!("speed must be positive, got {fast_speed}")));
        }
        let dx = 2.0 * x_max / nx as f64;
        Grid::with_dt(x_max, nx, t_end, cfl * dx / fast_speed, stride)
    }

    /// Spatial node position.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.x_max + (i as f64 + 0.5) * self.dx
    }

    /// Time of step `n`.
    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        self.t_start + n as f64 * self.dt
    }

    /// Mirror node index: `x(mirror(i)) == -x(i)` exactly.
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        self.nx - 1 - i
    }

    /// Courant number of a field at speed `c` on this grid.
    #[inline]
    pub fn courant(&self, c: f64) -> f64 {
        c * self.dt / self.dx
    }

    /// Index range of nodes with `|x| <= radius`.
    pub fn nodes_within(&self, radius: f64) -> std::ops::Range<usize> {
        let lo = ((-radius + self.x_max) / self.dx - 0.5).ceil().max(0.0) as usize;
        let hi = (((radius + self.x_max) / self.dx - 0.5).floor() as usize + 1).min(self.nx);
        lo..hi
    }

    /// Grids the same domain with both steps halved (CFL preserved).
    pub fn refined(&self) -> Grid {
        Grid {
            x_max: self.x_max,
            nx: self.nx * 2,
            dx: self.dx / 2.0,
            t_start: self.t_start,
            t_end: self.t_end,
            dt: self.dt / 2.0,
            n_steps: self.n_steps * 2,
        }
    }
}

// ---------------------------------------------------------------------------
// Null coordinates
// ---------------------------------------------------------------------------

/// Null coordinates at speed 1 and at speed `c` for one space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullCoords {
    /// Retarded time t - r.
    pub u: f64,
    /// Advanced time t + r.
    pub ubar: f64,
    /// Speed-c retarded time ct - r.
    pub u_c: f64,
    /// Speed-c advanced time ct + r.
    pub ubar_c: f64,
    pub c: f64,
}

impl NullCoords {
    pub fn from_tr(t: f64, r: f64, c: f64) -> NullCoords {
        NullCoords { u: t - r, ubar: t + r, u_c: c * t - r, ubar_c: c * t + r, c }
    }
}

// ---------------------------------------------------------------------------
// Sigma weights
// ---------------------------------------------------------------------------

/// Weight kind selector for [`WeightSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaKind {
    Sigma,
    SigmaPrime,
    SqrtSigmaDerivative,
}

/// A member of the sigma weight family with its scale parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub theta: f64,
    pub kind: SigmaKind,
}

impl WeightSpec {
    pub fn new(theta: f64, kind: SigmaKind) -> Result<WeightSpec> {
        if !(theta >= 1.0) {
            return Err(Error::Parameter(format!("sigma scale must satisfy theta >= 1, got {theta}")));
        }
        Ok(WeightSpec { theta, kind })
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        match self.kind {
            SigmaKind::Sigma => sigma_weight(y, self.theta),
            SigmaKind::SigmaPrime => sigma_weight_derivative(y, self.theta),
            SigmaKind::SqrtSigmaDerivative => sqrt_sigma_r_derivative(y, self.theta),
        }
    }
}

/// The bounded odd weight `sigma_theta(y) = y / (|y| + theta)`.
pub fn sigma_weight(y: f64, theta: f64) -> Result<f64> {
    if !(theta >= 1.0) {
        return Err(Error::Parameter(format!("sigma scale must satisfy theta >= 1, got {theta}")));
    }
    Ok(y / (y.abs() + theta))
}

/// Derivative `sigma_theta'(y) = theta / (|y| + theta)^2`.
pub fn sigma_weight_derivative(y: f64, theta: f64) -> Result<f64> {
    if !(theta >= 1.0) {
        return Err(Error::Parameter(format!("sigma scale must satisfy theta >= 1, got {theta}")));
    }
    let d = y.abs() + theta;
    Ok(theta / (d * d))
}

/// Lower-bound constant for `d/dr sqrt(sigma_R(r)) >= K r^{-1/2} R^{-1/2}`
/// over the scan `r in [R/64, 4R]`, `R in {1, 2, ..., 2^10}`.
///
/// The ratio equals `(R / (r + R))^{3/2} / 2`, minimized at r = 4R where it
/// is `5^{-3/2} / 2 = 0.04472...` independently of R; frozen slightly below.
pub const SQRT_SIGMA_LOWER_CONSTANT: f64 = 0.0447;

/// `d/dr sqrt(sigma_R(r)) = R / (2 (r + R)^{3/2} sqrt(r))` for r > 0.
///
/// Checks the frozen lower bound `K r^{-1/2} R^{-1/2}` whenever r lies in
/// the scanned band `[R/64, 4R]`.
pub fn sqrt_sigma_r_derivative(r: f64, big_r: f64) -> Result<f64> {
    if !(big_r >= 1.0) {
        return Err(Error::Parameter(format!("band scale must satisfy R >= 1, got {big_r}")));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("r must be positive, got {r}")));
    }
    let val = big_r / (2.0 * (r + big_r).powf(1.5) * r.sqrt());
    if r >= big_r / 64.0 && r <= 4.0 * big_r {
        debug_assert!(
            val >= SQRT_SIGMA_LOWER_CONSTANT / (r.sqrt() * big_r.sqrt()),
            "sqrt-sigma lower bound violated at r={r}, R={big_r}"
        );
    }
    Ok(val)
}

// ---------------------------------------------------------------------------
// Dyadic regions
// ---------------------------------------------------------------------------

/// Band kind within a time block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    /// r-band: `r in [R, 2R)` (R > 1) or `r in [0, 2)` (R = 1).
    RBand,
    /// (ct - r)-band: `ct - r in [U_c, 2 U_c)`.
    UcBand,
    /// `ct - r >= c tau / 2` and `r >= c tau / 2`.
    Outer,
}

/// One cell of the dyadic decomposition at speed `c`.
///
/// `value` is the dyadic label R or U_c (or `c tau / 2` for the outer
/// region).  When `c tau / 4` is not a power of two the band adjacent to the
/// outer region carries the clipped label `c tau / 4` and covers the leftover
/// interval up to `c tau / 2`; [`DyadicRegion::band_interval`] always reports
/// the concrete interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicRegion {
    pub c: f64,
    pub tau: f64,
    pub kind: RegionKind,
    pub value: f64,
    /// Interval stretch factor; 1 = plain region, > 1 = enlarged.
    pub enlargement: f64,
    /// Horizon T; the top time block closes at T.
    pub t_max: f64,
}

/// Fraction by which enlarged regions stretch every defining interval.
pub const DEFAULT_ENLARGEMENT: f64 = 1.5;

impl DyadicRegion {
    /// Time interval `[lo, hi)`; `closed_hi` marks the top block `[tau, T]`.
    pub fn t_interval(&self) -> (f64, f64, bool) {
        let f = self.enlargement;
        let lo = (self.tau / f).max(T_START);
        if 2.0 * self.tau >= self.t_max {
            (lo, self.t_max, true)
        } else {
            (lo, (2.0 * self.tau * f).min(self.t_max), 2.0 * self.tau * f >= self.t_max)
        }
    }

    /// Band interval in r (RBand) or in ct - r (UcBand); `None` for Outer,
    /// whose constraints are `r >= lo` and `ct - r >= lo` jointly.
    pub fn band_interval(&self) -> (f64, Option<f64>) {
        let f = self.enlargement;
        let half = self.c * self.tau / 2.0;
        let quarter = half / 2.0;
        match self.kind {
            RegionKind::Outer => (half / f, None),
            RegionKind::RBand => {
                if self.value <= 1.0 {
                    (0.0, Some(2.0 * f))
                } else if is_clip_label(self.value, quarter) {
                    let d = largest_dyadic_leq(quarter);
                    ((2.0 * d / f).max(0.0), Some(half * f))
                } else {
                    (self.value / f, Some((2.0 * self.value * f).min(half * f)))
                }
            }
            RegionKind::UcBand => {
                if is_clip_label(self.value, quarter) {
                    let d = largest_dyadic_leq(quarter);
                    (2.0 * d / f, Some(half * f))
                } else {
                    (self.value / f, Some((2.0 * self.value * f).min(half * f)))
                }
            }
        }
    }

    /// Membership of a point, including the support cone and time block.
    pub fn contains(&self, t: f64, r: f64) -> bool {
        if t < T_START || t > self.t_max || r < 0.0 {
            return false;
        }
        if r > self.c * t - (4.0 * self.c - 1.0) {
            return false;
        }
        let (t_lo, t_hi, closed) = self.t_interval();
        if t < t_lo || t > t_hi || (!closed && t >= t_hi) {
            return false;
        }
        let (lo, hi) = self.band_interval();
        match self.kind {
            RegionKind::Outer => r >= lo && self.c * t - r >= lo,
            RegionKind::RBand => r >= lo && r < hi.unwrap(),
            RegionKind::UcBand => {
                let uc = self.c * t - r;
                uc >= lo && uc < hi.unwrap()
            }
        }
    }

    /// Returns the same region with a different enlargement factor.
    pub fn enlarged(&self, factor: f64) -> DyadicRegion {
        DyadicRegion { enlargement: factor, ..self.clone() }
    }

    /// The region value read as an r-scale.  Outer regions may be treated as
    /// either an r-band or a (ct-r)-band of scale `c tau / 2`; norm and
    /// estimate terms document which reading they use.
    pub fn value_as_r(&self) -> f64 {
        match self.kind {
            RegionKind::Outer => self.c * self.tau / 2.0,
            _ => self.value,
        }
    }

    /// The region value read as a (ct-r)-scale.
    pub fn value_as_uc(&self) -> f64 {
        match self.kind {
            RegionKind::Outer => self.c * self.tau / 2.0,
            _ => self.value,
        }
    }

    /// JSON form used by the `regions` export.
    pub fn to_json(&self) -> serde_json::Value {
        let (t_lo, t_hi, _) = self.t_interval();
        let (lo, hi) = self.band_interval();
        serde_json::json!({
            "c": self.c,
            "tau": self.tau,
            "kind": match self.kind {
                RegionKind::RBand => "RBand",
                RegionKind::UcBand => "UcBand",
                RegionKind::Outer => "Outer",
            },
            "value": self.value,
            "enlargement": self.enlargement,
            "bounds": { "t": [t_lo, t_hi], "r_or_uc": [lo, hi] },
        })
    }
}

/// True when `value` is the clipped boundary label `c tau / 4` of a band
/// family whose quarter scale is not a power of two.
fn is_clip_label(value: f64, quarter: f64) -> bool {
    value == quarter && largest_dyadic_leq(quarter) != quarter
}

/// Dyadic time block of a time `t in [4, T]`: the largest power of two
/// `<= t`, except that `t = T` with T itself dyadic folds into the block
/// below so every block has positive measure.
fn time_block(t: f64, t_max: f64) -> f64 {
    let mut tau = largest_dyadic_leq(t);
    if tau >= t_max {
        tau /= 2.0;
    }
    tau.max(4.0)
}

/// Classifies a point of the support cone into its unique plain region.
///
/// Returns `Ok(None)` when the point lies outside the support cone.
/// Priority: (ct-r)-bands beat r-bands beat the outer region, so the plain
/// regions partition the cone.
pub fn classify_point(t: f64, r: f64, c: f64, t_max: f64) -> Result<Option<DyadicRegion>> {
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("speed must be positive, got {c}")));
    }
    if t < T_START || t > t_max {
        return Err(Error::Domain(format!("t = {t} outside [{T_START}, {t_max}]")));
    }
    if r < 0.0 {
        return Err(Error::Domain(format!("r must be nonnegative, got {r}")));
    }
    if r > c * t - (4.0 * c - 1.0) {
        return Ok(None);
    }
    let tau = time_block(t, t_max);
    let half = c * tau / 2.0;
    let quarter = half / 2.0;
    let uc = c * t - r;

    let region = |kind, value| {
        Some(DyadicRegion { c, tau, kind, value, enlargement: 1.0, t_max })
    };

    if uc < half {
        // Inside the support cone ct - r >= 4c - 1, which exceeds 2 for
        // every c >= 3/4; smaller speeds are not used by any caller.
        if uc < 2.0 {
            return Err(Error::Domain(format!(
                "ct - r = {uc} < 2 inside the support cone (speed c = {c} too small)"
            )));
        }
        let value = largest_dyadic_leq(uc).clamp(2.0, quarter);
        return Ok(region(RegionKind::UcBand, value));
    }
    if r < half {
        let value = largest_dyadic_leq(r.max(1.0)).clamp(1.0, quarter);
        return Ok(region(RegionKind::RBand, value));
    }
    Ok(region(RegionKind::Outer, half))
}

/// Dyadic time blocks `tau in {4, 8, ...}` with `tau < T`.
pub fn time_blocks(t_max: f64) -> Vec<f64> {
    let mut taus = Vec::new();
    let mut tau = 4.0;
    while tau < t_max {
        taus.push(tau);
        tau *= 2.0;
    }
    taus
}

/// Enumerates the formal region list of the speed-`c` decomposition up to
/// horizon `t_max`.  Labels in range are listed even when the region's
/// intersection with the support cone is empty.
pub fn enumerate_regions(c: f64, t_max: f64, enlargement: f64) -> Result<Vec<DyadicRegion>> {
    if !(t_max >= 8.0) {
        return Err(Error::Parameter(format!("horizon must be >= 8, got {t_max}")));
    }
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("speed must be positive, got {c}")));
    }
    if !(enlargement >= 1.0) {
        return Err(Error::Parameter(format!("enlargement factor must be >= 1, got {enlargement}")));
    }
    let mut out = Vec::new();
    for tau in time_blocks(t_max) {
        let quarter = c * tau / 4.0;
        let mk = |kind, value| DyadicRegion { c, tau, kind, value, enlargement, t_max };

        let mut r = 1.0;
        while r <= quarter {
            out.push(mk(RegionKind::RBand, r));
            r *= 2.0;
        }
        if largest_dyadic_leq(quarter) != quarter {
            out.push(mk(RegionKind::RBand, quarter));
        }
        let mut uc = 2.0;
        while uc <= quarter {
            out.push(mk(RegionKind::UcBand, uc));
            uc *= 2.0;
        }
        if quarter > 2.0 && largest_dyadic_leq(quarter) != quarter {
            out.push(mk(RegionKind::UcBand, quarter));
        }
        out.push(mk(RegionKind::Outer, c * tau / 2.0));
    }
    Ok(out)
}
