//! Numerical audit of the thirteen inequality statements.
//!
//! Each entry evaluates its left side and right side on admissible traces
//! and reports the ratio.  Statements with an implicit constant are audited
//! as ratio boundedness over a fixed solution family plus refinement
//! stability; regression bounds are pinned at twice the first measured
//! maxima in [`pins`].
//!
//! E1/E2 and E3/E4 are pointwise bounds on an odd field at speed c over
//! r-bands resp. (ct-r)-bands; E5-E8 are the speed-1 analogs controlling V
//! and its gradient; E9-E11 are integrated local energy bounds with data and
//! forcing terms on the right; E12 is a space-time Hardy bound and E13 its
//! mixed-speed variant (requires c > 1).  Right sides integrate over the
//! enlarged regions; left sides over the plain ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{enumerate_regions, DyadicRegion, RegionKind};
use crate::norms::{
    aggregate, family_region_l2, AggIndex, AggOp, AggSpec, BandLabel, PointWeight, RegionFamily, RegionIndex,
    RegionValues, SpeedSel, WeightExpr,
};
use crate::scalecalc::{s_abs_sum_inner, s_abs_sum_outer, InnerDeriv, OuterDeriv};
use crate::waveop::{Parity, SpaceTimeTrace};

/// Registry identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimateId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
    E10,
    E11,
    E12,
    E13,
}

pub const ALL_ESTIMATES: [EstimateId; 13] = [
    EstimateId::E1,
    EstimateId::E2,
    EstimateId::E3,
    EstimateId::E4,
    EstimateId::E5,
    EstimateId::E6,
    EstimateId::E7,
    EstimateId::E8,
    EstimateId::E9,
    EstimateId::E10,
    EstimateId::E11,
    EstimateId::E12,
    EstimateId::E13,
];

impl EstimateId {
    pub fn name(&self) -> &'static str {
        match self {
            EstimateId::E1 => "E1",
            EstimateId::E2 => "E2",
            EstimateId::E3 => "E3",
            EstimateId::E4 => "E4",
            EstimateId::E5 => "E5",
            EstimateId::E6 => "E6",
            EstimateId::E7 => "E7",
            EstimateId::E8 => "E8",
            EstimateId::E9 => "E9",
            EstimateId::E10 => "E10",
            EstimateId::E11 => "E11",
            EstimateId::E12 => "E12",
            EstimateId::E13 => "E13",
        }
    }

    pub fn from_name(s: &str) -> Option<EstimateId> {
        ALL_ESTIMATES.iter().copied().find(|e| e.name().eq_ignore_ascii_case(s))
    }

    /// Does the entry take the p parameter (p in {0, 1})?
    pub fn takes_p(&self) -> bool {
        matches!(self, EstimateId::E9 | EstimateId::E10)
    }
}

/// Where the d'Alembertian on the right side comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ForcingSource {
    /// Recorded forcing when present, discrete residual otherwise.
    #[default]
    Auto,
    Recorded,
    BoxResidual,
}

#[derive(Debug, Clone)]
pub struct EstimateParams {
    pub p: u8,
    pub enlargement: f64,
    pub forcing: ForcingSource,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams { p: 0, enlargement: crate::geometry::DEFAULT_ENLARGEMENT, forcing: ForcingSource::Auto }
    }
}

/// The traces an estimate may draw on.
pub struct TraceBundle<'a> {
    pub label: &'a str,
    pub v: Option<&'a SpaceTimeTrace>,
    pub w: Option<&'a SpaceTimeTrace>,
    pub v_forcing: Option<&'a SpaceTimeTrace>,
    pub w_forcing: Option<&'a SpaceTimeTrace>,
    pub c: f64,
}

/// Outcome of one check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub id: EstimateId,
    pub p: Option<u8>,
    pub c: f64,
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when degenerate (rhs below 1e-14).
    pub ratio: Option<f64>,
    pub degenerate: bool,
    /// Worst region for the per-region entries.
    pub worst_region: Option<String>,
    pub nx: usize,
    pub dt: f64,
}

const DEGENERATE_FLOOR: f64 = 1e-14;

// ---------------------------------------------------------------------------
// Entry tables
// ---------------------------------------------------------------------------

struct RhsTerm {
    tau_pow: f64,
    val_pow: f64,
    k: usize,
    outer: OuterDeriv,
    point_weight: WeightExpr,
}

#[derive(PartialEq, Clone, Copy)]
enum Band {
    R,
    Uc,
}

struct PerRegionEntry {
    /// Field measured: false = V (speed-1 regions), true = W (speed-c).
    on_w: bool,
    band: Band,
    include_outer: bool,
    lhs_grad: bool,
    lhs_weight: WeightExpr,
    rhs: [RhsTerm; 2],
}

fn per_region_entry(id: EstimateId) -> Option<PerRegionEntry> {
    use OuterDeriv::*;
    use PointWeight::*;
    let t = |tau_pow, val_pow, k, outer, pw: Vec<PointWeight>| RhsTerm {
        tau_pow,
        val_pow,
        k,
        outer,
        point_weight: WeightExpr(pw),
    };
    let e = match id {
        EstimateId::E1 => PerRegionEntry {
            on_w: true,
            band: Band::R,
            include_outer: true,
            lhs_grad: false,
            lhs_weight: WeightExpr(vec![RPow(-0.5)]),
            rhs: [t(-0.5, -1.0, 1, Id, vec![]), t(-0.5, 0.0, 1, Dr, vec![])],
        },
        EstimateId::E2 => PerRegionEntry {
            on_w: true,
            band: Band::Uc,
            include_outer: false,
            lhs_grad: false,
            lhs_weight: WeightExpr(vec![]),
            rhs: [t(-0.5, -0.5, 1, Id, vec![]), t(-0.5, 0.5, 1, Dr, vec![])],
        },
        EstimateId::E3 => PerRegionEntry {
            on_w: true,
            band: Band::R,
            include_outer: true,
            lhs_grad: false,
            lhs_weight: WeightExpr(vec![RPow(-0.5)]),
            rhs: [t(-0.5, -1.0, 2, Id, vec![]), t(-0.5, 0.0, 1, DubarC, vec![])],
        },
        EstimateId::E4 => PerRegionEntry {
            on_w: true,
            band: Band::Uc,
            include_outer: false,
            lhs_grad: false,
            lhs_weight: WeightExpr(vec![]),
            rhs: [t(-0.5, -0.5, 2, Id, vec![]), t(0.5, -0.5, 1, DubarC, vec![])],
        },
        EstimateId::E5 => PerRegionEntry {
            on_w: false,
            band: Band::R,
            include_outer: true,
            lhs_grad: false,
            lhs_weight: WeightExpr(vec![]),
            rhs: [t(-0.5, -0.5, 2, Id, vec![]), t(-0.5, 0.25, 1, Dubar, vec![RPow(0.25)])],
        },
        EstimateId::E6 => PerRegionEntry {
            on_w: false,
            band: Band::Uc,
            include_outer: false,
            lhs_grad: false,
            lhs_weight: WeightExpr(vec![]),
            rhs: [t(-0.5, -0.5, 2, Id, vec![]), t(0.5, -0.5, 1, Dubar, vec![])],
        },
        EstimateId::E7 => PerRegionEntry {
            on_w: false,
            band: Band::R,
            include_outer: true,
            lhs_grad: true,
            lhs_weight: WeightExpr(vec![]),
            rhs: [t(-0.5, -0.5, 2, Grad, vec![]), t(-0.5, 0.25, 1, Box, vec![RPow(0.25)])],
        },
        EstimateId::E8 => PerRegionEntry {
            on_w: false,
            band: Band::Uc,
            include_outer: false,
            lhs_grad: true,
            lhs_weight: WeightExpr(vec![]),
            rhs: [t(-0.5, -0.5, 2, Grad, vec![]), t(0.5, -0.5, 1, Box, vec![])],
        },
        _ => return None,
    };
    Some(e)
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

/// L-infinity of `weight * |field|` over the plain region (x > 0 nodes).
fn region_linf(field: &SpaceTimeTrace, region: &DyadicRegion, weight: &WeightExpr, c: f64) -> f64 {
    let grid = &field.grid;
    let (t_lo, t_hi, closed) = region.t_interval();
    let mut worst = 0.0f64;
    for k in 0..field.n_levels() {
        let t = field.level_time(k);
        if t < t_lo || t > t_hi || (!closed && t >= t_hi) {
            continue;
        }
        let row = field.level(k);
        for i in grid.nx / 2..grid.nx {
            let r = grid.x(i);
            if region.contains(t, r) {
                worst = worst.max(weight.eval(t, r, c) * row[i].abs());
            }
        }
    }
    worst
}

/// Cell sum of `weight(t,r) * a * b` over the positive half strip; set
/// `absolute` to integrate `|a| |b|`.
fn strip_integral(a: &SpaceTimeTrace, b: &SpaceTimeTrace, weight: &WeightExpr, c: f64, absolute: bool) -> f64 {
    let grid = &a.grid;
    let n = a.n_levels();
    let dts = a.dt_store();
    let mut acc = 0.0;
    for k in 0..n {
        let t = a.level_time(k);
        let tw = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let cw = tw * grid.dx * dts;
        let ra = a.level(k);
        let rb = b.level(k);
        for i in grid.nx / 2..grid.nx {
            let r = grid.x(i);
            let w = weight.eval(t, r, c);
            let term = if absolute { ra[i].abs() * rb[i].abs() } else { ra[i] * rb[i] };
            acc += w * term * cw;
        }
    }
    acc
}

/// `L^2_r` of `weight * field` on the initial slice.
fn initial_slice_l2(field: &SpaceTimeTrace, weight: &WeightExpr, c: f64) -> f64 {
    let grid = &field.grid;
    let row = field.level(0);
    let t = field.level_time(0);
    let mut acc = 0.0;
    for i in grid.nx / 2..grid.nx {
        let r = grid.x(i);
        let w = weight.eval(t, r, c);
        acc += w * w * row[i] * row[i] * grid.dx;
    }
    acc.sqrt()
}

/// Aggregated squared norm of `weight * field` over one band family.
fn aggregated_sq(
    field: &SpaceTimeTrace,
    index: &RegionIndex,
    family: RegionFamily,
    weight: &WeightExpr,
    agg: &AggSpec,
    c: f64,
) -> Result<f64> {
    let kind = match family.kind {
        crate::norms::BandKind::R => RegionKind::RBand,
        crate::norms::BandKind::Uc => RegionKind::UcBand,
    };
    let values = family_region_l2(field, index, kind, weight, c)?;
    let v = aggregate(&RegionValues { family, values }, agg)?;
    Ok(v * v)
}

fn require_compact_support(tr: &SpaceTimeTrace, what: &str) -> Result<()> {
    if !tr.supported_away_from_edges(4) {
        return Err(Error::Refused(format!(
            "{what} reaches within 4 cells of the domain edge; boundary reflection would corrupt the audit"
        )));
    }
    Ok(())
}

fn require_odd(tr: &SpaceTimeTrace, what: &str) -> Result<()> {
    if tr.parity != Parity::Odd {
        return Err(Error::Refused(format!("{what} must be odd for this estimate")));
    }
    Ok(())
}

fn box_of(field: &SpaceTimeTrace, recorded: Option<&SpaceTimeTrace>, source: ForcingSource, c: f64) -> Result<SpaceTimeTrace> {
    match (source, recorded) {
        (ForcingSource::Recorded, None) => Err(Error::Refused("recorded forcing requested but none present".into())),
        (ForcingSource::Recorded, Some(f)) | (ForcingSource::Auto, Some(f)) => Ok(f.clone()),
        (ForcingSource::BoxResidual, _) | (ForcingSource::Auto, None) => {
            Ok(crate::scalecalc::box_residual(&crate::scalecalc::DerivedTrace::base(field.clone()), c)?.trace)
        }
    }
}

// ---------------------------------------------------------------------------
// check_estimate
// ---------------------------------------------------------------------------

/// Evaluates one registry entry on a trace bundle.
///
/// Refuses when the applicability predicate fails (parity, compact support,
/// speed constraints); reports a degenerate result when the right side
/// vanishes.
pub fn check_estimate(id: EstimateId, bundle: &TraceBundle<'_>, params: &EstimateParams) -> Result<EstimateReport> {
    if params.p > 1 {
        return Err(Error::Parameter("p must be 0 or 1".into()));
    }
    let c = bundle.c;
    if !(c > 0.0) {
        return Err(Error::Parameter("speed must be positive".into()));
    }
    let mk = |lhs: f64, rhs: f64, worst_region: Option<String>, nx: usize, dt: f64| {
        let degenerate = rhs < DEGENERATE_FLOOR;
        EstimateReport {
            id,
            p: id.takes_p().then_some(params.p),
            c,
            label: bundle.label.to_string(),
            lhs,
            rhs,
            ratio: (!degenerate).then(|| lhs / rhs),
            degenerate,
            worst_region,
            nx,
            dt,
        }
    };

    if let Some(entry) = per_region_entry(id) {
        let field = if entry.on_w {
            bundle.w.ok_or_else(|| Error::Refused("estimate needs the W trace".into()))?
        } else {
            bundle.v.ok_or_else(|| Error::Refused("estimate needs the V trace".into()))?
        };
        require_odd(field, if entry.on_w { "W" } else { "V" })?;
        require_compact_support(field, if entry.on_w { "W" } else { "V" })?;
        let region_speed = if entry.on_w { c } else { 1.0 };
        let eq_speed = field.speed.unwrap_or(region_speed);
        let t_max = field.level_time(field.n_levels() - 1);
        if t_max < 8.0 {
            return Err(Error::Refused("trace too short: need a horizon of at least 8".into()));
        }

        let lhs_field =
            if entry.lhs_grad { s_abs_sum_inner(field, 0, InnerDeriv::Grad, eq_speed)? } else { field.clone() };
        let rhs_fields: Vec<SpaceTimeTrace> = entry
            .rhs
            .iter()
            .map(|term| s_abs_sum_outer(field, term.k, term.outer, eq_speed))
            .collect::<Result<_>>()?;

        let regions = enumerate_regions(region_speed, t_max, 1.0)?;
        let mut worst: Option<(f64, String, f64, f64)> = None;
        let mut any = false;
        for reg in &regions {
            let view_value = match (reg.kind, entry.band) {
                (RegionKind::RBand, Band::R) => reg.value,
                (RegionKind::Outer, Band::R) if entry.include_outer => reg.value_as_r(),
                (RegionKind::UcBand, Band::Uc) => reg.value,
                _ => continue,
            };
            let lhs = region_linf(&lhs_field, reg, &entry.lhs_weight, c);
            let enlarged = reg.enlarged(params.enlargement);
            let mut rhs = 0.0;
            for (term, f) in entry.rhs.iter().zip(&rhs_fields) {
                let coef = reg.tau.powf(term.tau_pow) * view_value.powf(term.val_pow);
                let (val, _) = crate::norms::region_weighted_l2(f, &enlarged, &term.point_weight, c)?;
                rhs += coef * val;
            }
            if rhs >= DEGENERATE_FLOOR {
                any = true;
                let ratio = lhs / rhs;
                let tag = format!(
                    "tau={} {}={}",
                    reg.tau,
                    match entry.band {
                        Band::R => "R",
                        Band::Uc => "Uc",
                    },
                    view_value
                );
                if worst.as_ref().map_or(true, |(w, ..)| ratio > *w) {
                    worst = Some((ratio, tag, lhs, rhs));
                }
            }
        }
        let grid = &field.grid;
        return Ok(match worst {
            Some((_, tag, lhs, rhs)) if any => mk(lhs, rhs, Some(tag), grid.nx, grid.dt),
            _ => mk(0.0, 0.0, None, grid.nx, grid.dt),
        });
    }

    match id {
        EstimateId::E9 | EstimateId::E10 => {
            // The E10 statement is printed with a decorated d'Alembertian on
            // its right side where every sibling uses the plain one; this
            // implementation uses the plain operator for both and flags the
            // discrepancy as a presumed typo rather than silently resolving
            // it differently.
            let v = bundle.v.ok_or_else(|| Error::Refused("estimate needs the V trace".into()))?;
            require_compact_support(v, "V")?;
            let p = params.p as f64;
            let idx1 = RegionIndex::build(v, 1.0)?;
            let idxc = RegionIndex::build(v, c)?;
            let dubar = s_abs_sum_inner(v, 0, InnerDeriv::Dubar, c)?;
            let du = s_abs_sum_inner(v, 0, InnerDeriv::Du, c)?;

            let fam = |speed, kind| RegionFamily { speed, kind };
            let linf_l2 = |label| AggSpec::new((AggOp::LInf, AggIndex::Band(label)), (AggOp::L2, AggIndex::Tau));
            use crate::norms::BandKind as NB;
            use PointWeight::*;

            let mut lhs = aggregated_sq(
                &dubar,
                &idx1,
                fam(SpeedSel::One, NB::R),
                &WeightExpr(vec![RPow(-0.25), JapR(-0.25), JapUbar(p / 2.0)]),
                &linf_l2(BandLabel::R),
                c,
            )?;
            lhs += aggregated_sq(
                &dubar,
                &idx1,
                fam(SpeedSel::One, NB::Uc),
                &WeightExpr(vec![JapU(-0.5), JapUbar(p / 2.0)]),
                &linf_l2(BandLabel::U),
                c,
            )?;
            lhs += aggregated_sq(
                &dubar,
                &idxc,
                fam(SpeedSel::Coupled, NB::Uc),
                &WeightExpr(vec![JapUc(-0.5), JapUbar(p / 2.0)]),
                &linf_l2(BandLabel::Uc),
                c,
            )?;
            if id == EstimateId::E10 {
                lhs += aggregated_sq(
                    &du,
                    &idx1,
                    fam(SpeedSel::One, NB::R),
                    &WeightExpr(vec![RPow(-0.25), JapR(-0.25), JapU(p / 2.0)]),
                    &linf_l2(BandLabel::R),
                    c,
                )?;
                lhs += aggregated_sq(
                    &du,
                    &idxc,
                    fam(SpeedSel::Coupled, NB::Uc),
                    &WeightExpr(vec![JapUc(-0.5), JapU(p / 2.0)]),
                    &linf_l2(BandLabel::Uc),
                    c,
                )?;
            }

            let boxv = box_of(v, bundle.v_forcing, params.forcing, 1.0)?;
            let data_field = if id == EstimateId::E9 {
                dubar.clone()
            } else {
                s_abs_sum_inner(v, 0, InnerDeriv::Grad, c)?
            };
            let data = initial_slice_l2(&data_field, &WeightExpr(vec![JapR(p / 2.0)]), c);
            let mut rhs = data * data;
            rhs += strip_integral(&boxv, &dubar, &WeightExpr(vec![JapUbar(p)]), c, true);
            if id == EstimateId::E10 {
                rhs += strip_integral(&boxv, &du, &WeightExpr(vec![JapU(p)]), c, true);
            }
            let grid = &v.grid;
            Ok(mk(lhs, rhs, None, grid.nx, grid.dt))
        }
        EstimateId::E11 => {
            let w = bundle.w.ok_or_else(|| Error::Refused("estimate needs the W trace".into()))?;
            require_compact_support(w, "W")?;
            let idx1 = RegionIndex::build(w, 1.0)?;
            let dubarc = s_abs_sum_inner(w, 0, InnerDeriv::DubarC, c)?;
            use crate::norms::BandKind as NB;
            use PointWeight::*;
            let mut lhs = aggregated_sq(
                &dubarc,
                &idx1,
                RegionFamily { speed: SpeedSel::One, kind: NB::R },
                &WeightExpr::one(),
                &AggSpec::new((AggOp::L2, AggIndex::Band(BandLabel::R)), (AggOp::L2, AggIndex::Tau)),
                c,
            )?;
            lhs += aggregated_sq(
                &dubarc,
                &idx1,
                RegionFamily { speed: SpeedSel::One, kind: NB::Uc },
                &WeightExpr(vec![JapU(-0.5), RPow(0.5)]),
                &AggSpec::new((AggOp::LInf, AggIndex::Band(BandLabel::U)), (AggOp::L2, AggIndex::Tau)),
                c,
            )?;
            let boxw = box_of(w, bundle.w_forcing, params.forcing, c)?;
            let data = initial_slice_l2(&dubarc, &WeightExpr(vec![RPow(0.5)]), c);
            let rhs = data * data + strip_integral(&boxw, &dubarc, &WeightExpr(vec![RPow(1.0)]), c, true);
            Ok(mk(lhs, rhs, None, w.grid.nx, w.grid.dt))
        }
        EstimateId::E12 | EstimateId::E13 => {
            let w = bundle.w.ok_or_else(|| Error::Refused("estimate needs the W trace".into()))?;
            require_odd(w, "W")?;
            require_compact_support(w, "W")?;
            if id == EstimateId::E13 && !(c > 1.0) {
                return Err(Error::Refused(format!("mixed-speed Hardy bound requires c > 1, got {c}")));
            }
            let dubarc = s_abs_sum_inner(w, 0, InnerDeriv::DubarC, c)?;
            let sqrt2 = std::f64::consts::SQRT_2;
            let lhs = if id == EstimateId::E12 {
                // whole-line L2 of r^{-1} W over the strip
                sqrt2 * strip_integral(w, w, &WeightExpr(vec![PointWeight::RPow(-1.0)]), c, false).sqrt()
            } else {
                let idx1 = RegionIndex::build(w, 1.0)?;
                let sq = aggregated_sq(
                    w,
                    &idx1,
                    RegionFamily { speed: SpeedSel::One, kind: crate::norms::BandKind::Uc },
                    &WeightExpr(vec![PointWeight::JapU(-0.5), PointWeight::RPow(-0.5)]),
                    &AggSpec::new((AggOp::LInf, AggIndex::Band(BandLabel::U)), (AggOp::L2, AggIndex::Tau)),
                    c,
                )?;
                sqrt2 * sq.sqrt()
            };
            let data = sqrt2 * initial_slice_l2(w, &WeightExpr(vec![PointWeight::RPow(-0.5)]), c);
            let bulk = sqrt2 * strip_integral(&dubarc, &dubarc, &WeightExpr::one(), c, false).sqrt();
            let rhs = data + bulk;
            Ok(mk(lhs, rhs, None, w.grid.nx, w.grid.dt))
        }
        _ => unreachable!("per-region ids handled above"),
    }
}

// ---------------------------------------------------------------------------
// Family audits
// ---------------------------------------------------------------------------

/// One row of an audit table: the worst ratio for an entry across a family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub id: EstimateId,
    pub p: Option<u8>,
    pub c: f64,
    /// Worst finite-ratio report, if any member produced one.
    pub worst: Option<EstimateReport>,
    /// `(member label, reason)` for refused members.
    pub refused: Vec<(String, String)>,
    pub degenerate_count: usize,
}

/// Audits the listed entries over a family of trace bundles; for E9/E10
/// both p = 0 and p = 1 rows are produced.
pub fn audit_family(ids: &[EstimateId], family: &[TraceBundle<'_>], params: &EstimateParams) -> Result<Vec<AuditRow>> {
    if family.is_empty() {
        return Err(Error::Parameter("audit family must be nonempty".into()));
    }
    let mut rows = Vec::new();
    for &id in ids {
        let p_values: &[u8] = if id.takes_p() { &[0, 1] } else { &[0] };
        for &p in p_values {
            let mut worst: Option<EstimateReport> = None;
            let mut refused = Vec::new();
            let mut degenerate_count = 0usize;
            let mut c_seen = f64::NAN;
            for bundle in family {
                c_seen = bundle.c;
                let prm = EstimateParams { p, ..params.clone() };
                match check_estimate(id, bundle, &prm) {
                    Ok(rep) => {
                        if rep.degenerate {
                            degenerate_count += 1;
                        } else if worst.as_ref().map_or(true, |w| rep.ratio > w.ratio) {
                            worst = Some(rep);
                        }
                    }
                    Err(Error::Refused(reason)) => refused.push((bundle.label.to_string(), reason)),
                    Err(e) => return Err(e),
                }
            }
            rows.push(AuditRow { id, p: id.takes_p().then_some(p), c: c_seen, worst, refused, degenerate_count });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Shipped family
// ---------------------------------------------------------------------------

/// Owned solution set for audits.
pub struct FamilyMember {
    pub label: String,
    pub v: Option<SpaceTimeTrace>,
    pub w: Option<SpaceTimeTrace>,
    pub v_forcing: Option<SpaceTimeTrace>,
    pub w_forcing: Option<SpaceTimeTrace>,
    pub c: f64,
}

impl FamilyMember {
    pub fn bundle(&self) -> TraceBundle<'_> {
        TraceBundle {
            label: &self.label,
            v: self.v.as_ref(),
            w: self.w.as_ref(),
            v_forcing: self.v_forcing.as_ref(),
            w_forcing: self.w_forcing.as_ref(),
            c: self.c,
        }
    }
}

/// Grid parameters for the shipped audit family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditGrid {
    pub t_end: f64,
    pub dx: f64,
    pub cfl: f64,
}

impl Default for AuditGrid {
    fn default() -> Self {
        AuditGrid { t_end: 16.0, dx: 1.0 / 32.0, cfl: 0.8 }
    }
}

impl AuditGrid {
    pub fn build(&self, c: f64) -> Result<crate::geometry::Grid> {
        let x_max = c * self.t_end + 1.0;
        let mut nx = (2.0 * x_max / self.dx).ceil() as usize;
        nx += nx % 2;
        crate::geometry::Grid::with_cfl(x_max, nx, self.t_end, self.cfl, c, 1)
    }

    pub fn refined(&self) -> AuditGrid {
        AuditGrid { dx: self.dx / 2.0, ..self.clone() }
    }
}

/// Builds the shipped audit family at speed `c`: exact split waves at two
/// amplitudes, a solver-evolved outgoing pair, and two coupled solves with
/// recorded forcing.
pub fn default_family(c: f64, spec: &AuditGrid) -> Result<Vec<FamilyMember>> {
    use crate::system::{solve_coupled, CoupledOpts, DataFamily, ProfileSet};
    use crate::waveop::{manufactured_solution, solve_linear, Forcing, Manufactured, SolveOpts};

    let grid = spec.build(c)?;
    let mut members = Vec::new();

    for amp in [0.5, 0.2] {
        let kv = Manufactured::SplitBump { speed: 1.0, amplitude: amp };
        let kw = Manufactured::SplitBump { speed: c, amplitude: amp };
        members.push(FamilyMember {
            label: format!("split-{amp}"),
            v: Some(manufactured_solution(&kv, &grid, 1)?),
            w: Some(manufactured_solution(&kw, &grid, 1)?),
            v_forcing: None,
            w_forcing: None,
            c,
        });
    }

    {
        let kv = Manufactured::DalembertBump { center: 0.5, width: 0.4, speed: 1.0, amplitude: 0.3 };
        let kw = Manufactured::DalembertBump { center: 0.5, width: 0.4, speed: c, amplitude: 0.3 };
        let sv = solve_linear(&kv.initial_data(&grid), Forcing::None, 1.0, &grid, &SolveOpts::default())?;
        let sw = solve_linear(&kw.initial_data(&grid), Forcing::None, c, &grid, &SolveOpts::default())?;
        members.push(FamilyMember {
            label: "outgoing-pair".into(),
            v: Some(sv.trace),
            w: Some(sw.trace),
            v_forcing: None,
            w_forcing: None,
            c,
        });
    }

    for (set, eps, label) in
        [(ProfileSet::Bump, 0.2, "coupled-bump"), (ProfileSet::Pessimal, 0.5, "coupled-pessimal")]
    {
        let fam = DataFamily::new(set, eps)?;
        let opts = CoupledOpts { record_forcing: true, ..Default::default() };
        let sol = solve_coupled(&fam, c, &grid, &opts)?;
        members.push(FamilyMember {
            label: label.into(),
            v: Some(sol.v),
            w: Some(sol.w),
            v_forcing: sol.v_forcing,
            w_forcing: sol.w_forcing,
            c,
        });
    }

    Ok(members)
}

// ---------------------------------------------------------------------------
// Regression pins
// ---------------------------------------------------------------------------

/// Regression bounds for the shipped family at c = 2, pinned at twice the
/// first measured maxima (see the acceptance suite).  `verify` runs fail
/// when a measured worst ratio exceeds its pin.
pub mod pins {
    use super::EstimateId;

    /// `(id, p, bound)`; `p` only meaningful for E9/E10.  Measured on the
    /// default audit grid (t_end 16, dx 1/32) at c = 2, doubled.
    pub const PINNED_RATIO_BOUNDS: [(EstimateId, Option<u8>, f64); 15] = [
        (EstimateId::E1, None, 0.0755),
        (EstimateId::E2, None, 0.0135),
        (EstimateId::E3, None, 0.0145),
        (EstimateId::E4, None, 0.0067),
        (EstimateId::E5, None, 0.0352),
        (EstimateId::E6, None, 0.0227),
        (EstimateId::E7, None, 0.0084),
        (EstimateId::E8, None, 0.0053),
        (EstimateId::E9, Some(0), 2.482),
        (EstimateId::E9, Some(1), 10.172),
        (EstimateId::E10, Some(0), 2.427),
        (EstimateId::E10, Some(1), 9.319),
        (EstimateId::E11, None, 0.999),
        (EstimateId::E12, None, 9.353),
        (EstimateId::E13, None, 1.366),
    ];

    pub fn bound(id: EstimateId, p: Option<u8>) -> Option<f64> {
        PINNED_RATIO_BOUNDS.iter().find(|(i, q, _)| *i == id && *q == p).map(|(_, _, b)| *b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;
    use crate::waveop::{manufactured_solution, solve_linear, Forcing, Manufactured, SolveOpts};

    fn grid(c: f64, t_end: f64, nx_per_unit: f64) -> Grid {
        let x_max = c * t_end + 1.0;
        let mut nx = (2.0 * x_max * nx_per_unit) as usize;
        nx += nx % 2;
        Grid::with_cfl(x_max, nx, t_end, 0.8, c, 1).unwrap()
    }

    fn w_bundle<'a>(w: &'a SpaceTimeTrace, c: f64) -> TraceBundle<'a> {
        TraceBundle { label: "w", v: None, w: Some(w), v_forcing: None, w_forcing: None, c }
    }

    #[test]
    fn zero_trace_is_degenerate() {
        let c = 2.0;
        let g = grid(c, 12.0, 16.0);
        let z = SpaceTimeTrace::zeros(g.clone(), Some(c), 1, Parity::Odd);
        let rep = check_estimate(EstimateId::E12, &w_bundle(&z, c), &EstimateParams::default()).unwrap();
        assert!(rep.degenerate);
        assert!(rep.ratio.is_none());
    }

    #[test]
    fn e13_requires_speed_gap_and_e12_oddness() {
        let c = 2.0;
        let g = grid(c, 12.0, 16.0);
        let kw = Manufactured::SplitBump { speed: c, amplitude: 0.3 };
        let w = manufactured_solution(&kw, &g, 1).unwrap();
        let mut bundle = w_bundle(&w, c);
        bundle.c = 1.0;
        match check_estimate(EstimateId::E13, &bundle, &EstimateParams::default()) {
            Err(Error::Refused(msg)) => assert!(msg.contains("c > 1")),
            other => panic!("expected refusal, got {other:?}"),
        }
        let mut even = w.clone();
        even.parity = Parity::Even;
        let b2 = w_bundle(&even, c);
        assert!(matches!(check_estimate(EstimateId::E12, &b2, &EstimateParams::default()), Err(Error::Refused(_))));
    }

    #[test]
    fn support_violation_refused() {
        let c = 2.0;
        let g = grid(c, 12.0, 16.0);
        let kw = Manufactured::StandingWave { k: std::f64::consts::PI / g.x_max, speed: c, amplitude: 0.3 };
        let w = manufactured_solution(&kw, &g, 1).unwrap();
        assert!(matches!(
            check_estimate(EstimateId::E12, &w_bundle(&w, c), &EstimateParams::default()),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn e12_finite_and_refinement_stable() {
        let c = 2.0;
        let mut ratios = Vec::new();
        for lvl in 0..2 {
            let g = grid(c, 12.0, 32.0 * (1 << lvl) as f64);
            let kw = Manufactured::DalembertBump { center: 0.5, width: 0.4, speed: c, amplitude: 0.3 };
            let w = solve_linear(&kw.initial_data(&g), Forcing::None, c, &g, &SolveOpts::default()).unwrap().trace;
            let rep = check_estimate(EstimateId::E12, &w_bundle(&w, c), &EstimateParams::default()).unwrap();
            ratios.push(rep.ratio.expect("nondegenerate"));
        }
        let rel = (ratios[0] - ratios[1]).abs() / ratios[1];
        assert!(rel < 0.10, "E12 ratios {ratios:?} rel {rel}");
    }

    #[test]
    fn e9_recorded_forcing_matches_box_residual() {
        // On a forced linear wave the recorded-forcing RHS and the
        // box-residual RHS agree to discretization accuracy.
        let g = grid(1.0, 12.0, 32.0);
        let f = |t: f64, x: f64| {
            let s: f64 = t - 4.0;
            if x.abs() < 1.0 {
                x * (-0.5 * s).exp()
            } else {
                0.0
            }
        };
        let opts = SolveOpts { record_forcing: true, ..Default::default() };
        let sol = solve_linear(&crate::waveop::InitialData::zero(&g), Forcing::Fn(&f), 1.0, &g, &opts).unwrap();
        let base = TraceBundle {
            label: "forced",
            v: Some(&sol.trace),
            w: None,
            v_forcing: sol.forcing.as_ref(),
            w_forcing: None,
            c: 2.0,
        };
        let rec =
            check_estimate(EstimateId::E9, &base, &EstimateParams { forcing: ForcingSource::Recorded, ..Default::default() })
                .unwrap();
        let boxr = check_estimate(
            EstimateId::E9,
            &base,
            &EstimateParams { forcing: ForcingSource::BoxResidual, ..Default::default() },
        )
        .unwrap();
        let rel = (rec.rhs - boxr.rhs).abs() / rec.rhs;
        assert!(rel < 2e-2, "recorded {} vs box {} rel {rel}", rec.rhs, boxr.rhs);
    }

    #[test]
    fn amplitude_invariance_of_ratios() {
        let c = 2.0;
        let g = grid(c, 12.0, 16.0);
        for id in [EstimateId::E3, EstimateId::E12, EstimateId::E13] {
            let mut ratios = Vec::new();
            for amp in [0.1, 1.0] {
                // a slow traveling profile keeps content inside the speed-1
                // cone, which the mixed-speed left side integrates over
                let kw = Manufactured::DalembertBump { center: 0.5, width: 0.4, speed: 1.0, amplitude: amp };
                let w = manufactured_solution(&kw, &g, 1).unwrap();
                let rep = check_estimate(id, &w_bundle(&w, c), &EstimateParams::default()).unwrap();
                ratios.push(rep.ratio.unwrap());
            }
            let rel: f64 = (ratios[0] - ratios[1]).abs() / ratios[1];
            assert!(rel < 1e-10, "{id:?} ratios {ratios:?}");
        }
        // E9: both sides degree 2 when the forcing is derived from the trace
        let kv = Manufactured::SplitBump { speed: 1.0, amplitude: 1.0 };
        let v1 = manufactured_solution(&kv, &g, 1).unwrap();
        let mut v2 = v1.clone();
        for s in v2.samples.iter_mut() {
            *s *= 3.0;
        }
        let b1 = TraceBundle { label: "a", v: Some(&v1), w: None, v_forcing: None, w_forcing: None, c };
        let b2 = TraceBundle { label: "b", v: Some(&v2), w: None, v_forcing: None, w_forcing: None, c };
        let p = EstimateParams { forcing: ForcingSource::BoxResidual, ..Default::default() };
        let r1 = check_estimate(EstimateId::E9, &b1, &p).unwrap().ratio.unwrap();
        let r2 = check_estimate(EstimateId::E9, &b2, &p).unwrap().ratio.unwrap();
        assert!((r1 - r2).abs() / r1 < 1e-10, "E9 scale invariance {r1} {r2}");
    }

    #[test]
    fn audit_family_trivial() {
        let c = 2.0;
        // single zero config: all degenerate
        let g = grid(c, 12.0, 8.0);
        let zv = SpaceTimeTrace::zeros(g.clone(), Some(1.0), 1, Parity::Odd);
        let zw = SpaceTimeTrace::zeros(g.clone(), Some(c), 1, Parity::Odd);
        let fam = [TraceBundle { label: "zero", v: Some(&zv), w: Some(&zw), v_forcing: None, w_forcing: None, c }];
        let rows = audit_family(&ALL_ESTIMATES, &fam, &EstimateParams::default()).unwrap();
        for row in &rows {
            assert!(row.worst.is_none(), "{:?} unexpectedly nondegenerate", row.id);
            assert_eq!(row.degenerate_count, 1);
        }
        assert!(audit_family(&ALL_ESTIMATES, &[], &EstimateParams::default()).is_err());
    }

    #[test]
    fn e13_speed_gap_trend_reported() {
        // ratios at c in {1.1, 1.5, 2, 3}: finite at each speed; the c -> 1
        // degeneration shows as growth toward small gaps.  The test field is
        // a slow traveling profile, which rides inside the speed-1 cone and
        // nearly annihilates the speed-c good derivative as c -> 1.
        let mut ratios = Vec::new();
        for &c in &[1.1, 1.5, 2.0, 3.0] {
            let g = grid(c, 12.0, 16.0);
            let kw = Manufactured::DalembertBump { center: 0.5, width: 0.4, speed: 1.0, amplitude: 0.3 };
            let w = manufactured_solution(&kw, &g, 1).unwrap();
            let rep = check_estimate(EstimateId::E13, &w_bundle(&w, c), &EstimateParams::default()).unwrap();
            ratios.push(rep.ratio.unwrap());
        }
        assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0), "{ratios:?}");
        assert!(ratios[0] > ratios[3], "expected growth toward c -> 1: {ratios:?}");
    }
}
