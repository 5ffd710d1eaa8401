//! Weighted space-time L2 norms over dyadic regions and their sequence-norm
//! aggregation; assembly of the twelve-term solution norm and of the
//! iteration difference norm.
//!
//! Region integrals are midpoint sums over grid cells whose centers satisfy
//! the region membership predicate, with trapezoid end-weights in time.
//! Boundary cells are therefore assigned whole to one region, which keeps
//! the plain regions an exact partition of the in-cone cells: summing all
//! per-region integrals of one speed family reproduces the global in-cone
//! integral to round-off.  All spatial integrals run over the x > 0 half
//! (the `L^2_r` convention); whole-line callers scale by sqrt(2).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_point, jap, DyadicRegion, RegionKind};
use crate::scalecalc::{s_abs_sum_inner, InnerDeriv};
use crate::waveop::SpaceTimeTrace;

// ---------------------------------------------------------------------------
// Point weights
// ---------------------------------------------------------------------------

/// One factor of a pointwise weight, evaluated at (t, r) with the system
/// speed c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PointWeight {
    /// `r^a`
    RPow(f64),
    /// `<r>^a`
    JapR(f64),
    /// `<t - r>^a`
    JapU(f64),
    /// `<t + r>^a`
    JapUbar(f64),
    /// `<c t - r>^a`
    JapUc(f64),
    /// `<c t + r>^a`
    JapUbarC(f64),
}

/// Product of point-weight factors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightExpr(pub Vec<PointWeight>);

impl WeightExpr {
    pub fn one() -> WeightExpr {
        WeightExpr(Vec::new())
    }

    #[inline]
    pub fn eval(&self, t: f64, r: f64, c: f64) -> f64 {
        let mut w = 1.0;
        for f in &self.0 {
            w *= match *f {
                PointWeight::RPow(a) => r.powf(a),
                PointWeight::JapR(a) => jap(r).powf(a),
                PointWeight::JapU(a) => jap(t - r).powf(a),
                PointWeight::JapUbar(a) => jap(t + r).powf(a),
                PointWeight::JapUc(a) => jap(c * t - r).powf(a),
                PointWeight::JapUbarC(a) => jap(c * t + r).powf(a),
            };
        }
        w
    }
}

// ---------------------------------------------------------------------------
// Region families, keys, aggregation
// ---------------------------------------------------------------------------

/// Which decomposition speed a term integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedSel {
    One,
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandKind {
    R,
    Uc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionFamily {
    pub speed: SpeedSel,
    pub kind: BandKind,
}

impl RegionFamily {
    pub fn speed_value(&self, c: f64) -> f64 {
        match self.speed {
            SpeedSel::One => 1.0,
            SpeedSel::Coupled => c,
        }
    }

    /// Sequence-norm subscript this family answers to.
    pub fn band_label(&self) -> BandLabel {
        match (self.kind, self.speed) {
            (BandKind::R, _) => BandLabel::R,
            (BandKind::Uc, SpeedSel::One) => BandLabel::U,
            (BandKind::Uc, SpeedSel::Coupled) => BandLabel::Uc,
        }
    }
}

/// Dyadic index label as written in sequence norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandLabel {
    R,
    U,
    Uc,
}

/// Map key `(tau, band value)`; bit order equals numeric order for the
/// positive finite values that occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionKey {
    tau_bits: u64,
    value_bits: u64,
}

impl RegionKey {
    pub fn new(tau: f64, value: f64) -> RegionKey {
        debug_assert!(tau > 0.0 && value >= 0.0);
        RegionKey { tau_bits: tau.to_bits(), value_bits: value.to_bits() }
    }

    pub fn tau(&self) -> f64 {
        f64::from_bits(self.tau_bits)
    }

    pub fn value(&self) -> f64 {
        f64::from_bits(self.value_bits)
    }
}

/// Per-region values of one band family (unsquared norms).
#[derive(Debug, Clone)]
pub struct RegionValues {
    pub family: RegionFamily,
    pub values: BTreeMap<RegionKey, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggOp {
    L2,
    LInf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggIndex {
    Tau,
    Band(BandLabel),
}

/// A two-index aggregation word; the inner pair applies first, matching the
/// right-to-left reading of the written norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggSpec {
    pub outer: (AggOp, AggIndex),
    pub inner: (AggOp, AggIndex),
}

impl AggSpec {
    pub const fn new(outer: (AggOp, AggIndex), inner: (AggOp, AggIndex)) -> AggSpec {
        AggSpec { outer, inner }
    }
}

fn index_is_band(ix: AggIndex) -> bool {
    matches!(ix, AggIndex::Band(_))
}

/// Aggregates per-region values: the inner index collapses first (sum of
/// squares for L2, sup for LInf), then the outer one; returns the square
/// root.
pub fn aggregate(values: &RegionValues, spec: &AggSpec) -> Result<f64> {
    if index_is_band(spec.inner.1) == index_is_band(spec.outer.1) {
        return Err(Error::Validation("aggregation word must use one tau index and one band index".into()));
    }
    for ix in [spec.inner.1, spec.outer.1] {
        if let AggIndex::Band(label) = ix {
            if label != values.family.band_label() {
                return Err(Error::Validation(format!(
                    "aggregation index {label:?} does not match the region family {:?}",
                    values.family
                )));
            }
        }
    }
    let inner_by_band = index_is_band(spec.inner.1);
    let mut grouped: BTreeMap<u64, f64> = BTreeMap::new();
    for (key, v) in &values.values {
        let group = if inner_by_band { key.tau_bits } else { key.value_bits };
        let sq = v * v;
        let slot = grouped.entry(group).or_insert(match spec.inner.0 {
            AggOp::L2 => 0.0,
            AggOp::LInf => 0.0,
        });
        match spec.inner.0 {
            AggOp::L2 => *slot += sq,
            AggOp::LInf => *slot = slot.max(sq),
        }
    }
    let mut acc = 0.0f64;
    for v in grouped.values() {
        match spec.outer.0 {
            AggOp::L2 => acc += v,
            AggOp::LInf => acc = acc.max(*v),
        }
    }
    Ok(acc.sqrt())
}

// ---------------------------------------------------------------------------
// Region integrals
// ---------------------------------------------------------------------------

/// Cell measure: `dx * dt_store`, halved at the first and last stored level.
#[inline]
fn cell_weight(level: usize, n_levels: usize, dx: f64, dts: f64) -> f64 {
    let tw = if level == 0 || level == n_levels - 1 { 0.5 } else { 1.0 };
    tw * dx * dts
}

/// Weighted L2 over a single region (`L^2_r`: x > 0 half only): midpoint
/// cell sum of `weight^2 field^2`.  Returns `(value, empty)`.
pub fn region_weighted_l2(
    field: &SpaceTimeTrace,
    region: &DyadicRegion,
    weight: &WeightExpr,
    c: f64,
) -> Result<(f64, bool)> {
    let grid = &field.grid;
    if grid.nx < 4 || field.n_levels() < 2 {
        return Err(Error::Validation("field too small to integrate".into()));
    }
    let n = field.n_levels();
    let dts = field.dt_store();
    let mut acc = 0.0;
    let mut hit = false;
    for k in 0..n {
        let t = field.level_time(k);
        let (t_lo, t_hi, closed) = region.t_interval();
        if t < t_lo || t > t_hi || (!closed && t >= t_hi) {
            continue;
        }
        let cw = cell_weight(k, n, grid.dx, dts);
        let row = field.level(k);
        for i in grid.nx / 2..grid.nx {
            let r = grid.x(i);
            if region.contains(t, r) {
                hit = true;
                let w = weight.eval(t, r, c);
                let v = row[i];
                acc += w * w * v * v * cw;
            }
        }
    }
    Ok((acc.sqrt(), !hit))
}

/// Classification of the positive-x cells of a trace's grid against one
/// decomposition speed; `None` marks out-of-cone cells.
pub struct RegionIndex {
    pub speed: f64,
    /// `(kind, tau, value)` per (level, positive node), level-major.
    pub cells: Vec<Option<(RegionKind, f64, f64)>>,
    pub n_levels: usize,
    pub n_pos: usize,
}

impl RegionIndex {
    pub fn build(template: &SpaceTimeTrace, speed: f64) -> Result<RegionIndex> {
        let grid = &template.grid;
        let n = template.n_levels();
        let n_pos = grid.nx - grid.nx / 2;
        let t_max = template.level_time(n - 1);
        let mut cells = Vec::with_capacity(n * n_pos);
        for k in 0..n {
            let t = template.level_time(k);
            for i in grid.nx / 2..grid.nx {
                let r = grid.x(i);
                let cl = classify_point(t, r, speed, t_max)?;
                cells.push(cl.map(|reg| (reg.kind, reg.tau, reg.value)));
            }
        }
        Ok(RegionIndex { speed, cells, n_levels: n, n_pos })
    }
}

/// One pass over the in-cone cells of `field`: accumulates
/// `weight^2 field^2` per region of the requested kind, and returns the
/// per-region (unsquared) L2 values.
///
/// Level chunks are integrated in parallel and merged in level order, so
/// the result is independent of the worker count.
pub fn family_region_l2(
    field: &SpaceTimeTrace,
    index: &RegionIndex,
    kind: RegionKind,
    weight: &WeightExpr,
    c: f64,
) -> Result<BTreeMap<RegionKey, f64>> {
    let grid = &field.grid;
    let n = field.n_levels();
    if n != index.n_levels || grid.nx - grid.nx / 2 != index.n_pos {
        return Err(Error::Validation("region index does not match the field shape".into()));
    }
    let dts = field.dt_store();
    let level_pass = |k: usize, acc: &mut BTreeMap<RegionKey, f64>| {
        let t = field.level_time(k);
        let cw = cell_weight(k, n, grid.dx, dts);
        let row = field.level(k);
        for (pi, i) in (grid.nx / 2..grid.nx).enumerate() {
            if let Some((ck, tau, value)) = index.cells[k * index.n_pos + pi] {
                if ck == kind {
                    let r = grid.x(i);
                    let w = weight.eval(t, r, c);
                    let v = row[i];
                    *acc.entry(RegionKey::new(tau, value)).or_insert(0.0) += w * w * v * v * cw;
                }
            }
        }
    };
    const CHUNK: usize = 256;
    let partials: Vec<BTreeMap<RegionKey, f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut acc = BTreeMap::new();
            for k in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                level_pass(k, &mut acc);
            }
            acc
        })
        .collect();
    let mut acc: BTreeMap<RegionKey, f64> = BTreeMap::new();
    for partial in partials {
        for (key, v) in partial {
            *acc.entry(key).or_insert(0.0) += v;
        }
    }
    Ok(acc.into_iter().map(|(k, v)| (k, v.sqrt())).collect())
}

/// Partition check data: per-region squared integrals over the full
/// decomposition (all three kinds) plus the global in-cone squared integral.
pub fn partition_decomposition(
    field: &SpaceTimeTrace,
    index: &RegionIndex,
    weight: &WeightExpr,
    c: f64,
) -> Result<(BTreeMap<(u8, RegionKey), f64>, f64)> {
    let grid = &field.grid;
    let n = field.n_levels();
    if n != index.n_levels {
        return Err(Error::Validation("region index shape mismatch".into()));
    }
    let dts = field.dt_store();
    let mut per: BTreeMap<(u8, RegionKey), f64> = BTreeMap::new();
    let mut global = 0.0;
    for k in 0..n {
        let t = field.level_time(k);
        let cw = cell_weight(k, n, grid.dx, dts);
        let row = field.level(k);
        for (pi, i) in (grid.nx / 2..grid.nx).enumerate() {
            if let Some((ck, tau, value)) = index.cells[k * index.n_pos + pi] {
                let r = grid.x(i);
                let w = weight.eval(t, r, c);
                let contrib = w * w * row[i] * row[i] * cw;
                let kind_tag = match ck {
                    RegionKind::RBand => 0u8,
                    RegionKind::UcBand => 1,
                    RegionKind::Outer => 2,
                };
                *per.entry((kind_tag, RegionKey::new(tau, value))).or_insert(0.0) += contrib;
                global += contrib;
            }
        }
    }
    Ok((per, global))
}

// ---------------------------------------------------------------------------
// The twelve-term norm
// ---------------------------------------------------------------------------

/// Term identifiers of the solution norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum TermId {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
    XI,
    XII,
}

pub const TERM_IDS: [TermId; 12] = [
    TermId::I,
    TermId::II,
    TermId::III,
    TermId::IV,
    TermId::V,
    TermId::VI,
    TermId::VII,
    TermId::VIII,
    TermId::IX,
    TermId::X,
    TermId::XI,
    TermId::XII,
];

impl TermId {
    pub fn name(&self) -> &'static str {
        match self {
            TermId::I => "I",
            TermId::II => "II",
            TermId::III => "III",
            TermId::IV => "IV",
            TermId::V => "V",
            TermId::VI => "VI",
            TermId::VII => "VII",
            TermId::VIII => "VIII",
            TermId::IX => "IX",
            TermId::X => "X",
            TermId::XI => "XI",
            TermId::XII => "XII",
        }
    }

    pub fn index(&self) -> usize {
        TERM_IDS.iter().position(|t| t == self).unwrap()
    }
}

/// Which field of the pair a term measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseField {
    V,
    W,
}

/// Frozen description of one term of the solution norm.
#[derive(Debug, Clone)]
pub struct NormTerm {
    pub id: TermId,
    pub base: BaseField,
    pub inner: InnerDeriv,
    pub weight: WeightExpr,
    pub family: RegionFamily,
    pub agg: AggSpec,
    pub k_used: usize,
}

const LINF_BAND_L2_TAU_R: AggSpec =
    AggSpec::new((AggOp::LInf, AggIndex::Band(BandLabel::R)), (AggOp::L2, AggIndex::Tau));
const LINF_BAND_L2_TAU_U: AggSpec =
    AggSpec::new((AggOp::LInf, AggIndex::Band(BandLabel::U)), (AggOp::L2, AggIndex::Tau));
const LINF_BAND_L2_TAU_UC: AggSpec =
    AggSpec::new((AggOp::LInf, AggIndex::Band(BandLabel::Uc)), (AggOp::L2, AggIndex::Tau));
const L2_BAND_L2_TAU_R: AggSpec =
    AggSpec::new((AggOp::L2, AggIndex::Band(BandLabel::R)), (AggOp::L2, AggIndex::Tau));

/// The table of all twelve terms at a given S order.
///
/// X and XI use speed-1 bands for the speed-c field W, and XII uses speed-c
/// r-bands, exactly as the norm is written; the asymmetry is intentional.
pub fn term_table(k_used: usize) -> [NormTerm; 12] {
    use BandKind::*;
    use BaseField::*;
    use InnerDeriv::*;
    use PointWeight::*;
    use SpeedSel::*;
    let f = |speed, kind| RegionFamily { speed, kind };
    [
        NormTerm {
            id: TermId::I,
            base: V,
            inner: Du,
            weight: WeightExpr(vec![RPow(-0.25), JapR(-0.25), JapU(0.5)]),
            family: f(One, R),
            agg: LINF_BAND_L2_TAU_R,
            k_used,
        },
        NormTerm {
            id: TermId::II,
            base: V,
            inner: Du,
            weight: WeightExpr(vec![JapUc(-0.5), JapU(0.5)]),
            family: f(Coupled, Uc),
            agg: LINF_BAND_L2_TAU_UC,
            k_used,
        },
        NormTerm {
            id: TermId::III,
            base: V,
            inner: Dubar,
            weight: WeightExpr(vec![RPow(-0.25), JapR(-0.25), JapUbar(0.5)]),
            family: f(One, R),
            agg: LINF_BAND_L2_TAU_R,
            k_used,
        },
        NormTerm {
            id: TermId::IV,
            base: V,
            inner: Dubar,
            weight: WeightExpr(vec![JapUc(-0.5), JapUbar(0.5)]),
            family: f(Coupled, Uc),
            agg: LINF_BAND_L2_TAU_UC,
            k_used,
        },
        NormTerm {
            id: TermId::V,
            base: V,
            inner: Dubar,
            weight: WeightExpr(vec![JapU(-0.5), JapUbar(0.5)]),
            family: f(One, Uc),
            agg: LINF_BAND_L2_TAU_U,
            k_used,
        },
        NormTerm {
            id: TermId::VI,
            base: V,
            inner: Grad,
            weight: WeightExpr(vec![RPow(-0.25), JapR(-0.25)]),
            family: f(One, R),
            agg: LINF_BAND_L2_TAU_R,
            k_used,
        },
        NormTerm {
            id: TermId::VII,
            base: V,
            inner: Grad,
            weight: WeightExpr(vec![JapUc(-0.5)]),
            family: f(Coupled, Uc),
            agg: LINF_BAND_L2_TAU_UC,
            k_used,
        },
        NormTerm {
            id: TermId::VIII,
            base: V,
            inner: Dubar,
            weight: WeightExpr(vec![JapU(-0.5)]),
            family: f(One, Uc),
            agg: LINF_BAND_L2_TAU_U,
            k_used,
        },
        NormTerm {
            id: TermId::IX,
            base: W,
            inner: DubarC,
            weight: WeightExpr(vec![RPow(0.5), JapU(-0.5)]),
            family: f(One, Uc),
            agg: LINF_BAND_L2_TAU_U,
            k_used,
        },
        NormTerm {
            id: TermId::X,
            base: W,
            inner: Id,
            weight: WeightExpr(vec![RPow(-0.5), JapU(-0.5)]),
            family: f(One, Uc),
            agg: LINF_BAND_L2_TAU_U,
            k_used,
        },
        NormTerm {
            id: TermId::XI,
            base: W,
            inner: DubarC,
            weight: WeightExpr::one(),
            family: f(One, R),
            agg: L2_BAND_L2_TAU_R,
            k_used,
        },
        NormTerm {
            id: TermId::XII,
            base: W,
            inner: Id,
            weight: WeightExpr(vec![RPow(-1.0)]),
            family: f(Coupled, R),
            agg: L2_BAND_L2_TAU_R,
            k_used,
        },
    ]
}

/// Computed norm: the twelve term values, per-region breakdown, total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormReport {
    pub j: Option<usize>,
    pub k_used: usize,
    pub terms: [f64; 12],
    pub total: f64,
    /// `(term, tau, band value, region value)`.
    pub per_region: Vec<(String, f64, f64, f64)>,
}

impl NormReport {
    /// JSON form with named terms.
    pub fn to_json(&self) -> serde_json::Value {
        let mut terms = serde_json::Map::new();
        for (i, id) in TERM_IDS.iter().enumerate() {
            terms.insert(id.name().into(), serde_json::json!(self.terms[i]));
        }
        serde_json::json!({
            "j": self.j,
            "k_used": self.k_used,
            "terms": terms,
            "M": self.total,
            "per_region": self.per_region.iter().map(|(id, tau, value, v)| {
                serde_json::json!({ "term": id, "tau": tau, "value": value, "norm": v })
            }).collect::<Vec<_>>(),
        })
    }
}

fn check_pair(v: &SpaceTimeTrace, w: &SpaceTimeTrace) -> Result<()> {
    if v.grid != w.grid || v.stride != w.stride || v.n_levels() != w.n_levels() {
        return Err(Error::Validation("V and W traces do not share a grid".into()));
    }
    Ok(())
}

struct DerivedFields {
    v_du: SpaceTimeTrace,
    v_dubar: SpaceTimeTrace,
    v_grad: SpaceTimeTrace,
    w_dubarc: SpaceTimeTrace,
    w_id: SpaceTimeTrace,
}

fn derive_fields(v: &SpaceTimeTrace, w: &SpaceTimeTrace, c: f64, k_used: usize) -> Result<DerivedFields> {
    Ok(DerivedFields {
        v_du: s_abs_sum_inner(v, k_used, InnerDeriv::Du, c)?,
        v_dubar: s_abs_sum_inner(v, k_used, InnerDeriv::Dubar, c)?,
        v_grad: s_abs_sum_inner(v, k_used, InnerDeriv::Grad, c)?,
        w_dubarc: s_abs_sum_inner(w, k_used, InnerDeriv::DubarC, c)?,
        w_id: s_abs_sum_inner(w, k_used, InnerDeriv::Id, c)?,
    })
}

fn assemble_from_fields(
    fields: &DerivedFields,
    template: &SpaceTimeTrace,
    c: f64,
    k_used: usize,
) -> Result<NormReport> {
    let idx_one = RegionIndex::build(template, 1.0)?;
    let idx_c = RegionIndex::build(template, c)?;
    let table = term_table(k_used);
    let mut terms = [0.0f64; 12];
    let mut per_region = Vec::new();
    for (i, term) in table.iter().enumerate() {
        let field = match (term.base, term.inner) {
            (BaseField::V, InnerDeriv::Du) => &fields.v_du,
            (BaseField::V, InnerDeriv::Dubar) => &fields.v_dubar,
            (BaseField::V, InnerDeriv::Grad) => &fields.v_grad,
            (BaseField::W, InnerDeriv::DubarC) => &fields.w_dubarc,
            (BaseField::W, InnerDeriv::Id) => &fields.w_id,
            other => return Err(Error::Validation(format!("unexpected term field {other:?}"))),
        };
        let index = match term.family.speed {
            SpeedSel::One => &idx_one,
            SpeedSel::Coupled => &idx_c,
        };
        let kind = match term.family.kind {
            BandKind::R => RegionKind::RBand,
            BandKind::Uc => RegionKind::UcBand,
        };
        let values = family_region_l2(field, index, kind, &term.weight, c)?;
        for (key, val) in &values {
            per_region.push((term.id.name().to_string(), key.tau(), key.value(), *val));
        }
        let rv = RegionValues { family: term.family, values };
        terms[i] = aggregate(&rv, &term.agg)?;
    }
    let total = terms.iter().sum();
    Ok(NormReport { j: None, k_used, terms, total, per_region })
}

/// Assembles the twelve-term norm of a solution pair.
pub fn assemble_m(v: &SpaceTimeTrace, w: &SpaceTimeTrace, c: f64, k_used: usize) -> Result<NormReport> {
    check_pair(v, w)?;
    if !(c > 1.0) {
        return Err(Error::Parameter("the coupled speed must satisfy c > 1".into()));
    }
    let fields = derive_fields(v, w, c, k_used)?;
    assemble_from_fields(&fields, v, c, k_used)
}

/// Assembles the difference norm of consecutive iterates: the same twelve
/// terms applied to `(V_j - V_{j-1}, W_j - W_{j-1})`.
pub fn assemble_a(
    vj: &SpaceTimeTrace,
    wj: &SpaceTimeTrace,
    v_prev: &SpaceTimeTrace,
    w_prev: &SpaceTimeTrace,
    c: f64,
    k_used: usize,
) -> Result<NormReport> {
    check_pair(vj, wj)?;
    if vj.grid != v_prev.grid || vj.n_levels() != v_prev.n_levels() || wj.n_levels() != w_prev.n_levels() {
        return Err(Error::Validation("iterates do not share a grid".into()));
    }
    let mut dv = vj.clone();
    for (a, b) in dv.samples.iter_mut().zip(&v_prev.samples) {
        *a -= b;
    }
    let mut dw = wj.clone();
    for (a, b) in dw.samples.iter_mut().zip(&w_prev.samples) {
        *a -= b;
    }
    assemble_m(&dv, &dw, c, k_used)
}
