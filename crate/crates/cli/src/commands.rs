//! Subcommand implementations.

use std::path::Path;

use mswl_core::error::Error as CoreError;
use mswl_core::estimates::{self, AuditRow, EstimateId, EstimateParams};
use mswl_core::lifespan::{self, LifespanRecord, Outcome, SweepConfig};
use mswl_core::norms::TERM_IDS;
use mswl_core::system::{self, CoupledOpts, PicardOpts};
use mswl_core::tracefile;

use crate::config::ExperimentConfig;
use crate::outdir::OutDir;

/// Command outcome beyond plain success, mapped to exit codes by `main`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// A requested check was refused everywhere (exit 3).
    Refused,
    /// A pinned regression bound was exceeded (exit 4).
    RegressionViolation,
}

pub type CmdResult = Result<Verdict, CoreError>;

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &OutDir) -> CmdResult {
    if out.stage_done("simulate") {
        eprintln!("simulate: stage already complete, skipping (resume)");
        return Ok(Verdict::Ok);
    }
    let fam = cfg.data.family()?;
    let provisional = cfg.grid.build(cfg.system.c, 1)?;
    let stride = cfg.simulate.resolve_stride(&provisional);
    let grid = cfg.grid.build(cfg.system.c, stride)?;
    let opts = CoupledOpts {
        stride,
        blowup_threshold: None,
        forcing_time: cfg.system.forcing_time,
        record_forcing: cfg.simulate.record_forcing,
        nonlinearity: true,
    };
    let sol = system::solve_coupled(&fam, cfg.system.c, &grid, &opts)?;

    let prov = cfg.provenance();
    if cfg.simulate.write_traces {
        tracefile::write_trace(&out.path("V.trace"), &sol.v, &prov)?;
        tracefile::write_trace(&out.path("W.trace"), &sol.w, &prov)?;
        if let (Some(fv), Some(fw)) = (&sol.v_forcing, &sol.w_forcing) {
            tracefile::write_trace(&out.path("V_forcing.trace"), fv, &prov)?;
            tracefile::write_trace(&out.path("W_forcing.trace"), fw, &prov)?;
        }
    }
    if cfg.simulate.reconstruct {
        let (v3, w3) = system::reconstruct_3d(&sol.v, &sol.w)?;
        tracefile::write_trace(&out.path("v_radial.trace"), &v3, &prov)?;
        tracefile::write_trace(&out.path("w_radial.trace"), &w3, &prov)?;
    }

    let max_v = sol.v.max_abs();
    let max_w = sol.w.max_abs();
    let summary = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(cfg).unwrap(),
        "nx": grid.nx,
        "dt": grid.dt,
        "n_steps": grid.n_steps,
        "threshold": sol.threshold,
        "blowup": sol.blowup.map(|b| serde_json::json!({ "time": b.time, "step": b.step })),
        "max_abs_v": max_v,
        "max_abs_w": max_w,
        "parity_violation_v": sol.v.parity_violation(),
        "parity_violation_w": sol.w.parity_violation(),
        "trivial": max_v == 0.0 && max_w == 0.0,
    });
    out.write_json("summary.json", &summary)?;
    out.mark_stage("simulate")?;
    if let Some(b) = sol.blowup {
        eprintln!("simulate: blowup at t = {:.6}", b.time);
    } else {
        eprintln!("simulate: survived to t = {}", grid.t_end);
    }
    Ok(Verdict::Ok)
}

// ---------------------------------------------------------------------------
// iterate
// ---------------------------------------------------------------------------

pub fn cmd_iterate(cfg: &ExperimentConfig, out: &OutDir) -> CmdResult {
    if out.stage_done("iterate") {
        eprintln!("iterate: stage already complete, skipping (resume)");
        return Ok(Verdict::Ok);
    }
    let fam = cfg.data.family()?;
    let grid = cfg.grid.build(cfg.system.c, 1)?;
    let opts = PicardOpts {
        j_max: cfg.iterate.j_max,
        k_used: cfg.system.k_used,
        compute_norms: true,
        blowup_threshold: None,
        spill_dir: None,
    };
    let ledger = system::picard_iterate(&fam, cfg.system.c, &grid, &opts)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for row in &ledger.rows {
        let mut line = vec![row.j.to_string()];
        match &row.m_report {
            Some(m) => {
                for t in m.terms {
                    line.push(fmt(t));
                }
                line.push(fmt(m.total));
            }
            None => line.extend(std::iter::repeat(String::new()).take(13)),
        }
        line.push(row.a_value.map(fmt).unwrap_or_default());
        line.push(row.contraction_ratio.map(fmt).unwrap_or_default());
        line.push(row.blowup.map(fmt).unwrap_or_default());
        rows.push(line);
        if let Some(q) = row.contraction_ratio {
            eprintln!("iterate: j = {}  A = {:.6e}  ratio = {:.4}", row.j, row.a_value.unwrap(), q);
        }
    }
    let mut header: Vec<&str> = vec!["j"];
    let term_names: Vec<String> = TERM_IDS.iter().map(|t| format!("M_{}", t.name())).collect();
    header.extend(term_names.iter().map(|s| s.as_str()));
    header.extend(["M", "A", "contraction_ratio", "blowup"]);
    out.write_table("ledger", &header, &rows)?;

    let ledger_json = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(cfg).unwrap(),
        "k_used": ledger.k_used,
        "rows": ledger.rows.iter().map(|r| serde_json::json!({
            "j": r.j,
            "M_terms": r.m_report.as_ref().map(|m| m.terms.to_vec()),
            "M": r.m_report.as_ref().map(|m| m.total),
            "A": r.a_value,
            "contraction_ratio": r.contraction_ratio,
            "blowup": r.blowup,
        })).collect::<Vec<_>>(),
    });
    out.write_json("ledger.json", &ledger_json)?;

    if let Some(baseline) = &cfg.iterate.baseline {
        let text = std::fs::read_to_string(baseline)?;
        let base: serde_json::Value = serde_json::from_str(&text)?;
        let base_k = base["k_used"].as_u64().unwrap_or(u64::MAX) as usize;
        if base_k != ledger.k_used {
            return Err(CoreError::Refused(format!(
                "baseline ledger used k = {base_k}, this run used k = {}; comparing mixed-k reports is refused",
                ledger.k_used
            )));
        }
        eprintln!("iterate: baseline comparison OK (k = {})", ledger.k_used);
    }

    out.mark_stage("iterate")?;
    Ok(Verdict::Ok)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn requested_estimates(cfg: &ExperimentConfig) -> Result<Vec<EstimateId>, CoreError> {
    if cfg.verify.estimates.is_empty() {
        return Ok(estimates::ALL_ESTIMATES.to_vec());
    }
    cfg.verify
        .estimates
        .iter()
        .map(|s| {
            EstimateId::from_name(s)
                .ok_or_else(|| CoreError::Parameter(format!("unknown estimate id `{s}`")))
        })
        .collect()
}

fn audit_rows_to_table(rows: &[AuditRow]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["id", "p", "c", "config", "lhs", "rhs", "ratio", "nx", "dt", "degenerate", "refused"];
    let table = rows
        .iter()
        .map(|row| {
            let mut line = vec![
                row.id.name().to_string(),
                row.p.map(|p| p.to_string()).unwrap_or_default(),
                format!("{}", row.c),
            ];
            match &row.worst {
                Some(rep) => {
                    line.push(rep.label.clone());
                    line.push(fmt(rep.lhs));
                    line.push(fmt(rep.rhs));
                    line.push(rep.ratio.map(fmt).unwrap_or_default());
                    line.push(rep.nx.to_string());
                    line.push(format!("{:.6e}", rep.dt));
                }
                None => line.extend(std::iter::repeat(String::new()).take(6)),
            }
            line.push(row.degenerate_count.to_string());
            line.push(row.refused.len().to_string());
            line
        })
        .collect();
    (header, table)
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &OutDir) -> CmdResult {
    let ids = requested_estimates(cfg)?;
    let c = cfg.system.c;
    let spec = estimates::AuditGrid { t_end: cfg.verify.t_end, dx: cfg.verify.dx, cfl: cfg.grid.cfl };
    let params = EstimateParams { enlargement: cfg.verify.enlargement, ..Default::default() };

    eprintln!("verify: building the audit family at c = {c}");
    let family = build_family(c, &spec)?;
    let bundles: Vec<_> = family.iter().map(|m| m.bundle()).collect();
    let rows = estimates::audit_family(&ids, &bundles, &params)?;

    let (header, table) = audit_rows_to_table(&rows);
    out.write_table("audit", &header, &table)?;

    let mut violations = Vec::new();
    let mut measured_any = false;
    for row in &rows {
        if let Some(rep) = &row.worst {
            measured_any = true;
            if let (Some(ratio), Some(bound)) = (rep.ratio, estimates::pins::bound(row.id, row.p)) {
                let status = if ratio > bound { "VIOLATION" } else { "ok" };
                eprintln!(
                    "verify: {}{} worst ratio {:.4} (pin {:.4}) {}",
                    row.id.name(),
                    row.p.map(|p| format!(" p={p}")).unwrap_or_default(),
                    ratio,
                    bound,
                    status
                );
                if ratio > bound {
                    violations.push(row.id);
                }
            }
        }
        for (label, reason) in &row.refused {
            eprintln!("verify: {} refused on {label}: {reason}", row.id.name());
        }
    }

    if cfg.verify.speed_gap {
        let mut gap_rows = Vec::new();
        for &gap_c in &cfg.verify.speed_gap_speeds {
            let fam = build_family(gap_c, &spec)?;
            let bundles: Vec<_> = fam.iter().map(|m| m.bundle()).collect();
            let rows = estimates::audit_family(&[EstimateId::E13], &bundles, &params)?;
            gap_rows.extend(rows);
        }
        let (header, table) = audit_rows_to_table(&gap_rows);
        out.write_table("speed_gap", &header, &table)?;
        eprintln!("verify: mixed-speed Hardy ratios written for c in {:?}", cfg.verify.speed_gap_speeds);
    }

    out.write_json(
        "verify_summary.json",
        &serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": serde_json::to_value(cfg).unwrap(),
            "violations": violations.iter().map(|v| v.name()).collect::<Vec<_>>(),
            "measured_any": measured_any,
        }),
    )?;

    if !violations.is_empty() {
        return Ok(Verdict::RegressionViolation);
    }
    if !measured_any {
        return Ok(Verdict::Refused);
    }
    Ok(Verdict::Ok)
}

/// The shipped family; coupled members need c > 1 and are skipped (with a
/// note) for audits at unit-or-below speed.
fn build_family(c: f64, spec: &estimates::AuditGrid) -> Result<Vec<estimates::FamilyMember>, CoreError> {
    if c > 1.0 {
        estimates::default_family(c, spec)
    } else {
        use mswl_core::waveop::{manufactured_solution, Manufactured};
        eprintln!("verify: c = {c} <= 1, coupled members skipped (free members only)");
        let grid = spec.build(c.max(1.0))?;
        let mut members = Vec::new();
        for amp in [0.5, 0.2] {
            let kv = Manufactured::SplitBump { speed: 1.0, amplitude: amp };
            let kw = Manufactured::SplitBump { speed: c, amplitude: amp };
            members.push(estimates::FamilyMember {
                label: format!("split-{amp}"),
                v: Some(manufactured_solution(&kv, &grid, 1)?),
                w: Some(manufactured_solution(&kw, &grid, 1)?),
                v_forcing: None,
                w_forcing: None,
                c,
            });
        }
        Ok(members)
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn records_table(records: &[LifespanRecord]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["epsilon", "t_star", "censored", "threshold", "nx", "dt", "confirmed"];
    let rows = records
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.epsilon),
                r.t_star().map(|t| format!("{t}")).unwrap_or_default(),
                (r.t_star().is_none() as u8).to_string(),
                fmt(r.threshold),
                r.nx.to_string(),
                format!("{:.6e}", r.dt),
                r.refinement_confirmed.map(|b| b.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    (header, rows)
}

fn parse_replay(path: &Path) -> Result<Vec<LifespanRecord>, CoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 2 {
            return Err(CoreError::Validation(format!("replay line {} malformed", i + 1)));
        }
        let epsilon: f64 = cols[0]
            .parse()
            .map_err(|_| CoreError::Validation(format!("replay line {}: bad epsilon", i + 1)))?;
        let outcome = if cols[1].trim().is_empty() {
            Outcome::Survived
        } else {
            Outcome::BlewUp(
                cols[1]
                    .parse()
                    .map_err(|_| CoreError::Validation(format!("replay line {}: bad t_star", i + 1)))?,
            )
        };
        records.push(LifespanRecord {
            epsilon,
            outcome,
            threshold: 0.0,
            nx: 0,
            dt: 0.0,
            refinement_confirmed: None,
            t_star_refined: None,
        });
    }
    Ok(records)
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &OutDir) -> CmdResult {
    let records = if let Some(replay) = &cfg.sweep.replay {
        eprintln!("sweep: replaying records from {replay}");
        parse_replay(Path::new(replay))?
    } else if out.stage_done("sweep-runs") {
        eprintln!("sweep: runs already complete, reloading (resume)");
        parse_replay(&out.path("records.csv"))?
    } else {
        let sc = SweepConfig {
            set: cfg.data.family,
            c: cfg.system.c,
            epsilons: cfg.sweep.epsilons.clone(),
            horizon: cfg.sweep.horizon,
            threshold_factor: cfg.system.threshold_factor,
            dx: cfg.sweep.dx,
            cfl: cfg.grid.cfl,
            stride: cfg.sweep.stride,
            confirm: cfg.sweep.confirm,
            workers: rayon::current_num_threads(),
        };
        let recs = lifespan::sweep(&sc)?;
        let (header, rows) = records_table(&recs);
        out.write_table("records", &header, &rows)?;
        out.mark_stage("sweep-runs")?;
        recs
    };

    for r in &records {
        match r.t_star() {
            Some(t) => eprintln!("sweep: eps = {}  T* = {t:.4}  confirmed = {:?}", r.epsilon, r.refinement_confirmed),
            None => eprintln!("sweep: eps = {}  survived", r.epsilon),
        }
    }

    let fit = lifespan::fit_exp_law(&records)?;
    let comparison = lifespan::competing_law_test(&records).ok();
    out.write_json(
        "fit.json",
        &serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": serde_json::to_value(cfg).unwrap(),
            "fit": serde_json::to_value(&fit).unwrap(),
            "competing_laws": comparison.as_ref().map(|c| serde_json::to_value(c).unwrap()),
        }),
    )?;

    // plot-ready pairs (eps^{-2}, log T*)
    let pairs: Vec<Vec<String>> = records
        .iter()
        .filter_map(|r| r.t_star().map(|t| vec![format!("{}", r.epsilon.powi(-2)), format!("{}", t.ln())]))
        .collect();
    out.write_table("pairs", &["inv_eps_sq", "log_t_star"], &pairs)?;

    if fit.sufficient {
        eprintln!("sweep: slope = {:.3}  r^2 = {:.5}  ({} finite, {} censored)", fit.c_tilde, fit.r_squared, fit.n_points, fit.censored_count);
    } else {
        eprintln!("sweep: insufficient finite blowups for a fit ({} finite)", fit.n_points);
    }
    if let Some(cmp) = &comparison {
        eprintln!("sweep: law ranking winner = {:?}", cmp.winner);
    }
    Ok(Verdict::Ok)
}

// ---------------------------------------------------------------------------
// regions / info
// ---------------------------------------------------------------------------

pub fn cmd_regions(cfg: &ExperimentConfig, out: &OutDir) -> CmdResult {
    let regions =
        mswl_core::geometry::enumerate_regions(cfg.system.c, cfg.regions.horizon, cfg.regions.enlargement)?;
    let json = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(cfg).unwrap(),
        "regions": regions.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
    });
    out.write_json("regions.json", &json)?;
    eprintln!("regions: {} regions written", regions.len());
    Ok(Verdict::Ok)
}

pub fn cmd_info(cfg: &ExperimentConfig) -> CmdResult {
    println!("mswl {}", env!("CARGO_PKG_VERSION"));
    println!("threads: {}", rayon::current_num_threads());
    println!();
    println!("presets:");
    for (name, desc) in crate::config::PRESETS {
        println!("  {name:<16} {desc}");
    }
    println!();
    println!("pinned regression bounds (worst audit ratio, shipped family):");
    for (id, p, bound) in estimates::pins::PINNED_RATIO_BOUNDS {
        let p_tag = p.map(|p| format!(" p={p}")).unwrap_or_default();
        println!("  {:<4}{p_tag:<5} {bound}", id.name());
    }
    println!();
    println!("current config hash: {}", cfg.hash());
    Ok(Verdict::Ok)
}
