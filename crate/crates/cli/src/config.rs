//! Experiment configuration: typed sections, the flat key-value text format
//! (JSON accepted as an alternative), shipped presets, and config hashing
//! for resume support.
//!
//! The text format is sections of `key = value` lines:
//!
//! ```text
//! [data]
//! family = bump
//! epsilon = 0.05
//!
//! [grid]
//! t_end = 12
//! dx = 0.015625
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mswl_core::system::{ForcingTime, ProfileSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub t_end: f64,
    /// Spatial step; ignored when `nx` is set.
    pub dx: f64,
    pub cfl: f64,
    /// Explicit cell count (overrides `dx`).
    pub nx: Option<usize>,
    /// Half-width; `null` sizes the domain to the support cone.
    pub x_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { t_end: 12.0, dx: 1.0 / 64.0, cfl: 0.8, nx: None, x_max: None }
    }
}

impl GridConfig {
    pub fn build(&self, c: f64, stride: usize) -> mswl_core::Result<mswl_core::Grid> {
        let x_max = self.x_max.unwrap_or(c * self.t_end + 1.0);
        let nx = match self.nx {
            Some(nx) => nx,
            None => {
                let mut nx = (2.0 * x_max / self.dx).ceil() as usize;
                nx += nx % 2;
                nx
            }
        };
        mswl_core::Grid::with_cfl(x_max, nx, self.t_end, self.cfl, c, stride)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub family: ProfileSet,
    pub epsilon: f64,
    pub seed: Option<u64>,
    pub perturbation: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { family: ProfileSet::Bump, epsilon: 0.05, seed: None, perturbation: 0.0 }
    }
}

impl DataConfig {
    pub fn family(&self) -> mswl_core::Result<mswl_core::system::DataFamily> {
        let mut fam = mswl_core::system::DataFamily::new(self.family, self.epsilon)?;
        fam.seed = self.seed;
        fam.perturbation = self.perturbation;
        Ok(fam)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub c: f64,
    pub k_used: usize,
    pub forcing_time: ForcingTime,
    /// Blowup threshold as a multiple of the initial amplitude.
    pub threshold_factor: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            c: 2.0,
            k_used: 2,
            forcing_time: ForcingTime::Lagged,
            threshold_factor: mswl_core::system::BLOWUP_THRESHOLD_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Storage stride; 0 applies the automatic policy (keep every level up
    /// to 1e6 samples, otherwise the smallest stride within 1e8 samples).
    pub stride: usize,
    pub record_forcing: bool,
    /// Also write the 3-d radial reconstruction.
    pub reconstruct: bool,
    pub write_traces: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { stride: 0, record_forcing: false, reconstruct: false, write_traces: true }
    }
}

impl SimulateConfig {
    /// Resolves stride 0 to the automatic policy for the given grid shape.
    pub fn resolve_stride(&self, grid: &mswl_core::Grid) -> usize {
        if self.stride == 0 {
            mswl_core::waveop::auto_stride(grid)
        } else {
            self.stride
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterateConfig {
    pub j_max: usize,
    /// Ledger JSON of a previous run to compare against (same k required).
    pub baseline: Option<String>,
}

impl Default for IterateConfig {
    fn default() -> Self {
        IterateConfig { j_max: 8, baseline: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Registry entries to audit; empty = all thirteen.
    pub estimates: Vec<String>,
    pub t_end: f64,
    pub dx: f64,
    pub enlargement: f64,
    /// Also report the mixed-speed Hardy entry at several speed gaps.
    pub speed_gap: bool,
    pub speed_gap_speeds: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            estimates: Vec::new(),
            t_end: 16.0,
            dx: 1.0 / 32.0,
            enlargement: mswl_core::geometry::DEFAULT_ENLARGEMENT,
            speed_gap: false,
            speed_gap_speeds: vec![1.1, 1.5, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    pub dx: f64,
    pub stride: usize,
    pub confirm: bool,
    /// Fit previously recorded rows from this CSV instead of running.
    pub replay: Option<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = mswl_core::lifespan::SweepConfig::default();
        SweepSection {
            epsilons: d.epsilons,
            horizon: d.horizon,
            dx: d.dx,
            stride: d.stride,
            confirm: d.confirm,
            replay: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsConfig {
    pub horizon: f64,
    pub enlargement: f64,
}

impl Default for RegionsConfig {
    fn default() -> Self {
        RegionsConfig { horizon: 64.0, enlargement: 1.0 }
    }
}

/// Full experiment configuration; a run's config is embedded in every
/// output artifact.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub data: DataConfig,
    pub system: SystemConfig,
    pub simulate: SimulateConfig,
    pub iterate: IterateConfig,
    pub verify: VerifyConfig,
    pub sweep: SweepSection,
    pub regions: RegionsConfig,
}

impl ExperimentConfig {
    /// Canonical JSON with the crate version attached.
    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": serde_json::to_value(self).expect("config serializes"),
        })
    }

    /// Hash used by `--resume` stage markers.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        format!("{:x}", h.finalize())
    }
}

// ---------------------------------------------------------------------------
// Flat key-value parser
// ---------------------------------------------------------------------------

fn parse_scalar(raw: &str) -> serde_json::Value {
    let s = raw.trim();
    if s.eq_ignore_ascii_case("true") {
        return serde_json::Value::Bool(true);
    }
    if s.eq_ignore_ascii_case("false") {
        return serde_json::Value::Bool(false);
    }
    if s.eq_ignore_ascii_case("null") || s.eq_ignore_ascii_case("none") {
        return serde_json::Value::Null;
    }
    if let Ok(i) = s.parse::<i64>() {
        return serde_json::json!(i);
    }
    if let Ok(f) = s.parse::<f64>() {
        return serde_json::json!(f);
    }
    serde_json::Value::String(s.trim_matches('"').to_string())
}

fn parse_value(raw: &str) -> serde_json::Value {
    let s = raw.trim();
    if s.contains(',') {
        return serde_json::Value::Array(s.split(',').map(parse_scalar).collect());
    }
    parse_scalar(s)
}

/// Parses the flat section format (or JSON when the text starts with `{`)
/// over the defaults.  Unknown sections or keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, String> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return serde_json::from_str(trimmed).map_err(|e| format!("JSON config: {e}"));
    }
    let mut root = serde_json::to_value(ExperimentConfig::default()).unwrap();
    let mut section: Option<String> = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if root.get(&name).is_none() {
                return Err(format!("line {}: unknown section [{name}]", ln + 1));
            }
            section = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = value`", ln + 1));
        };
        let Some(sec) = &section else {
            return Err(format!("line {}: key outside any [section]", ln + 1));
        };
        let key = key.trim();
        let slot = root
            .get_mut(sec)
            .and_then(|s| s.as_object_mut())
            .ok_or_else(|| format!("line {}: bad section {sec}", ln + 1))?;
        if !slot.contains_key(key) {
            return Err(format!("line {}: unknown key `{key}` in [{sec}]", ln + 1));
        }
        let mut parsed = parse_value(value);
        // single values for list-typed keys become one-element lists
        if slot[key].is_array() && !parsed.is_array() && !parsed.is_null() {
            parsed = serde_json::Value::Array(vec![parsed]);
        }
        slot.insert(key.to_string(), parsed);
    }
    serde_json::from_value(root).map_err(|e| format!("config: {e}"))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

pub const PRESETS: &[(&str, &str)] = &[
    ("quick-sim", "a short coupled solve of the bump family"),
    ("golden-sim", "the reproducibility reference run (fixed nx = 1024)"),
    ("contraction", "eight iterates with norms at the contracting amplitude"),
    ("estimate-audit", "the shipped five-member audit family at c = 2"),
    ("speed-gap-audit", "the mixed-speed Hardy entry across speed gaps"),
    ("lifespan-sweep", "amplitude sweep of the pessimal family with fits"),
];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    match name {
        "quick-sim" => {
            cfg.grid = GridConfig { t_end: 12.0, dx: 1.0 / 64.0, ..Default::default() };
            cfg.data.epsilon = 0.05;
        }
        "golden-sim" => {
            cfg.grid = GridConfig { t_end: 12.0, nx: Some(1024), ..Default::default() };
            cfg.data.epsilon = 0.05;
            cfg.simulate.reconstruct = true;
        }
        "contraction" => {
            cfg.grid = GridConfig { t_end: 24.0, dx: 1.0 / 16.0, ..Default::default() };
            cfg.data.epsilon = 0.1;
            cfg.iterate.j_max = 8;
            cfg.system.k_used = 2;
        }
        "estimate-audit" => {
            cfg.verify = VerifyConfig::default();
        }
        "speed-gap-audit" => {
            cfg.verify.estimates = vec!["E13".into()];
            cfg.verify.speed_gap = true;
        }
        "lifespan-sweep" => {
            cfg.sweep = SweepSection::default();
        }
        _ => return None,
    }
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_format_round_trip() {
        let text = r#"
# comment
[data]
family = pessimal
epsilon = 0.25
seed = 11

[grid]
t_end = 10
nx = 512

[sweep]
epsilons = 4.0, 3.5, 3.0
confirm = false
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.data.family, ProfileSet::Pessimal);
        assert_eq!(cfg.data.epsilon, 0.25);
        assert_eq!(cfg.data.seed, Some(11));
        assert_eq!(cfg.grid.nx, Some(512));
        assert_eq!(cfg.sweep.epsilons, vec![4.0, 3.5, 3.0]);
        assert!(!cfg.sweep.confirm);
    }

    #[test]
    fn json_alternative_accepted() {
        let cfg = parse_config(r#"{ "data": { "epsilon": 0.5 } }"#).unwrap();
        assert_eq!(cfg.data.epsilon, 0.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("[data]\nepsilonn = 1\n").is_err());
        assert!(parse_config("[nope]\nx = 1\n").is_err());
        assert!(parse_config("loose = 1\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.data.epsilon = 0.06;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn presets_exist() {
        for (name, _) in PRESETS {
            assert!(preset(name).is_some(), "missing preset {name}");
        }
        assert!(preset("nope").is_none());
    }
}
