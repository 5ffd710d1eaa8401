//! Binary trace persistence.
//!
//! Layout: a 64-byte fixed header followed by the samples as little-endian
//! f64, level-major.  A JSON sidecar at `<path>.json` carries provenance
//! (producing config, operator word of derived traces, blowup marker, ...).
//!
//! ```text
//! offset  size  field
//! 0       5     magic "MSWL1"
//! 5       1     format version (1)
//! 6       1     parity code (0 none, 1 odd, 2 even)
//! 7       1     reserved (0)
//! 8       8     nx        (u64 le)
//! 16      8     nt_stored (u64 le)
//! 24      8     stride    (u64 le)
//! 32      8     dx        (f64 le)
//! 40      8     dt        (f64 le)
//! 48      8     t_start   (f64 le)
//! 56      8     c         (f64 le; NaN = derived field)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::waveop::{BlowupMarker, Parity, SpaceTimeTrace};

pub const MAGIC: &[u8; 5] = b"MSWL1";
pub const FORMAT_VERSION: u8 = 1;

fn parity_code(p: Parity) -> u8 {
    match p {
        Parity::None => 0,
        Parity::Odd => 1,
        Parity::Even => 2,
    }
}

fn parity_from_code(code: u8) -> Result<Parity> {
    match code {
        0 => Ok(Parity::None),
        1 => Ok(Parity::Odd),
        2 => Ok(Parity::Even),
        other => Err(Error::Validation(format!("unknown parity code {other}"))),
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes the trace and its JSON sidecar (`<path>.json`).
pub fn write_trace(path: &Path, trace: &SpaceTimeTrace, provenance: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = [0u8; 64];
    header[0..5].copy_from_slice(MAGIC);
    header[5] = FORMAT_VERSION;
    header[6] = parity_code(trace.parity);
    header[8..16].copy_from_slice(&(trace.grid.nx as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(trace.n_levels() as u64).to_le_bytes());
    header[24..32].copy_from_slice(&(trace.stride as u64).to_le_bytes());
    header[32..40].copy_from_slice(&trace.grid.dx.to_le_bytes());
    header[40..48].copy_from_slice(&trace.grid.dt.to_le_bytes());
    header[48..56].copy_from_slice(&trace.grid.t_start.to_le_bytes());
    header[56..64].copy_from_slice(&trace.speed.unwrap_or(f64::NAN).to_le_bytes());
    w.write_all(&header)?;
    for v in &trace.samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;

    let mut side = provenance.clone();
    if !side.is_object() {
        side = serde_json::json!({});
    }
    let obj = side.as_object_mut().unwrap();
    obj.insert("t_end".into(), serde_json::json!(trace.grid.t_end));
    obj.insert("x_max".into(), serde_json::json!(trace.grid.x_max));
    obj.insert("n_steps".into(), serde_json::json!(trace.grid.n_steps));
    if let Some(b) = trace.blowup {
        obj.insert("blowup".into(), serde_json::json!({ "time": b.time, "step": b.step }));
    } else {
        obj.insert("blowup".into(), serde_json::Value::Null);
    }
    let mut f = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut f, &side)?;
    f.flush()?;
    Ok(())
}

/// Reads a trace and its sidecar back.
pub fn read_trace(path: &Path) -> Result<(SpaceTimeTrace, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 64];
    r.read_exact(&mut header)?;
    if &header[0..5] != MAGIC {
        return Err(Error::Validation("bad magic; not a trace file".into()));
    }
    if header[5] != FORMAT_VERSION {
        return Err(Error::Validation(format!("unsupported trace format version {}", header[5])));
    }
    let parity = parity_from_code(header[6])?;
    let nx = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let nt = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let stride = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
    let dx = f64::from_le_bytes(header[32..40].try_into().unwrap());
    let dt = f64::from_le_bytes(header[40..48].try_into().unwrap());
    let t_start = f64::from_le_bytes(header[48..56].try_into().unwrap());
    let c = f64::from_le_bytes(header[56..64].try_into().unwrap());

    let mut buf = vec![0u8; nt * nx * 8];
    r.read_exact(&mut buf)?;
    let samples: Vec<f64> = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();

    let sc = sidecar_path(path);
    let sidecar: serde_json::Value = if sc.exists() {
        serde_json::from_reader(BufReader::new(File::open(&sc)?))?
    } else {
        serde_json::Value::Null
    };

    let (t_end, n_steps) = match (&sidecar["t_end"], &sidecar["n_steps"]) {
        (serde_json::Value::Number(te), serde_json::Value::Number(ns)) => {
            (te.as_f64().unwrap(), ns.as_u64().unwrap() as usize)
        }
        // no sidecar: reconstruct the nominal span from the stored levels
        _ => (t_start + ((nt - 1) * stride) as f64 * dt, (nt - 1) * stride),
    };
    let x_max = sidecar["x_max"].as_f64().unwrap_or(nx as f64 * dx / 2.0);

    let grid = Grid { x_max, nx, dx, t_start, t_end, dt, n_steps };
    let blowup = sidecar["blowup"].as_object().map(|b| BlowupMarker {
        time: b["time"].as_f64().unwrap_or(f64::NAN),
        step: b["step"].as_u64().unwrap_or(0) as usize,
    });
    let trace = SpaceTimeTrace {
        grid,
        speed: if c.is_nan() { None } else { Some(c) },
        stride,
        parity,
        samples,
        blowup,
    };
    Ok((trace, sidecar))
}
