//! Output-directory management: stage markers for `--resume`, and the
//! CSV + JSON twin convention for tabular outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct OutDir {
    root: PathBuf,
    resume: bool,
    config_hash: String,
}

impl OutDir {
    pub fn create(root: &Path, resume: bool, config_hash: String) -> std::io::Result<OutDir> {
        fs::create_dir_all(root)?;
        Ok(OutDir { root: root.to_path_buf(), resume, config_hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn marker(&self, stage: &str) -> PathBuf {
        self.root.join(format!(".stage_{stage}.done"))
    }

    /// True when `--resume` was given and the stage completed under the
    /// same config hash.
    pub fn stage_done(&self, stage: &str) -> bool {
        if !self.resume {
            return false;
        }
        fs::read_to_string(self.marker(stage)).map(|h| h.trim() == self.config_hash).unwrap_or(false)
    }

    pub fn mark_stage(&self, stage: &str) -> std::io::Result<()> {
        fs::write(self.marker(stage), &self.config_hash)
    }

    pub fn write_json(&self, name: &str, value: &serde_json::Value) -> std::io::Result<()> {
        let mut f = fs::File::create(self.path(name))?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")
    }

    /// One-line-header CSV plus a JSON twin of the same rows.
    pub fn write_table(&self, base: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut csv = String::new();
        csv.push_str(&header.join(","));
        csv.push('\n');
        for row in rows {
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        fs::write(self.path(&format!("{base}.csv")), csv)?;
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (k, v) in header.iter().zip(row) {
                    let val = if let Ok(i) = v.parse::<i64>() {
                        serde_json::json!(i)
                    } else if let Ok(f) = v.parse::<f64>() {
                        serde_json::json!(f)
                    } else if v.is_empty() {
                        serde_json::Value::Null
                    } else {
                        serde_json::json!(v)
                    };
                    obj.insert(k.to_string(), val);
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        self.write_json(&format!("{base}.json"), &serde_json::Value::Array(json_rows))
    }
}
