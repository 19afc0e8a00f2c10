use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Written after a successful run so the outputs can be reproduced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_path: String,
    pub config: serde_json::Value,
    pub data_path: Option<String>,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    /// Writes `manifest.json` through a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join(".manifest.json.tmp");
        let dst = dir.join("manifest.json");
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        fs::rename(&tmp, &dst).with_context(|| format!("renaming to {}", dst.display()))?;
        Ok(())
    }
}
