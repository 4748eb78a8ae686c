//! Plot-ready CSV tables with deterministic formatting.
//!
//! Every emitted table starts with `#` comment lines naming the build and
//! the generating config hash, then a header row. Float cells use Rust's
//! shortest round-trip formatting, so identical inputs produce identical
//! bytes regardless of thread count.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Build identifier stamped into every table and manifest.
pub fn build_id() -> String {
    format!("erw/{}", env!("CARGO_PKG_VERSION"))
}

/// FNV-1a 64-bit hash, hex-encoded. Used for config hashes and artifact
/// checksums in manifests.
pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, text: impl Into<String>) -> &mut Self {
        self.comments.push(text.into());
        self
    }

    /// Standard provenance comments: build id and config hash.
    pub fn stamp(&mut self, config_hash: &str) -> &mut Self {
        let build = build_id();
        self.comment(format!("build={build}"));
        self.comment(format!("config_fnv1a64={config_hash}"));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Write the table and return (bytes written, checksum).
    pub fn write(&self, path: &Path) -> Result<(u64, String)> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        let bytes = self.to_bytes();
        fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok((bytes.len() as u64, fnv1a64(&bytes)))
    }
}

/// An experiment's emitted artifacts, for the manifest.
#[derive(Debug, Clone)]
pub struct ArtifactRecord {
    pub name: String,
    pub bytes: u64,
    pub checksum: String,
}

/// Write `manifest.csv` listing every artifact with its checksum.
pub fn write_manifest(
    dir: &Path,
    config_hash: &str,
    experiment: &str,
    mut artifacts: Vec<ArtifactRecord>,
) -> Result<()> {
    artifacts.sort_by(|a, b| a.name.cmp(&b.name));
    let mut table = Table::new(&["artifact", "bytes", "fnv1a64"]);
    table.stamp(config_hash);
    table.comment(format!("experiment={experiment}"));
    for a in &artifacts {
        table.row(vec![a.name.clone(), a.bytes.to_string(), a.checksum.clone()]);
    }
    table.write(&dir.join("manifest.csv"))?;
    Ok(())
}
