//! Artifact writers. Every emitted file carries the experiment manifest:
//! JSON documents embed a `manifest` object, CSV files start with
//! `# digest / # version / # seed` comment lines, and grid dumps store the
//! digest, version, and seed inside the binary header.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Manifest;
use crate::fail::{CliFail, CliResult};

/// Serializes `value` as one JSON line to `out`, or to stdout when no path
/// was given. Returns the files written.
pub fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<Vec<PathBuf>> {
    let mut line = serde_json::to_string(value)
        .map_err(|e| CliFail::Io(format!("serializing output: {e}")))?;
    line.push('\n');
    match out {
        None => {
            print!("{line}");
            Ok(vec![])
        }
        Some(path) => {
            std::fs::write(path, line)
                .map_err(|e| CliFail::Io(format!("writing {}: {e}", path.display())))?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

/// Builds a CSV document: manifest comments, header row, then data rows
/// rendered by `render` into a reused row buffer.
pub fn csv_document<T>(
    manifest: &Manifest,
    header: &str,
    rows: &[T],
    render: impl Fn(&T, &mut String),
) -> String {
    let mut text = String::new();
    text.push_str(&format!("# digest: {}\n", manifest.digest));
    text.push_str(&format!("# version: {}\n", manifest.version));
    text.push_str(&format!("# seed: {}\n", manifest.seed));
    text.push_str(header);
    text.push('\n');
    let mut row = String::new();
    for item in rows {
        row.clear();
        render(item, &mut row);
        text.push_str(&row);
        text.push('\n');
    }
    text
}

/// Writes a prebuilt text document to `out` or stdout.
pub fn emit_text(out: Option<&Path>, text: &str) -> CliResult<Vec<PathBuf>> {
    match out {
        None => {
            print!("{text}");
            Ok(vec![])
        }
        Some(path) => {
            std::fs::write(path, text)
                .map_err(|e| CliFail::Io(format!("writing {}: {e}", path.display())))?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

/// Grid dump format identifier; bump when the layout changes.
pub const GRID_MAGIC: &[u8; 8] = b"RILABGR1";
/// Quantization grid: levels in `(0, u_max]` map to `1..=2^20`.
pub const GRID_STEPS: u32 = 1 << 20;
/// Sentinel for sites still vacant at `u_max` (level `+infinity`).
pub const GRID_VACANT: u32 = u32::MAX;

/// Everything a grid dump records besides the manifest.
pub struct GridDump<'a> {
    pub lo: &'a [i64],
    pub extent: &'a [u32],
    pub u_max: f64,
    pub trajectories: u64,
    pub bias_bound: f64,
    pub labels: &'a [f64],
}

/// Binary occupancy dump.
///
/// Layout (little-endian):
/// magic `RILABGR1`, dim `u32`, then per axis `lo i64` + `extent u32`,
/// `u_max f64`, trajectory count `u64`, total bias bound `f64`,
/// seed `u64`, 64 ASCII bytes of config digest, 16 ASCII bytes of
/// space-padded version, then one `u32` per site in grid order: the
/// occupancy level quantized upward onto `GRID_STEPS` steps of
/// `(0, u_max]`, or `GRID_VACANT` for never-occupied sites.
pub fn write_grid_dump(path: &Path, manifest: &Manifest, dump: &GridDump) -> CliResult<()> {
    let mut bytes: Vec<u8> = Vec::with_capacity(128 + 4 * dump.labels.len());
    bytes.extend_from_slice(GRID_MAGIC);
    bytes.extend_from_slice(&(dump.lo.len() as u32).to_le_bytes());
    for (l, e) in dump.lo.iter().zip(dump.extent) {
        bytes.extend_from_slice(&l.to_le_bytes());
        bytes.extend_from_slice(&e.to_le_bytes());
    }
    bytes.extend_from_slice(&dump.u_max.to_le_bytes());
    bytes.extend_from_slice(&dump.trajectories.to_le_bytes());
    bytes.extend_from_slice(&dump.bias_bound.to_le_bytes());
    bytes.extend_from_slice(&manifest.seed.to_le_bytes());
    bytes.extend_from_slice(manifest.digest.as_bytes());
    let mut version = manifest.version.clone();
    version.truncate(16);
    while version.len() < 16 {
        version.push(' ');
    }
    bytes.extend_from_slice(version.as_bytes());
    for &label in dump.labels {
        bytes.extend_from_slice(&quantize_level(label, dump.u_max).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliFail::Io(format!("creating {}: {e}", path.display())))?;
    file.write_all(&bytes)
        .map_err(|e| CliFail::Io(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Quantizes an occupancy level upward onto the dump grid, so a site
/// reconstructed as vacant at `u` really was vacant at `u`.
pub fn quantize_level(label: f64, u_max: f64) -> u32 {
    if !label.is_finite() || label > u_max {
        return GRID_VACANT;
    }
    if u_max <= 0.0 {
        return GRID_VACANT;
    }
    let steps = (label / u_max * GRID_STEPS as f64).ceil();
    (steps as u32).clamp(1, GRID_STEPS)
}
