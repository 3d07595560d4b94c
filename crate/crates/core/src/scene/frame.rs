//! Binary frame files and the run manifest.
//!
//! A frame is little-endian: the magic `LGCP`, then `version`, `dim`, `n_fluid`
//! and `n_solid` as `u32`, `time` as `f64`, then fluid positions, fluid
//! velocities and solid positions as `f64`, `dim` components per entry.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::integrator::System;
use crate::{Error, Result};

pub const FRAME_MAGIC: [u8; 4] = *b"LGCP";
pub const FRAME_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub dim: u32,
    pub time: f64,
    /// Flattened `n_fluid × dim`.
    pub fluid_positions: Vec<f64>,
    pub fluid_velocities: Vec<f64>,
    /// Flattened `n_solid × dim`.
    pub solid_positions: Vec<f64>,
}

impl FrameRecord {
    pub fn from_system<const D: usize>(sys: &System<D>) -> Self {
        let flat = |v: &[crate::Vector<D>]| v.iter().flat_map(|x| x.iter().copied()).collect::<Vec<f64>>();
        Self {
            dim: D as u32,
            time: sys.time,
            fluid_positions: flat(&sys.fluid.positions),
            fluid_velocities: flat(&sys.fluid.velocities),
            solid_positions: flat(&sys.solid.positions),
        }
    }

    pub fn n_fluid(&self) -> usize {
        self.fluid_positions.len() / self.dim as usize
    }

    pub fn n_solid(&self) -> usize {
        self.solid_positions.len() / self.dim as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.fluid_positions.len() * 2 + self.solid_positions.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
        out.extend_from_slice(&FRAME_MAGIC);
        for v in [FRAME_VERSION, self.dim, self.n_fluid() as u32, self.n_solid() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.time.to_le_bytes());
        for v in self.fluid_positions.iter().chain(&self.fluid_velocities).chain(&self.solid_positions) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |offset: usize, reason: &str| Error::Frame { offset, reason: reason.to_string() };
        if bytes.len() < HEADER_LEN {
            return Err(bad(bytes.len(), "truncated header"));
        }
        if bytes[..4] != FRAME_MAGIC {
            return Err(bad(0, "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FRAME_VERSION {
            return Err(bad(4, &format!("unsupported version {version}")));
        }
        let dim = u32_at(8);
        if dim != 2 && dim != 3 {
            return Err(bad(8, &format!("dimension {dim}")));
        }
        let (nf, ns) = (u32_at(12) as usize, u32_at(16) as usize);
        let time = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let d = dim as usize;
        let expected = HEADER_LEN + 8 * d * (2 * nf + ns);
        if bytes.len() != expected {
            return Err(bad(bytes.len().min(expected), &format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let mut values = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
        Ok(Self {
            dim,
            time,
            fluid_positions: take(nf * d),
            fluid_velocities: take(nf * d),
            solid_positions: take(ns * d),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn frame_file_name(frame: usize) -> String {
    format!("frame_{frame:05}.bin")
}

/// One manifest row: diagnostics over the steps since the previous frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub frame: usize,
    pub time: f64,
    pub steps: usize,
    /// `None` when no pair came within `d̂`.
    pub min_pair_distance: Option<f64>,
    pub mean_abs_j_minus_1: f64,
    pub momentum: Vec<f64>,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub line_search_failures: usize,
}

pub fn manifest_columns(dim: usize) -> Vec<&'static str> {
    let mut cols = vec!["frame", "time", "steps", "min_pair_distance", "mean_abs_j_minus_1", "momentum_x", "momentum_y"];
    if dim == 3 {
        cols.push("momentum_z");
    }
    cols.extend(["newton_iterations", "cg_iterations", "line_search_failures"]);
    cols
}

/// `manifest.csv`: a `# config_sha256=<hex>` line, the header, then one row per
/// frame, flushed as it is written.
pub struct ManifestWriter {
    out: BufWriter<File>,
}

impl ManifestWriter {
    pub fn create(path: &Path, config_hash: &str, dim: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# config_sha256={config_hash}")?;
        writeln!(out, "{}", manifest_columns(dim).join(","))?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn push(&mut self, row: &ManifestRow) -> Result<()> {
        let mut fields = vec![
            row.frame.to_string(),
            row.time.to_string(),
            row.steps.to_string(),
            row.min_pair_distance.map_or(String::new(), |d| d.to_string()),
            row.mean_abs_j_minus_1.to_string(),
        ];
        fields.extend(row.momentum.iter().map(|m| m.to_string()));
        fields.extend([row.newton_iterations, row.cg_iterations, row.line_search_failures].map(|v| v.to_string()));
        writeln!(self.out, "{}", fields.join(","))?;
        self.out.flush()?;
        Ok(())
    }
}

/// Parses a manifest written by [`ManifestWriter`]; returns the config hash and rows.
pub fn read_manifest(text: &str) -> Result<(String, Vec<ManifestRow>)> {
    let perr = |line: usize, message: String| Error::Parse { line, column: 1, message };
    let mut lines = text.lines().enumerate();
    let hash = match lines.next() {
        Some((_, l)) if l.starts_with("# config_sha256=") => l["# config_sha256=".len()..].to_string(),
        _ => return Err(perr(1, "missing config hash line".into())),
    };
    let header: Vec<&str> = match lines.next() {
        Some((_, l)) => l.split(',').collect(),
        None => return Err(perr(2, "missing header".into())),
    };
    let dim = if header.contains(&"momentum_z") { 3 } else { 2 };
    if header != manifest_columns(dim) {
        return Err(perr(2, "unexpected columns".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(perr(i + 1, format!("expected {} fields", header.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| perr(i + 1, format!("{}: {e}", header[k])));
        let int = |k: usize| f[k].parse::<usize>().map_err(|e| perr(i + 1, format!("{}: {e}", header[k])));
        rows.push(ManifestRow {
            frame: int(0)?,
            time: num(1)?,
            steps: int(2)?,
            min_pair_distance: if f[3].is_empty() { None } else { Some(num(3)?) },
            mean_abs_j_minus_1: num(4)?,
            momentum: (5..5 + dim).map(num).collect::<Result<_>>()?,
            newton_iterations: int(5 + dim)?,
            cg_iterations: int(6 + dim)?,
            line_search_failures: int(7 + dim)?,
        });
    }
    Ok((hash, rows))
}
