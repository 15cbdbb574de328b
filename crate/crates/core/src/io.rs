//! Image and raw-plane file formats shared by all modules.
//!
//! A field is persisted as three files sharing a stem:
//! `<stem>.json` (header), `<stem>.raw` (little-endian f32 planes, row-major)
//! and `<stem>.pgm` (8-bit binary P5 quicklook, min–max scaled).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub width: usize,
    pub height: usize,
    pub extent: [f64; 2],
    /// Plane names in file order.
    pub planes: Vec<String>,
    pub dtype: String,
    pub endian: String,
}

impl RawHeader {
    pub fn new(grid: Grid, planes: Vec<String>) -> Self {
        RawHeader {
            width: grid.width,
            height: grid.height,
            extent: grid.extent,
            planes,
            dtype: "f32".into(),
            endian: "little".into(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.width, self.height, self.extent)
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// 8-bit P5 PGM, min–max scaled. A constant field maps to 0.
pub fn pgm_bytes(field: &ScalarField2D) -> Vec<u8> {
    let finite = field.values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", field.width, field.height).into_bytes();
    out.extend(field.values.iter().map(|&v| {
        if !v.is_finite() || !(span > 0.0) {
            0u8
        } else {
            (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
        }
    }));
    out
}

/// Parses a P5 PGM, returning (width, height, pixels).
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let w: usize = fields[1].parse().ok()?;
    let h: usize = fields[2].parse().ok()?;
    let data = bytes.get(pos + 1..)?;
    (data.len() == w * h).then(|| (w, h, data.to_vec()))
}

pub fn raw_bytes(planes: &[&[f64]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(planes.iter().map(|p| p.len() * 4).sum());
    for plane in planes {
        for &v in plane.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn parse_raw(bytes: &[u8], n_planes: usize, plane_len: usize) -> Option<Vec<Vec<f64>>> {
    if bytes.len() != n_planes * plane_len * 4 {
        return None;
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Some(values.chunks(plane_len.max(1)).map(|c| c.to_vec()).collect())
}

/// Files written for one field, relative to the output directory.
pub fn field_file_names(stem: &str) -> [String; 3] {
    [
        format!("{stem}.json"),
        format!("{stem}.raw"),
        format!("{stem}.pgm"),
    ]
}

/// Writes `<dir>/<stem>.{json,raw,pgm}` and returns the written paths.
pub fn write_field(dir: &Path, stem: &str, field: &ScalarField2D) -> Result<Vec<PathBuf>> {
    let [json, raw, pgm] = field_file_names(stem);
    let header = RawHeader::new(field.grid(), vec![stem.to_string()]);
    let header_bytes = serde_json::to_vec_pretty(&header).expect("header serializes");
    let paths = vec![dir.join(json), dir.join(raw), dir.join(pgm)];
    write_bytes(&paths[0], &header_bytes)?;
    write_bytes(&paths[1], &raw_bytes(&[&field.values]))?;
    write_bytes(&paths[2], &pgm_bytes(field))?;
    Ok(paths)
}

pub fn read_field(dir: &Path, stem: &str) -> Result<ScalarField2D> {
    let [json, raw, _] = field_file_names(stem);
    let header_path = dir.join(json);
    let header: RawHeader = serde_json::from_slice(&read_bytes(&header_path)?)
        .map_err(|e| Error::format(&header_path, e.to_string()))?;
    let grid = header.grid()?;
    let raw_path = dir.join(raw);
    let mut planes = parse_raw(&read_bytes(&raw_path)?, 1, grid.len())
        .ok_or_else(|| Error::format(&raw_path, "size does not match header"))?;
    ScalarField2D::from_values(grid, planes.remove(0))
}
