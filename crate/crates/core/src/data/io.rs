//! Raw cube and label files.
//!
//! A header is a small text file with exactly five `key = value` lines:
//!
//! ```text
//! height = 145
//! width = 145
//! bands = 200
//! dtype = f32
//! payload = indian_pines.raw
//! ```
//!
//! `payload` is resolved relative to the header's directory. Cube payloads
//! are band-sequential little-endian `f32` (all of band 1 in row-major order,
//! then band 2, ...). Label headers use `bands = 1`, `dtype = u16` and a
//! row-major little-endian `u16` payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{HsiCube, LabelRaster};
use crate::error::{Error, Result};

const KEYS: [&str; 5] = ["height", "width", "bands", "dtype", "payload"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: String,
    pub payload: PathBuf,
}

impl RasterHeader {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::format(path, format!("unknown header key {key:?}")));
            }
            if fields.insert(key, value.trim().to_string()).is_some() {
                return Err(Error::format(path, format!("duplicate header key {key:?}")));
            }
        }
        let get = |key: &str| {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| Error::format(path, format!("missing header key {key:?}")))
        };
        let number = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::format(path, format!("{key} is not a non-negative integer")))
        };
        Ok(RasterHeader {
            height: number("height")?,
            width: number("width")?,
            bands: number("bands")?,
            dtype: get("dtype")?,
            payload: PathBuf::from(get("payload")?),
        })
    }

    pub fn render(&self) -> String {
        format!(
            "height = {}\nwidth = {}\nbands = {}\ndtype = {}\npayload = {}\n",
            self.height,
            self.width,
            self.bands,
            self.dtype,
            self.payload.display()
        )
    }
}

fn read_header(header_path: &Path) -> Result<(RasterHeader, Vec<u8>, PathBuf)> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = RasterHeader::parse(&text, header_path)?;
    let payload_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.payload);
    let bytes = fs::read(&payload_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::format(&payload_path, "payload file is missing")
        } else {
            Error::io(&payload_path, e)
        }
    })?;
    Ok((header, bytes, payload_path))
}

fn check_size(path: &Path, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::format(
            path,
            format!("payload size mismatch: expected {expected} bytes, found {actual}"),
        ));
    }
    Ok(())
}

pub fn load_cube(header_path: &Path) -> Result<HsiCube> {
    let (h, bytes, payload_path) = read_header(header_path)?;
    if h.dtype != "f32" {
        return Err(Error::format(header_path, format!("unknown cube dtype {:?}", h.dtype)));
    }
    let plane = h.height * h.width;
    check_size(&payload_path, plane * h.bands * 4, bytes.len())?;
    let mut data = vec![0f32; plane * h.bands];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let (band, pos) = (i / plane, i % plane);
        data[pos * h.bands + band] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    HsiCube::new(h.height, h.width, h.bands, data)
}

pub fn load_labels(header_path: &Path) -> Result<LabelRaster> {
    let (h, bytes, payload_path) = read_header(header_path)?;
    if h.dtype != "u16" {
        return Err(Error::format(header_path, format!("unknown label dtype {:?}", h.dtype)));
    }
    if h.bands != 1 {
        return Err(Error::format(header_path, "label rasters have exactly one band"));
    }
    check_size(&payload_path, h.height * h.width * 2, bytes.len())?;
    let labels = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    LabelRaster::new(h.height, h.width, labels)
}

fn payload_name(header_path: &Path) -> PathBuf {
    PathBuf::from(header_path.with_extension("raw").file_name().expect("header path has a file name"))
}

/// Writes `<name>.hdr`-style header plus a `.raw` payload next to it.
pub fn save_cube(cube: &HsiCube, header_path: &Path) -> Result<()> {
    let header = RasterHeader {
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        dtype: "f32".into(),
        payload: payload_name(header_path),
    };
    let plane = cube.height() * cube.width();
    let mut bytes = Vec::with_capacity(plane * cube.bands() * 4);
    for band in 0..cube.bands() {
        for pos in 0..plane {
            bytes.extend_from_slice(&cube.data()[pos * cube.bands() + band].to_le_bytes());
        }
    }
    write_pair(header_path, &header, &bytes)
}

pub fn save_labels(labels: &LabelRaster, header_path: &Path) -> Result<()> {
    let header = RasterHeader {
        height: labels.height(),
        width: labels.width(),
        bands: 1,
        dtype: "u16".into(),
        payload: payload_name(header_path),
    };
    let bytes: Vec<u8> = labels.labels().iter().flat_map(|l| l.to_le_bytes()).collect();
    write_pair(header_path, &header, &bytes)
}

fn write_pair(header_path: &Path, header: &RasterHeader, payload: &[u8]) -> Result<()> {
    let payload_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.payload);
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    fs::write(header_path, header.render()).map_err(|e| Error::io(header_path, e))
}
