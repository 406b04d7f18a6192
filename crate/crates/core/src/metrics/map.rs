//! Binary PPM (P6) classification maps.

use std::path::Path;

use crate::data::LabelRaster;
use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

const BASE: [Rgb; 16] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
    [128, 0, 255],
    [0, 128, 64],
    [128, 64, 0],
    [255, 128, 192],
    [128, 128, 128],
    [64, 128, 255],
    [192, 192, 0],
    [0, 64, 128],
    [255, 255, 255],
];

/// Black for class 0, then a fixed list of distinct colors; classes past 16
/// step through hues.
pub fn default_palette(classes: usize) -> Vec<Rgb> {
    let mut out = vec![[0, 0, 0]];
    for i in 0..classes {
        if let Some(c) = BASE.get(i) {
            out.push(*c);
        } else {
            let j = i - BASE.len();
            let hue = (j as f64 * 0.618_033_988_75).fract() * 6.0;
            let level = 96 + (j / 6 % 4) as u8 * 40;
            let x = (255.0 * (1.0 - (hue % 2.0 - 1.0).abs())) as u8;
            let base = match hue as usize {
                0 => [255, x, level],
                1 => [x, 255, level],
                2 => [level, 255, x],
                3 => [level, x, 255],
                4 => [x, level, 255],
                _ => [255, level, x],
            };
            out.push(base);
        }
    }
    out
}

/// `P6\n<w> <h>\n255\n` followed by one RGB triple per raster cell.
pub fn render_map(labels: &LabelRaster, palette: &[Rgb]) -> Result<Vec<u8>> {
    let (w, h) = (labels.width(), labels.height());
    let header = format!("P6\n{w} {h}\n255\n");
    let mut out = Vec::with_capacity(header.len() + 3 * w * h);
    out.extend_from_slice(header.as_bytes());
    for &class in labels.labels() {
        let rgb = palette.get(class as usize).ok_or_else(|| {
            Error::Contract(format!(
                "palette has {} entries but the map contains class {class}",
                palette.len()
            ))
        })?;
        out.extend_from_slice(rgb);
    }
    Ok(out)
}

pub fn write_map(path: &Path, labels: &LabelRaster, palette: &[Rgb]) -> Result<()> {
    let bytes = render_map(labels, palette)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a P6 image written by [`render_map`] into `(width, height, pixels)`.
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<Rgb>)> {
    let bad = |r: &str| Error::format("<ppm>", r.to_string());
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
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("expected P6 with maxval 255"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
    let (w, h) = (num(fields[1])?, num(fields[2])?);
    let payload = &bytes[pos + 1..];
    if payload.len() != 3 * w * h {
        return Err(bad("payload size mismatch"));
    }
    Ok((w, h, payload.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()))
}
