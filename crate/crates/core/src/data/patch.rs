use super::HsiCube;
use crate::error::{Error, Result};

/// `size × size × bands` neighborhood around one pixel, row-major with bands
/// innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub bands: usize,
    pub data: Vec<f32>,
    pub label: u16,
}

/// Reflects an index into `[0, n)` without repeating the edge sample
/// (`-1 -> 1`, `n -> n - 2`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// The `s×s` neighborhood centered at `(row, col)`; positions outside the
/// image are mirrored about the edge. The returned patch is unlabeled (0).
pub fn extract_patch(cube: &HsiCube, row: usize, col: usize, s: usize) -> Result<Patch> {
    if s.is_multiple_of(2) {
        return Err(Error::Contract(format!("patch size must be odd, got {s}")));
    }
    if row >= cube.height() || col >= cube.width() {
        return Err(Error::Contract(format!(
            "pixel ({row}, {col}) outside {}x{} image",
            cube.height(),
            cube.width()
        )));
    }
    let half = (s / 2) as isize;
    let mut data = Vec::with_capacity(s * s * cube.bands());
    for dy in -half..=half {
        let r = reflect_index(row as isize + dy, cube.height());
        for dx in -half..=half {
            let c = reflect_index(col as isize + dx, cube.width());
            data.extend_from_slice(cube.pixel(r, c));
        }
    }
    Ok(Patch {
        size: s,
        bands: cube.bands(),
        data,
        label: 0,
    })
}
