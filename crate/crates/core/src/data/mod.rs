//! Hyperspectral cubes, label rasters, patches and train/test splits.

mod cube;
pub mod io;
mod patch;
mod split;
mod synth;

pub use cube::{HsiCube, LabelRaster};
pub use io::{load_cube, load_labels, save_cube, save_labels};
pub use patch::{extract_patch, reflect_index, Patch};
pub use split::{
    parse_samples, read_samples, render_samples, stratified_split, write_samples, Sample, Split,
    SplitSpec,
};
pub use synth::{synth_class_at, synth_dataset, synth_signatures};

use crate::error::{Error, Result};

/// Patch around a labeled sample, carrying its class.
pub fn labeled_patch(cube: &HsiCube, sample: &Sample, s: usize) -> Result<Patch> {
    let mut p = extract_patch(cube, sample.row, sample.col, s)?;
    p.label = sample.class;
    Ok(p)
}

/// Checks that samples lie inside the raster and agree with its labels.
pub fn validate_samples(labels: &LabelRaster, samples: &[Sample]) -> Result<()> {
    for s in samples {
        if s.row >= labels.height() || s.col >= labels.width() {
            return Err(Error::config(format!(
                "sample ({}, {}) outside {}x{} raster",
                s.row,
                s.col,
                labels.height(),
                labels.width()
            )));
        }
        let actual = labels.get(s.row, s.col);
        if actual != s.class {
            return Err(Error::config(format!(
                "sample ({}, {}) claims class {} but the raster says {actual}",
                s.row, s.col, s.class
            )));
        }
    }
    Ok(())
}
