use crate::error::{Error, Result};

/// Hyperspectral image held pixel-interleaved: the `bands` values of pixel
/// `(row, col)` are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::dim(format!(
                "cube extents must be positive, got {height}x{width}x{bands}"
            )));
        }
        if data.len() != height * width * bands {
            return Err(Error::dim(format!(
                "cube {height}x{width}x{bands} needs {} values, got {}",
                height * width * bands,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput { op: "HsiCube::new" });
        }
        Ok(HsiCube {
            height,
            width,
            bands,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn value(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[(row * self.width + col) * self.bands + band]
    }

    /// Per-band min-max scaling to `[0, 1]`. Constant bands become zeros.
    pub fn normalize(&self) -> HsiCube {
        let mut lo = vec![f32::INFINITY; self.bands];
        let mut hi = vec![f32::NEG_INFINITY; self.bands];
        for px in self.data.chunks_exact(self.bands) {
            for (b, &v) in px.iter().enumerate() {
                lo[b] = lo[b].min(v);
                hi[b] = hi[b].max(v);
            }
        }
        let mut data = self.data.clone();
        for px in data.chunks_exact_mut(self.bands) {
            for (b, v) in px.iter_mut().enumerate() {
                let range = hi[b] as f64 - lo[b] as f64;
                *v = if range > 0.0 {
                    ((*v as f64 - lo[b] as f64) / range) as f32
                } else {
                    0.0
                };
            }
        }
        HsiCube { data, ..*self }
    }
}

/// Per-pixel class ids; 0 marks an unlabeled pixel, classes are `1..=K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl LabelRaster {
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::dim(format!(
                "label raster {height}x{width} with {} labels",
                labels.len()
            )));
        }
        Ok(LabelRaster {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: u16) {
        self.labels[row * self.width + col] = class;
    }

    /// Largest class id present.
    pub fn num_classes(&self) -> u16 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn matches(&self, cube: &HsiCube) -> bool {
        self.height == cube.height && self.width == cube.width
    }
}
