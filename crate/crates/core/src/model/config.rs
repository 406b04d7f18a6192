use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Spatial patch side `s` (odd).
    pub patch_size: usize,
    /// Spectral bands `c` of the input cube.
    pub bands: usize,
    /// Adjacent bands bundled into one spectral token.
    pub spectral_neighbors: usize,
    /// Stacked inner/outer layer pairs `L`.
    pub layers: usize,
    /// Multiscale spatial token width `d1`.
    pub dim_inner: usize,
    /// Spectral token width `d2`.
    pub dim_spectral: usize,
    pub heads_inner: usize,
    pub heads_outer: usize,
    /// Center-cropped neighborhood sizes, odd and at most `patch_size`.
    pub scales: Vec<usize>,
    /// Convolution filter sizes of the shared filter bank, odd.
    pub filters: Vec<usize>,
    /// MLP hidden width as a multiple of the block width.
    pub mlp_ratio: usize,
    pub use_ms: bool,
    pub use_scaf: bool,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch_size: 9,
            bands: 200,
            spectral_neighbors: 5,
            layers: 5,
            dim_inner: 64,
            dim_spectral: 64,
            heads_inner: 4,
            heads_outer: 4,
            scales: vec![3, 5, 7, 9],
            filters: vec![3, 5, 7],
            mlp_ratio: 4,
            use_ms: true,
            use_scaf: true,
            classes: 16,
        }
    }
}

impl ModelConfig {
    /// Small model used by the gradient suite.
    pub fn tiny() -> Self {
        ModelConfig {
            patch_size: 5,
            bands: 6,
            spectral_neighbors: 3,
            layers: 2,
            dim_inner: 8,
            dim_spectral: 8,
            heads_inner: 1,
            heads_outer: 1,
            scales: vec![3, 5],
            filters: vec![3, 5],
            mlp_ratio: 4,
            use_ms: true,
            use_scaf: true,
            classes: 3,
        }
    }

    /// Desk-scale model for quick training runs: two layers of width 16.
    pub fn desk(bands: usize, classes: usize) -> Self {
        ModelConfig {
            bands,
            classes,
            layers: 2,
            dim_inner: 16,
            dim_spectral: 16,
            ..Self::default()
        }
    }

    /// Number of spectral tokens `c' = ceil(c / n)`, excluding the class token.
    pub fn groups(&self) -> usize {
        self.bands.div_ceil(self.spectral_neighbors)
    }

    /// `(scale, filter)` pairs in token order: ascending scale, then ascending filter.
    pub fn token_pairs(&self) -> Vec<(usize, usize)> {
        let mut scales = self.scales.clone();
        scales.sort_unstable();
        scales.dedup();
        let mut filters = self.filters.clone();
        filters.sort_unstable();
        filters.dedup();
        scales
            .iter()
            .flat_map(|&a| filters.iter().filter(move |&&k| k <= a).map(move |&k| (a, k)))
            .collect()
    }

    /// Multiscale tokens per band group, `m1`.
    pub fn tokens(&self) -> usize {
        self.token_pairs().len()
    }

    /// Sorted, deduplicated filter sizes.
    pub fn filter_sizes(&self) -> Vec<usize> {
        let mut f = self.filters.clone();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return err(format!("patch_size must be odd, got {}", self.patch_size));
        }
        if self.bands == 0 || self.spectral_neighbors == 0 {
            return err("bands and spectral_neighbors must be positive".into());
        }
        if self.layers == 0 {
            return err("layers must be at least 1".into());
        }
        if self.classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.mlp_ratio == 0 {
            return err("mlp_ratio must be positive".into());
        }
        for (name, dim, heads) in [
            ("dim_inner", self.dim_inner, self.heads_inner),
            ("dim_spectral", self.dim_spectral, self.heads_outer),
        ] {
            if dim == 0 || heads == 0 || dim % heads != 0 {
                return err(format!("{name} = {dim} is not divisible into {heads} heads"));
            }
        }
        if self.use_ms {
            if self.scales.is_empty() || self.filters.is_empty() {
                return err("scales and filters must be non-empty".into());
            }
            if let Some(a) = self.scales.iter().find(|&&a| a % 2 == 0 || a > self.patch_size) {
                return err(format!(
                    "scale {a} must be odd and at most patch_size {}",
                    self.patch_size
                ));
            }
            if let Some(k) = self.filters.iter().find(|&&k| k == 0 || k % 2 == 0) {
                return err(format!("filter size {k} must be odd"));
            }
            let largest = self.scales.iter().copied().max().unwrap_or(0);
            if let Some(k) = self.filters.iter().find(|&&k| k > largest) {
                return err(format!("filter size {k} exceeds every neighborhood scale"));
            }
            if self.tokens() == 0 {
                return err("no (scale, filter) pair with filter <= scale".into());
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys that
    /// are not model settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::config(format!("invalid value {value:?} for {key}"));
        let num = || value.parse::<usize>().map_err(|_| bad());
        let flag = || match value {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(bad()),
        };
        let list = || -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect()
        };
        match key {
            "patch_size" => self.patch_size = num()?,
            "bands" => self.bands = num()?,
            "spectral_neighbors" => self.spectral_neighbors = num()?,
            "layers" => self.layers = num()?,
            "dim_inner" => self.dim_inner = num()?,
            "dim_spectral" => self.dim_spectral = num()?,
            "heads_inner" => self.heads_inner = num()?,
            "heads_outer" => self.heads_outer = num()?,
            "scales" => self.scales = list()?,
            "filters" => self.filters = list()?,
            "mlp_ratio" => self.mlp_ratio = num()?,
            "use_ms" => self.use_ms = flag()?,
            "use_scaf" => self.use_scaf = flag()?,
            "classes" => self.classes = num()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "patch_size = {}", self.patch_size);
        let _ = writeln!(s, "bands = {}", self.bands);
        let _ = writeln!(s, "spectral_neighbors = {}", self.spectral_neighbors);
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "dim_inner = {}", self.dim_inner);
        let _ = writeln!(s, "dim_spectral = {}", self.dim_spectral);
        let _ = writeln!(s, "heads_inner = {}", self.heads_inner);
        let _ = writeln!(s, "heads_outer = {}", self.heads_outer);
        let _ = writeln!(s, "scales = {}", join(&self.scales));
        let _ = writeln!(s, "filters = {}", join(&self.filters));
        let _ = writeln!(s, "mlp_ratio = {}", self.mlp_ratio);
        let _ = writeln!(s, "use_ms = {}", self.use_ms);
        let _ = writeln!(s, "use_scaf = {}", self.use_scaf);
        let _ = writeln!(s, "classes = {}", self.classes);
        s
    }
}
