//! Per-class stratified train/test selection.
//!
//! Sampling uses ChaCha8 seeded from the split seed. ChaCha is a
//! counter-based generator with a fixed, platform-independent output
//! stream, so a seed names a split exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabelRaster;
use crate::error::{Error, Result};

/// One labeled pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sample {
    pub row: usize,
    pub col: usize,
    pub class: u16,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    /// Training pixels requested per class; unlisted classes go entirely to test.
    pub counts: BTreeMap<u16, usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// Parses a counts file: one `class count` pair per line, `#` starts a comment.
    pub fn parse_counts(text: &str, seed: u64, path: &Path) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(c), Some(n), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::format(path, format!("expected `class count`, got {line:?}")));
            };
            let class: u16 = c
                .trim_start_matches(['C', 'c'])
                .parse()
                .map_err(|_| Error::format(path, format!("bad class id {c:?}")))?;
            let count: usize = n
                .parse()
                .map_err(|_| Error::format(path, format!("bad count {n:?}")))?;
            if class == 0 {
                return Err(Error::format(path, "class 0 is reserved for unlabeled pixels"));
            }
            counts.insert(class, count);
        }
        Ok(SplitSpec { counts, seed })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Split {
    /// `class -> (train, test)` sizes.
    pub fn class_counts(&self) -> BTreeMap<u16, (usize, usize)> {
        let mut out: BTreeMap<u16, (usize, usize)> = BTreeMap::new();
        for s in &self.train {
            out.entry(s.class).or_default().0 += 1;
        }
        for s in &self.test {
            out.entry(s.class).or_default().1 += 1;
        }
        out
    }
}

pub fn stratified_split(labels: &LabelRaster, spec: &SplitSpec) -> Result<Split> {
    let mut by_class: BTreeMap<u16, Vec<Sample>> = BTreeMap::new();
    for row in 0..labels.height() {
        for col in 0..labels.width() {
            let class = labels.get(row, col);
            if class != 0 {
                by_class.entry(class).or_default().push(Sample { row, col, class });
            }
        }
    }
    for (&class, &requested) in &spec.counts {
        let available = by_class.get(&class).map_or(0, Vec::len);
        if requested > available {
            return Err(Error::Split {
                class,
                requested,
                available,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split::default();
    for (class, mut pixels) in by_class {
        let take = spec.counts.get(&class).copied().unwrap_or(0);
        // partial Fisher-Yates: the first `take` slots end up a uniform draw
        for i in 0..take {
            let j = rng.random_range(i..pixels.len());
            pixels.swap(i, j);
        }
        split.train.extend_from_slice(&pixels[..take]);
        split.test.extend_from_slice(&pixels[take..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// `row col class` per line.
pub fn render_samples(samples: &[Sample]) -> String {
    let mut out = String::with_capacity(samples.len() * 12);
    for s in samples {
        writeln!(out, "{} {} {}", s.row, s.col, s.class).expect("writing to a String");
    }
    out
}

pub fn parse_samples(text: &str, path: &Path) -> Result<Vec<Sample>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = match f[..] {
                [r, c, k] => r
                    .parse()
                    .ok()
                    .zip(c.parse().ok())
                    .zip(k.parse().ok())
                    .map(|((row, col), class)| Sample { row, col, class }),
                _ => None,
            };
            parsed.ok_or_else(|| Error::format(path, format!("expected `row col class`, got {line:?}")))
        })
        .collect()
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_samples(&text, path)
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    fs::write(path, render_samples(samples)).map_err(|e| Error::io(path, e))
}
