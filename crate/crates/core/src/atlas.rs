//! Probabilistic atlas of the retrosternal area.
//!
//! The atlas is the pixelwise mean of binarized ROI crops taken at the
//! manually selected retrosternal position of several source patients. Each
//! cell stores the integer number of sources that were foreground there, so
//! every probability is an exact multiple of `1 / n_sources`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{BinaryImage, Grid};

/// Default ROI width in pixels.
pub const DEFAULT_ROI_WIDTH: usize = 128;
/// Default ROI height in pixels.
pub const DEFAULT_ROI_HEIGHT: usize = 64;

const ATLAS_MAGIC: &str = "cardiac-fat atlas v1";

/// A manually chosen retrosternal rectangle on one slice of one patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiSelection {
    pub patient_id: String,
    pub z: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Immutable mean-of-binaries probability grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbAtlas {
    hits: Grid<u32>,
    n_sources: u32,
}

impl ProbAtlas {
    pub fn width(&self) -> usize {
        self.hits.width()
    }

    pub fn height(&self) -> usize {
        self.hits.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.hits.dims()
    }

    pub fn n_sources(&self) -> u32 {
        self.n_sources
    }

    /// Canonical anchor: the grid center, rounded down.
    pub fn anchor(&self) -> (usize, usize) {
        (self.width() / 2, self.height() / 2)
    }

    /// Number of sources that were foreground at `(x, y)`.
    pub fn hits(&self, x: usize, y: usize) -> u32 {
        *self.hits.get(x, y)
    }

    pub fn probability(&self, x: usize, y: usize) -> f64 {
        self.hits(x, y) as f64 / self.n_sources as f64
    }

    pub fn probabilities(&self) -> Grid<f64> {
        let k = self.n_sources as f64;
        self.hits.map(|&c| c as f64 / k)
    }

    /// Writes the plain-text atlas file: magic line, `w h k`, the real-valued
    /// probabilities row by row, then the integer hit counts row by row.
    pub fn to_text(&self) -> String {
        let (w, h) = self.dims();
        let mut out = format!("{ATLAS_MAGIC}\n{w} {h} {}\n", self.n_sources);
        for y in 0..h {
            let row: Vec<String> = (0..w).map(|x| format!("{}", self.probability(x, y))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        for y in 0..h {
            let row: Vec<String> = self.hits.row(y).iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("atlas: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(ATLAS_MAGIC) {
            return Err(bad("missing header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing dimensions"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad dimension")))
            .collect::<Result<_>>()?;
        let [w, h, k] = dims[..] else {
            return Err(bad("expected `w h k`"));
        };
        if k == 0 {
            return Err(Error::NoSources);
        }
        let mut probs = Vec::with_capacity(w * h);
        for _ in 0..h {
            let line = lines.next().ok_or_else(|| bad("truncated probability rows"))?;
            for t in line.split_whitespace() {
                probs.push(t.parse::<f64>().map_err(|_| bad("bad probability"))?);
            }
        }
        let mut hits = Vec::with_capacity(w * h);
        for _ in 0..h {
            let line = lines.next().ok_or_else(|| bad("truncated count rows"))?;
            for t in line.split_whitespace() {
                hits.push(t.parse::<u32>().map_err(|_| bad("bad hit count"))?);
            }
        }
        if probs.len() != w * h || hits.len() != w * h {
            return Err(bad("row lengths disagree with header"));
        }
        for (&p, &c) in probs.iter().zip(&hits) {
            if c as usize > k || p != c as f64 / k as f64 {
                return Err(bad("probabilities disagree with hit counts"));
            }
        }
        Ok(Self {
            hits: Grid::from_vec(w, h, hits)?,
            n_sources: k as u32,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Arithmetic mean of equally sized binary crops.
pub fn build_atlas(crops: &[BinaryImage]) -> Result<ProbAtlas> {
    let first = crops.first().ok_or(Error::NoSources)?;
    let (w, h) = first.dims();
    let mut hits = vec![0u32; w * h];
    for crop in crops {
        first.same_dims(crop)?;
        for (acc, &bit) in hits.iter_mut().zip(crop.as_slice()) {
            *acc += bit as u32;
        }
    }
    Ok(ProbAtlas {
        hits: Grid::from_vec(w, h, hits)?,
        n_sources: crops.len() as u32,
    })
}

/// Returns the `w x h` sub-grid whose top-left corner is `(x, y)`.
pub fn crop<T: Clone>(grid: &Grid<T>, x: usize, y: usize, w: usize, h: usize) -> Result<Grid<T>> {
    if w == 0 || h == 0 || x + w > grid.width() || y + h > grid.height() {
        return Err(Error::OutOfBounds {
            x,
            y,
            w,
            h,
            width: grid.width(),
            height: grid.height(),
        });
    }
    Grid::from_fn(w, h, |cx, cy| grid.get(x + cx, y + cy).clone())
}

pub fn crop_roi<T: Clone>(grid: &Grid<T>, roi: &RoiSelection) -> Result<Grid<T>> {
    crop(grid, roi.x, roi.y, roi.w, roi.h)
}
