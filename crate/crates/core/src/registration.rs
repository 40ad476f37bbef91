//! Retrosternal registration by weighted mutual information.
//!
//! The atlas is slid over every lattice position of a fixed windowed slice.
//! Each placement is scored with a mutual information in which every joint
//! event `(f, m)` is scaled by `1 / (|f - m| + 1)`, so agreeing intensity
//! pairings dominate the score. The best placement gives the landmark; the
//! translation that moves its anchor to a common reference point is then
//! applied to every slice of the patient.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::atlas::ProbAtlas;
use crate::error::{Error, Result};
use crate::imaging::{foreground_count, FatWindowedSlice, Grid};

/// Search and confirmation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    /// Shared number of intensity bins for slice and atlas.
    pub n_bins: usize,
    /// Logarithm base of the score.
    pub log_base: f64,
    pub stride: usize,
    /// Drop background pixels of the fixed slice from the joint histogram.
    pub exclude_background: bool,
    /// Minimum relative gap between the winner and the best distant rival.
    pub margin: f64,
    /// The anchor must lie in this top fraction of the slice height.
    pub band: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            n_bins: 32,
            log_base: 2.0,
            stride: 1,
            exclude_background: false,
            margin: 0.05,
            band: 0.6,
        }
    }
}

impl RegistrationConfig {
    fn validate(&self) -> Result<()> {
        if self.n_bins < 2 || self.n_bins > 256 {
            return Err(Error::InvalidParameter(format!(
                "n_bins must be in 2..=256, got {}",
                self.n_bins
            )));
        }
        if self.log_base.is_nan() || self.log_base <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "log base must exceed 1, got {}",
                self.log_base
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Maps `v` onto `floor((v - lo) / (hi - lo) * n_bins)`, clamped to the valid
/// bin range.
pub fn quantize(v: f64, lo: f64, hi: f64, n_bins: usize) -> Result<usize> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidRange { lo, hi });
    }
    if n_bins < 2 {
        return Err(Error::InvalidParameter("n_bins must be at least 2".into()));
    }
    Ok(quantize_unchecked(v, lo, hi, n_bins))
}

#[inline]
fn quantize_unchecked(v: f64, lo: f64, hi: f64, n_bins: usize) -> usize {
    let b = ((v - lo) / (hi - lo) * n_bins as f64).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(n_bins - 1)
    }
}

pub fn quantize_grid(values: &Grid<f64>, lo: f64, hi: f64, n_bins: usize) -> Result<Grid<usize>> {
    quantize(lo, lo, hi, n_bins)?;
    Ok(values.map(|&v| quantize_unchecked(v, lo, hi, n_bins)))
}

/// Bin grid of a windowed slice (grey levels spread over `[0, 256)`).
pub fn quantize_slice(slice: &FatWindowedSlice, n_bins: usize) -> Grid<usize> {
    slice.map(|&g| g as usize * n_bins / 256)
}

/// Bin grid of an atlas (probabilities spread over `[0, 1]`).
///
/// Computed from the exact hit counts, which agrees with [`quantize`] applied
/// to the probabilities.
pub fn quantize_atlas(atlas: &ProbAtlas, n_bins: usize) -> Grid<usize> {
    let k = atlas.n_sources() as usize;
    Grid::from_fn(atlas.width(), atlas.height(), |x, y| {
        (atlas.hits(x, y) as usize * n_bins / k).min(n_bins - 1)
    })
    .expect("atlas dimensions are positive")
}

/// Joint histogram of fixed (rows) and moving (columns) bin indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointHistogram {
    n_bins: usize,
    counts: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    pub fn from_counts(n_bins: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n_bins * n_bins {
            return Err(Error::InvalidParameter(format!(
                "{n_bins} bins need {} counts, got {}",
                n_bins * n_bins,
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(Self {
            n_bins,
            counts,
            total,
        })
    }

    /// Histogram from sparse `(f, m, count)` entries.
    pub fn from_entries(n_bins: usize, entries: &[(usize, usize, u64)]) -> Result<Self> {
        let mut counts = vec![0u64; n_bins * n_bins];
        for &(f, m, c) in entries {
            if f >= n_bins || m >= n_bins {
                return Err(Error::InvalidParameter(format!("bin ({f},{m}) out of range")));
            }
            counts[f * n_bins + m] += c;
        }
        Self::from_counts(n_bins, counts)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, f: usize, m: usize) -> u64 {
        self.counts[f * self.n_bins + m]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn fixed_marginal(&self) -> Vec<u64> {
        self.counts
            .chunks(self.n_bins)
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn moving_marginal(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.n_bins];
        for row in self.counts.chunks(self.n_bins) {
            for (o, &c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }
}

/// Tallies aligned pixel pairs of two equally sized bin grids.
pub fn joint_histogram(fixed: &Grid<usize>, moving: &Grid<usize>, n_bins: usize) -> Result<JointHistogram> {
    fixed.same_dims(moving)?;
    let mut counts = vec![0u64; n_bins * n_bins];
    for (&f, &m) in fixed.as_slice().iter().zip(moving.as_slice()) {
        if f >= n_bins || m >= n_bins {
            return Err(Error::InvalidParameter(format!("bin ({f},{m}) out of range")));
        }
        counts[f * n_bins + m] += 1;
    }
    let h = JointHistogram::from_counts(n_bins, counts)?;
    if h.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(h)
}

/// Weighted mutual information of a joint histogram in base `g`.
pub fn wmi(h: &JointHistogram, g: f64) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    if g.is_nan() || g <= 1.0 {
        return Err(Error::InvalidParameter(format!("log base must exceed 1, got {g}")));
    }
    let rows = h.fixed_marginal();
    let cols = h.moving_marginal();
    let n = h.n_bins;
    let cells = h
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i / n, i % n, c));
    let nats = weighted_mi_nats(cells, &rows, &cols, h.total, |c| (c as f64).ln());
    Ok(nats / g.ln())
}

/// Shared summation for [`wmi`] and the placement search, so both paths give
/// bit-identical scores. `cells` yields the nonzero `(f, m, count)` cells in
/// row-major order; `ln` must return the natural log of a positive count.
#[inline]
fn weighted_mi_nats(
    cells: impl Iterator<Item = (usize, usize, u64)>,
    rows: &[u64],
    cols: &[u64],
    total: u64,
    ln: impl Fn(u64) -> f64,
) -> f64 {
    let n = total as f64;
    let ln_n = ln(total);
    let mut acc = 0.0;
    for (f, m, c) in cells {
        let pmi = ln(c) + ln_n - ln(rows[f]) - ln(cols[m]);
        let weight = 1.0 / ((f as f64 - m as f64).abs() + 1.0);
        acc += weight * (c as f64 / n) * pmi;
    }
    acc
}

/// Shannon entropy (base `g`) of a count vector.
pub fn entropy(counts: &[u64], g: f64) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
        / g.ln()
}

/// Outcome of the exhaustive placement search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    /// Top-left corner of the best atlas placement.
    pub position: (usize, usize),
    pub score: f64,
    /// Best score among placements farther than half the atlas width
    /// (Chebyshev) from the winner; `-inf` when no such placement exists.
    pub second_best_score: f64,
    /// Winner's anchor in slice coordinates.
    pub anchor: (usize, usize),
}

/// Precomputed foreground of the fixed slice.
struct SparseRows {
    /// `(x, bin)` of every foreground pixel in row-major order.
    pixels: Vec<(u32, u8)>,
    /// `starts[y * (width + 1) + x]` indexes the first pixel of row `y` at or
    /// right of column `x`.
    starts: Vec<u32>,
    width: usize,
    /// Ascending fixed bins occurring in the foreground.
    bins: Vec<usize>,
}

impl SparseRows {
    fn new(slice: &FatWindowedSlice, n_bins: usize) -> Self {
        let width = slice.width();
        let mut pixels = Vec::new();
        let mut starts = Vec::with_capacity(slice.height() * (width + 1));
        let mut seen = vec![false; n_bins];
        for y in 0..slice.height() {
            for (x, &g) in slice.row(y).iter().enumerate() {
                starts.push(pixels.len() as u32);
                if g > 0 {
                    let f = g as usize * n_bins / 256;
                    seen[f] = true;
                    pixels.push((x as u32, f as u8));
                }
            }
            starts.push(pixels.len() as u32);
        }
        let bins = (0..n_bins).filter(|&f| seen[f]).collect();
        Self {
            pixels,
            starts,
            width,
            bins,
        }
    }

    /// Foreground pixels of row `y` with `x0 <= x < x1`.
    fn span(&self, y: usize, x0: usize, x1: usize) -> &[(u32, u8)] {
        let base = y * (self.width + 1);
        &self.pixels[self.starts[base + x0] as usize..self.starts[base + x1] as usize]
    }
}

/// Scores every placement on the stride lattice and returns the argmax.
///
/// Ties are broken by smallest `y`, then smallest `x`.
pub fn find_retrosternal(
    slice: &FatWindowedSlice,
    atlas: &ProbAtlas,
    config: &RegistrationConfig,
) -> Result<SearchResult> {
    config.validate()?;
    let (sw, sh) = slice.dims();
    let (aw, ah) = atlas.dims();
    if aw > sw || ah > sh {
        return Err(Error::shape((sw, sh), (aw, ah)));
    }
    let n_bins = config.n_bins;
    let stride = config.stride;
    let nx = (sw - aw) / stride + 1;
    let ny = (sh - ah) / stride + 1;

    let atlas_bins = quantize_atlas(atlas, n_bins).map(|&b| b as u8);
    let mut atlas_totals = vec![0u64; n_bins];
    for &m in atlas_bins.as_slice() {
        atlas_totals[m as usize] += 1;
    }
    let sparse = SparseRows::new(slice, n_bins);
    let ln_table: Vec<f64> = (0..=(aw * ah) as u64)
        .map(|c| if c == 0 { 0.0 } else { (c as f64).ln() })
        .collect();
    let ln_base = config.log_base.ln();
    // only these (f, m) cells can ever be nonzero
    let atlas_present: Vec<usize> = (0..n_bins).filter(|&m| atlas_totals[m] > 0).collect();
    let mut fixed_present = sparse.bins.clone();
    if !config.exclude_background && fixed_present.first() != Some(&0) {
        fixed_present.insert(0, 0);
    }

    struct Scratch {
        counts: Vec<u64>,
        rows: Vec<u64>,
        cols: Vec<u64>,
    }
    let score_at = |x0: usize, y0: usize, s: &mut Scratch| -> f64 {
        for ay in 0..ah {
            let atlas_row = atlas_bins.row(ay);
            for &(x, f) in sparse.span(y0 + ay, x0, x0 + aw) {
                s.counts[f as usize * n_bins + atlas_row[x as usize - x0] as usize] += 1;
            }
        }
        for &m in &atlas_present {
            s.cols[m] = fixed_present.iter().map(|&f| s.counts[f * n_bins + m]).sum();
        }
        if !config.exclude_background {
            // background pixels of the window fall in fixed bin 0
            for &m in &atlas_present {
                s.counts[m] += atlas_totals[m] - s.cols[m];
                s.cols[m] = atlas_totals[m];
            }
        }
        let mut total = 0;
        for &f in &fixed_present {
            s.rows[f] = atlas_present.iter().map(|&m| s.counts[f * n_bins + m]).sum();
            total += s.rows[f];
        }
        let score = if total == 0 {
            f64::NEG_INFINITY
        } else {
            let counts = &s.counts;
            let cells = fixed_present.iter().flat_map(|&f| {
                atlas_present
                    .iter()
                    .map(move |&m| (f, m, counts[f * n_bins + m]))
                    .filter(|c| c.2 > 0)
            });
            weighted_mi_nats(cells, &s.rows, &s.cols, total, |c| ln_table[c as usize]) / ln_base
        };
        for &f in &fixed_present {
            for &m in &atlas_present {
                s.counts[f * n_bins + m] = 0;
            }
        }
        score
    };

    let scores: Vec<f64> = (0..ny)
        .into_par_iter()
        .flat_map_iter(|iy| {
            let mut s = Scratch {
                counts: vec![0; n_bins * n_bins],
                rows: vec![0; n_bins],
                cols: vec![0; n_bins],
            };
            (0..nx)
                .map(|ix| score_at(ix * stride, iy * stride, &mut s))
                .collect::<Vec<_>>()
        })
        .collect();

    let (best_idx, best) = argmax_first(&scores);
    if best == f64::NEG_INFINITY {
        // every placement covered only excluded background
        return Err(Error::EmptyHistogram);
    }
    let (bx, by) = (best_idx % nx, best_idx / nx);
    let mut second = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        let (ix, iy) = (i % nx, i / nx);
        let dx = (ix as isize - bx as isize).unsigned_abs() * stride;
        let dy = (iy as isize - by as isize).unsigned_abs() * stride;
        if 2 * dx.max(dy) > aw && s > second {
            second = s;
        }
    }
    let position = (bx * stride, by * stride);
    let (ax, ay) = atlas.anchor();
    Ok(SearchResult {
        position,
        score: best,
        second_best_score: second,
        anchor: (position.0 + ax, position.1 + ay),
    })
}

/// Index and value of the first maximum.
fn argmax_first(scores: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &s) in scores.iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Heuristic acceptance of a search result: the winner must beat every
/// distant placement by a relative margin, and the anchor must sit in the
/// upper `band` of the slice.
pub fn confirm_position(result: &SearchResult, slice_height: usize, margin: f64, band: f64) -> bool {
    let gap = result.score - result.second_best_score;
    let separated = gap > 0.0 && gap >= margin * result.score.abs();
    let in_band = (result.anchor.1 as f64) < band * slice_height as f64;
    separated && in_band
}

/// Registration record of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub patient_id: String,
    /// Slice the search ran on.
    pub z: usize,
    pub position: (usize, usize),
    pub score: f64,
    pub second_best_score: f64,
    pub confirmed: bool,
    /// `reference_point - detected_anchor`.
    pub translation: (i64, i64),
}

impl RegistrationResult {
    pub fn new(
        patient_id: impl Into<String>,
        z: usize,
        search: &SearchResult,
        confirmed: bool,
        reference: (usize, usize),
    ) -> Self {
        Self {
            patient_id: patient_id.into(),
            z,
            position: search.position,
            score: search.score,
            second_best_score: search.second_best_score,
            confirmed,
            translation: (
                reference.0 as i64 - search.anchor.0 as i64,
                reference.1 as i64 - search.anchor.1 as i64,
            ),
        }
    }

    /// Registration that leaves the volume untouched.
    pub fn identity(patient_id: impl Into<String>) -> Self {
        Self {
            patient_id: patient_id.into(),
            z: 0,
            position: (0, 0),
            score: 0.0,
            second_best_score: 0.0,
            confirmed: true,
            translation: (0, 0),
        }
    }
}

impl fmt::Display for RegistrationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "patient_id={}", self.patient_id)?;
        writeln!(f, "z={}", self.z)?;
        writeln!(f, "x={}", self.position.0)?;
        writeln!(f, "y={}", self.position.1)?;
        writeln!(f, "score={}", self.score)?;
        writeln!(f, "second_best_score={}", self.second_best_score)?;
        writeln!(f, "confirmed={}", self.confirmed)?;
        writeln!(f, "dx={}", self.translation.0)?;
        writeln!(f, "dy={}", self.translation.1)
    }
}

impl FromStr for RegistrationResult {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("registration record line `{line}`")))?;
            map.insert(k.trim(), v.trim());
        }
        fn field<T: FromStr>(map: &std::collections::HashMap<&str, &str>, key: &str) -> Result<T> {
            map.get(key)
                .ok_or_else(|| Error::Parse(format!("registration record lacks `{key}`")))?
                .parse()
                .map_err(|_| Error::Parse(format!("registration record has a bad `{key}`")))
        }
        Ok(Self {
            patient_id: field(&map, "patient_id")?,
            z: field(&map, "z")?,
            position: (field(&map, "x")?, field(&map, "y")?),
            score: field(&map, "score")?,
            second_best_score: field(&map, "second_best_score")?,
            confirmed: field(&map, "confirmed")?,
            translation: (field(&map, "dx")?, field(&map, "dy")?),
        })
    }
}

/// Default slice for the search: the slice with the most foreground among
/// the upper half of the volume.
pub fn select_registration_slice(volume: &[FatWindowedSlice]) -> usize {
    let upper = volume.len().div_ceil(2).max(1);
    let mut best = (0, 0);
    for (z, s) in volume.iter().take(upper).enumerate() {
        let n = foreground_count(s);
        if n > best.1 {
            best = (z, n);
        }
    }
    best.0
}

/// Default common reference point of a `width x height` frame.
pub fn default_reference_point(width: usize, height: usize) -> (usize, usize) {
    (width / 2, height / 4)
}

/// Full landmark registration of one windowed volume: pick the slice, search,
/// confirm, and derive the translation.
pub fn register_volume(
    patient_id: &str,
    volume: &[FatWindowedSlice],
    atlas: &ProbAtlas,
    reference: (usize, usize),
    slice_override: Option<usize>,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let z = match slice_override {
        Some(z) if z < volume.len() => z,
        Some(z) => {
            return Err(Error::InvalidParameter(format!(
                "slice {z} out of range for a {}-slice volume",
                volume.len()
            )))
        }
        None => select_registration_slice(volume),
    };
    let slice = volume
        .get(z)
        .ok_or_else(|| Error::InvalidParameter("empty volume".into()))?;
    let search = find_retrosternal(slice, atlas, config)?;
    let confirmed = confirm_position(&search, slice.height(), config.margin, config.band);
    Ok(RegistrationResult::new(patient_id, z, &search, confirmed, reference))
}

/// Integer translation; cells shifted in from outside take `fill`.
pub fn translate<T: Clone>(grid: &Grid<T>, dx: i64, dy: i64, fill: T) -> Grid<T> {
    Grid::from_fn(grid.width(), grid.height(), |x, y| {
        grid.get_signed((x as i64 - dx) as isize, (y as i64 - dy) as isize)
            .cloned()
            .unwrap_or_else(|| fill.clone())
    })
    .expect("dimensions come from an existing grid")
}

/// Applies the registration translation to every slice of a patient.
pub fn align_patient<T: Clone>(
    volume: &[Grid<T>],
    result: &RegistrationResult,
    fill: T,
    force: bool,
) -> Result<Vec<Grid<T>>> {
    if !result.confirmed && !force {
        return Err(Error::Unconfirmed);
    }
    let (dx, dy) = result.translation;
    Ok(volume
        .iter()
        .map(|s| translate(s, dx, dy, fill.clone()))
        .collect())
}
