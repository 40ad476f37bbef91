//! Per-pixel feature vectors.
//!
//! Each foreground pixel is described by its grey level, its absolute
//! position `(x, y, z)`, its position relative to the slice's intensity
//! centroid, and texture statistics of the square neighborhood centred on it:
//! mean grey level, four co-occurrence moments, four central geometric
//! moments, two run-length statistics and a horizontal Gaussian-weighted mean.
//!
//! Neighborhood cells that fall outside the image or on background are
//! invalid: they are skipped by every statistic rather than mirrored or
//! clamped.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{center_of_gravity, FatWindowedSlice};
use crate::labels::{LabelSlice, TissueClass};

pub const SCHEMA_VERSION: u32 = 1;
pub const N_FEATURES: usize = 18;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "grey",
    "pos_x",
    "pos_y",
    "pos_z",
    "rel_x",
    "rel_y",
    "patch_mean",
    "glcm_contrast",
    "glcm_energy",
    "glcm_homogeneity",
    "glcm_entropy",
    "mu00",
    "mu11",
    "mu20",
    "mu02",
    "run_percentage",
    "grey_level_nonuniformity",
    "gaussian_mean",
];

/// Co-occurrence offsets as `(row, column)` steps: horizontal, vertical and
/// both diagonals.
pub const GLCM_OFFSETS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// Neighborhood and texture parameters; frozen into every dataset and model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub neighborhood: usize,
    pub glcm_levels: usize,
    pub glrlm_levels: usize,
    pub gaussian_sigma: f64,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::new(5).expect("5 is a valid neighborhood")
    }
}

impl FeatureSchema {
    /// Schema with 16 grey levels and sigma = w / 6.
    pub fn new(neighborhood: usize) -> Result<Self> {
        let s = Self {
            neighborhood,
            glcm_levels: 16,
            glrlm_levels: 16,
            gaussian_sigma: neighborhood as f64 / 6.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighborhood < 3 || self.neighborhood.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "neighborhood must be odd and at least 3, got {}",
                self.neighborhood
            )));
        }
        if self.glcm_levels < 2 || self.glcm_levels > 256 || self.glrlm_levels < 2 || self.glrlm_levels > 256 {
            return Err(Error::InvalidParameter("grey levels must be in 2..=256".into()));
        }
        if self.gaussian_sigma.is_nan() || self.gaussian_sigma <= 0.0 {
            return Err(Error::InvalidParameter("gaussian sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        &FEATURE_NAMES
    }

    /// Canonical text form; its hash identifies the schema.
    pub fn descriptor(&self) -> String {
        format!(
            "v{SCHEMA_VERSION};w={};glcm_levels={};glrlm_levels={};sigma={};features={}",
            self.neighborhood,
            self.glcm_levels,
            self.glrlm_levels,
            self.gaussian_sigma,
            FEATURE_NAMES.join(",")
        )
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.descriptor().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `key=value` tokens used in dataset and model headers.
    pub fn to_header_fields(&self) -> String {
        format!(
            "version={SCHEMA_VERSION} w={} glcm_levels={} glrlm_levels={} sigma={} schema={}",
            self.neighborhood,
            self.glcm_levels,
            self.glrlm_levels,
            self.gaussian_sigma,
            self.hash()
        )
    }

    pub fn from_header_fields(text: &str) -> Result<Self> {
        let fields: BTreeMap<&str, &str> = text
            .split_whitespace()
            .filter_map(|t| t.split_once('='))
            .collect();
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("schema header lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Parse(format!("schema header has a bad `{k}`")))
        };
        if num("version")? != SCHEMA_VERSION as usize {
            return Err(Error::Parse("unsupported schema version".into()));
        }
        let schema = Self {
            neighborhood: num("w")?,
            glcm_levels: num("glcm_levels")?,
            glrlm_levels: num("glrlm_levels")?,
            gaussian_sigma: get("sigma")?
                .parse()
                .map_err(|_| Error::Parse("schema header has a bad `sigma`".into()))?,
        };
        schema.validate()?;
        if let Some(h) = fields.get("schema") {
            if *h != schema.hash() {
                return Err(Error::SchemaMismatch {
                    expected: schema.hash(),
                    found: h.to_string(),
                });
            }
        }
        Ok(schema)
    }
}

/// Square window around a pixel with a validity flag per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    size: usize,
    values: Vec<u8>,
    valid: Vec<bool>,
}

impl Patch {
    /// Patch from explicit cells (row-major).
    pub fn new(size: usize, values: Vec<u8>, valid: Vec<bool>) -> Result<Self> {
        if size == 0 || values.len() != size * size || valid.len() != size * size {
            return Err(Error::InvalidParameter("patch cells must form a square".into()));
        }
        Ok(Self { size, values, valid })
    }

    /// Patch where every nonzero value is valid.
    pub fn from_values(size: usize, values: Vec<u8>) -> Result<Self> {
        let valid = values.iter().map(|&v| v > 0).collect();
        Self::new(size, values, valid)
    }

    fn empty(size: usize) -> Self {
        Self {
            size,
            values: vec![0; size * size],
            valid: vec![false; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn value(&self, col: usize, row: usize) -> u8 {
        self.values[row * self.size + col]
    }

    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.size + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    fn fill(&mut self, slice: &FatWindowedSlice, x: usize, y: usize) {
        let r = (self.size / 2) as isize;
        let (cx, cy) = (x as isize, y as isize);
        for row in 0..self.size {
            for col in 0..self.size {
                let g = slice
                    .get_signed(cx + col as isize - r, cy + row as isize - r)
                    .copied()
                    .unwrap_or(0);
                let i = row * self.size + col;
                self.values[i] = g;
                self.valid[i] = g > 0;
            }
        }
    }

    fn valid_cells(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        let s = self.size;
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(move |(i, (&g, _))| (i % s, i / s, g))
    }
}

/// The `w x w` window centred on a foreground pixel.
pub fn neighborhood_patch(slice: &FatWindowedSlice, x: usize, y: usize, w: usize) -> Result<Patch> {
    if w.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("neighborhood must be odd, got {w}")));
    }
    if x >= slice.width() || y >= slice.height() || *slice.get(x, y) == 0 {
        return Err(Error::BackgroundPixel { x, y });
    }
    let mut p = Patch::empty(w);
    p.fill(slice, x, y);
    Ok(p)
}

pub fn patch_mean(patch: &Patch) -> f64 {
    let (sum, n) = patch
        .valid_cells()
        .fold((0u64, 0u64), |(s, n), (_, _, g)| (s + g as u64, n + 1));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Grey level (1..=255) to one of `levels` equal-width bins over `[0, 256)`.
#[inline]
pub fn quantize_level(grey: u8, levels: usize) -> usize {
    grey as usize * levels / 256
}

/// Normalized symmetric grey-level co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    p: Vec<f64>,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }

    pub fn from_probabilities(levels: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != levels * levels {
            return Err(Error::InvalidParameter("glcm must be levels x levels".into()));
        }
        Ok(Self { levels, p })
    }
}

/// Tallies symmetric pairs into `counts` (levels x levels); returns the total.
fn glcm_counts(patch: &Patch, levels: usize, offsets: &[(isize, isize)], counts: &mut [u32]) -> u32 {
    counts.iter_mut().for_each(|c| *c = 0);
    let s = patch.size as isize;
    let mut total = 0;
    for row in 0..s {
        for col in 0..s {
            let i = (row * s + col) as usize;
            if !patch.valid[i] {
                continue;
            }
            let a = quantize_level(patch.values[i], levels);
            for &(dr, dc) in offsets {
                let (r2, c2) = (row + dr, col + dc);
                if r2 < 0 || r2 >= s || c2 < 0 || c2 >= s {
                    continue;
                }
                let j = (r2 * s + c2) as usize;
                if !patch.valid[j] {
                    continue;
                }
                let b = quantize_level(patch.values[j], levels);
                counts[a * levels + b] += 1;
                counts[b * levels + a] += 1;
                total += 2;
            }
        }
    }
    total
}

/// Co-occurrence matrix over the given offsets; `None` when no valid pair
/// exists.
pub fn glcm(patch: &Patch, levels: usize, offsets: &[(isize, isize)]) -> Option<Glcm> {
    let mut counts = vec![0u32; levels * levels];
    let total = glcm_counts(patch, levels, offsets, &mut counts);
    if total == 0 {
        return None;
    }
    let t = total as f64;
    Some(Glcm {
        levels,
        p: counts.iter().map(|&c| c as f64 / t).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GlcmMoments {
    pub contrast: f64,
    pub energy: f64,
    pub homogeneity: f64,
    /// Base-2 entropy.
    pub entropy: f64,
}

pub fn glcm_moments(p: &Glcm) -> GlcmMoments {
    let mut m = GlcmMoments::default();
    for i in 0..p.levels {
        for j in 0..p.levels {
            let v = p.get(i, j);
            if v == 0.0 {
                continue;
            }
            accumulate_moment(&mut m, i, j, v);
        }
    }
    m.entropy = -m.entropy;
    m
}

#[inline]
fn accumulate_moment(m: &mut GlcmMoments, i: usize, j: usize, v: f64) {
    let d = i as f64 - j as f64;
    m.contrast += d * d * v;
    m.energy += v * v;
    m.homogeneity += v / (1.0 + d.abs());
    m.entropy += v * v.log2();
}

fn moments_from_counts(counts: &[u32], levels: usize, total: u32) -> GlcmMoments {
    if total == 0 {
        return GlcmMoments::default();
    }
    let t = total as f64;
    let mut m = GlcmMoments::default();
    for (idx, &c) in counts.iter().enumerate() {
        if c > 0 {
            accumulate_moment(&mut m, idx / levels, idx % levels, c as f64 / t);
        }
    }
    m.entropy = -m.entropy;
    m
}

/// Zeroth moment and second-order central moments of the patch intensities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometricMoments {
    pub mu00: f64,
    pub mu11: f64,
    pub mu20: f64,
    pub mu02: f64,
}

pub fn geometric_moments(patch: &Patch) -> GeometricMoments {
    let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
    for (x, y, g) in patch.valid_cells() {
        let g = g as f64;
        m00 += g;
        m10 += x as f64 * g;
        m01 += y as f64 * g;
    }
    if m00 == 0.0 {
        return GeometricMoments::default();
    }
    let (xb, yb) = (m10 / m00, m01 / m00);
    let mut out = GeometricMoments {
        mu00: m00,
        ..Default::default()
    };
    for (x, y, g) in patch.valid_cells() {
        let (dx, dy, g) = (x as f64 - xb, y as f64 - yb, g as f64);
        out.mu11 += dx * dy * g;
        out.mu20 += dx * dx * g;
        out.mu02 += dy * dy * g;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunLengthFeatures {
    /// Runs per valid cell.
    pub run_percentage: f64,
    /// Sum over grey levels of squared run counts, divided by the run count.
    pub grey_level_nonuniformity: f64,
}

/// Horizontal run-length statistics; invalid cells terminate runs.
pub fn glrlm_features(patch: &Patch, levels: usize) -> RunLengthFeatures {
    let mut per_level = vec![0u32; levels];
    glrlm_with(patch, levels, &mut per_level)
}

fn glrlm_with(patch: &Patch, levels: usize, per_level: &mut [u32]) -> RunLengthFeatures {
    per_level.iter_mut().for_each(|c| *c = 0);
    let s = patch.size;
    let (mut runs, mut cells) = (0u32, 0u32);
    for row in 0..s {
        let mut prev: Option<usize> = None;
        for col in 0..s {
            let i = row * s + col;
            if !patch.valid[i] {
                prev = None;
                continue;
            }
            cells += 1;
            let q = quantize_level(patch.values[i], levels);
            if prev != Some(q) {
                runs += 1;
                per_level[q] += 1;
            }
            prev = Some(q);
        }
    }
    if runs == 0 {
        return RunLengthFeatures::default();
    }
    let sq: u64 = per_level.iter().map(|&r| r as u64 * r as u64).sum();
    RunLengthFeatures {
        run_percentage: runs as f64 / cells as f64,
        grey_level_nonuniformity: sq as f64 / runs as f64,
    }
}

/// Gaussian-weighted mean of `(offset, value)` samples; the weights are
/// renormalized over the samples given.
pub fn gaussian_kernel_mean(samples: &[(isize, f64)], sigma: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, v) in samples {
        let k = (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
        num += k * v;
        den += k;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Gaussian-weighted mean over the horizontal segment of width `w` centred
/// on `(x, y)`, using foreground cells only.
pub fn gaussian_weighted_mean(slice: &FatWindowedSlice, x: usize, y: usize, w: usize, sigma: f64) -> f64 {
    let r = (w / 2) as isize;
    let samples: Vec<(isize, f64)> = (-r..=r)
        .filter_map(|d| {
            slice
                .get_signed(x as isize + d, y as isize)
                .filter(|&&g| g > 0)
                .map(|&g| (d, g as f64))
        })
        .collect();
    gaussian_kernel_mean(&samples, sigma)
}

/// Reusable per-thread scratch for extracting many pixels with one schema.
pub struct FeatureExtractor<'s> {
    schema: &'s FeatureSchema,
    patch: Patch,
    glcm: Vec<u32>,
    runs: Vec<u32>,
    kernel: Vec<f64>,
}

impl<'s> FeatureExtractor<'s> {
    pub fn new(schema: &'s FeatureSchema) -> Self {
        let w = schema.neighborhood;
        let r = (w / 2) as isize;
        let s2 = 2.0 * schema.gaussian_sigma * schema.gaussian_sigma;
        Self {
            schema,
            patch: Patch::empty(w),
            glcm: vec![0; schema.glcm_levels * schema.glcm_levels],
            runs: vec![0; schema.glrlm_levels],
            kernel: (-r..=r).map(|d| (-((d * d) as f64) / s2).exp()).collect(),
        }
    }

    /// The 18-value vector of a foreground pixel on slice `z`, given that
    /// slice's centroid.
    pub fn extract(
        &mut self,
        slice: &FatWindowedSlice,
        z: usize,
        x: usize,
        y: usize,
        cog: (f64, f64),
    ) -> Result<[f64; N_FEATURES]> {
        if x >= slice.width() || y >= slice.height() {
            return Err(Error::BackgroundPixel { x, y });
        }
        let grey = *slice.get(x, y);
        if grey == 0 {
            return Err(Error::BackgroundPixel { x, y });
        }
        self.patch.fill(slice, x, y);
        let p = &self.patch;
        let mean = patch_mean(p);
        let levels = self.schema.glcm_levels;
        let total = glcm_counts(p, levels, &GLCM_OFFSETS, &mut self.glcm);
        let tex = moments_from_counts(&self.glcm, levels, total);
        let geo = geometric_moments(p);
        let rl = glrlm_with(p, self.schema.glrlm_levels, &mut self.runs);

        let r = (self.schema.neighborhood / 2) as isize;
        let (mut num, mut den) = (0.0, 0.0);
        let row = slice.row(y);
        for (k, d) in (-r..=r).enumerate() {
            let xi = x as isize + d;
            if xi < 0 || xi as usize >= row.len() || row[xi as usize] == 0 {
                continue;
            }
            num += self.kernel[k] * row[xi as usize] as f64;
            den += self.kernel[k];
        }
        let gwm = num / den;

        Ok([
            grey as f64,
            x as f64,
            y as f64,
            z as f64,
            x as f64 - cog.0,
            y as f64 - cog.1,
            mean,
            tex.contrast,
            tex.energy,
            tex.homogeneity,
            tex.entropy,
            geo.mu00,
            geo.mu11,
            geo.mu20,
            geo.mu02,
            rl.run_percentage,
            rl.grey_level_nonuniformity,
            gwm,
        ])
    }
}

/// One-off extraction of a single pixel of `volume[z]`.
pub fn extract_pixel_features(
    volume: &[FatWindowedSlice],
    z: usize,
    x: usize,
    y: usize,
    schema: &FeatureSchema,
    cog: (f64, f64),
) -> Result<[f64; N_FEATURES]> {
    let slice = volume
        .get(z)
        .ok_or_else(|| Error::InvalidParameter(format!("slice {z} out of range")))?;
    FeatureExtractor::new(schema).extract(slice, z, x, y, cog)
}

/// Where a feature row came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub patient_id: Arc<str>,
    pub z: u32,
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
    pub provenance: Provenance,
    pub label: Option<TissueClass>,
}

/// Windowed slices of one registered patient, with optional ground truth.
#[derive(Debug, Clone)]
pub struct PatientSlices {
    pub patient_id: String,
    pub slices: Vec<FatWindowedSlice>,
    pub labels: Option<Vec<LabelSlice>>,
}

impl PatientSlices {
    pub fn new(patient_id: impl Into<String>, slices: Vec<FatWindowedSlice>, labels: Option<Vec<LabelSlice>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != slices.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} label slices for {} image slices",
                    l.len(),
                    slices.len()
                )));
            }
            for (a, b) in slices.iter().zip(l) {
                a.same_dims(b)?;
            }
        }
        Ok(Self {
            patient_id: patient_id.into(),
            slices,
            labels,
        })
    }
}

/// Feature rows sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<FeatureVector>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<FeatureVector>) -> Self {
        Self { schema, rows }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<FeatureVector> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows per tissue class, in [`TissueClass::ALL`] order.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &self.rows {
            if let Some(l) = r.label {
                c[l.index()] += 1;
            }
        }
        c
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Header comment, CSV column line, then one row per pixel. Floats use
    /// the shortest representation that parses back to the same value.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# cardiac-fat dataset {}", self.schema.to_header_fields())?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["patient", "z", "x", "y"];
        header.extend_from_slice(&FEATURE_NAMES);
        header.push("label");
        w.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(N_FEATURES + 5);
        for r in &self.rows {
            rec.clear();
            rec.push(r.provenance.patient_id.to_string());
            rec.push(r.provenance.z.to_string());
            rec.push(r.provenance.x.to_string());
            rec.push(r.provenance.y.to_string());
            rec.extend(r.values.iter().map(|v| format!("{v}")));
            rec.push(r.label.map(|l| l.name().to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let fields = first
            .trim()
            .strip_prefix("# cardiac-fat dataset")
            .ok_or_else(|| Error::Parse("dataset lacks its header line".into()))?;
        let schema = FeatureSchema::from_header_fields(fields)?;
        let mut csv = csv::Reader::from_reader(reader);
        let header = csv.headers()?.clone();
        let expected: Vec<&str> = ["patient", "z", "x", "y"]
            .into_iter()
            .chain(FEATURE_NAMES)
            .chain(["label"])
            .collect();
        if header.iter().ne(expected.iter().copied()) {
            return Err(Error::Parse("dataset columns do not match the schema".into()));
        }
        let mut ids: BTreeMap<String, Arc<str>> = BTreeMap::new();
        let mut rows = Vec::new();
        for rec in csv.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number `{}`", &rec[i])))
            };
            let int = |i: usize| -> Result<u32> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad index `{}`", &rec[i])))
            };
            let pid = ids
                .entry(rec[0].to_string())
                .or_insert_with(|| Arc::from(&rec[0]))
                .clone();
            let mut values = [0.0; N_FEATURES];
            for (k, v) in values.iter_mut().enumerate() {
                *v = num(4 + k)?;
            }
            let label_text = &rec[4 + N_FEATURES];
            let label = if label_text.is_empty() {
                None
            } else {
                Some(label_text.parse()?)
            };
            rows.push(FeatureVector {
                values,
                provenance: Provenance {
                    patient_id: pid,
                    z: int(1)?,
                    x: int(2)?,
                    y: int(3)?,
                },
                label,
            });
        }
        Ok(Self { schema, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

#[derive(Debug, Clone, Copy)]
struct PixelRef {
    patient: usize,
    z: usize,
    x: usize,
    y: usize,
    label: Option<TissueClass>,
}

fn extract_rows(
    patients: &[PatientSlices],
    pixels: &[PixelRef],
    schema: &FeatureSchema,
) -> Result<Vec<FeatureVector>> {
    // centroid per (patient, slice)
    let cogs: Vec<Vec<Option<(f64, f64)>>> = patients
        .iter()
        .map(|p| p.slices.iter().map(|s| center_of_gravity(s).ok()).collect())
        .collect();
    let ids: Vec<Arc<str>> = patients.iter().map(|p| Arc::from(p.patient_id.as_str())).collect();
    pixels
        .par_chunks(4096)
        .map(|chunk| {
            let mut ex = FeatureExtractor::new(schema);
            chunk
                .iter()
                .map(|px| {
                    let slice = &patients[px.patient].slices[px.z];
                    let cog = cogs[px.patient][px.z].ok_or(Error::NoForeground)?;
                    Ok(FeatureVector {
                        values: ex.extract(slice, px.z, px.x, px.y, cog)?,
                        provenance: Provenance {
                            patient_id: ids[px.patient].clone(),
                            z: px.z as u32,
                            x: px.x as u32,
                            y: px.y as u32,
                        },
                        label: px.label,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()
        .map(|chunks| chunks.into_iter().flatten().collect())
}

fn foreground_pixels(patient: usize, p: &PatientSlices) -> impl Iterator<Item = PixelRef> + '_ {
    p.slices.iter().enumerate().flat_map(move |(z, s)| {
        (0..s.height()).flat_map(move |y| {
            s.row(y)
                .iter()
                .enumerate()
                .filter(|(_, &g)| g > 0)
                .map(move |(x, _)| PixelRef {
                    patient,
                    z,
                    x,
                    y,
                    label: p.labels.as_ref().and_then(|l| l[z].get(x, y).tissue()),
                })
        })
    })
}

/// Unlabeled rows for every foreground pixel, ordered by `(z, y, x)`.
pub fn extract_volume(patient: &PatientSlices, schema: &FeatureSchema) -> Result<Dataset> {
    schema.validate()?;
    let unlabeled = PatientSlices {
        labels: None,
        ..patient.clone()
    };
    let pixels: Vec<PixelRef> = foreground_pixels(0, &unlabeled).collect();
    let rows = extract_rows(std::slice::from_ref(&unlabeled), &pixels, schema)?;
    Ok(Dataset::new(schema.clone(), rows))
}

/// Labeled training rows. Each tissue class is subsampled uniformly at
/// `sample_rate` with a seeded generator; foreground pixels whose ground truth
/// is not one of the three tissue classes are skipped. Rows are ordered by
/// `(patient, z, y, x)`.
pub fn build_dataset(
    patients: &[PatientSlices],
    schema: &FeatureSchema,
    sample_rate: f64,
    seed: u64,
) -> Result<Dataset> {
    schema.validate()?;
    if !(0.0..=1.0).contains(&sample_rate) {
        return Err(Error::InvalidParameter(format!(
            "sample rate must be in [0, 1], got {sample_rate}"
        )));
    }
    let mut per_class: [Vec<PixelRef>; 3] = Default::default();
    for (i, p) in patients.iter().enumerate() {
        if p.labels.is_none() {
            return Err(Error::InvalidParameter(format!(
                "patient {} has no ground truth",
                p.patient_id
            )));
        }
        for px in foreground_pixels(i, p) {
            if let Some(c) = px.label {
                per_class[c.index()].push(px);
            }
        }
    }
    let mut chosen = Vec::new();
    for (ci, pixels) in per_class.iter().enumerate() {
        let n = pixels.len();
        let k = ((n as f64) * sample_rate).round() as usize;
        if k >= n {
            chosen.extend_from_slice(pixels);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((ci as u64 + 1) << 56));
            let mut picks = index::sample(&mut rng, n, k).into_vec();
            picks.sort_unstable();
            chosen.extend(picks.into_iter().map(|i| pixels[i]));
        }
    }
    chosen.sort_by_key(|p| (p.patient, p.z, p.y, p.x));
    let rows = extract_rows(patients, &chosen, schema)?;
    Ok(Dataset::new(schema.clone(), rows))
}
