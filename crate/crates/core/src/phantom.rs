//! Synthetic cardiac phantoms with exact ground truth.
//!
//! Each phantom slice holds a retrosternal pattern (a thin anterior fat layer,
//! a sternum bar with a fat wedge beneath it and two lateral fat strips) above a concentric "heart":
//! a myocardium disc, an epicardial fat ring, a thin pericardium shell and a
//! mediastinal fat ring. Fat pixels draw HU uniformly from the fat window,
//! the pericardium from its upper end, and every other structure sits outside
//! the window. The heart radii taper away from the middle slice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atlas::{build_atlas, crop, ProbAtlas, DEFAULT_ROI_HEIGHT, DEFAULT_ROI_WIDTH};
use crate::error::{Error, Result};
use crate::imaging::{binarize, window_default, Grid, HuSlice, PatientVolume, FAT_HU_MAX, FAT_HU_MIN};
use crate::labels::{Label, LabelSlice};
use crate::registration::select_registration_slice;

const AIR_HU: i32 = -1000;
const SOFT_TISSUE_HU: i32 = 40;
const BONE_HU: i32 = 700;
const PERICARDIUM_HU: (i32, i32) = (-50, FAT_HU_MAX);

/// Phantom geometry and noise; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub n_slices: usize,
    /// Heart centre relative to the top-left corner of the retrosternal
    /// window.
    pub heart_offset: (f64, f64),
    pub myocardium_radius: f64,
    pub epicardial_radius: f64,
    pub pericardium_thickness: f64,
    pub mediastinal_radius: f64,
    /// Relative radius loss per slice of distance from the middle slice.
    pub taper: f64,
    /// Top-left corner of the retrosternal window; drawn from the ranges
    /// below when absent.
    pub pattern_offset: Option<(usize, usize)>,
    pub offset_range_x: (usize, usize),
    pub offset_range_y: (usize, usize),
    /// Half-width of the additive uniform HU noise.
    pub noise_hu: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            n_slices: 8,
            heart_offset: (64.0, 134.0),
            myocardium_radius: 24.0,
            epicardial_radius: 40.0,
            pericardium_thickness: 1.0,
            mediastinal_radius: 60.0,
            taper: 0.03,
            pattern_offset: None,
            offset_range_x: (40, 88),
            offset_range_y: (8, 40),
            noise_hu: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::PhantomSpec(m));
        let r = [
            self.myocardium_radius,
            self.epicardial_radius,
            self.epicardial_radius + self.pericardium_thickness,
            self.mediastinal_radius,
        ];
        if !(r[0] > 0.0 && r.windows(2).all(|w| w[0] < w[1])) {
            return bad("radii must be positive and strictly increasing".into());
        }
        if self.n_slices == 0 {
            return bad("need at least one slice".into());
        }
        if !(0.0..0.5).contains(&(self.taper * (self.n_slices as f64 / 2.0))) || self.taper < 0.0 {
            return bad("taper is too strong for the slice count".into());
        }
        if !(self.noise_hu >= 0.0 && self.noise_hu.is_finite()) {
            return bad("noise amplitude must be a non-negative number".into());
        }
        let (xr, yr) = match self.pattern_offset {
            Some((x, y)) => ((x, x), (y, y)),
            None => (self.offset_range_x, self.offset_range_y),
        };
        if xr.0 > xr.1 || yr.0 > yr.1 {
            return bad("offset ranges must be ordered".into());
        }
        if xr.1 + DEFAULT_ROI_WIDTH > self.width || yr.1 + DEFAULT_ROI_HEIGHT > self.height {
            return bad("retrosternal pattern does not fit in the frame".into());
        }
        let (hx, hy) = self.heart_offset;
        let rm = self.mediastinal_radius;
        let fits = |lo: usize, hi: usize, off: f64, size: usize| lo as f64 + off - rm >= 0.0 && hi as f64 + off + rm < size as f64;
        if !fits(xr.0, xr.1, hx, self.width) || !fits(yr.0, yr.1, hy, self.height) {
            return bad("heart does not fit in the frame".into());
        }
        if hy - rm < DEFAULT_ROI_HEIGHT as f64 {
            return bad("heart overlaps the retrosternal window".into());
        }
        Ok(())
    }
}

/// A generated patient with its exact labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub volume: PatientVolume,
    pub truth: Vec<LabelSlice>,
    /// Top-left corner of the planted retrosternal window.
    pub retro_position: (usize, usize),
}

/// Per-patient shape of the retrosternal pattern.
struct Pattern {
    x0: usize,
    y0: usize,
    wedge_depth: f64,
    wedge_half_width: f64,
    strip_len: usize,
}

impl Pattern {
    /// Structure at `(x, y)`: `Some(true)` fat, `Some(false)` bone.
    fn at(&self, x: usize, y: usize) -> Option<bool> {
        let (Some(wx), Some(wy)) = (x.checked_sub(self.x0), y.checked_sub(self.y0)) else {
            return None;
        };
        if wx >= DEFAULT_ROI_WIDTH || wy >= DEFAULT_ROI_HEIGHT {
            return None;
        }
        if wy < 3 && (20..108).contains(&wx) {
            return Some(true);
        }
        if (4..14).contains(&wy) && (24..104).contains(&wx) {
            return Some(false);
        }
        let depth = wy as f64 - 14.0;
        if depth >= 0.0 && depth < self.wedge_depth {
            let half = self.wedge_half_width * (1.0 - depth / self.wedge_depth);
            if (wx as f64 + 0.5 - 64.0).abs() < half {
                return Some(true);
            }
        }
        let in_strip = (6..16).contains(&wx) || (112..122).contains(&wx);
        if in_strip && wy >= 8 && wy < 8 + self.strip_len {
            return Some(true);
        }
        None
    }
}

pub fn generate_phantom(spec: &PhantomSpec, patient_id: &str) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (x0, y0) = match spec.pattern_offset {
        Some(p) => p,
        None => (
            rng.gen_range(spec.offset_range_x.0..=spec.offset_range_x.1),
            rng.gen_range(spec.offset_range_y.0..=spec.offset_range_y.1),
        ),
    };
    let pattern = Pattern {
        x0,
        y0,
        wedge_depth: rng.gen_range(34.0..40.0),
        wedge_half_width: rng.gen_range(36.0..40.0),
        strip_len: rng.gen_range(44..=52),
    };
    let (cx, cy) = (x0 as f64 + spec.heart_offset.0, y0 as f64 + spec.heart_offset.1);
    let (w, h) = (spec.width, spec.height);
    let mid = (spec.n_slices as f64 - 1.0) / 2.0;

    let mut slices = Vec::with_capacity(spec.n_slices);
    let mut truth = Vec::with_capacity(spec.n_slices);
    for z in 0..spec.n_slices {
        let scale = 1.0 - spec.taper * (z as f64 - mid).abs();
        let r_myo = spec.myocardium_radius * scale;
        let r_epi = spec.epicardial_radius * scale;
        let r_peri = (spec.epicardial_radius + spec.pericardium_thickness) * scale;
        let r_med = spec.mediastinal_radius * scale;
        let mut labels = Vec::with_capacity(w * h);
        let mut hu = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let r = (dx * dx + dy * dy).sqrt();
                let (ex, ey) = ((x as f64 - 127.5) / 126.0, (y as f64 - 127.5) / 126.0);
                let body = if ex * ex + ey * ey <= 1.0 { SOFT_TISSUE_HU } else { AIR_HU };
                let (label, value) = match pattern.at(x, y) {
                    Some(true) => (Label::Mediastinal, rng.gen_range(FAT_HU_MIN..=FAT_HU_MAX)),
                    Some(false) => (Label::Background, BONE_HU),
                    None if r < r_myo => (Label::Background, SOFT_TISSUE_HU),
                    None if r < r_epi => (Label::Epicardial, rng.gen_range(FAT_HU_MIN..=FAT_HU_MAX)),
                    None if r < r_peri => (Label::Pericardium, rng.gen_range(PERICARDIUM_HU.0..=PERICARDIUM_HU.1)),
                    None if r < r_med => (Label::Mediastinal, rng.gen_range(FAT_HU_MIN..=FAT_HU_MAX)),
                    None => (Label::Background, body),
                };
                let noise = if spec.noise_hu > 0.0 {
                    rng.gen_range(-spec.noise_hu..=spec.noise_hu).round() as i32
                } else {
                    0
                };
                labels.push(label);
                hu.push(value + noise);
            }
        }
        let slice: HuSlice = Grid::from_vec(w, h, hu)?;
        let windowed = window_default(&slice);
        let labels = Grid::from_vec(w, h, labels)?;
        // truth covers exactly the windowed foreground
        let labels = Grid::from_fn(w, h, |x, y| {
            if *windowed.get(x, y) == 0 {
                Label::Background
            } else {
                *labels.get(x, y)
            }
        })?;
        slices.push(slice);
        truth.push(labels);
    }
    Ok(Phantom {
        volume: PatientVolume::new(patient_id, slices, Some([0.7, 0.7, 3.0]))?,
        truth,
        retro_position: (x0, y0),
    })
}

/// Atlas from binarized crops at the planted position of phantoms generated
/// with `base` and each of `seeds`, taken on the slice registration would
/// search.
pub fn phantom_atlas(base: &PhantomSpec, seeds: impl IntoIterator<Item = u64>) -> Result<ProbAtlas> {
    let crops = seeds
        .into_iter()
        .map(|seed| {
            let p = generate_phantom(&base.with_seed(seed), "atlas-source")?;
            let windowed = p.volume.windowed(FAT_HU_MIN, FAT_HU_MAX)?;
            let z = select_registration_slice(&windowed);
            let (x, y) = p.retro_position;
            crop(&binarize(&windowed[z]), x, y, DEFAULT_ROI_WIDTH, DEFAULT_ROI_HEIGHT)
        })
        .collect::<Result<Vec<_>>>()?;
    build_atlas(&crops)
}
