//! CT intensity handling: Hounsfield grids, windowing to the adipose range,
//! binarization and foreground statistics.
//!
//! Windowed slices reserve grey level 0 for background. Every pixel whose HU
//! value falls inside the window is mapped linearly onto `1..=255`.

use crate::error::{Error, Result};

/// Lower bound of the adipose window in HU.
pub const FAT_HU_MIN: i32 = -200;
/// Upper bound of the adipose window in HU.
pub const FAT_HU_MAX: i32 = -30;

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Signed CT intensities in Hounsfield units.
pub type HuSlice = Grid<i32>;
/// Grey image with 0 = background and 1..=255 encoding the fat window.
pub type FatWindowedSlice = Grid<u8>;
/// Foreground mask derived from a windowed slice.
pub type BinaryImage = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "grid of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    /// Value at signed coordinates, `None` when outside the grid.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> Option<&T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(&self.data[y as usize * self.width + x as usize])
        }
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::shape(self.dims(), other.dims()))
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Ordered stack of HU slices belonging to one patient; index = z.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientVolume {
    patient_id: String,
    slices: Vec<HuSlice>,
    spacing: Option<[f64; 3]>,
}

impl PatientVolume {
    pub fn new(
        patient_id: impl Into<String>,
        slices: Vec<HuSlice>,
        spacing: Option<[f64; 3]>,
    ) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidParameter("patient volume has no slices".into()))?;
        for s in &slices[1..] {
            first.same_dims(s)?;
        }
        Ok(Self {
            patient_id: patient_id.into(),
            slices,
            spacing,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn slices(&self) -> &[HuSlice] {
        &self.slices
    }

    pub fn spacing(&self) -> Option<[f64; 3]> {
        self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        self.slices[0].dims()
    }

    /// Windows every slice with the given HU bounds.
    pub fn windowed(&self, lo: i32, hi: i32) -> Result<Vec<FatWindowedSlice>> {
        self.slices
            .iter()
            .map(|s| window_to_fat_range(s, lo, hi))
            .collect()
    }
}

/// Grey code of a single HU value, 0 when outside `[lo, hi]`.
///
/// Callers must ensure `lo < hi`.
#[inline]
pub fn window_value(h: i32, lo: i32, hi: i32) -> u8 {
    if h < lo || h > hi {
        return 0;
    }
    // round(1 + (h - lo) * 254 / (hi - lo)), rounding half up, in integers
    let num = (h as i64 - lo as i64) * 254;
    let den = hi as i64 - lo as i64;
    (1 + (2 * num + den) / (2 * den)) as u8
}

/// Inverse of [`window_value`] for nonzero codes (up to rounding).
pub fn grey_to_hu(grey: u8, lo: i32, hi: i32) -> f64 {
    lo as f64 + (grey as f64 - 1.0) * (hi - lo) as f64 / 254.0
}

/// Maps HU values inside `[lo, hi]` linearly onto `1..=255`; everything else
/// becomes background 0.
pub fn window_to_fat_range(slice: &HuSlice, lo: i32, hi: i32) -> Result<FatWindowedSlice> {
    if lo >= hi {
        return Err(Error::InvalidWindow { lo, hi });
    }
    Ok(slice.map(|&h| window_value(h, lo, hi)))
}

/// [`window_to_fat_range`] with the default -200..-30 HU window.
pub fn window_default(slice: &HuSlice) -> FatWindowedSlice {
    slice.map(|&h| window_value(h, FAT_HU_MIN, FAT_HU_MAX))
}

pub fn binarize(slice: &FatWindowedSlice) -> BinaryImage {
    slice.map(|&g| g > 0)
}

pub fn foreground_count(slice: &FatWindowedSlice) -> usize {
    slice.as_slice().iter().filter(|&&g| g > 0).count()
}

/// Intensity-weighted centroid of the nonzero pixels.
pub fn center_of_gravity(slice: &FatWindowedSlice) -> Result<(f64, f64)> {
    let (mut sx, mut sy, mut sw) = (0u64, 0u64, 0u64);
    for y in 0..slice.height() {
        for (x, &g) in slice.row(y).iter().enumerate() {
            if g > 0 {
                let g = g as u64;
                sx += x as u64 * g;
                sy += y as u64 * g;
                sw += g;
            }
        }
    }
    if sw == 0 {
        return Err(Error::NoForeground);
    }
    Ok((sx as f64 / sw as f64, sy as f64 / sw as f64))
}
