//! On-disk formats: patient manifests, 16-bit slice images, palette masks,
//! and atomic output helpers.
//!
//! Slice images store `HU + 1024` as unsigned 16-bit grey. Masks are lossless
//! RGB images restricted to a six-colour palette:
//!
//! | colour | label        |
//! |--------|--------------|
//! | black  | background   |
//! | red    | epicardial   |
//! | green  | mediastinal  |
//! | blue   | pericardium  |
//! | yellow | hybrid       |
//! | white  | unclassified |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{FatWindowedSlice, Grid, HuSlice, PatientVolume};
use crate::labels::{Label, LabelSlice};

/// Offset added to HU values before storing them as unsigned 16-bit.
pub const HU_OFFSET: i32 = 1024;

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_dir(path);
    fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Fills a fresh temporary directory through `fill`, then renames it to
/// `dest`, replacing any previous directory there.
pub fn write_dir_atomic(dest: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = parent_dir(dest);
    fs::create_dir_all(&parent)?;
    let tmp = tempfile::Builder::new().prefix(".staging-").tempdir_in(&parent)?;
    fill(tmp.path())?;
    if dest.exists() {
        fs::remove_dir_all(dest)?;
    }
    let staged = tmp.keep();
    fs::rename(&staged, dest)?;
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Key/value description of one patient's slice files.
///
/// ```toml
/// patient_id = "P01"
/// hu_offset = 1024
/// spacing = [0.7, 0.7, 3.0]   # optional, mm
/// slices = ["slice_000.png", "slice_001.png"]  # relative to the manifest
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientManifest {
    pub patient_id: String,
    pub hu_offset: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<[f64; 3]>,
    pub slices: Vec<PathBuf>,
}

impl PatientManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Self = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if m.hu_offset != HU_OFFSET {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("hu_offset must be {HU_OFFSET}, got {}", m.hu_offset),
            });
        }
        if m.slices.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "manifest lists no slices".into(),
            });
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Decodes every referenced slice, resolving paths against the
    /// manifest's directory.
    pub fn load_volume(&self, manifest_path: &Path) -> Result<PatientVolume> {
        let base = parent_dir(manifest_path);
        let slices = self
            .slices
            .iter()
            .map(|p| read_hu_slice(&base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        PatientVolume::new(self.patient_id.clone(), slices, self.spacing)
    }
}

/// Loads the manifest at `path` and its volume.
pub fn load_patient(path: &Path) -> Result<PatientVolume> {
    PatientManifest::load(path)?.load_volume(path)
}

/// Writes a volume as `slice_NNN.png` files plus `manifest.toml` into `dir`.
pub fn save_patient(volume: &PatientVolume, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (z, s) in volume.slices().iter().enumerate() {
        let name = PathBuf::from(format!("slice_{z:03}.png"));
        write_hu_slice(s, &dir.join(&name))?;
        names.push(name);
    }
    let manifest = PatientManifest {
        patient_id: volume.patient_id().to_string(),
        hu_offset: HU_OFFSET,
        spacing: volume.spacing(),
        slices: names,
    };
    let path = dir.join("manifest.toml");
    write_atomic(&path, manifest.to_toml().as_bytes())?;
    Ok(path)
}

pub fn encode_hu(slice: &HuSlice) -> ImageBuffer<Luma<u16>, Vec<u16>> {
    let raw: Vec<u16> = slice
        .as_slice()
        .iter()
        .map(|&h| (h + HU_OFFSET).clamp(0, u16::MAX as i32) as u16)
        .collect();
    ImageBuffer::from_raw(slice.width() as u32, slice.height() as u32, raw).expect("buffer matches dimensions")
}

pub fn decode_hu(img: &ImageBuffer<Luma<u16>, Vec<u16>>) -> Result<HuSlice> {
    let values = img.as_raw().iter().map(|&v| v as i32 - HU_OFFSET).collect();
    Grid::from_vec(img.width() as usize, img.height() as usize, values)
}

pub fn write_hu_slice(slice: &HuSlice, path: &Path) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    encode_hu(slice).write_to(&mut buf, image::ImageFormat::Png)?;
    write_atomic(path, buf.get_ref())
}

pub fn read_hu_slice(path: &Path) -> Result<HuSlice> {
    let img = image::open(path)?;
    match img {
        image::DynamicImage::ImageLuma16(buf) => decode_hu(&buf),
        _ => Err(Error::Format {
            path: path.to_path_buf(),
            message: "slice must be a 16-bit grayscale image".into(),
        }),
    }
}

pub fn label_color(label: Label) -> [u8; 3] {
    match label {
        Label::Background => [0, 0, 0],
        Label::Epicardial => [255, 0, 0],
        Label::Mediastinal => [0, 255, 0],
        Label::Pericardium => [0, 0, 255],
        Label::Hybrid => [255, 255, 0],
        Label::Unclassified => [255, 255, 255],
    }
}

pub fn color_label(rgb: [u8; 3]) -> Option<Label> {
    Label::ALL.into_iter().find(|&l| label_color(l) == rgb)
}

/// Colour image in the label palette.
pub type ColorMask = RgbImage;

/// Strict palette decode; any other colour is an error naming its pixel.
pub fn decode_ground_truth(mask: &ColorMask) -> Result<LabelSlice> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut labels = Vec::with_capacity(w * h);
    for (x, y, px) in mask.enumerate_pixels() {
        let [r, g, b] = px.0;
        labels.push(color_label(px.0).ok_or(Error::Palette {
            x: x as usize,
            y: y as usize,
            r,
            g,
            b,
        })?);
    }
    Grid::from_vec(w, h, labels)
}

pub fn render_overlay(labels: &LabelSlice) -> ColorMask {
    RgbImage::from_fn(labels.width() as u32, labels.height() as u32, |x, y| {
        Rgb(label_color(*labels.get(x as usize, y as usize)))
    })
}

/// Palette labels drawn over the grey CT window: background pixels show the
/// windowed grey level, labelled pixels their colour. For viewing only.
pub fn render_blend(labels: &LabelSlice, slice: &FatWindowedSlice) -> RgbImage {
    RgbImage::from_fn(labels.width() as u32, labels.height() as u32, |x, y| {
        let l = *labels.get(x as usize, y as usize);
        if l == Label::Background {
            let g = *slice.get(x as usize, y as usize);
            Rgb([g, g, g])
        } else {
            Rgb(label_color(l))
        }
    })
}

fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn mask_file_name(z: usize) -> String {
    format!("mask_{z:03}.png")
}

pub fn write_label_slice(labels: &LabelSlice, path: &Path) -> Result<()> {
    write_atomic(path, &png_bytes(&render_overlay(labels))?)
}

pub fn write_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    write_atomic(path, &png_bytes(img)?)
}

pub fn read_label_slice(path: &Path) -> Result<LabelSlice> {
    let img = image::open(path)?;
    let rgb = match img {
        image::DynamicImage::ImageRgb8(buf) => buf,
        _ => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "mask must be an 8-bit RGB image".into(),
            })
        }
    };
    decode_ground_truth(&rgb).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `mask_NNN.png` for every slice into `dir`.
pub fn write_mask_dir(labels: &[LabelSlice], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (z, l) in labels.iter().enumerate() {
        write_label_slice(l, &dir.join(mask_file_name(z)))?;
    }
    Ok(())
}

/// Reads every `mask_*.png` in `dir`, ordered by name.
pub fn read_mask_dir(dir: &Path) -> Result<Vec<LabelSlice>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("mask_") && n.ends_with(".png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            message: "no mask_*.png files".into(),
        });
    }
    paths.iter().map(|p| read_label_slice(p)).collect()
}
