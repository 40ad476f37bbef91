//! End-to-end orchestration shared by the command-line tool and the
//! examples: ROI files, registration plus alignment, phantom cohorts and
//! patient lists.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atlas::{build_atlas, crop_roi, ProbAtlas, RoiSelection};
use crate::classify::{segment_volume, SegmenterModel};
use crate::error::{Error, Result};
use crate::eval::PatientLabels;
use crate::features::PatientSlices;
use crate::imaging::{binarize, window_default, FatWindowedSlice, PatientVolume};
use crate::io::{load_patient, read_mask_dir, save_patient, write_atomic, write_dir_atomic, write_mask_dir};
use crate::labels::{Label, LabelSlice};
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::registration::{align_patient, default_reference_point, register_volume, translate, RegistrationConfig, RegistrationResult};

pub fn windowed_volume(volume: &PatientVolume) -> Vec<FatWindowedSlice> {
    volume.slices().iter().map(window_default).collect()
}

/// One line of an ROI file, with the manifest path already resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiEntry {
    pub manifest: PathBuf,
    pub roi: RoiSelection,
}

/// Reads a CSV ROI file with columns `manifest,z,x,y,w,h`; manifest paths
/// are relative to the ROI file.
pub fn load_roi_file(path: &Path) -> Result<Vec<RoiEntry>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["manifest", "z", "x", "y", "w", "h"] {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "expected columns manifest,z,x,y,w,h".into(),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<usize> {
            rec[i].trim().parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                message: format!("bad number `{}`", &rec[i]),
            })
        };
        let manifest = base.join(rec[0].trim());
        out.push(RoiEntry {
            roi: RoiSelection {
                patient_id: manifest.display().to_string(),
                z: num(1)?,
                x: num(2)?,
                y: num(3)?,
                w: num(4)?,
                h: num(5)?,
            },
            manifest,
        });
    }
    if out.is_empty() {
        return Err(Error::NoSources);
    }
    Ok(out)
}

pub fn write_roi_file(entries: &[RoiEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["manifest", "z", "x", "y", "w", "h"])?;
    for e in entries {
        let r = &e.roi;
        w.write_record([
            e.manifest.display().to_string(),
            r.z.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.w.to_string(),
            r.h.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Crops, binarizes and averages every ROI of the file.
pub fn build_atlas_from_rois(path: &Path) -> Result<ProbAtlas> {
    let crops = load_roi_file(path)?
        .iter()
        .map(|e| {
            let volume = load_patient(&e.manifest)?;
            let slice = volume.slices().get(e.roi.z).ok_or_else(|| {
                Error::InvalidParameter(format!("{} has no slice {}", e.manifest.display(), e.roi.z))
            })?;
            crop_roi(&binarize(&window_default(slice)), &e.roi)
        })
        .collect::<Result<Vec<_>>>()?;
    build_atlas(&crops)
}

/// A patient moved into the common atlas frame.
#[derive(Debug, Clone)]
pub struct AlignedPatient {
    pub registration: RegistrationResult,
    pub slices: Vec<FatWindowedSlice>,
    pub truth: Option<Vec<LabelSlice>>,
}

impl AlignedPatient {
    pub fn patient_id(&self) -> &str {
        &self.registration.patient_id
    }

    pub fn to_patient_slices(&self) -> Result<PatientSlices> {
        PatientSlices::new(self.patient_id(), self.slices.clone(), self.truth.clone())
    }

    /// Moves labels from the aligned frame back to the patient's frame.
    pub fn unalign(&self, labels: &[LabelSlice]) -> Vec<LabelSlice> {
        let (dx, dy) = self.registration.translation;
        labels.iter().map(|l| translate(l, -dx, -dy, Label::Background)).collect()
    }
}

/// Registers a volume against `atlas` and translates its windowed slices
/// (and truth, when given) into the common frame. Unconfirmed registrations
/// are an error unless `force` is set.
pub fn register_and_align(
    volume: &PatientVolume,
    truth: Option<&[LabelSlice]>,
    atlas: &ProbAtlas,
    config: &RegistrationConfig,
    slice: Option<usize>,
    force: bool,
) -> Result<AlignedPatient> {
    let windowed = windowed_volume(volume);
    let (w, h) = volume.dims();
    let registration = register_volume(volume.patient_id(), &windowed, atlas, default_reference_point(w, h), slice, config)?;
    let slices = align_patient(&windowed, &registration, 0, force)?;
    let truth = truth
        .map(|t| align_patient(t, &registration, Label::Background, force))
        .transpose()?;
    Ok(AlignedPatient {
        registration,
        slices,
        truth,
    })
}

/// Segments an aligned patient and returns labels in the patient's frame.
pub fn segment_patient(model: &SegmenterModel, patient: &AlignedPatient) -> Result<Vec<LabelSlice>> {
    let aligned = segment_volume(model, &patient.slices, &model.schema)?;
    Ok(patient.unalign(&aligned))
}

/// Phantom cohort description read by `phantom --spec`.
///
/// Patient `i` uses seed `spec.seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomCohort {
    pub patients: usize,
    pub id_prefix: String,
    #[serde(flatten)]
    pub spec: PhantomSpec,
}

impl Default for PhantomCohort {
    fn default() -> Self {
        Self {
            patients: 1,
            id_prefix: "PH".into(),
            spec: PhantomSpec::default(),
        }
    }
}

impl PhantomCohort {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::PhantomSpec(e.to_string()))?;
        if c.patients == 0 {
            return Err(Error::PhantomSpec("patients must be at least 1".into()));
        }
        c.spec.validate()?;
        Ok(c)
    }

    pub fn patient_id(&self, i: usize) -> String {
        format!("{}{:03}", self.id_prefix, i)
    }

    pub fn patient_spec(&self, i: usize) -> PhantomSpec {
        self.spec.with_seed(self.spec.seed.wrapping_add(i as u64))
    }
}

/// Writes a cohort to `out`:
///
/// ```text
/// out/<id>/manifest.toml, slice_NNN.png   volume
/// out/<id>/truth/mask_NNN.png             ground truth
/// out/<id>/retro.txt                      planted window corner "x y"
/// out/rois.csv                            planted windows, for `atlas build`
/// out/patients.txt                        "<manifest> <truth dir>" per line
/// ```
pub fn write_phantom_cohort(cohort: &PhantomCohort, out: &Path) -> Result<Vec<RoiEntry>> {
    cohort.spec.validate()?;
    let mut rois = Vec::new();
    write_dir_atomic(out, |tmp| {
        let mut list = String::new();
        for i in 0..cohort.patients {
            let id = cohort.patient_id(i);
            let p = generate_phantom(&cohort.patient_spec(i), &id)?;
            let dir = tmp.join(&id);
            save_patient(&p.volume, &dir)?;
            write_mask_dir(&p.truth, &dir.join("truth"))?;
            let (x, y) = p.retro_position;
            fs::write(dir.join("retro.txt"), format!("{x} {y}\n"))?;
            let z = crate::registration::select_registration_slice(&windowed_volume(&p.volume));
            rois.push(RoiEntry {
                manifest: PathBuf::from(&id).join("manifest.toml"),
                roi: RoiSelection {
                    patient_id: id.clone(),
                    z,
                    x,
                    y,
                    w: crate::atlas::DEFAULT_ROI_WIDTH,
                    h: crate::atlas::DEFAULT_ROI_HEIGHT,
                },
            });
            list.push_str(&format!("{id}/manifest.toml {id}/truth\n"));
        }
        write_roi_file(&rois, &tmp.join("rois.csv"))?;
        fs::write(tmp.join("patients.txt"), list)?;
        Ok(())
    })?;
    Ok(rois)
}

/// One line of a patient list: a manifest and an optional truth mask dir.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientEntry {
    pub manifest: PathBuf,
    pub truth: Option<PathBuf>,
}

/// Reads `<manifest> [<truth dir>]` lines, resolving paths against the list
/// file's directory. Blank lines and `#` comments are skipped.
pub fn load_patient_list(path: &Path) -> Result<Vec<PatientEntry>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let manifest = base.join(parts.next().expect("line is not empty"));
        let truth = parts.next().map(|t| base.join(t));
        if parts.next().is_some() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("too many fields in `{line}`"),
            });
        }
        out.push(PatientEntry { manifest, truth });
    }
    Ok(out)
}

/// Loads every listed patient that has truth masks, aligned to `atlas` when
/// one is given.
pub fn load_labeled_patients(entries: &[PatientEntry], atlas: Option<&ProbAtlas>, config: &RegistrationConfig, force: bool) -> Result<Vec<PatientSlices>> {
    entries
        .iter()
        .map(|e| {
            let volume = load_patient(&e.manifest)?;
            let truth_dir = e
                .truth
                .as_ref()
                .ok_or_else(|| Error::MissingPatient(volume.patient_id().to_string()))?;
            let truth = read_mask_dir(truth_dir)?;
            match atlas {
                Some(a) => register_and_align(&volume, Some(&truth), a, config, None, force)?.to_patient_slices(),
                None => PatientSlices::new(volume.patient_id(), windowed_volume(&volume), Some(truth)),
            }
        })
        .collect()
}

fn has_masks(dir: &Path) -> bool {
    fs::read_dir(dir).is_ok_and(|it| {
        it.filter_map(|e| e.ok())
            .any(|e| e.file_name().to_str().is_some_and(|n| n.starts_with("mask_") && n.ends_with(".png")))
    })
}

/// Label volumes under `dir`: the directory itself when it holds masks
/// (patient named after the directory), otherwise every subdirectory that
/// holds masks, or its `truth/` subdirectory.
pub fn read_label_tree(dir: &Path) -> Result<Vec<PatientLabels>> {
    if has_masks(dir) {
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "patient".into());
        return Ok(vec![(id, read_mask_dir(dir)?)]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let mut out = Vec::new();
    for d in subdirs {
        let id = d.file_name().expect("directory entry has a name").to_string_lossy().into_owned();
        if has_masks(&d) {
            out.push((id, read_mask_dir(&d)?));
        } else if has_masks(&d.join("truth")) {
            out.push((id, read_mask_dir(&d.join("truth"))?));
        }
    }
    if out.is_empty() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            message: "no mask directories found".into(),
        });
    }
    Ok(out)
}
