//! Writes a phantom cohort in the on-disk patient format, then reads it back
//! the way the command-line tools do: patient list, manifests, truth masks
//! and the atlas region file.
//!
//! cargo run --example phantom_cohort -- /tmp/cohort

use std::path::PathBuf;

use cardiac_fat::io::{load_patient, read_mask_dir};
use cardiac_fat::pipeline::{build_atlas_from_rois, load_patient_list, write_phantom_cohort, PhantomCohort};

fn main() -> cardiac_fat::Result<()> {
    let keep: Option<PathBuf> = std::env::args_os().nth(1).map(Into::into);
    let scratch = tempfile::tempdir()?;
    let out = keep.unwrap_or_else(|| scratch.path().join("cohort"));

    let cohort = PhantomCohort::from_toml("patients = 4\nseed = 30\nn_slices = 4\nnoise_hu = 5.0\n")?;
    write_phantom_cohort(&cohort, &out)?;
    println!("cohort written to {}", out.display());

    for entry in load_patient_list(&out.join("patients.txt"))? {
        let volume = load_patient(&entry.manifest)?;
        let truth = read_mask_dir(entry.truth.as_deref().expect("cohorts list truth dirs"))?;
        let (w, h) = volume.dims();
        println!("  {}: {} slices of {w}x{h}, {} truth masks", volume.patient_id(), volume.slices().len(), truth.len());
    }
    let atlas = build_atlas_from_rois(&out.join("rois.csv"))?;
    println!("atlas from rois.csv: {}x{}, {} sources", atlas.width(), atlas.height(), atlas.n_sources());
    Ok(())
}
