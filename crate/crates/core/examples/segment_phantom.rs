//! End to end on synthetic patients: atlas, registration, feature
//! extraction, forest training, segmentation of held-out patients and
//! per-patient scoring. Masks and overlays of the first held-out patient are
//! written to the directory given as the first argument, if any.
//!
//! cargo run --release --example segment_phantom -- /tmp/segmented

use std::path::PathBuf;

use cardiac_fat::classify::{train_segmenter, LearnerSpec};
use cardiac_fat::eval::{per_patient_report, HybridScoring};
use cardiac_fat::features::{build_dataset, FeatureSchema};
use cardiac_fat::io::{mask_file_name, render_blend, write_dir_atomic, write_label_slice, write_rgb};
use cardiac_fat::phantom::{generate_phantom, phantom_atlas, PhantomSpec};
use cardiac_fat::pipeline::{register_and_align, segment_patient, windowed_volume};
use cardiac_fat::registration::RegistrationConfig;

fn main() -> cardiac_fat::Result<()> {
    let out: Option<PathBuf> = std::env::args_os().nth(1).map(Into::into);
    let base = PhantomSpec::default();
    let atlas = phantom_atlas(&base, 10_000..10_010)?;
    let config = RegistrationConfig::default();

    let mut phantoms = Vec::new();
    let mut aligned = Vec::new();
    for seed in 0..12u64 {
        let p = generate_phantom(&base.with_seed(seed), &format!("P{seed:02}"))?;
        aligned.push(register_and_align(&p.volume, Some(&p.truth), &atlas, &config, None, false)?);
        phantoms.push(p);
    }
    let train = aligned[..10].iter().map(|a| a.to_patient_slices()).collect::<cardiac_fat::Result<Vec<_>>>()?;
    let data = build_dataset(&train, &FeatureSchema::default(), 0.1, 1)?;
    println!("training on {} rows", data.len());
    let model = train_segmenter(&data, &LearnerSpec::from_name("forest", 7)?)?;

    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (p, a) in phantoms.iter().zip(&aligned).skip(10) {
        pred.push((a.patient_id().to_string(), segment_patient(&model, a)?));
        truth.push((a.patient_id().to_string(), p.truth.clone()));
    }
    print!("{}", per_patient_report(&pred, &truth, HybridScoring::Both)?.to_table());

    if let Some(dir) = out {
        let windowed = windowed_volume(&phantoms[10].volume);
        write_dir_atomic(&dir, |tmp| {
            for (z, (labels, slice)) in pred[0].1.iter().zip(&windowed).enumerate() {
                write_label_slice(labels, &tmp.join(mask_file_name(z)))?;
                write_rgb(&render_blend(labels, slice), &tmp.join(format!("overlay_{z:03}.png")))?;
            }
            Ok(())
        })?;
        println!("masks and overlays written to {}", dir.display());
    }
    Ok(())
}
