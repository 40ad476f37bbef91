//! Optional check on real labeled scans. Set `CARDIAC_FAT_PATIENTS` to a
//! patient list (`<manifest> <truth dir>` lines) and optionally
//! `CARDIAC_FAT_ATLAS` to an atlas file; without them the test is skipped.

use std::path::PathBuf;

use cardiac_fat::atlas::ProbAtlas;
use cardiac_fat::classify::{train_segmenter, LearnerSpec};
use cardiac_fat::eval::{confusion_from_masks, HybridScoring};
use cardiac_fat::features::{build_dataset, FeatureSchema};
use cardiac_fat::io::{load_patient, read_mask_dir};
use cardiac_fat::labels::TissueClass;
use cardiac_fat::pipeline::{load_patient_list, register_and_align, segment_patient, windowed_volume, AlignedPatient};
use cardiac_fat::registration::{RegistrationConfig, RegistrationResult};

#[test]
fn held_out_epicardial_dice_on_real_scans() {
    let Some(list) = std::env::var_os("CARDIAC_FAT_PATIENTS").map(PathBuf::from) else {
        eprintln!("CARDIAC_FAT_PATIENTS not set; skipping");
        return;
    };
    let atlas = std::env::var_os("CARDIAC_FAT_ATLAS").map(|p| ProbAtlas::load(&PathBuf::from(p)).unwrap());
    let config = RegistrationConfig::default();
    let patients: Vec<AlignedPatient> = load_patient_list(&list)
        .unwrap()
        .iter()
        .map(|e| {
            let volume = load_patient(&e.manifest).unwrap();
            let truth = read_mask_dir(e.truth.as_ref().expect("every patient needs truth masks")).unwrap();
            match &atlas {
                Some(a) => register_and_align(&volume, Some(&truth), a, &config, None, true).unwrap(),
                None => AlignedPatient {
                    registration: RegistrationResult::identity(volume.patient_id()),
                    slices: windowed_volume(&volume),
                    truth: Some(truth),
                },
            }
        })
        .collect();
    assert!(patients.len() >= 3, "need at least three labeled patients");
    let n_train = (patients.len() * 2).div_ceil(3);
    let train: Vec<_> = patients[..n_train].iter().map(|p| p.to_patient_slices().unwrap()).collect();
    let data = build_dataset(&train, &FeatureSchema::default(), 0.05, 1).unwrap();
    let model = train_segmenter(&data, &LearnerSpec::from_name("forest", 7).unwrap()).unwrap();
    let test = &patients[n_train..];
    let mut total = 0.0;
    for p in test {
        let pred = segment_patient(&model, p).unwrap();
        let truth = p.unalign(p.truth.as_ref().unwrap());
        total += confusion_from_masks(&pred, &truth, TissueClass::Epicardial, HybridScoring::Both)
            .unwrap()
            .dice()
            .unwrap();
    }
    let mean = total / test.len() as f64;
    eprintln!("mean held-out epicardial dice {mean:.4} over {} patients", test.len());
    assert!(mean >= 0.90);
}
