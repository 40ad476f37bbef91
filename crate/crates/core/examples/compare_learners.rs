//! Accuracy, time and accuracy-per-time of the four learners on one seeded
//! split of a phantom dataset.
//!
//! cargo run --release --example compare_learners

use cardiac_fat::classify::LearnerSpec;
use cardiac_fat::eval::{compare_classifiers, format_comparison, SplitSpec};
use cardiac_fat::features::{build_dataset, FeatureSchema, PatientSlices};
use cardiac_fat::phantom::{generate_phantom, PhantomSpec};
use cardiac_fat::pipeline::windowed_volume;

fn main() -> cardiac_fat::Result<()> {
    let patients = (0..3u64)
        .map(|seed| {
            let spec = PhantomSpec {
                n_slices: 3,
                noise_hu: 10.0,
                ..PhantomSpec::default().with_seed(seed)
            };
            let p = generate_phantom(&spec, &format!("P{seed}"))?;
            PatientSlices::new(p.volume.patient_id(), windowed_volume(&p.volume), Some(p.truth))
        })
        .collect::<cardiac_fat::Result<Vec<_>>>()?;
    let data = build_dataset(&patients, &FeatureSchema::default(), 0.05, 1)?;
    let learners = ["tree", "forest", "gnb", "hyperpipes"]
        .iter()
        .map(|n| LearnerSpec::from_name(n, 1))
        .collect::<cardiac_fat::Result<Vec<_>>>()?;
    let rows = compare_classifiers(&data, &learners, &SplitSpec::default())?;
    println!("{} rows, 66% train\n", data.len());
    print!("{}", format_comparison(&rows));
    Ok(())
}
