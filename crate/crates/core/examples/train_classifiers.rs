//! Trains each learner on one one-vs-rest problem, reports training accuracy
//! and round-trips the model through its text format.
//!
//! cargo run --release --example train_classifiers

use cardiac_fat::classify::{BinaryData, LearnerSpec, TrainedModel};
use cardiac_fat::features::{build_dataset, FeatureSchema, PatientSlices};
use cardiac_fat::labels::TissueClass;
use cardiac_fat::phantom::{generate_phantom, PhantomSpec};
use cardiac_fat::pipeline::windowed_volume;

fn main() -> cardiac_fat::Result<()> {
    let spec = PhantomSpec {
        n_slices: 3,
        ..PhantomSpec::default()
    };
    let p = generate_phantom(&spec, "train")?;
    let patient = PatientSlices::new("train", windowed_volume(&p.volume), Some(p.truth))?;
    let schema = FeatureSchema::default();
    let data = build_dataset(&[patient], &schema, 0.1, 1)?;
    println!("{} rows, per class {:?}", data.len(), data.class_counts());

    let binary = BinaryData::from_dataset(&data, TissueClass::Epicardial)?;
    let mut x = vec![0.0; binary.n_features()];
    for name in ["tree", "forest", "gnb", "hyperpipes"] {
        let learner = LearnerSpec::from_name(name, 7)?;
        let model = TrainedModel {
            schema_hash: schema.hash(),
            target: TissueClass::Epicardial,
            model: learner.train(&binary)?,
        };
        let correct = (0..binary.n_rows())
            .filter(|&r| {
                binary.fill_row(r, &mut x);
                model.model.predict(&x).0 == binary.label(r)
            })
            .count();
        let text = model.to_text();
        assert_eq!(TrainedModel::from_text(&text)?, model);
        println!(
            "{name:<10} epicardial training accuracy {:.2}%, model file {} bytes",
            100.0 * correct as f64 / binary.n_rows() as f64,
            text.len()
        );
    }
    Ok(())
}
