//! The 18 per-pixel texture features of a few phantom pixels, one per
//! tissue class.
//!
//! cargo run --example texture_features

use cardiac_fat::features::{extract_pixel_features, FeatureSchema};
use cardiac_fat::imaging::center_of_gravity;
use cardiac_fat::labels::Label;
use cardiac_fat::phantom::{generate_phantom, PhantomSpec};
use cardiac_fat::pipeline::windowed_volume;

fn main() -> cardiac_fat::Result<()> {
    let phantom = generate_phantom(&PhantomSpec::default(), "demo")?;
    let volume = windowed_volume(&phantom.volume);
    let schema = FeatureSchema::new(5)?;
    let z = 4;
    let cog = center_of_gravity(&volume[z])?;
    println!("schema {} ({})", schema.hash(), schema.descriptor());

    let truth = &phantom.truth[z];
    for wanted in [Label::Epicardial, Label::Mediastinal, Label::Pericardium] {
        let Some(i) = truth.as_slice().iter().position(|&l| l == wanted) else {
            continue;
        };
        let (x, y) = (i % truth.width(), i / truth.width());
        let values = extract_pixel_features(&volume, z, x, y, &schema, cog)?;
        println!("\n{wanted:?} pixel at ({x}, {y})");
        for (name, v) in schema.feature_names().iter().zip(values) {
            println!("  {name:<24} {v:>12.5}");
        }
    }
    Ok(())
}
