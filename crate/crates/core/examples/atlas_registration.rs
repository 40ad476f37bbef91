//! Builds a retrosternal atlas from ten phantom patients, then registers an
//! unseen patient and aligns it to the common frame.
//!
//! cargo run --release --example atlas_registration

use cardiac_fat::phantom::{generate_phantom, phantom_atlas, PhantomSpec};
use cardiac_fat::pipeline::register_and_align;
use cardiac_fat::registration::RegistrationConfig;

fn main() -> cardiac_fat::Result<()> {
    let base = PhantomSpec::default();
    let atlas = phantom_atlas(&base, 100..110)?;
    println!("atlas {}x{} from {} sources, anchor {:?}", atlas.width(), atlas.height(), atlas.n_sources(), atlas.anchor());

    let config = RegistrationConfig::default();
    for seed in [1, 2, 3] {
        let spec = PhantomSpec {
            noise_hu: 20.0,
            ..base.with_seed(seed)
        };
        let patient = generate_phantom(&spec, &format!("P{seed}"))?;
        let aligned = register_and_align(&patient.volume, Some(&patient.truth), &atlas, &config, None, false)?;
        let r = &aligned.registration;
        println!(
            "{}: planted {:?}, found {:?}, score {:.4} vs {:.4}, confirmed {}, shift {:?}",
            r.patient_id, patient.retro_position, r.position, r.score, r.second_best_score, r.confirmed, r.translation
        );
    }
    Ok(())
}
