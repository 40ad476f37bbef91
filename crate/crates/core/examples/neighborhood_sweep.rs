//! Mean one-vs-rest accuracy as a function of the neighborhood size, printed
//! as a table and as two-column plot data.
//!
//! cargo run --release --example neighborhood_sweep

use cardiac_fat::classify::LearnerSpec;
use cardiac_fat::eval::{format_sweep, neighborhood_sweep, sweep_plot_data, SplitSpec};
use cardiac_fat::features::PatientSlices;
use cardiac_fat::phantom::{generate_phantom, PhantomSpec};
use cardiac_fat::pipeline::windowed_volume;

fn main() -> cardiac_fat::Result<()> {
    let patients = (0..2u64)
        .map(|seed| {
            let spec = PhantomSpec {
                n_slices: 2,
                noise_hu: 10.0,
                ..PhantomSpec::default().with_seed(seed)
            };
            let p = generate_phantom(&spec, &format!("P{seed}"))?;
            PatientSlices::new(p.volume.patient_id(), windowed_volume(&p.volume), Some(p.truth))
        })
        .collect::<cardiac_fat::Result<Vec<_>>>()?;
    let rows = neighborhood_sweep(&patients, &[3, 5, 7, 9, 11], &LearnerSpec::from_name("tree", 1)?, &SplitSpec::default(), 0.05)?;
    print!("{}\n{}", format_sweep(&rows), sweep_plot_data(&rows));
    Ok(())
}
