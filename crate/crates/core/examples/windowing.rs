//! Fat windowing of a CT slice: HU to grey levels, foreground mask and
//! centroid.
//!
//! cargo run --example windowing

use cardiac_fat::imaging::{binarize, center_of_gravity, foreground_count, window_default, window_value, FAT_HU_MAX, FAT_HU_MIN};
use cardiac_fat::phantom::{generate_phantom, PhantomSpec};

fn main() -> cardiac_fat::Result<()> {
    println!("window [{FAT_HU_MIN}, {FAT_HU_MAX}] HU");
    for hu in [-1000, -201, -200, -115, -30, -29, 40] {
        println!("  {hu:>6} HU -> grey {}", window_value(hu, FAT_HU_MIN, FAT_HU_MAX));
    }

    let phantom = generate_phantom(&PhantomSpec::default(), "demo")?;
    let slice = &phantom.volume.slices()[3];
    let windowed = window_default(slice);
    let mask = binarize(&windowed);
    let (cx, cy) = center_of_gravity(&windowed)?;
    println!(
        "slice 3: {}x{}, {} fat pixels ({} in the mask), centroid ({cx:.1}, {cy:.1})",
        windowed.width(),
        windowed.height(),
        foreground_count(&windowed),
        mask.as_slice().iter().filter(|&&b| b).count(),
    );
    Ok(())
}
