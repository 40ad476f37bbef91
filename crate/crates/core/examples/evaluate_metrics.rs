//! Confusion counts, Dice and the per-patient report on hand-made masks,
//! with both hybrid scoring rules.
//!
//! cargo run --example evaluate_metrics

use cardiac_fat::eval::{confusion_from_masks, per_patient_report, HybridScoring};
use cardiac_fat::imaging::Grid;
use cardiac_fat::labels::{Label, TissueClass};

fn main() -> cardiac_fat::Result<()> {
    use Label::*;
    let truth = Grid::from_vec(4, 2, vec![Epicardial, Epicardial, Mediastinal, Background, Epicardial, Pericardium, Mediastinal, Background])?;
    let pred = Grid::from_vec(4, 2, vec![Epicardial, Hybrid, Mediastinal, Mediastinal, Unclassified, Hybrid, Mediastinal, Background])?;

    for mode in [HybridScoring::Both, HybridScoring::Strict] {
        println!("{mode:?}");
        for class in TissueClass::ALL {
            let c = confusion_from_masks(std::slice::from_ref(&pred), std::slice::from_ref(&truth), class, mode)?;
            let dice = c.dice().map_or("n/a".to_string(), |d| format!("{d:.3}"));
            println!("  {class:<12} tp {} fp {} fn {} tn {}  dice {dice}", c.tp, c.fp, c.fn_, c.tn);
        }
    }

    let report = per_patient_report(
        &[("demo".into(), vec![pred])],
        &[("demo".into(), vec![truth])],
        HybridScoring::Both,
    )?;
    print!("\n{}", report.to_table());
    Ok(())
}
