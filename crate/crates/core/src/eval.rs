//! Segmentation metrics, the random split protocol, the learner comparison
//! table, the neighborhood sweep and per-patient reports.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classify::{BinaryData, LearnerSpec};
use crate::error::{Error, Result};
use crate::features::{build_dataset, Dataset, FeatureSchema, PatientSlices};
use crate::labels::{Label, LabelSlice, TissueClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Result<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn tpr(&self) -> Result<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn dice(&self) -> Result<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

fn ratio(num: u64, den: u64) -> Result<f64> {
    if den == 0 {
        Err(Error::UndefinedMetric)
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// How hybrid labels are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HybridScoring {
    /// Hybrid is positive for both the epicardial and mediastinal targets.
    #[default]
    Both,
    /// Hybrid is positive for neither.
    Strict,
}

fn is_positive(label: Label, target: TissueClass, mode: HybridScoring) -> bool {
    label == target.label()
        || (label == Label::Hybrid
            && mode == HybridScoring::Both
            && matches!(target, TissueClass::Epicardial | TissueClass::Mediastinal))
}

/// Tally over foreground pixels, i.e. pixels that are not background in
/// either grid.
pub fn confusion_from_masks(
    pred: &[LabelSlice],
    truth: &[LabelSlice],
    target: TissueClass,
    mode: HybridScoring,
) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::shape((truth.len(), 1), (pred.len(), 1)));
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.iter().zip(truth) {
        p.same_dims(t)?;
        for (&pl, &tl) in p.as_slice().iter().zip(t.as_slice()) {
            if pl == Label::Background && tl == Label::Background {
                continue;
            }
            match (is_positive(pl, target, mode), is_positive(tl, target, mode)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.66,
            seed: 1,
        }
    }
}

/// Seeded shuffle of `0..n`; the first `ceil(n * fraction)` go to training.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((n as f64) * spec.train_fraction).ceil() as usize;
    let test = idx.split_off(n_train.min(n));
    Ok((idx, test))
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let (train, test) = split_indices(data.len(), spec)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Mean binary test accuracy of `spec` over the three one-vs-rest problems.
pub fn one_vs_rest_accuracy(train: &Dataset, test: &Dataset, spec: &LearnerSpec) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut total = 0.0;
    for class in TissueClass::ALL {
        let model = spec.train(&BinaryData::from_dataset(train, class)?)?;
        let eval = BinaryData::from_dataset(test, class)?;
        let mut x = vec![0.0; eval.n_features()];
        let correct = (0..eval.n_rows())
            .filter(|&r| {
                eval.fill_row(r, &mut x);
                model.predict(&x).0 == eval.label(r)
            })
            .count();
        total += correct as f64 / eval.n_rows() as f64;
    }
    Ok(total / 3.0)
}

/// Accuracy in percent per second of wall time.
pub fn acc_per_time(accuracy: f64, seconds: f64) -> f64 {
    100.0 * accuracy / seconds
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub learner: String,
    /// Fraction in `[0, 1]`; `None` when the learner failed.
    pub accuracy: Option<f64>,
    pub wall_time: f64,
    pub acc_per_time: Option<f64>,
    pub error: Option<String>,
}

impl ComparisonRow {
    /// A finished row; Acc/Time is derived from the other two columns.
    pub fn new(learner: impl Into<String>, accuracy: f64, wall_time: f64) -> Self {
        Self {
            learner: learner.into(),
            accuracy: Some(accuracy),
            wall_time,
            acc_per_time: Some(acc_per_time(accuracy, wall_time)),
            error: None,
        }
    }
}

/// Trains and scores every learner on one seeded split. Timing covers
/// training and evaluation only. Failed learners keep a row with their
/// error; rows are sorted by accuracy, best first.
pub fn compare_classifiers(data: &Dataset, learners: &[LearnerSpec], spec: &SplitSpec) -> Result<Vec<ComparisonRow>> {
    if learners.is_empty() {
        return Err(Error::InvalidParameter("no learners to compare".into()));
    }
    let (train, test) = split(data, spec)?;
    let mut rows: Vec<ComparisonRow> = learners
        .iter()
        .map(|l| {
            let start = Instant::now();
            let outcome = one_vs_rest_accuracy(&train, &test, l);
            let secs = start.elapsed().as_secs_f64().max(1e-9);
            match outcome {
                Ok(acc) => ComparisonRow::new(l.name(), acc, secs),
                Err(e) => ComparisonRow {
                    learner: l.name().to_string(),
                    accuracy: None,
                    wall_time: secs,
                    acc_per_time: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &ComparisonRow| r.accuracy.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a))
    });
    Ok(rows)
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                write!(s, "{c:<w$}").unwrap();
            } else {
                write!(s, "  {c:>w$}").unwrap();
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    line(
        &mut out,
        &widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>(),
    );
    for r in rows {
        line(&mut out, r);
    }
    out
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const COMPARISON_HEADER: [&str; 4] = ["Algorithm", "Accuracy", "Time (s)", "Acc/Time"];

fn comparison_cells(rows: &[ComparisonRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| match (r.accuracy, r.acc_per_time) {
            (Some(a), Some(apt)) => vec![
                r.learner.clone(),
                format!("{:.1}%", 100.0 * a),
                format!("{:.2}", r.wall_time),
                format!("{apt:.2}"),
            ],
            _ => vec![
                r.learner.clone(),
                format!("error: {}", r.error.as_deref().unwrap_or("unknown")),
                format!("{:.2}", r.wall_time),
                "-".into(),
            ],
        })
        .collect()
}

/// Accuracy / time / accuracy-per-time table.
pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    aligned(&COMPARISON_HEADER, &comparison_cells(rows))
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String> {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.learner.clone(),
                r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                r.wall_time.to_string(),
                r.acc_per_time.map(|a| a.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    csv_text(&["learner", "accuracy", "wall_time_s", "acc_per_time"], &cells)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    /// Mean one-vs-rest accuracy rounded to 4 decimals.
    pub accuracy: f64,
}

pub const DEFAULT_SWEEP_SIZES: [usize; 7] = [3, 5, 7, 9, 11, 13, 15];

/// Re-extracts, trains and evaluates at every neighborhood size.
pub fn neighborhood_sweep(
    patients: &[PatientSlices],
    sizes: &[usize],
    learner: &LearnerSpec,
    spec: &SplitSpec,
    sample_rate: f64,
) -> Result<Vec<SweepRow>> {
    for &w in sizes {
        if w < 3 || w % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "neighborhood sizes must be odd and at least 3, got {w}"
            )));
        }
    }
    sizes
        .iter()
        .map(|&w| {
            let data = build_dataset(patients, &FeatureSchema::new(w)?, sample_rate, spec.seed)?;
            let (train, test) = split(&data, spec)?;
            let acc = one_vs_rest_accuracy(&train, &test, learner)?;
            Ok(SweepRow {
                size: w,
                accuracy: (acc * 1e4).round() / 1e4,
            })
        })
        .collect()
}

/// Two-column `size accuracy` plot data.
pub fn sweep_plot_data(rows: &[SweepRow]) -> String {
    let mut s = String::from("# size accuracy\n");
    for r in rows {
        writeln!(s, "{} {:.4}", r.size, r.accuracy).unwrap();
    }
    s
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.size.to_string(), format!("{:.4}", r.accuracy)])
        .collect();
    aligned(&["Neighborhood", "Accuracy"], &cells)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.size.to_string(), format!("{:.4}", r.accuracy)])
        .collect();
    csv_text(&["size", "accuracy"], &cells)
}

/// Scores of one patient and class; undefined metrics are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub patient: String,
    pub class: TissueClass,
    pub dice: Option<f64>,
    pub tpr: Option<f64>,
    pub accuracy: Option<f64>,
    pub unclassified_rate: Option<f64>,
}

/// Per-patient rows followed by one macro-mean row per class (patient
/// `"mean"`), averaging the defined values.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientReport {
    pub rows: Vec<ReportRow>,
    pub means: Vec<ReportRow>,
}

pub type PatientLabels = (String, Vec<LabelSlice>);

fn unclassified_rate(pred: &[LabelSlice]) -> Option<f64> {
    let (mut fg, mut un) = (0u64, 0u64);
    for s in pred {
        for &l in s.as_slice() {
            if l != Label::Background {
                fg += 1;
                un += (l == Label::Unclassified) as u64;
            }
        }
    }
    ratio(un, fg).ok()
}

/// Scores every predicted patient against its ground truth. Truth patients
/// without a prediction are ignored; a prediction without truth is an error.
pub fn per_patient_report(pred: &[PatientLabels], truth: &[PatientLabels], mode: HybridScoring) -> Result<PatientReport> {
    if pred.is_empty() {
        return Err(Error::InvalidParameter("no predicted patients".into()));
    }
    let mut rows = Vec::new();
    for (id, p) in pred {
        let t = &truth
            .iter()
            .find(|(tid, _)| tid == id)
            .ok_or_else(|| Error::MissingPatient(id.clone()))?
            .1;
        let unclassified = unclassified_rate(p);
        for class in TissueClass::ALL {
            let c = confusion_from_masks(p, t, class, mode)?;
            rows.push(ReportRow {
                patient: id.clone(),
                class,
                dice: c.dice().ok(),
                tpr: c.tpr().ok(),
                accuracy: c.accuracy().ok(),
                unclassified_rate: unclassified,
            });
        }
    }
    let mean = |vals: Vec<Option<f64>>| {
        let defined: Vec<f64> = vals.into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let means = TissueClass::ALL
        .iter()
        .map(|&class| {
            let of = |f: fn(&ReportRow) -> Option<f64>| mean(rows.iter().filter(|r| r.class == class).map(f).collect());
            ReportRow {
                patient: "mean".into(),
                class,
                dice: of(|r| r.dice),
                tpr: of(|r| r.tpr),
                accuracy: of(|r| r.accuracy),
                unclassified_rate: of(|r| r.unclassified_rate),
            }
        })
        .collect();
    Ok(PatientReport { rows, means })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{:.1}%", 100.0 * v))
}

impl PatientReport {
    fn cells(&self, fmt: fn(Option<f64>) -> String) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .chain(&self.means)
            .map(|r| {
                vec![
                    r.patient.clone(),
                    r.class.to_string(),
                    fmt(r.dice),
                    fmt(r.tpr),
                    fmt(r.accuracy),
                    fmt(r.unclassified_rate),
                ]
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        aligned(
            &["Patient", "Class", "Dice", "T.P.", "Accuracy", "Unclassified"],
            &self.cells(pct),
        )
    }

    pub fn to_csv(&self) -> Result<String> {
        csv_text(
            &["patient", "class", "dice", "tpr", "accuracy", "unclassified_rate"],
            &self.cells(|v| v.map(|v| v.to_string()).unwrap_or_default()),
        )
    }

    pub fn mean(&self, class: TissueClass) -> &ReportRow {
        &self.means[class.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, Provenance, N_FEATURES};
    use crate::imaging::Grid;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, cells: &[Label]) -> LabelSlice {
        Grid::from_vec(w, h, cells.to_vec()).unwrap()
    }

    #[test]
    fn metric_arithmetic() {
        let c = ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 5 };
        assert_eq!(c.dice().unwrap(), 0.75);
        assert_eq!(c.tpr().unwrap(), 0.75);
        assert_eq!(c.accuracy().unwrap(), 0.8);
        let perfect = ConfusionCounts { tp: 4, fp: 0, fn_: 0, tn: 2 };
        assert_eq!((perfect.dice().unwrap(), perfect.tpr().unwrap(), perfect.accuracy().unwrap()), (1.0, 1.0, 1.0));
        let disjoint = ConfusionCounts { tp: 0, fp: 2, fn_: 3, tn: 0 };
        assert_eq!(disjoint.dice().unwrap(), 0.0);
        let empty = ConfusionCounts::default();
        assert!(matches!(empty.dice(), Err(Error::UndefinedMetric)));
        assert!(matches!(ConfusionCounts { tn: 3, ..empty }.tpr(), Err(Error::UndefinedMetric)));
    }

    #[test]
    fn hybrid_counts_for_both_fat_classes() {
        use Label::*;
        let pred = grid(2, 2, &[Hybrid, Hybrid, Hybrid, Background]);
        let truth = grid(2, 2, &[Epicardial, Epicardial, Epicardial, Background]);
        let c = confusion_from_masks(std::slice::from_ref(&pred), std::slice::from_ref(&truth), TissueClass::Epicardial, HybridScoring::Both).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 3, fp: 0, fn_: 0, tn: 0 });
        let m = confusion_from_masks(std::slice::from_ref(&pred), std::slice::from_ref(&truth), TissueClass::Mediastinal, HybridScoring::Both).unwrap();
        assert_eq!(m.fp, 3);
        let strict = confusion_from_masks(&[pred], &[truth], TissueClass::Epicardial, HybridScoring::Strict).unwrap();
        assert_eq!(strict, ConfusionCounts { tp: 0, fp: 0, fn_: 3, tn: 0 });
    }

    #[test]
    fn hand_tally_three_by_three() {
        use Label::*;
        let truth = grid(3, 3, &[
            Epicardial, Epicardial, Mediastinal,
            Background, Epicardial, Mediastinal,
            Pericardium, Background, Mediastinal,
        ]);
        let pred = grid(3, 3, &[
            Epicardial, Mediastinal, Mediastinal,
            Background, Epicardial, Epicardial,
            Pericardium, Background, Mediastinal,
        ]);
        // epicardial: tp (0,0),(1,1); fn (1,0); fp (2,1); tn (2,0),(0,2),(2,2)
        let c = confusion_from_masks(&[pred], &[truth], TissueClass::Epicardial, HybridScoring::Both).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 3 });
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Grid::filled(2, 2, Label::Epicardial).unwrap();
        let b = Grid::filled(3, 2, Label::Epicardial).unwrap();
        assert!(matches!(
            confusion_from_masks(&[a], &[b], TissueClass::Epicardial, HybridScoring::Both),
            Err(Error::Shape { .. })
        ));
    }

    fn labels_strategy() -> impl Strategy<Value = Label> {
        prop::sample::select(Label::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn dice_is_symmetric_and_bounded(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let c = ConfusionCounts { tp, fp, fn_, tn };
            let swapped = ConfusionCounts { tp, fp: fn_, fn_: fp, tn };
            match (c.dice(), swapped.dice()) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a, b);
                    prop_assert!((0.0..=1.0).contains(&a));
                    prop_assert_eq!(a == 1.0, fp == 0 && fn_ == 0 && tp > 0);
                }
                (Err(_), Err(_)) => prop_assert_eq!(2 * tp + fp + fn_, 0),
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn accuracy_matches_mismatch_rate(
            (w, h, cells) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), prop::collection::vec((labels_strategy(), labels_strategy()), w * h))
            })
        ) {
            let pred = Grid::from_vec(w, h, cells.iter().map(|c| c.0).collect()).unwrap();
            let truth = Grid::from_vec(w, h, cells.iter().map(|c| c.1).collect()).unwrap();
            for class in TissueClass::ALL {
                let c = confusion_from_masks(std::slice::from_ref(&pred), std::slice::from_ref(&truth), class, HybridScoring::Both).unwrap();
                let pos = |l| is_positive(l, class, HybridScoring::Both);
                let fg = cells.iter().filter(|(p, t)| *p != Label::Background || *t != Label::Background);
                let n = fg.clone().count() as u64;
                let wrong = fg.filter(|(p, t)| pos(*p) != pos(*t)).count() as u64;
                prop_assert_eq!(c.total(), n);
                if n > 0 {
                    prop_assert_eq!(c.accuracy().unwrap(), (n - wrong) as f64 / n as f64);
                }
            }
        }

        #[test]
        fn split_is_a_partition(n in 1usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let spec = SplitSpec { train_fraction: frac, seed };
            let (a, b) = split_indices(n, &spec).unwrap();
            prop_assert_eq!(a.len(), ((n as f64) * frac).ceil() as usize);
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        let (a, b) = split_indices(100, &spec).unwrap();
        assert_eq!((a.len(), b.len()), (66, 34));
        assert_eq!(split_indices(100, &spec).unwrap().0, a);
        let (a, b) = split_indices(3, &SplitSpec { train_fraction: 0.5, seed: 0 }).unwrap();
        assert_eq!((a.len(), b.len()), (2, 1));
        assert!(split_indices(3, &SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn table_one_ratios() {
        let rep = ComparisonRow::new("REPTree", 0.989, 10.34);
        assert_eq!(format!("{:.2}", rep.acc_per_time.unwrap()), "9.56");
        let hp = ComparisonRow::new("HyperPipes", 0.948, 0.04);
        assert!((hp.acc_per_time.unwrap() - 2370.0).abs() < 1e-9);
        let table = format_comparison(&[rep, hp]);
        assert!(table.contains("98.9%") && table.contains("10.34") && table.contains("9.56"));
        assert!(table.lines().next().unwrap().contains("Acc/Time"));
    }

    fn toy_dataset() -> Dataset {
        let rows = (0..90)
            .map(|i| {
                let class = TissueClass::ALL[i % 3];
                let mut values = [0.0; N_FEATURES];
                values[0] = (class.index() * 10) as f64 + (i % 5) as f64;
                FeatureVector {
                    values,
                    provenance: Provenance { patient_id: "p".into(), z: 0, x: i as u32, y: 0 },
                    label: Some(class),
                }
            })
            .collect();
        Dataset::new(FeatureSchema::default(), rows)
    }

    #[test]
    fn comparison_keeps_failed_rows_and_sorts() {
        let data = toy_dataset();
        let learners = [LearnerSpec::Gnb, LearnerSpec::Tree(crate::classify::TreeParams::unpruned()), LearnerSpec::HyperPipes];
        let rows = compare_classifiers(&data, &learners, &SplitSpec::default()).unwrap();
        assert_eq!(rows.len(), 3);
        for w in rows.windows(2) {
            assert!(w[0].accuracy.unwrap_or(-1.0) >= w[1].accuracy.unwrap_or(-1.0));
        }
        let tree = rows.iter().find(|r| r.learner == "tree").unwrap();
        assert_eq!(tree.accuracy, Some(1.0));
        assert!(tree.wall_time >= 0.0 && tree.acc_per_time.is_some());

        let mono = Dataset::new(
            FeatureSchema::default(),
            data.rows().iter().filter(|r| r.label == Some(TissueClass::Epicardial)).cloned().collect(),
        );
        let rows = compare_classifiers(&mono, &[LearnerSpec::Gnb, LearnerSpec::from_name("tree", 0).unwrap()], &SplitSpec::default()).unwrap();
        assert_eq!(rows[0].accuracy, Some(1.0));
        assert!(rows[1].accuracy.is_none() && rows[1].error.is_some());
    }

    #[test]
    fn identical_learners_give_identical_rows() {
        let data = toy_dataset();
        let t = LearnerSpec::from_name("tree", 4).unwrap();
        let rows = compare_classifiers(&data, &[t, t], &SplitSpec::default()).unwrap();
        assert_eq!(rows[0].accuracy, rows[1].accuracy);
    }

    #[test]
    fn sweep_rejects_even_sizes() {
        let t = LearnerSpec::from_name("tree", 0).unwrap();
        assert!(neighborhood_sweep(&[], &[3, 4], &t, &SplitSpec::default(), 1.0).is_err());
    }

    #[test]
    fn report_macro_mean_and_flips() {
        use Label::*;
        let truth_a = grid(2, 2, &[Epicardial, Epicardial, Epicardial, Epicardial]);
        let pred_a = grid(2, 2, &[Epicardial, Epicardial, Epicardial, Mediastinal]);
        let truth_b = grid(2, 1, &[Epicardial, Mediastinal]);
        let pred_b = grid(2, 1, &[Epicardial, Mediastinal]);
        let truth = vec![("a".to_string(), vec![truth_a]), ("b".to_string(), vec![truth_b])];
        let pred = vec![("a".to_string(), vec![pred_a]), ("b".to_string(), vec![pred_b])];
        let r = per_patient_report(&pred, &truth, HybridScoring::Both).unwrap();
        let epi_a = &r.rows[0];
        assert_eq!(epi_a.accuracy, Some(0.75));
        let dice_a = 2.0 * 3.0 / (2.0 * 3.0 + 1.0);
        assert!((r.mean(TissueClass::Epicardial).dice.unwrap() - (dice_a + 1.0) / 2.0).abs() < 1e-15);
        assert!(r.to_table().contains("mean"));
        assert!(r.to_csv().unwrap().starts_with("patient,class,dice"));

        let same = per_patient_report(&truth, &truth, HybridScoring::Both).unwrap();
        assert!(same.rows.iter().all(|row| row.dice.is_none_or(|d| d == 1.0)));

        let missing = vec![("c".to_string(), vec![])];
        assert!(matches!(per_patient_report(&missing, &truth, HybridScoring::Both), Err(Error::MissingPatient(_))));
        let partial = per_patient_report(&pred[1..], &truth, HybridScoring::Both).unwrap();
        assert!(partial.rows.iter().all(|row| row.patient == "b"));
    }
}
