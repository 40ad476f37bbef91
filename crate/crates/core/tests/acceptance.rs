//! Acceptance suite. Runs every criterion in sequence, prints one
//! PASS/FAIL line per criterion and fails if any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cardiac_fat::classify::tree::root_split;
use cardiac_fat::classify::{train_segmenter, BinaryData, LearnerSpec, TreeParams};
use cardiac_fat::eval::{
    acc_per_time, compare_classifiers, confusion_from_masks, format_comparison, ComparisonRow, ConfusionCounts,
    HybridScoring, SplitSpec,
};
use cardiac_fat::features::{build_dataset, extract_volume, FeatureSchema, PatientSlices};
use cardiac_fat::imaging::Grid;
use cardiac_fat::labels::{fuse_labels, Label, LabelSlice, TissueClass};
use cardiac_fat::phantom::{generate_phantom, phantom_atlas, PhantomSpec};
use cardiac_fat::pipeline::{register_and_align, segment_patient, windowed_volume};
use cardiac_fat::registration::{
    default_reference_point, joint_histogram, register_volume, wmi, JointHistogram, RegistrationConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("weighted MI identities", wmi_identities),
        ("weighted MI hand value", wmi_hand_value),
        ("registration recovery", registration_recovery),
        ("root split oracle", split_oracle),
        ("determinism", determinism),
        ("metric oracle", metric_oracle),
        ("fusion truth table", fusion_table),
        ("end-to-end phantom", end_to_end_phantom),
        ("comparison format", comparison_format),
        ("extraction speed", extraction_speed),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("[criterion {}] {name}: PASS ({d}; {secs:.1} s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("[criterion {}] {name}: FAIL ({d}; {secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, bins: usize) -> Grid<usize> {
    Grid::from_fn(w, h, |_, _| rng.gen_range(0..bins)).unwrap()
}

fn entropy_oracle(grid: &Grid<usize>, g: f64) -> f64 {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for &v in grid.as_slice() {
        *counts.entry(v).or_default() += 1.0;
    }
    let n = grid.len() as f64;
    counts.values().map(|c| -(c / n) * (c / n).log(g)).sum()
}

fn wmi_identities() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_self = 0.0f64;
    let mut worst_indep = 0.0f64;
    for _ in 0..1000 {
        let bins = rng.gen_range(2..=32);
        let (w, h) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let img = random_grid(&mut rng, w, h, bins);
        let s = wmi(&joint_histogram(&img, &img, bins).unwrap(), 2.0).unwrap();
        worst_self = worst_self.max((s - entropy_oracle(&img, 2.0)).abs());

        let r: Vec<u64> = (0..bins).map(|_| rng.gen_range(0..5)).collect();
        let c: Vec<u64> = (0..bins).map(|_| rng.gen_range(0..5)).collect();
        if r.iter().all(|&v| v == 0) || c.iter().all(|&v| v == 0) {
            continue;
        }
        let counts: Vec<u64> = r.iter().flat_map(|&a| c.iter().map(move |&b| a * b)).collect();
        let v = wmi(&JointHistogram::from_counts(bins, counts).unwrap(), 2.0).unwrap();
        worst_indep = worst_indep.max(v.abs());
    }
    let elapsed = t.elapsed();
    check(
        worst_self <= 1e-9 && worst_indep <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("max |wmi(I,I) - H| = {worst_self:.2e}, max |wmi(independent)| = {worst_indep:.2e}, {elapsed:.2?}"),
    )
}

fn wmi_hand_value() -> Outcome {
    // p(0,0) = 1/2, p(1,1) = 1/4, p(0,1) = 1/4; marginals f = (3/4, 1/4), m = (1/2, 1/2)
    let oracle = 1.0 * 0.5 * (0.5f64 / (0.75 * 0.5)).log2()
        + 1.0 * 0.25 * (0.25f64 / (0.25 * 0.5)).log2()
        + 0.5 * 0.25 * (0.25f64 / (0.75 * 0.5)).log2();
    let h = JointHistogram::from_entries(2, &[(0, 0, 2), (1, 1, 1), (0, 1, 1)]).unwrap();
    let v = wmi(&h, 2.0).unwrap();
    check(
        (v - oracle).abs() <= 1e-6 && (v - 0.3844).abs() < 1e-4,
        format!("wmi = {v:.6}, oracle = {oracle:.6}"),
    )
}

fn registration_recovery() -> Outcome {
    let t = Instant::now();
    let base = PhantomSpec::default();
    let atlas = phantom_atlas(&base, 10_000..10_010).map_err(|e| e.to_string())?;
    let cfg = RegistrationConfig::default();
    let run = |seed: u64, noise: f64| -> (i64, bool) {
        let spec = PhantomSpec {
            noise_hu: noise,
            ..base.with_seed(seed)
        };
        let p = generate_phantom(&spec, "p").unwrap();
        let (w, h) = p.volume.dims();
        let r = register_volume("p", &windowed_volume(&p.volume), &atlas, default_reference_point(w, h), None, &cfg).unwrap();
        let d = (r.position.0 as i64 - p.retro_position.0 as i64)
            .abs()
            .max((r.position.1 as i64 - p.retro_position.1 as i64).abs());
        (d, r.confirmed)
    };
    let exact = (0..100).filter(|&s| run(s, 0.0) == (0, true)).count();
    let near = (0..100).filter(|&s| run(s, 20.0).0 <= 1).count();
    let elapsed = t.elapsed();
    check(
        exact == 100 && near >= 95 && elapsed < Duration::from_secs(60),
        format!("noise 0: {exact}/100 exact and confirmed; noise 20 HU: {near}/100 within 1 px; {elapsed:.2?}"),
    )
}

/// Exhaustive weighted Gini over every (feature, midpoint) candidate; ties go
/// to the lowest feature, then the lowest threshold.
fn gini_argmin(rows: &[Vec<f64>], labels: &[bool]) -> Option<(usize, f64)> {
    let n = rows.len() as f64;
    let side = |p: f64, q: f64| {
        let t = p + q;
        t * (1.0 - (p / t).powi(2) - (q / t).powi(2))
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let mut c = [0.0; 4];
            for (r, &y) in rows.iter().zip(labels) {
                c[2 * usize::from(r[f] > t) + usize::from(y)] += 1.0;
            }
            let g = (side(c[1], c[0]) + side(c[3], c[2])) / n;
            if best.is_none_or(|(b, _, _)| g < b - 1e-10) {
                best = Some((g, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn split_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agree = 0;
    let mut tried = 0;
    while tried < 200 {
        let n = rng.gen_range(2..=200);
        let d = rng.gen_range(1..=6);
        let levels = rng.gen_range(2..=16);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(0..levels) as f64 * 0.5).collect())
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.45)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        tried += 1;
        let data = BinaryData::from_rows(rows.clone(), labels.clone()).unwrap();
        let got = root_split(&data, 1).map(|s| (s.feature, s.threshold));
        agree += usize::from(got == gini_argmin(&rows, &labels));
    }
    check(agree == 200, format!("{agree}/200 root splits match"))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cardiac-fat"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    std::fs::write(d.join("cohort.toml"), "patients = 2\nseed = 21\nn_slices = 3\n").unwrap();
    run_cli(&["phantom", "--spec", "cohort.toml", "--out", "cohort"], d)?;
    run_cli(&["atlas", "build", "--rois", "cohort/rois.csv", "--out", "atlas.txt"], d)?;
    for out in ["a.csv", "b.csv"] {
        run_cli(
            &[
                "extract", "--patient", "cohort/PH000/manifest.toml", "--labels", "cohort/PH000/truth", "--atlas",
                "atlas.txt", "--w", "5", "--sample-rate", "0.3", "--seed", "3", "--out", out,
            ],
            d,
        )?;
    }
    for out in ["m1", "m2"] {
        run_cli(&["train", "--data", "a.csv", "--learner", "forest", "--seed", "7", "--out", out], d)?;
    }
    let data_same = std::fs::read(d.join("a.csv")).unwrap() == std::fs::read(d.join("b.csv")).unwrap();
    let (m1, m2) = (dir_bytes(&d.join("m1")), dir_bytes(&d.join("m2")));
    check(
        data_same && m1 == m2 && m1.len() == 4,
        format!("datasets identical: {data_same}; model files identical: {}", m1 == m2),
    )
}

fn random_labels(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LabelSlice {
    Grid::from_fn(w, h, |_, _| Label::ALL[rng.gen_range(0..Label::ALL.len())]).unwrap()
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for i in 0..500 {
        let (w, h) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let pred = vec![random_labels(&mut rng, w, h)];
        let truth = vec![random_labels(&mut rng, w, h)];
        let target = TissueClass::ALL[i % 3];
        let mode = if i % 2 == 0 { HybridScoring::Both } else { HybridScoring::Strict };
        let positive = |l: Label| {
            let hybrid_counts = mode == HybridScoring::Both && target != TissueClass::Pericardium;
            match l {
                Label::Epicardial => target == TissueClass::Epicardial,
                Label::Mediastinal => target == TissueClass::Mediastinal,
                Label::Pericardium => target == TissueClass::Pericardium,
                Label::Hybrid => hybrid_counts,
                _ => false,
            }
        };
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for y in 0..h {
            for x in 0..w {
                let (p, t) = (*pred[0].get(x, y), *truth[0].get(x, y));
                if p == Label::Background && t == Label::Background {
                    continue;
                }
                match (positive(p), positive(t)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
        let c = confusion_from_masks(&pred, &truth, target, mode).unwrap();
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        let same = (c.tp, c.fp, c.fn_, c.tn) == (tp, fp, fn_, tn)
            && c.accuracy().ok() == ratio(tp + tn, tp + fp + fn_ + tn)
            && c.tpr().ok() == ratio(tp, tp + fn_)
            && c.dice().ok() == ratio(2 * tp, 2 * tp + fp + fn_);
        mismatches += usize::from(!same);
    }
    let hand = ConfusionCounts {
        tp: 3,
        fp: 1,
        fn_: 1,
        tn: 0,
    }
    .dice()
    .unwrap();
    check(
        mismatches == 0 && hand == 0.75,
        format!("{mismatches}/500 mismatches; dice(3,1,1) = {hand}"),
    )
}

fn fusion_table() -> Outcome {
    let mut wrong = Vec::new();
    for bits in 0..8u8 {
        let (e, m, p) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        let expected = if e && m {
            Label::Hybrid
        } else if e {
            Label::Epicardial
        } else if m {
            Label::Mediastinal
        } else if p {
            Label::Hybrid
        } else {
            Label::Unclassified
        };
        if fuse_labels(e, m, p) != expected {
            wrong.push((e, m, p));
        }
    }
    check(wrong.is_empty(), format!("{}/8 combinations correct {wrong:?}", 8 - wrong.len()))
}

fn end_to_end_phantom() -> Outcome {
    let base = PhantomSpec::default();
    let atlas = phantom_atlas(&base, 10_000..10_010).map_err(|e| e.to_string())?;
    let cfg = RegistrationConfig::default();
    let cohort: Vec<_> = (0..20u64)
        .map(|s| {
            let p = generate_phantom(&base.with_seed(s), &format!("P{s:02}")).unwrap();
            let a = register_and_align(&p.volume, Some(&p.truth), &atlas, &cfg, None, false).unwrap();
            (p, a)
        })
        .collect();
    let train: Vec<PatientSlices> = cohort[..16].iter().map(|(_, a)| a.to_patient_slices().unwrap()).collect();
    let data = build_dataset(&train, &FeatureSchema::default(), 0.1, 1).map_err(|e| e.to_string())?;
    let model = train_segmenter(&data, &LearnerSpec::from_name("forest", 7).unwrap()).map_err(|e| e.to_string())?;
    let mut sums = [[0.0; 2]; 2];
    for (p, a) in &cohort[16..] {
        let pred = segment_patient(&model, a).map_err(|e| e.to_string())?;
        for (i, mode) in [HybridScoring::Both, HybridScoring::Strict].into_iter().enumerate() {
            for (j, class) in [TissueClass::Epicardial, TissueClass::Mediastinal].into_iter().enumerate() {
                sums[i][j] += confusion_from_masks(&pred, &p.truth, class, mode).unwrap().dice().unwrap() / 4.0;
            }
        }
    }
    let [[epi, medi], [epi_strict, medi_strict]] = sums;
    check(
        epi >= 0.95 && medi >= 0.95,
        format!(
            "mean dice epicardial {epi:.4}, mediastinal {medi:.4} (hybrid counted for neither: {epi_strict:.4}, {medi_strict:.4})"
        ),
    )
}

fn comparison_format() -> Outcome {
    let spec = PhantomSpec {
        n_slices: 2,
        ..PhantomSpec::default()
    };
    let p = generate_phantom(&spec, "c").unwrap();
    let patient = PatientSlices::new("c", windowed_volume(&p.volume), Some(p.truth)).unwrap();
    let data = build_dataset(&[patient], &FeatureSchema::default(), 0.05, 2).map_err(|e| e.to_string())?;
    let learners: Vec<LearnerSpec> = vec![
        LearnerSpec::Tree(TreeParams::default()),
        LearnerSpec::from_name("forest", 1).unwrap(),
        LearnerSpec::Gnb,
        LearnerSpec::HyperPipes,
    ];
    let rows = compare_classifiers(&data, &learners, &SplitSpec::default()).map_err(|e| e.to_string())?;
    let table = format_comparison(&rows);
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split("  ").map(str::trim).filter(|s| !s.is_empty()).collect();
    let body: Vec<&str> = lines.skip(1).collect();
    let populated = rows.iter().all(|r| r.accuracy.is_some() && r.acc_per_time.is_some());
    let rep = format!("{:.2}", acc_per_time(0.989, 10.34));
    let rep_row = format_comparison(&[ComparisonRow::new("REPTree", 0.989, 10.34)]);
    check(
        header == ["Algorithm", "Accuracy", "Time (s)", "Acc/Time"]
            && body.len() == 4
            && populated
            && rep == "9.56"
            && rep_row.contains("98.9%")
            && rep_row.contains("10.34")
            && rep_row.contains("9.56"),
        format!("header {header:?}, {} learner rows, REPTree ratio {rep}", body.len()),
    )
}

fn extraction_speed() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let slice = Grid::from_fn(512, 512, |_, _| rng.gen_range(1..=255u8)).unwrap();
    let patient = PatientSlices::new("s", vec![slice], None).unwrap();
    let schema = FeatureSchema::new(5).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let data = pool.install(|| extract_volume(&patient, &schema)).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    check(
        data.len() == 512 * 512 && elapsed < Duration::from_secs(2),
        format!("{} rows in {elapsed:.2?} on one thread", data.len()),
    )
}
