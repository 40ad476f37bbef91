//! Command-line front end. Every subcommand writes its outputs through a
//! temporary file or directory that is renamed into place on success.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cardiac_fat::atlas::ProbAtlas;
use cardiac_fat::classify::{LearnerSpec, SegmenterModel};
use cardiac_fat::eval::{
    compare_classifiers, comparison_csv, format_comparison, format_sweep, neighborhood_sweep, per_patient_report,
    sweep_plot_data, HybridScoring, SplitSpec, DEFAULT_SWEEP_SIZES,
};
use cardiac_fat::features::{build_dataset, extract_volume, Dataset, FeatureSchema, PatientSlices};
use cardiac_fat::io::{load_patient, mask_file_name, read_mask_dir, render_blend, write_atomic, write_dir_atomic, write_label_slice, write_rgb};
use cardiac_fat::pipeline::{
    build_atlas_from_rois, load_labeled_patients, load_patient_list, read_label_tree, register_and_align,
    segment_patient, windowed_volume, write_phantom_cohort, AlignedPatient, PhantomCohort,
};
use cardiac_fat::registration::{RegistrationConfig, RegistrationResult};

#[derive(Parser)]
#[command(name = "cardiac-fat", version, about = "Epicardial and mediastinal fat segmentation for cardiac CT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retrosternal atlas construction.
    #[command(subcommand)]
    Atlas(AtlasCommand),
    /// Locate the retrosternal landmark of a patient.
    Register(RegisterArgs),
    /// Extract a per-pixel feature dataset.
    Extract(ExtractArgs),
    /// Train the three one-vs-rest models.
    Train(TrainArgs),
    /// Segment a patient into label masks and overlays.
    Segment(SegmentArgs),
    /// Per-patient accuracy, true positive rate and Dice.
    Evaluate(EvaluateArgs),
    /// Compare learners on one seeded split.
    Compare(CompareArgs),
    /// Accuracy as a function of the neighborhood size.
    Sweep(SweepArgs),
    /// Generate synthetic phantom patients.
    Phantom(PhantomArgs),
}

#[derive(Subcommand)]
enum AtlasCommand {
    /// Crop, binarize and average the listed regions.
    Build {
        /// CSV of `manifest,z,x,y,w,h` rows.
        #[arg(long)]
        rois: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RegistrationOpts {
    /// Atlas to register against; without it the volume is used as is.
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Align even when the landmark is not confirmed.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    patient: PathBuf,
    #[arg(long)]
    atlas: PathBuf,
    /// Slice to search; defaults to the richest slice of the upper half.
    #[arg(long)]
    slice: Option<usize>,
    #[arg(long, default_value_t = 32)]
    bins: usize,
    #[arg(long, default_value_t = 2.0)]
    log_base: f64,
    /// Succeed even when the landmark is not confirmed.
    #[arg(long)]
    force: bool,
    /// Also write the record to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    patient: PathBuf,
    /// Ground-truth mask directory; makes the dataset labeled.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Neighborhood size (odd, at least 3).
    #[arg(long, default_value_t = 5)]
    w: usize,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of labeled pixels kept per class.
    #[arg(long, default_value_t = 1.0)]
    sample_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    registration: RegistrationOpts,
}

#[derive(Args)]
struct TrainArgs {
    /// One or more labeled dataset files with the same schema.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, value_parser = ["tree", "forest", "gnb", "hyperpipes"])]
    learner: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    patient: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    registration: RegistrationOpts,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Count hybrid predictions as positive for neither fat class.
    #[arg(long)]
    strict: bool,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "tree,forest,gnb,hyperpipes")]
    learners: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.66)]
    train_fraction: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Patient list of `<manifest> <truth dir>` lines.
    #[arg(long)]
    patients: PathBuf,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, default_value = "tree")]
    learner: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.66)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    sample_rate: f64,
    /// Plot data output (`size accuracy` lines).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    registration: RegistrationOpts,
}

#[derive(Args)]
struct PhantomArgs {
    /// TOML cohort description; omitted keys take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Atlas(AtlasCommand::Build { rois, out }) => {
            let atlas = build_atlas_from_rois(&rois)?;
            atlas.save(&out)?;
            println!("atlas {}x{} from {} sources", atlas.width(), atlas.height(), atlas.n_sources());
        }
        Command::Register(a) => return register(a),
        Command::Extract(a) => extract(a)?,
        Command::Train(a) => {
            let data = load_datasets(&a.data)?;
            let spec = LearnerSpec::from_name(&a.learner, a.seed)?;
            let model = cardiac_fat::classify::train_segmenter(&data, &spec)?;
            model.save(&a.out)?;
            println!("trained {} on {} rows", spec.name(), data.len());
        }
        Command::Segment(a) => segment(a)?,
        Command::Evaluate(a) => {
            let mode = if a.strict { HybridScoring::Strict } else { HybridScoring::Both };
            let report = per_patient_report(&read_label_tree(&a.pred)?, &read_label_tree(&a.truth)?, mode)?;
            print!("{}", report.to_table());
            if let Some(path) = a.csv {
                write_atomic(&path, report.to_csv()?.as_bytes())?;
            }
        }
        Command::Compare(a) => {
            let data = Dataset::load(&a.data)?;
            let learners = a
                .learners
                .iter()
                .map(|n| LearnerSpec::from_name(n.trim(), a.seed))
                .collect::<cardiac_fat::Result<Vec<_>>>()?;
            let split = SplitSpec {
                train_fraction: a.train_fraction,
                seed: a.seed,
            };
            let rows = compare_classifiers(&data, &learners, &split)?;
            print!("{}", format_comparison(&rows));
            if let Some(path) = a.csv {
                write_atomic(&path, comparison_csv(&rows)?.as_bytes())?;
            }
        }
        Command::Sweep(a) => {
            let entries = load_patient_list(&a.patients)?;
            let atlas = a.registration.atlas.as_deref().map(ProbAtlas::load).transpose()?;
            let patients = load_labeled_patients(&entries, atlas.as_ref(), &RegistrationConfig::default(), a.registration.force)?;
            let sizes = a.sizes.unwrap_or_else(|| DEFAULT_SWEEP_SIZES.to_vec());
            let split = SplitSpec {
                train_fraction: a.train_fraction,
                seed: a.seed,
            };
            let learner = LearnerSpec::from_name(&a.learner, a.seed)?;
            let rows = neighborhood_sweep(&patients, &sizes, &learner, &split, a.sample_rate)?;
            print!("{}", format_sweep(&rows));
            if let Some(path) = a.out {
                write_atomic(&path, sweep_plot_data(&rows).as_bytes())?;
            }
        }
        Command::Phantom(a) => {
            let cohort = match &a.spec {
                Some(p) => PhantomCohort::from_toml(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
                None => PhantomCohort::default(),
            };
            write_phantom_cohort(&cohort, &a.out)?;
            println!("wrote {} phantom patients to {}", cohort.patients, a.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn register(a: RegisterArgs) -> Result<ExitCode> {
    let volume = load_patient(&a.patient)?;
    let atlas = ProbAtlas::load(&a.atlas)?;
    let config = RegistrationConfig {
        n_bins: a.bins,
        log_base: a.log_base,
        ..RegistrationConfig::default()
    };
    let aligned = register_and_align(&volume, None, &atlas, &config, a.slice, true)?;
    let record = aligned.registration.to_string();
    print!("{record}");
    if !aligned.registration.confirmed && !a.force {
        eprintln!("error: registration was not confirmed (pass --force to accept it)");
        return Ok(ExitCode::from(2));
    }
    if let Some(path) = a.out {
        write_atomic(&path, record.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Loads a patient (and optional truth) and moves it into the atlas frame
/// when an atlas is given.
fn load_aligned(manifest: &Path, labels: Option<&Path>, opts: &RegistrationOpts) -> Result<AlignedPatient> {
    let volume = load_patient(manifest)?;
    let truth = labels.map(read_mask_dir).transpose()?;
    match &opts.atlas {
        Some(path) => {
            let atlas = ProbAtlas::load(path)?;
            Ok(register_and_align(&volume, truth.as_deref(), &atlas, &RegistrationConfig::default(), None, opts.force)?)
        }
        None => Ok(AlignedPatient {
            registration: RegistrationResult::identity(volume.patient_id()),
            slices: windowed_volume(&volume),
            truth,
        }),
    }
}

fn extract(a: ExtractArgs) -> Result<()> {
    let schema = FeatureSchema::new(a.w)?;
    let patient = load_aligned(&a.patient, a.labels.as_deref(), &a.registration)?;
    let slices: PatientSlices = patient.to_patient_slices()?;
    let data = if slices.labels.is_some() {
        build_dataset(std::slice::from_ref(&slices), &schema, a.sample_rate, a.seed)?
    } else {
        extract_volume(&slices, &schema)?
    };
    data.save(&a.out)?;
    println!("{} rows, schema {}", data.len(), schema.hash());
    Ok(())
}

fn load_datasets(paths: &[PathBuf]) -> Result<Dataset> {
    let mut parts = paths.iter().map(|p| Dataset::load(p).with_context(|| format!("reading {}", p.display())));
    let first = parts.next().expect("clap requires one dataset")?;
    let schema = first.schema().clone();
    let mut rows = first.into_rows();
    for part in parts {
        let part = part?;
        if part.schema().hash() != schema.hash() {
            bail!("datasets mix feature schemas {} and {}", schema.hash(), part.schema().hash());
        }
        rows.extend(part.into_rows());
    }
    Ok(Dataset::new(schema, rows))
}

fn segment(a: SegmentArgs) -> Result<()> {
    let model = SegmenterModel::load(&a.model)?;
    let patient = load_aligned(&a.patient, None, &a.registration)?;
    let labels = segment_patient(&model, &patient)?;
    let volume = load_patient(&a.patient)?;
    let windowed = windowed_volume(&volume);
    write_dir_atomic(&a.out, |tmp| {
        for (z, (l, s)) in labels.iter().zip(&windowed).enumerate() {
            write_label_slice(l, &tmp.join(mask_file_name(z)))?;
            write_rgb(&render_blend(l, s), &tmp.join(format!("overlay_{z:03}.png")))?;
        }
        Ok(())
    })?;
    println!("segmented {} slices of {}", labels.len(), patient.patient_id());
    Ok(())
}
