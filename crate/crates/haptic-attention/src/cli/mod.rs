//! The `ham` binary: dataset recording, training, evaluation, ablation
//! sweeps, heat-maps, gradient checks, and report plots.

mod config;
mod output;

pub use config::{EnvHandle, EnvKind, Settings, DEFAULT_DATASET};
pub use output::{line_chart, parse_log, thin_points, write_json, LogWriter, Series};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use crate::eval::{
    build_heatmap, config_hash, per_glance_accuracy, run_mlp_pair, run_variant, scored_accuracy,
    AccuracyReport, Averaged, FinalGlance, Variant, EVAL_BATCHES,
};
use crate::model::{CombinerMode, CoreVariant, GlanceInput, Model};
use crate::nn::checkpoint;
use crate::nn::gradcheck::{finite_difference_check, sample_coords};
use crate::sim::{sha256_hex_file, GlanceDataset, GridSpec, ObjectId};
use crate::trainer::{
    self,
    gradient::{accumulate_baseline, accumulate_hybrid},
    episode_rng, rollout_batch, PoseSelection, RolloutPlan, StreamKey, StreamPurpose, TrainConfig,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "ham",
    version,
    about = "Haptic glance attention: simulate, train, evaluate"
)]
pub struct Cli {
    /// Worker threads for batch parallelism; results never depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Hyperparameter and environment overrides shared by most subcommands.
/// Precedence: flag, then config file, then built-in defaults.
#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Flat `key = value` config file applied beneath explicit flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Episodes per training batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Glances per episode (sequence length).
    #[arg(long)]
    pub glances: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr_initial: Option<f64>,
    /// Exponential decay factor per period.
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// Steps per decay period.
    #[arg(long)]
    pub lr_period: Option<f64>,
    /// Learning-rate floor.
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Nesterov momentum.
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Location-policy share of the hybrid update.
    #[arg(long)]
    pub location_weight: Option<f64>,
    /// Reward discount toward earlier glances in the baseline target.
    #[arg(long)]
    pub discount: Option<f64>,
    /// Training steps.
    #[arg(long)]
    pub total_steps: Option<usize>,
    /// Seed for every derived random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps between accuracy snapshots.
    #[arg(long)]
    pub snapshot_interval: Option<usize>,
    /// Fresh evaluation batches per snapshot.
    #[arg(long)]
    pub snapshot_batches: Option<usize>,
    /// Apply the classification term at every glance, not just the last.
    #[arg(long, value_name = "BOOL")]
    pub ce_all_glances: Option<bool>,
    /// Ignore the location policy and glance uniformly at random.
    #[arg(long, value_name = "BOOL")]
    pub uniform_policy: Option<bool>,
    /// Global-norm gradient clip.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Feature combiner: multiply | add | concat1 | concat2.
    #[arg(long, value_parser = CombinerMode::from_str)]
    pub combiner: Option<CombinerMode>,
    /// Core architecture: lstm | mlp.
    #[arg(long, value_parser = CoreVariant::from_str)]
    pub core: Option<CoreVariant>,
    /// Glance provider: sim | dataset.
    #[arg(long, value_parser = EnvKind::from_str)]
    pub env: Option<EnvKind>,
    /// Dataset file for `--env dataset`.
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
}

impl HyperArgs {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        let t = &mut s.train;
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.glances {
            t.glances = v;
        }
        if let Some(v) = self.lr_initial {
            t.lr_initial = v;
        }
        if let Some(v) = self.lr_decay {
            t.lr_decay = v;
        }
        if let Some(v) = self.lr_period {
            t.lr_period = v;
        }
        if let Some(v) = self.lr_min {
            t.lr_min = v;
        }
        if let Some(v) = self.momentum {
            t.momentum = v;
        }
        if let Some(v) = self.location_weight {
            t.location_weight = v;
        }
        if let Some(v) = self.discount {
            t.discount = v;
        }
        if let Some(v) = self.total_steps {
            t.total_steps = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.snapshot_interval {
            t.snapshot_interval = v;
        }
        if let Some(v) = self.snapshot_batches {
            t.snapshot_batches = v;
        }
        if let Some(v) = self.ce_all_glances {
            t.ce_all_glances = v;
        }
        if let Some(v) = self.uniform_policy {
            t.uniform_policy = v;
        }
        if let Some(v) = self.grad_clip {
            t.grad_clip = Some(v);
        }
        if let Some(v) = self.combiner {
            s.model.combiner = v;
        }
        if let Some(v) = self.core {
            s.model.core = v;
        }
        if let Some(v) = self.env {
            s.env = v;
        }
        if let Some(v) = &self.dataset {
            s.dataset = Some(v.clone());
        }
        s.train.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record the full pose-grid glance dataset.
    RecordDataset(RecordDatasetArgs),
    /// Train a model and write logs plus checkpoints.
    Train(TrainArgs),
    /// Measure a checkpoint's accuracy on fresh episodes.
    Eval(EvalArgs),
    /// Sweep variants over glance counts into an accuracy grid.
    Ablate(AblateArgs),
    /// Bin a checkpoint's final-glance poses per object.
    Heatmap(HeatmapArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Summarize a training run and plot its curves.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RecordDatasetArgs {
    /// Output directory for the dataset file and its manifest.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    /// Also export every `csv-stride`-th record as CSV here.
    #[arg(long, value_name = "FILE")]
    pub csv_sample: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub csv_stride: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Run directory for manifest, log, and checkpoints.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Checkpoint to evaluate (use matching --combiner/--core).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Prediction rule: final | averaged.
    #[arg(long, default_value = "final")]
    pub scorer: String,
    /// Fresh evaluation batches.
    #[arg(long, default_value_t = EVAL_BATCHES)]
    pub batches: usize,
    /// Also report accuracy after each glance.
    #[arg(long)]
    pub per_glance: bool,
    /// Write the JSON report here instead of stdout only.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory for the grid CSVs and reports.
    #[arg(long, default_value = "ablate")]
    pub out: PathBuf,
    /// Comma-separated glance counts to sweep.
    #[arg(long, default_value = "1,2,3", value_name = "LIST")]
    pub glance_counts: String,
    /// Comma-separated variants: full, rloc, mlp, mlp-averaged.
    #[arg(long, default_value = "full,rloc,mlp,mlp-averaged", value_name = "LIST")]
    pub variants: String,
    /// Independently seeded training runs per cell.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Verify accuracy-ordering thresholds; exit 1 on failure.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Checkpoint whose policy is visualized.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Object name or index; all four when omitted.
    #[arg(long)]
    pub object: Option<String>,
    /// Evaluation batches per grid.
    #[arg(long, default_value_t = 1000)]
    pub batches: usize,
    #[arg(long, default_value = "heatmaps")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Random parameter coordinates to probe.
    #[arg(long, default_value_t = 200)]
    pub coords: usize,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory containing log.csv.
    #[arg(long)]
    pub run: PathBuf,
    /// Where to write the curve SVG (default: <run>/curve.svg).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::RecordDataset(args) => cmd_record_dataset(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Report(args) => cmd_report(args),
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    config_hash: String,
    train: TrainConfig,
    combiner: String,
    core: String,
    parameter_count: usize,
    env: String,
    dataset: Option<String>,
    dataset_sha256: Option<String>,
}

fn run_manifest(command: &str, s: &Settings, model: &Model, env: &EnvHandle) -> RunManifest {
    RunManifest {
        command: command.to_owned(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: config_hash(&s.train),
        train: s.train.clone(),
        combiner: s.model.combiner.key().to_owned(),
        core: s.model.core.key().to_owned(),
        parameter_count: model.parameter_count(),
        env: env.kind().key().to_owned(),
        dataset: env.dataset_path().map(|p| p.display().to_string()),
        dataset_sha256: env.dataset_sha256().map(str::to_owned),
    }
}

#[derive(Serialize)]
struct DatasetManifest {
    records: usize,
    objects: usize,
    grid_x: usize,
    grid_phi: usize,
    file: String,
    sha256: String,
}

fn cmd_record_dataset(args: RecordDatasetArgs) -> Result<ExitCode> {
    let spec = GridSpec::STANDARD;
    println!(
        "recording {} x {} poses for {} objects...",
        spec.nx,
        spec.nphi,
        ObjectId::ALL.len()
    );
    let data = GlanceDataset::generate(spec)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("glances.dat");
    data.save(&path)?;
    let sha256 = sha256_hex_file(&path)?;
    let manifest = DatasetManifest {
        records: data.total_records(),
        objects: ObjectId::ALL.len(),
        grid_x: spec.nx,
        grid_phi: spec.nphi,
        file: "glances.dat".to_owned(),
        sha256,
    };
    write_json(&args.out.join("dataset-manifest.json"), &manifest)?;
    if let Some(csv) = &args.csv_sample {
        data.export_csv(csv, args.csv_stride)?;
    }
    println!(
        "recorded {} records to {} (sha256 {})",
        manifest.records,
        path.display(),
        &manifest.sha256[..12]
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let settings = args.hyper.settings()?;
    let env = EnvHandle::open(settings.env, settings.dataset.as_deref())?;
    let model = Model::new(settings.model);
    std::fs::create_dir_all(&args.out)?;
    write_json(
        &args.out.join("manifest.json"),
        &run_manifest("train", &settings, &model, &env),
    )?;

    println!(
        "training {} / {} ({} parameters), {} glances, {} steps on {}",
        settings.model.core.key(),
        settings.model.combiner.key(),
        model.parameter_count(),
        settings.train.glances,
        settings.train.total_steps,
        env.kind().key()
    );
    let mut log = LogWriter::create(&args.out.join("log.csv"))?;
    let mut log_err: Option<Error> = None;
    let outcome = trainer::train(&model, env.source(), &settings.train, |row| {
        if log_err.is_none() {
            if let Err(e) = log.write(row) {
                log_err = Some(e);
            }
        }
        if let Some(acc) = row.accuracy {
            println!(
                "step {:>7}  lr {:.4e}  reward {:.4}  accuracy {:.4}",
                row.step + 1,
                row.lr,
                row.mean_reward,
                acc
            );
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    log.finish()?;

    checkpoint::save(&args.out.join("final.ckpt"), &outcome.final_params)?;
    checkpoint::save(&args.out.join("best.ckpt"), &outcome.best_params)?;
    checkpoint::write_manifest(
        &args.out.join("best.manifest"),
        &[
            ("checkpoint", "best.ckpt".to_owned()),
            ("best_step", outcome.best_step.to_string()),
            ("best_accuracy", outcome.best_accuracy.to_string()),
        ],
        &outcome.best_params,
    )?;

    #[derive(Serialize)]
    struct TrainSummary {
        steps: usize,
        best_accuracy: f64,
        best_step: usize,
        final_accuracy: Option<f64>,
    }
    let final_accuracy = outcome.log.iter().rev().find_map(|r| r.accuracy);
    write_json(
        &args.out.join("summary.json"),
        &TrainSummary {
            steps: settings.train.total_steps,
            best_accuracy: outcome.best_accuracy,
            best_step: outcome.best_step,
            final_accuracy,
        },
    )?;
    println!(
        "best accuracy {:.4} at step {}; artifacts in {}",
        outcome.best_accuracy,
        outcome.best_step,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_model_params(settings: &Settings, path: &Path) -> Result<(Model, crate::nn::ParamStore)> {
    let model = Model::new(settings.model);
    let params = checkpoint::load(path)?;
    checkpoint::verify_layout(model.layout(), params.layout())?;
    Ok((model, params))
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let settings = args.hyper.settings()?;
    let env = EnvHandle::open(settings.env, settings.dataset.as_deref())?;
    let (model, params) = load_model_params(&settings, &args.checkpoint)?;

    let averaged = match args.scorer.as_str() {
        "final" => false,
        "averaged" => {
            if settings.model.core != CoreVariant::Mlp {
                return Err(Error::config("averaged scoring requires the mlp core"));
            }
            true
        }
        other => return Err(Error::config(format!("unknown scorer `{other}`"))),
    };
    let key = StreamKey {
        seed: settings.train.seed,
        nonce: 0,
        purpose: StreamPurpose::Eval,
    };
    let plan = RolloutPlan::new(
        settings.train.glances,
        settings.train.batch_size,
        settings.selection(),
    );
    let accuracy = if averaged {
        scored_accuracy(&model, &params, env.source(), plan, args.batches, key, &Averaged)?
    } else {
        scored_accuracy(
            &model,
            &params,
            env.source(),
            plan,
            args.batches,
            key,
            &FinalGlance,
        )?
    };
    let per_glance = if args.per_glance {
        Some(per_glance_accuracy(
            &model,
            &params,
            env.source(),
            plan,
            args.batches,
            key,
        )?)
    } else {
        None
    };

    #[derive(Serialize)]
    struct EvalReport {
        checkpoint: String,
        env: String,
        dataset_sha256: Option<String>,
        combiner: String,
        core: String,
        glances: usize,
        batch_size: usize,
        batches: usize,
        scorer: String,
        seed: u64,
        accuracy: f64,
        per_glance: Option<Vec<f64>>,
    }
    let report = EvalReport {
        checkpoint: args.checkpoint.display().to_string(),
        env: env.kind().key().to_owned(),
        dataset_sha256: env.dataset_sha256().map(str::to_owned),
        combiner: settings.model.combiner.key().to_owned(),
        core: settings.model.core.key().to_owned(),
        glances: settings.train.glances,
        batch_size: settings.train.batch_size,
        batches: args.batches,
        scorer: args.scorer.clone(),
        seed: settings.train.seed,
        accuracy,
        per_glance: per_glance.clone(),
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!(
        "accuracy {:.4} over {} episodes ({} scorer, {} glances)",
        accuracy,
        args.batches * settings.train.batch_size,
        args.scorer,
        settings.train.glances
    );
    if let Some(curve) = per_glance {
        for (g, a) in curve.iter().enumerate() {
            println!("  after glance {}: {:.4}", g + 1, a);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse()
                .map_err(|e| Error::config(format!("bad {what} `{part}`: {e}")))?,
        );
    }
    if out.is_empty() {
        return Err(Error::config(format!("empty {what} list")));
    }
    Ok(out)
}

/// The threshold verdicts `ablate --check` can derive from a report grid.
fn evaluate_checks(reports: &[AccuracyReport]) -> (Vec<String>, bool) {
    let get = |variant: &str, s: usize| {
        reports
            .iter()
            .find(|r| r.variant == variant && r.glances == s)
            .map(|r| r.mean)
    };
    let mut lines = Vec::new();
    let mut passed = true;
    let mut check = |desc: String, ok: bool| {
        lines.push(format!("{} {desc}", if ok { "PASS" } else { "FAIL" }));
        passed &= ok;
    };
    if let (Some(f), Some(r)) = (get("full", 2), get("rloc", 2)) {
        check(
            format!("full {f:.4} beats rloc {r:.4} by >= 0.03 at 2 glances"),
            f - r >= 0.03,
        );
    }
    if let (Some(f), Some(r)) = (get("full", 10), get("rloc", 10)) {
        check(
            format!("full {f:.4} and rloc {r:.4} agree within 0.02 at 10 glances"),
            (f - r).abs() <= 0.02,
        );
    }
    if let (Some(a), Some(b)) = (get("mlp", 6), get("mlp", 2)) {
        check(
            format!("mlp plateau: {a:.4} at 6 glances within 0.05 of {b:.4} at 2"),
            a - b < 0.05,
        );
    }
    if let Some(a) = get("mlp-averaged", 6) {
        check(
            format!("mlp-averaged {a:.4} >= 0.90 at 6 glances"),
            a >= 0.90,
        );
    }
    if let Some(f) = get("full", 10) {
        check(format!("full {f:.4} >= 0.97 at 10 glances"), f >= 0.97);
    }
    if lines.is_empty() {
        lines.push("no applicable checks for this grid".to_owned());
    }
    (lines, passed)
}

fn cmd_ablate(args: AblateArgs) -> Result<ExitCode> {
    let settings = args.hyper.settings()?;
    let env = EnvHandle::open(settings.env, settings.dataset.as_deref())?;
    let glance_counts: Vec<usize> = parse_list(&args.glance_counts, "glance count")?;
    let variants: Vec<Variant> = parse_list(&args.variants, "variant")?;
    if args.repeats == 0 {
        return Err(Error::config("repeats must be positive"));
    }
    std::fs::create_dir_all(&args.out)?;

    let pair_both = variants.contains(&Variant::Mlp) && variants.contains(&Variant::MlpAveraged);
    let mut reports: Vec<AccuracyReport> = Vec::new();
    for &s_count in &glance_counts {
        let base = TrainConfig {
            glances: s_count,
            ..settings.train.clone()
        };
        for &variant in &variants {
            let progress = |r: usize, acc: f64| {
                println!(
                    "S={s_count} {} repeat {}/{}: best {:.4}",
                    variant.key(),
                    r + 1,
                    args.repeats,
                    acc
                );
            };
            match variant {
                Variant::Mlp if pair_both => {
                    let (plain, avg) = run_mlp_pair(
                        variant.model_config(settings.model.combiner),
                        &base,
                        env.source(),
                        args.repeats,
                        |r, p, a| {
                            println!(
                                "S={s_count} mlp repeat {}/{}: final {:.4} averaged {:.4}",
                                r + 1,
                                args.repeats,
                                p,
                                a
                            );
                        },
                    )?;
                    reports.push(plain);
                    reports.push(avg);
                }
                Variant::MlpAveraged if pair_both => {}
                _ => reports.push(run_variant(
                    variant,
                    Some(variant.model_config(settings.model.combiner)),
                    &base,
                    env.source(),
                    args.repeats,
                    progress,
                )?),
            }
        }
    }

    let mut wide = String::from("variant");
    for s in &glance_counts {
        wide.push_str(&format!(",S={s}"));
    }
    wide.push('\n');
    for &variant in &variants {
        wide.push_str(variant.key());
        for &s in &glance_counts {
            let cell = reports
                .iter()
                .find(|r| r.variant == variant.key() && r.glances == s)
                .map(|r| format!("{:.4}", r.mean))
                .unwrap_or_default();
            wide.push(',');
            wide.push_str(&cell);
        }
        wide.push('\n');
    }
    std::fs::write(args.out.join("ablate.csv"), &wide)?;

    let mut detail = String::from("variant,glances,repeat,accuracy\n");
    for r in &reports {
        for (i, acc) in r.repeats.iter().enumerate() {
            detail.push_str(&format!("{},{},{i},{acc}\n", r.variant, r.glances));
        }
    }
    std::fs::write(args.out.join("ablate-detail.csv"), detail)?;

    #[derive(Serialize)]
    struct AblateManifest {
        command: String,
        tool_version: String,
        train: TrainConfig,
        combiner: String,
        env: String,
        dataset_sha256: Option<String>,
        glance_counts: Vec<usize>,
        variants: Vec<String>,
        repeats: usize,
        reports: Vec<AccuracyReport>,
    }
    write_json(
        &args.out.join("reports.json"),
        &AblateManifest {
            command: "ablate".to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            train: settings.train.clone(),
            combiner: settings.model.combiner.key().to_owned(),
            env: env.kind().key().to_owned(),
            dataset_sha256: env.dataset_sha256().map(str::to_owned),
            glance_counts: glance_counts.clone(),
            variants: variants.iter().map(|v| v.key().to_owned()).collect(),
            repeats: args.repeats,
            reports: reports.clone(),
        },
    )?;
    print!("{wide}");
    println!("grid written to {}", args.out.display());

    if args.check {
        let (lines, passed) = evaluate_checks(&reports);
        for line in &lines {
            println!("{line}");
        }
        if !passed {
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_object(text: &str) -> Result<ObjectId> {
    if let Ok(i) = text.parse::<u8>() {
        return ObjectId::try_from(i);
    }
    match text {
        "ridge" => Ok(ObjectId::Ridge),
        "incline" => Ok(ObjectId::Incline),
        "flat" => Ok(ObjectId::Flat),
        "convex" => Ok(ObjectId::Convex),
        other => Err(Error::config(format!("unknown object `{other}`"))),
    }
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<ExitCode> {
    let settings = args.hyper.settings()?;
    let env = EnvHandle::open(settings.env, settings.dataset.as_deref())?;
    let (model, params) = load_model_params(&settings, &args.checkpoint)?;
    let objects: Vec<ObjectId> = match &args.object {
        Some(name) => vec![parse_object(name)?],
        None => ObjectId::ALL.to_vec(),
    };
    std::fs::create_dir_all(&args.out)?;
    let key = StreamKey {
        seed: settings.train.seed,
        nonce: 0,
        purpose: StreamPurpose::Eval,
    };

    #[derive(Serialize)]
    struct ObjectSummary {
        object: String,
        episodes: u64,
        modal_phi_bin_sampled: usize,
        modal_phi_center_sampled: f64,
        modal_phi_bin_mean: usize,
        modal_phi_center_mean: f64,
    }
    let mut summaries = Vec::new();
    for &object in &objects {
        let bundle = build_heatmap(
            &model,
            &params,
            env.source(),
            object,
            settings.train.glances,
            settings.train.batch_size,
            args.batches,
            key,
        )?;
        for (mode, grid) in [("sampled", &bundle.sampled), ("mean", &bundle.mean)] {
            let stem = format!("{object}-{mode}");
            std::fs::write(args.out.join(format!("{stem}.csv")), grid.to_csv())?;
            std::fs::write(
                args.out.join(format!("{stem}.svg")),
                grid.to_svg(&format!("{object} / {mode} final poses")),
            )?;
        }
        let sampled_bin = bundle.sampled.modal_phi_bin();
        let mean_bin = bundle.mean.modal_phi_bin();
        println!(
            "{object}: modal phi bin {sampled_bin} (center {:.3} rad) over {} episodes",
            crate::eval::HeatmapGrid::phi_bin_center(sampled_bin),
            bundle.sampled.episodes
        );
        summaries.push(ObjectSummary {
            object: object.to_string(),
            episodes: bundle.sampled.episodes,
            modal_phi_bin_sampled: sampled_bin,
            modal_phi_center_sampled: crate::eval::HeatmapGrid::phi_bin_center(sampled_bin),
            modal_phi_bin_mean: mean_bin,
            modal_phi_center_mean: crate::eval::HeatmapGrid::phi_bin_center(mean_bin),
        });
    }
    write_json(&args.out.join("summary.json"), &summaries)?;
    println!("heat-maps written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let settings = args.hyper.settings()?;
    let env = EnvHandle::open(settings.env, settings.dataset.as_deref())?;
    let model = Model::new(settings.model);
    let seed = settings.train.seed;
    let batch = 8;

    let mut init_rng = episode_rng(
        StreamKey {
            seed,
            nonce: 0,
            purpose: StreamPurpose::Init,
        },
        0,
    );
    let mut params = model.init_params(&mut init_rng);
    let plan = RolloutPlan::new(settings.train.glances, batch, PoseSelection::Policy);
    let chunks = rollout_batch(
        &model,
        &params,
        env.source(),
        plan,
        StreamKey {
            seed,
            nonce: 1,
            purpose: StreamPurpose::Train,
        },
    )?;
    let fixture = &chunks[0];

    let ce_all = settings.train.ce_all_glances;
    let discount = settings.train.discount;
    let mut coord_rng = episode_rng(
        StreamKey {
            seed,
            nonce: 2,
            purpose: StreamPurpose::Train,
        },
        0,
    );
    let coords = sample_coords(model.layout(), args.coords, &mut coord_rng);

    // Classification loss backpropagates through everything: replay the
    // recorded glance inputs under perturbed parameters.
    let mut ce_analytic = params.like();
    accumulate_hybrid(
        &model,
        &params,
        fixture,
        0.0,
        ce_all,
        fixture.batch(),
        &mut ce_analytic,
    )?;
    let mut ce_loss = |p: &crate::nn::ParamStore| -> f64 {
        let n = fixture.glances.len();
        let b = fixture.batch();
        let mut state = model.zero_state(b);
        let mut total = 0.0;
        for (g, stored) in fixture.glances.iter().enumerate() {
            let input = GlanceInput {
                pressure: stored.input.pressure.clone(),
                pose: stored.input.pose.clone(),
            };
            let (ctx, next) = model.glance_forward(p, input, &state);
            state = next;
            if ce_all || g + 1 == n {
                for (i, label) in fixture.labels.iter().enumerate() {
                    total -= ctx.dist[[i, label.index()]].ln();
                }
            }
        }
        total / b as f64
    };
    let ce_report = finite_difference_check(&mut params, &ce_analytic, &mut ce_loss, 1e-5, &coords);

    // The baseline head trains on detached features, so its loss reads the
    // recorded core outputs and only the head parameters matter.
    let mut base_analytic = params.like();
    accumulate_baseline(
        &model,
        &params,
        fixture,
        discount,
        fixture.batch(),
        &mut base_analytic,
    );
    let mut base_loss = |p: &crate::nn::ParamStore| -> f64 {
        let n = fixture.glances.len();
        let b = fixture.batch();
        let mut total = 0.0;
        for (g, stored) in fixture.glances.iter().enumerate() {
            let values = model.baseline_value(p, &stored.core_out().view());
            let horizon = (n - 1 - g) as i32;
            for i in 0..b {
                let target = fixture.rewards[i] * discount.powi(horizon);
                let d = values[i] - target;
                total += d * d;
            }
        }
        total / b as f64
    };
    let base_report =
        finite_difference_check(&mut params, &base_analytic, &mut base_loss, 1e-5, &coords);

    let mut failed = false;
    for (name, report) in [("classification", &ce_report), ("baseline", &base_report)] {
        println!(
            "{name}: {} coordinates, max relative error {:.3e} at `{}` (analytic {:.6e}, numeric {:.6e})",
            report.checked,
            report.max_rel_err,
            report.worst_block,
            report.worst_analytic,
            report.worst_numeric
        );
        failed |= !(report.max_rel_err < args.tolerance);
    }
    if failed {
        eprintln!("gradient check FAILED above tolerance {:.1e}", args.tolerance);
        Ok(ExitCode::FAILURE)
    } else {
        println!("gradient check passed (tolerance {:.1e})", args.tolerance);
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let log_path = args.run.join("log.csv");
    let rows = parse_log(&std::fs::read_to_string(&log_path)?)?;
    if rows.is_empty() {
        return Err(Error::format("training log", "no rows".to_owned()));
    }

    let reward = thin_points(
        rows.iter()
            .map(|r| (r.step as f64, r.mean_reward))
            .collect(),
        400,
    );
    let acc: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.accuracy.map(|a| (r.step as f64, a)))
        .collect();
    let best = acc
        .iter()
        .copied()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite accuracy"));

    let svg = line_chart(
        "training run",
        "step",
        &[
            Series {
                name: "batch mean reward",
                color: "#c0c0c0",
                points: reward,
            },
            Series {
                name: "snapshot accuracy",
                color: "#1f77b4",
                points: acc.clone(),
            },
        ],
    );
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.run.join("curve.svg"));
    std::fs::write(&out_path, svg)?;

    let last = rows.last().expect("nonempty");
    println!("{} steps logged, final lr {:.4e}", rows.len(), last.lr);
    if let Some((step, a)) = best {
        println!("best snapshot accuracy {a:.4} at step {}", step as usize + 1);
    } else {
        println!("no accuracy snapshots logged");
    }
    println!("curve written to {}", out_path.display());
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use std::io::Write as _;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "glances = 5\nlr_initial = 1e-3\nseed = 9").unwrap();
        let cli = Cli::try_parse_from([
            "ham",
            "train",
            "--config",
            file.path().to_str().unwrap(),
            "--glances",
            "7",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else {
            panic!("expected train");
        };
        let s = args.hyper.settings().unwrap();
        assert_eq!(s.train.glances, 7);
        assert_eq!(s.train.lr_initial, 1e-3);
        assert_eq!(s.train.seed, 9);
        assert_eq!(s.train.batch_size, 64);
    }

    #[test]
    fn invalid_merged_settings_are_rejected() {
        let cli = Cli::try_parse_from(["ham", "train", "--momentum", "1.5"]).unwrap();
        let Command::Train(args) = cli.command else {
            panic!("expected train");
        };
        assert!(args.hyper.settings().is_err());
    }

    #[test]
    fn object_and_list_parsing() {
        assert_eq!(parse_object("ridge").unwrap(), ObjectId::Ridge);
        assert_eq!(parse_object("3").unwrap(), ObjectId::Convex);
        assert!(parse_object("cube").is_err());
        assert_eq!(
            parse_list::<usize>("1, 2,3", "glance count").unwrap(),
            vec![1, 2, 3]
        );
        assert!(parse_list::<usize>("1,x", "glance count").is_err());
        assert!(parse_list::<usize>(" , ", "glance count").is_err());
    }

    fn report(variant: &str, glances: usize, mean: f64) -> AccuracyReport {
        AccuracyReport {
            variant: variant.to_owned(),
            glances,
            repeats: vec![mean],
            mean,
            sem: 0.0,
            config_hash: String::new(),
        }
    }

    #[test]
    fn threshold_checks_read_the_grid() {
        let good = vec![
            report("full", 2, 0.83),
            report("rloc", 2, 0.75),
            report("full", 10, 0.994),
            report("rloc", 10, 0.995),
            report("mlp", 2, 0.668),
            report("mlp", 6, 0.670),
            report("mlp-averaged", 6, 0.976),
        ];
        let (lines, passed) = evaluate_checks(&good);
        assert!(passed, "{lines:?}");
        assert_eq!(lines.len(), 5);

        let bad = vec![report("full", 2, 0.76), report("rloc", 2, 0.75)];
        let (lines, passed) = evaluate_checks(&bad);
        assert!(!passed);
        assert!(lines[0].starts_with("FAIL"));

        let (lines, passed) = evaluate_checks(&[report("full", 3, 0.9)]);
        assert!(passed);
        assert_eq!(lines, vec!["no applicable checks for this grid"]);
    }
}
