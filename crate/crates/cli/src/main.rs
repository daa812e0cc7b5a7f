//! `rtseg` — command-line front end for the dose-guided lesion
//! segmentation toolkit.
//!
//! Every subcommand reads MV1 volumes and JSON sidecars, writes a single
//! machine-readable JSON report to stdout, and (with `--verbose`) mirrors
//! a human-readable table to stderr. Identical command lines with
//! identical seeds produce byte-identical stdout and output files. A JSON
//! config file may supply any option; explicit command-line flags win.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rtseg_core::clicksim::{error_regions, sample_clicks, ClickPolarity};
use rtseg_core::dataset::{self, Case};
use rtseg_core::doseprompt::{dose_guided_box, roi_mask, DosePromptConfig};
use rtseg_core::grid::Connectivity;
use rtseg_core::io;
use rtseg_core::metrics::{evaluate, MetricsReport};
use rtseg_core::phantom::{augment, generate_case, AugmentConfig, PhantomSpec};
use rtseg_core::refiner::{infer, train, RefinerModel, TrainConfig};
use rtseg_core::rng::SeededRng;
use rtseg_core::stf::{stf_grad, LossParams};
use rtseg_core::sweep::{sweep_clicks, sweep_tau, SweepReport};
use rtseg_core::textprompt::{Task, TextPromptRecord};

#[derive(Parser)]
#[command(
    name = "rtseg",
    version,
    about = "Dose-guided prompt segmentation toolkit for tiny lesions"
)]
struct Cli {
    /// Base seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pretty-print the JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Also print a human-readable summary to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    /// JSON file supplying defaults for any option; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic cases and write them with a manifest.
    Phantom(PhantomArgs),
    /// Derive the dose-guided box prompt from a dose volume.
    PromptBox(PromptBoxArgs),
    /// Sample corrective clicks from the disagreement of two masks.
    Clicks(ClicksArgs),
    /// Score a probability map against a reference mask inside an ROI.
    Loss(LossArgs),
    /// Compare a predicted mask against a reference mask.
    Eval(EvalArgs),
    /// Train the task-conditioned voxel classifier on a manifest.
    Train(TrainArgs),
    /// Segment one case with a trained model.
    Predict(PredictArgs),
    /// Train and evaluate across dose thresholds.
    SweepTau(SweepTauArgs),
    /// Train and evaluate across click schedules.
    SweepClicks(SweepClicksArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Lesion task: orn, ce, or crn.
    #[arg(long)]
    task: Option<String>,
    /// Number of cases to generate.
    #[arg(long)]
    n: Option<usize>,
    /// Output directory; receives the volumes and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Augmented copies to add per generated case.
    #[arg(long)]
    augment: Option<usize>,
    /// Cubic grid dimension, voxels per axis.
    #[arg(long)]
    dim: Option<usize>,
    /// Isotropic voxel spacing, mm.
    #[arg(long)]
    spacing: Option<f64>,
}

#[derive(Args)]
struct PromptBoxArgs {
    /// Dose volume (MV1).
    #[arg(long)]
    dose: Option<PathBuf>,
    /// Relative dose threshold in (0, 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Component connectivity: 6, 18, or 26.
    #[arg(long)]
    connectivity: Option<u32>,
    /// Optional path to write the high-dose component mask (MV1).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClicksArgs {
    /// Predicted mask (MV1).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Reference mask (MV1).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Clicks to sample.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct LossArgs {
    /// Probability volume (MV1).
    #[arg(long)]
    prob: Option<PathBuf>,
    /// Reference mask (MV1).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// ROI mask restricting the loss (MV1).
    #[arg(long)]
    roi: Option<PathBuf>,
    /// Weight of the Dice term.
    #[arg(long)]
    lambda_dice: Option<f64>,
    /// Weight of the focal Tversky term.
    #[arg(long)]
    lambda_ft: Option<f64>,
    /// False-positive weight in the Tversky index.
    #[arg(long)]
    alpha: Option<f64>,
    /// False-negative weight in the Tversky index.
    #[arg(long)]
    beta: Option<f64>,
    /// Focal exponent.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted mask (MV1).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Reference mask (MV1).
    #[arg(long)]
    gt: Option<PathBuf>,
}

/// Training options shared by `train` and the sweep commands.
#[derive(Args)]
struct CoreTrainFlags {
    /// Gradient-descent epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Relative dose threshold for the box prompt.
    #[arg(long)]
    tau: Option<f64>,
    /// Component connectivity: 6, 18, or 26.
    #[arg(long)]
    connectivity: Option<u32>,
    /// Probability cut for binarizing predictions.
    #[arg(long)]
    threshold: Option<f64>,
    /// Click/box decay scale in mm.
    #[arg(long)]
    decay_scale: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training manifest (JSON array of case file entries).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output path for the trained model (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Click refinement iterations per epoch pass.
    #[arg(long)]
    iterations: Option<usize>,
    /// Clicks sampled per refinement iteration.
    #[arg(long)]
    clicks_per_iter: Option<usize>,
    #[command(flatten)]
    flags: CoreTrainFlags,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Image volume (MV1).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Dose volume (MV1).
    #[arg(long)]
    dose: Option<PathBuf>,
    /// Text prompt record (JSON).
    #[arg(long)]
    text: Option<PathBuf>,
    /// Output mask path (MV1).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative dose threshold for the box prompt.
    #[arg(long)]
    tau: Option<f64>,
    /// Component connectivity: 6, 18, or 26.
    #[arg(long)]
    connectivity: Option<u32>,
    /// Probability cut for binarizing the prediction.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct SweepTauArgs {
    /// Training manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Held-out evaluation manifest.
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    /// Dose thresholds to sweep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Worker threads for independent sweep rows.
    #[arg(long)]
    parallel: Option<usize>,
    /// Click refinement iterations per epoch pass.
    #[arg(long)]
    iterations: Option<usize>,
    /// Clicks sampled per refinement iteration.
    #[arg(long)]
    clicks_per_iter: Option<usize>,
    #[command(flatten)]
    flags: CoreTrainFlags,
}

#[derive(Args)]
struct SweepClicksArgs {
    /// Training manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Held-out evaluation manifest.
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    /// Refinement iteration counts to sweep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    iterations: Option<Vec<usize>>,
    /// Per-iteration click counts to sweep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    clicks: Option<Vec<usize>>,
    /// Worker threads for independent sweep rows.
    #[arg(long)]
    parallel: Option<usize>,
    #[command(flatten)]
    flags: CoreTrainFlags,
}

/// A config value that may be a single number or a list, depending on the
/// command reading it (e.g. `iterations`).
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> OneOrMany<T> {
    fn scalar(&self, key: &str) -> anyhow::Result<T> {
        match self {
            OneOrMany::One(x) => Ok(*x),
            OneOrMany::Many(_) => bail!("config key {key:?} must be a single value for this command"),
        }
    }

    fn list(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

/// Flat defaults file: keys mirror the long option names. Unknown keys are
/// rejected so typos fail loudly.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    task: Option<String>,
    n: Option<usize>,
    out: Option<PathBuf>,
    augment: Option<usize>,
    dim: Option<usize>,
    spacing: Option<f64>,
    dose: Option<PathBuf>,
    tau: Option<f64>,
    connectivity: Option<u32>,
    pred: Option<PathBuf>,
    gt: Option<PathBuf>,
    count: Option<usize>,
    prob: Option<PathBuf>,
    roi: Option<PathBuf>,
    lambda_dice: Option<f64>,
    lambda_ft: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    manifest: Option<PathBuf>,
    test_manifest: Option<PathBuf>,
    model: Option<PathBuf>,
    image: Option<PathBuf>,
    text: Option<PathBuf>,
    epochs: Option<usize>,
    lr: Option<f64>,
    iterations: Option<OneOrMany<usize>>,
    clicks_per_iter: Option<usize>,
    threshold: Option<f64>,
    decay_scale: Option<f64>,
    taus: Option<Vec<f64>>,
    clicks: Option<Vec<usize>>,
    parallel: Option<usize>,
}

/// Flag value, else config-file value, else error naming the option.
fn need<T>(flag: Option<T>, file: Option<T>, name: &str) -> anyhow::Result<T> {
    flag.or(file)
        .ok_or_else(|| anyhow!("missing required option --{name} (flag or config file)"))
}

/// Flag value, else config-file value, else the built-in default.
fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Writes the JSON report to stdout and, under --verbose, a table to stderr.
struct Output {
    pretty: bool,
    verbose: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, table: &str) -> anyhow::Result<()> {
        use std::io::Write;
        let json = if self.pretty {
            serde_json::to_string_pretty(value)?
        } else {
            serde_json::to_string(value)?
        };
        // A consumer that closes the pipe early (e.g. `rtseg ... | head`)
        // has all it wants; that is not an error worth a panic or a
        // non-zero exit.
        let mut stdout = std::io::stdout().lock();
        match writeln!(stdout, "{json}").and_then(|()| stdout.flush()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            other => other?,
        }
        if self.verbose && !table.is_empty() {
            eprint!("{table}");
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file: ConfigFile = match &cli.config {
        Some(path) => io::read_json(path).context("reading config file")?,
        None => ConfigFile::default(),
    };
    let out = Output {
        pretty: cli.json,
        verbose: cli.verbose,
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Phantom(args) => cmd_phantom(args, &file, seed, &out),
        Command::PromptBox(args) => cmd_prompt_box(args, &file, &out),
        Command::Clicks(args) => cmd_clicks(args, &file, seed, &out),
        Command::Loss(args) => cmd_loss(args, &file, &out),
        Command::Eval(args) => cmd_eval(args, &file, &out),
        Command::Train(args) => cmd_train(args, &file, seed, &out),
        Command::Predict(args) => cmd_predict(args, &file, &out),
        Command::SweepTau(args) => cmd_sweep_tau(args, &file, seed, &out),
        Command::SweepClicks(args) => cmd_sweep_clicks(args, &file, seed, &out),
    }
}

fn prompt_config(tau: Option<f64>, connectivity: Option<u32>, file: &ConfigFile) -> anyhow::Result<DosePromptConfig> {
    let mut cfg = DosePromptConfig::default();
    if let Some(tau) = tau.or(file.tau) {
        cfg.tau = tau;
    }
    if let Some(deg) = connectivity.or(file.connectivity) {
        cfg.connectivity = Connectivity::from_degree(deg)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn loss_params(args: &LossArgs, file: &ConfigFile) -> LossParams {
    let mut params = LossParams::default();
    if let Some(v) = args.lambda_dice.or(file.lambda_dice) {
        params.lambda1 = v;
    }
    if let Some(v) = args.lambda_ft.or(file.lambda_ft) {
        params.lambda2 = v;
    }
    if let Some(v) = args.alpha.or(file.alpha) {
        params.alpha = v;
    }
    if let Some(v) = args.beta.or(file.beta) {
        params.beta = v;
    }
    if let Some(v) = args.gamma.or(file.gamma) {
        params.gamma = v;
    }
    params
}

/// Assemble a training configuration from defaults, config file, and flags.
/// Schedule values arrive pre-resolved because sweep commands own them.
fn train_config(
    flags: &CoreTrainFlags,
    iterations: Option<usize>,
    clicks_per_iter: Option<usize>,
    file: &ConfigFile,
    seed: u64,
) -> anyhow::Result<TrainConfig> {
    let mut cfg = TrainConfig {
        seed,
        ..Default::default()
    };
    if let Some(e) = flags.epochs.or(file.epochs) {
        cfg.epochs = e;
    }
    if let Some(lr) = flags.lr.or(file.lr) {
        cfg.learning_rate = lr;
    }
    cfg.prompt = prompt_config(flags.tau, flags.connectivity, file)?;
    if let Some(t) = flags.threshold.or(file.threshold) {
        cfg.threshold = t;
    }
    if let Some(d) = flags.decay_scale.or(file.decay_scale) {
        cfg.decay_scale_mm = d;
    }
    if let Some(it) = iterations {
        cfg.schedule.iterations = it;
    }
    if let Some(c) = clicks_per_iter.or(file.clicks_per_iter) {
        cfg.schedule.clicks_per_iteration = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PhantomOut {
    cases: usize,
    manifest: PathBuf,
}

fn cmd_phantom(args: PhantomArgs, file: &ConfigFile, seed: u64, out: &Output) -> anyhow::Result<()> {
    let task: Task = need(args.task, file.task.clone(), "task")?.parse()?;
    let n = need(args.n, file.n, "n")?;
    if n == 0 {
        bail!("--n must be at least 1");
    }
    let out_dir = need(args.out, file.out.clone(), "out")?;
    let copies = pick(args.augment, file.augment, 0);
    let dim = pick(args.dim, file.dim, 48);
    let spacing = pick(args.spacing, file.spacing, 1.0);
    let base = PhantomSpec {
        task,
        dims: [dim; 3],
        spacing_mm: [spacing; 3],
        ..Default::default()
    };
    base.validate()?;

    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let tag = task.tag().to_ascii_lowercase();
    let mut entries = Vec::new();
    for i in 0..n {
        let spec = PhantomSpec {
            seed: SeededRng::derive(seed, &[i as u64]).seed(),
            ..base
        };
        let case = generate_case(&spec)?;
        entries.push(dataset::write_case(&out_dir, &format!("{tag}_{i:03}"), &case)?);
        for k in 0..copies {
            let mut rng = SeededRng::derive(seed, &[i as u64, 1 + k as u64]);
            let aug = augment(&case, &AugmentConfig::default(), &mut rng)?;
            entries.push(dataset::write_case(&out_dir, &format!("{tag}_{i:03}_aug{k}"), &aug)?);
        }
    }
    let manifest = out_dir.join("manifest.json");
    dataset::save_manifest(&manifest, &entries)?;
    let table = format!(
        "wrote {} case(s) ({} generated, {} augmented) under {}\n",
        entries.len(),
        n,
        entries.len() - n,
        out_dir.display()
    );
    out.emit(
        &PhantomOut {
            cases: entries.len(),
            manifest,
        },
        &table,
    )
}

#[derive(Serialize)]
struct PromptBoxOut {
    corner_min: [usize; 3],
    corner_max: [usize; 3],
    roi_voxels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    roi: Option<PathBuf>,
}

fn cmd_prompt_box(args: PromptBoxArgs, file: &ConfigFile, out: &Output) -> anyhow::Result<()> {
    let cfg = prompt_config(args.tau, args.connectivity, file)?;
    let dose = io::read_volume(need(args.dose, file.dose.clone(), "dose")?)?;
    let roi = roi_mask(&dose, &cfg)?;
    let bx = dose_guided_box(&dose, &cfg)?;
    if let Some(path) = &args.out {
        io::write_mask(path, &roi)?;
    }
    let table = format!(
        "box {:?} .. {:?}, component of {} voxel(s)\n",
        bx.corner_min,
        bx.corner_max,
        roi.foreground_count()
    );
    out.emit(
        &PromptBoxOut {
            corner_min: bx.corner_min,
            corner_max: bx.corner_max,
            roi_voxels: roi.foreground_count(),
            roi: args.out,
        },
        &table,
    )
}

fn cmd_clicks(args: ClicksArgs, file: &ConfigFile, seed: u64, out: &Output) -> anyhow::Result<()> {
    let pred = io::read_mask(need(args.pred, file.pred.clone(), "pred")?)?;
    let gt = io::read_mask(need(args.gt, file.gt.clone(), "gt")?)?;
    let count = pick(args.count, file.count, 4);
    let (fn_mask, fp_mask) = error_regions(&pred, &gt)?;
    let mut rng = SeededRng::new(seed);
    let clicks = sample_clicks(&fn_mask, &fp_mask, count, &mut rng)?;
    let pos = clicks.iter().filter(|c| c.polarity == ClickPolarity::Pos).count();
    let table = format!(
        "{} click(s): {} positive, {} negative (from {} missed / {} spurious voxels)\n",
        clicks.len(),
        pos,
        clicks.len() - pos,
        fn_mask.foreground_count(),
        fp_mask.foreground_count()
    );
    out.emit(&clicks, &table)
}

#[derive(Serialize)]
struct LossOut {
    loss: f64,
    grad_l2: f64,
    roi_voxels: usize,
}

fn cmd_loss(args: LossArgs, file: &ConfigFile, out: &Output) -> anyhow::Result<()> {
    let params = loss_params(&args, file);
    let prob = io::read_prob_volume(need(args.prob, file.prob.clone(), "prob")?)?;
    let gt = io::read_mask(need(args.gt, file.gt.clone(), "gt")?)?;
    let roi = io::read_mask(need(args.roi, file.roi.clone(), "roi")?)?;
    let (loss, grad) = stf_grad(&prob, &gt, &roi, &params)?;
    let grad_l2 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let table = format!(
        "loss {loss:.6}, gradient l2 {grad_l2:.6} over {} ROI voxel(s)\n",
        roi.foreground_count()
    );
    out.emit(
        &LossOut {
            loss,
            grad_l2,
            roi_voxels: roi.foreground_count(),
        },
        &table,
    )
}

fn metrics_table(report: &MetricsReport) -> String {
    let fmt_mm = |v: Option<f64>| match v {
        Some(x) => format!("{x:.3} mm"),
        None => "undefined".into(),
    };
    format!(
        "dice {:.4}  iou {:.4}  precision {:.4}  recall {:.4}  hd95 {}  assd {}\n",
        report.dice,
        report.iou,
        report.precision,
        report.recall,
        fmt_mm(report.hd95_mm),
        fmt_mm(report.assd_mm),
    )
}

fn cmd_eval(args: EvalArgs, file: &ConfigFile, out: &Output) -> anyhow::Result<()> {
    let pred = io::read_mask(need(args.pred, file.pred.clone(), "pred")?)?;
    let gt = io::read_mask(need(args.gt, file.gt.clone(), "gt")?)?;
    let report = evaluate(&pred, &gt)?;
    out.emit(&report, &metrics_table(&report))
}

#[derive(Serialize)]
struct TrainOut {
    model: PathBuf,
    cases: usize,
    epochs: usize,
    initial_loss: f64,
    final_loss: f64,
}

fn cmd_train(args: TrainArgs, file: &ConfigFile, seed: u64, out: &Output) -> anyhow::Result<()> {
    let file_iters = match &file.iterations {
        Some(v) => Some(v.scalar("iterations")?),
        None => None,
    };
    let cfg = train_config(
        &args.flags,
        args.iterations.or(file_iters),
        args.clicks_per_iter,
        file,
        seed,
    )?;
    let manifest = need(args.manifest, file.manifest.clone(), "manifest")?;
    let out_path = need(args.out, file.out.clone(), "out")?;
    let cases = dataset::load_cases(&manifest)?;
    let outcome = train(&cases, &cfg)?;
    outcome.model.save(&out_path)?;
    let initial = *outcome.epoch_losses.first().expect("at least one epoch");
    let fin = *outcome.epoch_losses.last().expect("at least one epoch");
    let table = format!(
        "trained on {} case(s) for {} epoch(s): loss {initial:.6} -> {fin:.6}\nmodel written to {}\n",
        cases.len(),
        cfg.epochs,
        out_path.display()
    );
    out.emit(
        &TrainOut {
            model: out_path,
            cases: cases.len(),
            epochs: cfg.epochs,
            initial_loss: initial,
            final_loss: fin,
        },
        &table,
    )
}

#[derive(Serialize)]
struct PredictOut {
    out: PathBuf,
    foreground_voxels: usize,
}

fn cmd_predict(args: PredictArgs, file: &ConfigFile, out: &Output) -> anyhow::Result<()> {
    let mut cfg = TrainConfig {
        prompt: prompt_config(args.tau, args.connectivity, file)?,
        ..TrainConfig::default()
    };
    if let Some(t) = args.threshold.or(file.threshold) {
        cfg.threshold = t;
    }
    cfg.validate()?;
    let model = RefinerModel::load(need(args.model, file.model.clone(), "model")?)?;
    let image = io::read_volume(need(args.image, file.image.clone(), "image")?)?;
    let dose = io::read_volume(need(args.dose, file.dose.clone(), "dose")?)?;
    let text: TextPromptRecord = io::read_json(need(args.text, file.text.clone(), "text")?)?;
    let out_path = need(args.out, file.out.clone(), "out")?;
    let mask = infer(&model, &image, &dose, &text, &cfg)?;
    io::write_mask(&out_path, &mask)?;
    let table = format!(
        "{} task, {} foreground voxel(s); mask written to {}\n",
        text.task,
        mask.foreground_count(),
        out_path.display()
    );
    out.emit(
        &PredictOut {
            out: out_path,
            foreground_voxels: mask.foreground_count(),
        },
        &table,
    )
}

fn sweep_table(report: &SweepReport) -> String {
    let fmt_ms = |mean: Option<f64>, sd: Option<f64>| match (mean, sd) {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        _ => "-".into(),
    };
    let mut s = format!(
        "{:>22} {:>4} {:>6} {:>20} {:>20}\n",
        report.parameter, "n", "hd95n", "dice (mean ± sd)", "hd95 mm (mean ± sd)"
    );
    for row in &report.rows {
        s += &format!(
            "{:>22} {:>4} {:>6} {:>20} {:>20}\n",
            format!("{:.3}", row.value),
            row.n_cases,
            row.n_hd95,
            fmt_ms(row.mean_dice, row.std_dice),
            fmt_ms(row.mean_hd95_mm, row.std_hd95_mm),
        );
        if let Some(err) = &row.error {
            s += &format!("{:>22} failed: {err}\n", "");
        }
    }
    s
}

fn load_split(
    manifest: Option<PathBuf>,
    test_manifest: Option<PathBuf>,
    file: &ConfigFile,
) -> anyhow::Result<(Vec<Case>, Vec<Case>)> {
    let train_path = need(manifest, file.manifest.clone(), "manifest")?;
    let test_path = need(test_manifest, file.test_manifest.clone(), "test-manifest")?;
    Ok((dataset::load_cases(&train_path)?, dataset::load_cases(&test_path)?))
}

fn cmd_sweep_tau(args: SweepTauArgs, file: &ConfigFile, seed: u64, out: &Output) -> anyhow::Result<()> {
    let file_iters = match &file.iterations {
        Some(v) => Some(v.scalar("iterations")?),
        None => None,
    };
    let cfg = train_config(
        &args.flags,
        args.iterations.or(file_iters),
        args.clicks_per_iter,
        file,
        seed,
    )?;
    let taus = pick(
        args.taus,
        file.taus.clone(),
        vec![0.5, 0.6, 0.7, 0.8, 0.9],
    );
    let parallel = pick(args.parallel, file.parallel, 1);
    let (train_cases, test_cases) = load_split(args.manifest, args.test_manifest, file)?;
    let report = sweep_tau(&train_cases, &test_cases, &cfg, &taus, parallel)?;
    let table = sweep_table(&report);
    out.emit(&report, &table)
}

fn cmd_sweep_clicks(
    args: SweepClicksArgs,
    file: &ConfigFile,
    seed: u64,
    out: &Output,
) -> anyhow::Result<()> {
    let cfg = train_config(&args.flags, None, None, file, seed)?;
    let file_iters = file.iterations.as_ref().map(|v| v.list());
    let iterations = pick(args.iterations, file_iters, vec![0, 1, 3, 5]);
    let clicks = pick(args.clicks, file.clicks.clone(), vec![2, 4, 6]);
    let parallel = pick(args.parallel, file.parallel, 1);
    let (train_cases, test_cases) = load_split(args.manifest, args.test_manifest, file)?;
    let reports = sweep_clicks(&train_cases, &test_cases, &cfg, &iterations, &clicks, parallel)?;
    let table: String = reports.iter().map(sweep_table).collect();
    out.emit(&reports, &table)
}
