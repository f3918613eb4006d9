//! Command-line pipeline: synthesize data, train, generate, transfer,
//! evaluate. Outputs are static files; exit status is nonzero unless every
//! requested output was written.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    load_dataset, make_synthetic_2d, parse_points_csv, points_to_csv, save_dataset, subsample_rows,
    SourceRegressor,
};
use crate::error::{EfmError, Result};
use crate::inference::{generate, trajectory_to_csv, transfer, Integrator, Trajectory};
use crate::metrics::{evaluate_generation, report_to_json};
use crate::model::MatrixFieldModel;
use crate::plot::scatter_svg;
use crate::training::{
    load_checkpoint, save_checkpoint, write_loss_trace, Checkpoint, CouplingKind, StepOutcome,
    TrainConfig, TrainMethod, Trainer,
};

#[derive(Parser)]
#[command(
    name = "efm",
    about = "Conditional generation and style transfer with matrix-field flow matching",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic 2-D two-cluster benchmark dataset.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus a loss trace.
    Train(TrainArgs),
    /// Sample a condition by integrating the generation path.
    Generate(GenerateArgs),
    /// Move samples between conditions along the transfer path.
    Transfer(TransferArgs),
    /// Score generated samples against held-out data per condition.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output CSV path; the JSON sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Samples per cluster (each condition has an inner and an outer cluster).
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0.5)]
    r_inner: f64,
    #[arg(long, default_value_t = 2.0)]
    r_outer: f64,
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV (sidecar resolved automatically).
    #[arg(long)]
    dataset: PathBuf,
    /// Training config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV; defaults to the checkpoint path with `.trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Continue from an existing checkpoint (its config wins; only
    /// --iterations may extend it).
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TrainMethod::Efm)]
    method: TrainMethod,
    /// Flag overrides beat config-file values.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    coupling: Option<CouplingKind>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Target condition as comma-separated coordinates, e.g. "0,1".
    #[arg(long)]
    condition: String,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Integrator::Rk4)]
    integrator: Integrator,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Optional dense trajectory CSV.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Optional scatter SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Dataset for a ground-truth overlay in the SVG.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Source samples: either a dataset (with --from) or a points CSV.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Source condition (required; locates samples when --dataset is used).
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Cap on transferred samples; 0 means all.
    #[arg(long, default_value_t = 0)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Integrator::Rk4)]
    integrator: Integrator,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trajectories: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Points per side of each W1 comparison.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Integrator::Rk4)]
    integrator: Integrator,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report output.
    #[arg(long)]
    out: PathBuf,
}

fn parse_condition(text: &str) -> Result<Array1<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(Array1::from(v)),
        _ => Err(EfmError::Input(format!(
            "condition '{}' must be comma-separated finite numbers",
            text
        ))),
    }
}

fn warn_outside_omega(c: &Array1<f64>, ckpt: &Checkpoint, what: &str) {
    if c.len() != ckpt.omega_min.len() {
        return; // dimension errors surface later with a real error
    }
    let outside = c
        .iter()
        .zip(ckpt.omega_min.iter().zip(ckpt.omega_max.iter()))
        .any(|(v, (lo, hi))| v < lo || v > hi);
    if outside {
        eprintln!(
            "warning: {} condition {:?} lies outside the trained box [{:?}, {:?}]; extrapolating",
            what,
            c.to_vec(),
            ckpt.omega_min,
            ckpt.omega_max
        );
    }
}

fn load_model_and_source(path: &Path) -> Result<(Checkpoint, MatrixFieldModel, SourceRegressor)> {
    let ckpt = load_checkpoint(path)?;
    let model = MatrixFieldModel::from_data(&ckpt.model)?;
    let source = SourceRegressor::from_data(&ckpt.source)?;
    Ok((ckpt, model, source))
}

fn write_outputs(
    terminal: &Array2<f64>,
    traj: &Trajectory,
    out: &Path,
    trajectories: Option<&Path>,
    svg: Option<&Path>,
    gt: Option<&Array2<f64>>,
) -> Result<()> {
    std::fs::write(out, points_to_csv(terminal.view()))?;
    if let Some(tp) = trajectories {
        std::fs::write(tp, trajectory_to_csv(traj))?;
    }
    if let Some(sp) = svg {
        let image = scatter_svg(terminal.view(), gt.as_ref().map(|g| g.view()), Some(traj))?;
        std::fs::write(sp, image)?;
    }
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let ds = make_synthetic_2d(args.samples, args.r_inner, args.r_outer, args.spread, args.seed)?;
    save_dataset(&ds, &args.out)?;
    println!(
        "wrote {} conditions x {} samples to {} (+ sidecar)",
        ds.n_conditions(),
        ds.samples(0).nrows(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let resuming = args.resume.is_some();
    let mut trainer = if let Some(ref resume) = args.resume {
        let mut ckpt = load_checkpoint(resume)?;
        if let Some(it) = args.iterations {
            if it < ckpt.iteration {
                return Err(EfmError::Config(format!(
                    "iterations: {} is before the checkpoint's iteration {}",
                    it, ckpt.iteration
                )));
            }
            ckpt.config.iterations = it;
        }
        if let Some(every) = args.checkpoint_every {
            ckpt.config.checkpoint_every = every;
        }
        Trainer::from_checkpoint(dataset, &ckpt)?
    } else {
        let mut config = match &args.config {
            Some(path) => TrainConfig::from_json_bytes(&std::fs::read(path)?)
                .map_err(|e| EfmError::Config(format!("{}: {}", path.display(), e)))?,
            None => TrainConfig::default(),
        };
        if let Some(v) = args.iterations {
            config.iterations = v;
        }
        if let Some(v) = args.seed {
            config.seed = v;
        }
        if let Some(v) = args.lr {
            config.lr = v;
        }
        if let Some(v) = args.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = args.coupling {
            config.coupling = v;
        }
        if let Some(v) = args.checkpoint_every {
            config.checkpoint_every = v;
        }
        Trainer::new(dataset, config, args.method)?
    };

    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| args.out.with_extension("trace.csv"));
    let every = trainer.config().checkpoint_every;
    let target = trainer.config().iterations;
    let mut rows = Vec::new();
    let mut last_loss = f64::NAN;
    while trainer.iteration() < target {
        match trainer.step()? {
            StepOutcome::Loss(l) => {
                rows.push((trainer.iteration(), l));
                last_loss = l;
            }
            StepOutcome::Skipped(msg) => {
                eprintln!("warning: iteration {} skipped: {}", trainer.iteration(), msg);
            }
        }
        if every > 0 && trainer.iteration() % every == 0 && trainer.iteration() < target {
            let stem = periodic_path(&args.out, trainer.iteration());
            save_checkpoint(&stem, &trainer.checkpoint())?;
        }
    }
    save_checkpoint(&args.out, &trainer.checkpoint())?;
    write_loss_trace(&trace_path, &rows, resuming)?;
    println!(
        "trained {:?} to iteration {} (skipped {}); final loss {:.6}; checkpoint {}",
        trainer.method(),
        trainer.iteration(),
        trainer.skipped(),
        last_loss,
        args.out.display()
    );
    Ok(())
}

fn periodic_path(out: &Path, iteration: u64) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("json");
    out.with_file_name(format!("{}.iter{}.{}", stem, iteration, ext))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let (ckpt, model, source) = load_model_and_source(&args.checkpoint)?;
    let c_star = parse_condition(&args.condition)?;
    warn_outside_omega(&c_star, &ckpt, "target");
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let traj = generate(
        &model,
        &source,
        c_star.view(),
        args.n,
        args.steps,
        args.integrator,
        &mut rng,
    )?;
    let gt = match &args.dataset {
        Some(path) => {
            let ds = load_dataset(path)?;
            ds.find_condition(c_star.view(), 1e-9).map(|i| ds.samples(i).to_owned())
        }
        None => None,
    };
    write_outputs(
        traj.terminal(),
        &traj,
        &args.out,
        args.trajectories.as_deref(),
        args.svg.as_deref(),
        gt.as_ref(),
    )?;
    println!(
        "generated {} samples at condition {:?} -> {}",
        args.n,
        c_star.to_vec(),
        args.out.display()
    );
    Ok(())
}

fn cmd_transfer(args: TransferArgs) -> Result<()> {
    let (ckpt, model, _) = load_model_and_source(&args.checkpoint)?;
    let c_from = parse_condition(&args.from)?;
    let c_to = parse_condition(&args.to)?;
    warn_outside_omega(&c_from, &ckpt, "source");
    warn_outside_omega(&c_to, &ckpt, "target");

    let mut batch = match (&args.dataset, &args.input) {
        (Some(_), Some(_)) => {
            return Err(EfmError::Input("pass either --dataset or --input, not both".into()))
        }
        (Some(path), None) => {
            let ds = load_dataset(path)?;
            let i = ds.find_condition(c_from.view(), 1e-9).ok_or_else(|| {
                EfmError::Input(format!(
                    "--from {:?} is not a condition of {}",
                    c_from.to_vec(),
                    path.display()
                ))
            })?;
            ds.samples(i).to_owned()
        }
        (None, Some(path)) => {
            let bytes = std::fs::read(path)?;
            parse_points_csv(&bytes, &path.display().to_string())?
        }
        (None, None) => {
            return Err(EfmError::Input("transfer needs --dataset or --input samples".into()))
        }
    };
    if args.n > 0 && args.n < batch.nrows() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        batch = subsample_rows(batch.view(), args.n, &mut rng);
    }
    let traj = transfer(&model, batch.view(), c_from.view(), c_to.view(), args.steps, args.integrator)?;
    write_outputs(
        traj.terminal(),
        &traj,
        &args.out,
        args.trajectories.as_deref(),
        args.svg.as_deref(),
        None,
    )?;
    println!(
        "transferred {} samples {:?} -> {:?} into {}",
        batch.nrows(),
        c_from.to_vec(),
        c_to.to_vec(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (_, model, source) = load_model_and_source(&args.checkpoint)?;
    let dataset = load_dataset(&args.dataset)?;
    let entries = evaluate_generation(
        &model,
        &source,
        &dataset,
        args.n,
        args.steps,
        args.integrator,
        args.seed,
    )?;
    std::fs::write(&args.out, report_to_json(&entries)?)?;
    for e in &entries {
        println!("condition {:?}: W1 = {:.6} (n = {})", e.condition, e.w1, e.n);
    }
    println!("report -> {}", args.out.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Binary entry point: parse, run, map errors to exit code 1.
pub fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e);
        std::process::exit(1);
    }
}
