//! `ssn`: generate synthetic driving logs, train the trajectory network,
//! run the gradient checks, evaluate closed-loop collisions and chart the
//! resulting report.
//!
//! Exit status: 0 success, 1 validation error (bad flags, bad config,
//! failed gradient check), 2 I/O or file-format error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssn::autograd::{inject_backward_fault, OpKind};
use ssn::config::RunConfig;
use ssn::data::format::{read_dataset, write_dataset};
use ssn::data::{generate_synthetic_scenes, RasterConfig};
use ssn::eval::report::{read_report_csv, write_events_csv, write_report_csv};
use ssn::eval::{default_threads, evaluate, render_svg, ModelPolicy};
use ssn::gradcheck::run_suite;
use ssn::net::build_network;
use ssn::train::{fit, Checkpoint};
use ssn::Error;

#[derive(Parser)]
#[command(name = "ssn", version, about = "Sequential spatial network for BEV trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (scenes.jsonl, frames.jsonl, agents.jsonl)
    Gen(GenArgs),
    /// Train a network and write a checkpoint plus loss.csv next to it
    Train(TrainArgs),
    /// Finite-difference check of every primitive, layer and the tiny network
    Gradcheck(GradcheckArgs),
    /// Closed-loop collision evaluation of a checkpoint
    Eval(EvalArgs),
    /// Render a report CSV as a grouped SVG bar chart
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of scenes to generate
    #[arg(long)]
    scenes: usize,
    /// Generator seed
    #[arg(long)]
    seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Run config supplying generator keys
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `gen`
    #[arg(long)]
    data: PathBuf,
    /// Run config (network, training and raster keys)
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint path; loss.csv is written to the same directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// First of the consecutive seeds used by every case
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately corrupt one backward rule (self-test of the suite)
    #[arg(long, hide = true, value_name = "OP")]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory written by `gen`
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint written by `train`
    #[arg(long)]
    ckpt: PathBuf,
    /// Report CSV output
    #[arg(long)]
    report: PathBuf,
    /// Per-event CSV output
    #[arg(long)]
    events: Option<PathBuf>,
    /// Run config; its raster settings must agree with the checkpoint
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model name in the report (default: checkpoint file stem)
    #[arg(long)]
    model: Option<String>,
    /// Also evaluate an untrained network initialized from this seed
    #[arg(long, value_name = "SEED")]
    baseline_seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report CSV written by `eval`
    #[arg(long = "in", value_name = "CSV")]
    input: PathBuf,
    /// SVG output
    #[arg(long)]
    svg: PathBuf,
}

enum Failure {
    Validation(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(f) => Failure::Io(f.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    RunConfig::parse(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?.generator,
        None => Default::default(),
    };
    if a.scenes == 0 {
        return Err(Failure::Validation("--scenes must be at least 1".into()));
    }
    let ds = generate_synthetic_scenes(a.seed, a.scenes, &cfg);
    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    write_dataset(&ds, &a.out).map_err(Error::from)?;
    println!(
        "scenes {} frames {} agents {} -> {}",
        ds.scenes.len(),
        ds.frames.len(),
        ds.agents.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    let ds = read_dataset(&a.data).map_err(Error::from)?;
    let out = fit(&ds, &cfg.network, &cfg.train, &cfg.raster)?;
    out.checkpoint.save(&a.out)?;
    let loss_path = a.out.parent().unwrap_or(Path::new(".")).join("loss.csv");
    let mut w = create(&loss_path)?;
    out.trace
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_failure(&loss_path, e))?;
    for (epoch, mean) in out.trace.epoch_means().iter().enumerate() {
        println!("epoch {epoch} mean loss {mean:.6}");
    }
    println!("steps {} -> {}", out.checkpoint.step, a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    if let Some(name) = &a.inject_fault {
        let kind = OpKind::from_name(name).ok_or_else(|| Failure::Validation(format!("unknown op `{name}`")))?;
        inject_backward_fault(Some(kind));
    }
    let rows = run_suite(a.seed).map_err(Error::from)?;
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    println!("{:width$}  {:>10}  {:>8}  result", "case", "worst", "tol");
    let mut failed = 0;
    for r in &rows {
        let verdict = if r.passed() { "pass" } else { "FAIL" };
        failed += usize::from(!r.passed());
        println!("{:width$}  {:>10.3e}  {:>8.0e}  {verdict}", r.name, r.worst, r.tolerance);
    }
    if failed > 0 {
        return Err(Failure::Validation(format!("{failed} of {} gradient checks failed", rows.len())));
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let mut raster = RasterConfig {
        size: ckpt.config.raster_size,
        ..RasterConfig::default()
    };
    if let Some(p) = &a.config {
        let cfg = load_config(p)?;
        if cfg.network.raster_size != ckpt.config.raster_size {
            return Err(Failure::Validation(format!(
                "raster size mismatch: config {} has raster_size {}, checkpoint {} was trained at {}",
                p.display(),
                cfg.network.raster_size,
                a.ckpt.display(),
                ckpt.config.raster_size
            )));
        }
        raster = cfg.raster;
    }
    let ds = read_dataset(&a.data).map_err(Error::from)?;
    let threads = default_threads();
    let model = a.model.clone().unwrap_or_else(|| {
        a.ckpt.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned())
    });

    let policy = ModelPolicy::new(ckpt.network()?, ckpt.params, raster.clone())?;
    let (report, events) = evaluate(&policy, &ds, &model, threads)?;
    let mut rows = vec![report.row()];
    if let Some(seed) = a.baseline_seed {
        let (net, params) = build_network::<f64>(&ckpt.config, seed)?;
        let baseline = ModelPolicy::new(net, params, raster)?;
        let (r, _) = evaluate(&baseline, &ds, "random-init", threads)?;
        rows.push(r.row());
    }

    let mut w = create(&a.report)?;
    write_report_csv(&mut w, &rows).map_err(Error::from)?;
    if let Some(p) = &a.events {
        write_events_csv(create(p)?, &events).map_err(Error::from)?;
    }
    for r in &rows {
        let miles = r.total_per_1000mi.map_or("n/a".into(), |v| format!("{v:.3}"));
        println!(
            "{}: front {:.3} side {:.3} rear {:.3} per 10k frames, {miles} per 1000 mi",
            r.model, r.front_10k, r.side_10k, r.rear_10k
        );
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let file = File::open(&a.input).map_err(|e| io_failure(&a.input, e))?;
    let rows = read_report_csv(file).map_err(Error::from)?;
    if rows.is_empty() {
        return Err(Failure::Io(format!("{}: no report rows", a.input.display())));
    }
    fs::write(&a.svg, render_svg(&rows)).map_err(|e| io_failure(&a.svg, e))?;
    println!("{} models -> {}", rows.len(), a.svg.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
