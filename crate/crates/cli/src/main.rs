//! `topoflow` command-line interface.
//!
//! Exit codes: 0 on success, 1 on any error, 2 when a filtration would
//! exceed the simplex budget (set `TOPOFLOW_SIMPLEX_BUDGET` to change it).

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use topoflow::config::RunConfigFile;
use topoflow::generate::{generate, Shape};
use topoflow::io::{diagram_to_csv, format_f64, points_to_csv, read_point_source, write_text};
use topoflow::optimizer::{apply_flow, invert_flow, run_with, Flow, Mode, OptimConfig, RunOutput};
use topoflow::rips::{build_filtration_with_budget, compute_persistence, simplex_budget_from_env};
use topoflow::{Error, PointCloud};

#[derive(Parser)]
#[command(name = "topoflow", version, about = "Topological optimization of point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a Vietoris-Rips persistence diagram.
    Diagram(DiagramArgs),
    /// Run gradient descent on a topological loss.
    Optimize(RunArgs),
    /// Push points through a recorded flow.
    Apply(FlowArgs),
    /// Pull points back through a recorded flow.
    Invert(FlowArgs),
    /// Run vanilla and diffeo descent on the same input and emit both curves.
    Bench(RunArgs),
    /// Sample a synthetic point cloud.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct DiagramArgs {
    /// Point file (CSV, or OFF by extension).
    #[arg(long)]
    input: PathBuf,
    /// Diagram CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Homology dimensions to report.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    dims: Vec<usize>,
    /// Largest simplex dimension (default: one above the largest homology dimension).
    #[arg(long)]
    max_dim: Option<usize>,
    #[arg(long)]
    max_radius: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Optimized cloud (optimize) or combined curves (bench); stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Recorded flow (JSON).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Per-epoch trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    subsample: Option<usize>,
    /// Homology dimensions of the loss.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    max_radius: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    stop_eps: Option<f64>,
    #[arg(long)]
    val_reps: Option<usize>,
    /// Write zeros in the seconds column, making outputs byte-reproducible.
    #[arg(long)]
    no_clock: bool,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output points; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// circle, sphere or uniform-box.
    #[arg(long)]
    shape: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ambient dimension for uniform-box.
    #[arg(long)]
    box_dim: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Diagram(a) => cmd_diagram(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Apply(a) => cmd_apply(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_capacity() {
                eprintln!("hint: pass --subsample (or raise {})", topoflow::rips::BUDGET_ENV);
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn emit(path: Option<&Path>, text: &str) -> topoflow::Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn cmd_diagram(a: DiagramArgs) -> topoflow::Result<()> {
    let x = read_point_source(&a.input)?;
    let top = a.dims.iter().copied().max().unwrap_or(0);
    let max_dim = a.max_dim.unwrap_or(top + 1);
    let c = build_filtration_with_budget(&x, max_dim, a.max_radius, simplex_budget_from_env())?;
    let d = compute_persistence(&c, &a.dims)?;
    emit(a.output.as_deref(), &diagram_to_csv(&d))
}

fn load_run_config(a: &RunArgs) -> topoflow::Result<RunConfigFile> {
    let mut cfg = match &a.config {
        Some(path) => RunConfigFile::load(path)?,
        None => RunConfigFile::new(),
    };
    if a.input.is_some() {
        cfg.input = a.input.clone();
        cfg.shape = None;
    }
    if a.shape.is_some() {
        cfg.shape = a.shape.clone();
        cfg.input = None;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if a.$field.is_some() { cfg.$field = a.$field.clone(); } )* };
    }
    set!(output, n, noise, seed, mode, lr, sigma, subsample, dims, max_radius, epochs, stop_eps, val_reps);
    if a.flow.is_some() {
        cfg.flow_output = a.flow.clone();
    }
    if a.trace.is_some() {
        cfg.trace_output = a.trace.clone();
    }
    if a.no_clock {
        cfg.record_clock = Some(false);
    }
    Ok(cfg)
}

fn optimize(x0: &PointCloud, cfg: &RunConfigFile, optim: &OptimConfig) -> topoflow::Result<RunOutput> {
    let pipeline = cfg.pipeline(x0.dim())?;
    run_with(x0, &pipeline, optim, |_| {})
}

fn cmd_optimize(a: RunArgs) -> topoflow::Result<()> {
    let cfg = load_run_config(&a)?;
    let x0 = cfg.input_cloud()?;
    let optim = cfg.optim_config()?;
    let out = optimize(&x0, &cfg, &optim)?;
    if let Some(path) = &cfg.flow_output {
        out.flow.save(path)?;
    }
    if let Some(path) = &cfg.trace_output {
        out.trace.save(path)?;
    }
    emit(cfg.output.as_deref(), &points_to_csv(&out.cloud))?;
    eprintln!(
        "{} run stopped after {} epochs: {} (validation loss {} -> {})",
        optim.mode,
        out.trace.epochs(),
        out.stop,
        format_f64(out.trace.initial_val_loss),
        format_f64(out.trace.final_val_loss())
    );
    Ok(())
}

fn cmd_bench(a: RunArgs) -> topoflow::Result<()> {
    let cfg = load_run_config(&a)?;
    let x0 = cfg.input_cloud()?;
    let base = cfg.optim_config()?;
    let mut csv = String::from("series,epoch,train_loss,val_loss,support,seconds\n");
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for mode in [Mode::Vanilla, Mode::Diffeo] {
        let optim = OptimConfig { mode, ..base.clone() };
        let out = optimize(&x0, &cfg, &optim)?;
        csv.push_str(&format!("{mode},0,,{},0,0.0\n", format_f64(out.trace.initial_val_loss)));
        for r in &out.trace.records {
            csv.push_str(&format!(
                "{mode},{},{},{},{},{}\n",
                r.epoch,
                format_f64(r.train_loss),
                opt(r.val_loss),
                r.support,
                format_f64(r.seconds)
            ));
        }
        eprintln!("{mode}: {} epochs, {}", out.trace.epochs(), out.stop);
    }
    emit(cfg.output.as_deref(), &csv)
}

fn cmd_apply(a: FlowArgs) -> topoflow::Result<()> {
    let flow = Flow::load(&a.flow)?;
    let x = read_point_source(&a.input)?;
    let y = apply_flow(&flow, &x)?;
    emit(a.output.as_deref(), &points_to_csv(&y))
}

fn cmd_invert(a: FlowArgs) -> topoflow::Result<()> {
    let flow = Flow::load(&a.flow)?;
    let x = read_point_source(&a.input)?;
    let (y, report) = invert_flow(&flow, &x)?;
    for w in report.warnings() {
        eprintln!(
            "warning: step {}: step size times Lipschitz bound is {:.3}, {} points fell back to the explicit estimate",
            w.step, w.contraction, w.unconverged
        );
    }
    emit(a.output.as_deref(), &points_to_csv(&y))
}

fn cmd_generate(a: GenerateArgs) -> topoflow::Result<()> {
    let mut shape: Shape = a.shape.parse()?;
    if let (Shape::UniformBox(_), Some(d)) = (shape, a.box_dim) {
        shape = Shape::UniformBox(d);
    }
    let x = generate(shape, a.n, a.noise, a.seed)?;
    emit(a.output.as_deref(), &points_to_csv(&x))
}
