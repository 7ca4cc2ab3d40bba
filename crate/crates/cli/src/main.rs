use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdr_core::config::PipelineConfig;
use cdr_core::fom::{assemble, solve_fom, Parameter};
use cdr_core::io;
use cdr_core::kernel::predict;
use cdr_core::pipeline::{
    fit_surrogate, rom_outputs, run_pipeline, train_basis, Artifacts, InStage, ReportTable, Stage, StageError,
};
use cdr_core::rom::{project, solve_rom};
use cdr_core::sampling::{sample_stream, streams};

/// Exit code for unreadable or invalid configuration.
const CONFIG_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "cdr", version, about = "Full-order, reduced and kernel surrogate models for 1D convection-diffusion-reaction")]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides sampling.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory, overrides output.dir
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Mu {
    #[arg(long, allow_hyphen_values = true)]
    da: f64,
    #[arg(long, allow_hyphen_values = true)]
    pe: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the full-order operators
    Assemble,
    /// Solve the full-order model at one parameter
    FomSolve {
        #[command(flatten)]
        mu: Mu,
        /// Also write the state trajectory as a snapshot container
        #[arg(long)]
        snapshots: bool,
    },
    /// Run the corner trajectories through HAPOD and project the operators
    PodBuild,
    /// Solve the reduced model at one parameter
    RomSolve {
        #[command(flatten)]
        mu: Mu,
    },
    /// Fit the kernel surrogate on corner FOM and random ROM outputs
    VkogaFit,
    /// Evaluate the kernel surrogate at one parameter
    Predict {
        #[command(flatten)]
        mu: Mu,
    },
    /// Run the full pipeline and write the report
    Run,
    /// Print a report CSV as an aligned table
    Report {
        /// Report CSV; defaults to the one for the current configuration
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> cdr_core::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sampling.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parameter(mu: &Mu, stage: Stage) -> Result<Parameter, StageError> {
    Parameter::new(mu.da, mu.pe).stage(stage)
}

fn missing(path: &std::path::Path, producer: &str) -> cdr_core::Error {
    cdr_core::Error::InvalidArgument(format!("{} not found; run `cdr {producer}` first", path.display()))
}

fn require(path: PathBuf, producer: &str) -> cdr_core::Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(missing(&path, producer))
    }
}

fn execute(command: &Command, cfg: &PipelineConfig) -> Result<(), StageError> {
    let art = Artifacts::new(cfg);
    let times = cfg.time.times();
    let prepare = |stage| -> Result<(), StageError> {
        art.create_dir().stage(stage)?;
        std::fs::write(art.config(), cfg.to_text()).map_err(|e| cdr_core::Error::io(art.config(), e)).stage(stage)
    };
    match command {
        Command::Assemble => {
            prepare(Stage::Assemble)?;
            let ops = assemble(cfg.grid).stage(Stage::Assemble)?;
            io::write_fom_operators(&art.fom_operators(), &ops).stage(Stage::Assemble)?;
            println!("N_h = {}", ops.num_nodes());
            println!("{}", art.fom_operators().display());
        }
        Command::FomSolve { mu, snapshots } => {
            prepare(Stage::FomTraining)?;
            let mu = parameter(mu, Stage::FomTraining)?;
            let ops = assemble(cfg.grid).stage(Stage::Assemble)?;
            let traj = solve_fom(&ops, &mu, cfg.time.num_steps, cfg.time.t_end).stage(Stage::FomTraining)?;
            let path = art.curve("fom", &mu);
            io::write_qoi_csv(&path, &traj.times, &traj.qoi).stage(Stage::FomTraining)?;
            println!("f(T) = {:e}", traj.qoi.last().unwrap());
            println!("{}", path.display());
            if *snapshots {
                let states = art.path(&format!("fom-states-da{:e}-pe{:e}", mu.da, mu.pe), "bin");
                io::write_snapshots(&states, &traj.states).stage(Stage::FomTraining)?;
                println!("{}", states.display());
            }
        }
        Command::PodBuild => {
            prepare(Stage::Hapod)?;
            let ops = assemble(cfg.grid).stage(Stage::Assemble)?;
            let run = train_basis(&ops, cfg)?;
            for (i, f) in run.outputs.iter().enumerate() {
                io::write_qoi_csv(&art.corner_output(i), &times, f).stage(Stage::FomTraining)?;
            }
            io::write_basis(&art.basis_stem(), &run.basis).stage(Stage::Hapod)?;
            let red = project(&ops, &run.basis).stage(Stage::Projection)?;
            io::write_rom(&art.rom(), &red).stage(Stage::Projection)?;
            println!("N_rb = {} ({:.3} s FOM, {:.3} s HAPOD)", run.basis.len(), run.fom_seconds, run.hapod_seconds);
            println!("{}", art.basis_stem().with_extension("bin").display());
            println!("{}", art.rom().display());
        }
        Command::RomSolve { mu } => {
            let mu = parameter(mu, Stage::RomError)?;
            let red = require(art.rom(), "pod-build").and_then(|p| io::read_rom(&p)).stage(Stage::Projection)?;
            let f = solve_rom(&red, &mu, cfg.time.num_steps, cfg.time.t_end).stage(Stage::RomError)?;
            let path = art.curve("rom", &mu);
            io::write_qoi_csv(&path, &times, &f).stage(Stage::RomError)?;
            println!("N_rb = {}, f(T) = {:e}", red.dim(), f.last().unwrap());
            println!("{}", path.display());
        }
        Command::VkogaFit => {
            let red = require(art.rom(), "pod-build").and_then(|p| io::read_rom(&p)).stage(Stage::Projection)?;
            let corners = cdr_core::sampling::corner_parameters(&cfg.domain);
            let corner_outputs = (0..4)
                .map(|i| {
                    let (_, f) = io::read_qoi_csv(&require(art.corner_output(i), "pod-build")?)?;
                    Ok(f)
                })
                .collect::<cdr_core::Result<Vec<_>>>()
                .stage(Stage::FomTraining)?;
            let train = sample_stream(&cfg.domain, cfg.sampling.n_rom_train, cfg.sampling.seed, streams::ROM_TRAIN);
            let outputs = rom_outputs(&red, &train, cfg).stage(Stage::RomTraining)?;
            let model = fit_surrogate(&corners, &corner_outputs, &train, &outputs, cfg).stage(Stage::KernelFit)?;
            io::write_kernel(&art.kernel(), &model).stage(Stage::KernelFit)?;
            println!("{} centers, stop: {:?}", model.num_centers(), model.stop_reason);
            println!("{}", art.kernel().display());
        }
        Command::Predict { mu } => {
            let mu = parameter(mu, Stage::MlError)?;
            let model = require(art.kernel(), "vkoga-fit").and_then(|p| io::read_kernel(&p)).stage(Stage::KernelFit)?;
            let f = predict(&model, &mu);
            if f.len() != times.len() {
                let msg = format!("model has {} outputs, time grid has {} points", f.len(), times.len());
                return Err(cdr_core::Error::DimensionMismatch(msg)).stage(Stage::MlError);
            }
            let path = art.curve("ml", &mu);
            io::write_qoi_csv(&path, &times, &f).stage(Stage::MlError)?;
            println!("f(T) = {:e}", f.last().unwrap());
            println!("{}", path.display());
        }
        Command::Run => {
            let report = run_pipeline(cfg)?;
            print!("{}", report.to_text());
            println!("{}", art.report_csv().display());
        }
        Command::Report { input } => {
            let path = match input {
                Some(p) => p.clone(),
                None => require(art.report_csv(), "run").stage(Stage::Report)?,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| cdr_core::Error::io(&path, e)).stage(Stage::Report)?;
            let table = ReportTable::from_csv(&text).stage(Stage::Report)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_EXIT);
        }
    };
    match execute(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
