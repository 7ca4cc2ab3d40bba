//! End-to-end FOM → ROM → kernel surrogate pipeline.
//!
//! [`run_pipeline`] executes the stages in [`Stage`] order, writes each
//! artifact as soon as it exists and returns a [`PipelineReport`]. Offline
//! times are cumulative: the ROM includes the FOM training runs, the kernel
//! model includes everything the ROM needed plus its own training data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fom::{assemble, chunks_per_trajectory, fom_output, qoi_error, solve_fom_chunked, AffineOperatorSet, Parameter};
use crate::io;
use crate::kernel::{fit_fgreedy, predict, KernelModel};
use crate::pod::{IncHapod, ReducedBasis};
use crate::rom::{project, solve_rom, ReducedOperatorSet};
use crate::sampling::{corner_parameters, sample_stream, streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Assemble,
    FomTraining,
    Hapod,
    Projection,
    RomError,
    RomTraining,
    KernelFit,
    MlError,
    Timing,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Assemble,
        Stage::FomTraining,
        Stage::Hapod,
        Stage::Projection,
        Stage::RomError,
        Stage::RomTraining,
        Stage::KernelFit,
        Stage::MlError,
        Stage::Timing,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Assemble => "assemble",
            Stage::FomTraining => "fom-training",
            Stage::Hapod => "hapod",
            Stage::Projection => "projection",
            Stage::RomError => "rom-error",
            Stage::RomTraining => "rom-training",
            Stage::KernelFit => "kernel-fit",
            Stage::MlError => "ml-error",
            Stage::Timing => "timing",
            Stage::Report => "report",
        }
    }

    /// Process exit code for a failure in this stage, 10 to 19.
    pub fn exit_code(self) -> i32 {
        10 + Stage::ALL.iter().position(|&s| s == self).unwrap() as i32
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {} failed: {source}", .stage.name())]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub trait InStage<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Content-addressed artifact names, `<kind>-<config hash>.<ext>`.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
}

impl Artifacts {
    pub fn new(config: &PipelineConfig) -> Self {
        Self { dir: config.out_dir.clone(), hash: config.hash() }
    }

    pub fn create_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))
    }

    pub fn path(&self, kind: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{}.{ext}", self.hash))
    }

    pub fn config(&self) -> PathBuf {
        self.path("config", "txt")
    }

    pub fn fom_operators(&self) -> PathBuf {
        self.path("fom-operators", "bin")
    }

    /// Stem of the basis container and its singular-value CSV.
    pub fn basis_stem(&self) -> PathBuf {
        self.dir.join(format!("basis-{}", self.hash))
    }

    pub fn corner_output(&self, index: usize) -> PathBuf {
        self.path(&format!("fom-corner{index}"), "csv")
    }

    pub fn rom(&self) -> PathBuf {
        self.path("rom", "bin")
    }

    pub fn kernel(&self) -> PathBuf {
        self.path("kernel", "bin")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.path("report", "csv")
    }

    pub fn report_text(&self) -> PathBuf {
        self.path("report", "txt")
    }

    /// Output curve of `model` at `mu`.
    pub fn curve(&self, model: &str, mu: &Parameter) -> PathBuf {
        self.path(&format!("{model}-da{:e}-pe{:e}", mu.da, mu.pe), "csv")
    }
}

/// Smallest `q ≥ 0` with `offline_ml + q·online_ml ≤ offline_fom + q·online_fom`,
/// or `None` if the surrogate never catches up.
pub fn payoff_queries(offline_fom: f64, online_fom: f64, offline_ml: f64, online_ml: f64) -> Option<u64> {
    let holds = |q: f64| offline_ml + q * online_ml <= offline_fom + q * online_fom;
    if holds(0.0) {
        return Some(0);
    }
    if online_fom <= online_ml {
        return None;
    }
    let q = ((offline_ml - offline_fom) / (online_fom - online_ml)).ceil();
    if !q.is_finite() || q >= u64::MAX as f64 {
        return None;
    }
    let mut q = q.max(1.0) as u64;
    // the closed form can land one off under rounding
    while q > 1 && holds((q - 1) as f64) {
        q -= 1;
    }
    while !holds(q as f64) {
        q += 1;
    }
    Some(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelRow {
    pub model: String,
    pub dimension: usize,
    pub offline_s: f64,
    pub online_s: f64,
    pub rel_err: Option<f64>,
}

/// The table part of a report; this is what the CSV stores.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    /// FOM, ROM and surrogate rows in that order.
    pub rows: Vec<ModelRow>,
    pub payoff: Option<u64>,
}

pub const REPORT_HEADER: &str = "model,dimension,offline_s,online_s,rel_err,payoff";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_exp(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl ReportTable {
    /// The payoff appears on the last row only.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        let last = self.rows.len().saturating_sub(1);
        for (i, r) in self.rows.iter().enumerate() {
            let payoff = if i == last { opt(self.payoff) } else { String::new() };
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{},{}",
                r.model,
                r.dimension,
                r.offline_s,
                r.online_s,
                opt_exp(r.rel_err),
                payoff
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Config { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == REPORT_HEADER => {}
            _ => return Err(bad(1, format!("report must start with {REPORT_HEADER}"))),
        }
        let mut rows = Vec::new();
        let mut payoff = None;
        for (idx, line) in lines {
            let n = idx + 1;
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(bad(n, format!("expected 6 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(n, format!("{s:?}: {e}")));
            rows.push(ModelRow {
                model: f[0].to_string(),
                dimension: f[1].parse().map_err(|e| bad(n, format!("{:?}: {e}", f[1])))?,
                offline_s: num(f[2])?,
                online_s: num(f[3])?,
                rel_err: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            });
            if !f[5].is_empty() {
                payoff = Some(f[5].parse().map_err(|e| bad(n, format!("{:?}: {e}", f[5])))?);
            }
        }
        Ok(Self { rows, payoff })
    }

    /// Column-aligned rendering.
    pub fn to_text(&self) -> String {
        let header = ["model", "dimension", "offline_s", "online_s", "rel_err", "payoff"];
        let last = self.rows.len().saturating_sub(1);
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for (i, r) in self.rows.iter().enumerate() {
            cells.push(vec![
                r.model.clone(),
                r.dimension.to_string(),
                format!("{:.3e}", r.offline_s),
                format!("{:.3e}", r.online_s),
                r.rel_err.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into()),
                if i == last { self.payoff.map(|p| p.to_string()).unwrap_or_else(|| "-".into()) } else { "-".into() },
            ]);
        }
        let widths: Vec<usize> = (0..header.len()).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap()).collect();
        let mut s = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }

    /// Rows with timing columns removed, for run-to-run comparison.
    pub fn without_timings(&self) -> Vec<(String, usize, Option<f64>)> {
        self.rows.iter().map(|r| (r.model.clone(), r.dimension, r.rel_err)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub table: ReportTable,
    pub config_hash: String,
    pub reduced_dim: usize,
    pub num_centers: usize,
    /// ROM error per input of the ROM test set (corners first).
    pub rom_errors: Vec<f64>,
    /// Surrogate-vs-ROM error per input of the surrogate test set.
    pub ml_errors: Vec<f64>,
    /// Surrogate-vs-FOM error per end-to-end input, with the sum of the
    /// ROM and surrogate errors plus their product at that input.
    pub e2e: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

impl PipelineReport {
    pub fn rom_error(&self) -> Option<f64> {
        self.table.rows.get(1).and_then(|r| r.rel_err)
    }

    pub fn ml_error(&self) -> Option<f64> {
        self.table.rows.get(2).and_then(|r| r.rel_err)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.table.to_text();
        let _ = writeln!(s, "\nconfig {}", self.config_hash);
        if let Some(worst) = self.e2e.iter().map(|e| e.0).reduce(f64::max) {
            let _ = writeln!(s, "end-to-end error {worst:.3e} over {} inputs", self.e2e.len());
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

/// Writes the CSV and text renderings.
pub fn emit_report(report: &PipelineReport, csv_path: &Path, text_path: &Path) -> Result<()> {
    std::fs::write(csv_path, report.table.to_csv()).map_err(|e| Error::io(csv_path, e))?;
    std::fs::write(text_path, report.to_text()).map_err(|e| Error::io(text_path, e))
}

/// Output of the FOM training stage together with the HAPOD basis.
pub struct TrainingRun {
    pub corners: [Parameter; 4],
    pub outputs: Vec<Vec<f64>>,
    pub basis: ReducedBasis,
    /// Seconds spent in the FOM solves only, all four corners.
    pub fom_seconds: f64,
    pub hapod_seconds: f64,
}

/// Stages 2 and 3: corner trajectories streamed chunk by chunk into HAPOD.
///
/// The FOM runs are sequential so that only one chunk is held in memory;
/// the HAPOD time is measured inside the chunk callback and excluded from
/// the FOM time.
pub fn train_basis(ops: &AffineOperatorSet, config: &PipelineConfig) -> std::result::Result<TrainingRun, StageError> {
    let corners = corner_parameters(&config.domain);
    let per_run = chunks_per_trajectory(config.time, config.pod.chunk_size);
    let mut hapod = IncHapod::new(ops.h1_product.clone(), config.pod.tol, config.pod.omega, 4 * per_run)
        .stage(Stage::Hapod)?;
    let mut push_seconds = 0.0;
    let mut hapod_error = None;
    let mut outputs = Vec::with_capacity(4);
    let start = Instant::now();
    for mu in &corners {
        let f = solve_fom_chunked(ops, mu, config.time, config.pod.chunk_size, |chunk: DMatrix<f64>| {
            let t = Instant::now();
            let r = hapod.push(&chunk);
            push_seconds += t.elapsed().as_secs_f64();
            r.map_err(|e| {
                hapod_error = Some(e);
                Error::InvalidArgument("HAPOD update failed".into())
            })
        });
        match (f, hapod_error.take()) {
            (_, Some(e)) => return Err(e).stage(Stage::Hapod),
            (f, None) => outputs.push(f.stage(Stage::FomTraining)?),
        }
    }
    let fom_seconds = start.elapsed().as_secs_f64() - push_seconds;
    let (basis, finish_seconds) = timed(|| hapod.finish());
    Ok(TrainingRun {
        corners,
        outputs,
        basis: basis.stage(Stage::Hapod)?,
        fom_seconds,
        hapod_seconds: push_seconds + finish_seconds,
    })
}

/// ROM outputs at `inputs`, in input order.
pub fn rom_outputs(red: &ReducedOperatorSet, inputs: &[Parameter], config: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let time = config.time;
    inputs.par_iter().map(|mu| solve_rom(red, mu, time.num_steps, time.t_end)).collect()
}

pub fn fom_outputs(ops: &AffineOperatorSet, inputs: &[Parameter], config: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|mu| fom_output(ops, mu, config.time)).collect()
}

/// Stage 7: kernel fit on the corner FOM outputs followed by the ROM outputs.
pub fn fit_surrogate(
    corners: &[Parameter],
    corner_outputs: &[Vec<f64>],
    train: &[Parameter],
    train_outputs: &[Vec<f64>],
    config: &PipelineConfig,
) -> Result<KernelModel> {
    let inputs: Vec<Parameter> = corners.iter().chain(train).copied().collect();
    let rows: Vec<&Vec<f64>> = corner_outputs.iter().chain(train_outputs).collect();
    let d = rows.first().map_or(0, |r| r.len());
    let y = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    fit_fgreedy(&inputs, &y, &config.vkoga)
}

fn max_of(v: &[f64]) -> Option<f64> {
    v.iter().copied().reduce(f64::max)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn errors(approx: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Vec<f64>> {
    approx.iter().zip(reference).map(|(a, r)| qoi_error(a, r)).collect()
}

/// Runs the full pipeline and writes every artifact under `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<PipelineReport, StageError> {
    let mut config = config.clone();
    config.validate().stage(Stage::Assemble)?;
    let art = Artifacts::new(&config);
    art.create_dir().stage(Stage::Assemble)?;
    std::fs::write(art.config(), config.to_text()).map_err(|e| Error::io(art.config(), e)).stage(Stage::Assemble)?;
    let seed = config.sampling.seed;
    let mut notes = Vec::new();

    // 1
    let (ops, offline_fom) = timed(|| assemble(config.grid));
    let ops = ops.stage(Stage::Assemble)?;
    io::write_fom_operators(&art.fom_operators(), &ops).stage(Stage::Assemble)?;

    // 2, 3
    let run = train_basis(&ops, &config)?;
    let times = config.time.times();
    for (i, f) in run.outputs.iter().enumerate() {
        io::write_qoi_csv(&art.corner_output(i), &times, f).stage(Stage::FomTraining)?;
    }
    io::write_basis(&art.basis_stem(), &run.basis).stage(Stage::Hapod)?;
    let online_fom = run.fom_seconds / 4.0;
    if config.domain.is_degenerate() {
        notes.push("degenerate parameter box: corner inputs coincide".into());
    }

    // 4
    let (red, projection_seconds) = timed(|| project(&ops, &run.basis));
    let red = red.stage(Stage::Projection)?;
    io::write_rom(&art.rom(), &red).stage(Stage::Projection)?;
    let offline_rom = offline_fom + run.fom_seconds + run.hapod_seconds + projection_seconds;

    // 5
    let rom_test = sample_stream(&config.domain, config.sampling.n_rom_err_test, seed, streams::ROM_TEST);
    let rom_errors = (|| {
        let fresh_fom = fom_outputs(&ops, &rom_test, &config)?;
        let inputs: Vec<Parameter> = run.corners.iter().chain(&rom_test).copied().collect();
        let rom = rom_outputs(&red, &inputs, &config)?;
        let reference: Vec<Vec<f64>> = run.outputs.iter().cloned().chain(fresh_fom).collect();
        errors(&rom, &reference)
    })()
    .stage(Stage::RomError)?;

    // 6
    let train = sample_stream(&config.domain, config.sampling.n_rom_train, seed, streams::ROM_TRAIN);
    let (train_outputs, rom_train_seconds) = timed(|| rom_outputs(&red, &train, &config));
    let train_outputs = train_outputs.stage(Stage::RomTraining)?;
    if train.is_empty() {
        notes.push("no ROM training inputs: surrogate trained on the four corner FOM outputs only".into());
    }

    // 7
    let (model, fit_seconds) =
        timed(|| fit_surrogate(&run.corners, &run.outputs, &train, &train_outputs, &config));
    let model = model.stage(Stage::KernelFit)?;
    io::write_kernel(&art.kernel(), &model).stage(Stage::KernelFit)?;
    if model.flagged() {
        notes.push(format!(
            "greedy stopped on the power-function floor after {} centers",
            model.num_centers()
        ));
    }
    let offline_ml = offline_rom + rom_train_seconds + fit_seconds;

    // 8
    let ml_test = sample_stream(&config.domain, config.sampling.n_ml_err_test, seed, streams::ML_TEST);
    let ml_errors = (|| {
        let rom = rom_outputs(&red, &ml_test, &config)?;
        let ml: Vec<Vec<f64>> = ml_test.par_iter().map(|mu| predict(&model, mu)).collect();
        errors(&ml, &rom)
    })()
    .stage(Stage::MlError)?;

    let e2e_inputs = sample_stream(&config.domain, config.sampling.n_e2e_test, seed, streams::END_TO_END);
    let e2e = (|| {
        let fom = fom_outputs(&ops, &e2e_inputs, &config)?;
        let rom = rom_outputs(&red, &e2e_inputs, &config)?;
        let ml: Vec<Vec<f64>> = e2e_inputs.par_iter().map(|mu| predict(&model, mu)).collect();
        let mut out = Vec::with_capacity(fom.len());
        for i in 0..fom.len() {
            let e_rom = qoi_error(&rom[i], &fom[i])?;
            let e_ml = qoi_error(&ml[i], &rom[i])?;
            out.push((qoi_error(&ml[i], &fom[i])?, e_rom + e_ml + e_rom * e_ml));
        }
        Ok(out)
    })()
    .stage(Stage::MlError)?;

    // 9, single-threaded
    let timing = sample_stream(&config.domain, config.timing.n_ml.max(config.timing.n_rom), seed, streams::TIMING);
    let (rom_runs, rom_seconds) = timed(|| -> Result<()> {
        for mu in &timing[..config.timing.n_rom] {
            std::hint::black_box(solve_rom(&red, mu, config.time.num_steps, config.time.t_end)?);
        }
        Ok(())
    });
    rom_runs.stage(Stage::Timing)?;
    let (_, ml_seconds) = timed(|| {
        for mu in &timing[..config.timing.n_ml] {
            std::hint::black_box(predict(&model, mu));
        }
    });
    let online_rom = rom_seconds / config.timing.n_rom as f64;
    let online_ml = ml_seconds / config.timing.n_ml as f64;

    // 10
    let table = ReportTable {
        rows: vec![
            ModelRow {
                model: "FOM".into(),
                dimension: ops.num_nodes(),
                offline_s: offline_fom,
                online_s: online_fom,
                rel_err: None,
            },
            ModelRow {
                model: "RB-ROM".into(),
                dimension: red.dim(),
                offline_s: offline_rom,
                online_s: online_rom,
                rel_err: max_of(&rom_errors),
            },
            ModelRow {
                model: "VKOGA".into(),
                dimension: model.num_centers(),
                offline_s: offline_ml,
                online_s: online_ml,
                rel_err: max_of(&ml_errors),
            },
        ],
        payoff: payoff_queries(offline_fom, online_fom, offline_ml, online_ml),
    };
    if table.payoff.is_none() {
        notes.push("surrogate never pays off against the FOM".into());
    }
    let report = PipelineReport {
        table,
        config_hash: art.hash.clone(),
        reduced_dim: red.dim(),
        num_centers: model.num_centers(),
        rom_errors,
        ml_errors,
        e2e,
        notes,
    };
    emit_report(&report, &art.report_csv(), &art.report_text()).stage(Stage::Report)?;
    Ok(report)
}
