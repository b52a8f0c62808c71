//! Command-line entry points.
//!
//! Every subcommand writes its artifacts under `--out-dir` together with
//! `effective_config.toml`, the fully resolved configuration (seed applied,
//! controller gain pinned) that reproduces the run on its own.
//!
//! On failure a single line goes to stderr:
//!
//! ```text
//! error code=<n> kind=<kind> message="<text>"
//! ```
//!
//! | code | kind        |                                              |
//! |------|-------------|----------------------------------------------|
//! | 2    | usage       | unknown flag or bad argument                 |
//! | 3    | config      | malformed or out-of-range configuration      |
//! | 4    | io          | file system or CSV failure                   |
//! | 5    | cube-format | bad magic, version or truncated frame cube   |
//! | 6    | input       | input data with the wrong shape or content   |
//! | 7    | alignment   | controller aborted or an experiment trial failed |

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{ControllerSettings, RunConfig};
use crate::controller::ControllerConfig;
use crate::error::Error;
use crate::harness::{self, RestorationExperiment, SweepSpec};
use crate::io::{self, tables};
use crate::phantom::{MotionMode, Phantom, ProbeState};
use crate::spectral::{average_energy, energy_map, heatmap_for_display};

#[derive(Debug, Parser)]
#[command(name = "vibalign", version, about = "Vibration-energy probe alignment: simulator, analyzer and experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides `phantom.rng_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for all artifacts (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a phantom sequence to `sequence.vibe`.
    Simulate {
        #[arg(long, default_value = "translation")]
        mode: MotionMode,
        /// Probe offset from the needle plane (mm or deg).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        offset: f64,
        #[arg(long, default_value_t = 60)]
        frames: usize,
    },
    /// Energy map, display heatmap and E_Avg of a recorded frame cube.
    Analyze {
        /// Frame cube to analyze.
        input: PathBuf,
    },
    /// Run the closed-loop controller in the simulator.
    Align {
        #[arg(long)]
        mode: MotionMode,
        #[arg(long, allow_negative_numbers = true)]
        offset: f64,
        /// Skip writing per-measurement snapshot images.
        #[arg(long)]
        no_snapshots: bool,
    },
    /// Energy attenuation versus offset across seeds.
    Sweep {
        #[arg(long)]
        mode: MotionMode,
        #[arg(long)]
        noiseless: bool,
    },
    /// Restoration grid: offsets × trials, with error statistics.
    RestoreExp {
        #[arg(long)]
        mode: MotionMode,
        #[arg(long)]
        noiseless: bool,
    },
}

/// A failure mapped to its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage", message: message.into() }
    }

    fn alignment(message: impl Into<String>) -> Self {
        Self { code: 7, kind: "alignment", message: message.into() }
    }

    /// The single stderr line.
    pub fn line(&self) -> String {
        let msg = self.message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error code={} kind={} message=\"{}\"", self.code, self.kind, msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Config(_) | Error::ConfigFile { .. } => (3, "config"),
            Error::Io(_) | Error::Csv(_) => (4, "io"),
            Error::BadMagic { .. } | Error::UnsupportedVersion { .. } | Error::Truncated { .. } => (5, "cube-format"),
            Error::Input(_) => (6, "input"),
            Error::Acquisition(_) | Error::Actuator(_) => (7, "alignment"),
        };
        Self { code, kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

/// Prefixes file-system errors with the offending path.
fn at_path(path: &Path, e: Error) -> CliError {
    let mut err = CliError::from(e);
    if err.kind == "io" {
        err.message = format!("{}: {}", path.display(), err.message);
    }
    err
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Executes a parsed command line. Progress and summaries go to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path).map_err(|e| at_path(path, e))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.phantom.rng_seed = seed;
    }
    cfg.validate()?;
    let out = cli.common.out_dir.as_path();
    fs::create_dir_all(out)?;

    match cli.command {
        Command::Simulate { mode, offset, frames } => simulate(&cfg, out, ProbeState::new(mode, offset), frames),
        Command::Analyze { input } => analyze(&cfg, out, &input),
        Command::Align { mode, offset, no_snapshots } => align(cfg, out, mode, offset, !no_snapshots),
        Command::Sweep { mode, noiseless } => sweep(cfg, out, mode, noiseless),
        Command::RestoreExp { mode, noiseless } => restore(cfg, out, mode, noiseless),
    }
}

fn echo_config(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    fs::write(out.join("effective_config.toml"), cfg.to_toml_string()?)?;
    Ok(())
}

fn create(path: PathBuf) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Resolves the controller for `mode` and pins it into `cfg` for the echo.
fn resolve_controller(cfg: &mut RunConfig, mode: MotionMode, phantom: &Phantom) -> CliResult<ControllerConfig> {
    let controller = cfg.controller.for_mode(mode).resolve(mode, cfg.band, phantom)?;
    *cfg.controller.for_mode_mut(mode) = ControllerSettings::pinned(&controller);
    Ok(controller)
}

fn simulate(cfg: &RunConfig, out: &Path, pose: ProbeState, frames: usize) -> CliResult<()> {
    let phantom = Phantom::new(cfg.phantom.clone())?;
    let seq = phantom.sequence(&pose, frames, 0)?;
    let path = out.join("sequence.vibe");
    io::write_frame_cube(&seq, &path)?;
    echo_config(cfg, out)?;
    println!(
        "wrote {} height={} width={} frames={} frame_rate={} mode={} offset={} visibility={:.6}",
        path.display(),
        seq.height(),
        seq.width(),
        seq.num_frames(),
        seq.frame_rate(),
        pose.mode(),
        pose.offset(),
        phantom.visibility(&pose)
    );
    Ok(())
}

fn analyze(cfg: &RunConfig, out: &Path, input: &Path) -> CliResult<()> {
    let seq = io::read_frame_cube(input).map_err(|e| at_path(input, e))?;
    let start = Instant::now();
    let map = energy_map(&seq, &cfg.band)?;
    let elapsed = start.elapsed();
    let e_avg = average_energy(&map).e_avg;

    let raw: Vec<u8> = map.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(out.join("energy_map.raw"), raw)?;
    let heat = heatmap_for_display(&map, cfg.display.floor_percentile)?;
    io::write_pgm(out.join("heatmap.pgm"), map.width(), map.height(), heat)?;
    echo_config(cfg, out)?;
    println!(
        "e_avg={} height={} width={} frames={} energy_map_ms={:.3}",
        e_avg,
        map.height(),
        map.width(),
        seq.num_frames(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(())
}

fn align(mut cfg: RunConfig, out: &Path, mode: MotionMode, offset: f64, snapshots: bool) -> CliResult<()> {
    let phantom = Arc::new(Phantom::new(cfg.phantom.clone())?);
    let controller = resolve_controller(&mut cfg, mode, &phantom)?;
    echo_config(&cfg, out)?;
    let start = ProbeState::new(mode, offset);

    let outcome = if snapshots {
        harness::snapshot_sequence(phantom.clone(), start, &controller, cfg.display.floor_percentile)
            .map(|run| (run.result, Some(run.snapshots)))
    } else {
        harness::align_from(phantom.clone(), start, &controller).map(|r| (r, None))
    };
    let (result, shots) = match outcome {
        Ok(v) => v,
        Err(aborted) => {
            tables::write_trajectory(create(out.join("trajectory.csv"))?, &aborted.trajectory)?;
            return Err(CliError::alignment(aborted.to_string()));
        }
    };
    tables::write_trajectory(create(out.join("trajectory.csv"))?, &result.trajectory)?;

    if let Some(shots) = shots {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        let (w, h) = (phantom.config().image_width, phantom.config().image_height);
        let mut index = csv::Writer::from_writer(create(dir.join("index.csv"))?);
        index.write_record(["measurement", "offset", "visibility", "e_avg", "frame", "heatmap"])?;
        for (k, s) in shots.iter().enumerate() {
            let frame = format!("{k:03}_frame.pgm");
            let heat = format!("{k:03}_heatmap.pgm");
            io::write_pgm(dir.join(&frame), w, h, s.frame.iter().map(|&v| v as f64))?;
            io::write_pgm(dir.join(&heat), w, h, s.heatmap.iter().copied())?;
            index.write_record([
                k.to_string(),
                s.pose.offset().to_string(),
                s.visibility.to_string(),
                s.e_avg.to_string(),
                frame,
                heat,
            ])?;
        }
        index.flush()?;
    }

    let last = result.trajectory.last().expect("a completed run has measurements");
    println!(
        "mode={} start={} k_p={} iterations={} termination={:?} final_displacement={} final_offset={} e_avg={}",
        mode,
        offset,
        controller.k_p,
        result.iterations,
        result.termination,
        result.final_displacement(),
        result.final_true_offset.unwrap_or(f64::NAN),
        last.e_avg
    );
    Ok(())
}

fn sweep(cfg: RunConfig, out: &Path, mode: MotionMode, noiseless: bool) -> CliResult<()> {
    let phantom = if noiseless { cfg.phantom.clone().noiseless() } else { cfg.phantom.clone() };
    let base = phantom.rng_seed;
    let spec = SweepSpec {
        mode,
        offsets: cfg.sweep.offsets(mode).to_vec(),
        repeats: cfg.sweep.repeats,
        seeds: (0..cfg.sweep.num_seeds as u64).map(|k| base.wrapping_add(k)).collect(),
        phantom,
        band: cfg.band,
        frames: cfg.sweep.frames,
    };
    let table = harness::run_attenuation_sweep(&spec)?;
    tables::write_sweep(create(out.join("sweep.csv"))?, &table)?;
    tables::write_sweep_samples(create(out.join("sweep_samples.csv"))?, &table)?;
    echo_config(&cfg, out)?;
    println!("mode={mode} noiseless={noiseless} seeds={} repeats={}", spec.seeds.len(), spec.repeats);
    for r in &table.rows {
        println!(
            "offset={} mean={} std={} n={} normalized_mean={} normalized_std={}",
            r.offset, r.mean, r.std, r.n, r.normalized_mean, r.normalized_std
        );
    }
    Ok(())
}

fn restore(mut cfg: RunConfig, out: &Path, mode: MotionMode, noiseless: bool) -> CliResult<()> {
    let phantom_cfg = if noiseless { cfg.phantom.clone().noiseless() } else { cfg.phantom.clone() };
    let phantom = Phantom::new(phantom_cfg.clone())?;
    let controller = resolve_controller(&mut cfg, mode, &phantom)?;
    echo_config(&cfg, out)?;
    let exp = RestorationExperiment {
        mode,
        initial_offsets: cfg.restoration.offsets(mode).to_vec(),
        trials_per_offset: cfg.restoration.trials_per_offset,
        controller,
        phantom: phantom_cfg,
    };
    let report = harness::run_restoration_experiment(&exp)?;
    tables::write_trials(create(out.join("trials.csv"))?, &tables::trial_rows(&report))?;
    let stats = tables::stats_rows(&report);
    tables::write_stats(create(out.join("stats.csv"))?, &stats)?;

    println!("mode={mode} noiseless={noiseless} k_p={} trials={}", exp.controller.k_p, report.trials.len());
    for s in &stats {
        println!("offset={} n={} mean={} std={} max={}", s.offset, s.n, s.mean, s.std, s.max);
    }
    if !report.is_complete() {
        let mut w = csv::Writer::from_writer(create(out.join("failures.csv"))?);
        w.write_record(["offset", "trial", "seed", "partial_measurements", "message"])?;
        for f in &report.failures {
            w.write_record([
                f.offset.to_string(),
                f.trial.to_string(),
                f.seed.to_string(),
                f.partial_measurements.to_string(),
                f.message.clone(),
            ])?;
        }
        w.flush()?;
        return Err(CliError::alignment(format!("{} of the trials aborted", report.failures.len())));
    }
    Ok(())
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e).into()
    }
}
