//! Desk-scale experiments against the phantom: attenuation sweeps,
//! restoration-error grids and snapshot sequences.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use rayon::prelude::*;

use crate::controller::{
    run_alignment, AlignmentAborted, ControllerConfig, ImageSource, ProbeActuator, RestorationResult, Termination,
};
use crate::error::{Error, Result};
use crate::phantom::{MotionMode, Phantom, PhantomConfig, ProbeState};
use crate::sequence::FrameSequence;
use crate::spectral::{average_energy, energy_map, heatmap_for_display, BandpassSpec, EnergyMap};

pub const TRANSLATION_OFFSETS: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
pub const ROTATION_OFFSETS: [f64; 5] = [2.5, 5.0, 7.5, 10.0, 12.5];
pub const DEFAULT_TRIALS: usize = 4;
pub const DEFAULT_HEATMAP_FLOOR: f64 = 0.7;

/// Offset at which the proportional gain is read off the oracle slope.
pub fn gain_reference_offset(mode: MotionMode) -> f64 {
    match mode {
        MotionMode::Translation => 2.0,
        MotionMode::Rotation => 7.5,
    }
}

/// `1 / |dE/dx|` of the noiseless oracle at `at`, by central difference.
///
/// With this gain a step of size `s` taken around `at` commands a next step
/// of about `s` again; steps grow where the landscape is steeper and shrink
/// near the peak.
pub fn estimate_gain(phantom: &Phantom, mode: MotionMode, frames: usize, at: f64) -> Result<f64> {
    let h = 1e-3;
    let e = |x: f64| phantom.ground_truth_energy(&ProbeState::new(mode, x), frames);
    let slope = (e(at + h) - e(at - h)) / (2.0 * h);
    if !(slope.is_finite() && slope != 0.0) {
        return Err(Error::config(format!("energy slope at {at} {} is flat; cannot estimate k_p", mode.unit())));
    }
    Ok(1.0 / slope.abs())
}

/// Default controller for `mode`, with the gain estimated from `phantom`.
pub fn default_controller(phantom: &Phantom, mode: MotionMode) -> Result<ControllerConfig> {
    let base = ControllerConfig::defaults(mode, 1.0);
    let k_p = estimate_gain(phantom, mode, base.frames_per_measurement, gain_reference_offset(mode))?;
    Ok(ControllerConfig { k_p, ..base })
}

/// One measurement recorded for later display.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub pose: ProbeState,
    /// First frame of the acquisition window.
    pub frame: Vec<f32>,
    pub heatmap: Vec<f64>,
    pub visibility: f64,
    pub e_avg: f64,
}

struct RigState {
    phantom: Arc<Phantom>,
    pose: ProbeState,
    acquisitions: u64,
    moves: Vec<f64>,
    snapshots: Option<(BandpassSpec, f64, Vec<Snapshot>)>,
}

/// A phantom-backed probe. [`SimulatedRig::split`] hands out the actuator
/// and image-source halves; both see the same pose.
#[derive(Clone)]
pub struct SimulatedRig {
    state: Rc<RefCell<RigState>>,
}

impl SimulatedRig {
    pub fn new(phantom: Arc<Phantom>, start: ProbeState) -> Self {
        Self {
            state: Rc::new(RefCell::new(RigState {
                phantom,
                pose: start,
                acquisitions: 0,
                moves: Vec::new(),
                snapshots: None,
            })),
        }
    }

    /// Also keep a frame and display heatmap of every acquisition.
    pub fn record_snapshots(self, band: BandpassSpec, floor_percentile: f64) -> Self {
        self.state.borrow_mut().snapshots = Some((band, floor_percentile, Vec::new()));
        self
    }

    pub fn pose(&self) -> ProbeState {
        self.state.borrow().pose
    }

    pub fn moves(&self) -> Vec<f64> {
        self.state.borrow().moves.clone()
    }

    pub fn take_snapshots(&self) -> Vec<Snapshot> {
        self.state.borrow_mut().snapshots.as_mut().map(|(_, _, s)| std::mem::take(s)).unwrap_or_default()
    }

    pub fn split(&self) -> (SimActuator, SimSource) {
        (SimActuator(self.clone()), SimSource(self.clone()))
    }
}

pub struct SimActuator(SimulatedRig);

pub struct SimSource(SimulatedRig);

impl ProbeActuator for SimActuator {
    fn move_by(&mut self, delta: f64) -> Result<()> {
        if !delta.is_finite() {
            return Err(Error::Actuator(format!("non-finite move {delta}")));
        }
        let mut s = self.0.state.borrow_mut();
        s.pose = s.pose.moved_by(delta);
        s.moves.push(delta);
        Ok(())
    }
}

impl ImageSource for SimSource {
    fn acquire(&mut self, frames: usize) -> Result<FrameSequence> {
        let mut s = self.0.state.borrow_mut();
        let seq = s.phantom.sequence(&s.pose, frames, s.acquisitions)?;
        s.acquisitions += 1;
        let pose = s.pose;
        let visibility = s.phantom.visibility(&pose);
        if let Some((band, floor, shots)) = s.snapshots.as_mut() {
            let map = energy_map(&seq, band)?;
            shots.push(Snapshot {
                pose,
                frame: seq.frame(0).to_vec(),
                heatmap: heatmap_for_display(&map, *floor)?,
                visibility,
                e_avg: average_energy(&map).e_avg,
            });
        }
        Ok(seq)
    }
}

/// Runs the full controller from `start` and fills in the true residual.
pub fn align_from(
    phantom: Arc<Phantom>,
    start: ProbeState,
    cfg: &ControllerConfig,
) -> std::result::Result<RestorationResult, AlignmentAborted> {
    let rig = SimulatedRig::new(phantom, start);
    let (mut act, mut src) = rig.split();
    let mut result = run_alignment(&mut act, &mut src, cfg)?;
    result.final_true_offset = Some(rig.pose().offset());
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub mode: MotionMode,
    pub offsets: Vec<f64>,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub phantom: PhantomConfig,
    pub band: BandpassSpec,
    pub frames: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.offsets.is_empty() || self.offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("sweep offsets must be non-empty and strictly increasing"));
        }
        if self.repeats < 1 || self.seeds.is_empty() {
            return Err(Error::config("sweep needs at least one seed and one repeat"));
        }
        self.phantom.validate()?;
        self.band.validate(self.phantom.frame_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    pub seed: u64,
    pub offset: f64,
    pub repeat: usize,
    pub e_avg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub offset: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub normalized_mean: f64,
    pub normalized_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub mode: MotionMode,
    pub rows: Vec<SweepRow>,
    pub samples: Vec<SweepSample>,
}

impl SweepTable {
    /// Energies of one seed ordered by offset, averaged over repeats.
    pub fn seed_curve(&self, seed: u64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                let v: Vec<f64> = self
                    .samples
                    .iter()
                    .filter(|s| s.seed == seed && s.offset == row.offset)
                    .map(|s| s.e_avg)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect()
    }
}

/// Average energy against offset, normalised by the largest mean.
pub fn run_attenuation_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let per_seed: Vec<Vec<SweepSample>> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let phantom = Phantom::new(spec.phantom.clone().with_seed(seed))?;
            let mut out = Vec::with_capacity(spec.offsets.len() * spec.repeats);
            for &offset in &spec.offsets {
                let pose = ProbeState::new(spec.mode, offset);
                for repeat in 0..spec.repeats {
                    let seq = phantom.sequence(&pose, spec.frames, repeat as u64)?;
                    let e_avg = average_energy(&energy_map(&seq, &spec.band)?).e_avg;
                    out.push(SweepSample { seed, offset, repeat, e_avg });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<SweepSample> = per_seed.into_iter().flatten().collect();

    let mut rows: Vec<SweepRow> = spec
        .offsets
        .iter()
        .map(|&offset| {
            let v: Vec<f64> = samples.iter().filter(|s| s.offset == offset).map(|s| s.e_avg).collect();
            let (mean, std) = mean_std(&v);
            SweepRow { offset, mean, std, n: v.len(), normalized_mean: 0.0, normalized_std: 0.0 }
        })
        .collect();
    let peak = rows.iter().map(|r| r.mean).fold(0.0, f64::max);
    if peak > 0.0 {
        for r in &mut rows {
            r.normalized_mean = r.mean / peak;
            r.normalized_std = r.std / peak;
        }
    }
    Ok(SweepTable { mode: spec.mode, rows, samples })
}

#[derive(Debug, Clone)]
pub struct RestorationExperiment {
    pub mode: MotionMode,
    pub initial_offsets: Vec<f64>,
    pub trials_per_offset: usize,
    pub controller: ControllerConfig,
    /// Trial `k` uses seed `phantom.rng_seed + k`, so each offset is tried on
    /// the same set of phantoms.
    pub phantom: PhantomConfig,
}

impl RestorationExperiment {
    /// The standard five-offset grid with the default controller.
    pub fn standard(mode: MotionMode, phantom: PhantomConfig) -> Result<Self> {
        let controller = default_controller(&Phantom::new(phantom.clone())?, mode)?;
        let initial_offsets = match mode {
            MotionMode::Translation => TRANSLATION_OFFSETS.to_vec(),
            MotionMode::Rotation => ROTATION_OFFSETS.to_vec(),
        };
        Ok(Self { mode, initial_offsets, trials_per_offset: DEFAULT_TRIALS, controller, phantom })
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_offsets.is_empty() || self.initial_offsets.iter().any(|&o| o == 0.0 || !o.is_finite()) {
            return Err(Error::config("restoration offsets must be non-empty, finite and non-zero"));
        }
        if self.trials_per_offset < 1 {
            return Err(Error::config("trials_per_offset must be at least 1"));
        }
        if self.controller.mode != self.mode {
            return Err(Error::config(format!(
                "controller mode {} does not match experiment mode {}",
                self.controller.mode, self.mode
            )));
        }
        self.controller.validate()?;
        self.phantom.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub mode: MotionMode,
    pub offset: f64,
    pub trial: usize,
    pub seed: u64,
    /// `|final_true_offset|`
    pub final_error: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub result: RestorationResult,
}

#[derive(Debug, Clone)]
pub struct TrialFailure {
    pub offset: f64,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
    pub partial_measurements: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetStats {
    pub offset: f64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStatistics {
    pub per_offset: Vec<OffsetStats>,
    pub pooled: OffsetStats,
}

impl ErrorStatistics {
    pub fn from_trials(offsets: &[f64], trials: &[TrialRecord]) -> Self {
        let summarize = |offset: f64, v: &[f64]| {
            let (mean, std) = mean_std(v);
            OffsetStats { offset, n: v.len(), mean, std, max: v.iter().copied().fold(0.0, f64::max) }
        };
        let per_offset = offsets
            .iter()
            .map(|&o| {
                let v: Vec<f64> = trials.iter().filter(|t| t.offset == o).map(|t| t.final_error).collect();
                summarize(o, &v)
            })
            .collect();
        let all: Vec<f64> = trials.iter().map(|t| t.final_error).collect();
        Self { per_offset, pooled: summarize(f64::NAN, &all) }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub mode: MotionMode,
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub stats: ErrorStatistics,
}

impl ExperimentReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Every offset × trial from the experiment grid; trials run in parallel and
/// are folded back in (offset, trial) order.
pub fn run_restoration_experiment(exp: &RestorationExperiment) -> Result<ExperimentReport> {
    exp.validate()?;
    let phantoms: Vec<Arc<Phantom>> = (0..exp.trials_per_offset)
        .map(|k| Phantom::new(exp.phantom.clone().with_seed(exp.phantom.rng_seed.wrapping_add(k as u64))).map(Arc::new))
        .collect::<Result<_>>()?;

    let jobs: Vec<(f64, usize)> = exp
        .initial_offsets
        .iter()
        .flat_map(|&o| (0..exp.trials_per_offset).map(move |k| (o, k)))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(offset, trial)| {
            let phantom = phantoms[trial].clone();
            let seed = phantom.config().rng_seed;
            let outcome = align_from(phantom, ProbeState::new(exp.mode, offset), &exp.controller);
            (offset, trial, seed, outcome)
        })
        .collect();

    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (offset, trial, seed, outcome) in outcomes {
        match outcome {
            Ok(result) => {
                let residual = result.final_true_offset.unwrap_or(f64::NAN);
                trials.push(TrialRecord {
                    mode: exp.mode,
                    offset,
                    trial,
                    seed,
                    final_error: residual.abs(),
                    iterations: result.iterations,
                    termination: result.termination,
                    result,
                });
            }
            Err(e) => failures.push(TrialFailure {
                offset,
                trial,
                seed,
                message: e.source.to_string(),
                partial_measurements: e.trajectory.len(),
            }),
        }
    }
    let stats = ErrorStatistics::from_trials(&exp.initial_offsets, &trials);
    Ok(ExperimentReport { mode: exp.mode, trials, failures, stats })
}

#[derive(Debug, Clone)]
pub struct SnapshotRun {
    pub snapshots: Vec<Snapshot>,
    pub result: RestorationResult,
}

/// Runs one trial and keeps a (frame, heatmap, pose) triple per measurement.
pub fn snapshot_sequence(
    phantom: Arc<Phantom>,
    start: ProbeState,
    cfg: &ControllerConfig,
    floor_percentile: f64,
) -> std::result::Result<SnapshotRun, AlignmentAborted> {
    let rig = SimulatedRig::new(phantom, start).record_snapshots(cfg.passband, floor_percentile);
    let (mut act, mut src) = rig.split();
    let mut result = run_alignment(&mut act, &mut src, cfg)?;
    result.final_true_offset = Some(rig.pose().offset());
    Ok(SnapshotRun { snapshots: rig.take_snapshots(), result })
}

/// Mean energy of the needle band (rows within one halo length of the axis,
/// across the needle span) and of the background (pixels more than three
/// halo lengths from the needle).
pub fn needle_salience(cfg: &PhantomConfig, map: &EnergyMap) -> (f64, f64) {
    let (start, end) = cfg.needle_span;
    let depth = cfg.needle_depth_px as f64;
    let lambda = cfg.tissue_halo_lambda;
    let (mut band, mut nb, mut bg, mut nbg) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..map.height() {
        let dr = i as f64 - depth;
        for j in 0..map.width() {
            let dc = if j < start {
                (start - j) as f64
            } else if j >= end {
                (j + 1 - end) as f64
            } else {
                0.0
            };
            let e = map.get(i, j);
            if dc == 0.0 && dr.abs() <= lambda {
                band += e;
                nb += 1;
            } else if (dr * dr + dc * dc).sqrt() > 3.0 * lambda {
                bg += e;
                nbg += 1;
            }
        }
    }
    (band / nb.max(1) as f64, bg / nbg.max(1) as f64)
}

/// Mean and sample standard deviation; the deviation is 0 for fewer than two
/// values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
