//! Two-phase probe repositioning driven by the average passband energy.
//!
//! Phase 1 measures the energy, takes one fixed step in the positive
//! direction, measures again and keeps going that way if the energy rose
//! (reverses otherwise; a tie keeps +1). Phase 2 then repeats: compare the
//! last two measurements, stop if the change is below the threshold while
//! the energy is above the low-energy filter, otherwise step by
//! `clamp(k_p·|ΔE|)` along the current direction. A step that lowers the
//! energy flips the direction for the next one.
//!
//! The low-energy reference is the largest energy seen so far in the
//! session; the filter is `low_energy_fraction` of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::MotionMode;
use crate::sequence::FrameSequence;
use crate::spectral::{average_energy, energy_map, BandpassSpec};

/// Moves the probe along the single configured axis (mm or deg).
pub trait ProbeActuator {
    /// Returns once the probe has settled at the new pose.
    fn move_by(&mut self, delta: f64) -> Result<()>;
}

/// Acquires a window of frames at the probe's current pose.
pub trait ImageSource {
    fn acquire(&mut self, frames: usize) -> Result<FrameSequence>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepClamp {
    pub min: f64,
    pub max: f64,
}

impl StepClamp {
    pub fn apply(&self, step: f64) -> f64 {
        step.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyThreshold {
    /// Fixed threshold in energy units.
    Absolute(f64),
    /// Fraction of the current low-energy reference.
    Relative(f64),
}

impl EnergyThreshold {
    pub fn resolve(&self, reference: f64) -> f64 {
        match *self {
            EnergyThreshold::Absolute(t) => t,
            EnergyThreshold::Relative(f) => f * reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: MotionMode,
    /// Proportional gain, axis units per energy unit.
    pub k_p: f64,
    /// Phase-1 exploratory step.
    pub direction_step: f64,
    pub energy_threshold: EnergyThreshold,
    pub low_energy_fraction: f64,
    pub passband: BandpassSpec,
    pub frames_per_measurement: usize,
    pub step_clamp: StepClamp,
    pub max_iterations: usize,
}

impl ControllerConfig {
    /// Defaults for `mode` with the given gain.
    ///
    /// Rotation uses a tighter relative threshold than translation: its
    /// energy landscape is flatter, and at 2% the loop stops on the first
    /// minimum-size step far from the needle plane.
    pub fn defaults(mode: MotionMode, k_p: f64) -> Self {
        let (step, clamp, threshold) = match mode {
            MotionMode::Translation => (0.5, StepClamp { min: 0.1, max: 1.0 }, 0.02),
            MotionMode::Rotation => (1.0, StepClamp { min: 0.25, max: 2.5 }, 0.005),
        };
        Self {
            mode,
            k_p,
            direction_step: step,
            energy_threshold: EnergyThreshold::Relative(threshold),
            low_energy_fraction: 0.2,
            passband: BandpassSpec::default(),
            frames_per_measurement: 60,
            step_clamp: clamp,
            max_iterations: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_p.is_finite() && self.k_p > 0.0) {
            return Err(Error::config(format!("k_p must be positive, got {}", self.k_p)));
        }
        if !(self.direction_step.is_finite() && self.direction_step > 0.0) {
            return Err(Error::config(format!(
                "direction_step must be positive, got {}",
                self.direction_step
            )));
        }
        if !(self.low_energy_fraction > 0.0 && self.low_energy_fraction < 1.0) {
            return Err(Error::config(format!(
                "low_energy_fraction must lie in (0, 1), got {}",
                self.low_energy_fraction
            )));
        }
        let StepClamp { min, max } = self.step_clamp;
        if !(min.is_finite() && max.is_finite() && min > 0.0 && min <= max) {
            return Err(Error::config(format!("step clamp needs 0 < min <= max, got ({min}, {max})")));
        }
        let t = match self.energy_threshold {
            EnergyThreshold::Absolute(t) | EnergyThreshold::Relative(t) => t,
        };
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::config(format!("energy threshold must be non-negative, got {t}")));
        }
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if self.frames_per_measurement < 2 {
            return Err(Error::config("frames_per_measurement must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Initial,
    Direction,
    Eliminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// One measurement in the controller log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    /// Phase-2 iteration; 0 for the two Phase-1 rows.
    pub iteration: usize,
    pub phase: Phase,
    /// Signed move commanded right before this measurement.
    pub commanded_step: f64,
    pub cumulative_displacement: f64,
    pub e_avg: f64,
    /// Previous row's energy minus this row's (0 on the first row).
    pub e_diff: f64,
    /// Heading for the next move after this row was evaluated.
    pub direction: i8,
    /// Threshold was met here but the energy sat below the low-energy filter.
    pub below_filter: bool,
    pub terminated: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationResult {
    pub trajectory: Vec<TrajectoryEntry>,
    /// Phase-2 moves taken.
    pub iterations: usize,
    pub termination: Termination,
    pub low_energy_reference: f64,
    /// Ground-truth residual offset; only a simulator can fill this in.
    pub final_true_offset: Option<f64>,
}

impl RestorationResult {
    pub fn final_displacement(&self) -> f64 {
        self.trajectory.last().map_or(0.0, |e| e.cumulative_displacement)
    }
}

/// The controller stopped on an actuator or acquisition failure.
#[derive(Debug, thiserror::Error)]
#[error("alignment aborted after {} measurements: {source}", trajectory.len())]
pub struct AlignmentAborted {
    #[source]
    pub source: Error,
    pub trajectory: Vec<TrajectoryEntry>,
}

/// Outcome of Phase 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionProbe {
    pub direction: i8,
    pub e_start: f64,
    pub e_after: f64,
    /// The two Phase-1 log rows.
    pub trajectory: Vec<TrajectoryEntry>,
}

fn measure(source: &mut dyn ImageSource, cfg: &ControllerConfig) -> Result<f64> {
    let seq = source.acquire(cfg.frames_per_measurement)?;
    Ok(average_energy(&energy_map(&seq, &cfg.passband)?).e_avg)
}

fn abort(source: Error, trajectory: Vec<TrajectoryEntry>) -> AlignmentAborted {
    log::warn!("alignment aborted: {source}");
    AlignmentAborted { source, trajectory }
}

/// Phase 1: measure, step `+direction_step`, measure, pick a heading.
pub fn determine_direction(
    actuator: &mut dyn ProbeActuator,
    source: &mut dyn ImageSource,
    cfg: &ControllerConfig,
) -> std::result::Result<DirectionProbe, AlignmentAborted> {
    cfg.validate().map_err(|e| abort(e, Vec::new()))?;
    let mut trajectory = Vec::with_capacity(2);

    let e_start = measure(source, cfg).map_err(|e| abort(e, Vec::new()))?;
    trajectory.push(TrajectoryEntry {
        iteration: 0,
        phase: Phase::Initial,
        commanded_step: 0.0,
        cumulative_displacement: 0.0,
        e_avg: e_start,
        e_diff: 0.0,
        direction: 1,
        below_filter: false,
        terminated: None,
    });

    let step = cfg.direction_step;
    if let Err(e) = actuator.move_by(step) {
        return Err(abort(e, trajectory));
    }
    let e_after = match measure(source, cfg) {
        Ok(e) => e,
        Err(e) => return Err(abort(e, trajectory)),
    };
    let e_diff = e_start - e_after;
    // Energy fell on the way out: the needle plane is behind us.
    let direction = if e_diff > 0.0 { -1 } else { 1 };
    trajectory.push(TrajectoryEntry {
        iteration: 0,
        phase: Phase::Direction,
        commanded_step: step,
        cumulative_displacement: step,
        e_avg: e_after,
        e_diff,
        direction,
        below_filter: false,
        terminated: None,
    });
    Ok(DirectionProbe { direction, e_start, e_after, trajectory })
}

/// Phase 2: proportional steps until the energy change drops below the
/// threshold above the low-energy filter, or `max_iterations` moves.
pub fn eliminate_misalignment(
    actuator: &mut dyn ProbeActuator,
    source: &mut dyn ImageSource,
    cfg: &ControllerConfig,
    probe: DirectionProbe,
) -> std::result::Result<RestorationResult, AlignmentAborted> {
    let DirectionProbe { mut direction, e_start, e_after, mut trajectory } = probe;
    cfg.validate().map_err(|e| abort(e, trajectory.clone()))?;

    let mut reference = e_start.max(e_after);
    let mut previous = e_start;
    let mut current = e_after;
    let mut cumulative = trajectory.last().map_or(0.0, |e| e.cumulative_displacement);
    let mut iterations = 0;

    let termination = loop {
        let e_diff = previous - current;
        let threshold = cfg.energy_threshold.resolve(reference);
        let filter = cfg.low_energy_fraction * reference;
        if e_diff.abs() < threshold {
            if current > filter {
                break Termination::Converged;
            }
            log::debug!("threshold met at energy {current} below filter {filter}; continuing");
            if let Some(last) = trajectory.last_mut() {
                last.below_filter = true;
            }
        }
        if iterations == cfg.max_iterations {
            break Termination::MaxIterations;
        }

        let step = f64::from(direction) * cfg.step_clamp.apply(cfg.k_p * e_diff.abs());
        if let Err(e) = actuator.move_by(step) {
            return Err(abort(e, trajectory));
        }
        cumulative += step;
        iterations += 1;
        let measured = match measure(source, cfg) {
            Ok(e) => e,
            Err(e) => return Err(abort(e, trajectory)),
        };
        reference = reference.max(measured);
        let row_diff = current - measured;
        if row_diff > 0.0 {
            // Overshoot or wrong way: head back.
            direction = -direction;
        }
        trajectory.push(TrajectoryEntry {
            iteration: iterations,
            phase: Phase::Eliminate,
            commanded_step: step,
            cumulative_displacement: cumulative,
            e_avg: measured,
            e_diff: row_diff,
            direction,
            below_filter: false,
            terminated: None,
        });
        previous = current;
        current = measured;
    };

    if let Some(last) = trajectory.last_mut() {
        last.terminated = Some(termination);
    }
    Ok(RestorationResult {
        trajectory,
        iterations,
        termination,
        low_energy_reference: reference,
        final_true_offset: None,
    })
}

/// Phase 1 followed by Phase 2.
pub fn run_alignment(
    actuator: &mut dyn ProbeActuator,
    source: &mut dyn ImageSource,
    cfg: &ControllerConfig,
) -> std::result::Result<RestorationResult, AlignmentAborted> {
    let probe = determine_direction(actuator, source, cfg)?;
    eliminate_misalignment(actuator, source, cfg, probe)
}
