//! CSV schemas for trajectories, sweeps, trials and error statistics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::controller::{Phase, Termination, TrajectoryEntry};
use crate::error::Result;
use crate::harness::{ExperimentReport, SweepTable};
use crate::phantom::MotionMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iteration: usize,
    pub phase: Phase,
    pub commanded_step: f64,
    pub cumulative_displacement: f64,
    pub e_avg: f64,
    pub e_diff: f64,
    pub direction: i8,
    /// Empty until the final row.
    pub terminated: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub offset: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub normalized_mean: f64,
    pub normalized_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSampleRow {
    pub seed: u64,
    pub offset: f64,
    pub repeat: usize,
    pub e_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub mode: MotionMode,
    pub offset: f64,
    pub seed: u64,
    pub final_error: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub mode: MotionMode,
    /// Initial offset, or `pooled` for the whole grid.
    pub offset: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn trajectory_rows(trajectory: &[TrajectoryEntry]) -> Vec<TrajectoryRow> {
    trajectory
        .iter()
        .map(|e| TrajectoryRow {
            iteration: e.iteration,
            phase: e.phase,
            commanded_step: e.commanded_step,
            cumulative_displacement: e.cumulative_displacement,
            e_avg: e.e_avg,
            e_diff: e.e_diff,
            direction: e.direction,
            terminated: e.terminated,
        })
        .collect()
}

pub fn write_trajectory<W: Write>(w: W, trajectory: &[TrajectoryEntry]) -> Result<()> {
    write_rows(w, trajectory_rows(trajectory))
}

pub fn write_sweep<W: Write>(w: W, table: &SweepTable) -> Result<()> {
    write_rows(
        w,
        table.rows.iter().map(|r| SweepCsvRow {
            offset: r.offset,
            mean: r.mean,
            std: r.std,
            n: r.n,
            normalized_mean: r.normalized_mean,
            normalized_std: r.normalized_std,
        }),
    )
}

pub fn write_sweep_samples<W: Write>(w: W, table: &SweepTable) -> Result<()> {
    write_rows(
        w,
        table.samples.iter().map(|s| SweepSampleRow { seed: s.seed, offset: s.offset, repeat: s.repeat, e_avg: s.e_avg }),
    )
}

pub fn trial_rows(report: &ExperimentReport) -> Vec<TrialRow> {
    report
        .trials
        .iter()
        .map(|t| TrialRow {
            mode: t.mode,
            offset: t.offset,
            seed: t.seed,
            final_error: t.final_error,
            iterations: t.iterations,
            termination: t.termination,
        })
        .collect()
}

pub fn stats_rows(report: &ExperimentReport) -> Vec<StatsRow> {
    let row = |offset: String, s: &crate::harness::OffsetStats| StatsRow {
        mode: report.mode,
        offset,
        n: s.n,
        mean: s.mean,
        std: s.std,
        max: s.max,
    };
    report
        .stats
        .per_offset
        .iter()
        .map(|s| row(s.offset.to_string(), s))
        .chain(std::iter::once(row("pooled".to_string(), &report.stats.pooled)))
        .collect()
}

pub fn write_trials<W: Write>(w: W, rows: &[TrialRow]) -> Result<()> {
    write_rows(w, rows)
}

pub fn write_stats<W: Write>(w: W, rows: &[StatsRow]) -> Result<()> {
    write_rows(w, rows)
}
