//! Per-pixel temporal bandpass energy.
//!
//! Every pixel's intensity-over-time signal is transformed, multiplied by a
//! binary mask that keeps only the bins strictly inside the passband (and
//! their conjugate mirrors), transformed back, and its samples squared and
//! summed. The image-wide mean of those energies is the alignment metric.
//!
//! Two routes compute the same energy:
//!
//! * [`BandpassFilter`] runs the literal forward FFT, mask, inverse FFT and
//!   time-domain sum of squares.
//! * [`BandProjector`] stays in the frequency domain: by Parseval the energy
//!   of the filtered signal is `(1/T)·Σ_k |M_k·X_k|²`, and only the kept bins
//!   need evaluating. [`energy_map`] uses this route.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::FrameSequence;

/// Rows handed to one worker in [`energy_map`].
const ROWS_PER_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Keep bins with `f_low < f < f_high`; bins on either edge are dropped.
    #[default]
    Exclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandpassSpec {
    pub f_low: f64,
    pub f_high: f64,
    pub boundary: Boundary,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        Self { f_low: 1.5, f_high: 2.5, boundary: Boundary::Exclusive }
    }
}

impl BandpassSpec {
    pub fn new(f_low: f64, f_high: f64) -> Self {
        Self { f_low, f_high, boundary: Boundary::Exclusive }
    }

    pub fn validate(&self, frame_rate: f64) -> Result<()> {
        let nyquist = frame_rate / 2.0;
        if !(self.f_low > 0.0 && self.f_low < self.f_high && self.f_high < nyquist) {
            return Err(Error::config(format!(
                "passband ({}, {}) Hz must satisfy 0 < f_low < f_high < {nyquist} Hz",
                self.f_low, self.f_high
            )));
        }
        Ok(())
    }

    /// Binary mask over all `len` DFT bins, conjugate-symmetric by construction.
    pub fn mask(&self, len: usize, frame_rate: f64) -> Vec<bool> {
        (0..len).map(|k| self.keeps(bin_frequency(k.min(len - k), len, frame_rate), len, frame_rate)).collect()
    }

    fn keeps(&self, f: f64, len: usize, frame_rate: f64) -> bool {
        // Absorbs rounding in k·fs/T so a bin sitting on an edge is treated as on it.
        let tol = 1e-9 * frame_rate / len as f64;
        match self.boundary {
            Boundary::Exclusive => f - self.f_low > tol && self.f_high - f > tol,
        }
    }
}

fn bin_frequency(k: usize, len: usize, frame_rate: f64) -> f64 {
    k as f64 * frame_rate / len as f64
}

fn check_len(len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::input(format!("signal needs at least 2 samples, got {len}")));
    }
    Ok(())
}

/// Literal mask-in-frequency bandpass filter for one signal length.
pub struct BandpassFilter {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    mask: Vec<bool>,
}

impl BandpassFilter {
    pub fn new(len: usize, frame_rate: f64, band: &BandpassSpec) -> Result<Self> {
        check_len(len)?;
        band.validate(frame_rate)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            mask: band.mask(len, frame_rate),
        })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// `iFFT(M ⊙ FFT(signal))` including its (numerically tiny) imaginary part.
    pub fn filter_complex(&self, signal: &[f64]) -> Result<Vec<Complex64>> {
        if signal.len() != self.len() {
            return Err(Error::input(format!(
                "filter planned for {} samples, got {}",
                self.len(),
                signal.len()
            )));
        }
        let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (c, &keep) in buf.iter_mut().zip(&self.mask) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        Ok(buf)
    }

    pub fn filter(&self, signal: &[f64]) -> Result<Vec<f64>> {
        Ok(self.filter_complex(signal)?.into_iter().map(|c| c.re).collect())
    }
}

/// Real part of `iFFT(M ⊙ FFT(signal))` for a single pixel signal.
pub fn bandpass_filter_pixel(signal: &[f64], frame_rate: f64, band: &BandpassSpec) -> Result<Vec<f64>> {
    check_len(signal.len())?;
    BandpassFilter::new(signal.len(), frame_rate, band)?.filter(signal)
}

/// Sum of squared samples.
pub fn pixel_energy(filtered: &[f64]) -> f64 {
    filtered.iter().map(|x| x * x).sum()
}

/// Frequency-domain passband energy via direct evaluation of the kept bins.
///
/// For a real signal `|X_k| = |X_{T-k}|`, so each kept positive bin counts
/// twice unless it is its own mirror (`k = T/2`).
#[derive(Debug, Clone)]
pub struct BandProjector {
    len: usize,
    /// `(weight, cos table, sin table)` per kept positive bin.
    bins: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

impl BandProjector {
    pub fn new(len: usize, frame_rate: f64, band: &BandpassSpec) -> Result<Self> {
        check_len(len)?;
        band.validate(frame_rate)?;
        let mask = band.mask(len, frame_rate);
        let bins = (1..=len / 2)
            .filter(|&k| mask[k])
            .map(|k| {
                let weight = if 2 * k == len { 1.0 } else { 2.0 };
                let (sin, cos): (Vec<f64>, Vec<f64>) = (0..len)
                    .map(|t| (std::f64::consts::TAU * ((k * t) % len) as f64 / len as f64).sin_cos())
                    .unzip();
                (weight, cos, sin)
            })
            .collect();
        Ok(Self { len, bins })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Positive-frequency bins kept by the mask.
    pub fn kept_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn energy(&self, signal: &[f64]) -> Result<f64> {
        if signal.len() != self.len {
            return Err(Error::input(format!(
                "projector built for {} samples, got {}",
                self.len,
                signal.len()
            )));
        }
        // Masked bins exclude DC, so offsetting by the first sample changes
        // nothing except making constant signals come out exactly zero.
        let reference = signal[0];
        let mut total = 0.0;
        for (weight, cos, sin) in &self.bins {
            let (mut re, mut im) = (0.0, 0.0);
            for ((&x, &c), &s) in signal.iter().zip(cos).zip(sin) {
                let x = x - reference;
                re += x * c;
                im -= x * s;
            }
            total += weight * (re * re + im * im);
        }
        Ok(total / self.len as f64)
    }

    /// Energies of `pixels` interleaved signals stored frame-major
    /// (`frames[t * pixels + p]`), written into `out`.
    fn energy_block<'a>(&self, mut frames: impl Iterator<Item = &'a [f32]>, out: &mut [f64]) {
        let n = out.len();
        let kept = self.bins.len();
        let mut re = vec![0.0f64; n * kept];
        let mut im = vec![0.0f64; n * kept];
        // Same first-sample offset as `energy`; frame 0 then contributes nothing.
        let Some(reference) = frames.next() else { return };
        for (t, frame) in frames.enumerate().map(|(t, f)| (t + 1, f)) {
            for (b, (_, cos, sin)) in self.bins.iter().enumerate() {
                let (c, s) = (cos[t], sin[t]);
                let re = &mut re[b * n..(b + 1) * n];
                let im = &mut im[b * n..(b + 1) * n];
                for (((r, i), &x), &x0) in re.iter_mut().zip(im.iter_mut()).zip(frame).zip(reference) {
                    let x = x as f64 - x0 as f64;
                    *r += x * c;
                    *i -= x * s;
                }
            }
        }
        let scale = 1.0 / self.len as f64;
        for (p, o) in out.iter_mut().enumerate() {
            let mut e = 0.0;
            for (b, (weight, _, _)) in self.bins.iter().enumerate() {
                let (r, i) = (re[b * n + p], im[b * n + p]);
                e += weight * (r * r + i * i);
            }
            *o = e * scale;
        }
    }
}

/// Energy of the bandpassed signal computed in the frequency domain.
pub fn passband_energy(signal: &[f64], frame_rate: f64, band: &BandpassSpec) -> Result<f64> {
    BandProjector::new(signal.len(), frame_rate, band)?.energy(signal)
}

/// Per-pixel passband energies of one measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    frames: usize,
    frame_rate: f64,
}

impl EnergyMap {
    pub fn from_values(height: usize, width: usize, values: Vec<f64>, frames: usize, frame_rate: f64) -> Result<Self> {
        if height * width != values.len() || values.is_empty() {
            return Err(Error::input(format!(
                "{} energies do not fill a {height}x{width} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::input(format!("energy {v} is not a finite non-negative value")));
        }
        Ok(Self { height, width, values, frames, frame_rate })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// `(T, frame_rate)` of the window the map was computed from.
    pub fn source_window(&self) -> (usize, f64) {
        (self.frames, self.frame_rate)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / (self.height * self.width) as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EnergyMetric {
    pub e_avg: f64,
}

/// Energy map via the frequency-domain route, parallel over row blocks.
pub fn energy_map(seq: &FrameSequence, band: &BandpassSpec) -> Result<EnergyMap> {
    energy_map_chunked(seq, band, ROWS_PER_CHUNK)
}

/// [`energy_map`] with an explicit partition of the pixel grid.
pub fn energy_map_chunked(seq: &FrameSequence, band: &BandpassSpec, rows_per_chunk: usize) -> Result<EnergyMap> {
    let projector = BandProjector::new(seq.num_frames(), seq.frame_rate(), band)?;
    let width = seq.width();
    let chunk = rows_per_chunk.max(1) * width;
    let mut values = vec![0.0; seq.pixels()];
    values.par_chunks_mut(chunk).enumerate().for_each(|(c, out)| {
        let start = c * chunk;
        let end = start + out.len();
        projector.energy_block(seq.frames().map(|f| &f[start..end]), out);
    });
    EnergyMap::from_values(seq.height(), width, values, seq.num_frames(), seq.frame_rate())
}

/// Energy map via the literal filter-then-sum route, one pixel at a time.
pub fn energy_map_literal(seq: &FrameSequence, band: &BandpassSpec) -> Result<EnergyMap> {
    let filter = BandpassFilter::new(seq.num_frames(), seq.frame_rate(), band)?;
    let mut values = Vec::with_capacity(seq.pixels());
    for i in 0..seq.height() {
        for j in 0..seq.width() {
            values.push(pixel_energy(&filter.filter(&seq.pixel_series(i, j))?));
        }
    }
    EnergyMap::from_values(seq.height(), seq.width(), values, seq.num_frames(), seq.frame_rate())
}

pub fn average_energy(map: &EnergyMap) -> EnergyMetric {
    EnergyMetric { e_avg: map.mean() }
}

/// Display version of a map: entries below the `floor_percentile` quantile
/// (linear interpolation between order statistics) are zeroed and the rest
/// divided by the map maximum.
pub fn heatmap_for_display(map: &EnergyMap, floor_percentile: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&floor_percentile) {
        return Err(Error::config(format!(
            "floor_percentile must lie in [0, 1), got {floor_percentile}"
        )));
    }
    let max = map.max();
    if max == 0.0 {
        return Ok(vec![0.0; map.values.len()]);
    }
    let floor = quantile(&map.values, floor_percentile);
    Ok(map.values.iter().map(|&v| if v < floor { 0.0 } else { v / max }).collect())
}

fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
