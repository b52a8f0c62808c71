//! Shared test oracles. Nothing here calls into the library's spectral code.
#![allow(dead_code)]

use std::cell::{Cell, RefCell};
use std::f64::consts::TAU;
use std::rc::Rc;

use vibalign::controller::{ImageSource, ProbeActuator};
use vibalign::{FrameSequence, Result};

/// Frequency (Hz) represented by DFT bin `k` of a length-`n` transform.
pub fn bin_frequency(k: usize, n: usize, fs: f64) -> f64 {
    let k = if k <= n / 2 { k } else { n - k };
    k as f64 * fs / n as f64
}

/// Textbook O(n²) DFT.
pub fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let a = -TAU * (k * t % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

/// Time-domain energy after keeping only bins strictly inside `(lo, hi)`,
/// via Parseval: `(1/n) Σ |X_k|²` over kept bins.
pub fn band_energy(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    dft(x)
        .iter()
        .enumerate()
        .filter(|&(k, _)| {
            let f = bin_frequency(k, n, fs);
            f > lo && f < hi
        })
        .map(|(_, &(re, im))| re * re + im * im)
        .sum::<f64>()
        / n as f64
}

/// Same quantity by explicit inverse DFT of the masked spectrum and a sum of
/// squares in time.
pub fn band_energy_time_domain(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let spec = dft(x);
    let kept: Vec<(usize, f64, f64)> = spec
        .iter()
        .enumerate()
        .filter(|&(k, _)| {
            let f = bin_frequency(k, n, fs);
            f > lo && f < hi
        })
        .map(|(k, &(re, im))| (k, re, im))
        .collect();
    (0..n)
        .map(|t| {
            let v: f64 = kept
                .iter()
                .map(|&(k, re, im)| {
                    let a = TAU * (k * t % n) as f64 / n as f64;
                    re * a.cos() - im * a.sin()
                })
                .sum::<f64>()
                / n as f64;
            v * v
        })
        .sum()
}

pub fn tone(amplitude: f64, freq: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| amplitude * (TAU * freq * k as f64 / fs).sin()).collect()
}

/// Single-pixel stand-in for an imaging chain: each acquisition is a 2 Hz
/// tone whose passband energy equals `landscape(position)`.
pub struct ToneSource<F: Fn(f64) -> f64> {
    pub landscape: F,
    pub position: Rc<Cell<f64>>,
}

impl<F: Fn(f64) -> f64> ImageSource for ToneSource<F> {
    fn acquire(&mut self, frames: usize) -> Result<FrameSequence> {
        let e = (self.landscape)(self.position.get());
        let amp = (2.0 * e / frames as f64).sqrt();
        let data = (0..frames).map(|k| (0.5 + amp * (TAU * 2.0 * k as f64 / 30.0).sin()) as f32).collect();
        FrameSequence::new(1, 1, 30.0, 0.0, data)
    }
}

pub struct Stage {
    pub position: Rc<Cell<f64>>,
    pub moves: Rc<RefCell<Vec<f64>>>,
}

impl ProbeActuator for Stage {
    fn move_by(&mut self, delta: f64) -> Result<()> {
        self.moves.borrow_mut().push(delta);
        self.position.set(self.position.get() + delta);
        Ok(())
    }
}

pub fn tone_rig<F: Fn(f64) -> f64>(start: f64, landscape: F) -> (Stage, ToneSource<F>) {
    let position = Rc::new(Cell::new(start));
    (Stage { position: position.clone(), moves: Rc::default() }, ToneSource { landscape, position })
}
