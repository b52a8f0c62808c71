//! Synthetic B-mode phantom with a vibrating needle.
//!
//! Each frame is composed as
//!
//! ```text
//! I(i,j,t) = B(i,j) + V(d)·N(i,j) + A(d)·h(r)·G(i,j)·sin(2π·f·t) + noise
//! ```
//!
//! where `B` is a smooth tissue texture, `N` the needle brightness mask,
//! `V(d) = exp(-(d/σ_vis)²)` the out-of-plane visibility falloff,
//! `A(d) = a·exp(-d²/2σ²)` the vibration modulation falloff,
//! `h(r) = exp(-r/λ)` the spread of vibration into neighbouring tissue at
//! pixel distance `r` from the needle, and `G` a fixed per-pixel gain in
//! `[0.5, 1.5]`. Noise is multiplicative lognormal speckle followed by
//! additive Gaussian noise, and the result is clamped to `[0, 1]`.
//!
//! In rotation mode the out-of-plane distance varies along the needle:
//! column `c` sits `tan(θ)·(c - pivot)·mm_per_pixel` millimetres from the
//! imaging plane, with the pivot at the image centre. The modulation there
//! is the angular falloff (σ in degrees) times the lateral falloff at that
//! column's distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::FrameSequence;

/// Texture mean and half-range; keeps `B ± max modulation` inside `[0, 1]`.
const TEXTURE_MEAN: f64 = 0.35;
const TEXTURE_SPREAD: f64 = 0.1;
const TEXTURE_WAVES: usize = 4;
/// Gaussian cross-section of the needle shaft (18 G is ~1.27 mm across).
const NEEDLE_SIGMA_MM: f64 = 0.5;

const STREAM_STATIC: u64 = 0x5354_4154;
const STREAM_FRAME: u64 = 0x4652_414d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionMode {
    Translation,
    Rotation,
}

impl MotionMode {
    pub fn unit(self) -> &'static str {
        match self {
            MotionMode::Translation => "mm",
            MotionMode::Rotation => "deg",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MotionMode::Translation => "translation",
            MotionMode::Rotation => "rotation",
        }
    }
}

impl std::fmt::Display for MotionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MotionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "translation" => Ok(MotionMode::Translation),
            "rotation" => Ok(MotionMode::Rotation),
            other => Err(Error::config(format!("unknown motion mode {other:?}"))),
        }
    }
}

/// Ground-truth misalignment between the imaging plane and the needle plane.
///
/// Only the offset matching `mode` is ever non-zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeState {
    mode: MotionMode,
    delta_p: f64,
    delta_theta: f64,
}

impl ProbeState {
    /// Lateral offset in millimetres.
    pub fn translation(delta_p: f64) -> Self {
        Self { mode: MotionMode::Translation, delta_p, delta_theta: 0.0 }
    }

    /// Yaw about the probe centreline in degrees.
    pub fn rotation(delta_theta: f64) -> Self {
        Self { mode: MotionMode::Rotation, delta_p: 0.0, delta_theta }
    }

    pub fn new(mode: MotionMode, offset: f64) -> Self {
        match mode {
            MotionMode::Translation => Self::translation(offset),
            MotionMode::Rotation => Self::rotation(offset),
        }
    }

    pub fn mode(&self) -> MotionMode {
        self.mode
    }

    pub fn delta_p(&self) -> f64 {
        self.delta_p
    }

    pub fn delta_theta(&self) -> f64 {
        self.delta_theta
    }

    /// The offset along the active axis.
    pub fn offset(&self) -> f64 {
        match self.mode {
            MotionMode::Translation => self.delta_p,
            MotionMode::Rotation => self.delta_theta,
        }
    }

    pub fn moved_by(&self, delta: f64) -> Self {
        Self::new(self.mode, self.offset() + delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub mm_per_pixel: f64,
    pub frame_rate: f64,
    /// Row of the needle axis.
    pub needle_depth_px: usize,
    /// Half-open column interval `[start, end)` covered by the needle.
    pub needle_span: (usize, usize),
    /// Peak in-plane needle brightness added on top of the tissue texture.
    pub needle_brightness: f64,
    pub vibration_frequency: f64,
    pub vibration_intensity_amplitude: f64,
    pub visibility_sigma: f64,
    pub vibration_sigma_translation: f64,
    pub vibration_sigma_rotation: f64,
    pub tissue_halo_lambda: f64,
    pub speckle_level: f64,
    pub additive_noise_level: f64,
    pub rng_seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            image_height: 256,
            image_width: 256,
            mm_per_pixel: 0.2,
            frame_rate: 30.0,
            needle_depth_px: 150,
            needle_span: (64, 192),
            needle_brightness: 0.3,
            vibration_frequency: 2.0,
            vibration_intensity_amplitude: 0.15,
            visibility_sigma: 1.2,
            vibration_sigma_translation: 2.0,
            vibration_sigma_rotation: 8.0,
            tissue_halo_lambda: 12.0,
            speckle_level: 0.1,
            additive_noise_level: 0.02,
            rng_seed: 0,
        }
    }
}

impl PhantomConfig {
    /// Same phantom with both noise sources switched off.
    pub fn noiseless(mut self) -> Self {
        self.speckle_level = 0.0;
        self.additive_noise_level = 0.0;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn is_noiseless(&self) -> bool {
        self.speckle_level == 0.0 && self.additive_noise_level == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        }
        fn non_negative(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be non-negative, got {v}")))
            }
        }

        if self.image_height == 0 || self.image_width == 0 {
            return Err(Error::config("image dimensions must be non-zero"));
        }
        positive("mm_per_pixel", self.mm_per_pixel)?;
        positive("frame_rate", self.frame_rate)?;
        positive("vibration_frequency", self.vibration_frequency)?;
        if self.frame_rate <= 2.0 * self.vibration_frequency {
            return Err(Error::config(format!(
                "frame_rate {} Hz must exceed twice the vibration frequency {} Hz",
                self.frame_rate, self.vibration_frequency
            )));
        }
        if self.needle_depth_px >= self.image_height {
            return Err(Error::config(format!(
                "needle_depth_px {} outside image height {}",
                self.needle_depth_px, self.image_height
            )));
        }
        let (start, end) = self.needle_span;
        if start >= end || end > self.image_width {
            return Err(Error::config(format!(
                "needle_span [{start}, {end}) must be a non-empty interval inside width {}",
                self.image_width
            )));
        }
        if !(self.needle_brightness > 0.0 && self.needle_brightness <= 1.0) {
            return Err(Error::config(format!(
                "needle_brightness must lie in (0, 1], got {}",
                self.needle_brightness
            )));
        }
        let amp = self.vibration_intensity_amplitude;
        if !(amp > 0.0 && amp <= 1.0) {
            return Err(Error::config(format!(
                "vibration_intensity_amplitude must lie in (0, 1], got {amp}"
            )));
        }
        positive("visibility_sigma", self.visibility_sigma)?;
        positive("vibration_sigma_translation", self.vibration_sigma_translation)?;
        positive("vibration_sigma_rotation", self.vibration_sigma_rotation)?;
        positive("tissue_halo_lambda", self.tissue_halo_lambda)?;
        non_negative("speckle_level", self.speckle_level)?;
        non_negative("additive_noise_level", self.additive_noise_level)?;
        Ok(())
    }
}

/// Per-pose intensity fields: everything in a frame except the time term and
/// the noise.
#[derive(Debug, Clone)]
pub struct PoseField {
    /// `B + V·N`
    pub base: Vec<f64>,
    /// `A·h·G`, the peak modulation of each pixel.
    pub modulation: Vec<f64>,
}

/// A validated phantom with its seed-dependent static fields precomputed.
#[derive(Debug, Clone)]
pub struct Phantom {
    cfg: PhantomConfig,
    texture: Vec<f64>,
    needle: Vec<f64>,
    halo: Vec<f64>,
    gain: Vec<f64>,
}

impl Phantom {
    pub fn new(cfg: PhantomConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w) = (cfg.image_height, cfg.image_width);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, STREAM_STATIC, 0, 0));

        // Smooth texture: a few long-wavelength plane waves with random phases.
        let waves: Vec<(f64, f64, f64)> = (0..TEXTURE_WAVES)
            .map(|_| {
                let period: f64 = rng.random_range(20.0..80.0);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / period;
                (k * angle.cos(), k * angle.sin(), phase)
            })
            .collect();
        let mut texture = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let s: f64 = waves
                    .iter()
                    .map(|&(ky, kx, ph)| (ky * i as f64 + kx * j as f64 + ph).cos())
                    .sum();
                texture.push(TEXTURE_MEAN + TEXTURE_SPREAD * s / TEXTURE_WAVES as f64);
            }
        }

        let gain: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.5..=1.5)).collect();

        let (start, end) = cfg.needle_span;
        let depth = cfg.needle_depth_px as f64;
        let needle_sigma = NEEDLE_SIGMA_MM / cfg.mm_per_pixel;
        let mut needle = vec![0.0; h * w];
        let mut halo = vec![0.0; h * w];
        for i in 0..h {
            let dr = i as f64 - depth;
            let profile = cfg.needle_brightness * (-0.5 * (dr / needle_sigma).powi(2)).exp();
            for j in 0..w {
                let dc = if j < start {
                    (start - j) as f64
                } else if j >= end {
                    (j + 1 - end) as f64
                } else {
                    needle[i * w + j] = profile;
                    0.0
                };
                let r = (dr * dr + dc * dc).sqrt();
                halo[i * w + j] = (-r / cfg.tissue_halo_lambda).exp();
            }
        }

        Ok(Self { cfg, texture, needle, halo, gain })
    }

    pub fn config(&self) -> &PhantomConfig {
        &self.cfg
    }

    /// Out-of-plane distance (mm) of each needle column for a pose.
    fn column_offsets(&self, pose: &ProbeState) -> Vec<f64> {
        let (start, end) = self.cfg.needle_span;
        match pose.mode() {
            MotionMode::Translation => vec![pose.delta_p(); end - start],
            MotionMode::Rotation => {
                let pivot = (self.cfg.image_width as f64 - 1.0) / 2.0;
                let slope = pose.delta_theta().to_radians().tan();
                (start..end)
                    .map(|c| slope * (c as f64 - pivot) * self.cfg.mm_per_pixel)
                    .collect()
            }
        }
    }

    /// Needle visibility `V` of each needle column.
    fn column_visibility(&self, pose: &ProbeState) -> Vec<f64> {
        self.column_offsets(pose)
            .into_iter()
            .map(|d| (-(d / self.cfg.visibility_sigma).powi(2)).exp())
            .collect()
    }

    /// Modulation amplitude `A` of each needle column.
    fn column_amplitude(&self, pose: &ProbeState) -> Vec<f64> {
        let cfg = &self.cfg;
        let lateral = |d: f64| (-d * d / (2.0 * cfg.vibration_sigma_translation.powi(2))).exp();
        let angular = match pose.mode() {
            MotionMode::Translation => 1.0,
            MotionMode::Rotation => {
                let th = pose.delta_theta();
                (-th * th / (2.0 * cfg.vibration_sigma_rotation.powi(2))).exp()
            }
        };
        self.column_offsets(pose)
            .into_iter()
            .map(|d| cfg.vibration_intensity_amplitude * angular * lateral(d))
            .collect()
    }

    /// Mean needle visibility factor over the needle span; 1 when fully in
    /// plane, ~0 when the needle has left the imaging slice.
    pub fn visibility(&self, pose: &ProbeState) -> f64 {
        let v = self.column_visibility(pose);
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn pose_field(&self, pose: &ProbeState) -> PoseField {
        let (h, w) = (self.cfg.image_height, self.cfg.image_width);
        let (start, end) = self.cfg.needle_span;
        let vis = self.column_visibility(pose);
        let amp = self.column_amplitude(pose);
        let mut base = Vec::with_capacity(h * w);
        let mut modulation = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let idx = i * w + j;
                let c = j.clamp(start, end - 1) - start;
                base.push(self.texture[idx] + vis[c] * self.needle[idx]);
                modulation.push(amp[c] * self.halo[idx] * self.gain[idx]);
            }
        }
        PoseField { base, modulation }
    }

    /// Renders one frame at time `t` seconds, drawing noise from `rng`.
    pub fn render_frame<R: Rng + ?Sized>(
        &self,
        pose: &ProbeState,
        t: f64,
        rng: &mut R,
    ) -> Result<Vec<f32>> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::input(format!("frame time must be non-negative, got {t}")));
        }
        let field = self.pose_field(pose);
        let mut out = vec![0.0f32; field.base.len()];
        self.render_into(&field, t, rng, &mut out);
        Ok(out)
    }

    fn render_into<R: Rng + ?Sized>(&self, field: &PoseField, t: f64, rng: &mut R, out: &mut [f32]) {
        let wave = (std::f64::consts::TAU * self.cfg.vibration_frequency * t).sin();
        let speckle = self.cfg.speckle_level;
        let additive = self.cfg.additive_noise_level;
        for ((o, &b), &m) in out.iter_mut().zip(&field.base).zip(&field.modulation) {
            let mut v = b + m * wave;
            if speckle > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v *= (speckle * z).exp();
            }
            if additive > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v += additive * z;
            }
            *o = v.clamp(0.0, 1.0) as f32;
        }
    }

    /// Renders `num_frames` frames of acquisition number `acquisition`.
    ///
    /// Frame `k` is sampled at `t0 + k / fs` where `t0 = acquisition · T / fs`,
    /// so consecutive acquisitions continue the vibration phase. Noise for
    /// each frame comes from its own stream keyed on (seed, acquisition, k).
    pub fn sequence(&self, pose: &ProbeState, num_frames: usize, acquisition: u64) -> Result<FrameSequence> {
        if num_frames < 2 {
            return Err(Error::input(format!("need at least 2 frames, got {num_frames}")));
        }
        let cfg = &self.cfg;
        let pixels = cfg.image_height * cfg.image_width;
        let field = self.pose_field(pose);
        let t0 = acquisition as f64 * num_frames as f64 / cfg.frame_rate;
        let mut data = vec![0.0f32; pixels * num_frames];
        data.par_chunks_exact_mut(pixels).enumerate().for_each(|(k, frame)| {
            let t = t0 + k as f64 / cfg.frame_rate;
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, STREAM_FRAME, acquisition, k as u64));
            self.render_into(&field, t, &mut rng, frame);
        });
        FrameSequence::new(cfg.image_height, cfg.image_width, cfg.frame_rate, t0, data)
    }

    /// Closed-form `E_Avg` of the noiseless phantom over a `num_frames` window.
    ///
    /// Exact when the window holds a whole number of vibration cycles and no
    /// pixel clips: each pixel then contributes `T·m²/2`.
    pub fn ground_truth_energy(&self, pose: &ProbeState, num_frames: usize) -> f64 {
        let field = self.pose_field(pose);
        let sum_sq: f64 = field.modulation.iter().map(|m| m * m).sum();
        sum_sq * num_frames as f64 / 2.0 / field.modulation.len() as f64
    }
}

/// Convenience wrapper: validate `cfg`, then render a single frame.
pub fn render_frame<R: Rng + ?Sized>(
    cfg: &PhantomConfig,
    pose: &ProbeState,
    t: f64,
    rng: &mut R,
) -> Result<Vec<f32>> {
    Phantom::new(cfg.clone())?.render_frame(pose, t, rng)
}

/// Convenience wrapper: the first acquisition of `num_frames` frames at `pose`.
pub fn generate_sequence(cfg: &PhantomConfig, pose: &ProbeState, num_frames: usize) -> Result<FrameSequence> {
    Phantom::new(cfg.clone())?.sequence(pose, num_frames, 0)
}

pub fn ground_truth_energy(cfg: &PhantomConfig, pose: &ProbeState, num_frames: usize) -> Result<f64> {
    Ok(Phantom::new(cfg.clone())?.ground_truth_energy(pose, num_frames))
}

/// splitmix64 over the seed and stream coordinates.
pub(crate) fn derive_seed(seed: u64, domain: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(mix(seed) ^ domain) ^ a) ^ b)
}
