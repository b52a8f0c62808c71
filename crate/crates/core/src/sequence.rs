use crate::error::{Error, Result};

/// A stack of `T` grayscale frames of `H x W` intensities sampled at a fixed
/// frame rate. Frames are stored back to back, each one row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    height: usize,
    width: usize,
    frame_rate: f64,
    timestamp_origin: f64,
    data: Vec<f32>,
}

impl FrameSequence {
    pub fn new(
        height: usize,
        width: usize,
        frame_rate: f64,
        timestamp_origin: f64,
        data: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::input(format!(
                "frame dimensions must be non-zero, got {height}x{width}"
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::input(format!("frame rate must be positive, got {frame_rate}")));
        }
        let pixels = height * width;
        if !data.len().is_multiple_of(pixels) {
            return Err(Error::input(format!(
                "payload of {} samples is not a whole number of {height}x{width} frames",
                data.len()
            )));
        }
        let frames = data.len() / pixels;
        if frames < 2 {
            return Err(Error::input(format!("need at least 2 frames, got {frames}")));
        }
        if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::input(format!(
                "intensity {} at sample {bad} is outside [0, 1]",
                data[bad]
            )));
        }
        Ok(Self { height, width, frame_rate, timestamp_origin, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.pixels()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn timestamp_origin(&self) -> f64 {
        self.timestamp_origin
    }

    /// Duration covered by the window, `T / fs`.
    pub fn duration(&self) -> f64 {
        self.num_frames() as f64 / self.frame_rate
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.pixels())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Intensity-over-time signal of one pixel.
    pub fn pixel_series(&self, row: usize, col: usize) -> Vec<f64> {
        let idx = row * self.width + col;
        self.frames().map(|f| f[idx] as f64).collect()
    }
}
