//! Frame cube container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VIBE"
//! 4       2     format version (u16)
//! 6       4     height H (u32)
//! 10      4     width W (u32)
//! 14      4     frame count T (u32)
//! 18      4     frame rate in Hz (f32)
//! 22      4·H·W·T  f32 intensities, frame after frame, each row-major
//! ```
//!
//! All fields little-endian.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sequence::FrameSequence;

pub const MAGIC: [u8; 4] = *b"VIBE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeHeader {
    pub version: u16,
    pub height: u32,
    pub width: u32,
    pub frames: u32,
    pub frame_rate: f32,
}

impl CubeHeader {
    pub fn payload_len(&self) -> u64 {
        self.height as u64 * self.width as u64 * self.frames as u64 * 4
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.height.to_le_bytes());
        b[10..14].copy_from_slice(&self.width.to_le_bytes());
        b[14..18].copy_from_slice(&self.frames.to_le_bytes());
        b[18..22].copy_from_slice(&self.frame_rate.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated { expected: HEADER_LEN as u64, actual: bytes.len() as u64 });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let header = Self {
            version: u16::from_le_bytes([bytes[4], bytes[5]]),
            height: u32_at(6),
            width: u32_at(10),
            frames: u32_at(14),
            frame_rate: f32::from_le_bytes(bytes[18..22].try_into().unwrap()),
        };
        if header.version != VERSION {
            return Err(Error::UnsupportedVersion { found: header.version, supported: VERSION });
        }
        if header.height == 0 || header.width == 0 || header.frames == 0 {
            return Err(Error::input(format!(
                "degenerate cube dimensions {}x{}x{}",
                header.height, header.width, header.frames
            )));
        }
        if !(header.frame_rate.is_finite() && header.frame_rate > 0.0) {
            return Err(Error::input(format!("invalid frame rate {}", header.frame_rate)));
        }
        Ok(header)
    }
}

pub fn encode_frame_cube(seq: &FrameSequence) -> Result<Vec<u8>> {
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| Error::input(format!("{name} {v} does not fit the cube header")))
    };
    let header = CubeHeader {
        version: VERSION,
        height: dim(seq.height(), "height")?,
        width: dim(seq.width(), "width")?,
        frames: dim(seq.num_frames(), "frame count")?,
        frame_rate: seq.frame_rate() as f32,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len() as usize);
    out.extend_from_slice(&header.to_bytes());
    for v in seq.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_frame_cube(bytes: &[u8]) -> Result<FrameSequence> {
    let header = CubeHeader::parse(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.payload_len();
    let actual = payload.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::input(format!(
            "payload has {actual} bytes, header describes {expected}"
        )));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    FrameSequence::new(
        header.height as usize,
        header.width as usize,
        header.frame_rate as f64,
        0.0,
        data,
    )
}

pub fn write_frame_cube(seq: &FrameSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_frame_cube(seq)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame_cube(path: impl AsRef<Path>) -> Result<FrameSequence> {
    decode_frame_cube(&std::fs::read(path)?)
}
