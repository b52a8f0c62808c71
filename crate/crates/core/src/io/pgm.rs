use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Binary (P5) 8-bit greymap; `values` in `[0, 1]`, row-major.
pub fn encode_pgm(width: usize, height: usize, values: impl IntoIterator<Item = f64>) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    let header = out.len();
    out.extend(values.into_iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    if out.len() - header != width * height {
        return Err(Error::input(format!(
            "{} pixels do not fill a {width}x{height} greymap",
            out.len() - header
        )));
    }
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes = encode_pgm(width, height, values)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
