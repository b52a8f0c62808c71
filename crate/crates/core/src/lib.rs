//! Needle alignment from vibration energy in ultrasound sequences.
//!
//! The crate is split along the data flow:
//!
//! * [`phantom`] renders synthetic B-mode sequences of a vibrating needle.
//! * [`spectral`] turns a sequence into a per-pixel passband energy map and
//!   the scalar average-energy metric.
//! * [`controller`] repositions a probe by climbing that metric.
//! * [`harness`] runs attenuation sweeps and restoration experiments
//!   against the phantom.
//! * [`io`], [`config`] and [`cli`] cover files, configuration and the
//!   command-line front end.

pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod harness;
pub mod io;
pub mod phantom;
pub mod sequence;
pub mod spectral;

pub use error::{Error, Result};
pub use phantom::{MotionMode, Phantom, PhantomConfig, ProbeState};
pub use sequence::FrameSequence;
pub use spectral::{BandpassSpec, EnergyMap, EnergyMetric};
