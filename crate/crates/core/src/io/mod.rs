//! On-disk formats: the frame cube, portable greymaps and the CSV tables.

pub mod cube;
pub mod pgm;
pub mod tables;

pub use cube::{read_frame_cube, write_frame_cube};
pub use pgm::write_pgm;
