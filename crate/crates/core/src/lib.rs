pub mod circuit;
pub mod coil;
pub mod encoder;
pub mod error;
pub mod features;
pub mod harness;
pub mod iqfile;
pub mod iso15693;
pub mod quadrature;
pub mod recognition;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
