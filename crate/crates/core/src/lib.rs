//! Walsh sampling of functions on [0,1) and their recovery in periodized
//! Daubechies wavelet bases.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod limits;
pub mod reconstruct;
pub mod sampling;
pub mod section;
pub mod solver;
pub mod walsh;
pub mod wavelet;

pub use error::{CsError, Result};
pub use grid::GridFunction;
pub use section::{assemble_section, u_entry, SectionMatrix};
pub use walsh::{DyadicPoint, WalshIndex};
pub use wavelet::{BasisIndex, Family, Kind, WaveletSystem};
