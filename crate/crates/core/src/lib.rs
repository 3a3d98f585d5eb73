//! Coverage analysis of indoor THz networks with directional beams,
//! human and wall blockage, and MFTR small-scale fading.

pub mod analytic;
pub mod antenna;
pub mod channel;
pub mod curve;
pub mod error;
pub mod geometry;
pub mod params;
pub mod quad;
pub mod simulate;
pub mod special;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
    #[doc = include_str!("../../../book/src/blockage.md")]
    pub mod blockage {}
    #[doc = include_str!("../../../book/src/fading.md")]
    pub mod fading {}
    #[doc = include_str!("../../../book/src/antennas.md")]
    pub mod antennas {}
    #[doc = include_str!("../../../book/src/analytic.md")]
    pub mod analytic {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/validation.md")]
    pub mod validation {}
}
