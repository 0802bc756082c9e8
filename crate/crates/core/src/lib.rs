//! Rate-equation model of THz rotational spectroscopy on trapped,
//! sympathetically cooled HD+ ions with REMPD detection.

pub mod analysis;
pub mod config;
pub mod constants;
pub mod error;
pub mod kinetics;
pub mod levelcat;
pub mod lineshape;
pub mod pipeline;
pub mod protocol;
pub mod radfield;
pub mod selftest;

pub use error::{Error, Result};
