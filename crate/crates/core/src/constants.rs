//! Physical constants (CODATA 2018, SI) and HD+ reference values.

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// HD+ mass in atomic mass units.
pub const HD_PLUS_MASS_U: f64 = 3.021_51;

/// Spinless (v=0,N=0) -> (v'=0,N'=1) transition frequency, Hz.
pub const F0_SPINLESS_HZ: f64 = 1_314_925_752_000.0;

pub const MHZ: f64 = 1.0e6;
pub const KHZ: f64 = 1.0e3;

/// HD+ mass in kg.
pub fn hd_plus_mass_kg() -> f64 {
    HD_PLUS_MASS_U * ATOMIC_MASS_UNIT
}
