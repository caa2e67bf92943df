//! Physical constants (CODATA 2018, exact where the SI defines them).

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Variance of a vacuum quadrature. Every covariance matrix in the crate uses this convention.
pub const VACUUM_VARIANCE: f64 = 0.5;
