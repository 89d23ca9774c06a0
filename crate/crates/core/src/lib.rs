//! Linear-optical simulation of few-photon interference in integrated
//! circuits that route photons through path, polarization and transverse
//! waveguide modes.

pub mod analysis;
pub mod circuit;
pub mod cli;
pub mod csvio;
pub mod elements;
pub mod expfile;
pub mod experiments;
pub mod focksim;
pub mod modespace;

pub type C64 = num_complex::Complex64;
