//! Spectral Ewald summation of electrostatic potentials for point charges in a
//! cubic box with free-space, singly, doubly or triply periodic boundary
//! conditions.
//!
//! The potential at every particle is split into a short-range real-space sum
//! ([`realspace`]), a smooth Fourier-space part evaluated on a uniform grid
//! ([`sekspace`]) and a self-interaction correction. The Fourier-space part
//! uses gridding windows ([`windows`]), truncated free-space Green's functions
//! ([`greens`]) and an adaptive FFT with per-mode upsampling ([`aft`]).
//! Slow but independent reference evaluators live in [`oracle`].

pub mod aft;
pub mod cli;
pub mod error;
pub mod fft;
pub mod greens;
pub mod grid;
pub mod metrics;
pub mod oracle;
pub mod params;
pub mod potential;
pub mod realspace;
pub mod sekspace;
pub mod special;
pub mod system;
pub mod windows;

pub use error::{Error, Result};
pub use params::SeParams;
pub use potential::total_potential;
pub use system::{ParticleSystem, Periodicity};
pub use windows::WindowKind;
