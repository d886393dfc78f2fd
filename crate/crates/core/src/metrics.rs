//! Error metrics and energies.

use crate::error::{invalid, Result};
use crate::system::ParticleSystem;

/// `sqrt(sum |phi - ref|^2 / N) / sqrt(sum |ref|^2 / N)`.
pub fn relative_rms_error(phi: &[f64], reference: &[f64]) -> Result<f64> {
    if phi.len() != reference.len() {
        return invalid(format!(
            "length mismatch: {} vs {}",
            phi.len(),
            reference.len()
        ));
    }
    let num: f64 = phi
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return invalid("reference potentials are identically zero");
    }
    Ok((num / den).sqrt())
}

/// `E = sum_m q_m phi_m`, without the conventional factor 1/2.
pub fn energy(system: &ParticleSystem, phi: &[f64]) -> Result<f64> {
    if phi.len() != system.len() {
        return invalid(format!(
            "{} potentials for {} particles",
            phi.len(),
            system.len()
        ));
    }
    Ok(system.charges().iter().zip(phi).map(|(q, p)| q * p).sum())
}
