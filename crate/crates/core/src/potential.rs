//! Total electrostatic potential: real-space, Fourier-space and self parts.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::params::SeParams;
use crate::realspace::{real_space_sum, self_term};
use crate::sekspace::{se_kspace, Timings};
use crate::system::{ParticleSystem, Periodicity};

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub phi: Vec<f64>,
    pub real: Vec<f64>,
    pub fourier: Vec<f64>,
    pub timings: Timings,
    pub t_realspace: f64,
    pub transformed_points: usize,
}

/// Potential at every particle. Periodic systems must be charge neutral; a
/// charged free-space system only triggers a warning.
pub fn total_potential(system: &ParticleSystem, params: &SeParams, periodicity: Periodicity) -> Result<Potential> {
    if !system.is_neutral() {
        if periodicity == Periodicity::FREE {
            log::warn!("system carries net charge {:e}", system.total_charge());
        } else {
            return invalid(format!(
                "periodic systems must be charge neutral, total charge is {:e}",
                system.total_charge()
            ));
        }
    }
    let clock = Instant::now();
    let real = real_space_sum(system, params.xi, params.rc, periodicity)?;
    let t_realspace = clock.elapsed().as_secs_f64();
    let k = se_kspace(system, params, periodicity)?;
    let phi = real
        .par_iter()
        .zip(&k.phi)
        .zip(system.charges())
        .map(|((r, f), &q)| r + f + self_term(q, params.xi))
        .collect();
    Ok(Potential {
        phi,
        real,
        fourier: k.phi,
        timings: k.timings,
        t_realspace,
        transformed_points: k.transformed_points,
    })
}
