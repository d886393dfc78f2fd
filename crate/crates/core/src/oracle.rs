//! Slow reference evaluators of the Fourier-space Ewald sums.
//!
//! Each periodicity has a closed-form mode sum (`kspace_direct_*`), and the
//! doubly and singly periodic cases also have a second, independent evaluation
//! by numerical quadrature of the Fourier integral. None of this code shares
//! logic with the grid-based pipeline.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::special::{bessel_j0, erf, exp_erfc, integrate, Compensated, EULER_GAMMA};
use crate::system::{ParticleSystem, Periodicity};

/// Truncation settings of the reference sums.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// Largest mode index per periodic axis.
    pub kmax: usize,
    /// Image shells per periodic axis in [`direct_image_sum`].
    pub image_layers: usize,
    /// Relative tolerance of the one-dimensional quadratures.
    pub quad_tol: f64,
}

impl OracleConfig {
    /// Settings resolving the mode sums to about `eps`, with one extra mode.
    pub fn for_tolerance(xi: f64, box_len: f64, eps: f64) -> Self {
        let kmax = (xi * box_len * (-eps.ln()).sqrt() / PI).ceil() as usize + 1;
        Self {
            kmax,
            image_layers: 0,
            quad_tol: (eps / 100.0).max(1e-15),
        }
    }

    /// Converged to double precision.
    pub fn reference(xi: f64, box_len: f64) -> Self {
        Self::for_tolerance(xi, box_len, 1e-17)
    }
}

/// `E_1(x) = int_x^inf e^{-t}/t dt`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return invalid(format!("E1 needs a positive argument, got {x}"));
    }
    if x <= 1.0 {
        return Ok(ein(x) - EULER_GAMMA - x.ln());
    }
    // Continued fraction, modified Lentz.
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    Ok(h * (-x).exp())
}

/// `Ein(x) = gamma + ln x + E_1(x) = sum_k (-1)^(k+1) x^k / (k k!)`, entire.
pub fn ein(x: f64) -> f64 {
    if x <= 1.0 {
        let mut term = 1.0;
        let mut sum = Compensated::new();
        for k in 1..60 {
            term *= -x / k as f64;
            let t = -term / k as f64;
            sum.add(t);
            if t.abs() < 1e-18 * sum.value().abs() {
                break;
            }
        }
        sum.value()
    } else {
        EULER_GAMMA + x.ln() + exp_integral_e1(x).expect("positive argument")
    }
}

/// `K_0(a, b) = int_1^inf e^{-a t - b/t} dt / t`, evaluated as
/// `int_0^inf exp(-a e^u - b e^{-u}) du`.
pub fn incomplete_bessel_k0(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) {
        return invalid(format!("K0(a, b) diverges for a = {a}"));
    }
    if b < 0.0 {
        return invalid(format!("K0(a, b) needs b >= 0, got {b}"));
    }
    let f = |u: f64| (-a * u.exp() - b * (-u).exp()).exp();
    // integrand peaks at e^u = sqrt(b/a) and is below 1e-300 times its peak once a e^u > 700
    let peak_u = (0.5 * (b / a).ln()).max(0.0);
    let peak = f(peak_u);
    let upper = (peak_u.exp() + 750.0 / a).ln().max(peak_u + 1.0);
    let v = if peak_u > 0.0 {
        integrate(f, 0.0, peak_u, 1e-17 * peak, 1e-15) + integrate(f, peak_u, upper, 1e-17 * peak, 1e-15)
    } else {
        integrate(f, 0.0, upper, 1e-17 * peak, 1e-15)
    };
    Ok(v)
}

fn phase_table(x: f64, box_len: f64, kmax: usize) -> Vec<Complex64> {
    // entry j is exp(i 2 pi (j - kmax) x / L)
    let mut t = vec![Complex64::new(1.0, 0.0); 2 * kmax + 1];
    for j in 1..=kmax {
        let ang = 2.0 * PI * j as f64 * x / box_len;
        t[kmax + j] = Complex64::from_polar(1.0, ang);
        t[kmax - j] = t[kmax + j].conj();
    }
    t
}

/// Triply periodic Fourier sum over `|n_i| <= kmax`, `k = 2 pi n / L`, `k != 0`.
pub fn kspace_direct_3p(system: &ParticleSystem, xi: f64, kmax: usize) -> Vec<f64> {
    let l = system.box_len();
    let n = system.len();
    let w = 2 * kmax + 1;
    let tables: Vec<[Vec<Complex64>; 3]> = system
        .positions()
        .iter()
        .map(|x| [phase_table(x[0], l, kmax), phase_table(x[1], l, kmax), phase_table(x[2], l, kmax)])
        .collect();
    let q = system.charges();
    let modes: Vec<[usize; 3]> = (0..w * w * w)
        .map(|i| [i / (w * w), (i / w) % w, i % w])
        .filter(|&[a, b, c]| (a, b, c) != (kmax, kmax, kmax))
        .collect();
    let k0 = 2.0 * PI / l;
    // weight and conjugated structure factor per mode
    let weighted: Vec<Complex64> = modes
        .par_iter()
        .map(|&[a, b, c]| {
            let kv = [a, b, c].map(|j| k0 * (j as f64 - kmax as f64));
            let k2 = kv.iter().map(|v| v * v).sum::<f64>();
            let wk = (-k2 / (4.0 * xi * xi)).exp() / k2;
            let mut re = Compensated::new();
            let mut im = Compensated::new();
            for j in 0..n {
                let t = tables[j][0][a] * tables[j][1][b] * tables[j][2][c];
                re.add(q[j] * t.re);
                im.add(-q[j] * t.im);
            }
            Complex64::new(re.value(), im.value()) * wk
        })
        .collect();
    let pre = 4.0 * PI / (l * l * l);
    (0..n)
        .into_par_iter()
        .map(|m| {
            let mut acc = Compensated::new();
            for (s, &[a, b, c]) in weighted.iter().zip(&modes) {
                let t = tables[m][0][a] * tables[m][1][b] * tables[m][2][c];
                acc.add((s * t).re);
            }
            pre * acc.value()
        })
        .collect()
}

/// Doubly periodic (x, y) Fourier sum: closed-form nonzero modes with
/// `|n_i| <= kmax` plus the zero-mode term.
pub fn kspace_direct_2p(system: &ParticleSystem, xi: f64, kmax: usize) -> Vec<f64> {
    let l = system.box_len();
    let pos = system.positions();
    let q = system.charges();
    let k0 = 2.0 * PI / l;
    let km = kmax as i64;
    let modes: Vec<(f64, f64, f64)> = (-km..=km)
        .flat_map(|a| (-km..=km).map(move |b| (a, b)))
        .filter(|&m| m != (0, 0))
        .map(|(a, b)| {
            let (kx, ky) = (k0 * a as f64, k0 * b as f64);
            (kx, ky, (kx * kx + ky * ky).sqrt())
        })
        .collect();
    let sqrt_pi = PI.sqrt();
    (0..system.len())
        .into_par_iter()
        .map(|m| {
            let mut nonzero = Compensated::new();
            let mut zero = Compensated::new();
            let xm = pos[m];
            for (n, xn) in pos.iter().enumerate() {
                let (dx, dy, z) = (xm[0] - xn[0], xm[1] - xn[1], xm[2] - xn[2]);
                for &(kx, ky, k) in &modes {
                    let u = k / (2.0 * xi);
                    let bracket = exp_erfc(k * z, u + xi * z) + exp_erfc(-k * z, u - xi * z);
                    nonzero.add(q[n] * (kx * dx + ky * dy).cos() / k * bracket);
                }
                zero.add(q[n] * ((-xi * xi * z * z).exp() / xi + sqrt_pi * z * erf(xi * z)));
            }
            PI / (l * l) * nonzero.value() - 2.0 * sqrt_pi / (l * l) * zero.value()
        })
        .collect()
}

/// Singly periodic (x) Fourier sum: incomplete-Bessel nonzero modes with
/// `|n| <= kmax` plus the zero-mode term over `n != m`.
pub fn kspace_direct_1p(system: &ParticleSystem, xi: f64, kmax: usize) -> Result<Vec<f64>> {
    let l = system.box_len();
    let pos = system.positions();
    let q = system.charges();
    let n = system.len();
    let k0 = 2.0 * PI / l;
    let xi2 = xi * xi;
    // pair table: sum over k > 0 of 2 cos(k x) K0(k^2/4xi^2, rho^2 xi^2), and Ein(xi^2 rho^2)
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let values: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (xa, xb) = (pos[a], pos[b]);
            let dx = xa[0] - xb[0];
            let rho2 = (xa[1] - xb[1]).powi(2) + (xa[2] - xb[2]).powi(2);
            let mut acc = Compensated::new();
            for j in 1..=kmax {
                let k = k0 * j as f64;
                acc.add(2.0 * (k * dx).cos() * incomplete_bessel_k0(k * k / (4.0 * xi2), rho2 * xi2)?);
            }
            let zero = if a == b {
                0.0
            } else if rho2 == 0.0 {
                return Err(Error::SingularConfiguration(a, b));
            } else {
                ein(xi2 * rho2)
            };
            Ok((acc.value(), zero))
        })
        .collect();
    let mut table = vec![(0.0, 0.0); n * n];
    for (&(a, b), v) in pairs.iter().zip(values) {
        let v = v?;
        table[a * n + b] = v;
        table[b * n + a] = v;
    }
    Ok((0..n)
        .map(|m| {
            let mut acc = Compensated::new();
            for j in 0..n {
                let (nonzero, zero) = table[m * n + j];
                acc.add(q[j] * (nonzero - zero));
            }
            acc.value() / l
        })
        .collect())
}

/// Free-space Fourier part: `sum_{n != m} q_n erf(xi r)/r + q_m 2 xi / sqrt(pi)`.
pub fn kspace_direct_0p(system: &ParticleSystem, xi: f64) -> Result<Vec<f64>> {
    let pos = system.positions();
    let q = system.charges();
    (0..system.len())
        .into_par_iter()
        .map(|m| {
            let mut acc = Compensated::new();
            acc.add(q[m] * 2.0 * xi / PI.sqrt());
            for (n, xn) in pos.iter().enumerate() {
                if n == m {
                    continue;
                }
                let r = dist(&pos[m], xn);
                if r == 0.0 {
                    return Err(Error::SingularConfiguration(m.min(n), m.max(n)));
                }
                acc.add(q[n] * erf(xi * r) / r);
            }
            Ok(acc.value())
        })
        .collect()
}

/// Fourier part for any periodicity with the default reference settings.
pub fn kspace_direct(system: &ParticleSystem, xi: f64, periodicity: Periodicity, kmax: usize) -> Result<Vec<f64>> {
    match periodicity.periodic_dims() {
        3 => Ok(kspace_direct_3p(system, xi, kmax)),
        2 => Ok(kspace_direct_2p(system, xi, kmax)),
        1 => kspace_direct_1p(system, xi, kmax),
        _ => kspace_direct_0p(system, xi),
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `sum' q_n / |x_m - x_n + p L|` over images `|p_i| <= layers` on the periodic axes.
pub fn direct_image_sum(system: &ParticleSystem, periodicity: Periodicity, layers: usize) -> Vec<f64> {
    let l = system.box_len();
    let pos = system.positions();
    let q = system.charges();
    let lay = layers as i64;
    let range = |a: usize| if periodicity.is_periodic(a) { -lay..=lay } else { 0..=0 };
    let mut shifts = Vec::new();
    for i in range(0) {
        for j in range(1) {
            for k in range(2) {
                shifts.push([i as f64 * l, j as f64 * l, k as f64 * l]);
            }
        }
    }
    (0..system.len())
        .into_par_iter()
        .map(|m| {
            let mut acc = Compensated::new();
            for (n, xn) in pos.iter().enumerate() {
                for s in &shifts {
                    let r = dist(&pos[m], &[xn[0] + s[0], xn[1] + s[1], xn[2] + s[2]]);
                    if r > 0.0 {
                        acc.add(q[n] / r);
                    }
                }
            }
            acc.value()
        })
        .collect()
}

/// Doubly periodic Fourier sum with the integral over `kappa_z` done by
/// adaptive quadrature instead of in closed form.
pub fn kspace_quadrature_2p(system: &ParticleSystem, xi: f64, kmax: usize, tol: f64) -> Vec<f64> {
    let l = system.box_len();
    let pos = system.positions();
    let q = system.charges();
    let k0 = 2.0 * PI / l;
    let km = kmax as i64;
    let kappa_max = 2.0 * xi * (-(tol * 1e-3).ln()).sqrt();
    let inv4xi2 = 1.0 / (4.0 * xi * xi);
    (0..system.len())
        .map(|m| {
            let xm = pos[m];
            let mut acc = Compensated::new();
            for a in -km..=km {
                for b in -km..=km {
                    let (kx, ky) = (k0 * a as f64, k0 * b as f64);
                    let k2 = kx * kx + ky * ky;
                    let f = |kappa: f64| {
                        let mut s = 0.0;
                        for (n, xn) in pos.iter().enumerate() {
                            let z = xm[2] - xn[2];
                            let c = (kx * (xm[0] - xn[0]) + ky * (xm[1] - xn[1])).cos();
                            if k2 > 0.0 {
                                s += q[n] * c * (kappa * z).cos() / (k2 + kappa * kappa);
                            } else {
                                // neutrality removes the 1/kappa^2 singularity
                                s += q[n] * cosm1_over_sq(kappa, z);
                            }
                        }
                        s * (-(k2 + kappa * kappa) * inv4xi2).exp()
                    };
                    acc.add(integrate(f, 0.0, kappa_max, tol * 1e-4, tol * 1e-2) / PI);
                }
            }
            4.0 * PI / (l * l) * acc.value()
        })
        .collect()
}

/// `(cos(kappa z) - 1)/kappa^2`, stable near `kappa = 0`.
fn cosm1_over_sq(kappa: f64, z: f64) -> f64 {
    let x = kappa * z;
    if x.abs() < 1e-3 {
        let x2 = x * x;
        -z * z * (0.5 - x2 / 24.0 + x2 * x2 / 720.0)
    } else {
        -2.0 * (0.5 * x).sin().powi(2) / (kappa * kappa)
    }
}

/// Singly periodic Fourier sum with the transverse integral done in polar
/// coordinates by adaptive quadrature.
pub fn kspace_quadrature_1p(system: &ParticleSystem, xi: f64, kmax: usize, tol: f64) -> Vec<f64> {
    let l = system.box_len();
    let pos = system.positions();
    let q = system.charges();
    let k0 = 2.0 * PI / l;
    let km = kmax as i64;
    let kappa_max = 2.0 * xi * (-(tol * 1e-3).ln()).sqrt();
    let inv4xi2 = 1.0 / (4.0 * xi * xi);
    (0..system.len())
        .map(|m| {
            let xm = pos[m];
            let mut acc = Compensated::new();
            for a in -km..=km {
                let kx = k0 * a as f64;
                let f = |kappa: f64| {
                    let mut s = 0.0;
                    for (n, xn) in pos.iter().enumerate() {
                        let rho = ((xm[1] - xn[1]).powi(2) + (xm[2] - xn[2]).powi(2)).sqrt();
                        if a != 0 {
                            let c = (kx * (xm[0] - xn[0])).cos();
                            s += q[n] * c * bessel_j0(kappa * rho) * kappa / (kx * kx + kappa * kappa);
                        } else if kappa > 0.0 {
                            s += q[n] * (bessel_j0(kappa * rho) - 1.0) / kappa;
                        }
                    }
                    s * (-(kx * kx + kappa * kappa) * inv4xi2).exp()
                };
                acc.add(integrate(f, 0.0, kappa_max, tol * 1e-4, tol * 1e-2) / (2.0 * PI));
            }
            4.0 * PI / l * acc.value()
        })
        .collect()
}
