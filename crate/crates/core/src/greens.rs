//! Fourier transforms of the Laplace Green's function, truncated at radius `R`
//! in the free directions.
//!
//! Values follow the `1/|k|^2` normalization; the `4 pi` lives in the scaling
//! step. Periodic wavenumber components come first, as in [`Periodicity`].

use crate::special::{bessel_j0, bessel_j1};
use crate::system::Periodicity;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreensSpec {
    pub periodicity: Periodicity,
    /// Truncation radius; unused for `D = 3`.
    pub r: f64,
}

/// Below this value of `R |kappa|` the closed forms are replaced by series.
const SERIES_BELOW: f64 = 0.1;
const SERIES_TERMS: usize = 8;

impl GreensSpec {
    pub fn new(periodicity: Periodicity, r: f64) -> Self {
        Self { periodicity, r }
    }

    /// [`Self::eval_split`] taking `|kappa|^2`.
    #[inline]
    pub fn eval_split_sq(&self, kper_sq: f64, kappa_sq: f64) -> f64 {
        if self.periodicity == Periodicity::TRIPLY || kper_sq > 0.0 {
            let k2 = kper_sq + kappa_sq;
            return if k2 > 0.0 { 1.0 / k2 } else { 0.0 };
        }
        truncated(self.periodicity, self.r, kappa_sq.sqrt())
    }

    /// `G^(|k_periodic|^2, |kappa|)`, the form used on grids.
    #[inline]
    pub fn eval_split(&self, kper_sq: f64, kappa: f64) -> f64 {
        self.eval_split_sq(kper_sq, kappa * kappa)
    }
}

/// Green's function at wavenumber `k`, split into periodic and free parts by
/// the axis convention of the periodicity.
pub fn greens_hat(k: [f64; 3], spec: &GreensSpec) -> f64 {
    let d = spec.periodicity.periodic_dims();
    let kper_sq: f64 = k[..d].iter().map(|v| v * v).sum();
    let kappa_sq: f64 = k[d..].iter().map(|v| v * v).sum();
    spec.eval_split(kper_sq, kappa_sq.sqrt())
}

/// Zero-mode kernel of the free directions: `kappa = |kappa| >= 0`.
fn truncated(periodicity: Periodicity, r: f64, kappa: f64) -> f64 {
    let x = r * kappa;
    let r2 = r * r;
    match periodicity.free_dims() {
        // truncated -|z|/2
        1 => {
            if x < SERIES_BELOW {
                // -(x sin x + cos x - 1)/x^2 = -sum_j (-1)^(j-1) (2j-1) x^(2j-2) / (2j)!
                let x2 = x * x;
                let mut term = 1.0; // x^(2j-2) / (2j)! with sign, j = 1
                let mut fact = 2.0;
                let mut sum = 0.0;
                for j in 1..=SERIES_TERMS {
                    sum += term / fact * (2 * j - 1) as f64;
                    term *= -x2;
                    fact *= ((2 * j + 1) * (2 * j + 2)) as f64;
                }
                -r2 * sum
            } else {
                -(x * x.sin() + x.cos() - 1.0) / (kappa * kappa)
            }
        }
        // truncated -log(r)/(2 pi)
        2 => {
            let log_r = r.ln();
            if x < SERIES_BELOW {
                // (1 - J0(x))/x^2 and J1(x)/x as power series in (x/2)^2
                let y = 0.25 * x * x;
                let mut a = 0.0;
                let mut b = 0.0;
                let mut t = 1.0; // (-y)^k / (k! (k+1)!)
                for k in 0..SERIES_TERMS {
                    b += 0.5 * t;
                    a += 0.25 * t / (k + 1) as f64;
                    t *= -y / ((k + 1) * (k + 2)) as f64;
                }
                r2 * (a - log_r * b)
            } else {
                (1.0 - bessel_j0(x)) / (kappa * kappa) - r * log_r * bessel_j1(x) / kappa
            }
        }
        // truncated 1/(4 pi r)
        3 => {
            if x < SERIES_BELOW {
                // (1 - cos x)/x^2 = sum_j (-1)^(j-1) x^(2j-2) / (2j)!
                let x2 = x * x;
                let mut term = 0.5;
                let mut sum = 0.0;
                for j in 1..=SERIES_TERMS {
                    sum += term;
                    term *= -x2 / ((2 * j + 1) * (2 * j + 2)) as f64;
                }
                r2 * sum
            } else {
                2.0 * ((0.5 * x).sin() / kappa).powi(2)
            }
        }
        _ => unreachable!("no free directions"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec(d: u8, r: f64) -> GreensSpec {
        GreensSpec::new(Periodicity::new(d).unwrap(), r)
    }

    #[test]
    fn zero_mode_values() {
        assert_eq!(greens_hat([0.0; 3], &spec(3, 1.0)), 0.0);
        assert_eq!(greens_hat([0.0; 3], &spec(0, 1.7)), 0.5 * 1.7 * 1.7);
        assert_eq!(greens_hat([0.0; 3], &spec(2, 1.7)), -0.5 * 1.7 * 1.7);
        let r: f64 = 1.7;
        let want = 0.25 * r * r * (1.0 - 2.0 * r.ln());
        assert!((greens_hat([0.0; 3], &spec(1, r)) - want).abs() < 1e-15);
    }

    #[test]
    fn periodic_modes_are_plain_inverse_squares() {
        for d in 1..=3 {
            let v = greens_hat([2.0, 1.0, 3.0], &spec(d, 2.0));
            assert!((v - 1.0 / 14.0).abs() < 1e-16);
        }
    }

    #[test]
    fn free_space_zero_at_first_node() {
        let r = 2.5;
        let v = greens_hat([2.0 * PI / r, 0.0, 0.0], &spec(0, r));
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn slab_limit_near_zero() {
        let r = 1.3;
        let v = greens_hat([0.0, 0.0, 1e-4 / r], &spec(2, r));
        // magnitude R^2/2 (the kernel is the truncated -|z|/2)
        assert!((v.abs() - 0.5 * r * r).abs() < 1e-6 * 0.5 * r * r);
    }

    #[test]
    fn series_and_closed_forms_agree_at_switch() {
        for d in 0..3u8 {
            let s = spec(d, 1.9);
            let k = SERIES_BELOW / s.r;
            let lo = truncated(s.periodicity, s.r, k * (1.0 - 1e-9));
            let hi = truncated(s.periodicity, s.r, k * (1.0 + 1e-9));
            assert!((lo - hi).abs() < 1e-9 * lo.abs(), "D={d}: {lo} {hi}");
        }
    }

    #[test]
    fn continuous_at_zero() {
        for d in 0..3u8 {
            let s = spec(d, 2.2);
            let z = greens_hat([0.0; 3], &s);
            let mut k = [0.0; 3];
            k[2] = 1e-6 / s.r;
            assert!((greens_hat(k, &s) - z).abs() < 1e-9 * z.abs());
        }
    }

    #[test]
    fn line_kernel_matches_quadrature() {
        // G^(kappa) = -int_0^R r log r J0(kappa r) dr
        let r = 1.0;
        let kappa = 3.0;
        let num = -integrate(|t: f64| if t > 0.0 { t * t.ln() * bessel_j0(kappa * t) } else { 0.0 }, 0.0, r, 1e-16, 1e-14);
        let v = greens_hat([0.0, kappa, 0.0], &spec(1, r));
        assert!((num - v).abs() < 1e-12, "{num} vs {v}");
        let r = 2.0;
        let num = -integrate(|t: f64| if t > 0.0 { t * t.ln() * bessel_j0(kappa * t) } else { 0.0 }, 0.0, r, 1e-16, 1e-14);
        let v = greens_hat([0.0, 0.0, kappa], &spec(1, r));
        assert!((num - v).abs() < 1e-12);
    }

    #[test]
    fn slab_kernel_matches_quadrature() {
        let r = 1.5;
        for &kappa in &[0.3, 2.0, 11.0] {
            let num = integrate(|z: f64| -0.5 * z.abs() * (kappa * z).cos(), -r, r, 1e-16, 1e-14);
            let v = greens_hat([0.0, 0.0, kappa], &spec(2, r));
            assert!((num - v).abs() < 1e-12);
        }
    }

    #[test]
    fn free_space_kernel_reproduces_screened_coulomb() {
        // (1/(2 pi^2 r)) int_0^inf G^(k) e^{-k^2/4xi^2} k sin(kr) dk = erf(xi r)/(4 pi r) for r + 6/xi < R
        let r_trunc = 4.0;
        let xi = 5.0;
        let s = spec(0, r_trunc);
        for &r in &[0.4, 1.0, 2.5] {
            let f = |k: f64| greens_hat([k, 0.0, 0.0], &s) * (-k * k / (4.0 * xi * xi)).exp() * k * (k * r).sin();
            let kmax = 2.0 * xi * 40f64.sqrt();
            let v = integrate(f, 0.0, kmax, 1e-15, 1e-13) / (2.0 * PI * PI * r);
            let want = libm::erf(xi * r) / (4.0 * PI * r);
            assert!((v - want).abs() < 1e-6 * want, "r={r}: {v} vs {want}");
        }
    }

    proptest! {
        #[test]
        fn radial_in_free_block(a in -20.0f64..20.0, b in -20.0f64..20.0, c in -20.0f64..20.0) {
            let n = (a * a + b * b + c * c).sqrt();
            let s0 = spec(0, 1.8);
            let v = greens_hat([a, b, c], &s0);
            let w = greens_hat([0.0, 0.0, n], &s0);
            prop_assert!((v - w).abs() <= 1e-13 * w.abs().max(1e-3));
            let s1 = spec(1, 1.8);
            let nb = (b * b + c * c).sqrt();
            let v = greens_hat([0.0, b, c], &s1);
            let w = greens_hat([0.0, nb, 0.0], &s1);
            prop_assert!((v - w).abs() <= 1e-13 * w.abs().max(1e-3));
        }
    }
}
