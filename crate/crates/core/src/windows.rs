//! Gridding windows and their Fourier transforms.
//!
//! All windows are one-dimensional, even and supported on `[-w, w]` with
//! `w = P h / 2`; the 3-D window is the tensor product over the axes. The
//! Barnett–Magland window has no closed-form transform, so it is tabulated
//! numerically on exactly the modes a run needs and cached.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fft::{self, mode_number, Direction};
use crate::special::bessel_i0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Gaussian,
    KaiserBessel,
    BarnettMagland,
}

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Gaussian => "gaussian",
            WindowKind::KaiserBessel => "kb",
            WindowKind::BarnettMagland => "bm",
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(WindowKind::Gaussian),
            "kb" | "kaiser" | "kaiser-bessel" => Ok(WindowKind::KaiserBessel),
            "bm" | "barnett-magland" => Ok(WindowKind::BarnettMagland),
            other => invalid(format!("unknown window `{other}`")),
        }
    }
}

/// Default shape parameter: `m = sqrt(pi P)` for the Gaussian, `beta = 2.5 P`
/// for the Barnett–Magland and Kaiser–Bessel windows.
pub fn default_shape(kind: WindowKind, p: usize) -> f64 {
    match kind {
        WindowKind::Gaussian => (PI * p as f64).sqrt(),
        WindowKind::KaiserBessel | WindowKind::BarnettMagland => 2.5 * p as f64,
    }
}

/// A window of a given kind with `P` support points on a grid of spacing `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub p: usize,
    pub h: f64,
    /// Half-width `w = P h / 2`.
    pub w: f64,
    /// `m` for the Gaussian, `beta` otherwise.
    pub shape: f64,
    /// Gaussian only: `eta = (2 w xi / m)^2`. Zero for the other windows.
    pub eta: f64,
    xi: f64,
}

impl WindowSpec {
    pub fn new(kind: WindowKind, p: usize, h: f64, shape: f64, xi: f64) -> Result<Self> {
        if p == 0 {
            return invalid("window support P must be at least 1");
        }
        if !(h > 0.0) {
            return invalid(format!("grid spacing must be positive, got {h}"));
        }
        let shape_ok = match kind {
            WindowKind::Gaussian => shape > 0.0,
            _ => shape >= 0.0,
        };
        if !shape_ok || !shape.is_finite() {
            return invalid(format!("bad shape parameter {shape} for {kind} window"));
        }
        if kind == WindowKind::Gaussian && !(xi > 0.0) {
            return invalid("Gaussian window needs a positive splitting parameter");
        }
        let w = 0.5 * p as f64 * h;
        let eta = match kind {
            WindowKind::Gaussian => (2.0 * w * xi / shape).powi(2),
            _ => 0.0,
        };
        Ok(Self {
            kind,
            p,
            h,
            w,
            shape,
            eta,
            xi,
        })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Window value at offset `x`; zero for `|x| > w`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            WindowKind::Gaussian => eval_gaussian(x, self),
            WindowKind::KaiserBessel => eval_kaiser(x, self),
            WindowKind::BarnettMagland => eval_bm(x, self),
        }
    }

    /// Closed-form Fourier transform, where one exists.
    pub fn fourier(&self, k: f64) -> Option<f64> {
        match self.kind {
            WindowKind::Gaussian => Some(gaussian_fourier(k, self)),
            WindowKind::KaiserBessel => Some(kaiser_fourier(k, self)),
            WindowKind::BarnettMagland => None,
        }
    }

    /// Fourier transform at the `n` bins of a DFT with sample spacing `self.h`,
    /// i.e. at `k_j = 2 pi mode(j) / (n h)`.
    pub fn transform_on(&self, n: usize) -> Arc<TabulatedTransform> {
        match self.kind {
            WindowKind::BarnettMagland => bm_fourier_precompute(self, n),
            _ => {
                let period = n as f64 * self.h;
                let values = (0..n)
                    .map(|j| {
                        let k = 2.0 * PI * mode_number(j, n) as f64 / period;
                        self.fourier(k).expect("closed form")
                    })
                    .collect();
                Arc::new(TabulatedTransform {
                    n,
                    h: self.h,
                    values,
                })
            }
        }
    }
}

pub fn eval_gaussian(x: f64, spec: &WindowSpec) -> f64 {
    if x.abs() > spec.w {
        return 0.0;
    }
    let xi2 = spec.xi * spec.xi;
    (2.0 * xi2 / (PI * spec.eta)).sqrt() * (-2.0 * xi2 * x * x / spec.eta).exp()
}

pub fn gaussian_fourier(k: f64, spec: &WindowSpec) -> f64 {
    (-spec.eta * k * k / (8.0 * spec.xi * spec.xi)).exp()
}

pub fn eval_kaiser(x: f64, spec: &WindowSpec) -> f64 {
    if x.abs() > spec.w {
        return 0.0;
    }
    let t = x / spec.w;
    let arg = (1.0 - t * t).max(0.0).sqrt();
    bessel_i0(spec.shape * arg) / bessel_i0(spec.shape)
}

/// Transform of the Kaiser–Bessel window over `[-w, w]`, including the `2w`
/// factor from the physical support; `sin` continuation above `k w = beta`.
pub fn kaiser_fourier(k: f64, spec: &WindowSpec) -> f64 {
    let beta = spec.shape;
    let t = beta * beta - (k * spec.w).powi(2);
    let ratio = if t.abs() < 1e-6 {
        // sinh(sqrt t)/sqrt t, valid for either sign of t
        1.0 + t / 6.0 + t * t / 120.0
    } else if t > 0.0 {
        let r = t.sqrt();
        r.sinh() / r
    } else {
        let r = (-t).sqrt();
        r.sin() / r
    };
    2.0 * spec.w * ratio / bessel_i0(beta)
}

pub fn eval_bm(x: f64, spec: &WindowSpec) -> f64 {
    if x.abs() > spec.w {
        return 0.0;
    }
    let t = x / spec.w;
    let arg = (1.0 - t * t).max(0.0).sqrt();
    (spec.shape * (arg - 1.0)).exp()
}

/// Cardinal B-spline of order `p` on `[0, p]`.
pub fn eval_bspline(x: f64, p: usize) -> Result<f64> {
    if p < 2 {
        return invalid(format!("B-spline order must be at least 2, got {p}"));
    }
    Ok(bspline(x, p))
}

fn bspline(x: f64, p: usize) -> f64 {
    if p == 2 {
        return if (0.0..=2.0).contains(&x) {
            1.0 - (x - 1.0).abs()
        } else {
            0.0
        };
    }
    let q = (p - 1) as f64;
    x / q * bspline(x, p - 1) + (p as f64 - x) / q * bspline(x - 1.0, p - 1)
}

/// Fourier values of a 1-D window at the bins of one DFT length.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedTransform {
    /// DFT length the table belongs to.
    pub n: usize,
    /// Sample spacing; the period is `n h`.
    pub h: f64,
    /// `values[j]` is the transform at `2 pi mode(j) / (n h)`.
    pub values: Vec<f64>,
}

impl TabulatedTransform {
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI * mode_number(j, self.n) as f64 / (self.n as f64 * self.h)
    }
}

/// Relative change between successive sampling densities accepted as converged.
const BM_TABLE_TOL: f64 = 1e-15;
/// Larger residual changes mean the table cannot be trusted.
const BM_TABLE_FAIL: f64 = 1e-6;
const BM_MAX_SAMPLES: usize = 1 << 22;

/// Trapezoidal transform of the window sampled `r` times per grid cell over
/// one period `n h`, read off at the `n` coarse bins. `r` must be even so
/// that `+-w` fall on fine nodes; those endpoints carry weight 1/2.
pub fn sampled_transform(spec: &WindowSpec, n: usize, r: usize) -> Vec<f64> {
    assert!(r % 2 == 0, "oversampling factor must be even");
    assert!(n >= spec.p, "period shorter than the window support");
    let nf = n * r;
    let delta = spec.h / r as f64;
    let edge = (spec.p * r / 2) as i64;
    let mut buf: Vec<Complex64> = (0..nf)
        .map(|i| {
            let m = mode_number(i, nf);
            let x = m as f64 * delta;
            let v = match m.abs().cmp(&edge) {
                std::cmp::Ordering::Less => spec.eval(x),
                std::cmp::Ordering::Equal => 0.5 * spec.eval(x.signum() * spec.w),
                std::cmp::Ordering::Greater => 0.0,
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    // P == n puts both endpoints on the same wrapped node.
    if 2 * edge as usize == nf {
        let end = spec.eval(spec.w);
        buf[nf / 2] = Complex64::new(end, 0.0);
    }
    fft::transform_1d(&mut buf, Direction::Forward);
    let peak = buf[0].re.abs().max(f64::MIN_POSITIVE);
    (0..n)
        .map(|j| {
            let m = mode_number(j, n);
            let v = buf[m.rem_euclid(nf as i64) as usize];
            debug_assert!(v.im.abs() <= 1e-12 * peak, "window transform not real");
            v.re * delta
        })
        .collect()
}

type BmKey = (usize, u64, u64, usize);

/// Numerically tabulated Barnett–Magland transform on the bins of a length-`n`
/// DFT, refined by doubling the sampling density until it stops changing.
/// Results are cached per `(P, beta, h, n)`.
pub fn bm_fourier_precompute(spec: &WindowSpec, n: usize) -> Arc<TabulatedTransform> {
    static CACHE: OnceLock<Mutex<HashMap<BmKey, Arc<TabulatedTransform>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (spec.p, spec.shape.to_bits(), spec.h.to_bits(), n);
    if let Some(t) = cache.lock().expect("window cache poisoned").get(&key) {
        return t.clone();
    }

    let mut r = 8;
    let mut prev = sampled_transform(spec, n, r);
    let values = loop {
        let next = sampled_transform(spec, n, 2 * r);
        let peak = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let change = prev
            .iter()
            .zip(&next)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
            / peak;
        r *= 2;
        if change <= BM_TABLE_TOL {
            break next;
        }
        if n * 2 * r > BM_MAX_SAMPLES {
            assert!(
                change <= BM_TABLE_FAIL,
                "window transform unresolved (relative change {change:e}) for P={}, beta={}",
                spec.p,
                spec.shape
            );
            log::debug!("window table stopped at r={r} with relative change {change:e}");
            break next;
        }
        prev = next;
    };
    let table = Arc::new(TabulatedTransform {
        n,
        h: spec.h,
        values,
    });
    cache
        .lock()
        .expect("window cache poisoned")
        .insert(key, table.clone());
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate;

    fn spec(kind: WindowKind, p: usize, shape: f64) -> WindowSpec {
        WindowSpec::new(kind, p, 0.1, shape, 6.3).unwrap()
    }

    #[test]
    fn gaussian_values() {
        let s = spec(WindowKind::Gaussian, 16, default_shape(WindowKind::Gaussian, 16));
        let xi2 = 6.3f64 * 6.3;
        let peak = (2.0 * xi2 / (PI * s.eta)).sqrt();
        assert_eq!(eval_gaussian(0.0, &s), peak);
        assert_eq!(eval_gaussian(s.w * 1.0001, &s), 0.0);
        let ratio = eval_gaussian(s.w, &s) / peak;
        let m2 = PI * 16.0;
        assert!((ratio - (-m2 / 2.0).exp()).abs() < 1e-15 * ratio.max(1e-300) * 1e3);
        assert!((s.eta - (2.0 * s.w * 6.3 / s.shape).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_transform() {
        let s = spec(WindowKind::Gaussian, 8, 5.0);
        assert_eq!(gaussian_fourier(0.0, &s), 1.0);
        assert_eq!(gaussian_fourier(3.0, &s), gaussian_fourier(-3.0, &s));
        let k = 2.0 * 6.3 * (2.0 / s.eta).sqrt();
        assert!((gaussian_fourier(k, &s) - (-1.0f64).exp()).abs() < 1e-15);
        // closed form equals the integral of the untruncated window
        let num = integrate(
            |x| {
                let xi2 = 6.3f64 * 6.3;
                (2.0 * xi2 / (PI * s.eta)).sqrt() * (-2.0 * xi2 * x * x / s.eta).exp() * (2.0 * x).cos()
            },
            -2.0,
            2.0,
            1e-16,
            1e-14,
        );
        assert!((num - gaussian_fourier(2.0, &s)).abs() < 1e-13);
    }

    #[test]
    fn bspline_values() {
        assert_eq!(eval_bspline(1.0, 2).unwrap(), 1.0);
        assert_eq!(eval_bspline(0.0, 2).unwrap(), 0.0);
        assert_eq!(eval_bspline(2.0, 2).unwrap(), 0.0);
        assert!(eval_bspline(0.5, 1).is_err());
        for p in [4usize, 6] {
            let sum: f64 = (-10..=10)
                .map(|j| eval_bspline(0.3 - j as f64, p).unwrap())
                .sum();
            assert!((sum - 1.0).abs() < 1e-14, "p={p}: {sum}");
        }
    }

    #[test]
    fn kaiser_values() {
        let beta = 12.0;
        let s = spec(WindowKind::KaiserBessel, 6, beta);
        assert_eq!(eval_kaiser(0.0, &s), 1.0);
        assert!((eval_kaiser(s.w, &s) - 1.0 / bessel_i0(beta)).abs() < 1e-18);
        assert!((eval_kaiser(-s.w, &s) - 1.0 / bessel_i0(beta)).abs() < 1e-18);
        let k0 = 2.0 * s.w * beta.sinh() / (beta * bessel_i0(beta));
        assert!((kaiser_fourier(0.0, &s) - k0).abs() < 1e-14 * k0);
    }

    #[test]
    fn kaiser_transform_matches_quadrature_on_both_branches() {
        let beta = 9.0;
        let s = spec(WindowKind::KaiserBessel, 6, beta);
        for &kw in &[0.0, 4.0, 8.9, 9.5, 20.0] {
            let k = kw / s.w;
            let num = integrate(|x| eval_kaiser(x, &s) * (k * x).cos(), -s.w, s.w, 1e-17, 1e-14);
            let got = kaiser_fourier(k, &s);
            assert!((num - got).abs() < 1e-12 * kaiser_fourier(0.0, &s), "kw={kw}");
        }
    }

    #[test]
    fn kaiser_transform_is_continuous_at_cutoff() {
        let beta = 15.0;
        let s = spec(WindowKind::KaiserBessel, 6, beta);
        let below = kaiser_fourier(beta * (1.0 - 1e-10) / s.w, &s);
        let above = kaiser_fourier(beta * (1.0 + 1e-10) / s.w, &s);
        assert!((below - above).abs() < 1e-7 * below.abs());
    }

    #[test]
    fn bm_values() {
        let s = spec(WindowKind::BarnettMagland, 10, 25.0);
        assert_eq!(eval_bm(0.0, &s), 1.0);
        assert!((eval_bm(s.w, &s) - (-25.0f64).exp()).abs() < 1e-25);
        assert_eq!(eval_bm(1.01 * s.w, &s), 0.0);
        // w = 5 with beta = 2 sqrt(2 pi) w is the sharpest of the family
        let wide = WindowSpec::new(WindowKind::BarnettMagland, 10, 1.0, 2.0 * (2.0 * PI).sqrt() * 5.0, 1.0).unwrap();
        assert!((wide.shape - 25.066).abs() < 1e-3);
        for beta in [2.0, 5.0, 10.0, 15.0] {
            let other = WindowSpec::new(WindowKind::BarnettMagland, 10, 1.0, beta, 1.0).unwrap();
            assert!(eval_bm(2.5, &other) > eval_bm(2.5, &wide));
        }
    }

    #[test]
    fn windows_are_even_and_compact() {
        for kind in [WindowKind::Gaussian, WindowKind::KaiserBessel, WindowKind::BarnettMagland] {
            let s = spec(kind, 7, default_shape(kind, 7));
            for i in 0..50 {
                let x = i as f64 * 0.013;
                assert_eq!(s.eval(x), s.eval(-x));
            }
            assert_eq!(s.eval(s.w + 1e-12), 0.0);
            assert_eq!(s.eval(-s.w - 1e-12), 0.0);
        }
    }

    #[test]
    fn default_shapes() {
        assert_eq!(default_shape(WindowKind::BarnettMagland, 10), 25.0);
        assert_eq!(default_shape(WindowKind::BarnettMagland, 4), 10.0);
        assert!((default_shape(WindowKind::Gaussian, 16) - 7.0898154036).abs() < 1e-9);
    }

    #[test]
    fn dc_bin_is_the_weighted_sample_sum() {
        let s = spec(WindowKind::BarnettMagland, 6, 15.0);
        let r = 4;
        let t = sampled_transform(&s, 12, r);
        let delta = s.h / r as f64;
        let edge = (s.p * r / 2) as i64;
        let direct: f64 = (-edge..=edge)
            .map(|i| {
                let wgt = if i.abs() == edge { 0.5 } else { 1.0 };
                wgt * s.eval(i as f64 * delta)
            })
            .sum::<f64>()
            * delta;
        assert!((t[0] - direct).abs() < 1e-15 * direct);
    }

    #[test]
    fn box_window_gives_a_sinc() {
        let s = spec(WindowKind::BarnettMagland, 4, 0.0);
        let n = 16;
        let r = 64;
        let t = sampled_transform(&s, n, r);
        // trapezoid sum of a box with half-weight ends: delta sin(k w) / tan(k delta / 2)
        let delta = s.h / r as f64;
        for (j, v) in t.iter().enumerate() {
            let k = 2.0 * PI * mode_number(j, n) as f64 / (n as f64 * s.h);
            let want = if k == 0.0 { 2.0 * s.w } else { delta * (k * s.w).sin() / (0.5 * k * delta).tan() };
            assert!((v - want).abs() < 1e-12, "bin {j}: {v} vs {want}");
        }
    }

    #[test]
    fn bm_table_self_converges() {
        let s = WindowSpec::new(WindowKind::BarnettMagland, 16, 1.0 / 28.0, 40.0, 6.3).unwrap();
        let n = 44;
        let a = sampled_transform(&s, n, 16);
        let b = sampled_transform(&s, n, 32);
        let peak = b[0];
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14 * peak);
        }
        let table = bm_fourier_precompute(&s, n);
        for (x, y) in table.values.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14 * peak);
        }
    }

    #[test]
    fn bm_table_matches_quadrature_and_is_even() {
        let s = WindowSpec::new(WindowKind::BarnettMagland, 8, 0.05, 20.0, 6.3).unwrap();
        let n = 30;
        let table = bm_fourier_precompute(&s, n);
        for j in 0..n {
            let k = table.wavenumber(j);
            // x = w sin(t) removes the square-root endpoint behaviour
            let num = integrate(
                |t| eval_bm(s.w * t.sin(), &s) * (k * s.w * t.sin()).cos() * s.w * t.cos(),
                -PI / 2.0,
                PI / 2.0,
                1e-18,
                1e-15,
            );
            assert!((num - table.values[j]).abs() < 1e-13 * table.values[0], "bin {j}");
            let mirror = (n - j) % n;
            if mode_number(j, n).abs() < (n / 2) as i64 {
                assert!((table.values[j] - table.values[mirror]).abs() < 1e-15 * table.values[0]);
            }
        }
    }

    #[test]
    fn bm_table_is_cached() {
        let s = WindowSpec::new(WindowKind::BarnettMagland, 8, 0.05, 20.0, 1.0).unwrap();
        let a = bm_fourier_precompute(&s, 24);
        let b = bm_fourier_precompute(&s, 24);
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn parses_window_names() {
        assert_eq!("bm".parse::<WindowKind>().unwrap(), WindowKind::BarnettMagland);
        assert_eq!("Gaussian".parse::<WindowKind>().unwrap(), WindowKind::Gaussian);
        assert_eq!("kb".parse::<WindowKind>().unwrap(), WindowKind::KaiserBessel);
        assert!("spline".parse::<WindowKind>().is_err());
    }
}
