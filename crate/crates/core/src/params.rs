//! Parameter selection from a splitting parameter and a tolerance.
//!
//! The base recipe picks the cutoff and grid size from truncation estimates,
//! the window support from the approximation estimates, and upsampling from
//! the number of free directions. [`refine_upsampling`] then widens the
//! truncation radius and the upsampling so the periodic images introduced by
//! the FFT stay below the tolerance.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::fft::next_fast_even;
use crate::special::{erfc, exp_erfc};
use crate::system::{ParticleSystem, Periodicity};
use crate::windows::{default_shape, WindowKind};

/// Everything the Fourier-space pipeline and real-space sum need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeParams {
    pub xi: f64,
    pub rc: f64,
    /// Grid points per periodic axis.
    pub m: usize,
    /// Window support points per axis.
    pub p: usize,
    pub window: WindowKind,
    /// `m` for the Gaussian window, `beta` otherwise.
    pub shape: f64,
    /// Zero-mode upsampling.
    pub s0: f64,
    /// Upsampling of the low nonzero modes.
    pub s: f64,
    /// Largest upsampled mode index per periodic axis.
    pub n_i: usize,
    /// Truncation radius of the free-space kernel.
    pub r: f64,
    pub eps: f64,
    /// Use the precomputed truncated kernel in free space.
    pub precompute: bool,
}

impl SeParams {
    /// Grid spacing `h = L / M`.
    pub fn h(&self, box_len: f64) -> f64 {
        box_len / self.m as f64
    }

    /// `M~ = M + P`.
    pub fn m_tilde(&self) -> usize {
        self.m + self.p
    }

    /// Padded length of a free axis for upsampling `s`.
    pub fn padded(&self, s: f64) -> usize {
        padded_len(self.m_tilde(), s)
    }

    /// Upsampling actually realized after rounding the padded length.
    pub fn effective(&self, s: f64) -> f64 {
        self.padded(s) as f64 / self.m_tilde() as f64
    }

    pub fn validate(&self, periodicity: Periodicity) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return invalid(format!("xi must be positive, got {}", self.xi));
        }
        if !(self.rc > 0.0) {
            return invalid(format!("cutoff must be positive, got {}", self.rc));
        }
        if self.p == 0 || self.p > self.m {
            return Err(Error::Configuration(format!(
                "window support P={} must satisfy 1 <= P <= M={}",
                self.p, self.m
            )));
        }
        if self.s0 < 1.0 || self.s < 1.0 {
            return invalid(format!("upsampling factors must be >= 1, got s0={} s={}", self.s0, self.s));
        }
        if self.n_i > self.m / 2 {
            return invalid(format!("n_i={} exceeds M/2={}", self.n_i, self.m / 2));
        }
        if periodicity != Periodicity::TRIPLY && !(self.r > 0.0) {
            return invalid("truncation radius must be positive with free directions");
        }
        if self.window == WindowKind::Gaussian && !(self.shape > 0.0) {
            return invalid("Gaussian shape must be positive");
        }
        Ok(())
    }
}

/// `ceil(s M~)` rounded up to an even length with small prime factors.
pub fn padded_len(m_tilde: usize, s: f64) -> usize {
    next_fast_even((s * m_tilde as f64 - 1e-9).ceil() as usize)
}

/// `rc = sqrt(-ln eps) / xi`.
pub fn select_cutoff(xi: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(xi > 0.0) {
        return invalid(format!("xi must be positive, got {xi}"));
    }
    Ok((-eps.ln()).sqrt() / xi)
}

/// `k_inf = ceil(xi L sqrt(-ln eps) / pi)` and `M = 2 k_inf` rounded to a fast size.
pub fn select_kinf(xi: f64, box_len: f64, eps: f64) -> Result<(usize, usize)> {
    check_eps(eps)?;
    let x = xi * box_len * (-eps.ln()).sqrt() / PI;
    let kinf = ((x * (1.0 - 1e-12)).ceil() as usize).max(1);
    Ok((kinf, next_fast_even(2 * kinf)))
}

/// Approximation amplitude `A = sqrt(Q xi L) / L` with `Q = sum q^2`.
pub fn amplitude(charge_square_sum: f64, xi: f64, box_len: f64) -> f64 {
    (charge_square_sum * xi * box_len).sqrt() / box_len
}

/// Smallest `P` with `A e^{-sqrt(2 pi) P} <= eps` (Barnett–Magland, Kaiser–Bessel)
/// or `A e^{-pi P / 2} <= eps` (Gaussian), at least 1.
pub fn select_p(kind: WindowKind, eps: f64, a: f64) -> Result<usize> {
    check_eps(eps)?;
    if !(a > 0.0) {
        return invalid(format!("amplitude must be positive, got {a}"));
    }
    let rate = match kind {
        WindowKind::Gaussian => PI / 2.0,
        WindowKind::BarnettMagland | WindowKind::KaiserBessel => (2.0 * PI).sqrt(),
    };
    let p = ((a / eps).ln() / rate - 1e-12).ceil();
    Ok(p.max(1.0) as usize)
}

/// Upsampling choices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Upsampling {
    pub s0: f64,
    pub s: f64,
    pub n_i: usize,
}

/// Base recipe: `s0 = 1 + sqrt(d)`, `s = max(1, ln(1/eps)/(2 pi))`,
/// `n_i = ceil(M/10)` with mixed periodicity.
pub fn select_upsampling(periodicity: Periodicity, eps: f64, m: usize) -> Result<Upsampling> {
    check_eps(eps)?;
    let d = periodicity.free_dims() as f64;
    Ok(match periodicity.periodic_dims() {
        3 => Upsampling { s0: 1.0, s: 1.0, n_i: m / 2 },
        0 => {
            let s0 = 1.0 + d.sqrt();
            Upsampling { s0, s: s0, n_i: m / 2 }
        }
        _ => Upsampling {
            s0: 1.0 + d.sqrt(),
            s: (-eps.ln() / (2.0 * PI)).max(1.0),
            n_i: m.div_ceil(10).min(m / 2),
        },
    })
}

/// Size of the periodic image of a nonzero mode `k` at separation `d` from
/// the sources, relative to the unit scale of the potential:
/// `e^{-k d} erfc(k/(2 xi) - xi d) / 2`.
pub fn alias_error(k: f64, d: f64, xi: f64) -> f64 {
    0.5 * exp_erfc(-k * d, k / (2.0 * xi) - xi * d)
}

/// Geometry inputs of the refinement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub box_len: f64,
    pub m: usize,
    pub p: usize,
    pub xi: f64,
}

/// Truncation radius and upsampling that keep the periodic images of the
/// padded FFTs below `eps`. Never returns less than the base recipe.
pub fn refine_upsampling(periodicity: Periodicity, eps: f64, g: Geometry) -> Result<(f64, Upsampling)> {
    let base = select_upsampling(periodicity, eps, g.m)?;
    if periodicity == Periodicity::TRIPLY {
        return Ok((0.0, base));
    }
    let l = g.box_len;
    let h = l / g.m as f64;
    let lt = (g.m + g.p) as f64 * h;
    let d = periodicity.free_dims() as f64;
    // screening width of the Gaussian split
    let delta = (-eps.ln()).sqrt() / g.xi;
    let r = (d.sqrt() * lt).max(d.sqrt() * l + delta);
    let s0 = base.s0.max((l + r + delta) / lt);
    if periodicity == Periodicity::FREE {
        return Ok((r, Upsampling { s0, s: s0, n_i: base.n_i }));
    }

    let k1 = 2.0 * PI / l;
    // smallest s whose images of the lowest mode are below eps
    let mut s = base.s;
    while alias_error(k1, s * lt - l, g.xi) > eps && s < 64.0 {
        s += 0.01;
    }
    // unpadded modes see their first image at distance P h
    let mut n_i = base.n_i;
    while n_i < g.m / 2 && alias_error(k1 * (n_i + 1) as f64, g.p as f64 * h, g.xi) > eps {
        n_i += 1;
    }
    Ok((r, Upsampling { s0, s, n_i }))
}

/// Parenthesized approximation estimate: `e^{-pi^2 P^2/(2 m^2)} + erfc(m/sqrt 2)`
/// for the Gaussian, `beta^2 e^{-2 pi P^2 / beta} + erfc(sqrt beta)` otherwise.
pub fn estimate_approx_error(kind: WindowKind, p: usize, shape: f64) -> Result<f64> {
    if !(shape > 0.0) {
        return invalid(format!("shape must be positive, got {shape}"));
    }
    let p = p as f64;
    Ok(match kind {
        WindowKind::Gaussian => (-PI * PI * p * p / (2.0 * shape * shape)).exp() + erfc(shape / 2f64.sqrt()),
        _ => shape * shape * (-2.0 * PI * p * p / shape).exp() + erfc(shape.sqrt()),
    })
}

/// Estimated error contributions of a parameter set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBudget {
    pub eps: f64,
    pub truncation_real: f64,
    pub truncation_fourier: f64,
    pub approximation: f64,
    pub quadrature: f64,
    pub params: SeParams,
}

impl ErrorBudget {
    pub fn new(params: SeParams, periodicity: Periodicity, charge_square_sum: f64, box_len: f64) -> Self {
        let xi = params.xi;
        let kinf = params.m as f64 / 2.0;
        let a = amplitude(charge_square_sum, xi, box_len);
        let rate = match params.window {
            WindowKind::Gaussian => PI / 2.0,
            _ => (2.0 * PI).sqrt(),
        };
        let quadrature = if periodicity == Periodicity::TRIPLY {
            0.0
        } else {
            let l = box_len;
            let h = l / params.m as f64;
            let lt = params.m_tilde() as f64 * h;
            let k1 = 2.0 * PI / l;
            if periodicity == Periodicity::FREE {
                0.0
            } else {
                alias_error(k1, params.effective(params.s) * lt - l, xi)
                    .max(alias_error(k1 * (params.n_i + 1) as f64, params.p as f64 * h, xi))
            }
        };
        Self {
            eps: params.eps,
            truncation_real: (-(xi * params.rc).powi(2)).exp(),
            truncation_fourier: (-(PI * kinf / (xi * box_len)).powi(2)).exp(),
            approximation: a * (-rate * params.p as f64).exp(),
            quadrature,
            params,
        }
    }

    pub fn within_budget(&self) -> bool {
        [self.truncation_real, self.truncation_fourier, self.approximation, self.quadrature]
            .iter()
            .all(|&c| c <= self.eps)
    }
}

/// Requested parameters; unset fields are chosen automatically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRequest {
    pub xi: f64,
    pub eps: f64,
    pub window: WindowKind,
    pub m: Option<usize>,
    pub p: Option<usize>,
    pub shape: Option<f64>,
    pub rc: Option<f64>,
    pub s0: Option<f64>,
    pub s: Option<f64>,
    pub n_i: Option<usize>,
    pub r: Option<f64>,
    /// Added to the estimated `P`.
    pub p_margin: usize,
    pub precompute: bool,
}

impl ParamRequest {
    pub fn new(xi: f64, eps: f64) -> Self {
        Self {
            xi,
            eps,
            window: WindowKind::BarnettMagland,
            m: None,
            p: None,
            shape: None,
            rc: None,
            s0: None,
            s: None,
            n_i: None,
            r: None,
            p_margin: 2,
            precompute: true,
        }
    }

    pub fn window(mut self, kind: WindowKind) -> Self {
        self.window = kind;
        self
    }

    pub fn grid(mut self, m: usize, p: usize) -> Self {
        self.m = Some(m);
        self.p = Some(p);
        self
    }

    pub fn shape(mut self, shape: f64) -> Self {
        self.shape = Some(shape);
        self
    }

    /// Fill in every unset field for the given system and periodicity.
    pub fn resolve(&self, system: &ParticleSystem, periodicity: Periodicity) -> Result<SeParams> {
        self.resolve_for(system.charge_square_sum(), system.box_len(), periodicity)
    }

    pub fn resolve_for(&self, charge_square_sum: f64, box_len: f64, periodicity: Periodicity) -> Result<SeParams> {
        check_eps(self.eps)?;
        let xi = self.xi;
        let rc = match self.rc {
            Some(rc) => rc,
            None => select_cutoff(xi, self.eps)?,
        };
        let m = match self.m {
            Some(m) => m,
            None => select_kinf(xi, box_len, self.eps)?.1,
        };
        let p = match self.p {
            Some(p) => p,
            None => {
                let a = amplitude(charge_square_sum.max(f64::MIN_POSITIVE), xi, box_len);
                let p = select_p(self.window, self.eps, a)? + self.p_margin;
                if p > m {
                    return Err(Error::Configuration(format!(
                        "the tolerance needs P={p} window points but M={m}; increase M"
                    )));
                }
                p
            }
        };
        let shape = self.shape.unwrap_or_else(|| default_shape(self.window, p));
        let geometry = Geometry { box_len, m, p, xi };
        let (r, up) = refine_upsampling(periodicity, self.eps, geometry)?;
        let params = SeParams {
            xi,
            rc,
            m,
            p,
            window: self.window,
            shape,
            s0: self.s0.unwrap_or(up.s0),
            s: self.s.unwrap_or(up.s),
            n_i: self.n_i.unwrap_or(up.n_i),
            r: self.r.unwrap_or(r),
            eps: self.eps,
            precompute: self.precompute,
        };
        params.validate(periodicity)?;
        Ok(params)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("tolerance must lie in (0, 1), got {eps}"));
    }
    Ok(())
}
