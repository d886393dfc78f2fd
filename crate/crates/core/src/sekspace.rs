//! Fourier-space part of the potential on a uniform grid.
//!
//! Charges are spread to the grid with a compact window, transformed with the
//! adaptive FFT, scaled by the screened and deconvolved Green's function,
//! transformed back and gathered at the particles with the same window.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::aft::{
    aft_forward, aft_inverse, full_upsampled_points, padded_forward, padded_inverse, periodic_index, BlockKind,
    ModePartition, SpectralField,
};
use crate::error::{Error, Result};
use crate::fft::{next_fast_even, transform_axis, Direction};
use crate::greens::GreensSpec;
use crate::grid::{GridField, GridGeometry};
use crate::params::SeParams;
use crate::system::{ParticleSystem, Periodicity};
use crate::windows::{TabulatedTransform, WindowSpec};

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub spread: f64,
    pub aft: f64,
    pub scale: f64,
    pub aift: f64,
    pub gather: f64,
    pub precompute: f64,
}

impl Timings {
    /// `t_aft + t_scale + t_aift`.
    pub fn transforms(&self) -> f64 {
        self.aft + self.scale + self.aift
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KspaceOutput {
    pub phi: Vec<f64>,
    pub timings: Timings,
    /// Coefficients held by the spectral blocks.
    pub transformed_points: usize,
    /// Coefficients needed when every mode is padded like the low block.
    pub full_points: usize,
}

/// Window weights of one particle: `P` storage indices and values per axis.
struct Stencil {
    idx: [Vec<usize>; 3],
    w: [Vec<f64>; 3],
}

fn stencil(x: &[f64; 3], g: &GridGeometry, window: &WindowSpec) -> Stencil {
    let p = g.p;
    let mut idx: [Vec<usize>; 3] = Default::default();
    let mut w: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        let j0 = g.stencil_start(a, x[a]);
        idx[a] = (0..p as i64).map(|j| g.wrap(a, j0 + j)).collect();
        w[a] = (0..p as i64).map(|j| window.eval(g.coord(a, j0 + j) - x[a])).collect();
    }
    Stencil { idx, w }
}

fn stencils(system: &ParticleSystem, g: &GridGeometry, window: &WindowSpec) -> Vec<Stencil> {
    system.positions().par_iter().map(|x| stencil(x, g, window)).collect()
}

/// `H(x_g) = sum_n q_n w(x_g - x_n)`.
pub fn spread(system: &ParticleSystem, g: &GridGeometry, window: &WindowSpec) -> GridField {
    let st = stencils(system, g, window);
    spread_with(&st, system.charges(), g)
}

fn spread_with(st: &[Stencil], q: &[f64], g: &GridGeometry) -> GridField {
    let mut field = GridField::zeros(*g);
    let [_, d1, d2] = g.dims;
    // contributions per plane of axis 0, in particle order; deterministic
    let mut planes: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.dims[0]];
    for (n, s) in st.iter().enumerate() {
        for (j, &i0) in s.idx[0].iter().enumerate() {
            planes[i0].push((n, j));
        }
    }
    field
        .values
        .par_chunks_mut(d1 * d2)
        .zip(planes.par_iter())
        .for_each(|(plane, items)| {
            for &(n, j) in items {
                let s = &st[n];
                let c0 = q[n] * s.w[0][j];
                for (&i1, &w1) in s.idx[1].iter().zip(&s.w[1]) {
                    let c1 = c0 * w1;
                    let row = &mut plane[i1 * d2..(i1 + 1) * d2];
                    for (&i2, &w2) in s.idx[2].iter().zip(&s.w[2]) {
                        row[i2] += c1 * w2;
                    }
                }
            }
        });
    field
}

/// `phi_n = h^3 sum_g F(x_g) w(x_g - x_n)`.
pub fn gather(field: &GridField, system: &ParticleSystem, window: &WindowSpec) -> Vec<f64> {
    let st = stencils(system, &field.geometry, window);
    gather_with(field, &st)
}

fn gather_with(field: &GridField, st: &[Stencil]) -> Vec<f64> {
    let g = &field.geometry;
    let h3 = g.h.powi(3);
    st.par_iter()
        .map(|s| {
            let mut acc = 0.0;
            for (&i0, &w0) in s.idx[0].iter().zip(&s.w[0]) {
                for (&i1, &w1) in s.idx[1].iter().zip(&s.w[1]) {
                    let base = g.flat([i0, i1, 0]);
                    let mut row = 0.0;
                    for (&i2, &w2) in s.idx[2].iter().zip(&s.w[2]) {
                        row += field.values[base + i2] * w2;
                    }
                    acc += w0 * w1 * row;
                }
            }
            h3 * acc
        })
        .collect()
}

/// Smallest window transform magnitude accepted in the deconvolution.
const MIN_WINDOW_HAT: f64 = 1e-30;

/// Per-bin `k^2` and `e^{-k^2/4xi^2} / w^(k)^2` of one axis.
fn axis_factors(table: &TabulatedTransform, xi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut k2 = Vec::with_capacity(table.n);
    let mut f = Vec::with_capacity(table.n);
    for (j, &w) in table.values.iter().enumerate() {
        if w.abs() < MIN_WINDOW_HAT {
            return Err(Error::Configuration(format!(
                "window transform vanishes ({w:e}) at bin {j} of {}; the window is too narrow for this grid",
                table.n
            )));
        }
        let k = table.wavenumber(j);
        k2.push(k * k);
        f.push((-k * k / (4.0 * xi * xi)).exp() / (w * w));
    }
    Ok((k2, f))
}

/// Multiply every coefficient by `4 pi e^{-k^2/4xi^2} G^(k) / w^(k)^2`.
pub fn scale(field: &mut SpectralField, window: &WindowSpec, greens: &GreensSpec, xi: f64) -> Result<()> {
    let per = field.periodicity;
    let dp = per.periodic_dims();
    let df = per.free_dims();
    let m = field.m;
    let (kp2, fp) = axis_factors(&window.transform_on(m), xi)?;
    for block in &mut field.blocks {
        if block.modes.is_empty() {
            continue;
        }
        let len = block.len;
        let (kf2, ff) = if df > 0 {
            axis_factors(&window.transform_on(len), xi)?
        } else {
            (vec![0.0], vec![1.0])
        };
        let slab = block.slab_len(df);
        block
            .data
            .par_chunks_mut(slab)
            .zip(block.modes.par_iter())
            .for_each(|(chunk, &p)| {
                let idx = periodic_index(p, m, dp);
                let mut kper2 = 0.0;
                let mut fper = 4.0 * PI;
                for &i in &idx[..dp] {
                    kper2 += kp2[i];
                    fper *= fp[i];
                }
                // Rows run along the fastest free index; the slower ones fix the row factor.
                let row_len = if df == 0 { 1 } else { len };
                for (r, row) in chunk.chunks_mut(row_len).enumerate() {
                    let mut rest = r;
                    let mut row_k2 = 0.0;
                    let mut row_f = fper;
                    for _ in 1..df {
                        let j = rest % len;
                        rest /= len;
                        row_k2 += kf2[j];
                        row_f *= ff[j];
                    }
                    for (v, (k2, f)) in row.iter_mut().zip(kf2.iter().zip(&ff)) {
                        *v *= row_f * f * greens.eval_split_sq(kper2, row_k2 + k2);
                    }
                }
            });
    }
    Ok(())
}

fn setup(system: &ParticleSystem, params: &SeParams, per: Periodicity) -> Result<(GridGeometry, WindowSpec, GreensSpec)> {
    params.validate(per)?;
    let g = GridGeometry::new(per, system.box_len(), params.m, params.p)?;
    let window = WindowSpec::new(params.window, params.p, g.h, params.shape, params.xi)?;
    Ok((g, window, GreensSpec::new(per, params.r)))
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Fourier-space potential at every particle with the adaptive FFT, or with
/// the precomputed kernel in free space when `params.precompute` is set.
pub fn se_kspace(system: &ParticleSystem, params: &SeParams, per: Periodicity) -> Result<KspaceOutput> {
    let (g, window, greens) = setup(system, params, per)?;
    let mut t = Timings::default();
    let clock = Instant::now();
    let st = stencils(system, &g, &window);
    let h = spread_with(&st, system.charges(), &g);
    t.spread = secs(clock);

    let full_points = full_upsampled_points(per, g.m, params.padded(params.s));
    let (field, points) = if per == Periodicity::FREE && params.precompute {
        let clock = Instant::now();
        let kernel = precomputed_kernel(params, &g, &window, &greens)?;
        t.precompute = secs(clock);
        let partition = ModePartition::new(per, g.m, 0)?;
        let clock = Instant::now();
        let mut f = aft_forward(&h, &partition, kernel.len, kernel.len)?;
        t.aft = secs(clock);
        let clock = Instant::now();
        let block = &mut f.blocks[0];
        debug_assert_eq!(block.kind, BlockKind::Zero);
        block.data.par_iter_mut().zip(kernel.values.par_iter()).for_each(|(v, k)| *v *= k);
        t.scale = secs(clock);
        let points = f.transformed_points();
        let clock = Instant::now();
        let out = aft_inverse(f, &g)?;
        t.aift = secs(clock);
        (out, points)
    } else {
        let partition = ModePartition::new(per, g.m, params.n_i.min(g.m / 2))?;
        let clock = Instant::now();
        let mut f = aft_forward(&h, &partition, params.padded(params.s0), params.padded(params.s))?;
        t.aft = secs(clock);
        let clock = Instant::now();
        scale(&mut f, &window, &greens, params.xi)?;
        t.scale = secs(clock);
        let points = f.transformed_points();
        let clock = Instant::now();
        let out = aft_inverse(f, &g)?;
        t.aift = secs(clock);
        (out, points)
    };

    let clock = Instant::now();
    let phi = gather_with(&field, &st);
    t.gather = secs(clock);
    Ok(KspaceOutput {
        phi,
        timings: t,
        transformed_points: points,
        full_points,
    })
}

/// Fourier-space potential from one plain FFT of the grid padded by `s` on
/// every free axis, with no per-mode adaptivity.
pub fn se_kspace_padded(system: &ParticleSystem, params: &SeParams, per: Periodicity, s: f64) -> Result<KspaceOutput> {
    let (g, window, greens) = setup(system, params, per)?;
    let mut t = Timings::default();
    let clock = Instant::now();
    let st = stencils(system, &g, &window);
    let h = spread_with(&st, system.charges(), &g);
    t.spread = secs(clock);
    let len = params.padded(s);
    let clock = Instant::now();
    let mut f = padded_forward(&h, len)?;
    t.aft = secs(clock);
    let clock = Instant::now();
    scale(&mut f, &window, &greens, params.xi)?;
    t.scale = secs(clock);
    let points = f.transformed_points();
    let clock = Instant::now();
    let out = padded_inverse(f, &g)?;
    t.aift = secs(clock);
    let clock = Instant::now();
    let phi = gather_with(&out, &st);
    t.gather = secs(clock);
    Ok(KspaceOutput {
        phi,
        timings: t,
        transformed_points: points,
        full_points: points,
    })
}

/// Real transform of the free-space kernel on a grid of `len^3` points, for
/// grids of `M~ <= len / 2` points per axis.
#[derive(Debug)]
pub struct PrecomputedKernel {
    pub len: usize,
    pub values: Vec<f64>,
}

type KernelKey = (usize, usize, u8, [u64; 4], usize);

/// The free-space scaling as a real-space kernel.
///
/// The full scaling `S` is sampled on the `s0`-padded grid and transformed
/// back. A grid of `M~` points only sees kernel offsets `|d| < M~`, so those
/// are copied onto a grid of about `2 M~` points and transformed forward.
/// Scaling on that grid then reproduces the `s0`-padded result.
pub fn precomputed_kernel(
    params: &SeParams,
    g: &GridGeometry,
    window: &WindowSpec,
    greens: &GreensSpec,
) -> Result<Arc<PrecomputedKernel>> {
    static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<PrecomputedKernel>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let n0 = params.padded(params.s0);
    let key: KernelKey = (
        g.m,
        g.p,
        params.window as u8,
        [g.h.to_bits(), params.xi.to_bits(), params.r.to_bits(), params.shape.to_bits()],
        n0,
    );
    if let Some(k) = cache.lock().expect("kernel cache poisoned").get(&key) {
        return Ok(k.clone());
    }

    let mt = g.m_tilde();
    if n0 < 2 * mt - 1 {
        return Err(Error::Configuration(format!(
            "precomputed kernel needs s0 >= 2 (padded length {n0} < {})",
            2 * mt - 1
        )));
    }
    let (k2, f) = axis_factors(&window.transform_on(n0), params.xi)?;
    let mut data = vec![Complex64::default(); n0 * n0 * n0];
    data.par_chunks_mut(n0 * n0).enumerate().for_each(|(a, plane)| {
        for b in 0..n0 {
            for c in 0..n0 {
                let kap = (k2[a] + k2[b] + k2[c]).sqrt();
                let v = 4.0 * PI * f[a] * f[b] * f[c] * greens.eval_split(0.0, kap);
                plane[b * n0 + c] = Complex64::new(v, 0.0);
            }
        }
    });
    let dims = [n0; 3];
    for axis in 0..3 {
        transform_axis(&mut data, dims, axis, Direction::Inverse);
    }
    let norm = 1.0 / (n0 * n0 * n0) as f64;

    let n2 = next_fast_even(2 * mt - 1);
    let mut small = vec![Complex64::default(); n2 * n2 * n2];
    let offsets: Vec<i64> = (-(mt as i64) + 1..mt as i64).collect();
    let wrap = |d: i64, n: usize| d.rem_euclid(n as i64) as usize;
    for &da in &offsets {
        for &db in &offsets {
            for &dc in &offsets {
                let src = (wrap(da, n0) * n0 + wrap(db, n0)) * n0 + wrap(dc, n0);
                let dst = (wrap(da, n2) * n2 + wrap(db, n2)) * n2 + wrap(dc, n2);
                small[dst] = data[src] * norm;
            }
        }
    }
    drop(data);
    let dims = [n2; 3];
    for axis in 0..3 {
        transform_axis(&mut small, dims, axis, Direction::Forward);
    }
    let peak = small.iter().fold(0.0f64, |a, v| a.max(v.re.abs()));
    let imag = small.iter().fold(0.0f64, |a, v| a.max(v.im.abs()));
    assert!(imag <= 1e-13 * peak, "free-space kernel is not real: {imag:e} of {peak:e}");
    let kernel = Arc::new(PrecomputedKernel {
        len: n2,
        values: small.iter().map(|v| v.re).collect(),
    });
    cache.lock().expect("kernel cache poisoned").insert(key, kernel.clone());
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{kspace_direct, OracleConfig};
    use crate::params::ParamRequest;
    use crate::system::generate_random_system;
    use crate::windows::WindowKind;

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        crate::metrics::relative_rms_error(a, b).unwrap()
    }

    #[test]
    fn spread_mass_matches_full_window_sums() {
        // h^3 sum_g H = sum_n q_n prod_a (h sum_j w(x_j - x_na)) with j over
        // every grid point (and its images on periodic axes)
        let s = generate_random_system(20, 1.0, 3).unwrap();
        for per in Periodicity::all() {
            let g = GridGeometry::new(per, 1.0, 20, 8).unwrap();
            let w = WindowSpec::new(WindowKind::BarnettMagland, 8, g.h, 20.0, 5.0).unwrap();
            let h = spread(&s, &g, &w);
            let total: f64 = h.values.iter().sum::<f64>() * g.h.powi(3);
            let mut want = 0.0;
            for (x, q) in s.positions().iter().zip(s.charges()) {
                let mut prod = *q;
                for a in 0..3 {
                    let mut sum = 0.0;
                    for j in 0..g.dims[a] as i64 {
                        for img in [-1.0, 0.0, 1.0] {
                            if img != 0.0 && !per.is_periodic(a) {
                                continue;
                            }
                            sum += w.eval(g.coord(a, j) + img - x[a]);
                        }
                    }
                    prod *= g.h * sum;
                }
                want += prod;
            }
            assert!((total - want).abs() < 1e-13, "D={per}: {total} vs {want}");
        }
    }

    #[test]
    fn node_centered_charge_spreads_window_samples() {
        // odd P, so the P-point stencil covers the whole support
        let g = GridGeometry::new(Periodicity::FREE, 1.0, 10, 5).unwrap();
        let w = WindowSpec::new(WindowKind::BarnettMagland, 5, g.h, 12.5, 5.0).unwrap();
        let x = [0.45, 0.25, 0.65];
        let s = ParticleSystem::new(vec![x], vec![1.0], 1.0).unwrap();
        let h = spread(&s, &g, &w);
        let mut touched = 0;
        for (i, &v) in h.values.iter().enumerate() {
            let idx = [i / (15 * 15), (i / 15) % 15, i % 15];
            let want: f64 = (0..3).map(|a| w.eval(g.coord(a, idx[a] as i64) - x[a])).product();
            assert!((v - want).abs() < 1e-15);
            touched += usize::from(v != 0.0);
        }
        assert_eq!(touched, 5 * 5 * 5);
    }

    #[test]
    fn single_mode_scaling_constant() {
        // one mode k = (2 pi / L, 0, 0) with L = 2
        let per = Periodicity::TRIPLY;
        let (l, m, xi) = (2.0, 8, 3.0);
        let g = GridGeometry::new(per, l, m, 4).unwrap();
        let w = WindowSpec::new(WindowKind::KaiserBessel, 4, g.h, 10.0, xi).unwrap();
        let greens = GreensSpec::new(per, 0.0);
        let part = ModePartition::new(per, m, m / 2).unwrap();
        let mut f = aft_forward(&GridField::zeros(g), &part, 1, 1).unwrap();
        let slot = f.blocks.iter().position(|b| b.modes.contains(&64)).unwrap();
        let pos = f.blocks[slot].modes.iter().position(|&p| p == 64).unwrap();
        f.blocks[slot].data[pos] = Complex64::new(1.0, 0.0);
        scale(&mut f, &w, &greens, xi).unwrap();
        let k = 2.0 * PI / l;
        // the tensor-product window transforms to w^(k) w^(0)^2
        let wk = w.fourier(k).unwrap() * w.fourier(0.0).unwrap().powi(2);
        let want = 4.0 * PI * (-k * k / (4.0 * xi * xi)).exp() / (k * k * wk * wk);
        let got = f.blocks[slot].data[pos];
        assert!((got.re - want).abs() < 1e-13 * want && got.im == 0.0);
        let zero = f.block(BlockKind::Zero).unwrap();
        assert_eq!(zero.data[0], Complex64::default());
    }

    #[test]
    fn mirrored_opposite_charges_are_antisymmetric() {
        let s = ParticleSystem::new(vec![[0.3, 0.4, 0.45], [0.7, 0.6, 0.55]], vec![1.0, -1.0], 1.0).unwrap();
        let params = ParamRequest::new(6.3, 1e-10).resolve(&s, Periodicity::TRIPLY).unwrap();
        let out = se_kspace(&s, &params, Periodicity::TRIPLY).unwrap();
        assert!((out.phi[0] + out.phi[1]).abs() < 1e-10 * out.phi[0].abs());
    }

    #[test]
    fn precomputed_kernel_is_cached() {
        let s = generate_random_system(10, 1.0, 2).unwrap();
        let params = ParamRequest::new(6.3, 1e-6).resolve(&s, Periodicity::FREE).unwrap();
        let (g, w, greens) = setup(&s, &params, Periodicity::FREE).unwrap();
        let a = precomputed_kernel(&params, &g, &w, &greens).unwrap();
        let b = precomputed_kernel(&params, &g, &w, &greens).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(a.len >= 2 * g.m_tilde() - 1);
    }

    #[test]
    fn gather_is_adjoint_of_spread() {
        let s = generate_random_system(15, 1.0, 4).unwrap();
        let g = GridGeometry::new(Periodicity::SINGLY, 1.0, 12, 6).unwrap();
        let w = WindowSpec::new(WindowKind::KaiserBessel, 6, g.h, 15.0, 5.0).unwrap();
        let h = spread(&s, &g, &w);
        let mut f = GridField::zeros(g);
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = ((i * 7919) % 101) as f64 / 101.0 - 0.5;
        }
        let lhs: f64 = h.values.iter().zip(&f.values).map(|(a, b)| a * b).sum::<f64>() * g.h.powi(3);
        let phi = gather(&f, &s, &w);
        let rhs: f64 = phi.iter().zip(s.charges()).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn matches_oracle_in_every_periodicity() {
        let s = generate_random_system(30, 1.0, 5).unwrap();
        let xi = 6.3;
        for per in Periodicity::all() {
            let params = ParamRequest::new(xi, 1e-10).resolve(&s, per).unwrap();
            let out = se_kspace(&s, &params, per).unwrap();
            let cfg = OracleConfig::reference(xi, 1.0);
            let want = kspace_direct(&s, xi, per, cfg.kmax).unwrap();
            let e = rel(&out.phi, &want);
            assert!(e < 1e-9, "D={per}: {e:e}");
        }
    }

    #[test]
    fn precompute_matches_full_upsampling() {
        let s = generate_random_system(20, 1.0, 6).unwrap();
        let mut params = ParamRequest::new(6.3, 1e-8).resolve(&s, Periodicity::FREE).unwrap();
        let a = se_kspace(&s, &params, Periodicity::FREE).unwrap();
        params.precompute = false;
        let b = se_kspace(&s, &params, Periodicity::FREE).unwrap();
        assert!(rel(&a.phi, &b.phi) < 1e-12);
        assert!(a.timings.precompute >= 0.0);
    }

    #[test]
    fn adaptive_equals_padded_when_degenerate() {
        let s = generate_random_system(20, 1.0, 7).unwrap();
        for per in [Periodicity::SINGLY, Periodicity::DOUBLY] {
            let mut params = ParamRequest::new(6.3, 1e-8).resolve(&s, per).unwrap();
            params.n_i = params.m / 2;
            params.s = params.s0;
            let a = se_kspace(&s, &params, per).unwrap();
            let b = se_kspace_padded(&s, &params, per, params.s0).unwrap();
            assert!(rel(&a.phi, &b.phi) < 1e-13);
        }
    }

    #[test]
    fn narrow_windows_are_rejected() {
        let s = generate_random_system(4, 1.0, 8).unwrap();
        let mut params = ParamRequest::new(6.3, 1e-8).resolve(&s, Periodicity::TRIPLY).unwrap();
        params.window = WindowKind::Gaussian;
        params.p = 8;
        params.shape = 0.05;
        assert!(matches!(se_kspace(&s, &params, Periodicity::TRIPLY), Err(Error::Configuration(_))));
    }

    #[test]
    fn translation_invariant_along_periodic_axes() {
        let s = generate_random_system(12, 1.0, 9).unwrap();
        let per = Periodicity::DOUBLY;
        let params = ParamRequest::new(6.3, 1e-10).resolve(&s, per).unwrap();
        let a = se_kspace(&s, &params, per).unwrap();
        let b = se_kspace(&s.translated(0, 0.37), &params, per).unwrap();
        assert!(rel(&a.phi, &b.phi) < 1e-9);
    }
}
