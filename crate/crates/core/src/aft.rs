//! Adaptive Fourier transforms with per-mode upsampling.
//!
//! After transforming along the periodic axes, every periodic mode owns a
//! slab of `M~^d` values over the `d` free axes. The slab of the zero mode is
//! zero-padded to `N_0` points per free axis, the slabs of low modes (every
//! `|k_i| <= n_i`) to `N_s` points, and the remaining slabs are transformed
//! without padding. Each group is stored as one [`SpectralBlock`].
//!
//! Arrays are row-major with the periodic axes first, so a slab is
//! contiguous. Transforms along free axes skip lines that are known to be
//! zero (forward) or are never read back (inverse).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fft::{mode_number, transform_axis, transform_axis_pruned, Direction};
use crate::grid::{GridField, GridGeometry};
use crate::system::Periodicity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// The zero periodic mode.
    Zero,
    /// Nonzero modes with every `|k_i| <= 2 pi n_i / L`.
    Low,
    /// All other modes.
    High,
    /// Every periodic mode at one padding (plain FFT of a padded grid).
    All,
}

/// Split of the `M^D` periodic modes into the zero mode, the low block and
/// the high block.
#[derive(Clone, Debug, PartialEq)]
pub struct ModePartition {
    pub periodicity: Periodicity,
    pub m: usize,
    pub n_i: usize,
    pub zero: Vec<usize>,
    pub low: Vec<usize>,
    pub high: Vec<usize>,
}

impl ModePartition {
    pub fn new(periodicity: Periodicity, m: usize, n_i: usize) -> Result<Self> {
        if n_i > m / 2 {
            return invalid(format!("n_i={n_i} exceeds M/2={}", m / 2));
        }
        let d = periodicity.periodic_dims();
        let total = m.pow(d as u32);
        let (mut zero, mut low, mut high) = (Vec::new(), Vec::new(), Vec::new());
        for p in 0..total {
            let idx = periodic_index(p, m, d);
            let max = idx[..d]
                .iter()
                .map(|&j| mode_number(j, m).unsigned_abs() as usize)
                .max()
                .unwrap_or(0);
            if max == 0 {
                zero.push(p);
            } else if max <= n_i {
                low.push(p);
            } else {
                high.push(p);
            }
        }
        assert_eq!(zero.len() + low.len() + high.len(), total);
        Ok(Self {
            periodicity,
            m,
            n_i,
            zero,
            low,
            high,
        })
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.zero.len(), self.low.len(), self.high.len())
    }
}

/// Multi-index over the periodic axes of flat periodic index `p`.
#[inline]
pub fn periodic_index(p: usize, m: usize, d: usize) -> [usize; 3] {
    let mut idx = [0; 3];
    let mut rest = p;
    for a in (0..d).rev() {
        idx[a] = rest % m;
        rest /= m;
    }
    idx
}

/// Fourier coefficients of a group of periodic modes, each on `len^d` free
/// wavenumbers.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBlock {
    pub kind: BlockKind,
    /// Flat periodic indices, in storage order.
    pub modes: Vec<usize>,
    /// Points per free axis.
    pub len: usize,
    pub data: Vec<Complex64>,
}

impl SpectralBlock {
    pub fn slab_len(&self, free_dims: usize) -> usize {
        self.len.pow(free_dims as u32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub periodicity: Periodicity,
    pub m: usize,
    pub m_tilde: usize,
    pub blocks: Vec<SpectralBlock>,
}

impl SpectralField {
    /// Total number of coefficients held, i.e. points entering the transforms.
    pub fn transformed_points(&self) -> usize {
        let d = self.periodicity.free_dims();
        self.blocks.iter().map(|b| b.modes.len() * b.slab_len(d)).sum()
    }

    pub fn block(&self, kind: BlockKind) -> Option<&SpectralBlock> {
        self.blocks.iter().find(|b| b.kind == kind)
    }
}

/// Points transformed when every periodic mode is padded to `len` per free axis.
pub fn full_upsampled_points(periodicity: Periodicity, m: usize, len: usize) -> usize {
    m.pow(periodicity.periodic_dims() as u32) * len.pow(periodicity.free_dims() as u32)
}

/// Block array shape: the mode index leads, free axes are last.
fn block_dims(count: usize, len: usize, d: usize) -> [usize; 3] {
    match d {
        0 => [1, 1, count],
        1 => [count, 1, len],
        2 => [count, len, len],
        _ => {
            assert_eq!(count, 1);
            [len, len, len]
        }
    }
}

/// Transform the free axes of a block array; only the first `m_tilde` points
/// of an axis are live before it is transformed forward or after it is
/// transformed back.
fn transform_free(data: &mut [Complex64], count: usize, len: usize, m_tilde: usize, d: usize, dir: Direction) {
    if d == 0 || count == 0 {
        return;
    }
    let dims = block_dims(count, len, d);
    let free: Vec<usize> = (3 - d..3).collect();
    let order: Vec<usize> = match dir {
        Direction::Forward => free.iter().rev().copied().collect(),
        Direction::Inverse => free.clone(),
    };
    for &axis in &order {
        let mut active = dims;
        for &a in &free {
            if a < axis {
                active[a] = m_tilde;
            }
        }
        transform_axis_pruned(data, dims, axis, dir, active);
    }
}

/// Copy an `m_tilde^d` slab into the leading corner of a `len^d` slab.
fn embed(src: &[Complex64], dst: &mut [Complex64], m_tilde: usize, len: usize, d: usize) {
    match d {
        0 => dst[0] = src[0],
        1 => dst[..m_tilde].copy_from_slice(src),
        2 => {
            for i in 0..m_tilde {
                dst[i * len..i * len + m_tilde].copy_from_slice(&src[i * m_tilde..(i + 1) * m_tilde]);
            }
        }
        _ => {
            for i in 0..m_tilde {
                for j in 0..m_tilde {
                    let s = (i * m_tilde + j) * m_tilde;
                    let t = (i * len + j) * len;
                    dst[t..t + m_tilde].copy_from_slice(&src[s..s + m_tilde]);
                }
            }
        }
    }
}

/// Inverse of [`embed`]: read the leading corner back, scaled by `factor`.
fn restrict(src: &[Complex64], dst: &mut [Complex64], m_tilde: usize, len: usize, d: usize, factor: f64) {
    match d {
        0 => dst[0] = src[0] * factor,
        1 => {
            for (o, i) in dst.iter_mut().zip(&src[..m_tilde]) {
                *o = i * factor;
            }
        }
        2 => {
            for i in 0..m_tilde {
                for j in 0..m_tilde {
                    dst[i * m_tilde + j] = src[i * len + j] * factor;
                }
            }
        }
        _ => {
            for i in 0..m_tilde {
                for j in 0..m_tilde {
                    let s = (i * len + j) * len;
                    let t = (i * m_tilde + j) * m_tilde;
                    for k in 0..m_tilde {
                        dst[t + k] = src[s + k] * factor;
                    }
                }
            }
        }
    }
}

fn to_complex(h: &GridField) -> Vec<Complex64> {
    h.values.par_iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

fn periodic_transform(data: &mut [Complex64], geometry: &GridGeometry, dir: Direction) {
    for axis in 0..geometry.periodicity.periodic_dims() {
        transform_axis(data, geometry.dims, axis, dir);
    }
}

fn check_len(len: usize, m_tilde: usize, what: &str) -> Result<()> {
    if len % 2 != 0 || len < m_tilde {
        return invalid(format!("{what} padded length {len} must be even and at least M~={m_tilde}"));
    }
    Ok(())
}

/// Forward adaptive transform. `len0` and `len_s` are the padded lengths of
/// the zero mode and of the low block per free axis.
pub fn aft_forward(h: &GridField, partition: &ModePartition, len0: usize, len_s: usize) -> Result<SpectralField> {
    let g = h.geometry;
    let per = g.periodicity;
    let d = per.free_dims();
    let mt = if d == 0 { 1 } else { g.m_tilde() };
    if d > 0 {
        check_len(len0, mt, "zero-mode")?;
        check_len(len_s, mt, "low-block")?;
    }
    let mut full = to_complex(h);
    periodic_transform(&mut full, &g, Direction::Forward);
    if d == 0 {
        // the whole array is the spectrum; regroup it by block
        let blocks = [
            (BlockKind::Zero, &partition.zero),
            (BlockKind::Low, &partition.low),
            (BlockKind::High, &partition.high),
        ]
        .into_iter()
        .map(|(kind, modes)| SpectralBlock {
            kind,
            modes: modes.clone(),
            len: 1,
            data: modes.iter().map(|&p| full[p]).collect(),
        })
        .collect();
        return Ok(SpectralField {
            periodicity: per,
            m: g.m,
            m_tilde: mt,
            blocks,
        });
    }
    let slab = mt.pow(d as u32);
    let blocks = [
        (BlockKind::Zero, &partition.zero, len0),
        (BlockKind::Low, &partition.low, len_s),
        (BlockKind::High, &partition.high, mt),
    ]
    .into_iter()
    .map(|(kind, modes, len)| {
        let n = len.pow(d as u32);
        let mut data = vec![Complex64::default(); modes.len() * n];
        data.par_chunks_mut(n).zip(modes.par_iter()).for_each(|(dst, &p)| {
            embed(&full[p * slab..(p + 1) * slab], dst, mt, len, d);
        });
        transform_free(&mut data, modes.len(), len, mt, d, Direction::Forward);
        SpectralBlock {
            kind,
            modes: modes.clone(),
            len,
            data,
        }
    })
    .collect();
    Ok(SpectralField {
        periodicity: per,
        m: g.m,
        m_tilde: mt,
        blocks,
    })
}

/// Inverse adaptive transform, normalized, restricted to the original grid.
pub fn aft_inverse(mut f: SpectralField, geometry: &GridGeometry) -> Result<GridField> {
    let per = geometry.periodicity;
    let d = per.free_dims();
    let mt = f.m_tilde;
    let slab = mt.pow(d as u32);
    let np = geometry.m.pow(per.periodic_dims() as u32);
    if np * slab != geometry.len() {
        return invalid("spectral field does not match the grid");
    }
    let mut full = vec![Complex64::default(); geometry.len()];
    let mut owner = vec![false; np];
    for block in &mut f.blocks {
        if block.data.len() != block.modes.len() * block.slab_len(d) {
            return invalid(format!("{:?} block holds {} values for {} modes", block.kind, block.data.len(), block.modes.len()));
        }
        if d > 0 && block.len < mt {
            return invalid(format!("{:?} block is shorter than M~", block.kind));
        }
        for &p in &block.modes {
            if p >= np || std::mem::replace(&mut owner[p], true) {
                return invalid("spectral blocks overlap or index outside the grid");
            }
        }
        let n = block.slab_len(d);
        transform_free(&mut block.data, block.modes.len(), block.len, mt, d, Direction::Inverse);
        let factor = 1.0 / n as f64;
        let len = block.len;
        // scatter slabs into their (disjoint) places in the full array
        let ptr = SendPtr(full.as_mut_ptr());
        block.data.par_chunks(n).zip(block.modes.par_iter()).for_each(|(src, &p)| {
            let ptr = ptr;
            // SAFETY: partition modes are distinct (checked above), so slabs are disjoint.
            let dst = unsafe { std::slice::from_raw_parts_mut(ptr.0.add(p * slab), slab) };
            restrict(src, dst, mt, len, d, factor);
        });
    }
    if owner.iter().any(|&o| !o) {
        return invalid("spectral blocks do not cover every periodic mode");
    }
    periodic_transform(&mut full, geometry, Direction::Inverse);
    let norm = 1.0 / np as f64;
    let mut out = GridField::zeros(*geometry);
    out.values.par_iter_mut().zip(full.par_iter()).for_each(|(o, v)| *o = v.re * norm);
    Ok(out)
}

#[derive(Clone, Copy)]
struct SendPtr(*mut Complex64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

/// Plain transform of the grid zero-padded to `len` on every free axis,
/// stored as a single block over all periodic modes.
pub fn padded_forward(h: &GridField, len: usize) -> Result<SpectralField> {
    let g = h.geometry;
    let per = g.periodicity;
    let d = per.free_dims();
    let mt = if d == 0 { 1 } else { g.m_tilde() };
    let len = if d == 0 { 1 } else { len };
    if d > 0 {
        check_len(len, mt, "global")?;
    }
    let np = g.m.pow(per.periodic_dims() as u32);
    let slab = mt.pow(d as u32);
    let n = len.pow(d as u32);
    let mut data = vec![Complex64::default(); np * n];
    let src = to_complex(h);
    data.par_chunks_mut(n).enumerate().for_each(|(p, dst)| {
        embed(&src[p * slab..(p + 1) * slab], dst, mt, len, d);
    });
    let mut dims = [len; 3];
    for v in dims.iter_mut().take(per.periodic_dims()) {
        *v = g.m;
    }
    for axis in 0..3 {
        transform_axis(&mut data, dims, axis, Direction::Forward);
    }
    Ok(SpectralField {
        periodicity: per,
        m: g.m,
        m_tilde: mt,
        blocks: vec![SpectralBlock {
            kind: BlockKind::All,
            modes: (0..np).collect(),
            len,
            data,
        }],
    })
}

/// Inverse of [`padded_forward`], normalized and restricted.
pub fn padded_inverse(f: SpectralField, geometry: &GridGeometry) -> Result<GridField> {
    let per = geometry.periodicity;
    let d = per.free_dims();
    let mut block = f.blocks.into_iter().next().ok_or_else(|| crate::Error::InvalidArgument("empty spectral field".into()))?;
    let len = block.len;
    let mut dims = [len; 3];
    for v in dims.iter_mut().take(per.periodic_dims()) {
        *v = geometry.m;
    }
    if block.data.len() != dims.iter().product::<usize>() {
        return invalid("padded spectrum does not match the grid");
    }
    for axis in 0..3 {
        transform_axis(&mut block.data, dims, axis, Direction::Inverse);
    }
    let mt = f.m_tilde;
    let slab = mt.pow(d as u32);
    let n = len.pow(d as u32);
    let factor = 1.0 / block.data.len() as f64;
    let mut tmp = vec![Complex64::default(); geometry.len()];
    tmp.par_chunks_mut(slab).zip(block.data.par_chunks(n)).for_each(|(dst, src)| {
        restrict(src, dst, mt, len, d, factor);
    });
    let mut out = GridField::zeros(*geometry);
    out.values.par_iter_mut().zip(tmp.par_iter()).for_each(|(o, v)| *o = v.re);
    Ok(out)
}
