//! Uniform grids on the (possibly extended) box.
//!
//! Periodic axes carry `M` points on `[0, L)`. Free axes carry `M + P` points
//! with the same spacing, starting at `-P h / 2`, so every window support of a
//! particle in `[0, L)` fits without wrapping.

use crate::error::{invalid, Result};
use crate::system::Periodicity;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub periodicity: Periodicity,
    pub box_len: f64,
    /// Points per periodic axis.
    pub m: usize,
    /// Window support points per axis.
    pub p: usize,
    pub h: f64,
    /// Points per axis: `M` or `M + P`.
    pub dims: [usize; 3],
    /// Coordinate of grid index 0 along each axis.
    pub origin: [f64; 3],
}

impl GridGeometry {
    pub fn new(periodicity: Periodicity, box_len: f64, m: usize, p: usize) -> Result<Self> {
        if m < 2 {
            return invalid(format!("grid size must be at least 2, got {m}"));
        }
        if p == 0 || p > m {
            return invalid(format!("window support P={p} must satisfy 1 <= P <= M={m}"));
        }
        let h = box_len / m as f64;
        let mut dims = [m; 3];
        let mut origin = [0.0; 3];
        for axis in 0..3 {
            if !periodicity.is_periodic(axis) {
                dims[axis] = m + p;
                origin[axis] = -0.5 * p as f64 * h;
            }
        }
        Ok(Self {
            periodicity,
            box_len,
            m,
            p,
            h,
            dims,
            origin,
        })
    }

    /// `M~ = M + P`, the point count of a free axis.
    pub fn m_tilde(&self) -> usize {
        self.m + self.p
    }

    /// `L~ = L + P h`.
    pub fn extended_len(&self) -> f64 {
        self.m_tilde() as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First index of the `P` grid points nearest to `x` along `axis`, before
    /// any periodic wrap.
    #[inline]
    pub fn stencil_start(&self, axis: usize, x: f64) -> i64 {
        let t = (x - self.origin[axis]) / self.h;
        (t - 0.5 * self.p as f64).floor() as i64 + 1
    }

    /// Storage index along `axis` for an unwrapped index `j`.
    #[inline]
    pub fn wrap(&self, axis: usize, j: i64) -> usize {
        if self.periodicity.is_periodic(axis) {
            j.rem_euclid(self.dims[axis] as i64) as usize
        } else {
            debug_assert!(j >= 0 && (j as usize) < self.dims[axis]);
            j as usize
        }
    }

    /// Coordinate of the unwrapped index `j` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, j: i64) -> f64 {
        self.origin[axis] + j as f64 * self.h
    }

    #[inline]
    pub fn flat(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }
}

/// Real samples on a grid, stored row-major with axis 2 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self {
            values: vec![0.0; geometry.len()],
            geometry,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> f64 {
        self.geometry.h
    }

    pub fn get(&self, i: [usize; 3]) -> f64 {
        self.values[self.geometry.flat(i)]
    }
}
