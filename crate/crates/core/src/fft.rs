//! Batched one-dimensional FFTs along the axes of row-major 3-D arrays.
//!
//! Transforms are unnormalized in both directions; callers own the `1/n`
//! factors. Plans come from a process-wide `rustfft` planner.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

struct PlanCache {
    planner: FftPlanner<f64>,
    plans: HashMap<(usize, Direction), Arc<dyn Fft<f64>>>,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<PlanCache>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        Mutex::new(PlanCache {
            planner: FftPlanner::new(),
            plans: HashMap::new(),
        })
    });
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let PlanCache { planner, plans } = &mut *guard;
    plans
        .entry((n, dir))
        .or_insert_with(|| match dir {
            Direction::Forward => planner.plan_fft_forward(n),
            Direction::Inverse => planner.plan_fft_inverse(n),
        })
        .clone()
}

/// In-place transform of a single contiguous sequence.
pub fn transform_1d(data: &mut [Complex64], dir: Direction) {
    if data.len() > 1 {
        plan(data.len(), dir).process(data);
    }
}

#[derive(Clone, Copy)]
struct SendPtr(*mut Complex64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

/// Transform every line along `axis` of the `dims` array (row-major).
pub fn transform_axis(data: &mut [Complex64], dims: [usize; 3], axis: usize, dir: Direction) {
    transform_axis_pruned(data, dims, axis, dir, dims);
}

/// Like [`transform_axis`], but only lines whose indices along the other two
/// axes are below `active` are transformed. Lines outside are left untouched,
/// which is exact when they are known to be zero or are never read.
pub fn transform_axis_pruned(
    data: &mut [Complex64],
    dims: [usize; 3],
    axis: usize,
    dir: Direction,
    active: [usize; 3],
) {
    assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
    let n = dims[axis];
    if n <= 1 {
        return;
    }
    let fft = plan(n, dir);
    let strides = [dims[1] * dims[2], dims[2], 1];
    let (outer, inner) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let n_outer = active[outer].min(dims[outer]);
    let n_inner = active[inner].min(dims[inner]);
    if n_outer == 0 || n_inner == 0 {
        return;
    }

    if axis == 2 {
        // Lines are contiguous; each outer plane holds `n_inner` of them back to back.
        data.par_chunks_mut(strides[0])
            .take(n_outer)
            .for_each(|plane| {
                let lines = &mut plane[..n_inner * n];
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(lines, &mut scratch);
            });
        return;
    }

    let ptr = SendPtr(data.as_mut_ptr());
    let stride = strides[axis];
    (0..n_outer).into_par_iter().for_each(|o| {
        let ptr = ptr;
        let mut buf = vec![Complex64::default(); n * n_inner];
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let base_o = o * strides[outer];
        // SAFETY: the task for `o` touches only elements whose index along
        // `outer` equals `o`, so tasks access disjoint memory.
        // `inner` is always the higher axis, so the innermost loops walk memory
        // with stride `strides[inner]` (1 unless axis is 2).
        unsafe {
            for j in 0..n {
                let row = base_o + j * stride;
                for i in 0..n_inner {
                    buf[i * n + j] = *ptr.0.add(row + i * strides[inner]);
                }
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        unsafe {
            for j in 0..n {
                let row = base_o + j * stride;
                for i in 0..n_inner {
                    *ptr.0.add(row + i * strides[inner]) = buf[i * n + j];
                }
            }
        }
    });
}

/// Signed mode number of FFT bin `j` of a length-`n` transform
/// (`0, 1, ..., n/2 - 1, -n/2, ..., -1`).
#[inline]
pub fn mode_number(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Smallest even integer `>= n` whose only prime factors are 2, 3, 5 and 7.
pub fn next_fast_even(n: usize) -> usize {
    let mut m = n.max(2);
    if m % 2 == 1 {
        m += 1;
    }
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 2;
    }
}
