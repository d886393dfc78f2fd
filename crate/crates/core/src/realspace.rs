//! Real-space Ewald sum over a cell list, and the self-interaction term.
//!
//! The neighbour scan reaches `ceil(rc / edge)` cells in each direction and
//! tracks the image shift on periodic axes, so cutoffs larger than `L / 2`
//! (several images of one particle) are handled exactly.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::special::erfc;
use crate::system::{ParticleSystem, Periodicity};

#[derive(Clone, Debug)]
pub struct CellList {
    periodicity: Periodicity,
    box_len: f64,
    rc: f64,
    n_cells: [usize; 3],
    edge: f64,
    reach: i64,
    /// Particles of cell `c` are `order[start[c]..start[c + 1]]`, in index order.
    start: Vec<usize>,
    order: Vec<usize>,
}

impl CellList {
    pub fn n_cells(&self) -> [usize; 3] {
        self.n_cells
    }

    pub fn cutoff(&self) -> f64 {
        self.rc
    }

    fn cell_coords(&self, x: &[f64; 3]) -> [usize; 3] {
        let mut c = [0; 3];
        for a in 0..3 {
            c[a] = ((x[a] / self.edge) as usize).min(self.n_cells[a] - 1);
        }
        c
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.n_cells[1] + c[1]) * self.n_cells[2] + c[2]
    }

    /// Calls `f(n, r)` for every source `n` and image with `0 < r < rc` from
    /// particle `m`, in a fixed order. A zero distance is reported as an error.
    pub fn for_each_neighbor<F>(&self, system: &ParticleSystem, m: usize, mut f: F) -> Result<()>
    where
        F: FnMut(usize, f64),
    {
        let pos = system.positions();
        let xm = pos[m];
        let cm = self.cell_coords(&xm);
        let rc2 = self.rc * self.rc;
        let l = self.box_len;
        let nc = self.n_cells.map(|n| n as i64);
        for o0 in -self.reach..=self.reach {
            let Some((c0, s0)) = self.resolve(0, cm[0] as i64 + o0, nc[0]) else { continue };
            for o1 in -self.reach..=self.reach {
                let Some((c1, s1)) = self.resolve(1, cm[1] as i64 + o1, nc[1]) else { continue };
                for o2 in -self.reach..=self.reach {
                    let Some((c2, s2)) = self.resolve(2, cm[2] as i64 + o2, nc[2]) else { continue };
                    let cell = self.flat([c0, c1, c2]);
                    let shift = [s0 as f64 * l, s1 as f64 * l, s2 as f64 * l];
                    for &n in &self.order[self.start[cell]..self.start[cell + 1]] {
                        let xn = pos[n];
                        let d = [
                            xn[0] + shift[0] - xm[0],
                            xn[1] + shift[1] - xm[1],
                            xn[2] + shift[2] - xm[2],
                        ];
                        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                        if r2 >= rc2 {
                            continue;
                        }
                        if r2 == 0.0 {
                            if n == m && shift == [0.0; 3] {
                                continue;
                            }
                            return Err(Error::SingularConfiguration(m.min(n), m.max(n)));
                        }
                        f(n, r2.sqrt());
                    }
                }
            }
        }
        Ok(())
    }

    /// Storage cell and image shift of an unwrapped cell index, if it exists.
    #[inline]
    fn resolve(&self, axis: usize, c: i64, n: i64) -> Option<(usize, i64)> {
        if self.periodicity.is_periodic(axis) {
            Some((c.rem_euclid(n) as usize, c.div_euclid(n)))
        } else if (0..n).contains(&c) {
            Some((c as usize, 0))
        } else {
            None
        }
    }
}

pub fn build_cell_list(system: &ParticleSystem, rc: f64, periodicity: Periodicity) -> Result<CellList> {
    if !(rc > 0.0 && rc.is_finite()) {
        return invalid(format!("cutoff must be positive, got {rc}"));
    }
    let l = system.box_len();
    // More cells than about two per particle per axis only adds empty work.
    let cap = ((2.0 * (system.len().max(1) as f64).cbrt()).ceil() as usize).max(1);
    let per_axis = ((l / rc).floor() as usize).clamp(1, cap);
    let n_cells = [per_axis; 3];
    let edge = l / per_axis as f64;
    let reach = (rc / edge).ceil() as i64;

    let mut list = CellList {
        periodicity,
        box_len: l,
        rc,
        n_cells,
        edge,
        reach,
        start: Vec::new(),
        order: Vec::new(),
    };
    let total = per_axis * per_axis * per_axis;
    let cell_of: Vec<usize> = system
        .positions()
        .iter()
        .map(|x| list.flat(list.cell_coords(x)))
        .collect();
    let mut count = vec![0usize; total + 1];
    for &c in &cell_of {
        count[c + 1] += 1;
    }
    for c in 0..total {
        count[c + 1] += count[c];
    }
    let mut fill = count.clone();
    let mut order = vec![0; system.len()];
    for (i, &c) in cell_of.iter().enumerate() {
        order[fill[c]] = i;
        fill[c] += 1;
    }
    list.start = count;
    list.order = order;
    Ok(list)
}

/// `phi_m = sum q_n erfc(xi r)/r` over all sources and images with `r < rc`,
/// excluding the self pair.
pub fn real_space_sum(system: &ParticleSystem, xi: f64, rc: f64, periodicity: Periodicity) -> Result<Vec<f64>> {
    if !(xi > 0.0) {
        return invalid(format!("splitting parameter must be positive, got {xi}"));
    }
    let cells = build_cell_list(system, rc, periodicity)?;
    let q = system.charges();
    (0..system.len())
        .into_par_iter()
        .map(|m| {
            let mut acc = 0.0;
            cells.for_each_neighbor(system, m, |n, r| {
                acc += q[n] * erfc(xi * r) / r;
            })?;
            Ok(acc)
        })
        .collect()
}

/// `-2 xi q / sqrt(pi)`.
pub fn self_term(q: f64, xi: f64) -> f64 {
    -2.0 * xi * q / PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::generate_random_system;

    fn brute_pairs(s: &ParticleSystem, rc: f64, per: Periodicity) -> Vec<(usize, usize, i64)> {
        let l = s.box_len();
        let layers = (rc / l).ceil() as i64 + 1;
        let range = |a: usize| if per.is_periodic(a) { -layers..=layers } else { 0..=0 };
        let mut out = Vec::new();
        for m in 0..s.len() {
            for n in 0..s.len() {
                for i in range(0) {
                    for j in range(1) {
                        for k in range(2) {
                            let sh = [i as f64 * l, j as f64 * l, k as f64 * l];
                            let d: f64 = (0..3)
                                .map(|a| (s.positions()[n][a] + sh[a] - s.positions()[m][a]).powi(2))
                                .sum();
                            if d > 0.0 && d < rc * rc {
                                out.push((m, n, (d.sqrt() * 1e12) as i64));
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }

    fn scanned_pairs(s: &ParticleSystem, rc: f64, per: Periodicity) -> Vec<(usize, usize, i64)> {
        let list = build_cell_list(s, rc, per).unwrap();
        let mut out = Vec::new();
        for m in 0..s.len() {
            list.for_each_neighbor(s, m, |n, r| out.push((m, n, (r * 1e12) as i64))).unwrap();
        }
        out.sort();
        out
    }

    #[test]
    fn single_particle_single_cell() {
        let s = ParticleSystem::new(vec![[0.3, 0.3, 0.3]], vec![1.0], 1.0).unwrap();
        let list = build_cell_list(&s, 0.2, Periodicity::FREE).unwrap();
        assert_eq!(list.order.len(), 1);
        let occupied = list.start.windows(2).filter(|w| w[1] > w[0]).count();
        assert_eq!(occupied, 1);
    }

    #[test]
    fn pairs_beyond_cutoff_are_skipped() {
        let rc = 0.2;
        let s = ParticleSystem::new(vec![[0.1, 0.5, 0.5], [0.1 + rc + 0.01, 0.5, 0.5]], vec![1.0, -1.0], 1.0).unwrap();
        assert!(scanned_pairs(&s, rc, Periodicity::FREE).is_empty());
    }

    #[test]
    fn pair_sets_match_brute_force() {
        let s = generate_random_system(50, 1.0, 3).unwrap();
        for per in Periodicity::all() {
            for &rc in &[0.2, 0.45, 0.8, 1.3] {
                assert_eq!(scanned_pairs(&s, rc, per), brute_pairs(&s, rc, per), "D={per} rc={rc}");
            }
        }
    }

    #[test]
    fn large_xi_kills_the_sum() {
        let s = generate_random_system(20, 1.0, 5).unwrap();
        let phi = real_space_sum(&s, 1e4, 0.5, Periodicity::TRIPLY).unwrap();
        assert!(phi.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn two_free_particles() {
        let s = ParticleSystem::new(vec![[0.2, 0.2, 0.2], [0.5, 0.6, 0.2]], vec![1.0, -2.0], 1.0).unwrap();
        let phi = real_space_sum(&s, 3.0, 2.0, Periodicity::FREE).unwrap();
        let r: f64 = 0.5;
        let want = erfc(3.0 * r) / r;
        assert!((phi[0] + 2.0 * want).abs() < 1e-14 * want);
        assert!((phi[1] - want).abs() < 1e-14 * want);
    }

    #[test]
    fn matches_direct_image_scan() {
        let s = generate_random_system(20, 1.0, 9).unwrap();
        let xi = 5.0;
        let rc = 0.5;
        let phi = real_space_sum(&s, xi, rc, Periodicity::TRIPLY).unwrap();
        for m in 0..s.len() {
            let mut want = 0.0;
            for n in 0..s.len() {
                for i in -1..=1 {
                    for j in -1..=1 {
                        for k in -1..=1 {
                            let sh = [i as f64, j as f64, k as f64];
                            let r = (0..3)
                                .map(|a| (s.positions()[n][a] + sh[a] - s.positions()[m][a]).powi(2))
                                .sum::<f64>()
                                .sqrt();
                            if r > 0.0 && r < rc {
                                want += s.charges()[n] * erfc(xi * r) / r;
                            }
                        }
                    }
                }
            }
            assert!((phi[m] - want).abs() < 1e-13 * want.abs().max(1.0));
        }
    }

    #[test]
    fn coincident_particles_are_rejected() {
        let s = ParticleSystem::new(vec![[0.2; 3], [0.2; 3]], vec![1.0, -1.0], 1.0).unwrap();
        assert!(matches!(
            real_space_sum(&s, 3.0, 0.3, Periodicity::TRIPLY),
            Err(Error::SingularConfiguration(0, 1))
        ));
    }

    #[test]
    fn newton_symmetry() {
        let s = generate_random_system(30, 1.0, 4).unwrap();
        let n = s.len();
        let xi = 4.0;
        for per in Periodicity::all() {
            // phi_m with q = e_n equals phi_n with q = e_m
            let unit = |i: usize| {
                let mut q = vec![0.0; n];
                q[i] = 1.0;
                ParticleSystem::new(s.positions().to_vec(), q, 1.0).unwrap()
            };
            let a = real_space_sum(&unit(3), xi, 0.6, per).unwrap();
            let b = real_space_sum(&unit(11), xi, 0.6, per).unwrap();
            assert!((a[11] - b[3]).abs() < 1e-15 * a[11].abs().max(1e-300));
        }
    }

    #[test]
    fn self_term_values() {
        assert_eq!(self_term(0.0, 3.0), 0.0);
        assert!((self_term(1.0, PI.sqrt()) + 2.0).abs() < 1e-15);
        assert!((self_term(-2.0, 1.0) - 4.0 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cutoff_growth_is_below_tolerance() {
        let s = generate_random_system(60, 1.0, 12).unwrap();
        let eps: f64 = 1e-10;
        let xi = 8.0;
        let rc = (-eps.ln()).sqrt() / xi;
        let a = real_space_sum(&s, xi, rc, Periodicity::TRIPLY).unwrap();
        let b = real_space_sum(&s, xi, 1.2 * rc, Periodicity::TRIPLY).unwrap();
        let err = crate::metrics::relative_rms_error(&a, &b).unwrap();
        assert!(err < eps, "{err}");
    }
}
