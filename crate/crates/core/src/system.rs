//! Particle systems, periodicity and the plain-text particle file format.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Relative tolerance on `|sum q| / sum |q|` for a system to count as neutral.
pub const NEUTRALITY_TOL: f64 = 1e-12;

/// Point charges in the cubic box `[0, L)^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    positions: Vec<[f64; 3]>,
    charges: Vec<f64>,
    box_len: f64,
}

impl ParticleSystem {
    pub fn new(positions: Vec<[f64; 3]>, charges: Vec<f64>, box_len: f64) -> Result<Self> {
        if !(box_len > 0.0 && box_len.is_finite()) {
            return invalid(format!("box length must be positive, got {box_len}"));
        }
        if positions.len() != charges.len() {
            return invalid(format!(
                "{} positions but {} charges",
                positions.len(),
                charges.len()
            ));
        }
        for (i, x) in positions.iter().enumerate() {
            if x.iter().any(|&c| !(0.0..box_len).contains(&c)) {
                return invalid(format!("particle {i} at {x:?} lies outside [0, {box_len})^3"));
            }
        }
        if let Some(i) = charges.iter().position(|q| !q.is_finite()) {
            return invalid(format!("charge of particle {i} is not finite"));
        }
        Ok(Self {
            positions,
            charges,
            box_len,
        })
    }

    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn charges(&self) -> &[f64] {
        &self.charges
    }

    pub fn box_len(&self) -> f64 {
        self.box_len
    }

    pub fn total_charge(&self) -> f64 {
        self.charges.iter().sum()
    }

    /// Sum of squared charges, `Q` in the approximation error estimates.
    pub fn charge_square_sum(&self) -> f64 {
        self.charges.iter().map(|q| q * q).sum()
    }

    pub fn is_neutral(&self) -> bool {
        let abs: f64 = self.charges.iter().map(|q| q.abs()).sum();
        self.total_charge().abs() <= NEUTRALITY_TOL * abs
    }

    /// Same positions with every charge multiplied by `factor`.
    pub fn scaled_charges(&self, factor: f64) -> Self {
        Self {
            positions: self.positions.clone(),
            charges: self.charges.iter().map(|q| q * factor).collect(),
            box_len: self.box_len,
        }
    }

    /// Translate every particle by `shift` along `axis`, wrapping into `[0, L)`.
    pub fn translated(&self, axis: usize, shift: f64) -> Self {
        let l = self.box_len;
        let positions = self
            .positions
            .iter()
            .map(|x| {
                let mut y = *x;
                let mut c = (y[axis] + shift).rem_euclid(l);
                if c >= l {
                    c = 0.0;
                }
                y[axis] = c;
                y
            })
            .collect();
        Self {
            positions,
            charges: self.charges.clone(),
            box_len: l,
        }
    }

    /// Reorder particles: particle `i` of the result is particle `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            charges: order.iter().map(|&i| self.charges[i]).collect(),
            box_len: self.box_len,
        }
    }

    /// Read the plain-text format: optional `L <value>` header, `#` comments,
    /// then one `x y z q` line per particle.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut box_len = 1.0;
        let mut positions = Vec::new();
        let mut charges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields[0] == "L" {
                if !positions.is_empty() {
                    return Err(parse_err(lineno, "box header after particle lines"));
                }
                if fields.len() != 2 {
                    return Err(parse_err(lineno, "expected `L <value>`"));
                }
                box_len = parse_field(fields[1], lineno)?;
                continue;
            }
            if fields.len() != 4 {
                return Err(parse_err(
                    lineno,
                    &format!("expected 4 fields `x y z q`, found {}", fields.len()),
                ));
            }
            let mut v = [0.0; 4];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = parse_field(f, lineno)?;
            }
            positions.push([v[0], v[1], v[2]]);
            charges.push(v[3]);
        }
        Self::new(positions, charges, box_len)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "L {:e}", self.box_len)?;
        for (x, q) in self.positions.iter().zip(&self.charges) {
            writeln!(out, "{:e} {:e} {:e} {:e}", x[0], x[1], x[2], q)?;
        }
        Ok(())
    }
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(line, &format!("`{s}` is not a number")))
}

/// `N` particles uniform in `[0, L)^3` with alternating unit charges, shifted
/// to zero net charge. Deterministic for a given seed.
pub fn generate_random_system(n: usize, box_len: f64, seed: u64) -> Result<ParticleSystem> {
    if n < 2 {
        return invalid(format!("need at least 2 particles, got {n}"));
    }
    if !(box_len > 0.0) {
        return invalid(format!("box length must be positive, got {box_len}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.gen_range(0.0..box_len),
                rng.gen_range(0.0..box_len),
                rng.gen_range(0.0..box_len),
            ]
        })
        .collect();
    let mut charges: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let mean = charges.iter().sum::<f64>() / n as f64;
    for q in &mut charges {
        *q -= mean;
    }
    ParticleSystem::new(positions, charges, box_len)
}

/// Number of periodic directions. Periodic axes always come first:
/// `D = 2` is periodic in x and y, `D = 1` in x only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Periodicity(u8);

impl Periodicity {
    pub const FREE: Periodicity = Periodicity(0);
    pub const SINGLY: Periodicity = Periodicity(1);
    pub const DOUBLY: Periodicity = Periodicity(2);
    pub const TRIPLY: Periodicity = Periodicity(3);

    pub fn new(d: u8) -> Result<Self> {
        if d > 3 {
            return invalid(format!("periodicity must be 0, 1, 2 or 3, got {d}"));
        }
        Ok(Periodicity(d))
    }

    pub fn all() -> [Periodicity; 4] {
        [Self::FREE, Self::SINGLY, Self::DOUBLY, Self::TRIPLY]
    }

    /// `D`, the number of periodic directions.
    pub fn periodic_dims(self) -> usize {
        self.0 as usize
    }

    /// `3 - D`, the number of free directions.
    pub fn free_dims(self) -> usize {
        3 - self.0 as usize
    }

    pub fn is_periodic(self, axis: usize) -> bool {
        axis < self.0 as usize
    }

    pub fn mask(self) -> [bool; 3] {
        [self.is_periodic(0), self.is_periodic(1), self.is_periodic(2)]
    }
}

impl fmt::Display for Periodicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
