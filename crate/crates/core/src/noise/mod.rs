//! Discrete cylindrical Brownian motion.
//!
//! A [`NoiseLattice`] holds Brownian increments at the finest time resolution
//! of an experiment, one column per spatial basis direction. Coarser schemes
//! sum blocks of rows with [`coarsen`], so every scheme and the reference see
//! the same Brownian path.
//!
//! Draws are stateless: increment `(j, k)` of sample `s` under experiment seed
//! `seed` is a pure function of `(seed, s, j, k)` through Philox4x32-10, so
//! samples can be generated on any thread in any order.

mod normal;
mod philox;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use normal::inverse_normal_cdf;
pub use philox::philox4x32;

const MAGIC: &[u8; 8] = b"SPDENOIS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedDescriptor {
    pub seed: u64,
    pub sample: u64,
}

impl SeedDescriptor {
    pub fn new(seed: u64, sample: u64) -> Self {
        Self { seed, sample }
    }
}

/// Standard normal draw for cell `(time, space)` of the given stream.
#[inline]
pub fn standard_normal(desc: SeedDescriptor, time: u32, space: u32) -> f64 {
    let key = [desc.seed as u32, (desc.seed >> 32) as u32];
    let counter = [space, time, desc.sample as u32, (desc.sample >> 32) as u32];
    inverse_normal_cdf(philox::open_unit(philox4x32(counter, key)))
}

/// Row-major `rows x cols` array of Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Increments {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "increment data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Increment over the `j`-th step (zero-based).
    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLattice {
    horizon: f64,
    seed: SeedDescriptor,
    increments: Increments,
}

/// Draws the `n_fine x m` lattice of independent `N(0, T/n_fine)` increments.
pub fn generate(n_fine: usize, m: usize, horizon: f64, seed: SeedDescriptor) -> Result<NoiseLattice> {
    if n_fine == 0 || m == 0 {
        return Err(invalid("noise lattice needs positive dimensions"));
    }
    if n_fine > u32::MAX as usize || m > u32::MAX as usize {
        return Err(invalid("noise lattice dimensions exceed the counter range"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let scale = (horizon / n_fine as f64).sqrt();
    let mut data = Vec::with_capacity(n_fine * m);
    for j in 0..n_fine {
        for k in 0..m {
            data.push(scale * standard_normal(seed, j as u32, k as u32));
        }
    }
    Ok(NoiseLattice {
        horizon,
        seed,
        increments: Increments {
            rows: n_fine,
            cols: m,
            data,
        },
    })
}

impl NoiseLattice {
    pub fn n_fine(&self) -> usize {
        self.increments.rows
    }

    pub fn dim(&self) -> usize {
        self.increments.cols
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> SeedDescriptor {
        self.seed
    }

    pub fn increments(&self) -> &Increments {
        &self.increments
    }

    /// Writes the flat binary format: magic `SPDENOIS`, version `u32`,
    /// `n_fine` `u64`, `m` `u64`, `T` `f64`, seed `u64`, sample `u64`, then the
    /// increments row-major; everything little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_fine() as u64).to_le_bytes())?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&self.seed.seed.to_le_bytes())?;
        w.write_all(&self.seed.sample.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.increments.data.len() * 8);
        for x in &self.increments.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(invalid("not a noise lattice file (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(invalid(format!("unsupported noise file version {version}")));
        }
        let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n_fine = next_u64(&mut r)? as usize;
        let m = next_u64(&mut r)? as usize;
        let horizon = f64::from_bits(next_u64(&mut r)?);
        let seed = next_u64(&mut r)?;
        let sample = next_u64(&mut r)?;
        let len = n_fine
            .checked_mul(m)
            .filter(|l| *l <= (1 << 32))
            .ok_or_else(|| invalid("noise file dimensions overflow"))?;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            horizon,
            seed: SeedDescriptor { seed, sample },
            increments: Increments {
                rows: n_fine,
                cols: m,
                data,
            },
        })
    }
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums blocks of `n_fine / n_coarse` consecutive rows.
pub fn coarsen(lattice: &NoiseLattice, n_coarse: usize) -> Result<Increments> {
    coarsen_increments(lattice.increments(), n_coarse)
}

pub fn coarsen_increments(fine: &Increments, n_coarse: usize) -> Result<Increments> {
    if n_coarse == 0 || !fine.rows.is_multiple_of(n_coarse) {
        return Err(invalid(format!(
            "{n_coarse} does not divide the {} fine steps",
            fine.rows
        )));
    }
    let ratio = fine.rows / n_coarse;
    if ratio == 1 {
        return Ok(fine.clone());
    }
    let m = fine.cols;
    let mut data = Vec::with_capacity(n_coarse * m);
    let mut acc = vec![CompensatedSum::default(); m];
    for j in 0..n_coarse {
        acc.iter_mut().for_each(|a| *a = CompensatedSum::default());
        for r in j * ratio..(j + 1) * ratio {
            for (a, x) in acc.iter_mut().zip(fine.row(r)) {
                a.add(*x);
            }
        }
        data.extend(acc.iter().map(CompensatedSum::value));
    }
    Ok(Increments {
        rows: n_coarse,
        cols: m,
        data,
    })
}

impl From<NoiseLattice> for Increments {
    fn from(l: NoiseLattice) -> Self {
        l.increments
    }
}

impl std::fmt::Display for SeedDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "seed {} sample {}", self.seed, self.sample)
    }
}
