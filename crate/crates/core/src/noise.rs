//! Seeded Brownian increments with dyadic Brownian-bridge refinement.
//!
//! Every random sequence is keyed by `(seed, purpose, level)` and drawn from
//! the ChaCha stream selected by the path index, so a given increment depends
//! only on those coordinates and never on how many paths are simulated, in
//! which order, or on how many worker threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Identifies one independent random stream: a master seed plus a path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Same seed, different path index.
    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Increments = 0,
    Bridge = 1,
    Auxiliary = 2,
}

/// Standard normal deviates produced by inverse-CDF transform of a
/// counter-based uniform stream.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    fn keyed(seed: RngSeed, purpose: Purpose, level: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&level.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(seed.stream_id);
        Self { rng }
    }

    /// A general-purpose stream for Monte Carlo draws that are not tied to a
    /// Brownian path (e.g. Gaussian samples for martingale checks).
    pub fn new(seed: RngSeed) -> Self {
        Self::keyed(seed, Purpose::Auxiliary, u64::MAX)
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        standard_normal_quantile(self.next_uniform())
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next_normal();
        }
    }
}

/// Inverse of the standard normal CDF on (0, 1).
#[inline]
pub fn standard_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Brownian increments on a uniform grid and its dyadic refinements.
///
/// Level `k` holds `n_steps * 2^k` increments of width `dt / 2^k`. Each
/// increment at level `k` is the sum of its two children at level `k + 1`,
/// up to a single floating-point rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    seed: RngSeed,
    dt: f64,
    levels: Vec<Vec<f64>>,
}

impl BrownianPath {
    /// `n_steps` independent `N(0, dt)` increments.
    pub fn sample(seed: RngSeed, n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        check_dt(dt)?;
        let mut base = vec![0.0; n_steps];
        NormalStream::keyed(seed, Purpose::Increments, 0).fill_normal(&mut base);
        let scale = dt.sqrt();
        base.iter_mut().for_each(|z| *z *= scale);
        Ok(Self {
            seed,
            dt,
            levels: vec![base],
        })
    }

    /// Wraps caller-supplied level-0 increments; `seed` drives any later
    /// refinement.
    pub fn from_increments(seed: RngSeed, dt: f64, increments: Vec<f64>) -> Result<Self> {
        check_dt(dt)?;
        if let Some(bad) = increments.iter().find(|w| !w.is_finite()) {
            return Err(Error::invalid(
                "increments",
                format!("non-finite value {bad}"),
            ));
        }
        Ok(Self {
            seed,
            dt,
            levels: vec![increments],
        })
    }

    /// Returns a copy refined down to `target_level` by Brownian-bridge
    /// midpoint sampling. Levels already present are kept untouched.
    pub fn refine(&self, target_level: usize) -> Result<Self> {
        let mut out = self.clone();
        out.refine_in_place(target_level)?;
        Ok(out)
    }

    pub fn refine_in_place(&mut self, target_level: usize) -> Result<()> {
        if target_level < self.depth() {
            return Err(Error::invalid(
                "target_level",
                format!(
                    "{target_level} is coarser than the deepest existing level {}",
                    self.depth()
                ),
            ));
        }
        while self.depth() < target_level {
            let parent_level = self.depth();
            let parent = &self.levels[parent_level];
            // Conditional std of each half given the parent sum: sqrt(dt_parent / 4).
            let half_sd = 0.5 * self.step_size(parent_level).sqrt();
            let mut stream =
                NormalStream::keyed(self.seed, Purpose::Bridge, parent_level as u64 + 1);
            let mut children = Vec::with_capacity(parent.len() * 2);
            for &w in parent {
                let left = 0.5 * w + half_sd * stream.next_normal();
                children.push(left);
                children.push(w - left);
            }
            self.levels.push(children);
        }
        Ok(())
    }

    /// Index of the finest level held.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> Option<&[f64]> {
        self.levels.get(k).map(Vec::as_slice)
    }

    pub fn step_size(&self, k: usize) -> f64 {
        self.dt / (1u64 << k) as f64
    }

    pub fn base_step(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self, k: usize) -> usize {
        self.levels[0].len() << k
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.levels[0].len() as f64
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    /// Standard normal draws independent of the increments, one per step at
    /// level `k`. Used by integrators that sample an extra Gaussian jointly
    /// with each increment.
    pub fn auxiliary_normals(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_steps(k)];
        NormalStream::keyed(self.seed, Purpose::Auxiliary, k as u64).fill_normal(&mut out);
        out
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "dt",
            format!("must be positive and finite, got {dt}"),
        ))
    }
}
