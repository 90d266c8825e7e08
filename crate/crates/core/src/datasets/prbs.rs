//! Multilevel pseudo-random step excitation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One interval of a piecewise-uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

/// Mixture of uniform intervals: pick an interval with probability
/// proportional to its weight, then draw uniformly inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PiecewiseUniform {
    pub pieces: Vec<Piece>,
}

impl PiecewiseUniform {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            pieces: vec![Piece { lo, hi, weight: 1.0 }],
        }
    }

    /// Equal-width intervals spanning `[lo, hi]` with the given weights.
    pub fn split(lo: f64, hi: f64, weights: &[f64]) -> Self {
        let n = weights.len() as f64;
        let w = (hi - lo) / n;
        Self {
            pieces: weights
                .iter()
                .enumerate()
                .map(|(k, &weight)| Piece {
                    lo: lo + w * k as f64,
                    hi: if k + 1 == weights.len() { hi } else { lo + w * (k + 1) as f64 },
                    weight,
                })
                .collect(),
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.pieces.is_empty() {
            return Err(Error::Config(format!("{what}: no intervals")));
        }
        let mut total = 0.0;
        for (k, p) in self.pieces.iter().enumerate() {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo <= p.hi) {
                return Err(Error::Config(format!(
                    "{what}: interval {k} has invalid bounds [{}, {}]",
                    p.lo, p.hi
                )));
            }
            if !(p.weight >= 0.0 && p.weight.is_finite()) {
                return Err(Error::Config(format!("{what}: interval {k} has invalid weight {}", p.weight)));
            }
            total += p.weight;
        }
        if !(total > 0.0) {
            return Err(Error::Config(format!("{what}: weights sum to zero")));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.pieces.iter().map(|p| p.lo).fold(f64::INFINITY, f64::min)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.pieces.iter().map(|p| p.weight).sum();
        let mut pick = rng.random_range(0.0..total);
        let mut chosen = self.pieces.last().expect("validated");
        for p in &self.pieces {
            if p.weight > 0.0 && pick < p.weight {
                chosen = p;
                break;
            }
            pick -= p.weight;
        }
        if chosen.lo == chosen.hi {
            chosen.lo
        } else {
            rng.random_range(chosen.lo..=chosen.hi)
        }
    }
}

/// Piecewise-constant step train of exactly `round(duration_s · fs_hz)`
/// samples. Each level is held for a random dwell time (at least one sample).
pub fn gen_prbs(
    duration_s: f64,
    fs_hz: f64,
    amplitude: &PiecewiseUniform,
    dwell_s: &PiecewiseUniform,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Config(format!("duration must be positive (got {duration_s})")));
    }
    if !(fs_hz > 0.0 && fs_hz.is_finite()) {
        return Err(Error::Config(format!("sampling frequency must be positive (got {fs_hz})")));
    }
    amplitude.validate("amplitude")?;
    dwell_s.validate("dwell")?;
    if !(dwell_s.min() > 0.0) {
        return Err(Error::Config("dwell times must be positive".into()));
    }
    let n = (duration_s * fs_hz).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let level = amplitude.sample(&mut rng);
        let hold = ((dwell_s.sample(&mut rng) * fs_hz).round() as usize).max(1);
        let take = hold.min(n - out.len());
        out.extend(std::iter::repeat_n(level, take));
    }
    Ok(out)
}
