//! Surrogate experiment campaign: excitation, plant, normalization, splits
//! and subsequence extraction.

mod plant;
mod prbs;
mod split;
mod store;

pub use plant::{surrogate_plant, PlantParams, PlantResponse};
pub use prbs::{gen_prbs, Piece, PiecewiseUniform};
pub use split::{extract_subsequences, split_and_extract, Region, Role, SplitConfig, Splits, WindowRef};
pub use store::{load_dataset, save_dataset, Dataset, DatasetMeta};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One recorded experiment: input `u` (piston position) and outputs
/// `y = (cylinder pressure, caliper pressure)`, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl Experiment {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn check(&self, idx: usize) -> Result<()> {
        if self.u.len() != self.t.len() || self.y.len() != self.t.len() {
            return Err(Error::Dataset(format!(
                "experiment {} has mismatched lengths (t {}, u {}, y {})",
                idx + 1,
                self.t.len(),
                self.u.len(),
                self.y.len()
            )));
        }
        Ok(())
    }
}

/// Fixed-length window `(u_k, y_k)`, `k = 0..=T_s`, cut from an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsequence {
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// zero-based experiment index
    pub experiment: usize,
    pub start: usize,
}

impl Subsequence {
    /// Number of samples (`T_s + 1`).
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Held-out test stretch, simulated as one long sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSequence {
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub experiment: usize,
    pub start: usize,
}

/// Affine range of one channel. `min == max` marks a constant channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

impl ChannelRange {
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// Maps `[min, max]` onto `[−1, 1]`; a constant channel maps to 0.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            ((2.0 * x - (self.min + self.max)) / (self.max - self.min)).clamp(-1.0, 1.0)
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            (v + 1.0) * 0.5 * (self.max - self.min) + self.min
        }
    }
}

/// Per-channel ranges of inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub u: Vec<ChannelRange>,
    pub y: Vec<ChannelRange>,
}

fn channel_ranges<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, width: usize) -> Vec<ChannelRange> {
    let mut r = vec![
        ChannelRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        width
    ];
    for row in rows {
        for (c, &v) in r.iter_mut().zip(row) {
            c.min = c.min.min(v);
            c.max = c.max.max(v);
        }
    }
    r
}

/// Normalizes every channel onto `[−1, 1]` using the global min/max over all
/// experiments. Returns the normalized experiments and the ranges used.
pub fn normalize(experiments: &[Experiment]) -> Result<(Vec<Experiment>, Ranges)> {
    let first = experiments
        .first()
        .ok_or_else(|| Error::Dataset("no experiments to normalize".into()))?;
    let n_u = first.u.first().map_or(0, Vec::len);
    let n_y = first.y.first().map_or(0, Vec::len);
    for (i, e) in experiments.iter().enumerate() {
        e.check(i)?;
        if e.u.iter().any(|r| r.len() != n_u) || e.y.iter().any(|r| r.len() != n_y) {
            return Err(Error::Dataset(format!("experiment {} has inconsistent channel widths", i + 1)));
        }
        if e.u.iter().chain(&e.y).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("experiment {} data", i + 1)));
        }
    }
    let ranges = Ranges {
        u: channel_ranges(experiments.iter().flat_map(|e| &e.u), n_u),
        y: channel_ranges(experiments.iter().flat_map(|e| &e.y), n_y),
    };
    Ok((apply_ranges(experiments, &ranges, ChannelRange::normalize), ranges))
}

/// Inverse of [`normalize`].
pub fn denormalize(experiments: &[Experiment], ranges: &Ranges) -> Vec<Experiment> {
    apply_ranges(experiments, ranges, ChannelRange::denormalize)
}

fn apply_ranges(experiments: &[Experiment], ranges: &Ranges, f: fn(&ChannelRange, f64) -> f64) -> Vec<Experiment> {
    let map = |rows: &[Vec<f64>], rs: &[ChannelRange]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|row| row.iter().zip(rs).map(|(&v, r)| f(r, v)).collect())
            .collect()
    };
    experiments
        .iter()
        .map(|e| Experiment {
            t: e.t.clone(),
            u: map(&e.u, &ranges.u),
            y: map(&e.y, &ranges.y),
        })
        .collect()
}

/// Excitation distributions of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Excitation {
    /// current levels, A
    pub amplitude: PiecewiseUniform,
    /// hold times, s
    pub dwell_s: PiecewiseUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub duration_s: f64,
    pub fs_hz: f64,
    pub plant: PlantParams,
    /// One entry per experiment.
    pub excitation: Vec<Excitation>,
    pub split: SplitConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let amp = [
            [1.0, 1.0, 1.0, 1.0],
            [2.0, 1.0, 1.0, 1.0],
            [1.0, 2.0, 2.0, 1.0],
            [1.0, 1.0, 1.0, 2.0],
            [3.0, 2.0, 1.0, 1.0],
            [1.0, 1.0, 2.0, 3.0],
        ];
        let dwell = [[1.0, 1.0], [2.0, 1.0], [1.0, 2.0], [1.0, 1.0], [1.0, 2.0], [2.0, 1.0]];
        Self {
            duration_s: 180.0,
            fs_hz: 200.0,
            plant: PlantParams::default(),
            excitation: amp
                .iter()
                .zip(&dwell)
                .map(|(a, d)| Excitation {
                    amplitude: PiecewiseUniform::split(0.0, 10.0, a),
                    dwell_s: PiecewiseUniform::split(0.5, 1.5, d),
                })
                .collect(),
            split: SplitConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.excitation.len() < 2 {
            return Err(Error::Config(format!(
                "data.excitation needs at least 2 experiments (got {})",
                self.excitation.len()
            )));
        }
        if !(self.duration_s > 0.0) || !(self.fs_hz > 0.0) {
            return Err(Error::Config("data.duration_s and data.fs_hz must be positive".into()));
        }
        for (k, e) in self.excitation.iter().enumerate() {
            e.amplitude.validate(&format!("data.excitation[{k}].amplitude"))?;
            e.dwell_s.validate(&format!("data.excitation[{k}].dwell_s"))?;
        }
        self.plant.validate()?;
        self.split.validate()
    }
}

/// Random stream ids; every consumer of the single seed gets its own stream.
pub(crate) mod streams {
    pub const NOISE: u64 = 1;
    pub const EXTRACT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const PRBS_BASE: u64 = 100;
}

/// Derives an independent 64-bit seed for stream `stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Runs the whole surrogate campaign: raw (unnormalized) experiments with
/// `u = x_p` and `y = (P_cyl, P_cal)`.
pub fn generate_experiments(cfg: &DatasetConfig, seed: u64) -> Result<Vec<Experiment>> {
    cfg.validate()?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::NOISE));
    let noise = if cfg.plant.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.plant.noise_std).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(cfg.excitation.len());
    for (k, ex) in cfg.excitation.iter().enumerate() {
        let current = gen_prbs(
            cfg.duration_s,
            cfg.fs_hz,
            &ex.amplitude,
            &ex.dwell_s,
            derive_seed(seed, streams::PRBS_BASE + k as u64),
        )?;
        let r = surrogate_plant(&current, &cfg.plant, cfg.fs_hz)?;
        let mut add = |v: f64| match &noise {
            Some(n) => v + n.sample(&mut noise_rng),
            None => v,
        };
        let n = current.len();
        let mut e = Experiment {
            t: (0..n).map(|i| i as f64 / cfg.fs_hz).collect(),
            u: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
        };
        for i in 0..n {
            e.u.push(vec![add(r.x_p[i])]);
            e.y.push(vec![add(r.p_cyl[i]), add(r.p_cal[i])]);
        }
        out.push(e);
    }
    Ok(out)
}

/// Generates, normalizes and splits a dataset.
pub fn generate_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let raw = generate_experiments(cfg, seed)?;
    let (experiments, ranges) = normalize(&raw)?;
    let extract_seed = derive_seed(seed, streams::EXTRACT);
    let splits = split_and_extract(&experiments, &cfg.split, extract_seed)?;
    Ok(Dataset {
        meta: DatasetMeta::new(cfg, seed, extract_seed, ranges, &splits),
        experiments,
        splits,
    })
}
