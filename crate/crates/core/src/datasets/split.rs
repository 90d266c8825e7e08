use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Experiment, Subsequence, TestSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Subsequence length in steps (`t_s + 1` samples per subsequence).
    pub t_s: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Share of the test experiment used for validation (its head); the
    /// remaining tail is the test sequence.
    pub test_experiment_val_fraction: f64,
    /// Share of every other experiment used for validation (its tail); the
    /// head is used for training.
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            t_s: 200,
            n_train: 3500,
            n_val: 1000,
            test_experiment_val_fraction: 0.4,
            val_fraction: 0.25,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_s == 0 {
            return Err(Error::Config("data.split.t_s must be ≥ 1".into()));
        }
        for (name, f) in [
            ("test_experiment_val_fraction", self.test_experiment_val_fraction),
            ("val_fraction", self.val_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("data.split.{name} must lie in [0, 1] (got {f})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

/// Half-open sample range `[start, end)` of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub experiment: usize,
    pub start: usize,
    pub end: usize,
    pub role: Role,
}

impl Region {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    fn n_starts(&self, t_s: usize) -> usize {
        (self.len() + 1).saturating_sub(t_s + 1)
    }
}

/// Position of one extracted subsequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub experiment: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub regions: Vec<Region>,
    pub train: Vec<Subsequence>,
    pub val: Vec<Subsequence>,
    pub test: TestSequence,
    pub train_index: Vec<WindowRef>,
    pub val_index: Vec<WindowRef>,
}

/// Region layout: experiment 0 is split into a validation head and a test
/// tail; every other experiment into a training head and a validation tail.
pub fn regions(lengths: &[usize], cfg: &SplitConfig) -> Vec<Region> {
    let cut = |n: usize, frac: f64| ((n as f64) * frac).round() as usize;
    let mut out = Vec::with_capacity(2 * lengths.len());
    for (e, &n) in lengths.iter().enumerate() {
        let (first, second, at) = if e == 0 {
            (Role::Val, Role::Test, cut(n, cfg.test_experiment_val_fraction))
        } else {
            (Role::Train, Role::Val, cut(n, 1.0 - cfg.val_fraction))
        };
        out.push(Region {
            experiment: e,
            start: 0,
            end: at,
            role: first,
        });
        out.push(Region {
            experiment: e,
            start: at,
            end: n,
            role: second,
        });
    }
    out
}

/// Draws `count` window starts uniformly (with replacement) over every valid
/// start position of the given regions.
fn draw(regions: &[Region], t_s: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<WindowRef>> {
    let total: usize = regions.iter().map(|r| r.n_starts(t_s)).sum();
    if count > 0 && total == 0 {
        return Err(Error::Dataset(format!(
            "no region is long enough for a subsequence of {} samples",
            t_s + 1
        )));
    }
    Ok((0..count)
        .map(|_| {
            let mut pick = rng.random_range(0..total);
            for r in regions {
                let n = r.n_starts(t_s);
                if pick < n {
                    return WindowRef {
                        experiment: r.experiment,
                        start: r.start + pick,
                    };
                }
                pick -= n;
            }
            unreachable!("pick < total")
        })
        .collect())
}

/// Cuts the referenced windows out of the experiments.
pub fn materialize(experiments: &[Experiment], refs: &[WindowRef], t_s: usize) -> Result<Vec<Subsequence>> {
    refs.iter()
        .map(|w| {
            let e = experiments.get(w.experiment).ok_or_else(|| {
                Error::Dataset(format!("window refers to missing experiment {}", w.experiment + 1))
            })?;
            let end = w.start + t_s + 1;
            if end > e.len() {
                return Err(Error::Dataset(format!(
                    "window at {} of experiment {} runs past its end ({} samples)",
                    w.start,
                    w.experiment + 1,
                    e.len()
                )));
            }
            Ok(Subsequence {
                u: e.u[w.start..end].to_vec(),
                y: e.y[w.start..end].to_vec(),
                experiment: w.experiment,
                start: w.start,
            })
        })
        .collect()
}

pub(crate) fn test_sequence(experiments: &[Experiment], region: &Region) -> Result<TestSequence> {
    let e = experiments
        .get(region.experiment)
        .filter(|e| region.end <= e.len())
        .ok_or_else(|| Error::Dataset("test region lies outside the data".into()))?;
    let r = region.start..region.end;
    Ok(TestSequence {
        t: e.t[r.clone()].to_vec(),
        u: e.u[r.clone()].to_vec(),
        y: e.y[r].to_vec(),
        experiment: region.experiment,
        start: region.start,
    })
}

fn check_unit_bounded(experiments: &[Experiment]) -> Result<()> {
    for (i, e) in experiments.iter().enumerate() {
        if let Some(k) = e.u.iter().position(|u| u.iter().any(|v| !(v.abs() <= 1.0))) {
            return Err(Error::Dataset(format!(
                "experiment {} input exceeds unit bound at sample {k}; normalize first",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Splits normalized experiments and draws the training and validation
/// subsequences. The first experiment provides the test tail.
pub fn split_and_extract(experiments: &[Experiment], cfg: &SplitConfig, seed: u64) -> Result<Splits> {
    cfg.validate()?;
    if experiments.len() < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 experiments (got {})",
            experiments.len()
        )));
    }
    for (i, e) in experiments.iter().enumerate() {
        e.check(i)?;
        if e.len() < cfg.t_s + 1 {
            return Err(Error::Dataset(format!(
                "experiment {} has {} samples, shorter than t_s + 1 = {}",
                i + 1,
                e.len(),
                cfg.t_s + 1
            )));
        }
    }
    check_unit_bounded(experiments)?;

    let lengths: Vec<usize> = experiments.iter().map(Experiment::len).collect();
    let regions = regions(&lengths, cfg);
    let of = |role| regions.iter().copied().filter(|r| r.role == role).collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_index = draw(&of(Role::Train), cfg.t_s, cfg.n_train, &mut rng)?;
    let val_index = draw(&of(Role::Val), cfg.t_s, cfg.n_val, &mut rng)?;
    let test_region = of(Role::Test)[0];
    if test_region.len() <= cfg.t_s {
        return Err(Error::Dataset(format!(
            "test region has {} samples, need more than t_s = {}",
            test_region.len(),
            cfg.t_s
        )));
    }
    Ok(Splits {
        train: materialize(experiments, &train_index, cfg.t_s)?,
        val: materialize(experiments, &val_index, cfg.t_s)?,
        test: test_sequence(experiments, &test_region)?,
        regions,
        train_index,
        val_index,
    })
}

/// Draws `count` subsequences of `t_s + 1` samples from one whole experiment.
pub fn extract_subsequences(experiment: &Experiment, t_s: usize, count: usize, seed: u64) -> Result<Vec<Subsequence>> {
    experiment.check(0)?;
    if experiment.len() < t_s + 1 {
        return Err(Error::Dataset(format!(
            "experiment has {} samples, shorter than t_s + 1 = {}",
            experiment.len(),
            t_s + 1
        )));
    }
    let region = Region {
        experiment: 0,
        start: 0,
        end: experiment.len(),
        role: Role::Train,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refs = draw(&[region], t_s, count, &mut rng)?;
    materialize(std::slice::from_ref(experiment), &refs, t_s)
}
