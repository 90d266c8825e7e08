//! Dataset directory: `experiment_<k>.csv` per experiment (normalized
//! values) plus `meta.json` with ranges, seeds, regions and window lists.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::split::{materialize, test_sequence};
use super::{DatasetConfig, Experiment, Ranges, Region, Role, Splits, WindowRef};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
const META_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub seed: u64,
    pub extract_seed: u64,
    pub config: DatasetConfig,
    pub ranges: Ranges,
    pub experiment_files: Vec<String>,
    pub samples_per_experiment: Vec<usize>,
    pub regions: Vec<Region>,
    pub train: Vec<WindowRef>,
    pub val: Vec<WindowRef>,
}

impl DatasetMeta {
    pub fn new(cfg: &DatasetConfig, seed: u64, extract_seed: u64, ranges: Ranges, splits: &Splits) -> Self {
        let n = cfg.excitation.len();
        let mut samples = vec![0; n];
        for r in &splits.regions {
            samples[r.experiment] = samples[r.experiment].max(r.end);
        }
        Self {
            format_version: META_VERSION,
            seed,
            extract_seed,
            config: cfg.clone(),
            ranges,
            experiment_files: (1..=n).map(|k| format!("experiment_{k}.csv")).collect(),
            samples_per_experiment: samples,
            regions: splits.regions.clone(),
            train: splits.train_index.clone(),
            val: splits.val_index.clone(),
        }
    }
}

/// Normalized experiments together with their splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub experiments: Vec<Experiment>,
    pub splits: Splits,
}

impl Dataset {
    pub fn n_u(&self) -> usize {
        self.meta.ranges.u.len()
    }

    pub fn n_y(&self) -> usize {
        self.meta.ranges.y.len()
    }

    pub fn t_s(&self) -> usize {
        self.meta.config.split.t_s
    }
}

fn channel_names(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 && prefix == "u" {
        vec!["u".into()]
    } else {
        (1..=n).map(|k| format!("{prefix}{k}")).collect()
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_experiment(path: &Path, e: &Experiment, n_u: usize, n_y: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["t".to_string()];
    header.extend(channel_names("u", n_u));
    header.extend(channel_names("y", n_y));
    w.write_record(&header).map_err(csv_err(path))?;
    let mut row = Vec::with_capacity(header.len());
    for k in 0..e.len() {
        row.clear();
        row.push(e.t[k].to_string());
        row.extend(e.u[k].iter().chain(&e.y[k]).map(f64::to_string));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_experiment(path: &Path, n_u: usize, n_y: usize) -> Result<Experiment> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut expected = vec!["t".to_string()];
    expected.extend(channel_names("u", n_u));
    expected.extend(channel_names("y", n_y));
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(Error::Dataset(format!(
            "{}: header is {:?}, expected {:?}",
            path.display(),
            header.join(","),
            expected.join(",")
        )));
    }
    let mut e = Experiment {
        t: vec![],
        u: vec![],
        y: vec![],
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|err| Error::Dataset(format!("{}: line {}: {err}", path.display(), line + 2)))?;
        e.t.push(vals[0]);
        e.u.push(vals[1..1 + n_u].to_vec());
        e.y.push(vals[1 + n_u..].to_vec());
    }
    Ok(e)
}

/// Writes the dataset directory, creating it if needed.
pub fn save_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (e, name) in ds.experiments.iter().zip(&ds.meta.experiment_files) {
        write_experiment(&dir.join(name), e, ds.n_u(), ds.n_y())?;
    }
    let path = dir.join(META_FILE);
    let mut text = serde_json::to_string_pretty(&ds.meta).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a dataset directory and rebuilds the recorded splits.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path: PathBuf = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    if meta.format_version != META_VERSION {
        return Err(Error::Dataset(format!(
            "{}: unsupported format_version {}",
            path.display(),
            meta.format_version
        )));
    }
    let experiments = meta
        .experiment_files
        .iter()
        .map(|f| read_experiment(&dir.join(f), meta.ranges.u.len(), meta.ranges.y.len()))
        .collect::<Result<Vec<_>>>()?;
    for (k, (e, &n)) in experiments.iter().zip(&meta.samples_per_experiment).enumerate() {
        if e.len() != n {
            return Err(Error::Dataset(format!(
                "experiment {} has {} samples, meta.json records {n}",
                k + 1,
                e.len()
            )));
        }
    }
    let t_s = meta.config.split.t_s;
    let test_region = meta
        .regions
        .iter()
        .find(|r| r.role == Role::Test)
        .ok_or_else(|| Error::Dataset("meta.json has no test region".into()))?;
    let splits = Splits {
        train: materialize(&experiments, &meta.train, t_s)?,
        val: materialize(&experiments, &meta.val, t_s)?,
        test: test_sequence(&experiments, test_region)?,
        regions: meta.regions.clone(),
        train_index: meta.train.clone(),
        val_index: meta.val.clone(),
    };
    Ok(Dataset {
        meta,
        experiments,
        splits,
    })
}
