//! Dataset → trained model → test score, as driven by a [`PipelineConfig`].

use crate::config::PipelineConfig;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::model::DeepLstmModel;
use crate::trainer::{train_with_observer, EpochRecord, TrainReport};

fn check_compatible(cfg: &PipelineConfig, ds: &Dataset) -> Result<()> {
    if ds.n_u() != cfg.model.n_u || ds.n_y() != cfg.model.n_y {
        return Err(Error::Config(format!(
            "model.n_u = {}, model.n_y = {} but the dataset has {} input and {} output channels",
            cfg.model.n_u,
            cfg.model.n_y,
            ds.n_u(),
            ds.n_y()
        )));
    }
    if ds.t_s() != cfg.train.t_s {
        return Err(Error::Config(format!(
            "train.t_s = {} but the dataset subsequences have t_s = {}",
            cfg.train.t_s,
            ds.t_s()
        )));
    }
    Ok(())
}

/// Initializes, trains and scores a model on `ds`; the report carries the
/// test FIT of the returned weights.
pub fn train_on(
    cfg: &PipelineConfig,
    ds: &Dataset,
    observer: impl FnMut(&EpochRecord),
) -> Result<(DeepLstmModel, TrainReport)> {
    cfg.validate()?;
    check_compatible(cfg, ds)?;
    let init = cfg.init_model()?;
    let (model, mut report) = train_with_observer(&init, &ds.splits.train, &ds.splits.val, &cfg.train, observer)?;
    report.final_fit = Some(evaluate(&model, &ds.splits.test, cfg.train.tau_w)?.fit_percent);
    Ok((model, report))
}
