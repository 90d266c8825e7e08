#![allow(dead_code)]

use deep_lstm_iss::certifier::certify;
use deep_lstm_iss::datasets::Subsequence;
use deep_lstm_iss::model::Gate;
use deep_lstm_iss::trainer::Penalty;
use deep_lstm_iss::DeepLstmModel;
use rand::Rng;

pub const PAPER_PENALTY: Penalty = Penalty {
    pi_bar: 2e-4,
    pi_underbar: 1e-6,
    eps_nu: 0.02,
};

/// Random model with nonzero biases, all weights scaled by `scale`.
pub fn random_model<R: Rng>(rng: &mut R, n_u: usize, units: &[usize], n_y: usize, scale: f64) -> DeepLstmModel {
    let mut m = DeepLstmModel::random(n_u, units, n_y, rng).unwrap();
    for l in m.layers_mut() {
        for g in Gate::ALL {
            for b in l.b_mut(g).iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        l.scale(scale);
    }
    for b in m.b_o_mut().iter_mut() {
        *b = rng.random_range(-0.5..0.5);
    }
    m
}

/// Shrinks all layer weights geometrically until `max ν ≤ target`.
pub fn rescale_until_margin(mut m: DeepLstmModel, target: f64) -> DeepLstmModel {
    while certify(&m).margin > target {
        m.layers_mut().iter_mut().for_each(|l| l.scale(0.9));
    }
    m
}

pub fn random_inputs<R: Rng>(rng: &mut R, n: usize, n_u: usize, amp: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..n_u).map(|_| rng.random_range(-amp..=amp)).collect())
        .collect()
}

pub fn random_subsequence<R: Rng>(rng: &mut R, t_s: usize, n_u: usize, n_y: usize) -> Subsequence {
    Subsequence {
        u: random_inputs(rng, t_s + 1, n_u, 1.0),
        y: random_inputs(rng, t_s + 1, n_y, 1.0),
        experiment: 0,
        start: 0,
    }
}

/// Central finite differences of `f` with respect to every parameter, in
/// `DeepLstmModel::flatten` order.
pub fn finite_difference(model: &DeepLstmModel, h: f64, f: impl Fn(&DeepLstmModel) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.num_params());
    let mut m = model.clone();
    let blocks = model.params().iter().map(|p| p.len()).collect::<Vec<_>>();
    for (b, len) in blocks.into_iter().enumerate() {
        for i in 0..len {
            let orig = m.params_mut()[b][i];
            m.params_mut()[b][i] = orig + h;
            let plus = f(&m);
            m.params_mut()[b][i] = orig - h;
            let minus = f(&m);
            m.params_mut()[b][i] = orig;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    out
}

/// `|a − b| / max(|a|, |b|, floor)`
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Two short experiments with short subsequences, for fast pipeline tests.
pub fn small_pipeline_config() -> deep_lstm_iss::PipelineConfig {
    let mut cfg = deep_lstm_iss::PipelineConfig::default();
    cfg.data.duration_s = 20.0;
    cfg.data.excitation.truncate(3);
    cfg.data.split.t_s = 40;
    cfg.data.split.n_train = 50;
    cfg.data.split.n_val = 20;
    cfg.model.units = vec![4, 4];
    cfg.train.t_s = 40;
    cfg.train.tau_w = 10;
    cfg.train.batch_size = 10;
    cfg.train.learning_rate = 1e-2;
    cfg.train.max_epochs = 20;
    cfg.with_seed(7)
}
