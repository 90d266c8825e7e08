mod common;

use common::{random_model, random_subsequence, small_pipeline_config, PAPER_PENALTY};
use deep_lstm_iss::certifier::nu;
use deep_lstm_iss::datasets::{generate_dataset, Subsequence};
use deep_lstm_iss::model::ModelState;
use deep_lstm_iss::trainer::{loss, mse_washout, regularizer, train, Penalty};
use deep_lstm_iss::{pipeline, DeepLstmModel, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn mse_matches_hand_rolled_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = random_model(&mut rng, 1, &[3, 2], 2, 1.0);
    let s = random_subsequence(&mut rng, 4, 1, 2);
    let y = m.simulate(&ModelState::zeros(&m), &s.u).unwrap().outputs;
    let mut acc = 0.0;
    for k in 2..=4 {
        for c in 0..2 {
            acc += (y[k][c] - s.y[k][c]).powi(2);
        }
    }
    let got = mse_washout(&m, &[s], 1, &ModelState::zeros(&m)).unwrap();
    assert!((got - acc / 3.0).abs() < 1e-15);
}

#[test]
fn constant_residual_of_zero_model() {
    let m = DeepLstmModel::zeros(1, &[2, 2], 2).unwrap();
    let s = Subsequence {
        u: vec![vec![0.4]; 11],
        y: vec![vec![0.3, -0.4]; 11],
        experiment: 0,
        start: 0,
    };
    let got = mse_washout(&m, &[s.clone(), s], 3, &ModelState::zeros(&m)).unwrap();
    assert!((got - 0.25).abs() < 1e-15);
}

#[test]
fn washout_steps_do_not_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = random_model(&mut rng, 1, &[3], 1, 1.0);
    let s = random_subsequence(&mut rng, 12, 1, 1);
    let x0 = ModelState::zeros(&m);
    let base = mse_washout(&m, std::slice::from_ref(&s), 5, &x0).unwrap();
    let mut early = s.clone();
    for k in 0..=5 {
        early.y[k][0] += 10.0;
    }
    assert_eq!(mse_washout(&m, &[early], 5, &x0).unwrap(), base);
    let mut late = s;
    late.y[6][0] += 10.0;
    assert_ne!(mse_washout(&m, &[late], 5, &x0).unwrap(), base);
}

#[test]
fn empty_batch_and_long_washout_are_rejected() {
    let m = DeepLstmModel::zeros(1, &[2], 1).unwrap();
    let x0 = ModelState::zeros(&m);
    assert!(matches!(mse_washout(&m, &[], 1, &x0), Err(Error::EmptyBatch)));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_subsequence(&mut rng, 5, 1, 1);
    assert!(mse_washout(&m, &[s], 5, &x0).is_err());
}

#[test]
fn loss_is_mse_plus_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_model(&mut rng, 1, &[3, 3], 2, 1.0);
    let batch: Vec<_> = (0..3).map(|_| random_subsequence(&mut rng, 8, 1, 2)).collect();
    let x0 = ModelState::zeros(&m);
    let parts = mse_washout(&m, &batch, 2, &x0).unwrap() + regularizer(&nu(&m), &PAPER_PENALTY);
    assert_eq!(loss(&m, &batch, 2, &PAPER_PENALTY).unwrap(), parts);
    let off = Penalty {
        pi_bar: 0.0,
        pi_underbar: 0.0,
        eps_nu: 0.02,
    };
    assert_eq!(loss(&m, &batch, 2, &off).unwrap(), mse_washout(&m, &batch, 2, &x0).unwrap());
}

#[test]
fn smoke_training_improves_and_returns_best_weights() {
    let cfg = small_pipeline_config();
    let ds = generate_dataset(&cfg.data, cfg.seed).unwrap();
    assert_eq!(ds.splits.train.len(), 50);
    let init = cfg.init_model().unwrap();
    let (model, report) = train(&init, &ds.splits.train, &ds.splits.val, &cfg.train).unwrap();
    assert_eq!(report.stopping_epoch, 20);
    assert!(report.best_val_mse < report.epochs[0].val_mse);
    // best-so-far is non-increasing and the returned weights score the minimum
    let min = report.epochs.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
    assert!(report.best_val_mse <= min);
    let x0 = ModelState::zeros(&model);
    assert_eq!(mse_washout(&model, &ds.splits.val, cfg.train.tau_w, &x0).unwrap(), report.best_val_mse);
    assert_eq!(report.final_margin, deep_lstm_iss::certify(&model).margin);
}

#[test]
fn patience_stops_early() {
    let mut cfg = small_pipeline_config();
    // steps too small to change any weight: validation never improves
    cfg.train.learning_rate = 1e-300;
    cfg.train.patience = 3;
    cfg.train.max_epochs = 50;
    let ds = generate_dataset(&cfg.data, cfg.seed).unwrap();
    let (_, report) = train(&cfg.init_model().unwrap(), &ds.splits.train, &ds.splits.val, &cfg.train).unwrap();
    assert_eq!(report.best_epoch, 0);
    assert_eq!(report.stopping_epoch, 3);
}

#[test]
fn pipeline_is_reproducible() {
    let mut cfg = small_pipeline_config();
    cfg.train.max_epochs = 3;
    let run = || {
        let ds = generate_dataset(&cfg.data, cfg.seed).unwrap();
        pipeline::train_on(&cfg, &ds, |_| {}).unwrap()
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(deep_lstm_iss::persist::model_to_json(&a), deep_lstm_iss::persist::model_to_json(&b));
    assert_eq!(ra, rb);
    assert!(ra.final_fit.is_some());
}

#[test]
fn mismatched_subsequence_length_is_rejected() {
    let cfg = small_pipeline_config();
    let ds = generate_dataset(&cfg.data, cfg.seed).unwrap();
    let mut tc = cfg.train.clone();
    tc.t_s = 30;
    assert!(train(&cfg.init_model().unwrap(), &ds.splits.train, &ds.splits.val, &tc).is_err());
}
