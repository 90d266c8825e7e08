use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deep_lstm_iss::model::Gate;
use deep_lstm_iss::{save_model, DeepLstmModel, PipelineConfig};

fn dlstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlstm")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = PipelineConfig::default();
    cfg.data.duration_s = 20.0;
    cfg.data.excitation.truncate(3);
    cfg.data.split.t_s = 40;
    cfg.data.split.n_train = 40;
    cfg.data.split.n_val = 20;
    cfg.model.units = vec![4, 4];
    cfg.train.t_s = 40;
    cfg.train.tau_w = 10;
    cfg.train.batch_size = 10;
    cfg.train.max_epochs = 2;
    let path = dir.join("cfg.toml");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn one_error_line(out: &Output, kind: &str) {
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error: {kind}: ")), "{err}");
}

#[test]
fn gen_data_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = dlstm(&["gen-data", "--config", s(&cfg), "--out", s(dir), "--seed", seed]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &Path| fs::read(d.join("experiment_2.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let text = fs::read_to_string(a.join("experiment_1.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,u,y1,y2"));
    assert_eq!(text.lines().count(), 4001);
    assert!(a.join("meta.json").exists());
}

#[test]
fn missing_config_field_is_a_named_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let text = fs::read_to_string(&cfg).unwrap().replace("n_val = 20\n", "");
    fs::write(&cfg, text).unwrap();
    let out = dlstm(&["gen-data", "--config", s(&cfg), "--out", s(&tmp.path().join("d"))]);
    one_error_line(&out, "config");
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_val"));
}

#[test]
fn missing_model_file_is_an_io_error() {
    let out = dlstm(&["certify", "/nonexistent/model.json"]);
    one_error_line(&out, "io");
}

#[test]
fn certify_exit_code_follows_the_margin() {
    let tmp = tempfile::tempdir().unwrap();
    let zero = tmp.path().join("zero.json");
    save_model(&DeepLstmModel::zeros(1, &[8, 8], 2).unwrap(), &zero).unwrap();
    let out = dlstm(&["certify", s(&zero)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("margin -0.500000"));

    let out = dlstm(&["--json", "certify", s(&zero)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["margin"].as_f64(), Some(-0.5));
    assert_eq!(v["iss_gain"].as_f64(), Some(0.0));
    assert_eq!(v["nu"].as_array().unwrap().len(), 4);

    let mut m = DeepLstmModel::zeros(1, &[3, 3], 2).unwrap();
    for x in m.layers_mut()[0].u_mut(Gate::Output).as_mut_slice() {
        *x = 1.0;
    }
    m.layers_mut()[0].b_mut(Gate::Candidate).iter_mut().for_each(|b| *b = 3.0);
    while deep_lstm_iss::certify(&m).margin < 0.0 {
        m.layers_mut()[0].u_mut(Gate::Output).scale(10.0);
    }
    let bad = tmp.path().join("bad.json");
    save_model(&m, &bad).unwrap();
    let out = dlstm(&["certify", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("NOT CERTIFIED"));
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n);
    let cfg = small_config(tmp.path());
    let data = p("data");
    assert!(dlstm(&["gen-data", "--config", s(&cfg), "--out", s(&data)]).status.success());

    let out = dlstm(&[
        "train", "--config", s(&cfg), "--data", s(&data), "--out", s(&p("model.json")), "--report",
        s(&p("report.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 2);
    assert!(report["final_fit"].as_f64().is_some());

    let model_before = fs::read(p("model.json")).unwrap();
    let code = dlstm(&["certify", s(&p("model.json"))]).status.code();
    assert!(code == Some(0) || code == Some(1));

    let out = dlstm(&[
        "evaluate", "--model", s(&p("model.json")), "--data", s(&data), "--out", s(&p("eval.json")),
        "--traces", s(&p("traces.csv")), "--config", s(&cfg),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["washout"].as_u64(), Some(10));
    assert_eq!(eval["fit_percent"].as_f64(), report["final_fit"].as_f64());
    let traces = fs::read_to_string(p("traces.csv")).unwrap();
    assert_eq!(traces.lines().next(), Some("t,y1_true,y1_pred,y2_true,y2_pred"));
    assert_eq!(traces.lines().count(), 1 + 2400);
    // inputs untouched
    assert_eq!(fs::read(p("model.json")).unwrap(), model_before);
}

#[test]
fn simulate_echoes_time_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.json");
    let mut m = DeepLstmModel::zeros(1, &[2], 2).unwrap();
    m.b_o_mut().copy_from_slice(&[0.25, -0.5]);
    save_model(&m, &model).unwrap();
    let input = tmp.path().join("in.csv");
    fs::write(&input, "t,u\n0.0,0.1\n0.005,0.2\n0.01,-0.3\n").unwrap();
    let out_csv = tmp.path().join("out.csv");
    let out = dlstm(&["simulate", "--model", s(&model), "--input", s(&input), "--out", s(&out_csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(&out_csv).unwrap(),
        "t,y1,y2\n0,0.25,-0.5\n0.005,0.25,-0.5\n0.01,0.25,-0.5\n"
    );

    fs::write(&input, "time,x\n0,1\n").unwrap();
    let out = dlstm(&["simulate", "--model", s(&model), "--input", s(&input), "--out", s(&out_csv)]);
    one_error_line(&out, "dataset");
}
