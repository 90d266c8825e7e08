//! `dlstm`: generate surrogate data, train, certify, evaluate and run deep
//! LSTM models.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deep_lstm_iss::datasets::{generate_dataset, load_dataset, save_dataset, Ranges};
use deep_lstm_iss::evaluation::write_traces;
use deep_lstm_iss::{certify, evaluate, load_model, pipeline, save_model, Error, PipelineConfig, Result, TrainConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dlstm", version, about = "Deep LSTM identification with δISS certificates")]
struct Cli {
    /// Override the top-level seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, normalize and split a surrogate dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Print one line per epoch on stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Check the stability conditions of a model; exits 0 iff they hold.
    Certify { model: PathBuf },
    /// Score a model on the test sequence of a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Washout steps; defaults to `train.tau_w` of `--config`, or 20.
        #[arg(long)]
        washout: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a model from the zero state on the inputs of a CSV file.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// CSV with columns `u` (or `u1`, `u2`, …) and optionally `t`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset whose ranges map physical inputs/outputs to model units.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<PipelineConfig> {
    let cfg = PipelineConfig::load(path)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(config, cli.seed)?;
            let ds = generate_dataset(&cfg.data, cfg.seed)?;
            save_dataset(out, &ds)?;
            let summary = json!({
                "out": out,
                "seed": cfg.seed,
                "experiments": ds.experiments.len(),
                "samples_per_experiment": ds.meta.samples_per_experiment,
                "train_subsequences": ds.splits.train.len(),
                "val_subsequences": ds.splits.val.len(),
                "test_samples": ds.splits.test.u.len(),
            });
            if cli.json {
                print_json(&summary);
            } else {
                println!(
                    "wrote {} experiments to {} ({} train / {} val subsequences, {} test samples)",
                    ds.experiments.len(),
                    out.display(),
                    ds.splits.train.len(),
                    ds.splits.val.len(),
                    ds.splits.test.u.len()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            config,
            data,
            out,
            report,
            verbose,
        } => {
            let cfg = load_config(config, cli.seed)?;
            let ds = load_dataset(data)?;
            let (model, rep) = pipeline::train_on(&cfg, &ds, |r| {
                if *verbose {
                    eprintln!(
                        "epoch {:4}  loss {:.6e}  val_mse {:.6e}  margin {:+.5}",
                        r.epoch, r.train_loss, r.val_mse, r.margin
                    );
                }
            })?;
            save_model(&model, out)?;
            write_json(report, &rep)?;
            let fit = rep.final_fit.unwrap_or(f64::NAN);
            if cli.json {
                print_json(&json!({
                    "model": out,
                    "report": report,
                    "stopping_epoch": rep.stopping_epoch,
                    "best_epoch": rep.best_epoch,
                    "best_val_mse": rep.best_val_mse,
                    "margin": rep.final_margin,
                    "fit_percent": fit,
                }));
            } else {
                println!(
                    "trained {} epochs (best {}), val MSE {:.6e}, margin {:+.6}, test FIT {:.2}%",
                    rep.stopping_epoch, rep.best_epoch, rep.best_val_mse, rep.final_margin, fit
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { model } => {
            let m = load_model(model)?;
            let cert = certify(&m);
            if cli.json {
                print_json(&serde_json::to_value(&cert).expect("serializable"));
            } else {
                print_certificate(&cert);
            }
            Ok(if cert.satisfied {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Evaluate {
            model,
            data,
            out,
            traces,
            washout,
            config,
        } => {
            let m = load_model(model)?;
            let ds = load_dataset(data)?;
            let tau_w = match (washout, config) {
                (Some(w), _) => *w,
                (None, Some(c)) => load_config(c, cli.seed)?.train.tau_w,
                (None, None) => TrainConfig::default().tau_w,
            };
            let res = evaluate(&m, &ds.splits.test, tau_w)?;
            write_json(out, &res)?;
            if let Some(t) = traces {
                write_traces(t, &res, &ds.meta.ranges)?;
            }
            if cli.json {
                print_json(&serde_json::to_value(&res).expect("serializable"));
            } else {
                let per: Vec<String> = res.per_channel_fit.iter().map(|f| format!("{f:.2}%")).collect();
                println!(
                    "FIT {:.2}% (per channel {}), test MSE {:.6e}, washout {}, certified {}",
                    res.fit_percent,
                    per.join(", "),
                    res.test_mse,
                    res.washout,
                    res.certified
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            model,
            input,
            out,
            data,
        } => {
            let m = load_model(model)?;
            let ranges = match data {
                Some(d) => Some(load_dataset(d)?.meta.ranges),
                None => None,
            };
            let rows = simulate_csv(&m, input, out, ranges.as_ref())?;
            if cli.json {
                print_json(&json!({ "out": out, "samples": rows }));
            } else {
                println!("wrote {rows} samples to {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_certificate(cert: &deep_lstm_iss::StabilityCertificate) {
    for (l, b) in cert.per_layer.iter().enumerate() {
        println!("layer {}", l + 1);
        println!(
            "  sigma_f {:.6}  sigma_i {:.6}  sigma_z {:.6}  phi_r {:.6}",
            b.sigma_f_bar, b.sigma_i_bar, b.sigma_z_bar, b.phi_r_bar
        );
        println!("  c_bar {:.6}  h_bar {:.6}  alpha_bar {:.6}", b.c_bar, b.h_bar, b.alpha_bar);
        let [a, c] = b.nu();
        println!("  nu {:+.6} {:+.6}", a, c);
    }
    let nu: Vec<String> = cert.nu.iter().map(|v| format!("{v:+.6}")).collect();
    println!("nu [{}]", nu.join(", "));
    println!("margin {:+.6}", cert.margin);
    println!("schur radius {:.6}", cert.schur_radius);
    match cert.iss_gain {
        Some(g) => println!("iss gain {g:.6}"),
        None => println!("iss gain undefined"),
    }
    println!("{}", if cert.satisfied { "CERTIFIED" } else { "NOT CERTIFIED" });
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn simulate_csv(
    model: &deep_lstm_iss::DeepLstmModel,
    input: &Path,
    out: &Path,
    ranges: Option<&Ranges>,
) -> Result<usize> {
    let mut rdr = csv::Reader::from_path(input).map_err(csv_error(input))?;
    let header = rdr.headers().map_err(csv_error(input))?.clone();
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let n_u = model.n_u();
    let u_cols: Vec<usize> = if n_u == 1 {
        find("u").or_else(|| find("u1")).into_iter().collect()
    } else {
        (1..=n_u).filter_map(|k| find(&format!("u{k}"))).collect()
    };
    if u_cols.len() != n_u {
        return Err(Error::Dataset(format!(
            "{}: expected {} input column(s) named {}",
            input.display(),
            n_u,
            if n_u == 1 { "u".to_string() } else { format!("u1..u{n_u}") }
        )));
    }
    let t_col = find("t");
    let mut t = Vec::new();
    let mut u = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error(input))?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Dataset(format!("{}: line {}: {e}", input.display(), line + 2)))
        };
        if let Some(c) = t_col {
            t.push(parse(c)?);
        }
        let mut row = Vec::with_capacity(n_u);
        for (k, &c) in u_cols.iter().enumerate() {
            let v = parse(c)?;
            row.push(ranges.map_or(v, |r| r.u[k].normalize(v)));
        }
        u.push(row);
    }
    let y = model.simulate_outputs(&deep_lstm_iss::ModelState::zeros(model), &u)?;

    let mut w = csv::Writer::from_path(out).map_err(csv_error(out))?;
    let mut head: Vec<String> = Vec::new();
    if t_col.is_some() {
        head.push("t".into());
    }
    head.extend((1..=model.n_y()).map(|k| format!("y{k}")));
    w.write_record(&head).map_err(csv_error(out))?;
    for (k, yk) in y.iter().enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(head.len());
        if t_col.is_some() {
            row.push(t[k].to_string());
        }
        row.extend(
            yk.iter()
                .enumerate()
                .map(|(c, &v)| ranges.map_or(v, |r| r.y[c].denormalize(v)).to_string()),
        );
        w.write_record(&row).map_err(csv_error(out))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(y.len())
}
