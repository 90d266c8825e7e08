//! JSON model files.
//!
//! ```json
//! { "format_version": 1, "n_u": 1, "n_y": 2,
//!   "layers": [ { "n_c": 8, "W_f": [[..]], "U_f": [[..]], "b_f": [..], ... } ],
//!   "U_o": [[..]], "b_o": [..] }
//! ```
//!
//! Matrices are row-major nested arrays. Floats are written with shortest
//! round-trip formatting, so `save(load(file))` reproduces the file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{DeepLstmModel, Gate, LayerWeights};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    n_u: usize,
    n_y: usize,
    layers: Vec<LayerRecord>,
    #[serde(rename = "U_o")]
    u_o: Matrix,
    b_o: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    n_c: usize,
    #[serde(rename = "W_f")]
    w_f: Matrix,
    #[serde(rename = "U_f")]
    u_f: Matrix,
    b_f: Vec<f64>,
    #[serde(rename = "W_i")]
    w_i: Matrix,
    #[serde(rename = "U_i")]
    u_i: Matrix,
    b_i: Vec<f64>,
    #[serde(rename = "W_z")]
    w_z: Matrix,
    #[serde(rename = "U_z")]
    u_z: Matrix,
    b_z: Vec<f64>,
    #[serde(rename = "W_r")]
    w_r: Matrix,
    #[serde(rename = "U_r")]
    u_r: Matrix,
    b_r: Vec<f64>,
}

impl LayerRecord {
    fn from_weights(l: &LayerWeights) -> Self {
        Self {
            n_c: l.n_c(),
            w_f: l.w(Gate::Forget).clone(),
            u_f: l.u(Gate::Forget).clone(),
            b_f: l.b(Gate::Forget).to_vec(),
            w_i: l.w(Gate::Input).clone(),
            u_i: l.u(Gate::Input).clone(),
            b_i: l.b(Gate::Input).to_vec(),
            w_z: l.w(Gate::Output).clone(),
            u_z: l.u(Gate::Output).clone(),
            b_z: l.b(Gate::Output).to_vec(),
            w_r: l.w(Gate::Candidate).clone(),
            u_r: l.u(Gate::Candidate).clone(),
            b_r: l.b(Gate::Candidate).to_vec(),
        }
    }

    fn into_weights(self, layer: usize, n_in: usize) -> Result<LayerWeights> {
        let ctx = |what: &str, expected: usize, found: usize| {
            Error::InvalidModel(format!(
                "layer {layer}: {what} is {found}, expected {expected}"
            ))
        };
        let n_c = self.n_c;
        let mats = [
            ("W_f", &self.w_f, n_in),
            ("W_i", &self.w_i, n_in),
            ("W_z", &self.w_z, n_in),
            ("W_r", &self.w_r, n_in),
            ("U_f", &self.u_f, n_c),
            ("U_i", &self.u_i, n_c),
            ("U_z", &self.u_z, n_c),
            ("U_r", &self.u_r, n_c),
        ];
        for (name, m, cols) in mats {
            if m.rows() != n_c {
                return Err(ctx(&format!("{name} row count"), n_c, m.rows()));
            }
            if m.cols() != cols {
                return Err(ctx(&format!("{name} column count"), cols, m.cols()));
            }
        }
        for (name, b) in [("b_f", &self.b_f), ("b_i", &self.b_i), ("b_z", &self.b_z), ("b_r", &self.b_r)] {
            if b.len() != n_c {
                return Err(ctx(&format!("{name} length"), n_c, b.len()));
            }
        }
        LayerWeights::new(
            [self.w_f, self.w_i, self.w_z, self.w_r],
            [self.u_f, self.u_i, self.u_z, self.u_r],
            [self.b_f, self.b_i, self.b_z, self.b_r],
        )
        .map_err(|e| Error::InvalidModel(format!("layer {layer}: {e}")))
    }
}

/// Serializes a model to the JSON document described in the module docs.
pub fn model_to_json(model: &DeepLstmModel) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        n_u: model.n_u(),
        n_y: model.n_y(),
        layers: model.layers().iter().map(LayerRecord::from_weights).collect(),
        u_o: model.u_o().clone(),
        b_o: model.b_o().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

/// Parses and validates a model document.
pub fn model_from_json(text: &str) -> Result<DeepLstmModel> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::InvalidModel(format!("malformed model document: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::InvalidModel(format!(
            "unsupported format_version {}, expected {FORMAT_VERSION}",
            file.format_version
        )));
    }
    if file.layers.is_empty() {
        return Err(Error::InvalidModel("layers must not be empty".into()));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut n_in = file.n_u;
    for (idx, rec) in file.layers.into_iter().enumerate() {
        let n_c = rec.n_c;
        layers.push(rec.into_weights(idx + 1, n_in)?);
        n_in = n_c;
    }
    if file.u_o.rows() != file.n_y {
        return Err(Error::InvalidModel(format!(
            "U_o row count is {}, expected n_y = {}",
            file.u_o.rows(),
            file.n_y
        )));
    }
    if file.u_o.cols() != n_in {
        return Err(Error::InvalidModel(format!(
            "U_o column count is {}, expected last layer n_c = {n_in}",
            file.u_o.cols()
        )));
    }
    if file.b_o.len() != file.n_y {
        return Err(Error::InvalidModel(format!(
            "b_o length is {}, expected n_y = {}",
            file.b_o.len(),
            file.n_y
        )));
    }
    DeepLstmModel::new(layers, file.u_o, file.b_o)
}

pub fn save_model(model: &DeepLstmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DeepLstmModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text).map_err(|e| match e {
        Error::InvalidModel(msg) => Error::InvalidModel(format!("{}: {msg}", path.display())),
        other => other,
    })
}
