//! Deep LSTM in state-space form.
//!
//! Each layer keeps a cell state `c` and a hidden state `h`:
//!
//! ```text
//! c⁺ = f ∘ c + i ∘ r
//! h⁺ = z ∘ tanh(c⁺)
//! ```
//!
//! with gates `f, i, z = σ(W u + U h + b)` and squashed input
//! `r = tanh(W_r u + U_r h + b_r)`. Layer 1 is driven by the model input,
//! layer `l > 1` by the *updated* hidden state of layer `l − 1`. The output
//! reads the last layer's hidden state before the update: `y = U_o h + b_o`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};

/// The four gated branches of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    /// forget gate `f`
    Forget,
    /// input gate `i`
    Input,
    /// output gate `z`
    Output,
    /// squashed input `r` (tanh branch)
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Candidate];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// Subscript used in persisted files (`W_f`, `U_i`, ...).
    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Output => "z",
            Gate::Candidate => "r",
        }
    }
}

/// Weights of one LSTM layer: input matrices `W_•`, recurrent matrices `U_•`
/// and biases `b_•`, indexed by [`Gate`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    w: [Matrix; 4],
    u: [Matrix; 4],
    b: [Vec<f64>; 4],
}

impl LayerWeights {
    pub fn new(w: [Matrix; 4], u: [Matrix; 4], b: [Vec<f64>; 4]) -> Result<Self> {
        let n_c = u[0].rows();
        let n_in = w[0].cols();
        for g in Gate::ALL {
            let k = g.index();
            let s = g.suffix();
            check_dim(&format!("W_{s} rows"), n_c, w[k].rows())?;
            check_dim(&format!("W_{s} cols"), n_in, w[k].cols())?;
            check_dim(&format!("U_{s} rows"), n_c, u[k].rows())?;
            check_dim(&format!("U_{s} cols"), n_c, u[k].cols())?;
            check_dim(&format!("b_{s} length"), n_c, b[k].len())?;
            if !w[k].is_finite() {
                return Err(Error::NonFinite(format!("W_{s}")));
            }
            if !u[k].is_finite() {
                return Err(Error::NonFinite(format!("U_{s}")));
            }
            if !b[k].iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("b_{s}")));
            }
        }
        if n_c == 0 {
            return Err(Error::InvalidModel("layer with zero units".into()));
        }
        Ok(Self { w, u, b })
    }

    pub fn zeros(n_in: usize, n_c: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(n_c, n_in)),
            u: std::array::from_fn(|_| Matrix::zeros(n_c, n_c)),
            b: std::array::from_fn(|_| vec![0.0; n_c]),
        }
    }

    /// Uniform in `±1/√fan_in` per matrix, zero biases.
    pub fn random<R: Rng + ?Sized>(n_in: usize, n_c: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(n_in, n_c);
        let bound_w = 1.0 / (n_in.max(1) as f64).sqrt();
        let bound_u = 1.0 / (n_c as f64).sqrt();
        for k in 0..4 {
            l.w[k]
                .as_mut_slice()
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-bound_w..=bound_w));
            l.u[k]
                .as_mut_slice()
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-bound_u..=bound_u));
        }
        l
    }

    #[inline]
    pub fn n_c(&self) -> usize {
        self.u[0].rows()
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.w[0].cols()
    }

    #[inline]
    pub fn w(&self, g: Gate) -> &Matrix {
        &self.w[g.index()]
    }

    #[inline]
    pub fn u(&self, g: Gate) -> &Matrix {
        &self.u[g.index()]
    }

    #[inline]
    pub fn b(&self, g: Gate) -> &[f64] {
        &self.b[g.index()]
    }

    #[inline]
    pub fn w_mut(&mut self, g: Gate) -> &mut Matrix {
        &mut self.w[g.index()]
    }

    #[inline]
    pub fn u_mut(&mut self, g: Gate) -> &mut Matrix {
        &mut self.u[g.index()]
    }

    #[inline]
    pub fn b_mut(&mut self, g: Gate) -> &mut Vec<f64> {
        &mut self.b[g.index()]
    }

    /// Multiplies every weight and bias of the layer by `s`.
    pub fn scale(&mut self, s: f64) {
        for k in 0..4 {
            self.w[k].scale(s);
            self.u[k].scale(s);
            self.b[k].iter_mut().for_each(|x| *x *= s);
        }
    }

    fn check_io(&self, u: &[f64], h: &[f64]) -> Result<()> {
        check_dim("layer input", self.n_in(), u.len())?;
        check_dim("hidden state", self.n_c(), h.len())
    }

    /// Gate activations for input `u` and hidden state `h`.
    pub fn gates(&self, u: &[f64], h: &[f64]) -> Result<Gates> {
        self.check_io(u, h)?;
        let mut out = Gates::zeros(self.n_c());
        self.gates_into(u, h, &mut out);
        Ok(out)
    }

    /// Unchecked gate evaluation into a preallocated buffer.
    #[inline]
    pub(crate) fn gates_into(&self, u: &[f64], h: &[f64], out: &mut Gates) {
        for g in Gate::ALL {
            let k = g.index();
            let dst = out.get_mut(g);
            dst.copy_from_slice(&self.b[k]);
            self.w[k].matvec_add(u, dst);
            self.u[k].matvec_add(h, dst);
            match g {
                Gate::Candidate => dst.iter_mut().for_each(|x| *x = x.tanh()),
                _ => dst.iter_mut().for_each(|x| *x = sigmoid(*x)),
            }
        }
    }

    /// One state update of the layer.
    pub fn step(&self, s: &LayerState, u: &[f64]) -> Result<LayerState> {
        self.check_io(u, &s.h)?;
        check_dim("cell state", self.n_c(), s.c.len())?;
        let mut gates = Gates::zeros(self.n_c());
        let mut next = LayerState::zeros(self.n_c());
        self.step_into(s, u, &mut gates, &mut next);
        Ok(next)
    }

    #[inline]
    pub(crate) fn step_into(&self, s: &LayerState, u: &[f64], gates: &mut Gates, next: &mut LayerState) {
        self.gates_into(u, &s.h, gates);
        for j in 0..self.n_c() {
            let c = gates.f[j] * s.c[j] + gates.i[j] * gates.r[j];
            next.c[j] = c;
            next.h[j] = gates.z[j] * c.tanh();
        }
    }
}

fn check_dim(operand: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            operand: operand.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Gate activations of one layer at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
}

impl Gates {
    pub fn zeros(n: usize) -> Self {
        Self {
            f: vec![0.0; n],
            i: vec![0.0; n],
            z: vec![0.0; n],
            r: vec![0.0; n],
        }
    }

    pub fn get(&self, g: Gate) -> &[f64] {
        match g {
            Gate::Forget => &self.f,
            Gate::Input => &self.i,
            Gate::Output => &self.z,
            Gate::Candidate => &self.r,
        }
    }

    pub fn get_mut(&mut self, g: Gate) -> &mut Vec<f64> {
        match g {
            Gate::Forget => &mut self.f,
            Gate::Input => &mut self.i,
            Gate::Output => &mut self.z,
            Gate::Candidate => &mut self.r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LayerState {
    pub fn zeros(n_c: usize) -> Self {
        Self {
            c: vec![0.0; n_c],
            h: vec![0.0; n_c],
        }
    }
}

/// Stacked state `x = [c¹, h¹, …, cᴸ, hᴸ]` of a deep model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub layers: Vec<LayerState>,
}

impl ModelState {
    pub fn zeros(model: &DeepLstmModel) -> Self {
        Self {
            layers: model.layers.iter().map(|l| LayerState::zeros(l.n_c())).collect(),
        }
    }

    /// Flattened `[c¹, h¹, c², h², …]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|s| s.c.iter().chain(s.h.iter()).copied())
            .collect()
    }

    /// Euclidean distance between two stacked states.
    pub fn distance(&self, other: &ModelState) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| {
                a.c.iter()
                    .zip(&b.c)
                    .chain(a.h.iter().zip(&b.h))
                    .map(|(x, y)| (x - y) * (x - y))
            })
            .sum::<f64>()
            .sqrt()
    }

    fn check(&self, model: &DeepLstmModel) -> Result<()> {
        check_dim("state layer count", model.layers.len(), self.layers.len())?;
        for (l, (s, w)) in self.layers.iter().zip(&model.layers).enumerate() {
            check_dim(&format!("layer {} cell state", l + 1), w.n_c(), s.c.len())?;
            check_dim(&format!("layer {} hidden state", l + 1), w.n_c(), s.h.len())?;
        }
        Ok(())
    }
}

/// Cascade of LSTM layers followed by an affine output map.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLstmModel {
    layers: Vec<LayerWeights>,
    u_o: Matrix,
    b_o: Vec<f64>,
}

impl DeepLstmModel {
    pub fn new(layers: Vec<LayerWeights>, u_o: Matrix, b_o: Vec<f64>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidModel("model needs at least one layer".into()));
        };
        for l in 1..layers.len() {
            check_dim(
                &format!("layer {} input width", l + 1),
                layers[l - 1].n_c(),
                layers[l].n_in(),
            )?;
        }
        check_dim("U_o cols", last.n_c(), u_o.cols())?;
        check_dim("b_o length", u_o.rows(), b_o.len())?;
        if !u_o.is_finite() {
            return Err(Error::NonFinite("U_o".into()));
        }
        if !b_o.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("b_o".into()));
        }
        Ok(Self { layers, u_o, b_o })
    }

    pub fn zeros(n_u: usize, units: &[usize], n_y: usize) -> Result<Self> {
        let layers = layer_widths(n_u, units)?
            .map(|(n_in, n_c)| LayerWeights::zeros(n_in, n_c))
            .collect();
        let n_last = *units.last().unwrap_or(&0);
        Self::new(layers, Matrix::zeros(n_y, n_last), vec![0.0; n_y])
    }

    /// Random initialization: every matrix uniform in `±1/√fan_in`, biases zero.
    pub fn random<R: Rng + ?Sized>(n_u: usize, units: &[usize], n_y: usize, rng: &mut R) -> Result<Self> {
        let layers = layer_widths(n_u, units)?
            .map(|(n_in, n_c)| LayerWeights::random(n_in, n_c, rng))
            .collect();
        let n_last = *units.last().unwrap_or(&0);
        let bound = 1.0 / (n_last as f64).sqrt();
        let u_o = Matrix::from_fn(n_y, n_last, |_, _| rng.random_range(-bound..=bound));
        Self::new(layers, u_o, vec![0.0; n_y])
    }

    #[inline]
    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [LayerWeights] {
        &mut self.layers
    }

    #[inline]
    pub fn u_o(&self) -> &Matrix {
        &self.u_o
    }

    #[inline]
    pub fn b_o(&self) -> &[f64] {
        &self.b_o
    }

    #[inline]
    pub fn u_o_mut(&mut self) -> &mut Matrix {
        &mut self.u_o
    }

    #[inline]
    pub fn b_o_mut(&mut self) -> &mut Vec<f64> {
        &mut self.b_o
    }

    #[inline]
    pub fn n_u(&self) -> usize {
        self.layers[0].n_in()
    }

    #[inline]
    pub fn n_y(&self) -> usize {
        self.u_o.rows()
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn units(&self) -> Vec<usize> {
        self.layers.iter().map(LayerWeights::n_c).collect()
    }

    /// Output `U_o hᴸ + b_o` for the given state.
    pub fn output(&self, x: &ModelState) -> Vec<f64> {
        let mut y = self.b_o.clone();
        if let Some(last) = x.layers.last() {
            self.u_o.matvec_add(&last.h, &mut y);
        }
        y
    }

    /// One step of the cascade. Returns the next state and the output read
    /// from the incoming state.
    pub fn step(&self, x: &ModelState, u: &[f64]) -> Result<(ModelState, Vec<f64>)> {
        x.check(self)?;
        check_dim("model input", self.n_u(), u.len())?;
        let y = self.output(x);
        let mut next = x.clone();
        self.step_into(x, u, &mut next, &mut self.gate_buffers());
        Ok((next, y))
    }

    pub(crate) fn gate_buffers(&self) -> Vec<Gates> {
        self.layers.iter().map(|l| Gates::zeros(l.n_c())).collect()
    }

    #[inline]
    pub(crate) fn step_into(&self, x: &ModelState, u: &[f64], next: &mut ModelState, gates: &mut [Gates]) {
        for l in 0..self.layers.len() {
            let (done, rest) = next.layers.split_at_mut(l);
            let input: &[f64] = if l == 0 { u } else { &done[l - 1].h };
            self.layers[l].step_into(&x.layers[l], input, &mut gates[l], &mut rest[0]);
        }
    }

    /// Free-run simulation from `x0`. `states[k]` is the state at time `k`
    /// (so `states[0] == x0`) and `outputs[k]` the output read from it.
    pub fn simulate(&self, x0: &ModelState, inputs: &[Vec<f64>]) -> Result<Trajectory> {
        x0.check(self)?;
        for (k, u) in inputs.iter().enumerate() {
            if u.len() != self.n_u() {
                return Err(Error::Dimension {
                    operand: format!("input at step {k}"),
                    expected: self.n_u(),
                    found: u.len(),
                });
            }
        }
        let mut states = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut gates = self.gate_buffers();
        let mut x = x0.clone();
        let mut next = x0.clone();
        for u in inputs {
            outputs.push(self.output(&x));
            states.push(x.clone());
            self.step_into(&x, u, &mut next, &mut gates);
            std::mem::swap(&mut x, &mut next);
        }
        Ok(Trajectory { states, outputs })
    }

    /// Free-run outputs only, without keeping the state trajectory.
    pub fn simulate_outputs(&self, x0: &ModelState, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x0.check(self)?;
        let mut gates = self.gate_buffers();
        let mut x = x0.clone();
        let mut next = x0.clone();
        let mut outputs = Vec::with_capacity(inputs.len());
        for (k, u) in inputs.iter().enumerate() {
            if u.len() != self.n_u() {
                return Err(Error::Dimension {
                    operand: format!("input at step {k}"),
                    expected: self.n_u(),
                    found: u.len(),
                });
            }
            outputs.push(self.output(&x));
            self.step_into(&x, u, &mut next, &mut gates);
            std::mem::swap(&mut x, &mut next);
        }
        Ok(outputs)
    }

    /// Parameter blocks in a fixed order: per layer and gate `W, U, b`, then
    /// `U_o`, `b_o`.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 12 + 2);
        for l in &self.layers {
            for k in 0..4 {
                out.push(l.w[k].as_slice());
                out.push(l.u[k].as_slice());
                out.push(l.b[k].as_slice());
            }
        }
        out.push(self.u_o.as_slice());
        out.push(&self.b_o);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 12 + 2);
        for l in &mut self.layers {
            for ((w, u), b) in l.w.iter_mut().zip(l.u.iter_mut()).zip(l.b.iter_mut()) {
                out.push(w.as_mut_slice());
                out.push(u.as_mut_slice());
                out.push(b.as_mut_slice());
            }
        }
        out.push(self.u_o.as_mut_slice());
        out.push(&mut self.b_o);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Same shape, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|p| p.fill(0.0));
        z
    }

    /// `self += alpha * other` (shapes must match).
    pub fn axpy(&mut self, alpha: f64, other: &DeepLstmModel) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += alpha * s);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|x| x.is_finite()))
    }
}

fn layer_widths(n_u: usize, units: &[usize]) -> Result<impl Iterator<Item = (usize, usize)> + '_> {
    if units.is_empty() {
        return Err(Error::InvalidModel("model needs at least one layer".into()));
    }
    if n_u == 0 {
        return Err(Error::InvalidModel("model needs at least one input".into()));
    }
    Ok(units
        .iter()
        .scan(n_u, |n_in, &n_c| Some((std::mem::replace(n_in, n_c), n_c))))
}

/// States and outputs of a free-run simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ModelState>,
    pub outputs: Vec<Vec<f64>>,
}
