//! Training loss and its exact gradient.
//!
//! The loss of a batch is the free-run simulation MSE after washout plus a
//! piecewise-linear penalty on the stability constraints `ν`. The MSE gradient
//! is obtained by backpropagation through the whole unrolled subsequence
//! (washout steps included in the state propagation, excluded from the error);
//! the penalty gradient goes through the certifier's norm computations.

use rayon::prelude::*;

use crate::certifier::{nu, nu_vjp};
use crate::datasets::Subsequence;
use crate::error::{Error, Result};
use crate::model::{DeepLstmModel, Gate, ModelState};

/// Coefficients of the stability penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    /// slope above the clearance (`π̄`)
    pub pi_bar: f64,
    /// slope below the clearance (`π̲`)
    pub pi_underbar: f64,
    /// clearance `ε_ν`
    pub eps_nu: f64,
}

/// `(1/n) Σ_i [ π̄·max(ν_i + ε, 0) + π̲·min(ν_i + ε, 0) ]`
pub fn regularizer(nu: &[f64], p: &Penalty) -> f64 {
    if nu.is_empty() {
        return 0.0;
    }
    let sum: f64 = nu
        .iter()
        .map(|&v| {
            let s = v + p.eps_nu;
            p.pi_bar * s.max(0.0) + p.pi_underbar * s.min(0.0)
        })
        .sum();
    sum / nu.len() as f64
}

/// `∂ρ/∂ν_i`. At the kink `ν_i = −ε` the left derivative (`π̲/n`) is used.
pub fn regularizer_slopes(nu: &[f64], p: &Penalty) -> Vec<f64> {
    let n = nu.len() as f64;
    nu.iter()
        .map(|&v| if v + p.eps_nu > 0.0 { p.pi_bar / n } else { p.pi_underbar / n })
        .collect()
}

fn check_batch(batch: &[Subsequence], tau_w: usize) -> Result<usize> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let t_s = first.len().saturating_sub(1);
    for (idx, s) in batch.iter().enumerate() {
        if s.len() != t_s + 1 {
            return Err(Error::Dataset(format!(
                "subsequence {idx} has {} samples, expected {}",
                s.len(),
                t_s + 1
            )));
        }
    }
    if tau_w >= t_s {
        return Err(Error::Config(format!(
            "washout {tau_w} must be shorter than the subsequence length {t_s}"
        )));
    }
    Ok(t_s)
}

/// Free-run MSE over `k ∈ [τ_w + 1, T_s]`, normalized by `|batch|·(T_s − τ_w)`.
pub fn mse_washout(model: &DeepLstmModel, batch: &[Subsequence], tau_w: usize, x0: &ModelState) -> Result<f64> {
    let t_s = check_batch(batch, tau_w)?;
    let norm = (batch.len() * (t_s - tau_w)) as f64;
    let sums: Vec<Result<f64>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for s in chunk {
                acc += sq_error(model, s, tau_w, x0)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / norm)
}

fn sq_error(model: &DeepLstmModel, s: &Subsequence, tau_w: usize, x0: &ModelState) -> Result<f64> {
    let t_s = s.len() - 1;
    let outputs = model.simulate_outputs(x0, &s.u[..t_s + 1])?;
    let mut acc = 0.0;
    for k in (tau_w + 1)..=t_s {
        if outputs[k].len() != s.y[k].len() {
            return Err(Error::Dimension {
                operand: format!("target at step {k}"),
                expected: outputs[k].len(),
                found: s.y[k].len(),
            });
        }
        acc += outputs[k]
            .iter()
            .zip(&s.y[k])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(acc)
}

/// MSE plus stability penalty.
pub fn loss(model: &DeepLstmModel, batch: &[Subsequence], tau_w: usize, p: &Penalty) -> Result<f64> {
    let x0 = ModelState::zeros(model);
    Ok(mse_washout(model, batch, tau_w, &x0)? + regularizer(&nu(model), p))
}

/// Loss value split into its two terms, plus the gradient of their sum.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub mse: f64,
    pub penalty: f64,
    pub grad: DeepLstmModel,
}

impl LossAndGrad {
    pub fn loss(&self) -> f64 {
        self.mse + self.penalty
    }
}

/// Subsequences per parallel work item. Fixed so that the reduction order,
/// and hence the floating-point result, does not depend on the thread count.
const CHUNK: usize = 5;

/// Exact gradient of [`loss`] with respect to every model parameter.
pub fn loss_gradient(model: &DeepLstmModel, batch: &[Subsequence], tau_w: usize, p: &Penalty) -> Result<LossAndGrad> {
    let t_s = check_batch(batch, tau_w)?;
    for s in batch {
        if s.u.iter().any(|u| u.len() != model.n_u()) || s.y.iter().any(|y| y.len() != model.n_y()) {
            return Err(Error::Dimension {
                operand: "subsequence width vs model".into(),
                expected: model.n_u(),
                found: s.u.first().map_or(0, Vec::len),
            });
        }
    }
    let out_scale = 2.0 / (batch.len() * (t_s - tau_w)) as f64;

    let partials: Vec<(f64, DeepLstmModel)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::new(model, t_s);
            let mut grad = model.zeros_like();
            let mut sq = 0.0;
            for s in chunk {
                sq += ws.forward_backward(model, s, tau_w, out_scale, &mut grad);
            }
            (sq, grad)
        })
        .collect();

    let mut grad = model.zeros_like();
    let mut sq = 0.0;
    for (s, g) in &partials {
        sq += s;
        grad.axpy(1.0, g);
    }
    let mse = sq / (batch.len() * (t_s - tau_w)) as f64;

    let nu_v = nu(model);
    let penalty = regularizer(&nu_v, p);
    let slopes = regularizer_slopes(&nu_v, p);
    grad.axpy(1.0, &nu_vjp(model, &slopes));

    Ok(LossAndGrad { mse, penalty, grad })
}

/// Per-layer forward caches, flat `[time][unit]`.
struct LayerCache {
    n: usize,
    /// cell states `c_0 … c_T`
    c: Vec<f64>,
    /// hidden states `h_0 … h_T`
    h: Vec<f64>,
    /// gates at steps `0 … T−1`
    f: Vec<f64>,
    i: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    /// `tanh(c_{k+1})`
    tc: Vec<f64>,
}

struct Workspace {
    layers: Vec<LayerCache>,
    /// per-layer incoming gradients w.r.t. `c_{k+1}`, `h_{k+1}`
    dc: Vec<Vec<f64>>,
    dh: Vec<Vec<f64>>,
    dpre: Vec<[Vec<f64>; 4]>,
    dh_prev: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl Workspace {
    fn new(model: &DeepLstmModel, t_s: usize) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| {
                let n = l.n_c();
                LayerCache {
                    n,
                    c: vec![0.0; (t_s + 1) * n],
                    h: vec![0.0; (t_s + 1) * n],
                    f: vec![0.0; t_s * n],
                    i: vec![0.0; t_s * n],
                    z: vec![0.0; t_s * n],
                    r: vec![0.0; t_s * n],
                    tc: vec![0.0; t_s * n],
                }
            })
            .collect();
        let units = model.units();
        let max_n = units.iter().copied().max().unwrap_or(0);
        Self {
            layers,
            dc: units.iter().map(|&n| vec![0.0; n]).collect(),
            dh: units.iter().map(|&n| vec![0.0; n]).collect(),
            dpre: units.iter().map(|&n| std::array::from_fn(|_| vec![0.0; n])).collect(),
            dh_prev: vec![0.0; max_n],
            y: vec![0.0; model.n_y()],
            dy: vec![0.0; model.n_y()],
        }
    }

    /// Runs one subsequence from the zero state, accumulates the gradient of
    /// `out_scale/2 · Σ_k ‖ŷ_k − y_k‖²` into `grad` and returns the raw sum of
    /// squared errors.
    fn forward_backward(
        &mut self,
        model: &DeepLstmModel,
        s: &Subsequence,
        tau_w: usize,
        out_scale: f64,
        grad: &mut DeepLstmModel,
    ) -> f64 {
        let t_s = s.len() - 1;
        let depth = model.depth();

        // forward
        for cache in &mut self.layers {
            let n = cache.n;
            cache.c[..n].fill(0.0);
            cache.h[..n].fill(0.0);
        }
        for k in 0..t_s {
            for l in 0..depth {
                let (lower, upper) = self.layers.split_at_mut(l);
                let cache = &mut upper[0];
                let n = cache.n;
                let input: &[f64] = if l == 0 {
                    &s.u[k]
                } else {
                    let prev = &lower[l - 1];
                    &prev.h[(k + 1) * prev.n..(k + 2) * prev.n]
                };
                let w = &model.layers()[l];
                let h_k = &cache.h[k * n..(k + 1) * n];
                let span = k * n..(k + 1) * n;
                for g in Gate::ALL {
                    let dst = match g {
                        Gate::Forget => &mut cache.f[span.clone()],
                        Gate::Input => &mut cache.i[span.clone()],
                        Gate::Output => &mut cache.z[span.clone()],
                        Gate::Candidate => &mut cache.r[span.clone()],
                    };
                    dst.copy_from_slice(w.b(g));
                    w.w(g).matvec_add(input, dst);
                    w.u(g).matvec_add(h_k, dst);
                    if g == Gate::Candidate {
                        dst.iter_mut().for_each(|x| *x = x.tanh());
                    } else {
                        dst.iter_mut().for_each(|x| *x = crate::linalg::sigmoid(*x));
                    }
                }
                for j in 0..n {
                    let idx = k * n + j;
                    let c_next = cache.f[idx] * cache.c[idx] + cache.i[idx] * cache.r[idx];
                    let t = c_next.tanh();
                    cache.c[idx + n] = c_next;
                    cache.tc[idx] = t;
                    cache.h[idx + n] = cache.z[idx] * t;
                }
            }
        }

        // output errors and backward pass
        for v in self.dc.iter_mut().chain(self.dh.iter_mut()) {
            v.fill(0.0);
        }
        let top = depth - 1;
        let n_top = self.layers[top].n;
        let mut sq = 0.0;
        for k in (0..t_s).rev() {
            // output read from state k + 1
            let ko = k + 1;
            if ko > tau_w {
                let h = &self.layers[top].h[ko * n_top..(ko + 1) * n_top];
                self.y.copy_from_slice(model.b_o());
                model.u_o().matvec_add(h, &mut self.y);
                for (o, (yh, yt)) in self.dy.iter_mut().zip(self.y.iter().zip(&s.y[ko])) {
                    let e = yh - yt;
                    sq += e * e;
                    *o = out_scale * e;
                }
                grad.u_o_mut().add_outer(1.0, &self.dy, h);
                grad.b_o_mut().iter_mut().zip(&self.dy).for_each(|(g, d)| *g += d);
                model.u_o().matvec_t_add(&self.dy, &mut self.dh[top]);
            }

            for l in (0..depth).rev() {
                let w = &model.layers()[l];
                let cache = &self.layers[l];
                let n = cache.n;
                let base = k * n;
                let [dpf, dpi, dpz, dpr] = &mut self.dpre[l];
                let dc = &mut self.dc[l];
                let dh = &self.dh[l];
                for j in 0..n {
                    let idx = base + j;
                    let t = cache.tc[idx];
                    let z = cache.z[idx];
                    let dcn = dc[j] + dh[j] * z * (1.0 - t * t);
                    let f = cache.f[idx];
                    let i = cache.i[idx];
                    let r = cache.r[idx];
                    dpz[j] = dh[j] * t * z * (1.0 - z);
                    dpf[j] = dcn * cache.c[idx] * f * (1.0 - f);
                    dpi[j] = dcn * r * i * (1.0 - i);
                    dpr[j] = dcn * i * (1.0 - r * r);
                    // carried to c_k
                    dc[j] = dcn * f;
                }
                let h_k = &cache.h[base..base + n];
                let gl = &mut grad.layers_mut()[l];
                let dh_prev = &mut self.dh_prev[..n];
                dh_prev.fill(0.0);
                for g in Gate::ALL {
                    let dp = &self.dpre[l][g.index()];
                    gl.u_mut(g).add_outer(1.0, dp, h_k);
                    gl.b_mut(g).iter_mut().zip(dp).for_each(|(b, d)| *b += d);
                    w.u(g).matvec_t_add(dp, dh_prev);
                }
                if l == 0 {
                    for g in Gate::ALL {
                        gl.w_mut(g).add_outer(1.0, &self.dpre[l][g.index()], &s.u[k]);
                    }
                } else {
                    let lower = &mut self.dh[..l];
                    let prev_n = self.layers[l - 1].n;
                    let input = &self.layers[l - 1].h[(k + 1) * prev_n..(k + 2) * prev_n];
                    for g in Gate::ALL {
                        let dp = &self.dpre[l][g.index()];
                        gl.w_mut(g).add_outer(1.0, dp, input);
                        // input of layer l is h_{k+1} of layer l − 1
                        w.w(g).matvec_t_add(dp, &mut lower[l - 1]);
                    }
                }
                self.dh[l].copy_from_slice(&self.dh_prev[..n]);
            }
        }
        sq
    }
}
