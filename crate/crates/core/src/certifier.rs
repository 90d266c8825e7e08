//! Stability certificate for deep LSTMs.
//!
//! For a unity-bounded input, every gate of a layer is confined to an interval
//! determined by the ∞-norm of its augmented weight matrix `[W U b]`. Those
//! bounds give a box-shaped invariant set for the cell and hidden states, and
//! two inequalities per layer on the weights (`ν < 0`) which, when all hold,
//! make the layer-wise incremental dynamics a Schur-stable linear comparison
//! system. The cascade of those comparison systems yields the incremental
//! gain `‖(I − A)⁻¹ B‖₂`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{augmented_row_argmax, eig2_moduli, sigmoid, solve, spectral_norm, top_singular, Matrix};
use crate::model::{DeepLstmModel, Gate, LayerState, LayerWeights, ModelState};

/// Gate bounds, invariant-set radii and incremental coefficients of one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerBounds {
    pub phi_r_bar: f64,
    pub sigma_f_bar: f64,
    pub sigma_i_bar: f64,
    pub sigma_z_bar: f64,
    /// Radius of the cell-state box.
    pub c_bar: f64,
    /// Radius of the hidden-state box, `tanh(c_bar)`.
    pub h_bar: f64,
    pub alpha_bar: f64,
    /// `‖U_f‖₂, ‖U_i‖₂, ‖U_z‖₂, ‖U_r‖₂`
    pub recurrent_norms: [f64; 4],
    /// `‖W_f‖₂, ‖W_i‖₂, ‖W_z‖₂, ‖W_r‖₂`
    pub input_norms: [f64; 4],
}

impl LayerBounds {
    /// Left-hand sides of the two layer inequalities.
    pub fn nu(&self) -> [f64; 2] {
        let q = 0.25 * self.h_bar * self.recurrent_norms[Gate::Output.index()];
        [
            self.sigma_f_bar + self.sigma_z_bar * self.alpha_bar + q - self.sigma_f_bar * q - 1.0,
            self.sigma_f_bar * q - 1.0,
        ]
    }

    /// 2×2 comparison matrix acting on `(‖Δc‖₂, ‖Δh‖₂)`.
    pub fn contraction_block(&self) -> [[f64; 2]; 2] {
        let q = 0.25 * self.h_bar * self.recurrent_norms[Gate::Output.index()];
        [
            [self.sigma_f_bar, self.alpha_bar],
            [
                self.sigma_z_bar * self.sigma_f_bar,
                self.sigma_z_bar * self.alpha_bar + q,
            ],
        ]
    }

    /// Input sensitivity column: same structure as the recurrent coefficient
    /// `alpha_bar`, with input matrices in place of the recurrent ones.
    pub fn input_block(&self) -> [f64; 2] {
        let n = &self.input_norms;
        let beta = 0.25 * self.c_bar * n[Gate::Forget.index()]
            + self.sigma_i_bar * n[Gate::Candidate.index()]
            + 0.25 * self.phi_r_bar * n[Gate::Input.index()];
        [beta, self.sigma_z_bar * beta + 0.25 * self.h_bar * n[Gate::Output.index()]]
    }
}

/// Gate bounds for a single layer.
pub fn layer_bounds(w: &LayerWeights) -> LayerBounds {
    let aug = |g: Gate| {
        augmented_row_argmax(w.w(g), w.u(g), w.b(g))
            .expect("layer weights are shape-checked")
            .1
    };
    let phi_r_bar = aug(Gate::Candidate).tanh();
    let sigma_f_bar = sigmoid(aug(Gate::Forget));
    let sigma_i_bar = sigmoid(aug(Gate::Input));
    let sigma_z_bar = sigmoid(aug(Gate::Output));
    let c_bar = sigma_i_bar * phi_r_bar / (1.0 - sigma_f_bar);
    let h_bar = c_bar.tanh();
    let recurrent_norms = Gate::ALL.map(|g| spectral_norm(w.u(g)));
    let input_norms = Gate::ALL.map(|g| spectral_norm(w.w(g)));
    let alpha_bar = 0.25 * c_bar * recurrent_norms[Gate::Forget.index()]
        + sigma_i_bar * recurrent_norms[Gate::Candidate.index()]
        + 0.25 * phi_r_bar * recurrent_norms[Gate::Input.index()];
    LayerBounds {
        phi_r_bar,
        sigma_f_bar,
        sigma_i_bar,
        sigma_z_bar,
        c_bar,
        h_bar,
        alpha_bar,
        recurrent_norms,
        input_norms,
    }
}

/// The `2L` constraint values, ordered `(ν¹_a, ν¹_b, …, νᴸ_a, νᴸ_b)`.
pub fn nu(model: &DeepLstmModel) -> Vec<f64> {
    model
        .layers()
        .iter()
        .flat_map(|l| layer_bounds(l).nu())
        .collect()
}

/// Gradient of `Σ_i weights[i] · ν_i` with respect to every model parameter.
///
/// Non-smooth points use fixed subgradients: the lowest-index row attaining an
/// ∞-norm, `sign(0) = 0`, and the converged top singular pair for `‖·‖₂`.
pub fn nu_vjp(model: &DeepLstmModel, weights: &[f64]) -> DeepLstmModel {
    assert_eq!(weights.len(), 2 * model.depth(), "one weight per constraint");
    let mut grad = model.zeros_like();
    for (l, (lw, gl)) in model.layers().iter().zip(grad.layers_mut()).enumerate() {
        let (ga, gb) = (weights[2 * l], weights[2 * l + 1]);
        if ga == 0.0 && gb == 0.0 {
            continue;
        }
        let b = layer_bounds(lw);
        let [n_f, n_i, n_z, n_r] = b.recurrent_norms;
        let q = 0.25 * b.h_bar * n_z;

        let mut d_sf = ga * (1.0 - q) + gb * q;
        let d_sz = ga * b.alpha_bar;
        let d_alpha = ga * b.sigma_z_bar;
        let d_q = ga * (1.0 - b.sigma_f_bar) + gb * b.sigma_f_bar;

        let d_h = d_q * 0.25 * n_z;
        let mut d_norm = [0.0; 4];
        d_norm[Gate::Output.index()] += d_q * 0.25 * b.h_bar;

        let mut d_c = d_alpha * 0.25 * n_f;
        d_norm[Gate::Forget.index()] += d_alpha * 0.25 * b.c_bar;
        let mut d_si = d_alpha * n_r;
        d_norm[Gate::Candidate.index()] += d_alpha * b.sigma_i_bar;
        let mut d_phi = d_alpha * 0.25 * n_i;
        d_norm[Gate::Input.index()] += d_alpha * 0.25 * b.phi_r_bar;

        d_c += d_h * (1.0 - b.h_bar * b.h_bar);

        let one_m_sf = 1.0 - b.sigma_f_bar;
        d_si += d_c * b.phi_r_bar / one_m_sf;
        d_phi += d_c * b.sigma_i_bar / one_m_sf;
        d_sf += d_c * b.sigma_i_bar * b.phi_r_bar / (one_m_sf * one_m_sf);

        let d_aug = [
            d_sf * b.sigma_f_bar * (1.0 - b.sigma_f_bar),
            d_si * b.sigma_i_bar * (1.0 - b.sigma_i_bar),
            d_sz * b.sigma_z_bar * (1.0 - b.sigma_z_bar),
            d_phi * (1.0 - b.phi_r_bar * b.phi_r_bar),
        ];

        for g in Gate::ALL {
            let k = g.index();
            if d_aug[k] != 0.0 {
                let (row, _) = augmented_row_argmax(lw.w(g), lw.u(g), lw.b(g))
                    .expect("layer weights are shape-checked");
                add_sign_row(gl.w_mut(g), lw.w(g), row, d_aug[k]);
                add_sign_row(gl.u_mut(g), lw.u(g), row, d_aug[k]);
                gl.b_mut(g)[row] += d_aug[k] * sign(lw.b(g)[row]);
            }
            if d_norm[k] != 0.0 {
                let t = top_singular(lw.u(g));
                gl.u_mut(g).add_outer(d_norm[k], &t.u, &t.v);
            }
        }
    }
    grad
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_sign_row(dst: &mut Matrix, src: &Matrix, row: usize, scale: f64) {
    for c in 0..src.cols() {
        dst[(row, c)] += scale * sign(src[(row, c)]);
    }
}

/// Comparison-system matrices `(A, B)` of the whole cascade.
///
/// `A` is block lower-triangular with the layer blocks on the diagonal; the
/// block in row `l`, column `j < l` propagates a state increment of layer `j`
/// to layer `l` through the hidden-state rows of the intermediate input
/// columns. `B` is a single column (the bound acts on `‖Δu‖₂`).
pub fn cascade_matrices(model: &DeepLstmModel) -> (Matrix, Matrix) {
    let bounds: Vec<LayerBounds> = model.layers().iter().map(layer_bounds).collect();
    cascade_from_bounds(&bounds)
}

fn cascade_from_bounds(bounds: &[LayerBounds]) -> (Matrix, Matrix) {
    let n = bounds.len();
    let blocks: Vec<[[f64; 2]; 2]> = bounds.iter().map(LayerBounds::contraction_block).collect();
    let inputs: Vec<[f64; 2]> = bounds.iter().map(LayerBounds::input_block).collect();
    let mut a = Matrix::zeros(2 * n, 2 * n);
    let mut b = Matrix::zeros(2 * n, 1);
    for l in 0..n {
        for r in 0..2 {
            for c in 0..2 {
                a[(2 * l + r, 2 * l + c)] = blocks[l][r][c];
            }
        }
        for j in 0..l {
            // B⁽ˡ⁾ · Π_{m=l−1}^{j+1} B̃⁽ᵐ⁾ · Ã⁽ʲ⁾
            let chain: f64 = ((j + 1)..l).map(|m| inputs[m][1]).product();
            for r in 0..2 {
                for c in 0..2 {
                    a[(2 * l + r, 2 * j + c)] = inputs[l][r] * chain * blocks[j][1][c];
                }
            }
        }
        // B⁽ˡ⁾ · Π_{m=l−1}^{1} B̃⁽ᵐ⁾
        let chain: f64 = (0..l).map(|m| inputs[m][1]).product();
        for r in 0..2 {
            b[(2 * l + r, 0)] = inputs[l][r] * chain;
        }
    }
    (a, b)
}

/// Spectral radius of the cascade matrix: the block-triangular structure puts
/// every eigenvalue in one of the 2×2 diagonal blocks.
fn cascade_radius(bounds: &[LayerBounds]) -> f64 {
    bounds
        .iter()
        .map(|b| {
            let m = b.contraction_block();
            let [e1, e2] = eig2_moduli(m[0][0], m[0][1], m[1][0], m[1][1]);
            e1.max(e2)
        })
        .fold(0.0, f64::max)
}

fn gain_from(bounds: &[LayerBounds], margin: f64) -> Result<f64> {
    if !(margin < 0.0) {
        return Err(Error::Unsatisfied { margin });
    }
    let (a, b) = cascade_from_bounds(bounds);
    let n = a.rows();
    let mut i_minus_a = Matrix::identity(n);
    for r in 0..n {
        for c in 0..n {
            i_minus_a[(r, c)] -= a[(r, c)];
        }
    }
    let x = solve(&i_minus_a, &b)?;
    Ok(spectral_norm(&x))
}

/// Incremental input-to-state gain `‖(I − A)⁻¹ B‖₂`. Requires `ν < 0`.
pub fn iss_gain(model: &DeepLstmModel) -> Result<f64> {
    let bounds: Vec<LayerBounds> = model.layers().iter().map(layer_bounds).collect();
    let margin = bounds.iter().flat_map(LayerBounds::nu).fold(f64::NEG_INFINITY, f64::max);
    gain_from(&bounds, margin)
}

/// Everything the certifier computes for a model.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityCertificate {
    pub per_layer: Vec<LayerBounds>,
    pub nu: Vec<f64>,
    pub cascade_a: Matrix,
    pub cascade_b: Matrix,
    /// Spectral radius of `cascade_a`.
    pub schur_radius: f64,
    /// `None` when the certificate is not satisfied.
    pub iss_gain: Option<f64>,
    pub satisfied: bool,
    /// `max_i ν_i`
    pub margin: f64,
}

pub fn certify(model: &DeepLstmModel) -> StabilityCertificate {
    let per_layer: Vec<LayerBounds> = model.layers().iter().map(layer_bounds).collect();
    let nu: Vec<f64> = per_layer.iter().flat_map(LayerBounds::nu).collect();
    let margin = nu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let satisfied = margin < 0.0;
    let (cascade_a, cascade_b) = cascade_from_bounds(&per_layer);
    let schur_radius = cascade_radius(&per_layer);
    let iss_gain = gain_from(&per_layer, margin).ok();
    StabilityCertificate {
        per_layer,
        nu,
        cascade_a,
        cascade_b,
        schur_radius,
        iss_gain,
        satisfied,
        margin,
    }
}

impl StabilityCertificate {
    /// Whether `x` lies in the invariant box, with `slack` added to every radius.
    pub fn contains(&self, x: &ModelState, slack: f64) -> bool {
        x.layers.iter().zip(&self.per_layer).all(|(s, b)| {
            s.c.iter().all(|v| v.abs() <= b.c_bar + slack)
                && s.h.iter().all(|v| v.abs() <= b.h_bar + slack)
        })
    }

    /// Uniform sample from the invariant box.
    pub fn sample_state<R: Rng + ?Sized>(&self, model: &DeepLstmModel, rng: &mut R) -> ModelState {
        let layers = model
            .layers()
            .iter()
            .zip(&self.per_layer)
            .map(|(l, b)| LayerState {
                c: (0..l.n_c()).map(|_| b.c_bar * rng.random_range(-1.0..=1.0)).collect(),
                h: (0..l.n_c()).map(|_| b.h_bar * rng.random_range(-1.0..=1.0)).collect(),
            })
            .collect();
        ModelState { layers }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weight_bounds() {
        let b = layer_bounds(&LayerWeights::zeros(2, 3));
        assert_eq!(b.sigma_f_bar, 0.5);
        assert_eq!(b.sigma_i_bar, 0.5);
        assert_eq!(b.sigma_z_bar, 0.5);
        assert_eq!(b.phi_r_bar, 0.0);
        assert_eq!(b.c_bar, 0.0);
        assert_eq!(b.h_bar, 0.0);
        assert_eq!(b.alpha_bar, 0.0);
    }

    #[test]
    fn bias_only_candidate_bound() {
        let mut l = LayerWeights::zeros(1, 2);
        *l.b_mut(Gate::Candidate) = vec![3.0, -1.0];
        let b = layer_bounds(&l);
        assert_relative_eq!(b.phi_r_bar, 3f64.tanh(), max_relative = 1e-15);
        assert_relative_eq!(b.c_bar, 3f64.tanh(), max_relative = 1e-15);
        assert_relative_eq!(b.h_bar, 3f64.tanh().tanh(), max_relative = 1e-15);
    }

    #[test]
    fn zero_model_nu_and_cascade() {
        let m = DeepLstmModel::zeros(1, &[3, 3], 2).unwrap();
        assert_eq!(nu(&m), vec![-0.5, -1.0, -0.5, -1.0]);
        let (a, b) = cascade_matrices(&m);
        let expect = [[0.5, 0.0, 0.0, 0.0], [0.25, 0.0, 0.0, 0.0], [0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.25, 0.0]];
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(a[(r, c)], expect[r][c]);
            }
            assert_eq!(b[(r, 0)], 0.0);
        }
        assert_eq!(iss_gain(&m).unwrap(), 0.0);
    }

    #[test]
    fn single_layer_cascade_is_the_layer_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = DeepLstmModel::random(2, &[4], 1, &mut rng).unwrap();
        let lb = layer_bounds(&m.layers()[0]);
        let (a, b) = cascade_matrices(&m);
        let blk = lb.contraction_block();
        let inp = lb.input_block();
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(a[(r, c)], blk[r][c]);
            }
            assert_eq!(b[(r, 0)], inp[r]);
        }
    }

    #[test]
    fn upper_blocks_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let m = DeepLstmModel::random(1, &[3, 2, 4], 1, &mut rng).unwrap();
        let (a, _) = cascade_matrices(&m);
        for r in 0..6 {
            for c in 0..6 {
                if c / 2 > r / 2 {
                    assert_eq!(a[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn blown_up_recurrent_matrix_breaks_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut m = DeepLstmModel::random(1, &[4, 4], 1, &mut rng).unwrap();
        m.layers_mut()[1].u_mut(Gate::Output).scale(1e3);
        let cert = certify(&m);
        assert!(cert.margin >= 0.0);
        assert!(!cert.satisfied);
        assert!(cert.iss_gain.is_none());
        assert!(matches!(iss_gain(&m), Err(Error::Unsatisfied { .. })));
    }

    #[test]
    fn monotone_in_gate_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let base = LayerWeights::random(2, 3, &mut rng);
        let mut prev = layer_bounds(&base).sigma_f_bar;
        for s in [1.5, 2.0, 4.0, 8.0] {
            let mut l = base.clone();
            l.w_mut(Gate::Forget).scale(s);
            l.u_mut(Gate::Forget).scale(s);
            let cur = layer_bounds(&l).sigma_f_bar;
            assert!(cur >= prev);
            prev = cur;
        }
    }

    #[test]
    fn certified_model_has_schur_cascade() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut hits = 0;
        for k in 0..50 {
            let mut m = DeepLstmModel::random(1, &[3, 3], 1, &mut rng).unwrap();
            let s = 0.2 + 0.04 * k as f64;
            m.layers_mut().iter_mut().for_each(|l| l.scale(s));
            let cert = certify(&m);
            if cert.satisfied {
                hits += 1;
                assert!(cert.schur_radius < 1.0);
                assert!(cert.iss_gain.unwrap() >= 0.0);
            }
        }
        assert!(hits > 0);
    }
}
