use crate::model::DeepLstmModel;

/// RMSProp without momentum:
///
/// ```text
/// s ← ρ s + (1 − ρ) g²
/// w ← w − η g / (√s + ε)
/// ```
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    square_avg: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(model: &DeepLstmModel, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            decay,
            epsilon,
            square_avg: model.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut DeepLstmModel, grad: &DeepLstmModel) {
        let (lr, rho, eps) = (self.learning_rate, self.decay, self.epsilon);
        for ((w, g), s) in model
            .params_mut()
            .into_iter()
            .zip(grad.params())
            .zip(self.square_avg.iter_mut())
        {
            for ((w, &g), s) in w.iter_mut().zip(g).zip(s.iter_mut()) {
                *s = rho * *s + (1.0 - rho) * g * g;
                *w -= lr * g / (s.sqrt() + eps);
            }
        }
    }
}
