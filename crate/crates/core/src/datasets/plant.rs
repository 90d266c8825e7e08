//! Synthetic stand-in for a brake-by-wire test rig.
//!
//! Motor current drives the master-cylinder position through a first-order
//! lag. The cylinder pressure follows a saturated cubic stiffness of the
//! position through a second lag. The caliper pressure is the cylinder
//! pressure seen through a delayed, underdamped second-order line, so it
//! reacts later and rings more than the cylinder pressure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// position gain, mm/A
    pub k_x: f64,
    /// actuator time constant, s
    pub tau_x: f64,
    /// linear stiffness, bar/mm
    pub k1: f64,
    /// cubic stiffness, bar/mm³
    pub k3: f64,
    /// stiffness saturation, bar
    pub p_max: f64,
    /// cylinder pressure time constant, s
    pub tau_p: f64,
    /// caliper line natural frequency, rad/s
    pub omega_n: f64,
    /// caliper line damping ratio (< 1)
    pub zeta: f64,
    /// caliper transport delay, samples
    pub delay_samples: usize,
    /// std of additive Gaussian measurement noise on every channel (0 = off)
    pub noise_std: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            k_x: 2.0,
            tau_x: 0.05,
            k1: 1.0,
            k3: 0.004,
            p_max: 60.0,
            tau_p: 0.03,
            omega_n: 25.0,
            zeta: 0.35,
            delay_samples: 4,
            noise_std: 0.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_x", self.tau_x),
            ("tau_p", self.tau_p),
            ("p_max", self.p_max),
            ("omega_n", self.omega_n),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("plant.{name} must be positive (got {v})")));
            }
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Config(format!("plant.zeta must lie in (0, 1) (got {})", self.zeta)));
        }
        if self.delay_samples < 3 {
            return Err(Error::Config(format!(
                "plant.delay_samples must be ≥ 3 (got {})",
                self.delay_samples
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("plant.noise_std must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Static pressure map `p_max · tanh((k1 x + k3 x³) / p_max)`.
    pub fn stiffness(&self, x: f64) -> f64 {
        self.p_max * ((self.k1 * x + self.k3 * x * x * x) / self.p_max).tanh()
    }

    /// Steady state `(x_p, P_cyl, P_cal)` for a held current.
    pub fn steady_state(&self, current: f64) -> (f64, f64, f64) {
        let x = self.k_x * current;
        let p = self.stiffness(x).max(0.0);
        (x, p, p)
    }
}

/// Sampled plant response; index `k` holds the state before input `k` acts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantResponse {
    pub x_p: Vec<f64>,
    pub p_cyl: Vec<f64>,
    pub p_cal: Vec<f64>,
}

/// Simulates the plant from rest. Noise, if enabled, is added by the caller.
pub fn surrogate_plant(current: &[f64], params: &PlantParams, fs_hz: f64) -> Result<PlantResponse> {
    params.validate()?;
    if let Some(k) = current.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("plant input at sample {k}")));
    }
    let dt = 1.0 / fs_hz;
    let a_x = (-dt / params.tau_x).exp();
    let a_p = (-dt / params.tau_p).exp();
    let r = (-params.zeta * params.omega_n * dt).exp();
    let theta = params.omega_n * dt * (1.0 - params.zeta * params.zeta).sqrt();
    let a1 = 2.0 * r * theta.cos();
    let a2 = r * r;
    let gain = 1.0 - a1 + a2;

    let n = current.len();
    let mut x_p = Vec::with_capacity(n);
    let mut p_cyl = Vec::with_capacity(n);
    let mut p_cal = Vec::with_capacity(n);
    let (mut x, mut pc, mut pl, mut pl_prev) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        x_p.push(x);
        p_cyl.push(pc);
        p_cal.push(pl);
        let delayed = if k >= params.delay_samples {
            p_cyl[k - params.delay_samples]
        } else {
            0.0
        };
        let next_pl = (a1 * pl - a2 * pl_prev + gain * delayed).max(0.0);
        let next_pc = (a_p * pc + (1.0 - a_p) * params.stiffness(x)).max(0.0);
        let next_x = a_x * x + (1.0 - a_x) * params.k_x * current[k];
        pl_prev = pl;
        pl = next_pl;
        pc = next_pc;
        x = next_x;
    }
    Ok(PlantResponse { x_p, p_cyl, p_cal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_stays_at_rest() {
        let r = surrogate_plant(&vec![0.0; 500], &PlantParams::default(), 200.0).unwrap();
        assert!(r.x_p.iter().chain(&r.p_cyl).chain(&r.p_cal).all(|&v| v == 0.0));
    }

    #[test]
    fn step_ordering_and_overshoot() {
        let p = PlantParams::default();
        let r = surrogate_plant(&vec![1.0; 1000], &p, 200.0).unwrap();
        let first = |v: &[f64]| v.iter().position(|&x| x > 1e-9).unwrap();
        assert!(first(&r.p_cyl) < first(&r.p_cal));
        let (_, ss, _) = p.steady_state(1.0);
        let peak_cyl = r.p_cyl.iter().copied().fold(0.0, f64::max);
        let peak_cal = r.p_cal.iter().copied().fold(0.0, f64::max);
        let over_cyl = (peak_cyl - ss) / ss;
        let over_cal = (peak_cal - ss) / ss;
        assert!(over_cal > over_cyl, "{over_cal} vs {over_cyl}");
        assert!(over_cal > 0.05);
    }

    #[test]
    fn held_step_converges_to_fixed_point() {
        let p = PlantParams::default();
        for current in [0.5, 4.0, 10.0] {
            let r = surrogate_plant(&vec![current; 4000], &p, 200.0).unwrap();
            // fixed point of the three lags: x = k_x i, P_cyl = P_cal = g(x)
            let x = p.k_x * current;
            let g = p.p_max * ((p.k1 * x + p.k3 * x.powi(3)) / p.p_max).tanh();
            assert_relative_eq!(*r.x_p.last().unwrap(), x, max_relative = 1e-9);
            assert_relative_eq!(*r.p_cyl.last().unwrap(), g, max_relative = 1e-9);
            assert_relative_eq!(*r.p_cal.last().unwrap(), g, max_relative = 1e-9);
        }
    }

    #[test]
    fn full_scale_pressure_range() {
        let (_, p, _) = PlantParams::default().steady_state(10.0);
        assert!(p > 30.0 && p < 50.0, "{p}");
    }
}
