use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid adam settings {self:?}")))
        }
    }
}

/// Bias-corrected Adam moments for every parameter of one network.
/// Frozen parameters and running-statistic buffers are never touched.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, network: &Network) -> Result<Self> {
        config.validate()?;
        let m: Vec<Vec<f64>> = network.params().map(|p| vec![0.0; p.value.len()]).collect();
        Ok(Self { config, step: 0, v: m.clone(), m })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn update(&mut self, network: &mut Network) -> Result<()> {
        self.step += 1;
        let mut count = 0;
        for ((p, m), v) in network.params_mut().zip(&mut self.m).zip(&mut self.v) {
            count += 1;
            let Some(grad) = p.grad.as_ref() else { continue };
            if !p.trainable {
                continue;
            }
            if m.len() != grad.len() {
                return Err(Error::Contract("optimizer state does not match network".into()));
            }
            adam_step(&self.config, self.step, p.value.data_mut(), grad, m, v);
        }
        if count != self.m.len() {
            return Err(Error::Contract("optimizer state does not match network".into()));
        }
        Ok(())
    }
}

/// One bias-corrected Adam step at (1-based) step `t`, in place.
pub fn adam_step(config: &AdamConfig, t: u64, values: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]) {
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = *config;
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for (((w, g), m), v) in values.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *w -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{LayerSpec, Mode, Tensor};

    #[test]
    fn first_step_moves_each_weight_by_learning_rate() {
        let mut net = Network::new(vec![2], vec![LayerSpec::dense(1)], 0).unwrap();
        let before = net.snapshot();
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.01), &net).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let y = net.forward(&x, Mode::Train).unwrap();
        net.backward(&Tensor::new(y.shape().to_vec(), vec![1.0]).unwrap()).unwrap();
        adam.update(&mut net).unwrap();
        // With bias correction the first step is lr * sign(g) up to epsilon.
        let after = net.snapshot();
        let w_delta: Vec<f64> = after[0].data().iter().zip(before[0].data()).map(|(a, b)| a - b).collect();
        assert!((w_delta[0] + 0.01).abs() < 1e-8);
        assert!((w_delta[1] - 0.01).abs() < 1e-8);
        assert!((after[1].data()[0] - before[1].data()[0] + 0.01).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_values() {
        let cfg = AdamConfig::default();
        let (mut w, mut m, mut v) = (vec![0.3, -2.0], vec![0.0; 2], vec![0.0; 2]);
        adam_step(&cfg, 1, &mut w, &[0.0, 0.0], &mut m, &mut v);
        assert_eq!(w, vec![0.3, -2.0]);
    }

    #[test]
    fn quadratic_converges() {
        // Reference recurrences run separately end at about -7.2e-6.
        let cfg = AdamConfig::with_learning_rate(0.1);
        let (mut w, mut m, mut v) = ([1.0], [0.0], [0.0]);
        for t in 1..=200 {
            let g = [2.0 * w[0]];
            adam_step(&cfg, t, &mut w, &g, &mut m, &mut v);
        }
        assert!(w[0].abs() < 0.05, "{}", w[0]);
        assert!((w[0] + 7.21798647770884e-06).abs() < 1e-9);
    }

    #[test]
    fn frozen_network_is_unchanged() {
        let mut net = Network::new(vec![2], vec![LayerSpec::dense(3)], 0).unwrap();
        net.freeze();
        let hash = net.parameter_hash();
        let mut adam = Adam::new(AdamConfig::default(), &net).unwrap();
        adam.update(&mut net).unwrap();
        assert_eq!(net.parameter_hash(), hash);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(AdamConfig::with_learning_rate(0.0).validate().is_err());
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
    }
}
