use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Optimizer state. Moment buffers are keyed by the position of each
/// parameter in the flattened `(network, tensor)` order passed to `step`,
/// so callers must pass the same networks in the same order every time.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every non-frozen network and clears all
    /// gradient buffers, frozen ones included.
    pub fn step(&mut self, nets: &mut [&mut Network]) -> Result<()> {
        for net in nets.iter() {
            if net.is_frozen() {
                continue;
            }
            let name = net.name();
            for (i, t) in net.params().enumerate() {
                if t.grad().is_none() {
                    return Err(Error::MissingGradient(format!("{name}[{i}]")));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let cfg = self.config;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);

        let mut slot = 0;
        for net in nets.iter_mut() {
            let frozen = net.is_frozen();
            let name = net.name().to_string();
            for (i, param) in net.params_mut().enumerate() {
                let this_slot = slot;
                slot += 1;
                if frozen {
                    param.zero_grad();
                    continue;
                }
                let grad = param.grad().expect("checked above").to_vec();
                param.zero_grad();
                match cfg.kind {
                    OptimizerKind::Sgd => {
                        for (w, g) in param.data_mut().iter_mut().zip(&grad) {
                            *w -= cfg.learning_rate * g;
                        }
                    }
                    OptimizerKind::Adam => {
                        if self.first.len() <= this_slot {
                            self.first.resize(this_slot + 1, Vec::new());
                            self.second.resize(this_slot + 1, Vec::new());
                        }
                        if self.first[this_slot].is_empty() {
                            self.first[this_slot] = vec![0.0; grad.len()];
                            self.second[this_slot] = vec![0.0; grad.len()];
                        }
                        if self.first[this_slot].len() != grad.len() {
                            return Err(Error::OptimizerMismatch(format!("{name}[{i}]")));
                        }
                        let m = &mut self.first[this_slot];
                        let v = &mut self.second[this_slot];
                        for (((w, g), m), v) in param.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                            let m_hat = *m / bias1;
                            let v_hat = *v / bias2;
                            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{Activation, DenseLayer};
    use crate::nn::tensor::Tensor;

    fn scalar_net(w: f64) -> Network {
        let layer = DenseLayer::new(
            Tensor::matrix(1, 1, vec![w]).unwrap(),
            Tensor::zeros(vec![1]),
            Activation::Linear,
        )
        .unwrap();
        Network::new("scalar", vec![layer]).unwrap()
    }

    fn set_grads(net: &mut Network, g: f64) {
        for t in net.params_mut() {
            let n = t.len();
            t.accumulate_grad(&vec![g; n]);
        }
    }

    #[test]
    fn sgd_update_rule() {
        let mut net = scalar_net(1.0);
        set_grads(&mut net, 2.0);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1));
        opt.step(&mut [&mut net]).unwrap();
        assert!((net.layers()[0].weights.data()[0] - 0.8).abs() < 1e-15);
        assert!(net.params().all(|t| t.grad().is_none()));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = scalar_net(1.0);
        set_grads(&mut net, 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3));
        opt.step(&mut [&mut net]).unwrap();
        let w = net.layers()[0].weights.data()[0];
        assert!((1.0 - w - 1e-3).abs() < 1e-9, "moved by {}", 1.0 - w);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn frozen_network_is_untouched() {
        let mut frozen = scalar_net(0.7);
        frozen.freeze();
        let before = frozen.flat_params();
        let mut live = scalar_net(0.3);
        let mut opt = Optimizer::new(OptimizerConfig::default());
        for _ in 0..5 {
            set_grads(&mut frozen, 3.0);
            set_grads(&mut live, 1.0);
            opt.step(&mut [&mut frozen, &mut live]).unwrap();
        }
        let after = frozen.flat_params();
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(frozen.params().all(|t| t.grad().is_none()));
        assert_ne!(live.layers()[0].weights.data()[0], 0.3);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut net = scalar_net(1.0);
        let mut opt = Optimizer::new(OptimizerConfig::default());
        assert!(matches!(opt.step(&mut [&mut net]), Err(Error::MissingGradient(_))));
        assert_eq!(opt.steps(), 0);
    }
}
