//! Paired pluggable residual modules.
//!
//! Alice's block adds a learned perturbation `δ = F_Alice(x)` to each
//! codeword; Bob's block subtracts its estimate of perturbation plus
//! channel noise, `x̂ = y′ − F_Bob(y′)`. Both are trained jointly on
//!
//! ```text
//! L = λ_pow · mean(max(0, ‖δ‖²/N − ε)) + λ_com · mse(ŝ, s) + λ_pri · mean(z_true)
//! ```
//!
//! where `z_true` is the eavesdropping classifier's softmax confidence in
//! the true label. The base pipeline and the classifier stay frozen.

use serde::{Deserialize, Serialize};

use crate::adversary::Classifier;
use crate::data::{self, ImageDataset};
use crate::error::{Error, Result};
use crate::nn::{Activation, BoundNetwork, Graph, Network, Optimizer, OptimizerConfig, Tensor, Var};
use crate::rng::{self, Rng};
use crate::semcom::{self, BoundPipeline, ChannelConfig, LossHistory, Perturb, Restore, SemPipeline, LATENT_DIM};

/// Reported PSR when the perturbation is identically zero.
pub const PSR_FLOOR_DB: f64 = -300.0;
pub const SMOOTHING_WINDOW: usize = 100;

/// 23→23→64→23 with a zero-initialised output layer, so a fresh block is an
/// exact identity residual.
fn residual_block(name: &str, rng: &mut Rng) -> Network {
    use Activation::*;
    let mut net = Network::init(name, LATENT_DIM, &[(LATENT_DIM, Relu), (64, Relu), (LATENT_DIM, Linear)], rng);
    let last = net.layers_mut().last_mut().expect("three layers");
    last.weights.data_mut().fill(0.0);
    last.bias.data_mut().fill(0.0);
    net
}

fn check_width(x: &Tensor, block: &Network) -> Result<()> {
    if x.cols() != block.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "residual module input",
            expected: block.input_dim(),
            actual: x.cols(),
        });
    }
    Ok(())
}

/// Transmitter module: `x′ = x + F_Alice(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArnAlice {
    pub block: Network,
}

impl ArnAlice {
    pub fn new(rng: &mut Rng) -> Self {
        Self {
            block: residual_block("alice", rng),
        }
    }

    /// Returns `(x′, δ)`. `x′` is not re-normalised.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        check_width(x, &self.block)?;
        let delta = self.block.forward(x)?;
        let data = x.data().iter().zip(delta.data()).map(|(a, d)| a + d).collect();
        Ok((Tensor::new(x.shape().to_vec(), data)?, delta))
    }
}

impl Perturb for ArnAlice {
    fn perturb(&self, x: &Tensor, _labels: &[usize]) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }
}

/// Receiver module: `x̂ = y′ − F_Bob(y′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArnBob {
    pub block: Network,
}

impl ArnBob {
    pub fn new(rng: &mut Rng) -> Self {
        Self {
            block: residual_block("bob", rng),
        }
    }

    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        check_width(y, &self.block)?;
        let o = self.block.forward(y)?;
        let data = y.data().iter().zip(o.data()).map(|(a, b)| a - b).collect();
        Tensor::new(y.shape().to_vec(), data)
    }
}

impl Restore for ArnBob {
    fn restore(&self, y: &Tensor) -> Result<Tensor> {
        self.forward(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecureLossConfig {
    pub lambda_pow: f64,
    pub lambda_com: f64,
    pub lambda_pri: f64,
    /// Per-dimension power limit of `δ`, relative to unit signal power.
    pub epsilon: f64,
}

impl Default for SecureLossConfig {
    fn default() -> Self {
        Self {
            lambda_pow: 0.1,
            lambda_com: 0.5,
            lambda_pri: 0.01,
            epsilon: 0.1,
        }
    }
}

impl SecureLossConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_pow, self.lambda_com, self.lambda_pri];
        if lambdas.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if lambdas.iter().all(|&l| l == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// `λ_pow·pow + λ_com·com + λ_pri·pri`.
    pub fn combine(&self, pow: f64, com: f64, pri: f64) -> f64 {
        self.lambda_pow * pow + self.lambda_com * com + self.lambda_pri * pri
    }
}

/// Power hinge `mean(max(0, ‖δ_row‖²/N − ε))`.
pub fn loss_pow(g: &mut Graph, delta: Var, epsilon: f64) -> Result<Var> {
    g.power_hinge(delta, epsilon)
}

/// Reconstruction MSE of the legitimate link.
pub fn loss_com(g: &mut Graph, s_hat: Var, s: Var) -> Result<Var> {
    g.mse(s_hat, s)
}

/// Mean softmax confidence of the classifier in the true label.
pub fn loss_pri(g: &mut Graph, classifier: &BoundNetwork, y_eve: Var, labels: &[usize]) -> Result<Var> {
    let logits = classifier.forward(g, y_eve)?;
    let probs = g.softmax(logits);
    g.pick_mean(probs, labels)
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub pow: Var,
    pub com: Var,
    pub pri: Var,
}

pub fn composite_loss(g: &mut Graph, parts: LossParts, cfg: &SecureLossConfig) -> Result<Var> {
    let pow = g.scale(parts.pow, cfg.lambda_pow);
    let com = g.scale(parts.com, cfg.lambda_com);
    let pri = g.scale(parts.pri, cfg.lambda_pri);
    let head = g.add(pow, com)?;
    g.add(head, pri)
}

/// One batch of inputs to the secure objective. Noise is supplied by the
/// caller so the objective is a deterministic function of the parameters.
pub struct SecureBatch<'a> {
    pub codewords: &'a Tensor,
    pub images: &'a Tensor,
    pub labels: &'a [usize],
    pub bob_noise: &'a Tensor,
    pub eve_noise: &'a Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct SecureTerms {
    pub total: Var,
    pub parts: LossParts,
    pub delta: Var,
}

/// Networks bound to a graph for one evaluation of the secure objective.
pub struct BoundSecure {
    pub alice: BoundNetwork,
    pub bob: BoundNetwork,
    pub base: BoundPipeline,
    pub classifier: BoundNetwork,
}

impl BoundSecure {
    /// Binds Alice and Bob with gradient tracking and the frozen
    /// components as constants.
    pub fn new(g: &mut Graph, alice: &ArnAlice, bob: &ArnBob, base: &SemPipeline, classifier: &Classifier) -> Self {
        Self {
            alice: alice.block.bind(g),
            bob: bob.block.bind(g),
            base: base.bind_constant(g),
            classifier: classifier.net.bind_constant(g),
        }
    }

    pub fn objective(&self, g: &mut Graph, batch: &SecureBatch<'_>, cfg: &SecureLossConfig) -> Result<SecureTerms> {
        let x = g.constant(batch.codewords);
        let delta = self.alice.forward(g, x)?;
        let x_prime = g.add(x, delta)?;

        let n = g.constant(batch.bob_noise);
        let y = g.add(x_prime, n)?;
        let o = self.bob.forward(g, y)?;
        let x_hat = g.sub(y, o)?;
        let s_hat = self.base.receive(g, x_hat)?;
        let s = g.constant(batch.images);

        let n_eve = g.constant(batch.eve_noise);
        let y_eve = g.add(x_prime, n_eve)?;

        let parts = LossParts {
            pow: loss_pow(g, delta, cfg.epsilon)?,
            com: loss_com(g, s_hat, s)?,
            pri: loss_pri(g, &self.classifier, y_eve, batch.labels)?,
        };
        let total = composite_loss(g, parts, cfg)?;
        Ok(SecureTerms { total, parts, delta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecureTrainOptions {
    pub loss: SecureLossConfig,
    pub bob_snr_db: f64,
    pub eve_snr_db: f64,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the smoothed loss improves by less than this over an epoch.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SecureTrainOptions {
    fn default() -> Self {
        Self {
            loss: SecureLossConfig::default(),
            bob_snr_db: 10.0,
            eve_snr_db: 10.0,
            optimizer: OptimizerConfig::default(),
            batch_size: 128,
            max_epochs: 50,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SecureHistory {
    pub history: LossHistory,
    /// `[pow, com, pri]` per step.
    pub parts: Vec<[f64; 3]>,
    pub epochs: usize,
    pub converged: bool,
}

/// Jointly trains Alice's and Bob's blocks with the base pipeline and the
/// classifier frozen.
pub fn train_secure(
    alice: &mut ArnAlice,
    bob: &mut ArnBob,
    base: &SemPipeline,
    classifier: &Classifier,
    train: &ImageDataset,
    opts: &SecureTrainOptions,
) -> Result<SecureHistory> {
    base.ensure_frozen()?;
    if !classifier.net.is_frozen() {
        return Err(Error::NotFrozen(classifier.net.name().to_string()));
    }
    opts.loss.validate()?;
    let mut out = SecureHistory::default();
    if opts.max_epochs == 0 {
        return Ok(out);
    }

    let codewords = base.transmit_all(train)?;
    let bob_channel = ChannelConfig::new(opts.bob_snr_db);
    let eve_channel = ChannelConfig::new(opts.eve_snr_db);
    let mut order_rng = rng::stream(opts.seed, 0);
    let mut bob_rng = rng::stream(opts.seed, semcom::BOB_NOISE_STREAM);
    let mut eve_rng = rng::stream(opts.seed, semcom::EVE_NOISE_STREAM);
    let mut opt = Optimizer::new(opts.optimizer);
    let mut previous: Option<f64> = None;

    for epoch in 0..opts.max_epochs {
        for batch in data::batches(train, opts.batch_size, &mut order_rng)? {
            let rows = batch.labels.len();
            let x = codewords.select_rows(&batch.indices);
            let bob_noise = semcom::noise(rows, &bob_channel, &mut bob_rng);
            let eve_noise = semcom::noise(rows, &eve_channel, &mut eve_rng);
            let inputs = SecureBatch {
                codewords: &x,
                images: &batch.images,
                labels: &batch.labels,
                bob_noise: &bob_noise,
                eve_noise: &eve_noise,
            };

            let mut g = Graph::new();
            let bound = BoundSecure::new(&mut g, alice, bob, base, classifier);
            let terms = bound.objective(&mut g, &inputs, &opts.loss)?;
            let value = g.scalar(terms.total);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    phase: "secure training",
                    step: out.history.losses.len(),
                    loss: value,
                });
            }
            out.history.losses.push(value);
            out.parts.push([
                g.scalar(terms.parts.pow),
                g.scalar(terms.parts.com),
                g.scalar(terms.parts.pri),
            ]);
            let grads = g.backward(terms.total)?;
            alice.block.accumulate_grads(&bound.alice, &grads);
            bob.block.accumulate_grads(&bound.bob, &grads);
            opt.step(&mut [&mut alice.block, &mut bob.block])?;
        }
        out.epochs = epoch + 1;
        let current = out.history.smoothed_last(SMOOTHING_WINDOW).expect("at least one step");
        log::info!("secure epoch {}: smoothed loss {:.6}", epoch + 1, current);
        if let Some(prev) = previous {
            if prev - current < opts.tolerance {
                out.converged = true;
                break;
            }
        }
        previous = Some(current);
    }
    Ok(out)
}

/// `10·log10(‖δ‖² / ‖x‖²)` in dB, or [`PSR_FLOOR_DB`] for a zero `δ`.
pub fn psr_db(delta: &Tensor, x: &Tensor) -> Result<f64> {
    if delta.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            context: "psr",
            left: delta.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    let pd: f64 = delta.data().iter().map(|v| v * v).sum();
    let px: f64 = x.data().iter().map(|v| v * v).sum();
    if pd == 0.0 {
        return Ok(PSR_FLOOR_DB);
    }
    Ok(10.0 * (pd / px).log10())
}

/// PSR of `transmitter`'s perturbation over the codewords of `ds`.
pub fn measured_psr_db(transmitter: &dyn Perturb, base: &SemPipeline, ds: &ImageDataset) -> Result<f64> {
    let x = base.transmit_all(ds)?;
    let x_prime = transmitter.perturb(&x, &ds.labels)?;
    let delta = Tensor::new(
        x.shape().to_vec(),
        x_prime.data().iter().zip(x.data()).map(|(a, b)| a - b).collect(),
    )?;
    psr_db(&delta, &x)
}
