//! The eavesdropper: Eve's classifier, the attacker's local substitute,
//! classifier training on intercepted codewords, the FGSM baseline and
//! accuracy evaluation.

use serde::{Deserialize, Serialize};

use crate::data::{self, ImageDataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::kernels::{argmax, softmax_rows};
use crate::nn::{Activation, Graph, Network, Optimizer, Tensor};
use crate::rng;
use crate::semcom::{self, ChannelConfig, Perturb, SemPipeline, TrainOptions, EVAL_CHUNK, EVE_NOISE_STREAM, LATENT_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// 23→64→32→32→10.
    Eve,
    /// 23→16→10, the attacker's local stand-in for Eve.
    Substitute,
}

/// A classifier over received codewords producing logits for 10 classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub kind: ClassifierKind,
    pub net: Network,
}

impl Classifier {
    pub fn eve(rng: &mut rng::Rng) -> Self {
        use Activation::*;
        Self {
            kind: ClassifierKind::Eve,
            net: Network::init(
                "eve",
                LATENT_DIM,
                &[(64, Relu), (32, Relu), (32, Relu), (NUM_CLASSES, Linear)],
                rng,
            ),
        }
    }

    pub fn substitute(rng: &mut rng::Rng) -> Self {
        use Activation::*;
        Self {
            kind: ClassifierKind::Substitute,
            net: Network::init("substitute", LATENT_DIM, &[(16, Relu), (NUM_CLASSES, Linear)], rng),
        }
    }

    pub fn from_network(kind: ClassifierKind, net: Network) -> Result<Self> {
        if net.output_dim() != NUM_CLASSES {
            return Err(Error::DimensionMismatch {
                context: "classifier output",
                expected: NUM_CLASSES,
                actual: net.output_dim(),
            });
        }
        Ok(Self { kind, net })
    }

    pub fn logits(&self, y: &Tensor) -> Result<Tensor> {
        self.net.forward(y)
    }
}

/// Logits and argmax predictions (ties resolve to the lowest class).
pub fn classify(c: &Classifier, y: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let logits = c.logits(y)?;
    let preds = logits.data().chunks(logits.cols()).map(argmax).collect();
    Ok((logits, preds))
}

/// Softmax confidence assigned to the true label of each row.
pub fn confidence_true(c: &Classifier, y: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    let logits = c.logits(y)?;
    let k = logits.cols();
    if labels.len() != logits.rows() {
        return Err(Error::DimensionMismatch {
            context: "labels",
            expected: logits.rows(),
            actual: labels.len(),
        });
    }
    let probs = softmax_rows(logits.data(), k);
    labels
        .iter()
        .enumerate()
        .map(|(r, &l)| {
            if l >= k {
                Err(Error::LabelOutOfRange { label: l, classes: k })
            } else {
                Ok(probs[r * k + l])
            }
        })
        .collect()
}

/// Accuracy history of a classifier training run, one entry per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyHistory {
    pub train_accuracy: Vec<f64>,
    pub losses: Vec<f64>,
}

/// Trains `classifier` with cross-entropy on intercepted unprotected
/// codewords `transmit(base, s) + n_Eve`. The base pipeline must be frozen.
pub fn train_classifier(
    classifier: &mut Classifier,
    base: &SemPipeline,
    train: &ImageDataset,
    cfg: &ChannelConfig,
    opts: &TrainOptions,
) -> Result<AccuracyHistory> {
    base.ensure_frozen()?;
    let mut history = AccuracyHistory::default();
    if opts.epochs == 0 {
        return Ok(history);
    }
    let codewords = base.transmit_all(train)?;
    let intercepted = ImageDataset {
        images: codewords,
        labels: train.labels.clone(),
        name: format!("{}-codewords", train.name),
    };
    let mut order_rng = rng::stream(opts.seed, 0);
    let mut noise_rng = rng::stream(opts.seed, EVE_NOISE_STREAM);
    let mut opt = Optimizer::new(opts.optimizer);

    for epoch in 0..opts.epochs {
        let mut correct = 0usize;
        for batch in data::batches(&intercepted, opts.batch_size, &mut order_rng)? {
            let y = semcom::awgn(&batch.images, cfg, &mut noise_rng)?;
            let mut g = Graph::new();
            let bound = classifier.net.bind(&mut g);
            let yv = g.constant(&y);
            let logits = bound.forward(&mut g, yv)?;
            let loss = g.cross_entropy(logits, &batch.labels)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    phase: "classifier training",
                    step: history.losses.len(),
                    loss: value,
                });
            }
            history.losses.push(value);
            correct += g
                .value(logits)
                .chunks(NUM_CLASSES)
                .zip(&batch.labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            let grads = g.backward(loss)?;
            classifier.net.accumulate_grads(&bound, &grads);
            opt.step(&mut [&mut classifier.net])?;
        }
        let acc = correct as f64 / train.len() as f64;
        log::info!("{:?} epoch {}: train accuracy {:.4}", classifier.kind, epoch + 1, acc);
        history.train_accuracy.push(acc);
    }
    Ok(history)
}

/// Per-dimension attack power limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub epsilon: f64,
}

impl AttackBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("attack budget must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    /// `‖δ‖` that spends the whole budget over `dim` dimensions.
    pub fn norm_budget(&self, dim: usize) -> f64 {
        (dim as f64 * self.epsilon).sqrt()
    }
}

/// Gradient of the mean cross-entropy w.r.t. each input row.
pub fn input_gradient(c: &Classifier, r: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = c.net.bind_constant(&mut g);
    let rv = g.leaf(r, true);
    let logits = bound.forward(&mut g, rv)?;
    let loss = g.cross_entropy(logits, labels)?;
    let grads = g.backward(loss)?;
    let grad = grads.get(rv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; r.len()]);
    Tensor::new(r.shape().to_vec(), grad)
}

/// FGSM with an exact norm budget: each row of `δ` is the input gradient of
/// the true-label cross-entropy scaled to `‖δ‖ = √(L·ε)`.
pub fn fgsm(c: &Classifier, r: &Tensor, labels: &[usize], budget: &AttackBudget) -> Result<Tensor> {
    let grad = input_gradient(c, r, labels)?;
    let cols = r.cols();
    let target = budget.norm_budget(cols);
    let mut delta = Vec::with_capacity(grad.len());
    for row in grad.data().chunks(cols) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateGradient);
        }
        delta.extend(row.iter().map(|v| v * target / norm));
    }
    Tensor::new(r.shape().to_vec(), delta)
}

/// FGSM used as a transmitter plug-in.
pub struct FgsmAttack<'a> {
    pub classifier: &'a Classifier,
    pub budget: AttackBudget,
}

impl Perturb for FgsmAttack<'_> {
    fn perturb(&self, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let delta = fgsm(self.classifier, x, labels, &self.budget)?;
        let data = x.data().iter().zip(delta.data()).map(|(a, d)| a + d).collect();
        Tensor::new(x.shape().to_vec(), data)
    }
}

/// Fraction of `test` that Eve labels correctly from `x′ + n_Eve`, with Eve's
/// noise on its own stream under `seed`.
pub fn eval_accuracy(
    c: &Classifier,
    base: &SemPipeline,
    transmitter: Option<&dyn Perturb>,
    test: &ImageDataset,
    cfg: &ChannelConfig,
    seed: u64,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut noise_rng = rng::stream(seed, EVE_NOISE_STREAM);
    let mut correct = 0usize;
    for start in (0..test.len()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(test.len())).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| test.labels[i]).collect();
        let x = base.transmit(&test.images.select_rows(&idx))?;
        let x = match transmitter {
            Some(t) => t.perturb(&x, &labels)?,
            None => x,
        };
        let y = semcom::awgn(&x, cfg, &mut noise_rng)?;
        let (_, preds) = classify(c, &y)?;
        correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / test.len() as f64)
}
