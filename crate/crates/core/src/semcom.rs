//! The security-unaware semantic link: semantic encoder → channel encoder
//! → power normalisation → AWGN → channel decoder → semantic decoder.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{self, ImageDataset, IMAGE_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, BoundNetwork, Graph, Network, Optimizer, OptimizerConfig, Tensor, Var};
use crate::rng::{self, Rng};

pub const LATENT_DIM: usize = 23;
pub const HIDDEN_DIM: usize = 64;

/// RNG stream carrying the legitimate receiver's channel noise.
pub const BOB_NOISE_STREAM: u64 = 1;
/// RNG stream carrying the eavesdropper's channel noise.
pub const EVE_NOISE_STREAM: u64 = 2;

/// Rows evaluated per chunk during evaluation passes.
pub const EVAL_CHUNK: usize = 1000;

/// How the channel encoder output is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerNorm {
    /// `‖x‖² = L_x`: unit power per channel use.
    #[default]
    PerDimension,
    /// `‖x‖² = 1` over the whole codeword.
    Total,
}

impl PowerNorm {
    pub fn target(self, latent_dim: usize) -> f64 {
        match self {
            PowerNorm::PerDimension => latent_dim as f64,
            PowerNorm::Total => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub latent_dim: usize,
}

impl ChannelConfig {
    pub fn new(snr_db: f64) -> Self {
        Self {
            snr_db,
            latent_dim: LATENT_DIM,
        }
    }

    /// Per-dimension noise variance `10^(−snr/10)` for unit signal power.
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }
}

/// Zero-mean Gaussian noise of variance `cfg.noise_variance()` per entry.
pub fn noise(rows: usize, cfg: &ChannelConfig, rng: &mut Rng) -> Tensor {
    let n = rows * cfg.latent_dim;
    let var = cfg.noise_variance();
    let data = if var == 0.0 {
        vec![0.0; n]
    } else {
        let normal = Normal::new(0.0, var.sqrt()).expect("finite positive std");
        (0..n).map(|_| normal.sample(rng)).collect()
    };
    Tensor::matrix(rows, cfg.latent_dim, data).expect("sized above")
}

/// `y = x + n` with fresh i.i.d. noise.
pub fn awgn(x: &Tensor, cfg: &ChannelConfig, rng: &mut Rng) -> Result<Tensor> {
    if x.cols() != cfg.latent_dim {
        return Err(Error::DimensionMismatch {
            context: "channel input",
            expected: cfg.latent_dim,
            actual: x.cols(),
        });
    }
    let n = noise(x.rows(), cfg, rng);
    let data = x.data().iter().zip(n.data()).map(|(a, b)| a + b).collect();
    Tensor::matrix(x.rows(), x.cols(), data)
}

/// Scales each row to squared norm `target`.
pub fn normalize_power(x: &Tensor, target: f64) -> Result<Tensor> {
    let cols = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for (row_idx, row) in x.data().chunks(cols).enumerate() {
        let norm_sq: f64 = row.iter().map(|v| v * v).sum();
        if norm_sq < 1e-12 {
            return Err(Error::DegenerateRow { row: row_idx, norm_sq });
        }
        let c = (target / norm_sq).sqrt();
        out.extend(row.iter().map(|v| v * c));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Mean over rows of `‖row‖² / cols`.
pub fn mean_power(x: &Tensor) -> f64 {
    x.data().iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Mean squared error over every element.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            context: "mse",
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    Ok(pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemPipeline {
    pub semantic_encoder: Network,
    pub channel_encoder: Network,
    pub channel_decoder: Network,
    pub semantic_decoder: Network,
    pub power_norm: PowerNorm,
}

/// A pipeline whose networks have been placed on a [`Graph`].
pub struct BoundPipeline {
    semantic_encoder: BoundNetwork,
    channel_encoder: BoundNetwork,
    channel_decoder: BoundNetwork,
    semantic_decoder: BoundNetwork,
    power_target: f64,
}

impl SemPipeline {
    /// 784→64→64 (relu) | 64→23 (linear) | 23→64 (relu) | 64→64→784 (relu, sigmoid).
    pub fn new(rng: &mut Rng) -> Self {
        use Activation::*;
        Self {
            semantic_encoder: Network::init("semantic_encoder", IMAGE_DIM, &[(HIDDEN_DIM, Relu), (HIDDEN_DIM, Relu)], rng),
            channel_encoder: Network::init("channel_encoder", HIDDEN_DIM, &[(LATENT_DIM, Linear)], rng),
            channel_decoder: Network::init("channel_decoder", LATENT_DIM, &[(HIDDEN_DIM, Relu)], rng),
            semantic_decoder: Network::init(
                "semantic_decoder",
                HIDDEN_DIM,
                &[(HIDDEN_DIM, Relu), (IMAGE_DIM, Sigmoid)],
                rng,
            ),
            power_norm: PowerNorm::PerDimension,
        }
    }

    pub fn from_networks(
        semantic_encoder: Network,
        channel_encoder: Network,
        channel_decoder: Network,
        semantic_decoder: Network,
        power_norm: PowerNorm,
    ) -> Result<Self> {
        let chain = [
            (semantic_encoder.output_dim(), channel_encoder.input_dim()),
            (channel_encoder.output_dim(), channel_decoder.input_dim()),
            (channel_decoder.output_dim(), semantic_decoder.input_dim()),
            (semantic_decoder.output_dim(), semantic_encoder.input_dim()),
        ];
        for (expected, actual) in chain {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    context: "pipeline chaining",
                    expected,
                    actual,
                });
            }
        }
        Ok(Self {
            semantic_encoder,
            channel_encoder,
            channel_decoder,
            semantic_decoder,
            power_norm,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.channel_encoder.output_dim()
    }

    pub fn networks(&self) -> [&Network; 4] {
        [
            &self.semantic_encoder,
            &self.channel_encoder,
            &self.channel_decoder,
            &self.semantic_decoder,
        ]
    }

    pub fn networks_mut(&mut self) -> [&mut Network; 4] {
        [
            &mut self.semantic_encoder,
            &mut self.channel_encoder,
            &mut self.channel_decoder,
            &mut self.semantic_decoder,
        ]
    }

    pub fn freeze(&mut self) {
        self.networks_mut().into_iter().for_each(Network::freeze);
    }

    pub fn is_frozen(&self) -> bool {
        self.networks().iter().all(|n| n.is_frozen())
    }

    pub fn ensure_frozen(&self) -> Result<()> {
        match self.networks().iter().find(|n| !n.is_frozen()) {
            Some(n) => Err(Error::NotFrozen(n.name().to_string())),
            None => Ok(()),
        }
    }

    /// Parameter digest over all four networks.
    pub fn digest(&self) -> String {
        self.networks().iter().map(|n| n.digest()).collect::<Vec<_>>().join(":")
    }

    /// `x = normalize_power(G̃(G(s)))`.
    pub fn transmit(&self, s: &Tensor) -> Result<Tensor> {
        let h = self.semantic_encoder.forward(s)?;
        let raw = self.channel_encoder.forward(&h)?;
        normalize_power(&raw, self.power_norm.target(self.latent_dim()))
    }

    /// Transmits a whole dataset in chunks.
    pub fn transmit_all(&self, ds: &ImageDataset) -> Result<Tensor> {
        let mut data = Vec::with_capacity(ds.len() * self.latent_dim());
        for start in (0..ds.len()).step_by(EVAL_CHUNK) {
            let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(ds.len())).collect();
            data.extend(self.transmit(&ds.images.select_rows(&idx))?.into_data());
        }
        Tensor::matrix(ds.len(), self.latent_dim(), data)
    }

    /// `ŝ = D(D̃(y))`, entries in `[0, 1]`.
    pub fn receive(&self, y: &Tensor) -> Result<Tensor> {
        let h = self.channel_decoder.forward(y)?;
        self.semantic_decoder.forward(&h)
    }

    pub fn bind(&self, g: &mut Graph) -> BoundPipeline {
        self.bind_with(g, true)
    }

    /// Binds every network as a constant (for frozen use).
    pub fn bind_constant(&self, g: &mut Graph) -> BoundPipeline {
        self.bind_with(g, false)
    }

    fn bind_with(&self, g: &mut Graph, track: bool) -> BoundPipeline {
        let b = |n: &Network, g: &mut Graph| if track { n.bind(g) } else { n.bind_constant(g) };
        BoundPipeline {
            semantic_encoder: b(&self.semantic_encoder, g),
            channel_encoder: b(&self.channel_encoder, g),
            channel_decoder: b(&self.channel_decoder, g),
            semantic_decoder: b(&self.semantic_decoder, g),
            power_target: self.power_norm.target(self.latent_dim()),
        }
    }

    fn accumulate_grads(&mut self, bound: &BoundPipeline, grads: &crate::nn::Gradients) {
        self.semantic_encoder.accumulate_grads(&bound.semantic_encoder, grads);
        self.channel_encoder.accumulate_grads(&bound.channel_encoder, grads);
        self.channel_decoder.accumulate_grads(&bound.channel_decoder, grads);
        self.semantic_decoder.accumulate_grads(&bound.semantic_decoder, grads);
    }
}

impl BoundPipeline {
    pub fn transmit(&self, g: &mut Graph, s: Var) -> Result<Var> {
        let h = self.semantic_encoder.forward(g, s)?;
        let raw = self.channel_encoder.forward(g, h)?;
        g.power_normalize(raw, self.power_target)
    }

    pub fn receive(&self, g: &mut Graph, y: Var) -> Result<Var> {
        let h = self.channel_decoder.forward(g, y)?;
        self.semantic_decoder.forward(g, h)
    }
}

/// Channel SNR used while training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TrainSnr {
    Fixed { snr_db: f64 },
    /// A fresh SNR drawn uniformly from `[low_db, high_db]` for every batch.
    Uniform { low_db: f64, high_db: f64 },
}

impl TrainSnr {
    fn draw(&self, rng: &mut Rng) -> f64 {
        match *self {
            TrainSnr::Fixed { snr_db } => snr_db,
            TrainSnr::Uniform { low_db, high_db } => rng.random_range(low_db..=high_db),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

/// Per-step training losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub losses: Vec<f64>,
}

impl LossHistory {
    /// Trailing mean over the last `window` steps ending at `end` (exclusive).
    pub fn smoothed_at(&self, end: usize, window: usize) -> Option<f64> {
        if end == 0 || end > self.losses.len() {
            return None;
        }
        let start = end.saturating_sub(window);
        let slice = &self.losses[start..end];
        Some(slice.iter().sum::<f64>() / slice.len() as f64)
    }

    pub fn smoothed_last(&self, window: usize) -> Option<f64> {
        self.smoothed_at(self.losses.len(), window)
    }
}

/// Trains all four networks end to end on `mse(ŝ, s)` through the noisy channel.
pub fn train_base(p: &mut SemPipeline, train: &ImageDataset, snr: TrainSnr, opts: &TrainOptions) -> Result<LossHistory> {
    let mut history = LossHistory::default();
    let mut opt = Optimizer::new(opts.optimizer);
    let mut order_rng = rng::stream(opts.seed, 0);
    let mut noise_rng = rng::stream(opts.seed, BOB_NOISE_STREAM);
    let latent = p.latent_dim();

    for epoch in 0..opts.epochs {
        for batch in data::batches(train, opts.batch_size, &mut order_rng)? {
            let cfg = ChannelConfig {
                snr_db: snr.draw(&mut noise_rng),
                latent_dim: latent,
            };
            let mut g = Graph::new();
            let bound = p.bind(&mut g);
            let s = g.constant(&batch.images);
            let x = bound.transmit(&mut g, s)?;
            let n = g.constant(&noise(batch.labels.len(), &cfg, &mut noise_rng));
            let y = g.add(x, n)?;
            let s_hat = bound.receive(&mut g, y)?;
            let loss = g.mse(s_hat, s)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    phase: "base training",
                    step: history.losses.len(),
                    loss: value,
                });
            }
            history.losses.push(value);
            let grads = g.backward(loss)?;
            p.accumulate_grads(&bound, &grads);
            let [a, b, c, d] = p.networks_mut();
            opt.step(&mut [a, b, c, d])?;
        }
        log::info!(
            "base epoch {}: smoothed mse {:.5}",
            epoch + 1,
            history.smoothed_last(100).unwrap_or(f64::NAN)
        );
    }
    Ok(history)
}

/// Something inserted between the transmitter and the channel.
pub trait Perturb {
    /// Returns `x′` for clean channel inputs `x` with class `labels`.
    fn perturb(&self, x: &Tensor, labels: &[usize]) -> Result<Tensor>;
}

/// Something inserted between the channel and the receiver.
pub trait Restore {
    fn restore(&self, y: &Tensor) -> Result<Tensor>;
}

/// Optional pluggable stages around the channel.
#[derive(Clone, Copy, Default)]
pub struct Plugins<'a> {
    pub transmitter: Option<&'a dyn Perturb>,
    pub receiver: Option<&'a dyn Restore>,
}

impl<'a> Plugins<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn apply_transmitter(&self, x: Tensor, labels: &[usize]) -> Result<Tensor> {
        match self.transmitter {
            Some(t) => t.perturb(&x, labels),
            None => Ok(x),
        }
    }

    pub fn apply_receiver(&self, y: Tensor) -> Result<Tensor> {
        match self.receiver {
            Some(r) => r.restore(&y),
            None => Ok(y),
        }
    }
}

/// Per-pixel reconstruction MSE over `test` with Bob's noise drawn from `seed`.
pub fn eval_mse(p: &SemPipeline, test: &ImageDataset, cfg: &ChannelConfig, seed: u64, plugins: Plugins<'_>) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut noise_rng = rng::stream(seed, BOB_NOISE_STREAM);
    let mut sq = 0.0;
    for start in (0..test.len()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(test.len())).collect();
        let s = test.images.select_rows(&idx);
        let labels: Vec<usize> = idx.iter().map(|&i| test.labels[i]).collect();
        let x = plugins.apply_transmitter(p.transmit(&s)?, &labels)?;
        let y = awgn(&x, cfg, &mut noise_rng)?;
        let s_hat = p.receive(&plugins.apply_receiver(y)?)?;
        sq += mse(&s_hat, &s)? * s.len() as f64;
    }
    Ok(sq / test.images.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, DenseLayer};

    fn pipeline() -> SemPipeline {
        SemPipeline::new(&mut rng::stream(5, 0))
    }

    #[test]
    fn normalize_power_examples() {
        let mut row = vec![0.0; LATENT_DIM];
        row[0] = 1.0;
        let out = normalize_power(&Tensor::matrix(1, LATENT_DIM, row).unwrap(), 23.0).unwrap();
        assert!((out.data()[0] - 23f64.sqrt()).abs() < 1e-12);

        let x = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(normalize_power(&x, 3.0), Err(Error::DegenerateRow { .. })));
    }

    #[test]
    fn noise_variance_follows_snr() {
        assert!((ChannelConfig::new(0.0).noise_variance() - 1.0).abs() < 1e-15);
        assert!((ChannelConfig::new(10.0).noise_variance() - 0.1).abs() < 1e-15);
        let noiseless = ChannelConfig::new(f64::INFINITY);
        assert_eq!(noiseless.noise_variance(), 0.0);
        let x = Tensor::matrix(3, LATENT_DIM, (0..69).map(|i| i as f64 * 0.1).collect()).unwrap();
        let y = awgn(&x, &noiseless, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn transmit_normalises_every_row() {
        let p = pipeline();
        let s = data::synthetic(16, 2).unwrap();
        let x = p.transmit(&s.images).unwrap();
        assert_eq!(x.shape(), &[16, LATENT_DIM]);
        for r in 0..16 {
            let power: f64 = x.row(r).iter().map(|v| v * v).sum::<f64>() / LATENT_DIM as f64;
            assert!((power - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn transmit_with_constant_channel_encoder() {
        let mut p = pipeline();
        let bias: Vec<f64> = (0..LATENT_DIM).map(|i| 0.5 + i as f64).collect();
        let layer = DenseLayer::new(
            Tensor::zeros(vec![LATENT_DIM, HIDDEN_DIM]),
            Tensor::new(vec![LATENT_DIM], bias.clone()).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        p.channel_encoder = Network::new("channel_encoder", vec![layer]).unwrap();
        let s = data::synthetic(10, 3).unwrap();
        let x = p.transmit(&s.images).unwrap();
        let expected = normalize_power(&Tensor::matrix(1, LATENT_DIM, bias).unwrap(), 23.0).unwrap();
        for r in 0..10 {
            assert_eq!(x.row(r), expected.data());
        }
    }

    #[test]
    fn receive_is_bounded_and_deterministic() {
        let p = pipeline();
        let row: Vec<f64> = (0..LATENT_DIM).map(|i| (i as f64 - 11.0) * 0.7).collect();
        let y = Tensor::from_rows(&[row.clone(), row]).unwrap();
        let s_hat = p.receive(&y).unwrap();
        assert_eq!(s_hat.shape(), &[2, IMAGE_DIM]);
        assert!(s_hat.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(s_hat.row(0), s_hat.row(1));
    }

    #[test]
    fn zero_epochs_leave_parameters_alone() {
        let mut p = pipeline();
        let before = p.clone();
        let ds = data::synthetic(20, 0).unwrap();
        let opts = TrainOptions {
            epochs: 0,
            ..TrainOptions::default()
        };
        let h = train_base(&mut p, &ds, TrainSnr::Fixed { snr_db: 10.0 }, &opts).unwrap();
        assert!(h.losses.is_empty());
        assert_eq!(p, before);
    }

    #[test]
    fn eval_mse_is_seeded() {
        let p = pipeline();
        let ds = data::synthetic(30, 1).unwrap();
        let cfg = ChannelConfig::new(10.0);
        let a = eval_mse(&p, &ds, &cfg, 7, Plugins::none()).unwrap();
        let b = eval_mse(&p, &ds, &cfg, 7, Plugins::none()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let c = eval_mse(&p, &ds, &cfg, 8, Plugins::none()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pipeline_gradients_match_finite_differences() {
        // Differentiate w.r.t. the channel decoder through transmit → awgn → receive.
        let p = pipeline();
        let ds = data::synthetic(10, 9).unwrap().head(4);
        let n = noise(4, &ChannelConfig::new(10.0), &mut rng::stream(1, 1));
        let eval = |params: &[f64], want: bool| {
            let mut q = p.clone();
            q.channel_decoder.set_flat_params(params).unwrap();
            let mut g = Graph::new();
            let bound = q.bind(&mut g);
            let s = g.constant(&ds.images);
            let x = bound.transmit(&mut g, s).unwrap();
            let nv = g.constant(&n);
            let y = g.add(x, nv).unwrap();
            let s_hat = bound.receive(&mut g, y).unwrap();
            let loss = g.mse(s_hat, s).unwrap();
            let grad = want.then(|| {
                let grads = g.backward(loss).unwrap();
                q.accumulate_grads(&bound, &grads);
                q.channel_decoder.flat_grads()
            });
            (g.scalar(loss), grad)
        };
        let w0 = p.channel_decoder.flat_params();
        let analytic = eval(&w0, true).1.unwrap();
        let err = grad_check(|w| eval(w, false).0, &w0, &analytic, 1e-5);
        assert!(err < 1e-4, "{err}");
    }
}
