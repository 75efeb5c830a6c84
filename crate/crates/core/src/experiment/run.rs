//! Training phases, checkpoint management and the sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::checkpoint::{self, CheckpointMeta};
use super::config::{AttackMode, ExperimentConfig};
use super::metrics::{self, MetricsRecord, Scenario};
use super::plot::{self, SweepKind};
use crate::adversary::{self, AttackBudget, Classifier, ClassifierKind, FgsmAttack};
use crate::data::{self, ImageDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{self, derive_seed};
use crate::secure::{self, ArnAlice, ArnBob, SecureHistory, SecureTrainOptions};
use crate::semcom::{self, ChannelConfig, Perturb, Plugins, SemPipeline, TrainOptions};

pub const BASE_CHECKPOINT: &str = "base.ckpt";
pub const EVE_CHECKPOINT: &str = "eve.ckpt";
pub const SUBSTITUTE_CHECKPOINT: &str = "substitute.ckpt";
pub const SNR_METRICS: &str = "metrics.csv";
pub const PSR_METRICS: &str = "metrics_psr.csv";
pub const FGSM_METRICS: &str = "metrics_fgsm.csv";
pub const EVAL_METRICS: &str = "metrics_eval.csv";

// Stream indices under the init and noise seeds, one per phase.
const BASE_STREAM: u64 = 0;
const EVE_STREAM: u64 = 1;
const SUBSTITUTE_STREAM: u64 = 2;
const ALICE_STREAM: u64 = 3;
const BOB_STREAM: u64 = 4;
const SECURE_STREAM: u64 = 3;
const PSR_POINT_BASE: u64 = 100;
const SNR_POINT_BASE: u64 = 200;

pub fn secure_checkpoint(mode: AttackMode) -> String {
    format!("secure_{}.ckpt", mode.as_str())
}

/// Train/test split selected by the configuration.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(ImageDataset, ImageDataset)> {
    if cfg.data.synthetic {
        let n = cfg.data.synthetic_samples;
        let full = data::synthetic(n, cfg.seeds.data)?;
        let spec = SplitSpec {
            train_count: n - n / 6,
            test_count: n / 6,
            shuffle_seed: cfg.split.shuffle_seed,
        };
        data::split(&full, &spec)
    } else {
        let full = data::load_mnist_train(&cfg.data.mnist_dir)?;
        data::split(&full, &cfg.split)
    }
}

/// The modules trained against one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurePair {
    pub alice: ArnAlice,
    pub bob: ArnBob,
}

/// A configured experiment rooted at an output directory.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    pub train: ImageDataset,
    pub test: ImageDataset,
    /// Train missing prerequisites instead of failing.
    pub train_missing: bool,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, out_dir: &Path) -> Result<Self> {
        cfg.validate()?;
        let (train, test) = load_datasets(&cfg)?;
        fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
        Ok(Self {
            cfg,
            out_dir: out_dir.to_path_buf(),
            train,
            test,
            train_missing: false,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn meta(&self, phase: &str, steps: usize) -> CheckpointMeta {
        CheckpointMeta {
            phase: phase.to_string(),
            steps: steps as u64,
            config_digest: self.cfg.digest(),
        }
    }

    fn save(&self, name: &str, nets: &[&Network], phase: &str, steps: usize) -> Result<()> {
        let path = self.path(name);
        checkpoint::save_checkpoint(&path, nets, &self.meta(phase, steps))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn load(&self, name: &str) -> Result<Option<checkpoint::Checkpoint>> {
        let path = self.path(name);
        match checkpoint::load_checked(&path, &self.cfg.digest()) {
            Ok(c) => Ok(Some(c)),
            Err(Error::MissingCheckpoint(_)) if self.train_missing => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn phase_options(&self, phase: &super::config::PhaseConfig, stream: u64) -> TrainOptions {
        TrainOptions {
            epochs: phase.epochs,
            batch_size: phase.batch_size,
            optimizer: phase.optimizer,
            seed: derive_seed(self.cfg.seeds.noise, stream),
        }
    }

    pub fn train_base(&self) -> Result<SemPipeline> {
        let mut p = SemPipeline::new(&mut rng::stream(self.cfg.seeds.init, BASE_STREAM));
        p.power_norm = self.cfg.channel.power_norm;
        let opts = self.phase_options(&self.cfg.base, BASE_STREAM);
        let history = semcom::train_base(&mut p, &self.train, self.cfg.channel.train, &opts)?;
        p.freeze();
        self.save(BASE_CHECKPOINT, &p.networks(), "base", history.losses.len())?;
        Ok(p)
    }

    pub fn base(&self) -> Result<SemPipeline> {
        let Some(ckpt) = self.load(BASE_CHECKPOINT)? else {
            return self.train_base();
        };
        let mut nets = ckpt.networks.into_iter();
        let mut next = || nets.next().ok_or_else(|| Error::CheckpointCorrupt("base needs four networks".into()));
        let mut p = SemPipeline::from_networks(next()?, next()?, next()?, next()?, self.cfg.channel.power_norm)?;
        p.freeze();
        Ok(p)
    }

    fn classifier_file(kind: ClassifierKind) -> &'static str {
        match kind {
            ClassifierKind::Eve => EVE_CHECKPOINT,
            ClassifierKind::Substitute => SUBSTITUTE_CHECKPOINT,
        }
    }

    pub fn train_classifier(&self, kind: ClassifierKind, base: &SemPipeline) -> Result<Classifier> {
        let (mut c, phase, stream) = match kind {
            ClassifierKind::Eve => (
                Classifier::eve(&mut rng::stream(self.cfg.seeds.init, EVE_STREAM)),
                &self.cfg.eve,
                EVE_STREAM,
            ),
            ClassifierKind::Substitute => (
                Classifier::substitute(&mut rng::stream(self.cfg.seeds.init, SUBSTITUTE_STREAM)),
                &self.cfg.substitute,
                SUBSTITUTE_STREAM,
            ),
        };
        let opts = self.phase_options(phase, stream);
        let channel = ChannelConfig::new(self.cfg.eve_snr_db());
        let history = adversary::train_classifier(&mut c, base, &self.train, &channel, &opts)?;
        c.net.freeze();
        self.save(Self::classifier_file(kind), &[&c.net], c.net.name(), history.losses.len())?;
        Ok(c)
    }

    pub fn classifier(&self, kind: ClassifierKind, base: &SemPipeline) -> Result<Classifier> {
        let Some(ckpt) = self.load(Self::classifier_file(kind))? else {
            return self.train_classifier(kind, base);
        };
        let net = ckpt
            .networks
            .into_iter()
            .next()
            .ok_or_else(|| Error::CheckpointCorrupt("classifier checkpoint is empty".into()))?;
        let mut c = Classifier::from_network(kind, net)?;
        c.net.freeze();
        Ok(c)
    }

    /// The classifier Alice trains against under `mode`.
    pub fn target_kind(mode: AttackMode) -> ClassifierKind {
        match mode {
            AttackMode::WhiteBox => ClassifierKind::Eve,
            AttackMode::BlackBox => ClassifierKind::Substitute,
        }
    }

    pub fn secure_options(&self, epsilon: f64, snr_db: f64, eve_snr_db: f64, stream: u64) -> SecureTrainOptions {
        let s = &self.cfg.secure;
        SecureTrainOptions {
            loss: secure::SecureLossConfig { epsilon, ..s.loss },
            bob_snr_db: snr_db,
            eve_snr_db,
            optimizer: s.optimizer,
            batch_size: s.batch_size,
            max_epochs: s.max_epochs,
            tolerance: s.tolerance,
            seed: derive_seed(self.cfg.seeds.noise, stream),
        }
    }

    /// Trains a fresh Alice/Bob pair from the configured initialisation.
    pub fn fit_secure(
        &self,
        base: &SemPipeline,
        target: &Classifier,
        opts: &SecureTrainOptions,
    ) -> Result<(SecurePair, SecureHistory)> {
        let mut alice = ArnAlice::new(&mut rng::stream(self.cfg.seeds.init, ALICE_STREAM));
        let mut bob = ArnBob::new(&mut rng::stream(self.cfg.seeds.init, BOB_STREAM));
        let history = secure::train_secure(&mut alice, &mut bob, base, target, &self.train, opts)?;
        Ok((SecurePair { alice, bob }, history))
    }

    pub fn train_secure(&self, mode: AttackMode, base: &SemPipeline) -> Result<(SecurePair, SecureHistory)> {
        let target = self.classifier(Self::target_kind(mode), base)?;
        let opts = self.secure_options(
            self.cfg.secure.loss.epsilon,
            self.cfg.channel.snr_db,
            self.cfg.eve_snr_db(),
            SECURE_STREAM,
        );
        let (pair, history) = self.fit_secure(base, &target, &opts)?;
        let phase = format!("secure_{}", mode.as_str());
        self.save(
            &secure_checkpoint(mode),
            &[&pair.alice.block, &pair.bob.block],
            &phase,
            history.history.losses.len(),
        )?;
        Ok((pair, history))
    }

    pub fn secure_pair(&self, mode: AttackMode, base: &SemPipeline) -> Result<SecurePair> {
        let Some(ckpt) = self.load(&secure_checkpoint(mode))? else {
            return Ok(self.train_secure(mode, base)?.0);
        };
        Ok(SecurePair {
            alice: ArnAlice {
                block: ckpt.network("alice")?.clone(),
            },
            bob: ArnBob {
                block: ckpt.network("bob")?.clone(),
            },
        })
    }

    /// One metrics record for `scenario` at `snr_db`; Bob and Eve share the SNR.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &self,
        scenario: Scenario,
        base: &SemPipeline,
        eve: &Classifier,
        transmitter: Option<&dyn Perturb>,
        bob: Option<&ArnBob>,
        snr_db: f64,
        seed: u64,
    ) -> Result<MetricsRecord> {
        let start = Instant::now();
        let channel = ChannelConfig::new(snr_db);
        let plugins = Plugins {
            transmitter,
            receiver: bob.map(|b| b as &dyn semcom::Restore),
        };
        let mse = semcom::eval_mse(base, &self.test, &channel, seed, plugins)?;
        let eve_accuracy = adversary::eval_accuracy(eve, base, transmitter, &self.test, &channel, seed)?;
        let psr_db = match transmitter {
            Some(t) => Some(secure::measured_psr_db(t, base, &self.test)?),
            None => None,
        };
        Ok(MetricsRecord {
            scenario,
            snr_db,
            psr_db,
            mse,
            eve_accuracy,
            seed,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    fn secure_records(
        &self,
        base: &SemPipeline,
        eve: &Classifier,
        pair: &SecurePair,
        snr_db: f64,
        seed: u64,
    ) -> Result<[MetricsRecord; 2]> {
        Ok([
            self.evaluate(Scenario::AliceOnly, base, eve, Some(&pair.alice), None, snr_db, seed)?,
            self.evaluate(Scenario::AliceBob, base, eve, Some(&pair.alice), Some(&pair.bob), snr_db, seed)?,
        ])
    }

    fn emit(&self, file: &str, records: &[MetricsRecord], sweep: Option<SweepKind>) -> Result<()> {
        metrics::write_csv(&self.path(file), records)?;
        if let Some(kind) = sweep {
            plot::emit_plots(records, &self.out_dir.join("plots"), kind)?;
        }
        Ok(())
    }

    /// All three scenarios at the configured evaluation SNR.
    pub fn eval(&self) -> Result<Vec<MetricsRecord>> {
        let base = self.base()?;
        let eve = self.classifier(ClassifierKind::Eve, &base)?;
        let pair = self.secure_pair(self.cfg.mode, &base)?;
        let snr = self.cfg.channel.snr_db;
        let seed = self.cfg.seeds.eval;
        let mut records = vec![self.evaluate(Scenario::NoSecurity, &base, &eve, None, None, snr, seed)?];
        records.extend(self.secure_records(&base, &eve, &pair, snr, seed)?);
        self.emit(EVAL_METRICS, &records, None)?;
        Ok(records)
    }

    /// Every scenario at every SNR of the grid.
    pub fn sweep_snr(&self) -> Result<Vec<MetricsRecord>> {
        let base = self.base()?;
        let eve = self.classifier(ClassifierKind::Eve, &base)?;
        let grid = &self.cfg.channel.snr_grid;
        let shared = if self.cfg.secure.retrain_per_snr {
            None
        } else {
            Some(self.secure_pair(self.cfg.mode, &base)?)
        };
        let target = match (&shared, self.cfg.mode) {
            (None, AttackMode::BlackBox) => Some(self.classifier(ClassifierKind::Substitute, &base)?),
            _ => None,
        };
        let points: Vec<Result<Vec<MetricsRecord>>> = grid
            .par_iter()
            .enumerate()
            .map(|(i, &snr)| {
                let seed = derive_seed(self.cfg.seeds.eval, i as u64);
                let retrained;
                let pair = match &shared {
                    Some(p) => p,
                    None => {
                        let opts = self.secure_options(self.cfg.secure.loss.epsilon, snr, snr, SNR_POINT_BASE + i as u64);
                        retrained = self.fit_secure(&base, target.as_ref().unwrap_or(&eve), &opts)?.0;
                        &retrained
                    }
                };
                let mut out = vec![self.evaluate(Scenario::NoSecurity, &base, &eve, None, None, snr, seed)?];
                out.extend(self.secure_records(&base, &eve, pair, snr, seed)?);
                Ok(out)
            })
            .collect();
        let records: Vec<MetricsRecord> = points.into_iter().collect::<Result<Vec<_>>>()?.concat();
        self.emit(SNR_METRICS, &records, Some(SweepKind::Snr))?;
        Ok(records)
    }

    /// One secure-training run per attack budget at the configured SNR.
    pub fn sweep_psr(&self) -> Result<Vec<MetricsRecord>> {
        let base = self.base()?;
        let eve = self.classifier(ClassifierKind::Eve, &base)?;
        let target = match self.cfg.mode {
            AttackMode::WhiteBox => eve.clone(),
            AttackMode::BlackBox => self.classifier(ClassifierKind::Substitute, &base)?,
        };
        let snr = self.cfg.channel.snr_db;
        let seed = self.cfg.seeds.eval;
        let reference = self.evaluate(Scenario::NoSecurity, &base, &eve, None, None, snr, seed)?;
        let points: Vec<Result<[MetricsRecord; 2]>> = self
            .cfg
            .sweep
            .psr_epsilons
            .par_iter()
            .enumerate()
            .map(|(i, &eps)| {
                let opts = self.secure_options(eps, snr, self.cfg.eve_snr_db(), PSR_POINT_BASE + i as u64);
                let (pair, history) = self.fit_secure(&base, &target, &opts)?;
                log::info!("psr point {} (epsilon {eps}): {} epochs", i, history.epochs);
                self.secure_records(&base, &eve, &pair, snr, seed)
            })
            .collect();
        let mut records = vec![reference];
        for p in points {
            records.extend(p?);
        }
        self.emit(PSR_METRICS, &records, Some(SweepKind::Psr))?;
        Ok(records)
    }

    /// FGSM against the attack-mode classifier at every sweep budget,
    /// evaluated on the true Eve.
    pub fn fgsm_baseline(&self) -> Result<Vec<MetricsRecord>> {
        let base = self.base()?;
        let eve = self.classifier(ClassifierKind::Eve, &base)?;
        let attacker = match self.cfg.mode {
            AttackMode::WhiteBox => eve.clone(),
            AttackMode::BlackBox => self.classifier(ClassifierKind::Substitute, &base)?,
        };
        let snr = self.cfg.channel.snr_db;
        let seed = self.cfg.seeds.eval;
        let mut records = vec![self.evaluate(Scenario::NoSecurity, &base, &eve, None, None, snr, seed)?];
        for &eps in &self.cfg.sweep.psr_epsilons {
            let attack = FgsmAttack {
                classifier: &attacker,
                budget: AttackBudget::new(eps)?,
            };
            records.push(self.evaluate(Scenario::FgsmBaseline, &base, &eve, Some(&attack), None, snr, seed)?);
        }
        self.emit(FGSM_METRICS, &records, Some(SweepKind::Psr))?;
        Ok(records)
    }
}
