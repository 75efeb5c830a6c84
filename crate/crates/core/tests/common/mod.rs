//! Oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use arn_semcom::adversary::{fgsm, input_gradient, AttackBudget, Classifier, ClassifierKind};
use arn_semcom::data::NUM_CLASSES;
use arn_semcom::nn::kernels::softmax_rows;
use arn_semcom::nn::{Activation, DenseLayer, Network, Tensor};
use arn_semcom::rng;
use arn_semcom::semcom::LATENT_DIM;

pub fn linear_classifier(w: &[f64], b: &[f64]) -> Classifier {
    let layer = DenseLayer::new(
        Tensor::matrix(NUM_CLASSES, LATENT_DIM, w.to_vec()).unwrap(),
        Tensor::new(vec![NUM_CLASSES], b.to_vec()).unwrap(),
        Activation::Linear,
    )
    .unwrap();
    Classifier::from_network(ClassifierKind::Eve, Network::new("linear", vec![layer]).unwrap()).unwrap()
}

pub fn gaussian(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

/// Per-row cross-entropy of the true labels.
pub fn cross_entropy_rows(c: &Classifier, x: &Tensor, labels: &[usize]) -> Vec<f64> {
    let logits = c.logits(x).unwrap();
    softmax_rows(logits.data(), NUM_CLASSES)
        .chunks(NUM_CLASSES)
        .zip(labels)
        .map(|(p, &l)| -p[l].ln())
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Cosine between the engine's input gradient and the closed form
/// `Wᵀ(p − e_label) / rows` for a random linear-softmax classifier.
pub fn linear_softmax_cosine(seed: u64) -> f64 {
    let mut r = rng::stream(seed, 0);
    let w = gaussian(NUM_CLASSES * LATENT_DIM, &mut r);
    let b = gaussian(NUM_CLASSES, &mut r);
    let c = linear_classifier(&w, &b);
    let rows = 8;
    let x = Tensor::matrix(rows, LATENT_DIM, gaussian(rows * LATENT_DIM, &mut r)).unwrap();
    let labels: Vec<usize> = (0..rows).map(|i| i % NUM_CLASSES).collect();
    let got = input_gradient(&c, &x, &labels).unwrap();

    let mut want = vec![0.0; rows * LATENT_DIM];
    for i in 0..rows {
        let logits: Vec<f64> = (0..NUM_CLASSES)
            .map(|k| b[k] + (0..LATENT_DIM).map(|j| w[k * LATENT_DIM + j] * x.row(i)[j]).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        for k in 0..NUM_CLASSES {
            let p = (logits[k] - max).exp() / z;
            let coeff = (p - if k == labels[i] { 1.0 } else { 0.0 }) / rows as f64;
            for j in 0..LATENT_DIM {
                want[i * LATENT_DIM + j] += coeff * w[k * LATENT_DIM + j];
            }
        }
    }
    cosine(got.data(), &want)
}

/// Over `trials` random inputs, counts how often the FGSM loss increase is
/// at least that of a random direction with the same norm, and how often
/// FGSM increases the loss at all.
pub fn fgsm_versus_random(c: &Classifier, trials: usize, epsilon: f64, seed: u64) -> (usize, usize) {
    let mut r = rng::stream(seed, 0);
    let budget = AttackBudget::new(epsilon).unwrap();
    let x = Tensor::matrix(trials, LATENT_DIM, gaussian(trials * LATENT_DIM, &mut r)).unwrap();
    let labels: Vec<usize> = (0..trials).map(|_| r.random_range(0..NUM_CLASSES)).collect();
    let delta = fgsm(c, &x, &labels, &budget).unwrap();

    let mut random = gaussian(trials * LATENT_DIM, &mut r);
    let target = budget.norm_budget(LATENT_DIM);
    for row in random.chunks_mut(LATENT_DIM) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v *= target / n);
    }
    let add = |d: &[f64]| {
        Tensor::matrix(trials, LATENT_DIM, x.data().iter().zip(d).map(|(a, b)| a + b).collect()).unwrap()
    };
    let clean = cross_entropy_rows(c, &x, &labels);
    let attacked = cross_entropy_rows(c, &add(delta.data()), &labels);
    let noisy = cross_entropy_rows(c, &add(&random), &labels);
    let wins = (0..trials).filter(|&i| attacked[i] - clean[i] >= noisy[i] - clean[i]).count();
    let increases = (0..trials).filter(|&i| attacked[i] > clean[i]).count();
    (wins, increases)
}

/// Largest deviation of any FGSM row norm from `√(L·ε)`.
pub fn fgsm_norm_error(c: &Classifier, x: &Tensor, labels: &[usize], epsilon: f64) -> f64 {
    let delta = fgsm(c, x, labels, &AttackBudget::new(epsilon).unwrap()).unwrap();
    let target = (x.cols() as f64 * epsilon).sqrt();
    delta
        .data()
        .chunks(x.cols())
        .map(|row| (row.iter().map(|v| v * v).sum::<f64>().sqrt() - target).abs())
        .fold(0.0, f64::max)
}
