//! Finite-difference checks over every op composition used in training.

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};

use crate::adversary::Classifier;
use crate::data;
use crate::error::Result;
use crate::nn::{grad_check, Graph, Network, Tensor, Var};
use crate::rng::{self, Rng};
use crate::secure::{ArnAlice, ArnBob, BoundSecure, SecureBatch, SecureLossConfig};
use crate::semcom::{self, ChannelConfig, SemPipeline, LATENT_DIM};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCase {
    pub name: &'static str,
    pub coords: usize,
    pub max_rel_error: f64,
}

fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let u = Uniform::new(lo, hi).expect("valid range");
    Tensor::new(shape.to_vec(), (0..n).map(|_| u.sample(rng)).collect()).expect("shape matches")
}

/// Checks the gradient of `build` with respect to every entry of `leaves`.
fn check_leaves<F>(leaves: &[Tensor], build: F) -> Result<(usize, f64)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |flat: &[f64], want: bool| -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let mut offset = 0;
        let mut vars = Vec::with_capacity(leaves.len());
        for t in leaves {
            let data = flat[offset..offset + t.len()].to_vec();
            offset += t.len();
            vars.push(g.leaf_owned(t.shape().to_vec(), data, true)?);
        }
        let loss = build(&mut g, &vars)?;
        let mut grad = Vec::new();
        if want {
            let grads = g.backward(loss)?;
            for (&v, t) in vars.iter().zip(leaves) {
                match grads.get(v) {
                    Some(d) => grad.extend_from_slice(d),
                    None => grad.extend(std::iter::repeat_n(0.0, t.len())),
                }
            }
        }
        Ok((g.scalar(loss), grad))
    };
    let flat: Vec<f64> = leaves.iter().flat_map(|t| t.data().iter().copied()).collect();
    let analytic = eval(&flat, true)?.1;
    let err = grad_check(|p| eval(p, false).expect("perturbed evaluation").0, &flat, &analytic, STEP);
    Ok((flat.len(), err))
}

/// Checks the gradient of `loss` with respect to the concatenated
/// parameters of `nets`.
fn check_networks<F>(nets: &[Network], loss: F) -> Result<(usize, f64)>
where
    F: Fn(&mut Graph, &[crate::nn::BoundNetwork]) -> Result<Var>,
{
    let eval = |flat: &[f64], want: bool| -> Result<(f64, Vec<f64>)> {
        let mut local: Vec<Network> = nets.to_vec();
        let mut offset = 0;
        for n in &mut local {
            let count = n.param_count();
            n.set_flat_params(&flat[offset..offset + count])?;
            offset += count;
        }
        let mut g = Graph::new();
        let bound: Vec<_> = local.iter().map(|n| n.bind(&mut g)).collect();
        let l = loss(&mut g, &bound)?;
        let mut grad = Vec::new();
        if want {
            let grads = g.backward(l)?;
            for (n, b) in local.iter_mut().zip(&bound) {
                n.accumulate_grads(b, &grads);
                grad.extend(n.flat_grads());
            }
        }
        Ok((g.scalar(l), grad))
    };
    let flat: Vec<f64> = nets.iter().flat_map(|n| n.flat_params()).collect();
    let analytic = eval(&flat, true)?.1;
    let err = grad_check(|p| eval(p, false).expect("perturbed evaluation").0, &flat, &analytic, STEP);
    Ok((flat.len(), err))
}

/// Gives a zero-initialised residual output layer small random weights so
/// gradients reach the earlier layers.
fn randomize_output_layer(net: &mut Network, rng: &mut Rng) {
    let last = net.layers_mut().last_mut().expect("non-empty network");
    for v in last.weights.data_mut().iter_mut().chain(last.bias.data_mut()) {
        *v = rng.random_range(-0.2..0.2);
    }
}

/// Runs every case with randomized small instances derived from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCase>> {
    let mut r = rng::stream(seed, 0);
    let mut cases = Vec::new();
    let mut push = |name, (coords, max_rel_error): (usize, f64)| {
        cases.push(GradCase { name, coords, max_rel_error });
    };

    let x = random(&[4, 5], -1.0, 1.0, &mut r);
    let w = random(&[3, 5], -1.0, 1.0, &mut r);
    let b = random(&[3], -0.5, 0.5, &mut r);
    let t = random(&[4, 3], 0.0, 1.0, &mut r);
    let labels = [0usize, 2, 1, 2];

    push("linear+relu+mse", check_leaves(&[x.clone(), w.clone(), b.clone()], |g, v| {
        let z = g.linear(v[0], v[1], v[2])?;
        let a = g.relu(z);
        let tv = g.constant(&t);
        g.mse(a, tv)
    })?);
    push("linear+sigmoid+mse", check_leaves(&[x.clone(), w.clone(), b.clone()], |g, v| {
        let z = g.linear(v[0], v[1], v[2])?;
        let a = g.sigmoid(z);
        let tv = g.constant(&t);
        g.mse(a, tv)
    })?);
    push("linear+cross_entropy", check_leaves(&[x.clone(), w.clone(), b.clone()], |g, v| {
        let z = g.linear(v[0], v[1], v[2])?;
        g.cross_entropy(z, &labels)
    })?);
    push("softmax+true_class_confidence", check_leaves(&[x.clone(), w.clone(), b.clone()], |g, v| {
        let z = g.linear(v[0], v[1], v[2])?;
        let p = g.softmax(z);
        g.pick_mean(p, &labels)
    })?);
    let y = random(&[4, 5], -1.0, 1.0, &mut r);
    push("add+sub+mul+scale+sum", check_leaves(&[x.clone(), y], |g, v| {
        let s = g.add(v[0], v[1])?;
        let d = g.sub(v[0], v[1])?;
        let m = g.mul(s, d)?;
        let m = g.scale(m, 0.7);
        Ok(g.sum(m))
    })?);
    let target = random(&[4, 5], -1.0, 1.0, &mut r);
    push("power_normalize+mse", check_leaves(&[x.clone()], |g, v| {
        let n = g.power_normalize(v[0], 5.0)?;
        let tv = g.constant(&target);
        g.mse(n, tv)
    })?);
    // rows straddle the limit so both hinge branches are exercised
    let mut rows = random(&[6, LATENT_DIM], -0.5, 0.5, &mut r);
    for (i, v) in rows.data_mut().iter_mut().enumerate() {
        if (i / LATENT_DIM) % 2 == 0 {
            *v *= 0.1;
        }
    }
    push("power_hinge", check_leaves(&[rows], |g, v| g.power_hinge(v[0], 0.01))?);

    let base = SemPipeline::new(&mut r);
    let ds = data::synthetic(10, seed).expect("ten samples").head(4);
    let n = semcom::noise(4, &ChannelConfig::new(10.0), &mut r);
    let nets: Vec<Network> = base.networks().into_iter().cloned().collect();
    push("pipeline+awgn+mse", check_networks(&nets, |g, b| {
        let s = g.constant(&ds.images);
        let h = b[0].forward(g, s)?;
        let raw = b[1].forward(g, h)?;
        let x = g.power_normalize(raw, LATENT_DIM as f64)?;
        let nv = g.constant(&n);
        let y = g.add(x, nv)?;
        let h = b[2].forward(g, y)?;
        let s_hat = b[3].forward(g, h)?;
        g.mse(s_hat, s)
    })?);

    let eve = Classifier::eve(&mut r);
    let codewords = base.transmit(&ds.images)?;
    push("classifier input gradient", check_leaves(&[codewords.clone()], |g, v| {
        let bound = eve.net.bind_constant(g);
        let logits = bound.forward(g, v[0])?;
        g.cross_entropy(logits, &ds.labels)
    })?);

    let mut alice = ArnAlice::new(&mut r);
    let mut bob = ArnBob::new(&mut r);
    randomize_output_layer(&mut alice.block, &mut r);
    randomize_output_layer(&mut bob.block, &mut r);
    let bob_noise = semcom::noise(4, &ChannelConfig::new(10.0), &mut r);
    let eve_noise = semcom::noise(4, &ChannelConfig::new(10.0), &mut r);
    let cfg = SecureLossConfig {
        epsilon: 0.005,
        ..SecureLossConfig::default()
    };
    let batch = SecureBatch {
        codewords: &codewords,
        images: &ds.images,
        labels: &ds.labels,
        bob_noise: &bob_noise,
        eve_noise: &eve_noise,
    };
    let eval = |params: &[f64], want: bool| -> Result<(f64, Vec<f64>)> {
        let (mut a, mut b) = (alice.clone(), bob.clone());
        let split = a.block.param_count();
        a.block.set_flat_params(&params[..split])?;
        b.block.set_flat_params(&params[split..])?;
        let mut g = Graph::new();
        let bound = BoundSecure::new(&mut g, &a, &b, &base, &eve);
        let terms = bound.objective(&mut g, &batch, &cfg)?;
        let mut grad = Vec::new();
        if want {
            let grads = g.backward(terms.total)?;
            a.block.accumulate_grads(&bound.alice, &grads);
            b.block.accumulate_grads(&bound.bob, &grads);
            grad = a.block.flat_grads();
            grad.extend(b.block.flat_grads());
        }
        Ok((g.scalar(terms.total), grad))
    };
    let mut flat = alice.block.flat_params();
    flat.extend(bob.block.flat_params());
    let analytic = eval(&flat, true)?.1;
    let err = grad_check(|p| eval(p, false).expect("perturbed evaluation").0, &flat, &analytic, STEP);
    push("secure composite objective", (flat.len(), err));

    Ok(cases)
}

pub fn max_error(cases: &[GradCase]) -> f64 {
    cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes() {
        let cases = gradient_suite(11).unwrap();
        assert_eq!(cases.len(), 10);
        for c in &cases {
            assert!(c.max_rel_error < TOLERANCE, "{}: {}", c.name, c.max_rel_error);
        }
    }
}
