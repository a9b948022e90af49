//! Finite-difference audits of every trainable loss with respect to network
//! parameters. Each returns the worst relative error over its instances.

use ndarray::Array2;
use sue::graph::Metric;
use sue::nn::orthonorm::Orthonormalizer;
use sue::nn::spectralnet::batch_graph;
use sue::nn::{info_nce, mmd_sq, mmd_sq_grad, spectralnet_loss, Activation, Mlp, MmdKernel, OutTransform};

use super::{fd_grad, gaussian, rel_err};

pub const EPS: f64 = 1e-5;

fn with_params(net: &Mlp, p: &[f64]) -> Mlp {
    let mut n = net.clone();
    n.set_flat_params(p).unwrap();
    n
}

/// `mmd_sq(F(source), target)` through a residual tanh net, bandwidths fixed
/// at the median-heuristic values of the starting point.
pub fn mmd_instance(seed: u64) -> f64 {
    let r = 2 + (seed % 3) as usize;
    let net = Mlp::new(&[r, 5, 4, r], Activation::Tanh, true, seed).unwrap();
    let src = gaussian(6 + (seed % 4) as usize, r, 1000 + seed);
    let tgt = gaussian(7, r, 2000 + seed) + 0.5;
    let out0 = net.forward(src.view()).unwrap();
    let bw = MmdKernel::default().resolve(out0.view(), tgt.view()).unwrap();
    let kernel = MmdKernel::Fixed(bw);
    let (out, tape) = net.forward_tape(src.view()).unwrap();
    let (_, gx, _) = mmd_sq_grad(out.view(), tgt.view(), &kernel).unwrap();
    let analytic = net.backward(&tape, gx.view()).unwrap().0.flatten();
    let numeric = fd_grad(&net.flat_params(), EPS, |p| {
        let f = with_params(&net, p).forward(src.view()).unwrap();
        mmd_sq(f.view(), tgt.view(), &kernel).unwrap()
    });
    rel_err(&analytic, &numeric)
}

/// Rayleigh loss `(1/b²) tr(YᵀLY)` with `Y` the Cholesky-orthonormalized
/// output of a tanh net and `L` the batch random-walk Laplacian.
pub fn spectralnet_instance(seed: u64) -> f64 {
    let k_out = 2 + (seed % 2) as usize;
    let net = Mlp::new(&[3, 6, k_out], Activation::Tanh, false, seed)
        .unwrap()
        .with_out_transform(OutTransform::Orthonormalize { frozen: None });
    let x = gaussian(10 + (seed % 5) as usize, 3, 3000 + seed);
    let graph = batch_graph(x.view(), 4, Metric::Euclidean).unwrap();
    let (raw, tape) = net.forward_tape(x.view()).unwrap();
    let (y, cache) = Orthonormalizer::forward(raw.view()).unwrap();
    let (_, dy) = spectralnet_loss(y.view(), &graph).unwrap();
    let d_raw = Orthonormalizer::backward(&cache, dy.view());
    let analytic = net.backward(&tape, d_raw.view()).unwrap().0.flatten();
    let numeric = fd_grad(&net.flat_params(), EPS, |p| {
        let raw = with_params(&net, p).forward_raw(x.view()).unwrap();
        let (y, _) = Orthonormalizer::forward(raw.view()).unwrap();
        spectralnet_loss(y.view(), &graph).unwrap().0
    });
    rel_err(&analytic, &numeric)
}

/// Symmetric InfoNCE through two towers, both towers' parameters at once.
pub fn contrastive_instance(seed: u64) -> f64 {
    let temperature = [0.07, 0.5, 1.0][(seed % 3) as usize];
    let m = 3 + (seed % 4) as usize;
    let nx = Mlp::new(&[4, 6, 3], Activation::Tanh, false, seed).unwrap();
    let ny = Mlp::new(&[5, 6, 3], Activation::Tanh, false, seed + 77).unwrap();
    let x = gaussian(m, 4, 4000 + seed);
    let y = gaussian(m, 5, 5000 + seed);
    let (zx, tx) = nx.forward_tape(x.view()).unwrap();
    let (zy, ty) = ny.forward_tape(y.view()).unwrap();
    let (_, dzx, dzy) = info_nce(zx.view(), zy.view(), temperature).unwrap();
    let mut analytic = nx.backward(&tx, dzx.view()).unwrap().0.flatten();
    analytic.extend(ny.backward(&ty, dzy.view()).unwrap().0.flatten());
    let split = nx.num_params();
    let mut p0 = nx.flat_params();
    p0.extend(ny.flat_params());
    let numeric = fd_grad(&p0, EPS, |p| {
        let zx = with_params(&nx, &p[..split]).forward(x.view()).unwrap();
        let zy = with_params(&ny, &p[split..]).forward(y.view()).unwrap();
        info_nce(zx.view(), zy.view(), temperature).unwrap().0
    });
    rel_err(&analytic, &numeric)
}

/// Plain backprop of `⟨U, f(X)⟩` for a random upstream `U`.
pub fn backward_instance(seed: u64) -> f64 {
    let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Relu };
    // Random biases keep ReLU pre-activations away from the kink at 0.
    let net = Mlp::new(&[3, 5, 4, 2], act, false, seed).unwrap();
    let p: Vec<f64> = gaussian(1, net.num_params(), 8000 + seed).iter().copied().collect();
    let net = with_params(&net, &p);
    let x = gaussian(6, 3, 6000 + seed);
    let u: Array2<f64> = gaussian(6, 2, 7000 + seed);
    let (_, tape) = net.forward_tape(x.view()).unwrap();
    let analytic = net.backward(&tape, u.view()).unwrap().0.flatten();
    let numeric = fd_grad(&net.flat_params(), EPS, |p| (&with_params(&net, p).forward(x.view()).unwrap() * &u).sum());
    rel_err(&analytic, &numeric)
}

pub fn worst(instances: u64, f: impl Fn(u64) -> f64) -> f64 {
    (0..instances).map(f).fold(0.0, f64::max)
}
