mod common;

use common::{dense_sym_eig, gaussian, naive_recall, set, to_na};
use ndarray::{Array1, Array2, Axis};
use sue::align::fit_cca;
use sue::graph::{build_affinity, Metric};
use sue::nn::{mmd_sq, train_contrastive, train_mmd_residual, Activation, Mlp, MmdKernel, TrainConfig};
use sue::spectral::parametric::ParametricConfig;
use sue::spectral::{fit_spectral, fit_spectral_parametric, SpectralOptions};
use sue::synth::two_moons;

/// Biased MMD² straight from the definition, one bandwidth at a time.
fn brute_mmd(x: &Array2<f64>, y: &Array2<f64>, bandwidths: &[f64]) -> f64 {
    let k = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
        bandwidths.iter().map(|s| (-d2 / (2.0 * s * s)).exp()).sum::<f64>() / bandwidths.len() as f64
    };
    let mean = |a: &Array2<f64>, b: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for r in a.rows() {
            for q in b.rows() {
                s += k(r, q);
            }
        }
        s / (a.nrows() * b.nrows()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

#[test]
fn mmd_matches_brute_force_on_shifted_gaussians() {
    let x = gaussian(2000, 1, 1);
    let y = gaussian(2000, 1, 2) + 3.0;
    let bw = [0.5, 1.0, 2.0];
    let got = mmd_sq(x.view(), y.view(), &MmdKernel::Fixed(bw.to_vec())).unwrap();
    let want = brute_mmd(&x, &y, &bw);
    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    assert!(mmd_sq(x.view(), x.view(), &MmdKernel::default()).unwrap() <= 1e-12);
}

fn residual(dim: usize, seed: u64) -> Mlp {
    Mlp::residual_identity(dim, &[64, 64], Activation::Relu, seed).unwrap()
}

fn row_norm_mean(a: &Array2<f64>) -> f64 {
    a.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / a.nrows() as f64
}

#[test]
fn trained_residual_closes_a_mean_shift() {
    let c = Array1::from(vec![1.5, -1.0, 0.5, 1.0]);
    let src = gaussian(1500, 4, 3);
    let tgt = gaussian(1500, 4, 4) + &c;
    let cfg = TrainConfig { epochs: 100, learning_rate: 3e-3, seed: 5, ..TrainConfig::default() };
    let (net, hist) = train_mmd_residual(&residual(4, 6), src.view(), tgt.view(), &cfg, &MmdKernel::default()).unwrap();
    let v0 = hist.epochs[0].val_loss;
    let best = hist.best().unwrap().val_loss;
    assert!(best <= 0.1 * v0, "validation MMD {best} vs initial {v0}");
    let moved = net.forward(src.view()).unwrap();
    let shift = moved.mean_axis(Axis(0)).unwrap() - src.mean_axis(Axis(0)).unwrap();
    let err = (&shift - &c).mapv(|v| v * v).sum().sqrt();
    assert!(err <= 0.2 * c.dot(&c).sqrt(), "mean shift off by {err}");
}

#[test]
fn trained_residual_stays_put_on_matching_distributions() {
    let src = gaussian(1500, 4, 7);
    let tgt = gaussian(1500, 4, 8);
    let cfg = TrainConfig { seed: 9, ..TrainConfig::default() };
    let (net, _) = train_mmd_residual(&residual(4, 10), src.view(), tgt.view(), &cfg, &MmdKernel::default()).unwrap();
    let moved = net.forward(src.view()).unwrap();
    let disp = row_norm_mean(&(&moved - &src));
    assert!(disp <= 0.1 * row_norm_mean(&src), "displacement {disp}");
}

#[test]
fn contrastive_towers_memorize_the_training_pairs() {
    let x = gaussian(100, 8, 11);
    let a = gaussian(8, 10, 12);
    let y = x.dot(&a).mapv(f64::tanh);
    let nx = Mlp::new(&[8, 64, 16], Activation::Relu, false, 13).unwrap();
    let ny = Mlp::new(&[10, 64, 16], Activation::Relu, false, 14).unwrap();
    let cfg = TrainConfig { epochs: 300, batch_size: 100, val_fraction: 0.0, seed: 15, ..TrainConfig::default() };
    let (fx, fy, hist) = train_contrastive(&nx, &ny, x.view(), y.view(), &cfg, 0.07).unwrap();
    assert!(hist.epochs.last().unwrap().train_loss < hist.epochs[0].train_loss);
    let r1 = naive_recall(fx.forward(x.view()).unwrap().view(), fy.forward(y.view()).unwrap().view(), 1);
    assert!(r1 >= 90.0, "train R@1 = {r1}");
}

/// `tr((ỸᵀDỸ)⁻¹ Ỹᵀ(D − W)Ỹ)` with `Ỹ` degree-centered, from a dense `W`.
fn dense_rayleigh(w: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let d = w.sum_axis(Axis(1));
    let dm = Array2::from_diag(&d);
    let mean = d.dot(y) / d.sum();
    let yc = y - &mean;
    let b = to_na(yc.t().dot(&dm).dot(&yc).view());
    let a = to_na(yc.t().dot(&(&dm - w)).dot(&yc).view());
    (b.try_inverse().unwrap() * a).trace()
}

#[test]
fn parametric_embedding_tracks_numeric_on_two_moons() {
    let (data, _) = two_moons(500, 0.05, 16);
    let st = set(&data.mapv(|v| v as f32 as f64));
    let g = build_affinity(&st, 100, Metric::Euclidean).unwrap();
    let k = 3;
    let numeric = fit_spectral(&st, &g, k, &SpectralOptions::default()).unwrap();
    let lam_sum: f64 = numeric.eigenvalues.iter().map(|m| 1.0 - m).sum();

    // Full batch, run to convergence.
    let mut cfg = ParametricConfig::default();
    cfg.train = TrainConfig { learning_rate: 1e-2, epochs: 1000, val_fraction: 0.0, seed: 17, ..cfg.train };
    let p = fit_spectral_parametric(&st, &g, k, &cfg).unwrap();
    let y = p.embed(st.to_f64().view()).unwrap();
    let rq = dense_rayleigh(&g.weights().to_dense(), &y);
    assert!(rq >= lam_sum - 1e-9, "below the optimum: {rq} < {lam_sum}");
    assert!(rq <= 1.05 * lam_sum, "Rayleigh quotient {rq} vs optimum {lam_sum}");

    let n = y.nrows() as f64;
    let gram = y.t().dot(&y) / n - Array2::<f64>::eye(k);
    let (ev, _) = dense_sym_eig(gram.view());
    let op = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(op <= 0.05, "Gram deviation {op}");

    let cca = fit_cca(y.view(), numeric.eigenvectors.view(), k, Some(0.0)).unwrap();
    assert!(cca.correlations.iter().all(|&c| c >= 0.9), "{:?}", cca.correlations);
}
