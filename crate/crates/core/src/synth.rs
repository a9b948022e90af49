//! Synthetic two-modality scenarios: a shared latent sample pushed through two
//! seeded distortion maps `z ↦ σ(g ⊙ Az + c) + η`, and the unpairing protocol
//! that keeps `m` pairs and drops a fraction of the rest per modality.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::io::{EmbeddingSet, PairManifest};
use crate::linalg::svd_desc;

/// Fraction of unpaired samples dropped per modality.
pub const DEFAULT_REMOVAL_FRAC: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    #[default]
    GaussianMixture,
    SwissRoll,
    TwoMoons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticScenario {
    pub latent_dim: usize,
    pub latent_kind: LatentKind,
    /// Mixture components (gaussian_mixture only).
    pub components: usize,
    /// Spread of component means relative to the unit component width.
    pub separation: f64,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub noise: f64,
    pub nonlinearity: Nonlinearity,
    /// Scale of the random tanh gains `warp · U[0.5, 1.5]` and offsets
    /// `warp · U[−0.5, 0.5]`.
    pub warp: f64,
    /// Output scale of the warp, i.e. the signal level against `noise`.
    pub amplitude: f64,
    /// Use the X-side map for both modalities (requires `d1 == d2`).
    pub identical_maps: bool,
    pub seed: u64,
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        SyntheticScenario::acceptance(0)
    }
}

impl SyntheticScenario {
    /// Gaussian mixture, p = 8, 10 components, n = 2000, d1 = 64, d2 = 96,
    /// noise 0.05. The small amplitude puts the per-coordinate signal at the
    /// noise level, so linear CCA on the raw features cannot just read the
    /// latent off 50 pairs.
    pub fn acceptance(seed: u64) -> Self {
        SyntheticScenario {
            latent_dim: 8,
            latent_kind: LatentKind::GaussianMixture,
            components: 10,
            separation: 1.0,
            n: 2000,
            d1: 64,
            d2: 96,
            noise: 0.05,
            nonlinearity: Nonlinearity::Tanh,
            warp: 2.0,
            amplitude: 0.05,
            identical_maps: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let min_p = match self.latent_kind {
            LatentKind::GaussianMixture => 1,
            LatentKind::SwissRoll => 3,
            LatentKind::TwoMoons => 2,
        };
        if self.latent_dim < min_p {
            return Err(Error::config(format!(
                "{:?} needs latent_dim >= {min_p}",
                self.latent_kind
            )));
        }
        if self.d1 < self.latent_dim || self.d2 < self.latent_dim {
            return Err(Error::config(format!(
                "lift dims ({}, {}) must be >= latent_dim {} for full column rank",
                self.d1, self.d2, self.latent_dim
            )));
        }
        if self.n == 0 {
            return Err(Error::config("n must be >= 1"));
        }
        if !(self.warp > 0.0) || !(self.amplitude > 0.0) {
            return Err(Error::config("warp and amplitude must be > 0"));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::config("noise must be >= 0"));
        }
        if self.latent_kind == LatentKind::GaussianMixture && self.components == 0 {
            return Err(Error::config("components must be >= 1"));
        }
        if self.identical_maps && self.d1 != self.d2 {
            return Err(Error::config("identical maps need d1 == d2"));
        }
        Ok(())
    }
}

/// One modality's distortion `x = a · σ(g ⊙ (A z) + c) + η`, rows of `A`
/// unit-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityMap {
    /// `d × p`, full column rank.
    pub lift: Array2<f64>,
    pub gains: Array1<f64>,
    pub offsets: Array1<f64>,
    pub amplitude: f64,
    pub noise: f64,
    pub nonlinearity: Nonlinearity,
}

impl ModalityMap {
    pub fn random(d: usize, p: usize, sc: &SyntheticScenario, seed: u64) -> Result<Self> {
        let warp = sc.warp;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lift = Array2::from_shape_fn((d, p), |_| rng.sample::<f64, _>(StandardNormal));
        for mut row in lift.rows_mut() {
            let nrm = row.dot(&row).sqrt().max(1e-12);
            row /= nrm;
        }
        let (_, sv, _) = svd_desc(lift.view())?;
        if sv[p - 1] < 1e-8 * sv[0] {
            return Err(Error::Numerical("random lift is rank deficient".into()));
        }
        let (gains, offsets) = match sc.nonlinearity {
            Nonlinearity::Tanh => (
                Array1::from_shape_fn(d, |_| warp * rng.gen_range(0.5..1.5)),
                Array1::from_shape_fn(d, |_| warp * rng.gen_range(-0.5..0.5)),
            ),
            Nonlinearity::Identity => (Array1::ones(d), Array1::zeros(d)),
        };
        Ok(ModalityMap {
            lift,
            gains,
            offsets,
            amplitude: sc.amplitude,
            noise: sc.noise,
            nonlinearity: sc.nonlinearity,
        })
    }

    pub fn apply(&self, z: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut x = z.dot(&self.lift.t()) * &self.gains + &self.offsets;
        let a = self.amplitude;
        match self.nonlinearity {
            Nonlinearity::Tanh => x.mapv_inplace(|v| a * v.tanh()),
            Nonlinearity::Identity => x *= a,
        }
        if self.noise > 0.0 {
            let eta = Normal::new(0.0, self.noise).unwrap();
            x.mapv_inplace(|v| v + eta.sample(rng));
        }
        x
    }
}

/// Latent sample and region ids of every generated pair; row `i` of both
/// modalities comes from `latent[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub latent: Array2<f64>,
    pub labels: Vec<u32>,
}

/// Two interleaved half circles with isotropic Gaussian noise; labels are
/// the moon ids.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> (Array2<f64>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_upper = n / 2 + n % 2;
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let upper = i < n_upper;
        let (cnt, k) = if upper { (n_upper, i) } else { (n - n_upper, i - n_upper) };
        let t = std::f64::consts::PI * k as f64 / (cnt.max(2) - 1) as f64;
        let (a, b) = if upper { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        x[[i, 0]] = a + noise * rng.sample::<f64, _>(StandardNormal);
        x[[i, 1]] = b + noise * rng.sample::<f64, _>(StandardNormal);
        labels.push(u32::from(!upper));
    }
    (x, labels)
}

fn latent_sample(sc: &SyntheticScenario, n: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<u32>) {
    let p = sc.latent_dim;
    let (mut z, labels) = match sc.latent_kind {
        LatentKind::GaussianMixture => {
            let means = Array2::from_shape_fn((sc.components, p), |_| sc.separation * rng.sample::<f64, _>(StandardNormal));
            let mut z = Array2::zeros((n, p));
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = rng.gen_range(0..sc.components);
                for j in 0..p {
                    z[[i, j]] = means[[c, j]] + rng.sample::<f64, _>(StandardNormal);
                }
                labels.push(c as u32);
            }
            (z, labels)
        }
        LatentKind::SwissRoll => {
            let mut z = Array2::zeros((n, p));
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.gen::<f64>());
                z[[i, 0]] = t * t.cos();
                z[[i, 1]] = 21.0 * rng.gen::<f64>();
                z[[i, 2]] = t * t.sin();
                for j in 3..p {
                    z[[i, j]] = 0.1 * rng.sample::<f64, _>(StandardNormal);
                }
                let frac = (t / std::f64::consts::PI - 1.5) / 3.0;
                labels.push(((frac * 4.0) as u32).min(3));
            }
            (z, labels)
        }
        LatentKind::TwoMoons => {
            let (m, labels) = two_moons(n, 0.05, rng.gen());
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            let mut z = Array2::zeros((n, p));
            for (i, &src) in perm.iter().enumerate() {
                z[[i, 0]] = m[[src, 0]];
                z[[i, 1]] = m[[src, 1]];
                for j in 2..p {
                    z[[i, j]] = 0.05 * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let labels = perm.iter().map(|&src| labels[src]).collect();
            (z, labels)
        }
    };
    // Unit overall scale so the lift gains act comparably for every kind.
    let mean = z.mean_axis(Axis(0)).unwrap();
    z -= &mean;
    let sd = (z.iter().map(|v| v * v).sum::<f64>() / (z.len() as f64)).sqrt();
    if sd > 0.0 {
        z /= sd;
    }
    (z, labels)
}

/// Generates `sc.n` true pairs. Deterministic in `sc.seed`.
pub fn generate(sc: &SyntheticScenario) -> Result<(EmbeddingSet, EmbeddingSet, GroundTruth)> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sc.seed, 100));
    let (latent, labels) = latent_sample(sc, sc.n, &mut rng);
    let map_x = ModalityMap::random(sc.d1, sc.latent_dim, sc, derive_seed(sc.seed, 101))?;
    let map_y = if sc.identical_maps {
        map_x.clone()
    } else {
        ModalityMap::random(sc.d2, sc.latent_dim, sc, derive_seed(sc.seed, 102))?
    };
    let mut noise_x = ChaCha8Rng::seed_from_u64(derive_seed(sc.seed, 103));
    let mut noise_y = ChaCha8Rng::seed_from_u64(derive_seed(sc.seed, 104));
    let x = map_x.apply(&latent, &mut noise_x);
    let y = map_y.apply(&latent, &mut noise_y);
    let xs = EmbeddingSet::from_f64("x", &x)?.with_labels(labels.clone())?;
    let ys = EmbeddingSet::from_f64("y", &y)?.with_labels(labels.clone())?;
    Ok((xs, ys, GroundTruth { latent, labels }))
}

/// Which generated sample each row of a weakened set came from. Kept apart
/// from [`WeakPairing::data`] so fitting code never sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SealedTruth {
    pub x_origin: Vec<usize>,
    pub y_origin: Vec<usize>,
}

/// What fitting code is allowed to see.
#[derive(Debug, Clone)]
pub struct WeakData {
    pub x_set: EmbeddingSet,
    pub y_set: EmbeddingSet,
    pub manifest: PairManifest,
}

#[derive(Debug, Clone)]
pub struct WeakPairing {
    data: WeakData,
    truth: SealedTruth,
}

impl WeakPairing {
    pub fn data(&self) -> &WeakData {
        &self.data
    }

    /// For evaluation only.
    pub fn truth(&self) -> &SealedTruth {
        &self.truth
    }

    pub fn into_parts(self) -> (WeakData, SealedTruth) {
        (self.data, self.truth)
    }
}

/// Keeps `m` random true pairs, drops `floor(removal_frac · (n − m))` of the
/// remaining samples independently per modality, and shuffles each side.
pub fn weaken(
    x_set: &EmbeddingSet,
    y_set: &EmbeddingSet,
    truth: &GroundTruth,
    m: usize,
    removal_frac: f64,
    seed: u64,
) -> Result<WeakPairing> {
    let n = x_set.n();
    if y_set.n() != n || truth.latent.nrows() != n {
        return Err(Error::dim("x, y and ground truth must describe the same samples"));
    }
    if !(0.0..1.0).contains(&removal_frac) {
        return Err(Error::config(format!("removal_frac must be in [0, 1), got {removal_frac}")));
    }
    let n_unpaired = n.saturating_sub(m);
    let n_remove = (removal_frac * n_unpaired as f64).floor() as usize;
    if m > n || m as f64 > n as f64 * (1.0 - removal_frac) {
        return Err(Error::config(format!(
            "pair budget m = {m} too large for n = {n} with removal {removal_frac}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let paired = order[..m].to_vec();
    let unpaired = &order[m..];
    let side = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut keep = unpaired.to_vec();
        keep.shuffle(rng);
        keep.truncate(n_unpaired - n_remove);
        let mut rows: Vec<usize> = paired.iter().copied().chain(keep).collect();
        rows.shuffle(rng);
        rows
    };
    let x_origin = side(&mut rng);
    let y_origin = side(&mut rng);
    let pos = |origin: &[usize], s: usize| origin.iter().position(|&o| o == s).unwrap();
    let pairs: Vec<(usize, usize)> = paired.iter().map(|&s| (pos(&x_origin, s), pos(&y_origin, s))).collect();
    let x = x_set.select(&x_origin)?;
    let y = y_set.select(&y_origin)?;
    let manifest = PairManifest::new(pairs, x.n(), y.n())?;
    Ok(WeakPairing {
        data: WeakData { x_set: x, y_set: y, manifest },
        truth: SealedTruth { x_origin, y_origin },
    })
}

/// Training data under the unpairing protocol plus a disjoint, row-aligned
/// test set of true pairs.
#[derive(Debug, Clone)]
pub struct ExperimentSplit {
    pub train: WeakPairing,
    pub test_x: EmbeddingSet,
    pub test_y: EmbeddingSet,
}

/// Generates `n_train + n_test` pairs from `sc` (its `n` is ignored), holds
/// out `n_test` of them, and weakens the rest to `m` pairs.
pub fn experiment_split(
    sc: &SyntheticScenario,
    n_train: usize,
    n_test: usize,
    m: usize,
    removal_frac: f64,
) -> Result<ExperimentSplit> {
    let total = SyntheticScenario { n: n_train + n_test, ..sc.clone() };
    let (x, y, truth) = generate(&total)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sc.seed, 200));
    let mut order: Vec<usize> = (0..total.n).collect();
    order.shuffle(&mut rng);
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let tx = x.select(&train_idx)?;
    let ty = y.select(&train_idx)?;
    let ttruth = GroundTruth {
        latent: truth.latent.select(Axis(0), &train_idx),
        labels: train_idx.iter().map(|&i| truth.labels[i]).collect(),
    };
    let train = weaken(&tx, &ty, &ttruth, m, removal_frac, derive_seed(sc.seed, 201))?;
    Ok(ExperimentSplit {
        train,
        test_x: x.select(test_idx)?,
        test_y: y.select(test_idx)?,
    })
}
