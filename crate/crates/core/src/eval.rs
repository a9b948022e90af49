//! Diagnostics: retrieval, zero-shot and kNN classification, random-walk
//! similarity across modalities, paired distances, modality gap, and sweeps.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::align::{fit_contrastive, fit_sue, ContrastiveConfig, SharedSpace, SueConfig};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::graph::{build_affinity_cloud, clamp_k, random_walk, Metric, PointCloud};
use crate::io::{EmbeddingSet, PairManifest};
use crate::synth::{experiment_split, SyntheticScenario, DEFAULT_REMOVAL_FRAC};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];
pub const DEFAULT_N_TEST: usize = 400;
pub const DEFAULT_RW_BATCH: usize = 9;

/// Neighbourhood size relative to the training set in synthetic experiments.
pub const DEFAULT_K_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metrics: BTreeMap<String, f64>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub n_test: usize,
    /// Raw per-item samples (e.g. distance distributions), keyed by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub samples: BTreeMap<String, Vec<f64>>,
}

impl EvalReport {
    pub fn new(task: impl Into<String>, seed: u64, n_test: usize) -> Self {
        EvalReport {
            task: task.into(),
            metrics: BTreeMap::new(),
            config: serde_json::Value::Null,
            seed,
            n_test,
            samples: BTreeMap::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// `metric,value` rows in key order. Values use Rust's shortest
    /// round-trip formatting, so equal numbers give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    /// Two-column CSV of two equally long samples, padded with empty cells.
    pub fn samples_csv(&self, a: &str, b: &str) -> Option<String> {
        let (xa, xb) = (self.samples.get(a)?, self.samples.get(b)?);
        let mut s = format!("{a},{b}\n");
        for i in 0..xa.len().max(xb.len()) {
            let cell = |v: &Vec<f64>| v.get(i).map(|x| x.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{}\n", cell(xa), cell(xb)));
        }
        Some(s)
    }
}

fn normalize_rows(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    for mut r in out.rows_mut() {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    out
}

fn cosine_similarities(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::dim(format!("widths differ: {} vs {}", a.ncols(), b.ncols())));
    }
    Ok(normalize_rows(a).dot(&normalize_rows(b).t()))
}

/// Percentage of queries whose partner (same row index in `gallery`) ranks in
/// the top `k` by cosine similarity; ties go to the lower gallery index.
pub fn recall_at_k(queries: ArrayView2<'_, f64>, gallery: ArrayView2<'_, f64>, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let t = queries.nrows();
    if gallery.nrows() != t {
        return Err(Error::dim(format!("{t} queries but {} gallery items", gallery.nrows())));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > t) {
        return Err(Error::config(format!("k = {k} invalid for {t} test items")));
    }
    let sim = cosine_similarities(queries, gallery)?;
    let ranks: Vec<usize> = (0..t)
        .map(|i| {
            let row = sim.row(i);
            let own = row[i];
            (0..t).filter(|&j| row[j] > own || (row[j] == own && j < i)).count()
        })
        .collect();
    Ok(ks
        .iter()
        .map(|&k| (k, 100.0 * ranks.iter().filter(|&&r| r < k).count() as f64 / t as f64))
        .collect())
}

/// Accuracy (%) of assigning each row to its most cosine-similar prototype.
pub fn zero_shot(embeddings: ArrayView2<'_, f64>, prototypes: ArrayView2<'_, f64>, true_labels: &[u32]) -> Result<f64> {
    let c = prototypes.nrows();
    if c == 0 {
        return Err(Error::config("no label prototypes"));
    }
    if true_labels.len() != embeddings.nrows() {
        return Err(Error::dim("one label per embedding row required"));
    }
    if let Some(&l) = true_labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::config(format!("label {l} out of range for {c} prototypes")));
    }
    if embeddings.nrows() == 0 {
        return Err(Error::config("no embeddings to classify"));
    }
    let sim = cosine_similarities(embeddings, prototypes)?;
    let correct = sim
        .rows()
        .into_iter()
        .zip(true_labels)
        .filter(|(row, &l)| {
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best == l as usize
        })
        .count();
    Ok(100.0 * correct as f64 / true_labels.len() as f64)
}

/// Majority vote over the `k` cosine-nearest training rows. Ties: smaller
/// summed distance, then lower label.
pub fn knn_classify(
    train_emb: ArrayView2<'_, f64>,
    train_labels: &[u32],
    test_emb: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<u32>> {
    let n = train_emb.nrows();
    if n == 0 {
        return Err(Error::config("empty training set"));
    }
    if train_labels.len() != n {
        return Err(Error::dim("one label per training row required"));
    }
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} invalid for {n} training rows")));
    }
    let sim = cosine_similarities(test_emb, train_emb)?;
    Ok(sim
        .rows()
        .into_iter()
        .map(|row| {
            let dist: Vec<f64> = row.iter().map(|s| 1.0 - s).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
            let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
            for &j in &order[..k] {
                let e = votes.entry(train_labels[j]).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += dist[j];
            }
            // BTreeMap iterates labels ascending, so strict comparisons keep the lower label.
            let mut best: Option<(u32, usize, f64)> = None;
            for (&l, &(c, d)) in &votes {
                best = match best {
                    Some((_, bc, bd)) if bc > c || (bc == c && bd <= d) => best,
                    _ => Some((l, c, d)),
                };
            }
            best.unwrap().0
        })
        .collect())
}

/// `‖A − B‖_F / ‖A + B‖_F`.
pub fn rw_similarity(p_a: ArrayView2<'_, f64>, p_b: ArrayView2<'_, f64>) -> Result<f64> {
    if p_a.dim() != p_b.dim() {
        return Err(Error::dim(format!("shapes differ: {:?} vs {:?}", p_a.dim(), p_b.dim())));
    }
    let num = (&p_a - &p_b).iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = (&p_a + &p_b).iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Two-sided Mann–Whitney rank-sum test (normal approximation with tie
/// correction). Returns `(U_a, p)`.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::config("rank-sum test needs two non-empty samples"));
    }
    let mut all: Vec<(f64, usize)> = a.iter().map(|&v| (v, 0)).chain(b.iter().map(|&v| (v, 1))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for rank in ranks.iter_mut().take(j + 1).skip(i) {
            *rank = r;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let r1: f64 = all.iter().zip(&ranks).filter(|(e, _)| e.1 == 0).map(|(_, r)| r).sum();
    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let u1 = r1 - f1 * (f1 + 1.0) / 2.0;
    let mu = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)).max(1.0));
    if var <= 0.0 {
        return Ok((u1, 1.0));
    }
    let z = (u1 - mu).abs() / var.sqrt();
    let p = 2.0 * (1.0 - Normal::new(0.0, 1.0).unwrap().cdf(z));
    Ok((u1, p.clamp(0.0, 1.0)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn walk_matrix(rows: Array2<f64>, k_neighbors: usize, metric: Metric) -> Result<Array2<f64>> {
    let cloud = PointCloud::new(rows, metric)?;
    let g = build_affinity_cloud(&cloud, clamp_k(k_neighbors, cloud.n()))?;
    Ok(random_walk(&g)?.to_dense())
}

/// Options for [`rw_universality_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RwOptions {
    pub batch_size: usize,
    pub n_batches: usize,
    pub k_neighbors: usize,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for RwOptions {
    fn default() -> Self {
        RwOptions {
            batch_size: DEFAULT_RW_BATCH,
            n_batches: 1000,
            k_neighbors: DEFAULT_RW_BATCH - 1,
            metric: Metric::Cosine,
            seed: 0,
        }
    }
}

/// Compares random-walk matrices built independently on paired batches of
/// both modalities against the same comparison with the Y batch shuffled.
pub fn rw_universality_experiment(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    pairs: &PairManifest,
    opts: &RwOptions,
) -> Result<EvalReport> {
    if opts.n_batches == 0 {
        return Err(Error::config("n_batches = 0 gives an empty report"));
    }
    if opts.batch_size < 3 {
        return Err(Error::config("batch_size must be >= 3"));
    }
    if pairs.m() < opts.batch_size {
        return Err(Error::config(format!(
            "{} pairs cannot fill a batch of {}",
            pairs.m(),
            opts.batch_size
        )));
    }
    let xf = x.to_f64();
    let yf = y.to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let batches: Vec<(Vec<usize>, Vec<usize>)> = (0..opts.n_batches)
        .map(|_| {
            let chosen: Vec<usize> = rand::seq::index::sample(&mut rng, pairs.m(), opts.batch_size).into_vec();
            let mut perm: Vec<usize> = (0..opts.batch_size).collect();
            perm.shuffle(&mut rng);
            (chosen, perm)
        })
        .collect();
    let results: Vec<Result<(f64, f64)>> = batches
        .par_iter()
        .map(|(chosen, perm)| {
            let xi: Vec<usize> = chosen.iter().map(|&c| pairs.pairs()[c].0).collect();
            let yi: Vec<usize> = chosen.iter().map(|&c| pairs.pairs()[c].1).collect();
            let ys: Vec<usize> = perm.iter().map(|&p| yi[p]).collect();
            let px = walk_matrix(xf.select(Axis(0), &xi), opts.k_neighbors, opts.metric)?;
            let py = walk_matrix(yf.select(Axis(0), &yi), opts.k_neighbors, opts.metric)?;
            let pys = walk_matrix(yf.select(Axis(0), &ys), opts.k_neighbors, opts.metric)?;
            Ok((rw_similarity(px.view(), py.view())?, rw_similarity(px.view(), pys.view())?))
        })
        .collect();
    let mut paired = Vec::with_capacity(results.len());
    let mut shuffled = Vec::with_capacity(results.len());
    for r in results {
        let (a, b) = r?;
        paired.push(a);
        shuffled.push(b);
    }
    let (u, p) = mann_whitney(&paired, &shuffled)?;
    let mut rep = EvalReport::new("rw_universality", opts.seed, opts.n_batches);
    rep.config = serde_json::to_value(opts).unwrap_or_default();
    rep.metrics.insert("rw_dist_paired_mean".into(), mean(&paired));
    rep.metrics.insert("rw_dist_shuffled_mean".into(), mean(&shuffled));
    rep.metrics.insert("rank_sum_u".into(), u);
    rep.metrics.insert("p_value".into(), p);
    rep.samples.insert("paired".into(), paired);
    rep.samples.insert("shuffled".into(), shuffled);
    Ok(rep)
}

fn cosine_distance_rows(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Vec<f64> {
    let (a, b) = (normalize_rows(a), normalize_rows(b));
    a.rows().into_iter().zip(b.rows()).map(|(u, v)| 1.0 - u.dot(&v)).collect()
}

/// A permutation of `0..n` without fixed points (n ≥ 2).
fn derangement(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    for i in 0..n {
        if p[i] == i {
            let j = (i + 1) % n;
            p.swap(i, j);
        }
    }
    p
}

/// Cosine distances between mapped true pairs (rows of `test_x`, `test_y`)
/// versus randomly re-matched pairs.
pub fn paired_distance_experiment(
    model: &dyn SharedSpace,
    test_x: ArrayView2<'_, f64>,
    test_y: ArrayView2<'_, f64>,
    seed: u64,
) -> Result<EvalReport> {
    let t = test_x.nrows();
    if test_y.nrows() != t {
        return Err(Error::dim("test sets must be row-aligned"));
    }
    if t < 2 {
        return Err(Error::config("need at least 2 test pairs for a shuffled baseline"));
    }
    let fx = model.map_x_points(test_x)?;
    let fy = model.map_y_points(test_y)?;
    let paired = cosine_distance_rows(fx.view(), fy.view());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perm = derangement(t, &mut rng);
    let shuffled = cosine_distance_rows(fx.view(), fy.select(Axis(0), &perm).view());
    let (u, p) = mann_whitney(&paired, &shuffled)?;
    let mut rep = EvalReport::new("paired_distance", seed, t);
    rep.metrics.insert("paired_mean".into(), mean(&paired));
    rep.metrics.insert("shuffled_mean".into(), mean(&shuffled));
    rep.metrics.insert("rank_sum_u".into(), u);
    rep.metrics.insert("p_value".into(), p);
    rep.samples.insert("paired".into(), paired);
    rep.samples.insert("shuffled".into(), shuffled);
    Ok(rep)
}

/// `‖c_x − c_y‖` over the mean distance of all points to their own centroid.
pub fn modality_gap(emb_x: ArrayView2<'_, f64>, emb_y: ArrayView2<'_, f64>) -> Result<f64> {
    if emb_x.ncols() != emb_y.ncols() {
        return Err(Error::dim("modality gap needs equal widths"));
    }
    if emb_x.nrows() < 2 || emb_y.nrows() < 2 {
        return Err(Error::config("modality gap needs at least 2 points per side"));
    }
    let cx = emb_x.mean_axis(Axis(0)).unwrap();
    let cy = emb_y.mean_axis(Axis(0)).unwrap();
    let gap = (&cx - &cy).mapv(|v| v * v).sum().sqrt();
    let spread = |e: ArrayView2<'_, f64>, c: &Array1<f64>| -> f64 {
        e.rows().into_iter().map(|r| (&r - c).mapv(|v| v * v).sum().sqrt()).sum::<f64>()
    };
    let within = (spread(emb_x, &cx) + spread(emb_y, &cy)) / (emb_x.nrows() + emb_y.nrows()) as f64;
    if within == 0.0 {
        return Ok(if gap == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(gap / within)
}

/// Retrieval in both directions; `R@k` is the mean of `x2y_R@k` (X queries
/// against the Y gallery) and `y2x_R@k`.
pub fn retrieval_report(
    model: &dyn SharedSpace,
    test_x: ArrayView2<'_, f64>,
    test_y: ArrayView2<'_, f64>,
    ks: &[usize],
    seed: u64,
) -> Result<EvalReport> {
    let fx = model.map_x_points(test_x)?;
    let fy = model.map_y_points(test_y)?;
    let x2y = recall_at_k(fx.view(), fy.view(), ks)?;
    let y2x = recall_at_k(fy.view(), fx.view(), ks)?;
    let mut rep = EvalReport::new("retrieval", seed, test_x.nrows());
    for &k in ks {
        rep.metrics.insert(format!("x2y_R@{k}"), x2y[&k]);
        rep.metrics.insert(format!("y2x_R@{k}"), y2x[&k]);
        rep.metrics.insert(format!("R@{k}"), 0.5 * (x2y[&k] + y2x[&k]));
    }
    rep.metrics.insert("modality_gap".into(), modality_gap(fx.view(), fy.view())?);
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Sue,
    Contrastive,
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub n_unpaired: usize,
    pub n_paired: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "yes")]
    pub use_se: bool,
    #[serde(default = "yes")]
    pub use_cca: bool,
    #[serde(default = "yes")]
    pub use_mmd: bool,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl SweepPoint {
    pub fn label(&self) -> String {
        let variant = match self.method {
            Method::Contrastive => "contrastive".to_string(),
            Method::Sue => {
                let c = SueConfig { use_se: self.use_se, use_cca: self.use_cca, use_mmd: self.use_mmd, ..SueConfig::default() };
                c.variant()
            }
        };
        format!("{variant}/unpaired={}/paired={}/seed={}", self.n_unpaired, self.n_paired, self.seed)
    }
}

/// Shared settings of an experiment run on synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: SyntheticScenario,
    pub sue: SueConfig,
    pub contrastive: ContrastiveConfig,
    pub n_test: usize,
    pub removal_frac: f64,
    pub ks: Vec<usize>,
    /// When set, `k_neighbors` becomes this fraction of the training set size
    /// (at least 1) instead of the fixed `sue.k_neighbors`.
    pub k_fraction: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: SyntheticScenario::acceptance(0),
            sue: SueConfig::default(),
            contrastive: ContrastiveConfig::default(),
            n_test: DEFAULT_N_TEST,
            removal_frac: DEFAULT_REMOVAL_FRAC,
            ks: DEFAULT_KS.to_vec(),
            k_fraction: Some(DEFAULT_K_FRACTION),
        }
    }
}

/// Generates the point's data (`n_unpaired + n_paired` training samples
/// before removal, plus `n_test` held-out pairs), fits, and reports retrieval.
pub fn run_point(point: &SweepPoint, exp: &ExperimentConfig) -> Result<EvalReport> {
    if let Some(f) = exp.k_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config(format!("k_fraction must be in (0, 1), got {f}")));
        }
    }
    let sc = SyntheticScenario { seed: point.seed, ..exp.scenario.clone() };
    let split = experiment_split(&sc, point.n_unpaired + point.n_paired, exp.n_test, point.n_paired, exp.removal_frac)?;
    let data = split.train.data();
    let tx = split.test_x.to_f64();
    let ty = split.test_y.to_f64();
    let model_seed = derive_seed(point.seed, 300);
    let mut rep = match point.method {
        Method::Sue => {
            let k_neighbors = match exp.k_fraction {
                Some(f) => ((f * data.x_set.n().min(data.y_set.n()) as f64).round() as usize).max(1),
                None => exp.sue.k_neighbors,
            };
            let cfg = SueConfig {
                k_neighbors,
                use_se: point.use_se,
                use_cca: point.use_cca,
                use_mmd: point.use_mmd,
                seed: model_seed,
                ..exp.sue.clone()
            };
            let model = fit_sue(&data.x_set, &data.y_set, &data.manifest, &cfg)?;
            retrieval_report(&model, tx.view(), ty.view(), &exp.ks, point.seed)?
        }
        Method::Contrastive => {
            let model = fit_contrastive(&data.x_set, &data.y_set, &data.manifest, &exp.contrastive, model_seed)?;
            retrieval_report(&model, tx.view(), ty.view(), &exp.ks, point.seed)?
        }
    };
    rep.task = point.label();
    rep.config = serde_json::json!({ "point": point, "experiment": exp });
    Ok(rep)
}

/// Outcome of one sweep point; failures are recorded, not propagated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub point: SweepPoint,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

/// Runs every grid point (up to `jobs` at a time, 0 = all cores) and returns
/// outcomes in grid order.
pub fn sweep(grid: &[SweepPoint], exp: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepOutcome>> {
    let run = || -> Vec<SweepOutcome> {
        grid.par_iter()
            .map(|p| match run_point(p, exp) {
                Ok(r) => SweepOutcome { point: p.clone(), report: Some(r), error: None },
                Err(e) => SweepOutcome { point: p.clone(), report: None, error: Some(e.to_string()) },
            })
            .collect()
    };
    if jobs == 0 {
        return Ok(run());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(pool.install(run))
}

/// Flat CSV of sweep outcomes: one row per point, one column per metric.
pub fn sweep_csv(outcomes: &[SweepOutcome]) -> String {
    let mut names: Vec<String> = outcomes
        .iter()
        .filter_map(|o| o.report.as_ref())
        .flat_map(|r| r.metrics.keys().cloned())
        .collect();
    names.sort();
    names.dedup();
    let mut s = String::from("label,method,use_se,use_cca,use_mmd,n_unpaired,n_paired,seed,error");
    for n in &names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for o in outcomes {
        let p = &o.point;
        let method = match p.method {
            Method::Sue => "sue",
            Method::Contrastive => "contrastive",
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            p.label(),
            method,
            p.use_se,
            p.use_cca,
            p.use_mmd,
            p.n_unpaired,
            p.n_paired,
            p.seed,
            o.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        ));
        for n in &names {
            s.push(',');
            if let Some(v) = o.report.as_ref().and_then(|r| r.metric(n)) {
                s.push_str(&v.to_string());
            }
        }
        s.push('\n');
    }
    s
}

/// Median of a non-empty sample (mean of the middle two for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
