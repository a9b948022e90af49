//! Run configuration and the subcommand implementations behind the `sue`
//! binary. Every command writes into one run directory, starting with a
//! snapshot of the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::{fit_alignment, fit_embedders, AlignmentModel, SpectralPath, SueConfig};
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    paired_distance_experiment, retrieval_report, rw_universality_experiment, sweep, sweep_csv, EvalReport,
    ExperimentConfig, RwOptions, SweepPoint, DEFAULT_KS, DEFAULT_N_TEST,
};
use crate::graph::{Metric, DEFAULT_K_NEIGHBORS};
use crate::io::{read_embeddings, read_pairs, write_embeddings, write_pairs, EmbeddingSet, Format, PairManifest};
use crate::nn::TrainConfig;
use crate::spectral::parametric::ParametricConfig;
use crate::spectral::{EigenSolver, Embedder, DEFAULT_SE_DIM};
use crate::synth::{experiment_split, SyntheticScenario, DEFAULT_REMOVAL_FRAC};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "SUE_SEED";

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const MODEL_FILE: &str = "model.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub x: PathBuf,
    pub y: PathBuf,
    pub pairs: PathBuf,
    /// Run directory; created if missing.
    pub out: PathBuf,
    /// Row-aligned held-out pairs used by `eval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_x: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_y: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub k_neighbors: usize,
    pub metric: Metric,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection { k_neighbors: DEFAULT_K_NEIGHBORS, metric: Metric::Cosine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub k: usize,
    pub path: SpectralPath,
    pub solver: EigenSolver,
    pub parametric: ParametricConfig,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            k: DEFAULT_SE_DIM,
            path: SpectralPath::Numeric,
            solver: EigenSolver::Auto,
            parametric: ParametricConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcaSection {
    pub r: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    /// Use only the first `pair_budget` pairs of the manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_budget: Option<usize>,
}

impl Default for CcaSection {
    fn default() -> Self {
        CcaSection { r: crate::align::DEFAULT_CCA_DIM, ridge: None, pair_budget: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmdSection {
    pub hidden: Vec<usize>,
    pub bandwidth_multipliers: Vec<f64>,
    pub train: TrainConfig,
}

impl Default for MmdSection {
    fn default() -> Self {
        let d = SueConfig::default();
        MmdSection { hidden: d.mmd_hidden, bandwidth_multipliers: d.bandwidth_multipliers, train: d.mmd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub n_test: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { ks: DEFAULT_KS.to_vec(), n_test: DEFAULT_N_TEST }
    }
}

/// Pipeline stage switches; the CLI flags `--no-mmd`, `--no-cca` and
/// `--raw-features` turn them off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StagesSection {
    pub se: bool,
    pub cca: bool,
    pub mmd: bool,
}

impl Default for StagesSection {
    fn default() -> Self {
        StagesSection { se: true, cca: true, mmd: true }
    }
}

/// The `run.toml` file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: PathsSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub cca: CcaSection,
    #[serde(default)]
    pub mmd: MmdSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub stages: StagesSection,
    #[serde(default)]
    pub rwsim: RwOptions,
}

impl RunConfig {
    /// Parses without touching the file system.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads `path`, resolves relative paths against its directory, applies
    /// the `SUE_SEED` override and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply_seed_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.x);
        fix(&mut paths.y);
        fix(&mut paths.pairs);
        fix(&mut paths.out);
        if let Some(p) = paths.test_x.as_mut() {
            fix(p);
        }
        if let Some(p) = paths.test_y.as_mut() {
            fix(p);
        }
    }

    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Data-independent checks plus existence of every input path.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        let p = &self.paths;
        let mut inputs = vec![("x", &p.x), ("y", &p.y), ("pairs", &p.pairs)];
        if let Some(t) = &p.test_x {
            inputs.push(("test_x", t));
        }
        if let Some(t) = &p.test_y {
            inputs.push(("test_y", t));
        }
        for (name, path) in inputs {
            if !path.is_file() {
                return Err(Error::config(format!("paths.{name}: {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn validate_values(&self) -> Result<()> {
        if self.cca.r == 0 {
            return Err(Error::config("cca.r must be >= 1"));
        }
        if self.stages.se && self.cca.r > self.spectral.k {
            return Err(Error::config(format!(
                "cca.r = {} exceeds spectral.k = {}",
                self.cca.r, self.spectral.k
            )));
        }
        if self.paths.test_x.is_some() != self.paths.test_y.is_some() {
            return Err(Error::config("paths.test_x and paths.test_y must be given together"));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::config("eval.ks must be non-empty and positive"));
        }
        self.sue_config().validate()
    }

    pub fn sue_config(&self) -> SueConfig {
        SueConfig {
            k_neighbors: self.graph.k_neighbors,
            metric: self.graph.metric,
            se_dim: self.spectral.k,
            spectral_path: self.spectral.path,
            solver: self.spectral.solver,
            parametric: self.spectral.parametric.clone(),
            cca_dim: self.cca.r,
            ridge: self.cca.ridge,
            mmd: self.mmd.train.clone(),
            mmd_hidden: self.mmd.hidden.clone(),
            bandwidth_multipliers: self.mmd.bandwidth_multipliers.clone(),
            use_se: self.stages.se,
            use_cca: self.stages.cca,
            use_mmd: self.stages.mmd,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.out.join(MODEL_FILE)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_set(path: &Path, name: &str) -> Result<EmbeddingSet> {
    let mut s = read_embeddings(path, Format::from_path(path))?;
    s.name = name.to_string();
    Ok(s)
}

fn write_report(dir: &Path, stem: &str, rep: &EvalReport) -> Result<()> {
    write(&dir.join(format!("{stem}.json")), rep.to_json()?)?;
    write(&dir.join(format!("{stem}.csv")), rep.to_csv())
}

/// Options of `sue synth`.
#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub scenario: SyntheticScenario,
    pub pairs: usize,
    pub n_test: usize,
    pub removal_frac: f64,
    pub out: PathBuf,
}

/// Files written by `synth`: training sets `x.bin`, `y.bin` with
/// `pairs.tsv`, held-out `test_x.bin`, `test_y.bin`, the sealed origin map
/// `truth.json`, the scenario, and a ready-to-use `run.toml`.
pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    args.scenario.validate()?;
    let out = &args.out;
    create_dir(out)?;
    let split = experiment_split(&args.scenario, args.scenario.n, args.n_test, args.pairs, args.removal_frac)?;
    let (data, truth) = split.train.into_parts();
    write_embeddings(&data.x_set, &out.join("x.bin"), Format::Binary)?;
    write_embeddings(&data.y_set, &out.join("y.bin"), Format::Binary)?;
    write_pairs(&data.manifest, &out.join("pairs.tsv"))?;
    write_embeddings(&split.test_x, &out.join("test_x.bin"), Format::Binary)?;
    write_embeddings(&split.test_y, &out.join("test_y.bin"), Format::Binary)?;
    write(&out.join("truth.json"), serde_json::to_string(&truth).map_err(|e| Error::Serialization(e.to_string()))?)?;
    let scenario = serde_json::json!({
        "scenario": args.scenario,
        "pairs": args.pairs,
        "n_test": args.n_test,
        "removal_frac": args.removal_frac,
    });
    write(&out.join("scenario.json"), serde_json::to_string_pretty(&scenario).unwrap_or_default())?;
    let run = RunConfig {
        seed: args.scenario.seed,
        paths: PathsSection {
            x: "x.bin".into(),
            y: "y.bin".into(),
            pairs: "pairs.tsv".into(),
            out: "run".into(),
            test_x: Some("test_x.bin".into()),
            test_y: Some("test_y.bin".into()),
        },
        graph: GraphSection::default(),
        spectral: SpectralSection::default(),
        cca: CcaSection::default(),
        mmd: MmdSection::default(),
        eval: EvalSection { n_test: args.n_test, ..EvalSection::default() },
        stages: StagesSection::default(),
        rwsim: RwOptions::default(),
    };
    write(&out.join("run.toml"), run.to_toml()?)
}

fn load_inputs(cfg: &RunConfig) -> Result<(EmbeddingSet, EmbeddingSet, PairManifest)> {
    let x = read_set(&cfg.paths.x, "x")?;
    let y = read_set(&cfg.paths.y, "y")?;
    let mut pairs = read_pairs(&cfg.paths.pairs, x.n(), y.n())?;
    if let Some(m) = cfg.cca.pair_budget {
        if m > pairs.m() {
            return Err(Error::config(format!("cca.pair_budget = {m} but the manifest has {} pairs", pairs.m())));
        }
        pairs = pairs.truncate(m);
    }
    Ok((x, y, pairs))
}

fn snapshot(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.paths.out)?;
    write(&cfg.paths.out.join(RESOLVED_CONFIG), cfg.to_toml()?)
}

/// Fits the pipeline, checkpointing each stage under `<out>/checkpoints`
/// and the whole model as `<out>/model.ckpt`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<AlignmentModel> {
    snapshot(cfg)?;
    let (x, y, pairs) = load_inputs(cfg)?;
    let sue = cfg.sue_config();
    if sue.use_cca && pairs.is_empty() {
        return Err(Error::config("the pair manifest is empty")).stage("cca");
    }
    let ckpt = cfg.paths.out.join("checkpoints");
    create_dir(&ckpt)?;
    let embedded = fit_embedders(&x, &y, &sue)?;
    for (side, e) in [("x", &embedded.embed_x), ("y", &embedded.embed_y)] {
        let path = ckpt.join(format!("spectral_{side}.ckpt"));
        match e {
            Embedder::Numeric(m) => m.save(&path)?,
            Embedder::Parametric(p) => p.save(&path)?,
            Embedder::Identity { .. } => {}
        }
    }
    let model = fit_alignment(&embedded, &pairs, &sue)?;
    if let Some(c) = &model.cca {
        c.save(&ckpt.join("cca.ckpt"))?;
    }
    if let Some(f) = &model.residual {
        f.save(&ckpt.join("residual.ckpt"))?;
    }
    if let Some(h) = &model.mmd_history {
        write(&cfg.paths.out.join("mmd_loss.csv"), h.to_csv())?;
    }
    model.save(&cfg.model_path())?;
    Ok(model)
}

/// Retrieval and paired-distance reports on the held-out test pairs, written
/// to `<out>/eval`.
pub fn cmd_eval(cfg: &RunConfig, model_path: Option<&Path>) -> Result<EvalReport> {
    let (Some(tx), Some(ty)) = (&cfg.paths.test_x, &cfg.paths.test_y) else {
        return Err(Error::config("eval needs paths.test_x and paths.test_y"));
    };
    let default_model = cfg.model_path();
    let model_path = model_path.unwrap_or(&default_model);
    if !model_path.is_file() {
        return Err(Error::config(format!("no model at {}; run `sue fit` first", model_path.display())));
    }
    let model = AlignmentModel::load(model_path)?;
    let test_x = read_set(tx, "test_x")?;
    let test_y = read_set(ty, "test_y")?;
    if test_x.n() != test_y.n() {
        return Err(Error::dim(format!(
            "test sets must be row-aligned, got {} and {} rows",
            test_x.n(),
            test_y.n()
        )));
    }
    let n = cfg.eval.n_test.min(test_x.n());
    let rows: Vec<usize> = (0..n).collect();
    let (tx, ty) = (test_x.select(&rows)?.to_f64(), test_y.select(&rows)?.to_f64());
    let dir = cfg.paths.out.join("eval");
    create_dir(&dir)?;
    write(&dir.join(RESOLVED_CONFIG), cfg.to_toml()?)?;
    let mut rep = retrieval_report(&model, tx.view(), ty.view(), &cfg.eval.ks, cfg.seed)?;
    rep.config = serde_json::to_value(&model.config).unwrap_or_default();
    write_report(&dir, "retrieval", &rep)?;
    let pd = paired_distance_experiment(&model, tx.view(), ty.view(), cfg.seed)?;
    write_report(&dir, "paired_distance", &pd)?;
    if let Some(s) = pd.samples_csv("paired", "shuffled") {
        write(&dir.join("paired_distance_samples.csv"), s)?;
    }
    Ok(rep)
}

/// Random-walk universality experiment on the configured inputs.
pub fn cmd_rwsim(cfg: &RunConfig) -> Result<EvalReport> {
    let (x, y, pairs) = load_inputs(cfg)?;
    let dir = cfg.paths.out.join("rwsim");
    create_dir(&dir)?;
    let opts = RwOptions { seed: cfg.seed, ..cfg.rwsim.clone() };
    let resolved = RunConfig { rwsim: opts.clone(), ..cfg.clone() };
    write(&dir.join(RESOLVED_CONFIG), resolved.to_toml()?)?;
    let rep = rw_universality_experiment(&x, &y, &pairs, &opts)?;
    write_report(&dir, "rwsim", &rep)?;
    if let Some(s) = rep.samples_csv("paired", "shuffled") {
        write(&dir.join("rwsim_samples.csv"), s)?;
    }
    Ok(rep)
}

/// The `sweep.toml` file: shared experiment settings plus a grid expanded as
/// the product of its lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub out: PathBuf,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_unpaired: Vec<usize>,
    pub n_paired: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Variants such as `"se+cca+mmd"`, `"se+cca"`, `"raw+cca"` or
    /// `"contrastive"`.
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
}

fn default_variants() -> Vec<String> {
    vec!["se+cca+mmd".into()]
}

fn parse_variant(v: &str) -> Result<(crate::eval::Method, bool, bool, bool)> {
    use crate::eval::Method;
    if v == "contrastive" {
        return Ok((Method::Contrastive, true, true, true));
    }
    let parts: Vec<&str> = v.split('+').collect();
    let se = match parts.first() {
        Some(&"se") => true,
        Some(&"raw") => false,
        _ => return Err(Error::config(format!("variant {v:?} must start with se or raw"))),
    };
    let mut cca = false;
    let mut mmd = false;
    for p in &parts[1..] {
        match *p {
            "cca" => cca = true,
            "mmd" => mmd = true,
            _ => return Err(Error::config(format!("unknown stage {p:?} in variant {v:?}"))),
        }
    }
    Ok((Method::Sue, se, cca, mmd))
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: SweepConfig =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if cfg.out.is_relative() {
            cfg.out = path.parent().unwrap_or(Path::new("")).join(&cfg.out);
        }
        if let Ok(s) = std::env::var(SEED_ENV) {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
            cfg.grid.seeds = vec![seed];
        }
        cfg.points()?;
        Ok(cfg)
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let g = &self.grid;
        if g.n_unpaired.is_empty() || g.n_paired.is_empty() || g.seeds.is_empty() || g.variants.is_empty() {
            return Err(Error::config("every grid list must be non-empty"));
        }
        let variants = g.variants.iter().map(|v| parse_variant(v)).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for &(method, use_se, use_cca, use_mmd) in &variants {
            for &n_paired in &g.n_paired {
                for &n_unpaired in &g.n_unpaired {
                    for &seed in &g.seeds {
                        out.push(SweepPoint { n_unpaired, n_paired, method, use_se, use_cca, use_mmd, seed });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs the grid and writes `sweep.csv` plus one JSON report per point.
pub fn cmd_sweep(cfg: &SweepConfig, jobs: usize) -> Result<Vec<crate::eval::SweepOutcome>> {
    let grid = cfg.points()?;
    create_dir(&cfg.out)?;
    write(
        &cfg.out.join("resolved_sweep.toml"),
        toml::to_string(cfg).map_err(|e| Error::Serialization(e.to_string()))?,
    )?;
    let outcomes = sweep(&grid, &cfg.experiment, jobs)?;
    write(&cfg.out.join("sweep.csv"), sweep_csv(&outcomes))?;
    let points = cfg.out.join("points");
    create_dir(&points)?;
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(r) = &o.report {
            write(&points.join(format!("{i:04}.json")), r.to_json()?)?;
        }
    }
    Ok(outcomes)
}

/// Scenario for `synth --preset`.
pub fn preset(name: &str, seed: u64) -> Result<SyntheticScenario> {
    match name {
        "acceptance" => Ok(SyntheticScenario::acceptance(seed)),
        _ => Err(Error::config(format!("unknown preset {name:?} (available: acceptance)"))),
    }
}

pub const DEFAULT_SYNTH_PAIRS: usize = 50;
pub const DEFAULT_SYNTH_REMOVAL: f64 = DEFAULT_REMOVAL_FRAC;

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[paths]
x = "x.bin"
y = "y.bin"
pairs = "pairs.tsv"
out = "run"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.graph.k_neighbors, 100);
        assert_eq!(c.spectral.k, 10);
        assert_eq!(c.cca.r, 8);
        assert_eq!(c.mmd.hidden, vec![128, 128, 128]);
        c.validate_values().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\n[graph]\nk_neighbours = 10\n");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = format!("lr = 1\n{MINIMAL}");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn r_above_k_fails_validation() {
        let text = format!("{MINIMAL}\n[spectral]\nk = 4\n[cca]\nr = 6\n");
        let c = RunConfig::from_toml(&text).unwrap();
        assert!(matches!(c.validate_values(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn variant_parsing() {
        assert!(parse_variant("se+cca+mmd").unwrap().3);
        assert!(!parse_variant("raw+cca").unwrap().1);
        assert!(parse_variant("pca+cca").is_err());
        assert!(parse_variant("se+foo").is_err());
    }
}
