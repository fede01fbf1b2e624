//! Experiment orchestration behind the command-line tool: model, oracle and
//! potential resolution, multi-run benchmarks, summaries, CSV tables and run
//! manifests.
//!
//! Every run or pair draws from its own stream `rng::stream(run_seed, index)`
//! and results are merged by index, so output never depends on the size of the
//! worker pool.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoder::{DecoderModel, OutputMode};
use crate::enumerate::EnumVariant;
use crate::error::{GeoError, Result};
use crate::oracles::{random_mutation_baseline, residue_alphabet, SequenceOracle, SyntheticPotential, SyntheticRef};
use crate::peptide::Peptide;
use crate::pogs::{
    init_path, optimize_path, path_metrics, NoPotential, OptimizerConfig, Optimized, PathReport, Potential,
    DEFAULT_DENSITY, DEFAULT_EXCLUSION, DEFAULT_THETA_POT,
};
use crate::rng;
use crate::stats;
use crate::surrogate::{lebo, LeboOutcome, LeboParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Recipe for a generated toy decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// One of `flat-linear`, `sphere`, `toy-mlp`, `pad-growing-mlp`, `constant`.
    pub kind: String,
    pub d: usize,
    #[serde(rename = "L")]
    pub length: usize,
    pub hidden: usize,
    pub scale: f64,
    pub seed: u64,
    pub output: OutputMode,
    pub radius: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: "toy-mlp".into(),
            d: 8,
            length: 8,
            hidden: 32,
            scale: 1.0,
            seed: 0,
            output: OutputMode::Probability,
            radius: 1.0,
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<DecoderModel> {
        if self.length == 0 {
            return Err(GeoError::invalid("L must be >= 1"));
        }
        if self.kind != "sphere" && self.d == 0 {
            return Err(GeoError::invalid("d must be >= 1"));
        }
        match self.kind.as_str() {
            "flat-linear" => Ok(DecoderModel::random_flat_linear(self.seed, self.d, self.length, self.scale, self.output)),
            "sphere" => {
                if !(self.radius > 0.0) {
                    return Err(GeoError::invalid("radius must be > 0"));
                }
                Ok(DecoderModel::sphere(self.radius, self.length))
            }
            "toy-mlp" => {
                if self.hidden == 0 {
                    return Err(GeoError::invalid("hidden must be >= 1"));
                }
                Ok(DecoderModel::random_toy_mlp(self.seed, self.d, self.hidden, self.length, self.scale))
            }
            "pad-growing-mlp" => DecoderModel::pad_growing_mlp(self.seed, self.d, self.length),
            "constant" => Ok(DecoderModel::constant(self.d, self.length)),
            other => Err(GeoError::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A decoder either stored on disk or generated from a recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File(PathBuf),
    Generated(ModelSpec),
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Generated(ModelSpec::default())
    }
}

impl ModelSource {
    pub fn load(&self) -> Result<DecoderModel> {
        match self {
            ModelSource::File(p) => DecoderModel::load(p),
            ModelSource::Generated(spec) => spec.build(),
        }
    }
}

/// `synthetic:<kind>:<seed>` or a path to a JSON oracle description.
pub fn resolve_oracle(spec: &str, length: usize) -> Result<SequenceOracle> {
    if spec.starts_with("synthetic:") {
        let r: SyntheticRef = spec.parse()?;
        SequenceOracle::synthetic(&r.kind, r.seed, length)
    } else {
        Ok(serde_json::from_str(&std::fs::read_to_string(spec)?)?)
    }
}

/// `none`, `synthetic:<kind>:<seed>` or a path to a JSON potential description.
pub fn resolve_potential(spec: &str, length: usize) -> Result<Option<SyntheticPotential>> {
    let pot = if spec == "none" {
        return Ok(None);
    } else if spec.starts_with("synthetic:") {
        let r: SyntheticRef = spec.parse()?;
        SyntheticPotential::synthetic(&r.kind, r.seed, length)?
    } else {
        serde_json::from_str(&std::fs::read_to_string(spec)?)?
    };
    if pot.length() != length {
        return Err(GeoError::DimensionMismatch {
            expected: length,
            actual: pot.length(),
        });
    }
    Ok(Some(pot))
}

/// Parses a configuration, taking every field the JSON leaves out (at any
/// depth) from `T::default()`.
pub fn config_from_json<T: Serialize + DeserializeOwned + Default>(text: &str) -> Result<T> {
    let mut base = serde_json::to_value(T::default())?;
    merge_json(&mut base, serde_json::from_str(text)?);
    Ok(serde_json::from_value(base)?)
}

fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Runs `f` on a pool of `parallelism` workers (0 picks the machine default).
pub fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| GeoError::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        Summary {
            n: xs.len(),
            mean: stats::mean(xs),
            std: stats::std_dev(xs),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Plain tabular data with a header row, written and read as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of a numeric column.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name).ok_or_else(|| GeoError::invalid(format!("no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|_| GeoError::invalid(format!("`{}` is not a number", r[c]))))
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| GeoError::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| GeoError::invalid(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { header, rows })
    }
}

/// Shortest representation that parses back to the same float.
pub fn num(x: f64) -> String {
    x.to_string()
}

/// Everything needed to reproduce one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the subcommand name.
    pub args: Vec<String>,
    pub run_seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

/// Hex SHA-256 of the compact JSON rendering (object keys are sorted).
pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, run_seed: u64, config: serde_json::Value, outputs: Vec<String>) -> Self {
        Manifest {
            tool: "geocompass".into(),
            version: VERSION.into(),
            command: command.into(),
            args,
            run_seed,
            config_hash: config_hash(&config),
            config,
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(serde_json::to_string_pretty(self)? + "\n"))
    }
}

/// Writes text, adding a final newline if missing.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    if text.ends_with('\n') {
        std::fs::write(path, text)?;
    } else {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Multi-run optimization

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchVariant {
    LeBo,
    EuclideanWalk,
    MutationDisabled,
    WalkDisabled,
    RandomMutation,
}

impl BenchVariant {
    pub const ALL: [BenchVariant; 5] = [
        BenchVariant::LeBo,
        BenchVariant::EuclideanWalk,
        BenchVariant::MutationDisabled,
        BenchVariant::WalkDisabled,
        BenchVariant::RandomMutation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchVariant::LeBo => "le-bo",
            BenchVariant::EuclideanWalk => "euclidean-walk",
            BenchVariant::MutationDisabled => "mutation-disabled",
            BenchVariant::WalkDisabled => "walk-disabled",
            BenchVariant::RandomMutation => "random-mutation",
        }
    }

    fn enumeration(self) -> Option<EnumVariant> {
        match self {
            BenchVariant::LeBo => Some(EnumVariant::Full),
            BenchVariant::EuclideanWalk => Some(EnumVariant::EuclideanWalk),
            BenchVariant::MutationDisabled => Some(EnumVariant::MutationDisabled),
            BenchVariant::WalkDisabled => Some(EnumVariant::WalkDisabled),
            BenchVariant::RandomMutation => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchLeboConfig {
    pub model: ModelSource,
    pub oracle: String,
    /// Starting peptide; defaults to the decoding of the latent origin.
    pub seed_peptide: Option<Peptide>,
    pub runs: usize,
    pub variants: Vec<BenchVariant>,
    pub lebo: LeboParams,
    pub run_seed: u64,
    pub parallelism: usize,
}

impl Default for BenchLeboConfig {
    fn default() -> Self {
        BenchLeboConfig {
            model: ModelSource::default(),
            oracle: "synthetic:motif-bonus:1".into(),
            seed_peptide: None,
            runs: 10,
            variants: BenchVariant::ALL.to_vec(),
            lebo: LeboParams::default(),
            run_seed: 0,
            parallelism: 0,
        }
    }
}

impl BenchLeboConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(GeoError::invalid("runs must be >= 1"));
        }
        if self.variants.is_empty() {
            return Err(GeoError::invalid("at least one variant is required"));
        }
        self.lebo.validate()
    }
}

pub fn default_seed_peptide(model: &DecoderModel) -> Result<Peptide> {
    model.argmax_peptide(&DVector::zeros(model.latent_dim))
}

/// Independent LE-BO runs from one seed; run `r` uses `rng::stream_seed(run_seed, r)`.
pub fn lebo_runs(
    model: &DecoderModel,
    oracle: &SequenceOracle,
    p_seed: &Peptide,
    params: &LeboParams,
    runs: usize,
    run_seed: u64,
) -> Result<Vec<LeboOutcome>> {
    (0..runs)
        .into_par_iter()
        .map(|r| lebo(model, |p| oracle.eval(p), p_seed, params, rng::stream_seed(run_seed, r as u64)))
        .collect()
}

pub fn runs_table(outcomes: &[LeboOutcome]) -> Table {
    let mut t = Table::new(&["run", "iteration", "peptide", "oracle_value", "best_so_far"]);
    for (r, o) in outcomes.iter().enumerate() {
        for h in &o.history {
            t.push(vec![
                r.to_string(),
                h.iteration.to_string(),
                h.peptide.to_string(),
                num(h.oracle_value),
                num(h.best_so_far),
            ]);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub variant: BenchVariant,
    pub run: usize,
    pub best_value: f64,
    pub best_peptide: Peptide,
    pub oracle_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeboBench {
    pub seed_peptide: Peptide,
    pub runs: Vec<BenchRun>,
}

impl LeboBench {
    pub fn best_values(&self, variant: BenchVariant) -> Vec<f64> {
        self.runs.iter().filter(|r| r.variant == variant).map(|r| r.best_value).collect()
    }

    pub fn summary(&self) -> Vec<(BenchVariant, Summary)> {
        let mut seen: Vec<BenchVariant> = Vec::new();
        for r in &self.runs {
            if !seen.contains(&r.variant) {
                seen.push(r.variant);
            }
        }
        seen.into_iter().map(|v| (v, Summary::of(&self.best_values(v)))).collect()
    }

    pub fn runs_table(&self) -> Table {
        let mut t = Table::new(&["variant", "run", "best_value", "best_peptide", "oracle_calls"]);
        for r in &self.runs {
            t.push(vec![
                r.variant.name().into(),
                r.run.to_string(),
                num(r.best_value),
                r.best_peptide.to_string(),
                r.oracle_calls.to_string(),
            ]);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["variant", "runs", "mean", "std", "best_value"]);
        for (v, s) in self.summary() {
            t.push(vec![v.name().into(), s.n.to_string(), num(s.mean), num(s.std), s.to_string()]);
        }
        t
    }
}

/// Every variant is run `runs` times; run `r` of every variant shares the
/// seed `rng::stream_seed(run_seed, r)`.
pub fn bench_lebo(cfg: &BenchLeboConfig) -> Result<LeboBench> {
    cfg.validate()?;
    let model = cfg.model.load()?;
    let oracle = resolve_oracle(&cfg.oracle, model.length)?;
    let seed_peptide = match &cfg.seed_peptide {
        Some(p) => {
            p.check_length(model.length)?;
            p.clone()
        }
        None => default_seed_peptide(&model)?,
    };
    let jobs: Vec<(BenchVariant, usize)> = cfg
        .variants
        .iter()
        .flat_map(|&v| (0..cfg.runs).map(move |r| (v, r)))
        .collect();
    let alphabet = residue_alphabet();
    let runs = with_pool(cfg.parallelism, || {
        jobs.par_iter()
            .map(|&(variant, run)| -> Result<BenchRun> {
                let seed = rng::stream_seed(cfg.run_seed, run as u64);
                let (best, calls) = match variant.enumeration() {
                    Some(ev) => {
                        let mut params = cfg.lebo;
                        params.enumeration.variant = ev;
                        let out = lebo(&model, |p| oracle.eval(p), &seed_peptide, &params, seed)?;
                        let calls = out.oracle_calls();
                        (out.best, calls)
                    }
                    None => {
                        let (best, hist) = random_mutation_baseline(
                            |p| oracle.eval(p),
                            &seed_peptide,
                            cfg.lebo.budget,
                            &alphabet,
                            &mut rng::seeded(seed),
                        );
                        (best, hist.len())
                    }
                };
                Ok(BenchRun {
                    variant,
                    run,
                    best_value: best.value,
                    best_peptide: best.peptide,
                    oracle_calls: calls,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(LeboBench { seed_peptide, runs })
}

// ---------------------------------------------------------------------------
// Path search between prototype pairs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathVariant {
    Straight,
    /// Geodesic without the potential.
    Geodesic,
    /// Geodesic with the potential.
    Pogs,
}

impl PathVariant {
    pub const ALL: [PathVariant; 3] = [PathVariant::Straight, PathVariant::Geodesic, PathVariant::Pogs];

    pub fn name(self) -> &'static str {
        match self {
            PathVariant::Straight => "straight",
            PathVariant::Geodesic => "pogs-no-potential",
            PathVariant::Pogs => "pogs",
        }
    }
}

pub const PATH_METRICS: [&str; 6] = [
    "latent_length",
    "ambient_length",
    "peptide_path_length",
    "potential",
    "seeds",
    "wells",
];

/// Settings for one potential-guided path search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSearch {
    pub density: f64,
    pub lambda: f64,
    pub mu: f64,
    pub theta_pot: f64,
    pub exclusion: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for PathSearch {
    fn default() -> Self {
        PathSearch {
            density: DEFAULT_DENSITY,
            lambda: 0.01,
            mu: 0.1,
            theta_pot: DEFAULT_THETA_POT,
            exclusion: DEFAULT_EXCLUSION,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl PathSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.exclusion >= 0.0 && self.exclusion < 0.5) {
            return Err(GeoError::invalid("exclusion must lie in [0, 0.5)"));
        }
        if !self.theta_pot.is_finite() {
            return Err(GeoError::invalid("theta_pot must be finite"));
        }
        self.optimizer.validate()
    }
}

/// Optimizes (unless `optimize` is false) and reports metrics under `potential`,
/// which is scored on the result whether or not it steered the search.
pub fn search_path(
    model: &DecoderModel,
    z_a: &DVector<f64>,
    z_b: &DVector<f64>,
    search: &PathSearch,
    lambda: f64,
    optimize: bool,
    potential: Option<&SyntheticPotential>,
) -> Result<(PathReport, Optimized)> {
    search.validate()?;
    let pot: &dyn Potential = match potential {
        Some(p) => p,
        None => &NoPotential,
    };
    let start = init_path(z_a, z_b, search.density, lambda, search.mu)?;
    let opt = if optimize {
        optimize_path(model, &start, pot, &search.optimizer)?
    } else {
        Optimized {
            trace: vec![],
            path: start,
            aborted: false,
        }
    };
    let report = path_metrics(model, &opt.path, pot, search.theta_pot, search.exclusion)?;
    Ok((report, opt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchPogsConfig {
    pub model: ModelSource,
    pub potential: String,
    pub pairs: usize,
    /// Prototypes are drawn as `pair_scale · N(0, I)`.
    pub pair_scale: f64,
    #[serde(flatten)]
    pub search: PathSearch,
    pub run_seed: u64,
    pub parallelism: usize,
}

impl Default for BenchPogsConfig {
    fn default() -> Self {
        BenchPogsConfig {
            model: ModelSource::default(),
            potential: "synthetic:linear-residue-score:1".into(),
            pairs: 50,
            pair_scale: 0.5,
            search: PathSearch {
                theta_pot: 6.0,
                optimizer: OptimizerConfig {
                    max_steps: 1000,
                    ..OptimizerConfig::default()
                },
                ..PathSearch::default()
            },
            run_seed: 0,
            parallelism: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub pair: usize,
    pub variant: PathVariant,
    pub report: PathReport,
}

impl PairRow {
    pub fn metrics(&self) -> [f64; 6] {
        let r = &self.report;
        [
            r.latent_length,
            r.ambient_length,
            r.peptide_path_length as f64,
            r.potential_sum,
            r.seeds.len() as f64,
            r.wells.len() as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PogsBench {
    pub rows: Vec<PairRow>,
}

impl PogsBench {
    /// Metric `m` (an index into [`PATH_METRICS`]) for every pair, in pair order.
    pub fn metric(&self, variant: PathVariant, m: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.variant == variant).map(|r| r.metrics()[m]).collect()
    }

    pub fn pairs_table(&self) -> Table {
        let mut header = vec!["pair", "variant"];
        header.extend(PATH_METRICS);
        let mut t = Table::new(&header);
        for r in &self.rows {
            let mut row = vec![r.pair.to_string(), r.variant.name().to_string()];
            row.extend(r.metrics().iter().map(|&x| num(x)));
            t.push(row);
        }
        t
    }

    /// One row per variant, one "mean ± std" column per metric.
    pub fn summary_table(&self) -> Table {
        let mut header = vec!["variant"];
        header.extend(PATH_METRICS);
        let mut t = Table::new(&header);
        for v in PathVariant::ALL {
            if !self.rows.iter().any(|r| r.variant == v) {
                continue;
            }
            let mut row = vec![v.name().to_string()];
            row.extend((0..PATH_METRICS.len()).map(|m| Summary::of(&self.metric(v, m)).to_string()));
            t.push(row);
        }
        t
    }
}

/// Prototype pair `i`, drawn from `rng::stream(run_seed, i)`.
pub fn prototype_pair(d: usize, scale: f64, run_seed: u64, i: usize) -> (DVector<f64>, DVector<f64>) {
    let mut r = rng::stream(run_seed, i as u64);
    let mut draw = || DVector::from_fn(d, |_, _| scale * r.sample::<f64, _>(StandardNormal));
    let a = draw();
    (a, draw())
}

pub fn bench_pogs(cfg: &BenchPogsConfig) -> Result<PogsBench> {
    if cfg.pairs == 0 || !(cfg.pair_scale > 0.0) {
        return Err(GeoError::invalid("pairs must be >= 1 and pair_scale > 0"));
    }
    cfg.search.validate()?;
    let model = cfg.model.load()?;
    let potential = resolve_potential(&cfg.potential, model.length)?;
    let jobs: Vec<(usize, PathVariant)> = (0..cfg.pairs)
        .flat_map(|i| PathVariant::ALL.into_iter().map(move |v| (i, v)))
        .collect();
    let rows = with_pool(cfg.parallelism, || {
        jobs.par_iter()
            .map(|&(pair, variant)| -> Result<PairRow> {
                let (a, b) = prototype_pair(model.latent_dim, cfg.pair_scale, cfg.run_seed, pair);
                let (lambda, optimize) = match variant {
                    PathVariant::Straight => (0.0, false),
                    PathVariant::Geodesic => (0.0, true),
                    PathVariant::Pogs => (cfg.search.lambda, true),
                };
                let (report, _) = search_path(&model, &a, &b, &cfg.search, lambda, optimize, potential.as_ref())?;
                Ok(PairRow { pair, variant, report })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(PogsBench { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.n, 4);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.to_string(), "2.50 ± 1.29");
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["x,y".into(), num(0.1 + 0.2)]);
        t.push(vec!["\"q\"".into(), num(-1e-300)]);
        let text = t.to_csv().unwrap();
        assert!(text.ends_with('\n'));
        let back = Table::from_csv(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.numbers("b").unwrap(), vec![0.1 + 0.2, -1e-300]);
    }

    #[test]
    fn config_hash_is_key_order_independent() {
        let a: serde_json::Value = serde_json::from_str(r#"{"x":1,"y":[1,2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"y":[1,2],"x":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn model_source_accepts_path_or_recipe() {
        let f: ModelSource = serde_json::from_str(r#""m.json""#).unwrap();
        assert_eq!(f, ModelSource::File("m.json".into()));
        let g: ModelSource = serde_json::from_str(r#"{"kind":"sphere","L":2}"#).unwrap();
        let m = g.load().unwrap();
        assert_eq!((m.latent_dim, m.length), (2, 2));
    }

    #[test]
    fn pairs_are_reproducible() {
        let (a1, b1) = prototype_pair(3, 1.0, 5, 2);
        let (a2, b2) = prototype_pair(3, 1.0, 5, 2);
        assert_eq!((a1.clone(), b1), (a2, b2));
        assert_ne!(a1, prototype_pair(3, 1.0, 5, 3).0);
    }
}
