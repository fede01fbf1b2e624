use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use geocompass::decoder::{DecoderModel, OutputMode, DEFAULT_EPS_FD};
use geocompass::enumerate::{local_enumeration, EnumParams};
use geocompass::error::{GeoError, Result};
use geocompass::harness::{
    bench_lebo, bench_pogs, config_from_json, default_seed_peptide, lebo_runs, resolve_oracle, resolve_potential, runs_table,
    search_path, sha256_hex, with_pool, write_text, BenchLeboConfig, BenchPogsConfig, Manifest, ModelSpec, PathSearch,
    Table,
};
use geocompass::kappa::{build_chart, stable_dimension};
use geocompass::mutang::{mutang_with_fd, DEFAULT_CAP, DEFAULT_KAPPA_MUT, DEFAULT_THETA_MUT};
use geocompass::peptide::Peptide;
use geocompass::pogs::{OptimizerConfig, PathReport, DEFAULT_DENSITY, DEFAULT_EXCLUSION, DEFAULT_THETA_POT};
use geocompass::rng;
use geocompass::surrogate::LeboParams;
use geocompass::walk::{ChartWalker, WalkParams, WalkScheme};

const SEED_ENV: &str = "GEOCOMPASS_SEED";

/// Geometry-aware exploration and optimization of decoder latent spaces.
///
/// Every command writes its outputs plus a JSON manifest holding the
/// arguments, the effective configuration, its SHA-256 hash and the run seed.
/// Rerunning with the same arguments and seed reproduces the outputs byte for byte.
/// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
#[derive(Parser)]
#[command(name = "geocompass", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run seed. The GEOCOMPASS_SEED environment variable overrides it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Manifest path [default: <out>.manifest.json, or <out-dir>/manifest.json].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy decoder and save it as JSON.
    MakeModel(MakeModelArgs),
    /// Stable dimension and decoded length at random latent points (CSV).
    Rank(RankArgs),
    /// Second-order random walks inside the stable chart at a latent point (CSV).
    Walk(WalkArgs),
    /// Tangent-space mutations of the peptide decoded at a latent point (one per line).
    Mutate(MutateArgs),
    /// Local enumeration of candidate peptides around a seed peptide (one per line).
    Enumerate(EnumerateArgs),
    /// Bayesian optimization over locally enumerated candidates (CSV).
    Lebo(LeboArgs),
    /// Potential-guided geodesic between two latent points (JSON report).
    Pogs(PogsArgs),
    /// Compare optimization variants and random mutation over repeated runs.
    BenchLebo(BenchLeboArgs),
    /// Compare straight, geodesic and potential-guided paths over random pairs.
    BenchPogs(BenchPogsArgs),
}

#[derive(Args)]
struct MakeModelArgs {
    /// flat-linear, sphere, toy-mlp, pad-growing-mlp or constant.
    #[arg(long, default_value = "toy-mlp")]
    kind: String,
    /// Latent dimension.
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Maximum peptide length.
    #[arg(long = "L", default_value_t = 8)]
    length: usize,
    /// Hidden units of toy-mlp.
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Standard deviation of random weights.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// probability or logit.
    #[arg(long, default_value = "probability", value_parser = parse_output)]
    output: OutputMode,
    /// Sphere radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RankArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Number of latent samples.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Squared singular values must exceed this.
    #[arg(long, default_value_t = 1e-8)]
    kappa: f64,
    /// Latent samples are drawn from N(0, scale² I).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Finite-difference step for the Jacobian.
    #[arg(long, default_value_t = DEFAULT_EPS_FD)]
    eps_fd: f64,
    /// Output CSV with columns z_index, stable_dim, decoded_length.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct WalkArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Start point as a JSON array [default: origin].
    #[arg(long)]
    z: Option<PathBuf>,
    /// Squared singular values of the chart must exceed this.
    #[arg(long, default_value_t = 0.01)]
    kappa: f64,
    /// Step size.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Diffusion-time budget.
    #[arg(long = "T", default_value_t = 0.1)]
    t_max: f64,
    /// Number of independent paths.
    #[arg(long, default_value_t = 1)]
    paths: usize,
    /// Chart radius in intrinsic coordinates.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Contraction of the chart domain.
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
    /// Probe radius of the curvature estimate.
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    /// Displacement cap of the adaptive walk.
    #[arg(long, default_value_t = 0.5)]
    delta_max: f64,
    /// Step limit of the adaptive walk.
    #[arg(long, default_value_t = 10_000)]
    step_max: usize,
    /// Finite-difference step for Jacobians.
    #[arg(long, default_value_t = DEFAULT_EPS_FD)]
    eps_fd: f64,
    /// Use the adaptive-step walk.
    #[arg(long)]
    adaptive: bool,
    /// Drop the curvature correction.
    #[arg(long)]
    first_order: bool,
    /// Output CSV: path, step, z0..z(d-1), sigma, stopped.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MutateArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Latent point as a JSON array [default: origin].
    #[arg(long)]
    z: Option<PathBuf>,
    /// Threshold on tangent-vector entries.
    #[arg(long, default_value_t = DEFAULT_THETA_MUT)]
    theta: f64,
    /// Maximum number of candidates.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// Squared singular values of the chart must exceed this.
    #[arg(long, default_value_t = DEFAULT_KAPPA_MUT)]
    kappa: f64,
    /// Finite-difference step for the Jacobian.
    #[arg(long, default_value_t = DEFAULT_EPS_FD)]
    eps_fd: f64,
    /// Output text file, one peptide per line.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Peptide to enumerate around.
    #[arg(long)]
    seed_peptide: String,
    /// JSON with any of kappa_sorbes, kappa_mutang, M, T_walk, eps, theta_mut, cap,
    /// alpha, delta_max, rho, radius, eps_fd, variant.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output text file, one peptide per line.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct LeboArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// synthetic:<kind>:<seed> or a JSON oracle file.
    #[arg(long)]
    oracle: String,
    /// Starting peptide [default: decoding of the origin].
    #[arg(long)]
    seed_peptide: Option<String>,
    /// Oracle calls after the seed; overrides the config.
    #[arg(long)]
    budget: Option<usize>,
    /// Independent runs from the same seed peptide.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// JSON with any of budget, d_trust, k_robot, d_robot, kernel_variance, noise and
    /// the enumeration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV: run, iteration, peptide, oracle_value, best_so_far.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PogsArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Start point as a JSON array.
    #[arg(long)]
    za: PathBuf,
    /// End point as a JSON array.
    #[arg(long)]
    zb: PathBuf,
    /// Weight of the potential.
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Weight of the latent regularizer.
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Waypoints per unit latent distance.
    #[arg(long, default_value_t = DEFAULT_DENSITY)]
    density: f64,
    /// none, synthetic:<kind>:<seed> or a JSON potential file.
    #[arg(long, default_value = "none")]
    potential: String,
    /// Potential threshold for seeds and wells.
    #[arg(long, default_value_t = DEFAULT_THETA_POT)]
    theta_pot: f64,
    /// Fraction of the peptide path excluded at each end when counting seeds.
    #[arg(long, default_value_t = DEFAULT_EXCLUSION)]
    exclusion: f64,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Decoupled weight decay.
    #[arg(long, default_value_t = 1e-5)]
    weight_decay: f64,
    /// Non-improving steps before the learning rate is reduced.
    #[arg(long, default_value_t = 50)]
    patience: usize,
    /// Learning-rate reduction factor on plateaus.
    #[arg(long, default_value_t = 0.8)]
    lr_factor: f64,
    /// Optimizer steps.
    #[arg(long, default_value_t = 2000)]
    max_steps: usize,
    /// Keep the straight interpolation instead of optimizing.
    #[arg(long)]
    straight: bool,
    /// Output JSON report.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchLeboArgs {
    /// JSON benchmark configuration [default: built-in].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Directory for runs.csv, summary.csv and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchPogsArgs {
    /// JSON benchmark configuration [default: built-in].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the number of prototype pairs.
    #[arg(long)]
    pairs: Option<usize>,
    /// Directory for pairs.csv, summary.csv and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn parse_output(s: &str) -> std::result::Result<OutputMode, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected probability or logit, got `{s}`"))
}

impl Common {
    /// Environment, then flag, then `fallback`.
    fn run_seed(&self, fallback: u64) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| GeoError::invalid(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
            Err(_) => Ok(self.seed.unwrap_or(fallback)),
        }
    }

    fn manifest_for(&self, out: &Path) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| {
            let mut name = out.as_os_str().to_owned();
            name.push(".manifest.json");
            PathBuf::from(name)
        })
    }

    fn manifest_in(&self, dir: &Path) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| dir.join("manifest.json"))
    }
}

struct Loaded {
    model: DecoderModel,
    sha256: String,
}

fn load_model(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| GeoError::MalformedModel("model file is not UTF-8".into()))?;
    Ok(Loaded {
        model: DecoderModel::from_json(&text)?,
        sha256: sha256_hex(text.as_bytes()),
    })
}

fn read_latent(path: Option<&Path>, d: usize) -> Result<DVector<f64>> {
    let z = match path {
        None => return Ok(DVector::zeros(d)),
        Some(p) => {
            let v: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            DVector::from_vec(v)
        }
    };
    if z.len() != d {
        return Err(GeoError::DimensionMismatch {
            expected: d,
            actual: z.len(),
        });
    }
    Ok(z)
}

fn read_config<T: Serialize + serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => config_from_json(&std::fs::read_to_string(p)?),
        None => Ok(T::default()),
    }
}

fn lines(peptides: impl IntoIterator<Item = Peptide>) -> String {
    peptides.into_iter().map(|p| format!("{p}\n")).collect()
}

fn finish(manifest: PathBuf, command: &str, args: &[String], seed: u64, config: Value, outputs: &[&Path]) -> Result<()> {
    let outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    Manifest::new(command, args.to_vec(), seed, config, outputs).write(&manifest)
}

fn make_model(a: &MakeModelArgs, argv: &[String]) -> Result<()> {
    let seed = a.common.run_seed(0)?;
    let spec = ModelSpec {
        kind: a.kind.clone(),
        d: a.d,
        length: a.length,
        hidden: a.hidden,
        scale: a.scale,
        seed,
        output: a.output,
        radius: a.radius,
    };
    let model = spec.build()?;
    write_text(&a.out, &model.to_json()?)?;
    finish(a.common.manifest_for(&a.out), "make-model", argv, seed, serde_json::to_value(&spec)?, &[&a.out])
}

fn rank(a: &RankArgs, argv: &[String]) -> Result<()> {
    let seed = a.common.run_seed(0)?;
    if !(a.kappa >= 0.0) || !(a.scale > 0.0) || !(a.eps_fd > 0.0) {
        return Err(GeoError::invalid("kappa must be >= 0, scale and eps_fd > 0"));
    }
    let m = load_model(&a.model)?;
    let model = &m.model;
    let rows = with_pool(a.common.parallelism, || {
        (0..a.samples)
            .into_par_iter()
            .map(|i| -> Result<(usize, usize)> {
                let mut r = rng::stream(seed, i as u64);
                let z = DVector::from_fn(model.latent_dim, |_, _| a.scale * r.sample::<f64, _>(StandardNormal));
                Ok((stable_dimension(model, &z, a.kappa, a.eps_fd), model.argmax_peptide(&z)?.len()))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut t = Table::new(&["z_index", "stable_dim", "decoded_length"]);
    for (i, (k, len)) in rows.into_iter().enumerate() {
        t.push(vec![i.to_string(), k.to_string(), len.to_string()]);
    }
    write_text(&a.out, &t.to_csv()?)?;
    let config = json!({
        "model": a.model, "model_sha256": m.sha256, "samples": a.samples,
        "kappa": a.kappa, "scale": a.scale, "eps_fd": a.eps_fd,
    });
    finish(a.common.manifest_for(&a.out), "rank", argv, seed, config, &[&a.out])
}

fn walk(a: &WalkArgs, argv: &[String]) -> Result<()> {
    let seed = a.common.run_seed(0)?;
    let m = load_model(&a.model)?;
    let z = read_latent(a.z.as_deref(), m.model.latent_dim)?;
    let params = WalkParams {
        kappa: a.kappa,
        eps: a.eps,
        t_max: a.t_max,
        alpha: a.alpha,
        delta_max: a.delta_max,
        rho: a.rho,
        step_max: a.step_max,
        radius: a.radius,
        eps_fd: a.eps_fd,
        scheme: if a.first_order {
            WalkScheme::FirstOrder
        } else {
            WalkScheme::SecondOrder
        },
    };
    params.validate()?;
    let chart = build_chart(&m.model, &z, &params.chart_config())?;
    let walker = ChartWalker::new(&m.model, &chart, params);
    let traces = with_pool(a.common.parallelism, || {
        (0..a.paths)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, i as u64);
                if a.adaptive {
                    walker.run_adaptive(&mut r)
                } else {
                    walker.run_fixed(&mut r)
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let d = m.model.latent_dim;
    let mut header = vec!["path".to_string(), "step".to_string()];
    header.extend((0..d).map(|j| format!("z{j}")));
    header.extend(["sigma".to_string(), "stopped".to_string()]);
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for (i, tr) in traces.iter().enumerate() {
        for (step, (p, &time)) in tr.points.iter().zip(&tr.times).enumerate() {
            let stopped = tr.stopped && step > 0 && time == tr.sigma;
            let mut row = vec![i.to_string(), step.to_string()];
            row.extend(p.iter().map(|x| x.to_string()));
            row.extend([time.to_string(), stopped.to_string()]);
            t.rows.push(row);
        }
    }
    write_text(&a.out, &t.to_csv()?)?;
    let config = json!({
        "model": a.model, "model_sha256": m.sha256, "z": z.as_slice(), "kappa": a.kappa, "eps": a.eps,
        "T": a.t_max, "paths": a.paths, "radius": a.radius, "alpha": a.alpha, "rho": a.rho,
        "delta_max": a.delta_max, "step_max": a.step_max, "eps_fd": a.eps_fd,
        "adaptive": a.adaptive, "first_order": a.first_order,
    });
    finish(a.common.manifest_for(&a.out), "walk", argv, seed, config, &[&a.out])
}

fn mutate(a: &MutateArgs, argv: &[String]) -> Result<()> {
    let seed = a.common.run_seed(0)?;
    let m = load_model(&a.model)?;
    let z = read_latent(a.z.as_deref(), m.model.latent_dim)?;
    let out = mutang_with_fd(&m.model, &z, a.kappa, a.theta, a.cap, a.eps_fd)?;
    write_text(&a.out, &lines(out))?;
    let config = json!({
        "model": a.model, "model_sha256": m.sha256, "z": z.as_slice(), "theta": a.theta,
        "cap": a.cap, "kappa": a.kappa, "eps_fd": a.eps_fd,
    });
    finish(a.common.manifest_for(&a.out), "mutate", argv, seed, config, &[&a.out])
}

fn enumerate(a: &EnumerateArgs, argv: &[String]) -> Result<()> {
    let seed = a.common.run_seed(0)?;
    let m = load_model(&a.model)?;
    let p: Peptide = a.seed_peptide.parse()?;
    p.check_length(m.model.length)?;
    let params: EnumParams = read_config(a.config.as_deref())?;
    let out = with_pool(a.common.parallelism, || local_enumeration(&m.model, &p, &params, seed))??;
    write_text(&a.out, &lines(out))?;
    let config = json!({
        "model": a.model, "model_sha256": m.sha256, "seed_peptide": p, "enumeration": params,
    });
    finish(a.common.manifest_for(&a.out), "enumerate", argv, seed, config, &[&a.out])
}

fn lebo(a: &LeboArgs, argv: &[String]) -> Result<()> {
    let seed = a.common.run_seed(0)?;
    let m = load_model(&a.model)?;
    let mut params: LeboParams = read_config(a.config.as_deref())?;
    if let Some(b) = a.budget {
        params.budget = b;
    }
    params.validate()?;
    if a.runs == 0 {
        return Err(GeoError::invalid("runs must be >= 1"));
    }
    let oracle = resolve_oracle(&a.oracle, m.model.length)?;
    let p = match &a.seed_peptide {
        Some(s) => {
            let p: Peptide = s.parse()?;
            p.check_length(m.model.length)?;
            p
        }
        None => default_seed_peptide(&m.model)?,
    };
    let outcomes = with_pool(a.common.parallelism, || lebo_runs(&m.model, &oracle, &p, &params, a.runs, seed))??;
    write_text(&a.out, &runs_table(&outcomes).to_csv()?)?;
    let config = json!({
        "model": a.model, "model_sha256": m.sha256, "oracle": a.oracle, "oracle_spec": oracle,
        "seed_peptide": p, "runs": a.runs, "lebo": params,
    });
    finish(a.common.manifest_for(&a.out), "lebo", argv, seed, config, &[&a.out])
}

#[derive(Serialize)]
struct PogsReport<'a> {
    #[serde(flatten)]
    report: &'a PathReport,
    energy_trace: &'a [f64],
    aborted: bool,
    waypoints: Vec<&'a [f64]>,
}

fn pogs(a: &PogsArgs, argv: &[String]) -> Result<()> {
    let seed = a.common.run_seed(0)?;
    let m = load_model(&a.model)?;
    let za = read_latent(Some(&a.za), m.model.latent_dim)?;
    let zb = read_latent(Some(&a.zb), m.model.latent_dim)?;
    let potential = resolve_potential(&a.potential, m.model.length)?;
    let search = PathSearch {
        density: a.density,
        lambda: a.lambda,
        mu: a.mu,
        theta_pot: a.theta_pot,
        exclusion: a.exclusion,
        optimizer: OptimizerConfig {
            lr: a.lr,
            weight_decay: a.weight_decay,
            patience: a.patience,
            lr_factor: a.lr_factor,
            max_steps: a.max_steps,
            ..OptimizerConfig::default()
        },
    };
    let (report, opt) = search_path(&m.model, &za, &zb, &search, a.lambda, !a.straight, potential.as_ref())?;
    let out = PogsReport {
        report: &report,
        energy_trace: &opt.trace,
        aborted: opt.aborted,
        waypoints: opt.path.waypoints.iter().map(|w| w.as_slice()).collect(),
    };
    write_text(&a.out, &serde_json::to_string_pretty(&out)?)?;
    let config = json!({
        "model": a.model, "model_sha256": m.sha256, "za": za.as_slice(), "zb": zb.as_slice(),
        "potential": a.potential, "potential_spec": potential, "search": search, "straight": a.straight,
    });
    finish(a.common.manifest_for(&a.out), "pogs", argv, seed, config, &[&a.out])
}

fn bench_lebo_cmd(a: &BenchLeboArgs, argv: &[String]) -> Result<()> {
    let mut cfg: BenchLeboConfig = read_config(a.config.as_deref())?;
    cfg.run_seed = a.common.run_seed(cfg.run_seed)?;
    if a.common.parallelism != 0 {
        cfg.parallelism = a.common.parallelism;
    }
    if let Some(r) = a.runs {
        cfg.runs = r;
    }
    let bench = bench_lebo(&cfg)?;
    let runs = a.out_dir.join("runs.csv");
    let summary = a.out_dir.join("summary.csv");
    write_text(&runs, &bench.runs_table().to_csv()?)?;
    write_text(&summary, &bench.summary_table().to_csv()?)?;
    let mut config = serde_json::to_value(&cfg)?;
    config["parallelism"] = json!(0);
    config["seed_peptide"] = json!(bench.seed_peptide);
    finish(a.common.manifest_in(&a.out_dir), "bench-lebo", argv, cfg.run_seed, config, &[&runs, &summary])
}

fn bench_pogs_cmd(a: &BenchPogsArgs, argv: &[String]) -> Result<()> {
    let mut cfg: BenchPogsConfig = read_config(a.config.as_deref())?;
    cfg.run_seed = a.common.run_seed(cfg.run_seed)?;
    if a.common.parallelism != 0 {
        cfg.parallelism = a.common.parallelism;
    }
    if let Some(n) = a.pairs {
        cfg.pairs = n;
    }
    let bench = bench_pogs(&cfg)?;
    let pairs = a.out_dir.join("pairs.csv");
    let summary = a.out_dir.join("summary.csv");
    write_text(&pairs, &bench.pairs_table().to_csv()?)?;
    write_text(&summary, &bench.summary_table().to_csv()?)?;
    let mut config = serde_json::to_value(&cfg)?;
    config["parallelism"] = json!(0);
    finish(a.common.manifest_in(&a.out_dir), "bench-pogs", argv, cfg.run_seed, config, &[&pairs, &summary])
}

fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::MakeModel(a) => make_model(a, argv),
        Command::Rank(a) => rank(a, argv),
        Command::Walk(a) => walk(a, argv),
        Command::Mutate(a) => mutate(a, argv),
        Command::Enumerate(a) => enumerate(a, argv),
        Command::Lebo(a) => lebo(a, argv),
        Command::Pogs(a) => pogs(a, argv),
        Command::BenchLebo(a) => bench_lebo_cmd(a, argv),
        Command::BenchPogs(a) => bench_pogs_cmd(a, argv),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(2).collect();
    match run(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
