//! Command-line front end: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.
//! Every run writes `manifest.json` (resolved parameters, input digests,
//! version, seed) next to its outputs.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cluster::{self, Partition};
use crate::dataset::{self, format_real, CategoryMap};
use crate::error::{Error, Result};
use crate::gw::{entropic_gw, SinkhornOptions, SolveOptions, TransportPlan};
use crate::metrics::{self, CategoryLabels, Correspondence};
use crate::rdm::{compute_rdm, rsa_pearson, Measure, Rdm};
use crate::spose::{self, SposeConfig};
use crate::sweep::{select_best, solve_trial, SamplerKind, SelectionCriterion, Sweep, SweepConfig, TrialRecord};

#[derive(Parser, Debug)]
#[command(name = "gwalign", version, about = "Unsupervised alignment of representational geometries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dissimilarity matrix from an embedding CSV.
    #[command(allow_negative_numbers = true)]
    Rdm(RdmArgs),
    /// Pearson correlation between the upper triangles of two RDMs.
    #[command(allow_negative_numbers = true)]
    Rsa(RsaArgs),
    /// One entropic GW solve at a fixed epsilon and seed.
    #[command(allow_negative_numbers = true)]
    Align(AlignArgs),
    /// Epsilon search with one random initialization per trial.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Matching rates, top-k targets and chance levels of a saved plan.
    #[command(allow_negative_numbers = true)]
    Evaluate(EvaluateArgs),
    /// Chance levels of matching rates under random permutation plans.
    #[command(allow_negative_numbers = true)]
    Chance(ChanceArgs),
    /// Train a nonnegative embedding from odd-one-out triplets.
    #[command(allow_negative_numbers = true)]
    Spose(SposeArgs),
    /// Ward clustering, flat labels, AMI against categories, MDS coordinates.
    #[command(allow_negative_numbers = true)]
    Cluster(ClusterArgs),
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// JSON file whose keys mirror flag names; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RdmArgs {
    /// Embedding CSV (`id,dim_0,...`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Measure::Cosine)]
    measure: Measure,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct RsaArgs {
    /// Embedding or RDM CSV.
    #[arg(long)]
    a: PathBuf,
    /// Embedding or RDM CSV.
    #[arg(long)]
    b: PathBuf,
    /// Used when an input is an embedding.
    #[arg(long, value_enum, default_value_t = Measure::Cosine)]
    measure: Measure,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    #[arg(long, default_value_t = 1000)]
    max_outer: usize,
    #[arg(long, default_value_t = 1e-9)]
    outer_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    inner_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_inner: usize,
    /// Per-iteration epsilon decay of the warm-up schedule; 0 disables it.
    #[arg(long, default_value_t = 0.9)]
    eps_decay: f64,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            eps_decay: self.eps_decay,
            inner: SinkhornOptions {
                tol: self.inner_tol,
                max_iter: self.max_inner,
            },
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct CategoryArgs {
    /// `id,category` CSV for the source objects (also used for the target unless overridden).
    #[arg(long)]
    categories: Option<PathBuf>,
    /// `id,category` CSV for the target objects.
    #[arg(long)]
    target_categories: Option<PathBuf>,
}

impl CategoryArgs {
    fn labels(&self, source_ids: &[String], target_ids: &[String]) -> Result<Option<CategoryLabels>> {
        let Some(src) = &self.categories else {
            return Ok(None);
        };
        let src_map = dataset::load_categories(src)?;
        let tgt_map = match &self.target_categories {
            Some(p) => dataset::load_categories(p)?,
            None => src_map.clone(),
        };
        Ok(Some(CategoryLabels::from_maps(&src_map, source_ids, &tgt_map, target_ids)))
    }

    fn paths(&self) -> Vec<&Path> {
        self.categories.iter().chain(&self.target_categories).map(PathBuf::as_path).collect()
    }
}

#[derive(Args, Debug, Serialize)]
struct AlignArgs {
    /// Source embedding or RDM CSV.
    #[arg(long)]
    source: PathBuf,
    /// Target embedding or RDM CSV.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Read epsilon as a multiple of the source RDM's mean dissimilarity.
    #[arg(long)]
    eps_relative: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Measure::Cosine)]
    measure: Measure,
    #[command(flatten)]
    #[serde(flatten)]
    categories: CategoryArgs,
    #[command(flatten)]
    #[serde(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps_min: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps_max: f64,
    /// Read the epsilon range as multiples of the source RDM's mean dissimilarity.
    #[arg(long)]
    eps_relative: bool,
    /// Base seed; trial `t` initializes its plan with `seed + t`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SamplerKind::Random)]
    sampler: SamplerKind,
    /// Skip trials already present in the log.
    #[arg(long)]
    resume: bool,
    #[arg(long, value_enum, default_value_t = Measure::Cosine)]
    measure: Measure,
    #[command(flatten)]
    #[serde(flatten)]
    categories: CategoryArgs,
    #[command(flatten)]
    #[serde(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct ChanceFlags {
    /// Monte Carlo simulations.
    #[arg(long, default_value_t = 1000)]
    sims: usize,
    /// Random plans per simulation for the best-of-runs baseline.
    #[arg(long, default_value_t = 500)]
    runs_per_sim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    /// Transport plan CSV (rows: source ids, columns: target ids).
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    categories: CategoryArgs,
    #[command(flatten)]
    #[serde(flatten)]
    chance: ChanceFlags,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct ChanceArgs {
    /// Number of objects (identity correspondence).
    #[arg(long, conflicts_with = "ids_from", required_unless_present = "ids_from")]
    n: Option<usize>,
    /// Take object ids from the rows of this CSV (embedding, RDM or plan).
    #[arg(long)]
    ids_from: Option<PathBuf>,
    /// `id,category` CSV; needs --ids-from.
    #[arg(long, requires = "ids_from")]
    categories: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    chance: ChanceFlags,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct SposeArgs {
    /// Triplet CSV (`i,j,k,odd`).
    #[arg(long)]
    triplets: PathBuf,
    #[arg(long)]
    n_objects: usize,
    #[arg(long, default_value_t = 70)]
    dims: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 2048)]
    batch: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Penalty weight (default 0.01 when no search is requested).
    #[arg(long, conflicts_with = "lambda_search")]
    lambda: Option<f64>,
    /// Random-search lambda over this many trials.
    #[arg(long)]
    lambda_search: Option<usize>,
    #[arg(long, default_value_t = spose::LAMBDA_RANGE.0)]
    lambda_min: f64,
    #[arg(long, default_value_t = spose::LAMBDA_RANGE.1)]
    lambda_max: f64,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output embedding CSV; the manifest and report go next to it.
    #[arg(long, default_value = "embedding.csv")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ClusterArgs {
    /// Embedding CSV.
    #[arg(long)]
    input: PathBuf,
    /// `id,category` CSV for the AMI report.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Flat clusters (default: number of categories).
    #[arg(long)]
    k: Option<usize>,
    /// Also write 2-D classical MDS coordinates.
    #[arg(long)]
    mds: bool,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = OsString>,
{
    let args: Vec<OsString> = args.into_iter().collect();
    let args = match inject_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            // printing only fails if the stream is closed; nothing useful left to do then
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

/// Appends `--key value` for every config key whose flag is absent from `args`.
fn inject_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let json: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let obj = json
        .as_object()
        .ok_or_else(|| Error::Format(format!("{}: expected a JSON object", path.display())))?;
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|s| s.strip_prefix("--"))
        .map(|s| s.split('=').next().unwrap_or(s).to_string())
        .collect();
    for (key, value) in obj {
        let flag = key.replace('_', "-");
        if given.contains(&flag) || flag == "config" {
            continue;
        }
        match value {
            serde_json::Value::Bool(true) => args.push(format!("--{flag}").into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => {
                args.push(format!("--{flag}").into());
                args.push(s.into());
            }
            serde_json::Value::Number(n) => {
                args.push(format!("--{flag}").into());
                args.push(n.to_string().into());
            }
            other => {
                return Err(Error::Format(format!("config key {key}: unsupported value {other}")));
            }
        }
    }
    Ok(args)
}

fn dispatch(command: Command) -> Result<()> {
    let workers = match &command {
        Command::Rdm(a) => a.common.workers,
        Command::Rsa(a) => a.common.workers,
        Command::Align(a) => a.common.workers,
        Command::Sweep(a) => a.common.workers,
        Command::Evaluate(a) => a.common.workers,
        Command::Chance(a) => a.common.workers,
        Command::Spose(a) => a.workers,
        Command::Cluster(a) => a.common.workers,
    };
    let workers = match workers {
        Some(0) => return Err(Error::InvalidArgument("--workers must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Rdm(a) => cmd_rdm(&a),
        Command::Rsa(a) => cmd_rsa(&a),
        Command::Align(a) => cmd_align(&a),
        Command::Sweep(a) => cmd_sweep(&a, workers),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Chance(a) => cmd_chance(&a),
        Command::Spose(a) => cmd_spose(&a),
        Command::Cluster(a) => cmd_cluster(&a),
    })
}

fn out_dir(common: &Common, name: &str) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}-out")));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_json<V: Serialize>(value: &V, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let read = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    seed: Option<u64>,
    parameters: &'a P,
    inputs: BTreeMap<String, String>,
}

fn write_manifest<P: Serialize>(path: &Path, subcommand: &str, params: &P, seed: Option<u64>, inputs: &[&Path]) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let manifest = Manifest {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        parameters: params,
        inputs,
    };
    write_json(&manifest, path)
}

/// Loads an RDM, computing it first if the file holds an embedding.
fn load_rdm(path: &Path, measure: Measure) -> Result<Rdm> {
    if dataset::is_embedding_file(path)? {
        compute_rdm(&dataset::load_embeddings::<f64>(path)?, measure)
    } else {
        Rdm::from_labeled(dataset::load_matrix(path)?)
    }
}

fn cmd_rdm(a: &RdmArgs) -> Result<()> {
    let dir = out_dir(&a.common, "rdm")?;
    let emb = dataset::load_embeddings::<f64>(&a.input)?;
    let rdm = compute_rdm(&emb, a.measure)?;
    dataset::save_matrix(rdm.values().view(), rdm.ids(), rdm.ids(), dir.join("rdm.csv"))?;
    eprintln!("rdm: {} objects, {:?} -> {}", rdm.len(), a.measure, dir.join("rdm.csv").display());
    write_manifest(&dir.join("manifest.json"), "rdm", a, None, &[&a.input])
}

fn cmd_rsa(a: &RsaArgs) -> Result<()> {
    let dir = out_dir(&a.common, "rsa")?;
    let ra = load_rdm(&a.a, a.measure)?;
    let rb = load_rdm(&a.b, a.measure)?;
    let r = rsa_pearson(&ra, &rb)?;
    println!("r={r:?}");
    write_json(&serde_json::json!({ "r": r, "n_objects": ra.len() }), &dir.join("rsa.json"))?;
    write_manifest(&dir.join("manifest.json"), "rsa", a, None, &[&a.a, &a.b])
}

fn check_epsilon(eps: f64, name: &str) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {eps}")))
    }
}

fn save_plan(plan: &TransportPlan, src: &Rdm, tgt: &Rdm, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    dataset::save_matrix(plan.values().view(), src.ids(), tgt.ids(), dir.join("plan.csv"))?;
    dataset::save_plan_argmax(plan.values().view(), src.ids(), tgt.ids(), dir.join("plan_argmax.csv"))
}

#[derive(Serialize)]
struct AlignReport {
    epsilon: f64,
    seed: u64,
    entropic_gwd: f64,
    plain_gwd: f64,
    outer_iterations: usize,
    inner_iterations: usize,
    converged: bool,
    max_marginal_violation: f64,
    /// `None` when the two id sets do not correspond one to one.
    matching_rate: Option<f64>,
    category_matching_rate: Option<f64>,
}

fn cmd_align(a: &AlignArgs) -> Result<()> {
    check_epsilon(a.epsilon, "--epsilon")?;
    let dir = out_dir(&a.common, "align")?;
    let src = load_rdm(&a.source, a.measure)?;
    let tgt = load_rdm(&a.target, a.measure)?;
    let corr = Correspondence::from_ids(src.ids(), tgt.ids()).ok();
    let labels = a.categories.labels(src.ids(), tgt.ids())?;
    let eps = if a.eps_relative { a.epsilon * src.mean_dissimilarity() } else { a.epsilon };
    let res = entropic_gw(&src, &tgt, eps, a.seed, &a.solver.options())?;
    let plan = res.plan.values().view();
    let report = AlignReport {
        epsilon: eps,
        seed: a.seed,
        entropic_gwd: res.entropic_gwd,
        plain_gwd: res.plain_gwd,
        outer_iterations: res.outer_iterations,
        inner_iterations: res.inner_iterations,
        converged: res.converged,
        max_marginal_violation: res.plan.max_marginal_violation(),
        matching_rate: corr.map(|c| metrics::matching_rate(plan, &c)).transpose()?,
        category_matching_rate: category_rate(plan, labels.as_ref())?,
    };
    save_plan(&res.plan, &src, &tgt, &dir)?;
    write_json(&report, &dir.join("result.json"))?;
    eprintln!(
        "align: eps={eps:e} gwd={:e} matching={} converged={} after {} iterations",
        report.plain_gwd,
        report.matching_rate.map_or("n/a".to_string(), |r| format!("{r}%")),
        report.converged,
        report.outer_iterations
    );
    let mut inputs = vec![a.source.as_path(), a.target.as_path()];
    inputs.extend(a.categories.paths());
    write_manifest(&dir.join("manifest.json"), "align", a, Some(a.seed), &inputs)
}

fn category_rate(plan: ndarray::ArrayView2<'_, f64>, labels: Option<&CategoryLabels>) -> Result<Option<f64>> {
    match labels {
        Some(l) if l.labeled_sources() > 0 => Ok(Some(metrics::category_matching_rate(plan, l)?)),
        _ => Ok(None),
    }
}

fn opt_real(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format_real(x),
        _ => String::new(),
    }
}

/// Per-trial metrics without wall time, ordered by trial index, so reruns compare byte for byte.
fn write_metrics_csv(trials: &[TrialRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let fmt = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record([
        "trial_index",
        "epsilon",
        "seed",
        "entropic_gwd",
        "plain_gwd",
        "matching_rate",
        "category_matching_rate",
        "outer_iterations",
        "converged",
    ])
    .map_err(fmt)?;
    for t in trials {
        w.write_record([
            t.trial_index.to_string(),
            format_real(t.epsilon),
            t.seed.to_string(),
            opt_real(Some(t.entropic_gwd)),
            opt_real(Some(t.plain_gwd)),
            opt_real(Some(t.matching_rate)),
            opt_real(t.category_matching_rate),
            t.outer_iterations.to_string(),
            t.converged.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn criterion_name(c: SelectionCriterion) -> &'static str {
    match c {
        SelectionCriterion::MinGwd => "min_gwd",
        SelectionCriterion::MaxMatching => "max_matching",
        SelectionCriterion::MaxCategoryMatching => "max_category_matching",
    }
}

fn cmd_sweep(a: &SweepArgs, workers: usize) -> Result<()> {
    let dir = out_dir(&a.common, "sweep")?;
    let src = load_rdm(&a.source, a.measure)?;
    let tgt = load_rdm(&a.target, a.measure)?;
    let corr = Correspondence::from_ids(src.ids(), tgt.ids())?;
    let labels = a.categories.labels(src.ids(), tgt.ids())?;
    let scale = if a.eps_relative { src.mean_dissimilarity() } else { 1.0 };
    let cfg = SweepConfig {
        eps_min: a.eps_min * scale,
        eps_max: a.eps_max * scale,
        n_trials: a.trials,
        sampler: a.sampler,
        base_seed: a.seed,
        parallel_workers: workers,
        solve: a.solver.options(),
    };
    cfg.validate()?;
    eprintln!(
        "sweep: {} trials over eps [{:e}, {:e}] with {workers} workers",
        cfg.n_trials, cfg.eps_min, cfg.eps_max
    );
    let mut sweep = Sweep::new(&src, &tgt, cfg, &corr).log(dir.join("trials.jsonl"), a.resume);
    if let Some(l) = &labels {
        sweep = sweep.categories(l);
    }
    let trials = sweep.run()?;
    let failed = trials.iter().filter(|t| t.failed()).count();
    eprintln!("sweep: {} trials finished, {failed} failed", trials.len());
    write_metrics_csv(&trials, &dir.join("metrics.csv"))?;

    let mut criteria = vec![SelectionCriterion::MinGwd, SelectionCriterion::MaxMatching];
    if labels.as_ref().is_some_and(|l| l.labeled_sources() > 0) {
        criteria.push(SelectionCriterion::MaxCategoryMatching);
    }
    let mut best = BTreeMap::new();
    let mut solved: HashMap<usize, TransportPlan> = HashMap::new();
    for c in criteria {
        let rec = select_best(&trials, c)?;
        if !solved.contains_key(&rec.trial_index) {
            let res = solve_trial(&src, &tgt, rec, &cfg.solve)?;
            solved.insert(rec.trial_index, res.plan);
        }
        save_plan(&solved[&rec.trial_index], &src, &tgt, &dir.join(format!("best_{}", criterion_name(c))))?;
        eprintln!(
            "sweep: {} -> trial {} (eps={:e}, gwd={:e}, matching={}%)",
            criterion_name(c),
            rec.trial_index,
            rec.epsilon,
            rec.plain_gwd,
            rec.matching_rate
        );
        best.insert(criterion_name(c), rec.clone());
    }
    write_json(&best, &dir.join("best.json"))?;
    let mut inputs = vec![a.source.as_path(), a.target.as_path()];
    inputs.extend(a.categories.paths());
    write_manifest(&dir.join("manifest.json"), "sweep", a, Some(a.seed), &inputs)
}

#[derive(Serialize)]
struct TopEntry {
    target_id: String,
    mass: f64,
}

#[derive(Serialize)]
struct TopTable {
    source_id: String,
    targets: Vec<TopEntry>,
}

#[derive(Serialize)]
struct ChanceSection {
    single: metrics::ChanceReport,
    best_of_runs: metrics::ChanceReport,
    runs_per_sim: usize,
}

#[derive(Serialize)]
struct EvaluateReport {
    matching_rate: f64,
    category_matching_rate: Option<f64>,
    n_sources: usize,
    n_targets: usize,
    top_k: Vec<TopTable>,
    chance: ChanceSection,
}

fn chance_section(corr: &Correspondence, labels: Option<&CategoryLabels>, f: &ChanceFlags) -> Result<ChanceSection> {
    Ok(ChanceSection {
        single: metrics::chance_matching(corr, labels, f.sims, f.seed)?,
        best_of_runs: metrics::chance_best_of_runs(corr, labels, f.runs_per_sim, f.sims, f.seed)?,
        runs_per_sim: f.runs_per_sim,
    })
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let dir = out_dir(&a.common, "evaluate")?;
    let m = dataset::load_matrix::<f64>(&a.plan)?;
    let plan = TransportPlan::from_matrix(m.values)?;
    let view = plan.values().view();
    let corr = Correspondence::from_ids(&m.row_ids, &m.col_ids)?;
    let labels = a.categories.labels(&m.row_ids, &m.col_ids)?;
    let k = a.top_k.min(m.col_ids.len());
    let top_k = (0..m.row_ids.len())
        .map(|i| {
            let targets = metrics::top_k_targets(view, i, k)?
                .into_iter()
                .map(|(j, mass)| TopEntry { target_id: m.col_ids[j].clone(), mass })
                .collect();
            Ok(TopTable { source_id: m.row_ids[i].clone(), targets })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvaluateReport {
        matching_rate: metrics::matching_rate(view, &corr)?,
        category_matching_rate: category_rate(view, labels.as_ref())?,
        n_sources: m.row_ids.len(),
        n_targets: m.col_ids.len(),
        top_k,
        chance: chance_section(&corr, labels.as_ref(), &a.chance)?,
    };
    write_json(&report, &dir.join("report.json"))?;
    eprintln!(
        "evaluate: matching {}% (chance {}%), category {:?}",
        report.matching_rate, report.chance.single.fine.mean, report.category_matching_rate
    );
    let mut inputs = vec![a.plan.as_path()];
    inputs.extend(a.categories.paths());
    write_manifest(&dir.join("manifest.json"), "evaluate", a, Some(a.chance.seed), &inputs)
}

fn row_ids(path: &Path) -> Result<Vec<String>> {
    if dataset::is_embedding_file(path)? {
        Ok(dataset::load_embeddings::<f64>(path)?.ids().to_vec())
    } else {
        Ok(dataset::load_matrix::<f64>(path)?.row_ids)
    }
}

fn cmd_chance(a: &ChanceArgs) -> Result<()> {
    let dir = out_dir(&a.common, "chance")?;
    let (corr, labels) = match (&a.ids_from, a.n) {
        (Some(path), _) => {
            let ids = row_ids(path)?;
            let labels = match &a.categories {
                Some(c) => {
                    let map: CategoryMap = dataset::load_categories(c)?;
                    Some(CategoryLabels::from_maps(&map, &ids, &map, &ids))
                }
                None => None,
            };
            (Correspondence::identity(ids.len()), labels)
        }
        (None, Some(n)) => (Correspondence::identity(n), None),
        (None, None) => return Err(Error::InvalidArgument("give --n or --ids-from".into())),
    };
    let section = chance_section(&corr, labels.as_ref(), &a.chance)?;
    write_json(&section, &dir.join("chance.json"))?;
    eprintln!(
        "chance: n={} single mean {}%, best of {} mean {}%",
        corr.len(),
        section.single.fine.mean,
        a.chance.runs_per_sim,
        section.best_of_runs.fine.mean
    );
    let inputs: Vec<&Path> = a.ids_from.iter().chain(&a.categories).map(PathBuf::as_path).collect();
    write_manifest(&dir.join("manifest.json"), "chance", a, Some(a.chance.seed), &inputs)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "embedding".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Serialize)]
struct SposeReport {
    lambda: f64,
    training_curve: Vec<f64>,
    lambda_trials: Option<Vec<spose::LambdaTrial>>,
    unused_objects: Vec<usize>,
}

fn cmd_spose(a: &SposeArgs) -> Result<()> {
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let triplets = dataset::load_triplets(&a.triplets, Some(a.n_objects))?;
    let unused = spose::unused_objects(&triplets.triplets, a.n_objects);
    if !unused.is_empty() {
        eprintln!("spose: warning: {} objects appear in no triplet", unused.len());
    }
    let cfg = SposeConfig {
        dims: a.dims,
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        lambda: a.lambda.unwrap_or(SposeConfig::default().lambda),
        init_scale: a.init_scale,
        seed: a.seed,
    };
    let (model, lambda, trials) = match a.lambda_search {
        Some(n) => {
            let s = spose::lambda_search::<f64>(&triplets, a.n_objects, &cfg, (a.lambda_min, a.lambda_max), n)?;
            eprintln!("spose: selected lambda {:e} from {n} trials", s.best_lambda);
            (s.model, s.best_lambda, Some(s.trials))
        }
        None => (spose::train_spose::<f64>(&triplets, a.n_objects, &cfg)?, cfg.lambda, None),
    };
    dataset::save_embeddings(&model.embedding, &a.out)?;
    if let Some(last) = model.training_curve.last() {
        eprintln!("spose: final epoch loss {last}");
    }
    let report = SposeReport {
        lambda,
        training_curve: model.training_curve,
        lambda_trials: trials,
        unused_objects: unused,
    };
    write_json(&report, &sibling(&a.out, "report.json"))?;
    write_manifest(&sibling(&a.out, "manifest.json"), "spose", a, Some(a.seed), &[&a.triplets])
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let dir = out_dir(&a.common, "cluster")?;
    let emb = dataset::load_embeddings::<f64>(&a.input)?;
    let categories = a.categories.as_ref().map(dataset::load_categories).transpose()?;
    let k = match (a.k, &categories) {
        (Some(k), _) => k,
        (None, Some(map)) => cluster::category_partition(emb.ids(), map).1.n_clusters(),
        (None, None) => return Err(Error::InvalidArgument("give --k or --categories".into())),
    };
    let dend = cluster::ward_linkage(&emb)?;
    let part: Partition = cluster::cut_tree(&dend, k)?;

    let merges_path = dir.join("merges.csv");
    let file = File::create(&merges_path).map_err(|e| Error::io(&merges_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["cluster_a", "cluster_b", "height", "size"]).map_err(fmt)?;
    for m in dend.merges() {
        w.write_record([m.a.to_string(), m.b.to_string(), format_real(m.height), m.size.to_string()])
            .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(&merges_path, e))?;

    let labels_path = dir.join("labels.csv");
    let file = File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["id", "cluster"]).map_err(fmt)?;
    for (id, l) in emb.ids().iter().zip(part.labels()) {
        w.write_record([id.clone(), l.to_string()]).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(&labels_path, e))?;

    if let Some(map) = &categories {
        let (keep, _) = cluster::category_partition(emb.ids(), map);
        let score = cluster::ami_against_categories(&part, emb.ids(), map)?;
        eprintln!("cluster: k={k}, AMI {score} over {} labeled objects", keep.len());
        write_json(
            &serde_json::json!({ "ami": score, "k": k, "n_objects": emb.len(), "n_labeled": keep.len() }),
            &dir.join("ami.json"),
        )?;
    }
    if a.mds {
        let coords = cluster::classical_mds(&emb, 2)?;
        dataset::save_matrix(coords.view(), emb.ids(), &["x".to_string(), "y".to_string()], dir.join("mds.csv"))?;
    }
    let inputs: Vec<&Path> = std::iter::once(a.input.as_path()).chain(a.categories.as_deref()).collect();
    write_manifest(&dir.join("manifest.json"), "cluster", a, None, &inputs)
}
