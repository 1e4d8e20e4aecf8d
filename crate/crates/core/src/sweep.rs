//! Epsilon search with one random plan initialization per trial.
//!
//! Every trial draws a fresh epsilon, initializes the plan from
//! `seed = base_seed + trial_index`, solves entropic GW and scores the plan.
//! Trials run on a worker pool; a single writer thread appends each finished
//! record to a JSON-lines log so interrupted sweeps can resume.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_jsonl, JsonlWriter};
use crate::error::{Error, Result};
use crate::gw::{entropic_gw, SolveOptions, SolveResult};
use crate::metrics::{category_matching_rate, matching_rate, CategoryLabels, Correspondence};
use crate::rdm::Rdm;
use crate::scalar::Real;

/// Non-finite values are written as `null` and read back as NaN.
mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Outcome of one (epsilon, seed) solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub epsilon: f64,
    pub seed: u64,
    #[serde(with = "nullable_f64")]
    pub entropic_gwd: f64,
    #[serde(with = "nullable_f64")]
    pub plain_gwd: f64,
    /// Percent.
    #[serde(with = "nullable_f64")]
    pub matching_rate: f64,
    /// Percent; present when category labels were supplied.
    pub category_matching_rate: Option<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Log-uniform draws over `[eps_min, eps_max]`.
    Random,
    /// Tree-structured Parzen estimator over `ln(eps)`.
    Tpe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub eps_min: f64,
    pub eps_max: f64,
    pub n_trials: usize,
    pub sampler: SamplerKind,
    pub base_seed: u64,
    /// 0 means one worker per available core.
    pub parallel_workers: usize,
    pub solve: SolveOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps_min: 1e-4,
            eps_max: 1e-3,
            n_trials: 500,
            sampler: SamplerKind::Random,
            base_seed: 0,
            parallel_workers: 0,
            solve: SolveOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_min > 0.0 && self.eps_min < self.eps_max && self.eps_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < eps_min < eps_max, got [{}, {}]",
                self.eps_min, self.eps_max
            )));
        }
        if self.n_trials == 0 {
            return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Random draws used before the TPE model kicks in.
pub const TPE_WARMUP: usize = 10;
/// Fraction of the history (lowest plain GWD) forming the "good" density.
pub const TPE_GOOD_FRACTION: f64 = 0.25;
/// Candidates drawn from the good density per proposal.
pub const TPE_CANDIDATES: usize = 24;
/// TPE trials are proposed in synchronous batches of this size so the
/// proposals do not depend on worker scheduling.
pub const TPE_BATCH: usize = 8;

fn log_uniform(lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    (a + (b - a) * rng.random::<f64>()).exp().clamp(lo, hi)
}

/// One-dimensional Parzen estimator: Gaussian kernels at the observations
/// plus a broad prior kernel at the middle of the range, equal weights.
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Parzen {
    fn fit(points: &[f64], lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        let mut sorted = points.to_vec();
        sorted.sort_by(f64::total_cmp);
        let min_sigma = width / (100f64).min(1.0 + sorted.len() as f64);
        let mut mus = Vec::with_capacity(sorted.len() + 1);
        let mut sigmas = Vec::with_capacity(sorted.len() + 1);
        for (i, &x) in sorted.iter().enumerate() {
            let left = if i == 0 { x - lo } else { x - sorted[i - 1] };
            let right = if i + 1 == sorted.len() { hi - x } else { sorted[i + 1] - x };
            mus.push(x);
            sigmas.push(left.max(right).clamp(min_sigma, width));
        }
        mus.push(0.5 * (lo + hi));
        sigmas.push(width);
        Self { mus, sigmas }
    }

    fn density(&self, x: f64) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        self.mus
            .iter()
            .zip(&self.sigmas)
            .map(|(m, s)| (-0.5 * ((x - m) / s).powi(2)).exp() / (s * norm))
            .sum::<f64>()
            / self.mus.len() as f64
    }

    fn sample(&self, lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
        let c = rng.random_range(0..self.mus.len());
        let normal = Normal::new(self.mus[c], self.sigmas[c]).expect("positive sigma");
        for _ in 0..100 {
            let x = normal.sample(rng);
            if (lo..=hi).contains(&x) {
                return x;
            }
        }
        self.mus[c].clamp(lo, hi)
    }
}

/// Proposes the next epsilon given the finished trials.
pub fn sample_epsilon(history: &[TrialRecord], cfg: &SweepConfig, rng: &mut impl Rng) -> f64 {
    let usable: Vec<&TrialRecord> = history
        .iter()
        .filter(|r| r.converged && r.plain_gwd.is_finite())
        .collect();
    if cfg.sampler == SamplerKind::Random || usable.len() < TPE_WARMUP {
        return log_uniform(cfg.eps_min, cfg.eps_max, rng);
    }
    let mut ranked = usable;
    ranked.sort_by(|a, b| a.plain_gwd.total_cmp(&b.plain_gwd).then(a.trial_index.cmp(&b.trial_index)));
    let n_good = ((TPE_GOOD_FRACTION * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len() - 1);
    let logs = |rs: &[&TrialRecord]| rs.iter().map(|r| r.epsilon.ln()).collect::<Vec<_>>();
    let (lo, hi) = (cfg.eps_min.ln(), cfg.eps_max.ln());
    let good = Parzen::fit(&logs(&ranked[..n_good]), lo, hi);
    let bad = Parzen::fit(&logs(&ranked[n_good..]), lo, hi);
    let mut best = (f64::NEG_INFINITY, 0.5 * (lo + hi));
    for _ in 0..TPE_CANDIDATES {
        let x = good.sample(lo, hi, rng);
        let score = good.density(x).ln() - bad.density(x).ln();
        if score > best.0 {
            best = (score, x);
        }
    }
    best.1.exp().clamp(cfg.eps_min, cfg.eps_max)
}

fn trial_rng(base_seed: u64, trial_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(trial_index as u64);
    rng
}

/// Solves the trial described by `record` again; bit-identical to the original run.
pub fn solve_trial<T: Real>(da: &Rdm<T>, db: &Rdm<T>, record: &TrialRecord, opts: &SolveOptions) -> Result<SolveResult<T>> {
    entropic_gw(da, db, T::of(record.epsilon), record.seed, opts)
}

struct TrialContext<'a, T> {
    da: &'a Rdm<T>,
    db: &'a Rdm<T>,
    corr: &'a Correspondence,
    labels: Option<&'a CategoryLabels>,
    opts: SolveOptions,
}

impl<T: Real> TrialContext<'_, T> {
    fn run(&self, trial_index: usize, epsilon: f64, seed: u64) -> TrialRecord {
        let start = Instant::now();
        let outcome = entropic_gw(self.da, self.db, T::of(epsilon), seed, &self.opts).and_then(|res| {
            let plan = res.plan.values().view();
            let fine = matching_rate(plan, self.corr)?;
            let cat = match self.labels {
                Some(l) if l.labeled_sources() > 0 => Some(category_matching_rate(plan, l)?),
                _ => None,
            };
            Ok((res, fine, cat))
        });
        let wall_time = start.elapsed().as_secs_f64();
        match outcome {
            Ok((res, fine, cat)) => TrialRecord {
                trial_index,
                epsilon,
                seed,
                entropic_gwd: res.entropic_gwd.as_f64(),
                plain_gwd: res.plain_gwd.as_f64(),
                matching_rate: fine,
                category_matching_rate: cat,
                outer_iterations: res.outer_iterations,
                converged: res.converged,
                wall_time,
                error: None,
            },
            Err(e) => TrialRecord {
                trial_index,
                epsilon,
                seed,
                entropic_gwd: f64::NAN,
                plain_gwd: f64::NAN,
                matching_rate: f64::NAN,
                category_matching_rate: None,
                outer_iterations: 0,
                converged: false,
                wall_time,
                error: Some(e.to_string()),
            },
        }
    }
}

/// A configured sweep. Use [`run_sweep`] for the common case without a log.
pub struct Sweep<'a, T> {
    da: &'a Rdm<T>,
    db: &'a Rdm<T>,
    cfg: SweepConfig,
    corr: &'a Correspondence,
    labels: Option<&'a CategoryLabels>,
    log: Option<PathBuf>,
    resume: bool,
}

impl<'a, T: Real> Sweep<'a, T> {
    pub fn new(da: &'a Rdm<T>, db: &'a Rdm<T>, cfg: SweepConfig, corr: &'a Correspondence) -> Self {
        Self { da, db, cfg, corr, labels: None, log: None, resume: false }
    }

    pub fn categories(mut self, labels: &'a CategoryLabels) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Appends records to `path`. With `resume`, trials already in the log are skipped.
    pub fn log(mut self, path: impl AsRef<Path>, resume: bool) -> Self {
        self.log = Some(path.as_ref().to_path_buf());
        self.resume = resume;
        self
    }

    /// Runs every outstanding trial and returns all `n_trials` records ordered by index.
    pub fn run(self) -> Result<Vec<TrialRecord>> {
        self.cfg.validate()?;
        if self.corr.len() != self.da.len() {
            return Err(Error::Shape(format!(
                "correspondence covers {} sources, RDM has {}",
                self.corr.len(),
                self.da.len()
            )));
        }
        let cfg = self.cfg;
        let mut done: BTreeMap<usize, TrialRecord> = BTreeMap::new();
        if let (Some(path), true) = (&self.log, self.resume) {
            for r in read_jsonl::<TrialRecord>(path)? {
                if r.trial_index < cfg.n_trials {
                    done.insert(r.trial_index, r);
                }
            }
        }
        let writer = match &self.log {
            Some(path) => Some(JsonlWriter::open(path, self.resume)?),
            None => None,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel_workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
        let ctx = TrialContext {
            da: self.da,
            db: self.db,
            corr: self.corr,
            labels: self.labels,
            opts: cfg.solve,
        };

        let (tx, rx) = mpsc::channel::<TrialRecord>();
        let fresh = std::thread::scope(|scope| -> Result<Vec<TrialRecord>> {
            let log_thread = scope.spawn(move || -> Result<()> {
                match writer {
                    Some(mut w) => rx.iter().try_for_each(|r| w.append(&r)),
                    None => {
                        rx.iter().for_each(drop);
                        Ok(())
                    }
                }
            });
            let mut fresh = Vec::new();
            let batch = match cfg.sampler {
                SamplerKind::Random => cfg.n_trials,
                SamplerKind::Tpe => TPE_BATCH,
            };
            for start in (0..cfg.n_trials).step_by(batch) {
                let end = (start + batch).min(cfg.n_trials);
                let history: Vec<TrialRecord> = done
                    .values()
                    .chain(fresh.iter())
                    .filter(|r| r.trial_index < start)
                    .cloned()
                    .collect();
                let jobs: Vec<(usize, f64)> = (start..end)
                    .filter(|t| !done.contains_key(t))
                    .map(|t| (t, sample_epsilon(&history, &cfg, &mut trial_rng(cfg.base_seed, t))))
                    .collect();
                let records: Vec<TrialRecord> = pool.install(|| {
                    jobs.par_iter()
                        .map_with(tx.clone(), |tx, &(t, eps)| {
                            let rec = ctx.run(t, eps, cfg.base_seed.wrapping_add(t as u64));
                            // the receiver only goes away if the log thread failed; that error surfaces on join
                            let _ = tx.send(rec.clone());
                            rec
                        })
                        .collect()
                });
                fresh.extend(records);
            }
            drop(tx);
            log_thread.join().expect("log writer panicked")?;
            Ok(fresh)
        })?;

        for r in fresh {
            done.insert(r.trial_index, r);
        }
        let all: Vec<TrialRecord> = done.into_values().collect();
        if all.iter().all(TrialRecord::failed) {
            return Err(Error::SweepFailed(format!("all {} trials failed", all.len())));
        }
        Ok(all)
    }
}

/// Runs a full sweep without a log file.
pub fn run_sweep<T: Real>(
    da: &Rdm<T>,
    db: &Rdm<T>,
    cfg: &SweepConfig,
    corr: &Correspondence,
    labels: Option<&CategoryLabels>,
) -> Result<Vec<TrialRecord>> {
    let sweep = Sweep::new(da, db, *cfg, corr);
    match labels {
        Some(l) => sweep.categories(l).run(),
        None => sweep.run(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    MinGwd,
    MaxMatching,
    MaxCategoryMatching,
}

/// Picks the reporting trial among converged trials; ties go to the lower trial index.
pub fn select_best(trials: &[TrialRecord], criterion: SelectionCriterion) -> Result<&TrialRecord> {
    let score = |r: &TrialRecord| -> Option<f64> {
        let s = match criterion {
            SelectionCriterion::MinGwd => -r.plain_gwd,
            SelectionCriterion::MaxMatching => r.matching_rate,
            SelectionCriterion::MaxCategoryMatching => r.category_matching_rate?,
        };
        s.is_finite().then_some(s)
    };
    let mut ordered: Vec<&TrialRecord> = trials.iter().filter(|r| r.converged && !r.failed()).collect();
    ordered.sort_by_key(|r| r.trial_index);
    let mut best: Option<(&TrialRecord, f64)> = None;
    for r in ordered {
        if let Some(s) = score(r) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((r, s));
            }
        }
    }
    best.map(|(r, _)| r)
        .ok_or_else(|| Error::SweepFailed(format!("no converged trial scores under {criterion:?}")))
}
