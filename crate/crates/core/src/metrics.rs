//! Fine- and coarse-grained scoring of transport plans, plus Monte Carlo chance levels.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CategoryMap;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Index of the largest value; ties and NaNs resolve to the smallest index.
pub fn argmax_first<T: PartialOrd + Copy>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (j, v) in values.into_iter().enumerate() {
        // NaN never compares, so it is never selected unless nothing else exists
        if v.partial_cmp(&v).is_none() {
            continue;
        }
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((j, v)),
        }
    }
    best.map_or(0, |(j, _)| j)
}

/// Source index to the index of its true counterpart among the targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    targets: Vec<usize>,
}

impl Correspondence {
    pub fn new(targets: Vec<usize>, n_targets: usize) -> Result<Self> {
        if let Some(t) = targets.iter().find(|t| **t >= n_targets) {
            return Err(Error::Index(format!("target {t} >= {n_targets}")));
        }
        Ok(Self { targets })
    }

    pub fn identity(n: usize) -> Self {
        Self { targets: (0..n).collect() }
    }

    /// Pairs objects carrying the same id. Every source id must exist among the targets.
    pub fn from_ids(source: &[String], target: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> =
            target.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
        let targets = source
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Alignment(format!("source object `{id}` has no counterpart")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { targets })
    }

    pub fn target(&self, source: usize) -> usize {
        self.targets[source]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Category codes for source and target objects over a shared label vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryLabels {
    pub source: Vec<Option<usize>>,
    pub target: Vec<Option<usize>>,
    pub names: Vec<String>,
}

impl CategoryLabels {
    pub fn from_maps(
        source_map: &CategoryMap,
        source_ids: &[String],
        target_map: &CategoryMap,
        target_ids: &[String],
    ) -> Self {
        let mut names = Vec::new();
        let source = source_map.codes(source_ids, &mut names);
        let target = target_map.codes(target_ids, &mut names);
        Self { source, target, names }
    }

    pub fn labeled_sources(&self) -> usize {
        self.source.iter().filter(|c| c.is_some()).count()
    }
}

fn check_plan<T>(plan: &ArrayView2<'_, T>) -> Result<()> {
    if plan.is_empty() {
        return Err(Error::Shape("empty plan".into()));
    }
    Ok(())
}

/// Percentage of source rows whose argmax target is the true counterpart.
pub fn matching_rate<T: Real>(plan: ArrayView2<'_, T>, corr: &Correspondence) -> Result<f64> {
    check_plan(&plan)?;
    let (n, m) = plan.dim();
    if corr.len() != n {
        return Err(Error::Shape(format!("correspondence covers {} sources, plan has {n}", corr.len())));
    }
    if let Some(t) = corr.targets().iter().find(|t| **t >= m) {
        return Err(Error::Index(format!("correspondence target {t} outside {m} plan columns")));
    }
    let hits = plan
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(i, row)| argmax_first(row.iter().copied()) == corr.target(*i))
        .count();
    Ok(100.0 * hits as f64 / n as f64)
}

/// Percentage of labeled source rows whose argmax target carries the same category.
/// Unlabeled sources are left out of the denominator; unlabeled targets never match.
pub fn category_matching_rate<T: Real>(plan: ArrayView2<'_, T>, labels: &CategoryLabels) -> Result<f64> {
    check_plan(&plan)?;
    let (n, m) = plan.dim();
    if labels.source.len() != n || labels.target.len() != m {
        return Err(Error::Shape(format!(
            "labels for {}x{} objects, plan is {n}x{m}",
            labels.source.len(),
            labels.target.len()
        )));
    }
    let mut labeled = 0usize;
    let mut hits = 0usize;
    for (i, row) in plan.rows().into_iter().enumerate() {
        let Some(src) = labels.source[i] else { continue };
        labeled += 1;
        if labels.target[argmax_first(row.iter().copied())] == Some(src) {
            hits += 1;
        }
    }
    if labeled == 0 {
        return Err(Error::DegenerateInput("no labeled source objects".into()));
    }
    Ok(100.0 * hits as f64 / labeled as f64)
}

/// The `k` targets with the largest mass in row `source`, descending, ties to the smaller index.
pub fn top_k_targets<T: Real>(plan: ArrayView2<'_, T>, source: usize, k: usize) -> Result<Vec<(usize, T)>> {
    let (n, m) = plan.dim();
    if source >= n {
        return Err(Error::Index(format!("source {source} >= {n}")));
    }
    if k == 0 || k > m {
        return Err(Error::Index(format!("k = {k} outside 1..={m}")));
    }
    let row = plan.row(source);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    Ok(order.into_iter().take(k).map(|j| (j, row[j])).collect())
}

/// Summary of a simulated chance distribution (rates in percent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceStats {
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
    pub n_simulations: usize,
}

impl ChanceStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Self {
            mean,
            p5: percentile(&sorted, 5.0),
            p95: percentile(&sorted, 95.0),
            n_simulations: samples.len(),
        }
    }
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = pct / 100.0 * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceReport {
    pub fine: ChanceStats,
    /// Absent when no source object is labeled.
    pub category: Option<ChanceStats>,
}

fn permutation_rates(perm: &[usize], corr: &Correspondence, labels: Option<&CategoryLabels>) -> (f64, Option<f64>) {
    let n = perm.len();
    let fine = perm.iter().enumerate().filter(|(i, t)| **t == corr.target(*i)).count();
    let fine = 100.0 * fine as f64 / n as f64;
    let category = labels.and_then(|l| {
        let mut labeled = 0usize;
        let mut hits = 0usize;
        for (i, &t) in perm.iter().enumerate() {
            if let Some(src) = l.source[i] {
                labeled += 1;
                if l.target[t] == Some(src) {
                    hits += 1;
                }
            }
        }
        (labeled > 0).then(|| 100.0 * hits as f64 / labeled as f64)
    });
    (fine, category)
}

fn check_chance_inputs(corr: &Correspondence, labels: Option<&CategoryLabels>) -> Result<usize> {
    let n = corr.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("chance simulation needs n >= 2, got {n}")));
    }
    if let Some(t) = corr.targets().iter().find(|t| **t >= n) {
        return Err(Error::Index(format!("correspondence target {t} outside {n} objects")));
    }
    if let Some(l) = labels {
        if l.source.len() != n || l.target.len() != n {
            return Err(Error::Shape("category labels must cover every object".into()));
        }
    }
    Ok(n)
}

/// Chance level of the *best* rate over `runs_per_sim` random permutation plans,
/// repeated `n_sims` times. Fine and category maxima are taken independently.
///
/// Simulation `s` draws from ChaCha8 seeded with `seed` on stream `s`, so the
/// result does not depend on the thread count.
pub fn chance_best_of_runs(
    corr: &Correspondence,
    labels: Option<&CategoryLabels>,
    runs_per_sim: usize,
    n_sims: usize,
    seed: u64,
) -> Result<ChanceReport> {
    let n = check_chance_inputs(corr, labels)?;
    if runs_per_sim == 0 || n_sims == 0 {
        return Err(Error::InvalidArgument("runs_per_sim and n_sims must be positive".into()));
    }
    let per_sim: Vec<(f64, Option<f64>)> = (0..n_sims)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best_fine = f64::NEG_INFINITY;
            let mut best_cat: Option<f64> = None;
            for _ in 0..runs_per_sim {
                perm.shuffle(&mut rng);
                let (fine, cat) = permutation_rates(&perm, corr, labels);
                best_fine = best_fine.max(fine);
                if let Some(c) = cat {
                    best_cat = Some(best_cat.map_or(c, |b| b.max(c)));
                }
            }
            (best_fine, best_cat)
        })
        .collect();
    let fine: Vec<f64> = per_sim.iter().map(|r| r.0).collect();
    let cats: Option<Vec<f64>> = per_sim.iter().map(|r| r.1).collect();
    Ok(ChanceReport {
        fine: ChanceStats::from_samples(&fine),
        category: cats.map(|c| ChanceStats::from_samples(&c)),
    })
}

/// Chance level of a single random permutation plan, over `n_sims` simulations.
pub fn chance_matching(
    corr: &Correspondence,
    labels: Option<&CategoryLabels>,
    n_sims: usize,
    seed: u64,
) -> Result<ChanceReport> {
    chance_best_of_runs(corr, labels, 1, n_sims, seed)
}
