//! Nonnegative object embeddings learned from odd-one-out triplets.
//!
//! The probability of choosing pair `(a, b)` as most similar within a triplet
//! is the softmax of the three pairwise dot products. Training minimizes the
//! mean cross-entropy plus `lambda * sum_i (|x_i| - 1)^2` with Adam, clamping
//! negative entries to zero after every step.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingSet, Triplet, TripletSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SposeConfig {
    pub dims: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for SposeConfig {
    fn default() -> Self {
        Self {
            dims: 70,
            learning_rate: 1e-3,
            batch_size: 2048,
            epochs: 40,
            lambda: 0.01,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl SposeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::InvalidArgument("dims must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("init scale must be positive, got {}", self.init_scale)));
        }
        Ok(())
    }
}

/// Trained embedding plus the mean batch loss of every epoch.
#[derive(Debug, Clone)]
pub struct SposeModel<T = f64> {
    pub embedding: EmbeddingSet<T>,
    pub training_curve: Vec<f64>,
}

/// Objective split into its two terms; `total = cross_entropy + penalty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllParts<T> {
    pub total: T,
    pub cross_entropy: T,
    pub penalty: T,
}

fn check_triplets(n: usize, triplets: &[Triplet]) -> Result<()> {
    if triplets.is_empty() {
        return Err(Error::DegenerateInput("no triplets".into()));
    }
    match triplets.iter().find(|t| t.max_index() >= n) {
        Some(t) => Err(Error::Index(format!("triplet ({},{},{}) out of range for {n} objects", t.i, t.j, t.k))),
        None => Ok(()),
    }
}

fn dot<T: Real>(emb: &ArrayView2<'_, T>, a: usize, b: usize) -> T {
    emb.row(a).dot(&emb.row(b))
}

/// Pair similarities `[s_ij, s_ik, s_jk]` and the position of the chosen pair.
fn pair_sims<T: Real>(emb: &ArrayView2<'_, T>, t: &Triplet) -> ([T; 3], usize) {
    let s = [dot(emb, t.i, t.j), dot(emb, t.i, t.k), dot(emb, t.j, t.k)];
    let target = if t.odd == t.k {
        0
    } else if t.odd == t.j {
        1
    } else {
        2
    };
    (s, target)
}

/// `-s[target] + ln sum exp(s)`, shifted by the max so it stays finite.
fn triplet_loss<T: Real>(s: &[T; 3], target: usize) -> T {
    let m = s[0].max(s[1]).max(s[2]);
    let lse = m + s.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    lse - s[target]
}

fn penalty<T: Real>(emb: &ArrayView2<'_, T>) -> T {
    emb.rows()
        .into_iter()
        .map(|r| {
            let d = r.dot(&r).sqrt() - T::one();
            d * d
        })
        .sum()
}

/// Mean triplet cross-entropy plus the norm penalty.
pub fn triplet_nll<T: Real>(emb: ArrayView2<'_, T>, triplets: &[Triplet], lambda: T) -> Result<NllParts<T>> {
    check_triplets(emb.nrows(), triplets)?;
    let ce = triplets
        .iter()
        .map(|t| {
            let (s, target) = pair_sims(&emb, t);
            triplet_loss(&s, target)
        })
        .sum::<T>()
        / T::of(triplets.len() as f64);
    let pen = lambda * penalty(&emb);
    Ok(NllParts {
        total: ce + pen,
        cross_entropy: ce,
        penalty: pen,
    })
}

/// Analytic gradient of [`triplet_nll`] over `batch`.
pub fn spose_gradient<T: Real>(emb: ArrayView2<'_, T>, batch: &[Triplet], lambda: T) -> Result<Array2<T>> {
    check_triplets(emb.nrows(), batch)?;
    let mut grad = Array2::<T>::zeros(emb.raw_dim());
    let scale = T::one() / T::of(batch.len() as f64);
    for t in batch {
        let (s, target) = pair_sims(&emb, t);
        let m = s[0].max(s[1]).max(s[2]);
        let e = s.map(|v| (v - m).exp());
        let z = e[0] + e[1] + e[2];
        let w: [T; 3] = std::array::from_fn(|p| {
            let hit = if p == target { T::one() } else { T::zero() };
            (e[p] / z - hit) * scale
        });
        for (p, (a, b)) in [(t.i, t.j), (t.i, t.k), (t.j, t.k)].into_iter().enumerate() {
            let wp = w[p];
            let (ra, rb) = (emb.row(a), emb.row(b));
            Zip::from(grad.row_mut(a)).and(&rb).for_each(|g, &x| *g = *g + wp * x);
            Zip::from(grad.row_mut(b)).and(&ra).for_each(|g, &x| *g = *g + wp * x);
        }
    }
    if lambda > T::zero() {
        let two_l = lambda + lambda;
        for (mut g, x) in grad.rows_mut().into_iter().zip(emb.rows()) {
            let norm = x.dot(&x).sqrt();
            if norm > T::zero() {
                let c = two_l * (T::one() - T::one() / norm);
                Zip::from(&mut g).and(&x).for_each(|g, &xv| *g = *g + c * xv);
            }
        }
    }
    Ok(grad)
}

/// Percentage of triplets whose highest-similarity pair is the chosen pair.
/// A tie for the highest similarity counts as a miss.
pub fn triplet_accuracy<T: Real>(emb: ArrayView2<'_, T>, triplets: &[Triplet]) -> Result<f64> {
    check_triplets(emb.nrows(), triplets)?;
    let hits = triplets
        .iter()
        .filter(|t| {
            let (s, target) = pair_sims(&emb, t);
            (0..3).filter(|&p| p != target).all(|p| s[target] > s[p])
        })
        .count();
    Ok(100.0 * hits as f64 / triplets.len() as f64)
}

/// Objects that appear in no triplet; their rows only ever see the penalty.
pub fn unused_objects(triplets: &[Triplet], n_objects: usize) -> Vec<usize> {
    let mut seen = vec![false; n_objects];
    for t in triplets {
        for o in [t.i, t.j, t.k] {
            if o < n_objects {
                seen[o] = true;
            }
        }
    }
    (0..n_objects).filter(|&o| !seen[o]).collect()
}

fn object_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

struct Adam<T> {
    m: Array2<T>,
    v: Array2<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shape: (usize, usize)) -> Self {
        Self { m: Array2::zeros(shape), v: Array2::zeros(shape), step: 0 }
    }

    fn update(&mut self, params: &mut Array2<T>, grad: &Array2<T>, lr: T) {
        self.step += 1;
        let (b1, b2) = (T::of(Self::BETA1), T::of(Self::BETA2));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let eps = T::of(Self::EPS);
        Zip::from(params)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|x, m, v, &g| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let step = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                *x = (*x - step).max(T::zero());
            });
    }
}

fn train_on<T: Real>(triplets: &[Triplet], n_objects: usize, cfg: &SposeConfig) -> Result<SposeModel<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_scale).expect("validated scale");
    let mut x = Array2::from_shape_simple_fn((n_objects, cfg.dims), || T::of(normal.sample(&mut rng).abs()));
    let mut adam = Adam::new(x.dim());
    let lr = T::of(cfg.learning_rate);
    let lambda = T::of(cfg.lambda);
    let mut order: Vec<Triplet> = triplets.to_vec();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
        for batch in order.chunks(cfg.batch_size) {
            let loss = triplet_nll(x.view(), batch, lambda)?.total;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            losses.push(loss.as_f64());
            let grad = spose_gradient(x.view(), batch, lambda)?;
            adam.update(&mut x, &grad, lr);
        }
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        if !mean.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        curve.push(mean);
    }
    Ok(SposeModel {
        embedding: EmbeddingSet::new(object_ids(n_objects), x)?,
        training_curve: curve,
    })
}

/// Trains an embedding for objects `0..n_objects` from the given triplets.
pub fn train_spose<T: Real>(triplets: &TripletSet, n_objects: usize, cfg: &SposeConfig) -> Result<SposeModel<T>> {
    cfg.validate()?;
    if n_objects == 0 {
        return Err(Error::InvalidArgument("n_objects must be at least 1".into()));
    }
    check_triplets(n_objects, &triplets.triplets)?;
    train_on(&triplets.triplets, n_objects, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTrial {
    pub lambda: f64,
    /// Held-out cross-entropy without the penalty; `None` if training diverged.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LambdaSearch<T = f64> {
    pub best_lambda: f64,
    /// Model of the selected trial, trained on the training split.
    pub model: SposeModel<T>,
    pub trials: Vec<LambdaTrial>,
}

/// Default log-uniform search interval for lambda.
pub const LAMBDA_RANGE: (f64, f64) = (1e-4, 1e1);

/// Splits the triplets 90/10 with a seeded shuffle; the validation part has at least one triplet.
pub fn train_validation_split(triplets: &[Triplet], seed: u64) -> (Vec<Triplet>, Vec<Triplet>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut shuffled = triplets.to_vec();
    shuffled.shuffle(&mut rng);
    let n_val = (shuffled.len() / 10).max(1);
    let train = shuffled.split_off(n_val);
    (train, shuffled)
}

/// Random search for lambda. Every trial trains with `cfg.seed` on the same
/// split, so trials differ only in lambda; ties go to the earlier trial.
pub fn lambda_search<T: Real>(
    triplets: &TripletSet,
    n_objects: usize,
    cfg: &SposeConfig,
    range: (f64, f64),
    n_trials: usize,
) -> Result<LambdaSearch<T>> {
    cfg.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let (lo, hi) = range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad lambda range [{lo}, {hi}]")));
    }
    if triplets.len() < 2 {
        return Err(Error::DegenerateInput("need at least two triplets to hold one out".into()));
    }
    check_triplets(n_objects, &triplets.triplets)?;
    let (train, val) = train_validation_split(&triplets.triplets, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let lambdas: Vec<f64> = (0..n_trials)
        .map(|_| (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp().clamp(lo, hi))
        .collect();
    let outcomes: Vec<Option<(f64, SposeModel<T>)>> = lambdas
        .par_iter()
        .map(|&lambda| {
            let trial_cfg = SposeConfig { lambda, ..*cfg };
            let model = train_on::<T>(&train, n_objects, &trial_cfg).ok()?;
            let score = triplet_nll(model.embedding.matrix().view(), &val, T::zero()).ok()?.cross_entropy.as_f64();
            score.is_finite().then_some((score, model))
        })
        .collect();
    let trials: Vec<LambdaTrial> = lambdas
        .iter()
        .zip(&outcomes)
        .map(|(&lambda, o)| LambdaTrial { lambda, validation_loss: o.as_ref().map(|(s, _)| *s) })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (t, o) in outcomes.iter().enumerate() {
        if let Some((s, _)) = o {
            if best.is_none_or(|(_, b)| *s < b) {
                best = Some((t, *s));
            }
        }
    }
    let (idx, _) = best.ok_or_else(|| Error::SearchFailed(format!("all {n_trials} lambda trials diverged")))?;
    let model = outcomes.into_iter().nth(idx).flatten().map(|(_, m)| m).expect("selected trial has a model");
    Ok(LambdaSearch { best_lambda: lambdas[idx], model, trials })
}

/// Row norms; handy for checking how well the penalty held.
pub fn row_norms<T: Real>(emb: ArrayView2<'_, T>) -> Array1<T> {
    emb.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}
