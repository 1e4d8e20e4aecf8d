//! Representational dissimilarity matrices and conventional RSA.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingSet, LabeledMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// How pairwise dissimilarities are derived from embedding rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `1 - cos(x_i, x_j)`.
    Cosine,
    /// `s_max - x_i . x_j` off the diagonal, with `s_max` the largest off-diagonal dot product.
    DotShift,
    /// `||x_i - x_j||_2`.
    Euclidean,
}

/// Symmetric, zero-diagonal, nonnegative dissimilarity matrix over labeled objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm<T = f64> {
    ids: Vec<String>,
    values: Array2<T>,
}

fn symmetry_tolerance<T: Real>(values: &Array2<T>) -> T {
    let scale = values.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    T::of(1e-12).max(T::epsilon() * T::of(8.0)) * scale
}

impl<T: Real> Rdm<T> {
    /// Validates the RDM invariants. Diagonal entries and negative entries
    /// within rounding tolerance of zero are snapped to exactly zero.
    pub fn new(ids: Vec<String>, mut values: Array2<T>) -> Result<Self> {
        let (n, m) = values.dim();
        if n != m || n == 0 {
            return Err(Error::Shape(format!("RDM must be square and nonempty, got {n}x{m}")));
        }
        if ids.len() != n {
            return Err(Error::Shape(format!("{} ids for a {n}x{n} RDM", ids.len())));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(id) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(id.clone()));
        }
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("RDM entry ({r},{c}) = {v}")));
        }
        let tol = symmetry_tolerance(&values);
        for i in 0..n {
            if values[[i, i]].abs() > tol {
                return Err(Error::Numeric(format!("nonzero diagonal at {i}: {}", values[[i, i]])));
            }
            values[[i, i]] = T::zero();
            for j in 0..n {
                let v = values[[i, j]];
                if v < -tol {
                    return Err(Error::Numeric(format!("negative dissimilarity at ({i},{j}): {v}")));
                }
                if v < T::zero() {
                    values[[i, j]] = T::zero();
                }
                if (v - values[[j, i]]).abs() > tol {
                    return Err(Error::Numeric(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { ids, values })
    }

    /// Builds an RDM from a loaded labeled matrix whose rows and columns must carry the same ids.
    pub fn from_labeled(m: LabeledMatrix<T>) -> Result<Self> {
        if m.row_ids != m.col_ids {
            return Err(Error::Alignment("RDM row and column ids differ".into()));
        }
        Self::new(m.row_ids, m.values)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Mean of the strictly upper-triangular entries (0 when n = 1).
    pub fn mean_dissimilarity(&self) -> T {
        let upper = upper_triangle(&self.values);
        if upper.is_empty() {
            return T::zero();
        }
        upper.iter().copied().sum::<T>() / T::of(upper.len() as f64)
    }

    /// Reorders objects: entry `(a, b)` of the result is entry `(perm[a], perm[b])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut check = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut check[p], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let values = Array2::from_shape_fn((n, n), |(a, b)| self.values[[perm[a], perm[b]]]);
        let ids = perm.iter().map(|&p| self.ids[p].clone()).collect();
        Ok(Self { ids, values })
    }
}

fn dot<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Computes the RDM of an embedding set under `measure`.
pub fn compute_rdm<T: Real>(emb: &EmbeddingSet<T>, measure: Measure) -> Result<Rdm<T>> {
    let x = emb.matrix();
    let n = x.nrows();
    let mut d = Array2::<T>::zeros((n, n));
    match measure {
        Measure::Cosine => {
            let norms: Vec<T> = x.axis_iter(Axis(0)).map(|r| dot(r, r).sqrt()).collect();
            if let Some(i) = norms.iter().position(|v| *v == T::zero()) {
                return Err(Error::Numeric(format!(
                    "zero-norm embedding `{}` under cosine",
                    emb.ids()[i]
                )));
            }
            let gram = x.dot(&x.t());
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let c = gram[[i, j]] / (norms[i] * norms[j]);
                        d[[i, j]] = (T::one() - c).max(T::zero()).min(T::of(2.0));
                    }
                }
            }
        }
        Measure::DotShift => {
            let gram = x.dot(&x.t());
            let mut s_max = T::neg_infinity();
            for i in 0..n {
                for j in 0..n {
                    if i != j && gram[[i, j]] > s_max {
                        s_max = gram[[i, j]];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        d[[i, j]] = s_max - gram[[i, j]];
                    }
                }
            }
        }
        Measure::Euclidean => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = x
                        .row(i)
                        .iter()
                        .zip(x.row(j).iter())
                        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
                        .sqrt();
                    d[[i, j]] = v;
                    d[[j, i]] = v;
                }
            }
        }
    }
    let half = T::of(0.5);
    let sym = (&d + &d.t()).mapv(|v| v * half);
    Rdm::new(emb.ids().to_vec(), sym)
}

/// Strictly upper-triangular entries in row-major order.
pub fn upper_triangle<T: Real>(m: &Array2<T>) -> Vec<T> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..m.ncols() {
            out.push(m[[i, j]]);
        }
    }
    out
}

/// Pearson correlation of two equal-length samples.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} samples", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput("need at least two samples".into()));
    }
    let len = T::of(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / len;
    let my = y.iter().copied().sum::<T>() / len;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::DegenerateInput("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// Conventional RSA: Pearson correlation of the two RDMs' upper triangles
/// under the fixed object-to-object mapping given by identical id order.
pub fn rsa_pearson<T: Real>(a: &Rdm<T>, b: &Rdm<T>) -> Result<T> {
    if a.ids() != b.ids() {
        return Err(Error::Alignment("RDMs must list the same objects in the same order".into()));
    }
    if a.len() < 3 {
        return Err(Error::DegenerateInput(format!("RSA needs n >= 3, got {}", a.len())));
    }
    pearson(&upper_triangle(a.values()), &upper_triangle(b.values()))
}
