//! Ward agglomerative clustering, flat cuts, adjusted mutual information and
//! 2-D classical MDS coordinates.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryMap, EmbeddingSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One agglomeration step. Leaves are `0..n`; the cluster formed by merge `s`
/// gets id `n + s`. `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge<T = f64> {
    pub a: usize,
    pub b: usize,
    pub height: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram<T = f64> {
    n_leaves: usize,
    merges: Vec<Merge<T>>,
}

impl<T: Real> Dendrogram<T> {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// `n - 1` merges in order of non-decreasing height.
    pub fn merges(&self) -> &[Merge<T>] {
        &self.merges
    }
}

/// Flat cluster assignment with ids `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    /// Relabels arbitrary ids contiguously in order of first appearance.
    pub fn from_labels<L: Eq + std::hash::Hash>(raw: impl IntoIterator<Item = L>) -> Self {
        let mut seen = HashMap::new();
        let labels = raw
            .into_iter()
            .map(|l| {
                let next = seen.len();
                *seen.entry(l).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Keeps the listed positions, relabeling contiguously.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self::from_labels(keep.iter().map(|&i| self.labels[i]))
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the sets of `a` and `b`; the root becomes `a`'s root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[rb] = ra;
    }
}

fn squared_distances<T: Real>(x: ArrayView2<'_, T>) -> Array2<T> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let s = x.row(i).iter().zip(x.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}

/// Ward linkage of the rows of `x` by nearest-neighbor chain with the
/// Lance-Williams update on squared Euclidean distances.
pub fn ward_linkage_matrix<T: Real>(x: ArrayView2<'_, T>) -> Result<Dendrogram<T>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("Ward linkage needs at least 2 points, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("embedding has non-finite entries".into()));
    }
    let mut d = squared_distances(x);
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // (slot kept, slot retired, squared distance)
    let mut raw: Vec<(usize, usize, T)> = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    while raw.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster remains"));
        }
        let (x_slot, y_slot) = loop {
            let x = *chain.last().expect("chain is nonempty");
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            // prefer the previous chain element on ties so the chain always terminates
            let mut best = prev.map(|p| (p, d[[x, p]]));
            for k in (0..n).filter(|&k| active[k] && k != x) {
                if best.is_none_or(|(_, bd)| d[[x, k]] < bd) {
                    best = Some((k, d[[x, k]]));
                }
            }
            let (y, _) = best.expect("at least two active clusters");
            if Some(y) == prev {
                chain.pop();
                chain.pop();
                break (x.min(y), x.max(y));
            }
            chain.push(y);
        };
        let dij = d[[x_slot, y_slot]];
        let (ni, nj) = (T::of(size[x_slot] as f64), T::of(size[y_slot] as f64));
        for k in (0..n).filter(|&k| active[k] && k != x_slot && k != y_slot) {
            let nk = T::of(size[k] as f64);
            let v = ((ni + nk) * d[[x_slot, k]] + (nj + nk) * d[[y_slot, k]] - nk * dij) / (ni + nj + nk);
            d[[x_slot, k]] = v;
            d[[k, x_slot]] = v;
        }
        size[x_slot] += size[y_slot];
        active[y_slot] = false;
        raw.push((x_slot, y_slot, dij));
    }

    raw.sort_by(|a, b| a.2.partial_cmp(&b.2).expect("finite distances"));
    let mut uf = UnionFind::new(n);
    let mut cluster_of_root: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let merges = raw
        .into_iter()
        .enumerate()
        .map(|(step, (p, q, d2))| {
            let (rp, rq) = (uf.find(p), uf.find(q));
            let (ca, cb) = (cluster_of_root[rp], cluster_of_root[rq]);
            let merged = sizes[rp] + sizes[rq];
            uf.union(rp, rq);
            cluster_of_root[rp] = n + step;
            sizes[rp] = merged;
            Merge {
                a: ca.min(cb),
                b: ca.max(cb),
                height: d2.max(T::zero()).sqrt(),
                size: merged,
            }
        })
        .collect();
    Ok(Dendrogram { n_leaves: n, merges })
}

pub fn ward_linkage<T: Real>(emb: &EmbeddingSet<T>) -> Result<Dendrogram<T>> {
    ward_linkage_matrix(emb.matrix().view())
}

/// Flat clustering into `k` groups by undoing the last `k - 1` merges.
pub fn cut_tree<T: Real>(dend: &Dendrogram<T>, k: usize) -> Result<Partition> {
    let n = dend.n_leaves;
    if k == 0 || k > n {
        return Err(Error::Index(format!("cannot cut {n} leaves into {k} clusters")));
    }
    // leaf representative of every cluster id, so merges can be replayed on leaves
    let mut rep: Vec<usize> = (0..n).collect();
    let mut uf = UnionFind::new(n);
    for m in &dend.merges[..n - k] {
        let (ra, rb) = (rep[m.a], rep[m.b]);
        uf.union(ra, rb);
        rep.push(ra);
    }
    let roots: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    Ok(Partition::from_labels(roots))
}

fn contingency(u: &Partition, v: &Partition) -> (Vec<usize>, Vec<usize>, HashMap<(usize, usize), usize>) {
    let mut a = vec![0usize; u.n_clusters()];
    let mut b = vec![0usize; v.n_clusters()];
    let mut cells = HashMap::new();
    for (&x, &y) in u.labels.iter().zip(&v.labels) {
        a[x] += 1;
        b[y] += 1;
        *cells.entry((x, y)).or_insert(0) += 1;
    }
    (a, b, cells)
}

fn entropy_of_counts(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information (nats) of two partitions of the same objects.
pub fn mutual_information(u: &Partition, v: &Partition) -> Result<f64> {
    check_pair(u, v)?;
    let (a, b, cells) = contingency(u, v);
    let n = u.len() as f64;
    Ok(cells
        .iter()
        .map(|(&(i, j), &nij)| {
            let nij = nij as f64;
            nij / n * (n * nij / (a[i] as f64 * b[j] as f64)).ln()
        })
        .sum())
}

/// Expected mutual information under random relabeling with fixed cluster
/// sizes (hypergeometric model), summed exactly over all feasible cell counts.
pub fn expected_mutual_information(u: &Partition, v: &Partition) -> Result<f64> {
    check_pair(u, v)?;
    let (a, b, _) = contingency(u, v);
    let n = u.len();
    let mut ln_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in &a {
        for &bj in &b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = ln_fact[ai] + ln_fact[bj] + ln_fact[n - ai] + ln_fact[n - bj] - ln_fact[n];
            for nij in lo..=hi {
                let ln_p = fixed - ln_fact[nij] - ln_fact[ai - nij] - ln_fact[bj - nij] - ln_fact[n + nij - ai - bj];
                let x = nij as f64;
                emi += x / nf * (nf * x / (ai as f64 * bj as f64)).ln() * ln_p.exp();
            }
        }
    }
    Ok(emi)
}

fn check_pair(u: &Partition, v: &Partition) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("partitions of {} and {} objects", u.len(), v.len())));
    }
    if u.is_empty() {
        return Err(Error::Shape("empty partitions".into()));
    }
    Ok(())
}

/// True when the two partitions agree up to relabeling.
fn same_partition(u: &Partition, v: &Partition) -> bool {
    let (a, b, cells) = contingency(u, v);
    cells.len() == a.len() && cells.len() == b.len()
}

/// Adjusted mutual information `(I - E[I]) / (max(H(U), H(V)) - E[I])`.
/// Partitions that agree up to relabeling score exactly 1.
pub fn ami(u: &Partition, v: &Partition) -> Result<f64> {
    check_pair(u, v)?;
    if same_partition(u, v) {
        return Ok(1.0);
    }
    let (a, b, _) = contingency(u, v);
    let n = u.len() as f64;
    let h = entropy_of_counts(&a, n).max(entropy_of_counts(&b, n));
    let mi = mutual_information(u, v)?;
    let emi = expected_mutual_information(u, v)?;
    let denom = h - emi;
    if denom.abs() < 1e-15 {
        return Err(Error::DegenerateInput("AMI normalizer is zero".into()));
    }
    Ok((mi - emi) / denom)
}

/// Category partition of the labeled objects among `ids`, with their positions.
pub fn category_partition(ids: &[String], map: &CategoryMap) -> (Vec<usize>, Partition) {
    let (keep, cats): (Vec<usize>, Vec<&str>) = ids
        .iter()
        .enumerate()
        .filter_map(|(i, id)| map.get(id).map(|c| (i, c)))
        .unzip();
    (keep, Partition::from_labels(cats))
}

/// AMI between a clustering of all objects and the categories of the
/// labeled ones; unlabeled objects are left out of the comparison.
pub fn ami_against_categories(clusters: &Partition, ids: &[String], map: &CategoryMap) -> Result<f64> {
    if clusters.len() != ids.len() {
        return Err(Error::Shape(format!("{} cluster labels for {} ids", clusters.len(), ids.len())));
    }
    let (keep, cats) = category_partition(ids, map);
    if keep.is_empty() {
        return Err(Error::DegenerateInput("no object has a category".into()));
    }
    ami(&clusters.restrict(&keep), &cats)
}

/// Top eigenpairs of a symmetric positive semidefinite matrix by power
/// iteration with deflation.
fn top_eigenpairs(mut m: Array2<f64>, k: usize) -> Vec<(f64, Array1<f64>)> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(d) {
        let mut v = Array1::from_shape_fn(d, |i| 1.0 + (i as f64 + 1.0).sqrt().fract());
        v /= v.dot(&v).sqrt();
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = m.dot(&v);
            let norm = w.dot(&w).sqrt();
            if norm < 1e-300 {
                lambda = 0.0;
                break;
            }
            let next = w / norm;
            let delta = (&next - &v).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            v = next;
            lambda = v.dot(&m.dot(&v));
            if delta < 1e-13 {
                break;
            }
        }
        // fix the sign so the largest-magnitude component is positive
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.mapv_inplace(|x| -x);
        }
        let outer = v.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        m = m - outer * lambda;
        out.push((lambda.max(0.0), v));
    }
    out
}

/// Classical MDS of the Euclidean geometry of the rows: the coordinates on
/// the top `dims` principal axes of the centered embedding.
pub fn classical_mds<T: Real>(emb: &EmbeddingSet<T>, dims: usize) -> Result<Array2<f64>> {
    let x = emb.matrix().mapv(|v| v.as_f64());
    let n = x.nrows();
    if n == 0 {
        return Err(Error::DegenerateInput("empty embedding".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered);
    let mut coords = Array2::zeros((n, dims));
    for (c, (lambda, axis)) in top_eigenpairs(cov, dims).into_iter().enumerate() {
        if lambda > 0.0 {
            coords.column_mut(c).assign(&centered.dot(&axis));
        }
    }
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(x: Array2<f64>) -> EmbeddingSet {
        let ids = (0..x.nrows()).map(|i| i.to_string()).collect();
        EmbeddingSet::new(ids, x).unwrap()
    }

    /// O(n^3) greedy Ward from centroids: merge cost `2 na nb / (na + nb) |ca - cb|^2`.
    fn naive_ward(x: &Array2<f64>) -> Vec<(usize, usize, f64, usize)> {
        let n = x.nrows();
        let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
        let mut out = Vec::new();
        let centroid = |members: &[usize]| {
            let mut c = Array1::<f64>::zeros(x.ncols());
            for &m in members {
                c += &x.row(m);
            }
            c / members.len() as f64
        };
        for step in 0..n - 1 {
            let mut best = (f64::INFINITY, 0, 0);
            for p in 0..clusters.len() {
                for q in p + 1..clusters.len() {
                    let (na, nb) = (clusters[p].1.len() as f64, clusters[q].1.len() as f64);
                    let diff = centroid(&clusters[p].1) - centroid(&clusters[q].1);
                    let cost = 2.0 * na * nb / (na + nb) * diff.dot(&diff);
                    if cost < best.0 {
                        best = (cost, p, q);
                    }
                }
            }
            let (cost, p, q) = best;
            let (idq, mq) = clusters.remove(q);
            let (idp, mut mp) = clusters.remove(p);
            mp.extend(mq);
            out.push((idp.min(idq), idp.max(idq), cost.sqrt(), mp.len()));
            clusters.push((n + step, mp));
        }
        out
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random::<f64>())
    }

    #[test]
    fn dominant_gap_merges_first() {
        let dend = ward_linkage(&emb(array![[0.0], [1.0], [10.0]])).unwrap();
        let m = dend.merges();
        assert_eq!((m[0].a, m[0].b, m[0].size), (0, 1, 2));
        assert_eq!((m[1].a, m[1].b, m[1].size), (2, 3, 3));
        let p = cut_tree(&dend, 2).unwrap();
        assert_eq!(p.labels(), &[0, 0, 1]);
    }

    #[test]
    fn duplicate_points_merge_at_zero() {
        let dend = ward_linkage(&emb(array![[1.0, 2.0], [5.0, 5.0], [1.0, 2.0]])).unwrap();
        assert_eq!(dend.merges()[0].height, 0.0);
        assert_eq!((dend.merges()[0].a, dend.merges()[0].b), (0, 2));
    }

    #[test]
    fn needs_two_points() {
        assert!(matches!(ward_linkage(&emb(array![[1.0]])), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn matches_naive_on_12_by_3() {
        let x = random_points(12, 3, 99);
        let dend = ward_linkage(&emb(x.clone())).unwrap();
        for (got, want) in dend.merges().iter().zip(naive_ward(&x)) {
            assert_eq!((got.a, got.b, got.size), (want.0, want.1, want.3));
            assert!((got.height - want.2).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn nn_chain_equals_naive(n in 2usize..=15, d in 1usize..5, seed in 0u64..100_000) {
            let x = random_points(n, d, seed);
            let dend = ward_linkage(&emb(x.clone())).unwrap();
            let naive = naive_ward(&x);
            prop_assert_eq!(dend.merges().len(), n - 1);
            for (got, want) in dend.merges().iter().zip(&naive) {
                prop_assert_eq!((got.a, got.b, got.size), (want.0, want.1, want.3));
                prop_assert!((got.height - want.2).abs() < 1e-9);
            }
            for w in dend.merges().windows(2) {
                prop_assert!(w[0].height <= w[1].height);
            }
            for k in 1..=n {
                prop_assert_eq!(cut_tree(&dend, k).unwrap().n_clusters(), k);
            }
        }

        #[test]
        fn ami_symmetric_and_relabel_invariant(seed in 0u64..10_000, n in 4usize..40, ku in 1usize..5, kv in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<usize> = (0..n).map(|_| rng.random_range(0..ku)).collect();
            let v: Vec<usize> = (0..n).map(|_| rng.random_range(0..kv)).collect();
            let (pu, pv) = (Partition::from_labels(u.clone()), Partition::from_labels(v.clone()));
            if let Ok(a) = ami(&pu, &pv) {
                prop_assert!(a <= 1.0 + 1e-12);
                prop_assert!((a - ami(&pv, &pu).unwrap()).abs() < 1e-12);
                let shifted = Partition::from_labels(u.iter().map(|l| (l + 3) % ku.max(1) + 10));
                prop_assert!((a - ami(&shifted, &pv).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cut_extremes() {
        let dend = ward_linkage(&emb(random_points(7, 2, 1))).unwrap();
        assert_eq!(cut_tree(&dend, 1).unwrap().labels(), &[0; 7]);
        assert_eq!(cut_tree(&dend, 7).unwrap().labels(), &[0, 1, 2, 3, 4, 5, 6]);
        assert!(matches!(cut_tree(&dend, 0), Err(Error::Index(_))));
        assert!(matches!(cut_tree(&dend, 8), Err(Error::Index(_))));
    }

    #[test]
    fn ami_identical_is_one() {
        let u = Partition::from_labels([0, 0, 1, 2, 2]);
        let v = Partition::from_labels([7, 7, 3, 5, 5]);
        assert_eq!(ami(&u, &v).unwrap(), 1.0);
        let single = Partition::from_labels([0, 0, 0]);
        assert_eq!(ami(&single, &single).unwrap(), 1.0);
    }

    /// E[I] by averaging I over every permutation of `v`'s labels.
    fn brute_force_emi(u: &[usize], v: &[usize]) -> f64 {
        fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.to_vec();
                let head = rest.remove(i);
                for mut p in permutations(&rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let pu = Partition::from_labels(u.iter().copied());
        let all = permutations(v);
        all.iter()
            .map(|p| mutual_information(&pu, &Partition { labels: p.clone() }).unwrap())
            .sum::<f64>()
            / all.len() as f64
    }

    #[test]
    fn crossed_example_against_enumeration() {
        let u = [0, 0, 1, 1];
        let v = [0, 1, 0, 1];
        let emi = brute_force_emi(&u, &v);
        let (pu, pv) = (Partition::from_labels(u), Partition::from_labels(v));
        assert!((expected_mutual_information(&pu, &pv).unwrap() - emi).abs() < 1e-12);
        let expected = (0.0 - emi) / (2f64.ln() - emi);
        let got = ami(&pu, &pv).unwrap();
        assert!(got < 0.0);
        assert!((got - expected).abs() < 1e-12);
        assert!((got + 0.5).abs() < 1e-12);
    }

    #[test]
    fn emi_matches_enumeration_on_uneven_sizes() {
        let u = [0, 0, 0, 1, 1, 2, 2];
        let v = [0, 1, 1, 1, 0, 0, 1];
        let pu = Partition::from_labels(u);
        let pv = Partition::from_labels(v);
        assert!((expected_mutual_information(&pu, &pv).unwrap() - brute_force_emi(&u, &v)).abs() < 1e-12);
    }

    #[test]
    fn random_partitions_have_near_zero_ami() {
        let mean = (0..50u64)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let u = Partition::from_labels((0..200).map(|_| rng.random_range(0..5)).collect::<Vec<usize>>());
                let v = Partition::from_labels((0..200).map(|_| rng.random_range(0..5)).collect::<Vec<usize>>());
                ami(&u, &v).unwrap()
            })
            .sum::<f64>()
            / 50.0;
        assert!(mean.abs() < 0.1, "{mean}");
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let u = Partition::from_labels([0, 1]);
        let v = Partition::from_labels([0, 1, 1]);
        assert!(matches!(ami(&u, &v), Err(Error::Shape(_))));
    }

    #[test]
    fn categories_skip_unlabeled() {
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut map = CategoryMap::new();
        map.insert("a", "x").unwrap();
        map.insert("b", "x").unwrap();
        map.insert("d", "y").unwrap();
        let clusters = Partition::from_labels([0, 0, 1, 1]);
        assert_eq!(ami_against_categories(&clusters, &ids, &map).unwrap(), 1.0);
    }

    #[test]
    fn mds_recovers_planar_layout() {
        // points on a plane embedded in 3-D: distances in MDS coordinates are preserved
        let x = array![[0.0, 0.0, 1.0], [3.0, 0.0, 1.0], [0.0, 4.0, 1.0], [3.0, 4.0, 1.0], [1.0, 1.0, 1.0]];
        let c = classical_mds(&emb(x.clone()), 2).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dx = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                let dc = (&c.row(i) - &c.row(j)).mapv(|v| v * v).sum().sqrt();
                assert!((dx - dc).abs() < 1e-9, "{dx} vs {dc}");
            }
        }
        assert!(c.sum_axis(Axis(0)).iter().all(|s| s.abs() < 1e-9));
    }
}
