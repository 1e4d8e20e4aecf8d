//! Entropic Gromov-Wasserstein transport between two RDMs.
//!
//! The outer loop repeatedly linearizes the squared-loss GW objective around
//! the current plan and solves the resulting entropic OT problem with a
//! log-stabilized Sinkhorn projection:
//!
//! ```text
//! C(G)  = (Da o Da) r 1^T + 1 c^T (Db o Db)^T - 2 Da G Db^T      (r, c = marginals of G)
//! G'    = argmin <C(G), G'> - eps H(G')   s.t. G' 1 = p, G'^T 1 = q
//! ```
//!
//! `<C(G), G>` equals the quadruple sum `sum (Da_ij - Db_kl)^2 G_ik G_jl`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdm::Rdm;
use crate::scalar::{logsumexp_by, Real};

/// Nonnegative coupling with its prescribed row and column marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T = f64> {
    values: Array2<T>,
    p: Array1<T>,
    q: Array1<T>,
}

impl<T: Real> TransportPlan<T> {
    pub fn new(values: Array2<T>, p: Array1<T>, q: Array1<T>) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 || p.len() != n || q.len() != m {
            return Err(Error::Shape(format!(
                "{n}x{m} plan with marginals of length {} and {}",
                p.len(),
                q.len()
            )));
        }
        if values.iter().chain(p.iter()).chain(q.iter()).any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::Numeric("plan entries and marginals must be finite and nonnegative".into()));
        }
        Ok(Self { values, p, q })
    }

    /// Wraps a matrix, taking its own row and column sums as the marginals.
    pub fn from_matrix(values: Array2<T>) -> Result<Self> {
        let p = values.sum_axis(ndarray::Axis(1));
        let q = values.sum_axis(ndarray::Axis(0));
        Self::new(values, p, q)
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn p(&self) -> &Array1<T> {
        &self.p
    }

    pub fn q(&self) -> &Array1<T> {
        &self.q
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    /// Largest absolute deviation of any row or column sum from its marginal.
    pub fn max_marginal_violation(&self) -> T {
        marginal_violation(self.values.view(), self.p.view(), self.q.view())
    }

    /// Absolute deviation of the total mass from one.
    pub fn mass_violation(&self) -> T {
        (self.values.iter().copied().sum::<T>() - T::one()).abs()
    }
}

fn marginal_violation<T: Real>(g: ArrayView2<'_, T>, p: ArrayView1<'_, T>, q: ArrayView1<'_, T>) -> T {
    let mut worst = T::zero();
    let mut cols = vec![T::zero(); g.ncols()];
    for (row, &pi) in g.rows().into_iter().zip(p.iter()) {
        let mut s = T::zero();
        for (acc, &v) in cols.iter_mut().zip(row.iter()) {
            s = s + v;
            *acc = *acc + v;
        }
        worst = worst.max((s - pi).abs());
    }
    for (c, &qj) in cols.iter().zip(q.iter()) {
        worst = worst.max((*c - qj).abs());
    }
    worst
}

/// Uniform probability vector of length `n`.
pub fn uniform_marginal<T: Real>(n: usize) -> Array1<T> {
    Array1::from_elem(n, T::one() / T::of(n as f64))
}

const INIT_TOL: f64 = 1e-10;
const INIT_MAX_ITER: usize = 100_000;

/// Random initial plan: iid `Uniform[0, 1)` entries scaled to uniform marginals
/// by alternating row/column normalization until the violation is below `1e-10`.
pub fn init_plan<T: Real>(n: usize, m: usize, seed: u64) -> TransportPlan<T> {
    assert!(n >= 1 && m >= 1, "plan dimensions must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Array2::from_shape_fn((n, m), |_| T::of(rng.random::<f64>()));
    let p = uniform_marginal::<T>(n);
    let q = uniform_marginal::<T>(m);
    let tol = T::of(INIT_TOL).max(T::tolerance_floor() * T::of(10.0));
    for _ in 0..INIT_MAX_ITER {
        for (mut row, &pi) in g.rows_mut().into_iter().zip(p.iter()) {
            let s = row.iter().copied().sum::<T>();
            row.mapv_inplace(|v| v * pi / s);
        }
        let cols = g.sum_axis(ndarray::Axis(0));
        for mut row in g.rows_mut() {
            Zip::from(&mut row).and(&cols).and(&q).for_each(|v, &c, &qj| *v = *v * qj / c);
        }
        if marginal_violation(g.view(), p.view(), q.view()) < tol {
            break;
        }
    }
    TransportPlan { values: g, p, q }
}

fn check_cost_shapes<T: Real>(da: &Rdm<T>, db: &Rdm<T>, plan: &TransportPlan<T>) -> Result<()> {
    let (n, m) = plan.dim();
    if da.len() != n || db.len() != m {
        return Err(Error::Shape(format!(
            "plan is {n}x{m} but RDMs are {}x{} and {}x{}",
            da.len(),
            da.len(),
            db.len(),
            db.len()
        )));
    }
    Ok(())
}

/// `C_ik = sum_{j,l} (Da_ij - Db_kl)^2 G_jl` via the squared-loss decomposition.
pub(crate) fn gw_cost_matrix<T: Real>(da: ArrayView2<'_, T>, db: ArrayView2<'_, T>, g: ArrayView2<'_, T>) -> Array2<T> {
    let rows = g.sum_axis(ndarray::Axis(1));
    let cols = g.sum_axis(ndarray::Axis(0));
    let a_term = da.mapv(|v| v * v).dot(&rows);
    let b_term = db.mapv(|v| v * v).dot(&cols);
    let cross = da.dot(&g).dot(&db.t());
    let two = T::of(2.0);
    let mut c = cross;
    for (i, mut row) in c.rows_mut().into_iter().enumerate() {
        let ai = a_term[i];
        Zip::from(&mut row).and(&b_term).for_each(|v, &bk| *v = ai + bk - two * *v);
    }
    c
}

/// Linearized GW cost of `plan` between `da` (source) and `db` (target).
pub fn gw_cost<T: Real>(da: &Rdm<T>, db: &Rdm<T>, plan: &TransportPlan<T>) -> Result<Array2<T>> {
    check_cost_shapes(da, db, plan)?;
    Ok(gw_cost_matrix(da.values().view(), db.values().view(), plan.values().view()))
}

fn frobenius_inner<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc = acc + *x * *y;
    }
    acc
}

/// Unregularized GW objective of a fixed plan. Clamped at zero against rounding.
pub fn plain_gwd<T: Real>(da: &Rdm<T>, db: &Rdm<T>, plan: &TransportPlan<T>) -> Result<T> {
    let c = gw_cost(da, db, plan)?;
    Ok(frobenius_inner(c.view(), plan.values().view()).max(T::zero()))
}

/// Shannon entropy `-sum G ln G` with `0 ln 0 = 0`.
pub fn entropy<T: Real>(plan: &TransportPlan<T>) -> T {
    entropy_of(plan.values().view())
}

fn entropy_of<T: Real>(g: ArrayView2<'_, T>) -> T {
    let mut h = T::zero();
    for &v in g.iter() {
        if v > T::zero() {
            h = h - v * v.ln();
        }
    }
    h
}

/// Stopping rule for the Sinkhorn projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    /// Maximum absolute marginal violation accepted.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 10_000 }
    }
}

/// Dual potentials `(f, g)`; the plan is `exp((f_i + g_j - C_ij) / eps)`.
#[derive(Debug, Clone)]
struct Potentials<T> {
    f: Array1<T>,
    g: Array1<T>,
}

struct Projection<T> {
    plan: Array2<T>,
    potentials: Potentials<T>,
    iterations: usize,
}

/// Dot product with eight fixed accumulators; the summation order depends
/// only on the length, so results are reproducible.
fn lane_dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Largest `|ln u|` tolerated before the scalings are folded into the potentials.
const ABSORB_LN: f64 = 30.0;
/// Ratio between successive epsilons of the cold-start schedule.
const ANNEAL_FACTOR: f64 = 4.0;
const ANNEAL_STAGE_ITER: usize = 1000;

/// Entropic OT solver working on an absorbed kernel `K = exp((f + g - C) / eps)`
/// with scaling vectors `u`, `v` that are folded back into the log-domain
/// potentials whenever they leave `[e^-30, e^30]`.
#[derive(Clone)]
struct LogSinkhorn<'a, T> {
    cost: ArrayView2<'a, T>,
    eps: T,
    p: ArrayView1<'a, T>,
    q: ArrayView1<'a, T>,
    log_p: Array1<T>,
    log_q: Array1<T>,
}

impl<'a, T: Real> LogSinkhorn<'a, T> {
    fn new(cost: ArrayView2<'a, T>, eps: T, p: ArrayView1<'a, T>, q: ArrayView1<'a, T>) -> Self {
        Self {
            cost,
            eps,
            p,
            q,
            log_p: p.mapv(|v| v.ln()),
            log_q: q.mapv(|v| v.ln()),
        }
    }

    /// One exact log-domain update of `f` then `g`.
    fn log_update(&self, pot: &mut Potentials<T>) {
        let (n, m) = self.cost.dim();
        let eps = self.eps;
        for i in 0..n {
            let row = self.cost.row(i);
            let lse = logsumexp_by(m, |j| (pot.g[j] - row[j]) / eps);
            pot.f[i] = eps * (self.log_p[i] - lse);
        }
        for j in 0..m {
            let lse = logsumexp_by(n, |i| (pot.f[i] - self.cost[[i, j]]) / eps);
            pot.g[j] = eps * (self.log_q[j] - lse);
        }
    }

    fn kernel(&self, pot: &Potentials<T>) -> Array2<T> {
        let eps = self.eps;
        let mut k = self.cost.to_owned();
        for (i, mut row) in k.rows_mut().into_iter().enumerate() {
            let fi = pot.f[i];
            Zip::from(&mut row).and(&pot.g).for_each(|c, &gj| *c = ((fi + gj - *c) / eps).exp());
        }
        k
    }

    fn kernel_is_usable(k: &Array2<T>) -> bool {
        if k.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let rows_ok = k.rows().into_iter().all(|r| r.iter().any(|v| *v > T::zero()));
        let cols = k.sum_axis(ndarray::Axis(0));
        rows_ok && cols.iter().all(|c| *c > T::zero())
    }

    fn absorb(&self, pot: &mut Potentials<T>, u: &mut Array1<T>, v: &mut Array1<T>) {
        let eps = self.eps;
        Zip::from(&mut pot.f).and(&*u).for_each(|f, &x| *f = *f + eps * x.ln());
        Zip::from(&mut pot.g).and(&*v).for_each(|g, &x| *g = *g + eps * x.ln());
        u.fill(T::one());
        v.fill(T::one());
    }

    /// Cold-start potentials from a geometric epsilon schedule that starts at
    /// the cost range and ends one step above `self.eps`. Small epsilons
    /// converge far faster from these than from zero potentials.
    fn annealed_start(&self, opts: &SinkhornOptions) -> (Potentials<T>, usize) {
        let (n, m) = self.cost.dim();
        let mut pot = Potentials { f: Array1::zeros(n), g: Array1::zeros(m) };
        let (lo, hi) = self
            .cost
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        let factor = T::of(ANNEAL_FACTOR);
        let mut stages = Vec::new();
        let mut e = hi - lo;
        while e > self.eps * factor {
            stages.push(e);
            e = e / factor;
        }
        let stage_opts = SinkhornOptions {
            tol: opts.tol.max(1e-6),
            max_iter: opts.max_iter.min(ANNEAL_STAGE_ITER),
        };
        let mut iterations = 0;
        for e in stages {
            let stage = LogSinkhorn { eps: e, ..self.clone() };
            let mut warm = pot.clone();
            stage.log_update(&mut warm);
            match stage.solve(Some(warm), &stage_opts) {
                Ok(proj) => {
                    iterations += proj.iterations;
                    pot = proj.potentials;
                }
                Err(_) => break,
            }
        }
        (pot, iterations)
    }

    fn diverged(iterations: usize, what: &str) -> Error {
        Error::NumericalDivergence {
            iterations,
            detail: format!("non-finite Sinkhorn {what}"),
        }
    }

    fn solve(&self, warm: Option<Potentials<T>>, opts: &SinkhornOptions) -> Result<Projection<T>> {
        let (n, m) = self.cost.dim();
        let tol = T::of(opts.tol);
        let (mut pot, mut iterations) = match warm {
            Some(p) => (p, 0),
            None => {
                let (mut p, it) = self.annealed_start(opts);
                self.log_update(&mut p);
                (p, it)
            }
        };
        let mut k = self.kernel(&pot);
        if !Self::kernel_is_usable(&k) {
            self.log_update(&mut pot);
            k = self.kernel(&pot);
        }
        if pot.f.iter().chain(pot.g.iter()).any(|x| !x.is_finite()) || !Self::kernel_is_usable(&k) {
            return Err(Self::diverged(0, "potentials"));
        }

        let mut u = Array1::<T>::ones(n);
        let mut v = Array1::<T>::ones(m);
        let mut kv = Array1::<T>::zeros(n);
        let mut ktu = Array1::<T>::zeros(m);
        let absorb_at = T::of(ABSORB_LN);
        let first = iterations;
        let mut capped = false;
        loop {
            // row sums of diag(u) K diag(v)
            for (i, row) in k.rows().into_iter().enumerate() {
                kv[i] = match (row.as_slice(), v.as_slice()) {
                    (Some(r), Some(vs)) => lane_dot(r, vs),
                    _ => row.iter().zip(v.iter()).fold(T::zero(), |acc, (&kij, &vj)| acc + kij * vj),
                };
            }
            let mut viol = T::zero();
            for i in 0..n {
                viol = viol.max((u[i] * kv[i] - self.p[i]).abs());
            }
            if iterations == first {
                ktu.fill(T::zero());
                for (row, &ui) in k.rows().into_iter().zip(u.iter()) {
                    Zip::from(&mut ktu).and(&row).for_each(|acc, &kij| *acc = *acc + ui * kij);
                }
                for j in 0..m {
                    viol = viol.max((v[j] * ktu[j] - self.q[j]).abs());
                }
            }
            if viol < tol {
                break;
            }
            if iterations - first >= opts.max_iter {
                capped = true;
                break;
            }
            iterations += 1;

            Zip::from(&mut u).and(&kv).and(&self.p).for_each(|u, &r, &pi| *u = pi / r);
            ktu.fill(T::zero());
            for (row, &ui) in k.rows().into_iter().zip(u.iter()) {
                Zip::from(&mut ktu).and(&row).for_each(|acc, &kij| *acc = *acc + ui * kij);
            }
            Zip::from(&mut v).and(&ktu).and(&self.q).for_each(|v, &c, &qj| *v = qj / c);

            let bad = u.iter().chain(v.iter()).any(|x| !x.is_finite() || *x <= T::zero());
            if bad {
                // scalings under/overflowed: restart from an exact log-domain step
                u.fill(T::one());
                v.fill(T::one());
                self.log_update(&mut pot);
                if pot.f.iter().chain(pot.g.iter()).any(|x| !x.is_finite()) {
                    return Err(Self::diverged(iterations, "potentials"));
                }
                k = self.kernel(&pot);
                if !Self::kernel_is_usable(&k) {
                    return Err(Self::diverged(iterations, "kernel"));
                }
                continue;
            }
            let extreme = u.iter().chain(v.iter()).any(|x| x.ln().abs() > absorb_at);
            if extreme {
                self.absorb(&mut pot, &mut u, &mut v);
                k = self.kernel(&pot);
                if !Self::kernel_is_usable(&k) {
                    self.log_update(&mut pot);
                        k = self.kernel(&pot);
                    if !Self::kernel_is_usable(&k) {
                        return Err(Self::diverged(iterations, "kernel"));
                    }
                }
            }
        }

        for (i, mut row) in k.rows_mut().into_iter().enumerate() {
            let ui = u[i];
            Zip::from(&mut row).and(&v).for_each(|x, &vj| *x = ui * *x * vj);
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Self::diverged(iterations, "plan"));
        }
        if capped {
            round_to_marginals(&mut k, self.p, self.q);
        }
        self.absorb(&mut pot, &mut u, &mut v);
        Ok(Projection { plan: k, potentials: pot, iterations })
    }
}

/// Moves a nearly feasible plan onto the transport polytope of `(p, q)`:
/// scale down overfull rows, then overfull columns, then spread the missing
/// mass as a rank-one correction. The L1 change is at most twice the
/// marginal error (Altschuler, Weed and Rigollet, 2017).
fn round_to_marginals<T: Real>(plan: &mut Array2<T>, p: ArrayView1<'_, T>, q: ArrayView1<'_, T>) {
    let rows = plan.sum_axis(Axis(1));
    for ((mut row, &r), &pi) in plan.rows_mut().into_iter().zip(&rows).zip(&p) {
        if r > pi {
            row.mapv_inplace(|x| x * (pi / r));
        }
    }
    let cols = plan.sum_axis(Axis(0));
    for ((mut col, &c), &qj) in plan.columns_mut().into_iter().zip(&cols).zip(&q) {
        if c > qj {
            col.mapv_inplace(|x| x * (qj / c));
        }
    }
    let err_r = &p - &plan.sum_axis(Axis(1));
    let err_c = &q - &plan.sum_axis(Axis(0));
    let total = err_c.sum();
    if total > T::zero() {
        for (mut row, &er) in plan.rows_mut().into_iter().zip(&err_r) {
            Zip::from(&mut row).and(&err_c).for_each(|x, &ec| *x = *x + er * ec / total);
        }
    }
}

fn validate_projection_inputs<T: Real>(
    cost: ArrayView2<'_, T>,
    eps: T,
    p: ArrayView1<'_, T>,
    q: ArrayView1<'_, T>,
) -> Result<()> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 || p.len() != n || q.len() != m {
        return Err(Error::Shape(format!("{n}x{m} cost with marginals {} and {}", p.len(), q.len())));
    }
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive and finite, got {eps}")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("cost matrix has non-finite entries".into()));
    }
    if p.iter().chain(q.iter()).any(|x| !x.is_finite() || *x <= T::zero()) {
        return Err(Error::InvalidArgument("marginals must be strictly positive".into()));
    }
    Ok(())
}

/// Entropic OT projection: `argmin <cost, G> - eps H(G)` subject to marginals `p`, `q`.
pub fn sinkhorn_project<T: Real>(
    cost: ArrayView2<'_, T>,
    eps: T,
    p: ArrayView1<'_, T>,
    q: ArrayView1<'_, T>,
    opts: &SinkhornOptions,
) -> Result<TransportPlan<T>> {
    validate_projection_inputs(cost, eps, p, q)?;
    let proj = LogSinkhorn::new(cost, eps, p, q).solve(None, opts)?;
    Ok(TransportPlan {
        values: proj.plan,
        p: p.to_owned(),
        q: q.to_owned(),
    })
}

/// Outer-loop controls for [`entropic_gw`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative Frobenius change between successive plans that counts as converged.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// The first outer iterations use a decreasing epsilon, starting at the
    /// range of the initial cost matrix and multiplied by this factor each
    /// iteration until it reaches the target. Outside `(0, 1)` the target
    /// epsilon is used from the start.
    pub eps_decay: f64,
    pub inner: SinkhornOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-9,
            max_outer: 1000,
            eps_decay: 0.9,
            inner: SinkhornOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult<T = f64> {
    pub plan: TransportPlan<T>,
    /// `<C(G), G> - eps H(G)` at the returned plan.
    pub entropic_gwd: T,
    /// `<C(G), G>` at the returned plan.
    pub plain_gwd: T,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

/// Solves entropic GW from the random plan `init_plan(n, m, seed)`.
pub fn entropic_gw<T: Real>(
    da: &Rdm<T>,
    db: &Rdm<T>,
    eps: T,
    seed: u64,
    opts: &SolveOptions,
) -> Result<SolveResult<T>> {
    let init = init_plan::<T>(da.len(), db.len(), seed);
    entropic_gw_from(da, db, eps, init, opts)
}

/// Solves entropic GW starting from a caller-supplied plan.
pub fn entropic_gw_from<T: Real>(
    da: &Rdm<T>,
    db: &Rdm<T>,
    eps: T,
    init: TransportPlan<T>,
    opts: &SolveOptions,
) -> Result<SolveResult<T>> {
    check_cost_shapes(da, db, &init)?;
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive and finite, got {eps}")));
    }
    if !(opts.outer_tol > 0.0) || !(opts.inner.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let (dav, dbv) = (da.values().view(), db.values().view());
    let TransportPlan { values: mut plan, p, q } = init;
    let outer_tol = T::of(opts.outer_tol);
    let mut warm = None;
    let mut converged = false;
    let mut outer = 0;
    let mut inner_total = 0;
    let decay = opts.eps_decay;
    let annealing = decay > 0.0 && decay < 1.0;
    let mut stage_eps = None;
    while outer < opts.max_outer {
        outer += 1;
        let cost = gw_cost_matrix(dav, dbv, plan.view());
        if stage_eps.is_none() {
            let (lo, hi) = cost.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &c| (lo.min(c), hi.max(c)));
            stage_eps = Some(if annealing { (hi - lo).max(eps) } else { eps });
        }
        let e = stage_eps.unwrap();
        let solver = LogSinkhorn::new(cost.view(), e, p.view(), q.view());
        let proj = solver.solve(warm.take(), &opts.inner).map_err(|e| match e {
            Error::NumericalDivergence { iterations, detail } => Error::NumericalDivergence {
                iterations: inner_total + iterations,
                detail: format!("{detail} (outer iteration {outer})"),
            },
            other => other,
        })?;
        inner_total += proj.iterations;
        let mut diff = T::zero();
        let mut norm = T::zero();
        Zip::from(&proj.plan).and(&plan).for_each(|&a, &b| {
            diff = diff + (a - b) * (a - b);
            norm = norm + b * b;
        });
        plan = proj.plan;
        warm = Some(proj.potentials);
        if e > eps {
            // still annealing: no convergence test until the target epsilon is reached
            stage_eps = Some((e * T::of(decay)).max(eps));
            continue;
        }
        if diff.sqrt() < outer_tol * norm.sqrt() {
            converged = true;
            break;
        }
    }
    let cost = gw_cost_matrix(dav, dbv, plan.view());
    let plain = frobenius_inner(cost.view(), plan.view()).max(T::zero());
    let entropic = plain - eps * entropy_of(plan.view());
    Ok(SolveResult {
        plan: TransportPlan { values: plan, p, q },
        entropic_gwd: entropic,
        plain_gwd: plain,
        outer_iterations: outer,
        inner_iterations: inner_total,
        converged,
    })
}
