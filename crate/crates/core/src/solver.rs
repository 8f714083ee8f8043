//! Deterministic annealing: the fixed-point updates at a single annealing
//! parameter, the outer annealing loop and the descent/scaling diagnostics.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dual;
use crate::error::{Error, Result};
use crate::gibbs::{self, log_gibbs, log_sum_exp, Masses};
use crate::metrics::{self, row_entropy};
use crate::model::{
    sq_dist, AssocMatrix, CapacitySpec, ClusterState, Dataset, Eta, Partition, TypedAssoc,
};

/// Stop rule of the automatic schedule: association rows with entropy
/// below this value count as hard.
pub const AUTO_STOP_ROW_ENTROPY: f64 = 1e-10;

/// Change of `H(Y|X)` over one step below which rows that capacities keep
/// fractional are taken as settled.
pub const AUTO_STOP_ENTROPY_DRIFT: f64 = 1e-6;

/// Upper bound on `β · diameter²` for the automatic schedule.
pub const AUTO_BETA_CEILING: f64 = 1e6;

/// Refinement sweeps of the weight update per weight solve.
pub const ETA_MAX_SWEEPS: usize = 500;

/// Resources closer than this, relative to the data diameter, coincide.
const COINCIDENT: f64 = 1e-6;

/// Principal variance, relative to the squared diameter, below which the
/// data shared by coincident resources cannot split them.
const STUCK_SPREAD: f64 = 1e-12;

/// Masses at or below this are treated as empty clusters.
const STARVED_MASS: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum BetaInit {
    /// `0.5 / λ_max`, with `λ_max` the largest eigenvalue of the weighted
    /// data covariance.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum BetaMax {
    /// Anneal until associations are effectively hard, capped at
    /// `β · diameter² = AUTO_BETA_CEILING`.
    Auto,
    Value(f64),
}

/// Annealing schedule and inner-loop settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealConfig {
    pub beta_init: BetaInit,
    /// Multiplicative growth factor `γ > 1` between annealing steps.
    pub beta_growth: f64,
    pub beta_max: BetaMax,
    /// Inner convergence threshold on location displacement (relative to the
    /// data diameter) and on the change of `log η`.
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Perturbation magnitude, relative to the data diameter.
    pub perturb_eps: f64,
    /// Step scale of the location update; 1 is the plain centroid update.
    pub sigma: f64,
    pub rng_seed: u64,
    pub typed_assoc: TypedAssoc,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            beta_init: BetaInit::Auto,
            beta_growth: 1.05,
            beta_max: BetaMax::Auto,
            inner_tol: 1e-9,
            inner_max_iters: 2000,
            perturb_eps: 1e-3,
            sigma: 1.0,
            rng_seed: 0,
            typed_assoc: TypedAssoc::Restricted,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta_growth > 1.0) || !self.beta_growth.is_finite() {
            return bad(format!("beta growth must exceed 1, got {}", self.beta_growth));
        }
        if !(self.inner_tol > 0.0) {
            return bad(format!("inner tolerance must be positive, got {}", self.inner_tol));
        }
        if self.inner_max_iters == 0 {
            return bad("inner iteration limit must be positive".into());
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.perturb_eps >= 0.0) {
            return bad(format!("perturbation must be nonnegative, got {}", self.perturb_eps));
        }
        if let BetaInit::Value(b) = self.beta_init {
            if !(b > 0.0) || !b.is_finite() {
                return bad(format!("initial beta must be positive, got {b}"));
            }
        }
        if let BetaMax::Value(m) = self.beta_max {
            if !m.is_finite() {
                return bad(format!("final beta must be finite, got {m}"));
            }
            if let BetaInit::Value(b) = self.beta_init {
                if !(m > b) {
                    return bad(format!("final beta {m} must exceed initial beta {b}"));
                }
            }
        }
        Ok(())
    }
}

/// One outer annealing step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub beta: f64,
    pub free_energy: f64,
    pub distortion: f64,
    pub modified_distortion: f64,
    pub entropy: f64,
    pub masses: Vec<f64>,
    pub residual: f64,
    pub inner_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub final_state: ClusterState,
    pub associations: AssocMatrix,
    pub partition: Partition,
    pub masses: Masses,
    pub distortion: f64,
    /// Largest deviation of the soft masses from the capacities.
    pub residual: f64,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Whether the inner loop converged at the final annealing step.
    pub converged: bool,
}

/// Weighted centroids `y_j = Σ_i p(x_i) p(y_j|x_i) x_i / p(y_j)`.
pub fn centroid_update(ds: &Dataset, p: &AssocMatrix) -> Result<Array2<f64>> {
    if p.num_points() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            found: p.num_points(),
        });
    }
    let (mass, mut sums) = gibbs::moments(ds, p);
    for (j, mut row) in sums.outer_iter_mut().enumerate() {
        if !(mass[j] > STARVED_MASS) {
            return Err(Error::StarvedCluster(j));
        }
        row.mapv_inplace(|v| v / mass[j]);
    }
    Ok(sums)
}

/// One application of the weight update
/// `η_j ← λ_j / Σ_i p(x_i) e^{−β d_ij} / Σ_l η_l e^{−β d_il}`, evaluated in
/// the log domain and renormalized so that `Σ η = 1`.
///
/// Typed capacities update each `(j, k)` entry with sums restricted to
/// type-`k` points in restricted mode, and over all points in pooled mode.
pub fn eta_update(ds: &Dataset, state: &ClusterState, cap: &CapacitySpec) -> Result<Eta> {
    let k = state.num_clusters();
    let check_len = |n: usize| {
        if n == k {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: k,
                found: n,
            })
        }
    };
    let lg = log_gibbs(ds, state)?;
    let beta = state.beta;
    let n = ds.len();
    let num_cols = match (&state.eta, cap) {
        (Eta::PerCluster(_), CapacitySpec::PerCluster(l)) => {
            check_len(l.len())?;
            1
        }
        (
            Eta::PerType {
                pooling: TypedAssoc::Restricted,
                ..
            },
            CapacitySpec::PerClusterPerType(l),
        ) => {
            check_len(l.nrows())?;
            l.ncols()
        }
        (
            Eta::PerType {
                pooling: TypedAssoc::Pooled,
                ..
            },
            CapacitySpec::PerClusterPerType(l),
        ) => {
            check_len(l.nrows())?;
            1
        }
        (_, CapacitySpec::None) => {
            return Err(Error::InvalidConfig(
                "weight update requires capacity constraints".into(),
            ))
        }
        _ => {
            return Err(Error::InvalidConfig(
                "cluster weights do not match the capacity layout".into(),
            ))
        }
    };
    let restricted = matches!(
        state.eta,
        Eta::PerType {
            pooling: TypedAssoc::Restricted,
            ..
        }
    );

    // log S_jc = log Σ_{i in c} p(x_i) e^{−β d_ij} / Z_i
    let mut terms: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); num_cols]; k];
    for i in 0..n {
        let w = ds.weights()[i];
        if w == 0.0 {
            continue;
        }
        let c = if restricted { ds.type_of(i) } else { 0 };
        let x = ds.point(i);
        let base = w.ln() - lg.lse[i];
        for (j, t) in terms.iter_mut().enumerate() {
            t[c].push(base - beta * sq_dist(x, state.locations.row(j)));
        }
    }
    let mut log_s = Array2::from_elem((k, num_cols), f64::NEG_INFINITY);
    for (j, t) in terms.iter().enumerate() {
        for (c, v) in t.iter().enumerate() {
            log_s[[j, c]] = log_sum_exp(v.iter().copied());
        }
    }

    let update = |lambda: f64, ls: f64, j: usize| -> Result<f64> {
        if lambda == 0.0 {
            Ok(f64::NEG_INFINITY)
        } else if ls == f64::NEG_INFINITY {
            Err(Error::Infeasible { cluster: j, beta })
        } else {
            Ok(lambda.ln() - ls)
        }
    };

    match (cap, &state.eta) {
        (CapacitySpec::PerCluster(lambda), _) => {
            let mut out = Array1::zeros(k);
            for j in 0..k {
                out[j] = update(lambda[j], log_s[[j, 0]], j)?;
            }
            let norm = log_sum_exp(out.iter().copied());
            out.mapv_inplace(|v| v - norm);
            Ok(Eta::PerCluster(out))
        }
        (CapacitySpec::PerClusterPerType(lambda), Eta::PerType { pooling, .. }) => {
            let mut out = Array2::zeros(lambda.dim());
            for ((j, t), v) in out.indexed_iter_mut() {
                let c = if restricted { t } else { 0 };
                *v = update(lambda[[j, t]], log_s[[j, c]], j)?;
            }
            normalize_typed(&mut out, ds, restricted);
            Ok(Eta::PerType {
                log: out,
                pooling: *pooling,
            })
        }
        _ => unreachable!("layout checked above"),
    }
}

/// Canonical scale of typed weights: each type column sums to the type's
/// weight in restricted mode (columns are independent there), the whole
/// matrix sums to one in pooled mode.
fn normalize_typed(log: &mut Array2<f64>, ds: &Dataset, restricted: bool) {
    if restricted {
        let tw = ds.type_weights();
        for (t, mut col) in log.columns_mut().into_iter().enumerate() {
            let norm = log_sum_exp(col.iter().copied()) - tw[t].ln();
            if norm.is_finite() {
                col.mapv_inplace(|v| v - norm);
            }
        }
    } else {
        let norm = log_sum_exp(log.iter().copied());
        log.mapv_inplace(|v| v - norm);
    }
}

/// Cluster weights at the fixed point of [`eta_update`] for the current
/// locations and `β`.
///
/// The fixed point is located by damped Newton on the convex dual of the
/// mass constraints and then refined by applying [`eta_update`] until
/// `log η` moves by less than `tol`. Pooled typed weights have no such
/// dual and use the refinement loop alone.
pub fn solve_eta(ds: &Dataset, state: &ClusterState, cap: &CapacitySpec, tol: f64) -> Result<Eta> {
    let beta = state.beta;
    let scores = |members: &[usize], active: &[usize]| {
        let mut s = Array2::zeros((members.len(), active.len()));
        for (r, &i) in members.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                s[[r, c]] = -beta * sq_dist(ds.point(i), state.locations.row(j));
            }
        }
        s
    };
    let start = |log: f64, lambda: f64| if log.is_finite() { log } else { lambda.ln() };
    let mut st = state.clone();
    match (cap, &state.eta) {
        (CapacitySpec::PerCluster(lambda), Eta::PerCluster(log)) if lambda.len() == log.len() => {
            let members: Vec<usize> = (0..ds.len()).collect();
            let active: Vec<usize> = (0..lambda.len()).collect();
            let group = dual::Group {
                scores: scores(&members, &active),
                weights: ds.weights().clone(),
                lambda: lambda.clone(),
            };
            let u0 = Array1::from_iter(active.iter().map(|&j| start(log[j], lambda[j])));
            let (mut u, _) = group.solve_warm(u0);
            let norm = log_sum_exp(u.iter().copied());
            u.mapv_inplace(|v| v - norm);
            st.eta = Eta::PerCluster(u);
        }
        (
            CapacitySpec::PerClusterPerType(lambda),
            Eta::PerType {
                log,
                pooling: TypedAssoc::Restricted,
            },
        ) if lambda.dim() == log.dim() && ds.num_types() == lambda.ncols() => {
            let mut out = Array2::from_elem(lambda.dim(), f64::NEG_INFINITY);
            for t in 0..lambda.ncols() {
                let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.type_of(i) == t).collect();
                let active: Vec<usize> = (0..lambda.nrows()).filter(|&j| lambda[[j, t]] > 0.0).collect();
                let group = dual::Group {
                    scores: scores(&members, &active),
                    weights: members.iter().map(|&i| ds.weights()[i]).collect(),
                    lambda: active.iter().map(|&j| lambda[[j, t]]).collect(),
                };
                let u0 = Array1::from_iter(active.iter().map(|&j| start(log[[j, t]], lambda[[j, t]])));
                let (u, _) = group.solve_warm(u0);
                for (&j, v) in active.iter().zip(u.iter()) {
                    out[[j, t]] = *v;
                }
            }
            normalize_typed(&mut out, ds, true);
            st.eta = Eta::PerType {
                log: out,
                pooling: TypedAssoc::Restricted,
            };
        }
        _ => {}
    }
    for _ in 0..ETA_MAX_SWEEPS {
        let next = eta_update(ds, &st, cap)?;
        let change = next.max_log_change(&st.eta);
        st.eta = next;
        if change < tol {
            break;
        }
    }
    Ok(st.eta)
}

/// Result of the fixed-point iteration at one annealing parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub state: ClusterState,
    pub iterations: usize,
    pub converged: bool,
    /// Last location displacement, relative to the data diameter.
    pub displacement: f64,
    /// Last change of `log η`.
    pub eta_change: f64,
}

/// Alternates the association, weight and centroid updates at fixed `β`
/// until locations stop moving and either the weights or the associations
/// they induce stop changing.
pub fn inner_solve(
    ds: &Dataset,
    state: ClusterState,
    cap: &CapacitySpec,
    cfg: &AnnealConfig,
) -> Result<InnerOutcome> {
    inner_loop(ds, state, cap, cfg, cap.is_constrained(), 0)
}

fn inner_loop(
    ds: &Dataset,
    mut state: ClusterState,
    cap: &CapacitySpec,
    cfg: &AnnealConfig,
    update_eta: bool,
    salt: u64,
) -> Result<InnerOutcome> {
    let diam = ds.diameter();
    let step = cfg.sigma * cfg.sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut reseeds = 0usize;
    let mut displacement = f64::INFINITY;
    let mut eta_change = 0.0;
    let mut prev_assoc = None;

    for it in 1..=cfg.inner_max_iters {
        eta_change = 0.0;
        if update_eta {
            let eta = solve_eta(ds, &state, cap, cfg.inner_tol)?;
            eta_change = eta.max_log_change(&state.eta);
            state.eta = eta;
        }
        let p = gibbs::associations(ds, &state)?;
        let assoc_change = prev_assoc.as_ref().map_or(f64::INFINITY, |q: &AssocMatrix| {
            q.values()
                .iter()
                .zip(p.values().iter())
                .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
        });
        let target = match centroid_update(ds, &p) {
            Ok(t) => t,
            Err(Error::StarvedCluster(j)) => {
                reseeds += 1;
                if cap.is_constrained() {
                    if reseeds > 1 {
                        return Err(Error::Infeasible {
                            cluster: j,
                            beta: state.beta,
                        });
                    }
                    let eps = cfg.perturb_eps.max(1e-6);
                    state.locations = perturb_resources(&state.locations, eps, diam, &mut rng);
                } else {
                    if reseeds > 10 * state.num_clusters() {
                        return Err(Error::StarvedCluster(j));
                    }
                    reseed_starved(ds, &mut state, &p, j, diam, cfg.perturb_eps, &mut rng);
                }
                prev_assoc = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        let watch_f = cfg!(debug_assertions) && !update_eta && step == 1.0 && state.beta > 0.0;
        let f_before = if watch_f { gibbs::free_energy(ds, &state)?.value } else { 0.0 };
        let next = if step == 1.0 {
            target
        } else {
            &state.locations + &((&target - &state.locations) * step)
        };
        displacement = next
            .outer_iter()
            .zip(state.locations.outer_iter())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max)
            / diam;
        state.locations = next;
        if watch_f {
            let f_after = gibbs::free_energy(ds, &state)?.value;
            debug_assert!(
                f_after <= f_before + 1e-9 * f_before.abs().max(1.0),
                "free energy rose from {f_before} to {f_after}"
            );
        }
        prev_assoc = Some(p);
        // In the hard regime masses are insensitive to `η`, which then only
        // settles to rounding; unchanged associations count as settled.
        if displacement < cfg.inner_tol && (eta_change < cfg.inner_tol || assoc_change < cfg.inner_tol) {
            return Ok(InnerOutcome {
                state,
                iterations: it,
                converged: true,
                displacement,
                eta_change,
            });
        }
    }
    Ok(InnerOutcome {
        state,
        iterations: cfg.inner_max_iters,
        converged: false,
        displacement,
        eta_change,
    })
}

fn reseed_starved(
    ds: &Dataset,
    state: &mut ClusterState,
    p: &AssocMatrix,
    starved: usize,
    diam: f64,
    eps: f64,
    rng: &mut ChaCha8Rng,
) {
    let m = gibbs::masses(ds, p).per_cluster;
    let heaviest = m
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
        .0;
    let eps = eps.max(1e-6) * diam;
    let src = state.locations.row(heaviest).to_owned();
    for (t, s) in state.locations.row_mut(starved).iter_mut().zip(src.iter()) {
        *t = s + rng.random_range(-eps..=eps);
    }
}

/// Adds independent uniform noise in `[−ε, ε]` times `scale` to every
/// coordinate.
pub fn perturb_resources<R: Rng>(y: &Array2<f64>, eps: f64, scale: f64, rng: &mut R) -> Array2<f64> {
    if eps == 0.0 {
        return y.clone();
    }
    let amp = eps * scale;
    y.mapv(|v| v + rng.random_range(-amp..=amp))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration from every coordinate axis.
pub(crate) fn largest_eigenvalue(m: &Array2<f64>) -> f64 {
    let d = m.nrows();
    let mut best: f64 = 0.0;
    for start in 0..d {
        let mut v = Array1::<f64>::zeros(d);
        v[start] = 1.0;
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let w = m.dot(&v);
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let next = v.dot(&w);
            v = w / norm;
            if (next - lambda).abs() <= 1e-14 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        best = best.max(lambda);
    }
    best
}

/// Automatic starting `β`: half the inverse of the largest principal
/// variance of the data.
pub fn auto_beta_init(ds: &Dataset) -> f64 {
    let lmax = largest_eigenvalue(&ds.covariance());
    if lmax > 0.0 {
        0.5 / lmax
    } else {
        1.0 / (ds.diameter() * ds.diameter())
    }
}

struct Schedule {
    start: f64,
    growth: f64,
    steps: Option<usize>,
    end: f64,
}

impl Schedule {
    fn new(ds: &Dataset, cfg: &AnnealConfig) -> Result<Self> {
        let start = match cfg.beta_init {
            BetaInit::Auto => auto_beta_init(ds),
            BetaInit::Value(b) => b,
        };
        let (steps, end) = match cfg.beta_max {
            BetaMax::Value(m) => {
                if !(m > start) {
                    return Err(Error::InvalidConfig(format!(
                        "final beta {m} must exceed initial beta {start}"
                    )));
                }
                let n = ((m / start).ln() / cfg.beta_growth.ln() - 1e-9).ceil().max(1.0);
                (Some(n as usize), m)
            }
            BetaMax::Auto => {
                let d = ds.diameter();
                (None, (AUTO_BETA_CEILING / (d * d)).max(start * cfg.beta_growth))
            }
        };
        Ok(Self {
            start,
            growth: cfg.beta_growth,
            steps,
            end,
        })
    }

    /// β for step `s`, or `None` once the schedule is exhausted.
    fn beta(&self, s: usize) -> Option<f64> {
        let b = self.start * self.growth.powi(s as i32);
        match self.steps {
            Some(n) if s < n => Some(b),
            Some(n) if s == n => Some(self.end),
            Some(_) => None,
            None if b < self.end => Some(b),
            None => None,
        }
    }
}

/// Groups of resources at the same location, relative to `diam`.
fn coincident_groups(y: &Array2<f64>, diam: f64) -> Vec<Vec<usize>> {
    let tol = (COINCIDENT * diam).powi(2);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for j in 0..y.nrows() {
        match groups.iter_mut().find(|g| sq_dist(y.row(g[0]), y.row(j)) <= tol) {
            Some(g) => g.push(j),
            None => groups.push(vec![j]),
        }
    }
    groups
}

/// Largest principal variance of the data held by a group of resources.
fn group_spread(ds: &Dataset, p: &AssocMatrix, group: &[usize]) -> f64 {
    let r: Vec<f64> = (0..ds.len())
        .map(|i| ds.weights()[i] * group.iter().map(|&j| p.values()[[i, j]]).sum::<f64>())
        .collect();
    let total: f64 = r.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let d = ds.dim();
    let mut mean = Array1::<f64>::zeros(d);
    for (i, ri) in r.iter().enumerate() {
        mean.scaled_add(*ri / total, &ds.point(i));
    }
    let mut cov = Array2::<f64>::zeros((d, d));
    for (i, ri) in r.iter().enumerate() {
        let c = &ds.point(i) - &mean;
        for a in 0..d {
            for b in 0..d {
                cov[[a, b]] += ri / total * c[a] * c[b];
            }
        }
    }
    largest_eigenvalue(&cov)
}

/// Unconstrained annealing splits coincident copies only at phase
/// transitions, so copies sharing data without spread never separate. One
/// such copy is moved next to the group with the widest data.
fn release_stuck_copy(
    ds: &Dataset,
    state: &ClusterState,
    eps: f64,
    diam: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<ClusterState>> {
    let groups = coincident_groups(&state.locations, diam);
    if groups.len() == state.num_clusters() {
        return Ok(None);
    }
    let p = gibbs::associations(ds, state)?;
    let floor = STUCK_SPREAD * diam * diam;
    let spreads: Vec<f64> = groups.iter().map(|g| group_spread(ds, &p, g)).collect();
    let Some(stuck) = groups
        .iter()
        .zip(&spreads)
        .find(|(g, &s)| g.len() > 1 && s <= floor)
        .map(|(g, _)| *g.last().expect("group is nonempty"))
    else {
        return Ok(None);
    };
    let (target, widest) = spreads
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (g, &s)| if s > best.1 { (g, s) } else { best });
    if widest <= floor {
        return Ok(None);
    }
    let mut next = state.clone();
    let src = state.locations.row(groups[target][0]).to_owned();
    let amp = eps.max(1e-6) * diam;
    for (t, v) in next.locations.row_mut(stuck).iter_mut().zip(src.iter()) {
        *t = v + rng.random_range(-amp..=amp);
    }
    Ok(Some(next))
}

/// Upper bound on the rows that capacities can keep fractional in the hard
/// limit: a vertex of the transport polytope of one group of points has at
/// most one split per active cluster beyond the first.
fn forced_splits(cap: &CapacitySpec, pooling: TypedAssoc) -> usize {
    let active = |col: ndarray::ArrayView1<f64>| col.iter().filter(|&&v| v > 0.0).count().saturating_sub(1);
    match cap {
        CapacitySpec::None => 0,
        CapacitySpec::PerCluster(l) => active(l.view()),
        CapacitySpec::PerClusterPerType(l) => match pooling {
            TypedAssoc::Restricted => l.columns().into_iter().map(active).sum(),
            TypedAssoc::Pooled => l.nrows().saturating_sub(1),
        },
    }
}

/// Runs deterministic annealing with `k` resources.
///
/// All resources start at the weighted mean; `η` starts at the capacities.
/// At every annealing step the locations are perturbed and the inner
/// fixed-point iteration is run to convergence. Non-convergence is recorded
/// in the report rather than returned as an error.
pub fn anneal(ds: &Dataset, k: usize, cap: &CapacitySpec, cfg: &AnnealConfig) -> Result<SolveReport> {
    run_anneal(ds, k, cap, cfg, true)
}

pub(crate) fn run_anneal(
    ds: &Dataset,
    k: usize,
    cap: &CapacitySpec,
    cfg: &AnnealConfig,
    update_eta: bool,
) -> Result<SolveReport> {
    cfg.validate()?;
    if k == 0 || k > ds.len() {
        return Err(Error::TooManyClusters { k, n: ds.len() });
    }
    cap.check(ds, k)?;
    let schedule = Schedule::new(ds, cfg)?;
    let diam = ds.diameter();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mean = ds.weighted_mean();
    let locations = mean
        .broadcast((k, ds.dim()))
        .expect("mean broadcasts to every resource")
        .to_owned();
    let mut state = ClusterState::new(locations, Eta::from_capacity(cap, cfg.typed_assoc), 0.0);
    let update_eta = update_eta && cap.is_constrained();

    let allowed_soft = forced_splits(cap, cfg.typed_assoc);
    let mut trajectory = Vec::new();
    let mut converged = true;
    let mut step = 0;
    while let Some(beta) = schedule.beta(step) {
        state.beta = beta;
        state.locations = perturb_resources(&state.locations, cfg.perturb_eps, diam, &mut rng);
        let mut outcome = inner_loop(ds, state, cap, cfg, update_eta, step as u64 + 1)?;
        if !cap.is_constrained() {
            if let Some(moved) = release_stuck_copy(ds, &outcome.state, cfg.perturb_eps, diam, &mut rng)? {
                let salt = (step as u64 + 1) | (1 << 63);
                let first = outcome.iterations;
                outcome = inner_loop(ds, moved, cap, cfg, update_eta, salt)?;
                outcome.iterations += first;
            }
        }
        state = outcome.state;
        converged = outcome.converged;

        let p = gibbs::associations(ds, &state)?;
        let m = gibbs::masses(ds, &p);
        let soft_rows = p
            .values()
            .outer_iter()
            .filter(|r| row_entropy(r.iter().copied()) >= AUTO_STOP_ROW_ENTROPY)
            .count();
        let entropy = metrics::conditional_entropy(ds, &p)?;
        let entropy_settled = trajectory
            .last()
            .is_some_and(|prev: &TrajectoryRecord| (prev.entropy - entropy).abs() < AUTO_STOP_ENTROPY_DRIFT);
        trajectory.push(TrajectoryRecord {
            beta,
            free_energy: gibbs::free_energy(ds, &state)?.value,
            distortion: metrics::distortion(ds, state.locations.view())?,
            modified_distortion: metrics::modified_distortion(ds, state.locations.view(), &p)?,
            entropy,
            masses: m.per_cluster.to_vec(),
            residual: cap.residual(&m),
            inner_iterations: outcome.iterations,
            converged: outcome.converged,
        });
        step += 1;
        if cfg.beta_max == BetaMax::Auto
            && (soft_rows == 0 || (soft_rows <= allowed_soft && entropy_settled))
        {
            break;
        }
    }

    let p = gibbs::associations(ds, &state)?;
    let m = gibbs::masses(ds, &p);
    Ok(SolveReport {
        partition: harden(&p),
        distortion: metrics::distortion(ds, state.locations.view())?,
        residual: cap.residual(&m),
        masses: m,
        associations: p,
        final_state: state,
        trajectory,
        converged,
    })
}

/// A descent step on the free energy at fixed `β` and `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentStep {
    /// `Y − (σ²/2) P⁻¹ ∇F`.
    pub locations: Array2<f64>,
    /// `−P⁻¹ ∇F`.
    pub direction: Array2<f64>,
    /// `dᵀ∇F` over the flattened matrices.
    pub dot: f64,
}

/// The location update written as a scaled descent step, with
/// `P = diag(p(y_j))`. With `σ = 1` this is the centroid update.
pub fn descent_step(ds: &Dataset, state: &ClusterState, sigma: f64) -> Result<DescentStep> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let grad = gibbs::free_energy_gradient(ds, state)?;
    let p = gibbs::associations(ds, state)?;
    let mass = gibbs::masses(ds, &p).per_cluster;
    if let Some(j) = mass.iter().position(|m| !(*m > STARVED_MASS)) {
        return Err(Error::StarvedCluster(j));
    }
    let mut direction = grad.clone();
    for (mut row, m) in direction.outer_iter_mut().zip(mass.iter()) {
        row.mapv_inplace(|g| -g / m);
    }
    let dot = (&direction * &grad).sum();
    let locations = &state.locations + &(&direction * (0.5 * sigma * sigma));
    Ok(DescentStep {
        locations,
        direction,
        dot,
    })
}

/// Maps annealing parameters of the original problem to the scaled one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMap {
    pub sigma: f64,
}

impl BetaMap {
    /// `β ↦ β σ²`.
    pub fn apply(&self, beta: f64) -> f64 {
        beta * self.sigma * self.sigma
    }
}

/// Divides every coordinate by `σ`. Solving the scaled instance at
/// `β σ²` is equivalent to solving the original at `β`.
pub fn scale_instance(ds: &Dataset, sigma: f64) -> Result<(Dataset, BetaMap)> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    Ok((ds.map_points(|v| v / sigma), BetaMap { sigma }))
}

/// Row-wise argmax, ties to the lowest cluster index.
pub fn harden(p: &AssocMatrix) -> Partition {
    let assign = p
        .values()
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect();
    Partition { assign }
}
