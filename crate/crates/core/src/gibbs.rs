//! Gibbs association probabilities, cluster masses and the free energy.
//!
//! Everything is evaluated in the log domain: each association row is a
//! softmax of `log η_j − β‖x_i − y_j‖²`, normalized by a max-subtracted
//! log-sum-exp, so rows stay finite and stochastic for `β d` far beyond the
//! range where `e^{−β d}` underflows.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::model::{sq_dist, AssocMatrix, ClusterState, Dataset, Eta, TypedAssoc};

/// Free energy together with the per-point log partition functions
/// `log Σ_j η_j e^{−β d(x_i, y_j)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyValue {
    pub value: f64,
    pub per_point_logsumexp: Array1<f64>,
}

/// Soft cluster masses `p(y_j)` and, for typed datasets, the joint masses
/// `p(y_j|k) = Σ_{i: k_i = k} p(x_i) p(y_j|x_i)` as a `K × p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Masses {
    pub per_cluster: Array1<f64>,
    pub per_type: Option<Array2<f64>>,
}

/// Numerically stable `log Σ exp(v)`; `−∞` for an empty or all-`−∞` input.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log η` arranged as a `K × c` table plus the rule for picking the column
/// a point sees.
pub(crate) struct LogWeights {
    table: Array2<f64>,
    by_type: bool,
}

impl LogWeights {
    pub(crate) fn new(ds: &Dataset, eta: &Eta, k: usize) -> Result<Self> {
        Ok(match eta {
            Eta::Uniform => Self {
                table: Array2::zeros((k, 1)),
                by_type: false,
            },
            Eta::PerCluster(l) => {
                if l.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: l.len(),
                    });
                }
                Self {
                    table: l.clone().insert_axis(Axis(1)),
                    by_type: false,
                }
            }
            Eta::PerType { log, pooling } => {
                let types = ds.types().ok_or(Error::MissingTypes)?;
                if log.nrows() != k || log.ncols() != types.num_types() {
                    return Err(Error::DimensionMismatch {
                        expected: k * types.num_types(),
                        found: log.len(),
                    });
                }
                match pooling {
                    TypedAssoc::Restricted => Self {
                        table: log.clone(),
                        by_type: true,
                    },
                    TypedAssoc::Pooled => Self {
                        table: log
                            .map_axis(Axis(1), |r| log_sum_exp(r.iter().copied()))
                            .insert_axis(Axis(1)),
                        by_type: false,
                    },
                }
            }
        })
    }

    #[inline]
    pub(crate) fn column(&self, ds: &Dataset, i: usize) -> ArrayView1<'_, f64> {
        let c = if self.by_type { ds.type_of(i) } else { 0 };
        self.table.column(c)
    }
}

/// Logits `log η − β d` for every point and cluster, and their row-wise
/// log-sum-exp.
pub(crate) struct LogGibbs {
    pub logits: Array2<f64>,
    pub lse: Array1<f64>,
}

pub(crate) fn log_gibbs(ds: &Dataset, state: &ClusterState) -> Result<LogGibbs> {
    let beta = state.beta;
    if !(beta >= 0.0) {
        return Err(Error::NegativeBeta(beta));
    }
    let y = &state.locations;
    if y.ncols() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: y.ncols(),
        });
    }
    let k = y.nrows();
    if k == 0 {
        return Err(Error::InvalidConfig("no resource locations".into()));
    }
    let weights = LogWeights::new(ds, &state.eta, k)?;
    let n = ds.len();
    let mut logits = Array2::zeros((n, k));
    let mut lse = Array1::zeros(n);
    for (i, mut row) in logits.outer_iter_mut().enumerate() {
        let x = ds.point(i);
        let col = weights.column(ds, i);
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            let a = if beta == 0.0 {
                col[j]
            } else {
                col[j] - beta * sq_dist(x, y.row(j))
            };
            row[j] = a;
            max = max.max(a);
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::InvalidConfig(format!(
                "every cluster weight vanishes for point {i}"
            )));
        }
        let s: f64 = row.iter().map(|a| (a - max).exp()).sum();
        lse[i] = max + s.ln();
    }
    Ok(LogGibbs { logits, lse })
}

/// Association probabilities `p(y_j|x_i) ∝ η_j e^{−β d(x_i, y_j)}`.
///
/// `Eta::Uniform` gives the plain Gibbs distribution. Typed weights use the
/// point's own type column in restricted mode and `Σ_k η_jk` in pooled mode.
pub fn associations(ds: &Dataset, state: &ClusterState) -> Result<AssocMatrix> {
    let LogGibbs { mut logits, lse } = log_gibbs(ds, state)?;
    for (mut row, l) in logits.outer_iter_mut().zip(lse.iter()) {
        row.mapv_inplace(|a| (a - l).exp());
    }
    Ok(AssocMatrix::from_trusted(logits))
}

/// Cluster masses from an association matrix.
pub fn masses(ds: &Dataset, p: &AssocMatrix) -> Masses {
    let k = p.num_clusters();
    let mut per_cluster = Array1::zeros(k);
    let mut per_type = ds.types().map(|t| Array2::zeros((k, t.num_types())));
    for (i, row) in p.values().outer_iter().enumerate() {
        let w = ds.weights()[i];
        per_cluster.scaled_add(w, &row);
        if let Some(pt) = per_type.as_mut() {
            pt.column_mut(ds.type_of(i)).scaled_add(w, &row);
        }
    }
    Masses {
        per_cluster,
        per_type,
    }
}

/// Masses `p(y_j)` and first moments `Σ_i p(x_i) p(y_j|x_i) x_i`.
pub(crate) fn moments(ds: &Dataset, p: &AssocMatrix) -> (Array1<f64>, Array2<f64>) {
    let k = p.num_clusters();
    let mut mass = Array1::zeros(k);
    let mut sums = Array2::zeros((k, ds.dim()));
    for (i, row) in p.values().outer_iter().enumerate() {
        let w = ds.weights()[i];
        let x = ds.point(i);
        for (j, &pij) in row.iter().enumerate() {
            let c = w * pij;
            if c != 0.0 {
                mass[j] += c;
                sums.row_mut(j).scaled_add(c, &x);
            }
        }
    }
    (mass, sums)
}

/// `F = −(1/β) Σ_i p(x_i) log Σ_j η_j e^{−β d(x_i, y_j)}`.
///
/// With `Eta::Uniform` the weights are `η ≡ 1`, so `F` is the plain
/// free energy; otherwise the stored (normalized) weights are used.
pub fn free_energy(ds: &Dataset, state: &ClusterState) -> Result<FreeEnergyValue> {
    if !(state.beta > 0.0) {
        return Err(Error::NonPositiveBeta(state.beta));
    }
    let LogGibbs { lse, .. } = log_gibbs(ds, state)?;
    let value = -ds.weights().dot(&lse) / state.beta;
    Ok(FreeEnergyValue {
        value,
        per_point_logsumexp: lse,
    })
}

/// `∂F/∂y_j = 2 Σ_i p(x_i) p(y_j|x_i) (y_j − x_i)` at fixed `η`.
pub fn free_energy_gradient(ds: &Dataset, state: &ClusterState) -> Result<Array2<f64>> {
    if !(state.beta > 0.0) {
        return Err(Error::NonPositiveBeta(state.beta));
    }
    let p = associations(ds, state)?;
    let (mass, sums) = moments(ds, &p);
    let mut grad = state.locations.clone();
    for (j, mut g) in grad.outer_iter_mut().enumerate() {
        g *= mass[j];
        g -= &sums.row(j);
        g *= 2.0;
    }
    Ok(grad)
}
