//! Instance data model: demand points, capacities, solver state and
//! association matrices.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Tolerance on row sums of an association matrix.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Tolerance on the per-type column sums of a typed capacity matrix.
pub const TYPE_MASS_TOL: f64 = 1e-9;

/// Squared Euclidean distance `‖x − y‖²`.
pub fn squared_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(sq_dist(x, y))
}

#[inline]
pub(crate) fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Type labels of a multi-type dataset; labels are `0..num_types`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeLabels {
    labels: Vec<usize>,
    num_types: usize,
}

impl TypeLabels {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }
}

/// Demand points with a probability distribution and optional type labels.
///
/// Weights are normalized to sum to one on construction. Duplicate points
/// are kept as separate entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    weights: Array1<f64>,
    types: Option<TypeLabels>,
}

impl Dataset {
    /// Builds a dataset from an `N × d` point matrix. Missing weights
    /// default to uniform.
    pub fn new(points: Array2<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(idx) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoordinate(idx / d));
        }
        let weights = normalize_weights(weights, n)?;
        Ok(Self {
            points,
            weights,
            types: None,
        })
    }

    /// Builds a dataset from row vectors; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>], weights: Option<Vec<f64>>) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let d = first.len();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let points = Array2::from_shape_vec((rows.len(), d), flat).expect("shape checked");
        Self::new(points, weights)
    }

    /// One-dimensional convenience constructor.
    pub fn from_scalars(values: &[f64], weights: Option<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let points = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("1-d");
        Self::new(points, weights)
    }

    /// Attaches type labels in `0..num_types`. Every type must occur.
    pub fn with_types(mut self, labels: Vec<usize>, num_types: usize) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        let mut seen = vec![false; num_types];
        for (index, &label) in labels.iter().enumerate() {
            if label >= num_types {
                return Err(Error::TypeOutOfRange {
                    index,
                    label,
                    num_types,
                });
            }
            seen[label] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::EmptyType(missing));
        }
        self.types = Some(TypeLabels { labels, num_types });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn types(&self) -> Option<&TypeLabels> {
        self.types.as_ref()
    }

    pub fn num_types(&self) -> usize {
        self.types.as_ref().map_or(1, |t| t.num_types)
    }

    /// Type of point `i`, or 0 for untyped datasets.
    #[inline]
    pub fn type_of(&self, i: usize) -> usize {
        self.types.as_ref().map_or(0, |t| t.labels[i])
    }

    /// Total probability weight of each type.
    pub fn type_weights(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.num_types());
        for (i, w) in self.weights.iter().enumerate() {
            out[self.type_of(i)] += w;
        }
        out
    }

    pub fn weighted_mean(&self) -> Array1<f64> {
        let mut mean = Array1::zeros(self.dim());
        for (x, &w) in self.points.outer_iter().zip(self.weights.iter()) {
            mean.scaled_add(w, &x);
        }
        mean
    }

    /// Weighted covariance `Σ p(x)(x − μ)(x − μ)ᵀ`.
    pub fn covariance(&self) -> Array2<f64> {
        let mean = self.weighted_mean();
        let d = self.dim();
        let mut cov = Array2::zeros((d, d));
        for (x, &w) in self.points.outer_iter().zip(self.weights.iter()) {
            let c = &x - &mean;
            for a in 0..d {
                for b in 0..d {
                    cov[[a, b]] += w * c[a] * c[b];
                }
            }
        }
        cov
    }

    /// Length of the bounding-box diagonal, or 1 when all points coincide.
    ///
    /// Used as the length scale for convergence thresholds and perturbations;
    /// it is translation invariant and scales linearly with the coordinates.
    pub fn diameter(&self) -> f64 {
        let lo = self.points.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
        let hi = self.points.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
        let diag = (&hi - &lo).mapv(|v| v * v).sum().sqrt();
        if diag > 0.0 {
            diag
        } else {
            1.0
        }
    }

    /// Returns a copy with every point mapped by `f`; weights and types kept.
    pub fn map_points(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            points: self.points.mapv(f),
            weights: self.weights.clone(),
            types: self.types.clone(),
        }
    }
}

fn normalize_weights(weights: Option<Vec<f64>>, n: usize) -> Result<Array1<f64>> {
    let Some(w) = weights else {
        return Ok(Array1::from_elem(n, 1.0 / n as f64));
    };
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.len(),
        });
    }
    for (index, &value) in w.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidWeight { index, value });
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroTotalWeight);
    }
    Ok(Array1::from(w) / total)
}

/// Prescribed relative cluster masses.
#[derive(Debug, Clone, PartialEq)]
pub enum CapacitySpec {
    /// Unconstrained clustering.
    None,
    /// `λ_j`, one relative mass per cluster.
    PerCluster(Array1<f64>),
    /// `λ_jk`, a `K × p` matrix of relative masses per cluster and type.
    PerClusterPerType(Array2<f64>),
}

impl CapacitySpec {
    /// Per-cluster capacities; any positive values are accepted and
    /// normalized so they sum to one.
    pub fn per_cluster(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidCapacity("no capacities given".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidCapacity(format!(
                "capacity {v} is not strictly positive"
            )));
        }
        let total: f64 = values.iter().sum();
        Ok(Self::PerCluster(Array1::from_iter(
            values.iter().map(|v| v / total),
        )))
    }

    /// Per-cluster, per-type capacities (rows are clusters, columns types).
    /// Entries must be nonnegative; the matrix is normalized to sum to one.
    pub fn per_cluster_per_type(matrix: Array2<f64>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::InvalidCapacity("empty capacity matrix".into()));
        }
        if let Some(v) = matrix.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidCapacity(format!("capacity {v} is negative")));
        }
        let total = matrix.sum();
        if total <= 0.0 {
            return Err(Error::InvalidCapacity("capacities sum to zero".into()));
        }
        Ok(Self::PerClusterPerType(matrix / total))
    }

    /// Number of clusters implied by the capacities, if any.
    pub fn num_clusters(&self) -> Option<usize> {
        match self {
            Self::None => None,
            Self::PerCluster(l) => Some(l.len()),
            Self::PerClusterPerType(l) => Some(l.nrows()),
        }
    }

    pub fn is_constrained(&self) -> bool {
        !matches!(self, Self::None)
    }

    /// Checks the capacities against a dataset and cluster count.
    pub fn check(&self, ds: &Dataset, k: usize) -> Result<()> {
        if let Some(kc) = self.num_clusters() {
            if kc != k {
                return Err(Error::InvalidCapacity(format!(
                    "{kc} capacities given for {k} clusters"
                )));
            }
        }
        if let Self::PerClusterPerType(lambda) = self {
            let types = ds.types().ok_or(Error::MissingTypes)?;
            if lambda.ncols() != types.num_types() {
                return Err(Error::InvalidCapacity(format!(
                    "capacity matrix has {} type columns, dataset has {} types",
                    lambda.ncols(),
                    types.num_types()
                )));
            }
            let tw = ds.type_weights();
            for (t, col) in lambda.axis_iter(Axis(1)).enumerate() {
                let s = col.sum();
                if (s - tw[t]).abs() > TYPE_MASS_TOL {
                    return Err(Error::InvalidCapacity(format!(
                        "type {t} capacities sum to {s}, but the type carries weight {}",
                        tw[t]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest deviation between achieved masses and the capacities.
    pub fn residual(&self, masses: &crate::gibbs::Masses) -> f64 {
        match self {
            Self::None => 0.0,
            Self::PerCluster(l) => max_abs_diff(masses.per_cluster.iter(), l.iter()),
            Self::PerClusterPerType(l) => match &masses.per_type {
                Some(m) => max_abs_diff(m.iter(), l.iter()),
                None => f64::INFINITY,
            },
        }
    }
}

fn max_abs_diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// How a typed association row combines the per-type weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypedAssoc {
    /// Each point only sees the weight column of its own type.
    #[default]
    Restricted,
    /// Every point sees `Σ_k η_jk`.
    Pooled,
}

/// Cluster weights `η`, kept in the log domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Eta {
    /// Plain Gibbs associations; the free energy uses `η ≡ 1`.
    Uniform,
    /// `log η_j`.
    PerCluster(Array1<f64>),
    /// `log η_jk`, rows clusters and columns types.
    PerType {
        log: Array2<f64>,
        pooling: TypedAssoc,
    },
}

impl Eta {
    /// Weights initialized to the capacities: `η = λ`, or uniform.
    pub fn from_capacity(cap: &CapacitySpec, pooling: TypedAssoc) -> Self {
        match cap {
            CapacitySpec::None => Self::Uniform,
            CapacitySpec::PerCluster(l) => Self::PerCluster(l.mapv(f64::ln)),
            CapacitySpec::PerClusterPerType(l) => Self::PerType {
                log: l.mapv(f64::ln),
                pooling,
            },
        }
    }

    /// Largest absolute change of `log η` between two weight sets of the
    /// same layout. Entries that are `−∞` in both count as unchanged.
    pub fn max_log_change(&self, other: &Eta) -> f64 {
        let diff = |a: &f64, b: &f64| {
            if a == b {
                0.0
            } else {
                (a - b).abs()
            }
        };
        match (self, other) {
            (Self::Uniform, Self::Uniform) => 0.0,
            (Self::PerCluster(a), Self::PerCluster(b)) => {
                a.iter().zip(b).map(|(x, y)| diff(x, y)).fold(0.0, f64::max)
            }
            (Self::PerType { log: a, .. }, Self::PerType { log: b, .. }) => {
                a.iter().zip(b).map(|(x, y)| diff(x, y)).fold(0.0, f64::max)
            }
            _ => f64::INFINITY,
        }
    }

    /// Linear-domain weights as a `K × p` matrix (`p = 1` for per-cluster
    /// weights). Uniform weights are reported as `1/K`.
    pub fn to_linear(&self, k: usize) -> Array2<f64> {
        match self {
            Self::Uniform => Array2::from_elem((k, 1), 1.0 / k as f64),
            Self::PerCluster(l) => l.mapv(f64::exp).insert_axis(Axis(1)),
            Self::PerType { log, .. } => log.mapv(f64::exp),
        }
    }
}

/// Resource locations, cluster weights and the current annealing parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub locations: Array2<f64>,
    pub eta: Eta,
    pub beta: f64,
}

impl ClusterState {
    pub fn new(locations: Array2<f64>, eta: Eta, beta: f64) -> Self {
        Self {
            locations,
            eta,
            beta,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.locations.nrows()
    }
}

/// Row-stochastic `N × K` matrix of association probabilities `p(y_j|x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssocMatrix(Array2<f64>);

impl AssocMatrix {
    /// Validates entries in `[0, 1]` and unit row sums.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for (row, r) in values.outer_iter().enumerate() {
            let sum: f64 = r.sum();
            let bad = r.iter().any(|v| !(0.0..=1.0).contains(v));
            if bad || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotRowStochastic { row, sum });
            }
        }
        Ok(Self(values))
    }

    pub(crate) fn from_trusted(values: Array2<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn num_points(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_clusters(&self) -> usize {
        self.0.ncols()
    }
}

/// Hard assignment of each demand point to a cluster index in `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Partition {
    pub assign: Vec<usize>,
}

impl Partition {
    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &a in &self.assign {
            c[a] += 1;
        }
        c
    }
}
