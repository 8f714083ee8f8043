//! Comparison solvers and exhaustive oracles.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::{self, nearest, partition_centroids, partition_cost, voronoi_partition};
use crate::model::{AssocMatrix, CapacitySpec, ClusterState, Dataset, Eta, Partition};
use crate::solver::{self, AnnealConfig, SolveReport};
use crate::gibbs;

/// Largest number of assignments the exhaustive oracles will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_partition: Partition,
    pub best_locations: Array2<f64>,
    pub best_cost: f64,
    pub evaluated_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydReport {
    pub solve: SolveReport,
    /// Distortion after every centroid step.
    pub distortion_history: Vec<f64>,
    pub iterations: usize,
}

/// `k` distinct data points chosen uniformly at random.
pub fn random_init<R: Rng>(ds: &Dataset, k: usize, rng: &mut R) -> Result<Array2<f64>> {
    if k == 0 || k > ds.len() {
        return Err(Error::TooManyClusters { k, n: ds.len() });
    }
    let idx = sample(rng, ds.len(), k);
    let mut out = Array2::zeros((k, ds.dim()));
    for (j, i) in idx.iter().enumerate() {
        out.row_mut(j).assign(&ds.point(i));
    }
    Ok(out)
}

/// Lloyd's algorithm: nearest-resource assignment alternated with weighted
/// centroids until the assignment stops changing.
///
/// An empty cluster is re-seeded at the point farthest from its nearest
/// resource.
pub fn lloyd(ds: &Dataset, k: usize, init: Array2<f64>, max_iters: usize) -> Result<LloydReport> {
    if k == 0 || k > ds.len() {
        return Err(Error::TooManyClusters { k, n: ds.len() });
    }
    if init.dim() != (k, ds.dim()) {
        return Err(Error::DimensionMismatch {
            expected: k * ds.dim(),
            found: init.len(),
        });
    }
    let mut y = init;
    let mut history = Vec::new();
    let mut prev: Option<Partition> = None;
    let mut iterations = 0;
    while iterations < max_iters {
        let part = voronoi_partition(ds, y.view());
        if prev.as_ref() == Some(&part) {
            break;
        }
        iterations += 1;
        let counts = part.counts(k);
        y = partition_centroids(ds, &part, k);
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..ds.len())
                .map(|i| (i, nearest(ds, y.view(), i).1))
                .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b })
                .0;
            y.row_mut(j).assign(&ds.point(far));
        }
        history.push(metrics::distortion(ds, y.view())?);
        prev = Some(part);
    }
    let partition = voronoi_partition(ds, y.view());
    let mut hard = Array2::zeros((ds.len(), k));
    for (i, &j) in partition.assign.iter().enumerate() {
        hard[[i, j]] = 1.0;
    }
    let assoc = AssocMatrix::new(hard)?;
    let masses = gibbs::masses(ds, &assoc);
    Ok(LloydReport {
        solve: SolveReport {
            distortion: metrics::distortion(ds, y.view())?,
            final_state: ClusterState::new(y, Eta::Uniform, f64::INFINITY),
            associations: assoc,
            partition,
            masses,
            residual: 0.0,
            trajectory: Vec::new(),
            converged: iterations < max_iters,
        },
        distortion_history: history,
        iterations,
    })
}

/// Annealing with the cluster weights pinned at `η = λ` for the whole run.
pub fn fixed_eta_da(ds: &Dataset, cap: &CapacitySpec, cfg: &AnnealConfig) -> Result<SolveReport> {
    let CapacitySpec::PerCluster(lambda) = cap else {
        return Err(Error::InvalidConfig(
            "fixed-weight annealing needs per-cluster capacities".into(),
        ));
    };
    solver::run_anneal(ds, lambda.len(), cap, cfg, false)
}

fn guard(count: f64) -> Result<()> {
    if count > ENUMERATION_LIMIT {
        Err(Error::InstanceTooLarge(count))
    } else {
        Ok(())
    }
}

struct Best {
    assign: Vec<usize>,
    cost: f64,
    evaluated: u64,
}

impl Best {
    fn offer(&mut self, ds: &Dataset, assign: &[usize], k: usize) {
        self.evaluated += 1;
        let part = Partition {
            assign: assign.to_vec(),
        };
        let c = partition_cost(ds, &part, k);
        if c < self.cost {
            self.cost = c;
            self.assign.copy_from_slice(assign);
        }
    }

    fn finish(self, ds: &Dataset, k: usize) -> OracleResult {
        let best_partition = Partition {
            assign: self.assign,
        };
        OracleResult {
            best_locations: partition_centroids(ds, &best_partition, k),
            best_partition,
            best_cost: self.cost,
            evaluated_count: self.evaluated,
        }
    }
}

/// Exhaustive minimum of the clustering cost over every partition into at
/// most `k` clusters, each resource at its cluster's weighted mean.
///
/// Partitions are enumerated once each as restricted growth strings (labels
/// in order of first occurrence).
pub fn brute_force_unconstrained(ds: &Dataset, k: usize) -> Result<OracleResult> {
    let n = ds.len();
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    guard((k as f64).powi(n as i32))?;

    fn rec(ds: &Dataset, k: usize, i: usize, used: usize, a: &mut Vec<usize>, best: &mut Best) {
        if i == a.len() {
            best.offer(ds, a, k);
            return;
        }
        for label in 0..(used + 1).min(k) {
            a[i] = label;
            rec(ds, k, i + 1, used.max(label + 1), a, best);
        }
    }
    let mut best = Best {
        assign: vec![0; n],
        cost: f64::INFINITY,
        evaluated: 0,
    };
    rec(ds, k, 0, 0, &mut vec![0; n], &mut best);
    Ok(best.finish(ds, k))
}

/// Exhaustive constrained optimum over partitions in which cluster `j`
/// holds exactly `counts[j]` points. Requires uniform weights.
pub fn brute_force_capacitated(ds: &Dataset, k: usize, counts: &[usize]) -> Result<OracleResult> {
    let n = ds.len();
    if counts.len() != k {
        return Err(Error::InvalidCapacity(format!(
            "{} counts given for {k} clusters",
            counts.len()
        )));
    }
    if counts.iter().sum::<usize>() != n {
        return Err(Error::InvalidCapacity(format!(
            "counts sum to {}, expected {n}",
            counts.iter().sum::<usize>()
        )));
    }
    let w0 = ds.weights()[0];
    if ds.weights().iter().any(|w| (w - w0).abs() > 1e-12) {
        return Err(Error::InvalidCapacity(
            "integer cluster sizes require uniform weights".into(),
        ));
    }
    // multinomial n! / Π counts_j!
    let mut total = 1.0;
    let mut placed = 0usize;
    for &c in counts {
        for t in 1..=c {
            placed += 1;
            total *= placed as f64 / t as f64;
        }
    }
    guard(total)?;

    fn rec(ds: &Dataset, i: usize, left: &mut [usize], a: &mut Vec<usize>, best: &mut Best) {
        if i == a.len() {
            let k = left.len();
            best.offer(ds, a, k);
            return;
        }
        for j in 0..left.len() {
            if left[j] > 0 {
                left[j] -= 1;
                a[i] = j;
                rec(ds, i + 1, left, a, best);
                left[j] += 1;
            }
        }
    }
    let mut best = Best {
        assign: vec![0; n],
        cost: f64::INFINITY,
        evaluated: 0,
    };
    rec(ds, 0, &mut counts.to_vec(), &mut vec![0; n], &mut best);
    Ok(best.finish(ds, k))
}
