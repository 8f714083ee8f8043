//! Scalar quality measures of a clustering.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::{sq_dist, AssocMatrix, Dataset, Partition};

fn check_dims(ds: &Dataset, locations: ArrayView2<f64>) -> Result<()> {
    if locations.ncols() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: locations.ncols(),
        });
    }
    if locations.nrows() == 0 {
        return Err(Error::InvalidConfig("no resource locations".into()));
    }
    Ok(())
}

fn check_assoc(ds: &Dataset, locations: ArrayView2<f64>, p: &AssocMatrix) -> Result<()> {
    if p.num_points() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            found: p.num_points(),
        });
    }
    if p.num_clusters() != locations.nrows() {
        return Err(Error::DimensionMismatch {
            expected: locations.nrows(),
            found: p.num_clusters(),
        });
    }
    Ok(())
}

/// Index of the nearest location to point `i` (lowest index on ties) and
/// the squared distance to it.
pub fn nearest(ds: &Dataset, locations: ArrayView2<f64>, i: usize) -> (usize, f64) {
    let x = ds.point(i);
    let mut best = (0, f64::INFINITY);
    for (j, y) in locations.outer_iter().enumerate() {
        let d = sq_dist(x, y);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Nearest-resource partition.
pub fn voronoi_partition(ds: &Dataset, locations: ArrayView2<f64>) -> Partition {
    Partition {
        assign: (0..ds.len()).map(|i| nearest(ds, locations, i).0).collect(),
    }
}

/// `D = Σ_i p(x_i) min_j ‖x_i − y_j‖²`.
pub fn distortion(ds: &Dataset, locations: ArrayView2<f64>) -> Result<f64> {
    check_dims(ds, locations)?;
    Ok((0..ds.len())
        .map(|i| ds.weights()[i] * nearest(ds, locations, i).1)
        .sum())
}

/// `D̄ = Σ_i p(x_i) Σ_j p(y_j|x_i) ‖x_i − y_j‖²`.
pub fn modified_distortion(
    ds: &Dataset,
    locations: ArrayView2<f64>,
    p: &AssocMatrix,
) -> Result<f64> {
    check_dims(ds, locations)?;
    check_assoc(ds, locations, p)?;
    let mut total = 0.0;
    for (i, row) in p.values().outer_iter().enumerate() {
        let x = ds.point(i);
        let inner: f64 = row
            .iter()
            .zip(locations.outer_iter())
            .map(|(pij, y)| pij * sq_dist(x, y))
            .sum();
        total += ds.weights()[i] * inner;
    }
    Ok(total)
}

/// `H(Y|X) = −Σ_i p(x_i) Σ_j p(y_j|x_i) log p(y_j|x_i)` with `0 log 0 = 0`.
pub fn conditional_entropy(ds: &Dataset, p: &AssocMatrix) -> Result<f64> {
    if p.num_points() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            found: p.num_points(),
        });
    }
    Ok(p.values()
        .outer_iter()
        .zip(ds.weights())
        .map(|(row, w)| w * row_entropy(row.iter().copied()))
        .sum())
}

pub(crate) fn row_entropy(row: impl Iterator<Item = f64>) -> f64 {
    -row.filter(|&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Centroids of a hard partition; empty clusters get the global mean.
pub fn partition_centroids(ds: &Dataset, partition: &Partition, k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, ds.dim()));
    let mut mass = vec![0.0; k];
    for (i, &j) in partition.assign.iter().enumerate() {
        let w = ds.weights()[i];
        sums.row_mut(j).scaled_add(w, &ds.point(i));
        mass[j] += w;
    }
    let mean = ds.weighted_mean();
    for (j, m) in mass.iter().enumerate() {
        if *m > 0.0 {
            sums.row_mut(j).mapv_inplace(|v| v / m);
        } else {
            sums.row_mut(j).assign(&mean);
        }
    }
    sums
}

/// Cost of a hard partition with each resource at its cluster's weighted
/// mean: `Σ_j Σ_{x_i ∈ C_j} p(x_i) ‖x_i − y_j‖²`.
pub fn partition_cost(ds: &Dataset, partition: &Partition, k: usize) -> f64 {
    let centroids = partition_centroids(ds, partition, k);
    partition
        .assign
        .iter()
        .enumerate()
        .map(|(i, &j)| ds.weights()[i] * sq_dist(ds.point(i), centroids.row(j)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line(values: &[f64]) -> Dataset {
        Dataset::from_scalars(values, None).unwrap()
    }

    #[test]
    fn distortion_examples() {
        let ds = line(&[0.0, 1.0]);
        assert_eq!(distortion(&ds, array![[0.5]].view()).unwrap(), 0.25);
        assert_eq!(distortion(&ds, array![[0.0], [1.0]].view()).unwrap(), 0.0);

        let ds = line(&[0.0, 1.0, 2.0, 9.0, 10.0, 11.0]);
        let y = array![[1.0], [10.0]];
        // nearest-resource enumeration
        let mut expected = 0.0;
        for x in [0.0, 1.0, 2.0, 9.0, 10.0, 11.0_f64] {
            let d = [1.0, 10.0_f64].iter().map(|c| (x - c).powi(2)).fold(f64::INFINITY, f64::min);
            expected += d / 6.0;
        }
        let got = distortion(&ds, y.view()).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 2.0 / 3.0).abs() < 1e-15);
        assert!(distortion(&ds, array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn modified_distortion_examples() {
        let ds = line(&[0.0, 1.0]);
        let y = array![[0.0], [1.0]];
        let uniform = AssocMatrix::new(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert_eq!(modified_distortion(&ds, y.view(), &uniform).unwrap(), 0.5);
        let hard = AssocMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(
            modified_distortion(&ds, y.view(), &hard).unwrap(),
            distortion(&ds, y.view()).unwrap()
        );
    }

    #[test]
    fn modified_distortion_matches_double_sum() {
        let xs = [0.3, -1.2, 2.5, 0.9, 4.0, -0.7];
        let ws = [1.0, 2.0, 0.5, 1.5, 1.0, 3.0];
        let ds = Dataset::from_scalars(&xs, Some(ws.to_vec())).unwrap();
        let y = array![[0.0], [3.0]];
        let p = array![
            [0.9, 0.1],
            [0.7, 0.3],
            [0.2, 0.8],
            [0.5, 0.5],
            [0.0, 1.0],
            [0.6, 0.4]
        ];
        let total_w: f64 = ws.iter().sum();
        let mut oracle = 0.0;
        for i in 0..6 {
            for (j, c) in [0.0, 3.0].iter().enumerate() {
                oracle += ws[i] / total_w * p[[i, j]] * (xs[i] - c) * (xs[i] - c);
            }
        }
        let got = modified_distortion(&ds, y.view(), &AssocMatrix::new(p).unwrap()).unwrap();
        assert!((got - oracle).abs() < 1e-14);
    }

    #[test]
    fn entropy_examples() {
        let ds = line(&[0.0, 1.0]);
        let hard = AssocMatrix::new(array![[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(conditional_entropy(&ds, &hard).unwrap(), 0.0);
        let uni = AssocMatrix::new(Array2::from_elem((2, 4), 0.25)).unwrap();
        assert!((conditional_entropy(&ds, &uni).unwrap() - 4f64.ln()).abs() < 1e-15);

        let ds = Dataset::from_scalars(&[0.0, 1.0, 2.0], Some(vec![1.0, 1.0, 2.0])).unwrap();
        let p = array![[0.2, 0.8], [1.0, 0.0], [0.5, 0.5]];
        let oracle = -(0.25 * (0.2 * 0.2f64.ln() + 0.8 * 0.8f64.ln()) + 0.5 * 0.5f64.ln());
        let got = conditional_entropy(&ds, &AssocMatrix::new(p).unwrap()).unwrap();
        assert!((got - oracle).abs() < 1e-15);
    }

    #[test]
    fn partition_cost_two_blocks() {
        let ds = line(&[0.0, 1.0, 10.0, 11.0]);
        let part = Partition {
            assign: vec![0, 0, 1, 1],
        };
        assert!((partition_cost(&ds, &part, 2) - 0.25).abs() < 1e-15);
    }
}
