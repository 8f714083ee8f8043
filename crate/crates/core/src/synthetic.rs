//! Seeded instance generators for the vehicle-allocation and pickup
//! scenarios, and small random instances for tests and benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{CapacitySpec, Dataset};

/// Vehicle capacities of the allocation scenario.
pub const VEHICLE_CAPACITIES: [f64; 6] = [10.0, 12.0, 12.0, 8.0, 11.0, 7.0];

/// Shipments per type in the pickup scenario.
pub const PICKUP_TYPE_COUNTS: [usize; 3] = [34, 36, 30];

/// Vehicles in the pickup scenario.
pub const PICKUP_VEHICLES: usize = 10;

/// 60 planar customers with strongly non-uniform density: one dense
/// district, two smaller towns, a thin scatter and a remote customer in the
/// top-left corner. Some customers repeat (multiplicity above one).
pub fn vehicle_customers(seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(60);
    let blob = |rng: &mut ChaCha8Rng, pts: &mut Vec<Vec<f64>>, n: usize, c: [f64; 2], s: f64| {
        let g = Normal::new(0.0, s).expect("positive spread");
        for _ in 0..n {
            pts.push(vec![c[0] + g.sample(rng), c[1] + g.sample(rng)]);
        }
    };
    blob(&mut rng, &mut pts, 26, [7.0, 3.0], 0.6);
    blob(&mut rng, &mut pts, 12, [3.0, 6.5], 0.5);
    blob(&mut rng, &mut pts, 8, [8.5, 8.0], 0.4);
    for _ in 0..9 {
        pts.push(vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]);
    }
    pts.push(vec![0.3, 9.7]);
    // repeated customers
    for src in [0usize, 1, 26, 38] {
        pts.push(pts[src].clone());
    }
    debug_assert_eq!(pts.len(), 60);
    Dataset::from_rows(&pts, None)
}

/// The vehicle-allocation instance and its capacities.
pub fn vehicle_instance(seed: u64) -> Result<(Dataset, CapacitySpec)> {
    Ok((
        vehicle_customers(seed)?,
        CapacitySpec::per_cluster(&VEHICLE_CAPACITIES)?,
    ))
}

/// Shipments with pickup time windows and types.
#[derive(Debug, Clone, PartialEq)]
pub struct Shipments {
    /// `(t_start, t_end)` per shipment.
    pub windows: Vec<(f64, f64)>,
    /// Type label in `0..num_types`.
    pub types: Vec<usize>,
    pub num_types: usize,
}

impl Shipments {
    /// One-dimensional dataset of window midpoints with uniform weights.
    pub fn dataset(&self) -> Result<Dataset> {
        let mids: Vec<f64> = self.windows.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        Dataset::from_scalars(&mids, None)?.with_types(self.types.clone(), self.num_types)
    }
}

/// Random shipments over a ten-hour horizon; each type favours its own
/// part of the day.
pub fn shipments(counts: &[usize], seed: u64) -> Shipments {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = 600.0;
    let mut windows = Vec::new();
    let mut types = Vec::new();
    for (t, &count) in counts.iter().enumerate() {
        let centre = horizon * (t as f64 + 0.5) / counts.len() as f64;
        let spread = Normal::new(0.0, horizon / 4.0).expect("positive spread");
        for _ in 0..count {
            let start = (centre + spread.sample(&mut rng)).clamp(0.0, horizon - 30.0);
            let len = rng.random_range(30.0..120.0);
            windows.push((start, (start + len).min(horizon)));
            types.push(t);
        }
    }
    Shipments {
        windows,
        types,
        num_types: counts.len(),
    }
}

/// Random `K × p` capacities whose type columns sum to the type weights of
/// `ds`; entries are drawn uniformly in `[0.2, 1.0)` before scaling.
pub fn random_type_capacities(ds: &Dataset, k: usize, seed: u64) -> Result<CapacitySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tw = ds.type_weights();
    let mut m = Array2::<f64>::zeros((k, tw.len()));
    for (t, mut col) in m.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|_| rng.random_range(0.2..1.0));
        let s = col.sum();
        col.mapv_inplace(|v| v / s * tw[t]);
    }
    CapacitySpec::per_cluster_per_type(m)
}

/// The pickup instance: shipments and random typed capacities for
/// `PICKUP_VEHICLES` vehicles.
pub fn pickup_instance(seed: u64) -> Result<(Shipments, Dataset, CapacitySpec)> {
    let s = shipments(&PICKUP_TYPE_COUNTS, seed);
    let ds = s.dataset()?;
    let cap = random_type_capacities(&ds, PICKUP_VEHICLES, seed.wrapping_add(1))?;
    Ok((s, ds, cap))
}

/// `n` points uniform in the unit cube of dimension `d`.
pub fn uniform_points<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// `n` points from `centres` Gaussian blobs in the unit square.
pub fn blobs<R: Rng>(n: usize, centres: usize, spread: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let cs: Vec<[f64; 2]> = (0..centres)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let g = Normal::new(0.0, spread).expect("positive spread");
    (0..n)
        .map(|i| {
            let c = cs[i % centres];
            vec![c[0] + g.sample(rng), c[1] + g.sample(rng)]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vehicle_instance_shape() {
        let (ds, cap) = vehicle_instance(3).unwrap();
        assert_eq!(ds.len(), 60);
        assert!(cap.check(&ds, 6).is_ok());
        assert_eq!(vehicle_instance(3).unwrap().0, ds);
    }

    #[test]
    fn pickup_instance_feasible() {
        let (s, ds, cap) = pickup_instance(11).unwrap();
        assert_eq!(s.windows.len(), 100);
        let counts = (0..3).map(|t| s.types.iter().filter(|&&x| x == t).count()).collect::<Vec<_>>();
        assert_eq!(counts, vec![34, 36, 30]);
        assert!(cap.check(&ds, PICKUP_VEHICLES).is_ok());
        for (a, b) in &s.windows {
            assert!(a < b);
        }
    }
}
