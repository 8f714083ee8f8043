//! Side-by-side runs of annealing, Lloyd, fixed-weight annealing and the
//! exhaustive oracles.

use std::fmt::Write as _;

use capanneal_core::{
    anneal, brute_force_capacitated, brute_force_unconstrained, fixed_eta_da, lloyd, random_init,
    AnnealConfig, CapacitySpec, Dataset, Result,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Iteration cap for each Lloyd run.
pub const LLOYD_MAX_ITERS: usize = 1000;

/// Median final distortion of Lloyd over `runs` random initializations
/// seeded from `seed`.
pub fn lloyd_median(ds: &Dataset, k: usize, seed: u64, runs: usize) -> Result<f64> {
    let mut finals = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
        let init = random_init(ds, k, &mut rng)?;
        finals.push(lloyd(ds, k, init, LLOYD_MAX_ITERS)?.solve.distortion);
    }
    finals.sort_by(f64::total_cmp);
    let m = finals.len();
    Ok(if m % 2 == 1 {
        finals[m / 2]
    } else {
        0.5 * (finals[m / 2 - 1] + finals[m / 2])
    })
}

/// Integer cluster sizes implied by per-cluster capacities on a
/// uniform-weight dataset, if they are whole numbers.
pub fn integer_counts(ds: &Dataset, cap: &CapacitySpec) -> Option<Vec<usize>> {
    let CapacitySpec::PerCluster(l) = cap else { return None };
    let n = ds.len() as f64;
    let counts: Vec<usize> = l.iter().map(|v| (v * n).round() as usize).collect();
    let whole = l.iter().zip(&counts).all(|(v, &c)| (v * n - c as f64).abs() < 1e-9);
    (whole && counts.iter().sum::<usize>() == ds.len()).then_some(counts)
}

/// One row of the comparison table. Missing entries did not apply or the
/// instance was too large for enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub anneal: f64,
    pub anneal_residual: f64,
    pub lloyd_median: f64,
    pub fixed_eta: Option<(f64, f64)>,
    pub oracle: Option<f64>,
}

pub fn compare(
    label: &str,
    ds: &Dataset,
    k: usize,
    cap: &CapacitySpec,
    cfg: &AnnealConfig,
    lloyd_runs: usize,
) -> Result<Comparison> {
    let da = anneal(ds, k, cap, cfg)?;
    let fixed_eta = match cap {
        CapacitySpec::PerCluster(_) => {
            let r = fixed_eta_da(ds, cap, cfg)?;
            Some((r.distortion, r.residual))
        }
        _ => None,
    };
    let oracle = match cap {
        CapacitySpec::None => brute_force_unconstrained(ds, k).ok().map(|o| o.best_cost),
        _ => integer_counts(ds, cap)
            .and_then(|c| brute_force_capacitated(ds, k, &c).ok())
            .map(|o| o.best_cost),
    };
    Ok(Comparison {
        label: label.to_string(),
        anneal: da.distortion,
        anneal_residual: da.residual,
        lloyd_median: lloyd_median(ds, k, cfg.rng_seed, lloyd_runs)?,
        fixed_eta,
        oracle,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
}

pub fn format_table(rows: &[Comparison]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>13} {:>11} {:>13} {:>13} {:>11} {:>13}",
        "instance", "anneal", "residual", "lloyd_median", "fixed_eta", "fixed_res", "oracle"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>13} {:>11.3e} {:>13} {:>13} {:>11} {:>13}",
            r.label,
            cell(Some(r.anneal)),
            r.anneal_residual,
            cell(Some(r.lloyd_median)),
            cell(r.fixed_eta.map(|f| f.0)),
            r.fixed_eta.map_or_else(|| "-".to_string(), |f| format!("{:.3e}", f.1)),
            cell(r.oracle),
        );
    }
    out
}
