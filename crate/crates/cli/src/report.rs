//! Report files: `solution.json`, `assignments.csv` and `trajectory.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use capanneal_core::{AnnealConfig, CapacitySpec, Dataset, SolveReport, TrajectoryRecord};
use ndarray::Array2;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Run details echoed into the report alongside the solution.
#[derive(Debug, Clone, Copy)]
pub struct ReportContext<'a> {
    pub dataset: &'a Dataset,
    pub capacities: &'a CapacitySpec,
    pub config: &'a AnnealConfig,
    pub mode: &'a str,
    /// Pickup windows, one per demand point.
    pub windows: Option<&'a [(f64, f64)]>,
}

#[derive(Serialize)]
struct MassesOut {
    per_cluster: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_type: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct SolutionOut<'a> {
    mode: &'a str,
    n: usize,
    d: usize,
    k: usize,
    p: usize,
    seed: u64,
    config: &'a AnnealConfig,
    final_beta: f64,
    outer_steps: usize,
    converged: bool,
    distortion: f64,
    residual: f64,
    locations: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    masses: MassesOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacities: Option<Vec<Vec<f64>>>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn solution_json(report: &SolveReport, ctx: &ReportContext) -> Result<String> {
    let k = report.final_state.num_clusters();
    let capacities = match ctx.capacities {
        CapacitySpec::None => None,
        CapacitySpec::PerCluster(l) => Some(l.iter().map(|&v| vec![v]).collect()),
        CapacitySpec::PerClusterPerType(m) => Some(rows(m)),
    };
    let out = SolutionOut {
        mode: ctx.mode,
        n: ctx.dataset.len(),
        d: ctx.dataset.dim(),
        k,
        p: ctx.dataset.num_types(),
        seed: ctx.config.rng_seed,
        config: ctx.config,
        final_beta: report.final_state.beta,
        outer_steps: report.trajectory.len(),
        converged: report.converged,
        distortion: report.distortion,
        residual: report.residual,
        locations: rows(&report.final_state.locations),
        eta: rows(&report.final_state.eta.to_linear(k)),
        masses: MassesOut {
            per_cluster: report.masses.per_cluster.to_vec(),
            per_type: report.masses.per_type.as_ref().map(rows),
        },
        capacities,
    };
    let mut s = serde_json::to_string_pretty(&out)?;
    s.push('\n');
    Ok(s)
}

fn csv_bytes(header: Vec<String>, body: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for row in body {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

fn assignments_csv(report: &SolveReport, ctx: &ReportContext) -> Result<Vec<u8>> {
    let k = report.final_state.num_clusters();
    let typed = ctx.dataset.types().is_some();
    let mut header = vec!["index".to_string(), "cluster".to_string()];
    if ctx.windows.is_some() {
        header.extend(["t_start".to_string(), "t_end".to_string()]);
    }
    if typed {
        header.push("type".into());
    }
    header.extend((0..k).map(|j| format!("p{j}")));
    let p = report.associations.values();
    let body = (0..ctx.dataset.len()).map(|i| {
        let mut row = vec![i.to_string(), report.partition.assign[i].to_string()];
        if let Some(w) = ctx.windows {
            row.extend([w[i].0.to_string(), w[i].1.to_string()]);
        }
        if typed {
            row.push(ctx.dataset.type_of(i).to_string());
        }
        row.extend(p.row(i).iter().map(|v| v.to_string()));
        row
    });
    csv_bytes(header, body)
}

/// Trajectory table; an empty trajectory gives the header alone.
pub fn trajectory_csv(trajectory: &[TrajectoryRecord]) -> Result<Vec<u8>> {
    let header = [
        "beta",
        "free_energy",
        "distortion",
        "modified_distortion",
        "entropy",
        "residual",
        "inner_iterations",
        "converged",
    ]
    .map(String::from)
    .to_vec();
    let body = trajectory.iter().map(|r| {
        vec![
            r.beta.to_string(),
            r.free_energy.to_string(),
            r.distortion.to_string(),
            r.modified_distortion.to_string(),
            r.entropy.to_string(),
            r.residual.to_string(),
            r.inner_iterations.to_string(),
            r.converged.to_string(),
        ]
    });
    csv_bytes(header, body)
}

/// Writes the three report files into `dir`, creating it if needed, and
/// returns their paths.
pub fn write_report(report: &SolveReport, ctx: &ReportContext, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let files = [
        ("solution.json", solution_json(report, ctx)?.into_bytes()),
        ("assignments.csv", assignments_csv(report, ctx)?),
        ("trajectory.csv", trajectory_csv(&report.trajectory)?),
    ];
    let mut paths = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
