//! Instance files.
//!
//! CSV files carry one demand point per row under a header naming the
//! columns `x1..xd`, an optional weight column `w` and an optional integer
//! `type` column. JSON files hold an object with `points`, optional
//! `weights`, `types` and `capacities` (a vector for per-cluster capacities
//! or a `K × p` matrix for per-type capacities) and an optional `name`.
//!
//! Type labels may be any nonnegative integers; they are numbered in
//! ascending order, which is also the column order of typed capacities.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use capanneal_core::synthetic::Shipments;
use capanneal_core::{CapacitySpec, Dataset};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Format implied by the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(Self::Csv),
            Some("json") => Ok(Self::Json),
            _ => Err(CliError::UnsupportedFormat(format!(
                "{}: expected a .csv or .json instance",
                path.display()
            ))),
        }
    }
}

/// Raw capacity values before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapacityValues {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl CapacityValues {
    /// Parses `--capacities`: a file (JSON array or CSV rows) if the
    /// argument names one, otherwise inline values with `,` between entries
    /// and `;` between matrix rows.
    pub fn parse(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            if Format::from_path(path).ok() == Some(Format::Json) {
                return serde_json::from_str(&text).map_err(|e| CliError::parse(arg, e.line(), e.to_string()));
            }
            let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            return Self::from_rows(&rows, arg);
        }
        let rows: Vec<&str> = arg.split(';').map(str::trim).filter(|l| !l.is_empty()).collect();
        Self::from_rows(&rows, "--capacities")
    }

    fn from_rows(rows: &[&str], source: &str) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for (line, row) in rows.iter().enumerate() {
            let values = row
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::parse(source, line + 1, format!("invalid capacity `{}`", v.trim())))
                })
                .collect::<Result<Vec<f64>>>()?;
            out.push(values);
        }
        match out.len() {
            0 => Err(CliError::parse(source, 1, "no capacities given")),
            1 => Ok(Self::Vector(out.pop().expect("one row"))),
            _ => Ok(Self::Matrix(out)),
        }
    }

    /// Number of clusters the values describe.
    pub fn num_clusters(&self) -> usize {
        match self {
            Self::Vector(v) => v.len(),
            Self::Matrix(m) => m.len(),
        }
    }

    pub fn to_spec(&self) -> Result<CapacitySpec> {
        match self {
            Self::Vector(v) => Ok(CapacitySpec::per_cluster(v)?),
            Self::Matrix(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != cols) {
                    return Err(CliError::Usage("capacity matrix rows differ in length".into()));
                }
                let m = Array2::from_shape_vec((rows.len(), cols), rows.concat())
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(CapacitySpec::per_cluster_per_type(m)?)
            }
        }
    }

    fn from_spec(spec: &CapacitySpec) -> Option<Self> {
        match spec {
            CapacitySpec::None => None,
            CapacitySpec::PerCluster(l) => Some(Self::Vector(l.to_vec())),
            CapacitySpec::PerClusterPerType(m) => Some(Self::Matrix(m.outer_iter().map(|r| r.to_vec()).collect())),
        }
    }
}

/// A parsed instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: Option<String>,
    pub dataset: Dataset,
    pub capacities: CapacitySpec,
    /// Original type labels, in the order of the dataset's type indices.
    pub type_labels: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    types: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacities: Option<CapacityValues>,
}

/// Numbers labels in ascending order.
fn index_labels(labels: &[u64]) -> (Vec<usize>, Vec<u64>) {
    let distinct: Vec<u64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let idx = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label is present"))
        .collect();
    (idx, distinct)
}

fn build(
    path: &str,
    name: Option<String>,
    points: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
    types: Option<Vec<u64>>,
    capacities: Option<CapacityValues>,
) -> Result<Instance> {
    if let Some(i) = points.iter().position(|p| p.len() != points[0].len()) {
        return Err(CliError::parse(path, i + 1, "point dimension differs from the first point"));
    }
    let mut dataset = Dataset::from_rows(&points, weights)?;
    let mut type_labels = Vec::new();
    if let Some(t) = types {
        let (idx, distinct) = index_labels(&t);
        dataset = dataset.with_types(idx, distinct.len())?;
        type_labels = distinct;
    }
    let capacities = match capacities {
        Some(c) => c.to_spec()?,
        None => CapacitySpec::None,
    };
    if let Some(k) = capacities.num_clusters() {
        capacities.check(&dataset, k)?;
    }
    Ok(Instance {
        name,
        dataset,
        capacities,
        type_labels,
    })
}

pub fn read_instance(path: &Path, format: Format) -> Result<Instance> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let shown = path.display().to_string();
    match format {
        Format::Json => {
            let raw: InstanceJson =
                serde_json::from_str(&text).map_err(|e| CliError::parse(&shown, e.line(), e.to_string()))?;
            let inst = build(&shown, raw.name, raw.points, raw.weights, raw.types, raw.capacities)?;
            let ds = &inst.dataset;
            let checks = [
                ("d", raw.d, ds.dim()),
                ("n", raw.n, ds.len()),
                ("k", raw.k, inst.capacities.num_clusters().unwrap_or(0)),
                ("p", raw.p, ds.num_types()),
            ];
            for (field, given, actual) in checks {
                if let Some(g) = given {
                    if g != actual {
                        return Err(CliError::parse(&shown, 1, format!("`{field}` is {g} but the data gives {actual}")));
                    }
                }
            }
            Ok(inst)
        }
        Format::Csv => read_csv_instance(&text, &shown),
    }
}

fn read_csv_instance(text: &str, path: &str) -> Result<Instance> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let mut coord_cols: Vec<(usize, usize)> = Vec::new();
    let mut weight_col = None;
    let mut type_col = None;
    for (c, name) in header.iter().enumerate() {
        match name {
            "w" | "weight" => weight_col = Some(c),
            "type" => type_col = Some(c),
            _ => match name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                Some(k) if k >= 1 => coord_cols.push((k, c)),
                _ => return Err(CliError::parse(path, 1, format!("unknown column `{name}`"))),
            },
        }
    }
    coord_cols.sort();
    if coord_cols.is_empty() || coord_cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
        return Err(CliError::parse(path, 1, "coordinate columns must be x1..xd"));
    }

    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut types = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| CliError::parse(path, line, format!("`{}` in column `{}` is not a number", raw, &header[c])))
        };
        points.push(coord_cols.iter().map(|&(_, c)| field(c)).collect::<Result<Vec<f64>>>()?);
        if let Some(c) = weight_col {
            weights.push(field(c)?);
        }
        if let Some(c) = type_col {
            let raw = record.get(c).unwrap_or("");
            types.push(
                raw.parse::<u64>()
                    .map_err(|_| CliError::parse(path, line, format!("`{raw}` is not a type label")))?,
            );
        }
    }
    build(
        path,
        None,
        points,
        weight_col.map(|_| weights),
        type_col.map(|_| types),
        None,
    )
}

/// Reads an instance and returns its dataset and capacities.
pub fn load_instance(path: &Path, format: Format) -> Result<(Dataset, CapacitySpec)> {
    let inst = read_instance(path, format)?;
    Ok((inst.dataset, inst.capacities))
}

/// Writes an instance. CSV files have no place for capacities, which are
/// dropped.
pub fn write_instance(inst: &Instance, path: &Path, format: Format) -> Result<()> {
    let ds = &inst.dataset;
    let labels = ds.types().map(|t| {
        t.labels()
            .iter()
            .map(|&i| inst.type_labels.get(i).copied().unwrap_or(i as u64))
            .collect::<Vec<u64>>()
    });
    let body = match format {
        Format::Json => {
            let raw = InstanceJson {
                name: inst.name.clone(),
                d: Some(ds.dim()),
                n: Some(ds.len()),
                k: inst.capacities.num_clusters(),
                p: ds.types().map(|t| t.num_types()),
                points: ds.points().outer_iter().map(|r| r.to_vec()).collect(),
                weights: Some(ds.weights().to_vec()),
                types: labels,
                capacities: CapacityValues::from_spec(&inst.capacities),
            };
            let mut s = serde_json::to_string_pretty(&raw)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = (1..=ds.dim()).map(|k| format!("x{k}")).collect();
            header.push("w".into());
            if labels.is_some() {
                header.push("type".into());
            }
            w.write_record(&header)?;
            for i in 0..ds.len() {
                let mut row: Vec<String> = ds.point(i).iter().map(|v| v.to_string()).collect();
                row.push(ds.weights()[i].to_string());
                if let Some(l) = &labels {
                    row.push(l[i].to_string());
                }
                w.write_record(&row)?;
            }
            w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?
        }
    };
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}

/// Reads shipments from a CSV file with columns `t_start`, `t_end` and
/// `type`.
pub fn read_shipments(path: &Path) -> Result<Shipments> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(&shown, 1, format!("missing column `{name}`")))
    };
    let (cs, ce, ct) = (col("t_start")?, col("t_end")?, col("type")?);
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let num = |c: usize| {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| CliError::parse(&shown, line, format!("`{raw}` is not a number")))
        };
        let (a, b) = (num(cs)?, num(ce)?);
        if !(a <= b) {
            return Err(CliError::parse(&shown, line, format!("window ends before it starts: {a} > {b}")));
        }
        windows.push((a, b));
        let raw = record.get(ct).unwrap_or("");
        labels.push(
            raw.parse::<u64>()
                .map_err(|_| CliError::parse(&shown, line, format!("`{raw}` is not a type label")))?,
        );
    }
    let (types, distinct) = index_labels(&labels);
    Ok(Shipments {
        windows,
        types,
        num_types: distinct.len(),
    })
}
