//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use capanneal_core::synthetic::{self, Shipments};
use capanneal_core::{
    anneal, AnnealConfig, BetaInit, BetaMax, CapacitySpec, Dataset, SolveReport, TypedAssoc,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compare::{compare, format_table};
use crate::error::{CliError, Result};
use crate::instance::{read_instance, read_shipments, CapacityValues, Format};
use crate::ppm::{read_ppm, write_ppm};
use crate::report::{write_report, ReportContext};
use crate::segment::segment_image;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "capanneal", version, about = "Capacity-constrained deterministic annealing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cluster an instance file, or the synthetic 60-customer vehicle instance.
    Cluster {
        /// CSV or JSON instance.
        instance: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Segment a PPM image into K colors.
    Segment {
        /// P3 or P6 pixmap.
        input: PathBuf,
        /// Also write a pixelated image of the given size, e.g. 30x20.
        #[arg(long, value_parser = parse_size)]
        pixelate: Option<(usize, usize)>,
        #[command(flatten)]
        common: Common,
    },
    /// Assign typed pickup shipments to vehicles.
    Pickup {
        /// CSV with t_start, t_end and type columns; generated when absent.
        shipments: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare annealing with Lloyd, fixed-weight annealing and the oracles.
    Bench {
        /// Instance file; random instances are generated when absent.
        instance: Option<PathBuf>,
        /// Number of generated instances.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Points per generated instance.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Lloyd initializations per instance.
        #[arg(long, default_value_t = 10)]
        lloyd_runs: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    None,
    Sized,
    Typed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pooling {
    Restricted,
    Pooled,
}

#[derive(Debug, Args)]
struct Common {
    /// Number of clusters.
    #[arg(long)]
    k: Option<usize>,
    /// `auto` or a positive value.
    #[arg(long, default_value = "auto")]
    beta_init: String,
    #[arg(long, default_value_t = 1.05)]
    beta_growth: f64,
    /// `auto` or a value.
    #[arg(long, default_value = "auto")]
    beta_max: String,
    /// Inner-loop tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, env = "CAP_ANNEAL_SEED", default_value_t = 0)]
    seed: u64,
    /// Step scale of the location update.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Inner iterations allowed per annealing step.
    #[arg(long, default_value_t = 2000)]
    max_inner: usize,
    /// Capacities as a file, a list `a,b,c` or a matrix `a,b;c,d`.
    #[arg(long, allow_hyphen_values = true)]
    capacities: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum, default_value = "restricted")]
    typed_assoc: Pooling,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(w)?, num(h)?))
}

fn parse_beta(s: &str, flag: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::Usage(format!("{flag} expects `auto` or a number, got `{s}`")))
}

impl Common {
    fn config(&self) -> Result<AnnealConfig> {
        let cfg = AnnealConfig {
            beta_init: parse_beta(&self.beta_init, "--beta-init")?.map_or(BetaInit::Auto, BetaInit::Value),
            beta_growth: self.beta_growth,
            beta_max: parse_beta(&self.beta_max, "--beta-max")?.map_or(BetaMax::Auto, BetaMax::Value),
            inner_tol: self.tol,
            inner_max_iters: self.max_inner,
            sigma: self.sigma,
            rng_seed: self.seed,
            typed_assoc: match self.typed_assoc {
                Pooling::Restricted => TypedAssoc::Restricted,
                Pooling::Pooled => TypedAssoc::Pooled,
            },
            ..AnnealConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn capacity_flag(&self) -> Result<Option<CapacitySpec>> {
        self.capacities
            .as_deref()
            .map(|c| CapacityValues::parse(c)?.to_spec())
            .transpose()
    }

    /// Resolves capacities, mode and K against each other.
    fn resolve(&self, ds: &Dataset, from_file: CapacitySpec) -> Result<(CapacitySpec, usize, &'static str)> {
        let cap = self.capacity_flag()?.unwrap_or(from_file);
        let implied = match cap {
            CapacitySpec::None => Mode::None,
            CapacitySpec::PerCluster(_) => Mode::Sized,
            CapacitySpec::PerClusterPerType(_) => Mode::Typed,
        };
        let mode = self.mode.unwrap_or(implied);
        if mode != implied {
            let have = match implied {
                Mode::None => "no capacities",
                Mode::Sized => "per-cluster capacities",
                Mode::Typed => "per-type capacities",
            };
            return Err(CliError::Usage(format!("--mode {} conflicts with {have}", mode_name(mode))));
        }
        let k = match (self.k, cap.num_clusters()) {
            (Some(k), Some(c)) if k != c => {
                return Err(CliError::Usage(format!("--k {k} but the capacities describe {c} clusters")))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(CliError::Usage("--k is required without capacities".into())),
        };
        cap.check(ds, k)?;
        Ok((cap, k, mode_name(mode)))
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::None => "none",
        Mode::Sized => "sized",
        Mode::Typed => "typed",
    }
}

fn finish(report: &SolveReport, ctx: &ReportContext, dir: &Path) -> Result<i32> {
    for path in write_report(report, ctx, dir)? {
        println!("wrote {}", path.display());
    }
    if report.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: inner loop did not converge at the final annealing step");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn print_summary(report: &SolveReport, cap: &CapacitySpec) {
    println!(
        "final beta {:.6e}, {} annealing steps, distortion {:.6e}, residual {:.3e}",
        report.final_state.beta,
        report.trajectory.len(),
        report.distortion,
        report.residual
    );
    if let CapacitySpec::PerCluster(l) = cap {
        println!("{:>7} {:>12} {:>12}", "cluster", "mass", "capacity");
        for (j, (m, c)) in report.masses.per_cluster.iter().zip(l).enumerate() {
            println!("{j:>7} {m:>12.8} {c:>12.8}");
        }
    }
}

fn cluster(instance: Option<PathBuf>, common: &Common) -> Result<i32> {
    let cfg = common.config()?;
    let (ds, file_cap) = match &instance {
        Some(path) => {
            let inst = read_instance(path, Format::from_path(path)?)?;
            (inst.dataset, inst.capacities)
        }
        None if common.mode == Some(Mode::None) => (synthetic::vehicle_customers(common.seed)?, CapacitySpec::None),
        None => synthetic::vehicle_instance(common.seed)?,
    };
    let (cap, k, mode) = common.resolve(&ds, file_cap)?;
    let report = anneal(&ds, k, &cap, &cfg)?;
    print_summary(&report, &cap);
    let ctx = ReportContext {
        dataset: &ds,
        capacities: &cap,
        config: &cfg,
        mode,
        windows: None,
    };
    finish(&report, &ctx, &common.out)
}

fn segment(input: &Path, pixelate: Option<(usize, usize)>, common: &Common) -> Result<i32> {
    if common.capacities.is_some() || matches!(common.mode, Some(Mode::Sized | Mode::Typed)) {
        return Err(CliError::Usage("segmentation is unconstrained".into()));
    }
    let k = common.k.ok_or_else(|| CliError::Usage("--k is required".into()))?;
    let cfg = common.config()?;
    let img = read_ppm(input)?;
    let seg = segment_image(&img, k, &cfg, None)?;
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
    let out_img = common.out.join("segmented.ppm");
    write_ppm(&seg.image, &out_img)?;
    println!("wrote {}", out_img.display());
    if let Some((w, h)) = pixelate {
        let small = crate::segment::pixelate_image(&img, &seg.palette, w, h)?;
        let path = common.out.join("pixelated.ppm");
        write_ppm(&small, &path)?;
        println!("wrote {}", path.display());
    }
    let r = &seg.report;
    println!(
        "{}x{} image, {} distinct colors, {} output colors, distortion {:.6e}",
        img.width, img.height, r.distinct_colors, r.output_colors, r.distortion
    );
    println!(
        "compression: palette {:.1}x, palette plus index map {:.2}x",
        r.palette_compression, r.indexed_compression
    );
    let path = common.out.join("segment.json");
    let mut body = serde_json::to_string_pretty(r)?;
    body.push('\n');
    std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    println!("wrote {}", path.display());

    let (ds, _) = crate::segment::color_dataset(&img)?;
    let ctx = ReportContext {
        dataset: &ds,
        capacities: &CapacitySpec::None,
        config: &cfg,
        mode: "none",
        windows: None,
    };
    finish(&seg.solve, &ctx, &common.out)
}

/// Conditional masses `p(y_j | k)` next to their targets `λ_jk / p(k)`.
pub fn per_type_table(report: &SolveReport, ds: &Dataset, cap: &CapacitySpec) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let (Some(m), CapacitySpec::PerClusterPerType(l)) = (&report.masses.per_type, cap) else {
        return out;
    };
    let tw = ds.type_weights();
    let _ = write!(out, "{:>7}", "vehicle");
    for t in 0..tw.len() {
        let _ = write!(out, " {:>11} {:>11}", format!("p(y|{t})"), format!("target{t}"));
    }
    out.push('\n');
    for j in 0..m.nrows() {
        let _ = write!(out, "{j:>7}");
        for t in 0..tw.len() {
            let _ = write!(out, " {:>11.8} {:>11.8}", m[[j, t]] / tw[t], l[[j, t]] / tw[t]);
        }
        out.push('\n');
    }
    out
}

fn pickup(shipments: Option<PathBuf>, common: &Common) -> Result<i32> {
    let cfg = common.config()?;
    let (ship, ds, generated) = match &shipments {
        Some(path) => {
            let s: Shipments = read_shipments(path)?;
            let ds = s.dataset()?;
            (s, ds, None)
        }
        None => {
            let (s, ds, cap) = synthetic::pickup_instance(common.seed)?;
            (s, ds, Some(cap))
        }
    };
    let cap = match (common.capacity_flag()?, generated) {
        (Some(c), _) => c,
        (None, Some(c)) if common.k.is_none_or(|k| c.num_clusters() == Some(k)) => c,
        (None, _) => {
            let k = common.k.unwrap_or(synthetic::PICKUP_VEHICLES);
            synthetic::random_type_capacities(&ds, k, common.seed.wrapping_add(1))?
        }
    };
    if matches!(common.mode, Some(Mode::None | Mode::Sized)) || !matches!(cap, CapacitySpec::PerClusterPerType(_)) {
        return Err(CliError::Usage("pickup needs typed capacities".into()));
    }
    let (cap, k, mode) = common.resolve(&ds, cap)?;
    let report = anneal(&ds, k, &cap, &cfg)?;
    println!(
        "{} shipments, {} types, {} vehicles",
        ship.windows.len(),
        ship.num_types,
        k
    );
    print_summary(&report, &cap);
    print!("{}", per_type_table(&report, &ds, &cap));
    let ctx = ReportContext {
        dataset: &ds,
        capacities: &cap,
        config: &cfg,
        mode,
        windows: Some(&ship.windows),
    };
    finish(&report, &ctx, &common.out)
}

fn bench(instance: Option<PathBuf>, trials: usize, n: usize, lloyd_runs: usize, common: &Common) -> Result<i32> {
    let cfg = common.config()?;
    let mut rows = Vec::new();
    match &instance {
        Some(path) => {
            let inst = read_instance(path, Format::from_path(path)?)?;
            let (cap, k, _) = common.resolve(&inst.dataset, inst.capacities)?;
            let label = inst.name.unwrap_or_else(|| path.display().to_string());
            rows.push(compare(&label, &inst.dataset, k, &cap, &cfg, lloyd_runs)?);
        }
        None => {
            let k = common.k.unwrap_or(2);
            let cap = match common.capacity_flag()? {
                Some(c) => c,
                None if common.mode == Some(Mode::Sized) => CapacitySpec::per_cluster(&vec![1.0; k])?,
                None => CapacitySpec::None,
            };
            let k = cap.num_clusters().unwrap_or(k);
            if common.k.is_some_and(|kk| kk != k) {
                return Err(CliError::Usage(format!("--k conflicts with {k} capacities")));
            }
            if matches!(cap, CapacitySpec::PerClusterPerType(_)) || common.mode == Some(Mode::Typed) {
                return Err(CliError::Usage("generated bench instances have no types".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            for t in 0..trials {
                let pts = synthetic::uniform_points(n, 2, &mut rng);
                let ds = Dataset::from_rows(&pts, None)?;
                cap.check(&ds, k)?;
                rows.push(compare(&format!("random-{t}"), &ds, k, &cap, &cfg, lloyd_runs)?);
            }
        }
    }
    print!("{}", format_table(&rows));
    let wins = rows.iter().filter(|r| r.anneal <= r.lloyd_median + 1e-9).count();
    let exact = rows
        .iter()
        .filter(|r| r.oracle.is_some_and(|o| (r.anneal - o).abs() <= 1e-6))
        .count();
    println!(
        "anneal <= lloyd median on {wins}/{}; matches the oracle on {exact}/{}",
        rows.len(),
        rows.iter().filter(|r| r.oracle.is_some()).count()
    );
    Ok(EXIT_OK)
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Cluster { instance, common } => cluster(instance, &common),
        Command::Segment {
            input,
            pixelate,
            common,
        } => segment(&input, pixelate, &common),
        Command::Pickup { shipments, common } => pickup(shipments, &common),
        Command::Bench {
            instance,
            trials,
            n,
            lloyd_runs,
            common,
        } => bench(instance, trials, n, lloyd_runs, &common),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_betas() {
        assert_eq!(parse_size("30x20"), Ok((30, 20)));
        assert!(parse_size("30").is_err());
        assert_eq!(parse_beta("auto", "--beta-max").unwrap(), None);
        assert_eq!(parse_beta("12.5", "--beta-max").unwrap(), Some(12.5));
        assert!(parse_beta("hot", "--beta-max").is_err());
    }

    #[test]
    fn flags_reach_the_config() {
        let cli = Cli::try_parse_from([
            "capanneal", "cluster", "--k", "3", "--beta-init", "0.5", "--beta-growth", "1.2",
            "--beta-max", "100", "--tol", "1e-7", "--seed", "9", "--sigma", "0.8",
            "--typed-assoc", "pooled",
        ])
        .unwrap();
        let Command::Cluster { common, .. } = cli.command else { panic!() };
        let cfg = common.config().unwrap();
        assert_eq!(cfg.beta_init, BetaInit::Value(0.5));
        assert_eq!(cfg.beta_max, BetaMax::Value(100.0));
        assert_eq!((cfg.beta_growth, cfg.inner_tol, cfg.sigma, cfg.rng_seed), (1.2, 1e-7, 0.8, 9));
        assert_eq!(cfg.typed_assoc, TypedAssoc::Pooled);
    }

    #[test]
    fn conflicting_modes() {
        let ds = Dataset::from_scalars(&[0.0, 1.0, 2.0], None).unwrap();
        let parse = |args: &[&str]| {
            let mut all = vec!["capanneal", "cluster"];
            all.extend_from_slice(args);
            let Command::Cluster { common, .. } = Cli::try_parse_from(all).unwrap().command else { panic!() };
            common
        };
        let c = parse(&["--mode", "none", "--capacities", "1,2"]);
        assert!(c.resolve(&ds, CapacitySpec::None).is_err());
        let c = parse(&["--mode", "typed", "--capacities", "1,2"]);
        assert!(c.resolve(&ds, CapacitySpec::None).is_err());
        let c = parse(&["--k", "3", "--capacities", "1,2"]);
        assert!(c.resolve(&ds, CapacitySpec::None).is_err());
        let c = parse(&["--capacities", "1,2"]);
        let (_, k, mode) = c.resolve(&ds, CapacitySpec::None).unwrap();
        assert_eq!((k, mode), (2, "sized"));
        let c = parse(&[]);
        assert!(c.resolve(&ds, CapacitySpec::None).is_err());
    }
}
