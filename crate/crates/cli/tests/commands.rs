use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use capanneal_cli::ppm::{read_ppm, write_ppm, RgbImage};

fn capanneal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capanneal"))
        .args(args)
        .env_remove("CAP_ANNEAL_SEED")
        .output()
        .expect("binary runs")
}

fn solution(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("solution.json")).unwrap()).unwrap()
}

#[test]
fn cluster_vehicle_instance_meets_capacities() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = capanneal(&["cluster", "--k", "6", "--capacities", "10,12,12,8,11,7", "--out", out]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let sol = solution(dir.path());
    assert!(sol["residual"].as_f64().unwrap() <= 1e-3);
    assert_eq!(sol["mode"], "sized");
    let masses: Vec<f64> = sol["masses"]["per_cluster"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (m, c) in masses.iter().zip([10.0, 12.0, 12.0, 8.0, 11.0, 7.0]) {
        assert!((m - c / 60.0).abs() <= 1e-3);
    }
    let trajectory = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), sol["outer_steps"].as_u64().unwrap() as usize + 1);
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let run = capanneal(&["cluster", "--k", "6", "--capacities", "10,12,12,8,11,7", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(run.status.code(), Some(0));
    }
    for name in ["solution.json", "assignments.csv", "trajectory.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_capanneal"))
        .args(["cluster", "--mode", "none", "--k", "3", "--out", dir.path().to_str().unwrap()])
        .env("CAP_ANNEAL_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(solution(dir.path())["seed"], 42);
}

#[test]
fn cluster_reads_instance_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pts.csv");
    fs::write(&csv, "x1,x2,w\n0,0,1\n0.2,0,1\n5,5,2\n5.1,5,2\n").unwrap();
    let out = dir.path().join("out");
    let run = capanneal(&["cluster", csv.to_str().unwrap(), "--k", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let sol = solution(&out);
    assert!(sol["distortion"].as_f64().unwrap() < 0.01);

    let json = dir.path().join("inst.json");
    fs::write(&json, r#"{"name": "typed", "points": [[0], [1], [9], [10]], "types": [0, 1, 0, 1],
                        "capacities": [[1, 1], [1, 1]]}"#)
        .unwrap();
    let run = capanneal(&["cluster", json.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(solution(&out)["mode"], "typed");
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x1\n0\nnope\n").unwrap();
    let run = capanneal(&["cluster", bad.to_str().unwrap(), "--k", "1", "--out", out]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains(":3:"));

    assert_eq!(capanneal(&["cluster", "--k", "2", "--frobnicate"]).status.code(), Some(1));
    let conflict = capanneal(&["cluster", "--mode", "none", "--capacities", "1,2", "--out", out]);
    assert_eq!(conflict.status.code(), Some(1));
    let mismatch = capanneal(&["cluster", "--k", "4", "--capacities", "1,2", "--out", out]);
    assert_eq!(mismatch.status.code(), Some(1));
    let p5 = dir.path().join("gray.ppm");
    fs::write(&p5, b"P5\n1 1\n255\n\x00").unwrap();
    let run = capanneal(&["segment", p5.to_str().unwrap(), "--k", "1", "--out", out]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("unsupported format"));
}

#[test]
fn non_convergence_exits_with_two_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = capanneal(&[
        "cluster", "--k", "6", "--capacities", "10,12,12,8,11,7", "--max-inner", "1",
        "--beta-init", "0.01", "--beta-max", "0.02", "--beta-growth", "1.5", "--out", out,
    ]);
    assert_eq!(run.status.code(), Some(2), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(solution(dir.path())["converged"], false);
}

#[test]
fn pickup_prints_the_per_type_table() {
    let dir = tempfile::tempdir().unwrap();
    let run = capanneal(&["pickup", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("100 shipments, 3 types, 10 vehicles"));
    // Every table row: vehicle, then (found, target) pairs for three types.
    let rows: Vec<Vec<f64>> = stdout
        .lines()
        .filter_map(|l| {
            let v: Vec<f64> = l.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            (v.len() == 7).then_some(v)
        })
        .collect();
    assert_eq!(rows.len(), 10);
    for r in rows {
        for t in 0..3 {
            assert!((r[1 + 2 * t] - r[2 + 2 * t]).abs() <= 1e-3, "{r:?}");
        }
    }
    let assignments = fs::read_to_string(dir.path().join("assignments.csv")).unwrap();
    assert!(assignments.starts_with("index,cluster,t_start,t_end,type,p0"));
}

#[test]
fn pickup_reads_shipment_files() {
    let dir = tempfile::tempdir().unwrap();
    let ship = dir.path().join("ship.csv");
    let mut body = String::from("t_start,t_end,type\n");
    for i in 0..12 {
        body.push_str(&format!("{},{},{}\n", i * 10, i * 10 + 30, i % 2 + 1));
    }
    fs::write(&ship, body).unwrap();
    let run = capanneal(&["pickup", ship.to_str().unwrap(), "--k", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("12 shipments, 2 types, 3 vehicles"));
}

#[test]
fn segment_writes_a_k_color_image() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    let pixels = (0..60 * 40)
        .map(|i: usize| {
            let (x, y) = (i % 60, i / 60);
            [(x * 4) as u8, (y * 6) as u8, ((x + y) * 2) as u8]
        })
        .collect();
    write_ppm(&RgbImage::new(60, 40, pixels).unwrap(), &input).unwrap();
    let out = dir.path().join("out");
    let run = capanneal(&[
        "segment", input.to_str().unwrap(), "--k", "8", "--pixelate", "30x20", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let seg = read_ppm(&out.join("segmented.ppm")).unwrap();
    let colors: std::collections::BTreeSet<_> = seg.pixels.iter().copied().collect();
    assert!(colors.len() <= 8);
    let small = read_ppm(&out.join("pixelated.ppm")).unwrap();
    assert_eq!((small.width, small.height), (30, 20));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("segment.json")).unwrap()).unwrap();
    let palette: Vec<[u8; 3]> = serde_json::from_value(report["palette"].clone()).unwrap();
    assert!(small.pixels.iter().all(|p| palette.contains(p)));
    assert!(colors.iter().all(|p| palette.contains(p)));
}

#[test]
fn bench_prints_a_comparison_table() {
    let run = capanneal(&["bench", "--trials", "3", "--lloyd-runs", "3"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.lines().next().unwrap().contains("lloyd_median"));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("random-")).count(), 3);

    let sized = capanneal(&["bench", "--trials", "2", "--lloyd-runs", "3", "--capacities", "1,1"]);
    assert_eq!(sized.status.code(), Some(0), "{}", String::from_utf8_lossy(&sized.stderr));
    let stdout = String::from_utf8_lossy(&sized.stdout);
    let row = stdout.lines().find(|l| l.starts_with("random-0")).unwrap();
    assert!(!row.split_whitespace().any(|c| c == "-"), "{row}");
}
