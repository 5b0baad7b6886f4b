use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use ssar::svg::{boundary_pixels, parse_window};

fn shipped() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/ieee39_wind.case")
}

fn ssar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssar")).args(args).env_remove("SSAR_WORKERS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

#[test]
fn validate_exit_codes() {
    let case = shipped();
    let ok = ssar(&["validate", case.to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));

    let missing = ssar(&["validate", "/nonexistent/case.case"]);
    assert_eq!(code(&missing), 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.case");
    let text = std::fs::read_to_string(&case).unwrap();
    let line = text.lines().find(|l| l.starts_with("gamma")).unwrap();
    std::fs::write(&bad, text.replace(line, "gamma = 0 0 0.1 0.1 0.05 0.05 0.1 0.1 0.1 0.3")).unwrap();
    let out = ssar(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma must sum to 1"));

    let garbled = dir.path().join("garbled.case");
    std::fs::write(&garbled, "[case]\nbase_mva = lots\n").unwrap();
    assert_eq!(code(&ssar(&["validate", garbled.to_str().unwrap()])), 2);
}

#[test]
fn usage_errors() {
    let case = shipped();
    let c = case.to_str().unwrap();
    assert_eq!(code(&ssar(&["assess", c, "--samples", "0"])), 2);
    let out = ssar(&["profile", c, "--pair", "1", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--pair"));
    assert_eq!(code(&ssar(&["profile", c, "--pair", "1", "4"])), 2);
    assert_eq!(code(&ssar(&["curtail", c, "--adjust", "W9=-0.1"])), 2);
}

#[test]
fn assess_is_deterministic_across_workers() {
    let case = shipped();
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (i, w) in ["1", "2", "8", "2"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let out = ssar(&[
            "--workers",
            w,
            "assess",
            case.to_str().unwrap(),
            "--samples",
            "300",
            "--seed",
            "42",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let report = json(&out_dir.join("report.json"));
        let manifest = json(&out_dir.join("manifest.json"));
        assert_eq!(manifest["workers"].as_u64().unwrap().to_string(), *w);
        assert_eq!(manifest["seed_source"], "flag");
        assert_eq!(report["manifest_id"], manifest["manifest_id"]);
        let n_out = report["n_out"].as_u64().unwrap() as f64;
        let n_total = report["n_total"].as_u64().unwrap() as f64;
        assert_eq!(report["p_instab"].as_f64().unwrap(), n_out / n_total);
        let scenarios = std::fs::read(out_dir.join("scenarios.csv")).unwrap();
        reports.push((without_timing(report), scenarios, manifest["manifest_id"].clone()));
    }
    for r in &reports[1..] {
        assert_eq!(r.0, reports[0].0);
        assert_eq!(r.1, reports[0].1);
        assert_eq!(r.2, reports[0].2);
    }

    // the written scenarios reproduce the result when read back
    let again = dir.path().join("from_csv");
    let csv = dir.path().join("run0/scenarios.csv");
    let out = ssar(&[
        "assess",
        case.to_str().unwrap(),
        "--scenarios",
        csv.to_str().unwrap(),
        "--seed",
        "42",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&again.join("report.json"));
    assert_eq!(r["n_out"], reports[0].0["n_out"]);
    assert_eq!(r["eta"], reports[0].0["eta"]);
}

#[test]
fn case_seed_is_used_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssar(&["assess", shipped().to_str().unwrap(), "--samples", "20", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["seed_source"], "case");
    assert_eq!(m["seed"], 20241);
    let digests: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert_eq!(digests, ["report.json", "scenarios.csv", "eus.json"]);
}

#[test]
fn profile_csv_matches_plot() {
    let dir = tempfile::tempdir().unwrap();
    let svg_path = dir.path().join("plane.svg");
    let out = ssar(&[
        "profile",
        shipped().to_str().unwrap(),
        "--pair",
        "1",
        "2",
        "--grid",
        "24",
        "--samples",
        "500",
        "--plot",
        svg_path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut gaps = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        match &rec[1] {
            "boundary" => points.push((rec[2].parse::<f64>().unwrap(), rec[3].parse::<f64>().unwrap())),
            "gap" => {
                gaps += 1;
                assert!(!rec[8].is_empty(), "gap rows carry a note");
            }
            s => panic!("status {s}"),
        }
    }
    assert_eq!(points.len() + gaps, 24);
    assert!(points.len() >= 6);

    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.contains("width=\"800\" height=\"600\""));
    let w = parse_window(&svg).unwrap();
    let drawn: Vec<(f64, f64)> = boundary_pixels(&svg).into_iter().map(|(x, y)| w.from_pixel(x, y)).collect();
    let (sx, sy) = (w.x_max - w.x_min, w.y_max - w.y_min);
    for (x, y) in &points {
        let best = drawn
            .iter()
            .map(|(u, v)| ((u - x) / sx).abs().max(((v - y) / sy).abs()))
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 0.005, "({x}, {y}) is {best} of the axis span from the plot");
    }
    for (u, v) in &drawn {
        assert!(points.iter().any(|(x, y)| ((u - x) / sx).abs() <= 0.005 && ((v - y) / sy).abs() <= 0.005));
    }

    let p = json(&dir.path().join("profile.json"));
    let eta = p["eta"].as_f64().unwrap();
    let t = &p["tangency"];
    assert!(t["eta_star"].as_f64().unwrap() > 0.0);
    assert!(t["eta_star"].as_f64().unwrap() < eta);
}

fn curtail_rows(dir: &Path, extra: &[&str]) -> (Vec<csv::StringRecord>, String) {
    let case = shipped();
    let mut args = vec!["curtail", case.to_str().unwrap(), "--samples", "200", "--seed", "3", "--out"];
    args.push(dir.to_str().unwrap());
    args.extend_from_slice(extra);
    let out = ssar(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("curtail.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["rank", "d_W1", "d_W2", "d_W3", "p_instab", "n_out", "n_total", "status"]
    );
    (rdr.records().map(Result::unwrap).collect(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn curtailment_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, _) = curtail_rows(
        &dir.path().join("four"),
        &["--adjust", "W1=-0.2", "--adjust", "W2=-0.2", "--adjust", "W1=-0.1,W2=-0.1", "--adjust", "3=-0.2"],
    );
    assert_eq!(rows.len(), 5);
    let p: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[0] <= w[1]));
    assert!(rows.iter().any(|r| (1..4).all(|i| r[i].parse::<f64>().unwrap() == 0.0)));

    let (rows, _) = curtail_rows(&dir.path().join("none"), &[]);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][7], "ok");

    let (rows, stderr) =
        curtail_rows(&dir.path().join("dup"), &["--adjust", "W1=-0.2", "--adjust", "W1=-0.2", "--adjust", "W1=0"]);
    assert_eq!(rows.len(), 2);
    assert!(stderr.contains("duplicate"));
}

#[test]
fn boundary_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssar(&[
        "boundary",
        shipped().to_str().unwrap(),
        "--samples",
        "500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let b = json(&dir.path().join("boundary.json"));
    assert_eq!(b["quadratic"]["space"], "wind");
    assert!(b["quadratic"]["trust_radius"].as_f64().unwrap() > 0.0);
    assert!(b["expansion"]["max_real"].as_f64().unwrap().abs() <= 1e-6);
    assert_eq!(b["tangency"]["margins"].as_array().unwrap().len(), 3);
}
