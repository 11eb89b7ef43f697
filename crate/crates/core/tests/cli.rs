mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use windbias::data::{save_observations, WEEK_S};
use windbias::simulate::{example_tracks, simulate, SimConfig};
use windbias::{FitResult, ObservationSet, Sensor};

fn windbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windbias"))
        .args(args)
        .env_remove("WINDBIAS_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn failed(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(1), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_sim(seed: u64) -> SimConfig {
    sim_config(0.15, 300, 150, seed)
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

#[test]
fn simulate_is_reproducible_and_reports_bad_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    write_json(&cfg, &small_sim(3));
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let msg = ok(&windbias(&["simulate", "--config", p(&cfg), "--out", p(&a)]));
    assert!(msg.contains("600 observations"), "{msg}");
    ok(&windbias(&["simulate", "--config", p(&cfg), "--out", p(&b), "--truth", p(&dir.path().join("t.json"))]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let truth: SimConfig = serde_json::from_slice(&std::fs::read(dir.path().join("a.csv.truth.json")).unwrap()).unwrap();
    assert_eq!(truth, small_sim(3));

    let missing = dir.path().join("nope.json");
    let err = failed(&windbias(&["simulate", "--config", p(&missing), "--out", p(&a)]));
    assert!(err.starts_with("error:") && err.contains("nope.json"), "{err}");
}

#[test]
fn fit_prints_what_it_saves() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    save_observations(&simulate(&small_sim(4)).unwrap(), &data).unwrap();
    let cfg = dir.path().join("fit.json");
    std::fs::write(&cfg, r#"{"m": 10}"#).unwrap();
    let out = dir.path().join("r.json");
    let table = ok(&windbias(&["fit", "--data", p(&data), "--config", p(&cfg), "--out", p(&out)]));
    let fit: FitResult = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(fit.provenance.m, 10);
    let b = &fit.bias_summary;
    for (label, v) in [
        ("starboard-reference", b.starboard.value),
        ("port-reference", b.port.value),
        ("port-starboard", b.port_minus_starboard.value),
        ("sqrt2_sigma", b.difference_sd.value),
    ] {
        let line = table.lines().find(|l| l.starts_with(label)).unwrap();
        let printed: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(printed, v, "{label}");
    }

    // an iteration cap is not an error
    std::fs::write(&cfg, r#"{"m": 10, "max_iter": 1}"#).unwrap();
    let table = ok(&windbias(&["fit", "--data", p(&data), "--config", p(&cfg), "--out", p(&out)]));
    assert!(table.contains("converged: false"));
    let fit: FitResult = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(!fit.converged);
}

#[test]
fn fit_refuses_unusable_data() {
    let dir = tempfile::tempdir().unwrap();
    let set = simulate(&small_sim(5)).unwrap();
    let out = dir.path().join("r.json");

    let tiny = dir.path().join("tiny.csv");
    save_observations(&ObservationSet::new(set.observations()[..40].to_vec()), &tiny).unwrap();
    let err = failed(&windbias(&["fit", "--data", p(&tiny), "--out", p(&out)]));
    assert!(err.contains("50"), "{err}");

    let only_ref = dir.path().join("ref.csv");
    save_observations(&set.filter(|o| o.sensor.is_reference()), &only_ref).unwrap();
    let err = failed(&windbias(&["fit", "--data", p(&only_ref), "--out", p(&out)]));
    assert!(err.contains("starboard") || err.contains("port"), "{err}");
    assert!(!out.exists());
}

#[test]
fn match_counts_constructed_crossings() {
    let dir = tempfile::tempdir().unwrap();
    let mut cyg = Vec::new();
    let mut reference = Vec::new();
    // crossings in windows 0, 2, 4, ...; near misses (40 km) in the odd ones
    for w in 0..10 {
        let t = 7200.0 * w as f64 + 600.0;
        let lat = if w % 2 == 0 { 0.05 } else { 0.36 };
        for (sensor, dw) in [(Sensor::Starboard, -0.2), (Sensor::Port, -0.3)] {
            cyg.push(obs(t, 30.0, 0.0, 8.0 + dw, sensor, "cyg03"));
        }
        reference.push(obs(t + 100.0, 30.0, lat, 8.0, Sensor::Reference, "jas3"));
    }
    let (c, r) = (dir.path().join("c.csv"), dir.path().join("r.csv"));
    save_observations(&ObservationSet::new(cyg), &c).unwrap();
    save_observations(&ObservationSet::new(reference), &r).unwrap();
    let out_dir = dir.path().join("m");
    let msg = ok(&windbias(&["match", "--cyg", p(&c), "--ref", p(&r), "--out-dir", p(&out_dir)]));
    assert!(msg.contains("cyg03 starboard: 5 pairs"), "{msg}");

    let mut summary = csv::Reader::from_path(out_dir.join("match_summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = summary.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][1], "starboard");
    assert_eq!(rows[0][3].parse::<usize>().unwrap(), 5);
    assert!((rows[0][4].parse::<f64>().unwrap() + 0.2).abs() < 1e-12);
    assert!((rows[1][4].parse::<f64>().unwrap() + 0.3).abs() < 1e-12);
    let pairs = std::fs::read_to_string(out_dir.join("pairs_cyg03_port.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 6);
    assert!(out_dir.join("bins_cyg03_starboard.csv").exists());

    let zero = dir.path().join("z");
    let msg = ok(&windbias(&["match", "--cyg", p(&c), "--ref", p(&r), "--max-km", "0", "--out-dir", p(&zero)]));
    assert!(msg.contains("starboard: no collocations"), "{msg}");
    let summary = std::fs::read_to_string(zero.join("match_summary.csv")).unwrap();
    assert!(summary.contains("cyg03,starboard,no_collocations,0"));
}

/// Two platforms with their own biases plus one with too little data, over
/// two weeks; writes the input files and the campaign spec.
fn campaign_inputs(dir: &Path, out_name: &str, threads: Option<usize>) -> std::path::PathBuf {
    let weeks = [0.0, WEEK_S];
    let mut reference = Vec::new();
    let mut platforms: Vec<Vec<_>> = vec![Vec::new(); 3];
    for (w, &start) in weeks.iter().enumerate() {
        let mut tracks = example_tracks(start, 0.15, &["cyg01", "cyg02"], 0.15 * 86_400.0 / 300.0, 0.15 * 86_400.0 / 150.0);
        tracks[1].starboard_bias = Some(-0.9);
        tracks[2].starboard_bias = Some(-0.3);
        let config = SimConfig { tracks, seed: 40 + w as u64, ..small_sim(0) };
        for o in simulate(&config).unwrap().into_observations() {
            match o.platform.as_str() {
                "jas3" => reference.push(o),
                "cyg01" => platforms[0].push(o),
                _ => platforms[1].push(o),
            }
        }
        for k in 0..10 {
            platforms[2].push(obs(start + 60.0 * k as f64, 0.0, 0.0, 5.0, Sensor::Starboard, "cyg08"));
        }
    }
    save_observations(&ObservationSet::new(reference), &dir.join("jas3.csv")).unwrap();
    for (name, obs) in ["cyg01", "cyg02", "cyg08"].iter().zip(platforms) {
        save_observations(&ObservationSet::new(obs), &dir.join(format!("{name}.csv"))).unwrap();
    }
    let spec = serde_json::json!({
        "reference": ["jas3.csv"],
        "platforms": [
            {"name": "cyg01", "files": ["cyg01.csv"]},
            {"name": "cyg02", "files": ["cyg02.csv"]},
            {"name": "cyg08", "files": ["cyg08.csv"]}
        ],
        "weeks": weeks,
        "fit": {"m": 10},
        "subsample_per_source": 400,
        "seed": 11,
        "output_dir": out_name,
        "threads": threads,
    });
    let path = dir.join(format!("{out_name}.json"));
    write_json(&path, &spec);
    path
}

#[test]
fn campaign_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec_a = campaign_inputs(dir.path(), "run_a", Some(1));
    let spec_b = campaign_inputs(dir.path(), "run_b", Some(3));
    let msg = ok(&windbias(&["campaign", "--spec", p(&spec_a)]));
    assert!(msg.starts_with("6 fits (2 failed"), "{msg}");
    ok(&windbias(&["--threads", "2", "campaign", "--spec", p(&spec_b)]));

    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    for f in ["summary.csv", "empirical.csv", "fits/cyg01_w00.json", "fits/cyg02_w01.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!a.join("fits/cyg08_w00.json").exists());

    let mut reader = csv::Reader::from_path(a.join("summary.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>().join(","), windbias::campaign::SUMMARY_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        match &row[0] {
            "cyg08" => {
                assert_eq!(&row[3], "failed");
                assert!(!row[16].is_empty());
            }
            _ => {
                assert_eq!(&row[3], "ok");
                assert_eq!(&row[13], "true");
            }
        }
    }
    let c2 = |platform: &str| -> f64 {
        let v: Vec<f64> = rows.iter().filter(|r| &r[0] == platform).map(|r| r[5].parse().unwrap()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(c2("cyg01") < c2("cyg02"));

    // a stray file that is not a fit result is reported, not fatal
    std::fs::write(a.join("fits/broken.json"), "{").unwrap();
    let tables = dir.path().join("tables");
    let msg = ok(&windbias(&["report", "--results", p(&a), "--out-dir", p(&tables)]));
    assert!(msg.starts_with("4 fit results, 1 skipped"), "{msg}");
    assert!(std::fs::read_to_string(tables.join("skipped.txt")).unwrap().contains("broken.json"));

    let weekly = std::fs::read_to_string(tables.join("weekly_biases.csv")).unwrap();
    assert_eq!(weekly.lines().count(), 1 + 8);
    assert_eq!(weekly.lines().filter(|l| l.contains(",starboard,")).count(), 4);
    assert_eq!(weekly.lines().filter(|l| l.contains(",port,")).count(), 4);

    for name in ["port_minus_starboard_sorted.csv", "difference_sd_sorted.csv"] {
        let mut r = csv::Reader::from_path(tables.join(name)).unwrap();
        let rows: Vec<(String, f64)> =
            r.records().map(|x| x.unwrap()).map(|x| (x[0].to_string(), x[3].parse().unwrap())).collect();
        assert_eq!(rows.len(), 4);
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                assert!(w[0].1 <= w[1].1, "{name} not sorted");
            }
        }
    }

    let mut r = csv::Reader::from_path(tables.join("model_vs_empirical.csv")).unwrap();
    for row in r.records().map(Result::unwrap) {
        let (platform, antenna) = (&row[0], &row[1]);
        let col = if antenna == "starboard" { 5 } else { 7 };
        let weekly: Vec<f64> = rows.iter().filter(|r| &r[0] == platform).map(|r| r[col].parse().unwrap()).collect();
        let mean = weekly.iter().sum::<f64>() / weekly.len() as f64;
        assert!((row[2].parse::<f64>().unwrap() - mean).abs() <= 1e-9, "{platform} {antenna}");
        assert_eq!(row[3].parse::<usize>().unwrap(), 2);
    }
}
