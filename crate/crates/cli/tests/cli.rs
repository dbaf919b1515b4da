use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tickvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tickvol"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a series CSV.
fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("time"))
        .map(str::to_owned)
        .collect()
}

fn simulate(config: &Path, out: &Path, seed: &str) {
    let o = tickvol(&["simulate", "--config", s(config), "--out", s(out), "--seed", seed]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = root().join("configs/flat_vol.toml");
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    simulate(&cfg, &a, "1");
    simulate(&cfg, &b, "1");
    simulate(&cfg, &c, "2");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["subcommand"], "simulate");
}

#[test]
fn arrivals_file_fixes_tick_times() {
    let dir = tempfile::tempdir().unwrap();
    let arrivals = dir.path().join("arrivals.csv");
    simulate(&root().join("configs/oscillating_vol.toml"), &arrivals, "3");
    let text = fs::read_to_string(root().join("configs/oscillating_vol.toml")).unwrap();
    let start = text.find("[intensity]").unwrap();
    let end = start + text[start..].find("[noise]").unwrap();
    let cfg = dir.path().join("reuse.toml");
    fs::write(&cfg, format!("arrivals_file = \"arrivals.csv\"\n{}{}", &text[..start], &text[end..])).unwrap();
    let out = dir.path().join("out.csv");
    simulate(&cfg, &out, "4");
    let times = |p: &Path| rows(p).iter().map(|r| r.split(',').next().unwrap().to_owned()).collect::<Vec<_>>();
    assert_eq!(times(&out), times(&arrivals));
    assert_ne!(rows(&out), rows(&arrivals));
}

const RAW: &str = "timestamp,price,condition\n\
                   34100,39.00,\n\
                   34210,39.41,\n\
                   34210,39.42,Z\n\
                   34210,39.40,\n\
                   34211,39.43,\n\
                   not-a-time,39.43,\n\
                   57700,39.50,\n";

#[test]
fn clean_spreads_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut raw = RAW.to_owned();
    // Keep the malformed share under the 1% cap.
    for i in 0..200 {
        raw.push_str(&format!("{},39.45,\n", 40000 + i));
    }
    let input = dir.path().join("raw.csv");
    fs::write(&input, raw).unwrap();
    let cfg = dir.path().join("clean.toml");
    fs::write(&cfg, "bad_conditions = [\"Z\"]\n").unwrap();
    let out = dir.path().join("clean.csv");
    let o = tickvol(&["clean", s(&input), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&out);
    assert!(r[0].starts_with("10,"), "{r:?}");
    assert!(r[1].starts_with(&format!("{},", 34210.5 - 34200.0)), "{r:?}");
    assert!(r[2].starts_with("11,"), "{r:?}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("clean.csv.report.json")).unwrap()).unwrap();
    assert_eq!(report["outside_session"], 2);
    assert_eq!(report["bad_condition"], 1);
    assert_eq!(report["output"], 203);
    assert_eq!(report["horizon"], 23400.0);
    assert_eq!(report["malformed"].as_array().unwrap().len(), 1);
}

#[test]
fn clean_with_nothing_left_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    fs::write(&input, "timestamp,price,condition\n1000,10.0,\n").unwrap();
    let out = dir.path().join("clean.csv");
    let o = tickvol(&["clean", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

fn log_values(path: &Path) -> Vec<Option<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).and_then(|v| v.parse().ok()))
        .collect()
}

#[test]
fn estimate_writes_additive_log_curves() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("sim.csv");
    simulate(&root().join("configs/oscillating_vol.toml"), &series, "6");
    let out = dir.path().join("est");
    let o = tickvol(&[
        "estimate",
        s(&series),
        "--out",
        s(&out),
        "--config",
        s(&root().join("configs/estimate.toml")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tick = log_values(&out.join("tick_pavg.csv"));
    let lam = log_values(&out.join("intensity.csv"));
    let dec = log_values(&out.join("decomposed.csv"));
    assert_eq!(tick.len(), 100);
    let mut compared = 0;
    for ((t, l), d) in tick.iter().zip(&lam).zip(&dec) {
        if let (Some(t), Some(l), Some(d)) = (t, l, d) {
            if *t > -600.0 {
                assert!((d - t - l).abs() <= 1e-9, "{d} vs {t} + {l}");
                compared += 1;
            }
        }
    }
    assert!(compared > 50);
    assert!(out.join("curves.json").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn estimate_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("sim.csv");
    simulate(&root().join("configs/flat_vol.toml"), &series, "7");
    let out = dir.path().join("est");
    let o = tickvol(&["estimate", s(&series), "--out", s(&out), "--grid-points", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(log_values(&out.join("clock_pavg.csv")).len(), 7);
}

#[test]
fn estimate_rejects_empty_series() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    fs::write(&input, "# horizon=100\ntime,log_price\n").unwrap();
    let o = tickvol(&["estimate", s(&input), "--out", s(&dir.path().join("est"))]);
    assert_eq!(code(&o), 2);
}

fn registry() -> PathBuf {
    root().join("scenarios/registry.toml")
}

#[test]
fn validate_without_selection_warns() {
    let o = tickvol(&["validate", "--config", s(&registry())]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("no scenarios selected"));
}

#[test]
fn validate_unknown_scenario_lists_names() {
    let o = tickvol(&["validate", "--config", s(&registry()), "nope"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("intensity_clt"));
}

#[test]
fn validate_empty_band_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(registry()).unwrap();
    let cfg = dir.path().join("reg.toml");
    fs::write(&cfg, text.replace("lo = 0.85", "lo = 0.0").replace("hi = 1.15", "hi = 0.0")).unwrap();
    let out = dir.path().join("out");
    let o = tickvol(&["validate", "--config", s(&cfg), "intensity_clt", "--out", s(&out)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("intensity_clt.json").exists());
}

#[test]
fn validate_intensity_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("summary.json");
    let o = tickvol(&["validate", "--config", s(&registry()), "intensity_clt", "--report", s(&report)]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("PASS intensity_clt"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(summary[0]["passed"], true);
}
