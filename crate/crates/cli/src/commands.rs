use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tickvol_core::estimators::{estimate_on_grid, CurveEstimate};
use tickvol_core::ingest::{
    clean_ticks, parse_tick_csv, read_series_csv, write_series_csv, CleanConfig, CleanReport,
};
use tickvol_core::mc::{validate_scenario, CheckResult, Registry};
use tickvol_core::sim::{self, simulate_with_arrivals};
use tickvol_core::{
    EstimatorConfig, EstimatorTag, Error, KernelSpec, MalformedRow, PreAvgWeight, Result, SimConfig,
    TickSeries, VolScale,
};

use crate::output::{manifest_path, write_atomic, write_json, RunManifest};
use crate::EstimateOverrides;

pub enum Outcome {
    Success,
    ValidationFailed,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_series(path: &Path) -> Result<TickSeries> {
    let f = File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    read_series_csv(BufReader::new(f))
}

fn write_series(path: &Path, series: &TickSeries) -> Result<()> {
    write_atomic(path, |w| write_series_csv(series, w))
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let started = Instant::now();
    let mut cfg = SimConfig::from_toml(&read_text(config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut inputs = vec![config.to_path_buf()];
    let series = match &cfg.arrivals_file {
        Some(rel) => {
            let path = config.parent().unwrap_or(Path::new(".")).join(rel);
            let arrivals = read_series(&path)?;
            inputs.push(path);
            let (horizon, times, _) = arrivals.into_parts();
            simulate_with_arrivals(&cfg, times, horizon)?
        }
        None => sim::simulate(&cfg)?,
    };
    write_series(out, &series)?;
    let mut m = RunManifest::new("simulate", &cfg, started);
    m.inputs = inputs;
    m.outputs = vec![out.to_path_buf()];
    m.seed = Some(cfg.seed);
    write_json(&manifest_path(out), &m)?;
    eprintln!("wrote {} ticks to {}", series.len(), out.display());
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct CleanOutput<'a> {
    #[serde(flatten)]
    report: &'a CleanReport,
    malformed: &'a [MalformedRow],
}

pub fn clean(input: &Path, out: &Path, config: Option<&Path>, report: Option<&Path>) -> Result<Outcome> {
    let started = Instant::now();
    let cfg: CleanConfig = match config {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => CleanConfig::default(),
    };
    let f = File::open(input).map_err(|e| Error::Format(format!("{}: {e}", input.display())))?;
    let parsed = parse_tick_csv(BufReader::new(f))?;
    let (series, summary) = clean_ticks(&parsed.records, &cfg)?;
    write_series(out, &series)?;
    let report_path = report.map_or_else(|| with_suffix(out, ".report.json"), Path::to_path_buf);
    write_json(
        &report_path,
        &CleanOutput {
            report: &summary,
            malformed: &parsed.malformed,
        },
    )?;
    let mut m = RunManifest::new("clean", &cfg, started);
    m.inputs = vec![input.to_path_buf()];
    m.inputs.extend(config.map(Path::to_path_buf));
    m.outputs = vec![out.to_path_buf(), report_path];
    write_json(&manifest_path(out), &m)?;
    eprintln!(
        "kept {} of {} records ({} malformed rows skipped)",
        summary.output,
        summary.input,
        parsed.malformed.len()
    );
    Ok(Outcome::Success)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Estimation settings read from TOML; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EstimateFile {
    /// Seconds per side covered by both bandwidths and the tick window.
    window_seconds: Option<f64>,
    intensity_bandwidth: Option<f64>,
    clock_bandwidth: Option<f64>,
    tick_window: Option<usize>,
    block_size: Option<usize>,
    grid_points: Option<usize>,
    grid: Option<Vec<f64>>,
    intensity_kernel: Option<KernelSpec>,
    clock_kernel: Option<KernelSpec>,
    tick_kernel: Option<KernelSpec>,
    scale: Option<VolScale>,
    log_floor: Option<f64>,
    estimators: Option<Vec<EstimatorTag>>,
}

#[derive(Debug, Serialize)]
struct ResolvedEstimate {
    window_seconds: f64,
    estimators: Vec<EstimatorTag>,
    log_floor: f64,
    config: EstimatorConfig,
}

const DEFAULT_ESTIMATORS: [EstimatorTag; 5] = [
    EstimatorTag::Intensity,
    EstimatorTag::ClockPavg,
    EstimatorTag::TickPavg,
    EstimatorTag::Decomposed,
    EstimatorTag::NoiseVar,
];

fn resolve_estimate(series: &TickSeries, file: EstimateFile, flags: &EstimateOverrides) -> Result<ResolvedEstimate> {
    let window_seconds = file.window_seconds.unwrap_or(200.0);
    let mut cfg = EstimatorConfig::data_defaults(series, window_seconds)?;
    if let Some(v) = flags.bandwidth_intensity.or(file.intensity_bandwidth) {
        cfg.intensity_bandwidth = v;
    }
    if let Some(v) = flags.bandwidth_clock.or(file.clock_bandwidth) {
        cfg.clock_bandwidth = v;
    }
    if let Some(v) = flags.tick_window.or(file.tick_window) {
        cfg.tick_window = v;
    }
    if let Some(h) = flags.block_size.or(file.block_size) {
        cfg.weight = PreAvgWeight::parabolic(h)?;
    }
    if let Some(k) = file.intensity_kernel {
        cfg.intensity_kernel = k;
    }
    if let Some(k) = file.clock_kernel {
        cfg.clock_kernel = k;
    }
    if let Some(k) = file.tick_kernel {
        cfg.tick_kernel = k;
    }
    if let Some(s) = file.scale {
        cfg.scale = s;
    }
    cfg.grid = match (flags.grid_points, file.grid) {
        (None, Some(grid)) => grid,
        (points, _) => cfg.interior_grid(points.or(file.grid_points).unwrap_or(100)),
    };
    cfg.validate()?;
    let log_floor = flags.log_floor.or(file.log_floor).unwrap_or(f64::MIN_POSITIVE);
    if !(log_floor.is_finite() && log_floor > 0.0) {
        return Err(Error::Config(format!("log floor must be positive, got {log_floor}")));
    }
    Ok(ResolvedEstimate {
        window_seconds,
        estimators: file.estimators.unwrap_or_else(|| DEFAULT_ESTIMATORS.to_vec()),
        log_floor,
        config: cfg,
    })
}

fn write_curve_csv(w: &mut dyn Write, curve: &CurveEstimate, floor: f64) -> Result<()> {
    writeln!(w, "u,value,reason_code,log_value")?;
    for p in &curve.points {
        match p.value {
            Some(v) => writeln!(w, "{},{},,{}", p.u, v, v.max(floor).ln())?,
            None => writeln!(w, "{},,{},", p.u, p.reason_code.as_deref().unwrap_or("error"))?,
        }
    }
    Ok(())
}

pub fn estimate(input: &Path, out: &Path, config: Option<&Path>, flags: &EstimateOverrides) -> Result<Outcome> {
    let started = Instant::now();
    let series = read_series(input)?;
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let file: EstimateFile = match config {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => EstimateFile::default(),
    };
    let resolved = resolve_estimate(&series, file, flags)?;
    std::fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    let mut curves = Vec::new();
    for &tag in &resolved.estimators {
        let curve = estimate_on_grid(&series, &resolved.config, tag);
        let path = out.join(format!("{}.csv", tag.name()));
        write_atomic(&path, |w| write_curve_csv(w, &curve, resolved.log_floor))?;
        let missing = curve.points.iter().filter(|p| p.value.is_none()).count();
        if missing > 0 {
            eprintln!("{}: {missing} of {} grid points missing", tag.name(), curve.len());
        }
        outputs.push(path);
        curves.push(curve);
    }
    let json = out.join("curves.json");
    write_json(&json, &curves)?;
    outputs.push(json);
    let mut m = RunManifest::new("estimate", &resolved, started);
    m.inputs = vec![input.to_path_buf()];
    m.inputs.extend(config.map(Path::to_path_buf));
    m.outputs = outputs;
    write_json(&out.join("manifest.json"), &m)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct ScenarioSummary {
    name: String,
    passed: bool,
    error: Option<String>,
    checks: Vec<CheckResult>,
}

pub fn validate(
    config: &Path,
    names: &[String],
    all: bool,
    out: Option<&Path>,
    seed: Option<u64>,
    report: Option<&Path>,
) -> Result<Outcome> {
    let started = Instant::now();
    let registry = Registry::from_toml(&read_text(config)?)?;
    let selected: Vec<String> = if all {
        registry.names().into_iter().map(str::to_owned).collect()
    } else {
        names.to_vec()
    };
    if selected.is_empty() {
        eprintln!("warning: no scenarios selected; available: {}", registry.names().join(", "));
        return Ok(Outcome::Success);
    }
    let mut scenarios = Vec::new();
    for name in &selected {
        let s = registry.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario `{name}`; available: {}",
                registry.names().join(", ")
            ))
        })?;
        let mut s = s.clone();
        if let Some(seed) = seed {
            s.master_seed = seed;
        }
        s.validate()?;
        scenarios.push(s);
    }

    let mut summaries = Vec::new();
    let mut outputs = Vec::new();
    for s in &scenarios {
        let (outcome, error) = match validate_scenario(s) {
            Ok(o) => (Some(o), None),
            Err(e @ Error::ScenarioAborted { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let checks = outcome.as_ref().map(|o| o.checks.clone()).unwrap_or_default();
        for r in outcome.iter().flat_map(|o| &o.reports) {
            println!("{}", r.summary_line());
        }
        if let Some(c) = outcome.as_ref().and_then(|o| o.comparison.as_ref()) {
            println!(
                "{:<24} head-to-head  win={:.3} mse_ratio={:.4} case={}",
                s.name,
                c.win_fraction,
                c.mse_ratio,
                c.case.map_or("-".into(), |c| format!("{c:?}").to_lowercase())
            );
        }
        for c in &checks {
            println!(
                "{} {} {}: {} (observed {:.4})",
                if c.passed { "PASS" } else { "FAIL" },
                s.name,
                c.estimator,
                c.description,
                c.observed
            );
        }
        if let Some(e) = &error {
            println!("FAIL {}: {e}", s.name);
        }
        if let Some(dir) = out {
            let path = dir.join(format!("{}.json", s.name));
            write_json(&path, &outcome)?;
            outputs.push(path);
        }
        summaries.push(ScenarioSummary {
            name: s.name.clone(),
            passed: error.is_none() && checks.iter().all(|c| c.passed),
            error,
            checks,
        });
    }
    let all_passed = summaries.iter().all(|s| s.passed);
    if let Some(path) = report {
        write_json(path, &summaries)?;
        outputs.push(path.to_path_buf());
    }
    if let Some(dir) = out {
        let mut m = RunManifest::new("validate", &scenarios, started);
        m.inputs = vec![config.to_path_buf()];
        m.outputs = outputs;
        m.seed = seed;
        write_json(&dir.join("manifest.json"), &m)?;
    }
    Ok(if all_passed {
        Outcome::Success
    } else {
        Outcome::ValidationFailed
    })
}
