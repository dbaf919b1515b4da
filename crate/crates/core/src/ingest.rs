//! Raw trade files to cleaned [`TickSeries`], plus the series CSV format.
//!
//! Raw files have the header `timestamp,price,condition` with timestamps in
//! seconds since midnight. Cleaning keeps regular-session trades with
//! acceptable sale conditions, spreads trades that share a timestamp evenly
//! over that second, rebases time to the session open and takes logs.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, MalformedRow, Result};
use crate::series::TickSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTickRecord {
    /// Seconds since midnight.
    pub timestamp: f64,
    pub price: f64,
    pub condition: Option<String>,
}

/// Parsed records and the rows that were skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParsedTicks {
    pub records: Vec<RawTickRecord>,
    pub malformed: Vec<MalformedRow>,
}

/// Largest tolerated share of malformed data rows.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

fn parse_row(row: &csv::StringRecord) -> std::result::Result<RawTickRecord, String> {
    if row.len() < 2 || row.len() > 3 {
        return Err(format!("expected 3 fields, found {}", row.len()));
    }
    let timestamp: f64 = row[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad timestamp `{}`", &row[0]))?;
    let price: f64 = row[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad price `{}`", &row[1]))?;
    if !timestamp.is_finite() {
        return Err(format!("timestamp `{}` is not finite", &row[0]));
    }
    if !(price.is_finite() && price > 0.0) {
        return Err(format!("price `{}` is not positive", &row[1]));
    }
    let condition = row
        .get(2)
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_owned);
    Ok(RawTickRecord {
        timestamp,
        price,
        condition,
    })
}

/// Parses a raw trade CSV. Malformed rows are collected with their line
/// numbers; more than 1% of them aborts the parse.
pub fn parse_tick_csv<R: Read>(input: R) -> Result<ParsedTicks> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != ["timestamp", "price", "condition"] {
        return Err(Error::Format(format!(
            "expected header `timestamp,price,condition`, found `{}`",
            names.join(",")
        )));
    }

    let mut parsed = ParsedTicks::default();
    let mut total = 0usize;
    let mut row = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                total += 1;
                let line = row.position().map_or(line, |p| p.line());
                match parse_row(&row) {
                    Ok(r) => parsed.records.push(r),
                    Err(reason) => parsed.malformed.push(MalformedRow { line, reason }),
                }
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(Error::Format(e.to_string()));
                }
                total += 1;
                let line = e.position().map_or(line, |p| p.line());
                parsed.malformed.push(MalformedRow {
                    line,
                    reason: e.to_string(),
                });
            }
        }
    }
    if parsed.malformed.len() as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(Error::TooManyMalformed {
            total,
            rows: parsed.malformed,
        });
    }
    Ok(parsed)
}

/// Writes records in the raw trade format, with shortest round-trip floats.
pub fn write_tick_csv<W: Write>(records: &[RawTickRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "price", "condition"]).map_err(csv_io)?;
    for r in records {
        w.write_record([
            r.timestamp.to_string(),
            r.price.to_string(),
            r.condition.clone().unwrap_or_default(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Drops a trade whose price is further than `multiplier` median absolute
/// deviations from the median of the `window` surrounding trades.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierFilter {
    pub window: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanConfig {
    /// Session open, seconds since midnight (09:30).
    pub session_start: f64,
    /// Session close, seconds since midnight (16:00).
    pub session_end: f64,
    pub bad_conditions: BTreeSet<String>,
    pub outlier_filter: Option<OutlierFilter>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            session_start: 34_200.0,
            session_end: 57_600.0,
            bad_conditions: BTreeSet::new(),
            outlier_filter: None,
        }
    }
}

impl CleanConfig {
    pub fn horizon(&self) -> f64 {
        self.session_end - self.session_start
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.session_start.is_finite() && self.session_end > self.session_start) {
            return Err(Error::Config(format!(
                "session [{}, {}] is empty",
                self.session_start, self.session_end
            )));
        }
        if let Some(f) = self.outlier_filter {
            if f.window < 3 || f.multiplier.is_nan() || f.multiplier <= 0.0 {
                return Err(Error::Config(
                    "outlier filter needs window >= 3 and multiplier > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Counts of records dropped per rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub outside_session: usize,
    pub bad_condition: usize,
    pub outliers: usize,
    /// Timestamp groups with more than one trade.
    pub spread_groups: usize,
    pub output: usize,
    pub horizon: f64,
}

/// `k` evenly spaced times in `[s, s + 1)`, rounded to hundredths of a second.
///
/// Offsets are `j/k` for `j = 0..k`. With more than 100 trades rounding
/// would create ties, so the exact offsets are used instead.
pub fn spread_same_timestamp(s: f64, k: usize) -> Vec<f64> {
    if k <= 100 {
        (0..k)
            .map(|j| (s * 100.0 + (100.0 * j as f64 / k as f64).round()) / 100.0)
            .collect()
    } else {
        (0..k).map(|j| s + j as f64 / k as f64).collect()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn outlier_mask(prices: &[f64], f: OutlierFilter) -> Vec<bool> {
    let half = f.window / 2;
    (0..prices.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(prices.len());
            let mut w: Vec<f64> = prices[lo..hi].to_vec();
            let med = median(&mut w);
            let mut dev: Vec<f64> = w.iter().map(|p| (p - med).abs()).collect();
            // One cent keeps flat stretches from flagging every tick.
            let mad = median(&mut dev).max(0.01);
            (prices[i] - med).abs() > f.multiplier * mad
        })
        .collect()
}

/// Applies the filters and timestamp spreading, keeping absolute timestamps.
/// Already-clean input comes back unchanged.
pub fn clean_records(records: &[RawTickRecord], cfg: &CleanConfig) -> Result<(Vec<RawTickRecord>, CleanReport)> {
    cfg.validate()?;
    let mut report = CleanReport {
        input: records.len(),
        horizon: cfg.horizon(),
        ..Default::default()
    };
    let mut kept: Vec<RawTickRecord> = Vec::with_capacity(records.len());
    for r in records {
        if r.timestamp < cfg.session_start || r.timestamp > cfg.session_end {
            report.outside_session += 1;
        } else if r.condition.as_ref().is_some_and(|c| cfg.bad_conditions.contains(c)) {
            report.bad_condition += 1;
        } else {
            kept.push(r.clone());
        }
    }
    // Stable, so trades sharing a timestamp keep their file order.
    kept.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    if let Some(f) = cfg.outlier_filter {
        let prices: Vec<f64> = kept.iter().map(|r| r.price).collect();
        let mask = outlier_mask(&prices, f);
        report.outliers = mask.iter().filter(|&&m| m).count();
        kept = kept
            .into_iter()
            .zip(mask)
            .filter_map(|(r, out)| (!out).then_some(r))
            .collect();
    }

    let mut start = 0;
    while start < kept.len() {
        let s = kept[start].timestamp;
        let end = start + kept[start..].iter().take_while(|r| r.timestamp == s).count();
        let k = end - start;
        if k > 1 {
            report.spread_groups += 1;
            for (r, t) in kept[start..end].iter_mut().zip(spread_same_timestamp(s, k)) {
                r.timestamp = t;
            }
        }
        start = end;
    }
    // Spreading can push a group onto a following fractional timestamp.
    if kept.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::Format(
            "trade times are not strictly increasing after spreading".into(),
        ));
    }
    report.output = kept.len();
    Ok((kept, report))
}

/// Cleans records into a series on `[0, session_end − session_start]`.
pub fn clean_ticks(records: &[RawTickRecord], cfg: &CleanConfig) -> Result<(TickSeries, CleanReport)> {
    let (kept, report) = clean_records(records, cfg)?;
    if kept.is_empty() {
        return Err(Error::EmptySeries);
    }
    let times = kept.iter().map(|r| r.timestamp - cfg.session_start).collect();
    let logs = kept.iter().map(|r| r.price.ln()).collect();
    let series = TickSeries::new(cfg.horizon(), times, logs)?.with_cleaned(true);
    Ok((series, report))
}

/// Writes the series format: `# horizon=` and `# cleaned=` comment lines, then
/// `time,log_price` rows with shortest round-trip floats.
pub fn write_series_csv<W: Write>(series: &TickSeries, mut out: W) -> Result<()> {
    writeln!(out, "# horizon={}", series.horizon())?;
    writeln!(out, "# cleaned={}", series.is_cleaned())?;
    writeln!(out, "time,log_price")?;
    for (t, y) in series.times().iter().zip(series.log_prices()) {
        writeln!(out, "{t},{y}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(input: R) -> Result<TickSeries> {
    let reader = BufReader::new(input);
    let mut horizon = None;
    let mut cleaned = false;
    let mut header_seen = false;
    let mut times = Vec::new();
    let mut logs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let lineno = n + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                match k.trim() {
                    "horizon" => {
                        horizon = Some(v.trim().parse::<f64>().map_err(|_| {
                            Error::Format(format!("line {lineno}: bad horizon `{}`", v.trim()))
                        })?)
                    }
                    "cleaned" => cleaned = v.trim() == "true",
                    _ => {}
                }
            }
            continue;
        }
        if !header_seen {
            if line.replace(' ', "") != "time,log_price" {
                return Err(Error::Format(format!(
                    "line {lineno}: expected header `time,log_price`, found `{line}`"
                )));
            }
            header_seen = true;
            continue;
        }
        let (t, y) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {lineno}: expected two fields")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {lineno}: bad number `{}`", s.trim())))
        };
        times.push(parse(t)?);
        logs.push(parse(y)?);
    }
    if !header_seen {
        return Err(Error::Format("missing header `time,log_price`".into()));
    }
    let horizon = horizon.ok_or_else(|| Error::Format("missing `# horizon=` line".into()))?;
    Ok(TickSeries::new(horizon, times, logs)?.with_cleaned(cleaned))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, p: f64) -> RawTickRecord {
        RawTickRecord {
            timestamp: t,
            price: p,
            condition: None,
        }
    }

    #[test]
    fn parses_basic_rows() {
        let p = parse_tick_csv("timestamp,price,condition\n34210,39.41,\n".as_bytes()).unwrap();
        assert_eq!(p.records, vec![rec(34210.0, 39.41)]);
        let p = parse_tick_csv("timestamp,price,condition\n".as_bytes()).unwrap();
        assert!(p.records.is_empty());
    }

    #[test]
    fn missing_header_is_a_format_error() {
        assert!(matches!(parse_tick_csv("34210,39.41,\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(parse_tick_csv("".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn malformed_rows_cite_lines() {
        let mut text = String::from("timestamp,price,condition\n");
        for i in 0..150 {
            text.push_str(&format!("{},39.41,\n", 34300 + i));
        }
        text.push_str("34210,abc,\n");
        let p = parse_tick_csv(text.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 150);
        assert_eq!(p.malformed.len(), 1);
        assert_eq!(p.malformed[0].line, 152);
    }

    #[test]
    fn too_many_malformed_rows_abort() {
        let text = "timestamp,price,condition\n34210,abc,\n34211,1.0,\n";
        match parse_tick_csv(text.as_bytes()) {
            Err(Error::TooManyMalformed { total, rows }) => {
                assert_eq!(total, 2);
                assert_eq!(rows[0].line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spreading_examples() {
        assert_eq!(spread_same_timestamp(34210.0, 1), vec![34210.0]);
        assert_eq!(spread_same_timestamp(34210.0, 3), vec![34210.0, 34210.33, 34210.67]);
        assert_eq!(spread_same_timestamp(0.0, 2), vec![0.0, 0.5]);
        let many = spread_same_timestamp(5.0, 250);
        assert!(many.windows(2).all(|w| w[0] < w[1]) && many[249] < 6.0);
    }

    #[test]
    fn session_and_condition_filters() {
        let mut cfg = CleanConfig::default();
        cfg.bad_conditions.insert("Z".into());
        let mut bad = rec(34300.0, 10.0);
        bad.condition = Some("Z".into());
        let records = vec![rec(34100.0, 10.0), rec(34210.0, 10.0), bad, rec(57601.0, 10.0)];
        let (s, report) = clean_ticks(&records, &cfg).unwrap();
        assert_eq!(s.times(), &[10.0]);
        assert_eq!(s.horizon(), 23_400.0);
        assert_eq!(report.outside_session, 2);
        assert_eq!(report.bad_condition, 1);
        assert!(s.is_cleaned());
    }

    #[test]
    fn all_bad_is_empty_series() {
        let mut cfg = CleanConfig::default();
        cfg.bad_conditions.insert("Z".into());
        let mut r = rec(34300.0, 10.0);
        r.condition = Some("Z".into());
        assert!(matches!(clean_ticks(&[r], &cfg), Err(Error::EmptySeries)));
    }

    #[test]
    fn outlier_filter_drops_spikes() {
        let mut records: Vec<_> = (0..21).map(|i| rec(34300.0 + i as f64, 10.0)).collect();
        records[10].price = 50.0;
        let cfg = CleanConfig {
            outlier_filter: Some(OutlierFilter {
                window: 11,
                multiplier: 10.0,
            }),
            ..Default::default()
        };
        let (kept, report) = clean_records(&records, &cfg).unwrap();
        assert_eq!(report.outliers, 1);
        assert_eq!(kept.len(), 20);
    }

    #[test]
    fn series_csv_round_trips() {
        let s = TickSeries::new(23_400.0, vec![0.1, 10.33, 23_400.0], vec![3.1, -0.2, 1e-17])
            .unwrap()
            .with_cleaned(true);
        let mut buf = Vec::new();
        write_series_csv(&s, &mut buf).unwrap();
        assert_eq!(read_series_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn series_csv_needs_horizon_and_header() {
        assert!(read_series_csv("time,log_price\n1,2\n".as_bytes()).is_err());
        assert!(read_series_csv("# horizon=10\n1,2\n".as_bytes()).is_err());
    }
}
