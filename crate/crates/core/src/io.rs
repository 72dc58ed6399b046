//! Dataset ingestion, report emission, and run configuration.
//!
//! Datasets are UTF-8 CSV with a header row: `timestamp` (RFC 3339 with
//! offset), `site_id`, `actual`, optional `capacity`, optional `latitude` /
//! `longitude` or `sunrise` / `sunset`, and quantile columns `q01..q99` (or an
//! explicit level-to-column mapping). Actuals and quantiles are normalized by
//! capacity when a capacity column is present and passed through otherwise.
//! Quantile crossings are repaired by sorting each record's quantile values
//! (monotone rearrangement), which preserves the multiset of values.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{solar_day_feature, sunrise_sunset, SiteGeometry, SolarDayFeature};
use crate::metrics::MethodReport;
use crate::types::{IntervalRecord, PredictionInterval, TargetCoverage, TimeSeriesRecord, Timestamp};
use crate::Scalar;

/// Absolute tolerance when matching a requested quantile level to a declared
/// one. 0.005 admits the 99-percentile format for every default alpha without
/// interpolation.
pub const LEVEL_TOLERANCE: Scalar = 0.005;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("no quantile columns found (expected q01..q99 or an explicit mapping)")]
    NoQuantileColumns,
    #[error("invalid quantile level {0} (must lie in (0, 1) and be distinct)")]
    InvalidQuantileLevel(String),
    #[error("duplicate key: site {site} at {t}")]
    DuplicateKey { site: String, t: String },
    #[error("missing quantile level {level} (nearest tolerance {tol})")]
    MissingQuantileLevel { level: Scalar, tol: Scalar },
    #[error("daylight flagging needs latitude/longitude or sunrise/sunset columns")]
    NoDaylightSource,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Types(#[from] crate::types::TypesError),
}

/// How records are flagged as daylight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaylightRule {
    /// Between sunrise and sunset, from the dataset's sunrise/sunset columns
    /// when present, otherwise computed from latitude/longitude.
    SolarGeometry,
    /// Nonzero actual generation.
    NonzeroActual,
}

/// Column names and flagging rules of a dataset file.
#[derive(Debug, Clone)]
pub struct DatasetSchema {
    pub timestamp_col: String,
    pub site_col: String,
    pub actual_col: String,
    pub capacity_col: String,
    pub latitude_col: String,
    pub longitude_col: String,
    pub sunrise_col: String,
    pub sunset_col: String,
    /// Explicit level-to-column mapping; `None` auto-detects `q<digits>`
    /// columns as level `digits / 100`.
    pub quantile_columns: Option<Vec<(Scalar, String)>>,
    pub daylight: DaylightRule,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        Self {
            timestamp_col: "timestamp".into(),
            site_col: "site_id".into(),
            actual_col: "actual".into(),
            capacity_col: "capacity".into(),
            latitude_col: "latitude".into(),
            longitude_col: "longitude".into(),
            sunrise_col: "sunrise".into(),
            sunset_col: "sunset".into(),
            quantile_columns: None,
            daylight: DaylightRule::SolarGeometry,
        }
    }
}

/// One site's time-sorted records plus derived solar features (aligned with
/// `records`).
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub site_id: String,
    pub geometry: Option<SiteGeometry>,
    pub records: Vec<TimeSeriesRecord>,
    pub solar: Vec<SolarDayFeature>,
}

/// Ingestion side-channel: row counts and skips.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_skipped: usize,
}

fn parse_quantile_header(name: &str) -> Option<Scalar> {
    let digits = name.strip_prefix('q')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: u32 = digits.parse().ok()?;
    if n == 0 || n >= 100 {
        return None;
    }
    Some(n as Scalar / 100.0)
}

/// Read a dataset file into per-site record series.
///
/// Fatal errors: unreadable file, missing required columns, duplicate
/// (site, timestamp) pairs, no way to flag daylight. Unparseable rows are
/// skipped and counted.
pub fn ingest(
    path: &Path,
    schema: &DatasetSchema,
) -> Result<(Vec<SiteSeries>, IngestReport), IoError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IoError::File {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
            },
            _ => IoError::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| col(name).ok_or_else(|| IoError::MissingColumn(name.into()));

    let t_idx = require(&schema.timestamp_col)?;
    let site_idx = require(&schema.site_col)?;
    let actual_idx = require(&schema.actual_col)?;
    let cap_idx = col(&schema.capacity_col);
    let lat_idx = col(&schema.latitude_col);
    let lon_idx = col(&schema.longitude_col);
    let sunrise_idx = col(&schema.sunrise_col);
    let sunset_idx = col(&schema.sunset_col);

    // Quantile columns, sorted by level.
    let mut qcols: Vec<(Scalar, usize)> = match &schema.quantile_columns {
        Some(mapping) => {
            let mut v = Vec::with_capacity(mapping.len());
            for (level, name) in mapping {
                if !(*level > 0.0 && *level < 1.0) {
                    return Err(IoError::InvalidQuantileLevel(format!("{level}")));
                }
                v.push((*level, require(name)?));
            }
            v
        }
        None => headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| parse_quantile_header(h).map(|l| (l, i)))
            .collect(),
    };
    if qcols.is_empty() {
        return Err(IoError::NoQuantileColumns);
    }
    qcols.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite levels"));
    for pair in qcols.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(IoError::InvalidQuantileLevel(format!("{} declared twice", pair[0].0)));
        }
    }

    struct RawRow {
        t: Timestamp,
        actual: Scalar,
        quantiles: Vec<(Scalar, Scalar)>,
        latitude: Option<Scalar>,
        longitude: Option<Scalar>,
        sun: Option<(Timestamp, Timestamp)>,
    }

    let mut report = IngestReport::default();
    let mut per_site: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        report.rows_read += 1;
        let parse = || -> Option<(String, RawRow)> {
            let t = Timestamp::parse_rfc3339(row.get(t_idx)?).ok()?;
            let site = row.get(site_idx)?.to_string();
            let mut actual: Scalar = row.get(actual_idx)?.parse().ok()?;
            let capacity: Scalar = match cap_idx {
                Some(i) => row.get(i)?.parse().ok()?,
                None => 1.0,
            };
            if !(capacity > 0.0) {
                return None;
            }
            actual /= capacity;
            let mut values = Vec::with_capacity(qcols.len());
            for &(_, i) in &qcols {
                let v: Scalar = row.get(i)?.parse().ok()?;
                values.push(v / capacity);
            }
            // Crossing repair: monotone rearrangement of the values.
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite quantiles"));
            let quantiles = qcols.iter().map(|&(l, _)| l).zip(values).collect();

            let opt_num = |idx: Option<usize>| -> Option<Scalar> {
                idx.and_then(|i| row.get(i)).and_then(|s| s.parse().ok())
            };
            let sun = match (sunrise_idx, sunset_idx) {
                (Some(ri), Some(si)) => {
                    let r = Timestamp::parse_rfc3339(row.get(ri)?).ok();
                    let s = Timestamp::parse_rfc3339(row.get(si)?).ok();
                    match (r, s) {
                        (Some(r), Some(s)) if r < s => Some((r, s)),
                        _ => None,
                    }
                }
                _ => None,
            };
            Some((
                site,
                RawRow {
                    t,
                    actual,
                    quantiles,
                    latitude: opt_num(lat_idx),
                    longitude: opt_num(lon_idx),
                    sun,
                },
            ))
        };
        match parse() {
            Some((site, raw)) => per_site.entry(site).or_default().push(raw),
            None => {
                report.rows_skipped += 1;
                log::warn!("skipped unparseable row {}", report.rows_read);
            }
        }
    }

    let mut out = Vec::with_capacity(per_site.len());
    for (site_id, mut rows) in per_site {
        rows.sort_by(|a, b| a.t.cmp(&b.t));
        for pair in rows.windows(2) {
            if pair[0].t == pair[1].t {
                return Err(IoError::DuplicateKey {
                    site: site_id,
                    t: pair[0].t.to_rfc3339(),
                });
            }
        }
        let geometry = rows.iter().find_map(|r| match (r.latitude, r.longitude) {
            (Some(lat), Some(lon)) => {
                Some(SiteGeometry { site_id: site_id.clone(), latitude: lat, longitude: lon })
            }
            _ => None,
        });
        if let Some(g) = &geometry {
            g.validate()?;
        }

        let mut sun_cache: HashMap<NaiveDate, Option<(Timestamp, Timestamp)>> = HashMap::new();
        let mut records = Vec::with_capacity(rows.len());
        let mut solar = Vec::with_capacity(rows.len());
        for raw in rows {
            let sun = match raw.sun {
                Some(pair) => Some(pair),
                None => match &geometry {
                    Some(g) => *sun_cache.entry(raw.t.local_date()).or_insert_with(|| {
                        sunrise_sunset(g, raw.t.local_date(), raw.t.inner().timezone()).ok()
                    }),
                    None => None,
                },
            };
            let feature = match sun {
                Some((rise, set)) => solar_day_feature(raw.t, rise, set),
                None => SolarDayFeature::undefined(),
            };
            let is_daylight = match schema.daylight {
                DaylightRule::SolarGeometry => {
                    if sun.is_none() {
                        return Err(IoError::NoDaylightSource);
                    }
                    feature.defined
                }
                DaylightRule::NonzeroActual => raw.actual > 0.0,
            };
            records.push(TimeSeriesRecord {
                t: raw.t,
                site_id: site_id.clone(),
                actual: raw.actual,
                raw_quantiles: raw.quantiles,
                is_daylight,
            });
            solar.push(feature);
        }
        out.push(SiteSeries { site_id, geometry, records, solar });
    }
    Ok((out, report))
}

/// The raw prediction interval at level `alpha`: predicted quantiles at
/// `alpha / 2` and `1 - alpha / 2`, matched to the nearest declared level
/// within [`LEVEL_TOLERANCE`].
pub fn interval_from_quantiles(
    record: &TimeSeriesRecord,
    alpha: TargetCoverage,
) -> Result<PredictionInterval, IoError> {
    let lo_level = alpha.alpha() / 2.0;
    let hi_level = 1.0 - alpha.alpha() / 2.0;
    let lower = record
        .quantile_near(lo_level, LEVEL_TOLERANCE)
        .ok_or(IoError::MissingQuantileLevel { level: lo_level, tol: LEVEL_TOLERANCE })?;
    let upper = record
        .quantile_near(hi_level, LEVEL_TOLERANCE)
        .ok_or(IoError::MissingQuantileLevel { level: hi_level, tol: LEVEL_TOLERANCE })?;
    Ok(PredictionInterval::new(lower, upper, alpha, false)?)
}

fn quantile_column_name(level: Scalar) -> Result<String, IoError> {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() > 1e-9 || !(0.0..100.0).contains(&pct) {
        return Err(IoError::InvalidQuantileLevel(format!(
            "{level} is not on the percent grid expected by the writer"
        )));
    }
    Ok(format!("q{:02}", pct.round() as u32))
}

fn create(path: &Path) -> Result<fs::File, IoError> {
    fs::File::create(path).map_err(|e| IoError::File { path: path.to_path_buf(), source: e })
}

/// Write series in the same CSV format [`ingest`] reads. Capacity is written
/// as 1 (values are already per-unit), so a read-back is bit-exact.
pub fn emit_dataset(series: &[SiteSeries], path: &Path) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_writer(create(path)?);
    let levels: Vec<Scalar> = series
        .iter()
        .find_map(|s| s.records.first())
        .map(|r| r.raw_quantiles.iter().map(|&(l, _)| l).collect())
        .unwrap_or_default();
    let mut header = vec![
        "timestamp".to_string(),
        "site_id".to_string(),
        "actual".to_string(),
        "capacity".to_string(),
        "latitude".to_string(),
        "longitude".to_string(),
    ];
    for &l in &levels {
        header.push(quantile_column_name(l)?);
    }
    writer.write_record(&header)?;
    for s in series {
        let (lat, lon) = match &s.geometry {
            Some(g) => (format!("{}", g.latitude), format!("{}", g.longitude)),
            None => (String::new(), String::new()),
        };
        for r in &s.records {
            let mut row = vec![
                r.t.to_rfc3339(),
                s.site_id.clone(),
                format!("{}", r.actual),
                "1".to_string(),
                lat.clone(),
                lon.clone(),
            ];
            debug_assert_eq!(r.raw_quantiles.len(), levels.len());
            for &(_, v) in &r.raw_quantiles {
                row.push(format!("{v}"));
            }
            writer.write_record(&row)?;
        }
    }
    writer.flush().map_err(|e| IoError::File { path: path.to_path_buf(), source: e })?;
    Ok(())
}

/// One per-day tuning decision, flattened for serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningRow {
    pub site_id: String,
    pub day: NaiveDate,
    pub method: String,
    pub params: String,
    pub mask: String,
    pub lag_hours: u32,
    pub lag_window: u32,
    pub validation_ws: Scalar,
}

/// Wall-clock diagnostics per processed day (not byte-stable across runs).
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub site_id: String,
    pub day: NaiveDate,
    pub tune_ms: u128,
    pub calibrate_ms: u128,
}

pub const INTERVALS_FILE: &str = "intervals.csv";
pub const METRICS_FILE: &str = "metrics_summary.csv";
pub const HOURLY_FILE: &str = "hourly_coverage.csv";
pub const CURVE_FILE: &str = "coverage_vs_aiw.csv";
pub const TUNING_FILE: &str = "tuning_history.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Write every report file into `dir`. All files except `timing.csv` are
/// byte-deterministic for a fixed input.
#[allow(clippy::too_many_arguments)]
pub fn emit_reports(
    dir: &Path,
    intervals: &[IntervalRecord],
    aggregate: &[MethodReport],
    tuning: &[TuningRow],
    timing: &[TimingRow],
    skipped: &[(String, usize)],
    resolved_config: &str,
) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::File { path: dir.to_path_buf(), source: e })?;

    let mut sorted: Vec<&IntervalRecord> = intervals.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.site_id, &a.method, a.alpha.to_bits(), a.t).cmp(&(
            &b.site_id,
            &b.method,
            b.alpha.to_bits(),
            b.t,
        ))
    });
    let mut w = csv::Writer::from_writer(create(&dir.join(INTERVALS_FILE))?);
    w.write_record(["site", "timestamp", "method", "alpha", "lower", "upper", "actual", "covered"])?;
    for r in sorted {
        w.write_record(&[
            r.site_id.clone(),
            r.t.to_rfc3339(),
            r.method.clone(),
            format!("{}", r.alpha),
            format!("{}", r.lower),
            format!("{}", r.upper),
            format!("{}", r.actual),
            format!("{}", r.covered),
        ])?;
    }
    w.flush().map_err(|e| IoError::File { path: dir.join(INTERVALS_FILE), source: e })?;

    let mut w = csv::Writer::from_writer(create(&dir.join(METRICS_FILE))?);
    w.write_record(["method", "alpha", "picp", "aiw", "winkler", "n_evaluated"])?;
    for report in aggregate {
        for m in &report.per_alpha {
            w.write_record(&[
                report.method.clone(),
                format!("{}", m.alpha),
                format!("{}", m.picp),
                format!("{}", m.aiw),
                format!("{}", m.winkler),
                format!("{}", m.n_evaluated),
            ])?;
        }
    }
    w.flush().map_err(|e| IoError::File { path: dir.join(METRICS_FILE), source: e })?;

    let mut w = csv::Writer::from_writer(create(&dir.join(HOURLY_FILE))?);
    w.write_record(["method", "alpha", "hour", "picp", "n"])?;
    for report in aggregate {
        for m in &report.per_alpha {
            for (&hour, cell) in &m.hourly {
                w.write_record(&[
                    report.method.clone(),
                    format!("{}", m.alpha),
                    format!("{hour}"),
                    format!("{}", cell.picp),
                    format!("{}", cell.n),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| IoError::File { path: dir.join(HOURLY_FILE), source: e })?;

    let mut w = csv::Writer::from_writer(create(&dir.join(CURVE_FILE))?);
    w.write_record(["method", "alpha", "picp", "aiw"])?;
    for report in aggregate {
        for m in &report.per_alpha {
            w.write_record(&[
                report.method.clone(),
                format!("{}", m.alpha),
                format!("{}", m.picp),
                format!("{}", m.aiw),
            ])?;
        }
    }
    w.flush().map_err(|e| IoError::File { path: dir.join(CURVE_FILE), source: e })?;

    let mut w = csv::Writer::from_writer(create(&dir.join(TUNING_FILE))?);
    w.write_record(["site", "day", "method", "params", "mask", "lag_hours", "lag_window", "validation_ws"])?;
    for t in tuning {
        w.write_record(&[
            t.site_id.clone(),
            t.day.to_string(),
            t.method.clone(),
            t.params.clone(),
            t.mask.clone(),
            format!("{}", t.lag_hours),
            format!("{}", t.lag_window),
            format!("{}", t.validation_ws),
        ])?;
    }
    w.flush().map_err(|e| IoError::File { path: dir.join(TUNING_FILE), source: e })?;

    let mut w = csv::Writer::from_writer(create(&dir.join(TIMING_FILE))?);
    w.write_record(["site", "day", "tune_ms", "calibrate_ms"])?;
    for t in timing {
        w.write_record(&[
            t.site_id.clone(),
            t.day.to_string(),
            format!("{}", t.tune_ms),
            format!("{}", t.calibrate_ms),
        ])?;
    }
    w.flush().map_err(|e| IoError::File { path: dir.join(TIMING_FILE), source: e })?;

    let total: usize = aggregate
        .first()
        .map(|r| r.per_alpha.iter().map(|m| m.n_evaluated).sum())
        .unwrap_or(0);
    let mut text = String::new();
    text.push_str("# resolved configuration\n");
    text.push_str(resolved_config);
    text.push_str("\n# run summary\n");
    text.push_str(&format!("evaluated_records_first_method={total}\n"));
    for (site, n) in skipped {
        text.push_str(&format!("skipped_samples[{site}]={n}\n"));
    }
    fs::write(dir.join(SUMMARY_FILE), text)
        .map_err(|e| IoError::File { path: dir.join(SUMMARY_FILE), source: e })?;
    Ok(())
}

/// Read back an `intervals.csv` produced by [`emit_reports`].
pub fn read_intervals(path: &Path) -> Result<Vec<IntervalRecord>, IoError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| IoError::File {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        })?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| {
            row.get(i).ok_or_else(|| IoError::Config(format!("short row in {}", path.display())))
        };
        out.push(IntervalRecord {
            site_id: field(0)?.to_string(),
            t: Timestamp::parse_rfc3339(field(1)?)?,
            method: field(2)?.to_string(),
            alpha: field(3)?.parse().map_err(|e| IoError::Config(format!("alpha: {e}")))?,
            lower: field(4)?.parse().map_err(|e| IoError::Config(format!("lower: {e}")))?,
            upper: field(5)?.parse().map_err(|e| IoError::Config(format!("upper: {e}")))?,
            actual: field(6)?.parse().map_err(|e| IoError::Config(format!("actual: {e}")))?,
            covered: field(7)?.parse().map_err(|e| IoError::Config(format!("covered: {e}")))?,
        });
    }
    Ok(out)
}

/// Read back a `tuning_history.csv`.
pub fn read_tuning_history(path: &Path) -> Result<Vec<TuningRow>, IoError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| IoError::File {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        })?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| {
            row.get(i).ok_or_else(|| IoError::Config(format!("short row in {}", path.display())))
        };
        out.push(TuningRow {
            site_id: field(0)?.to_string(),
            day: field(1)?.parse().map_err(|e| IoError::Config(format!("day: {e}")))?,
            method: field(2)?.to_string(),
            params: field(3)?.to_string(),
            mask: field(4)?.to_string(),
            lag_hours: field(5)?.parse().map_err(|e| IoError::Config(format!("lag: {e}")))?,
            lag_window: field(6)?.parse().map_err(|e| IoError::Config(format!("window: {e}")))?,
            validation_ws: field(7)?
                .parse()
                .map_err(|e| IoError::Config(format!("validation_ws: {e}")))?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    /// 0 = one rayon worker per available core.
    pub workers: usize,
    pub alphas: Vec<Scalar>,
    pub methods: Vec<String>,
    pub backtest: BacktestSection,
    pub tuning: TuningSection,
    pub synth: SynthSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            alphas: vec![0.1, 0.2, 0.3, 0.4],
            methods: vec![
                "raw".into(),
                "cqr".into(),
                "adaptive".into(),
                "nexcp".into(),
                "cacp-kmeans".into(),
                "cacp-knn".into(),
                "cacp-kernel".into(),
            ],
            backtest: BacktestSection::default(),
            tuning: TuningSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    /// Re-tune every `delta_rec` test days; 0 = tune once and keep.
    pub delta_rec: u32,
    /// Length of the initial calibration window when no explicit end date is
    /// given.
    pub initial_calibration_days: u32,
    /// Explicit first test day (records strictly before it calibrate).
    pub initial_calibration_end: Option<NaiveDate>,
    pub validation_days: u32,
    /// Stop after this test day (inclusive).
    pub test_end: Option<NaiveDate>,
    /// Keep only the most recent N calibration records; 0 = unlimited.
    pub max_calibration_records: usize,
    pub clip: bool,
    pub finite_sample_correction: bool,
    pub test_point_mass: bool,
    /// Also pool records across sites instead of per-site-then-average.
    pub pooled_metrics: bool,
    pub daylight: DaylightRule,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            delta_rec: 1,
            initial_calibration_days: 60,
            initial_calibration_end: None,
            validation_days: 7,
            test_end: None,
            max_calibration_records: 0,
            clip: true,
            finite_sample_correction: false,
            test_point_mass: false,
            pooled_metrics: false,
            daylight: DaylightRule::SolarGeometry,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub adaptive_gamma: Vec<Scalar>,
    pub nexcp_rho: Vec<Scalar>,
    pub kmeans_k: Vec<usize>,
    pub knn_k: Vec<usize>,
    pub kernel_gamma: Vec<Scalar>,
    pub kernels: Vec<String>,
    pub lag_hours: Vec<u32>,
    pub lag_window: Vec<u32>,
    /// Feature-mask search space: `["all"]` enumerates all 31 non-empty
    /// family subsets; otherwise explicit labels like `"lags+hour+solar"`.
    pub masks: Vec<String>,
}

impl Default for TuningSection {
    fn default() -> Self {
        Self {
            adaptive_gamma: vec![1e-4, 5e-4, 1e-3],
            nexcp_rho: vec![0.95, 0.98, 0.995],
            kmeans_k: vec![3, 5, 8, 12],
            knn_k: vec![50, 100, 200, 500, 1000],
            kernel_gamma: vec![0.5, 1.0, 2.0],
            kernels: vec!["rbf".into(), "laplacian".into()],
            lag_hours: vec![24, 48],
            lag_window: vec![0, 1, 2],
            masks: vec!["all".into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_days: u32,
    pub start_date: NaiveDate,
    pub utc_offset_hours: i32,
    pub regime: String,
    /// Forecast standard deviation multiplier; 1.0 = well calibrated.
    pub spread_scale: Scalar,
    pub sites: Vec<SynthSiteSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthSiteSection {
    pub id: String,
    pub latitude: Scalar,
    pub longitude: Scalar,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_days: 90,
            start_date: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            utc_offset_hours: 0,
            regime: "exchangeable".into(),
            spread_scale: 1.0,
            sites: vec![SynthSiteSection { id: "site1".into(), latitude: 33.7, longitude: -84.4 }],
        }
    }
}

/// Load a TOML config file, or defaults when `path` is `None`, then apply
/// `key=value` overrides (dotted paths, e.g. `backtest.delta_rec=2`).
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<AppConfig, IoError> {
    let base = match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| IoError::File { path: p.to_path_buf(), source: e })?,
        None => String::new(),
    };
    let mut value: toml::Value = toml::from_str(&base)
        .map_err(|e| IoError::Config(format!("config parse error: {e}")))?;
    for entry in overrides {
        let (key, raw) = entry
            .split_once('=')
            .ok_or_else(|| IoError::Config(format!("override `{entry}` is not key=value")))?;
        let parsed: toml::Value = toml::from_str(&format!("v = {raw}"))
            .ok()
            .and_then(|t: toml::Value| t.get("v").cloned())
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut node = &mut value;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            let table = node.as_table_mut().ok_or_else(|| {
                IoError::Config(format!("override path `{key}` crosses a non-table"))
            })?;
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| IoError::Config(format!("override path `{key}` crosses a non-table")))?;
        table.insert(parts[parts.len() - 1].to_string(), parsed);
    }
    value
        .try_into()
        .map_err(|e| IoError::Config(format!("config error: {e}")))
}

/// Serialize the fully resolved configuration (post-overrides).
pub fn resolved_config_toml(config: &AppConfig) -> String {
    toml::to_string_pretty(config).unwrap_or_else(|e| format!("# serialization failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(values: &[(Scalar, Scalar)]) -> TimeSeriesRecord {
        TimeSeriesRecord {
            t: Timestamp::parse_rfc3339("2019-05-01T12:00:00+00:00").unwrap(),
            site_id: "s".into(),
            actual: 0.5,
            raw_quantiles: values.to_vec(),
            is_daylight: true,
        }
    }

    #[test]
    fn ingest_repairs_crossings_and_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        fs::write(
            &path,
            "timestamp,site_id,actual,capacity,latitude,longitude,q10,q50,q90\n\
             2019-05-01T12:00:00+00:00,a,100,200,0.0,0.0,100,80,120\n\
             2019-05-01T13:00:00+00:00,a,90,200,0.0,0.0,70,90,110\n",
        )
        .unwrap();
        let (series, report) = ingest(&path, &DatasetSchema::default()).unwrap();
        assert_eq!(report.rows_read, 2);
        assert_eq!(report.rows_skipped, 0);
        assert_eq!(series.len(), 1);
        let r = &series[0].records[0];
        assert_eq!(r.actual, 0.5);
        // Crossed (0.5, 0.4, 0.6) repaired to (0.4, 0.5, 0.6).
        assert_eq!(r.raw_quantiles, vec![(0.1, 0.4), (0.5, 0.5), (0.9, 0.6)]);
        assert!(r.is_daylight);
    }

    #[test]
    fn duplicate_site_timestamp_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        fs::write(
            &path,
            "timestamp,site_id,actual,capacity,latitude,longitude,q50\n\
             2019-05-01T12:00:00+00:00,a,1,2,0,0,1\n\
             2019-05-01T12:00:00+00:00,a,1,2,0,0,1\n",
        )
        .unwrap();
        assert!(matches!(
            ingest(&path, &DatasetSchema::default()),
            Err(IoError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn missing_required_column_is_fatal_and_bad_rows_skip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        fs::write(&path, "timestamp,actual,q50\n2019-05-01T12:00:00+00:00,1,1\n").unwrap();
        assert!(matches!(
            ingest(&path, &DatasetSchema::default()),
            Err(IoError::MissingColumn(c)) if c == "site_id"
        ));

        fs::write(
            &path,
            "timestamp,site_id,actual,latitude,longitude,q50\n\
             not-a-time,a,1,0,0,1\n\
             2019-05-01T12:00:00+00:00,a,0.4,0,0,0.5\n",
        )
        .unwrap();
        let (series, report) = ingest(&path, &DatasetSchema::default()).unwrap();
        assert_eq!(report.rows_skipped, 1);
        assert_eq!(series[0].records.len(), 1);
        // No capacity column: values pass through.
        assert_eq!(series[0].records[0].actual, 0.4);
    }

    #[test]
    fn daylight_needs_a_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        fs::write(&path, "timestamp,site_id,actual,q50\n2019-05-01T12:00:00+00:00,a,1,1\n")
            .unwrap();
        assert!(matches!(
            ingest(&path, &DatasetSchema::default()),
            Err(IoError::NoDaylightSource)
        ));
        let schema = DatasetSchema { daylight: DaylightRule::NonzeroActual, ..Default::default() };
        let (series, _) = ingest(&path, &schema).unwrap();
        assert!(series[0].records[0].is_daylight);
    }

    #[test]
    fn sunrise_sunset_columns_override_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        // Fleet-style series: explicit envelope, no coordinates.
        fs::write(
            &path,
            "timestamp,site_id,actual,sunrise,sunset,q50\n\
             2019-05-01T12:00:00+00:00,fleet,1,2019-05-01T06:00:00+00:00,2019-05-01T18:00:00+00:00,1\n\
             2019-05-01T22:00:00+00:00,fleet,0,2019-05-01T06:00:00+00:00,2019-05-01T18:00:00+00:00,0\n",
        )
        .unwrap();
        let (series, _) = ingest(&path, &DatasetSchema::default()).unwrap();
        assert!(series[0].records[0].is_daylight);
        assert!(!series[0].records[1].is_daylight);
        assert!((series[0].solar[0].rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interval_lookup_and_tolerance() {
        let rec = sample_record(&[(0.05, 0.1), (0.1, 0.2), (0.9, 0.8), (0.95, 0.9)]);
        let a = TargetCoverage::new(0.1).unwrap();
        let iv = interval_from_quantiles(&rec, a).unwrap();
        assert_eq!((iv.lower, iv.upper), (0.1, 0.9));
        let a2 = TargetCoverage::new(0.2).unwrap();
        let iv = interval_from_quantiles(&rec, a2).unwrap();
        assert_eq!((iv.lower, iv.upper), (0.2, 0.8));
        // Only deciles declared: alpha = 0.1 needs 0.05/0.95, beyond 0.005.
        let deciles: Vec<(Scalar, Scalar)> = (1..10).map(|i| (i as Scalar / 10.0, i as Scalar)).collect();
        let rec = sample_record(&deciles);
        assert!(matches!(
            interval_from_quantiles(&rec, a),
            Err(IoError::MissingQuantileLevel { .. })
        ));
    }

    #[test]
    fn percentile_grid_serves_every_default_alpha() {
        let levels: Vec<(Scalar, Scalar)> =
            (1..100).map(|i| (i as Scalar / 100.0, i as Scalar / 100.0)).collect();
        let rec = sample_record(&levels);
        for a in TargetCoverage::default_grid() {
            let iv = interval_from_quantiles(&rec, a).unwrap();
            assert!((iv.lower - a.alpha() / 2.0).abs() < 1e-9);
            assert!((iv.upper - (1.0 - a.alpha() / 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg.backtest.delta_rec, 1);
        assert_eq!(cfg.tuning.knn_k, vec![50, 100, 200, 500, 1000]);
        let cfg = load_config(
            None,
            &[
                "seed=9".into(),
                "backtest.delta_rec=3".into(),
                "synth.regime=\"diurnal\"".into(),
                "alphas=[0.1,0.2]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.backtest.delta_rec, 3);
        assert_eq!(cfg.synth.regime, "diurnal");
        assert_eq!(cfg.alphas, vec![0.1, 0.2]);
        assert!(load_config(None, &["no_such_field=1".into()]).is_err());

        let round = resolved_config_toml(&cfg);
        let back: AppConfig = toml::from_str(&round).unwrap();
        assert_eq!(back, cfg);
    }
}
