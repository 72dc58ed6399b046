//! Covariate construction for similarity weighting.
//!
//! The covariate vector of a record concatenates, in this fixed order:
//! historical lag values `[y_{t-l}, ..., y_{t-l-k}]`, then the sin/cos pairs
//! of the hour-of-day, day-of-year, month-of-year, and normalized-solar-day
//! embeddings — one pair per family active in the feature mask. Every
//! component is z-scored against statistics fitted on the current calibration
//! set only; zero-variance components map to 0.

mod solar;

pub use solar::sunrise_sunset;

use chrono::NaiveDate;
use thiserror::Error;

use crate::types::{TimeSeriesRecord, Timestamp};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("insufficient history for lag {lag} window {window} at {t}")]
    InsufficientHistory { t: String, lag: u32, window: u32 },
    #[error("no solar event at latitude {latitude} on {date}")]
    NoSolarEvent { latitude: f64, date: NaiveDate },
    #[error("invalid site geometry: latitude {latitude}, longitude {longitude}")]
    InvalidGeometry { latitude: f64, longitude: f64 },
    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Site location used to compute sunrise and sunset when the dataset does not
/// supply them.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGeometry {
    pub site_id: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl SiteGeometry {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.latitude.abs() <= 90.0 && self.longitude.abs() <= 180.0 {
            Ok(())
        } else {
            Err(FeatureError::InvalidGeometry {
                latitude: self.latitude,
                longitude: self.longitude,
            })
        }
    }
}

/// Cyclic embedding period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodKind {
    HourOfDay,
    DayOfYear,
    MonthOfYear,
}

/// One sin/cos embedding pair on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEmbedding {
    pub sin: Scalar,
    pub cos: Scalar,
    pub kind: PeriodKind,
}

/// Cyclic time embedding `(sin theta, cos theta)` with `theta = 2 pi a / P`.
///
/// Position `a` is 1-based: hour of day in 1..=24 (P = 24), day of year in
/// 1..=365 (P = 365, Dec 31 of a leap year reuses 365), month in 1..=12
/// (P = 12).
pub fn time_embedding(t: Timestamp, kind: PeriodKind) -> TimeEmbedding {
    let (a, period) = match kind {
        PeriodKind::HourOfDay => (t.local_hour() + 1, 24.0),
        PeriodKind::DayOfYear => (t.day_of_year(), 365.0),
        PeriodKind::MonthOfYear => (t.month(), 12.0),
    };
    let theta = 2.0 * std::f64::consts::PI * a as Scalar / period;
    TimeEmbedding { sin: theta.sin(), cos: theta.cos(), kind }
}

/// Normalized time of solar day and its embedding; undefined outside
/// [sunrise, sunset].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarDayFeature {
    pub rho: Scalar,
    pub sin: Scalar,
    pub cos: Scalar,
    pub defined: bool,
}

impl SolarDayFeature {
    pub fn undefined() -> Self {
        Self { rho: 0.0, sin: 0.0, cos: 0.0, defined: false }
    }
}

/// Fraction of daylight elapsed, `rho = (t - sunrise) / (sunset - sunrise)`,
/// embedded as `(sin 2 pi rho, cos 2 pi rho)`. `defined` is false at night.
///
/// For fleet-level series, pass the earliest sunrise and latest sunset across
/// the member sites.
pub fn solar_day_feature(t: Timestamp, sunrise: Timestamp, sunset: Timestamp) -> SolarDayFeature {
    debug_assert!(sunrise < sunset);
    if t < sunrise || t > sunset {
        return SolarDayFeature::undefined();
    }
    let rho = t.seconds_since(&sunrise) as Scalar / sunset.seconds_since(&sunrise) as Scalar;
    let phi = 2.0 * std::f64::consts::PI * rho;
    SolarDayFeature { rho, sin: phi.sin(), cos: phi.cos(), defined: true }
}

/// Recent historical actuals `[y_{t-l}, ..., y_{t-l-k}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagFeature {
    pub lag_hours: u32,
    pub window: u32,
    pub values: Vec<Scalar>,
}

/// Extract the `k+1` actuals at `l, l+1, ..., l+k` hours before `t` from a
/// time-sorted series. Any missing hour makes the whole feature unavailable
/// and the sample is excluded upstream.
pub fn build_lag_feature(
    series: &[TimeSeriesRecord],
    t: Timestamp,
    lag_hours: u32,
    window: u32,
) -> Result<LagFeature, FeatureError> {
    let mut values = Vec::with_capacity(window as usize + 1);
    for j in 0..=window {
        let target = t.minus_hours((lag_hours + j) as i64);
        match series.binary_search_by(|r| r.t.cmp(&target)) {
            Ok(idx) => values.push(series[idx].actual),
            Err(_) => {
                return Err(FeatureError::InsufficientHistory {
                    t: t.to_rfc3339(),
                    lag: lag_hours,
                    window,
                })
            }
        }
    }
    Ok(LagFeature { lag_hours, window, values })
}

/// Which feature families participate in the covariate vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureMask {
    pub lags: bool,
    pub hour: bool,
    pub day_of_year: bool,
    pub month: bool,
    pub solar: bool,
}

impl FeatureMask {
    pub fn all() -> Self {
        Self { lags: true, hour: true, day_of_year: true, month: true, solar: true }
    }

    pub fn family_count(&self) -> usize {
        [self.lags, self.hour, self.day_of_year, self.month, self.solar]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Covariate dimension under this mask for lag window `k`.
    pub fn dimension(&self, lag_window: u32) -> usize {
        let mut d = 0;
        if self.lags {
            d += lag_window as usize + 1;
        }
        for on in [self.hour, self.day_of_year, self.month, self.solar] {
            if on {
                d += 2;
            }
        }
        d
    }

    /// All 31 non-empty family subsets, ordered by family count then by a
    /// canonical bit order (lags, hour, day-of-year, month, solar).
    pub fn enumerate_nonempty() -> Vec<FeatureMask> {
        let mut masks: Vec<FeatureMask> = (1u8..32)
            .map(|bits| FeatureMask {
                lags: bits & 1 != 0,
                hour: bits & 2 != 0,
                day_of_year: bits & 4 != 0,
                month: bits & 8 != 0,
                solar: bits & 16 != 0,
            })
            .collect();
        masks.sort_by_key(|m| (m.family_count(), m.bits()));
        masks
    }

    pub(crate) fn bits(&self) -> u8 {
        (self.lags as u8)
            | (self.hour as u8) << 1
            | (self.day_of_year as u8) << 2
            | (self.month as u8) << 3
            | (self.solar as u8) << 4
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.lags {
            parts.push("lags");
        }
        if self.hour {
            parts.push("hour");
        }
        if self.day_of_year {
            parts.push("doy");
        }
        if self.month {
            parts.push("month");
        }
        if self.solar {
            parts.push("solar");
        }
        parts.join("+")
    }

    pub fn parse(s: &str) -> Option<FeatureMask> {
        let mut m =
            FeatureMask { lags: false, hour: false, day_of_year: false, month: false, solar: false };
        for part in s.split('+') {
            match part.trim() {
                "lags" => m.lags = true,
                "hour" => m.hour = true,
                "doy" => m.day_of_year = true,
                "month" => m.month = true,
                "solar" => m.solar = true,
                "" => {}
                _ => return None,
            }
        }
        if m.family_count() == 0 {
            None
        } else {
            Some(m)
        }
    }
}

/// Per-component standardization statistics, fitted on one calibration set.
///
/// Two stats objects compare unequal whenever they were fitted on different
/// data, which is what the leakage tests key on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<Scalar>,
    pub std: Vec<Scalar>,
}

/// Relative threshold under which a component is treated as constant.
const STD_FLOOR: Scalar = 1e-9;

impl FeatureStats {
    /// Fit per-component mean and population standard deviation.
    pub fn fit(rows: &[Vec<Scalar>]) -> Self {
        if rows.is_empty() {
            return Self { mean: Vec::new(), std: Vec::new() };
        }
        let dim = rows[0].len();
        let n = rows.len() as Scalar;
        let mut mean = vec![0.0; dim];
        for row in rows {
            debug_assert_eq!(row.len(), dim);
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = x - m;
                *v += d * d;
            }
        }
        let std = var.iter().map(|&v| (v / n).sqrt()).collect();
        Self { mean, std }
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Z-score `raw` in place of a fresh vector; constant components map to 0.
    pub fn standardize(&self, raw: &[Scalar]) -> Result<Vec<Scalar>, FeatureError> {
        if raw.len() != self.mean.len() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.mean.len(),
                got: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (&m, &s))| {
                if s <= STD_FLOOR * (1.0 + m.abs()) {
                    0.0
                } else {
                    (x - m) / s
                }
            })
            .collect())
    }
}

/// The context vector for one record under a feature mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateVector {
    pub components: Vec<Scalar>,
    pub mask: FeatureMask,
}

/// Raw (unstandardized) covariates for the record at `t`: lag values first,
/// then active embedding pairs in the documented order.
///
/// `solar` must be the record's solar-day feature; it is only consulted when
/// the mask includes the solar family.
pub fn raw_covariates(
    series: &[TimeSeriesRecord],
    t: Timestamp,
    mask: &FeatureMask,
    lag_hours: u32,
    lag_window: u32,
    solar: &SolarDayFeature,
) -> Result<Vec<Scalar>, FeatureError> {
    let mut out = Vec::with_capacity(mask.dimension(lag_window));
    if mask.lags {
        let lf = build_lag_feature(series, t, lag_hours, lag_window)?;
        out.extend_from_slice(&lf.values);
    }
    if mask.hour {
        let e = time_embedding(t, PeriodKind::HourOfDay);
        out.push(e.sin);
        out.push(e.cos);
    }
    if mask.day_of_year {
        let e = time_embedding(t, PeriodKind::DayOfYear);
        out.push(e.sin);
        out.push(e.cos);
    }
    if mask.month {
        let e = time_embedding(t, PeriodKind::MonthOfYear);
        out.push(e.sin);
        out.push(e.cos);
    }
    if mask.solar {
        out.push(solar.sin);
        out.push(solar.cos);
    }
    Ok(out)
}

/// Standardized covariate vector for one record, using calibration-epoch
/// statistics (never fitted on the test point).
pub fn assemble_covariates(
    series: &[TimeSeriesRecord],
    t: Timestamp,
    mask: &FeatureMask,
    lag_hours: u32,
    lag_window: u32,
    solar: &SolarDayFeature,
    stats: &FeatureStats,
) -> Result<CovariateVector, FeatureError> {
    let raw = raw_covariates(series, t, mask, lag_hours, lag_window, solar)?;
    Ok(CovariateVector { components: stats.standardize(&raw)?, mask: *mask })
}
