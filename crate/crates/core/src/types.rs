//! Shared domain types.

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, SecondsFormat, Timelike};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypesError {
    #[error("invalid timestamp: {0}")]
    InvalidTimestamp(String),
    #[error("miscoverage rate must lie strictly in (0, 1), got {0}")]
    InvalidAlpha(String),
    #[error("interval bounds out of order: lower {lower} > upper {upper}")]
    InvertedInterval { lower: String, upper: String },
}

/// A calendar instant with timezone offset. Series data is hourly; derived
/// instants such as sunrise carry second precision.
///
/// Ordering and equality compare the underlying instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<FixedOffset>);

impl Timestamp {
    pub fn new(dt: DateTime<FixedOffset>) -> Self {
        Self(dt)
    }

    pub fn parse_rfc3339(s: &str) -> Result<Self, TypesError> {
        DateTime::parse_from_rfc3339(s)
            .map(Self)
            .map_err(|e| TypesError::InvalidTimestamp(format!("{s}: {e}")))
    }

    pub fn to_rfc3339(&self) -> String {
        self.0.to_rfc3339_opts(SecondsFormat::Secs, false)
    }

    pub fn inner(&self) -> DateTime<FixedOffset> {
        self.0
    }

    /// Hour of day in local site time, 0..=23.
    pub fn local_hour(&self) -> u32 {
        self.0.hour()
    }

    /// Local calendar date.
    pub fn local_date(&self) -> NaiveDate {
        self.0.date_naive()
    }

    /// Day of year in 1..=365; Dec 31 of a leap year reuses 365.
    pub fn day_of_year(&self) -> u32 {
        self.0.ordinal().min(365)
    }

    /// Month of year, 1..=12.
    pub fn month(&self) -> u32 {
        self.0.month()
    }

    pub fn plus_hours(&self, hours: i64) -> Self {
        Self(self.0 + Duration::hours(hours))
    }

    pub fn minus_hours(&self, hours: i64) -> Self {
        Self(self.0 - Duration::hours(hours))
    }

    pub fn plus_seconds(&self, seconds: i64) -> Self {
        Self(self.0 + Duration::seconds(seconds))
    }

    /// Signed whole seconds from `earlier` to `self`.
    pub fn seconds_since(&self, earlier: &Timestamp) -> i64 {
        (self.0 - earlier.0).num_seconds()
    }
}

/// Target miscoverage rate `alpha`; nominal coverage is `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TargetCoverage {
    alpha: Scalar,
}

impl TargetCoverage {
    pub fn new(alpha: Scalar) -> Result<Self, TypesError> {
        if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(TypesError::InvalidAlpha(format!("{alpha}")))
        }
    }

    pub fn alpha(&self) -> Scalar {
        self.alpha
    }

    pub fn coverage(&self) -> Scalar {
        1.0 - self.alpha
    }

    /// The default miscoverage grid {0.1, 0.2, 0.3, 0.4}.
    pub fn default_grid() -> Vec<TargetCoverage> {
        [0.1, 0.2, 0.3, 0.4]
            .iter()
            .map(|&a| TargetCoverage::new(a).expect("valid"))
            .collect()
    }
}

/// A lower/upper bound pair at a target coverage level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lower: Scalar,
    pub upper: Scalar,
    pub alpha: TargetCoverage,
    pub calibrated: bool,
}

impl PredictionInterval {
    pub fn new(
        lower: Scalar,
        upper: Scalar,
        alpha: TargetCoverage,
        calibrated: bool,
    ) -> Result<Self, TypesError> {
        if lower > upper {
            return Err(TypesError::InvertedInterval {
                lower: format!("{lower}"),
                upper: format!("{upper}"),
            });
        }
        Ok(Self { lower, upper, alpha, calibrated })
    }

    pub fn width(&self) -> Scalar {
        self.upper - self.lower
    }

    /// Closed-interval coverage check.
    pub fn covers(&self, actual: Scalar) -> bool {
        self.lower <= actual && actual <= self.upper
    }

    /// Clamp both bounds to the physical range [0, 1] of normalized power.
    pub fn clip_unit(&self) -> Self {
        Self {
            lower: self.lower.clamp(0.0, 1.0),
            upper: self.upper.clamp(0.0, 1.0),
            ..*self
        }
    }
}

/// One timestamped observation: actual power plus the forecaster's predicted
/// quantiles, both in per-unit of capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub t: Timestamp,
    pub site_id: String,
    pub actual: Scalar,
    /// `(level, value)` pairs sorted by level; values are non-decreasing
    /// after the ingestion crossing repair.
    pub raw_quantiles: Vec<(Scalar, Scalar)>,
    pub is_daylight: bool,
}

impl TimeSeriesRecord {
    /// Predicted value at the declared level nearest to `level`, within
    /// absolute tolerance `tol`.
    pub fn quantile_near(&self, level: Scalar, tol: Scalar) -> Option<Scalar> {
        let mut best: Option<(Scalar, Scalar)> = None;
        for &(l, v) in &self.raw_quantiles {
            let d = (l - level).abs();
            match best {
                Some((bd, _)) if bd <= d => {}
                _ => best = Some((d, v)),
            }
        }
        match best {
            Some((d, v)) if d <= tol + 1e-12 => Some(v),
            _ => None,
        }
    }
}

/// One emitted backtest row: a calibrated (or raw) interval next to the
/// realized actual.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub site_id: String,
    pub t: Timestamp,
    pub method: String,
    pub alpha: Scalar,
    pub lower: Scalar,
    pub upper: Scalar,
    pub actual: Scalar,
    pub covered: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_roundtrip_and_fields() {
        let t = Timestamp::parse_rfc3339("2019-06-02T13:00:00-05:00").unwrap();
        assert_eq!(t.to_rfc3339(), "2019-06-02T13:00:00-05:00");
        assert_eq!(t.local_hour(), 13);
        assert_eq!(t.month(), 6);
        assert_eq!(t.day_of_year(), 31 + 28 + 31 + 30 + 31 + 2);
        assert_eq!(t.minus_hours(14).local_hour(), 23);
        assert_eq!(t.plus_hours(24).local_date().to_string(), "2019-06-03");
    }

    #[test]
    fn leap_year_day_of_year_capped() {
        let t = Timestamp::parse_rfc3339("2020-12-31T12:00:00+00:00").unwrap();
        assert_eq!(t.inner().ordinal(), 366);
        assert_eq!(t.day_of_year(), 365);
    }

    #[test]
    fn target_coverage_bounds() {
        assert!(TargetCoverage::new(0.1).is_ok());
        assert!(TargetCoverage::new(0.0).is_err());
        assert!(TargetCoverage::new(1.0).is_err());
        assert!(TargetCoverage::new(f64::NAN).is_err());
        assert_eq!(TargetCoverage::new(0.2).unwrap().coverage(), 0.8);
    }

    #[test]
    fn interval_invariants() {
        let alpha = TargetCoverage::new(0.2).unwrap();
        assert!(PredictionInterval::new(0.3, 0.1, alpha, false).is_err());
        let iv = PredictionInterval::new(-0.2, 1.4, alpha, true).unwrap().clip_unit();
        assert_eq!((iv.lower, iv.upper), (0.0, 1.0));
        let iv = PredictionInterval::new(0.2, 0.8, alpha, false).unwrap();
        assert!(iv.covers(0.2) && iv.covers(0.8) && iv.covers(0.5));
        assert!(!iv.covers(0.81));
    }

    #[test]
    fn quantile_lookup_tolerance() {
        let rec = TimeSeriesRecord {
            t: Timestamp::parse_rfc3339("2019-01-01T12:00:00+00:00").unwrap(),
            site_id: "s".into(),
            actual: 0.5,
            raw_quantiles: vec![(0.1, 0.2), (0.5, 0.4), (0.9, 0.7)],
            is_daylight: true,
        };
        assert_eq!(rec.quantile_near(0.1, 0.005), Some(0.2));
        assert_eq!(rec.quantile_near(0.104, 0.005), Some(0.2));
        assert_eq!(rec.quantile_near(0.15, 0.005), None);
    }
}
