//! Synthetic solar-generation data with analytically known conditional
//! distributions.
//!
//! Actual generation follows a solar bell: zero at night and
//! `clamp(mu_t + sigma_t * eps, 0, 1)` with `eps ~ N(0, 1)` during daylight,
//! where `mu_t` and `sigma_t` are deterministic functions of the position in
//! the solar day (and, for the regime-switching process, of a hidden per-day
//! Markov state). The emitted forecast quantiles are deliberately distorted
//! copies of the true conditional quantiles — the distortion scales the
//! forecast spread — mirroring a miscalibrated black-box forecaster. The true
//! conditional quantile function is returned alongside so tests can check
//! coverage claims against a closed form.

use std::collections::HashMap;

use chrono::{Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::features::{solar_day_feature, sunrise_sunset, FeatureError, SiteGeometry};
use crate::io::{SiteSeries, SynthSection};
use crate::seeding::{hash_str, mix_seed};
use crate::types::{TimeSeriesRecord, Timestamp};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
}

/// Data-generating process shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Constant daylight noise scale and distortion: conformity scores are
    /// i.i.d. across daylight hours.
    Exchangeable,
    /// Noise scale and distortion vary smoothly with the position in the
    /// solar day: forecast spread is overstated near midday and understated
    /// toward sunrise/sunset, so no single global adjustment fits every hour.
    DiurnalHeteroscedastic,
    /// Two-state per-day Markov process (clear vs. overcast) with distinct
    /// amplitude, noise scale, and distortion per state; recent lags reveal
    /// the active state.
    RegimeSwitching,
}

impl Regime {
    pub fn parse(s: &str) -> Option<Regime> {
        match s {
            "exchangeable" => Some(Regime::Exchangeable),
            "diurnal" | "diurnal-heteroscedastic" => Some(Regime::DiurnalHeteroscedastic),
            "regime-switching" => Some(Regime::RegimeSwitching),
            _ => None,
        }
    }
}

/// Distortion applied to the emitted forecast quantiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Miscalibration {
    None,
    /// Multiply the forecast standard deviation by this factor (< 1 =
    /// overconfident spread, > 1 = overdispersed).
    SpreadScale(Scalar),
}

impl Miscalibration {
    fn factor(&self) -> Scalar {
        match *self {
            Miscalibration::None => 1.0,
            Miscalibration::SpreadScale(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSite {
    pub site_id: String,
    pub latitude: Scalar,
    pub longitude: Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_days: u32,
    pub start_date: NaiveDate,
    pub utc_offset_hours: i32,
    pub sites: Vec<SynthSite>,
    pub regime: Regime,
    pub miscalibration: Miscalibration,
    pub noise_seed: u64,
}

impl SynthSpec {
    pub fn from_section(section: &SynthSection, seed: u64) -> Result<Self, SynthError> {
        let regime = Regime::parse(&section.regime)
            .ok_or_else(|| SynthError::InvalidSpec(format!("unknown regime {}", section.regime)))?;
        let miscalibration = if section.spread_scale == 1.0 {
            Miscalibration::None
        } else if section.spread_scale > 0.0 {
            Miscalibration::SpreadScale(section.spread_scale)
        } else {
            return Err(SynthError::InvalidSpec("spread_scale must be positive".into()));
        };
        Ok(Self {
            n_days: section.n_days,
            start_date: section.start_date,
            utc_offset_hours: section.utc_offset_hours,
            sites: section
                .sites
                .iter()
                .map(|s| SynthSite {
                    site_id: s.id.clone(),
                    latitude: s.latitude,
                    longitude: s.longitude,
                })
                .collect(),
            regime,
            miscalibration,
            noise_seed: seed,
        })
    }
}

/// True conditional parameters per emitted record; quantiles are
/// `clamp(mu + sigma * z_level, 0, 1)` because clamping is monotone.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    params: HashMap<(String, Timestamp), (Scalar, Scalar)>,
}

impl GroundTruth {
    pub fn params(&self, site: &str, t: Timestamp) -> Option<(Scalar, Scalar)> {
        self.params.get(&(site.to_string(), t)).copied()
    }

    pub fn quantile(&self, site: &str, t: Timestamp, level: Scalar) -> Option<Scalar> {
        let (mu, sigma) = self.params(site, t)?;
        if sigma == 0.0 {
            return Some(mu.clamp(0.0, 1.0));
        }
        let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(level);
        Some((mu + sigma * z).clamp(0.0, 1.0))
    }
}

/// Solar bell with a floor, so daylight conditional means stay clear of the
/// clamp boundary and closed-form coverage stays exact.
fn bell(rho: Scalar) -> Scalar {
    0.15 + 0.85 * (std::f64::consts::PI * rho).sin()
}

#[derive(Debug, Clone, Copy)]
struct HourParams {
    mu: Scalar,
    sigma: Scalar,
    /// Forecast-spread distortion before the global miscalibration factor.
    distortion: Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DayState {
    Clear,
    Overcast,
}

/// Probability of keeping yesterday's state in the regime-switching process.
const STATE_PERSISTENCE: Scalar = 0.9;

fn hour_params(regime: Regime, rho: Scalar, state: DayState) -> HourParams {
    let b = bell(rho);
    match regime {
        Regime::Exchangeable => HourParams { mu: 0.6 * b, sigma: 0.05, distortion: 1.0 },
        Regime::DiurnalHeteroscedastic => {
            let sigma = 0.08 * (0.4 + 0.6 * (std::f64::consts::PI * rho).sin());
            let z = (rho - 0.5) / 0.18;
            let distortion = 0.85 + 0.65 * (-z * z).exp();
            HourParams { mu: 0.65 * b, sigma, distortion }
        }
        Regime::RegimeSwitching => match state {
            DayState::Clear => HourParams { mu: 0.75 * b, sigma: 0.04, distortion: 0.85 },
            DayState::Overcast => HourParams { mu: 0.45 * b, sigma: 0.12, distortion: 1.3 },
        },
    }
}

/// Emitted forecast levels: the 99 percentiles.
fn forecast_levels() -> Vec<Scalar> {
    (1..100).map(|i| i as Scalar / 100.0).collect()
}

/// Generate hourly records for every site in `spec` together with the true
/// conditional quantile function. Same spec (and seed) always yields an
/// identical series.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<SiteSeries>, GroundTruth), SynthError> {
    if spec.n_days == 0 || spec.sites.is_empty() {
        return Err(SynthError::InvalidSpec("need at least one day and one site".into()));
    }
    let offset = FixedOffset::east_opt(spec.utc_offset_hours * 3600)
        .ok_or_else(|| SynthError::InvalidSpec("utc_offset_hours out of range".into()))?;
    let levels = forecast_levels();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z_levels: Vec<Scalar> = levels.iter().map(|&l| normal.inverse_cdf(l)).collect();
    let global = spec.miscalibration.factor();

    let mut truth = GroundTruth::default();
    let mut series = Vec::with_capacity(spec.sites.len());
    for site in &spec.sites {
        let geom = SiteGeometry {
            site_id: site.site_id.clone(),
            latitude: site.latitude,
            longitude: site.longitude,
        };
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix_seed(spec.noise_seed, &[hash_str(&site.site_id)]));
        let mut state = DayState::Clear;
        let mut records = Vec::with_capacity(spec.n_days as usize * 24);
        let mut solar = Vec::with_capacity(spec.n_days as usize * 24);
        for day in 0..spec.n_days {
            let date = spec.start_date + Duration::days(day as i64);
            let (rise, set) = sunrise_sunset(&geom, date, offset)?;
            // Day state first, then 24 noise draws, so the stream layout does
            // not depend on day length.
            let flip: Scalar = rand::Rng::gen(&mut rng);
            if flip > STATE_PERSISTENCE {
                state = match state {
                    DayState::Clear => DayState::Overcast,
                    DayState::Overcast => DayState::Clear,
                };
            }
            for hour in 0..24u32 {
                let eps: Scalar = StandardNormal.sample(&mut rng);
                let local = offset
                    .from_local_datetime(
                        &date.and_time(NaiveTime::from_hms_opt(hour, 0, 0).expect("valid")),
                    )
                    .single()
                    .expect("fixed offsets are unambiguous");
                let t = Timestamp::new(local.with_timezone(&Utc).with_timezone(&offset));
                let feature = solar_day_feature(t, rise, set);
                let (record, mu_sigma) = if feature.defined {
                    let p = hour_params(spec.regime, feature.rho, state);
                    let actual = (p.mu + p.sigma * eps).clamp(0.0, 1.0);
                    let c = p.distortion * global;
                    let quantiles: Vec<(Scalar, Scalar)> = levels
                        .iter()
                        .zip(&z_levels)
                        .map(|(&l, &z)| (l, (p.mu + c * p.sigma * z).clamp(0.0, 1.0)))
                        .collect();
                    (
                        TimeSeriesRecord {
                            t,
                            site_id: site.site_id.clone(),
                            actual,
                            raw_quantiles: quantiles,
                            is_daylight: true,
                        },
                        (p.mu, p.sigma),
                    )
                } else {
                    let quantiles: Vec<(Scalar, Scalar)> =
                        levels.iter().map(|&l| (l, 0.0)).collect();
                    (
                        TimeSeriesRecord {
                            t,
                            site_id: site.site_id.clone(),
                            actual: 0.0,
                            raw_quantiles: quantiles,
                            is_daylight: false,
                        },
                        (0.0, 0.0),
                    )
                };
                truth.params.insert((site.site_id.clone(), t), mu_sigma);
                records.push(record);
                solar.push(feature);
            }
        }
        series.push(SiteSeries {
            site_id: site.site_id.clone(),
            geometry: Some(geom),
            records,
            solar,
        });
    }
    Ok((series, truth))
}
