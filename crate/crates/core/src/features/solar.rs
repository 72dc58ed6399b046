//! Sunrise and sunset times from the NOAA solar-position approximation.
//!
//! Fractional-year Fourier expansions for the equation of time and solar
//! declination, then the hour angle at zenith 90.833 degrees (geometric
//! horizon plus standard refraction). Accuracy is a couple of minutes, which
//! is all the daylight filter and solar-day feature need.

use chrono::{Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};

use super::{FeatureError, SiteGeometry};
use crate::types::Timestamp;

const ZENITH_DEG: f64 = 90.833;

/// Sunrise and sunset instants for `date` at `geom`, expressed in `offset`.
///
/// `date` is the local calendar date. Fails with `NoSolarEvent` when the sun
/// never crosses the horizon (polar day or night).
pub fn sunrise_sunset(
    geom: &SiteGeometry,
    date: NaiveDate,
    offset: FixedOffset,
) -> Result<(Timestamp, Timestamp), FeatureError> {
    geom.validate()?;

    let days_in_year = if date.leap_year() { 366.0 } else { 365.0 };
    // Fractional year, evaluated at local noon.
    let gamma = 2.0 * std::f64::consts::PI * (date.ordinal() as f64 - 1.0 + 0.5) / days_in_year;

    // Equation of time in minutes.
    let eqtime = 229.18
        * (0.000075 + 0.001868 * gamma.cos()
            - 0.032077 * gamma.sin()
            - 0.014615 * (2.0 * gamma).cos()
            - 0.040849 * (2.0 * gamma).sin());

    // Solar declination in radians.
    let decl = 0.006918 - 0.399912 * gamma.cos() + 0.070257 * gamma.sin()
        - 0.006758 * (2.0 * gamma).cos()
        + 0.000907 * (2.0 * gamma).sin()
        - 0.002697 * (3.0 * gamma).cos()
        + 0.00148 * (3.0 * gamma).sin();

    let lat = geom.latitude.to_radians();
    let cos_ha = ZENITH_DEG.to_radians().cos() / (lat.cos() * decl.cos()) - lat.tan() * decl.tan();
    if !(-1.0..=1.0).contains(&cos_ha) || !cos_ha.is_finite() {
        return Err(FeatureError::NoSolarEvent {
            latitude: geom.latitude,
            date,
        });
    }
    let ha_deg = cos_ha.acos().to_degrees();

    // Minutes past UTC midnight of `date`.
    let solar_noon = 720.0 - 4.0 * geom.longitude - eqtime;
    let rise_min = solar_noon - 4.0 * ha_deg;
    let set_min = solar_noon + 4.0 * ha_deg;

    let midnight = Utc
        .from_utc_datetime(&date.and_time(NaiveTime::MIN))
        .with_timezone(&offset);
    let to_ts =
        |minutes: f64| Timestamp::new(midnight + Duration::seconds((minutes * 60.0).round() as i64));
    Ok((to_ts(rise_min), to_ts(set_min)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(lat: f64, lon: f64) -> SiteGeometry {
        SiteGeometry { site_id: "test".into(), latitude: lat, longitude: lon }
    }

    #[test]
    fn equator_equinox_day_length_near_twelve_hours() {
        // Analytic symmetry: at the equator on an equinox the day length is
        // 12 h plus a few minutes of refraction allowance.
        let date = NaiveDate::from_ymd_opt(2019, 3, 20).unwrap();
        let (rise, set) = sunrise_sunset(&geom(0.0, 0.0), date, FixedOffset::east_opt(0).unwrap())
            .unwrap();
        let day_minutes = set.seconds_since(&rise) as f64 / 60.0;
        assert!(
            (day_minutes - 720.0).abs() < 10.0,
            "day length {day_minutes} min should be 720 +- 10"
        );
    }

    #[test]
    fn northern_summer_day_longer_than_winter() {
        let g = geom(40.0, -85.0);
        let off = FixedOffset::west_opt(5 * 3600).unwrap();
        let summer = sunrise_sunset(&g, NaiveDate::from_ymd_opt(2019, 6, 21).unwrap(), off).unwrap();
        let winter = sunrise_sunset(&g, NaiveDate::from_ymd_opt(2019, 12, 21).unwrap(), off).unwrap();
        let len = |(r, s): &(Timestamp, Timestamp)| s.seconds_since(r);
        assert!(len(&summer) > len(&winter));
    }

    #[test]
    fn polar_day_is_an_error() {
        let date = NaiveDate::from_ymd_opt(2019, 6, 21).unwrap();
        let err = sunrise_sunset(&geom(80.0, 10.0), date, FixedOffset::east_opt(0).unwrap());
        assert!(matches!(err, Err(FeatureError::NoSolarEvent { .. })));
    }

    #[test]
    fn sunrise_precedes_sunset_and_brackets_noon() {
        let g = geom(33.7, -84.4);
        let off = FixedOffset::west_opt(5 * 3600).unwrap();
        for (y, m, d) in [(2019, 1, 15), (2019, 4, 20), (2019, 8, 3), (2019, 11, 30)] {
            let date = NaiveDate::from_ymd_opt(y, m, d).unwrap();
            let (rise, set) = sunrise_sunset(&g, date, off).unwrap();
            assert!(rise < set);
            assert_eq!(rise.local_date(), date);
            assert!(rise.local_hour() < 12 && set.local_hour() >= 12);
        }
    }

    #[test]
    fn known_location_reference_times() {
        // Atlanta, 2019-04-20 (UTC-4 in effect): published calculators give
        // sunrise ~06:58, sunset ~20:13 local.
        let g = geom(33.749, -84.388);
        let off = FixedOffset::west_opt(4 * 3600).unwrap();
        let date = NaiveDate::from_ymd_opt(2019, 4, 20).unwrap();
        let (rise, set) = sunrise_sunset(&g, date, off).unwrap();
        let minutes = |t: &Timestamp| (t.local_hour() * 60 + t.inner().minute()) as i64;
        use chrono::Timelike;
        assert!((minutes(&rise) - (6 * 60 + 58)).abs() <= 4, "sunrise {}", rise.to_rfc3339());
        assert!((minutes(&set) - (20 * 60 + 13)).abs() <= 4, "sunset {}", set.to_rfc3339());
    }
}
