//! Evaluation metrics for prediction intervals: empirical coverage (PICP),
//! average interval width (AIW), Winkler score, and hourly conditional
//! coverage. All of them are computed over daylight records only; the engine
//! guarantees the inputs here are already daylight-filtered.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::types::{IntervalRecord, PredictionInterval, TargetCoverage};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("intervals and actuals differ in length: {intervals} vs {actuals}")]
    LengthMismatch { intervals: usize, actuals: usize },
}

fn check_aligned(n_intervals: usize, n_actuals: usize) -> Result<(), MetricsError> {
    if n_intervals == 0 {
        return Err(MetricsError::EmptyInput);
    }
    if n_intervals != n_actuals {
        return Err(MetricsError::LengthMismatch { intervals: n_intervals, actuals: n_actuals });
    }
    Ok(())
}

/// Fraction of actuals falling inside their interval (closed bounds).
pub fn picp(intervals: &[PredictionInterval], actuals: &[Scalar]) -> Result<Scalar, MetricsError> {
    check_aligned(intervals.len(), actuals.len())?;
    let covered = intervals.iter().zip(actuals).filter(|(iv, &y)| iv.covers(y)).count();
    Ok(covered as Scalar / intervals.len() as Scalar)
}

/// Mean interval width.
pub fn aiw(intervals: &[PredictionInterval]) -> Result<Scalar, MetricsError> {
    if intervals.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(intervals.iter().map(PredictionInterval::width).sum::<Scalar>() / intervals.len() as Scalar)
}

/// Per-record Winkler score: the interval width, plus `2 / alpha` times the
/// violation distance when the actual falls outside.
pub fn winkler_one(lower: Scalar, upper: Scalar, actual: Scalar, alpha: Scalar) -> Scalar {
    let iw = upper - lower;
    if actual > upper {
        iw + 2.0 / alpha * (actual - upper)
    } else if actual < lower {
        iw + 2.0 / alpha * (lower - actual)
    } else {
        iw
    }
}

/// Mean Winkler score at level `alpha`.
pub fn winkler(
    intervals: &[PredictionInterval],
    actuals: &[Scalar],
    alpha: TargetCoverage,
) -> Result<Scalar, MetricsError> {
    check_aligned(intervals.len(), actuals.len())?;
    let total: Scalar = intervals
        .iter()
        .zip(actuals)
        .map(|(iv, &y)| winkler_one(iv.lower, iv.upper, y, alpha.alpha()))
        .sum();
    Ok(total / intervals.len() as Scalar)
}

/// Coverage and sample count of one hour-of-day group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyCell {
    pub picp: Scalar,
    pub n: usize,
}

/// PICP per local hour of day. Hours with no records are absent from the map.
pub fn hourly_coverage(
    hours: &[u32],
    intervals: &[PredictionInterval],
    actuals: &[Scalar],
) -> BTreeMap<u32, HourlyCell> {
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for ((&h, iv), &y) in hours.iter().zip(intervals).zip(actuals) {
        let e = counts.entry(h).or_insert((0, 0));
        e.0 += 1;
        if iv.covers(y) {
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(h, (n, c))| (h, HourlyCell { picp: c as Scalar / n as Scalar, n }))
        .collect()
}

/// All metrics of one method at one target level.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMetrics {
    pub alpha: Scalar,
    pub picp: Scalar,
    pub aiw: Scalar,
    pub winkler: Scalar,
    pub n_evaluated: usize,
    pub hourly: BTreeMap<u32, HourlyCell>,
}

/// Metrics of one method across the alpha grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub per_alpha: Vec<AlphaMetrics>,
}

/// Build per-method reports from emitted interval records (one site, or a
/// pooled set). Methods and alphas come out in sorted order.
pub fn reports_from_records(records: &[IntervalRecord]) -> Vec<MethodReport> {
    let mut grouped: BTreeMap<(String, u64), Vec<&IntervalRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry((r.method.clone(), r.alpha.to_bits())).or_default().push(r);
    }
    let mut by_method: BTreeMap<String, Vec<AlphaMetrics>> = BTreeMap::new();
    for ((method, alpha_bits), rows) in grouped {
        let alpha = Scalar::from_bits(alpha_bits);
        let intervals: Vec<PredictionInterval> = rows
            .iter()
            .map(|r| {
                PredictionInterval::new(
                    r.lower,
                    r.upper,
                    TargetCoverage::new(r.alpha).expect("valid alpha in records"),
                    true,
                )
                .expect("ordered bounds in records")
            })
            .collect();
        let actuals: Vec<Scalar> = rows.iter().map(|r| r.actual).collect();
        let hours: Vec<u32> = rows.iter().map(|r| r.t.local_hour()).collect();
        let m = AlphaMetrics {
            alpha,
            picp: picp(&intervals, &actuals).expect("non-empty group"),
            aiw: aiw(&intervals).expect("non-empty group"),
            winkler: winkler(&intervals, &actuals, TargetCoverage::new(alpha).expect("valid"))
                .expect("non-empty group"),
            n_evaluated: rows.len(),
            hourly: hourly_coverage(&hours, &intervals, &actuals),
        };
        by_method.entry(method).or_default().push(m);
    }
    by_method
        .into_iter()
        .map(|(method, mut per_alpha)| {
            per_alpha.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).expect("finite alphas"));
            MethodReport { method, per_alpha }
        })
        .collect()
}

/// Average per-site reports into one report per method: the unweighted mean
/// of each site-level metric, with sample counts summed. Hour cells average
/// over the sites where the hour occurs.
pub fn aggregate_site_reports(site_reports: &[Vec<MethodReport>]) -> Vec<MethodReport> {
    #[derive(Default)]
    struct Acc {
        picp: Scalar,
        aiw: Scalar,
        winkler: Scalar,
        n_sites: usize,
        n_evaluated: usize,
        hourly: BTreeMap<u32, (Scalar, usize, usize)>, // (picp sum, site count, n sum)
    }
    let mut acc: BTreeMap<(String, u64), Acc> = BTreeMap::new();
    for site in site_reports {
        for report in site {
            for m in &report.per_alpha {
                let a = acc.entry((report.method.clone(), m.alpha.to_bits())).or_default();
                a.picp += m.picp;
                a.aiw += m.aiw;
                a.winkler += m.winkler;
                a.n_sites += 1;
                a.n_evaluated += m.n_evaluated;
                for (&h, cell) in &m.hourly {
                    let e = a.hourly.entry(h).or_insert((0.0, 0, 0));
                    e.0 += cell.picp;
                    e.1 += 1;
                    e.2 += cell.n;
                }
            }
        }
    }
    let mut by_method: BTreeMap<String, Vec<AlphaMetrics>> = BTreeMap::new();
    for ((method, alpha_bits), a) in acc {
        let n = a.n_sites as Scalar;
        by_method.entry(method).or_default().push(AlphaMetrics {
            alpha: Scalar::from_bits(alpha_bits),
            picp: a.picp / n,
            aiw: a.aiw / n,
            winkler: a.winkler / n,
            n_evaluated: a.n_evaluated,
            hourly: a
                .hourly
                .into_iter()
                .map(|(h, (p, sites, nn))| (h, HourlyCell { picp: p / sites as Scalar, n: nn }))
                .collect(),
        });
    }
    by_method
        .into_iter()
        .map(|(method, mut per_alpha)| {
            per_alpha.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).expect("finite alphas"));
            MethodReport { method, per_alpha }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(a: Scalar) -> TargetCoverage {
        TargetCoverage::new(a).unwrap()
    }

    fn iv(lo: Scalar, hi: Scalar, a: Scalar) -> PredictionInterval {
        PredictionInterval::new(lo, hi, alpha(a), true).unwrap()
    }

    #[test]
    fn picp_counting() {
        let intervals: Vec<_> = (0..10).map(|_| iv(0.2, 0.8, 0.2)).collect();
        let mut actuals = vec![0.5; 8];
        actuals.extend([0.9, 0.05]);
        assert_eq!(picp(&intervals, &actuals).unwrap(), 0.8);
        assert_eq!(picp(&intervals, &vec![0.5; 10]).unwrap(), 1.0);
    }

    #[test]
    fn picp_boundary_counts_as_covered() {
        let intervals = vec![iv(0.2, 0.8, 0.2)];
        assert_eq!(picp(&intervals, &[0.8]).unwrap(), 1.0);
        assert_eq!(picp(&intervals, &[0.2]).unwrap(), 1.0);
    }

    #[test]
    fn aiw_means() {
        let intervals = vec![iv(0.0, 0.2, 0.2), iv(0.3, 0.7, 0.2)];
        assert!((aiw(&intervals).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(aiw(&vec![iv(0.5, 0.5, 0.2); 3]).unwrap(), 0.0);
        let widths = [0.1, 0.1, 0.1, 0.5];
        let ivs: Vec<_> = widths.iter().map(|&w| iv(0.0, w, 0.2)).collect();
        assert!((aiw(&ivs).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn winkler_piecewise_cases() {
        let i = vec![iv(0.2, 0.8, 0.2)];
        assert!((winkler(&i, &[0.5], alpha(0.2)).unwrap() - 0.6).abs() < 1e-12);
        // Upper violation: 0.6 + (2 / 0.2) * 0.1 = 1.6.
        assert!((winkler(&i, &[0.9], alpha(0.2)).unwrap() - 1.6).abs() < 1e-12);
        // Lower violation at alpha = 0.1: 0.6 + 20 * 0.1 = 2.6.
        let i = vec![iv(0.2, 0.8, 0.1)];
        assert!((winkler(&i, &[0.1], alpha(0.1)).unwrap() - 2.6).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_error() {
        assert_eq!(picp(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(aiw(&[]), Err(MetricsError::EmptyInput));
        assert_eq!(winkler(&[], &[], alpha(0.2)), Err(MetricsError::EmptyInput));
        assert!(matches!(
            picp(&[iv(0.0, 1.0, 0.2)], &[]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hourly_coverage_groups() {
        let intervals = vec![iv(0.2, 0.8, 0.2); 4];
        let hours = [12, 12, 18, 18];
        let actuals = [0.5, 0.6, 0.9, 0.95];
        let map = hourly_coverage(&hours, &intervals, &actuals);
        assert_eq!(map.len(), 2);
        assert_eq!(map[&12], HourlyCell { picp: 1.0, n: 2 });
        assert_eq!(map[&18], HourlyCell { picp: 0.0, n: 2 });
        assert!(!map.contains_key(&3));
    }

    #[test]
    fn winkler_at_least_aiw_with_equality_iff_covered() {
        let intervals = vec![iv(0.2, 0.8, 0.2); 3];
        let inside = [0.3, 0.5, 0.8];
        assert_eq!(
            winkler(&intervals, &inside, alpha(0.2)).unwrap(),
            aiw(&intervals).unwrap()
        );
        let outside = [0.3, 0.5, 0.85];
        assert!(winkler(&intervals, &outside, alpha(0.2)).unwrap() > aiw(&intervals).unwrap());
    }

    #[test]
    fn winkler_translation_invariant() {
        let shift = 0.17;
        for (lo, hi, y) in [(0.2, 0.8, 0.5), (0.2, 0.8, 0.9), (0.1, 0.3, 0.05)] {
            let a = winkler_one(lo, hi, y, 0.2);
            let b = winkler_one(lo + shift, hi + shift, y + shift, 0.2);
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn record(site: &str, hour: u32, a: Scalar, lo: Scalar, hi: Scalar, y: Scalar) -> IntervalRecord {
        let t = crate::types::Timestamp::parse_rfc3339(&format!(
            "2019-04-01T{hour:02}:00:00+00:00"
        ))
        .unwrap();
        IntervalRecord {
            site_id: site.into(),
            t,
            method: "cqr".into(),
            alpha: a,
            lower: lo,
            upper: hi,
            actual: y,
            covered: lo <= y && y <= hi,
        }
    }

    #[test]
    fn picp_is_size_weighted_mean_of_hourly() {
        let mut records = Vec::new();
        for i in 0..7 {
            records.push(record("s", 10, 0.2, 0.2, 0.8, if i < 5 { 0.5 } else { 0.9 }));
        }
        for i in 0..3 {
            records.push(record("s", 14, 0.2, 0.2, 0.8, if i < 1 { 0.5 } else { 0.9 }));
        }
        let report = &reports_from_records(&records)[0];
        let m = &report.per_alpha[0];
        let weighted: Scalar =
            m.hourly.values().map(|c| c.picp * c.n as Scalar).sum::<Scalar>()
                / m.hourly.values().map(|c| c.n as Scalar).sum::<Scalar>();
        assert!((m.picp - weighted).abs() < 1e-12);
    }

    #[test]
    fn site_aggregation_is_unweighted_mean() {
        let site_a = reports_from_records(&[
            record("a", 10, 0.2, 0.2, 0.8, 0.5),
            record("a", 11, 0.2, 0.2, 0.8, 0.5),
        ]);
        let site_b = reports_from_records(&[record("b", 10, 0.2, 0.0, 0.4, 0.9)]);
        let agg = aggregate_site_reports(&[site_a.clone(), site_b.clone()]);
        let m = &agg[0].per_alpha[0];
        let pa = site_a[0].per_alpha[0].picp;
        let pb = site_b[0].per_alpha[0].picp;
        assert!((m.picp - (pa + pb) / 2.0).abs() < 1e-15);
        assert_eq!(m.n_evaluated, 3);
        let wa = site_a[0].per_alpha[0].winkler;
        let wb = site_b[0].per_alpha[0].winkler;
        assert!((m.winkler - (wa + wb) / 2.0).abs() < 1e-15);
    }
}
