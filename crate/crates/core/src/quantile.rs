//! Weighted and empirical quantiles of discrete samples.
//!
//! The quantile of a weighted sample set is the left-continuous generalized
//! inverse CDF of the discrete mixture `sum_i p_i * dirac(z_i)`: the smallest
//! sample value whose normalized cumulative mass reaches the requested level.
//! No interpolation between atoms is performed, which keeps conformal
//! adjustments on the conservative side.

use thiserror::Error;

use crate::scalar::Real;

/// Absolute tolerance on cumulative-mass comparisons, absorbing summation
/// round-off when the requested level sits exactly on an atom boundary.
pub const MASS_EPSILON: f64 = 1e-12;

/// One sample value with a non-negative weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSample<T> {
    pub value: T,
    pub weight: T,
}

impl<T> WeightedSample<T> {
    pub fn new(value: T, weight: T) -> Self {
        Self { value, weight }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantileError {
    #[error("empty sample")]
    EmptySample,
    #[error("degenerate weights")]
    DegenerateWeights,
    #[error("quantile level must lie in [0, 1]")]
    InvalidLevel,
    #[error("non-finite sample value or weight")]
    NonFinite,
}

/// Left-continuous weighted quantile of `samples` at level `alpha`.
///
/// Weights need not be pre-normalized; they are normalized internally.
/// Samples with equal value are merged (weights summed) before the cumulative
/// scan, so the result does not depend on input order. `alpha = 0` yields the
/// minimum sample value, `alpha = 1` the maximum.
pub fn weighted_quantile<T: Real>(
    samples: &[WeightedSample<T>],
    alpha: T,
) -> Result<T, QuantileError> {
    if samples.is_empty() {
        return Err(QuantileError::EmptySample);
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(QuantileError::InvalidLevel);
    }
    let mut atoms: Vec<(T, T)> = Vec::with_capacity(samples.len());
    for s in samples {
        if !s.value.is_finite() || !s.weight.is_finite() {
            // An atom at +inf is allowed: it can only ever be returned as the
            // final fallback, which is exactly the conservative behavior the
            // test-point mass option relies on.
            if !(s.value == T::infinity() && s.weight.is_finite()) {
                return Err(QuantileError::NonFinite);
            }
        }
        if s.weight < T::zero() {
            return Err(QuantileError::NonFinite);
        }
        if s.weight > T::zero() {
            atoms.push((s.value, s.weight));
        }
    }
    if atoms.is_empty() {
        return Err(QuantileError::DegenerateWeights);
    }
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));

    // Merge equal values so the scan is order-independent.
    let mut merged: Vec<(T, T)> = Vec::with_capacity(atoms.len());
    for (v, w) in atoms {
        match merged.last_mut() {
            Some((mv, mw)) if *mv == v => *mw = *mw + w,
            _ => merged.push((v, w)),
        }
    }

    let total: T = merged.iter().map(|&(_, w)| w).sum();
    let eps = T::from(MASS_EPSILON).expect("epsilon representable");
    let threshold = alpha - eps;
    let mut cum = T::zero();
    for &(v, w) in &merged {
        cum = cum + w / total;
        if cum >= threshold {
            return Ok(v);
        }
    }
    // Round-off left the final cumulative mass fractionally below the
    // threshold; the maximum is the correct answer.
    Ok(merged.last().expect("non-empty").0)
}

/// Empirical quantile: the weighted quantile with uniform weights `1/n`.
///
/// Exact agreement with `weighted_quantile` under uniform weights is a
/// contract; this delegates rather than re-implementing the scan.
pub fn empirical_quantile<T: Real>(values: &[T], alpha: T) -> Result<T, QuantileError> {
    if values.is_empty() {
        return Err(QuantileError::EmptySample);
    }
    let w = T::one() / T::from_usize(values.len()).expect("length representable");
    let samples: Vec<WeightedSample<T>> =
        values.iter().map(|&v| WeightedSample::new(v, w)).collect();
    weighted_quantile(&samples, alpha)
}

/// Quantile over values pre-sorted ascending with aligned raw weights.
///
/// Same semantics as [`weighted_quantile`] without the sort/merge pass; used
/// on hot paths where scores are sorted once per calibration epoch. Ties need
/// not be merged: a crossing inside a run of equal values returns that value
/// either way.
pub(crate) fn quantile_sorted<T: Real>(values: &[T], weights: &[T], alpha: T) -> Option<T> {
    debug_assert_eq!(values.len(), weights.len());
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return None;
    }
    let eps = T::from(MASS_EPSILON).expect("epsilon representable");
    let threshold = alpha - eps;
    let mut cum = T::zero();
    for (&v, &w) in values.iter().zip(weights) {
        cum = cum + w / total;
        if cum >= threshold {
            return Some(v);
        }
    }
    values.last().copied()
}

/// Left-continuous empirical quantile of a pre-sorted slice in O(1).
///
/// Index form of the cumulative scan with uniform weights: the smallest `j`
/// with `j/n >= alpha - eps`.
pub(crate) fn sorted_uniform_quantile<T: Real>(sorted: &[T], alpha: T) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let eps = T::from(MASS_EPSILON).expect("epsilon representable");
    let nf = T::from_usize(n).expect("length representable");
    let j = (nf * (alpha - eps)).ceil();
    let j = j.to_usize().unwrap_or(0).clamp(1, n);
    Some(sorted[j - 1])
}
