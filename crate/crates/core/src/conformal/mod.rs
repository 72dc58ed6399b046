//! Conformal calibration strategies.
//!
//! Everything here follows the same recipe: a conformity score per
//! calibration sample (signed distance of the actual from its raw interval),
//! a weight per sample, and a weighted score quantile `s_hat` at level
//! `1 - alpha` that shifts both interval bounds symmetrically outward
//! (`s_hat > 0`) or inward (`s_hat < 0`).
//!
//! Weight schemes:
//! - uniform (plain CQR),
//! - RBF / Laplacian kernels on covariate distance,
//! - k-means cluster restriction (weight 1 inside the test point's cluster),
//! - k-nearest neighbors (weight 1 on the K closest calibration points),
//! - exponential time decay (most recent sample weighted highest),
//!
//! plus the adaptive variant in [`adaptive`] which keeps uniform weights but
//! moves the quantile level itself.

mod adaptive;
mod kmeans;

pub use adaptive::{adaptive_step, AdaptiveState, ALPHA_EFFECTIVE_EPSILON};
pub use kmeans::{fit_kmeans, KMeansModel};

use thiserror::Error;

use crate::features::FeatureStats;
use crate::quantile::{weighted_quantile, QuantileError, WeightedSample};
use crate::types::{PredictionInterval, TargetCoverage, Timestamp, TypesError};
use crate::Scalar;

/// Below this, kernel weights are considered fully underflowed and the
/// uniform fallback kicks in.
const KERNEL_UNDERFLOW: Scalar = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("too few points: have {have}, need {need}")]
    TooFewPoints { have: usize, need: usize },
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Types(#[from] TypesError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("calibration set has no scores for alpha {0}")]
    UnknownAlpha(Scalar),
    #[error("covariates required by the weight scheme but absent")]
    MissingCovariates,
}

/// Signed interval-violation magnitude: `max(lower - actual, actual - upper)`.
/// Non-positive iff the actual lies inside the raw interval.
pub fn conformity_score(interval: &PredictionInterval, actual: Scalar) -> Scalar {
    (interval.lower - actual).max(actual - interval.upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Rbf,
    Laplacian,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Laplacian => "laplacian",
        }
    }
}

/// How calibration samples are weighted against a test instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    /// All weights 1: plain CQR.
    Uniform,
    /// `exp(-gamma * d)` with `d` the squared Euclidean (RBF) or L1
    /// (Laplacian) covariate distance.
    Kernel { kind: KernelKind, gamma: Scalar },
    /// Weight 1 for calibration points in the test point's cluster.
    KMeans { k: usize },
    /// Weight 1 for the K nearest calibration points (Euclidean), ties broken
    /// toward the earlier timestamp.
    Knn { k: usize },
    /// Weight `rho^delta` with `delta` the rank distance in time from the
    /// test instant (most recent calibration entry gets `rho^1`); covariates
    /// are ignored.
    NexCp { rho: Scalar },
}

impl WeightScheme {
    pub fn needs_covariates(&self) -> bool {
        matches!(
            self,
            WeightScheme::Kernel { .. } | WeightScheme::KMeans { .. } | WeightScheme::Knn { .. }
        )
    }
}

/// Similarity weights aligned with the entries of a calibration set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<Scalar>,
    /// True once the weights sum to 1. Schemes return raw weights; the
    /// quantile step normalizes.
    pub normalized: bool,
    /// Set when a degenerate weight pattern forced the uniform fallback.
    pub uniform_fallback: bool,
}

impl WeightVector {
    pub fn raw(weights: Vec<Scalar>) -> Self {
        Self { weights, normalized: false, uniform_fallback: false }
    }

    pub fn normalize(mut self) -> Result<Self, ConformalError> {
        let total: Scalar = self.weights.iter().sum();
        if !(total > 0.0) {
            return Err(ConformalError::Quantile(QuantileError::DegenerateWeights));
        }
        for w in &mut self.weights {
            *w /= total;
        }
        self.normalized = true;
        Ok(self)
    }
}

/// One calibration sample: timestamp, optional covariates, and one conformity
/// score per target level.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEntry {
    pub t: Timestamp,
    pub covariates: Option<Vec<Scalar>>,
    pub scores: Vec<Scalar>,
}

/// Time-ordered calibration samples with their epoch statistics.
///
/// Construction sorts entries by timestamp, so downstream weighting is
/// invariant to the caller's storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    entries: Vec<CalibrationEntry>,
    alphas: Vec<TargetCoverage>,
    stats: FeatureStats,
}

impl CalibrationSet {
    pub fn new(
        mut entries: Vec<CalibrationEntry>,
        alphas: Vec<TargetCoverage>,
        stats: FeatureStats,
    ) -> Result<Self, ConformalError> {
        entries.sort_by(|a, b| a.t.cmp(&b.t));
        for pair in entries.windows(2) {
            if pair[0].t == pair[1].t {
                return Err(ConformalError::InvalidInput(format!(
                    "duplicate calibration timestamp {}",
                    pair[0].t.to_rfc3339()
                )));
            }
        }
        let dim = entries.iter().find_map(|e| e.covariates.as_ref().map(Vec::len));
        for e in &entries {
            if e.scores.len() != alphas.len() {
                return Err(ConformalError::InvalidInput(format!(
                    "entry at {} has {} scores for {} alpha levels",
                    e.t.to_rfc3339(),
                    e.scores.len(),
                    alphas.len()
                )));
            }
            if let (Some(d), Some(x)) = (dim, e.covariates.as_ref()) {
                if x.len() != d {
                    return Err(ConformalError::InvalidInput(
                        "inconsistent covariate dimensions".into(),
                    ));
                }
            }
        }
        Ok(Self { entries, alphas, stats })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CalibrationEntry] {
        &self.entries
    }

    pub fn alphas(&self) -> &[TargetCoverage] {
        &self.alphas
    }

    pub fn stats(&self) -> &FeatureStats {
        &self.stats
    }

    /// Conformity scores (entry-aligned) for one target level.
    pub fn scores_for(&self, alpha: TargetCoverage) -> Result<Vec<Scalar>, ConformalError> {
        let idx = self
            .alphas
            .iter()
            .position(|a| a.alpha() == alpha.alpha())
            .ok_or(ConformalError::UnknownAlpha(alpha.alpha()))?;
        Ok(self.entries.iter().map(|e| e.scores[idx]).collect())
    }

    fn covariate_rows(&self) -> Result<Vec<&[Scalar]>, ConformalError> {
        self.entries
            .iter()
            .map(|e| e.covariates.as_deref().ok_or(ConformalError::MissingCovariates))
            .collect()
    }
}

fn sq_euclidean(a: &[Scalar], b: &[Scalar]) -> Scalar {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn l1_distance(a: &[Scalar], b: &[Scalar]) -> Scalar {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

/// A weight scheme fitted to one calibration epoch. Fitting is only material
/// for k-means (the cluster model); all other schemes are stateless.
#[derive(Debug, Clone)]
pub struct Weighter {
    scheme: WeightScheme,
    kmeans: Option<(KMeansModel, Vec<usize>)>,
}

impl Weighter {
    pub fn fit(
        scheme: WeightScheme,
        cal: &CalibrationSet,
        seed: u64,
    ) -> Result<Self, ConformalError> {
        let kmeans = match scheme {
            WeightScheme::KMeans { k } => {
                let rows = cal.covariate_rows()?;
                let dim = rows.first().map_or(0, |r| r.len());
                let flat: Vec<Scalar> = rows.iter().flat_map(|r| r.iter().copied()).collect();
                let model = fit_kmeans(&flat, dim, k, seed)?;
                let assignments = rows.iter().map(|r| model.assign(r)).collect();
                Some((model, assignments))
            }
            _ => None,
        };
        Ok(Self { scheme, kmeans })
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn kmeans_model(&self) -> Option<&KMeansModel> {
        self.kmeans.as_ref().map(|(m, _)| m)
    }

    /// Unnormalized similarity weights of the calibration entries against
    /// `x_test`. Falls back to uniform weights (with a diagnostic) when every
    /// weight underflows to numerically zero.
    pub fn weights(
        &self,
        x_test: Option<&[Scalar]>,
        cal: &CalibrationSet,
    ) -> Result<WeightVector, ConformalError> {
        let n = cal.len();
        if n == 0 {
            return Err(ConformalError::TooFewPoints { have: 0, need: 1 });
        }
        let need_x = self.scheme.needs_covariates();
        let x = match (need_x, x_test) {
            (true, Some(x)) => Some(x),
            (true, None) => return Err(ConformalError::MissingCovariates),
            (false, _) => None,
        };

        let weights = match self.scheme {
            WeightScheme::Uniform => vec![1.0; n],
            WeightScheme::Kernel { kind, gamma } => {
                if !(gamma > 0.0) {
                    return Err(ConformalError::InvalidInput(format!(
                        "kernel gamma must be positive, got {gamma}"
                    )));
                }
                let x = x.expect("checked above");
                let rows = cal.covariate_rows()?;
                if rows.iter().any(|r| r.len() != x.len()) {
                    return Err(ConformalError::InvalidInput(
                        "test covariate dimension differs from calibration".into(),
                    ));
                }
                rows.iter()
                    .map(|r| match kind {
                        KernelKind::Rbf => (-gamma * sq_euclidean(x, r)).exp(),
                        KernelKind::Laplacian => (-gamma * l1_distance(x, r)).exp(),
                    })
                    .collect()
            }
            WeightScheme::KMeans { .. } => {
                let x = x.expect("checked above");
                let (model, assignments) = self.kmeans.as_ref().ok_or_else(|| {
                    ConformalError::InvalidInput("k-means scheme used before fit".into())
                })?;
                let cluster = model.assign(x);
                assignments.iter().map(|&a| if a == cluster { 1.0 } else { 0.0 }).collect()
            }
            WeightScheme::Knn { k } => {
                if k == 0 {
                    return Err(ConformalError::InvalidInput("knn k must be positive".into()));
                }
                let x = x.expect("checked above");
                let rows = cal.covariate_rows()?;
                let mut order: Vec<(Scalar, usize)> =
                    rows.iter().enumerate().map(|(i, r)| (sq_euclidean(x, r), i)).collect();
                // Entries are time-sorted, so the index tie-break selects the
                // earlier timestamp first.
                order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                let mut w = vec![0.0; n];
                for &(_, i) in order.iter().take(k.min(n)) {
                    w[i] = 1.0;
                }
                w
            }
            WeightScheme::NexCp { rho } => {
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(ConformalError::InvalidInput(format!(
                        "nexcp rho must lie in (0, 1), got {rho}"
                    )));
                }
                // Rank distance in time: the most recent entry gets rho^1.
                (0..n).map(|i| rho.powi((n - i) as i32)).collect()
            }
        };

        let max = weights.iter().fold(0.0_f64, |m, &w| m.max(w));
        if max < KERNEL_UNDERFLOW {
            log::warn!(
                "all {n} similarity weights underflowed for {:?}; falling back to uniform",
                self.scheme
            );
            return Ok(WeightVector {
                weights: vec![1.0; n],
                normalized: false,
                uniform_fallback: true,
            });
        }
        Ok(WeightVector::raw(weights))
    }
}

/// Fit-and-weigh in one call.
pub fn compute_weights(
    scheme: WeightScheme,
    x_test: Option<&[Scalar]>,
    cal: &CalibrationSet,
    seed: u64,
) -> Result<WeightVector, ConformalError> {
    Weighter::fit(scheme, cal, seed)?.weights(x_test, cal)
}

/// Knobs of the conformal adjustment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Clamp calibrated bounds to [0, 1] (physical range of normalized
    /// generation).
    pub clip: bool,
    /// Take the score quantile at level `(1 - alpha) * (n + 1) / n` instead
    /// of the plain `1 - alpha`.
    pub finite_sample_correction: bool,
    /// Add the weighted-CP point mass at +infinity for the test point.
    pub test_point_mass: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { clip: true, finite_sample_correction: false, test_point_mass: false }
    }
}

/// Conformalize a raw interval: `s_hat` is the weighted `1 - alpha` quantile
/// of the calibration conformity scores at this level, and both bounds move
/// outward by `s_hat`.
pub fn calibrate_interval(
    raw: &PredictionInterval,
    cal: &CalibrationSet,
    weights: &WeightVector,
    alpha: TargetCoverage,
    opts: &CalibrationOptions,
) -> Result<PredictionInterval, ConformalError> {
    let scores = cal.scores_for(alpha)?;
    calibrate_with_scores(raw, &scores, weights, 1.0 - alpha.alpha(), alpha, opts)
}

/// Same adjustment with explicit scores and quantile level; the adaptive
/// method passes `1 - alpha_effective` here.
pub fn calibrate_with_scores(
    raw: &PredictionInterval,
    scores: &[Scalar],
    weights: &WeightVector,
    level: Scalar,
    alpha: TargetCoverage,
    opts: &CalibrationOptions,
) -> Result<PredictionInterval, ConformalError> {
    if scores.len() != weights.weights.len() {
        return Err(ConformalError::InvalidInput(format!(
            "{} scores vs {} weights",
            scores.len(),
            weights.weights.len()
        )));
    }
    let mut samples: Vec<WeightedSample<Scalar>> = scores
        .iter()
        .zip(&weights.weights)
        .map(|(&s, &w)| WeightedSample::new(s, w))
        .collect();
    let mut level = level;
    if opts.finite_sample_correction {
        let n = samples.iter().filter(|s| s.weight > 0.0).count().max(1) as Scalar;
        level = (level * (n + 1.0) / n).min(1.0);
    }
    if opts.test_point_mass {
        // The test point weighs as much as a zero-distance calibration point
        // under every scheme.
        let unit =
            if weights.normalized { 1.0 / weights.weights.len() as Scalar } else { 1.0 };
        samples.push(WeightedSample::new(Scalar::INFINITY, unit));
    }
    let s_hat = weighted_quantile(&samples, level)?;

    let lower = raw.lower - s_hat;
    let upper = raw.upper + s_hat;
    let (lower, upper) = if lower > upper {
        // The shrink exceeded the half-width; collapse to the midpoint rather
        // than emitting an inverted interval.
        let mid = (raw.lower + raw.upper) / 2.0;
        (mid, mid)
    } else {
        (lower, upper)
    };
    let interval = PredictionInterval::new(lower, upper, alpha, true)?;
    Ok(if opts.clip { interval.clip_unit() } else { interval })
}
