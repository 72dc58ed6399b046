//! Adaptive conformal calibration: steer an effective miscoverage level
//! toward the target via feedback on observed miscoverage.

use crate::types::TargetCoverage;
use crate::Scalar;

/// Clamp bound keeping the effective level strictly inside (0, 1).
pub const ALPHA_EFFECTIVE_EPSILON: Scalar = 1e-4;

/// Evolving state of the adaptive method for one target level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveState {
    alpha_target: TargetCoverage,
    alpha_effective: Scalar,
    gamma: Scalar,
}

impl AdaptiveState {
    /// Start at the nominal target with learning rate `gamma`.
    pub fn new(alpha_target: TargetCoverage, gamma: Scalar) -> Self {
        Self { alpha_target, alpha_effective: alpha_target.alpha(), gamma }
    }

    pub fn alpha_target(&self) -> TargetCoverage {
        self.alpha_target
    }

    pub fn alpha_effective(&self) -> Scalar {
        self.alpha_effective
    }

    pub fn gamma(&self) -> Scalar {
        self.gamma
    }

    /// Swap the learning rate, keeping the learned effective level.
    pub fn with_gamma(self, gamma: Scalar) -> Self {
        Self { gamma, ..self }
    }

    /// Quantile level at which the next interval's score adjustment is taken.
    pub fn quantile_level(&self) -> Scalar {
        1.0 - self.alpha_effective
    }

    /// One feedback update: `alpha_eff += gamma * (alpha_target - err)` with
    /// `err = 1` on miscoverage, clamped to
    /// `[ALPHA_EFFECTIVE_EPSILON, 1 - ALPHA_EFFECTIVE_EPSILON]`.
    pub fn step(&self, covered: bool) -> Self {
        let err = if covered { 0.0 } else { 1.0 };
        let next = self.alpha_effective + self.gamma * (self.alpha_target.alpha() - err);
        Self {
            alpha_effective: next
                .clamp(ALPHA_EFFECTIVE_EPSILON, 1.0 - ALPHA_EFFECTIVE_EPSILON),
            ..*self
        }
    }
}

/// Free-function form of [`AdaptiveState::step`].
pub fn adaptive_step(state: &AdaptiveState, covered: bool) -> AdaptiveState {
    state.step(covered)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covered_step_increases_by_gamma_times_target() {
        // gamma = 1e-3, target alpha = 0.1, err = 0: delta = 1e-4.
        let s = AdaptiveState::new(TargetCoverage::new(0.1).unwrap(), 1e-3);
        let next = adaptive_step(&s, true);
        assert!((next.alpha_effective() - (0.1 + 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn miscovered_step_widens() {
        // err = 1: delta = 1e-3 * (0.1 - 1) = -9e-4, so intervals widen next.
        let s = AdaptiveState::new(TargetCoverage::new(0.1).unwrap(), 1e-3);
        let next = adaptive_step(&s, false);
        assert!((next.alpha_effective() - (0.1 - 9e-4)).abs() < 1e-15);
        assert!(next.quantile_level() > s.quantile_level());
    }

    #[test]
    fn effective_level_clamped() {
        let mut s = AdaptiveState::new(TargetCoverage::new(0.1).unwrap(), 0.5);
        for _ in 0..20 {
            s = s.step(false);
        }
        assert_eq!(s.alpha_effective(), ALPHA_EFFECTIVE_EPSILON);
        for _ in 0..20 {
            s = s.step(true);
        }
        assert!(s.alpha_effective() <= 1.0 - ALPHA_EFFECTIVE_EPSILON);
    }
}
