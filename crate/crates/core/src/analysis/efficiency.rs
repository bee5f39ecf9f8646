//! Stationary rates and PoW efficiency.

use crate::dynamics::{MarkovChain, StepKind};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-block-step expectations under a stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryRates<T> {
    pub critical: T,
    pub removed: T,
    pub reward: T,
    pub prune: T,
    pub reset: T,
}

impl<T: Real> StationaryRates<T> {
    pub fn of(chain: &MarkovChain<T>, v: &[T]) -> Self {
        let zero = T::zero();
        let mut r = StationaryRates {
            critical: zero,
            removed: zero,
            reward: zero,
            prune: zero,
            reset: zero,
        };
        for (s, &vs) in v.iter().enumerate() {
            if vs == zero {
                continue;
            }
            for t in chain.row(s) {
                let w = vs * t.probability;
                r.critical = r.critical + w * T::from_count(t.pruned_critical as usize);
                r.removed = r.removed + w * T::from_count(t.pruned_total as usize);
                r.reward = r.reward + w * t.reward;
                match t.kind {
                    StepKind::Prune => r.prune = r.prune + w,
                    StepKind::Reset => r.reset = r.reset + w,
                    StepKind::Grow => {}
                }
            }
        }
        r
    }

    /// Finalized critical blocks per permanently removed block.
    pub fn efficiency(&self) -> Result<T> {
        if !(self.removed > T::zero()) {
            return Err(Error::UndefinedEfficiency);
        }
        Ok(self.critical / self.removed)
    }
}

pub fn pow_efficiency<T: Real>(chain: &MarkovChain<T>, v: &[T]) -> Result<T> {
    StationaryRates::of(chain, v).efficiency()
}

/// `1 / (1 + αΔ)`.
pub fn theoretical_efficiency<T: Real>(alpha: T, delay_steps: u64) -> T {
    T::one() / (T::one() + alpha * T::from_u64(delay_steps).expect("representable"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TransitionRecord;

    fn rec(next: usize, p: f64, critical: u8, total: u8, kind: StepKind) -> TransitionRecord<f64> {
        TransitionRecord {
            next,
            probability: p,
            reward: 0.0,
            pruned_critical: critical,
            pruned_total: total,
            kind,
        }
    }

    #[test]
    fn pure_chain_is_fully_efficient() {
        // every step finalizes exactly one block and discards nothing
        let chain = MarkovChain::from_rows(vec![Some(vec![rec(0, 1.0, 1, 1, StepKind::Prune)])], 0);
        assert_eq!(pow_efficiency(&chain, &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn reset_counts_as_waste() {
        let chain = MarkovChain::from_rows(
            vec![
                Some(vec![rec(1, 1.0, 0, 0, StepKind::Grow)]),
                Some(vec![rec(0, 0.5, 1, 2, StepKind::Prune), rec(0, 0.5, 0, 2, StepKind::Reset)]),
            ],
            0,
        );
        let rates = StationaryRates::of(&chain, &[0.5, 0.5]);
        assert_eq!(rates.efficiency().unwrap(), 0.25);
        assert_eq!(rates.reset, 0.25);
        assert_eq!(rates.prune, 0.25);
    }

    #[test]
    fn never_removing_is_undefined() {
        let chain = MarkovChain::from_rows(vec![Some(vec![rec(0, 1.0, 0, 0, StepKind::Grow)])], 0);
        assert!(matches!(pow_efficiency(&chain, &[1.0]), Err(Error::UndefinedEfficiency)));
    }

    #[test]
    fn theory_values() {
        assert_eq!(theoretical_efficiency(0.001, 0), 1.0);
        assert!((theoretical_efficiency(0.001_f64, 230) - 1.0 / 1.23).abs() < 1e-15);
    }
}
