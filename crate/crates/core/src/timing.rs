//! Block-step and block-propagation probability laws.
//!
//! A time step generates a block with probability `alpha`; an agent that has
//! not yet seen a block receives it with probability `delta` per time step.
//! Block steps are the random gaps between generations, and the
//! reception probabilities below are expressed in block steps.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tail mass below which series evaluations stop.
pub const SERIES_TAIL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingParams<T> {
    alpha: T,
    delta: T,
}

impl<T: Real> TimingParams<T> {
    pub fn new(alpha: T, delta: T) -> Result<Self> {
        check_open_unit("alpha", alpha)?;
        check_open_unit("delta", delta)?;
        Ok(Self { alpha, delta })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Probability that a single undelivered block is *not* delivered during
    /// one block step: `E[(1-delta)^k]` for geometric `k`.
    pub fn miss_per_block_step(&self) -> T {
        let one = T::one();
        let stay = one - self.delta;
        self.alpha * stay / (one - (one - self.alpha) * stay)
    }

    /// `P(k = steps)` for the number of time steps in one block step.
    pub fn block_step_pmf(&self, steps: u64) -> T {
        if steps == 0 {
            return T::zero();
        }
        let one = T::one();
        (one - self.alpha).powf(T::from_u64(steps - 1).unwrap()) * self.alpha
    }

    /// `P(k = steps)` for the number of time steps in `blocks` consecutive
    /// block steps (negative binomial).
    pub fn multi_block_step_pmf(&self, blocks: u64, steps: u64) -> T {
        assert!(blocks >= 1, "need at least one block step");
        if steps < blocks {
            return T::zero();
        }
        let one = T::one();
        // C(steps-1, blocks-1) evaluated in log space to survive large `steps`.
        let ln_binom = ln_choose(steps - 1, blocks - 1);
        let failures = T::from_u64(steps - blocks).unwrap();
        let successes = T::from_u64(blocks).unwrap();
        let ln_mass = T::lit(ln_binom)
            + failures * (one - self.alpha).ln()
            + successes * self.alpha.ln();
        ln_mass.exp()
    }

    /// `P(H <= h)`: probability an agent holds a block within `h` block steps
    /// of its generation. Closed form `1 - q^h` with `q = miss_per_block_step`.
    pub fn reception_cdf(&self, h: u32) -> T {
        if h == 0 {
            return T::zero();
        }
        T::one() - self.miss_per_block_step().powi(h as i32)
    }

    /// `P(H = h)` for `h >= 1`.
    pub fn reception_pmf(&self, h: u32) -> T {
        assert!(h >= 1, "reception is measured from the first block step");
        let q = self.miss_per_block_step();
        // cdf(h) - cdf(h-1) = q^(h-1) (1 - q)
        q.powi(h as i32 - 1) * (T::one() - q)
    }

    /// Series form of [`reception_cdf`](Self::reception_cdf): sums
    /// `(1 - (1-delta)^k) P(k_alpha^h = k)` over `k >= h` until the
    /// remaining negative-binomial tail is bounded below [`SERIES_TAIL`].
    pub fn reception_cdf_series(&self, h: u32) -> T {
        if h == 0 {
            return T::zero();
        }
        let one = T::one();
        let stay = one - self.delta;
        let fail = one - self.alpha;
        let tail_target = T::lit(SERIES_TAIL);
        let y = h as u64;
        let mut k = y;
        let mut pmf = self.multi_block_step_pmf(y, k);
        let mut acc = T::zero();
        let mut not_received = stay.powi(h as i32);
        loop {
            acc = acc + (one - not_received) * pmf;
            // pmf(k+1) = pmf(k) * ratio, ratio = (1-alpha) k / (k + 1 - y); the
            // ratios only shrink past the mode, so the tail is bounded by a
            // geometric series once ratio < 1.
            let kf = T::from_u64(k).unwrap();
            let ratio = fail * kf / T::from_u64(k + 1 - y).unwrap();
            pmf = pmf * ratio;
            not_received = not_received * stay;
            k += 1;
            if ratio < one && pmf / (one - ratio) < tail_target {
                break;
            }
        }
        acc
    }
}

/// Number of time steps Δ for a `rho` fraction of agents to hold a block:
/// the smallest `k` with `1 - (1-delta)^k >= rho`.
pub fn delay_steps<T: Real>(delta: T, rho: T) -> Result<u64> {
    if !(delta > T::zero() && delta <= T::one()) {
        return Err(invalid("delta", delta, "must lie in (0, 1]"));
    }
    if !(rho > T::zero() && rho < T::one()) {
        return Err(invalid(
            "rho",
            rho,
            "must lie in (0, 1); full coverage needs infinitely many steps",
        ));
    }
    let one = T::one();
    if delta == one {
        return Ok(1);
    }
    let guess = ((one - rho).ln() / (one - delta).ln()).ceil();
    let mut k = guess.to_u64().unwrap_or(1).max(1);
    // Guard the ceil against rounding in either direction.
    while k > 1 && one - (one - delta).powf(T::from_u64(k - 1).unwrap()) >= rho {
        k -= 1;
    }
    while one - (one - delta).powf(T::from_u64(k).unwrap()) < rho {
        k += 1;
    }
    Ok(k)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

fn check_open_unit<T: Real>(name: &'static str, x: T) -> Result<()> {
    if x > T::zero() && x < T::one() {
        Ok(())
    } else {
        Err(invalid(name, x, "must lie strictly between 0 and 1"))
    }
}

fn invalid<T: Real>(name: &'static str, x: T, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value: format!("{x}"),
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(a: f64, d: f64) -> TimingParams<f64> {
        TimingParams::new(a, d).unwrap()
    }

    /// Independent reference: naive truncated series using the binomial
    /// coefficient via repeated multiplication.
    fn naive_cdf(a: f64, d: f64, h: u32) -> f64 {
        let mut total = 0.0;
        let mut mass = 0.0;
        let y = h as u64;
        let mut k = y;
        let mean = y as f64 / a;
        loop {
            let mut ln_c = 0.0;
            for i in 1..y {
                ln_c += ((k - y + i) as f64).ln() - (i as f64).ln();
            }
            let m = (ln_c + (k - y) as f64 * (1.0 - a).ln() + y as f64 * a.ln()).exp();
            total += (1.0 - (1.0 - d).powi(k as i32)) * m;
            mass += m;
            k += 1;
            if (k as f64 > mean && m < 1e-19) || 1.0 - mass < 1e-15 {
                break;
            }
        }
        total
    }

    #[test]
    fn block_step_examples() {
        assert_relative_eq!(p(0.001, 0.01).block_step_pmf(1), 0.001);
        assert_eq!(p(0.5, 0.5).block_step_pmf(0), 0.0);
        assert_relative_eq!(p(0.5, 0.5).block_step_pmf(3), 0.125);
    }

    #[test]
    fn multi_block_examples() {
        let t = p(0.5, 0.5);
        assert_relative_eq!(t.multi_block_step_pmf(1, 3), t.block_step_pmf(3), epsilon = 1e-15);
        assert_eq!(t.multi_block_step_pmf(2, 1), 0.0);
        // convolution of two geometrics
        let conv: f64 = (1..3).map(|j| t.block_step_pmf(j) * t.block_step_pmf(3 - j)).sum();
        assert_relative_eq!(conv, 0.25, epsilon = 1e-15);
        assert_relative_eq!(t.multi_block_step_pmf(2, 3), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn reception_examples() {
        let t = p(0.5, 0.5);
        assert_eq!(t.reception_cdf(0), 0.0);
        assert_relative_eq!(naive_cdf(0.5, 0.5, 1), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.reception_cdf(1), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(t.reception_pmf(1), 2.0 / 3.0, epsilon = 1e-15);
        let cdf2 = naive_cdf(0.5, 0.5, 2);
        assert_relative_eq!(t.reception_pmf(2), cdf2 - 2.0 / 3.0, epsilon = 1e-12);
        let slow = p(0.001, 0.01);
        assert!(slow.reception_cdf(2000) > 1.0 - 1e-12);
    }

    #[test]
    fn closed_form_matches_series() {
        for &a in &[0.001, 0.01, 0.1, 0.3, 0.7] {
            for &d in &[0.005, 0.01, 0.2, 0.5, 0.9] {
                let t = p(a, d);
                for h in [1u32, 2, 3, 5, 8, 16] {
                    let oracle = naive_cdf(a, d, h);
                    assert!((t.reception_cdf(h) - oracle).abs() < 1e-10, "a={a} d={d} h={h}");
                    assert!((t.reception_cdf_series(h) - oracle).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pmfs_normalize() {
        let t = p(0.3, 0.2);
        let total: f64 = (1..200).map(|k| t.block_step_pmf(k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let total: f64 = (3..400).map(|k| t.multi_block_step_pmf(3, k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let total: f64 = (1..400).map(|h| t.reception_pmf(h)).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_precision_agrees() {
        let t32 = TimingParams::<f32>::new(0.5, 0.5).unwrap();
        assert!((t32.reception_cdf(1) - 2.0 / 3.0).abs() < 1e-6);
        assert!((t32.block_step_pmf(3) - 0.125).abs() < 1e-7);
    }

    #[test]
    fn delay_examples() {
        assert_eq!(delay_steps(0.5, 0.5).unwrap(), 1);
        // oracle: linear scan of the per-step delivery cdf
        let scan = |d: f64, rho: f64| (1u64..).find(|&k| 1.0 - (1.0 - d).powi(k as i32) >= rho).unwrap();
        assert_eq!(scan(0.01, 0.9), 230);
        assert_eq!(delay_steps(0.01, 0.9).unwrap(), 230);
        assert_eq!(delay_steps(0.01, 0.99).unwrap(), 459);
        assert!(delay_steps(0.01, 1.0).is_err());
        for &d in &[0.003, 0.02, 0.3] {
            for &r in &[0.1, 0.5, 0.9, 0.999] {
                assert_eq!(delay_steps(d, r).unwrap(), scan(d, r));
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(TimingParams::new(0.0, 0.5).is_err());
        assert!(TimingParams::new(0.5, 1.0).is_err());
    }

    #[test]
    fn monte_carlo_agreement() {
        let (a, d) = (0.2, 0.3);
        let t = p(a, d);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 1_000_000u32;
        let mut k3 = 0u32;
        let mut within2 = 0u32;
        for _ in 0..trials {
            // first block step length
            let mut k = 1;
            while !rng.gen_bool(a) {
                k += 1;
            }
            if k == 3 {
                k3 += 1;
            }
            // reception within two block steps: simulate the delivery process
            // alongside two generations
            let mut gens = 0;
            let mut got = false;
            while gens < 2 {
                if !got && rng.gen_bool(d) {
                    got = true;
                }
                if rng.gen_bool(a) {
                    gens += 1;
                }
            }
            if got {
                within2 += 1;
            }
        }
        let n = trials as f64;
        for (hits, expect) in [(k3, t.block_step_pmf(3)), (within2, t.reception_cdf(2))] {
            let est = hits as f64 / n;
            let se = (expect * (1.0 - expect) / n).sqrt();
            assert!((est - expect).abs() < 4.0 * se, "est {est} expect {expect}");
        }
    }
}
