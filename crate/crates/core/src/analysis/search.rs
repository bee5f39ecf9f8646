//! Experiment drivers: the delay sweep, the exhaustive policy search and the
//! best-response basins.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::analysis::efficiency::{pow_efficiency, theoretical_efficiency};
use crate::dynamics::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::mean_field::{fixed_point, MuMode};
use crate::policy::LocalPolicy;
use crate::scalar::Real;
use crate::solver::{best_response, best_response_iteration_with, is_equilibrium, EquilibriumOptions};
use crate::timing::{delay_steps, TimingParams};

/// Largest bound the exhaustive search accepts without `force`.
pub const EXHAUSTIVE_MAX_BLOCKS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport<T> {
    pub delta: T,
    pub rho: T,
    pub delay_steps: u64,
    pub theoretical: T,
    pub measured: T,
    pub abs_error: T,
    pub rel_error: T,
}

/// LCR efficiency for every δ, against `1/(1+αΔ(ρ))` for every ρ. A failed
/// δ is logged and yields one `Err` entry; the sweep continues.
pub fn delay_sweep<T: Real>(
    model: &Model<T>,
    deltas: &[T],
    rhos: &[T],
    mode: MuMode,
) -> Vec<Result<Vec<EfficiencyReport<T>>>> {
    let lcr = LocalPolicy::lcr(&model.cat);
    deltas
        .iter()
        .map(|&delta| {
            let run = || -> Result<Vec<EfficiencyReport<T>>> {
                let alpha = model.cfg.timing.alpha();
                let cfg = ModelConfig {
                    timing: TimingParams::new(alpha, delta)?,
                    ..model.cfg
                };
                let m = model.with_config(cfg)?;
                let fp = fixed_point(&m, &lcr, mode)?;
                let measured = pow_efficiency(&fp.chain, &fp.stationary)?;
                rhos.iter()
                    .map(|&rho| {
                        let d = delay_steps(delta, rho)?;
                        let theoretical = theoretical_efficiency(alpha, d);
                        let abs_error = (measured - theoretical).abs();
                        Ok(EfficiencyReport {
                            delta,
                            rho,
                            delay_steps: d,
                            theoretical,
                            measured,
                            abs_error,
                            rel_error: abs_error / theoretical,
                        })
                    })
                    .collect()
            };
            let out = run();
            match &out {
                Ok(rows) => log::info!("sweep delta={} efficiency={}", delta, rows.first().map_or(T::nan(), |r| r.measured)),
                Err(e) => log::warn!("sweep delta={} failed: {e}", delta),
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport<T> {
    pub policy: LocalPolicy,
    pub is_equilibrium: bool,
    pub gap: T,
    /// `None` when undefined (nothing is ever removed) or the solve failed.
    pub efficiency: Option<T>,
    pub basin_count: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExhaustiveReport<T> {
    pub policies: Vec<PolicyReport<T>>,
    pub equilibria: usize,
    /// Index of the most efficient equilibrium (lowest index among exact ties).
    pub best: Option<usize>,
    /// Equilibria whose efficiency equals the best within 1e-12.
    pub tied_with_best: Vec<usize>,
    /// Best equilibrium efficiency minus the best efficiency strictly below it.
    pub uniqueness_gap: Option<T>,
    pub lcr: usize,
}

impl<T: Real> ExhaustiveReport<T> {
    pub fn lcr_is_best(&self) -> bool {
        self.tied_with_best.contains(&self.lcr)
    }

    /// The LCR is best and no other equilibrium matches its efficiency.
    pub fn lcr_is_uniquely_best(&self) -> bool {
        self.lcr_is_best() && self.tied_with_best.len() == 1
    }
}

/// Equilibrium test and stationary efficiency for every deterministic policy.
pub fn exhaustive_search<T: Real>(model: &Model<T>, opts: EquilibriumOptions, force: bool) -> Result<ExhaustiveReport<T>> {
    if model.cfg.max_blocks > EXHAUSTIVE_MAX_BLOCKS && !force {
        return Err(Error::InvalidParameter {
            name: "max_blocks",
            value: model.cfg.max_blocks.to_string(),
            reason: "exhaustive search beyond 4 blocks enumerates over 1.6e8 policies",
        });
    }
    let all = LocalPolicy::enumerate(&model.cat);
    log::info!("exhaustive search over {} policies", all.len());
    let policies: Vec<PolicyReport<T>> = all
        .par_iter()
        .map(|p| match is_equilibrium(model, p, opts) {
            Ok(check) => PolicyReport {
                policy: p.clone(),
                is_equilibrium: check.is_equilibrium,
                gap: check.gap,
                efficiency: pow_efficiency(&check.fixed_point.chain, &check.fixed_point.stationary).ok(),
                basin_count: 0,
                error: None,
            },
            Err(e) => PolicyReport {
                policy: p.clone(),
                is_equilibrium: false,
                gap: T::nan(),
                efficiency: None,
                basin_count: 0,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let lcr_policy = LocalPolicy::lcr(&model.cat);
    let lcr = all.iter().position(|p| p == &lcr_policy).expect("LCR is enumerated");
    Ok(summarize(policies, lcr))
}

fn summarize<T: Real>(policies: Vec<PolicyReport<T>>, lcr: usize) -> ExhaustiveReport<T> {
    let eq: Vec<(usize, T)> = policies
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_equilibrium)
        .filter_map(|(i, r)| r.efficiency.map(|e| (i, e)))
        .collect();
    let top = eq.iter().map(|e| e.1).fold(T::neg_infinity(), T::max);
    let tie = T::lit(1e-12);
    let tied_with_best: Vec<usize> = eq.iter().filter(|e| e.1 >= top - tie).map(|e| e.0).collect();
    let below = eq
        .iter()
        .filter(|e| e.1 < top - tie)
        .map(|e| e.1)
        .fold(T::neg_infinity(), T::max);
    ExhaustiveReport {
        equilibria: policies.iter().filter(|r| r.is_equilibrium).count(),
        best: tied_with_best.first().copied(),
        uniqueness_gap: (!tied_with_best.is_empty() && below.is_finite()).then(|| top - below),
        tied_with_best,
        policies,
        lcr,
    }
}

#[derive(Debug, Clone)]
pub struct BasinReport {
    /// Start count per limit policy.
    pub counts: HashMap<LocalPolicy, usize>,
    /// Starts that cycled, hit the iteration cap or failed.
    pub non_convergent: usize,
    pub starts: usize,
}

/// Best-response iteration from every policy. The one-step map is computed
/// once per policy (in parallel) and shared by all starting points.
pub fn basin_frequencies<T: Real>(model: &Model<T>, mode: MuMode) -> BasinReport {
    let all = LocalPolicy::enumerate(&model.cat);
    let step: HashMap<LocalPolicy, std::result::Result<LocalPolicy, String>> = all
        .par_iter()
        .map(|p| (p.clone(), best_response(model, p, mode).map_err(|e| e.to_string())))
        .collect();
    let mut counts = HashMap::new();
    let mut non_convergent = 0;
    for p in &all {
        let run = best_response_iteration_with(p, |q| match &step[q] {
            Ok(next) => Ok(next.clone()),
            Err(msg) => Err(Error::Config(msg.clone())),
        });
        match run {
            Ok(r) => *counts.entry(r.policy).or_insert(0) += 1,
            Err(_) => non_convergent += 1,
        }
    }
    BasinReport {
        counts,
        non_convergent,
        starts: all.len(),
    }
}

/// Attaches basin counts to an exhaustive report.
pub fn attach_basins<T: Real>(report: &mut ExhaustiveReport<T>, basins: &BasinReport) {
    for r in &mut report.policies {
        r.basin_count = basins.counts.get(&r.policy).copied().unwrap_or(0);
    }
}
