//! Value iteration for the representative agent, local-policy extraction,
//! best-response iteration and the equilibrium test.

use rayon::prelude::*;

use crate::dynamics::{ActionRow, Mdp, Model};
use crate::error::{Error, Result};
use crate::mean_field::{fixed_point, FixedPoint, MuMode};
use crate::policy::{FullPolicy, LocalPolicy};
use crate::scalar::Real;
use crate::states::StateId;

/// Sup-norm Bellman residual at which value iteration stops.
pub const BELLMAN_TOLERANCE: f64 = 1e-12;
/// Action values closer than this to the maximum count as optimal.
pub const TIE_TOLERANCE: f64 = 1e-9;
pub const MAX_BEST_RESPONSE_ITERATIONS: usize = 50;

#[derive(Debug, Clone)]
pub struct ValueSolution<T> {
    pub values: Vec<T>,
    pub policy: FullPolicy,
    pub sweeps: usize,
    pub residual: T,
}

fn action_value<T: Real>(mdp: &Mdp<T>, row: &ActionRow, values: &[T], gamma: T) -> T {
    mdp.transitions(row)
        .iter()
        .map(|t| t.probability * (t.reward + gamma * values[t.next]))
        .sum()
}

/// `(action, Q(s, action))` for every non-degenerate action of `s`.
pub fn action_values<T: Real>(mdp: &Mdp<T>, s: StateId, values: &[T], gamma: T) -> Vec<(Option<usize>, T)> {
    mdp.actions(s)
        .iter()
        .filter(|r| !r.degenerate)
        .map(|r| (r.action, action_value(mdp, r, values, gamma)))
        .collect()
}

/// First action (lowest orbit representative) within `tie` of the best value.
fn greedy<T: Real>(qs: &[(Option<usize>, T)], tie: T) -> (Option<usize>, T) {
    let best = qs.iter().map(|q| q.1).fold(T::neg_infinity(), T::max);
    let pick = qs.iter().find(|q| q.1 >= best - tie).map(|q| q.0).unwrap_or(None);
    (pick, best)
}

/// Jacobi value iteration from `warm` (or zero) until the Bellman residual
/// drops below [`BELLMAN_TOLERANCE`], then the greedy policy. States whose
/// every action is degenerate keep value zero.
pub fn value_iteration<T: Real>(model: &Model<T>, mdp: &Mdp<T>, warm: Option<&[T]>) -> ValueSolution<T> {
    let gamma = model.cfg.gamma;
    let tol = T::lit(BELLMAN_TOLERANCE);
    let n = mdp.n_states();
    let mut values = warm.map_or_else(|| vec![T::zero(); n], |w| w.to_vec());
    let mut sweeps = 0;
    let mut residual;
    loop {
        let next: Vec<T> = (0..n)
            .into_par_iter()
            .map(|s| {
                mdp.actions(s)
                    .iter()
                    .filter(|r| !r.degenerate)
                    .map(|r| action_value(mdp, r, &values, gamma))
                    .fold(None, |acc: Option<T>, q| Some(acc.map_or(q, |a| a.max(q))))
                    .unwrap_or(T::zero())
            })
            .collect();
        residual = next.iter().zip(&values).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);
        values = next;
        sweeps += 1;
        if residual < tol || (gamma == T::zero() && sweeps >= 1) {
            break;
        }
    }
    let tie = T::lit(TIE_TOLERANCE);
    let choice = (0..n)
        .map(|s| {
            let qs = action_values(mdp, s, &values, gamma);
            if qs.is_empty() {
                mdp.actions(s)[0].action
            } else {
                greedy(&qs, tie).0
            }
        })
        .collect();
    ValueSolution {
        values,
        policy: FullPolicy::new(choice),
        sweeps,
        residual,
    }
}

/// Approach 2: π̄(l) = π(l fully received, nothing owned).
pub fn extract_local_policy<T: Real>(model: &Model<T>, full: &FullPolicy) -> LocalPolicy {
    full.extract_local(&model.cat, &model.space)
}

/// Local policy read off the values at the fully received, unowned states.
/// The incumbent's action is kept when it ties with the best one, so a
/// policy that is already a best response maps to itself.
pub fn extract_best_response<T: Real>(
    model: &Model<T>,
    mdp: &Mdp<T>,
    values: &[T],
    incumbent: &LocalPolicy,
) -> LocalPolicy {
    let tie = T::lit(TIE_TOLERANCE);
    let choice = model
        .cat
        .classes()
        .iter()
        .map(|g| {
            let s = model.space.full_information_state(g.id, g.size());
            let qs = action_values(mdp, s, values, model.cfg.gamma);
            let (first, best) = greedy(&qs, tie);
            let keep = qs
                .iter()
                .any(|q| q.0 == Some(incumbent.action(g.id)) && q.1 >= best - tie);
            if keep {
                incumbent.action(g.id)
            } else {
                first.expect("fully received state has a local graph")
            }
        })
        .collect();
    LocalPolicy::from_choices(&model.cat, choice).expect("greedy actions are orbit representatives")
}

/// One outer step: μ for `policy`, then the best response to it.
pub fn best_response<T: Real>(model: &Model<T>, policy: &LocalPolicy, mode: MuMode) -> Result<LocalPolicy> {
    let fp = fixed_point(model, policy, mode)?;
    let mdp = Mdp::build(model, policy, &fp.mu);
    let sol = value_iteration(model, &mdp, None);
    Ok(extract_best_response(model, &mdp, &sol.values, policy))
}

#[derive(Debug, Clone)]
pub struct BestResponseRun {
    pub policy: LocalPolicy,
    /// Policies visited, starting with the initial one.
    pub trace: Vec<LocalPolicy>,
}

impl BestResponseRun {
    pub fn outer_iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Iterates best responses from `initial` until the policy repeats itself.
pub fn best_response_iteration<T: Real>(model: &Model<T>, initial: &LocalPolicy, mode: MuMode) -> Result<BestResponseRun> {
    best_response_iteration_with(initial, |p| best_response(model, p, mode))
}

/// Same loop over an arbitrary best-response map (lets callers memoize it).
pub fn best_response_iteration_with(
    initial: &LocalPolicy,
    mut step: impl FnMut(&LocalPolicy) -> Result<LocalPolicy>,
) -> Result<BestResponseRun> {
    let mut trace = vec![initial.clone()];
    for it in 1..=MAX_BEST_RESPONSE_ITERATIONS {
        let current = trace.last().unwrap();
        let next = step(current)?;
        log::debug!("best response {it}: {} -> {}", current.label(), next.label());
        if &next == current {
            return Ok(BestResponseRun { policy: next, trace });
        }
        if let Some(pos) = trace.iter().position(|p| p == &next) {
            return Err(Error::PolicyCycle {
                iterations: it,
                cycle_len: trace.len() - pos,
                trace: trace.iter().map(|p| p.label()).collect(),
            });
        }
        trace.push(next);
    }
    Err(Error::BestResponseLimit(MAX_BEST_RESPONSE_ITERATIONS))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    pub tie_tolerance: f64,
    pub mode: MuMode,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            tie_tolerance: TIE_TOLERANCE,
            mode: MuMode::Symmetric,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumCheck<T> {
    pub is_equilibrium: bool,
    /// Largest shortfall of the candidate's action below the best action.
    pub gap: T,
    pub fixed_point: FixedPoint<T>,
    pub values: Vec<T>,
}

/// Whether `candidate` is a best response to the mean field it induces:
/// at every fully received, unowned state its action must attain the best
/// action value within the tie tolerance.
pub fn is_equilibrium<T: Real>(
    model: &Model<T>,
    candidate: &LocalPolicy,
    opts: EquilibriumOptions,
) -> Result<EquilibriumCheck<T>> {
    let fp = fixed_point(model, candidate, opts.mode)?;
    let mdp = Mdp::build(model, candidate, &fp.mu);
    let sol = value_iteration(model, &mdp, None);
    let gap = equilibrium_gap(model, &mdp, &sol.values, candidate);
    Ok(EquilibriumCheck {
        is_equilibrium: gap <= T::lit(opts.tie_tolerance),
        gap,
        fixed_point: fp,
        values: sol.values,
    })
}

/// Max over local graph classes of `max_a Q(S'_l, a) - Q(S'_l, candidate(l))`.
pub fn equilibrium_gap<T: Real>(model: &Model<T>, mdp: &Mdp<T>, values: &[T], candidate: &LocalPolicy) -> T {
    model
        .cat
        .classes()
        .iter()
        .map(|g| {
            let s = model.space.full_information_state(g.id, g.size());
            let qs = action_values(mdp, s, values, model.cfg.gamma);
            let best = qs.iter().map(|q| q.1).fold(T::neg_infinity(), T::max);
            let mine = qs
                .iter()
                .find(|q| q.0 == Some(candidate.action(g.id)))
                .map_or(T::neg_infinity(), |q| q.1);
            best - mine
        })
        .fold(T::zero(), T::max)
}
