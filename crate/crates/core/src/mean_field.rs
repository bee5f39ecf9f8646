//! Mean field μ: per global graph class, the distribution of NRA local graphs.

use crate::analysis::stationary::stationary_distribution;
use crate::dynamics::{MarkovChain, Mdp, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::graphs::{Catalogue, ClassId};
use crate::policy::{FullPolicy, LocalPolicy};
use crate::scalar::Real;
use crate::solver::value_iteration;

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 200;

/// Rows follow `Catalogue::root_connected_subgraphs` (null graph first).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> MeanField<T> {
    pub fn from_rows(cat: &Catalogue, rows: Vec<Vec<T>>) -> Result<Self> {
        let tol = T::lit(1e-10);
        if rows.len() != cat.len() {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: format!("{} rows", rows.len()),
                reason: "need one row per graph class",
            });
        }
        for (g, row) in rows.iter().enumerate() {
            let sum: T = row.iter().copied().sum();
            if row.len() != cat.root_connected_subgraphs(g).len()
                || row.iter().any(|&x| !(x >= T::zero()))
                || (sum - T::one()).abs() > tol
            {
                return Err(Error::InvalidParameter {
                    name: "mu",
                    value: format!("row {g}"),
                    reason: "rows must be distributions over the candidate local graphs",
                });
            }
        }
        Ok(MeanField { rows })
    }

    /// Start of the fixed-point iteration. Each block `x` is held with
    /// probability midway between `P(H ≤ D+1)` and `P(H ≤ C+D+1)`,
    /// independently; a candidate local graph collects the mass of the
    /// receipt patterns whose root component it is.
    pub fn initial_estimate(cat: &Catalogue, cfg: &ModelConfig<T>) -> Self {
        let half = T::lit(0.5);
        let rows = cat
            .classes()
            .iter()
            .map(|g| {
                let w: Vec<T> = (0..g.size())
                    .map(|x| {
                        let (d, c) = g.degree_counts(x);
                        let lo = cfg.timing.reception_cdf(d as u32 + 1);
                        let hi = cfg.timing.reception_cdf((c + d) as u32 + 1);
                        half * (lo + hi)
                    })
                    .collect();
                let cands = cat.root_connected_subgraphs(g.id);
                let mut row: Vec<T> = cands
                    .iter()
                    .map(|cand| {
                        cand.members
                            .iter()
                            .map(|m| {
                                (0..g.size())
                                    .map(|x| if m.blocks.contains(x) { w[x] } else { T::one() - w[x] })
                                    .fold(T::one(), |a, b| a * b)
                            })
                            .sum::<T>()
                    })
                    .collect();
                let total: T = row.iter().copied().sum();
                row.iter_mut().for_each(|x| *x = *x / total);
                row
            })
            .collect();
        MeanField { rows }
    }

    pub fn row(&self, g: ClassId) -> &[T] {
        &self.rows[g]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &MeanField<T>) -> T {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| (x - y).abs()))
            .fold(T::zero(), T::max)
    }

    /// Convex combination `(1-w)·self + w·other`.
    pub fn blend(&self, other: &MeanField<T>, w: T) -> Self {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| (T::one() - w) * x + w * y).collect())
            .collect();
        MeanField { rows }
    }

    /// Marginal probability that block `x` of graph `g` is in the local graph.
    pub fn membership(&self, cat: &Catalogue, g: ClassId, x: usize) -> T {
        cat.root_connected_subgraphs(g)
            .iter()
            .zip(&self.rows[g])
            .map(|(cand, &p)| {
                let hits = cand.members.iter().filter(|m| m.blocks.contains(x)).count();
                p * T::from_count(hits) / T::from_count(cand.members.len())
            })
            .sum()
    }

    /// Shannon entropy (nats) of each row.
    pub fn entropies(&self) -> Vec<T> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .filter(|&&p| p > T::zero())
                    .map(|&p| -p * p.ln())
                    .sum()
            })
            .collect()
    }
}

/// f(μ): the stationary conditional law of the representative agent's local
/// graph given the global graph. Graphs the chain never visits keep the row
/// of `fallback`.
pub fn local_graph_distribution<T: Real>(model: &Model<T>, v: &[T], fallback: &MeanField<T>) -> MeanField<T> {
    let cat = &model.cat;
    let rows = (0..cat.len())
        .map(|g| {
            let mut row = vec![T::zero(); cat.root_connected_subgraphs(g).len()];
            let mut total = T::zero();
            for s in model.space.of_class(g) {
                if v[s] > T::zero() {
                    let c = model.space.local_graph(cat, s).candidate;
                    row[c] = row[c] + v[s];
                    total = total + v[s];
                }
            }
            if total > T::zero() {
                row.iter_mut().for_each(|x| *x = *x / total);
                row
            } else {
                fallback.row(g).to_vec()
            }
        })
        .collect();
    MeanField { rows }
}

/// Which policy the representative agent follows while μ is iterated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuMode {
    /// Best response to the current μ (value iteration inside the loop).
    #[default]
    BestResponse,
    /// The NRA policy itself.
    Symmetric,
}

#[derive(Debug, Clone)]
pub struct FixedPoint<T> {
    pub mu: MeanField<T>,
    pub chain: MarkovChain<T>,
    pub stationary: Vec<T>,
    /// RA policy that drove the final chain.
    pub ra_policy: FullPolicy,
    pub residuals: Vec<T>,
    pub entropies: Vec<Vec<T>>,
}

/// Iterates μ ← f(μ) from the initial estimate until the sup-norm change
/// drops below [`TOLERANCE`]. Switches to half-step averaging once the
/// residual stops decreasing.
pub fn fixed_point<T: Real>(model: &Model<T>, policy: &LocalPolicy, mode: MuMode) -> Result<FixedPoint<T>> {
    let mu0 = MeanField::initial_estimate(&model.cat, &model.cfg);
    let symmetric = FullPolicy::from_local(&model.cat, &model.space, policy);
    let tol = T::lit(TOLERANCE);
    let mut mu = mu0.clone();
    let mut values: Option<Vec<T>> = None;
    let mut residuals: Vec<T> = Vec::new();
    let mut entropies = Vec::new();
    let mut damped = false;
    for _ in 0..MAX_ITERATIONS {
        let (chain, ra_policy) = match mode {
            MuMode::Symmetric => (
                MarkovChain::build(model, &symmetric, policy, &mu),
                symmetric.clone(),
            ),
            MuMode::BestResponse => {
                let mdp = Mdp::build(model, policy, &mu);
                let sol = value_iteration(model, &mdp, values.as_deref());
                let chain = mdp.chain(&model.space, &sol.policy);
                values = Some(sol.values);
                (chain, sol.policy)
            }
        };
        let v = stationary_distribution(&chain)?;
        let next = local_graph_distribution(model, &v, &mu0);
        let r = next.distance(&mu);
        log::debug!("mean field iteration {}: residual {:.3e}", residuals.len() + 1, r.as_f64());
        if let Some(&prev) = residuals.last() {
            if r >= prev {
                damped = true;
            }
        }
        residuals.push(r);
        entropies.push(next.entropies());
        if r < tol {
            return Ok(FixedPoint {
                mu: next,
                chain,
                stationary: v,
                ra_policy,
                residuals,
                entropies,
            });
        }
        mu = if damped { mu.blend(&next, T::lit(0.5)) } else { next };
    }
    Err(Error::IterationLimit {
        iterations: MAX_ITERATIONS,
        last: residuals.last().map_or(f64::NAN, |r| r.as_f64()),
        residuals: residuals.iter().map(|r| r.as_f64()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StepKind;
    use crate::graphs::BlockSet;
    use crate::timing::TimingParams;

    fn model(m: usize) -> Model<f64> {
        Model::new(ModelConfig {
            max_blocks: m,
            ..ModelConfig::table1()
        })
        .unwrap()
    }

    #[test]
    fn initial_estimate_examples() {
        let m = model(4);
        let cat = &m.cat;
        let mu = MeanField::initial_estimate(cat, &m.cfg);
        let g1 = cat.by_name("g_1").unwrap().id;
        let w = m.cfg.timing.reception_cdf(1);
        assert!((mu.row(g1)[1] - w).abs() < 1e-15);
        assert!((mu.row(g1)[0] - (1.0 - w)).abs() < 1e-15);
        let g2 = cat.by_name("g_2.1").unwrap().id;
        let full = cat.candidate_of(g2, BlockSet::full(2)).unwrap().0;
        assert!((mu.membership(cat, g2, 1) - mu.row(g2)[full]).abs() < 1e-15);
        for row in mu.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(MeanField::from_rows(cat, mu.rows().to_vec()).is_ok());
    }

    #[test]
    fn initial_estimate_g21_bounds_meet() {
        // block x1 of g_2.1 has no descendants and no cousins: both bounds are P(H ≤ 1)
        let m = model(2);
        let cat = &m.cat;
        let g2 = cat.by_name("g_2.1").unwrap().id;
        assert_eq!(cat.class(g2).degree_counts(1), (0, 0));
        let mu = MeanField::initial_estimate(cat, &m.cfg);
        let w0 = {
            let (d, c) = cat.class(g2).degree_counts(0);
            0.5 * (m.cfg.timing.reception_cdf(d as u32 + 1) + m.cfg.timing.reception_cdf((c + d) as u32 + 1))
        };
        let w1 = m.cfg.timing.reception_cdf(1);
        let full = cat.candidate_of(g2, BlockSet::full(2)).unwrap().0;
        let root = cat.candidate_of(g2, BlockSet::single(0)).unwrap().0;
        // only the receipt patterns that equal a root-connected set count
        let z = w0 * w1 + w0 * (1.0 - w1) + (1.0 - w0) * (1.0 - w1);
        assert!((mu.row(g2)[full] - w0 * w1 / z).abs() < 1e-15);
        assert!((mu.row(g2)[root] - w0 * (1.0 - w1) / z).abs() < 1e-15);
    }

    #[test]
    fn full_information_limit() {
        let m = model(3);
        let v: Vec<f64> = {
            let mut v = vec![0.0; m.space.len()];
            for g in m.cat.classes() {
                v[m.space.full_information_state(g.id, g.size())] = 1.0 / m.cat.len() as f64;
            }
            v
        };
        let mu0 = MeanField::initial_estimate(&m.cat, &m.cfg);
        let mu = local_graph_distribution(&m, &v, &mu0);
        for g in m.cat.classes() {
            let full = m.cat.candidate_of(g.id, BlockSet::full(g.size())).unwrap().0;
            assert_eq!(mu.row(g.id)[full], 1.0);
        }
    }

    #[test]
    fn unvisited_graphs_fall_back() {
        let m = model(3);
        let mut v = vec![0.0; m.space.len()];
        v[m.space.initial_state()] = 1.0;
        let mu0 = MeanField::initial_estimate(&m.cat, &m.cfg);
        let mu = local_graph_distribution(&m, &v, &mu0);
        let star = m.cat.by_name("g_3.(1,1)").unwrap().id;
        assert_eq!(mu.row(star), mu0.row(star));
    }

    #[test]
    fn lcr_fixed_point_converges_and_is_idempotent() {
        let m = model(4);
        let lcr = LocalPolicy::lcr(&m.cat);
        let fp = fixed_point(&m, &lcr, MuMode::Symmetric).unwrap();
        assert!(*fp.residuals.last().unwrap() < TOLERANCE);
        let chain = MarkovChain::build(&m, &fp.ra_policy, &lcr, &fp.mu);
        let v = stationary_distribution(&chain).unwrap();
        let again = local_graph_distribution(&m, &v, &MeanField::initial_estimate(&m.cat, &m.cfg));
        assert!(again.distance(&fp.mu) < 1e-7);
        assert!(fp.chain.row(m.space.initial_state()).iter().all(|t| t.kind == StepKind::Grow));
    }

    #[test]
    fn fast_propagation_concentrates_on_full_graphs() {
        let base = ModelConfig::<f64> {
            max_blocks: 3,
            timing: TimingParams::new(0.001, 0.5).unwrap(),
            ..ModelConfig::table1()
        };
        let m = Model::new(base).unwrap();
        let lcr = LocalPolicy::lcr(&m.cat);
        let fp = fixed_point(&m, &lcr, MuMode::Symmetric).unwrap();
        for g in m.cat.classes() {
            let mass: f64 = m.space.of_class(g.id).map(|s| fp.stationary[s]).sum();
            if mass > 1e-6 {
                let full = m.cat.candidate_of(g.id, BlockSet::full(g.size())).unwrap().0;
                assert!(fp.mu.row(g.id)[full] > 0.99, "{}: {:?}", g.name(), fp.mu.row(g.id));
            }
        }
    }
}
