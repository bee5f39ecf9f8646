//! Agent-based simulator used as an independent check on the mean field chain.
//!
//! N explicit agents each hold their own set of received blocks. One loop
//! iteration is one block step: every agent picks a block from its own local
//! graph, the prune/reset rules are applied to the empirical choices, a
//! uniformly chosen acting agent appends, and then the block step's length
//! `k ~ Geom(α)` is drawn and every outstanding (agent, block) pair is
//! delivered with probability `1 - (1-δ)^k`. This is the time-step model
//! observed at generation instants; nothing happens between generations that
//! could influence a decision.
//!
//! Because all agents share the clock, deliveries of one block are correlated
//! across agents. [`Delivery::Independent`] instead gives every (agent, block)
//! pair its own block-step length, which is the independence the mean field
//! kernel assumes; comparing both modes separates kernel errors from the error
//! of the mean field approximation itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Model;
use crate::error::{Error, Result};
use crate::graphs::{BlockSet, Catalogue, ClassId};
use crate::policy::LocalPolicy;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delivery {
    /// One block-step length per block step, shared by all agents.
    #[default]
    SharedClock,
    /// Each (agent, block) pair is delivered with the marginal per-block-step probability.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_agents: usize,
    pub max_blocks: usize,
    pub alpha: f64,
    /// Per-time-step delivery probability; 1 means instant delivery.
    pub delta: f64,
    pub epsilon: f64,
    pub block_steps: u64,
    pub burn_in: u64,
    pub batches: usize,
    pub seed: u64,
    pub delivery: Delivery,
}

impl SimConfig {
    pub fn from_model<T: Real>(model: &Model<T>, block_steps: u64, seed: u64) -> Self {
        SimConfig {
            n_agents: model.cfg.n_agents,
            max_blocks: model.cfg.max_blocks,
            alpha: model.cfg.timing.alpha().as_f64(),
            delta: model.cfg.timing.delta().as_f64(),
            epsilon: model.cfg.epsilon.as_f64(),
            block_steps,
            burn_in: (block_steps / 100).max(100),
            batches: 50,
            seed,
            delivery: Delivery::SharedClock,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |name, value: String, reason| Err(Error::InvalidParameter { name, value, reason });
        if !(2..=10_000).contains(&self.n_agents) {
            return bad("n_agents", self.n_agents.to_string(), "simulator supports 2..=10000 agents");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", self.alpha.to_string(), "must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta", self.delta.to_string(), "must lie in (0, 1]");
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 0.5) {
            return bad("epsilon", self.epsilon.to_string(), "must lie in [0, 0.5)");
        }
        if self.block_steps == 0 || self.block_steps > 10_000_000 {
            return bad("block_steps", self.block_steps.to_string(), "must lie in 1..=1e7");
        }
        if self.batches < 2 || self.block_steps < self.batches as u64 {
            return bad("batches", self.batches.to_string(), "need at least 2 batches of one step");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Distance to `x` in standard errors (infinite when the error is zero and
    /// `x` differs). Differences at rounding level count as agreement.
    pub fn z_score(&self, x: f64) -> f64 {
        let d = (self.estimate - x).abs();
        if d <= 1e-12 * x.abs().max(1.0) {
            0.0
        } else {
            d / self.std_error
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub graph: ClassId,
    pub candidate: usize,
    /// Block steps spent in `graph`.
    pub visits: u64,
    pub frequency: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub efficiency: Estimate,
    pub prune_rate: Estimate,
    pub reset_rate: Estimate,
    pub local_graphs: Vec<CellEstimate>,
    pub block_steps: u64,
}

/// Ratio estimator `ΣF/ΣN` with a batch-means standard error.
fn ratio(num: &[f64], den: &[f64]) -> Estimate {
    let b = num.len() as f64;
    let (sn, sd): (f64, f64) = (num.iter().sum(), den.iter().sum());
    if sd == 0.0 {
        return Estimate {
            estimate: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let r = sn / sd;
    let ss: f64 = num.iter().zip(den).map(|(f, n)| (f - r * n).powi(2)).sum();
    Estimate {
        estimate: r,
        std_error: (b / (b - 1.0) * ss).sqrt() / sd,
    }
}

struct World<'a> {
    cat: &'a Catalogue,
    policy: &'a LocalPolicy,
    graph: ClassId,
    /// Per block in canonical layout: tie-break hash.
    hash: Vec<u64>,
    /// Per agent: received blocks in canonical layout.
    held: Vec<BlockSet>,
}

impl World<'_> {
    /// Block chosen by an agent holding `held`, or `None` if its local graph is null.
    fn decide(&self, held: BlockSet) -> Option<(usize, usize)> {
        let comp = self.cat.root_component(self.graph, held);
        let (c, m) = self.cat.candidate_of(self.graph, comp)?;
        let cand = &self.cat.root_connected_subgraphs(self.graph)[c];
        let l = cand.class?;
        let to_global = &cand.members[m].to_global;
        let y = self.policy.action(l);
        // lowest hash among the topologically identical choices
        let lcls = self.cat.class(l);
        let block = lcls
            .orbit_members(y)
            .map(|z| to_global[z])
            .min_by_key(|&b| self.hash[b])
            .expect("orbit is non-empty");
        Some((c, block))
    }

    fn relabel(&mut self, map: &[Option<usize>], new_size: usize, new_class: ClassId) {
        let mut hash = vec![0; new_size];
        for (old, &new) in map.iter().enumerate() {
            if let Some(new) = new {
                hash[new] = self.hash[old];
            }
        }
        self.hash = hash;
        for h in &mut self.held {
            *h = h.mapped_partial(map);
        }
        self.graph = new_class;
    }
}

/// Runs the simulator with every agent following `policy`.
pub fn monte_carlo_oracle(cat: &Catalogue, policy: &LocalPolicy, cfg: &SimConfig) -> Result<OracleReport> {
    cfg.validate()?;
    if cat.max_blocks() != cfg.max_blocks {
        return Err(Error::InvalidParameter {
            name: "max_blocks",
            value: cfg.max_blocks.to_string(),
            reason: "catalogue was built for a different bound",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let genesis = 0;
    let mut w = World {
        cat,
        policy,
        graph: genesis,
        hash: vec![rng.gen()],
        held: vec![BlockSet::single(0); cfg.n_agents],
    };
    let n_batches = cfg.batches;
    let per_batch = cfg.block_steps / n_batches as u64;
    let total = per_batch * n_batches as u64;
    let mut critical = vec![0.0; n_batches];
    let mut removed = vec![0.0; n_batches];
    let mut prunes = vec![0.0; n_batches];
    let mut resets = vec![0.0; n_batches];
    let steps = vec![per_batch as f64; n_batches];
    // [graph][candidate][batch]: summed agent fractions; [graph][batch]: visits
    let mut cell: Vec<Vec<Vec<f64>>> = (0..cat.len())
        .map(|g| vec![vec![0.0; n_batches]; cat.root_connected_subgraphs(g).len()])
        .collect();
    let mut visits: Vec<Vec<f64>> = vec![vec![0.0; n_batches]; cat.len()];

    let stay = 1.0 - cfg.delta;
    let log_miss_alpha = (1.0 - cfg.alpha).ln();
    // marginal: 1 - E[(1-δ)^k] for k ~ Geom(α)
    let p_marginal = 1.0 - cfg.alpha * stay / (1.0 - (1.0 - cfg.alpha) * stay);
    let threshold = 1.0 - cfg.epsilon;
    let inv_n = 1.0 / cfg.n_agents as f64;
    let mut choice: Vec<Option<usize>> = vec![None; cfg.n_agents];
    let mut memo: Vec<Option<Option<(usize, usize)>>> = vec![None; 1 << cfg.max_blocks];

    for step in 0..cfg.burn_in + total {
        let batch = step.checked_sub(cfg.burn_in).map(|s| (s / per_batch) as usize);

        // decisions on the current graph
        memo.iter_mut().for_each(|m| *m = None);
        for (i, h) in w.held.iter().enumerate() {
            let d = *memo[h.bits() as usize].get_or_insert_with(|| w.decide(*h));
            choice[i] = d.map(|x| x.1);
            if let (Some(b), Some((c, _))) = (batch, d) {
                cell[w.graph][c][b] += inv_n;
            }
            if let (Some(b), None) = (batch, d) {
                cell[w.graph][0][b] += inv_n;
            }
        }
        if let Some(b) = batch {
            visits[w.graph][b] += 1.0;
        }

        // prune on the empirical appending fractions
        let cls = cat.class(w.graph);
        let n = cls.size();
        let mut counts = vec![0usize; n];
        let mut acting = 0usize;
        for c in choice.iter().flatten() {
            counts[*c] += 1;
            acting += 1;
        }
        if acting == 0 {
            return Err(Error::DegenerateState { state: w.graph });
        }
        let target = (1..n)
            .filter(|&x| {
                let inside: usize = cls.subtree(x).iter().map(|b| counts[b]).sum();
                inside as f64 / acting as f64 > threshold
            })
            .min_by_key(|&x| cls.subtree(x).len());
        match target {
            Some(x) => {
                let pr = cat.gamma_subgraph(w.graph, x);
                if let Some(b) = batch {
                    critical[b] += cls.depth(x) as f64;
                    removed[b] += (n - pr.kept.len()) as f64;
                    prunes[b] += 1.0;
                }
                let size = cat.class(pr.class).size();
                w.relabel(&pr.relabel, size, pr.class);
                memo.iter_mut().for_each(|m| *m = None);
                for (i, h) in w.held.iter().enumerate() {
                    choice[i] = memo[h.bits() as usize].get_or_insert_with(|| w.decide(*h)).map(|x| x.1);
                }
            }
            None if n == cfg.max_blocks => {
                if let Some(b) = batch {
                    removed[b] += n as f64;
                    resets[b] += 1.0;
                }
                w.graph = genesis;
                w.hash = vec![rng.gen()];
                w.held.iter_mut().for_each(|h| *h = BlockSet::single(0));
                continue;
            }
            None => {}
        }

        // generation by a uniformly chosen acting agent
        let actors: Vec<usize> = (0..cfg.n_agents).filter(|&i| choice[i].is_some()).collect();
        if actors.is_empty() {
            return Err(Error::DegenerateState { state: w.graph });
        }
        let gen = actors[rng.gen_range(0..actors.len())];
        let parent = choice[gen].expect("actor has a choice");
        let ext = cat.extend(w.graph, parent);
        let size = cat.class(ext.class).size();
        let map: Vec<Option<usize>> = ext.relabel.iter().map(|&x| Some(x)).collect();
        w.relabel(&map, size, ext.class);
        w.hash[ext.new_block] = rng.gen();
        w.held[gen].insert(ext.new_block);

        // delivery during the next block step
        let p = match cfg.delivery {
            Delivery::SharedClock => {
                let u: f64 = 1.0 - rng.gen::<f64>();
                let k = (u.ln() / log_miss_alpha).ceil().max(1.0);
                1.0 - stay.powf(k)
            }
            Delivery::Independent => p_marginal,
        };
        let all = BlockSet::full(size);
        for h in &mut w.held {
            for b in all.minus(*h).iter() {
                if rng.gen::<f64>() < p {
                    h.insert(b);
                }
            }
        }
    }

    let local_graphs = (0..cat.len())
        .flat_map(|g| {
            let v = &visits[g];
            let n_visits: f64 = v.iter().sum();
            cell[g]
                .iter()
                .enumerate()
                .map(|(c, f)| CellEstimate {
                    graph: g,
                    candidate: c,
                    visits: n_visits as u64,
                    frequency: ratio(f, v),
                })
                .collect::<Vec<_>>()
        })
        .filter(|c| c.visits > 0)
        .collect();
    Ok(OracleReport {
        efficiency: ratio(&critical, &removed),
        prune_rate: ratio(&prunes, &steps),
        reset_rate: ratio(&resets, &steps),
        local_graphs,
        block_steps: total,
    })
}
