//! Transition kernel of the representative agent: prune/reset, graph growth,
//! block ownership and block reception, assembled into an MDP or a Markov chain.
//!
//! Within one block step the order is: resolve actions, check the prune
//! condition (paying rewards on a prune), reset if the graph is full and
//! nothing was pruned, otherwise append one block and let every outstanding
//! block be received independently.
//!
//! Agents that face topologically identical blocks pick the one with the
//! lowest hash. We model the hash order by block labels and average every
//! transition over the automorphic relabellings of the state, so the order
//! is uniformly random with respect to what the representative agent holds.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphs::{BlockSet, Catalogue, ClassId};
use crate::mean_field::MeanField;
use crate::policy::{FullPolicy, LocalPolicy};
use crate::scalar::Real;
use crate::states::{StateId, StateSpace};
use crate::timing::TimingParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig<T> {
    pub n_agents: usize,
    pub max_blocks: usize,
    pub timing: TimingParams<T>,
    pub gamma: T,
    pub epsilon: T,
    pub reward: T,
}

impl<T: Real> ModelConfig<T> {
    /// N=1000, M=5, α=0.001, δ=0.01, γ=0.99, ε=0.01, r=1.
    pub fn table1() -> Self {
        ModelConfig {
            n_agents: 1000,
            max_blocks: 5,
            timing: TimingParams::new(T::lit(0.001), T::lit(0.01)).expect("valid defaults"),
            gamma: T::lit(0.99),
            epsilon: T::lit(0.01),
            reward: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value: String, reason| Err(Error::InvalidParameter { name, value, reason });
        if self.n_agents < 2 {
            return bad("n_agents", self.n_agents.to_string(), "need at least 2 agents");
        }
        if self.max_blocks < 2 || self.max_blocks > crate::graphs::HARD_CAP {
            return bad("max_blocks", self.max_blocks.to_string(), "must lie in 2..=8");
        }
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return bad("gamma", self.gamma.to_string(), "must lie in [0, 1)");
        }
        if !(self.epsilon >= T::zero() && self.epsilon < T::lit(0.5)) {
            return bad("epsilon", self.epsilon.to_string(), "must lie in [0, 0.5)");
        }
        if !(self.reward > T::zero()) || !self.reward.is_finite() {
            return bad("reward", self.reward.to_string(), "must be positive");
        }
        TimingParams::new(self.timing.alpha(), self.timing.delta())?;
        Ok(())
    }

    /// Weight of the representative agent among appending agents.
    pub fn ra_weight(&self) -> T {
        T::one() / T::from_count(self.n_agents)
    }

    pub fn nra_weight(&self) -> T {
        T::one() - self.ra_weight()
    }

    /// Per-block-step probability that an outstanding block is received.
    pub fn p_receive(&self) -> T {
        self.timing.reception_pmf(1)
    }
}

/// Catalogue, state space and parameters bundled for the solvers.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub cfg: ModelConfig<T>,
    pub cat: Catalogue,
    pub space: StateSpace,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: ModelConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let cat = Catalogue::enumerate(cfg.max_blocks)?;
        let space = StateSpace::enumerate(&cat);
        Ok(Model { cfg, cat, space })
    }

    /// Same catalogue and states under different parameters.
    pub fn with_config(&self, cfg: ModelConfig<T>) -> Result<Self> {
        cfg.validate()?;
        if cfg.max_blocks != self.cfg.max_blocks {
            return Model::new(cfg);
        }
        Ok(Model {
            cfg,
            cat: self.cat.clone(),
            space: self.space.clone(),
        })
    }

    /// Actions available in state `s`: orbit representatives of its local
    /// class, or a single `None` when the local graph is null.
    pub fn actions(&self, s: StateId) -> Vec<Option<usize>> {
        match self.space.local_graph(&self.cat, s).class {
            None => vec![None],
            Some(l) => self.cat.class(l).orbit_reps().into_iter().map(Some).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepKind {
    Grow,
    Prune,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord<T> {
    pub next: StateId,
    pub probability: T,
    /// `r` times the number of finalized blocks the representative agent owned.
    pub reward: T,
    /// Blocks finalized onto the critical path.
    pub pruned_critical: u8,
    /// Blocks that left the graph for good (finalized or discarded).
    pub pruned_total: u8,
    pub kind: StepKind,
}

impl<T> TransitionRecord<T> {
    pub fn is_reset(&self) -> bool {
        self.kind == StepKind::Reset
    }
}

/// NRA appending mass on the blocks of one graph class.
#[derive(Debug, Clone, PartialEq)]
pub struct NraMass<T> {
    pub per_block: Vec<T>,
    pub null: T,
}

/// Block an agent appends to when its local graph `class` sits at `to_global`
/// and its policy picks orbit representative `y`: the lowest-labelled block
/// among the images of `y`'s orbit.
pub fn resolve_action(cat: &Catalogue, class: ClassId, to_global: &[usize], y: usize) -> usize {
    cat.class(class)
        .orbit_members(y)
        .map(|z| to_global[z])
        .min()
        .expect("orbit is non-empty")
}

/// Mixture of NRA actions on graph `g`: each candidate local graph's mass is
/// spread evenly over its labelled members.
pub fn nra_action_distribution<T: Real>(
    cat: &Catalogue,
    g: ClassId,
    policy: &LocalPolicy,
    mu: &MeanField<T>,
) -> NraMass<T> {
    let n = cat.class(g).size();
    let mut per_block = vec![T::zero(); n];
    let row = mu.row(g);
    let mut null = T::zero();
    for (c, cand) in cat.root_connected_subgraphs(g).iter().enumerate() {
        let mass = row[c];
        let Some(l) = cand.class else {
            null = mass;
            continue;
        };
        let y = policy.action(l);
        let share = mass / T::from_count(cand.members.len());
        for m in &cand.members {
            per_block[resolve_action(cat, l, &m.to_global, y)] =
                per_block[resolve_action(cat, l, &m.to_global, y)] + share;
        }
    }
    NraMass { per_block, null }
}

/// Normalized appending probability per block given the RA's block (if it acts).
/// `None` when nobody can append.
fn append_distribution<T: Real>(cfg: &ModelConfig<T>, nra: &NraMass<T>, ra: Option<usize>) -> Option<Vec<T>> {
    let wr = cfg.ra_weight();
    let wn = cfg.nra_weight();
    let mut p: Vec<T> = nra.per_block.iter().map(|&m| wn * m).collect();
    if let Some(a) = ra {
        p[a] = p[a] + wr;
    }
    let total: T = p.iter().copied().sum();
    if !(total > T::zero()) {
        return None;
    }
    Some(p.into_iter().map(|x| x / total).collect())
}

/// Prune target: the non-root block whose subtree receives more than `1-ε`
/// of the appending mass, smallest subtree first.
pub fn prune_target<T: Real>(cat: &Catalogue, g: ClassId, append: &[T], epsilon: T) -> Option<usize> {
    let cls = cat.class(g);
    let threshold = T::one() - epsilon;
    (1..cls.size())
        .filter(|&x| {
            let mass: T = cls.subtree(x).iter().map(|b| append[b]).sum();
            mass > threshold
        })
        .min_by_key(|&x| cls.subtree(x).len())
}

/// Prune evaluation for a labelled state with the RA appending to `ra`.
pub fn evaluate_prune<T: Real>(
    cat: &Catalogue,
    cfg: &ModelConfig<T>,
    g: ClassId,
    nra: &NraMass<T>,
    ra: Option<usize>,
) -> Option<usize> {
    append_distribution(cfg, nra, ra).and_then(|p| prune_target(cat, g, &p, cfg.epsilon))
}

/// Q: blocks owned by the RA among the proper ancestors of the prune target.
pub fn reward_count(cat: &Catalogue, g: ClassId, own: BlockSet, target: Option<usize>) -> usize {
    match target {
        Some(x) => cat.class(g).ancestors(x).intersect(own).len(),
        None => 0,
    }
}

/// Probability that the RA generated a block appended to `b`.
pub fn ownership_split<T: Real>(cfg: &ModelConfig<T>, nra: &NraMass<T>, ra: Option<usize>, b: usize) -> T {
    if ra != Some(b) {
        return T::zero();
    }
    let wr = cfg.ra_weight();
    wr / (wr + cfg.nra_weight() * nra.per_block[b])
}

/// Every receipt outcome of the `outstanding` blocks with its probability.
pub fn reception_split<T: Real>(recv: BlockSet, outstanding: BlockSet, p: T) -> Vec<(BlockSet, T)> {
    let blocks: Vec<usize> = outstanding.iter().collect();
    let z = blocks.len();
    let q = T::one() - p;
    (0..1u32 << z)
        .map(|mask| {
            let mut r = recv;
            let mut prob = T::one();
            for (i, &b) in blocks.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    r.insert(b);
                    prob = prob * p;
                } else {
                    prob = prob * q;
                }
            }
            (r, prob)
        })
        .collect()
}

/// Sparse transition lists for every (state, RA action) pair.
#[derive(Debug, Clone)]
pub struct Mdp<T> {
    /// `state_actions[s]..state_actions[s+1]` indexes `actions`.
    state_actions: Vec<usize>,
    actions: Vec<ActionRow>,
    transitions: Vec<TransitionRecord<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionRow {
    pub action: Option<usize>,
    pub degenerate: bool,
    start: usize,
    end: usize,
}

/// An action with its successor distribution, `None` when degenerate.
type ExpandedAction<T> = (Option<usize>, Option<Vec<TransitionRecord<T>>>);

impl<T: Real> Mdp<T> {
    pub fn build(model: &Model<T>, policy: &LocalPolicy, mu: &MeanField<T>) -> Mdp<T> {
        let kernel = Kernel::new(model, policy, mu);
        let rows: Vec<Vec<ExpandedAction<T>>> = (0..model.space.len())
            .into_par_iter()
            .map(|s| {
                model
                    .actions(s)
                    .into_iter()
                    .map(|a| (a, kernel.expand(s, a)))
                    .collect()
            })
            .collect();
        let mut state_actions = vec![0];
        let mut actions = Vec::new();
        let mut transitions = Vec::new();
        for row in rows {
            for (action, trans) in row {
                let start = transitions.len();
                let degenerate = trans.is_none();
                transitions.extend(trans.unwrap_or_default());
                actions.push(ActionRow {
                    action,
                    degenerate,
                    start,
                    end: transitions.len(),
                });
            }
            state_actions.push(actions.len());
        }
        Mdp {
            state_actions,
            actions,
            transitions,
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_actions.len() - 1
    }

    pub fn actions(&self, s: StateId) -> &[ActionRow] {
        &self.actions[self.state_actions[s]..self.state_actions[s + 1]]
    }

    pub fn transitions(&self, row: &ActionRow) -> &[TransitionRecord<T>] {
        &self.transitions[row.start..row.end]
    }

    /// Chain induced by a full policy on this MDP.
    pub fn chain(&self, space: &StateSpace, policy: &FullPolicy) -> MarkovChain<T> {
        let mut offsets = vec![0];
        let mut transitions = Vec::new();
        let mut degenerate = Vec::new();
        for s in 0..self.n_states() {
            let row = self
                .actions(s)
                .iter()
                .find(|r| r.action == policy.action(s))
                .expect("policy action is available");
            if row.degenerate {
                degenerate.push(s);
            }
            transitions.extend_from_slice(self.transitions(row));
            offsets.push(transitions.len());
        }
        MarkovChain {
            offsets,
            transitions,
            degenerate,
            initial: space.initial_state(),
        }
    }
}

/// Sparse row-stochastic chain over game states with per-transition annotations.
#[derive(Debug, Clone)]
pub struct MarkovChain<T> {
    offsets: Vec<usize>,
    transitions: Vec<TransitionRecord<T>>,
    degenerate: Vec<StateId>,
    initial: StateId,
}

impl<T: Real> MarkovChain<T> {
    /// Builds only the rows needed for one full policy.
    pub fn build(model: &Model<T>, ra_policy: &FullPolicy, nra_policy: &LocalPolicy, mu: &MeanField<T>) -> Self {
        let kernel = Kernel::new(model, nra_policy, mu);
        let rows: Vec<Option<Vec<TransitionRecord<T>>>> = (0..model.space.len())
            .into_par_iter()
            .map(|s| kernel.expand(s, ra_policy.action(s)))
            .collect();
        Self::from_rows(rows, model.space.initial_state())
    }

    /// Chain from explicit rows; `None` marks a degenerate state.
    pub fn from_rows(rows: Vec<Option<Vec<TransitionRecord<T>>>>, initial: StateId) -> Self {
        let mut offsets = vec![0];
        let mut transitions = Vec::new();
        let mut degenerate = Vec::new();
        for (s, row) in rows.into_iter().enumerate() {
            match row {
                Some(r) => transitions.extend(r),
                None => degenerate.push(s),
            }
            offsets.push(transitions.len());
        }
        MarkovChain {
            offsets,
            transitions,
            degenerate,
            initial,
        }
    }

    pub fn n_states(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, s: StateId) -> &[TransitionRecord<T>] {
        &self.transitions[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    /// States from which no agent can append a block.
    pub fn degenerate(&self) -> &[StateId] {
        &self.degenerate
    }

    /// Largest deviation of a non-degenerate row sum from 1.
    pub fn max_row_error(&self) -> T {
        (0..self.n_states())
            .filter(|s| self.degenerate.binary_search(s).is_err())
            .map(|s| (self.row(s).iter().map(|t| t.probability).sum::<T>() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// Delimited dump: source, successor, probability, reward, critical, removed, kind.
    pub fn dump(&self) -> String {
        let mut out = String::from("source,next,probability,reward,critical,removed,kind\n");
        for s in 0..self.n_states() {
            for t in self.row(s) {
                out.push_str(&format!(
                    "{},{},{:e},{},{},{},{:?}\n",
                    s, t.next, t.probability.as_f64(), t.reward, t.pruned_critical, t.pruned_total, t.kind
                ));
            }
        }
        out
    }
}

/// Per-build precomputation shared by every row.
struct Kernel<'a, T> {
    model: &'a Model<T>,
    nra: Vec<NraMass<T>>,
    p_receive: T,
}

impl<'a, T: Real> Kernel<'a, T> {
    fn new(model: &'a Model<T>, policy: &LocalPolicy, mu: &MeanField<T>) -> Self {
        let nra = (0..model.cat.len())
            .map(|g| nra_action_distribution(&model.cat, g, policy, mu))
            .collect();
        Kernel {
            model,
            nra,
            p_receive: model.cfg.p_receive(),
        }
    }

    /// Successor distribution of state `s` when the RA picks local orbit
    /// representative `action`; `None` if some labelling is degenerate.
    fn expand(&self, s: StateId, action: Option<usize>) -> Option<Vec<TransitionRecord<T>>> {
        let cat = &self.model.cat;
        let st = self.model.space.get(s);
        let cls = cat.class(st.graph);
        let mut images: Vec<(BlockSet, BlockSet)> = cls
            .automorphisms()
            .iter()
            .map(|sigma| (st.recv.mapped(sigma), st.own.mapped(sigma)))
            .collect();
        images.sort_by_key(|(r, o)| (r.bits(), o.bits()));
        images.dedup();
        let weight = T::one() / T::from_count(images.len());
        let mut out = Vec::new();
        for (recv, own) in images {
            let ra = action.map(|y| {
                let comp = cat.root_component(st.graph, recv);
                let (c, m) = cat.candidate_of(st.graph, comp).expect("root component is connected");
                let cand = &cat.root_connected_subgraphs(st.graph)[c];
                let l = cand.class.expect("acting agent has a local graph");
                resolve_action(cat, l, &cand.members[m].to_global, y)
            });
            self.step(st.graph, recv, own, ra, weight, &mut out)?;
        }
        Some(merge(out))
    }

    fn step(
        &self,
        g: ClassId,
        recv: BlockSet,
        own: BlockSet,
        ra: Option<usize>,
        weight: T,
        out: &mut Vec<TransitionRecord<T>>,
    ) -> Option<()> {
        let cat = &self.model.cat;
        let cfg = &self.model.cfg;
        let n = cat.class(g).size();
        let append = append_distribution(cfg, &self.nra[g], ra)?;
        let target = prune_target(cat, g, &append, cfg.epsilon);

        let (g2, recv2, own2, ra2, reward, critical, removed, kind) = match target {
            Some(x) => {
                let pr = cat.gamma_subgraph(g, x);
                let q = reward_count(cat, g, own, target);
                (
                    pr.class,
                    recv.mapped_partial(&pr.relabel),
                    own.mapped_partial(&pr.relabel),
                    ra.and_then(|b| pr.relabel[b]),
                    cfg.reward * T::from_count(q),
                    cat.class(g).depth(x) as u8,
                    (n - pr.kept.len()) as u8,
                    StepKind::Prune,
                )
            }
            None if n == cfg.max_blocks => {
                out.push(TransitionRecord {
                    next: self.model.space.initial_state(),
                    probability: weight,
                    reward: T::zero(),
                    pruned_critical: 0,
                    pruned_total: n as u8,
                    kind: StepKind::Reset,
                });
                return Some(());
            }
            None => (g, recv, own, ra, T::zero(), 0, 0, StepKind::Grow),
        };

        let nra2 = &self.nra[g2];
        let append2 = if g2 == g && ra2 == ra {
            append
        } else {
            append_distribution(cfg, nra2, ra2)?
        };
        for (b, &pb) in append2.iter().enumerate() {
            if !(pb > T::zero()) {
                continue;
            }
            let ext = cat.extend(g2, b);
            let recv3 = recv2.mapped(&ext.relabel);
            let own3 = own2.mapped(&ext.relabel);
            let size3 = cat.class(ext.class).size();
            let p_own = ownership_split(cfg, nra2, ra2, b);
            for (owned, p) in [(true, p_own), (false, T::one() - p_own)] {
                if !(p > T::zero()) {
                    continue;
                }
                let (r, o) = if owned {
                    (recv3.with(ext.new_block), own3.with(ext.new_block))
                } else {
                    (recv3, own3)
                };
                let outstanding = BlockSet::full(size3).minus(r);
                for (r4, pr) in reception_split(r, outstanding, self.p_receive) {
                    out.push(TransitionRecord {
                        next: self.model.space.lookup(ext.class, r4, o),
                        probability: weight * pb * p * pr,
                        reward,
                        pruned_critical: critical,
                        pruned_total: removed,
                        kind,
                    });
                }
            }
        }
        Some(())
    }
}

/// Sums the probability of records that agree on everything but probability.
fn merge<T: Real>(mut v: Vec<TransitionRecord<T>>) -> Vec<TransitionRecord<T>> {
    let key = |t: &TransitionRecord<T>| (t.next, t.kind, t.pruned_critical, t.pruned_total, t.reward.as_f64().to_bits());
    v.sort_by_key(key);
    let mut out: Vec<TransitionRecord<T>> = Vec::with_capacity(v.len());
    for t in v {
        match out.last_mut() {
            Some(last) if key(last) == key(&t) => last.probability = last.probability + t.probability,
            _ => out.push(t),
        }
    }
    out
}
