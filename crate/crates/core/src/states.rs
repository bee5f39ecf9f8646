//! Representative-agent states `(G, B, O)` up to graph automorphisms.
//!
//! Each block carries one of three statuses: owned (generated by the
//! representative agent, hence also held), received, or missing. A state is
//! stored under the lexicographically least status vector over the
//! automorphisms of its graph, with `Owned < Received < Missing` and block 0
//! most significant. Held blocks are therefore packed towards low indices.

use std::collections::HashMap;

use crate::graphs::{BlockSet, Catalogue, ClassId};

pub type StateId = usize;

const NO_STATE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum BlockStatus {
    Owned = 0,
    Received = 1,
    Missing = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GameState {
    pub id: StateId,
    pub graph: ClassId,
    pub recv: BlockSet,
    pub own: BlockSet,
}

impl GameState {
    pub fn status(&self, x: usize) -> BlockStatus {
        if self.own.contains(x) {
            BlockStatus::Owned
        } else if self.recv.contains(x) {
            BlockStatus::Received
        } else {
            BlockStatus::Missing
        }
    }
}

/// The representative agent's local block graph in a given state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalGraph {
    /// Index into `Catalogue::root_connected_subgraphs(graph)`; 0 is null.
    pub candidate: usize,
    /// Which labelled member of the candidate orbit this is.
    pub member: usize,
    /// Class of the local graph, `None` when null.
    pub class: Option<ClassId>,
    pub blocks: BlockSet,
    /// `embedding[local] = global`.
    pub embedding: Vec<usize>,
}

impl LocalGraph {
    pub fn is_null(&self) -> bool {
        self.class.is_none()
    }
}

/// Every canonical state over classes of `1..=max_blocks` blocks.
#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<GameState>,
    /// Per class: base-3 status code (block 0 most significant) → state id.
    index: Vec<Vec<u32>>,
    sizes: Vec<usize>,
    class_offsets: Vec<StateId>,
    initial: StateId,
}

impl StateSpace {
    pub fn enumerate(cat: &Catalogue) -> Self {
        let mut states = Vec::new();
        let mut index = Vec::with_capacity(cat.len());
        let mut class_offsets = Vec::with_capacity(cat.len() + 1);
        for g in cat.classes() {
            class_offsets.push(states.len());
            let n = g.size();
            let codes = 3usize.pow(n as u32);
            let mut table = vec![NO_STATE; codes];
            let mut digits = vec![0u8; n];
            for code in 0..codes {
                decode(code, &mut digits);
                let (recv, own) = sets_from_digits(&digits);
                if table[code] != NO_STATE {
                    continue;
                }
                // ascending code order visits the least element of each orbit first
                let id = states.len();
                states.push(GameState {
                    id,
                    graph: g.id,
                    recv,
                    own,
                });
                for sigma in g.automorphisms() {
                    let mut image = vec![0u8; n];
                    for i in 0..n {
                        image[sigma[i]] = digits[i];
                    }
                    table[encode(&image)] = id as u32;
                }
            }
            index.push(table);
        }
        class_offsets.push(states.len());
        let mut space = StateSpace {
            states,
            index,
            sizes: cat.classes().iter().map(|g| g.size()).collect(),
            class_offsets,
            initial: 0,
        };
        space.initial = space.lookup(0, BlockSet::single(0), BlockSet::EMPTY);
        space
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[GameState] {
        &self.states
    }

    pub fn get(&self, id: StateId) -> &GameState {
        &self.states[id]
    }

    /// States whose global graph is `class`, as a contiguous id range.
    pub fn of_class(&self, class: ClassId) -> std::ops::Range<StateId> {
        self.class_offsets[class]..self.class_offsets[class + 1]
    }

    /// Canonical id of an arbitrary labelling. `own` blocks count as held
    /// whether or not they appear in `recv`.
    pub fn lookup(&self, class: ClassId, recv: BlockSet, own: BlockSet) -> StateId {
        let table = &self.index[class];
        let mut code = 0usize;
        for i in 0..self.sizes[class] {
            let d = if own.contains(i) {
                0
            } else if recv.contains(i) {
                1
            } else {
                2
            };
            code = code * 3 + d;
        }
        let id = table[code];
        debug_assert!(id != NO_STATE);
        id as StateId
    }

    /// Genesis only, held by everyone, owned by no one.
    pub fn initial_state(&self) -> StateId {
        self.initial
    }

    /// The root-connected part of the received blocks, or null when the root is missing.
    pub fn local_graph(&self, cat: &Catalogue, id: StateId) -> LocalGraph {
        let s = &self.states[id];
        let blocks = cat.root_component(s.graph, s.recv);
        let (candidate, member) = cat
            .candidate_of(s.graph, blocks)
            .expect("root component is root-connected");
        let cand = &cat.root_connected_subgraphs(s.graph)[candidate];
        LocalGraph {
            candidate,
            member,
            class: cand.class,
            blocks,
            embedding: cand.members[member].to_global.clone(),
        }
    }

    /// State whose graph is `class`, fully received and owned by no one.
    pub fn full_information_state(&self, class: ClassId, size: usize) -> StateId {
        self.lookup(class, BlockSet::full(size), BlockSet::EMPTY)
    }

    /// Partition of the states into information sets: equal local-graph class
    /// and equal ownership pattern on the local graph (up to its automorphisms).
    pub fn sigma_classes(&self, cat: &Catalogue) -> Vec<Vec<StateId>> {
        let mut groups: HashMap<(Option<ClassId>, u32), Vec<StateId>> = HashMap::new();
        for s in &self.states {
            groups.entry(self.sigma_key(cat, s.id)).or_default().push(s.id);
        }
        let mut out: Vec<Vec<StateId>> = groups.into_values().collect();
        out.sort();
        out
    }

    /// Members of σ(s).
    pub fn sigma_class(&self, cat: &Catalogue, id: StateId) -> Vec<StateId> {
        let key = self.sigma_key(cat, id);
        self.states
            .iter()
            .filter(|s| self.sigma_key(cat, s.id) == key)
            .map(|s| s.id)
            .collect()
    }

    fn sigma_key(&self, cat: &Catalogue, id: StateId) -> (Option<ClassId>, u32) {
        let local = self.local_graph(cat, id);
        let Some(class) = local.class else {
            return (None, 0);
        };
        let own = self.states[id].own;
        let lg = cat.class(class);
        // least bitmask of the owned local blocks over the local automorphisms
        let owned_local: Vec<bool> = local.embedding.iter().map(|&g| own.contains(g)).collect();
        let best = lg
            .automorphisms()
            .iter()
            .map(|sigma| {
                let mut bits = 0u32;
                for (i, &o) in owned_local.iter().enumerate() {
                    if o {
                        bits |= 1 << sigma[i];
                    }
                }
                bits
            })
            .min()
            .unwrap_or(0);
        (Some(class), best)
    }

    /// Text dump: id, graph name, recv mask, own mask (block 0 first).
    pub fn dump(&self, cat: &Catalogue) -> String {
        let mut out = String::new();
        for s in &self.states {
            let n = cat.class(s.graph).size();
            let mask = |set: BlockSet| (0..n).map(|i| if set.contains(i) { '1' } else { '0' }).collect::<String>();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                s.id,
                cat.class(s.graph).name(),
                mask(s.recv),
                mask(s.own)
            ));
        }
        out
    }
}

fn decode(mut code: usize, digits: &mut [u8]) {
    for d in digits.iter_mut().rev() {
        *d = (code % 3) as u8;
        code /= 3;
    }
}

fn encode(digits: &[u8]) -> usize {
    digits.iter().fold(0, |acc, &d| acc * 3 + d as usize)
}

fn sets_from_digits(digits: &[u8]) -> (BlockSet, BlockSet) {
    let mut recv = BlockSet::EMPTY;
    let mut own = BlockSet::EMPTY;
    for (i, &d) in digits.iter().enumerate() {
        match d {
            0 => {
                own.insert(i);
                recv.insert(i);
            }
            1 => recv.insert(i),
            _ => {}
        }
    }
    (recv, own)
}
