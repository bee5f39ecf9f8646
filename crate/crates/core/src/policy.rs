//! Deterministic local policies (one action per local graph class) and full
//! policies (one action per game state).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graphs::{Catalogue, ClassId};
use crate::states::{StateId, StateSpace};

/// π̄: for every graph class usable as a local graph, the chosen block
/// (an orbit representative in the class's canonical layout).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalPolicy {
    choice: Vec<usize>,
}

impl LocalPolicy {
    pub fn from_choices(cat: &Catalogue, choice: Vec<usize>) -> Result<Self> {
        if choice.len() != cat.len() {
            return Err(Error::InvalidParameter {
                name: "policy",
                value: format!("{} entries", choice.len()),
                reason: "need one action per graph class",
            });
        }
        for (g, &a) in choice.iter().enumerate() {
            let cls = cat.class(g);
            if a >= cls.size() || cls.orbit_of(a) != a {
                return Err(Error::UndefinedPolicy { class: g });
            }
        }
        Ok(LocalPolicy { choice })
    }

    /// Longest chain rule.
    pub fn lcr(cat: &Catalogue) -> Self {
        LocalPolicy {
            choice: cat.classes().iter().map(|g| g.lcr_tip()).collect(),
        }
    }

    /// Always extend the root: nothing ever gets finalized.
    pub fn root(cat: &Catalogue) -> Self {
        LocalPolicy {
            choice: vec![0; cat.len()],
        }
    }

    pub fn action(&self, class: ClassId) -> usize {
        self.choice[class]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choice
    }

    /// Number of classes on which the two policies differ.
    pub fn distance(&self, other: &LocalPolicy) -> usize {
        self.choice.iter().zip(&other.choice).filter(|(a, b)| a != b).count()
    }

    /// Size of the deterministic policy space.
    pub fn count(cat: &Catalogue) -> u128 {
        cat.classes().iter().map(|g| g.orbit_reps().len() as u128).product()
    }

    /// Every deterministic policy, in mixed-radix order (first class varies slowest).
    pub fn enumerate(cat: &Catalogue) -> Vec<LocalPolicy> {
        let options: Vec<Vec<usize>> = cat.classes().iter().map(|g| g.orbit_reps()).collect();
        let mut out = vec![LocalPolicy { choice: Vec::new() }];
        for opts in &options {
            out = out
                .into_iter()
                .flat_map(|p| {
                    opts.iter().map(move |&a| {
                        let mut c = p.choice.clone();
                        c.push(a);
                        LocalPolicy { choice: c }
                    })
                })
                .collect();
        }
        out
    }

    /// Compact label, e.g. `0-1-1-3-0-2-3-4`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.choice.iter().map(|a| a.to_string()).collect();
        parts.join("-")
    }

    /// Policy file text: `<class code> <action>` per line, catalogue order.
    pub fn to_text(&self, cat: &Catalogue) -> String {
        let mut s = String::new();
        for g in cat.classes() {
            writeln!(s, "{} {}", g.code(), self.choice[g.id]).unwrap();
        }
        s
    }

    /// Inverse of [`to_text`](Self::to_text). Blank lines and `#` comments are
    /// skipped; every class must appear exactly once.
    pub fn parse(cat: &Catalogue, text: &str) -> Result<Self> {
        let mut choice = vec![None; cat.len()];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::PolicyFile { line: i + 1, msg };
            let mut fields = line.split_whitespace();
            let (Some(code), Some(action), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err("expected `<code> <action>`".into()));
            };
            let g = cat
                .classes()
                .iter()
                .find(|g| g.code() == code)
                .ok_or_else(|| err(format!("unknown class code {code}")))?;
            let a: usize = action.parse().map_err(|_| err(format!("bad action {action}")))?;
            if a >= g.size() || g.orbit_of(a) != a {
                return Err(err(format!("{a} is not an orbit representative of {}", g.name())));
            }
            if choice[g.id].replace(a).is_some() {
                return Err(err(format!("duplicate entry for {}", g.name())));
            }
        }
        let choice = choice
            .into_iter()
            .enumerate()
            .map(|(g, a)| a.ok_or(Error::UndefinedPolicy { class: g }))
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalPolicy { choice })
    }
}

/// π: per game state, the chosen block of its local graph (orbit
/// representative of the local class), or `None` when the local graph is null.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullPolicy {
    choice: Vec<Option<usize>>,
}

impl FullPolicy {
    pub fn new(choice: Vec<Option<usize>>) -> Self {
        FullPolicy { choice }
    }

    /// Every state plays the local policy on its local graph.
    pub fn from_local(cat: &Catalogue, space: &StateSpace, local: &LocalPolicy) -> Self {
        let choice = (0..space.len())
            .map(|s| space.local_graph(cat, s).class.map(|l| local.action(l)))
            .collect();
        FullPolicy { choice }
    }

    pub fn action(&self, s: StateId) -> Option<usize> {
        self.choice[s]
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    /// Approach 2: read the action at the state whose graph is `l`, fully
    /// received and unowned.
    pub fn extract_local(&self, cat: &Catalogue, space: &StateSpace) -> LocalPolicy {
        let choice = cat
            .classes()
            .iter()
            .map(|g| {
                let s = space.full_information_state(g.id, g.size());
                let a = self.choice[s].expect("fully received state has a local graph");
                g.orbit_of(a)
            })
            .collect();
        LocalPolicy { choice }
    }
}
