//! Nakamoto graphs (rooted block trees) up to isomorphism.
//!
//! Every class is stored in a canonical layout: blocks are numbered in
//! depth-first preorder, root first, visiting child subtrees in a fixed total
//! order (larger subtree first, then taller, then by canonical code). Two
//! labelled trees are isomorphic iff they produce the same layout.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Hard limit on blocks per graph; bounds every per-class table.
pub const HARD_CAP: usize = 8;

pub type ClassId = usize;

/// Small set of block indices (at most [`HARD_CAP`] members).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BlockSet(u16);

impl BlockSet {
    pub const EMPTY: BlockSet = BlockSet(0);

    pub fn from_bits(bits: u16) -> Self {
        BlockSet(bits)
    }

    pub fn full(n: usize) -> Self {
        BlockSet(((1u32 << n) - 1) as u16)
    }

    pub fn single(i: usize) -> Self {
        BlockSet(1 << i)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn with(mut self, i: usize) -> Self {
        self.insert(i);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        BlockSet(self.0 | other.0)
    }

    pub fn intersect(self, other: Self) -> Self {
        BlockSet(self.0 & other.0)
    }

    pub fn minus(self, other: Self) -> Self {
        BlockSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..16).filter(move |i| bits >> i & 1 == 1)
    }

    /// Image of the set under a block relabelling `map[old] = new`.
    pub fn mapped(self, map: &[usize]) -> Self {
        let mut out = BlockSet::EMPTY;
        for i in self.iter() {
            out.insert(map[i]);
        }
        out
    }

    /// Image under a partial relabelling; members without an image are dropped.
    pub fn mapped_partial(self, map: &[Option<usize>]) -> Self {
        let mut out = BlockSet::EMPTY;
        for i in self.iter() {
            if let Some(j) = map[i] {
                out.insert(j);
            }
        }
        out
    }
}

impl fmt::Debug for BlockSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for BlockSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = BlockSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// Canonical representative of one isomorphism class of Nakamoto graphs.
#[derive(Debug, Clone)]
pub struct GraphClass {
    pub id: ClassId,
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    subtree: Vec<BlockSet>,
    ancestors: Vec<BlockSet>,
    orbit: Vec<usize>,
    automorphisms: Vec<Vec<usize>>,
    code: String,
    name: String,
}

impl GraphClass {
    fn from_canonical(id: ClassId, parents: Vec<Option<usize>>, code: String) -> Self {
        let n = parents.len();
        let mut children = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(i);
            }
        }
        let mut depth = vec![0; n];
        let mut ancestors = vec![BlockSet::EMPTY; n];
        for i in 1..n {
            let p = parents[i].expect("non-root block without parent");
            depth[i] = depth[p] + 1;
            ancestors[i] = ancestors[p].with(p);
        }
        let mut subtree = vec![BlockSet::EMPTY; n];
        for i in (0..n).rev() {
            let mut s = BlockSet::single(i);
            for &c in &children[i] {
                s = s.union(subtree[c]);
            }
            subtree[i] = s;
        }
        let codes = subtree_codes(&children);
        let automorphisms = find_automorphisms(&parents, &codes);
        let mut orbit: Vec<usize> = (0..n).collect();
        for sigma in &automorphisms {
            for i in 0..n {
                orbit[sigma[i]] = orbit[sigma[i]].min(i);
            }
        }
        let name = format!("g_{}", paper_name(0, &children, &subtree));
        GraphClass {
            id,
            parents,
            children,
            depth,
            subtree,
            ancestors,
            orbit,
            automorphisms,
            code,
            name,
        }
    }

    pub fn size(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn parent(&self, x: usize) -> Option<usize> {
        self.parents[x]
    }

    pub fn children(&self, x: usize) -> &[usize] {
        &self.children[x]
    }

    pub fn depth(&self, x: usize) -> usize {
        self.depth[x]
    }

    pub fn blocks(&self) -> BlockSet {
        BlockSet::full(self.size())
    }

    /// Γ(G, x): `x` together with all of its descendants.
    pub fn subtree(&self, x: usize) -> BlockSet {
        self.subtree[x]
    }

    /// X(G, x): proper ancestors of `x`.
    pub fn ancestors(&self, x: usize) -> BlockSet {
        self.ancestors[x]
    }

    /// `(D, C)`: descendants of `x`, and blocks that are neither ancestors
    /// nor descendants of `x`.
    pub fn degree_counts(&self, x: usize) -> (usize, usize) {
        let d = self.subtree[x].len() - 1;
        let c = self.size() - 1 - d - self.ancestors[x].len();
        (d, c)
    }

    /// Orbit label of `x`: the lowest index it can be mapped to by an automorphism.
    pub fn orbit_of(&self, x: usize) -> usize {
        self.orbit[x]
    }

    pub fn orbit_labels(&self) -> &[usize] {
        &self.orbit
    }

    pub fn orbit_reps(&self) -> Vec<usize> {
        (0..self.size()).filter(|&i| self.orbit[i] == i).collect()
    }

    pub fn orbit_members(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        let rep = self.orbit[x];
        (0..self.size()).filter(move |&i| self.orbit[i] == rep)
    }

    /// All automorphisms as permutations `sigma[old] = new`; the identity comes first.
    pub fn automorphisms(&self) -> &[Vec<usize>] {
        &self.automorphisms
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    /// Nested label in the `g_4.(2.1,1)` style.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Longest-chain tip: deepest block, lowest canonical index among ties.
    pub fn lcr_tip(&self) -> usize {
        let deepest = self.max_depth();
        (0..self.size())
            .find(|&i| self.depth[i] == deepest)
            .map(|i| self.orbit[i])
            .expect("graph has at least one block")
    }
}

/// The result of canonicalising a labelled parent array.
#[derive(Debug, Clone)]
pub struct Canonical {
    pub parents: Vec<Option<usize>>,
    pub code: String,
    /// `relabel[old] = new`.
    pub relabel: Vec<usize>,
}

/// Canonical layout of an arbitrary labelled rooted tree.
pub fn canonical_form(parents: &[Option<usize>]) -> Result<Canonical> {
    let n = parents.len();
    if n == 0 {
        return Err(Error::MalformedGraph("empty graph".into()));
    }
    let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
    if roots.len() != 1 {
        return Err(Error::MalformedGraph(format!("expected one root, found {}", roots.len())));
    }
    let root = roots[0];
    let mut children = vec![Vec::new(); n];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= n || p == i {
                return Err(Error::MalformedGraph(format!("block {i} has invalid parent {p}")));
            }
            children[p].push(i);
        }
    }
    // Reachability from the root rules out cycles given one parent per block.
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(children[v].iter().copied());
    }
    if order.len() != n {
        return Err(Error::MalformedGraph("graph contains a cycle or unreachable blocks".into()));
    }
    let keys = sort_keys(&children, &order);
    for ch in children.iter_mut() {
        ch.sort_by(|a, b| keys[*a].cmp(&keys[*b]));
    }
    let mut relabel = vec![usize::MAX; n];
    let mut next = 0;
    preorder(root, &children, &mut |v| {
        relabel[v] = next;
        next += 1;
    });
    let mut canon = vec![None; n];
    for v in 0..n {
        if let Some(p) = parents[v] {
            canon[relabel[v]] = Some(relabel[p]);
        }
    }
    Ok(Canonical {
        parents: canon,
        code: keys[root].code.clone(),
        relabel,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SubtreeKey {
    neg_size: i64,
    neg_height: i64,
    code: String,
}

fn sort_keys(children: &[Vec<usize>], order: &[usize]) -> Vec<SubtreeKey> {
    let n = children.len();
    let mut keys: Vec<Option<SubtreeKey>> = vec![None; n];
    for &v in order.iter().rev() {
        let mut kids: Vec<&SubtreeKey> = children[v]
            .iter()
            .map(|c| keys[*c].as_ref().expect("children are keyed first"))
            .collect();
        kids.sort();
        let size = 1 + kids.iter().map(|k| -k.neg_size).sum::<i64>();
        let height = kids.iter().map(|k| 1 - k.neg_height).max().unwrap_or(0);
        let mut code = String::from("(");
        for k in &kids {
            code.push_str(&k.code);
        }
        code.push(')');
        keys[v] = Some(SubtreeKey {
            neg_size: -size,
            neg_height: -height,
            code,
        });
    }
    keys.into_iter().map(|k| k.unwrap()).collect()
}

fn preorder(v: usize, children: &[Vec<usize>], visit: &mut impl FnMut(usize)) {
    visit(v);
    for &c in &children[v] {
        preorder(c, children, visit);
    }
}

fn subtree_codes(children: &[Vec<usize>]) -> Vec<String> {
    let n = children.len();
    let mut codes = vec![String::new(); n];
    // canonical layout: children have larger indices than parents
    for v in (0..n).rev() {
        let mut kids: Vec<&str> = children[v].iter().map(|c| codes[*c].as_str()).collect();
        kids.sort_unstable();
        codes[v] = format!("({})", kids.concat());
    }
    codes
}

fn find_automorphisms(parents: &[Option<usize>], codes: &[String]) -> Vec<Vec<usize>> {
    let n = parents.len();
    let mut out = Vec::new();
    let mut sigma = vec![usize::MAX; n];
    let mut used = vec![false; n];
    sigma[0] = 0;
    used[0] = true;
    fn extend(
        i: usize,
        parents: &[Option<usize>],
        codes: &[String],
        sigma: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let n = parents.len();
        if i == n {
            out.push(sigma.clone());
            return;
        }
        let target_parent = sigma[parents[i].expect("non-root")];
        for j in 0..n {
            if !used[j] && parents[j] == Some(target_parent) && codes[j] == codes[i] {
                used[j] = true;
                sigma[i] = j;
                extend(i + 1, parents, codes, sigma, used, out);
                used[j] = false;
            }
        }
        sigma[i] = usize::MAX;
    }
    extend(1, parents, codes, &mut sigma, &mut used, &mut out);
    // identity first
    out.sort();
    out
}

fn paper_name(v: usize, children: &[Vec<usize>], subtree: &[BlockSet]) -> String {
    let size = subtree[v].len();
    match children[v].len() {
        0 => size.to_string(),
        1 => format!("{size}.{}", paper_name(children[v][0], children, subtree)),
        _ => {
            let parts: Vec<String> = children[v]
                .iter()
                .map(|&c| paper_name(c, children, subtree))
                .collect();
            format!("{size}.({})", parts.join(","))
        }
    }
}

/// A root-connected block subset of a graph (a possible local block graph),
/// identified up to the graph's automorphisms.
#[derive(Debug, Clone)]
pub struct Candidate {
    /// Class of the subset; `None` for the null graph.
    pub class: Option<ClassId>,
    /// Every distinct labelled subset in the automorphism orbit.
    pub members: Vec<Embedding>,
}

impl Candidate {
    pub fn is_null(&self) -> bool {
        self.class.is_none()
    }

    /// Lowest-bit member, used as the representative subset.
    pub fn representative(&self) -> &Embedding {
        &self.members[0]
    }
}

/// A concrete subset with its map from local canonical indices to graph blocks.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub blocks: BlockSet,
    /// `to_global[local] = global`.
    pub to_global: Vec<usize>,
}

/// Result of growing a class by one block.
#[derive(Debug, Clone)]
pub struct Extension {
    pub class: ClassId,
    /// `relabel[old] = new` for the pre-existing blocks.
    pub relabel: Vec<usize>,
    pub new_block: usize,
}

/// Result of cutting a class down to Γ(G, x).
#[derive(Debug, Clone)]
pub struct Pruned {
    pub class: ClassId,
    pub kept: BlockSet,
    /// `relabel[old] = Some(new)` for kept blocks.
    pub relabel: Vec<Option<usize>>,
}

/// Every isomorphism class up to a size bound plus the derived lookup tables
/// the dynamics need (extensions, prunes, local-graph candidates).
#[derive(Debug, Clone)]
pub struct Catalogue {
    max_blocks: usize,
    classes: Vec<GraphClass>,
    by_code: HashMap<String, ClassId>,
    extensions: Vec<Vec<Extension>>,
    prunes: Vec<Vec<Pruned>>,
    candidates: Vec<Vec<Candidate>>,
    /// Per class, per subset bitmask: `(candidate, member)` or `None` when the
    /// subset is not root-connected. Index 0 (empty mask) is the null graph.
    candidate_lookup: Vec<Vec<Option<(u16, u16)>>>,
}

impl Catalogue {
    /// All classes with `1..=max_blocks` blocks, ordered by size then code.
    pub fn enumerate(max_blocks: usize) -> Result<Self> {
        Self::enumerate_with_cap(max_blocks, HARD_CAP)
    }

    pub fn enumerate_with_cap(max_blocks: usize, cap: usize) -> Result<Self> {
        if max_blocks == 0 {
            return Err(Error::InvalidParameter {
                name: "max_blocks",
                value: "0".into(),
                reason: "need at least one block",
            });
        }
        if max_blocks > cap.min(HARD_CAP) {
            return Err(Error::GraphTooLarge {
                size: max_blocks,
                cap: cap.min(HARD_CAP),
            });
        }
        let mut layers: Vec<Vec<Canonical>> = vec![vec![canonical_form(&[None])?]];
        for _ in 1..max_blocks {
            let prev = layers.last().unwrap();
            let mut seen: HashMap<String, Canonical> = HashMap::new();
            for c in prev {
                for x in 0..c.parents.len() {
                    let mut grown = c.parents.clone();
                    grown.push(Some(x));
                    let canon = canonical_form(&grown)?;
                    seen.entry(canon.code.clone()).or_insert(canon);
                }
            }
            let mut layer: Vec<Canonical> = seen.into_values().collect();
            layer.sort_by(|a, b| {
                let ka = sort_keys_root(&a.parents);
                let kb = sort_keys_root(&b.parents);
                ka.cmp(&kb)
            });
            layers.push(layer);
        }
        let mut classes = Vec::new();
        let mut by_code = HashMap::new();
        for layer in layers {
            for c in layer {
                let id = classes.len();
                by_code.insert(c.code.clone(), id);
                classes.push(GraphClass::from_canonical(id, c.parents, c.code));
            }
        }
        let mut cat = Catalogue {
            max_blocks,
            classes,
            by_code,
            extensions: Vec::new(),
            prunes: Vec::new(),
            candidates: Vec::new(),
            candidate_lookup: Vec::new(),
        };
        cat.build_tables()?;
        Ok(cat)
    }

    fn build_tables(&mut self) -> Result<()> {
        let mut extensions = Vec::with_capacity(self.classes.len());
        let mut prunes = Vec::with_capacity(self.classes.len());
        let mut candidates = Vec::with_capacity(self.classes.len());
        let mut lookup = Vec::with_capacity(self.classes.len());
        for g in &self.classes {
            let n = g.size();
            let ext = if n < self.max_blocks {
                (0..n).map(|x| self.compute_extend(g, x)).collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            extensions.push(ext);
            prunes.push((0..n).map(|x| self.compute_gamma(g, x)).collect::<Result<Vec<_>>>()?);
            let (cands, table) = self.compute_candidates(g)?;
            candidates.push(cands);
            lookup.push(table);
        }
        self.extensions = extensions;
        self.prunes = prunes;
        self.candidates = candidates;
        self.candidate_lookup = lookup;
        Ok(())
    }

    fn compute_extend(&self, g: &GraphClass, x: usize) -> Result<Extension> {
        let mut grown = g.parents.clone();
        grown.push(Some(x));
        let canon = canonical_form(&grown)?;
        let class = self.id_of_code(&canon.code)?;
        let n = g.size();
        Ok(Extension {
            class,
            relabel: canon.relabel[..n].to_vec(),
            new_block: canon.relabel[n],
        })
    }

    fn compute_gamma(&self, g: &GraphClass, x: usize) -> Result<Pruned> {
        let kept = g.subtree(x);
        let (class, relabel) = self.induced(g, kept)?;
        Ok(Pruned { class, kept, relabel })
    }

    /// Canonical class of the subgraph induced by a connected block subset,
    /// with the relabelling of the kept blocks.
    fn induced(&self, g: &GraphClass, kept: BlockSet) -> Result<(ClassId, Vec<Option<usize>>)> {
        let members: Vec<usize> = kept.iter().collect();
        let mut compact = vec![usize::MAX; g.size()];
        for (k, &b) in members.iter().enumerate() {
            compact[b] = k;
        }
        let sub_parents: Vec<Option<usize>> = members
            .iter()
            .map(|&b| g.parents[b].filter(|p| kept.contains(*p)).map(|p| compact[p]))
            .collect();
        let canon = canonical_form(&sub_parents)?;
        let class = self.id_of_code(&canon.code)?;
        let mut relabel = vec![None; g.size()];
        for (k, &b) in members.iter().enumerate() {
            relabel[b] = Some(canon.relabel[k]);
        }
        Ok((class, relabel))
    }

    #[allow(clippy::type_complexity)]
    fn compute_candidates(&self, g: &GraphClass) -> Result<(Vec<Candidate>, Vec<Option<(u16, u16)>>)> {
        let n = g.size();
        let mut table = vec![None; 1 << n];
        let mut cands = vec![Candidate {
            class: None,
            members: vec![Embedding {
                blocks: BlockSet::EMPTY,
                to_global: Vec::new(),
            }],
        }];
        table[0] = Some((0, 0));
        for bits in 1u32..(1 << n) {
            let set = BlockSet::from_bits(bits as u16);
            if table[bits as usize].is_some() || !is_root_connected(g, set) {
                continue;
            }
            // orbit of this subset under the automorphism group
            let mut orbit: Vec<BlockSet> = g.automorphisms.iter().map(|s| set.mapped(s)).collect();
            orbit.sort();
            orbit.dedup();
            let mut members = Vec::with_capacity(orbit.len());
            let mut class = None;
            for m in &orbit {
                let (cls, relabel) = self.induced(g, *m)?;
                class = Some(cls);
                let mut to_global = vec![0; m.len()];
                for b in m.iter() {
                    to_global[relabel[b].unwrap()] = b;
                }
                members.push(Embedding { blocks: *m, to_global });
            }
            let idx = cands.len() as u16;
            for (k, m) in orbit.iter().enumerate() {
                table[m.bits() as usize] = Some((idx, k as u16));
            }
            cands.push(Candidate { class, members });
        }
        Ok((cands, table))
    }

    fn id_of_code(&self, code: &str) -> Result<ClassId> {
        self.by_code.get(code).copied().ok_or_else(|| {
            let size = code.matches('(').count();
            Error::GraphTooLarge {
                size,
                cap: self.max_blocks,
            }
        })
    }

    pub fn max_blocks(&self) -> usize {
        self.max_blocks
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[GraphClass] {
        &self.classes
    }

    pub fn class(&self, id: ClassId) -> &GraphClass {
        &self.classes[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&GraphClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn counts_by_size(&self) -> Vec<usize> {
        let mut counts = vec![0; self.max_blocks];
        for c in &self.classes {
            counts[c.size() - 1] += 1;
        }
        counts
    }

    /// Class of an arbitrary labelled tree together with `relabel[old] = new`.
    pub fn canonicalize(&self, parents: &[Option<usize>]) -> Result<(ClassId, Vec<usize>)> {
        if parents.len() > self.max_blocks {
            return Err(Error::GraphTooLarge {
                size: parents.len(),
                cap: self.max_blocks,
            });
        }
        let canon = canonical_form(parents)?;
        Ok((self.id_of_code(&canon.code)?, canon.relabel))
    }

    /// Append a child to block `x` of class `g`.
    pub fn extend(&self, g: ClassId, x: usize) -> &Extension {
        &self.extensions[g][x]
    }

    /// Φ(G, G'): blocks of `g` whose extension lands in `next`.
    pub fn phi(&self, g: ClassId, next: ClassId) -> BlockSet {
        let cls = &self.classes[g];
        if self.classes[next].size() != cls.size() + 1 || cls.size() >= self.max_blocks {
            return BlockSet::EMPTY;
        }
        (0..cls.size()).filter(|&x| self.extensions[g][x].class == next).collect()
    }

    /// Γ(G, x) as a class, with the kept blocks and their relabelling.
    pub fn gamma_subgraph(&self, g: ClassId, x: usize) -> &Pruned {
        &self.prunes[g][x]
    }

    /// Possible local block graphs of `g` (null graph first), one entry per
    /// automorphism orbit of root-connected subsets.
    pub fn root_connected_subgraphs(&self, g: ClassId) -> &[Candidate] {
        &self.candidates[g]
    }

    /// `(candidate, member)` indices of a subset, or `None` if it is not root-connected.
    pub fn candidate_of(&self, g: ClassId, blocks: BlockSet) -> Option<(usize, usize)> {
        self.candidate_lookup[g][blocks.bits() as usize].map(|(c, m)| (c as usize, m as usize))
    }

    /// Largest root-connected part of `blocks`; empty if the root is missing.
    pub fn root_component(&self, g: ClassId, blocks: BlockSet) -> BlockSet {
        let cls = &self.classes[g];
        if !blocks.contains(0) {
            return BlockSet::EMPTY;
        }
        let mut out = BlockSet::single(0);
        // preorder layout: parents precede children
        for i in 1..cls.size() {
            if blocks.contains(i) && out.contains(cls.parents[i].unwrap()) {
                out.insert(i);
            }
        }
        out
    }

    /// Text catalogue, one line per class: id, size, code, name, orbit labels.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for c in &self.classes {
            let orbits: Vec<String> = c.orbit.iter().map(|o| o.to_string()).collect();
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                c.id,
                c.size(),
                c.code,
                c.name,
                orbits.join(",")
            ));
        }
        s
    }
}

fn sort_keys_root(parents: &[Option<usize>]) -> SubtreeKey {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(i);
        }
    }
    let order: Vec<usize> = (0..n).collect();
    sort_keys(&children, &order).swap_remove(0)
}

fn is_root_connected(g: &GraphClass, set: BlockSet) -> bool {
    set.contains(0) && set.iter().all(|i| i == 0 || set.contains(g.parents[i].unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cat(n: usize) -> Catalogue {
        Catalogue::enumerate(n).unwrap()
    }

    fn id(c: &Catalogue, name: &str) -> ClassId {
        c.by_name(name).unwrap_or_else(|| panic!("no class {name}")).id
    }

    /// Reference isomorphism test: brute force over all bijections fixing the root.
    fn isomorphic(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
        let n = a.len();
        if n != b.len() {
            return false;
        }
        let ra = a.iter().position(|p| p.is_none()).unwrap();
        let rb = b.iter().position(|p| p.is_none()).unwrap();
        let mut map = vec![usize::MAX; n];
        let mut used = vec![false; n];
        fn go(i: usize, a: &[Option<usize>], b: &[Option<usize>], map: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
            let n = a.len();
            if i == n {
                return (0..n).all(|v| a[v].map(|p| map[p]) == b[map[v]]);
            }
            if map[i] != usize::MAX {
                return go(i + 1, a, b, map, used);
            }
            for j in 0..n {
                if !used[j] && (a[i].is_none() == b[j].is_none()) {
                    used[j] = true;
                    map[i] = j;
                    if go(i + 1, a, b, map, used) {
                        return true;
                    }
                    used[j] = false;
                    map[i] = usize::MAX;
                }
            }
            false
        }
        map[ra] = rb;
        used[rb] = true;
        go(0, a, b, &mut map, &mut used)
    }

    /// Every labelled parent array with `parent(i) < i` for sizes up to `n`.
    fn labelled_trees(n: usize) -> Vec<Vec<Option<usize>>> {
        let mut out = vec![vec![None]];
        let mut frontier = vec![vec![None]];
        for size in 2..=n {
            let mut next = Vec::new();
            for t in &frontier {
                for p in 0..size - 1 {
                    let mut u = t.clone();
                    u.push(Some(p));
                    next.push(u);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn class_counts_match_brute_force() {
        let c = cat(7);
        assert_eq!(c.counts_by_size(), vec![1, 1, 2, 4, 9, 20, 48]);
        let mut per_size = vec![HashSet::new(); 7];
        for t in labelled_trees(7) {
            per_size[t.len() - 1].insert(canonical_form(&t).unwrap().code);
        }
        let brute: Vec<usize> = per_size.iter().map(|s| s.len()).collect();
        assert_eq!(brute, c.counts_by_size());
        assert_eq!(cat(4).len(), 8);
        assert_eq!(cat(1).len(), 1);
    }

    #[test]
    fn figure_two_names() {
        let c = cat(4);
        let names: HashSet<&str> = c.classes().iter().map(|g| g.name()).collect();
        for n in ["g_1", "g_2.1", "g_3.2.1", "g_3.(1,1)", "g_4.3.2.1", "g_4.(2.1,1)", "g_4.3.(1,1)", "g_4.(1,1,1)"] {
            assert!(names.contains(n), "{n} missing from {names:?}");
        }
        let g = c.by_name("g_4.(2.1,1)").unwrap();
        assert_eq!(g.parents(), &[None, Some(0), Some(1), Some(0)]);
    }

    #[test]
    fn canonical_form_is_label_invariant() {
        // chain 0 <- 1 <- 2 relabelled
        let a = canonical_form(&[None, Some(0), Some(1)]).unwrap();
        let b = canonical_form(&[Some(2), None, Some(1)]).unwrap();
        assert_eq!(a.code, b.code);
        assert_eq!(a.parents, b.parents);
        let c = cat(4);
        let star = [Some(3), Some(3), Some(3), None];
        assert_eq!(c.canonicalize(&star).unwrap().0, id(&c, "g_4.(1,1,1)"));
        assert!(canonical_form(&[Some(1), Some(0)]).is_err());
        assert!(canonical_form(&[None, None]).is_err());
    }

    #[test]
    fn canonical_equality_iff_isomorphic() {
        let trees: Vec<_> = labelled_trees(6).into_iter().filter(|t| t.len() >= 4).collect();
        // relabel each tree by a fixed permutation to get non-preorder inputs too
        let shuffled: Vec<Vec<Option<usize>>> = trees
            .iter()
            .map(|t| {
                let n = t.len();
                let perm: Vec<usize> = (0..n).map(|i| (2 * n + 1 - i) % n).collect();
                let mut out = vec![None; n];
                for v in 0..n {
                    out[perm[v]] = t[v].map(|p| perm[p]);
                }
                out
            })
            .collect();
        let sample: Vec<&Vec<Option<usize>>> = trees.iter().chain(shuffled.iter()).step_by(7).collect();
        for a in &sample {
            for b in &sample {
                let same = canonical_form(a).unwrap().code == canonical_form(b).unwrap().code;
                assert_eq!(same, isomorphic(a, b), "{a:?} vs {b:?}");
            }
        }
        for t in &shuffled {
            let canon = canonical_form(t).unwrap();
            assert_eq!(canonical_form(&canon.parents).unwrap().parents, canon.parents);
        }
    }

    #[test]
    fn extend_examples() {
        let c = cat(5);
        let e = c.extend(id(&c, "g_1"), 0);
        assert_eq!(e.class, id(&c, "g_2.1"));
        assert_eq!(c.extend(id(&c, "g_3.(1,1)"), 1).class, id(&c, "g_4.(2.1,1)"));
        let mut image: HashSet<ClassId> = HashSet::new();
        for g in c.classes().iter().filter(|g| g.size() < 5) {
            for x in 0..g.size() {
                image.insert(c.extend(g.id, x).class);
            }
        }
        let expected: HashSet<ClassId> = c.classes().iter().filter(|g| g.size() > 1).map(|g| g.id).collect();
        assert_eq!(image, expected);
    }

    #[test]
    fn phi_examples() {
        let c = cat(4);
        let g3 = id(&c, "g_3.(1,1)");
        assert_eq!(c.phi(g3, id(&c, "g_4.(2.1,1)")), [1, 2].into_iter().collect());
        assert!(c.phi(g3, id(&c, "g_4.3.2.1")).is_empty());
        assert_eq!(c.phi(id(&c, "g_1"), id(&c, "g_2.1")), BlockSet::single(0));
        assert!(c.phi(id(&c, "g_1"), id(&c, "g_3.2.1")).is_empty());
        for g in c.classes().iter().filter(|g| g.size() < 4) {
            for h in c.classes() {
                let phi = c.phi(g.id, h.id);
                for x in 0..g.size() {
                    assert_eq!(phi.contains(x), c.extend(g.id, x).class == h.id);
                }
            }
        }
    }

    #[test]
    fn gamma_examples() {
        let c = cat(4);
        let g = id(&c, "g_4.3.(1,1)");
        let full = c.gamma_subgraph(g, 0);
        assert_eq!(full.class, g);
        assert_eq!(full.kept, BlockSet::full(4));
        let sub = c.gamma_subgraph(g, 1);
        assert_eq!(sub.class, id(&c, "g_3.(1,1)"));
        assert_eq!(sub.kept, [1, 2, 3].into_iter().collect());
        assert_eq!(c.gamma_subgraph(id(&c, "g_4.3.2.1"), 3).class, id(&c, "g_1"));
    }

    #[test]
    fn ancestors_and_degrees() {
        let c = cat(4);
        let chain = c.by_name("g_4.3.2.1").unwrap();
        assert!(chain.ancestors(0).is_empty());
        assert_eq!(chain.ancestors(3), [0, 1, 2].into_iter().collect());
        let fork = c.by_name("g_4.(2.1,1)").unwrap();
        assert_eq!(fork.ancestors(2), [0, 1].into_iter().collect());
        assert_eq!(fork.degree_counts(1), (1, 1));
        assert_eq!(fork.degree_counts(0), (3, 0));
        let star = c.by_name("g_4.(1,1,1)").unwrap();
        assert_eq!(star.degree_counts(1), (0, 2));
        for g in c.classes() {
            for x in 0..g.size() {
                let (d, cc) = g.degree_counts(x);
                assert_eq!(d + cc + g.ancestors(x).len() + 1, g.size());
            }
        }
    }

    #[test]
    fn orbit_examples() {
        let c = cat(6);
        let star = c.by_name("g_4.(1,1,1)").unwrap();
        assert_eq!(star.orbit_labels(), &[0, 1, 1, 1]);
        assert_eq!(c.by_name("g_4.(2.1,1)").unwrap().orbit_reps(), vec![0, 1, 2, 3]);
        for name in ["g_2.1", "g_3.2.1", "g_4.3.2.1", "g_5.4.3.2.1"] {
            let g = c.by_name(name).unwrap();
            assert_eq!(g.orbit_reps().len(), g.size());
            assert_eq!(g.automorphisms().len(), 1);
        }
        // orbit soundness: labels constant along every automorphism, and
        // every automorphism is a genuine isomorphism onto itself
        for g in c.classes() {
            for sigma in g.automorphisms() {
                for x in 0..g.size() {
                    assert_eq!(g.orbit_of(x), g.orbit_of(sigma[x]));
                    assert_eq!(g.parent(x).map(|p| sigma[p]), g.parent(sigma[x]));
                    assert_eq!(g.degree_counts(x), g.degree_counts(sigma[x]));
                }
            }
        }
    }

    #[test]
    fn automorphism_group_matches_brute_force() {
        let c = cat(6);
        for g in c.classes() {
            let n = g.size();
            let mut count = 0;
            let mut perm: Vec<usize> = (0..n).collect();
            permute(&mut perm, 1, &mut |p| {
                if (0..n).all(|x| g.parent(x).map(|q| p[q]) == g.parent(p[x])) {
                    count += 1;
                }
            });
            assert_eq!(count, g.automorphisms().len(), "{}", g.name());
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn lcr_tip_examples() {
        let c = cat(4);
        assert_eq!(c.by_name("g_2.1").unwrap().lcr_tip(), 1);
        let g = c.by_name("g_4.3.(1,1)").unwrap();
        assert_eq!(g.lcr_tip(), 2);
        assert_eq!(g.orbit_of(3), 2);
        assert_eq!(c.by_name("g_4.(2.1,1)").unwrap().lcr_tip(), 2);
    }

    #[test]
    fn root_connected_candidates() {
        let c = cat(4);
        assert_eq!(c.root_connected_subgraphs(id(&c, "g_1")).len(), 2);
        assert_eq!(c.root_connected_subgraphs(id(&c, "g_2.1")).len(), 3);
        let star = id(&c, "g_4.(1,1,1)");
        // oracle: count subsets of the star containing the root, up to orbit
        // (only the number of leaves matters)
        let mut sizes = HashSet::new();
        for bits in 0u16..16 {
            let s = BlockSet::from_bits(bits);
            if s.contains(0) {
                sizes.insert(s.len());
            }
        }
        assert_eq!(c.root_connected_subgraphs(star).len(), sizes.len() + 1);
        for g in c.classes() {
            let cands = c.root_connected_subgraphs(g.id);
            assert!(cands[0].is_null());
            assert!(cands.iter().any(|k| k.representative().blocks == g.blocks()));
            let total: usize = cands.iter().map(|k| k.members.len()).sum();
            let brute = (0u32..1 << g.size())
                .filter(|&b| {
                    let s = BlockSet::from_bits(b as u16);
                    b == 0 || is_root_connected(g, s)
                })
                .count();
            assert_eq!(total, brute);
            for k in cands.iter().skip(1) {
                for m in &k.members {
                    let cls = c.class(k.class.unwrap());
                    for (local, &global) in m.to_global.iter().enumerate() {
                        let lp = cls.parent(local).map(|p| m.to_global[p]);
                        assert_eq!(lp, g.parent(global));
                    }
                }
            }
        }
    }

    #[test]
    fn root_component_drops_disconnected_blocks() {
        let c = cat(4);
        let g = id(&c, "g_4.3.(1,1)");
        let comp = c.root_component(g, [0, 2, 3].into_iter().collect());
        assert_eq!(comp, BlockSet::single(0));
        assert!(c.root_component(g, BlockSet::single(3)).is_empty());
    }

    #[test]
    fn cap_is_enforced() {
        assert!(Catalogue::enumerate(9).is_err());
        assert!(Catalogue::enumerate_with_cap(5, 4).is_err());
    }
}
