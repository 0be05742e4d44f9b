//! The bounded-degree sparse spanner built on the hierarchy.
//!
//! Cluster-level edges come in three kinds:
//!
//! * type I: same-level clusters `(p, l)`, `(q, l)` with `|pq| <= lambda R^l`.
//!   For a pair of chains these levels form an interval `[lo, hi]` with
//!   `hi = min(top(p), top(q))` and `lo = ceil(log_R(|pq| / lambda))`;
//! * parent edges from a chain top `(q, top(q))` to its parent cluster;
//! * chain links `(p, l+1) - (p, l)` between consecutive copies of a center.
//!
//! Each chain is cut into blocks of `block_len` levels. Every cluster is
//! mapped to a representative point (constant per block) by the next-block
//! rule, and the point graph S1 connects representatives. Parallel cluster
//! edges are merged with reference counts; self-loops are dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::config::Config;
use crate::geometry::{snapped_log_ceil, BucketCoord, Bucketing, PairKey, PointId, PointStore};
use crate::hierarchy::{Hierarchy, HierarchyDelta};

/// Levels `[lo, hi]` at which two chains have a type-I edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

impl Interval {
    pub fn width(&self) -> i64 {
        self.hi - self.lo + 1
    }
}

/// A non-empty block of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockInfo {
    /// Lowest `(level, neighbor)` type-I contact inside the block.
    pub witness: (i64, PointId),
    /// Representative of every cluster of this block.
    pub rep: PointId,
}

/// Block structure and next-block assignment of one chain. Blocks absent
/// from the map are empty and represented by the center itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainAssignment {
    pub blocks: BTreeMap<i64, BlockInfo>,
}

impl ChainAssignment {
    pub fn rep(&self, center: PointId, block: i64) -> PointId {
        self.blocks.get(&block).map_or(center, |b| b.rep)
    }

    /// Non-empty blocks of one parity, top-down.
    pub fn parity_list(&self, parity: i64) -> Vec<i64> {
        self.blocks
            .keys()
            .rev()
            .copied()
            .filter(|b| b.rem_euclid(2) == parity)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Source {
    TypeI(PairKey),
    Parent(PointId),
    Chain(PointId),
}

/// One cluster edge mapped to a point pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Contribution {
    level: i64,
    pair: PairKey,
    index: usize,
}

/// Potential pairs are deduplicated per (pair of chains, bucket index).
type GroupKey = (PairKey, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeEvent {
    Added(PairKey),
    Removed(PairKey),
    Reassigned { from: PairKey, to: PairKey },
}

/// Changes of S1 (`s1`) and of the potential-pair set (`potential`) caused
/// by one hierarchy update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct S1Delta {
    pub s1: Vec<EdgeEvent>,
    pub potential: Vec<EdgeEvent>,
}

impl S1Delta {
    /// Recourse of S1: one per added, removed or reassigned point edge.
    pub fn s1_events(&self) -> usize {
        self.s1.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpanner {
    lambda: f64,
    ln_r: f64,
    block_len: i64,
    bucketing: Bucketing,
    contacts: BTreeMap<PointId, BTreeMap<PointId, Interval>>,
    assignment: BTreeMap<PointId, ChainAssignment>,
    contributions: BTreeMap<Source, Vec<Contribution>>,
    s1: BTreeMap<PairKey, u32>,
    adjacency: BTreeMap<PointId, BTreeSet<PointId>>,
    groups: BTreeMap<GroupKey, BTreeMap<(i64, PairKey), u32>>,
    /// Chain pair each contributing source is grouped under.
    group_keys: BTreeMap<Source, PairKey>,
    potential: BTreeMap<PairKey, u32>,
}

/// Refcount bookkeeping for one update: remembers each key's value before
/// the first change.
struct Tally<K: Ord + Copy> {
    before: BTreeMap<K, u32>,
    reassign: Vec<(K, K)>,
}

impl<K: Ord + Copy> Tally<K> {
    fn new() -> Self {
        Tally {
            before: BTreeMap::new(),
            reassign: Vec::new(),
        }
    }

    fn bump(&mut self, counts: &mut BTreeMap<K, u32>, key: K, up: bool) {
        let cur = counts.get(&key).copied().unwrap_or(0);
        self.before.entry(key).or_insert(cur);
        let next = if up {
            cur + 1
        } else {
            cur.checked_sub(1).expect("refcount underflow")
        };
        if next == 0 {
            counts.remove(&key);
        } else {
            counts.insert(key, next);
        }
    }

    fn events(self, counts: &BTreeMap<K, u32>, wrap: impl Fn(K) -> PairKey) -> Vec<EdgeEvent> {
        let mut added = BTreeSet::new();
        let mut removed = BTreeSet::new();
        for (k, b) in &self.before {
            let now = counts.get(k).copied().unwrap_or(0);
            if *b == 0 && now > 0 {
                added.insert(*k);
            } else if *b > 0 && now == 0 {
                removed.insert(*k);
            }
        }
        let mut out = Vec::new();
        let mut cands = self.reassign;
        cands.sort();
        for (from, to) in cands {
            if removed.contains(&from) && added.contains(&to) {
                removed.remove(&from);
                added.remove(&to);
                out.push(EdgeEvent::Reassigned {
                    from: wrap(from),
                    to: wrap(to),
                });
            }
        }
        out.extend(removed.into_iter().map(|k| EdgeEvent::Removed(wrap(k))));
        out.extend(added.into_iter().map(|k| EdgeEvent::Added(wrap(k))));
        out
    }
}

impl SparseSpanner {
    pub fn new(config: &Config) -> Self {
        SparseSpanner {
            lambda: config.lambda,
            ln_r: config.r.ln(),
            block_len: config.block_len as i64,
            bucketing: config.bucketing(),
            contacts: BTreeMap::new(),
            assignment: BTreeMap::new(),
            contributions: BTreeMap::new(),
            s1: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            groups: BTreeMap::new(),
            group_keys: BTreeMap::new(),
            potential: BTreeMap::new(),
        }
    }

    /// Builds the spanner for `hierarchy` from scratch.
    pub fn build(config: &Config, hierarchy: &Hierarchy, points: &PointStore) -> Self {
        let mut s = SparseSpanner::new(config);
        let ids: Vec<PointId> = hierarchy.chains().map(|(p, _)| p).collect();
        for (i, &p) in ids.iter().enumerate() {
            s.contacts.entry(p).or_default();
            for &q in &ids[i + 1..] {
                if let Some(iv) = s.compute_interval(hierarchy, points, p, q) {
                    s.contacts.entry(p).or_default().insert(q, iv);
                    s.contacts.entry(q).or_default().insert(p, iv);
                }
            }
        }
        for &p in &ids {
            let a = s.compute_assignment(p);
            s.assignment.insert(p, a);
        }
        let mut sources = Vec::new();
        for &p in &ids {
            sources.push(Source::Chain(p));
            sources.push(Source::Parent(p));
            for &q in s.contacts[&p].keys() {
                if p < q {
                    sources.push(Source::TypeI(PairKey(p, q)));
                }
            }
        }
        s.recompute_sources(hierarchy, points, sources);
        s
    }

    pub fn block_len(&self) -> i64 {
        self.block_len
    }

    pub fn block_of(&self, level: i64) -> i64 {
        level.div_euclid(self.block_len)
    }

    fn compute_interval(&self, hierarchy: &Hierarchy, points: &PointStore, p: PointId, q: PointId) -> Option<Interval> {
        let hi = hierarchy.chain_top_level(p)?.min(hierarchy.chain_top_level(q)?);
        let d = points.distance(p, q);
        let lo = snapped_log_ceil(d / self.lambda, self.ln_r);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    fn compute_assignment(&self, p: PointId) -> ChainAssignment {
        let mut witness: BTreeMap<i64, (i64, PointId)> = BTreeMap::new();
        for (&q, iv) in self.contacts.get(&p).into_iter().flatten() {
            for b in self.block_of(iv.lo)..=self.block_of(iv.hi) {
                let cand = (iv.lo.max(b * self.block_len), q);
                let w = witness.entry(b).or_insert(cand);
                if cand < *w {
                    *w = cand;
                }
            }
        }
        let mut out = ChainAssignment::default();
        for parity in 0..2 {
            let list: Vec<i64> = witness
                .keys()
                .rev()
                .copied()
                .filter(|b| b.rem_euclid(2) == parity)
                .collect();
            for (j, &b) in list.iter().enumerate() {
                let rep = match list.get(j + 1) {
                    Some(next) => witness[next].1,
                    None => p,
                };
                out.blocks.insert(
                    b,
                    BlockInfo {
                        witness: witness[&b],
                        rep,
                    },
                );
            }
        }
        out
    }

    /// Representative of the (possibly implicit) cluster `(p, level)`.
    pub fn representative(&self, p: PointId, level: i64) -> PointId {
        let b = self.block_of(level);
        self.assignment.get(&p).map_or(p, |a| a.rep(p, b))
    }

    fn pair_index(&self, points: &PointStore, pair: PairKey) -> usize {
        self.bucketing
            .coord(points.distance(pair.0, pair.1))
            .expect("distinct points")
            .index
    }

    fn compute_source(&self, hierarchy: &Hierarchy, points: &PointStore, s: Source) -> Vec<Contribution> {
        let mut out = Vec::new();
        let push = |level: i64, a: PointId, b: PointId, out: &mut Vec<Contribution>| {
            if a != b {
                let pair = PairKey::new(a, b);
                out.push(Contribution {
                    level,
                    pair,
                    index: self.pair_index(points, pair),
                });
            }
        };
        match s {
            Source::TypeI(PairKey(p, q)) => {
                if let Some(iv) = self.contacts.get(&p).and_then(|m| m.get(&q)) {
                    for l in iv.lo..=iv.hi {
                        push(l, self.representative(p, l), self.representative(q, l), &mut out);
                    }
                }
            }
            Source::Parent(c) => {
                if let Some(chain) = hierarchy.chain(c) {
                    if let Some(parent) = chain.parent {
                        let l = chain.top;
                        push(
                            l,
                            self.representative(parent, l + 1),
                            self.representative(c, l),
                            &mut out,
                        );
                    }
                }
            }
            Source::Chain(p) => {
                if let (Some(chain), Some(a)) = (hierarchy.chain(p), self.assignment.get(&p)) {
                    let boundaries: BTreeSet<i64> = a.blocks.keys().flat_map(|&b| [b, b + 1]).collect();
                    for b in boundaries {
                        let lvl = b * self.block_len;
                        if lvl <= chain.top {
                            push(lvl - 1, a.rep(p, b), a.rep(p, b - 1), &mut out);
                        }
                    }
                }
            }
        }
        out
    }

    /// The pair of chains a source's cluster edges belong to. Old entries
    /// are always removed under the key recorded when they were added.
    fn chain_pair(&self, hierarchy: &Hierarchy, s: Source) -> Option<PairKey> {
        match s {
            Source::TypeI(k) => Some(k),
            Source::Chain(p) => Some(PairKey(p, p)),
            Source::Parent(c) => hierarchy.chain(c).and_then(|ch| ch.parent).map(|q| PairKey::new(q, c)),
        }
    }

    fn recompute_sources(
        &mut self,
        hierarchy: &Hierarchy,
        points: &PointStore,
        sources: impl IntoIterator<Item = Source>,
    ) -> S1Delta {
        let mut s1_tally = Tally::new();
        let mut pot_tally = Tally::new();
        let mut group_before: BTreeMap<GroupKey, Option<PairKey>> = BTreeMap::new();
        let mut group_of_source: BTreeMap<Source, PairKey> = std::mem::take(&mut self.group_keys);

        let sources: BTreeSet<Source> = sources.into_iter().collect();
        for s in sources {
            let new = self.compute_source(hierarchy, points, s);
            let old = self.contributions.remove(&s).unwrap_or_default();
            let new_key = self.chain_pair(hierarchy, s);
            let old_key = group_of_source.get(&s).copied();
            if new == old && new_key == old_key {
                if !new.is_empty() {
                    self.contributions.insert(s, new);
                }
                continue;
            }
            for c in &old {
                s1_tally.bump(&mut self.s1, c.pair, false);
                self.unlink(c.pair);
                let gk = (old_key.expect("contributing source has a group"), c.index);
                let entry = self.groups.entry(gk).or_default();
                group_before
                    .entry(gk)
                    .or_insert_with(|| entry.keys().next().map(|x| x.1));
                let n = entry.get_mut(&(c.level, c.pair)).expect("group entry");
                *n -= 1;
                if *n == 0 {
                    entry.remove(&(c.level, c.pair));
                }
                if entry.is_empty() {
                    self.groups.remove(&gk);
                }
            }
            for c in &new {
                s1_tally.bump(&mut self.s1, c.pair, true);
                self.link(c.pair);
                let gk = (new_key.expect("contributing source has a group"), c.index);
                let entry = self.groups.entry(gk).or_default();
                group_before
                    .entry(gk)
                    .or_insert_with(|| entry.keys().next().map(|x| x.1));
                *entry.entry((c.level, c.pair)).or_insert(0) += 1;
            }
            for o in &old {
                if let Some(n) = new.iter().find(|n| n.level == o.level) {
                    if n.pair != o.pair {
                        s1_tally.reassign.push((o.pair, n.pair));
                    }
                }
            }
            if new.is_empty() {
                group_of_source.remove(&s);
            } else {
                group_of_source.insert(s, new_key.unwrap());
                self.contributions.insert(s, new);
            }
        }
        self.group_keys = group_of_source;

        for (gk, before) in group_before {
            let after = self.groups.get(&gk).and_then(|g| g.keys().next().map(|x| x.1));
            if before == after {
                continue;
            }
            if let Some(b) = before {
                pot_tally.bump(&mut self.potential, b, false);
            }
            if let Some(a) = after {
                pot_tally.bump(&mut self.potential, a, true);
            }
            if let (Some(b), Some(a)) = (before, after) {
                pot_tally.reassign.push((b, a));
            }
        }
        S1Delta {
            s1: s1_tally.events(&self.s1, |k| k),
            potential: pot_tally.events(&self.potential, |k| k),
        }
    }

    fn link(&mut self, pair: PairKey) {
        if self.s1.get(&pair) == Some(&1) {
            self.adjacency.entry(pair.0).or_default().insert(pair.1);
            self.adjacency.entry(pair.1).or_default().insert(pair.0);
        }
    }

    fn unlink(&mut self, pair: PairKey) {
        if !self.s1.contains_key(&pair) {
            for (a, b) in [(pair.0, pair.1), (pair.1, pair.0)] {
                if let Some(set) = self.adjacency.get_mut(&a) {
                    set.remove(&b);
                    if set.is_empty() {
                        self.adjacency.remove(&a);
                    }
                }
            }
        }
    }

    /// Brings the spanner in line with `hierarchy` (already updated by
    /// `delta`) and returns the exact S1 and potential-pair diff.
    pub fn apply_hierarchy_delta(
        &mut self,
        hierarchy: &Hierarchy,
        points: &PointStore,
        delta: &HierarchyDelta,
    ) -> S1Delta {
        let touched = delta.touched_chains();
        let reparented = delta.reparented();

        let mut changed_pairs: BTreeSet<PairKey> = BTreeSet::new();
        let mut affected: BTreeSet<PointId> = touched.clone();
        for &p in &touched {
            let old = self.contacts.remove(&p).unwrap_or_default();
            for q in old.keys() {
                if let Some(m) = self.contacts.get_mut(q) {
                    m.remove(&p);
                }
            }
            let mut new = BTreeMap::new();
            if hierarchy.contains(p) {
                for (q, _) in hierarchy.chains() {
                    if q != p {
                        if let Some(iv) = self.compute_interval(hierarchy, points, p, q) {
                            new.insert(q, iv);
                        }
                    }
                }
            }
            for q in old.keys().chain(new.keys()) {
                if old.get(q) != new.get(q) {
                    changed_pairs.insert(PairKey::new(p, *q));
                    affected.insert(*q);
                }
            }
            for (q, iv) in &new {
                self.contacts.entry(*q).or_default().insert(p, *iv);
            }
            if hierarchy.contains(p) {
                self.contacts.insert(p, new);
            }
        }

        let mut reassigned: BTreeSet<PointId> = BTreeSet::new();
        for &p in &affected {
            if !hierarchy.contains(p) {
                self.assignment.remove(&p);
                reassigned.insert(p);
                continue;
            }
            let a = self.compute_assignment(p);
            if self.assignment.get(&p) != Some(&a) {
                self.assignment.insert(p, a);
                reassigned.insert(p);
            }
        }

        let mut sources: BTreeSet<Source> = changed_pairs.into_iter().map(Source::TypeI).collect();
        for &p in reassigned.iter().chain(touched.iter()) {
            sources.insert(Source::Chain(p));
            sources.insert(Source::Parent(p));
            for &q in self.contacts.get(&p).into_iter().flat_map(|m| m.keys()) {
                sources.insert(Source::TypeI(PairKey::new(p, q)));
            }
            for c in hierarchy.children_of(p) {
                sources.insert(Source::Parent(c));
            }
        }
        sources.extend(reparented.into_iter().map(Source::Parent));
        self.recompute_sources(hierarchy, points, sources)
    }

    pub fn type_i_interval(&self, p: PointId, q: PointId) -> Option<Interval> {
        self.contacts.get(&p).and_then(|m| m.get(&q)).copied()
    }

    pub fn contacts_of(&self, p: PointId) -> impl Iterator<Item = (PointId, Interval)> + '_ {
        self.contacts.get(&p).into_iter().flatten().map(|(q, iv)| (*q, *iv))
    }

    /// Block structure and representatives of chain `p`.
    pub fn next_block_assign(&self, p: PointId) -> ChainAssignment {
        self.assignment.get(&p).cloned().unwrap_or_default()
    }

    pub fn assignments(&self) -> impl Iterator<Item = (PointId, &ChainAssignment)> + '_ {
        self.assignment.iter().map(|(p, a)| (*p, a))
    }

    /// Number of (chain, non-empty block) entries represented by each point.
    pub fn repetition_counts(&self) -> BTreeMap<PointId, usize> {
        let mut out = BTreeMap::new();
        for a in self.assignment.values() {
            for b in a.blocks.values() {
                *out.entry(b.rep).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn s1_degree(&self, q: PointId) -> usize {
        self.adjacency.get(&q).map_or(0, |s| s.len())
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.values().map(|s| s.len()).max().unwrap_or(0)
    }

    pub fn s1_edges(&self) -> impl Iterator<Item = (PairKey, u32)> + '_ {
        self.s1.iter().map(|(k, v)| (*k, *v))
    }

    pub fn s1_len(&self) -> usize {
        self.s1.len()
    }

    pub fn neighbors(&self, q: PointId) -> impl Iterator<Item = PointId> + '_ {
        self.adjacency.get(&q).into_iter().flatten().copied()
    }

    pub fn is_potential(&self, pair: PairKey) -> bool {
        self.potential.contains_key(&pair)
    }

    /// Potential pairs with their bucket coordinates, sorted by pair.
    pub fn potential_pairs(&self, points: &PointStore) -> Vec<(PairKey, BucketCoord)> {
        self.potential
            .keys()
            .map(|k| {
                let coord = self
                    .bucketing
                    .coord(points.distance(k.0, k.1))
                    .expect("distinct points");
                (*k, coord)
            })
            .collect()
    }

    /// `s1 <a> <b> <refcount>` per edge, sorted.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, n) in &self.s1 {
            let _ = writeln!(out, "s1 {} {} {}", k.0, k.1, n);
        }
        out
    }

    /// Structural equality of the maintained state (used against a rebuild).
    pub fn same_state(&self, other: &SparseSpanner) -> bool {
        self.contacts == other.contacts
            && self.assignment == other.assignment
            && self.s1 == other.s1
            && self.adjacency == other.adjacency
            && self.groups == other.groups
            && self.potential == other.potential
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::ChainInfo;

    fn desk() -> Config {
        Config::desk_default(2)
    }

    fn grow(coords: &[[f64; 2]]) -> (PointStore, Hierarchy, SparseSpanner, Vec<S1Delta>) {
        let config = desk();
        let mut pts = PointStore::new(2);
        let mut h = Hierarchy::new(config.r);
        let mut sp = SparseSpanner::new(&config);
        let mut deltas = Vec::new();
        for c in coords {
            let p = pts.insert(c.to_vec()).unwrap();
            let hd = h.insert(&pts, p);
            deltas.push(sp.apply_hierarchy_delta(&h, &pts, &hd));
        }
        (pts, h, sp, deltas)
    }

    fn chains(layout: &[(u64, i64, Option<u64>)]) -> BTreeMap<PointId, ChainInfo> {
        layout
            .iter()
            .map(|&(p, top, parent)| {
                (
                    PointId(p),
                    ChainInfo {
                        low: top,
                        top,
                        parent: parent.map(PointId),
                    },
                )
            })
            .collect()
    }

    #[test]
    fn two_points_share_one_edge_with_interval_refcount() {
        let (_, h, sp, deltas) = grow(&[[0.0, 0.0], [10.0, 0.0]]);
        let (p0, p1) = (PointId(0), PointId(1));
        let iv = sp.type_i_interval(p0, p1).unwrap();
        assert_eq!(iv.lo, 1);
        assert_eq!(iv.hi, h.chain(p0).unwrap().top.min(h.chain(p1).unwrap().top));
        // One cluster edge per level of the interval, plus the parent edge
        // from p1's top cluster to p0's.
        let edges: Vec<_> = sp.s1_edges().collect();
        assert_eq!(edges, vec![(PairKey::new(p0, p1), iv.width() as u32 + 1)]);
        assert_eq!(deltas[1].s1, vec![EdgeEvent::Added(PairKey::new(p0, p1))]);
        assert_eq!(sp.s1_degree(p0), 1);
        assert_eq!(sp.s1_degree(p1), 1);
    }

    #[test]
    fn deleting_the_second_point_removes_the_edge() {
        let (mut pts, mut h, mut sp, _) = grow(&[[0.0, 0.0], [10.0, 0.0]]);
        let p1 = PointId(1);
        let hd = h.delete(&pts, p1);
        pts.remove(p1).unwrap();
        let d = sp.apply_hierarchy_delta(&h, &pts, &hd);
        assert_eq!(d.s1, vec![EdgeEvent::Removed(PairKey::new(PointId(0), p1))]);
        assert_eq!(sp.s1_len(), 0);
        assert_eq!(sp.s1_degree(PointId(0)), 0);
    }

    #[test]
    fn far_apart_chains_have_no_contact() {
        // Insertion always leaves two points in type-I range; a hand-built
        // hierarchy with a low second chain is needed for the empty case.
        let mut pts = PointStore::new(2);
        pts.insert(vec![0.0, 0.0]).unwrap();
        pts.insert(vec![1000.0, 0.0]).unwrap();
        let h = Hierarchy::from_chains(2.0, chains(&[(0, 10, None), (1, 3, Some(0))]));
        let sp = SparseSpanner::build(&desk(), &h, &pts);
        assert!(sp.type_i_interval(PointId(0), PointId(1)).is_none());
        assert!(sp.contacts_of(PointId(0)).next().is_none());
        // Only the parent edge (1, 3) -> (0, 4) survives.
        let edges: Vec<_> = sp.s1_edges().collect();
        assert_eq!(edges, vec![(PairKey::new(PointId(0), PointId(1)), 1)]);
    }

    #[test]
    fn isolated_chain_represents_itself() {
        let (_, _, sp, _) = grow(&[[0.0, 0.0]]);
        let p = PointId(0);
        assert!(sp.next_block_assign(p).blocks.is_empty());
        for l in -10..10 {
            assert_eq!(sp.representative(p, l), p);
        }
    }

    #[test]
    fn single_nonempty_block_is_the_last_of_its_list() {
        let (_, _, sp, _) = grow(&[[0.0, 0.0], [10.0, 0.0]]);
        let a = sp.next_block_assign(PointId(0));
        for parity in [0, 1] {
            if let Some(&last) = a.parity_list(parity).last() {
                assert_eq!(a.rep(PointId(0), last), PointId(0));
            }
        }
    }

    #[test]
    fn upper_block_is_represented_by_lower_witness() {
        // blockLen = 3: q touches p only at level 6 (block 2), r only at
        // level 12 (block 4).
        let mut pts = PointStore::new(2);
        pts.insert(vec![0.0, 0.0]).unwrap();
        pts.insert(vec![400.0, 0.0]).unwrap();
        pts.insert(vec![-20000.0, 0.0]).unwrap();
        let h = Hierarchy::from_chains(2.0, chains(&[(0, 14, None), (1, 6, Some(0)), (2, 12, Some(0))]));
        let sp = SparseSpanner::build(&desk(), &h, &pts);
        let (p, q, r) = (PointId(0), PointId(1), PointId(2));
        assert_eq!(sp.block_len(), 3);
        assert_eq!(sp.type_i_interval(p, q), Some(Interval { lo: 6, hi: 6 }));
        assert_eq!(sp.type_i_interval(p, r), Some(Interval { lo: 12, hi: 12 }));
        let a = sp.next_block_assign(p);
        assert_eq!(a.parity_list(0), vec![4, 2]);
        assert_eq!(a.rep(p, 4), q);
        assert_eq!(a.rep(p, 2), p);
        assert_eq!(sp.representative(p, 12), q);
        assert_eq!(sp.representative(p, 6), p);
        assert_eq!(sp.representative(p, 9), p);
    }

    fn scatter(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = crate::workload::XorShift64Star::new(seed);
        (0..n)
            .map(|_| [rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)])
            .collect()
    }

    #[test]
    fn incremental_state_matches_rebuild() {
        let (mut pts, mut h, mut sp, _) = grow(&scatter(60, 7));
        let config = desk();
        assert!(sp.same_state(&SparseSpanner::build(&config, &h, &pts)));
        for id in [3u64, 17, 40, 0, 59] {
            let hd = h.delete(&pts, PointId(id));
            pts.remove(PointId(id)).unwrap();
            sp.apply_hierarchy_delta(&h, &pts, &hd);
            assert!(
                sp.same_state(&SparseSpanner::build(&config, &h, &pts)),
                "after deleting {id}"
            );
        }
    }

    #[test]
    fn replaying_deltas_reproduces_s1() {
        let (_, _, sp, deltas) = grow(&scatter(50, 11));
        let mut edges = BTreeSet::new();
        for d in &deltas {
            for ev in &d.s1 {
                match *ev {
                    EdgeEvent::Added(k) => assert!(edges.insert(k)),
                    EdgeEvent::Removed(k) => assert!(edges.remove(&k)),
                    EdgeEvent::Reassigned { from, to } => {
                        assert!(edges.remove(&from));
                        assert!(edges.insert(to));
                    }
                }
            }
        }
        assert_eq!(edges, sp.s1_edges().map(|(k, _)| k).collect());
    }

    #[test]
    fn one_potential_pair_per_chain_pair_and_index() {
        let (pts, _, sp, _) = grow(&scatter(80, 5));
        let mut merged = 0;
        for entries in sp.groups.values() {
            let (_, lowest) = *entries.keys().next().unwrap();
            assert!(sp.is_potential(lowest));
            if entries.keys().any(|&(_, k)| k != lowest) {
                merged += 1;
            }
        }
        assert!(merged > 0, "instance never exercised deduplication");
        let potential = sp.potential_pairs(&pts);
        assert!(potential.len() < sp.s1_len());
        assert!(potential.iter().all(|(k, _)| sp.s1.contains_key(k)));
    }

    #[test]
    fn degree_matches_adjacency_recount() {
        let (pts, _, sp, _) = grow(&scatter(70, 3));
        for p in pts.alive() {
            let recount = sp.s1_edges().filter(|(k, _)| k.contains(p)).count();
            assert_eq!(sp.s1_degree(p), recount);
        }
        assert!(sp.max_degree() as f64 <= desk().d_max);
    }

    #[test]
    fn dump_lists_sorted_edges() {
        let (_, _, sp, _) = grow(&[[0.0, 0.0], [10.0, 0.0]]);
        let iv = sp.type_i_interval(PointId(0), PointId(1)).unwrap();
        assert_eq!(sp.dump(), format!("s1 0 1 {}\n", iv.width() + 1));
    }
}
