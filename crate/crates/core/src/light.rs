//! The bucketed light spanner.
//!
//! Potential pairs (the S1 edges, deduplicated) are split by bucket index;
//! bucket `S_i` holds the members of index `i`. Membership is driven by the
//! extended-path distance `d_i*`: the shortest `u`-`v` path in the complete
//! graph restricted to edges of strictly smaller size, where members of
//! `S_i` weigh their length and everything else `(1+eps)` times it.
//!
//! * Invariant 1: a non-member has `d_i* < (1+eps) |uv|`;
//! * Invariant 2: a member has `d_i* > (1+eps') |uv|`.
//!
//! Statuses are cached per pair and invalidated geometrically: a path of
//! length at most `(1+eps)|uv|` only visits points inside the ellipse with
//! foci `u`, `v` and that sum of focal distances.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{euclidean, BucketCoord, Bucketing, PairKey, PointId, PointStore};
use crate::sparse::{EdgeEvent, S1Delta};

/// Relative tolerance of every invariant comparison; values within it of a
/// threshold count as satisfying the invariant.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// `d*` search radius, as a multiple of `|uv|`, used by [`LightSpanner::potential_report`].
pub const DIAGNOSTIC_RADIUS: f64 = 3.0;

/// Slack on the ellipse test used for invalidation, well above float noise.
const ELLIPSE_SLACK: f64 = 1e-7;

/// Inv2 sorts first: within a size, removals are processed before additions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationKind {
    Inv2,
    Inv1,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Inv1 => "Inv1",
            ViolationKind::Inv2 => "Inv2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub pair: PairKey,
    pub index: usize,
    pub size: i64,
    #[serde(serialize_with = "crate::oracle::serialize_len")]
    pub dstar: f64,
    pub dist: f64,
}

impl Violation {
    /// `viol <Inv1|Inv2> <i> <a> <b> <dstar> <dist>`
    pub fn line(&self) -> String {
        format!(
            "viol {} {} {} {} {} {}",
            self.kind,
            self.index,
            self.pair.0,
            self.pair.1,
            fmt_len(self.dstar),
            fmt_len(self.dist)
        )
    }
}

pub(crate) fn fmt_len(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    coord: BucketCoord,
    len: f64,
    member: bool,
    /// Cached capped `d*`; `None` while dirty.
    dstar: Option<f64>,
    /// False once `dstar` is only a one-sided bound that still certifies
    /// the pair's current status.
    exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MaintenanceSummary {
    /// Membership changes made by the fixes.
    pub events: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Potential of the touched bucket around one maintenance iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiStep {
    pub kind: ViolationKind,
    pub pair: PairKey,
    pub index: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialReport {
    pub phi_per_bucket: Vec<f64>,
    pub phi: f64,
    pub degree_slack: f64,
    pub phi_star: f64,
    /// Pairs whose `d*` exceeded the diagnostic radius and were clamped.
    pub clamped: Vec<PairKey>,
}

/// Result of one point update on the light spanner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LightUpdate {
    /// Membership changes made by the update procedure itself (before
    /// maintenance), counted per add or remove.
    pub update_ops: usize,
    pub maintenance: MaintenanceSummary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapKey(f64);

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Direction in which a change can move `d*`: adding points or member edges
/// only shortens extended paths, removing them only lengthens them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shift {
    Down,
    Up,
}

#[derive(Debug, Clone)]
pub struct LightSpanner {
    eps: f64,
    eps_prime: f64,
    c_phi: f64,
    p_max: f64,
    d_max: f64,
    bucketing: Bucketing,
    registry: BTreeMap<PairKey, Entry>,
    /// Registered pairs per bucket index, ordered by size.
    by_index: Vec<BTreeMap<(i64, PairKey), f64>>,
    /// Member adjacency per bucket index.
    members: Vec<BTreeMap<PointId, BTreeSet<PointId>>>,
    dirty: BTreeSet<(i64, usize, PairKey)>,
    violations: BTreeSet<(i64, ViolationKind, usize, PairKey)>,
    /// Membership of every pair touched since [`LightSpanner::begin_op`],
    /// as it was at that moment.
    op_start: BTreeMap<PairKey, bool>,
    membership_ops: usize,
    events_since_converged: usize,
    trace_phi: bool,
    phi_trace: Vec<PhiStep>,
}

impl LightSpanner {
    pub fn new(config: &Config) -> Self {
        LightSpanner {
            eps: config.eps,
            eps_prime: config.eps_prime,
            c_phi: config.c_phi,
            p_max: config.p_max,
            d_max: config.d_max,
            bucketing: config.bucketing(),
            registry: BTreeMap::new(),
            by_index: vec![BTreeMap::new(); config.k],
            members: vec![BTreeMap::new(); config.k],
            dirty: BTreeSet::new(),
            violations: BTreeSet::new(),
            op_start: BTreeMap::new(),
            membership_ops: 0,
            events_since_converged: 0,
            trace_phi: false,
            phi_trace: Vec::new(),
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eps_prime(&self) -> f64 {
        self.eps_prime
    }

    pub fn bucketing(&self) -> &Bucketing {
        &self.bucketing
    }

    /// Records `Φ_i` of the touched bucket before and after every
    /// maintenance iteration. Quadratic per iteration; small instances only.
    pub fn set_trace_potential(&mut self, on: bool) {
        self.trace_phi = on;
    }

    pub fn take_phi_trace(&mut self) -> Vec<PhiStep> {
        std::mem::take(&mut self.phi_trace)
    }

    pub fn len(&self) -> usize {
        self.registry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registry.is_empty()
    }

    pub fn is_registered(&self, pair: PairKey) -> bool {
        self.registry.contains_key(&pair)
    }

    pub fn is_member(&self, pair: PairKey) -> bool {
        self.registry.get(&pair).is_some_and(|e| e.member)
    }

    pub fn coord(&self, pair: PairKey) -> Option<BucketCoord> {
        self.registry.get(&pair).map(|e| e.coord)
    }

    /// Registered pairs with their bucket coordinates and membership flag.
    pub fn registry(&self) -> impl Iterator<Item = (PairKey, BucketCoord, bool)> + '_ {
        self.registry.iter().map(|(k, e)| (*k, e.coord, e.member))
    }

    /// All bucket members, sorted by pair.
    pub fn member_pairs(&self) -> Vec<PairKey> {
        self.registry
            .iter()
            .filter(|(_, e)| e.member)
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn member_count(&self) -> usize {
        self.registry.values().filter(|e| e.member).count()
    }

    /// Total weight of `∪ S_i`.
    pub fn weight(&self) -> f64 {
        self.registry.values().filter(|e| e.member).map(|e| e.len).sum()
    }

    /// `bucket <i> <a> <b> <length>` per member, sorted by bucket then pair.
    pub fn dump(&self) -> String {
        let mut rows: Vec<(usize, PairKey, f64)> = self
            .registry
            .iter()
            .filter(|(_, e)| e.member)
            .map(|(k, e)| (e.coord.index, *k, e.len))
            .collect();
        rows.sort_by_key(|a| (a.0, a.1));
        let mut out = String::new();
        for (i, k, len) in rows {
            let _ = writeln!(out, "bucket {i} {} {} {}", k.0, k.1, fmt_len(len));
        }
        out
    }

    /// Starts a fresh per-operation churn window.
    pub fn begin_op(&mut self) {
        self.op_start.clear();
    }

    /// Pairs whose membership differs from the start of the window: the
    /// net number of light-spanner edges added or removed.
    pub fn net_churn(&self) -> usize {
        self.op_start
            .iter()
            .filter(|(k, before)| self.is_member(**k) != **before)
            .count()
    }

    /// Membership adds and removes performed so far, including ones that
    /// cancelled within an operation.
    pub fn membership_ops(&self) -> usize {
        self.membership_ops
    }

    fn check_cap(&self, len: f64) -> f64 {
        (1.0 + self.eps) * len * (1.0 + TIE_TOLERANCE)
    }

    fn inv2_threshold(&self, len: f64) -> f64 {
        (1.0 + self.eps_prime) * len * (1.0 - TIE_TOLERANCE)
    }

    fn classify(&self, member: bool, dstar: f64, len: f64) -> Option<ViolationKind> {
        if member {
            (dstar < self.inv2_threshold(len)).then_some(ViolationKind::Inv2)
        } else {
            (dstar > (1.0 + self.eps) * len * (1.0 + TIE_TOLERANCE)).then_some(ViolationKind::Inv1)
        }
    }

    /// `d_i*(u, v)` using bucket `i`'s members, or `+inf` when no extended
    /// path of length at most `radius_cap` exists.
    pub fn d_star(&self, points: &PointStore, i: usize, u: PointId, v: PointId, radius_cap: f64) -> Result<f64> {
        if u == v {
            return Err(Error::IdenticalPoints);
        }
        let size = self.bucketing.coord(points.distance(u, v))?.size;
        Ok(self.search(points, i, u, v, size, radius_cap))
    }

    /// A* over the points inside the ellipse `|ux| + |xv| <= cap`, with the
    /// straight-line distance to `v` as heuristic (every weight is at least
    /// the Euclidean length, so the heuristic is consistent).
    fn search(&self, points: &PointStore, i: usize, u: PointId, v: PointId, size: i64, cap: f64) -> f64 {
        let pu = points.coords(u);
        let pv = points.coords(v);
        let mut ids = vec![u, v];
        for x in points.alive() {
            if x != u && x != v {
                let px = points.coords(x);
                if euclidean(pu, px) + euclidean(px, pv) <= cap {
                    ids.push(x);
                }
            }
        }
        let coords: Vec<&[f64]> = ids.iter().map(|&x| points.coords(x)).collect();
        let h: Vec<f64> = coords.iter().map(|c| euclidean(c, pv)).collect();
        let m = ids.len();
        let mut g = vec![f64::INFINITY; m];
        let mut done = vec![false; m];
        let mut heap = BinaryHeap::new();
        g[0] = 0.0;
        heap.push(Reverse((HeapKey(h[0]), 0usize)));
        let bucket = &self.members[i];
        let local: HashMap<PointId, usize> = ids.iter().enumerate().map(|(j, &x)| (x, j)).collect();
        // Lengths clearly below/above the first length of `size`; only the
        // narrow band in between needs the exact bucketing.
        let t = self.bucketing.size_floor_length(size);
        let (below, above) = (t * (1.0 - 1e-10), t * (1.0 + 1e-10));
        let hop = 1.0 + self.eps;
        while let Some(Reverse((HeapKey(f), a))) = heap.pop() {
            if done[a] {
                continue;
            }
            if f > cap {
                break;
            }
            if a == 1 {
                return g[1];
            }
            done[a] = true;
            let ga = g[a];
            let ca = coords[a];
            for b in 0..m {
                if done[b] {
                    continue;
                }
                let len = euclidean(ca, coords[b]);
                if len >= below && (len > above || !self.bucketing.size_below(len, size)) {
                    continue;
                }
                let ng = ga + hop * len;
                if ng < g[b] && ng + h[b] <= cap {
                    g[b] = ng;
                    heap.push(Reverse((HeapKey(ng + h[b]), b)));
                }
            }
            for y in bucket.get(&ids[a]).into_iter().flatten() {
                let Some(&b) = local.get(y) else { continue };
                if done[b] {
                    continue;
                }
                let len = euclidean(ca, coords[b]);
                if !self.bucketing.size_below(len, size) {
                    continue;
                }
                let ng = ga + len;
                if ng < g[b] && ng + h[b] <= cap {
                    g[b] = ng;
                    heap.push(Reverse((HeapKey(ng + h[b]), b)));
                }
            }
        }
        f64::INFINITY
    }

    fn fresh_dstar(&self, points: &PointStore, pair: PairKey, e: &Entry) -> f64 {
        self.search(
            points,
            e.coord.index,
            pair.0,
            pair.1,
            e.coord.size,
            self.check_cap(e.len),
        )
    }

    /// Evaluates both invariants for a registered pair from scratch.
    pub fn check_pair(&self, points: &PointStore, pair: PairKey) -> Result<Option<Violation>> {
        let e = self
            .registry
            .get(&pair)
            .ok_or_else(|| Error::Precondition(format!("pair {pair} is not a potential pair")))?;
        let dstar = self.fresh_dstar(points, pair, e);
        Ok(self.classify(e.member, dstar, e.len).map(|kind| Violation {
            kind,
            pair,
            index: e.coord.index,
            size: e.coord.size,
            dstar,
            dist: e.len,
        }))
    }

    /// Fresh scan over every registered pair.
    pub fn scan_violations(&self, points: &PointStore) -> Vec<Violation> {
        self.registry
            .keys()
            .filter_map(|k| self.check_pair(points, *k).expect("registered"))
            .collect()
    }

    fn mark_dirty(&mut self, pair: PairKey) {
        if let Some(e) = self.registry.get_mut(&pair) {
            e.dstar = None;
            let c = e.coord;
            for kind in [ViolationKind::Inv1, ViolationKind::Inv2] {
                self.violations.remove(&(c.size, kind, c.index, pair));
            }
            self.dirty.insert((c.size, c.index, pair));
        }
    }

    /// Reacts to a change that can only move `d*` of `pair` in direction
    /// `shift`. A pair whose invariant cannot be broken by that move keeps
    /// its status; its cached value degrades to a bound.
    ///
    /// `through` is a lower bound on every extended path that uses the
    /// changed element; a member whose Inv2 threshold lies below it cannot
    /// be shortened into a violation.
    fn invalidate(&mut self, pair: PairKey, shift: Shift, through: f64) {
        let Some(e) = self.registry.get(&pair) else { return };
        let safe_side = match shift {
            Shift::Down => !e.member || through >= self.inv2_threshold(e.len) * (1.0 + ELLIPSE_SLACK),
            Shift::Up => e.member,
        };
        let valid = e.dstar.is_some_and(|d| self.classify(e.member, d, e.len).is_none());
        if safe_side && valid {
            self.registry.get_mut(&pair).unwrap().exact = false;
        } else {
            self.mark_dirty(pair);
        }
    }

    fn refresh(&mut self, points: &PointStore, pair: PairKey) {
        let e = self.registry[&pair];
        let dstar = self.fresh_dstar(points, pair, &e);
        let slot = self.registry.get_mut(&pair).unwrap();
        slot.dstar = Some(dstar);
        slot.exact = true;
        self.dirty.remove(&(e.coord.size, e.coord.index, pair));
        self.restatus(pair);
    }

    /// Re-derives the violation entry of a clean pair from its cached `d*`.
    fn restatus(&mut self, pair: PairKey) {
        let e = self.registry[&pair];
        let c = e.coord;
        for kind in [ViolationKind::Inv1, ViolationKind::Inv2] {
            self.violations.remove(&(c.size, kind, c.index, pair));
        }
        if let Some(d) = e.dstar {
            if let Some(kind) = self.classify(e.member, d, e.len) {
                self.violations.insert((c.size, kind, c.index, pair));
            }
        }
    }

    fn within_cap(&self, len: f64, through: f64) -> bool {
        through <= self.check_cap(len) * (1.0 + ELLIPSE_SLACK)
    }

    /// Invalidates every pair whose search region contains `x`.
    fn point_changed(&mut self, points: &PointStore, x: PointId, shift: Shift) {
        let px = points.coords(x);
        let hit: Vec<(PairKey, f64)> = self
            .registry
            .iter()
            .filter(|(k, _)| !k.contains(x))
            .filter_map(|(k, e)| {
                let through = euclidean(points.coords(k.0), px) + euclidean(px, points.coords(k.1));
                self.within_cap(e.len, through).then_some((*k, through))
            })
            .collect();
        for (k, through) in hit {
            self.invalidate(k, shift, through);
        }
    }

    /// Invalidates the pairs whose `d*` may use edge `edge`: same index,
    /// larger size, and a path through the edge no longer than the cap.
    fn edge_changed(&mut self, points: &PointStore, edge: PairKey, coord: BucketCoord, shift: Shift) {
        let (pa, pb) = (points.coords(edge.0), points.coords(edge.1));
        let ab = euclidean(pa, pb);
        let lowest = (coord.size + 1, PairKey(PointId(0), PointId(0)));
        let hit: Vec<(PairKey, f64)> = self.by_index[coord.index]
            .range(lowest..)
            .filter_map(|(&(_, k), &len)| {
                let (pu, pv) = (points.coords(k.0), points.coords(k.1));
                let through = ab + (euclidean(pu, pa) + euclidean(pb, pv)).min(euclidean(pu, pb) + euclidean(pa, pv));
                self.within_cap(len, through).then_some((k, through))
            })
            .collect();
        for (k, through) in hit {
            self.invalidate(k, shift, through);
        }
    }

    fn set_member(&mut self, points: &PointStore, pair: PairKey, member: bool) {
        let e = self.registry.get_mut(&pair).expect("registered pair");
        if e.member == member {
            return;
        }
        self.op_start.entry(pair).or_insert(e.member);
        e.member = member;
        let coord = e.coord;
        let bucket = &mut self.members[coord.index];
        for (a, b) in [(pair.0, pair.1), (pair.1, pair.0)] {
            if member {
                bucket.entry(a).or_default().insert(b);
            } else if let Some(s) = bucket.get_mut(&a) {
                s.remove(&b);
                if s.is_empty() {
                    bucket.remove(&a);
                }
            }
        }
        self.membership_ops += 1;
        self.events_since_converged += 1;
        if self.registry[&pair].exact {
            self.restatus(pair);
        } else {
            self.mark_dirty(pair);
        }
        let shift = if member { Shift::Down } else { Shift::Up };
        self.edge_changed(points, pair, coord, shift);
    }

    fn insert_pair(&mut self, points: &PointStore, pair: PairKey, member: bool) {
        if self.registry.contains_key(&pair) {
            // Already registered (can happen when a transfer lands on an
            // existing pair); keep the stronger membership.
            if member {
                self.set_member(points, pair, true);
            }
            return;
        }
        let len = points.distance(pair.0, pair.1);
        let coord = self.bucketing.coord(len).expect("potential pairs join distinct points");
        self.registry.insert(
            pair,
            Entry {
                coord,
                len,
                member: false,
                dstar: None,
                exact: false,
            },
        );
        self.dirty.insert((coord.size, coord.index, pair));
        self.by_index[coord.index].insert((coord.size, pair), len);
        self.op_start.entry(pair).or_insert(false);
        if member {
            self.set_member(points, pair, true);
        }
    }

    fn remove_pair(&mut self, points: &PointStore, pair: PairKey) -> bool {
        let Some(e) = self.registry.get(&pair).copied() else {
            return false;
        };
        if e.member {
            self.set_member(points, pair, false);
        }
        self.op_start.entry(pair).or_insert(false);
        let c = e.coord;
        self.dirty.remove(&(c.size, c.index, pair));
        for kind in [ViolationKind::Inv1, ViolationKind::Inv2] {
            self.violations.remove(&(c.size, kind, c.index, pair));
        }
        self.by_index[c.index].remove(&(c.size, pair));
        self.registry.remove(&pair);
        e.member
    }

    fn cached_violation(&mut self, points: &PointStore, pair: PairKey) -> Option<ViolationKind> {
        if self.registry[&pair].dstar.is_none() {
            self.refresh(points, pair);
        }
        let e = self.registry[&pair];
        self.classify(e.member, e.dstar.unwrap(), e.len)
    }

    /// Adds an Invariant-1 violating pair to its bucket. Returns the number
    /// of membership events (always 1).
    pub fn fix_inv1(&mut self, points: &PointStore, pair: PairKey) -> Result<usize> {
        if !self.registry.contains_key(&pair) || self.cached_violation(points, pair) != Some(ViolationKind::Inv1) {
            return Err(Error::Precondition(format!("pair {pair} does not violate Invariant 1")));
        }
        self.set_member(points, pair, true);
        Ok(1)
    }

    /// The edge removal process: drops an Invariant-2 violating member, then
    /// adds same-index, same-size Invariant-1 violators (smallest pair
    /// first) until none is left. Returns the number of membership events.
    pub fn fix_inv2(&mut self, points: &PointStore, pair: PairKey) -> Result<usize> {
        if !self.registry.contains_key(&pair) || self.cached_violation(points, pair) != Some(ViolationKind::Inv2) {
            return Err(Error::Precondition(format!("pair {pair} does not violate Invariant 2")));
        }
        let coord = self.registry[&pair].coord;
        self.set_member(points, pair, false);
        let mut events = 1;
        loop {
            let peers: Vec<PairKey> = self
                .registry
                .iter()
                .filter(|(k, e)| e.coord == coord && !e.member && **k != pair)
                .map(|(k, _)| *k)
                .collect();
            let next = peers
                .into_iter()
                .find(|k| self.cached_violation(points, *k) == Some(ViolationKind::Inv1));
            match next {
                Some(k) => {
                    self.set_member(points, k, true);
                    events += 1;
                }
                None => break,
            }
        }
        Ok(events)
    }

    /// Default iteration cap: 50 per membership event since the last
    /// converged state, plus 1000.
    pub fn default_iteration_cap(&self) -> usize {
        50 * self.events_since_converged + 1000
    }

    /// Fixes violations in ascending size order (Inv2 before Inv1, then by
    /// index and pair) until none remains or `cap` iterations ran. Fixes at
    /// one size only invalidate larger sizes, so dirty pairs are refreshed
    /// lazily, one size class at a time.
    pub fn run_maintenance(&mut self, points: &PointStore, cap: usize) -> MaintenanceSummary {
        let mut summary = MaintenanceSummary::default();
        let ops_before = self.membership_ops;
        loop {
            let vmin = self.violations.first().copied();
            let dmin = self.dirty.first().copied();
            if let Some((ds, _, _)) = dmin {
                if vmin.is_none_or(|v| ds <= v.0) {
                    let batch: Vec<PairKey> = self
                        .dirty
                        .range((ds, 0, PairKey(PointId(0), PointId(0)))..)
                        .take_while(|(s, _, _)| *s == ds)
                        .map(|(_, _, k)| *k)
                        .collect();
                    for k in batch {
                        self.refresh(points, k);
                    }
                    continue;
                }
            }
            let Some((_, kind, index, pair)) = vmin else {
                summary.converged = true;
                break;
            };
            if summary.iterations >= cap {
                break;
            }
            let before = self.trace_phi.then(|| self.bucket_potential(points, index));
            match kind {
                ViolationKind::Inv1 => self.fix_inv1(points, pair),
                ViolationKind::Inv2 => self.fix_inv2(points, pair),
            }
            .expect("cached violation is current");
            summary.iterations += 1;
            if let Some(before) = before {
                let after = self.bucket_potential(points, index);
                log::debug!("phi_{index}: {before} -> {after} ({kind} {pair})");
                self.phi_trace.push(PhiStep {
                    kind,
                    pair,
                    index,
                    before,
                    after,
                });
            }
        }
        summary.events = self.membership_ops - ops_before;
        if summary.converged {
            self.events_since_converged = 0;
        }
        summary
    }

    fn transfer(&mut self, points: &PointStore, from: PairKey, to: PairKey) -> usize {
        let ops = self.membership_ops;
        let was_member = self.remove_pair(points, from);
        self.insert_pair(points, to, was_member);
        self.membership_ops - ops
    }

    /// Light-spanner side of a point insertion: membership follows
    /// reassigned pairs, new pairs join their bucket only if they violate
    /// Invariant 1, then maintenance runs.
    pub fn on_point_inserted(&mut self, points: &PointStore, p: PointId, delta: &S1Delta) -> LightUpdate {
        let ops = self.membership_ops;
        self.point_changed(points, p, Shift::Down);
        let mut added = Vec::new();
        for ev in &delta.potential {
            match *ev {
                EdgeEvent::Reassigned { from, to } => {
                    self.transfer(points, from, to);
                }
                EdgeEvent::Removed(k) => {
                    self.remove_pair(points, k);
                }
                EdgeEvent::Added(k) => added.push(k),
            }
        }
        for &k in &added {
            self.insert_pair(points, k, false);
        }
        added.sort_by_key(|k| (self.registry[k].coord.size, *k));
        for k in added {
            if self.cached_violation(points, k) == Some(ViolationKind::Inv1) {
                self.set_member(points, k, true);
            }
        }
        let update_ops = self.membership_ops - ops;
        let cap = self.default_iteration_cap();
        LightUpdate {
            update_ops,
            maintenance: self.run_maintenance(points, cap),
        }
    }

    /// Light-spanner side of a point deletion: removed pairs leave their
    /// bucket, every added pair joins its bucket, reassigned pairs keep
    /// their membership, then maintenance prunes.
    pub fn on_point_deleted(&mut self, points: &PointStore, p: PointId, delta: &S1Delta) -> LightUpdate {
        let ops = self.membership_ops;
        self.point_changed(points, p, Shift::Up);
        for ev in &delta.potential {
            if let EdgeEvent::Removed(k) = *ev {
                self.remove_pair(points, k);
            }
        }
        for ev in &delta.potential {
            if let EdgeEvent::Added(k) = *ev {
                self.insert_pair(points, k, true);
            }
        }
        for ev in &delta.potential {
            if let EdgeEvent::Reassigned { from, to } = *ev {
                self.transfer(points, from, to);
            }
        }
        let update_ops = self.membership_ops - ops;
        let cap = self.default_iteration_cap();
        LightUpdate {
            update_ops,
            maintenance: self.run_maintenance(points, cap),
        }
    }

    fn pair_potential(&self, points: &PointStore, pair: PairKey, e: &Entry) -> (f64, bool) {
        let cap = DIAGNOSTIC_RADIUS * e.len;
        let d = self.search(points, e.coord.index, pair.0, pair.1, e.coord.size, cap);
        let clamped = d.is_infinite();
        let ratio = if clamped { DIAGNOSTIC_RADIUS } else { d / e.len };
        (self.potential_of(e.member, ratio), clamped)
    }

    /// `p_i` of a pair with the given membership and `d*/d` ratio.
    pub fn potential_of(&self, member: bool, ratio: f64) -> f64 {
        if member {
            (1.0 + self.eps) - ratio
        } else {
            self.c_phi * (ratio - (1.0 + self.eps_prime))
        }
    }

    /// `Φ_i` of one bucket, with `d*` clamped at the diagnostic radius.
    pub fn bucket_potential(&self, points: &PointStore, index: usize) -> f64 {
        self.registry
            .iter()
            .filter(|(_, e)| e.coord.index == index)
            .map(|(k, e)| self.pair_potential(points, *k, e).0)
            .sum()
    }

    /// `Φ_i`, `Φ` and `Φ* = Φ + (p_max/2) Σ (D_max - deg(v))` over alive
    /// points, given their S1 degrees.
    pub fn potential_report(&self, points: &PointStore, degrees: impl IntoIterator<Item = usize>) -> PotentialReport {
        let mut phi_per_bucket = vec![0.0; self.members.len()];
        let mut clamped = Vec::new();
        for (k, e) in &self.registry {
            let (p, c) = self.pair_potential(points, *k, e);
            phi_per_bucket[e.coord.index] += p;
            if c {
                clamped.push(*k);
            }
        }
        let phi: f64 = phi_per_bucket.iter().sum();
        let degree_slack: f64 = degrees.into_iter().map(|d| self.d_max - d as f64).sum();
        PotentialReport {
            phi_star: phi + self.p_max / 2.0 * degree_slack,
            phi_per_bucket,
            phi,
            degree_slack,
            clamped,
        }
    }

    /// Number of pairs with a cached violation or a pending refresh.
    pub fn pending(&self) -> (usize, usize) {
        (self.violations.len(), self.dirty.len())
    }

    /// Registers a pair with a given membership, bypassing the update
    /// procedures. Test fixtures only.
    #[doc(hidden)]
    pub fn force_pair(&mut self, points: &PointStore, pair: PairKey, member: bool) {
        self.insert_pair(points, pair, false);
        self.set_member(points, pair, member);
    }
}
