//! Brute-force verifiers. Nothing here calls into the light spanner's search
//! code: extended-path distances are recomputed with a dense Dijkstra over
//! precomputed distance and bucket matrices, one run per (bucket, size,
//! source) stratum.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Serialize, Serializer};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{euclidean, Bucketing, PairKey, PointId, PointStore};
use crate::hierarchy::Hierarchy;
use crate::light::{LightSpanner, Violation, ViolationKind, TIE_TOLERANCE};
use crate::spanner::DynamicSpanner;
use crate::sparse::SparseSpanner;

/// Serializes lengths with `+inf` written as the string `"inf"`.
pub fn serialize_len<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stretch {
    #[serde(serialize_with = "serialize_len")]
    pub max: f64,
    pub witness: Option<PairKey>,
}

/// Maximum over alive pairs of graph distance over Euclidean distance.
/// Disconnected pairs give `+inf`.
pub fn exact_stretch(points: &PointStore, edges: &[PairKey]) -> Stretch {
    let ids = points.alive_ids();
    let n = ids.len();
    let pos: HashMap<PointId, usize> = ids.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in edges {
        let (a, b) = (pos[&e.0], pos[&e.1]);
        let w = points.distance(e.0, e.1);
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let mut best = Stretch {
        max: 1.0,
        witness: None,
    };
    for s in 0..n {
        let mut dist = vec![f64::INFINITY; n];
        dist[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((OrdF64(0.0), s)));
        while let Some(Reverse((OrdF64(d), x))) = heap.pop() {
            if d > dist[x] {
                continue;
            }
            for &(y, w) in &adj[x] {
                if d + w < dist[y] {
                    dist[y] = d + w;
                    heap.push(Reverse((OrdF64(d + w), y)));
                }
            }
        }
        for t in s + 1..n {
            let ratio = dist[t] / points.distance(ids[s], ids[t]);
            if best.witness.is_none() || ratio > best.max {
                best = Stretch {
                    max: ratio,
                    witness: Some(PairKey(ids[s], ids[t])),
                };
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Euclidean MST weight by Prim's algorithm on the complete graph.
pub fn mst_weight(points: &PointStore) -> f64 {
    let ids = points.alive_ids();
    let n = ids.len();
    if n < 2 {
        return 0.0;
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        let x = (0..n)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .unwrap();
        in_tree[x] = true;
        total += best[x];
        for y in 0..n {
            if !in_tree[y] {
                let d = points.distance(ids[x], ids[y]);
                if d < best[y] {
                    best[y] = d;
                }
            }
        }
    }
    total
}

/// Largest over smallest pairwise distance.
pub fn aspect_ratio(points: &PointStore) -> Result<f64> {
    let ids = points.alive_ids();
    if ids.len() < 2 {
        return Err(Error::Precondition("aspect ratio needs two points".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let d = points.distance(a, b);
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    if lo <= 0.0 {
        return Err(Error::IdenticalPoints);
    }
    Ok(hi / lo)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationViolation {
    pub level: i64,
    pub a: PointId,
    pub b: PointId,
    pub distance: f64,
}

/// Same-level centers (explicit or implicit) closer than `R^level`, for
/// every level from the lowest explicit one up to the root's.
pub fn verify_separation(hierarchy: &Hierarchy, points: &PointStore) -> Vec<SeparationViolation> {
    let mut out = Vec::new();
    let (Some(lo), Some(hi)) = (hierarchy.lowest_level(), hierarchy.root_level()) else {
        return out;
    };
    let chains: Vec<(PointId, i64)> = hierarchy.chains().map(|(p, c)| (p, c.top)).collect();
    for level in lo..=hi {
        let radius = hierarchy.r().powi(level as i32);
        let at: Vec<PointId> = chains.iter().filter(|(_, t)| *t >= level).map(|(p, _)| *p).collect();
        for (i, &a) in at.iter().enumerate() {
            for &b in &at[i + 1..] {
                let d = points.distance(a, b);
                if d <= radius {
                    out.push(SeparationViolation {
                        level,
                        a,
                        b,
                        distance: d,
                    });
                }
            }
        }
    }
    out
}

/// Parent-covers-child and root checks on the explicit chains.
pub fn verify_tree(hierarchy: &Hierarchy, points: &PointStore) -> Vec<String> {
    let mut out = Vec::new();
    let mut roots = 0;
    for (p, c) in hierarchy.chains() {
        if c.low > c.top {
            out.push(format!("chain {p} is empty"));
        }
        match c.parent {
            None => roots += 1,
            Some(q) => match hierarchy.chain(q) {
                None => out.push(format!("chain {p} has unknown parent {q}")),
                Some(qc) => {
                    let level = c.top + 1;
                    if qc.top < level {
                        out.push(format!("parent ({q},{level}) of chain {p} does not exist"));
                    }
                    if points.distance(p, q) > hierarchy.r().powi(level as i32) {
                        out.push(format!("parent ({q},{level}) does not cover {p}"));
                    }
                }
            },
        }
    }
    if !hierarchy.is_empty() && roots != 1 {
        out.push(format!("{roots} roots"));
    }
    if let Some(r) = hierarchy.root() {
        if hierarchy.chain(r).and_then(|c| c.parent).is_some() {
            out.push(format!("root {r} has a parent"));
        }
    }
    out
}

/// Validity, order and repetition of the representative assignment.
/// Returns the largest repetition count and the violations found.
pub fn verify_assignment(
    hierarchy: &Hierarchy,
    sparse: &SparseSpanner,
    points: &PointStore,
    rep_bound: f64,
) -> (usize, Vec<String>) {
    let mut out = Vec::new();
    let block_len = sparse.block_len();
    let mut counts: BTreeMap<PointId, usize> = BTreeMap::new();
    for (p, a) in sparse.assignments() {
        let Some(top) = hierarchy.chain_top_level(p) else {
            out.push(format!("assignment for unknown chain {p}"));
            continue;
        };
        for (&b, info) in &a.blocks {
            *counts.entry(info.rep).or_insert(0) += 1;
            let q = info.rep;
            if q == p {
                continue;
            }
            let Some(qtop) = hierarchy.chain_top_level(q) else {
                out.push(format!("block {b} of {p} represented by unknown {q}"));
                continue;
            };
            let lowest = b * block_len;
            if lowest > top {
                out.push(format!("block {b} of {p} lies above the chain top"));
                continue;
            }
            if qtop > lowest {
                out.push(format!("({p},{lowest}) represented by {q} of size {qtop}"));
            }
            if points.distance(p, q) > hierarchy.r().powi(lowest as i32) {
                out.push(format!("({p},{lowest}) represented by {q} outside R^l"));
            }
            if qtop >= top {
                out.push(format!("order: size({q}) = {qtop} not below size({p}) = {top}"));
            }
        }
    }
    let max_rep = counts.values().copied().max().unwrap_or(0);
    if max_rep as f64 > rep_bound {
        out.push(format!("repetition {max_rep} exceeds bound {rep_bound}"));
    }
    (max_rep, out)
}

/// Distance, size and index tables over the alive points.
struct Tables {
    ids: Vec<PointId>,
    pos: HashMap<PointId, usize>,
    dist: Vec<f64>,
    size: Vec<i64>,
    index: Vec<usize>,
}

impl Tables {
    fn new(points: &PointStore, bucketing: &Bucketing) -> Self {
        let ids = points.alive_ids();
        let n = ids.len();
        let pos = ids.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut dist = vec![0.0; n * n];
        let mut size = vec![i64::MAX; n * n];
        let mut index = vec![usize::MAX; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let d = euclidean(points.coords(ids[a]), points.coords(ids[b]));
                let c = bucketing.coord(d).expect("alive points are distinct");
                for (x, y) in [(a, b), (b, a)] {
                    dist[x * n + y] = d;
                    size[x * n + y] = c.size;
                    index[x * n + y] = c.index;
                }
            }
        }
        Tables {
            ids,
            pos,
            dist,
            size,
            index,
        }
    }

    fn n(&self) -> usize {
        self.ids.len()
    }
}

/// Dense Dijkstra from `src` over edges of size below `size`, stopping once
/// every unsettled vertex is farther than `bound`.
fn stratum_dijkstra(t: &Tables, member: &[bool], eps: f64, src: usize, size: i64, bound: f64) -> Vec<f64> {
    let n = t.n();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    loop {
        let mut x = usize::MAX;
        for i in 0..n {
            if !done[i] && (x == usize::MAX || dist[i] < dist[x]) {
                x = i;
            }
        }
        if x == usize::MAX || dist[x] > bound {
            break;
        }
        done[x] = true;
        for y in 0..n {
            let e = x * n + y;
            if done[y] || t.size[e] >= size {
                continue;
            }
            let w = if member[e] { t.dist[e] } else { (1.0 + eps) * t.dist[e] };
            if dist[x] + w < dist[y] {
                dist[y] = dist[x] + w;
            }
        }
    }
    dist
}

/// `d_i*` of every registered pair, with values above
/// `(1+eps)|uv|(1+1e-9)` reported as `+inf`.
pub fn oracle_dstars(light: &LightSpanner, points: &PointStore) -> BTreeMap<PairKey, f64> {
    let t = Tables::new(points, light.bucketing());
    let n = t.n();
    let eps = light.eps();
    let mut member_tables: HashMap<usize, Vec<bool>> = HashMap::new();
    for pair in light.member_pairs() {
        let (a, b) = (t.pos[&pair.0], t.pos[&pair.1]);
        let i = t.index[a * n + b];
        let m = member_tables.entry(i).or_insert_with(|| vec![false; n * n]);
        m[a * n + b] = true;
        m[b * n + a] = true;
    }
    let empty = vec![false; n * n];
    type Targets = Vec<(usize, f64, PairKey)>;
    // stratum (index, size, source) -> [(target, cap, pair)]
    let mut strata: BTreeMap<(usize, i64, usize), Targets> = BTreeMap::new();
    for (pair, _, _) in light.registry() {
        let (a, b) = (t.pos[&pair.0], t.pos[&pair.1]);
        let e = a * n + b;
        let cap = (1.0 + eps) * t.dist[e] * (1.0 + TIE_TOLERANCE);
        strata
            .entry((t.index[e], t.size[e], a))
            .or_default()
            .push((b, cap, pair));
    }
    let mut out = BTreeMap::new();
    for ((i, size, a), targets) in strata {
        let bound = targets.iter().map(|x| x.1).fold(0.0, f64::max);
        let member = member_tables.get(&i).unwrap_or(&empty);
        let dist = stratum_dijkstra(&t, member, eps, a, size, bound);
        for (b, cap, pair) in targets {
            let d = if dist[b] <= cap { dist[b] } else { f64::INFINITY };
            out.insert(pair, d);
        }
    }
    out
}

/// Invariant violations of every registered pair, from [`oracle_dstars`].
pub fn verify_invariants(light: &LightSpanner, points: &PointStore) -> Vec<Violation> {
    let dstars = oracle_dstars(light, points);
    let (eps, eps_prime) = (light.eps(), light.eps_prime());
    let mut out = Vec::new();
    for (pair, coord, member) in light.registry() {
        let dstar = dstars[&pair];
        let dist = points.distance(pair.0, pair.1);
        let kind = if member && dstar < (1.0 + eps_prime) * dist * (1.0 - TIE_TOLERANCE) {
            Some(ViolationKind::Inv2)
        } else if !member && dstar > (1.0 + eps) * dist * (1.0 + TIE_TOLERANCE) {
            Some(ViolationKind::Inv1)
        } else {
            None
        };
        if let Some(kind) = kind {
            out.push(Violation {
                kind,
                pair,
                index: coord.index,
                size: coord.size,
                dstar,
                dist,
            });
        }
    }
    out
}

/// Largest instance [`brute_dstar`] accepts.
pub const BRUTE_MAX_POINTS: usize = 12;

/// Exact `d_i*(u, v)` by enumerating every simple path of usable edges.
pub fn brute_dstar(light: &LightSpanner, points: &PointStore, i: usize, u: PointId, v: PointId) -> Result<f64> {
    let n = points.len();
    if n > BRUTE_MAX_POINTS {
        return Err(Error::InstanceTooLarge(n));
    }
    if u == v {
        return Err(Error::IdenticalPoints);
    }
    let bucketing = light.bucketing();
    let ids = points.alive_ids();
    let size = bucketing.coord(points.distance(u, v))?.size;
    let mut w = vec![vec![f64::INFINITY; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let d = points.distance(ids[a], ids[b]);
            let c = bucketing.coord(d)?;
            if c.size < size {
                let pair = PairKey::new(ids[a], ids[b]);
                w[a][b] = if c.index == i && light.is_member(pair) {
                    d
                } else {
                    (1.0 + light.eps()) * d
                };
            }
        }
    }
    let s = ids.iter().position(|&x| x == u).ok_or(Error::DeadPoint(u))?;
    let t = ids.iter().position(|&x| x == v).ok_or(Error::DeadPoint(v))?;
    let mut best = f64::INFINITY;
    let mut on_path = vec![false; n];
    fn dfs(x: usize, t: usize, len: f64, w: &[Vec<f64>], on_path: &mut [bool], best: &mut f64) {
        if x == t {
            *best = best.min(len);
            return;
        }
        on_path[x] = true;
        for y in 0..w.len() {
            if !on_path[y] && w[x][y].is_finite() {
                dfs(y, t, len + w[x][y], w, on_path, best);
            }
        }
        on_path[x] = false;
    }
    dfs(s, t, 0.0, &w, &mut on_path, &mut best);
    Ok(best)
}

/// The classic greedy `t`-spanner: pairs by increasing length, each added
/// unless the current graph already connects it within `t` times its length.
pub fn greedy_spanner(points: &PointStore, t: f64) -> Vec<PairKey> {
    let ids = points.alive_ids();
    let n = ids.len();
    let coords: Vec<&[f64]> = ids.iter().map(|&p| points.coords(p)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            pairs.push((euclidean(coords[a], coords[b]), a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut out = Vec::new();
    // Upper bounds on current spanner distances, from earlier searches.
    // Edges are only ever added, so they stay valid.
    let mut known = vec![f64::INFINITY; n * n];
    let mut dist = vec![f64::INFINITY; n];
    let mut touched: Vec<usize> = Vec::new();
    for (d, a, b) in pairs {
        let bound = t * d;
        if known[a * n + b] <= bound {
            continue;
        }
        for &x in &touched {
            dist[x] = f64::INFINITY;
        }
        touched.clear();
        dist[a] = 0.0;
        touched.push(a);
        // A* toward b; the Euclidean distance is a consistent heuristic.
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((OrdF64(d), a)));
        let mut reached = false;
        while let Some(Reverse((OrdF64(f), x))) = heap.pop() {
            let dx = dist[x];
            if f > dx + euclidean(coords[x], coords[b]) {
                continue;
            }
            if x == b {
                reached = true;
                break;
            }
            for &(y, w) in &adj[x] {
                let nd = dx + w;
                let fy = nd + euclidean(coords[y], coords[b]);
                if fy <= bound && nd < dist[y] {
                    if dist[y].is_infinite() {
                        touched.push(y);
                    }
                    dist[y] = nd;
                    heap.push(Reverse((OrdF64(fy), y)));
                }
            }
        }
        for &x in &touched {
            let (lo, hi) = (a.min(x), a.max(x));
            let slot = &mut known[lo * n + hi];
            *slot = slot.min(dist[x]);
        }
        if !reached {
            adj[a].push((b, d));
            adj[b].push((a, d));
            known[a * n + b] = d;
            out.push(PairKey(ids[a], ids[b]));
        }
    }
    out.sort();
    out
}

/// Largest vertex degree of an edge list, recounted from scratch.
pub fn max_degree(edges: &[PairKey]) -> usize {
    let mut deg: HashMap<PointId, usize> = HashMap::new();
    for k in edges {
        *deg.entry(k.0).or_default() += 1;
        *deg.entry(k.1).or_default() += 1;
    }
    deg.into_values().max().unwrap_or(0)
}

pub fn total_weight(points: &PointStore, edges: &[PairKey]) -> f64 {
    edges.iter().map(|e| points.distance(e.0, e.1)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub op_seq: usize,
    pub n: usize,
    pub max_stretch: Stretch,
    pub s1_max_stretch: Stretch,
    pub mst_weight: f64,
    pub spanner_weight: f64,
    pub lightness: f64,
    pub max_degree: usize,
    pub degree_bound: f64,
    pub max_repetition: usize,
    pub repetition_bound: f64,
    pub log2_aspect_ratio: f64,
    pub separation_violations: Vec<SeparationViolation>,
    pub tree_violations: Vec<String>,
    pub assignment_violations: Vec<String>,
    pub invariant_violations: Vec<Violation>,
    /// Incremental sparse state equals a from-scratch rebuild.
    pub rebuild_matches: bool,
    /// Light-spanner registry equals the sparse spanner's potential pairs.
    pub registry_matches: bool,
}

impl VerificationReport {
    /// Every structural check passed and the light spanner's stretch is
    /// within `1 + eps_target` (plus `1e-9`).
    pub fn is_clean(&self, config: &Config) -> bool {
        self.failures(config).is_empty()
    }

    pub fn failures(&self, config: &Config) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_stretch.max > 1.0 + config.eps_target + 1e-9 {
            out.push(format!(
                "stretch {} at {:?}",
                self.max_stretch.max, self.max_stretch.witness
            ));
        }
        if !self.separation_violations.is_empty() {
            out.push(format!("{} separation violations", self.separation_violations.len()));
        }
        if !self.tree_violations.is_empty() {
            out.push(format!("tree: {}", self.tree_violations.join("; ")));
        }
        if !self.assignment_violations.is_empty() {
            out.push(format!("assignment: {}", self.assignment_violations.join("; ")));
        }
        if !self.invariant_violations.is_empty() {
            out.push(format!("{} invariant violations", self.invariant_violations.len()));
        }
        if self.max_degree as f64 > self.degree_bound {
            out.push(format!("degree {} > {}", self.max_degree, self.degree_bound));
        }
        if !self.rebuild_matches {
            out.push("incremental sparse state differs from rebuild".into());
        }
        if !self.registry_matches {
            out.push("light registry differs from potential pairs".into());
        }
        out
    }
}

/// Runs every oracle on the current state.
pub fn verify_spanner(sp: &DynamicSpanner, op_seq: usize) -> VerificationReport {
    let config = sp.config();
    let points = sp.points();
    let light_edges = sp.light_edges();
    let s1_edges = sp.s1_edges();
    let mst = mst_weight(points);
    let weight = total_weight(points, &light_edges);
    let (max_rep, assignment_violations) = verify_assignment(sp.hierarchy(), sp.sparse(), points, config.rep_bound);
    let rebuilt = SparseSpanner::build(config, sp.hierarchy(), points);
    let potential: Vec<PairKey> = sp.sparse().potential_pairs(points).into_iter().map(|x| x.0).collect();
    let registered: Vec<PairKey> = sp.light().registry().map(|x| x.0).collect();
    VerificationReport {
        op_seq,
        n: points.len(),
        max_stretch: exact_stretch(points, &light_edges),
        s1_max_stretch: exact_stretch(points, &s1_edges),
        mst_weight: mst,
        spanner_weight: weight,
        lightness: if mst > 0.0 { weight / mst } else { 0.0 },
        max_degree: max_degree(&s1_edges),
        degree_bound: config.d_max,
        max_repetition: max_rep,
        repetition_bound: config.rep_bound,
        log2_aspect_ratio: aspect_ratio(points).map_or(0.0, f64::log2),
        separation_violations: verify_separation(sp.hierarchy(), points),
        tree_violations: verify_tree(sp.hierarchy(), points),
        assignment_violations,
        invariant_violations: verify_invariants(sp.light(), points),
        rebuild_matches: rebuilt.same_state(sp.sparse()),
        registry_matches: potential == registered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::spanner::DynamicSpanner;
    use approx::assert_relative_eq;

    fn store(coords: &[&[f64]]) -> PointStore {
        let mut pts = PointStore::new(coords[0].len());
        for c in coords {
            pts.insert(c.to_vec()).unwrap();
        }
        pts
    }

    fn key(a: u64, b: u64) -> PairKey {
        PairKey::new(PointId(a), PointId(b))
    }

    const SQUARE: [&[f64]; 4] = [&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]];

    #[test]
    fn stretch_of_a_single_edge_is_one() {
        let pts = store(&[&[0.0, 0.0], &[3.0, 4.0]]);
        let s = exact_stretch(&pts, &[key(0, 1)]);
        assert_eq!(s.max, 1.0);
    }

    #[test]
    fn triangle_missing_an_edge_has_stretch_two() {
        let h = 3f64.sqrt() / 2.0;
        let pts = store(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, h]]);
        let s = exact_stretch(&pts, &[key(0, 2), key(1, 2)]);
        assert_relative_eq!(s.max, 2.0, max_relative = 1e-12);
        assert_eq!(s.witness, Some(key(0, 1)));
    }

    #[test]
    fn disconnected_graph_has_infinite_stretch() {
        let pts = store(&[&[0.0], &[1.0], &[2.0]]);
        assert!(exact_stretch(&pts, &[key(0, 1)]).max.is_infinite());
    }

    #[test]
    fn mst_examples() {
        assert_eq!(mst_weight(&store(&[&[5.0, 5.0]])), 0.0);
        assert_relative_eq!(mst_weight(&store(&[&[0.0], &[1.0], &[2.0]])), 2.0);
        assert_relative_eq!(mst_weight(&store(&SQUARE)), 3.0);
    }

    #[test]
    fn aspect_ratio_examples() {
        assert_relative_eq!(aspect_ratio(&store(&[&[0.0], &[7.0]])).unwrap(), 1.0);
        assert_relative_eq!(aspect_ratio(&store(&[&[0.0], &[1.0], &[10.0]])).unwrap(), 10.0);
        assert!(aspect_ratio(&store(&[&[0.0]])).is_err());
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_spanner(&store(&[&[0.0], &[2.0]]), 1.5), vec![key(0, 1)]);
        assert_eq!(
            greedy_spanner(&store(&[&[0.0], &[1.0], &[2.0]]), 1.5),
            vec![key(0, 1), key(1, 2)]
        );
        // At t = 2 the fourth side's detour (3) is still too long.
        let sq = store(&SQUARE);
        assert_eq!(greedy_spanner(&sq, 2.0).len(), 4);
        assert_eq!(greedy_spanner(&sq, 3.0).len(), 3);
    }

    #[test]
    fn greedy_meets_its_stretch() {
        let mut rng = crate::workload::XorShift64Star::new(8);
        let mut pts = PointStore::new(2);
        for _ in 0..80 {
            pts.insert(vec![rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)])
                .unwrap();
        }
        let g = greedy_spanner(&pts, 1.3);
        assert!(exact_stretch(&pts, &g).max <= 1.3 + 1e-12);
    }

    fn grown(coords: &[[f64; 2]]) -> DynamicSpanner {
        let mut sp = DynamicSpanner::new(Config::desk_default(2));
        for c in coords {
            sp.insert(c.to_vec()).unwrap();
        }
        sp
    }

    #[test]
    fn separation_holds_for_a_built_hierarchy() {
        let sp = grown(&[[0.0, 0.0]]);
        assert!(verify_separation(sp.hierarchy(), sp.points()).is_empty());
        let sp = grown(&[[0.0, 0.0], [10.0, 0.0]]);
        assert!(verify_separation(sp.hierarchy(), sp.points()).is_empty());
        assert!(verify_tree(sp.hierarchy(), sp.points()).is_empty());
    }

    #[test]
    fn moving_a_center_breaks_separation() {
        let sp = grown(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]);
        let mut pts = sp.points().clone();
        pts.move_point_unchecked(PointId(2), vec![0.01, 0.0]);
        assert!(!verify_separation(sp.hierarchy(), &pts).is_empty());
    }

    #[test]
    fn clean_state_reports_nothing() {
        let mut rng = crate::workload::XorShift64Star::new(4);
        let coords: Vec<[f64; 2]> = (0..40)
            .map(|_| [rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)])
            .collect();
        let sp = grown(&coords);
        let r = verify_spanner(&sp, 39);
        assert!(r.invariant_violations.is_empty());
        assert!(r.rebuild_matches && r.registry_matches);
        assert_eq!(r.max_degree, sp.sparse().max_degree());
        assert!(r.max_repetition as f64 <= r.repetition_bound);
        assert!(verify_invariants(&LightSpanner::new(sp.config()), &PointStore::new(2)).is_empty());
    }

    #[test]
    fn oracle_dstar_matches_enumeration() {
        let sp = grown(&[[0.0, 0.0], [4.0, 1.0], [9.0, 0.0], [5.0, 6.0], [2.0, 8.0], [7.0, 3.0]]);
        let (l, pts) = (sp.light(), sp.points());
        for (k, d) in oracle_dstars(l, pts) {
            let c = l.coord(k).unwrap();
            let slow = brute_dstar(l, pts, c.index, k.0, k.1).unwrap();
            let cap = (1.0 + l.eps()) * pts.distance(k.0, k.1) * (1.0 + TIE_TOLERANCE);
            if slow > cap {
                assert!(d.is_infinite(), "{k}: {d} vs {slow}");
            } else {
                assert_relative_eq!(d, slow, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn brute_dstar_examples() {
        let sp = grown(&[[0.0, 0.0], [10.0, 0.0]]);
        assert!(brute_dstar(sp.light(), sp.points(), 7, PointId(0), PointId(1))
            .unwrap()
            .is_infinite());
        let mut pts = store(&[&[0.0, 0.0], &[10.0, 0.0], &[4.0, 3.0]]);
        let l = LightSpanner::new(&Config::desk_default(2));
        let d = brute_dstar(&l, &pts, 7, PointId(0), PointId(1)).unwrap();
        assert_relative_eq!(d, (1.0 + l.eps()) * (5.0 + 45f64.sqrt()), max_relative = 1e-12);
        pts.insert(vec![1.0, 1.0]).unwrap();
        assert!(brute_dstar(&l, &pts, 7, PointId(0), PointId(3)).is_ok());
    }

    #[test]
    fn serialized_infinity_is_a_string() {
        let s = Stretch {
            max: f64::INFINITY,
            witness: None,
        };
        assert!(serde_json::to_string(&s).unwrap().contains("\"inf\""));
    }
}
