//! The rooted cluster tree over the current point set.
//!
//! A cluster `(p, l)` is centered at point `p` and covers the ball of radius
//! `R^l`. Every point owns one contiguous chain of explicit clusters
//! `[low(p), top(p)]`; the copies `(p, i)` for `i < low(p)` exist implicitly
//! and are never materialized. Inside a chain each cluster's parent is the
//! next copy of the same center, so only the chain top can have a parent
//! with a different center (or be the root).
//!
//! Both updates keep the separation property: two same-level centers at
//! level `j` are more than `R^j` apart, implicit copies included.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::geometry::{euclidean, PointId, PointStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cluster {
    pub center: PointId,
    pub level: i64,
    pub explicit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainInfo {
    pub low: i64,
    pub top: i64,
    /// Center of the parent of `(p, top)`, or `None` for the root.
    pub parent: Option<PointId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HierarchyEvent {
    ClusterAdded {
        center: PointId,
        level: i64,
    },
    ClusterRemoved {
        center: PointId,
        level: i64,
    },
    /// The chain top `(child, level)` moved under a new parent center.
    Reparented {
        child: PointId,
        level: i64,
        old_parent: Option<PointId>,
        new_parent: Option<PointId>,
    },
    RootChanged {
        old: Option<PointId>,
        new: Option<PointId>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HierarchyDelta {
    pub events: Vec<HierarchyEvent>,
}

impl HierarchyDelta {
    /// Centers whose chain was created, extended, shrunk or removed.
    pub fn touched_chains(&self) -> BTreeSet<PointId> {
        self.events
            .iter()
            .filter_map(|e| match e {
                HierarchyEvent::ClusterAdded { center, .. } | HierarchyEvent::ClusterRemoved { center, .. } => {
                    Some(*center)
                }
                _ => None,
            })
            .collect()
    }

    /// Chains whose top got a different parent.
    pub fn reparented(&self) -> BTreeSet<PointId> {
        self.events
            .iter()
            .filter_map(|e| match e {
                HierarchyEvent::Reparented { child, .. } => Some(*child),
                _ => None,
            })
            .collect()
    }

    /// Number of cluster additions and removals.
    pub fn cluster_changes(&self) -> usize {
        self.events
            .iter()
            .filter(|e| {
                matches!(
                    e,
                    HierarchyEvent::ClusterAdded { .. } | HierarchyEvent::ClusterRemoved { .. }
                )
            })
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    r: f64,
    chains: BTreeMap<PointId, ChainInfo>,
    children: BTreeMap<PointId, BTreeSet<PointId>>,
    root: Option<PointId>,
}

impl Hierarchy {
    pub fn new(r: f64) -> Self {
        assert!(r > 1.0);
        Hierarchy {
            r,
            chains: BTreeMap::new(),
            children: BTreeMap::new(),
            root: None,
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn radius(&self, level: i64) -> f64 {
        self.r.powi(level as i32)
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn root(&self) -> Option<PointId> {
        self.root
    }

    pub fn contains(&self, p: PointId) -> bool {
        self.chains.contains_key(&p)
    }

    pub fn chain(&self, p: PointId) -> Option<&ChainInfo> {
        self.chains.get(&p)
    }

    pub fn chains(&self) -> impl Iterator<Item = (PointId, &ChainInfo)> + '_ {
        self.chains.iter().map(|(p, c)| (*p, c))
    }

    /// `size(p)`: the highest explicit level centered at `p`.
    pub fn chain_top_level(&self, p: PointId) -> Option<i64> {
        self.chains.get(&p).map(|c| c.top)
    }

    /// Centers whose chain top hangs below a cluster of `p`.
    pub fn children_of(&self, p: PointId) -> impl Iterator<Item = PointId> + '_ {
        self.children.get(&p).into_iter().flatten().copied()
    }

    /// Lowest explicit level in the tree.
    pub fn lowest_level(&self) -> Option<i64> {
        self.chains.values().map(|c| c.low).min()
    }

    pub fn root_level(&self) -> Option<i64> {
        self.root.map(|r| self.chains[&r].top)
    }

    /// Any cluster at `level` (explicit or implicit) whose center lies within
    /// `R^level` of `query`; ties go to the smallest center id.
    pub fn covering_cluster(&self, points: &PointStore, query: &[f64], level: i64) -> Option<Cluster> {
        self.covering_excluding(points, query, level, None)
    }

    fn covering_excluding(
        &self,
        points: &PointStore,
        query: &[f64],
        level: i64,
        exclude: Option<PointId>,
    ) -> Option<Cluster> {
        let radius = self.radius(level);
        self.chains
            .iter()
            .filter(|(q, c)| c.top >= level && Some(**q) != exclude)
            .find(|(q, _)| euclidean(points.coords(**q), query) <= radius)
            .map(|(q, c)| Cluster {
                center: *q,
                level,
                explicit: level >= c.low,
            })
    }

    fn add_child(&mut self, parent: PointId, child: PointId) {
        self.children.entry(parent).or_default().insert(child);
    }

    fn remove_child(&mut self, parent: PointId, child: PointId) {
        if let Some(set) = self.children.get_mut(&parent) {
            set.remove(&child);
            if set.is_empty() {
                self.children.remove(&parent);
            }
        }
    }

    /// Inserts `p`, which must be alive in `points` and absent from the tree.
    pub fn insert(&mut self, points: &PointStore, p: PointId) -> HierarchyDelta {
        assert!(!self.contains(p), "point {p} already in hierarchy");
        let mut events = Vec::new();
        let Some(root) = self.root else {
            self.chains.insert(
                p,
                ChainInfo {
                    low: 0,
                    top: 0,
                    parent: None,
                },
            );
            self.root = Some(p);
            events.push(HierarchyEvent::ClusterAdded { center: p, level: 0 });
            events.push(HierarchyEvent::RootChanged {
                old: None,
                new: Some(p),
            });
            return HierarchyDelta { events };
        };

        let q = points.coords(p).to_vec();
        let covered = |h: &Self, level: i64| h.covering_cluster(points, &q, level).is_some();
        let mut i = self.lowest_level().expect("non-empty");
        if covered(self, i) {
            // Below the lowest explicit level every point has an implicit
            // copy; go down until the level under the new cluster is free.
            while covered(self, i - 1) {
                i -= 1;
            }
        } else {
            loop {
                i += 1;
                let root_top = self.chains[&root].top;
                if i > root_top {
                    self.chains.get_mut(&root).unwrap().top = root_top + 1;
                    events.push(HierarchyEvent::ClusterAdded {
                        center: root,
                        level: root_top + 1,
                    });
                }
                if covered(self, i) {
                    break;
                }
            }
        }
        let parent = self
            .covering_cluster(points, &q, i)
            .expect("loop exits on a covered level")
            .center;
        self.chains.insert(
            p,
            ChainInfo {
                low: i - 1,
                top: i - 1,
                parent: Some(parent),
            },
        );
        self.add_child(parent, p);
        events.push(HierarchyEvent::ClusterAdded {
            center: p,
            level: i - 1,
        });
        events.push(HierarchyEvent::Reparented {
            child: p,
            level: i - 1,
            old_parent: None,
            new_parent: Some(parent),
        });
        HierarchyDelta { events }
    }

    /// Removes every cluster centered at `p`, re-homing orphaned chains level
    /// by level (reparent when covered one level up, otherwise replicate).
    pub fn delete(&mut self, points: &PointStore, p: PointId) -> HierarchyDelta {
        let info = self.chains.get(&p).cloned().expect("point not in hierarchy");
        let mut events = Vec::new();
        let old_root = self.root;
        let kids: Vec<PointId> = self.children_of(p).collect();
        let mut level = kids
            .iter()
            .map(|q| self.chains[q].top + 1)
            .chain(std::iter::once(info.low))
            .min()
            .unwrap();
        if let Some(parent) = info.parent {
            self.remove_child(parent, p);
        }
        self.children.remove(&p);
        if self.root == Some(p) {
            self.root = None;
        }

        let mut marked: BTreeSet<PointId> = BTreeSet::new();
        loop {
            if level >= info.low && level <= info.top {
                events.push(HierarchyEvent::ClusterRemoved { center: p, level });
            }
            if level <= info.top {
                marked.extend(kids.iter().copied().filter(|q| self.chains[q].top == level - 1));
            } else if marked.is_empty() {
                break;
            }
            if level > info.top {
                let others_at_or_above = self
                    .chains
                    .iter()
                    .any(|(q, c)| *q != p && !marked.contains(q) && c.top >= level - 1);
                if marked.len() == 1 && !others_at_or_above {
                    let q = *marked.iter().next().unwrap();
                    self.root = Some(q);
                    marked.clear();
                    break;
                }
                // A marked cluster at the current root's level can only be
                // re-homed above it, so the root has to find a parent too.
                if let Some(r) = self.root {
                    if self.chains[&r].top == level - 1 && !marked.is_empty() {
                        self.root = None;
                        marked.insert(r);
                    }
                }
            }

            let at_level: Vec<PointId> = marked
                .iter()
                .copied()
                .filter(|q| self.chains[q].top == level - 1)
                .collect();
            for q in at_level {
                let qc = points.coords(q).to_vec();
                match self.covering_excluding(points, &qc, level, Some(p)) {
                    Some(cover) => {
                        let old = self.chains[&q].parent;
                        if let Some(o) = old {
                            self.remove_child(o, q);
                        }
                        let chain = self.chains.get_mut(&q).unwrap();
                        chain.parent = Some(cover.center);
                        self.add_child(cover.center, q);
                        marked.remove(&q);
                        events.push(HierarchyEvent::Reparented {
                            child: q,
                            level: level - 1,
                            old_parent: old,
                            new_parent: Some(cover.center),
                        });
                    }
                    None => {
                        if let Some(old) = self.chains[&q].parent {
                            self.remove_child(old, q);
                        }
                        let chain = self.chains.get_mut(&q).unwrap();
                        chain.top = level;
                        chain.parent = None;
                        events.push(HierarchyEvent::ClusterAdded { center: q, level });
                    }
                }
            }
            level += 1;
        }
        self.chains.remove(&p);
        if self.chains.is_empty() {
            self.root = None;
        }
        if self.root.is_none() && !self.chains.is_empty() {
            // The old root survived and nothing was marked.
            self.root = old_root.filter(|r| *r != p);
        }
        if self.root != old_root {
            events.push(HierarchyEvent::RootChanged {
                old: old_root,
                new: self.root,
            });
        }
        HierarchyDelta { events }
    }

    /// Replays a delta produced against an identical pre-state.
    pub fn apply(&mut self, delta: &HierarchyDelta) {
        for e in &delta.events {
            match *e {
                HierarchyEvent::ClusterAdded { center, level } => {
                    if let Some(chain) = self.chains.get(&center).cloned() {
                        assert_eq!(level, chain.top + 1, "replication must extend the chain top");
                        if let Some(parent) = chain.parent {
                            self.remove_child(parent, center);
                        }
                        let c = self.chains.get_mut(&center).unwrap();
                        c.top = level;
                        c.parent = None;
                    } else {
                        self.chains.insert(
                            center,
                            ChainInfo {
                                low: level,
                                top: level,
                                parent: None,
                            },
                        );
                    }
                }
                HierarchyEvent::ClusterRemoved { center, level } => {
                    let chain = self.chains.get(&center).cloned().expect("removing unknown chain");
                    assert_eq!(level, chain.low, "chains are removed bottom-up");
                    if chain.low == chain.top {
                        if let Some(parent) = chain.parent {
                            self.remove_child(parent, center);
                        }
                        self.children.remove(&center);
                        self.chains.remove(&center);
                    } else {
                        self.chains.get_mut(&center).unwrap().low += 1;
                    }
                }
                HierarchyEvent::Reparented {
                    child,
                    old_parent,
                    new_parent,
                    ..
                } => {
                    if let Some(old) = old_parent {
                        self.remove_child(old, child);
                    }
                    self.chains.get_mut(&child).expect("reparent unknown chain").parent = new_parent;
                    if let Some(new) = new_parent {
                        self.add_child(new, child);
                    }
                }
                HierarchyEvent::RootChanged { new, .. } => self.root = new,
            }
        }
    }

    /// One line per explicit cluster,
    /// `cluster <center> <level> parent=<center@level|none>`, sorted by level
    /// descending then center id.
    pub fn dump(&self) -> String {
        let mut rows: Vec<(i64, PointId, String)> = Vec::new();
        for (p, c) in &self.chains {
            for l in c.low..=c.top {
                let parent = if l < c.top {
                    format!("{p}@{}", l + 1)
                } else {
                    match c.parent {
                        Some(q) => format!("{q}@{}", l + 1),
                        None => "none".to_string(),
                    }
                };
                rows.push((l, *p, parent));
            }
        }
        rows.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut out = String::new();
        for (l, p, parent) in rows {
            let _ = writeln!(out, "cluster {p} {l} parent={parent}");
        }
        out
    }

    /// Rebuilds a hierarchy from explicit chains; used when loading state
    /// dumps. No structural validation is performed here.
    pub fn from_chains(r: f64, chains: BTreeMap<PointId, ChainInfo>) -> Self {
        let mut h = Hierarchy::new(r);
        for (p, c) in &chains {
            match c.parent {
                Some(q) => h.add_child(q, *p),
                None => h.root = Some(*p),
            }
        }
        h.chains = chains;
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use HierarchyEvent::*;

    fn setup(coords: &[[f64; 2]]) -> (PointStore, Hierarchy, Vec<HierarchyDelta>) {
        let mut pts = PointStore::new(2);
        let mut h = Hierarchy::new(2.0);
        let mut deltas = Vec::new();
        for c in coords {
            let id = pts.insert(c.to_vec()).unwrap();
            deltas.push(h.insert(&pts, id));
        }
        (pts, h, deltas)
    }

    #[test]
    fn first_point_is_root_at_level_zero() {
        let (_, h, d) = setup(&[[0.0, 0.0]]);
        assert_eq!(h.root(), Some(PointId(0)));
        assert_eq!(h.chain_top_level(PointId(0)), Some(0));
        assert_eq!(
            d[0].events,
            vec![
                ClusterAdded {
                    center: PointId(0),
                    level: 0
                },
                RootChanged {
                    old: None,
                    new: Some(PointId(0))
                }
            ]
        );
    }

    #[test]
    fn far_point_replicates_root() {
        let (_, h, d) = setup(&[[0.0, 0.0], [10.0, 0.0]]);
        let added: Vec<_> = d[1]
            .events
            .iter()
            .filter_map(|e| match e {
                ClusterAdded { center, level } => Some((center.0, *level)),
                _ => None,
            })
            .collect();
        assert_eq!(added, vec![(0, 1), (0, 2), (0, 3), (0, 4), (1, 3)]);
        assert_eq!(h.chain_top_level(PointId(0)), Some(4));
        assert_eq!(h.chain_top_level(PointId(1)), Some(3));
        assert_eq!(h.chain(PointId(1)).unwrap().parent, Some(PointId(0)));
        assert_eq!(
            h.dump().lines().take(2).collect::<Vec<_>>(),
            vec!["cluster 0 4 parent=none", "cluster 0 3 parent=0@4"]
        );
        assert!(h.dump().contains("cluster 1 3 parent=0@4\n"));
    }

    #[test]
    fn near_point_goes_below_root() {
        let (_, h, _) = setup(&[[0.0, 0.0], [0.6, 0.0]]);
        assert_eq!(h.chain_top_level(PointId(1)), Some(-1));
        assert_eq!(h.chain(PointId(1)).unwrap().parent, Some(PointId(0)));
    }

    #[test]
    fn very_near_point_descends_past_lowest_level() {
        // 0.1 is covered at level 0 and at -1, -2, -3; free at -4 (1/16).
        let (_, h, _) = setup(&[[0.0, 0.0], [0.1, 0.0]]);
        assert_eq!(h.chain_top_level(PointId(1)), Some(-4));
        let parent = h.chain(PointId(1)).unwrap();
        assert_eq!(parent.parent, Some(PointId(0)));
    }

    #[test]
    fn delete_root_chain_promotes_child() {
        let (pts, mut h, _) = setup(&[[0.0, 0.0], [10.0, 0.0]]);
        let mut replay = h.clone();
        let d = h.delete(&pts, PointId(0));
        assert_eq!(h.root(), Some(PointId(1)));
        assert_eq!(h.chain_top_level(PointId(1)), Some(4));
        assert_eq!(h.chain(PointId(1)).unwrap().parent, None);
        assert!(d.events.contains(&ClusterAdded {
            center: PointId(1),
            level: 4
        }));
        assert_eq!(
            d.events.last(),
            Some(&RootChanged {
                old: Some(PointId(0)),
                new: Some(PointId(1))
            })
        );
        replay.apply(&d);
        assert_eq!(replay, h);
    }

    #[test]
    fn delete_leaf_only_removes_its_clusters() {
        let (pts, mut h, _) = setup(&[[0.0, 0.0], [10.0, 0.0]]);
        let d = h.delete(&pts, PointId(1));
        assert_eq!(
            d.events,
            vec![ClusterRemoved {
                center: PointId(1),
                level: 3
            }]
        );
        assert_eq!(h.root(), Some(PointId(0)));
    }

    #[test]
    fn orphan_reparented_to_sibling() {
        // 2 hangs below 1; deleting 1 forces 2 upward until 0 or 3 covers it.
        let (pts, mut h, _) = setup(&[[0.0, 0.0], [10.0, 0.0], [11.0, 0.0], [3.0, 0.0]]);
        let mut replay = h.clone();
        let d = h.delete(&pts, PointId(1));
        replay.apply(&d);
        assert_eq!(replay, h);
        assert!(h.chain(PointId(2)).unwrap().parent.is_some());
    }

    #[test]
    fn reparent_without_replication() {
        // 1 sits at level 2 under (0,3); 2 hangs below 1 and 3 is close to
        // both, so the orphaned chain top of 2 finds an existing cover.
        let (pts, mut h, _) = setup(&[[0.0, 0.0], [6.0, 0.0], [7.5, 0.0], [6.6, 1.0]]);
        let mut replay = h.clone();
        let before = h.dump();
        let d = h.delete(&pts, PointId(1));
        replay.apply(&d);
        assert_eq!(replay, h, "before:\n{before}");
        assert!(d.events.iter().any(|e| matches!(e, Reparented { .. })));
    }

    #[test]
    fn covering_cluster_tie_break() {
        let (pts, h, _) = setup(&[[0.0, 0.0], [10.0, 0.0], [3.0, 0.0]]);
        // At level 3 (radius 8) both 0 and 1 cover (5,0); 2 has top < 3.
        let c = h.covering_cluster(&pts, &[5.0, 0.0], 3).unwrap();
        assert_eq!(c.center, PointId(0));
        assert_eq!(h.covering_cluster(&pts, &[0.0, 0.0], 4).unwrap().center, PointId(0));
        assert!(h.covering_cluster(&pts, &[100.0, 0.0], 2).is_none());
    }

    #[test]
    fn last_point_deleted_empties_tree() {
        let (pts, mut h, _) = setup(&[[0.0, 0.0]]);
        let d = h.delete(&pts, PointId(0));
        assert!(h.is_empty());
        assert_eq!(h.root(), None);
        assert_eq!(
            d.events.last(),
            Some(&RootChanged {
                old: Some(PointId(0)),
                new: None
            })
        );
    }
}
