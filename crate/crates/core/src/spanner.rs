//! End-to-end updates: point store → hierarchy → sparse spanner → light
//! spanner.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{PairKey, PointId, PointStore};
use crate::hierarchy::{Hierarchy, HierarchyDelta};
use crate::light::LightSpanner;
use crate::sparse::{S1Delta, SparseSpanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Insert,
    Delete,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Insert => "insert",
            OpKind::Delete => "delete",
        })
    }
}

/// Recourse of one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpOutcome {
    pub kind: OpKind,
    pub point: PointId,
    /// Explicit clusters added or removed.
    pub cluster_changes: usize,
    /// S1 edges added, removed or reassigned.
    pub sparse_edge_events: usize,
    /// Net light-spanner edges added or removed by the whole operation.
    pub light_edge_events: usize,
    /// Gross membership changes, including ones undone within the operation.
    pub light_membership_ops: usize,
    pub maintenance_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct DynamicSpanner {
    config: Config,
    points: PointStore,
    hierarchy: Hierarchy,
    sparse: SparseSpanner,
    light: LightSpanner,
    last_hierarchy_delta: HierarchyDelta,
    last_s1_delta: S1Delta,
}

impl DynamicSpanner {
    pub fn new(config: Config) -> Self {
        DynamicSpanner {
            points: PointStore::new(config.dim),
            hierarchy: Hierarchy::new(config.r),
            sparse: SparseSpanner::new(&config),
            light: LightSpanner::new(&config),
            config,
            last_hierarchy_delta: HierarchyDelta::default(),
            last_s1_delta: S1Delta::default(),
        }
    }

    /// Assembles a spanner from a loaded state: S1 is rebuilt from
    /// `hierarchy`, and `members` become bucket members. Every member must be
    /// a potential pair of the rebuilt S1.
    pub fn from_parts(config: Config, points: PointStore, hierarchy: Hierarchy, members: &[PairKey]) -> Result<Self> {
        let sparse = SparseSpanner::build(&config, &hierarchy, &points);
        let mut light = LightSpanner::new(&config);
        for (pair, _) in sparse.potential_pairs(&points) {
            light.force_pair(&points, pair, false);
        }
        for &pair in members {
            if !light.is_registered(pair) {
                return Err(Error::Schema(format!("bucket edge {pair} is not a potential pair")));
            }
            light.force_pair(&points, pair, true);
        }
        Ok(DynamicSpanner {
            config,
            points,
            hierarchy,
            sparse,
            light,
            last_hierarchy_delta: HierarchyDelta::default(),
            last_s1_delta: S1Delta::default(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn points(&self) -> &PointStore {
        &self.points
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn sparse(&self) -> &SparseSpanner {
        &self.sparse
    }

    pub fn light(&self) -> &LightSpanner {
        &self.light
    }

    pub fn light_mut(&mut self) -> &mut LightSpanner {
        &mut self.light
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last_hierarchy_delta(&self) -> &HierarchyDelta {
        &self.last_hierarchy_delta
    }

    pub fn last_s1_delta(&self) -> &S1Delta {
        &self.last_s1_delta
    }

    /// Edges of the light spanner `∪ S_i`.
    pub fn light_edges(&self) -> Vec<PairKey> {
        self.light.member_pairs()
    }

    /// Edges of the bounded-degree spanner S1.
    pub fn s1_edges(&self) -> Vec<PairKey> {
        self.sparse.s1_edges().map(|(k, _)| k).collect()
    }

    pub fn insert(&mut self, coords: Vec<f64>) -> Result<OpOutcome> {
        let p = self.points.insert(coords)?;
        let hd = self.hierarchy.insert(&self.points, p);
        let sd = self.sparse.apply_hierarchy_delta(&self.hierarchy, &self.points, &hd);
        self.light.begin_op();
        let ops = self.light.membership_ops();
        let lu = self.light.on_point_inserted(&self.points, p, &sd);
        Ok(self.finish(OpKind::Insert, p, hd, sd, ops, lu))
    }

    pub fn delete(&mut self, p: PointId) -> Result<OpOutcome> {
        if !self.points.is_alive(p) {
            return Err(Error::DeadPoint(p));
        }
        let hd = self.hierarchy.delete(&self.points, p);
        self.points.remove(p)?;
        let sd = self.sparse.apply_hierarchy_delta(&self.hierarchy, &self.points, &hd);
        self.light.begin_op();
        let ops = self.light.membership_ops();
        let lu = self.light.on_point_deleted(&self.points, p, &sd);
        Ok(self.finish(OpKind::Delete, p, hd, sd, ops, lu))
    }

    fn finish(
        &mut self,
        kind: OpKind,
        point: PointId,
        hd: HierarchyDelta,
        sd: S1Delta,
        ops_before: usize,
        lu: crate::light::LightUpdate,
    ) -> OpOutcome {
        let out = OpOutcome {
            kind,
            point,
            cluster_changes: hd.cluster_changes(),
            sparse_edge_events: sd.s1_events(),
            light_edge_events: self.light.net_churn(),
            light_membership_ops: self.light.membership_ops() - ops_before,
            maintenance_iterations: lu.maintenance.iterations,
            converged: lu.maintenance.converged,
        };
        if !out.converged {
            log::warn!("maintenance hit its iteration cap after {kind} of point {point}");
        }
        self.last_hierarchy_delta = hd;
        self.last_s1_delta = sd;
        out
    }
}
