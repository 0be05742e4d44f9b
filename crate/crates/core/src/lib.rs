//! Fully-dynamic light, bounded-degree `(1+eps)`-spanners for Euclidean
//! point sets, with brute-force oracles and recourse accounting.
//!
//! The stack is layered: a net-like cluster [`hierarchy`] over the points,
//! the bounded-degree [`sparse`] spanner built on it, and the bucketed
//! [`light`] spanner selected from the sparse spanner's edges. [`spanner`]
//! drives all three through point insertions and deletions; [`oracle`]
//! re-derives every checkable property independently.

pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hierarchy;
pub mod light;
pub mod oracle;
pub mod spanner;
pub mod sparse;
pub mod workload;

pub use config::{derive_config, Config, ConfigFile, Mode, Overrides};
pub use error::{Error, Result};
pub use geometry::{BucketCoord, Bucketing, PairKey, PointId, PointStore};
pub use hierarchy::{Hierarchy, HierarchyDelta, HierarchyEvent};
pub use spanner::DynamicSpanner;
