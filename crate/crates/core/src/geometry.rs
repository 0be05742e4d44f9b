//! Points, distances and the index/size bucket arithmetic shared by every
//! other module.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative guard used when snapping `log_c` values onto integer boundaries.
pub const LOG_SNAP_TOLERANCE: f64 = 1e-12;

/// Sequential point identifier. Ids are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointId(pub u64);

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered point pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey(pub PointId, pub PointId);

impl PairKey {
    pub fn new(a: PointId, b: PointId) -> Self {
        if a <= b {
            PairKey(a, b)
        } else {
            PairKey(b, a)
        }
    }

    pub fn is_loop(&self) -> bool {
        self.0 == self.1
    }

    pub fn contains(&self, p: PointId) -> bool {
        self.0 == p || self.1 == p
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.0, self.1)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `floor(log_base(x))`, snapped to the nearest integer when within
/// [`LOG_SNAP_TOLERANCE`] (relative) of it.
pub fn snapped_log_floor(x: f64, ln_base: f64) -> i64 {
    let v = x.ln() / ln_base;
    let r = v.round();
    if (v - r).abs() <= LOG_SNAP_TOLERANCE * v.abs().max(1.0) {
        r as i64
    } else {
        v.floor() as i64
    }
}

/// `ceil(log_base(x))` with the same snapping rule.
pub fn snapped_log_ceil(x: f64, ln_base: f64) -> i64 {
    let v = x.ln() / ln_base;
    let r = v.round();
    if (v - r).abs() <= LOG_SNAP_TOLERANCE * v.abs().max(1.0) {
        r as i64
    } else {
        v.ceil() as i64
    }
}

/// Bucket coordinates of a pair: `index = m mod k`, `size = floor(m / k)`
/// where `m = floor(log_c |uv|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BucketCoord {
    pub index: usize,
    pub size: i64,
}

impl BucketCoord {
    /// The integer `m = k * size + index`.
    pub fn exponent(&self, k: usize) -> i64 {
        self.size * k as i64 + self.index as i64
    }
}

/// Index/size arithmetic for a fixed base `c` and bucket count `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucketing {
    pub c: f64,
    pub k: usize,
    ln_c: f64,
}

impl Bucketing {
    pub fn new(c: f64, k: usize) -> Self {
        assert!(c > 1.0 && k >= 1, "bucketing requires c > 1 and k >= 1");
        Bucketing { c, k, ln_c: c.ln() }
    }

    pub fn coord(&self, length: f64) -> Result<BucketCoord> {
        if length <= 0.0 {
            return Err(Error::IdenticalPoints);
        }
        let m = snapped_log_floor(length, self.ln_c);
        let k = self.k as i64;
        Ok(BucketCoord {
            index: m.rem_euclid(k) as usize,
            size: m.div_euclid(k),
        })
    }

    /// Smallest length whose size is `size` (`c^(k * size)`).
    pub fn size_floor_length(&self, size: i64) -> f64 {
        (self.ln_c * (size as f64) * (self.k as f64)).exp()
    }

    /// Whether an edge of the given length has size strictly below `size`.
    /// Lengths far from the boundary avoid the logarithm.
    pub fn size_below(&self, length: f64, size: i64) -> bool {
        let t = self.size_floor_length(size);
        if length < t * (1.0 - 1e-10) {
            true
        } else if length > t * (1.0 + 1e-10) {
            false
        } else {
            self.coord(length).map(|b| b.size < size).unwrap_or(true)
        }
    }
}

/// Storage for the current point set `V`.
#[derive(Debug, Clone, Default)]
pub struct PointStore {
    dim: usize,
    coords: Vec<Vec<f64>>,
    alive: BTreeSet<PointId>,
    by_bits: HashMap<Vec<u64>, PointId>,
}

fn coord_bits(c: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 are the same location.
    c.iter().map(|x| (x + 0.0).to_bits()).collect()
}

impl PointStore {
    pub fn new(dim: usize) -> Self {
        PointStore {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of ids ever assigned.
    pub fn next_id(&self) -> PointId {
        PointId(self.coords.len() as u64)
    }

    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn insert(&mut self, coords: Vec<f64>) -> Result<PointId> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: coords.len(),
            });
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoordinate);
        }
        let bits = coord_bits(&coords);
        if let Some(&other) = self.by_bits.get(&bits) {
            return Err(Error::DuplicatePoint(other));
        }
        let id = self.next_id();
        self.coords.push(coords);
        self.alive.insert(id);
        self.by_bits.insert(bits, id);
        Ok(id)
    }

    /// Inserts with an explicit id; used when loading state dumps. Ids below
    /// `id` that were never seen are recorded as retired.
    pub fn insert_with_id(&mut self, id: PointId, coords: Vec<f64>) -> Result<()> {
        if (id.0 as usize) < self.coords.len() {
            return Err(Error::Precondition(format!("point id {id} already assigned")));
        }
        while (self.coords.len() as u64) < id.0 {
            self.coords.push(vec![f64::NAN; self.dim]);
        }
        let got = self.insert(coords)?;
        debug_assert_eq!(got, id);
        Ok(())
    }

    pub fn remove(&mut self, id: PointId) -> Result<()> {
        if !self.alive.remove(&id) {
            return Err(Error::DeadPoint(id));
        }
        self.by_bits.remove(&coord_bits(&self.coords[id.0 as usize]));
        Ok(())
    }

    pub fn is_alive(&self, id: PointId) -> bool {
        self.alive.contains(&id)
    }

    /// Coordinates of any point ever inserted, alive or retired.
    pub fn coords(&self, id: PointId) -> &[f64] {
        &self.coords[id.0 as usize]
    }

    pub fn alive(&self) -> impl Iterator<Item = PointId> + '_ {
        self.alive.iter().copied()
    }

    pub fn alive_ids(&self) -> Vec<PointId> {
        self.alive.iter().copied().collect()
    }

    pub fn distance(&self, u: PointId, v: PointId) -> f64 {
        euclidean(self.coords(u), self.coords(v))
    }

    /// Overwrites coordinates in place. Only meant for building corrupted
    /// fixtures in tests.
    #[doc(hidden)]
    pub fn move_point_unchecked(&mut self, id: PointId, coords: Vec<f64>) {
        self.by_bits.remove(&coord_bits(&self.coords[id.0 as usize]));
        self.by_bits.insert(coord_bits(&coords), id);
        self.coords[id.0 as usize] = coords;
    }
}
