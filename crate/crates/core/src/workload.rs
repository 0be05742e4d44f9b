//! Operation traces: seeded generators and the text format.
//!
//! ```text
//! # comment
//! dim 2
//! + 0.5 1.25     insert; ids are assigned 0, 1, 2, ... in insert order
//! - 0            delete a live id
//! ```
//!
//! Generator metadata is carried in a `# gen <name> seed=<s> key=value...`
//! comment line so rendered traces are self-describing.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::PointId;

/// xorshift64* (Vigna 2016): `x ^= x >> 12; x ^= x << 25; x ^= x >> 27;`
/// output `x * 0x2545F4914F6CDD1D`. The seed is passed through one
/// splitmix64 step so that seed 0 is usable.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        XorShift64Star {
            state: if z == 0 { 0x9E37_79B9_7F4A_7C15 } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in `0..n` (multiply-shift; the bias is negligible here).
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (one draw per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TraceOp {
    Insert(Vec<f64>),
    Delete(PointId),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMeta {
    pub name: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub dim: usize,
    pub ops: Vec<TraceOp>,
    pub meta: Option<TraceMeta>,
}

impl Trace {
    pub fn inserts(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, TraceOp::Insert(_))).count()
    }

    pub fn deletes(&self) -> usize {
        self.ops.len() - self.inserts()
    }
}

/// Where generated points are placed.
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// Uniform in the box `[lo, hi]^d`.
    Uniform { lo: f64, hi: f64 },
    /// Gaussian blobs of standard deviation `spread` around centers uniform
    /// in `[0, 100]^d`.
    Clustered { clusters: usize, spread: f64 },
    /// Log-uniform radius in `[1, 2^log2_span]` around the origin with a
    /// uniform direction: exponentially spread scales, so the aspect ratio
    /// grows like `2^log2_span`.
    Multiscale { log2_span: f64 },
    /// Unit-spread Gaussian blobs whose centers sit at distances
    /// `2^(j log2_span / (clusters - 1))` from the origin, `j = 0..clusters`,
    /// each in a random direction.
    ExpClusters { clusters: usize, log2_span: f64 },
}

impl Placement {
    fn describe(&self, params: &mut BTreeMap<String, String>) {
        match self {
            Placement::Uniform { lo, hi } => {
                params.insert("placement".into(), "uniform".into());
                params.insert("lo".into(), lo.to_string());
                params.insert("hi".into(), hi.to_string());
            }
            Placement::Clustered { clusters, spread } => {
                params.insert("placement".into(), "clustered".into());
                params.insert("clusters".into(), clusters.to_string());
                params.insert("spread".into(), spread.to_string());
            }
            Placement::Multiscale { log2_span } => {
                params.insert("placement".into(), "multiscale".into());
                params.insert("log2_span".into(), log2_span.to_string());
            }
            Placement::ExpClusters { clusters, log2_span } => {
                params.insert("placement".into(), "expclusters".into());
                params.insert("clusters".into(), clusters.to_string());
                params.insert("log2_span".into(), log2_span.to_string());
            }
        }
    }
}

struct Sampler {
    dim: usize,
    placement: Placement,
    centers: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(dim: usize, placement: Placement, rng: &mut XorShift64Star) -> Self {
        let centers = match &placement {
            Placement::Clustered { clusters, .. } => (0..(*clusters).max(1))
                .map(|_| (0..dim).map(|_| rng.uniform(0.0, 100.0)).collect())
                .collect(),
            Placement::ExpClusters { clusters, log2_span } => {
                let m = (*clusters).max(2);
                (0..m)
                    .map(|j| {
                        let r = (log2_span * j as f64 / (m - 1) as f64).exp2();
                        random_direction(dim, rng).into_iter().map(|x| x * r).collect()
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Sampler {
            dim,
            placement,
            centers,
        }
    }

    fn draw(&self, rng: &mut XorShift64Star) -> Vec<f64> {
        match &self.placement {
            Placement::Uniform { lo, hi } => (0..self.dim).map(|_| rng.uniform(*lo, *hi)).collect(),
            Placement::Clustered { spread, .. } => {
                let c = &self.centers[rng.below(self.centers.len())];
                c.iter().map(|x| x + spread * rng.normal()).collect()
            }
            Placement::Multiscale { log2_span } => {
                let r = (rng.next_f64() * log2_span).exp2();
                random_direction(self.dim, rng).into_iter().map(|x| x * r).collect()
            }
            Placement::ExpClusters { .. } => {
                let c = &self.centers[rng.below(self.centers.len())];
                c.iter().map(|x| x + rng.normal()).collect()
            }
        }
    }
}

fn random_direction(dim: usize, rng: &mut XorShift64Star) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    dir.into_iter().map(|x| x / norm).collect()
}

fn key(c: &[f64]) -> Vec<u64> {
    c.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// Draws `n` distinct points; duplicate draws are re-rolled.
fn distinct_points(
    n: usize,
    sampler: &Sampler,
    rng: &mut XorShift64Star,
    seen: &mut HashSet<Vec<u64>>,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = sampler.draw(rng);
        if seen.insert(key(&p)) {
            out.push(p);
        }
    }
    out
}

fn meta(name: &str, seed: u64, params: BTreeMap<String, String>) -> Option<TraceMeta> {
    Some(TraceMeta {
        name: name.into(),
        seed,
        params,
    })
}

pub fn gen_uniform(n: usize, dim: usize, seed: u64, lo: f64, hi: f64) -> Trace {
    let mut rng = XorShift64Star::new(seed);
    let placement = Placement::Uniform { lo, hi };
    let mut params = BTreeMap::from([("n".to_string(), n.to_string())]);
    placement.describe(&mut params);
    let sampler = Sampler::new(dim, placement, &mut rng);
    let ops = distinct_points(n, &sampler, &mut rng, &mut HashSet::new())
        .into_iter()
        .map(TraceOp::Insert)
        .collect();
    Trace {
        dim,
        ops,
        meta: meta("uniform", seed, params),
    }
}

pub fn gen_clustered(n: usize, dim: usize, seed: u64, clusters: usize, spread: f64) -> Trace {
    let mut rng = XorShift64Star::new(seed);
    let placement = Placement::Clustered { clusters, spread };
    let mut params = BTreeMap::from([("n".to_string(), n.to_string())]);
    placement.describe(&mut params);
    let sampler = Sampler::new(dim, placement, &mut rng);
    let ops = distinct_points(n, &sampler, &mut rng, &mut HashSet::new())
        .into_iter()
        .map(TraceOp::Insert)
        .collect();
    Trace {
        dim,
        ops,
        meta: meta("clustered", seed, params),
    }
}

/// `n_base` inserts, then `n_ops` operations, each a delete with
/// probability `delete_fraction` (uniform over alive ids) unless only two
/// points are alive.
pub fn gen_churn(
    n_base: usize,
    n_ops: usize,
    dim: usize,
    seed: u64,
    delete_fraction: f64,
    placement: Placement,
) -> Result<Trace> {
    if !(0.0..1.0).contains(&delete_fraction) {
        return Err(Error::InvalidConfig(format!(
            "delete fraction must lie in [0, 1), got {delete_fraction}"
        )));
    }
    let mut rng = XorShift64Star::new(seed);
    let mut params = BTreeMap::from([
        ("n_base".to_string(), n_base.to_string()),
        ("n_ops".to_string(), n_ops.to_string()),
        ("delete_fraction".to_string(), delete_fraction.to_string()),
    ]);
    placement.describe(&mut params);
    let sampler = Sampler::new(dim, placement, &mut rng);
    let mut seen = HashSet::new();
    let mut ops = Vec::with_capacity(n_base + n_ops);
    let mut alive: Vec<u64> = Vec::new();
    let mut next_id = 0u64;
    let mut alive_keys: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for p in distinct_points(n_base, &sampler, &mut rng, &mut seen) {
        alive.push(next_id);
        alive_keys.insert(next_id, key(&p));
        next_id += 1;
        ops.push(TraceOp::Insert(p));
    }
    for _ in 0..n_ops {
        let delete = rng.next_f64() < delete_fraction;
        if delete && alive.len() > 2 {
            let victim = alive.swap_remove(rng.below(alive.len()));
            // Its location may be reused by a later insert.
            if let Some(k) = alive_keys.remove(&victim) {
                seen.remove(&k);
            }
            ops.push(TraceOp::Delete(PointId(victim)));
        } else {
            let p = distinct_points(1, &sampler, &mut rng, &mut seen).pop().unwrap();
            alive.push(next_id);
            alive_keys.insert(next_id, key(&p));
            next_id += 1;
            ops.push(TraceOp::Insert(p));
        }
    }
    Ok(Trace {
        dim,
        ops,
        meta: meta("churn", seed, params),
    })
}

pub fn render_trace(trace: &Trace) -> String {
    let mut out = String::new();
    if let Some(m) = &trace.meta {
        let _ = write!(out, "# gen {} seed={}", m.name, m.seed);
        for (k, v) in &m.params {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "dim {}", trace.dim);
    for op in &trace.ops {
        match op {
            TraceOp::Insert(c) => {
                out.push('+');
                for x in c {
                    // Display gives the shortest string that round-trips.
                    let _ = write!(out, " {x}");
                }
                out.push('\n');
            }
            TraceOp::Delete(id) => {
                let _ = writeln!(out, "- {id}");
            }
        }
    }
    out
}

fn parse_meta(rest: &str, line: usize) -> Result<TraceMeta> {
    let mut words = rest.split_whitespace();
    let name = words.next().ok_or_else(|| Error::Parse {
        line,
        msg: "generator name missing".into(),
    })?;
    let mut seed = None;
    let mut params = BTreeMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected key=value, got {w:?}"),
        })?;
        if k == "seed" {
            seed = Some(v.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad seed {v:?}"),
            })?);
        } else {
            params.insert(k.to_string(), v.to_string());
        }
    }
    Ok(TraceMeta {
        name: name.to_string(),
        seed: seed.ok_or_else(|| Error::Parse {
            line,
            msg: "seed missing".into(),
        })?,
        params,
    })
}

/// Parses and validates a trace: deletes must name alive ids, inserts must
/// have the declared dimension, finite coordinates and a location distinct
/// from every alive point.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut dim = None;
    let mut ops = Vec::new();
    let mut meta = None;
    let mut alive: BTreeSet<u64> = BTreeSet::new();
    let mut locations: HashSet<Vec<u64>> = HashSet::new();
    let mut coords_of: Vec<Vec<u64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| Error::Parse { line, msg };
        let trimmed = raw.trim();
        if let Some(rest) = trimmed.strip_prefix("# gen ") {
            if meta.is_none() && dim.is_none() {
                meta = Some(parse_meta(rest, line)?);
            }
            continue;
        }
        let content = trimmed.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let head = words.next().unwrap();
        match (head, dim) {
            ("dim", None) => {
                let d: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .filter(|d| *d >= 1)
                    .ok_or_else(|| err("dim must be a positive integer".into()))?;
                if words.next().is_some() {
                    return Err(err("trailing tokens after dim".into()));
                }
                dim = Some(d);
            }
            (_, None) => return Err(err("first line must be `dim <d>`".into())),
            ("+", Some(d)) => {
                let c: Vec<f64> = words
                    .map(|w| w.parse::<f64>().map_err(|_| err(format!("bad coordinate {w:?}"))))
                    .collect::<Result<_>>()?;
                if c.len() != d {
                    return Err(err(format!("expected {d} coordinates, got {}", c.len())));
                }
                if c.iter().any(|x| !x.is_finite()) {
                    return Err(err("coordinate is not finite".into()));
                }
                let k = key(&c);
                if !locations.insert(k.clone()) {
                    return Err(err("duplicate of an alive point".into()));
                }
                alive.insert(coords_of.len() as u64);
                coords_of.push(k);
                ops.push(TraceOp::Insert(c));
            }
            ("-", Some(_)) => {
                let id: u64 = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| err("delete needs an id".into()))?;
                if words.next().is_some() {
                    return Err(err("trailing tokens after delete".into()));
                }
                if !alive.remove(&id) {
                    return Err(err(format!("delete of dead id {id}")));
                }
                locations.remove(&coords_of[id as usize]);
                ops.push(TraceOp::Delete(PointId(id)));
            }
            ("dim", Some(_)) => return Err(err("repeated dim line".into())),
            (other, Some(_)) => return Err(err(format!("unknown operation {other:?}"))),
        }
    }
    let dim = dim.ok_or(Error::Parse {
        line: text.lines().count().max(1),
        msg: "missing `dim <d>` line".into(),
    })?;
    Ok(Trace { dim, ops, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xorshift_reference_values() {
        // First outputs for state 1, straight from the recurrence.
        let mut r = XorShift64Star { state: 1 };
        let mut x: u64 = 1;
        for _ in 0..5 {
            x ^= x >> 12;
            x ^= x << 25;
            x ^= x >> 27;
            assert_eq!(r.next_u64(), x.wrapping_mul(0x2545F4914F6CDD1D));
        }
        let mut r = XorShift64Star { state: 1 };
        assert_eq!(r.next_u64(), 5180492295206395165);
    }

    #[test]
    fn parse_example() {
        let t = parse_trace("dim 2\n+ 0 0\n+ 10 0\n- 0\n").unwrap();
        assert_eq!(t.dim, 2);
        assert_eq!(
            t.ops,
            vec![
                TraceOp::Insert(vec![0.0, 0.0]),
                TraceOp::Insert(vec![10.0, 0.0]),
                TraceOp::Delete(PointId(0))
            ]
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(
            parse_trace("dim 2\n- 5\n"),
            Err(Error::Parse {
                line: 2,
                msg: "delete of dead id 5".into()
            })
        );
        assert!(matches!(parse_trace("- 5"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_trace("dim 2\n+ 1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_trace("dim 2\n+ 1 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_trace("dim 2\n+ 1 1\n+ 1 1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_trace("dim 2\n* 1 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn comments_and_blank_lines() {
        let t = parse_trace("# hello\n\ndim 1  # one axis\n+ 3 # point\n").unwrap();
        assert_eq!(t.ops, vec![TraceOp::Insert(vec![3.0])]);
        assert_eq!(t.meta, None);
    }

    #[test]
    fn reinsert_after_delete_is_allowed() {
        let t = parse_trace("dim 1\n+ 1\n+ 2\n- 0\n+ 1\n- 2\n").unwrap();
        assert_eq!(t.ops.len(), 5);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_uniform(1, 2, 7, 0.0, 1.0).ops.len(), 1);
        assert_eq!(
            render_trace(&gen_uniform(100, 2, 7, 0.0, 1.0)),
            render_trace(&gen_uniform(100, 2, 7, 0.0, 1.0))
        );
        assert_ne!(
            render_trace(&gen_uniform(100, 2, 7, 0.0, 1.0)),
            render_trace(&gen_uniform(100, 2, 8, 0.0, 1.0))
        );
        let c1 = gen_clustered(50, 3, 1, 4, 0.5);
        assert_eq!(c1, gen_clustered(50, 3, 1, 4, 0.5));
        assert_eq!(gen_clustered(1, 2, 3, 2, 1.0).ops.len(), 1);
    }

    #[test]
    fn round_trip() {
        let traces = [
            gen_uniform(40, 3, 1, -5.0, 5.0),
            gen_clustered(40, 2, 2, 3, 0.01),
            gen_churn(10, 50, 2, 3, 0.4, Placement::Multiscale { log2_span: 20.0 }).unwrap(),
        ];
        for t in traces {
            let text = render_trace(&t);
            let back = parse_trace(&text).unwrap();
            assert_eq!(back, t);
            assert_eq!(render_trace(&back), text);
        }
    }

    #[test]
    fn churn_keeps_two_points_alive() {
        let t = gen_churn(3, 500, 2, 9, 0.9, Placement::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        let mut alive = 0i64;
        for op in &t.ops {
            alive += if matches!(op, TraceOp::Insert(_)) { 1 } else { -1 };
            assert!(alive >= 2 || matches!(op, TraceOp::Insert(_)));
        }
        // The trace parses, so every delete targets an alive id.
        parse_trace(&render_trace(&t)).unwrap();
    }

    #[test]
    fn churn_without_deletes_is_insert_only() {
        let t = gen_churn(5, 30, 2, 1, 0.0, Placement::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        assert_eq!(t.deletes(), 0);
        assert!(gen_churn(5, 30, 2, 1, 1.0, Placement::Uniform { lo: 0.0, hi: 1.0 }).is_err());
    }

    #[test]
    fn uniform_axis_histogram_passes_chi_square() {
        let t = gen_uniform(10_000, 2, 11, 0.0, 1.0);
        for axis in 0..2 {
            let mut bins = [0usize; 10];
            for op in &t.ops {
                if let TraceOp::Insert(c) = op {
                    bins[((c[axis] * 10.0) as usize).min(9)] += 1;
                }
            }
            let chi2: f64 = bins.iter().map(|&o| (o as f64 - 1000.0).powi(2) / 1000.0).sum();
            // 9 degrees of freedom; the 0.999 quantile is 27.88.
            assert!(chi2 < 27.88, "axis {axis}: chi2 = {chi2}");
        }
    }

    #[test]
    fn clustered_variance_matches_spread() {
        // One cluster, so the sample variance estimates spread^2 directly.
        let t = gen_clustered(20_000, 2, 5, 1, 2.0);
        let pts: Vec<&Vec<f64>> = t
            .ops
            .iter()
            .map(|o| match o {
                TraceOp::Insert(c) => c,
                _ => unreachable!(),
            })
            .collect();
        for axis in 0..2 {
            let mean = pts.iter().map(|p| p[axis]).sum::<f64>() / pts.len() as f64;
            let var = pts.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / (pts.len() - 1) as f64;
            assert!((var - 4.0).abs() < 0.15, "axis {axis}: variance {var}");
        }
    }

    #[test]
    fn churn_delete_frequency_within_three_sigma() {
        let f = 0.3;
        let n_ops = 10_000;
        let t = gen_churn(50, n_ops, 2, 21, f, Placement::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        let deletes = t.deletes() as f64;
        let sigma = (n_ops as f64 * f * (1.0 - f)).sqrt();
        assert!((deletes - n_ops as f64 * f).abs() <= 3.0 * sigma, "deletes = {deletes}");
    }
}
