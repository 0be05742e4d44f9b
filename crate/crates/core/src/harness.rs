//! Trace replay, per-operation recourse records, periodic verification and
//! run aggregation. The CLI in `src/bin` is a thin layer over this module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Config, ConfigFile};
use crate::error::{Error, Result};
use crate::geometry::{PairKey, PointId, PointStore};
use crate::hierarchy::{ChainInfo, Hierarchy};
use crate::oracle::{aspect_ratio, verify_spanner, VerificationReport};
use crate::spanner::{DynamicSpanner, OpKind};
use crate::workload::{parse_trace, Trace, TraceMeta, TraceOp};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;

/// First row of every ops CSV.
pub const CSV_SCHEMA: &str = "schema=1";

pub const CSV_COLUMNS: [&str; 18] = [
    "op_seq",
    "op_kind",
    "n",
    "log2_aspect_ratio",
    "sparse_edge_events",
    "light_edge_events",
    "maintenance_iterations",
    "converged",
    "cum_sparse_edge_events",
    "cum_light_edge_events",
    "cum_insert_ops",
    "cum_delete_ops",
    "cum_insert_light_events",
    "cum_delete_light_events",
    "light_membership_ops",
    "max_degree",
    "lightness",
    "max_stretch",
];

/// Environment variable naming the default output directory of `run`.
pub const OUT_DIR_ENV: &str = "DYNSPANNER_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Run the oracle suite every this many operations (0 disables it).
    pub verify_every: usize,
    /// Skip periodic verification while more points than this are alive.
    pub verify_max_n: usize,
    /// Verify the final state regardless of `verify_every`, if small enough.
    pub verify_final: bool,
    /// Compute the aspect ratio after every operation (quadratic).
    pub track_aspect_ratio: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            verify_every: 25,
            verify_max_n: 400,
            verify_final: true,
            track_aspect_ratio: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpRecord {
    pub op_seq: usize,
    pub op_kind: OpKind,
    pub n: usize,
    pub log2_aspect_ratio: f64,
    pub sparse_edge_events: usize,
    pub light_edge_events: usize,
    pub maintenance_iterations: usize,
    pub converged: bool,
    pub cum_sparse_edge_events: usize,
    pub cum_light_edge_events: usize,
    pub cum_insert_ops: usize,
    pub cum_delete_ops: usize,
    pub cum_insert_light_events: usize,
    pub cum_delete_light_events: usize,
    pub light_membership_ops: usize,
    pub max_degree: Option<usize>,
    pub lightness: Option<f64>,
    pub max_stretch: Option<f64>,
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.16e}")
    }
}

impl OpRecord {
    fn csv_row(&self) -> Vec<String> {
        vec![
            self.op_seq.to_string(),
            self.op_kind.to_string(),
            self.n.to_string(),
            fmt_f64(self.log2_aspect_ratio),
            self.sparse_edge_events.to_string(),
            self.light_edge_events.to_string(),
            self.maintenance_iterations.to_string(),
            self.converged.to_string(),
            self.cum_sparse_edge_events.to_string(),
            self.cum_light_edge_events.to_string(),
            self.cum_insert_ops.to_string(),
            self.cum_delete_ops.to_string(),
            self.cum_insert_light_events.to_string(),
            self.cum_delete_light_events.to_string(),
            self.light_membership_ops.to_string(),
            self.max_degree.map(|d| d.to_string()).unwrap_or_default(),
            self.lightness.map(fmt_f64).unwrap_or_default(),
            self.max_stretch.map(fmt_f64).unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: Config,
    pub trace: Option<TraceMeta>,
    pub ops: usize,
    pub inserts: usize,
    pub deletes: usize,
    pub final_n: usize,
    pub amortized_insert_recourse: f64,
    pub amortized_delete_recourse: f64,
    pub mean_log2_aspect_ratio_at_deletes: f64,
    pub amortized_delete_recourse_per_log2_aspect_ratio: f64,
    pub amortized_sparse_insert_recourse: f64,
    pub amortized_sparse_delete_recourse: f64,
    pub nonconverged_ops: usize,
    pub final_light_edges: usize,
    pub final_report: Option<VerificationReport>,
    pub checkpoints: Vec<VerificationReport>,
    /// Set when a checkpoint failed and the replay stopped there.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<OpRecord>,
    pub summary: RunSummary,
    pub status: i32,
    pub spanner: DynamicSpanner,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Replays `trace` through the full stack. Stops early with status 2 at the
/// first failing checkpoint; status 3 if any maintenance run hit its cap.
pub fn replay(trace: &Trace, config: &Config, opts: RunOptions) -> Result<RunOutcome> {
    if trace.dim != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: trace.dim,
        });
    }
    let mut sp = DynamicSpanner::new(config.clone());
    let mut records = Vec::with_capacity(trace.ops.len());
    let mut checkpoints = Vec::new();
    let mut failure = None;
    let mut warned = false;
    let (mut cum_sparse, mut cum_light, mut ins, mut del, mut ins_light, mut del_light) = (0, 0, 0, 0, 0, 0);
    let (mut ins_sparse, mut del_sparse) = (0usize, 0usize);
    let mut nonconverged = 0;
    let mut log_at_deletes = Vec::new();
    for (seq, op) in trace.ops.iter().enumerate() {
        let out = match op {
            TraceOp::Insert(c) => sp.insert(c.clone())?,
            TraceOp::Delete(id) => sp.delete(*id)?,
        };
        cum_sparse += out.sparse_edge_events;
        cum_light += out.light_edge_events;
        match out.kind {
            OpKind::Insert => {
                ins += 1;
                ins_light += out.light_edge_events;
                ins_sparse += out.sparse_edge_events;
            }
            OpKind::Delete => {
                del += 1;
                del_light += out.light_edge_events;
                del_sparse += out.sparse_edge_events;
            }
        }
        if !out.converged {
            nonconverged += 1;
        }
        let log2_aspect = if opts.track_aspect_ratio {
            aspect_ratio(sp.points()).map_or(0.0, f64::log2)
        } else {
            f64::NAN
        };
        if out.kind == OpKind::Delete {
            log_at_deletes.push(log2_aspect);
        }
        let mut rec = OpRecord {
            op_seq: seq,
            op_kind: out.kind,
            n: sp.len(),
            log2_aspect_ratio: log2_aspect,
            sparse_edge_events: out.sparse_edge_events,
            light_edge_events: out.light_edge_events,
            maintenance_iterations: out.maintenance_iterations,
            converged: out.converged,
            cum_sparse_edge_events: cum_sparse,
            cum_light_edge_events: cum_light,
            cum_insert_ops: ins,
            cum_delete_ops: del,
            cum_insert_light_events: ins_light,
            cum_delete_light_events: del_light,
            light_membership_ops: out.light_membership_ops,
            max_degree: None,
            lightness: None,
            max_stretch: None,
        };
        let last = seq + 1 == trace.ops.len();
        let periodic = opts.verify_every > 0 && (seq + 1) % opts.verify_every == 0;
        if (periodic || (last && opts.verify_final)) && sp.len() > opts.verify_max_n {
            if !warned {
                log::warn!(
                    "verification skipped above n = {} (n = {} at op {seq})",
                    opts.verify_max_n,
                    sp.len()
                );
                warned = true;
            }
        } else if periodic || (last && opts.verify_final) {
            let report = verify_spanner(&sp, seq);
            rec.max_degree = Some(report.max_degree);
            rec.lightness = Some(report.lightness);
            rec.max_stretch = Some(report.max_stretch.max);
            let fails = report.failures(config);
            checkpoints.push(report);
            if !fails.is_empty() {
                failure = Some(format!("op {seq}: {}", fails.join("; ")));
                records.push(rec);
                break;
            }
        }
        records.push(rec);
    }
    let mean_log = if log_at_deletes.is_empty() {
        0.0
    } else {
        log_at_deletes.iter().sum::<f64>() / log_at_deletes.len() as f64
    };
    let amortized_del = ratio(del_light, del);
    let final_report = checkpoints
        .last()
        .filter(|r| records.last().is_some_and(|x| x.op_seq == r.op_seq))
        .cloned();
    let status = if failure.is_some() {
        EXIT_VERIFY
    } else if nonconverged > 0 {
        EXIT_NONCONVERGED
    } else {
        EXIT_OK
    };
    let summary = RunSummary {
        config: config.clone(),
        trace: trace.meta.clone(),
        ops: records.len(),
        inserts: ins,
        deletes: del,
        final_n: sp.len(),
        amortized_insert_recourse: ratio(ins_light, ins),
        amortized_delete_recourse: amortized_del,
        mean_log2_aspect_ratio_at_deletes: mean_log,
        amortized_delete_recourse_per_log2_aspect_ratio: if mean_log > 0.0 { amortized_del / mean_log } else { 0.0 },
        amortized_sparse_insert_recourse: ratio(ins_sparse, ins),
        amortized_sparse_delete_recourse: ratio(del_sparse, del),
        nonconverged_ops: nonconverged,
        final_light_edges: sp.light().member_count(),
        final_report,
        checkpoints,
        failure,
    };
    Ok(RunOutcome {
        records,
        summary,
        status,
        spanner: sp,
    })
}

pub fn write_ops_csv(path: &Path, records: &[OpRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))?;
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([CSV_SCHEMA]).map_err(io)?;
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in records {
        w.write_record(r.csv_row()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &RunSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<Config> {
    ConfigFile::from_json(&read_text(path)?)?.derive()
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_INPUT
}

/// `run`: replays a trace, writes `<prefix>.ops.csv` and
/// `<prefix>.summary.json`.
pub fn cli_run(trace_path: &Path, config_path: &Path, opts: RunOptions, out_prefix: &Path) -> i32 {
    let setup = || -> Result<(Trace, Config)> {
        let trace = parse_trace(&read_text(trace_path)?)?;
        let config = load_config(config_path)?;
        Ok((trace, config))
    };
    let (trace, config) = match setup() {
        Ok(x) => x,
        Err(e) => return report_error(&e),
    };
    let outcome = match replay(&trace, &config, opts) {
        Ok(o) => o,
        Err(e) => return report_error(&e),
    };
    let csv_path = with_suffix(out_prefix, ".ops.csv");
    let json_path = with_suffix(out_prefix, ".summary.json");
    if let Err(e) = write_ops_csv(&csv_path, &outcome.records) {
        return report_error(&e);
    }
    if let Err(e) = std::fs::write(&json_path, summary_json(&outcome.summary)) {
        return report_error(&e.into());
    }
    if let Some(f) = &outcome.summary.failure {
        eprintln!("verification failed: {f}");
    }
    if outcome.status == EXIT_NONCONVERGED {
        eprintln!(
            "maintenance did not converge after {} operations",
            outcome.summary.nonconverged_ops
        );
    }
    outcome.status
}

pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Text snapshot of the full state: points, clusters and bucket members.
///
/// ```text
/// state v1
/// dim <d>
/// point <id> <x1> ... <xd>
/// cluster <center> <level> parent=<center@level|none>
/// bucket <i> <a> <b> <length>
/// ```
pub fn dump_state(sp: &DynamicSpanner) -> String {
    let mut out = String::from("state v1\n");
    let points = sp.points();
    let _ = writeln!(out, "dim {}", points.dim());
    for p in points.alive() {
        let _ = write!(out, "point {p}");
        for x in points.coords(p) {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out.push_str(&sp.hierarchy().dump());
    out.push_str(&sp.light().dump());
    out
}

/// Rebuilds a spanner from [`dump_state`] output. The hierarchy is taken
/// as given (so a corrupted dump stays corrupted), S1 is rebuilt from it and
/// bucket membership is restored from the `bucket` lines.
pub fn load_state(text: &str, config: &Config) -> Result<DynamicSpanner> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
    match lines.next() {
        Some((_, l)) if l.trim() == "state v1" => {}
        Some((i, _)) => return Err(perr(i, "expected `state v1`".into())),
        None => return Err(perr(0, "empty state dump".into())),
    }
    let mut dim = None;
    let mut points: Vec<(PointId, Vec<f64>)> = Vec::new();
    let mut clusters: BTreeMap<PointId, (i64, i64, Option<PointId>)> = BTreeMap::new();
    let mut members: Vec<PairKey> = Vec::new();
    for (i, line) in lines {
        let w: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| perr(i, format!("bad id {s:?}")));
        match w[0] {
            "dim" if w.len() == 2 => {
                dim = Some(w[1].parse::<usize>().map_err(|_| perr(i, "bad dim".into()))?);
            }
            "point" if w.len() >= 2 => {
                let c = w[2..]
                    .iter()
                    .map(|x| x.parse::<f64>().map_err(|_| perr(i, format!("bad coordinate {x:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                points.push((PointId(num(w[1])?), c));
            }
            "cluster" if w.len() == 4 => {
                let p = PointId(num(w[1])?);
                let level: i64 = w[2].parse().map_err(|_| perr(i, "bad level".into()))?;
                let parent = match w[3].strip_prefix("parent=") {
                    Some("none") => None,
                    Some(s) => {
                        let (q, _) = s.split_once('@').ok_or_else(|| perr(i, "bad parent".into()))?;
                        Some(PointId(num(q)?))
                    }
                    None => return Err(perr(i, "bad parent".into())),
                };
                let e = clusters.entry(p).or_insert((level, level, None));
                e.0 = e.0.min(level);
                if level >= e.1 {
                    e.1 = level;
                    e.2 = parent.filter(|q| *q != p);
                }
            }
            "bucket" if w.len() == 5 => {
                members.push(PairKey::new(PointId(num(w[2])?), PointId(num(w[3])?)));
            }
            _ => return Err(perr(i, format!("unrecognized line {line:?}"))),
        }
    }
    let dim = dim.ok_or_else(|| perr(0, "missing dim".into()))?;
    if dim != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: dim,
        });
    }
    let mut store = PointStore::new(dim);
    points.sort_by_key(|p| p.0);
    for (id, c) in points {
        store.insert_with_id(id, c)?;
    }
    let chains: BTreeMap<PointId, ChainInfo> = clusters
        .into_iter()
        .map(|(p, (low, top, parent))| (p, ChainInfo { low, top, parent }))
        .collect();
    let ids: BTreeSet<PointId> = store.alive().collect();
    if chains.keys().copied().collect::<BTreeSet<_>>() != ids {
        return Err(Error::Schema("cluster centers differ from the point set".into()));
    }
    let hierarchy = Hierarchy::from_chains(config.r, chains);
    DynamicSpanner::from_parts(config.clone(), store, hierarchy, &members)
}

/// `verify`: loads a trace (replayed) or a state dump, runs every oracle
/// once and prints the report as JSON. Status 2 on any failure.
pub fn cli_verify(input: &Path, config_path: &Path) -> i32 {
    let load = || -> Result<DynamicSpanner> {
        let config = load_config(config_path)?;
        let text = read_text(input)?;
        if text.trim_start().starts_with("state v1") {
            load_state(&text, &config)
        } else {
            let trace = parse_trace(&text)?;
            let opts = RunOptions {
                verify_every: 0,
                verify_final: false,
                track_aspect_ratio: false,
                ..RunOptions::default()
            };
            Ok(replay(&trace, &config, opts)?.spanner)
        }
    };
    let sp = match load() {
        Ok(sp) => sp,
        Err(e) => return report_error(&e),
    };
    let report = verify_spanner(&sp, 0);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    let fails = report.failures(sp.config());
    if fails.is_empty() {
        EXIT_OK
    } else {
        eprintln!("verification failed: {}", fails.join("; "));
        EXIT_VERIFY
    }
}

/// One ops CSV reduced to the quantities `report` aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub n: usize,
    pub amortized_ins: f64,
    pub amortized_del: f64,
    pub mean_log2_aspect: f64,
    pub amortized_del_per_log2_aspect: f64,
    pub lightness: Option<f64>,
    pub max_degree: Option<usize>,
    pub max_stretch: Option<f64>,
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Option<T> {
    if s.is_empty() {
        None
    } else {
        s.parse().ok()
    }
}

fn parse_float(s: &str) -> Option<f64> {
    if s == "inf" {
        Some(f64::INFINITY)
    } else {
        parse_opt(s)
    }
}

pub fn read_ops_csv(text: &str) -> Result<RunRow> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = rdr.records();
    let schema = rows
        .next()
        .transpose()
        .map_err(|e| Error::Schema(e.to_string()))?
        .ok_or_else(|| Error::Schema("empty file".into()))?;
    if schema.len() != 1 || &schema[0] != CSV_SCHEMA {
        return Err(Error::Schema(format!("expected {CSV_SCHEMA}")));
    }
    let header = rows
        .next()
        .transpose()
        .map_err(|e| Error::Schema(e.to_string()))?
        .ok_or_else(|| Error::Schema("missing header".into()))?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Schema("column set differs from schema 1".into()));
    }
    let col = |name: &str| CSV_COLUMNS.iter().position(|c| *c == name).unwrap();
    let mut out = RunRow {
        n: 0,
        amortized_ins: 0.0,
        amortized_del: 0.0,
        mean_log2_aspect: 0.0,
        amortized_del_per_log2_aspect: 0.0,
        lightness: None,
        max_degree: None,
        max_stretch: None,
    };
    let (mut log_sum, mut deletes) = (0.0, 0usize);
    let mut last: Option<csv::StringRecord> = None;
    for (i, rec) in rows.enumerate() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        if rec.len() != CSV_COLUMNS.len() {
            return Err(Error::Schema(format!("row {} has {} fields", i + 3, rec.len())));
        }
        if &rec[col("op_kind")] == "delete" {
            deletes += 1;
            log_sum += parse_float(&rec[col("log2_aspect_ratio")]).unwrap_or(0.0);
        }
        if let Some(l) = parse_float(&rec[col("lightness")]) {
            out.lightness = Some(l);
            out.max_degree = parse_opt(&rec[col("max_degree")]);
            out.max_stretch = parse_float(&rec[col("max_stretch")]);
        }
        last = Some(rec);
    }
    if let Some(rec) = last {
        let get = |name: &str| -> Result<usize> {
            rec[col(name)]
                .parse()
                .map_err(|_| Error::Schema(format!("bad {name} value")))
        };
        out.n = get("n")?;
        out.amortized_ins = ratio(get("cum_insert_light_events")?, get("cum_insert_ops")?);
        out.amortized_del = ratio(get("cum_delete_light_events")?, get("cum_delete_ops")?);
    }
    if deletes > 0 {
        out.mean_log2_aspect = log_sum / deletes as f64;
        if out.mean_log2_aspect > 0.0 {
            out.amortized_del_per_log2_aspect = out.amortized_del / out.mean_log2_aspect;
        }
    }
    Ok(out)
}

/// Least-squares line `y = a + b x`; `None` with fewer than two distinct x.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Groups runs by final `n`, averages them, and appends `# fit` lines.
pub fn aggregate(runs: &[RunRow]) -> String {
    let mut groups: BTreeMap<usize, Vec<&RunRow>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.n).or_default().push(r);
    }
    let mut out = String::from(
        "n,runs,amortized_ins,amortized_del,amortized_del_per_log2_aspect,lightness,max_degree,max_stretch\n",
    );
    let opt = |v: Vec<f64>| {
        if v.is_empty() {
            String::new()
        } else {
            fmt_f64(mean(v.into_iter()))
        }
    };
    for (n, rs) in &groups {
        let _ = writeln!(
            out,
            "{n},{},{},{},{},{},{},{}",
            rs.len(),
            fmt_f64(mean(rs.iter().map(|r| r.amortized_ins))),
            fmt_f64(mean(rs.iter().map(|r| r.amortized_del))),
            fmt_f64(mean(rs.iter().map(|r| r.amortized_del_per_log2_aspect))),
            opt(rs.iter().filter_map(|r| r.lightness).collect()),
            rs.iter()
                .filter_map(|r| r.max_degree)
                .max()
                .map(|d| d.to_string())
                .unwrap_or_default(),
            rs.iter()
                .filter_map(|r| r.max_stretch)
                .reduce(f64::max)
                .map(fmt_f64)
                .unwrap_or_default(),
        );
    }
    let xs: Vec<f64> = runs.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.amortized_ins).collect();
    if let Some((a, b)) = fit_line(&xs, &ys) {
        let _ = writeln!(out, "# fit amortized_ins = {} + {} * n", fmt_f64(a), fmt_f64(b));
    }
    let with_del: Vec<&RunRow> = runs.iter().filter(|r| r.mean_log2_aspect > 0.0).collect();
    let xs: Vec<f64> = with_del.iter().map(|r| r.mean_log2_aspect).collect();
    let ys: Vec<f64> = with_del.iter().map(|r| r.amortized_del).collect();
    if let Some((a, b)) = fit_line(&xs, &ys) {
        let _ = writeln!(
            out,
            "# fit amortized_del = {} + {} * log2_aspect",
            fmt_f64(a),
            fmt_f64(b)
        );
    }
    out
}

/// `report`: aggregates ops CSVs into a table on stdout (or `out`).
pub fn cli_report(files: &[PathBuf], out: Option<&Path>) -> i32 {
    if files.is_empty() {
        return report_error(&Error::Precondition("report needs at least one CSV".into()));
    }
    let mut runs = Vec::new();
    for f in files {
        match read_text(f).and_then(|t| read_ops_csv(&t)) {
            Ok(r) => runs.push(r),
            Err(e) => {
                eprintln!("{}:", f.display());
                return report_error(&e);
            }
        }
    }
    let table = aggregate(&runs);
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, table) {
                return report_error(&e.into());
            }
        }
        None => print!("{table}"),
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{gen_churn, gen_uniform, Placement};

    fn quiet() -> RunOptions {
        RunOptions {
            verify_every: 0,
            verify_final: false,
            ..RunOptions::default()
        }
    }

    fn csv_text(records: &[OpRecord]) -> String {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ops.csv");
        write_ops_csv(&path, records).unwrap();
        std::fs::read_to_string(path).unwrap()
    }

    fn churn() -> Trace {
        gen_churn(30, 60, 2, 3, 0.4, Placement::Uniform { lo: 0.0, hi: 100.0 }).unwrap()
    }

    #[test]
    fn csv_round_trip_reproduces_the_summary() {
        let config = Config::desk_default(2);
        let run = replay(&churn(), &config, quiet()).unwrap();
        let text = csv_text(&run.records);
        assert!(text.starts_with("schema=1\n"));
        let row = read_ops_csv(&text).unwrap();
        assert_eq!(row.n, run.summary.final_n);
        assert_eq!(row.amortized_ins, run.summary.amortized_insert_recourse);
        assert_eq!(row.amortized_del, run.summary.amortized_delete_recourse);
        assert!((row.mean_log2_aspect - run.summary.mean_log2_aspect_ratio_at_deletes).abs() < 1e-12);
    }

    #[test]
    fn replay_is_deterministic() {
        let config = Config::desk_default(2);
        let a = csv_text(&replay(&churn(), &config, quiet()).unwrap().records);
        let b = csv_text(&replay(&churn(), &config, quiet()).unwrap().records);
        assert_eq!(a, b);
    }

    fn synthetic(n: usize, per_op: usize) -> String {
        let mut s = format!("{CSV_SCHEMA}\n{}\n", CSV_COLUMNS.join(","));
        for i in 0..n {
            let _ = writeln!(
                s,
                "{i},insert,{},0,0,{per_op},0,true,0,{},{},0,{},0,0,,,",
                i + 1,
                (i + 1) * per_op,
                i + 1,
                (i + 1) * per_op
            );
        }
        s
    }

    #[test]
    fn constant_recourse_fits_a_flat_line() {
        let runs: Vec<RunRow> = [50, 100, 200]
            .iter()
            .map(|&n| read_ops_csv(&synthetic(n, 4)).unwrap())
            .collect();
        assert!(runs.iter().all(|r| r.amortized_ins == 4.0));
        let (a, b) = fit_line(&runs.iter().map(|r| r.n as f64).collect::<Vec<_>>(), &[4.0; 3]).unwrap();
        assert!((a - 4.0).abs() < 1e-12 && b.abs() < 1e-12);
        let table = aggregate(&runs);
        assert!(table.contains("# fit amortized_ins"));
        assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);
    }

    #[test]
    fn identical_runs_aggregate_like_one() {
        let row = read_ops_csv(&synthetic(20, 3)).unwrap();
        let one = aggregate(std::slice::from_ref(&row));
        let two = aggregate(&[row.clone(), row]);
        let strip = |t: &str| {
            t.lines()
                .nth(1)
                .unwrap()
                .replacen(",1,", ",_,", 1)
                .replacen(",2,", ",_,", 1)
        };
        assert_eq!(strip(&one), strip(&two));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let text = synthetic(3, 1);
        assert!(read_ops_csv(&text.replacen("schema=1", "schema=2", 1)).is_err());
        assert!(read_ops_csv(&text.replacen("lightness", "weight", 1)).is_err());
        assert!(read_ops_csv("").is_err());
    }

    fn buckets(sp: &DynamicSpanner) -> BTreeSet<String> {
        sp.light()
            .dump()
            .lines()
            .filter(|l| l.starts_with("bucket"))
            .map(|l| l.split_whitespace().skip(2).take(2).collect::<Vec<_>>().join(" "))
            .collect()
    }

    #[test]
    fn recorded_recourse_matches_bucket_dump_churn() {
        let mut sp = DynamicSpanner::new(Config::desk_default(2));
        let mut before = buckets(&sp);
        for op in &churn().ops {
            let out = match op {
                TraceOp::Insert(c) => sp.insert(c.clone()).unwrap(),
                TraceOp::Delete(id) => sp.delete(*id).unwrap(),
            };
            let after = buckets(&sp);
            assert_eq!(out.light_edge_events, before.symmetric_difference(&after).count());
            before = after;
        }
    }

    #[test]
    fn state_dump_round_trips() {
        let config = Config::desk_default(2);
        let sp = replay(&gen_uniform(40, 2, 6, 0.0, 100.0), &config, quiet())
            .unwrap()
            .spanner;
        let text = dump_state(&sp);
        let back = load_state(&text, &config).unwrap();
        assert_eq!(dump_state(&back), text);
        assert_eq!(back.light_edges(), sp.light_edges());
        assert!(verify_spanner(&back, 0).invariant_violations.is_empty());
    }

    #[test]
    fn malformed_state_is_rejected() {
        let config = Config::desk_default(2);
        assert!(load_state("", &config).is_err());
        assert!(load_state("state v1\ndim 3\n", &config).is_err());
        assert!(load_state("state v1\ndim 2\npoint 0 1 2\n", &config).is_err());
        assert!(load_state("state v1\ndim 2\nbogus\n", &config).is_err());
    }
}
