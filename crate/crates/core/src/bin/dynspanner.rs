use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynspanner::harness::{self, RunOptions, EXIT_INPUT, EXIT_OK, OUT_DIR_ENV};
use dynspanner::workload::{gen_churn, gen_clustered, gen_uniform, render_trace, Placement, Trace};
use dynspanner::Error;

#[derive(Parser)]
#[command(name = "dynspanner", version, about = "Dynamic light Euclidean spanner harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a trace; write <out>.ops.csv and <out>.summary.json.
    Run {
        #[arg(long = "trace")]
        trace_file: PathBuf,
        #[arg(long = "config")]
        config_file: PathBuf,
        #[arg(long, default_value_t = 25)]
        verify_every: usize,
        /// Skip verification while more points than this are alive.
        #[arg(long, default_value_t = 400)]
        verify_max_n: usize,
        /// Output prefix; defaults to $DYNSPANNER_OUT_DIR/<trace stem>.
        #[arg(long = "out")]
        out_prefix: Option<PathBuf>,
    },
    /// Generate a trace: uniform, clustered or churn, with key=value params.
    Gen {
        generator: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "out")]
        out_file: PathBuf,
        /// e.g. n=100 dim=2 lo=0 hi=100 clusters=4 spread=1 n_base=60
        /// n_ops=120 delete_fraction=0.3 placement=uniform|clustered|multiscale|expclusters
        /// log2_span=16
        params: Vec<String>,
    },
    /// Run every oracle on a trace or state dump and print the report.
    Verify {
        input: PathBuf,
        #[arg(long = "config")]
        config_file: PathBuf,
    },
    /// Aggregate ops CSVs into a per-n table with fitted trends.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long = "out")]
        out: Option<PathBuf>,
    },
}

fn default_prefix(trace: &Path) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = trace.file_stem().map(|s| s.to_owned()).unwrap_or_else(|| "run".into());
    dir.join(stem)
}

struct Params(BTreeMap<String, String>);

impl Params {
    fn parse(raw: &[String]) -> Result<Self, Error> {
        raw.iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Precondition(format!("parameter {kv:?} is not key=value")))
            })
            .collect::<Result<_, _>>()
            .map(Params)
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, Error> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Precondition(format!("bad value for {key}: {v:?}"))),
        }
    }
}

fn generate(generator: &str, seed: u64, p: &Params) -> Result<Trace, Error> {
    let dim = p.get("dim", 2usize)?;
    match generator {
        "uniform" => Ok(gen_uniform(
            p.get("n", 100)?,
            dim,
            seed,
            p.get("lo", 0.0)?,
            p.get("hi", 100.0)?,
        )),
        "clustered" => Ok(gen_clustered(
            p.get("n", 100)?,
            dim,
            seed,
            p.get("clusters", 4)?,
            p.get("spread", 1.0)?,
        )),
        "churn" => {
            let placement = match p.get("placement", "uniform".to_string())?.as_str() {
                "uniform" => Placement::Uniform {
                    lo: p.get("lo", 0.0)?,
                    hi: p.get("hi", 100.0)?,
                },
                "clustered" => Placement::Clustered {
                    clusters: p.get("clusters", 4)?,
                    spread: p.get("spread", 1.0)?,
                },
                "multiscale" => Placement::Multiscale {
                    log2_span: p.get("log2_span", 16.0)?,
                },
                "expclusters" => Placement::ExpClusters {
                    clusters: p.get("clusters", 8)?,
                    log2_span: p.get("log2_span", 16.0)?,
                },
                other => return Err(Error::Precondition(format!("unknown placement {other:?}"))),
            };
            gen_churn(
                p.get("n_base", 60)?,
                p.get("n_ops", 120)?,
                dim,
                seed,
                p.get("delete_fraction", 0.3)?,
                placement,
            )
        }
        other => Err(Error::Precondition(format!("unknown generator {other:?}"))),
    }
}

fn cli_gen(generator: &str, raw: &[String], seed: u64, out: &Path) -> i32 {
    let result = Params::parse(raw)
        .and_then(|p| generate(generator, seed, &p))
        .and_then(|t| std::fs::write(out, render_trace(&t)).map_err(Error::from));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let status = match Cli::parse().cmd {
        Cmd::Run {
            trace_file,
            config_file,
            verify_every,
            verify_max_n,
            out_prefix,
        } => {
            let prefix = out_prefix.unwrap_or_else(|| default_prefix(&trace_file));
            let opts = RunOptions {
                verify_every,
                verify_max_n,
                ..RunOptions::default()
            };
            harness::cli_run(&trace_file, &config_file, opts, &prefix)
        }
        Cmd::Gen {
            generator,
            seed,
            out_file,
            params,
        } => cli_gen(&generator, &params, seed, &out_file),
        Cmd::Verify { input, config_file } => harness::cli_verify(&input, &config_file),
        Cmd::Report { files, out } => harness::cli_report(&files, out.as_deref()),
    };
    ExitCode::from(status as u8)
}
