use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kqkp::bench::{self, load_instance};
use kqkp::bnb::{self, NodeEvent, SolveReport, SolveStatus, SolverConfig};
use kqkp::bundle::{self, BundleSettings};
use kqkp::generator::{generate, GenSpec};
use kqkp::heuristics::primal_heuristic;
use kqkp::instance::{preprocess, Instance, Status};
use kqkp::oracle::{self, enumerate};
use kqkp::relaxation::build_padded;

#[derive(Parser)]
#[command(name = "kqkp", version, about = "Exact solver for the k-item quadratic knapsack problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and print a JSON report.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write the report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compute the root upper bound only.
    Bound {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = BoundMode::Sdpmet)]
        mode: BoundMode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a random instance.
    Generate {
        #[arg(long)]
        n: usize,
        /// Percentage of nonzero profits.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=100))]
        density: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the generated file (named after n, density, seed).
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Exact output path; overrides --out-dir.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Solve every *.txt instance in a directory; print a CSV summary per (n, density).
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Leave out the time column (for reproducible output).
        #[arg(long)]
        no_time: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare the solver against exhaustive enumeration (n <= 24).
    Check {
        path: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BoundMode {
    /// Semidefinite bound without cuts.
    Sdp,
    /// Semidefinite bound tightened with triangle inequalities.
    Sdpmet,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

#[derive(Args, Clone, Serialize)]
struct RunArgs {
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 10800.0, value_parser = positive)]
    time_limit: f64,
    /// Interior-point tolerance used for every bound evaluation.
    #[arg(long, default_value_t = 1e-5, value_parser = positive)]
    tol: f64,
    /// New cuts per pool update (default: min(5n, 300)).
    #[arg(long)]
    cuts_m: Option<usize>,
    /// Descent steps between pool updates.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    cut_update_period: u64,
    /// Cuts with a multiplier below this are dropped.
    #[arg(long, default_value_t = 1e-5, value_parser = positive)]
    gamma_drop: f64,
    /// Oracle evaluations at the root.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    root_evals: u64,
    /// Oracle evaluations at other nodes.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    node_evals: u64,
    /// Finish nodes by branch-and-prune when their k is at most this.
    #[arg(long, default_value_t = 5)]
    bnp_node_k: usize,
    /// Solve by branch-and-prune alone when k is at most this.
    #[arg(long, default_value_t = 10)]
    bnp_root_k: usize,
    /// Worker threads (nodes for solve, instances for bench).
    #[arg(long, env = "KQKP_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Write per-node and per-evaluation traces (CSV) into this directory.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

impl RunArgs {
    fn bundle(&self, evals: u64) -> BundleSettings {
        BundleSettings {
            ipm_tol: self.tol,
            max_evals: evals as usize,
            gamma_drop: self.gamma_drop,
            update_period: self.cut_update_period as usize,
            cuts_per_update: self.cuts_m,
            ..BundleSettings::default()
        }
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            time_limit: Some(Duration::from_secs_f64(self.time_limit)),
            root_bundle: self.bundle(self.root_evals),
            node_bundle: self.bundle(self.node_evals),
            bnp_root_k: self.bnp_root_k,
            bnp_node_k: self.bnp_node_k,
            threads: self.threads as usize,
            trace: self.trace_dir.is_some(),
        }
    }
}

#[derive(Serialize)]
struct SolveJson<'a> {
    version: &'static str,
    instance: &'a Path,
    status: SolveStatus,
    value: i64,
    selected: Vec<usize>,
    x: Vec<u8>,
    source: kqkp::heuristics::Source,
    /// `null` when the gap is undefined (optimum zero, bound positive).
    root_bound: f64,
    root_gap_percent: Option<f64>,
    nodes: usize,
    time_ms: u64,
    evals: usize,
    config: &'a RunArgs,
}

#[derive(Serialize)]
struct BoundJson<'a> {
    version: &'static str,
    instance: &'a Path,
    mode: BoundMode,
    bound: f64,
    /// Value of the greedy heuristic, for reference.
    heuristic: i64,
    evals: usize,
    time_ms: u64,
}

#[derive(Serialize)]
struct CheckJson<'a> {
    instance: &'a Path,
    oracle_value: Option<i64>,
    solver_value: Option<i64>,
    feasible_subsets: u64,
    agree: bool,
}

/// Failure with a message for stderr and an exit code.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(1, e.to_string())
    }
}

fn main() -> ExitCode {
    // Exit code 2 means "time limit", so usage errors are mapped to 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Solve { path, run, output } => {
            let inst = load_instance(&path)?;
            let report = bnb::solve(&inst, &run.solver())?;
            if let Some(dir) = &run.trace_dir {
                write_traces(dir, &path, &report.trace)?;
            }
            let json = solve_json(&path, &inst, &report, &run);
            emit(&serde_json::to_string_pretty(&json)?, output.as_deref())?;
            Ok(match report.status {
                SolveStatus::Optimal => 0,
                SolveStatus::TimeLimit => 2,
            })
        }
        Command::Bound { path, mode, run } => {
            let inst = load_instance(&path)?;
            let start = Instant::now();
            let prep = preprocess(&inst);
            if let Status::Infeasible = prep.status {
                return Err(Failure(1, format!("infeasible: k = {} but at most {} items fit", inst.k(), prep.k_max)));
            }
            let relax = build_padded(&inst)?;
            let mut settings = run.bundle(run.root_evals);
            settings.use_cuts = matches!(mode, BoundMode::Sdpmet);
            let res = bundle::minimize(&relax, f64::NEG_INFINITY, &settings)?;
            let heuristic = primal_heuristic(&inst, &prep)?.value;
            let json = BoundJson {
                version: env!("CARGO_PKG_VERSION"),
                instance: &path,
                mode,
                bound: res.bound,
                heuristic,
                evals: res.evals,
                time_ms: start.elapsed().as_millis() as u64,
            };
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(0)
        }
        Command::Generate {
            n,
            density,
            seed,
            out_dir,
            output,
        } => {
            if n < 3 {
                return Err(Failure(1, "--n must be at least 3".into()));
            }
            let spec = GenSpec::new(n, density, seed);
            let path = output.unwrap_or_else(|| out_dir.join(spec.file_name()));
            std::fs::write(&path, generate(&spec).to_text()).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Bench {
            dir,
            run,
            no_time,
            output,
        } => {
            let files = bench::instance_files(&dir)?;
            let mut config = run.solver();
            config.trace = false;
            let rows = bench::run(&files, &config, run.threads as usize)?;
            emit(&bench::to_csv(&rows, !no_time), output.as_deref())?;
            Ok(0)
        }
        Command::Check { path, run } => {
            let inst = load_instance(&path)?;
            if inst.n() > oracle::MAX_ITEMS {
                return Err(Failure(1, format!("check needs n <= {}, got {}", oracle::MAX_ITEMS, inst.n())));
            }
            let want = enumerate(&inst)?;
            let got = match bnb::solve(&inst, &run.solver()) {
                Ok(r) => Some(r.best.value),
                Err(bnb::SolveError::Infeasible { .. }) => None,
            };
            let json = CheckJson {
                instance: &path,
                oracle_value: want.value,
                solver_value: got,
                feasible_subsets: want.feasible_count,
                agree: want.value == got,
            };
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(if json.agree { 0 } else { 3 })
        }
    }
}

fn solve_json<'a>(path: &'a Path, inst: &Instance, report: &SolveReport, run: &'a RunArgs) -> SolveJson<'a> {
    let x = &report.best.x;
    debug_assert_eq!(inst.total_value(x), report.best.value);
    SolveJson {
        version: env!("CARGO_PKG_VERSION"),
        instance: path,
        status: report.status,
        value: report.best.value,
        selected: (0..x.len()).filter(|&j| x[j]).collect(),
        x: x.iter().map(|&v| v as u8).collect(),
        source: report.best.source,
        root_bound: report.root_bound,
        root_gap_percent: report.root_gap_percent.is_finite().then_some(report.root_gap_percent),
        nodes: report.nodes,
        time_ms: report.time_ms,
        evals: report.evals,
        config: run,
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure(1, format!("{}: {e}", p.display()))),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

/// `<stem>.nodes.csv` with one line per node and `<stem>.bundle.csv` with
/// one line per oracle evaluation.
fn write_traces(dir: &Path, instance: &Path, trace: &[NodeEvent]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let stem = instance.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    let mut nodes = csv::Writer::from_path(dir.join(format!("{stem}.nodes.csv")))?;
    nodes.write_record(["id", "parent", "fixed_item", "fixed_value", "bound", "incumbent", "action"])?;
    let mut evals = csv::Writer::from_path(dir.join(format!("{stem}.bundle.csv")))?;
    evals.write_record(["node", "eval", "f", "cuts", "kind"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for ev in trace {
        nodes.write_record([
            ev.id.to_string(),
            opt(ev.parent.map(|p| p.to_string())),
            opt(ev.fixed.map(|(j, _)| j.to_string())),
            opt(ev.fixed.map(|(_, v)| (v as u8).to_string())),
            ev.bound.to_string(),
            ev.incumbent.to_string(),
            format!("{:?}", ev.action).to_lowercase(),
        ])?;
        for b in &ev.bundle {
            evals.write_record([
                ev.id.to_string(),
                b.eval.to_string(),
                b.f.to_string(),
                b.cuts.to_string(),
                format!("{:?}", b.kind).to_lowercase(),
            ])?;
        }
    }
    nodes.flush()?;
    evals.flush()?;
    Ok(())
}
