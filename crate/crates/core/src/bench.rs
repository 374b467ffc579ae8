//! Batch runs over a directory of instance files, summarized per `(n, δ)`
//! group: average root gap, time and node count over the solved instances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::bnb::{self, SolveError, SolveReport, SolveStatus, SolverConfig};
use crate::instance::{parse_instance, validate, Instance, InstanceError, ParseError, Symmetry};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: InstanceError },
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{path}: {source}")]
    Solve { path: PathBuf, source: SolveError },
    #[error("cannot read directory {path}: {source}")]
    Dir { path: PathBuf, source: std::io::Error },
}

/// Reads and validates one instance file.
pub fn load_instance(path: &Path) -> Result<Instance, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_owned(),
        source,
    })?;
    let raw = parse_instance(&text).map_err(|source| LoadError::Parse {
        path: path.to_owned(),
        source,
    })?;
    validate(raw, Symmetry::Reject).map_err(|source| LoadError::Invalid {
        path: path.to_owned(),
        source,
    })
}

/// Percentage of nonzero entries on and above the diagonal, rounded.
pub fn measured_density(inst: &Instance) -> u32 {
    let n = inst.n();
    let pairs = n * (n + 1) / 2;
    let nonzero = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).filter(|&(i, j)| inst.profit(i, j) != 0).count();
    if pairs == 0 {
        0
    } else {
        ((100 * nonzero) as f64 / pairs as f64).round() as u32
    }
}

/// Density encoded in a generator file name (`..._d{δ}_...`), if any.
fn density_from_name(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    stem.split('_').find_map(|part| part.strip_prefix('d')?.parse().ok())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub delta: u32,
    pub instances: usize,
    pub solved: usize,
    pub gap_root_percent: f64,
    pub time_s: f64,
    pub nodes: f64,
}

/// Instance files (`*.txt`) in `dir`, sorted by name.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let entries = std::fs::read_dir(dir).map_err(|source| BenchError::Dir {
        path: dir.to_owned(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Solves every file; `workers > 1` runs that many solves at once, each
/// single-threaded.
pub fn run(files: &[PathBuf], config: &SolverConfig, workers: usize) -> Result<Vec<BenchRow>, BenchError> {
    let results: Vec<Result<_, BenchError>> = if workers > 1 {
        let config = SolverConfig {
            threads: 1,
            ..config.clone()
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| files.par_iter().map(|p| solve_file(p, &config)).collect())
    } else {
        files.iter().map(|p| solve_file(p, config)).collect()
    };

    let mut groups: BTreeMap<(usize, u32), Vec<SolveReport>> = BTreeMap::new();
    for r in results {
        let (n, delta, report) = r?;
        groups.entry((n, delta)).or_default().push(report);
    }
    Ok(groups
        .into_iter()
        .map(|((n, delta), reports)| {
            let solved: Vec<&SolveReport> = reports.iter().filter(|r| r.status == SolveStatus::Optimal).collect();
            let mean = |f: &dyn Fn(&SolveReport) -> f64| {
                if solved.is_empty() {
                    f64::NAN
                } else {
                    solved.iter().map(|r| f(r)).sum::<f64>() / solved.len() as f64
                }
            };
            BenchRow {
                n,
                delta,
                instances: reports.len(),
                solved: solved.len(),
                gap_root_percent: mean(&|r| r.root_gap_percent),
                time_s: mean(&|r| r.time_ms as f64 / 1000.0),
                nodes: mean(&|r| r.nodes as f64),
            }
        })
        .collect())
}

fn solve_file(path: &Path, config: &SolverConfig) -> Result<(usize, u32, SolveReport), BenchError> {
    let inst = load_instance(path)?;
    let delta = density_from_name(path).unwrap_or_else(|| measured_density(&inst));
    let report = bnb::solve(&inst, config).map_err(|source| BenchError::Solve {
        path: path.to_owned(),
        source,
    })?;
    Ok((inst.n(), delta, report))
}

/// CSV with header `n,delta,gap_root_pct,time_s,nodes,solved,instances`;
/// `with_time = false` omits `time_s` so that runs can be compared byte for
/// byte.
pub fn to_csv(rows: &[BenchRow], with_time: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n", "delta", "gap_root_pct"];
    if with_time {
        header.push("time_s");
    }
    header.extend(["nodes", "solved", "instances"]);
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.n.to_string(), r.delta.to_string(), format!("{:.3}", r.gap_root_percent)];
        if with_time {
            rec.push(format!("{:.3}", r.time_s));
        }
        rec.extend([format!("{:.1}", r.nodes), r.solved.to_string(), r.instances.to_string()]);
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, GenSpec};

    #[test]
    fn density_sources() {
        assert_eq!(density_from_name(Path::new("x/kqkp_n12_d75_s3.txt")), Some(75));
        assert_eq!(density_from_name(Path::new("plain.txt")), None);
        let inst = generate(&GenSpec::new(40, 100, 1));
        assert_eq!(measured_density(&inst), 100);
    }

    #[test]
    fn header_only_for_no_rows() {
        assert_eq!(to_csv(&[], true), "n,delta,gap_root_pct,time_s,nodes,solved,instances\n");
        assert_eq!(to_csv(&[], false), "n,delta,gap_root_pct,nodes,solved,instances\n");
    }
}
