use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ellround::baselines::{SelectorConfig, SelectorKind};
use ellround::docclust::{cluster, gen_corpus, tfidf, ClusterConfig, Corpus, CorpusConfig};
use ellround::er::{er_exact_with, er_practical_with};
use ellround::evalbench::{gen_synthetic, grid, run_sweep, Algorithm, SweepConfig};
use ellround::matrix::io::{read_matrix, write_coordinate, write_matrix};
use ellround::mvee::{
    solve_q_cutting_plane, solve_q_full_with, write_trace_csv, CuttingPlaneConfig, KktReport,
    DEFAULT_ACTIVE_TOL, DEFAULT_TOL,
};
use ellround::{Error, SCHEMA_VERSION};

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 20130;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "ELLROUND_THREADS";

#[derive(Parser)]
#[command(name = "ellround", version, about = "Ellipsoidal rounding for separable NMF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum-volume origin-centered ellipsoid enclosing ±columns of a matrix.
    Mvee(MveeArgs),
    /// Find the basis columns of a near-separable matrix.
    Er(ErArgs),
    /// Recovery-rate sweep over noise levels on synthetic instances.
    Bench(BenchArgs),
    /// Anchor-word clustering of a document collection.
    Cluster(ClusterArgs),
    /// Write a synthetic noisy separable matrix.
    GenSynthetic(GenSyntheticArgs),
    /// Write a synthetic corpus (counts, vocabulary, labels).
    GenCorpus(GenCorpusArgs),
}

#[derive(Args)]
struct SolverArgs {
    /// Relative optimality tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Points with delta >= 1 - active_tol are reported active.
    #[arg(long, default_value_t = DEFAULT_ACTIVE_TOL)]
    active_tol: f64,
    /// Shrink threshold of the working-set loop.
    #[arg(long, default_value_t = 0.9999)]
    theta: f64,
    /// Expansion divisor of the working-set loop.
    #[arg(long, default_value_t = 5.0)]
    eta: f64,
}

impl SolverArgs {
    fn config(&self) -> CuttingPlaneConfig {
        CuttingPlaneConfig {
            tol: self.tol,
            active_tol: self.active_tol,
            theta: self.theta,
            eta: self.eta,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct MveeArgs {
    /// Point matrix, one point per column (CSV or coordinate format).
    #[arg(long)]
    input: PathBuf,
    /// Solve over all points at once instead of the working-set loop.
    #[arg(long)]
    full: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Outer-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ErArgs {
    #[arg(long)]
    input: PathBuf,
    /// Number of basis columns.
    #[arg(long)]
    r: usize,
    /// Starting reduced dimension; defaults to r.
    #[arg(long)]
    rho0: Option<usize>,
    /// spa, xray_rand, xray_max, xray_dist or xray_greedy.
    #[arg(long, default_value = "spa")]
    selector: String,
    /// Require exactly r active points; no escalation or selection.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    /// Noise levels as start:step:end.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Comma-separated list, e.g. er_spa,spa,er_xray_greedy,xray_greedy.
    #[arg(long, value_delimiter = ',')]
    algorithms: Vec<String>,
    /// d=250, m=5000, 0:0.01:0.5, 50 trials unless overridden.
    #[arg(long)]
    full_scale: bool,
    /// Include mean wall-clock seconds (makes reports non-reproducible).
    #[arg(long)]
    timings: bool,
    /// Threshold table as CSV, one row per algorithm.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Mean recovery per noise level as CSV.
    #[arg(long)]
    recovery_csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Counts file: `d m nnz` header, then `doc word count` lines (1-based).
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    r: usize,
    /// er_spa, spa, er_xray_greedy, ...
    #[arg(long, default_value = "er_spa")]
    algorithm: String,
    /// Assign documents with the rank-r approximation of the tf-idf matrix.
    #[arg(long)]
    low_rank: bool,
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Topic table (anchor word and top words per topic).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// 1-based positions of the basis columns, one per line.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 1000)]
    docs: usize,
    #[arg(long, default_value_t = 2000)]
    words: usize,
    #[arg(long, default_value_t = 5)]
    topics: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Receives counts.txt, vocab.txt and labels.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct MveeReport {
    schema_version: &'static str,
    dim: usize,
    points: usize,
    active_indices: Vec<usize>,
    objective: f64,
    inner_iterations: usize,
    outer_iterations: usize,
    kkt: KktReport,
    weights: Vec<f64>,
    shape_matrix: Vec<Vec<f64>>,
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    write_text(&text, out)
}

fn write_text(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run_mvee(a: &MveeArgs) -> Result<(), Error> {
    let p = read_matrix(&a.input)?.to_dense();
    let cfg = a.solver.config();
    let sol = if a.full { solve_q_full_with(&p, &cfg)? } else { solve_q_cutting_plane(&p, &cfg)? };
    if let Some(path) = &a.trace {
        write_trace_csv(fs::File::create(path)?, &sol.trace)?;
    }
    let report = MveeReport {
        schema_version: SCHEMA_VERSION,
        dim: sol.dim(),
        points: p.ncols(),
        active_indices: sol.active_indices.iter().map(|i| i + 1).collect(),
        objective: sol.objective,
        inner_iterations: sol.inner_iterations,
        outer_iterations: sol.trace.len(),
        kkt: sol.kkt,
        weights: sol.u.clone(),
        shape_matrix: sol.l.row_iter().map(|r| r.iter().copied().collect()).collect(),
    };
    write_json(&report, a.out.as_deref())
}

fn run_er(a: &ErArgs) -> Result<(), Error> {
    let m = read_matrix(&a.input)?;
    let cfg = a.solver.config();
    let res = if a.exact {
        er_exact_with(&m, a.r, &cfg)?
    } else {
        let sel = SelectorConfig::new(a.selector.parse::<SelectorKind>()?).with_seed(a.seed);
        er_practical_with(&m, a.r, a.rho0.unwrap_or(a.r), &sel, &cfg)?
    };
    write_json(&res, a.out.as_deref())
}

fn run_bench(a: &BenchArgs) -> Result<(), Error> {
    let mut cfg =
        if a.full_scale { SweepConfig::full_scale(a.seed) } else { SweepConfig::desk_scale(a.seed) };
    if let Some(d) = a.d {
        cfg.d = d;
    }
    if let Some(m) = a.m {
        cfg.m = m;
    }
    if let Some(r) = a.r {
        cfg.r = r;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(g) = &a.grid {
        cfg.grid = parse_grid(g)?;
    }
    if !a.algorithms.is_empty() {
        cfg.algorithms = a.algorithms.iter().map(|s| s.parse::<Algorithm>()).collect::<Result<_, _>>()?;
    }
    cfg.record_timings = a.timings;
    let report = run_sweep(&cfg)?;
    if let Some(p) = &a.csv {
        fs::write(p, report.thresholds_csv())?;
    }
    if let Some(p) = &a.recovery_csv {
        fs::write(p, report.recovery_csv())?;
    }
    write_json(&report, a.out.as_deref())
}

fn parse_grid(s: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Input(format!("grid must be start:step:end, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    grid(v[0], v[1], v[2])
}

fn run_cluster(a: &ClusterArgs) -> Result<(), Error> {
    let corpus = Corpus::load(&a.counts, a.vocab.as_deref(), a.labels.as_deref())?.prune_unused_words();
    let t = tfidf(&corpus)?;
    let cfg = ClusterConfig {
        r: a.r,
        algorithm: a.algorithm.parse()?,
        use_low_rank: a.low_rank,
        top_k: a.top,
        seed: a.seed,
    };
    let report = cluster(&t.matrix, &corpus.vocab, corpus.labels.as_deref(), &cfg)?;
    if let Some(p) = &a.table {
        fs::write(p, report.topic_table())?;
    }
    write_json(&report, a.out.as_deref())
}

fn run_gen_synthetic(a: &GenSyntheticArgs) -> Result<(), Error> {
    let inst = gen_synthetic(a.d, a.m, a.r, a.delta, a.seed)?;
    write_matrix(&a.out, &inst.m)?;
    if let Some(p) = &a.truth {
        let lines: String = inst.true_indices.iter().map(|i| format!("{}\n", i + 1)).collect();
        fs::write(p, lines)?;
    }
    Ok(())
}

fn run_gen_corpus(a: &GenCorpusArgs) -> Result<(), Error> {
    let sc = gen_corpus(&CorpusConfig::new(a.docs, a.words, a.topics, a.noise, a.seed))?;
    fs::create_dir_all(&a.out_dir)?;
    let mut f = std::io::BufWriter::new(fs::File::create(a.out_dir.join("counts.txt"))?);
    write_coordinate(&mut f, &sc.corpus.counts)?;
    f.flush()?;
    let vocab: String = sc.corpus.vocab.iter().map(|w| format!("{w}\n")).collect();
    fs::write(a.out_dir.join("vocab.txt"), vocab)?;
    let labels: String =
        sc.corpus.labels.iter().flatten().map(|l| format!("{l}\n")).collect();
    fs::write(a.out_dir.join("labels.txt"), labels)?;
    let anchors: String = sc.anchors.iter().map(|j| format!("{}\n", j + 1)).collect();
    fs::write(a.out_dir.join("anchors.txt"), anchors)?;
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Input(e.to_string()))?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Mvee(a) => run_mvee(a),
        Command::Er(a) => run_er(a),
        Command::Bench(a) => run_bench(a),
        Command::Cluster(a) => run_cluster(a),
        Command::GenSynthetic(a) => run_gen_synthetic(a),
        Command::GenCorpus(a) => run_gen_corpus(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
