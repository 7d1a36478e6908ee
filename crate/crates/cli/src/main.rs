//! `ewlab`: command-line front end for the simulation, transport and
//! rate-fitting harnesses.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{GridCompareConfig, LemmaCheckConfig, OracleCheckConfig, OtSelftestConfig};
use ewlab::matrix_lemma::{self, AdversarialConfig, FuzzConfig};
use ewlab::rate_harness::{self, ExperimentSpec};
use ewlab::{checks, Error};
use output::{Manifest, RunDir, VERSIONS};

const EXIT_OK: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ewlab", version, about = "Euler scheme marginal-law Wasserstein laboratory")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory (default: ewlab-runs/<subcommand>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats for tables and reports.
    #[arg(long, value_delimiter = ',', default_values = ["csv", "json"])]
    formats: Vec<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fuzz and adversarially search the matrix trace inequality.
    LemmaCheck {
        /// TOML config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of random instances.
        #[arg(long)]
        instances: Option<usize>,
        /// Dimensions, comma separated.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Exponents, comma separated.
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        /// Ellipticity floor of a1 and a2.
        #[arg(long)]
        floor: Option<f64>,
        /// Relative tolerance of lhs <= rhs.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Restarts of the adversarial search.
        #[arg(long)]
        adversarial_starts: Option<usize>,
        /// Moves per restart.
        #[arg(long)]
        adversarial_iterations: Option<usize>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep N and fit the convergence rate of the sup-in-time distance.
    Rate {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Sample size per checkpoint.
        #[arg(long)]
        paths: Option<usize>,
        /// Step counts N, comma separated.
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the same sweep on uniform and power grids.
    GridCompare {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Power-grid exponent.
        #[arg(long)]
        beta: Option<f64>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Metric-axiom and brute-force checks of the transport solvers.
    OtSelftest {
        /// TOML config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Brute-force comparison trials.
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo and empirical-OT cross-checks of the Gaussian oracles.
    OracleCheck {
        /// TOML config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Sample size per checkpoint.
        #[arg(long)]
        paths: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownSde(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

/// What a subcommand produced: its resolved config and whether every
/// verified property held.
struct Outcome {
    config: serde_json::Value,
    config_toml: String,
    seed: Option<u64>,
    ok: bool,
}

fn resolved<T: Serialize>(cfg: &T, seed: Option<u64>, ok: bool) -> Result<Outcome, Failure> {
    Ok(Outcome {
        config: serde_json::to_value(cfg).map_err(|e| Failure::Run(e.to_string()))?,
        config_toml: config::to_toml(cfg).map_err(Failure::Run)?,
        seed,
        ok,
    })
}

fn lemma_check(cfg: LemmaCheckConfig, dir: &mut RunDir, common: &Common) -> Result<Outcome, Failure> {
    let seed = cfg.seed.ok_or_else(|| Failure::Usage("lemma-check samples random instances: --seed is required".into()))?;
    let fuzz = FuzzConfig {
        instances: cfg.instances,
        dims: cfg.dims.clone(),
        rhos: cfg.rhos.clone(),
        floor: cfg.floor,
        seed,
        tolerance: cfg.tolerance,
    };
    let report = matrix_lemma::fuzz_campaign(&fuzz).map_err(|e| Failure::Usage(e.to_string()))?;
    let adversarial = if cfg.adversarial_starts > 0 {
        Some(
            matrix_lemma::adversarial_search(&AdversarialConfig {
                starts: cfg.adversarial_starts,
                iterations: cfg.adversarial_iterations,
                dims: cfg.dims.clone(),
                rhos: cfg.rhos.clone(),
                floor: cfg.floor,
                seed,
                tolerance: cfg.tolerance,
            })
            .map_err(|e| Failure::Usage(e.to_string()))?,
        )
    } else {
        None
    };
    let ok = report.violations == 0 && adversarial.as_ref().is_none_or(|a| a.violations == 0);
    #[derive(Serialize)]
    struct Report<'a> {
        instances: usize,
        violations: usize,
        min_slack: f64,
        max_ratio: f64,
        argmin: &'a matrix_lemma::LemmaInstance,
        adversarial: Option<&'a matrix_lemma::AdversarialReport>,
    }
    let out = Report {
        instances: report.instances,
        violations: report.violations,
        min_slack: report.min_slack,
        max_ratio: report.max_ratio,
        argmin: &report.argmin,
        adversarial: adversarial.as_ref(),
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| Failure::Run(e.to_string()))?;
    println!("{text}");
    if common.formats.contains(&Format::Json) {
        dir.write_json("report.json", &out)?;
    }
    resolved(&cfg, Some(seed), ok)
}

fn rate(exp: ExperimentSpec, dir: &mut RunDir, common: &Common) -> Result<Outcome, Failure> {
    exp.validate()?;
    let curve = rate_harness::run_marginal_sweep(&exp)?;
    let seed = exp.seed.unwrap_or(0);
    let fit = rate_harness::fit_loglog(&curve, seed)?;
    let gamma = exp.sde_spec()?.holder_exponent();
    let bound = rate_harness::check_theorem_bound(&curve, gamma, matches!(exp.grid, ewlab::GridKind::Uniform))?;
    if common.formats.contains(&Format::Csv) {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        dir.write("curve.csv", &buf)?;
    }
    if common.formats.contains(&Format::Json) {
        dir.write_json("fit.json", &fit)?;
        dir.write_json("bound.json", &bound)?;
    }
    println!("{}: slope {:.4} (95% CI {:.4} .. {:.4}), C_star {:.4}, preferred model {:?}", exp.sde, fit.slope, fit.ci95.0, fit.ci95.1, bound.c_star, fit.preferred);
    if let Some(note) = &curve.note {
        println!("note: {note}");
    }
    resolved(&exp, exp.seed, true)
}

fn grid_compare(cfg: GridCompareConfig, dir: &mut RunDir, common: &Common) -> Result<Outcome, Failure> {
    cfg.experiment.validate()?;
    let cmp = rate_harness::compare_grids(&cfg.experiment, cfg.beta)?;
    if common.formats.contains(&Format::Csv) {
        for (name, curve) in [("uniform_curve.csv", &cmp.uniform), ("power_curve.csv", &cmp.power)] {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            dir.write(name, &buf)?;
        }
        let mut buf = Vec::new();
        cmp.write_lag_csv(&mut buf)?;
        dir.write("remark32.csv", &buf)?;
    }
    if common.formats.contains(&Format::Json) {
        dir.write_json("uniform_fit.json", &cmp.uniform_fit)?;
        dir.write_json("power_fit.json", &cmp.power_fit)?;
        dir.write_json("uniform_bound.json", &cmp.uniform_bound)?;
        dir.write_json("power_bound.json", &cmp.power_bound)?;
    }
    println!(
        "uniform: slope {:.4}, C_star {:.4} (log factor {}); power(beta={}): slope {:.4}, C_star {:.4} (no log factor)",
        cmp.uniform_fit.slope, cmp.uniform_bound.c_star, cmp.uniform_bound.with_log && cmp.uniform_bound.gamma == 1.0, cfg.beta, cmp.power_fit.slope, cmp.power_bound.c_star
    );
    resolved(&cfg, cfg.experiment.seed, true)
}

fn suite(report: checks::SuiteReport, dir: &mut RunDir, common: &Common) -> Result<bool, Failure> {
    print!("{}", report.summary());
    if common.formats.contains(&Format::Json) {
        dir.write_json("report.json", &report)?;
    }
    Ok(report.all_passed())
}

fn run(cmd: Command, threads: usize) -> Result<u8, Failure> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (name, common) = match &cmd {
        Command::LemmaCheck { common, .. } => ("lemma-check", common.clone()),
        Command::Rate { common, .. } => ("rate", common.clone()),
        Command::GridCompare { common, .. } => ("grid-compare", common.clone()),
        Command::OtSelftest { common, .. } => ("ot-selftest", common.clone()),
        Command::OracleCheck { common, .. } => ("oracle-check", common.clone()),
    };
    let usage = Failure::Usage;
    let out_path = common.out.clone().unwrap_or_else(|| Path::new("ewlab-runs").join(name));
    // parse configs before touching the output directory
    enum Prepared {
        Lemma(LemmaCheckConfig),
        Rate(ExperimentSpec),
        Grid(GridCompareConfig),
        Ot(OtSelftestConfig),
        Oracle(OracleCheckConfig),
    }
    let prepared = match cmd {
        Command::LemmaCheck { config, instances, dims, rhos, floor, tolerance, adversarial_starts, adversarial_iterations, seed, .. } => {
            let mut c: LemmaCheckConfig = config::load_or_default(config.as_deref()).map_err(usage)?;
            c.instances = instances.unwrap_or(c.instances);
            c.dims = dims.unwrap_or(c.dims);
            c.rhos = rhos.unwrap_or(c.rhos);
            c.floor = floor.unwrap_or(c.floor);
            c.tolerance = tolerance.unwrap_or(c.tolerance);
            c.adversarial_starts = adversarial_starts.unwrap_or(c.adversarial_starts);
            c.adversarial_iterations = adversarial_iterations.unwrap_or(c.adversarial_iterations);
            c.seed = seed.or(c.seed);
            Prepared::Lemma(c)
        }
        Command::Rate { config, seed, paths, ns, .. } => {
            let mut e: ExperimentSpec = config::load(&config).map_err(usage)?;
            e.seed = seed.or(e.seed);
            e.paths = paths.unwrap_or(e.paths);
            e.ns = ns.unwrap_or(e.ns);
            Prepared::Rate(e)
        }
        Command::GridCompare { config, beta, seed, .. } => {
            let mut g: GridCompareConfig = config::load(&config).map_err(usage)?;
            g.beta = beta.unwrap_or(g.beta);
            g.experiment.seed = seed.or(g.experiment.seed);
            Prepared::Grid(g)
        }
        Command::OtSelftest { config, seed, trials, .. } => {
            let mut c: OtSelftestConfig = config::load_or_default(config.as_deref()).map_err(usage)?;
            c.seed = seed.unwrap_or(c.seed);
            c.trials = trials.unwrap_or(c.trials);
            Prepared::Ot(c)
        }
        Command::OracleCheck { config, seed, paths, .. } => {
            let mut c: OracleCheckConfig = config::load_or_default(config.as_deref()).map_err(usage)?;
            c.seed = seed.unwrap_or(c.seed);
            c.paths = paths.unwrap_or(c.paths);
            Prepared::Oracle(c)
        }
    };
    let mut dir = RunDir::create(&out_path).map_err(usage)?;
    let outcome = match prepared {
        Prepared::Lemma(c) => lemma_check(c, &mut dir, &common)?,
        Prepared::Rate(e) => rate(e, &mut dir, &common)?,
        Prepared::Grid(g) => grid_compare(g, &mut dir, &common)?,
        Prepared::Ot(c) => {
            let ok = suite(checks::ot_selftest(c.seed, c.trials)?, &mut dir, &common)?;
            resolved(&c, Some(c.seed), ok)?
        }
        Prepared::Oracle(c) => {
            if c.paths < 2 {
                return Err(Failure::Usage("paths must be at least 2".into()));
            }
            let ok = suite(checks::oracle_check(c.seed, c.paths)?, &mut dir, &common)?;
            resolved(&c, Some(c.seed), ok)?
        }
    };
    let code = if outcome.ok { EXIT_OK } else { EXIT_VIOLATION };
    dir.write("config.toml", outcome.config_toml.as_bytes())?;
    let mut outputs = dir.files().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        subcommand: name.to_string(),
        config: outcome.config,
        seed: outcome.seed,
        threads,
        versions: VERSIONS,
        started_unix,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        exit_code: i32::from(code),
        outputs,
    };
    dir.write_json("manifest.json", &manifest)?;
    let path = dir.commit()?;
    eprintln!("wrote {}", path.display());
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let threads = rayon::current_num_threads();
    match run(cli.command, threads) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VIOLATION)
        }
    }
}
