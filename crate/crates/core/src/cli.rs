//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or a failed computation, 2 an
//! acceptance flag failed, 64 a usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::chains::{count_chains, export_csv, renormalize, ChainSpec, CounterFamily};
use crate::coupling::{couple, mollified_gamma_with, CouplingParams, MAX_DELTA, MIN_RESOLUTION_RATIO};
use crate::error::{Error, Result};
use crate::experiments::{self, walk_side_mollified_beta_with, ExperimentKind, ExperimentPlan, ExperimentReport, RunContext, RunOutput};
use crate::increment_law::IncrementLaw;
use crate::kernel::PotentialKernelTable;
use crate::lattice::Site;
use crate::rng::derive_stream;
use crate::stats::median;
use crate::walk::simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FLAGS: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable naming the kernel cache directory.
pub const CACHE_ENV: &str = "RILT_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(name = "rilt", version, about = "Renormalized intersection local times of planar lattice walks")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a step law against the walk hypotheses.
    LawValidate {
        #[arg(long, default_value = "default")]
        law: String,
        /// Characteristic-function grid resolution for the aperiodicity margin.
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
    /// Build or load the potential kernel table and print G at chosen points.
    Kernel {
        #[arg(long, default_value = "default")]
        law: String,
        #[arg(long, default_value_t = 64)]
        radius: i64,
        /// Points "x,y" to print.
        #[arg(long = "at")]
        at: Vec<Site>,
        /// Write the table in the binary cache format.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the whole box as CSV rows x,y,g.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulate a walk and write its chain counts and renormalized counts.
    Count {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Offsets x_2 … x_k as "x,y;x,y"; missing ones default to 0,0.
        #[arg(long, value_delimiter = ';')]
        offsets: Vec<Site>,
        /// Renormalization scale m (default n).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact one-step drift of the martingale on random prefixes.
    MartingaleCheck {
        #[command(flatten)]
        common: PlanArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Longest prefix for k = 2 (order k uses n/(k − 1)).
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Number of random prefixes.
        #[arg(long, default_value_t = 100)]
        replicas: usize,
        /// Residual tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Build one coupled walk/Brownian pair and write both paths.
    Couple {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, default_value_t = 1.0 / 256.0)]
        delta: f64,
        #[arg(long, default_value_t = 1.0 / 32768.0)]
        view_step: f64,
        /// Independent coupled pairs, on streams derived from --stream.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Directory for walk.bin and brownian.bin of the first pair.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Walk-side and Brownian-side mollified functionals on one coupled pair.
    Gamma {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long = "tau", default_values_t = vec![0.2, 0.1, 0.05])]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 1.0 / 256.0)]
        delta: f64,
        #[arg(long, default_value_t = 1.0 / 32768.0)]
        view_step: f64,
        #[arg(long, default_value_t = experiments::WALK_MIN_RESOLUTION)]
        min_resolution: f64,
    },
    /// Run an invariance or coupling-rate plan.
    Invariance {
        #[command(flatten)]
        common: PlanArgs,
    },
    /// Run a Hölder-moment or moment-trend plan.
    Holder {
        #[command(flatten)]
        common: PlanArgs,
    },
    /// Run any plan, or print a stored run's report.
    Report {
        #[command(flatten)]
        common: PlanArgs,
        /// A run directory holding report.json.
        #[arg(long, conflicts_with_all = ["config", "preset"])]
        run_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    #[arg(long, default_value = "default")]
    pub law: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// JSON experiment plan.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the acceptance configuration of this experiment.
    #[arg(long)]
    pub preset: Option<ExperimentKind>,
    /// Parent of the run directory (default: the plan's output, else ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tolerance override "name=value".
    #[arg(long = "tol")]
    pub tolerances: Vec<String>,
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

impl PlanArgs {
    fn plan(&self, allowed: &[ExperimentKind]) -> Result<ExperimentPlan> {
        let mut plan = match (&self.config, self.preset) {
            (Some(path), None) => ExperimentPlan::from_file(path)?,
            (None, Some(kind)) => ExperimentPlan::acceptance(kind),
            (Some(_), Some(_)) => return Err(config_err("config", "give either --config or --preset")),
            (None, None) => return Err(config_err("config", "a plan is required (--config or --preset)")),
        };
        if !allowed.is_empty() && !allowed.contains(&plan.experiment) {
            let names: Vec<&str> = allowed.iter().map(|k| k.id()).collect();
            return Err(config_err("experiment", format!("`{}` is not one of {}", plan.experiment, names.join(", "))));
        }
        for t in &self.tolerances {
            let (k, v) = t.split_once('=').ok_or_else(|| config_err("tol", format!("`{t}` is not name=value")))?;
            let v: f64 = v.parse().map_err(|_| config_err(&format!("tolerances.{k}"), format!("`{v}` is not a number")))?;
            plan.tolerances.insert(k.to_string(), v);
        }
        if let Some(out) = &self.out {
            plan.output = Some(out.clone());
        }
        plan.validate()?;
        Ok(plan)
    }
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(PathBuf::from)
}

/// The run directory: `<parent>/<experiment>-<config hash prefix>`.
pub fn run_dir(plan: &ExperimentPlan) -> PathBuf {
    let parent = plan.output.clone().unwrap_or_else(|| PathBuf::from("runs"));
    parent.join(format!("{}-{}", plan.experiment, &plan.config_hash()[..16]))
}

fn print_report(report: &ExperimentReport) {
    println!("experiment {} (config {})", report.experiment, &report.config_hash[..16]);
    for f in &report.flags {
        println!("[{}] criterion {:>2}: {} -- {}", if f.passed { "PASS" } else { "FAIL" }, f.criterion, f.check, f.measured);
    }
    for (k, s) in &report.slopes {
        println!("slope {k}: {:.4} (95% CI {:.4} .. {:.4})", s.slope, s.ci_low, s.ci_high);
    }
}

fn run_plan(plan: &ExperimentPlan) -> Result<i32> {
    let dir = run_dir(plan);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("plan.json"), serde_json::to_string_pretty(plan)?)?;
    let ctx = RunContext { cache_dir: cache_dir(), checkpoint_dir: Some(dir.clone()) };
    let out: RunOutput = experiments::run(plan, &ctx)?;
    out.write(&dir)?;
    print_report(&out.report);
    println!("wrote {}", dir.display());
    Ok(if out.report.passed() { EXIT_OK } else { EXIT_FLAGS })
}

fn check_walk(w: &WalkArgs) -> Result<IncrementLaw> {
    let law = IncrementLaw::resolve(&w.law).map_err(|e| config_err("law", e.to_string()))?;
    if w.n == 0 {
        return Err(config_err("n", "must be positive"));
    }
    Ok(law)
}

fn check_coupling(delta: f64, view_step: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= MAX_DELTA) {
        return Err(config_err("delta", format!("must lie in (0, {MAX_DELTA}]")));
    }
    if !(view_step > 0.0 && view_step <= 0.5) || (1.0 / view_step).fract() != 0.0 {
        return Err(config_err("view-step", "must be 1/m for an integer m >= 2"));
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::LawValidate { law, grid } => {
            let law = IncrementLaw::resolve(law).map_err(|e| config_err("law", e.to_string()))?;
            let report = law.validate(*grid)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.compliant { EXIT_OK } else { EXIT_INVALID })
        }
        Command::Kernel { law, radius, at, out, csv } => {
            let law = IncrementLaw::resolve(law).map_err(|e| config_err("law", e.to_string()))?;
            if *radius < 1 {
                return Err(config_err("radius", "must be positive"));
            }
            let table = PotentialKernelTable::load_or_build(&law, *radius, cache_dir().as_deref())?;
            println!("law {} radius {} kappa {:.12} quadrature error {:.3e} values {}", law.name(), radius, table.kappa(), table.quadrature_error(), table.values_hash());
            for s in at {
                println!("G({},{}) = {:.15}", s.x, s.y, table.g(*s));
            }
            if let Some(path) = out {
                table.write_cache(path)?;
            }
            if let Some(path) = csv {
                let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
                writeln!(w, "x,y,g")?;
                for y in -radius..=*radius {
                    for x in -radius..=*radius {
                        writeln!(w, "{x},{y},{:e}", table.g(Site::new(x, y)))?;
                    }
                }
                w.flush()?;
            }
            Ok(EXIT_OK)
        }
        Command::Count { walk, k, offsets, m, out } => {
            let law = check_walk(walk)?;
            if *k == 0 || *k > 4 {
                return Err(config_err("k", "must lie in 1..=4"));
            }
            if offsets.len() > k - 1 {
                return Err(config_err("offset", format!("{} offsets given for k = {k}", offsets.len())));
            }
            let m = m.unwrap_or(walk.n);
            if m == 0 {
                return Err(config_err("m", "must be positive"));
            }
            let mut offs = offsets.clone();
            offs.resize(k - 1, Site::ORIGIN);
            let spec = ChainSpec::new(*k, offs)?;
            let path = simulate(&law, walk.n, walk.seed, walk.stream);
            let reach = path.positions().iter().map(|p| p.max_abs()).max().unwrap_or(0);
            let table = PotentialKernelTable::load_or_build(&law, 64.max(2 * reach + 2).min(256), cache_dir().as_deref())?;
            let fam = CounterFamily::for_spec(path.positions(), &spec)?;
            let counter = count_chains(path.positions(), &spec)?;
            let series = renormalize(&fam, &spec, &table, m)?;
            println!("B_{k}(n) = {}  renormalized = {:.12}  beta = {:.12}", counter.total(), series.values[walk.n], series.values[walk.n] / walk.n as f64);
            if let Some(p) = out {
                export_csv(p, &counter, &series)?;
            }
            Ok(EXIT_OK)
        }
        Command::MartingaleCheck { common, k, n, replicas, tolerance } => {
            let mut plan = if common.config.is_some() || common.preset.is_some() {
                common.plan(&[ExperimentKind::MartingaleExactness])?
            } else {
                ExperimentPlan { k: *k, kernel_radius: 128, seed: 1, ..ExperimentPlan::new(ExperimentKind::MartingaleExactness, vec![*n], *replicas) }
            };
            if let Some(t) = tolerance {
                plan.tolerances.insert("residual".into(), *t);
            }
            if let Some(out) = &common.out {
                plan.output = Some(out.clone());
            }
            for t in &common.tolerances {
                let (key, v) = t.split_once('=').ok_or_else(|| config_err("tol", format!("`{t}` is not name=value")))?;
                plan.tolerances.insert(key.into(), v.parse().map_err(|_| config_err(&format!("tolerances.{key}"), "not a number"))?);
            }
            plan.validate()?;
            run_plan(&plan)
        }
        Command::Couple { walk, delta, view_step, replicas, out } => {
            let law = check_walk(walk)?;
            check_coupling(*delta, *view_step)?;
            if *replicas == 0 {
                return Err(config_err("replicas", "must be positive"));
            }
            let pairs = (0..*replicas)
                .into_par_iter()
                .map(|r| {
                    let stream = if *replicas == 1 { walk.stream } else { derive_stream(walk.stream, r as u64) };
                    couple(&law, CouplingParams { n: walk.n, delta: *delta, view_step: *view_step, seed: walk.seed, stream })
                })
                .collect::<Result<Vec<_>>>()?;
            println!("replica\tsup_distance\tclock_x\tclock_y");
            for (r, c) in pairs.iter().enumerate() {
                println!("{r}\t{:.6}\t{:.4}\t{:.4}", c.sup_distance, c.clock(0) / walk.n as f64, c.clock(1) / walk.n as f64);
            }
            let sup: Vec<f64> = pairs.iter().map(|c| c.sup_distance).collect();
            println!("median sup distance {:.6}", median(&sup));
            if let Some(dir) = out {
                std::fs::create_dir_all(dir)?;
                pairs[0].walk.dump(&dir.join("walk.bin"))?;
                pairs[0].view.dump(&dir.join("brownian.bin"))?;
                println!("wrote {}", dir.display());
            }
            Ok(EXIT_OK)
        }
        Command::Gamma { walk, k, tau, delta, view_step, min_resolution } => {
            let law = check_walk(walk)?;
            check_coupling(*delta, *view_step)?;
            if *k == 0 || *k > 4 {
                return Err(config_err("k", "must lie in 1..=4"));
            }
            if tau.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
                return Err(config_err("tau", "widths must lie in (0, 1]"));
            }
            let radius = tau.iter().map(|t| (t * (walk.n as f64).sqrt()).ceil() as i64).max().unwrap_or(0).max(16);
            let table = PotentialKernelTable::load_or_build(&law, radius, cache_dir().as_deref())?;
            let c = couple(&law, CouplingParams { n: walk.n, delta: *delta, view_step: *view_step, seed: walk.seed, stream: walk.stream })?;
            println!("tau\twalk\tbrownian\tstep");
            for &t in tau {
                let wv = walk_side_mollified_beta_with(c.walk.positions(), &table, t, *k, *min_resolution)?;
                let view = c.view.resolved_for(t, MIN_RESOLUTION_RATIO)?;
                let bv = mollified_gamma_with(&view, t, *k, MIN_RESOLUTION_RATIO)?;
                println!("{t}\t{:.10}\t{:.10}\t{:e}", wv.value, bv.value, view.step);
            }
            Ok(EXIT_OK)
        }
        Command::Invariance { common } => run_plan(&common.plan(&[ExperimentKind::Invariance, ExperimentKind::CouplingRate])?),
        Command::Holder { common } => run_plan(&common.plan(&[ExperimentKind::Holder, ExperimentKind::MomentTrends])?),
        Command::Report { common, run_dir } => match run_dir {
            Some(dir) => show_stored(dir),
            None => run_plan(&common.plan(&[])?),
        },
    }
}

fn show_stored(dir: &Path) -> Result<i32> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)?;
    let report: ExperimentReport = serde_json::from_str(&text).map_err(|e| Error::CacheFormat { path, reason: e.to_string() })?;
    print_report(&report);
    Ok(if report.passed() { EXIT_OK } else { EXIT_FLAGS })
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: invalid configuration key `threads`: must be positive");
            return EXIT_INVALID;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
