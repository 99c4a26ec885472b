use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bpop_core::bilevel::{self, Prepared, SolverConfig, Verdict};
use bpop_core::fe::{self, FeasibleExtension};
use bpop_core::model::{self, parse_problem, BilevelProblem};
use bpop_core::plme::build_plme;

mod report;

#[derive(Parser)]
#[command(name = "bpop", version, about = "Bilevel polynomial optimization solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve every branch and report the global verdict. A directory
    /// solves every bundled problem of the selected suite.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Suite::Core)]
        suite: Suite,
    },
    /// Solve a single branch and print its cut loop.
    Branch {
        file: PathBuf,
        /// Support as 1-based constraint labels, e.g. `1,3,5,6`.
        #[arg(long = "J", value_delimiter = ',', required = true)]
        support: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the multiplier expressions of every retained support.
    Plme {
        file: PathBuf,
        #[arg(long = "J", value_delimiter = ',')]
        support: Option<Vec<usize>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build a feasible extension through `(x, y)` hitting `z`.
    Fe {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        y: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        z: Vec<f64>,
        #[arg(long, value_enum, default_value_t = FeMethod::Auto)]
        method: FeMethod,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check whether a point is a local minimizer using small balls.
    CheckLocal {
        file: PathBuf,
        /// Point `(x, y)` as a comma-separated list.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        point: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Core,
    Extended,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeMethod {
    Auto,
    Pattern,
    Linear,
    Quadratic,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Override the generic rank of the lower constraint matrix.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 3)]
    kmax_extra: u32,
    /// Add `|(x, y)| <= R` to every branch.
    #[arg(long)]
    ball: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    #[arg(long, default_value_t = 1e-6)]
    eta_tol: f64,
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    json: bool,
    /// Include per-branch seconds in json output.
    #[arg(long)]
    timings: bool,
    /// Skip lower-level verification (lower problem convex in z).
    #[arg(long)]
    lower_convex: bool,
}

impl RunArgs {
    fn config(&self) -> Result<SolverConfig> {
        for (name, v) in [("rho", self.rho), ("eta-tol", self.eta_tol)] {
            if !(v > 0.0) {
                bail!("--{name} must be positive");
            }
        }
        if self.ball.is_some_and(|r| !(r > 0.0)) {
            bail!("--ball must be positive");
        }
        Ok(SolverConfig {
            rank: self.rank,
            kmax_extra: self.kmax_extra,
            ball: self.ball,
            rho: self.rho,
            eta_tol: self.eta_tol,
            max_iter: self.max_iter,
            threads: self.threads,
            seed: self.seed,
            lower_convex: self.lower_convex,
            ..SolverConfig::default()
        })
    }
}

fn load(path: &Path) -> Result<(String, BilevelProblem)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let p = parse_problem(&text).with_context(|| format!("parsing {}", path.display()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((name, p))
}

fn suite_of(path: &Path) -> Suite {
    let side = path.with_extension("expected.json");
    let Ok(text) = std::fs::read_to_string(side) else {
        return Suite::Core;
    };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap_or_default();
    match v.get("suite").and_then(|s| s.as_str()) {
        Some("extended") => Suite::Extended,
        _ => Suite::Core,
    }
}

fn cmd_solve(file: &Path, run: &RunArgs, suite: Suite) -> Result<u8> {
    let cfg = run.config()?;
    let files: Vec<PathBuf> = if file.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(file)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "bpop"))
            .filter(|p| suite == Suite::Extended || suite_of(p) == Suite::Core)
            .collect();
        v.sort();
        v
    } else {
        vec![file.to_path_buf()]
    };
    let mut code = 0;
    let mut docs = Vec::new();
    for f in &files {
        let (name, p) = load(f)?;
        let rep = bilevel::solve(&p, &cfg).with_context(|| format!("solving {name}"))?;
        if rep.verdict == Verdict::Incomplete {
            code = 2;
        }
        if run.json {
            docs.push(report::solve_json(&name, &rep, run.timings));
        } else {
            print!("{}", report::solve_table(&name, &p, &rep));
        }
    }
    if run.json {
        let out = if docs.len() == 1 { docs.pop().unwrap() } else { serde_json::Value::Array(docs) };
        println!("{}", serde_json::to_string_pretty(&out)?);
    }
    Ok(code)
}

fn cmd_branch(file: &Path, labels: &[usize], run: &RunArgs) -> Result<u8> {
    let cfg = run.config()?;
    let (name, p) = load(file)?;
    let prep = Prepared::new(&p)?;
    let out = bilevel::solve_branch_labels(&prep.problem, labels, &cfg).context("invalid support")?;
    if run.json {
        println!("{}", serde_json::to_string_pretty(&report::branch_json(&name, &prep, &out, run.timings))?);
    } else {
        print!("{}", report::branch_table(&name, &prep, &out));
    }
    Ok(if out.status.is_final() { 0 } else { 2 })
}

fn cmd_plme(file: &Path, labels: Option<&[usize]>, run: &RunArgs) -> Result<u8> {
    let cfg = run.config()?;
    let (name, p) = load(file)?;
    let prep = Prepared::new(&p)?;
    let q = &prep.problem;
    let stats = model::problem_stats(q, cfg.rank, cfg.seed, cfg.support_cap)?;
    let supports: Vec<Vec<usize>> = match labels {
        Some(l) => {
            if l.len() != stats.t {
                bail!("support must have exactly {} labels", stats.t);
            }
            let mut rows = q.rows_from_labels(l).context("invalid support")?;
            rows.sort_unstable();
            vec![rows]
        }
        None => stats.supports.clone(),
    };
    let mut items = Vec::new();
    for j in &supports {
        items.push((q.labels(j), build_plme(q, j)?));
    }
    if run.json {
        println!("{}", serde_json::to_string_pretty(&report::plme_json(&name, stats.t, &items))?);
    } else {
        print!("{}", report::plme_table(&name, stats.t, &items));
    }
    Ok(0)
}

fn cmd_fe(file: &Path, x: &[f64], y: &[f64], z: &[f64], method: FeMethod, run: &RunArgs) -> Result<u8> {
    let (name, p) = load(file)?;
    if x.len() != p.n() || y.len() != p.p() || z.len() != p.p() {
        bail!("expected {} values for --x and {} for --y and --z", p.n(), p.p());
    }
    let fe: Option<FeasibleExtension> = match method {
        FeMethod::Auto => fe::synthesize(&p, x, y, z, run.seed),
        FeMethod::Pattern => fe::fe_pattern(&p, x, y, z),
        FeMethod::Linear => fe::fe_linear(&p, x, y, z)?,
        FeMethod::Quadratic => fe::fe_quadratic(&p, x, y, z)?,
    };
    let Some(fe) = fe else {
        if run.json {
            println!("{}", serde_json::json!({"schema": 1, "problem": name, "extension": null}));
        } else {
            println!("{name}: no feasible extension found");
        }
        return Ok(2);
    };
    let chk = fe::fe_verify(&p, &fe, x, y, z, run.seed);
    if run.json {
        println!("{}", serde_json::to_string_pretty(&report::fe_json(&name, &fe, &chk))?);
    } else {
        print!("{}", report::fe_table(&name, &fe, &chk));
    }
    Ok(if chk.pass { 0 } else { 2 })
}

fn cmd_check_local(file: &Path, point: &[f64], run: &RunArgs) -> Result<u8> {
    let cfg = run.config()?;
    let (name, p) = load(file)?;
    if point.len() != p.n() + p.p() {
        bail!("point must have {} coordinates", p.n() + p.p());
    }
    let prep = Prepared::new(&p)?;
    let q = &prep.problem;
    let w = prep.back.restrict(point);
    let viol = p.violation(point);
    let mut doc = report::LocalDoc { problem: name, point: point.to_vec(), verdict: "", eta: None, values: Vec::new() };
    if viol > 1e-4 {
        doc.verdict = "infeasible point";
    } else {
        let chk = bilevel::verify_lower(q, &w[..q.n()], &w[q.n()..], &cfg)?;
        doc.eta = Some(chk.eta);
        if !chk.certified || chk.eta < -cfg.eta_tol * chk.f_y.abs().max(1.0) {
            doc.verdict = "not bilevel feasible";
        } else {
            let stats = model::problem_stats(q, cfg.rank, cfg.seed, cfg.support_cap)?;
            let ball = bilevel::verify_local_ball(q, &stats.supports, &w, cfg.rho, &cfg)?;
            doc.values = ball.values;
            doc.verdict = if ball.certified { "certified local" } else { "not certified" };
        }
    }
    if run.json {
        println!("{}", serde_json::to_string_pretty(&doc.json())?);
    } else {
        print!("{}", doc.table());
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Solve { file, run, suite } => cmd_solve(&file, &run, suite),
        Cmd::Branch { file, support, run } => cmd_branch(&file, &support, &run),
        Cmd::Plme { file, support, run } => cmd_plme(&file, support.as_deref(), &run),
        Cmd::Fe { file, x, y, z, method, run } => cmd_fe(&file, &x, &y, &z, method, &run),
        Cmd::CheckLocal { file, point, run } => cmd_check_local(&file, &point, &run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
