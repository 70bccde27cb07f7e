use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rfb_core::analysis::{run_study, write_csv};
use rfb_core::config::RunConfig;
use rfb_core::fem::error_norms;
use rfb_core::mesh::{generate_structured, write_solution};
use rfb_core::solvers::{
    composite_energy, composite_space, galerkin_energy, solve_galerkin, solve_rfb, Scheme, SolveReport,
};

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

/// Residual-free bubble solver for -div(alpha(x) b(u) grad u) = f on the unit square.
#[derive(Parser)]
#[command(name = "rfb", version)]
struct Cli {
    /// Worker threads for element loops (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem with one scheme; writes solution.txt, report.txt and config.cfg.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "rfb_out")]
        out: PathBuf,
    },
    /// Run a convergence study; writes study.csv and config.cfg.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "rfb_out")]
        out: PathBuf,
    },
    /// Run the built-in acceptance suite.
    Verify {
        /// Also write the results to <out>/acceptance.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Solver(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.cfg"), cfg.to_text()).context("writing config echo")?;
    Ok(())
}

fn report_text(scheme: &str, rep: &SolveReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scheme = {scheme}");
    let _ = writeln!(s, "converged = {}", rep.converged);
    let _ = writeln!(s, "iterations = {}", rep.iterations);
    let _ = writeln!(s, "wall_time_s = {:.6}", rep.wall_time.as_secs_f64());
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(", ");
    let _ = writeln!(s, "increments = {}", join(&rep.increment_history));
    let _ = writeln!(s, "contraction = {}", join(&rep.contraction_estimates));
    if let Some(r) = rep.final_ratio() {
        let _ = writeln!(s, "final_ratio = {r:.16e}");
    }
    s
}

fn solve(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    if cfg.schemes.len() > 1 || cfg.ns.len() > 1 || cfg.eps.len() > 1 {
        log::warn!("solve uses the first scheme, mesh size and eps of each list");
    }
    let scheme = cfg.scheme(cfg.schemes[0]);
    let n = cfg.ns[0];
    let problem = cfg.problem.build(cfg.eps[0]).map_err(|e| Failure::Config(e.to_string()))?;
    prepare_out(out, &cfg)?;
    let coarse = Arc::new(generate_structured(n).map_err(|e| Failure::Config(format!("mesh.n: {e}")))?);
    let (u, report, energy, label) = match scheme {
        Scheme::Galerkin => {
            let (u, rep) = solve_galerkin(&coarse, &problem, &cfg.picard).map_err(|e| Failure::Solver(e.to_string()))?;
            let energy = galerkin_energy(&u, &problem);
            (u, rep, energy, scheme.name().to_string())
        }
        _ => {
            let space = composite_space(&coarse, cfg.m, &problem).map_err(|e| Failure::Config(format!("mesh.m: {e}")))?;
            let (sol, rep) = solve_rfb(space, &problem, &cfg.picard, scheme).map_err(|e| Failure::Solver(e.to_string()))?;
            let energy = composite_energy(&sol, &problem);
            let u = sol.to_union().map_err(|e| Failure::Solver(e.to_string()))?;
            (u, rep, energy, sol.provenance.scheme.clone())
        }
    };
    let file = fs::File::create(out.join("solution.txt")).context("creating solution.txt")?;
    write_solution(u.mesh(), u.values(), BufWriter::new(file)).context("writing solution.txt")?;
    let mut text = report_text(&label, &report);
    let _ = writeln!(text, "h1_seminorm = {:.16e}", u.h1_seminorm());
    let _ = writeln!(text, "energy_coercive = {:.16e}", energy.coercive);
    let _ = writeln!(text, "energy_work = {:.16e}", energy.work);
    if let Some(exact) = &problem.exact {
        let (l2, h1) = error_norms(&u, |x| (exact.u)(x), |x| (exact.grad)(x));
        let _ = writeln!(text, "l2_error_exact = {l2:.16e}");
        let _ = writeln!(text, "h1_error_exact = {h1:.16e}");
    }
    fs::write(out.join("report.txt"), &text).context("writing report.txt")?;
    print!("{text}");
    if !report.converged {
        return Err(Failure::Solver(format!("no convergence after {} iterations", report.iterations)));
    }
    Ok(())
}

fn study(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    prepare_out(out, &cfg)?;
    let rows = run_study(&cfg.study()).map_err(|e| Failure::Solver(e.to_string()))?;
    let path = out.join("study.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(&rows, BufWriter::new(file)).context("writing study.csv")?;
    println!("{} rows written to {}", rows.len(), path.display());
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.failure.is_some() || !r.converged)
        .map(|r| format!("{} n={} eps={}: {}", r.scheme, r.n, r.eps, r.failure.as_deref().unwrap_or("not converged")))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(bad.join("; ")))
    }
}

fn verify(out: Option<&Path>) -> Result<bool, Failure> {
    let results = rfb_core::acceptance::run_all();
    let mut text = String::new();
    for r in &results {
        let _ = writeln!(text, "{r}");
    }
    print!("{text}");
    if let Some(out) = out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        fs::write(out.join("acceptance.txt"), &text).context("writing acceptance.txt")?;
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot configure {} threads: {e}", cli.threads);
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let outcome = match &cli.command {
        Command::Solve { config, out } => solve(config, out),
        Command::Study { config, out } => study(config, out),
        Command::Verify { out } => match verify(out.as_deref()) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_ACCEPTANCE),
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
