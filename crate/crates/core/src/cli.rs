//! The `fredproj` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::config::{apply_overrides, dump_config, load_config, LoadedProblem};
use crate::discretize::{corpus, corpus_names, ReferenceKind};
use crate::error::{Error, Result};
use crate::generate;
use crate::hilbert::SpaceVector;
use crate::report::{sig, sigs, to_line, to_pretty, CheckJson, NonContractiveJson, ProbeJson, RegionJson, SolveJson};
use crate::series::trials::{run_trial, LemmaCheck, TrialOutcome};
use crate::solver::{persistence_probe, region_radius, solve_constrained, verify_solution, SolveReport, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;

/// Persistence threshold for `region --probe`.
pub const PROBE_TOL: f64 = 1e-7;
/// Fraction of the radius used by `region --probe`.
pub const PROBE_FRACTION: f64 = 0.9;

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Solved => 0,
        Status::ResidualNonzero => 2,
        Status::NormGeOne => 3,
        Status::SearchFailed => 4,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fredproj", version, about = "Constrained solutions of x = A x + phi")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a problem and write the solution and a report.
    Solve(SolveArgs),
    /// Run seeded numerical checks of the series identities.
    Lemmas(LemmaArgs),
    /// Estimate the radius of the solution region around the initial k.
    Region(RegionArgs),
    /// Inspect the built-in problems.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in problem name.
    #[arg(long)]
    corpus: Option<String>,
    /// Problem config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    /// `key=value` solver override; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for solution.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct LemmaArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Comma-separated subset of pairing, reorder, cauchy, perturb, split.
    #[arg(long, value_delimiter = ',')]
    which: Vec<String>,
}

#[derive(Debug, Args)]
struct RegionArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Number of random perturbed solves at 0.9 of the radius.
    #[arg(long, default_value_t = 0)]
    probe: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum CorpusAction {
    List,
    /// Print a built-in problem as a config document.
    Dump {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the command line in-process and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Lemmas(a) => cmd_lemmas(&a, out),
        Command::Region(a) => cmd_region(&a, out),
        Command::Corpus { action } => cmd_corpus(&action, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn load(source: &Source, overrides: &[String]) -> Result<LoadedProblem> {
    let mut lp = match (&source.corpus, &source.config) {
        (Some(name), None) => corpus(name)?.into(),
        (None, Some(path)) => load_config(path)?,
        _ => return Err(Error::Config("give exactly one of --corpus or --config".into())),
    };
    apply_overrides(&mut lp, overrides)?;
    Ok(lp)
}

/// Demotes a `solved` report whose `x` fails either half of the double
/// check at this layer.
fn reverify(lp: &LoadedProblem, report: &mut SolveReport) -> Result<()> {
    if report.status != Status::Solved {
        return Ok(());
    }
    let tol = 10.0 * lp.problem.settings.residual_tol;
    let ok = match &report.x {
        Some(x) => {
            let (eq, con) = verify_solution(&lp.problem, x)?;
            eq <= tol && con <= tol
        }
        None => false,
    };
    if !ok {
        warn!("solver reported solved but the solution fails verification; demoting");
        report.status = Status::ResidualNonzero;
    }
    Ok(())
}

fn write_solution_csv(path: &Path, x: &SpaceVector) -> Result<()> {
    let space = x.space();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "node", "weight", "value"])?;
    for (i, v) in x.values().iter().enumerate() {
        let node = space.nodes().map(|n| crate::io::format_f64(n[i])).unwrap_or_default();
        w.write_record([
            i.to_string(),
            node,
            crate::io::format_f64(space.weights()[i]),
            crate::io::format_f64(*v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let lp = load(&args.source, &args.overrides)?;
    info!("solving {} (dim {}, m {})", lp.name, lp.problem.dim(), lp.problem.constraints.m());
    let mut report = solve_constrained(&lp.problem, &lp.k_init)?;
    reverify(&lp, &mut report)?;
    let code = exit_code(report.status);

    let mut x_csv_path = None;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        if let Some(x) = &report.x {
            let path = dir.join("solution.csv");
            write_solution_csv(&path, x)?;
            x_csv_path = Some(path.display().to_string());
        }
    }
    let reference_error = match (&lp.reference, &report.x) {
        (Some(r), Some(x)) if r.kind == ReferenceKind::Solution => Some(sig(r.max_error(x)?)),
        _ => None,
    };
    let json = SolveJson {
        problem: lp.name.clone(),
        status: report.status.as_str(),
        exit_code: code,
        x_csv_path,
        residual: sigs(&report.residual),
        equation_residual: report.equation_residual.map(sig),
        constraint_residual: report.constraint_residual.map(sig),
        norm_apk: sig(report.norm_apk.value),
        norm_method: report.norm_apk.method.as_str(),
        epsilon: report.region.map(|r| sig(r.epsilon)),
        epsilon_unbounded: report.region.is_some_and(|r| r.unbounded()),
        neumann_terms: report.neumann_terms,
        search_iters: report.search_iters,
        k_coeffs: sigs(report.k.coeffs().as_slice()),
        reference_error,
        seed: args.seed,
    };
    let text = to_pretty(&json);
    if let Some(dir) = &args.out {
        fs::write(dir.join("report.json"), format!("{text}\n"))?;
    }
    writeln!(out, "{text}")?;
    Ok(code)
}

fn parse_checks(which: &[String]) -> Result<Vec<LemmaCheck>> {
    if which.is_empty() || which.iter().any(|w| w == "all") {
        return Ok(LemmaCheck::ALL.to_vec());
    }
    let mut checks = Vec::new();
    for w in which {
        let c: LemmaCheck = w.trim().parse()?;
        if !checks.contains(&c) {
            checks.push(c);
        }
    }
    Ok(checks)
}

/// Runs every `(trial, check)` job on a small thread pool; results come
/// back in trial-major order whatever the completion order.
fn run_jobs(jobs: &[(u64, LemmaCheck)]) -> Vec<Result<TrialOutcome>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&(seed, c)| run_trial(c, seed)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("trial worker panicked")).collect()
    })
}

fn cmd_lemmas(args: &LemmaArgs, out: &mut dyn Write) -> Result<i32> {
    let checks = parse_checks(&args.which)?;
    let jobs: Vec<(u64, LemmaCheck)> = (0..args.trials)
        .flat_map(|i| checks.iter().map(move |&c| (args.seed.wrapping_add(i), c)))
        .collect();
    let mut all_passed = true;
    for ((seed, check), result) in jobs.iter().zip(run_jobs(&jobs)) {
        match result {
            Ok(outcome) => {
                if outcome.passed() == Some(false) {
                    all_passed = false;
                }
                writeln!(out, "{}", to_line(&CheckJson::new(&outcome)))?;
            }
            Err(e) => {
                all_passed = false;
                let line = serde_json::json!({"name": check.as_str(), "seed": seed, "error": e.to_string()});
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_ERROR })
}

fn cmd_region(args: &RegionArgs, out: &mut dyn Write) -> Result<i32> {
    let lp = load(&args.source, &args.overrides)?;
    let region = match region_radius(&lp.problem, &lp.k_init) {
        Ok(r) => r,
        Err(Error::Contraction { norm }) => {
            let json = NonContractiveJson { problem: lp.name.clone(), status: Status::NormGeOne.as_str(), norm_apk: sig(norm) };
            writeln!(out, "{}", to_pretty(&json))?;
            return Ok(exit_code(Status::NormGeOne));
        }
        Err(e) => return Err(e),
    };
    let probe = if args.probe > 0 && lp.problem.constraints.m() > 0 {
        let mut rng = generate::rng(args.seed);
        let directions: Vec<_> =
            (0..args.probe).map(|_| generate::unit_directions(&mut rng, &lp.problem.constraints)).collect();
        // Any step works inside an unbounded region; probe at unit distance.
        let step = if region.unbounded() { 1.0 } else { PROBE_FRACTION * region.epsilon };
        let p = persistence_probe(&lp.problem, &lp.k_init, &directions, step, PROBE_TOL)?;
        Some(ProbeJson { trials: p.trials, persisted: p.persisted, step: sig(step), worst_residual: sig(p.worst_residual) })
    } else {
        None
    };
    writeln!(out, "{}", to_pretty(&RegionJson::new(&lp.name, &region, probe, args.seed)))?;
    Ok(EXIT_OK)
}

fn cmd_corpus(action: &CorpusAction, out: &mut dyn Write) -> Result<i32> {
    match action {
        CorpusAction::List => {
            for name in corpus_names() {
                let cp = corpus(name)?;
                writeln!(out, "{name}\tdim={}\tm={}", cp.problem.dim(), cp.problem.constraints.m())?;
            }
        }
        CorpusAction::Dump { name, out: path } => {
            let text = dump_config(&corpus(name)?.into());
            match path {
                Some(p) => fs::write(p, format!("{text}\n"))?,
                None => writeln!(out, "{text}")?,
            }
        }
    }
    Ok(EXIT_OK)
}
