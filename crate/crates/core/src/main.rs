use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use magnetoelastic::evolution::{Evolution, Limits};
use magnetoelastic::io::{
    check_trace, load_scenario, read_trace, write_fields, write_trace, Configuration, Scenario, TraceLimits,
};
use magnetoelastic::material::EnergyLedger;
use magnetoelastic::selftest::run_selftest;
use magnetoelastic::Error;

const EXIT_INVALID: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Parser)]
#[command(name = "magel", version, about = "Incremental minimization for incompressible magnetoelastic solids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed for the stability audit (overrides the scenario).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full time evolution with per-step audits.
    Run { scenario: PathBuf },
    /// Single minimization of the energy at the initial time.
    Minimize { scenario: PathBuf },
    /// Re-check a saved trace against the scenario's tolerances.
    Audit { scenario: PathBuf, trace: PathBuf },
    /// Run the built-in invariant checks.
    Selftest,
}

enum Failure {
    Error(Error),
    Audit(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnstableInitialState { .. } => EXIT_AUDIT,
        e if e.is_solver_failure() => EXIT_SOLVER,
        _ => EXIT_INVALID,
    }
}

struct Ctx {
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn scenario(&self, path: &Path) -> Result<Scenario, Error> {
        let mut s = load_scenario(path)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    fn out_dir(&self, s: &Scenario) -> Result<PathBuf, Error> {
        let dir = self.out.clone().unwrap_or_else(|| s.output.dir.clone());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

fn ledger_line(l: &EnergyLedger) -> String {
    format!(
        "E = {:.10e} (elastic {:.6e}, exchange {:.6e}, magnetostatic {:.6e}, load {:.6e}, penalty {:.6e})",
        l.total, l.elastic, l.exchange, l.magnetostatic, l.load, l.penalty
    )
}

fn write_outputs(ctx: &Ctx, s: &Scenario, dir: &Path, mesh: &magnetoelastic::geometry::ReferenceMesh, ev: &Evolution) -> Result<PathBuf, Error> {
    let trace = dir.join(&s.output.trace);
    write_trace(&ev.trajectory, &ev.report, &trace)?;
    let n = ev.trajectory.states.len();
    for (k, q) in ev.trajectory.states.iter().enumerate() {
        let stride = s.output.fields_stride;
        if k + 1 == n || (stride > 0 && k % stride == 0) {
            write_fields(mesh, q, Configuration::Deformed, &dir.join(format!("state_{k:04}.vtk")))?;
            write_fields(mesh, q, Configuration::Reference, &dir.join(format!("state_{k:04}_reference.vtk")))?;
        }
    }
    ctx.say(format!("wrote {}", trace.display()));
    Ok(trace)
}

fn run(ctx: &Ctx, path: &Path) -> Result<(), Failure> {
    let s = ctx.scenario(path)?;
    let setup = s.build()?;
    let dir = ctx.out_dir(&s)?;
    let problem = setup.problem();
    ctx.say(format!("{}: {} steps on {} nodes", path.display(), setup.config.times.len() - 1, setup.mesh.n_nodes()));
    match magnetoelastic::evolution::run_evolution(&problem, &setup.initial, &setup.config) {
        Ok(ev) => {
            write_outputs(ctx, &s, &dir, &setup.mesh, &ev)?;
            if let Some(last) = ev.trajectory.records.last() {
                ctx.say(format!("final {}", ledger_line(&last.ledger)));
                ctx.say(format!(
                    "Var = {:.6e}, worst stability residual {:.3e}, two-sided gap {:.6e}",
                    last.var_cum,
                    ev.report.worst_stability(),
                    ev.report.two_sided_cumulative.last().copied().unwrap_or(0.0)
                ));
            }
            let limits = Limits {
                tol_incomp: s.solver.tol_incomp,
                ..Default::default()
            };
            let failures = ev.report.failures(&limits);
            if failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Audit(failures))
            }
        }
        Err(failure) => {
            if !failure.partial.trajectory.records.is_empty() {
                write_outputs(ctx, &s, &dir, &setup.mesh, &failure.partial)?;
            }
            Err(Failure::Error(failure.error))
        }
    }
}

fn minimize(ctx: &Ctx, path: &Path) -> Result<(), Failure> {
    let s = ctx.scenario(path)?;
    let setup = s.build()?;
    let dir = ctx.out_dir(&s)?;
    let problem = setup.problem();
    let t0 = setup.config.times[0];
    let (q, diagnostics) = problem.relax(t0, &setup.initial, None, setup.solver.kappa)?;
    let energy = problem.energy(t0, &q, diagnostics.kappa, None)?;
    write_fields(&setup.mesh, &q, Configuration::Deformed, &dir.join("minimizer.vtk"))?;
    write_fields(&setup.mesh, &q, Configuration::Reference, &dir.join("minimizer_reference.vtk"))?;
    ctx.say(ledger_line(&energy.ledger));
    ctx.say(format!(
        "kappa {:.1e}, {} outer / {} inner iterations, gradient norm {:.3e}, max |det - 1| {:.3e}",
        diagnostics.kappa,
        diagnostics.outer_iterations,
        diagnostics.inner_iterations,
        diagnostics.gradient_norm,
        diagnostics.incompressibility_residual
    ));
    Ok(())
}

fn audit(ctx: &Ctx, scenario: &Path, trace: &Path) -> Result<(), Failure> {
    let s = ctx.scenario(scenario)?;
    let rows = read_trace(trace)?;
    let limits = TraceLimits {
        tol_stab: s.audit.tol_stab,
        tol_bal: s.audit.tol_bal,
        tol_incomp: s.solver.tol_incomp,
        cn: Limits::default().cn,
    };
    let failures = check_trace(&rows, &limits);
    ctx.say(format!("{}: {} rows checked", trace.display(), rows.len()));
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Audit(failures))
    }
}

fn selftest(ctx: &Ctx) -> Result<(), Failure> {
    let checks = run_selftest();
    for c in &checks {
        ctx.say(format!("{} {} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail));
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Audit(failed))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Run { scenario } => run(&ctx, scenario),
        Command::Minimize { scenario } => minimize(&ctx, scenario),
        Command::Audit { scenario, trace } => audit(&ctx, scenario, trace),
        Command::Selftest => selftest(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Audit(list)) => {
            for line in &list {
                eprintln!("audit: {line}");
            }
            ExitCode::from(EXIT_AUDIT)
        }
    }
}
