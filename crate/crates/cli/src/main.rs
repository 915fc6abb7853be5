use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ldfopf::assemble::{solve_reduced_with, OpfSolution};
use ldfopf::experiment::{run_sweep, SweepConfig};
use ldfopf::fmt::sig;
use ldfopf::marginals::MarginalReport;
use ldfopf::netcase::{random_case, read_case_file, BranchId, DgSpec, NetworkCase, RandomCaseSpec};
use ldfopf::opf_model::ReducedOpf;
use ldfopf::validation::run_suite;
use ldfopf::Instance;
use ldfopf_conic::{ConicProgram, ConicSolver, InteriorPoint, ProgramError, SolveResult, SolverOptions, Status};

#[derive(Parser)]
#[command(name = "ldf-opf", version, about = "LinDistFlow OPF with marginal prices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a case and write solution.csv, duals.csv and marginals.csv.
    Solve(SolveArgs),
    /// Scale the limits of two branches over a grid and check the price bound.
    Sweep(SweepArgs),
    /// Run the invariant checks on a case.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SolveArgs {
    case: PathBuf,
    /// Override a branch limit, e.g. `2=3.0`; `none` removes it.
    #[arg(long = "flow-limit", value_name = "ID=VALUE")]
    flow_limits: Vec<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Print solver iterations to stderr.
    #[arg(long)]
    log: bool,
}

#[derive(Args)]
struct SweepArgs {
    case: PathBuf,
    #[arg(long, value_name = "A,B", default_value = "16,18")]
    branches: String,
    /// `start:end:steps`.
    #[arg(long, default_value = "1.0:0.75:20")]
    scale: String,
    #[arg(long = "watch-bus", default_value_t = 20)]
    watch_bus: usize,
    #[arg(long, default_value_t = 5)]
    seed: u64,
    /// `count,p_max,q_mag` of the added generators.
    #[arg(long, default_value = "25,0.0654,0.027")]
    dg: String,
    /// `lo,hi` range of their costs.
    #[arg(long = "dg-cost", default_value = "0,1")]
    dg_cost: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Case file; may be left out with `--random`.
    case: Option<PathBuf>,
    /// Check a generated tree instead, e.g. `--random n=100 seed=7`; `gens`
    /// defaults to a fifth of the buses.
    #[arg(long, num_args = 1..=3, value_name = "KEY=VALUE")]
    random: Option<Vec<String>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Validate(a) => cmd_validate(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<NetworkCase> {
    read_case_file(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_pair<T: std::str::FromStr>(s: &str, what: &str) -> Result<(T, T)> {
    let parts: Vec<_> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("{what}: expected two comma-separated values, got {s:?}");
    }
    let p = |v: &str| {
        v.parse::<T>()
            .map_err(|_| anyhow::anyhow!("{what}: cannot parse {v:?}"))
    };
    Ok((p(parts[0])?, p(parts[1])?))
}

struct StderrLog(InteriorPoint);

impl ConicSolver for StderrLog {
    fn solve(&self, prog: &ConicProgram) -> Result<SolveResult, ProgramError> {
        self.0.solve_logged(prog, &mut std::io::stderr())
    }
}

fn cmd_solve(a: &SolveArgs) -> Result<ExitCode> {
    let mut case = load(&a.case)?;
    for spec in &a.flow_limits {
        let (id, value) = spec
            .split_once('=')
            .with_context(|| format!("--flow-limit expects ID=VALUE, got {spec:?}"))?;
        let id: BranchId = id
            .trim()
            .parse()
            .with_context(|| format!("bad branch id in {spec:?}"))?;
        let branch = case
            .branches
            .iter_mut()
            .find(|b| b.id == id)
            .with_context(|| format!("unknown branch {id}"))?;
        branch.f_max = match value.trim() {
            "none" => None,
            v => Some(v.parse().with_context(|| format!("bad limit in {spec:?}"))?),
        };
    }
    let inst = Instance::new(case)?;
    let sol = if a.log {
        solve_reduced_with(&inst.opf, &StderrLog(InteriorPoint::default()))?
    } else {
        inst.solve()?
    };
    println!("status: {}", sol.status);
    match sol.status {
        Status::Optimal => {}
        Status::PrimalInfeasible => {
            println!("the case is infeasible; the solver returned a certificate of infeasibility");
            return Ok(ExitCode::from(2));
        }
        Status::DualInfeasible => {
            println!("the case is unbounded; the solver returned a certificate of unboundedness");
            return Ok(ExitCode::from(2));
        }
        s => bail!("solver stopped without a solution ({s})"),
    }
    println!("objective: {}", sig(sol.objective, 12));
    write_solution(&inst, &sol, &a.out)?;
    Ok(ExitCode::SUCCESS)
}

/// Writes `solution.csv`, `duals.csv` and `marginals.csv` for an optimal
/// solution.
fn write_solution(inst: &Instance, sol: &OpfSolution, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dual = sol.dual.as_ref().expect("optimal solutions carry duals");
    fs::write(out.join("solution.csv"), solution_csv(inst, sol))?;
    fs::write(out.join("duals.csv"), duals_csv(&inst.opf, dual))?;
    let report = MarginalReport::new(&inst.opf, sol)?;
    report.write_csv(&inst.opf, &out.join("marginals.csv"))?;
    let binding = report.binding_ids();
    if !binding.is_empty() {
        println!("binding branches: {binding:?}");
    }
    let degenerate = report.degenerate_ids();
    if !degenerate.is_empty() {
        println!("warning: primal and dual binding tests disagree on branches {degenerate:?}");
    }
    Ok(())
}

fn solution_csv(inst: &Instance, sol: &OpfSolution) -> String {
    let (p, q) = inst.injections(&sol.p_g, &sol.q_g);
    let v = inst.ldf.voltages(&p, &q);
    let (fp, fq) = inst.ldf.flows(&p, &q);
    let mut out = String::from("# ldf-opf v1\nkind,id,p,q,v,flow_p,flow_q,limit\n");
    let slack = &inst.case.slack;
    writeln!(
        out,
        "bus,{},{},{},{},,,",
        slack.bus,
        sig(-p.sum(), 12),
        sig(-q.sum(), 12),
        sig(slack.v0, 12)
    )
    .unwrap();
    for i in 0..inst.topo.n() {
        writeln!(
            out,
            "bus,{},{},{},{},,,",
            inst.topo.bus_id(i),
            sig(p[i], 12),
            sig(q[i], 12),
            sig(v[i], 12)
        )
        .unwrap();
    }
    for j in 0..inst.topo.n() {
        let id = inst.topo.branch_id(j);
        let limit = inst
            .case
            .branch(id)
            .and_then(|b| b.f_max)
            .map_or(String::new(), |f| sig(f, 12));
        writeln!(out, "branch,{id},,,,{},{},{limit}", sig(fp[j], 12), sig(fq[j], 12)).unwrap();
    }
    out
}

fn duals_csv(opf: &ReducedOpf, d: &ldfopf::opf_model::DualSolution) -> String {
    let mut out = String::from("# ldf-opf v1\nname,value\n");
    for (k, row) in opf.rows.iter().enumerate() {
        writeln!(out, "lambda:{},{}", row.label(&opf.bus_ids), sig(d.lambda[k], 12)).unwrap();
    }
    for (k, bus) in opf.gen_buses.iter().enumerate() {
        for (name, v) in [
            ("alpha_lb", d.alpha_lb[k]),
            ("alpha_ub", d.alpha_ub[k]),
            ("beta_lb", d.beta_lb[k]),
            ("beta_ub", d.beta_ub[k]),
        ] {
            writeln!(out, "{name}:{bus},{}", sig(v, 12)).unwrap();
        }
    }
    for (k, lim) in opf.limits.iter().enumerate() {
        let id = opf.branch_ids[lim.branch];
        for (name, v) in [("mu", d.mu[k]), ("theta", d.theta[k]), ("phi", d.phi[k])] {
            writeln!(out, "{name}:{id},{}", sig(v, 12)).unwrap();
        }
    }
    out
}

fn cmd_sweep(a: &SweepArgs) -> Result<ExitCode> {
    let case = load(&a.case)?;
    let (b1, b2) = parse_pair::<BranchId>(&a.branches, "--branches")?;
    let scale: Vec<_> = a.scale.split(':').collect();
    let [start, end, steps] = scale[..] else {
        bail!("--scale expects start:end:steps, got {:?}", a.scale);
    };
    let dg: Vec<_> = a.dg.split(',').map(str::trim).collect();
    let [count, p_max, q_mag] = dg[..] else {
        bail!("--dg expects count,p_max,q_mag, got {:?}", a.dg);
    };
    let threads = match std::env::var("LDF_OPF_THREADS") {
        Ok(v) => Some(v.parse().context("LDF_OPF_THREADS must be a positive integer")?),
        Err(_) => None,
    };
    let cfg = SweepConfig {
        dg: DgSpec {
            count: count.parse().context("--dg count")?,
            p_max: p_max.parse().context("--dg p_max")?,
            q_mag: q_mag.parse().context("--dg q_mag")?,
            cost_range: parse_pair(&a.dg_cost, "--dg-cost")?,
            seed: a.seed,
        },
        branches: [b1, b2],
        scale_start: start.parse().context("--scale start")?,
        scale_end: end.parse().context("--scale end")?,
        steps: steps.parse().context("--scale steps")?,
        watch_bus: a.watch_bus,
        threads,
        solver: SolverOptions::default(),
    };
    let result = run_sweep(&case, &cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    result.write_csv(&a.out.join("sweep.csv"))?;
    if cfg.steps == 1 {
        // a single point is an ordinary solve of the scaled case
        let mut single = result.case.clone();
        for br in single.branches.iter_mut().filter(|b| cfg.branches.contains(&b.id)) {
            br.f_max = br.f_max.map(|f| f * cfg.scale_start);
        }
        let inst = Instance::new(single)?;
        let sol = solve_reduced_with(&inst.opf, &InteriorPoint::new(cfg.solver))?;
        if sol.is_optimal() {
            write_solution(&inst, &sol, &a.out)?;
        }
    }

    let failed = result.points.iter().filter(|p| p.status != Status::Optimal).count();
    let violated = result.points.iter().filter(|p| p.holds() == Some(false)).count();
    println!(
        "{} grid points, {} not optimal, bound violated at {}",
        result.points.len(),
        failed,
        violated
    );
    println!(
        "base limits: branch {} = {}, branch {} = {}",
        b1,
        sig(result.base_limits.0, 12),
        b2,
        sig(result.base_limits.1, 12)
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(a: &ValidateArgs) -> Result<ExitCode> {
    let case = match (&a.random, &a.case) {
        (Some(kv), _) => {
            let mut spec = RandomCaseSpec {
                buses: 30,
                generators: 0,
                seed: 0,
            };
            let mut gens = None;
            for item in kv {
                let (k, v) = item
                    .split_once('=')
                    .with_context(|| format!("--random expects KEY=VALUE, got {item:?}"))?;
                match k {
                    "n" => spec.buses = v.parse().context("--random n")?,
                    "seed" => spec.seed = v.parse().context("--random seed")?,
                    "gens" => gens = Some(v.parse().context("--random gens")?),
                    _ => bail!("unknown --random key {k:?}"),
                }
            }
            spec.generators = gens.unwrap_or(spec.buses / 5);
            random_case(&spec)
        }
        (None, Some(path)) => match load(path) {
            Ok(case) => case,
            Err(e) => return Ok(print_table(&[("case", false, format!("{e:#}"))])),
        },
        (None, None) => bail!("give a case file or --random"),
    };
    let inst = match Instance::new(case) {
        Ok(inst) => inst,
        Err(e) => return Ok(print_table(&[("case", false, e.to_string())])),
    };
    let checks = run_suite(&inst);
    let rows: Vec<_> = checks.iter().map(|c| (c.name, c.passed, c.detail.clone())).collect();
    Ok(print_table(&rows))
}

fn print_table(rows: &[(&str, bool, String)]) -> ExitCode {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    for (name, passed, detail) in rows {
        println!("{:width$}  {}  {}", name, if *passed { "pass" } else { "FAIL" }, detail);
    }
    if rows.iter().all(|r| r.1) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
