use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ring_bisection::harness::verify::{verify, Suite, VerifyOptions};
use ring_bisection::harness::{
    balanced_metric, bench, generate, initial_state, parse_algorithms, restricted_metric,
    run_experiment, Algorithm, GeneratorSpec, HarnessError, InitSpec, RunConfig, TraceFormat,
};
use ring_bisection::online::MtsInstance;
use ring_bisection::oracle::{enumerate_states, exact_opt_in};
use ring_bisection::{global_rebalance, Alpha, RingSize};

#[derive(Parser)]
#[command(
    name = "ringbisect",
    version,
    about = "Online bisection on a ring: oracles, offline shadow, online solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count (and optionally list) the states of a space.
    States(StatesArgs),
    /// Exact offline optimum of one generated sequence.
    Opt(OptArgs),
    /// Run algorithms on one generated sequence and emit traces.
    Run(RunArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
    /// Time each stage of an experiment.
    Bench(ExperimentArgs),
}

#[derive(Args)]
struct StatesArgs {
    #[arg(long)]
    n: usize,
    /// Restrict to at most 2k cut-edges (with alpha-balance); omit for the
    /// perfectly balanced space.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<Alpha>,
    /// Print every state.
    #[arg(long)]
    list: bool,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Balance factor, e.g. 3/2 or 1.75; defaults to 3/2 + 1/k.
    #[arg(long)]
    alpha: Option<Alpha>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// uniform, sweep, blocks[:L] or cut-chaser.
    #[arg(long, default_value = "uniform")]
    gen: GeneratorSpec,
    #[arg(long, default_value_t = 100)]
    len: usize,
    /// Initial balanced coloring: halves, alternating or random.
    #[arg(long, default_value = "random")]
    init: InitSpec,
    /// Learning rate of the multiplicative-weights solver.
    #[arg(long)]
    eta: Option<f64>,
}

impl ExperimentArgs {
    fn config(&self, algos: Vec<Algorithm>) -> RunConfig {
        RunConfig {
            n: self.n,
            k: self.k,
            alpha: self.alpha,
            seed: self.seed,
            gen: self.gen,
            len: self.len,
            algos,
            init: self.init,
            eta: self.eta,
        }
    }
}

#[derive(Args)]
struct OptArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Optimize over the restricted space instead of balanced states.
    #[arg(long)]
    restricted: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Comma-separated list from opt, ropt, off, wfa, mw.
    #[arg(long, default_value = "opt,ropt,off,wfa,mw")]
    algo: String,
    /// Trace destination; `-` for stdout. No trace is written when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: TraceFormat,
    /// Summary destination; printed to stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run (repeatable); all when omitted.
    #[arg(long = "suite")]
    suites: Vec<Suite>,
    #[arg(long, default_value_t = 4)]
    n_min: usize,
    #[arg(long, default_value_t = 12)]
    n_max: usize,
    #[arg(long, default_value_t = 500)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    len: usize,
    /// Shrink arcs of the less frequent color during rebalancing.
    #[arg(long)]
    mutate: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), HarnessError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::States(a) => {
            let n = RingSize::new(a.n)?;
            let space = match a.k {
                Some(k) => {
                    let alpha = a.alpha.unwrap_or_else(|| Alpha::shadow_default(k.max(1)));
                    enumerate_states(n, Some(2 * k), alpha)?
                }
                None => enumerate_states(n, None, a.alpha.unwrap_or_else(Alpha::one))?,
            };
            println!(
                "{} states (n = {}, alpha = {})",
                space.len(),
                a.n,
                space.alpha()
            );
            if a.list {
                for s in space.states() {
                    println!("{s}\tless={}", s.less_count());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Opt(a) => {
            let cfg = a.exp.config(Vec::new());
            let n = cfg.validate()?;
            let initial = initial_state(cfg.init, n, cfg.seed);
            let restricted = if a.restricted || cfg.gen == GeneratorSpec::CutChaser {
                Some(restricted_metric(n, cfg.k, cfg.alpha())?)
            } else {
                None
            };
            let inst = match &restricted {
                Some(m) => Some(MtsInstance::new(m, &initial, cfg.k)?),
                None => None,
            };
            let requests = generate(cfg.gen, n, cfg.len, cfg.seed, inst.as_ref())?;
            let (start, result) = if a.restricted {
                let (x0, _) = global_rebalance(&initial, cfg.k)?;
                let m = restricted.as_ref().expect("built above");
                (x0.clone(), exact_opt_in(m, &x0, &requests)?)
            } else {
                (
                    initial.clone(),
                    exact_opt_in(&balanced_metric(n)?, &initial, &requests)?,
                )
            };
            #[derive(Serialize)]
            struct OptReport {
                space: &'static str,
                start: String,
                cost: u64,
                hit_cost: u64,
                recolor_cost: u64,
                requests: Vec<usize>,
            }
            print_json(&OptReport {
                space: if a.restricted {
                    "restricted"
                } else {
                    "balanced"
                },
                start: start.to_string(),
                cost: result.cost,
                hit_cost: result.trajectory.hit_cost(),
                recolor_cost: result.trajectory.recolor_cost(),
                requests,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(a) => {
            let cfg = a.exp.config(parse_algorithms(&a.algo)?);
            let exp = run_experiment(&cfg)?;
            match a.out.as_deref() {
                Some(p) if p.as_os_str() == "-" => {
                    exp.write_trace(io::stdout().lock(), a.format)?
                }
                Some(p) => exp.write_trace(File::create(p)?, a.format)?,
                None => {}
            }
            let summary = exp.summary();
            match &a.summary {
                Some(p) => {
                    let mut f = File::create(p)?;
                    serde_json::to_writer_pretty(&mut f, &summary)?;
                    writeln!(f)?;
                }
                None => print_json(&summary)?,
            }
            if exp.invariants_ok() {
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &exp.violations {
                    eprintln!("violation: {v}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Verify(a) => {
            let opts = VerifyOptions {
                n_min: a.n_min,
                n_max: a.n_max,
                cases: a.cases,
                seed: a.seed,
                mutate: a.mutate,
                suites: if a.suites.is_empty() {
                    Suite::ALL.to_vec()
                } else {
                    a.suites
                },
                len: a.len,
            };
            let reports = verify(&opts)?;
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(|r| r.passed()) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Bench(a) => {
            let timings = bench(&a.config(Algorithm::ALL.to_vec()))?;
            for t in &timings {
                let states = t
                    .states
                    .map(|s| format!(" ({s} states)"))
                    .unwrap_or_default();
                println!(
                    "{:<28} {:>10.3} ms{states}",
                    t.stage,
                    t.elapsed.as_secs_f64() * 1e3
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
