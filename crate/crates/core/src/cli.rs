//! Command-line entry point for solver, baseline and diagnostic runs.
//!
//! Exit codes: `0` gap tolerance reached (or diagnostic passed), `2` round cap hit
//! without reaching the tolerance (or diagnostic violated), `1` usage or data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, ValueEnum};

use crate::baselines::{run_baseline, BaselineConfig, BaselineKind};
use crate::datamodel::{partition_columns, PartitionStrategy};
use crate::engine::{
    check_lemma3, check_sigma_safety, round_theta, run_round, solve, EngineConfig, GapTolerance,
    SimulatedClock, SolveOutput, SolverState, StopReason,
};
use crate::io::{gen_synthetic, read_libsvm, trace_records, write_trace, LabelKind, SyntheticSpec, TraceClock, TraceFormat};
use crate::objectives::ObjectiveSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Lasso,
    ElasticNet,
    SparseLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Lemma3,
    Sigma,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockKind {
    Wall,
    Simulated,
}

/// `n,d,density,nnz,noise,seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticArg(pub SyntheticSpec);

impl FromStr for SyntheticArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(format!("expected n,d,density,nnz,noise,seed; got {s:?}"));
        }
        let int = |i: usize| parts[i].parse::<usize>().map_err(|e| format!("{}: {e}", parts[i]));
        let real = |i: usize| parts[i].parse::<f64>().map_err(|e| format!("{}: {e}", parts[i]));
        Ok(SyntheticArg(SyntheticSpec {
            n: int(0)?,
            d: int(1)?,
            density: real(2)?,
            true_nnz: int(3)?,
            noise_sd: real(4)?,
            seed: parts[5].parse::<u64>().map_err(|e| format!("{}: {e}", parts[5]))?,
        }))
    }
}

#[derive(Debug, Parser)]
#[command(name = "distcd", about = "Distributed primal-dual coordinate descent for sparse GLMs")]
pub struct Args {
    /// LIBSVM file (examples become rows, features become columns)
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Synthetic instance: n,d,density,nnz,noise,seed
    #[arg(long)]
    pub synthetic: Option<SyntheticArg>,
    #[arg(long, value_enum, default_value = "lasso")]
    pub objective: ObjectiveKind,
    #[arg(long)]
    pub lambda: f64,
    /// Elastic-net mixing parameter in (0, 1]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Override the L1 support bound (must be >= f(0)/lambda)
    #[arg(long)]
    pub support_bound: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Defaults to gamma * k
    #[arg(long)]
    pub sigma_prime: Option<f64>,
    /// Local epochs per round
    #[arg(long, default_value_t = 1)]
    pub h: usize,
    #[arg(long, default_value_t = 1000)]
    pub rounds: usize,
    /// Gap tolerance, relative to max(1, |primal|) unless --abs-gap
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
    #[arg(long)]
    pub abs_gap: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "contiguous")]
    pub partition: PartitionStrategy,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineKind>,
    /// Prox-GD step (defaults to tau/||A||^2)
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1)]
    pub trace_every: usize,
    /// Measure local solver quality every N rounds (0 = off)
    #[arg(long, default_value_t = 0)]
    pub theta_every: usize,
    /// Run workers sequentially on one thread
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TraceFormat,
    /// elapsed_ms column: deterministic model time or measured wall time
    #[arg(long, value_enum, default_value = "simulated")]
    pub clock: ClockKind,
    /// Simulated per-round communication latency
    #[arg(long, default_value_t = 0.0)]
    pub latency_ms: f64,
    /// Simulated cost of one coordinate update
    #[arg(long, default_value_t = 1e-4)]
    pub update_ms: f64,
    #[arg(long, value_enum)]
    pub check: Option<CheckKind>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match run(&args, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Problem {
    m: crate::datamodel::ColMatrix,
    spec: ObjectiveSpec,
}

fn load(args: &Args) -> Result<Problem> {
    let label_kind = match args.objective {
        ObjectiveKind::SparseLogistic => LabelKind::Classification,
        _ => LabelKind::Regression,
    };
    let (mut m, labels) = match (&args.data, &args.synthetic) {
        (Some(path), None) => read_libsvm(path, true)?,
        (None, Some(SyntheticArg(syn))) => {
            let (m, b, _) = gen_synthetic(syn, label_kind)?;
            (m, b)
        }
        _ => return Err(Error::InvalidArgument("exactly one of --data / --synthetic".into())),
    };
    if args.normalize {
        m.normalize_columns();
    }
    let spec = match args.objective {
        ObjectiveKind::Lasso => ObjectiveSpec::lasso(&m, labels, args.lambda)?,
        ObjectiveKind::SparseLogistic => ObjectiveSpec::sparse_logistic(&m, labels, args.lambda)?,
        ObjectiveKind::ElasticNet => {
            let eta = args
                .eta
                .ok_or_else(|| Error::InvalidArgument("--eta is required for elastic_net".into()))?;
            ObjectiveSpec::elastic_net(&m, labels, args.lambda, eta)?
        }
    };
    let spec = match args.support_bound {
        Some(b) => spec.with_support_bound(b)?,
        None => spec,
    };
    Ok(Problem { m, spec })
}

fn engine_config(args: &Args) -> EngineConfig {
    let mut cfg = EngineConfig::new(args.k)
        .with_gamma(args.gamma)
        .with_h_local(args.h)
        .with_max_rounds(args.rounds)
        .with_gap_tol(if args.abs_gap {
            GapTolerance::Absolute(args.gap_tol)
        } else {
            GapTolerance::Relative(args.gap_tol)
        })
        .with_seed(args.seed)
        .with_trace_every(args.trace_every)
        .with_theta_every(args.theta_every)
        .with_parallel(!args.sequential);
    cfg.sigma_prime = args.sigma_prime;
    cfg
}

pub fn run(args: &Args, out: &mut dyn Write) -> Result<i32> {
    let Problem { m, spec } = load(args)?;
    let cfg = engine_config(args);
    cfg.validate()?;
    let part = partition_columns(m.n_cols(), args.k, args.partition, args.seed)?;

    if let Some(check) = args.check {
        return match check {
            CheckKind::Lemma3 => {
                let worst = check_lemma3(&spec, &m, &part, &cfg, args.trials, args.seed)?;
                writeln!(out, "lemma3 worst_violation={worst:e} trials={}", args.trials)?;
                Ok(if worst <= 1e-8 { 0 } else { 2 })
            }
            CheckKind::Sigma => {
                let sp = cfg.sigma_prime();
                let worst = check_sigma_safety(&m, &part, cfg.gamma, sp, args.trials.max(1), args.seed)?;
                writeln!(out, "sigma worst_ratio={worst} sigma_prime={sp} safe={}", worst <= sp + 1e-9)?;
                Ok(if worst <= sp + 1e-9 { 0 } else { 2 })
            }
            CheckKind::Theta => {
                let state = SolverState::zeros(m.n_cols(), m.n_rows());
                let (_, results) = run_round(&state, &cfg, &spec, &m, &part)?;
                let theta = round_theta(&state, &results, &cfg, &spec, &m, &part)?;
                writeln!(out, "theta worst={theta} h={} k={}", args.h, args.k)?;
                Ok(0)
            }
        };
    }

    let output: SolveOutput = match args.baseline {
        None => solve(&cfg, &spec, &m, &part)?,
        Some(kind) => {
            let mut bcfg = match kind {
                BaselineKind::ProxGd => BaselineConfig::prox_gd(),
                BaselineKind::MbCd => {
                    BaselineConfig::mb_cd(args.batch.unwrap_or((m.n_cols() / args.k).max(1)), args.beta)
                }
            };
            bcfg.step_size = args.step;
            bcfg.max_rounds = args.rounds;
            bcfg.gap_tol = cfg.gap_tol;
            bcfg.seed = args.seed;
            bcfg.trace_every = args.trace_every;
            run_baseline(&bcfg, &spec, &m)?
        }
    };

    if let Some(path) = &args.out {
        let clock = match args.clock {
            ClockKind::Wall => TraceClock::Wall,
            ClockKind::Simulated => TraceClock::Simulated(SimulatedClock {
                latency_ms: args.latency_ms,
                update_cost_ms: args.update_ms,
            }),
        };
        write_trace(&trace_records(&output.trace, clock), path, args.format)?;
    }
    let last = output.last();
    writeln!(
        out,
        "primal={} gap={:e} nnz={} rounds={} stop={}",
        last.primal,
        last.gap,
        last.nnz,
        output.state.round,
        match output.stop_reason {
            StopReason::GapTol => "gap_tol",
            StopReason::MaxRounds => "max_rounds",
        }
    )?;
    Ok(match output.stop_reason {
        StopReason::GapTol => 0,
        StopReason::MaxRounds => 2,
    })
}
