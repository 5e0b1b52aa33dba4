//! Browser bindings for the `distcd` solver. Every export returns a JSON string so the
//! page stays plain JavaScript.

use distcd::datamodel::{partition_columns, ColMatrix, PartitionStrategy};
use distcd::engine::{solve, EngineConfig, GapTolerance, SimulatedClock, StopReason};
use distcd::io::{gen_synthetic, LabelKind, SyntheticSpec};
use distcd::objectives::{ObjectiveSpec, Regularizer};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const DEMO_DATA: SyntheticSpec =
    SyntheticSpec { n: 200, d: 100, density: 0.1, true_nnz: 10, noise_sd: 0.01, seed: 42 };

const H_GRID: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];

fn demo_problem(objective: &str, lambda: f64, eta: f64) -> distcd::Result<(ColMatrix, ObjectiveSpec)> {
    let labels = if objective == "sparse_logistic" { LabelKind::Classification } else { LabelKind::Regression };
    let (mut m, b, _) = gen_synthetic(&DEMO_DATA, labels)?;
    m.normalize_columns();
    let spec = match objective {
        "lasso" => ObjectiveSpec::lasso(&m, b, lambda)?,
        "elastic_net" => ObjectiveSpec::elastic_net(&m, b, lambda, eta)?,
        "sparse_logistic" => ObjectiveSpec::sparse_logistic(&m, b, lambda)?,
        other => return Err(distcd::Error::InvalidArgument(format!("unknown objective {other:?}"))),
    };
    Ok((m, spec))
}

#[derive(Debug, Serialize)]
pub struct TracePoint {
    pub round: usize,
    pub primal: f64,
    pub gap: f64,
    pub nnz: usize,
}

#[derive(Debug, Serialize)]
pub struct SolverReport {
    pub rounds: usize,
    pub converged: bool,
    pub sigma_prime: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverParams<'a> {
    pub objective: &'a str,
    pub lambda: f64,
    pub eta: f64,
    pub k: usize,
    pub h: usize,
    pub gamma: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

pub fn solver_report(p: &SolverParams<'_>) -> distcd::Result<SolverReport> {
    let (m, spec) = demo_problem(p.objective, p.lambda, p.eta)?;
    let part = partition_columns(m.n_cols(), p.k, PartitionStrategy::Contiguous, 0)?;
    let cfg = EngineConfig::new(p.k)
        .with_gamma(p.gamma)
        .with_h_local(p.h)
        .with_max_rounds(p.max_rounds)
        .with_gap_tol(GapTolerance::Relative(1e-8))
        .with_seed(p.seed)
        .with_parallel(false);
    let out = solve(&cfg, &spec, &m, &part)?;
    Ok(SolverReport {
        rounds: out.state.round,
        converged: out.stop_reason == StopReason::GapTol,
        sigma_prime: cfg.sigma_prime(),
        trace: out
            .trace
            .iter()
            .map(|t| TracePoint { round: t.round, primal: t.primal, gap: t.gap, nnz: t.nnz })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct HPoint {
    pub h: usize,
    pub rounds: usize,
    pub converged: bool,
    pub time_ms: f64,
}

/// Lasso rounds and modelled time to reach an absolute gap of `1e-4` for each H.
pub fn h_sweep(latency_ms: f64, update_us: f64, k: usize) -> distcd::Result<Vec<HPoint>> {
    let (m, spec) = demo_problem("lasso", 0.1, 1.0)?;
    let part = partition_columns(m.n_cols(), k, PartitionStrategy::Contiguous, 0)?;
    let clock = SimulatedClock { latency_ms, update_cost_ms: update_us * 1e-3 };
    H_GRID
        .iter()
        .map(|&h| {
            let cfg = EngineConfig::new(k)
                .with_h_local(h)
                .with_max_rounds(3000)
                .with_gap_tol(GapTolerance::Absolute(1e-4))
                .with_parallel(false);
            let out = solve(&cfg, &spec, &m, &part)?;
            let last = out.last();
            Ok(HPoint {
                h,
                rounds: out.state.round,
                converged: out.stop_reason == StopReason::GapTol,
                time_ms: clock.elapsed_ms(last.round, last.critical_updates),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct ConjugateCurve {
    pub a: Vec<f64>,
    /// `ℓ(a)`; `null` outside the support.
    pub value: Vec<f64>,
    pub x: Vec<f64>,
    pub conj: Vec<f64>,
}

/// Samples `ℓ` on `[-2B', 2B']` and `ℓ*` on `[-3λ, 3λ]`. `param` is the support bound
/// for `l1` and `η` for `elastic_net`.
pub fn conjugate_samples(kind: &str, lambda: f64, param: f64, samples: usize) -> distcd::Result<ConjugateCurve> {
    let reg = match kind {
        "l1" => Regularizer::l1(lambda, param)?,
        "elastic_net" => Regularizer::elastic_net(lambda, param)?,
        other => return Err(distcd::Error::InvalidArgument(format!("unknown penalty {other:?}"))),
    };
    let samples = samples.max(2);
    let reach = 2.0 * reg.support_bound().unwrap_or(2.0);
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        (0..samples).map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64).collect()
    };
    let a = grid(-reach, reach);
    let x = grid(-3.0 * lambda, 3.0 * lambda);
    Ok(ConjugateCurve {
        value: a.iter().map(|&t| reg.value(t)).collect(),
        conj: x.iter().map(|&t| reg.conj(t)).collect(),
        a,
        x,
    })
}

fn to_json<T: Serialize>(r: distcd::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Convergence trace for the demo instance.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn run_solver(
    objective: &str,
    lambda: f64,
    eta: f64,
    k: usize,
    h: usize,
    gamma: f64,
    max_rounds: usize,
    seed: u32,
) -> Result<String, JsError> {
    let params = SolverParams { objective, lambda, eta, k, h, gamma, max_rounds, seed: u64::from(seed) };
    to_json(solver_report(&params))
}

/// Rounds and simulated wall-clock time versus local work H.
#[wasm_bindgen]
pub fn h_tradeoff(latency_ms: f64, update_us: f64, k: usize) -> Result<String, JsError> {
    to_json(h_sweep(latency_ms, update_us, k))
}

/// A penalty and its convex conjugate.
#[wasm_bindgen]
pub fn conjugate_curve(kind: &str, lambda: f64, param: f64, samples: usize) -> Result<String, JsError> {
    to_json(conjugate_samples(kind, lambda, param, samples))
}
