//! Outer loop: parallel local solves, aggregation at a barrier, certificates and
//! diagnostics for the theory constants.
//!
//! One round reads the shared vector `v`, computes `w = ∇f(v)` once, lets every
//! worker approximately minimize its local subproblem, and then applies
//! `α ← α + γ Σ Δα_[k]`, `v ← v + γ Σ Δv_k` with the sum taken in ascending worker
//! order. Rounds are transactional: the new state is built in fresh buffers and only
//! returned when every worker succeeded.
//!
//! Certificates are computed on the live iterate `α(t)`, not on an averaged iterate.

use std::time::Duration;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::datamodel::{norm_inf, ColMatrix, Partition};
use crate::localsolver::{
    measure_theta, solve_local, solve_local_updates, subproblem_value, LocalResult,
    SubproblemView,
};
use crate::objectives::{duality_gap, primal_value, ObjectiveSpec, Regularizer};
use crate::{rng, Error, Result};

/// Work each worker spends on its subproblem per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalBudget {
    /// `h·|P_k|` sampled coordinate updates.
    Epochs(usize),
    /// A fixed number of coordinate updates regardless of block size.
    Updates(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapTolerance {
    Absolute(f64),
    /// Relative to `max(1, |primal|)`.
    Relative(f64),
}

impl GapTolerance {
    pub fn threshold(&self, primal: f64) -> f64 {
        match *self {
            GapTolerance::Absolute(t) => t,
            GapTolerance::Relative(t) => t * primal.abs().max(1.0),
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            GapTolerance::Absolute(t) | GapTolerance::Relative(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub k_count: usize,
    pub gamma: f64,
    /// `None` selects the safe default `γK`.
    pub sigma_prime: Option<f64>,
    pub local: LocalBudget,
    pub max_rounds: usize,
    pub gap_tol: GapTolerance,
    pub seed: u64,
    /// Certificates (and the `v = Aα` re-validation) run every `trace_every` rounds.
    pub trace_every: usize,
    /// Run workers on OS threads. Results are identical either way.
    pub parallel: bool,
    /// Measure the local solver quality every `theta_every` rounds (0 disables).
    pub theta_every: usize,
    pub theta_oracle_sweeps: usize,
}

impl EngineConfig {
    pub fn new(k_count: usize) -> Self {
        EngineConfig {
            k_count,
            gamma: 1.0,
            sigma_prime: None,
            local: LocalBudget::Epochs(1),
            max_rounds: 1000,
            gap_tol: GapTolerance::Relative(1e-6),
            seed: 0,
            trace_every: 1,
            parallel: true,
            theta_every: 0,
            theta_oracle_sweeps: 10_000,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_sigma_prime(mut self, sigma_prime: f64) -> Self {
        self.sigma_prime = Some(sigma_prime);
        self
    }

    pub fn with_h_local(mut self, h: usize) -> Self {
        self.local = LocalBudget::Epochs(h);
        self
    }

    pub fn with_local_budget(mut self, local: LocalBudget) -> Self {
        self.local = local;
        self
    }

    pub fn with_max_rounds(mut self, rounds: usize) -> Self {
        self.max_rounds = rounds;
        self
    }

    pub fn with_gap_tol(mut self, tol: GapTolerance) -> Self {
        self.gap_tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn with_theta_every(mut self, every: usize) -> Self {
        self.theta_every = every;
        self
    }

    pub fn sigma_prime(&self) -> f64 {
        self.sigma_prime.unwrap_or(self.gamma * self.k_count as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k_count == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        let sp = self.sigma_prime();
        if !(sp.is_finite() && sp >= self.gamma) {
            return bad(format!("sigma' = {sp} must be finite and >= gamma = {}", self.gamma));
        }
        match self.local {
            LocalBudget::Epochs(0) | LocalBudget::Updates(0) => {
                return bad("local budget must be at least 1".into())
            }
            _ => {}
        }
        if self.trace_every == 0 {
            return bad("trace_every must be at least 1".into());
        }
        if self.gap_tol.value().is_nan() || self.gap_tol.value() < 0.0 {
            return bad("gap tolerance must be >= 0".into());
        }
        Ok(())
    }
}

/// Iterate `α`, shared vector `v = Aα` and bookkeeping counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub alpha: Vec<f64>,
    pub v: Vec<f64>,
    pub round: usize,
    /// Total coordinate updates over all workers.
    pub local_updates: usize,
    /// Sum over rounds of the largest per-worker update count (the parallel critical path).
    pub critical_updates: usize,
    pub clamp_hits: usize,
}

impl SolverState {
    pub fn zeros(n: usize, d: usize) -> Self {
        SolverState {
            alpha: vec![0.0; n],
            v: vec![0.0; d],
            round: 0,
            local_updates: 0,
            critical_updates: 0,
            clamp_hits: 0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.alpha.iter().filter(|&&a| a != 0.0).count()
    }

    pub fn max_abs_alpha(&self) -> f64 {
        norm_inf(&self.alpha)
    }

    /// `‖v − Aα‖∞`.
    pub fn v_drift(&self, m: &ColMatrix) -> Result<f64> {
        let fresh = m.mat_vec(&self.alpha)?;
        Ok(fresh.iter().zip(&self.v).fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub nnz: usize,
    pub local_updates: usize,
    pub critical_updates: usize,
    pub elapsed: Duration,
    pub theta_estimate: Option<f64>,
    pub max_abs_alpha: f64,
    pub clamp_hits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GapTol,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub state: SolverState,
    pub trace: Vec<RoundTrace>,
    pub stop_reason: StopReason,
    /// Whether every column had norm ≤ 1 (the regime the rate constants assume).
    pub columns_normalized: bool,
}

impl SolveOutput {
    pub fn last(&self) -> &RoundTrace {
        self.trace.last().expect("trace always holds the initial certificate")
    }
}

/// Dispatches the per-worker local solves and gathers their results in worker order.
pub trait Transport: Sync {
    fn map_workers(
        &self,
        k: usize,
        job: &(dyn Fn(usize) -> Result<LocalResult> + Sync),
    ) -> Vec<Result<LocalResult>>;
}

/// All workers run one after another on the calling thread.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sequential;

impl Transport for Sequential {
    fn map_workers(
        &self,
        k: usize,
        job: &(dyn Fn(usize) -> Result<LocalResult> + Sync),
    ) -> Vec<Result<LocalResult>> {
        (0..k).map(job).collect()
    }
}

/// One scoped OS thread per worker; the join is the round barrier.
#[derive(Debug, Default, Clone, Copy)]
pub struct Threaded;

impl Transport for Threaded {
    fn map_workers(
        &self,
        k: usize,
        job: &(dyn Fn(usize) -> Result<LocalResult> + Sync),
    ) -> Vec<Result<LocalResult>> {
        if k == 1 {
            return vec![job(0)];
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..k).map(|w| s.spawn(move || job(w))).collect();
            handles
                .into_iter()
                .enumerate()
                .map(|(w, h)| {
                    h.join().unwrap_or_else(|_| {
                        Err(Error::WorkerFailed { worker: w, reason: "panicked".into() })
                    })
                })
                .collect()
        })
    }
}

fn check_inputs(cfg: &EngineConfig, spec: &ObjectiveSpec, m: &ColMatrix, p: &Partition) -> Result<()> {
    cfg.validate()?;
    if p.n() != m.n_cols() {
        return Err(Error::DimensionMismatch { expected: m.n_cols(), got: p.n() });
    }
    if p.k_count() != cfg.k_count {
        return Err(Error::InvalidArgument(format!(
            "partition has {} blocks but k = {}",
            p.k_count(),
            cfg.k_count
        )));
    }
    if spec.data_fit.dim() != m.n_rows() {
        return Err(Error::DimensionMismatch { expected: m.n_rows(), got: spec.data_fit.dim() });
    }
    Ok(())
}

fn make_view<'a>(
    cfg: &EngineConfig,
    spec: &ObjectiveSpec,
    m: &'a ColMatrix,
    block: &'a [usize],
    w: &'a [f64],
    alpha: &'a [f64],
    f_v: f64,
) -> SubproblemView<'a> {
    SubproblemView {
        matrix: m,
        block,
        w,
        alpha,
        sigma_prime: cfg.sigma_prime(),
        tau: spec.tau(),
        reg: spec.reg,
        f_share: f_v / cfg.k_count as f64,
    }
}

/// One round on a caller-supplied transport.
pub fn run_round_with(
    transport: &dyn Transport,
    state: &SolverState,
    cfg: &EngineConfig,
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    p: &Partition,
) -> Result<(SolverState, Vec<LocalResult>)> {
    check_inputs(cfg, spec, m, p)?;
    let w = spec.data_fit.grad(&state.v)?;
    let f_v = spec.data_fit.value(&state.v)?;
    let round = state.round as u64;
    let job = |k: usize| -> Result<LocalResult> {
        let view = make_view(cfg, spec, m, p.block(k), &w, &state.alpha, f_v);
        let seed = rng::mix(cfg.seed, k as u64, round);
        match cfg.local {
            LocalBudget::Epochs(h) => solve_local(&view, h, seed),
            LocalBudget::Updates(u) => solve_local_updates(&view, u, seed),
        }
    };
    let results: Vec<LocalResult> =
        transport.map_workers(cfg.k_count, &job).into_iter().collect::<Result<_>>()?;
    if results.len() != cfg.k_count {
        return Err(Error::WorkerFailed {
            worker: results.len(),
            reason: "transport returned too few results".into(),
        });
    }

    let mut next = state.clone();
    for res in &results {
        for (&i, &dx) in &res.delta_alpha {
            next.alpha[i] += cfg.gamma * dx;
        }
    }
    next.v = reduce_shared(&state.v, cfg.gamma, &results);
    next.round += 1;
    next.local_updates += results.iter().map(|r| r.updates_done + r.skipped_zero).sum::<usize>();
    next.critical_updates +=
        results.iter().map(|r| r.updates_done + r.skipped_zero).max().unwrap_or(0);
    next.clamp_hits += results.iter().map(|r| r.clamp_hits).sum::<usize>();
    Ok((next, results))
}

/// `v + γ Σ_k Δv_k`, summed in ascending worker order.
pub fn reduce_shared(v: &[f64], gamma: f64, results: &[LocalResult]) -> Vec<f64> {
    let mut sum = vec![0.0; v.len()];
    for res in results {
        for (s, dv) in sum.iter_mut().zip(&res.delta_v) {
            *s += dv;
        }
    }
    v.iter().zip(&sum).map(|(a, s)| a + gamma * s).collect()
}

/// One round of the distributed method.
pub fn run_round(
    state: &SolverState,
    cfg: &EngineConfig,
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    p: &Partition,
) -> Result<(SolverState, Vec<LocalResult>)> {
    if cfg.parallel {
        run_round_with(&Threaded, state, cfg, spec, m, p)
    } else {
        run_round_with(&Sequential, state, cfg, spec, m, p)
    }
}

/// Worst per-worker `θ` of the given round results, measured against the views the
/// results were computed from.
pub fn round_theta(
    prev: &SolverState,
    results: &[LocalResult],
    cfg: &EngineConfig,
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    p: &Partition,
) -> Result<f64> {
    let w = spec.data_fit.grad(&prev.v)?;
    let f_v = spec.data_fit.value(&prev.v)?;
    let mut worst = 0.0f64;
    for (k, res) in results.iter().enumerate() {
        let view = make_view(cfg, spec, m, p.block(k), &w, &prev.alpha, f_v);
        worst = worst.max(measure_theta(&view, res, cfg.theta_oracle_sweeps)?);
    }
    Ok(worst)
}

/// Runs rounds until the gap certificate falls below the tolerance or the round cap.
pub fn solve(
    cfg: &EngineConfig,
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    p: &Partition,
) -> Result<SolveOutput> {
    check_inputs(cfg, spec, m, p)?;
    let started = Instant::now();
    let mut state = SolverState::zeros(m.n_cols(), m.n_rows());
    let mut trace = Vec::new();
    let mut pending_theta = None;
    let stop_reason = loop {
        let at_cap = state.round >= cfg.max_rounds;
        if state.round.is_multiple_of(cfg.trace_every) || at_cap {
            let drift = state.v_drift(m)?;
            if drift > 1e-8 * (1.0 + norm_inf(&state.v)) {
                return Err(Error::StaleSharedVector { deviation: drift });
            }
            let rep = duality_gap(spec, m, &state.alpha, &state.v)?;
            trace.push(RoundTrace {
                round: state.round,
                primal: rep.primal,
                dual: rep.dual,
                gap: rep.gap,
                nnz: state.nnz(),
                local_updates: state.local_updates,
                critical_updates: state.critical_updates,
                elapsed: started.elapsed(),
                theta_estimate: pending_theta.take(),
                max_abs_alpha: state.max_abs_alpha(),
                clamp_hits: state.clamp_hits,
            });
            if rep.gap <= cfg.gap_tol.threshold(rep.primal) {
                break StopReason::GapTol;
            }
        }
        if at_cap {
            break StopReason::MaxRounds;
        }
        let (next, results) = run_round(&state, cfg, spec, m, p)?;
        if cfg.theta_every > 0 && state.round.is_multiple_of(cfg.theta_every) {
            pending_theta = Some(round_theta(&state, &results, cfg, spec, m, p)?);
        }
        state = next;
    };
    let columns_normalized = (0..m.n_cols()).all(|i| m.col_sq_norm(i) <= 1.0 + 1e-12);
    Ok(SolveOutput { state, trace, stop_reason, columns_normalized })
}

fn random_feasible(rng: &mut impl Rng, n: usize, reg: &Regularizer) -> Vec<f64> {
    let scale = reg.support_bound().map_or(1.0, |b| (0.5 * b).min(1.0));
    (0..n)
        .map(|_| if rng.random::<f64>() < 0.5 { rng.random_range(-scale..=scale) } else { 0.0 })
        .collect()
}

/// Largest observed violation of
/// `D(α + γΣΔα_[k]) ≤ (1 − γ)D(α) + γ Σ_k G_k(Δα_[k])` over random `(α, Δα)`.
pub fn check_lemma3(
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    p: &Partition,
    cfg: &EngineConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_inputs(cfg, spec, m, p)?;
    let mut rng = rng::seeded(seed);
    let (n, d) = (m.n_cols(), m.n_rows());
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let alpha = random_feasible(&mut rng, n, &spec.reg);
        let delta = random_feasible(&mut rng, n, &spec.reg);
        let v = m.mat_vec(&alpha)?;
        let w = spec.data_fit.grad(&v)?;
        let f_v = spec.data_fit.value(&v)?;
        let d_alpha = primal_value(spec, m, &alpha, &v)?;

        let mut rhs = (1.0 - cfg.gamma) * d_alpha;
        let mut v_new = v.clone();
        for k in 0..p.k_count() {
            let block = p.block(k);
            let local: std::collections::BTreeMap<usize, f64> =
                block.iter().map(|&i| (i, delta[i])).collect();
            let mut z = vec![0.0; d];
            for (&i, &x) in &local {
                m.axpy_column(i, x, &mut z)?;
            }
            let view = make_view(cfg, spec, m, block, &w, &alpha, f_v);
            rhs += cfg.gamma * subproblem_value(&view, &local, &z)?;
            for (a, b) in v_new.iter_mut().zip(&z) {
                *a += cfg.gamma * b;
            }
        }
        let alpha_new: Vec<f64> =
            alpha.iter().zip(&delta).map(|(a, dx)| a + cfg.gamma * dx).collect();
        let lhs = primal_value(spec, m, &alpha_new, &v_new)?;
        worst = worst.max(lhs - rhs);
    }
    Ok(worst)
}

fn block_ratio(m: &ColMatrix, p: &Partition, alpha: &[f64]) -> Option<f64> {
    let d = m.n_rows();
    let mut total = vec![0.0; d];
    let mut parts = 0.0;
    for k in 0..p.k_count() {
        let mut z = vec![0.0; d];
        for &i in p.block(k) {
            m.axpy_column_unchecked(i, alpha[i], &mut z);
        }
        parts += z.iter().map(|x| x * x).sum::<f64>();
        for (t, x) in total.iter_mut().zip(&z) {
            *t += x;
        }
    }
    if parts <= 0.0 {
        return None;
    }
    Some(total.iter().map(|x| x * x).sum::<f64>() / parts)
}

/// Lower estimate of `σ'_min = γ max_α ‖Aα‖² / Σ_k ‖Aα_[k]‖²` from random probes and
/// power-iteration probes along the leading right singular direction of `A`. A safe
/// `σ'` must be at least the returned value.
pub fn check_sigma_safety(
    m: &ColMatrix,
    p: &Partition,
    gamma: f64,
    sigma_prime: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidArgument("probes must be at least 1".into()));
    }
    if p.n() != m.n_cols() {
        return Err(Error::DimensionMismatch { expected: m.n_cols(), got: p.n() });
    }
    if !(sigma_prime > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma' must be > 0, got {sigma_prime}")));
    }
    let n = m.n_cols();
    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    for probe in 0..probes {
        let mut alpha: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(r) = block_ratio(m, p, &alpha) {
            worst = worst.max(r);
        }
        // a few probes are refined by power iteration on AᵀA
        if probe < 4 {
            for _ in 0..50 {
                let next = m.transpose_mat_vec(&m.mat_vec(&alpha)?)?;
                let nrm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm == 0.0 {
                    break;
                }
                alpha = next.into_iter().map(|x| x / nrm).collect();
                if let Some(r) = block_ratio(m, p, &alpha) {
                    worst = worst.max(r);
                }
            }
        }
    }
    Ok(gamma * worst)
}

/// Power-iteration estimate of the squared spectral norm of the columns `cols` of `A`.
pub fn spectral_norm_sq(m: &ColMatrix, cols: &[usize], power_iters: usize, seed: u64) -> f64 {
    if cols.is_empty() {
        return 0.0;
    }
    let mut rng = rng::seeded(seed);
    let mut x: Vec<f64> = cols.iter().map(|_| 1.0 + 0.1 * rng.random::<f64>()).collect();
    let mut estimate = 0.0;
    for _ in 0..power_iters {
        let nrm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|a| *a /= nrm);
        let mut z = vec![0.0; m.n_rows()];
        for (&i, &a) in cols.iter().zip(&x) {
            m.axpy_column_unchecked(i, a, &mut z);
        }
        estimate = z.iter().map(|a| a * a).sum::<f64>();
        x = cols.iter().map(|&i| m.col_dot_unchecked(i, &z)).collect();
    }
    estimate
}

/// `σ_k = max ‖Aα_[k]‖² / ‖α_[k]‖²` for block `k`, by power iteration.
pub fn block_sigma_k(m: &ColMatrix, p: &Partition, k: usize, power_iters: usize) -> Result<f64> {
    if power_iters < 10 {
        return Err(Error::InvalidArgument("power_iters must be at least 10".into()));
    }
    if k >= p.k_count() {
        return Err(Error::IndexOutOfRange { index: k, len: p.k_count() });
    }
    Ok(spectral_norm_sq(m, p.block(k), power_iters, k as u64))
}

/// Round count sufficient for primal suboptimality `ε = gap_tol` under a strongly
/// convex regularizer:
/// `T = 1/(γ(1−θ)) · (μτ + n)/(μτ) · log(n/ε)`.
pub fn theory_round_bound(
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    p: &Partition,
    cfg: &EngineConfig,
    theta: f64,
) -> Result<f64> {
    check_inputs(cfg, spec, m, p)?;
    let mu = spec.reg.strong_convexity();
    if mu <= 0.0 {
        return Err(Error::InvalidArgument(
            "the geometric round bound needs a strongly convex regularizer".into(),
        ));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta must lie in [0, 1), got {theta}")));
    }
    if theta >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let n = m.n_cols() as f64;
    let tau = spec.tau();
    let eps = cfg.gap_tol.value();
    Ok(1.0 / (cfg.gamma * (1.0 - theta)) * (mu * tau + n) / (mu * tau) * (n / eps).ln())
}

/// Wall-clock model: every round pays a fixed communication latency plus the
/// parallel critical path of local work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedClock {
    pub latency_ms: f64,
    pub update_cost_ms: f64,
}

impl SimulatedClock {
    pub fn elapsed_ms(&self, rounds: usize, critical_updates: usize) -> f64 {
        rounds as f64 * self.latency_ms + critical_updates as f64 * self.update_cost_ms
    }
}
