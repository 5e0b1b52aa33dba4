//! Reference optimizers: full proximal gradient descent and mini-batch coordinate
//! descent (Shotgun-style: every sampled coordinate takes its solo update, scaled by
//! `β/b`).

use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::datamodel::{norm_inf, ColMatrix};
use crate::engine::{spectral_norm_sq, GapTolerance, RoundTrace, SolveOutput, SolverState, StopReason};
use crate::localsolver::coordinate_update;
use crate::objectives::{duality_gap, ObjectiveSpec};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BaselineKind {
    ProxGd,
    MbCd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    /// Prox-GD step; `None` uses `τ/‖A‖²` with `‖A‖²` from power iteration.
    pub step_size: Option<f64>,
    pub batch_size: usize,
    pub beta: f64,
    pub max_rounds: usize,
    pub gap_tol: GapTolerance,
    pub seed: u64,
    pub trace_every: usize,
}

impl BaselineConfig {
    pub fn prox_gd() -> Self {
        BaselineConfig {
            kind: BaselineKind::ProxGd,
            step_size: None,
            batch_size: 1,
            beta: 1.0,
            max_rounds: 1000,
            gap_tol: GapTolerance::Relative(1e-6),
            seed: 0,
            trace_every: 1,
        }
    }

    pub fn mb_cd(batch_size: usize, beta: f64) -> Self {
        BaselineConfig { kind: BaselineKind::MbCd, batch_size, beta, ..Self::prox_gd() }
    }
}

/// Largest step with guaranteed descent, `τ/‖A‖²`. The power-iteration estimate
/// approaches `‖A‖²` from below, so it is inflated slightly.
pub fn default_step(spec: &ObjectiveSpec, m: &ColMatrix) -> f64 {
    let cols: Vec<usize> = (0..m.n_cols()).collect();
    let l = spectral_norm_sq(m, &cols, 300, 0) * 1.001;
    if l > 0.0 {
        spec.tau() / l
    } else {
        1.0
    }
}

/// `α' = prox_{step·g}(α − step·Aᵀ∇f(Aα))`, with `v` recomputed.
pub fn prox_gd_step(
    state: &SolverState,
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    step: f64,
) -> Result<SolverState> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    let w = spec.data_fit.grad(&state.v)?;
    let grad = m.transpose_mat_vec(&w)?;
    let mut next = state.clone();
    for (a, g) in next.alpha.iter_mut().zip(&grad) {
        *a = spec.reg.prox(*a - step * g, step);
    }
    next.v = m.mat_vec(&next.alpha)?;
    next.round += 1;
    next.local_updates += m.n_cols();
    next.critical_updates += m.n_cols();
    Ok(next)
}

/// Applies the solo coordinate updates of `coords`, each scaled by `β/|coords|`.
pub fn mb_cd_apply(
    state: &SolverState,
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    coords: &[usize],
    beta: f64,
) -> Result<SolverState> {
    let w = spec.data_fit.grad(&state.v)?;
    let coef = 1.0 / spec.tau();
    let scale = beta / coords.len() as f64;
    let mut steps = Vec::with_capacity(coords.len());
    for &i in coords {
        let g_lin = m.col_dot(i, &w)?;
        let sq = m.col_sq_norm(i);
        if sq == 0.0 {
            continue;
        }
        let u = coordinate_update(&spec.reg, state.alpha[i], g_lin, coef * sq)?;
        steps.push((i, u.value - state.alpha[i], u.clamped));
    }
    let mut next = state.clone();
    for &(i, dx, clamped) in &steps {
        next.alpha[i] += scale * dx;
        m.axpy_column_unchecked(i, scale * dx, &mut next.v);
        next.clamp_hits += usize::from(clamped);
    }
    next.round += 1;
    next.local_updates += coords.len();
    next.critical_updates += coords.len();
    Ok(next)
}

/// One mini-batch CD round on `b` distinct uniformly sampled coordinates.
pub fn mb_cd_round(
    state: &SolverState,
    spec: &ObjectiveSpec,
    m: &ColMatrix,
    b: usize,
    beta: f64,
    seed: u64,
) -> Result<SolverState> {
    let n = m.n_cols();
    if b == 0 || b > n {
        return Err(Error::InvalidArgument(format!("batch size must lie in [1, {n}], got {b}")));
    }
    if !(beta >= 1.0 && beta <= b as f64) {
        return Err(Error::InvalidArgument(format!("beta must lie in [1, {b}], got {beta}")));
    }
    let mut rng = rng::seeded(seed);
    let mut coords = rand::seq::index::sample(&mut rng, n, b).into_vec();
    coords.sort_unstable();
    mb_cd_apply(state, spec, m, &coords, beta)
}

/// Runs a baseline with the same tracing and stopping rules as the engine.
pub fn run_baseline(cfg: &BaselineConfig, spec: &ObjectiveSpec, m: &ColMatrix) -> Result<SolveOutput> {
    if cfg.trace_every == 0 {
        return Err(Error::InvalidArgument("trace_every must be at least 1".into()));
    }
    let step = match cfg.kind {
        BaselineKind::ProxGd => cfg.step_size.unwrap_or_else(|| default_step(spec, m)),
        BaselineKind::MbCd => 0.0,
    };
    let started = Instant::now();
    let mut state = SolverState::zeros(m.n_cols(), m.n_rows());
    let mut trace = Vec::new();
    let stop_reason = loop {
        let at_cap = state.round >= cfg.max_rounds;
        if state.round.is_multiple_of(cfg.trace_every) || at_cap {
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
                theta_estimate: None,
                max_abs_alpha: norm_inf(&state.alpha),
                clamp_hits: state.clamp_hits,
            });
            if rep.gap <= cfg.gap_tol.threshold(rep.primal) {
                break StopReason::GapTol;
            }
        }
        if at_cap {
            break StopReason::MaxRounds;
        }
        state = match cfg.kind {
            BaselineKind::ProxGd => prox_gd_step(&state, spec, m, step)?,
            BaselineKind::MbCd => {
                let seed = rng::mix(cfg.seed, u64::MAX, state.round as u64);
                mb_cd_round(&state, spec, m, cfg.batch_size, cfg.beta, seed)?
            }
        };
    };
    let columns_normalized = (0..m.n_cols()).all(|i| m.col_sq_norm(i) <= 1.0 + 1e-12);
    Ok(SolveOutput { state, trace, stop_reason, columns_normalized })
}
