//! Data-local quadratic subproblems and the randomized coordinate-descent solver
//! that approximately minimizes them.
//!
//! For worker `k` with column block `P_k` the subproblem in the change `Δα_[k]` is
//!
//! ```text
//! G_k(Δα) = f(v)/K + wᵀAΔα + σ'/(2τ)‖AΔα‖² + Σ_{i∈P_k} ℓ(α_i + Δα_i)
//! ```
//!
//! with `w = ∇f(v)`. Restricted to one coordinate it is a scalar quadratic plus `ℓ`,
//! which has a closed-form minimizer (soft-thresholding).

use std::collections::BTreeMap;

use rand::Rng;

use crate::datamodel::{check_len, norm_inf, ColMatrix};
use crate::objectives::{soft_threshold, Regularizer};
use crate::{rng, Error, Result};

/// Read-only inputs of one worker's subproblem for one round.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemView<'a> {
    pub matrix: &'a ColMatrix,
    /// Global column indices owned by this worker.
    pub block: &'a [usize],
    /// `∇f(v)` of the round's shared vector.
    pub w: &'a [f64],
    /// The full current iterate; only entries in `block` are read.
    pub alpha: &'a [f64],
    pub sigma_prime: f64,
    pub tau: f64,
    pub reg: Regularizer,
    /// The constant `f(v)/K`.
    pub f_share: f64,
}

impl<'a> SubproblemView<'a> {
    pub fn validate(&self) -> Result<()> {
        check_len(self.w, self.matrix.n_rows())?;
        check_len(self.alpha, self.matrix.n_cols())?;
        if let Some(&i) = self.block.iter().find(|&&i| i >= self.matrix.n_cols()) {
            return Err(Error::IndexOutOfRange { index: i, len: self.matrix.n_cols() });
        }
        if !(self.sigma_prime > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma' and tau must be positive (got {}, {})",
                self.sigma_prime, self.tau
            )));
        }
        Ok(())
    }

    fn coef(&self) -> f64 {
        self.sigma_prime / self.tau
    }
}

/// Output of one local solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    /// `Δα_[k]`, keyed by global column index. Every coordinate the solver touched has
    /// an entry, even when its net change is zero.
    pub delta_alpha: BTreeMap<usize, f64>,
    /// `AΔα_[k]`, maintained incrementally.
    pub delta_v: Vec<f64>,
    pub updates_done: usize,
    /// Updates where the L1 support clamp changed the unconstrained minimizer.
    pub clamp_hits: usize,
    /// Draws that hit an all-zero column and were skipped.
    pub skipped_zero: usize,
}

impl LocalResult {
    pub fn zero(d: usize) -> Self {
        LocalResult {
            delta_alpha: BTreeMap::new(),
            delta_v: vec![0.0; d],
            updates_done: 0,
            clamp_hits: 0,
            skipped_zero: 0,
        }
    }

    /// Max deviation of `delta_v` from a fresh `AΔα`.
    pub fn residual_drift(&self, m: &ColMatrix) -> f64 {
        let mut fresh = vec![0.0; m.n_rows()];
        for (&i, &x) in &self.delta_alpha {
            m.axpy_column_unchecked(i, x, &mut fresh);
        }
        fresh.iter().zip(&self.delta_v).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Minimizer of `g·(u − c) + q/2·(u − c)² + ℓ(u)` over `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateStep {
    pub value: f64,
    /// True when the support bound was active.
    pub clamped: bool,
}

/// Closed-form single-coordinate minimizer. `current_total` is `α_i + Δα_i`, `g_lin`
/// the linear coefficient and `q` the curvature of the scalar restriction.
pub fn coordinate_update(
    reg: &Regularizer,
    current_total: f64,
    g_lin: f64,
    q: f64,
) -> Result<CoordinateStep> {
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("coordinate curvature must be > 0, got {q}")));
    }
    Ok(match *reg {
        Regularizer::L1 { lambda, bound } => {
            let u = soft_threshold(current_total - g_lin / q, lambda / q);
            CoordinateStep { value: u.clamp(-bound, bound), clamped: u.abs() > bound }
        }
        Regularizer::ElasticNet { lambda, eta } => {
            let denom = q + lambda * eta;
            let u = soft_threshold((q * current_total - g_lin) / denom, lambda * (1.0 - eta) / denom);
            CoordinateStep { value: u, clamped: false }
        }
    })
}

/// Mutable state of a local coordinate-descent run.
struct LocalWork<'v, 'a> {
    view: &'v SubproblemView<'a>,
    delta: Vec<f64>,
    touched: Vec<bool>,
    z: Vec<f64>,
    updates: usize,
    clamp_hits: usize,
    skipped: usize,
}

impl<'v, 'a> LocalWork<'v, 'a> {
    fn new(view: &'v SubproblemView<'a>) -> Self {
        LocalWork {
            view,
            delta: vec![0.0; view.block.len()],
            touched: vec![false; view.block.len()],
            z: vec![0.0; view.matrix.n_rows()],
            updates: 0,
            clamp_hits: 0,
            skipped: 0,
        }
    }

    fn from_result(view: &'v SubproblemView<'a>, res: &LocalResult) -> Self {
        let mut work = Self::new(view);
        for (li, &i) in view.block.iter().enumerate() {
            if let Some(&x) = res.delta_alpha.get(&i) {
                work.delta[li] = x;
                work.touched[li] = true;
            }
        }
        work.z.copy_from_slice(&res.delta_v);
        work
    }

    /// Exact minimization over local coordinate `li`.
    fn update(&mut self, li: usize) -> Result<()> {
        let view = self.view;
        let i = view.block[li];
        let sq = view.matrix.col_sq_norm(i);
        if sq == 0.0 {
            self.skipped += 1;
            return Ok(());
        }
        let coef = view.coef();
        let (rows, vals) = view.matrix.column(i);
        let g_lin: f64 = rows
            .iter()
            .zip(vals)
            .map(|(&r, &x)| x * (view.w[r] + coef * self.z[r]))
            .sum();
        let c = view.alpha[i] + self.delta[li];
        let step = coordinate_update(&view.reg, c, g_lin, coef * sq)?;
        let dt = step.value - c;
        if dt != 0.0 {
            self.delta[li] += dt;
            view.matrix.axpy_column_unchecked(i, dt, &mut self.z);
        }
        self.touched[li] = true;
        self.updates += 1;
        self.clamp_hits += usize::from(step.clamped);
        Ok(())
    }

    fn value(&self) -> f64 {
        let view = self.view;
        let coef = view.coef();
        let lin: f64 = view.w.iter().zip(&self.z).map(|(a, b)| a * b).sum();
        let quad: f64 = self.z.iter().map(|x| x * x).sum();
        let reg: f64 = view
            .block
            .iter()
            .zip(&self.delta)
            .map(|(&i, &dx)| view.reg.value(view.alpha[i] + dx))
            .sum();
        view.f_share + lin + 0.5 * coef * quad + reg
    }

    fn into_result(self) -> LocalResult {
        let delta_alpha = self
            .view
            .block
            .iter()
            .zip(self.delta.iter().zip(&self.touched))
            .filter(|(_, (_, &t))| t)
            .map(|(&i, (&dx, _))| (i, dx))
            .collect();
        LocalResult {
            delta_alpha,
            delta_v: self.z,
            updates_done: self.updates,
            clamp_hits: self.clamp_hits,
            skipped_zero: self.skipped,
        }
    }
}

/// Value of the subproblem at `delta` (keyed by global index) with `z = A·delta`.
pub fn subproblem_value(
    view: &SubproblemView<'_>,
    delta: &BTreeMap<usize, f64>,
    z: &[f64],
) -> Result<f64> {
    view.validate()?;
    check_len(z, view.matrix.n_rows())?;
    if cfg!(debug_assertions) {
        let mut fresh = vec![0.0; z.len()];
        for (&i, &x) in delta {
            view.matrix.axpy_column(i, x, &mut fresh)?;
        }
        let dev = fresh.iter().zip(z).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if dev > 1e-8 * (1.0 + norm_inf(&fresh)) {
            return Err(Error::StaleSharedVector { deviation: dev });
        }
    }
    let coef = view.coef();
    let lin: f64 = view.w.iter().zip(z).map(|(a, b)| a * b).sum();
    let quad: f64 = z.iter().map(|x| x * x).sum();
    let reg: f64 = view
        .block
        .iter()
        .map(|i| view.reg.value(view.alpha[*i] + delta.get(i).copied().unwrap_or(0.0)))
        .sum();
    Ok(view.f_share + lin + 0.5 * coef * quad + reg)
}

/// Runs `h` local epochs (`h·|P_k|` coordinate updates on uniformly sampled local
/// coordinates).
pub fn solve_local(view: &SubproblemView<'_>, h: usize, seed: u64) -> Result<LocalResult> {
    if h == 0 {
        return Err(Error::InvalidArgument("h must be at least 1".into()));
    }
    solve_local_updates(view, h * view.block.len(), seed)
}

/// Runs exactly `updates` sampled coordinate updates.
pub fn solve_local_updates(
    view: &SubproblemView<'_>,
    updates: usize,
    seed: u64,
) -> Result<LocalResult> {
    view.validate()?;
    let mut work = LocalWork::new(view);
    if view.block.is_empty() {
        return Ok(work.into_result());
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..updates {
        let li = rng.random_range(0..view.block.len());
        work.update(li)?;
    }
    Ok(work.into_result())
}

/// Cyclic coordinate descent to (near) exact optimality, starting from `start`.
/// Stops when a full sweep improves the subproblem by less than `1e-14` (relative to
/// `max(1, |G|)`) or after `max_sweeps` sweeps.
pub fn solve_local_exact(
    view: &SubproblemView<'_>,
    start: Option<&LocalResult>,
    max_sweeps: usize,
) -> Result<LocalResult> {
    view.validate()?;
    let mut work = match start {
        Some(r) => LocalWork::from_result(view, r),
        None => LocalWork::new(view),
    };
    let mut prev = work.value();
    for _ in 0..max_sweeps {
        for li in 0..view.block.len() {
            work.update(li)?;
        }
        let cur = work.value();
        if prev - cur < 1e-14 * prev.abs().max(1.0) {
            break;
        }
        prev = cur;
    }
    Ok(work.into_result())
}

/// Single-run estimate of the local approximation quality
/// `θ = (G(Δα) − G(Δα*)) / (G(0) − G(Δα*))`, clamped to `[0, 1]`.
pub fn measure_theta(
    view: &SubproblemView<'_>,
    result: &LocalResult,
    oracle_iters: usize,
) -> Result<f64> {
    let d = view.matrix.n_rows();
    let g0 = subproblem_value(view, &BTreeMap::new(), &vec![0.0; d])?;
    let g_res = subproblem_value(view, &result.delta_alpha, &result.delta_v)?;
    let oracle = solve_local_exact(view, Some(result), oracle_iters)?;
    let g_opt = subproblem_value(view, &oracle.delta_alpha, &oracle.delta_v)?.min(g_res);
    let denom = g0 - g_opt;
    if denom < 1e-14 {
        return Ok(0.0);
    }
    Ok(((g_res - g_opt) / denom).clamp(0.0, 1.0))
}
