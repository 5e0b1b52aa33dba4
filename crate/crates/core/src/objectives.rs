//! Data-fit terms, separable regularizers, their convex conjugates and the
//! duality-gap certificate.
//!
//! The primal objective is `D(α) = f(Aα) + Σ ℓ(α_i)` and the dual is
//! `P(w) = f*(w) + Σ ℓ*(-x_iᵀw)`. Evaluated at `w = ∇f(Aα)` the sum `P(w) + D(α)` is
//! a nonnegative certificate that upper-bounds the primal suboptimality.
//!
//! Infinite values (an L1 coordinate outside its support bound) are represented as
//! `f64::INFINITY` and propagate through sums.

use serde::{Deserialize, Serialize};

use crate::datamodel::{check_len, norm_inf, ColMatrix};
use crate::{Error, Result};

/// Slack on the logistic conjugate box `-w_j b_j ∈ [0, 1]`.
pub const LOGISTIC_BOX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFitKind {
    LeastSquares,
    Logistic,
}

/// Smooth data-fit term `f(v)` with labels `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFit {
    kind: DataFitKind,
    labels: Vec<f64>,
    tau: f64,
}

impl DataFit {
    /// `f(v) = ½‖v − b‖²`.
    pub fn least_squares(labels: Vec<f64>) -> Result<Self> {
        if labels.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("labels must be finite".into()));
        }
        Ok(DataFit { kind: DataFitKind::LeastSquares, labels, tau: 1.0 })
    }

    /// `f(v) = Σ log(1 + exp(−b_j v_j))` with labels in `{−1, +1}`.
    pub fn logistic(labels: Vec<f64>) -> Result<Self> {
        if let Some(j) = labels.iter().position(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidArgument(format!(
                "logistic label {j} is {}, expected ±1",
                labels[j]
            )));
        }
        Ok(DataFit { kind: DataFitKind::Logistic, labels, tau: 1.0 })
    }

    pub fn kind(&self) -> DataFitKind {
        self.kind
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Smoothness constant: `f` has a `1/τ`-Lipschitz gradient.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        check_len(v, self.dim())?;
        Ok(match self.kind {
            DataFitKind::LeastSquares => {
                0.5 * v.iter().zip(&self.labels).map(|(x, b)| (x - b) * (x - b)).sum::<f64>()
            }
            DataFitKind::Logistic => {
                v.iter().zip(&self.labels).map(|(x, b)| softplus(-b * x)).sum()
            }
        })
    }

    /// `f(0)`.
    pub fn value_at_zero(&self) -> f64 {
        match self.kind {
            DataFitKind::LeastSquares => 0.5 * self.labels.iter().map(|b| b * b).sum::<f64>(),
            DataFitKind::Logistic => self.dim() as f64 * std::f64::consts::LN_2,
        }
    }

    /// `w = ∇f(v)`.
    pub fn grad(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v, self.dim())?;
        Ok(match self.kind {
            DataFitKind::LeastSquares => v.iter().zip(&self.labels).map(|(x, b)| x - b).collect(),
            DataFitKind::Logistic => v
                .iter()
                .zip(&self.labels)
                .map(|(x, b)| -b / (1.0 + (b * x).exp()))
                .collect(),
        })
    }

    /// `f*(w)`. For the logistic loss, entries with `-w_j b_j` outside `[0, 1]` (beyond
    /// [`LOGISTIC_BOX_SLACK`]) are outside the conjugate domain and rejected.
    pub fn conj(&self, w: &[f64]) -> Result<f64> {
        check_len(w, self.dim())?;
        match self.kind {
            DataFitKind::LeastSquares => Ok(w
                .iter()
                .zip(&self.labels)
                .map(|(x, b)| 0.5 * x * x + x * b)
                .sum()),
            DataFitKind::Logistic => {
                let mut acc = 0.0;
                for (j, (x, b)) in w.iter().zip(&self.labels).enumerate() {
                    let p = -x * b;
                    if !(-LOGISTIC_BOX_SLACK..=1.0 + LOGISTIC_BOX_SLACK).contains(&p) {
                        return Err(Error::DualDomain { index: j, value: p });
                    }
                    let p = p.clamp(0.0, 1.0);
                    acc += xlogx(p) + xlogx(1.0 - p);
                }
                Ok(acc)
            }
        }
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `x log x` with `0 log 0 = 0`.
fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Separable penalty `ℓ` applied to every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    /// `λ|a|` restricted to `[−B, B]` (`+∞` outside).
    L1 { lambda: f64, bound: f64 },
    /// `λ(η a²/2 + (1 − η)|a|)`.
    ElasticNet { lambda: f64, eta: f64 },
}

impl Regularizer {
    pub fn l1(lambda: f64, bound: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!("support bound must be finite and > 0, got {bound}")));
        }
        Ok(Regularizer::L1 { lambda, bound })
    }

    pub fn elastic_net(lambda: f64, eta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
        }
        Ok(Regularizer::ElasticNet { lambda, eta })
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Regularizer::L1 { lambda, .. } | Regularizer::ElasticNet { lambda, .. } => lambda,
        }
    }

    /// Support bound `B` for the L1 kind.
    pub fn support_bound(&self) -> Option<f64> {
        match *self {
            Regularizer::L1 { bound, .. } => Some(bound),
            Regularizer::ElasticNet { .. } => None,
        }
    }

    /// Strong convexity modulus `μ = λη`; zero for L1.
    pub fn strong_convexity(&self) -> f64 {
        match *self {
            Regularizer::L1 { .. } => 0.0,
            Regularizer::ElasticNet { lambda, eta } => lambda * eta,
        }
    }

    /// `ℓ(a)`, possibly `+∞`.
    pub fn value(&self, a: f64) -> f64 {
        match *self {
            Regularizer::L1 { lambda, bound } => {
                if a.abs() > bound {
                    f64::INFINITY
                } else {
                    lambda * a.abs()
                }
            }
            Regularizer::ElasticNet { lambda, eta } => {
                lambda * (0.5 * eta * a * a + (1.0 - eta) * a.abs())
            }
        }
    }

    /// `ℓ*(x) = sup_a x·a − ℓ(a)`.
    pub fn conj(&self, x: f64) -> f64 {
        match *self {
            // λ·ℓ̄*(x/λ) with ℓ̄*(y) = B(|y| − 1)₊
            Regularizer::L1 { lambda, bound } => bound * (x.abs() - lambda).max(0.0),
            Regularizer::ElasticNet { lambda, eta } => {
                let s = (x.abs() / lambda - (1.0 - eta)).max(0.0);
                lambda * s * s / (2.0 * eta)
            }
        }
    }

    /// `prox_{step·ℓ}(u) = argmin_a ℓ(a) + (a − u)²/(2·step)`.
    pub fn prox(&self, u: f64, step: f64) -> f64 {
        match *self {
            Regularizer::L1 { lambda, bound } => {
                soft_threshold(u, step * lambda).clamp(-bound, bound)
            }
            Regularizer::ElasticNet { lambda, eta } => {
                soft_threshold(u, step * lambda * (1.0 - eta)) / (1.0 + step * lambda * eta)
            }
        }
    }
}

/// The pair `(f, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub data_fit: DataFit,
    pub reg: Regularizer,
}

impl ObjectiveSpec {
    pub fn new(data_fit: DataFit, reg: Regularizer) -> Self {
        ObjectiveSpec { data_fit, reg }
    }

    /// Least squares + L1 with `B = f(0)/λ`.
    pub fn lasso(m: &ColMatrix, labels: Vec<f64>, lambda: f64) -> Result<Self> {
        let fit = DataFit::least_squares(labels)?;
        Self::with_default_bound(m, fit, lambda)
    }

    /// Logistic + L1 with `B = f(0)/λ`.
    pub fn sparse_logistic(m: &ColMatrix, labels: Vec<f64>, lambda: f64) -> Result<Self> {
        let fit = DataFit::logistic(labels)?;
        Self::with_default_bound(m, fit, lambda)
    }

    /// Least squares + elastic net.
    pub fn elastic_net(m: &ColMatrix, labels: Vec<f64>, lambda: f64, eta: f64) -> Result<Self> {
        let fit = DataFit::least_squares(labels)?;
        check_len(fit.labels(), m.n_rows())?;
        Ok(ObjectiveSpec { data_fit: fit, reg: Regularizer::elastic_net(lambda, eta)? })
    }

    fn with_default_bound(m: &ColMatrix, fit: DataFit, lambda: f64) -> Result<Self> {
        check_len(fit.labels(), m.n_rows())?;
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        let bound = fit.value_at_zero() / lambda;
        Ok(ObjectiveSpec { data_fit: fit, reg: Regularizer::l1(lambda, bound)? })
    }

    /// Replaces the L1 support bound. Only enlarging the default is allowed, so the
    /// bound can never cut into the initial level set.
    pub fn with_support_bound(mut self, bound: f64) -> Result<Self> {
        match self.reg {
            Regularizer::L1 { lambda, .. } => {
                let floor = self.data_fit.value_at_zero() / lambda;
                if bound < floor {
                    return Err(Error::InvalidArgument(format!(
                        "support bound {bound} is below f(0)/lambda = {floor}"
                    )));
                }
                self.reg = Regularizer::l1(lambda, bound)?;
                Ok(self)
            }
            Regularizer::ElasticNet { .. } => Err(Error::InvalidArgument(
                "support bound only applies to the l1 regularizer".into(),
            )),
        }
    }

    pub fn tau(&self) -> f64 {
        self.data_fit.tau()
    }
}

/// `B = f(0)/λ`: every iterate with `D(α) ≤ D(0)` satisfies `|α_i| ≤ B`.
pub fn default_support_bound(spec: &ObjectiveSpec) -> f64 {
    spec.data_fit.value_at_zero() / spec.reg.lambda()
}

fn check_fresh(m: &ColMatrix, a: &[f64], v: &[f64]) -> Result<()> {
    if cfg!(debug_assertions) {
        let fresh = m.mat_vec(a)?;
        let dev = fresh.iter().zip(v).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        if dev > 1e-8 * (1.0 + norm_inf(&fresh)) {
            return Err(Error::StaleSharedVector { deviation: dev });
        }
    }
    Ok(())
}

/// `D(α) = f(v) + Σ ℓ(α_i)` with `v = Aα` maintained by the caller.
pub fn primal_value(spec: &ObjectiveSpec, m: &ColMatrix, a: &[f64], v: &[f64]) -> Result<f64> {
    check_len(a, m.n_cols())?;
    check_len(v, m.n_rows())?;
    check_fresh(m, a, v)?;
    let reg: f64 = a.iter().map(|&x| spec.reg.value(x)).sum();
    Ok(spec.data_fit.value(v)? + reg)
}

/// `P(w) = f*(w) + Σ ℓ*(−x_iᵀw)`.
pub fn dual_value(spec: &ObjectiveSpec, m: &ColMatrix, w: &[f64]) -> Result<f64> {
    check_len(w, m.n_rows())?;
    let fc = spec.data_fit.conj(w)?;
    let reg: f64 = (0..m.n_cols()).map(|i| spec.reg.conj(-m.col_dot_unchecked(i, w))).sum();
    Ok(fc + reg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub gap: f64,
    pub primal: f64,
    pub dual: f64,
    pub w: Vec<f64>,
}

/// Duality gap `G(α) = P(w(α)) + D(α)` at `w(α) = ∇f(Aα)`.
pub fn duality_gap(spec: &ObjectiveSpec, m: &ColMatrix, a: &[f64], v: &[f64]) -> Result<GapReport> {
    let primal = primal_value(spec, m, a, v)?;
    if !primal.is_finite() {
        return Err(Error::InfinitePrimal);
    }
    let w = spec.data_fit.grad(v)?;
    let dual = dual_value(spec, m, &w)?;
    Ok(GapReport { gap: dual + primal, primal, dual, w })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn f_value_examples() {
        let ls = DataFit::least_squares(vec![1.0, -2.0]).unwrap();
        assert_eq!(ls.value(&[1.0, -2.0]).unwrap(), 0.0);
        let ls0 = DataFit::least_squares(vec![0.0, 0.0]).unwrap();
        assert_eq!(ls0.value(&[1.0, 2.0]).unwrap(), 2.5);
        let lg = DataFit::logistic(vec![1.0, -1.0, 1.0]).unwrap();
        assert!(close(lg.value(&[0.0; 3]).unwrap(), 3.0 * 2f64.ln(), 1e-15));
        assert!(ls.value(&[0.0]).is_err());
    }

    #[test]
    fn logistic_rejects_non_sign_labels() {
        assert!(DataFit::logistic(vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn f_grad_examples() {
        let ls = DataFit::least_squares(vec![1.0, -2.0]).unwrap();
        assert_eq!(ls.grad(&[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        let lg = DataFit::logistic(vec![1.0, -1.0]).unwrap();
        assert_eq!(lg.grad(&[0.0, 0.0]).unwrap(), vec![-0.5, 0.5]);
        let w = lg.grad(&[3.0, 15.0]).unwrap();
        for (wj, bj) in w.iter().zip(lg.labels()) {
            let p = -wj * bj;
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn f_conj_examples() {
        let b = vec![1.0, -2.0, 0.5];
        let ls = DataFit::least_squares(b.clone()).unwrap();
        let w: Vec<f64> = b.iter().map(|x| -x).collect();
        assert!(close(ls.conj(&w).unwrap(), -0.5 * 5.25, 1e-15));

        let lg = DataFit::logistic(vec![1.0, -1.0]).unwrap();
        assert!(close(lg.conj(&[-0.5, 0.5]).unwrap(), -2.0 * 2f64.ln(), 1e-15));
        assert_eq!(lg.conj(&[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(lg.conj(&[-1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(lg.conj(&[0.1, 0.0]), Err(Error::DualDomain { index: 0, .. })));
        assert!(lg.conj(&[-1.0 - 1e-13, 0.0]).is_ok());
    }

    #[test]
    fn ell_value_examples() {
        let l1 = Regularizer::l1(2.0, 10.0).unwrap();
        assert_eq!(l1.value(3.0), 6.0);
        assert_eq!(l1.value(11.0), f64::INFINITY);
        let en = Regularizer::elastic_net(1.0, 0.5).unwrap();
        assert_eq!(en.value(2.0), 2.0);
    }

    #[test]
    fn ell_conj_examples() {
        let l1 = Regularizer::l1(1.0, 5.0).unwrap();
        assert_eq!(l1.conj(0.5), 0.0);
        assert_eq!(l1.conj(3.0), 10.0);
        assert_eq!(l1.conj(-3.0), 10.0);
        let en = Regularizer::elastic_net(1.0, 0.5).unwrap();
        assert!(close(en.conj(1.5), 1.0, 1e-15));
        assert_eq!(en.conj(0.4), 0.0);
    }

    #[test]
    fn regularizer_validation() {
        assert!(Regularizer::l1(0.0, 1.0).is_err());
        assert!(Regularizer::l1(1.0, f64::INFINITY).is_err());
        assert!(Regularizer::elastic_net(1.0, 0.0).is_err());
        assert!(Regularizer::elastic_net(1.0, 1.5).is_err());
    }

    #[test]
    fn default_bound_examples() {
        let m = ColMatrix::from_columns(2, vec![vec![(0, 1.0)]]).unwrap();
        let spec = ObjectiveSpec::lasso(&m, vec![2.0, 2.0], 2.0).unwrap();
        assert_eq!(default_support_bound(&spec), 2.0);
        assert_eq!(spec.reg.support_bound(), Some(2.0));

        let m4 = ColMatrix::from_columns(4, vec![vec![(0, 1.0)]]).unwrap();
        let spec = ObjectiveSpec::sparse_logistic(&m4, vec![1.0, -1.0, 1.0, 1.0], 1.0).unwrap();
        assert!(close(default_support_bound(&spec), 4.0 * 2f64.ln(), 1e-15));

        let mut prev = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let s = ObjectiveSpec::lasso(&m, vec![2.0, 2.0], lambda).unwrap();
            let b = default_support_bound(&s);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn support_bound_override_is_upward_only() {
        let m = ColMatrix::from_columns(2, vec![vec![(0, 1.0)]]).unwrap();
        let spec = ObjectiveSpec::lasso(&m, vec![2.0, 2.0], 2.0).unwrap();
        assert!(spec.clone().with_support_bound(1.0).is_err());
        let s = spec.with_support_bound(5.0).unwrap();
        assert_eq!(s.reg.support_bound(), Some(5.0));
    }

    #[test]
    fn primal_dual_examples() {
        let m = ColMatrix::from_columns(3, vec![vec![(0, 1.0), (2, 0.5)], vec![(1, -1.0)]]).unwrap();
        let b = vec![1.0, 2.0, -1.0];
        let spec = ObjectiveSpec::lasso(&m, b.clone(), 100.0).unwrap();
        let p = primal_value(&spec, &m, &[0.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(p, 3.0);

        // λ ≥ ‖Aᵀb‖∞: flat conjugate region, dual at w = −b is −½‖b‖²
        let w: Vec<f64> = b.iter().map(|x| -x).collect();
        assert!(close(dual_value(&spec, &m, &w).unwrap(), -3.0, 1e-15));
        let rep = duality_gap(&spec, &m, &[0.0, 0.0], &[0.0; 3]).unwrap();
        assert!(rep.gap.abs() <= 1e-15);

        let zero = ColMatrix::from_columns(3, vec![vec![], vec![]]).unwrap();
        let spec0 = ObjectiveSpec::lasso(&zero, b, 1.0).unwrap();
        assert!(close(dual_value(&spec0, &zero, &w).unwrap(), -3.0, 1e-15));
    }

    #[test]
    fn infinite_primal_outside_bound() {
        let m = ColMatrix::from_columns(1, vec![vec![(0, 1.0)]]).unwrap();
        let spec = ObjectiveSpec::lasso(&m, vec![1.0], 1.0).unwrap();
        let a = [2.0];
        let v = m.mat_vec(&a).unwrap();
        assert_eq!(primal_value(&spec, &m, &a, &v).unwrap(), f64::INFINITY);
        assert!(matches!(duality_gap(&spec, &m, &a, &v), Err(Error::InfinitePrimal)));
    }

    #[test]
    fn stale_v_is_detected_in_debug() {
        let m = ColMatrix::from_columns(1, vec![vec![(0, 1.0)]]).unwrap();
        let spec = ObjectiveSpec::lasso(&m, vec![1.0], 1.0).unwrap();
        let res = primal_value(&spec, &m, &[0.1], &[0.0]);
        if cfg!(debug_assertions) {
            assert!(matches!(res, Err(Error::StaleSharedVector { .. })));
        }
    }

    #[test]
    fn prox_matches_closed_forms() {
        let l1 = Regularizer::l1(1.0, 2.0).unwrap();
        assert_eq!(l1.prox(3.0, 0.5), 2.0);
        assert_eq!(l1.prox(10.0, 0.5), 2.0);
        assert_eq!(l1.prox(0.3, 0.5), 0.0);
        let en = Regularizer::elastic_net(1.0, 0.5).unwrap();
        // argmin 0.25a² + 0.5|a| + (a − 3)²/2 → a = (3 − 0.5)/1.5
        assert!(close(en.prox(3.0, 1.0), 2.5 / 1.5, 1e-15));
    }
}
