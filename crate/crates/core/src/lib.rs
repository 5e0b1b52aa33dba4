//! Distributed primal-dual coordinate descent for sparse generalized linear models.
//!
//! The problem solved is `min_α f(Aα) + Σ_i ℓ_i(α_i)` where `f` is a smooth data-fit
//! term (least squares or logistic) and `ℓ_i` is an L1 or elastic-net penalty. The
//! columns of `A` are split across `K` workers; each worker approximately minimizes a
//! data-local quadratic model of the objective with randomized coordinate descent and
//! communicates only its change to the shared vector `v = Aα`. Every iterate comes with
//! a duality-gap certificate computed from the conjugate problem.
//!
//! ```
//! use distcd::prelude::*;
//!
//! let syn = SyntheticSpec { n: 40, d: 30, density: 0.3, true_nnz: 4, noise_sd: 0.01, seed: 7 };
//! let (m, b, _) = gen_synthetic(&syn, LabelKind::Regression).unwrap();
//! let spec = ObjectiveSpec::lasso(&m, b, 0.05).unwrap();
//! let part = partition_columns(m.n_cols(), 2, PartitionStrategy::Contiguous, 0).unwrap();
//! let cfg = EngineConfig::new(2).with_h_local(5).with_gap_tol(GapTolerance::Absolute(1e-8));
//! let out = solve(&cfg, &spec, &m, &part).unwrap();
//! assert_eq!(out.stop_reason, StopReason::GapTol);
//! ```

pub mod baselines;
pub mod cli;
pub mod datamodel;
pub mod engine;
mod error;
pub mod io;
pub mod localsolver;
pub mod objectives;
pub mod rng;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::baselines::{mb_cd_round, prox_gd_step, run_baseline, BaselineConfig, BaselineKind};
    pub use crate::datamodel::{
        mat_vec, normalize_columns, partition_columns, ColMatrix, Partition, PartitionStrategy,
    };
    pub use crate::engine::{
        block_sigma_k, check_lemma3, check_sigma_safety, run_round, solve, theory_round_bound,
        EngineConfig, GapTolerance, LocalBudget, RoundTrace, SolveOutput, SolverState,
        StopReason,
    };
    pub use crate::io::{gen_synthetic, read_libsvm, write_libsvm, write_trace, LabelKind, SyntheticSpec, TraceFormat};
    pub use crate::localsolver::{measure_theta, solve_local, LocalResult, SubproblemView};
    pub use crate::objectives::{duality_gap, DataFit, DataFitKind, ObjectiveSpec, Regularizer};
    pub use crate::{Error, Result};
}
