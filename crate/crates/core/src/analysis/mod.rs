//! Theory checks: an exhaustive sparse oracle, planted-sparse recovery
//! trials with the IHT error bounds, restricted convexity constants, a
//! finite-difference gradient check, and seeded benchmark suites.

pub mod checks;
pub mod oracle;
pub mod recovery;
pub mod suite;

pub use checks::{finite_diff_grad_check, iht_row, rsc_rsm_kappa, GradCheck, RscRsm};
pub use oracle::{oracle_row_sparse, row_loss, OracleSolution, ORACLE_MAX_DIM};
pub use recovery::{
    check_recovery_bound, gen_recovery_trial, run_iht, BoundReport, RecoveryTrial, TrialSpec,
};
pub use suite::{parse_suites, run_suites, SuiteReport, SuiteSpec, KAPPA_GATE};
