//! Numerical core: covariate basis, residualization, standardization, the
//! batched correlation product and the t / p transforms.

pub mod basis;
pub mod correlate;
pub mod special;
pub mod standardize;
pub mod stats;

pub use basis::{build_covariate_basis, residualize, CovariateBasis, DEFAULT_RANK_TOLERANCE};
pub use correlate::{correlate, Correlation, Precision, StoredMatrix};
pub use special::{ln_beta, ln_gamma, reg_inc_beta};
pub use standardize::{
    prepare_genotype_batch, standardize_columns, MarkerQc, SkipReason, StandardizedBatch, StandardizedColumns,
};
pub use stats::{floor_p, is_floored, ln_p_from_t, neg_log10_p_from_t, p_from_t, t_from_r, StatBlock, P_FLOOR, R_MAX};
