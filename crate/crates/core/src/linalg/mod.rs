//! Dense linear-algebra kernel.

mod decomp;
mod matrix;
mod norms;
mod partition;
mod pinv;
mod structured;
pub mod vector;

pub use decomp::{cholesky, cholesky_solve, null_space, null_space_rref, rank, svd, sym_eigen, Svd};
pub use matrix::Matrix;
pub use norms::{dual_norm, norm, sorted_l1_dual, sorted_l1_norm, NormExponent};
pub use partition::{
    check_trivial_kernel, common_kernel, default_projections, partition_sum, verify_partition,
    KERNEL_RANK_TOL, PARTITION_TOL,
};
pub use pinv::{pseudoinverse, PINV_RTOL};
pub use structured::{difference_matrix, first_difference, fused_pinv};
