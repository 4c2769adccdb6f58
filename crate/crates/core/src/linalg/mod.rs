//! Dense and sparse kernels, eigensolvers and seeded sampling.

pub mod dense;
pub mod eig;
pub mod rng;
pub mod sparse;
pub mod svd;

pub use dense::{gemm, gemm_new, matmul, DenseMatrix, Op};
pub use eig::{general_eig, jacobi_eigh, SymmetricEigen, DENSE_EIG_CAP};
pub use rng::{sample_gaussian, sample_uniform, RngStream};
pub use sparse::{spmm, SparseMatrix};
pub use svd::top_singular_value;
