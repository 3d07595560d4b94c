//! Linear solvers: block-Jacobi PCG (assembled or matrix-free operators) and
//! the Schur-complement direct solve for coupled solid–fluid systems.

mod block;
mod pcg;
mod schur;

pub use block::BlockCsr;
pub use pcg::{matrix_free_apply, pcg_solve, Constrained, LinearOperator, MatrixFree, PcgOutcome};
pub use schur::{schur_solve, BlockSystem, SchurOutcome};
