//! Binary integer programming with the lp-box ADMM solver and learned early
//! fixing.
//!
//! The crate is organised around the life of one solve:
//!
//! * [`instances`]: problem data, random generators, file I/O and an
//!   exhaustive oracle for tiny problems.
//! * [`admm`]: the lp-box ADMM solver (p = 2) with per-iteration traces.
//! * [`reformulate`]: exact problem shrinking after variables are fixed.
//! * [`policy`]: the attention policy network, its no-attention ablation and
//!   a non-learned heuristic.
//! * [`training`]: behaviour cloning of the plain solver.
//! * [`earlyfix`]: the block-wise fix-and-shrink loop.
//! * [`bench`]: metrics, flip diagnostics and the experiment harness.

pub mod admm;
pub mod bench;
pub mod earlyfix;
pub mod error;
pub mod instances;
pub mod policy;
pub mod reformulate;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use instances::{ConstraintBlock, IpInstance, Relation, Sense, SparseMatrix};
