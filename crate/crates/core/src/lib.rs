//! Sequential Gibbs measures on non-autonomous subshifts of finite type.
//!
//! The crate builds transfer operators for time-dependent shift spaces, solves
//! for their RPF triplets, and uses the normalized operators to compute exact
//! moments, characteristic functions and lattice distributions of Birkhoff
//! sums. On top of that it detects lattice behaviour and measures the
//! discrepancies in central and local limit theorems.

pub mod decomp;
pub mod dist;
pub mod error;
pub mod funcspace;
pub mod models;
pub mod sampler;
pub mod spectral;
pub mod symbolic;
pub mod transfer;
pub mod verify;

pub use error::{Error, Result};
pub use funcspace::{ComplexFn, FiniteDepthFn, FnSeq, Functional, RealFn};
pub use symbolic::{validate, System, SystemSpec, Word};
pub use transfer::{rpf_solve, RpfData, RpfOptions};
