//! Fixed-point operator representations of periodic, Dirichlet, delay and
//! nonlocal boundary value problems, and numerical machinery for checking
//! that their topological degrees coincide.

// `!(a < b)` is used on purpose so that NaN bounds are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod degree;
pub mod error;
pub mod field;
pub mod flows;
pub mod gridfn;
pub mod operators;
pub mod problems;
pub mod report;

pub use error::{Error, Result};
pub use field::{RhsKind, Term, TermTable, TimeFactor, VectorField};
pub use gridfn::{C1Function, DelayKernel, Grid, GridFunction};
