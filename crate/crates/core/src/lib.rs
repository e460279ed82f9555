//! Multilevel correction solver for the ground state of the Gross-Pitaevskii
//! equation on P1 finite element spaces.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision
)]

pub mod adapt;
pub mod assemble;
pub mod augmented;
pub mod cli;
pub mod config;
pub mod driver;
pub mod eigcore;
pub mod error;
pub mod exec;
pub mod fespace;
pub mod mesh;
pub mod mglinear;
pub mod mixing;
pub mod problem;
pub mod quadrature;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
