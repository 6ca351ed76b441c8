#![no_std]
// NaN must fail tolerance tests, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![doc = include_str!("../README.md")]

extern crate alloc;

pub mod error;
pub mod fpsolve;
pub mod generic;
pub mod hamiltonian;
pub mod linalg;
pub mod models;
pub mod num;
pub mod opalg;
pub mod pdmp_sim;
pub mod statespace;

pub use error::{Error, Result};
