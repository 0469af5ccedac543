// NaN must fail range checks, so `!(x > 0.0)` is the intended form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod decoder;
pub mod diagnostics;
pub mod error;
pub mod gaussian;
pub mod klein;
pub mod lattice;
pub mod mimo;
pub mod rng;
pub mod samplers;
#[cfg(test)]
mod testutil;
