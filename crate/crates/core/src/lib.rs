//! Two-sided characteristic Cauchy problems for scalar wave-type operators
//! `P = 4 d_u d_v + A d_u + B d_v + q` on a 1+1 Minkowski slab, written in the
//! null coordinates `u = t - x`, `v = t + x`.
//!
//! Data is a function `f` on the null line `u = 0` and an optional source `F`.
//! Three independent constructions produce the solution on both sides of the
//! line:
//!
//! * jet towers along the generators, a truncated Borel sum and a
//!   retarded/advanced correction ([`solver::solve_rendall`]),
//! * an extension of `f` corrected by indicator-cut residuals
//!   ([`solver::solve_representation`]),
//! * the causal propagator applied to a single layer on the line
//!   ([`solver::solve_final_formula`]).
//!
//! The [`verify`] module checks jump formulae, adjoint identities and
//! distributional solution properties against batteries of test functions,
//! and [`geometry`] also computes expansion densities of null hypersurfaces
//! in any dimension.
//!
//! With the default `parallel` feature, independent work (rows of stencils,
//! battery members, future/past pipelines) runs on the rayon pool. Results
//! are bit-identical to the sequential build: parallel maps collect in order
//! and every reduction is summed sequentially.

pub mod borel;
pub mod error;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod green;
pub mod operators;
pub mod par;
pub mod propagation;
pub mod series;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
