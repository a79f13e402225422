//! Fixed-point solvers, a-priori error certificates, stability checks and
//! Ekeland-type variational principles in vector B-metric spaces.
//!
//! A vector B-metric on a set `X` is a map `d: X × X → ℝⁿ₊` satisfying
//! `d(u,w) <= B (d(u,v) + d(v,w))` componentwise for a real `n × n` matrix `B`.

pub mod evp;
pub mod expr;
pub mod matops;
pub mod metric;
pub mod solver;
