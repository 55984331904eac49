//! Fixed-energy variational trajectory library for the generalized N-body
//! problem.
//!
//! The crate computes geodesics of the Mane potential
//! `m_lambda(x, y) = inf A_lambda` by direct minimization of the discretized
//! Maupertuis action, builds hyperbolic motions as limits of geodesics to
//! dyadically receding endpoints, and verifies the quantitative length, angle,
//! time and defect bounds that make the limiting construction work.
//!
//! Module map:
//!
//! - [`config`]: configurations, the flat (minimal-separation) norm, angles,
//!   base points and the cone/drift predicates.
//! - [`potential`]: the pairwise potential family with far-field envelopes.
//! - [`quad`]: adaptive Simpson quadrature used by envelopes and certificates.
//! - [`path`], [`action`]: discrete paths, Lagrangian/Maupertuis actions,
//!   exact discrete gradients and canonical reparametrization.
//! - [`solver`]: fixed-endpoint action minimization with node refinement.
//! - [`metric`]: Mane-potential estimates and analytic upper/lower
//!   certificates.
//! - [`psi`], [`hyperbolic`]: the Psi error budget, dyadic geodesic sequences
//!   and every bound check of the construction.
//! - [`ode`]: independent verification by integrating `x'' = grad F`.
//! - [`report`]: bound-check records and serializable reports.
//!
//! Batch entry points fan out over [`rayon`] when the `parallel` feature
//! (default) is enabled and fall back to sequential iteration otherwise.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod config;
pub mod error;
pub mod hyperbolic;
pub mod metric;
pub mod ode;
pub mod parallel;
pub mod path;
pub mod potential;
pub mod psi;
pub mod quad;
pub mod report;
pub mod solver;

pub use config::{Configuration, Ray};
pub use error::{Error, Result};
pub use path::DiscretePath;
pub use potential::{Envelope, PairPotentialKind, PotentialSpec};
pub use solver::{GeodesicResult, SolveOptions};
