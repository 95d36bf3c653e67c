//! Topological optimization of point clouds.
//!
//! The pipeline is `PointCloud -> FilteredComplex -> Diagram -> Cotangent ->
//! SparseGradient -> Interpolant`. The sparse Vietoris-Rips gradient of a
//! persistence-based loss only touches the handful of points incident to
//! critical edges; [`diffeo::Interpolant`] extends it to a smooth Gaussian
//! kernel vector field on the whole ambient space so that every point moves.
//! [`optimizer::run`] drives either scheme, optionally on random subsamples,
//! and records the diffeomorphic steps as an invertible [`optimizer::Flow`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diffeo;
pub mod error;
pub mod generate;
pub mod gradient;
pub mod io;
pub mod losses;
pub mod optimizer;
pub mod rips;

pub use error::{Error, Result};
pub use rips::{Diagram, DiagramPoint, FilteredComplex, PointCloud, Simplex};
