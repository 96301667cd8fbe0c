//! Projection-based reduced-order models of incompressible flow.
//!
//! The crate covers the whole offline/online chain: full-order solvers that
//! produce snapshot ensembles ([`fom`]), proper orthogonal decomposition
//! ([`pod`]), Galerkin projection to quadratic modal ODEs including
//! turbulent-viscosity models ([`galerkin`]), learned residual closures
//! ([`closure`]), time integration of the assembled reduced models
//! ([`rom`]), and evaluation metrics plus on-disk formats ([`eval`], [`io`]).
//!
//! Numerical code is generic over the scalar type through [`Real`]; the
//! `*64` aliases below fix it to `f64`, which is what the file formats use.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::large_enum_variant)]

pub mod closure;
pub mod error;
pub mod eval;
pub mod field;
pub mod fom;
pub mod galerkin;
pub mod grid;
pub mod io;
pub mod ops;
pub mod pod;
pub mod rom;
pub mod scalar;
pub mod spline;

pub use error::{Error, Result};
pub use field::{inner_product, vector_inner_product, Field, Variable, VectorField};
pub use grid::{
    BoundaryCondition, BoundaryLabel, BoundarySpec, FlowBoundaries, FluidConstants, GridSpec,
    StructuredGrid,
};
pub use scalar::Real;

pub type Grid64 = StructuredGrid<f64>;
pub type Field64 = Field<f64>;
pub type VectorField64 = VectorField<f64>;
