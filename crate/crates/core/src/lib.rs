//! Numerical toolkit for Besov and Kondratiev regularity of corner-singular
//! functions and heat-equation solutions.
//!
//! The modules follow the data flow: [`geometry`] describes the domain,
//! [`field`] samples functions on dyadic grids, [`wavelet`] turns them into
//! coefficient trees, [`norms`] evaluates Besov/Sobolev/Kondratiev norms,
//! [`approx`] measures N-term and uniform approximation rates, [`pencil`]
//! handles the operator-pencil eigenvalue strips and weight ranges, and
//! [`parabolic`] solves the (semilinear) heat equation that feeds the rest.

pub mod approx;
pub mod cli;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod norms;
pub mod numerics;
pub mod parabolic;
pub mod pencil;
pub mod testfns;
pub mod verify;
pub mod wavelet;

pub use error::{Error, Result};
pub use field::{BoundingBox, Grid, Mask, Point, SampledField};
pub use geometry::{CutoffProfile, DomainGeometry, DomainKind, WeightMode};
