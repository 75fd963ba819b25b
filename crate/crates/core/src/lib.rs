//! Numerical capillary problems on cone- and prism-type Riemannian polyhedra.
//!
//! The crate minimizes the capillary energy
//! `F(E) = |∂E ∩ int M| - Σ cos γ_j |∂E ∩ F_j|` over triangulated separating
//! surfaces, measures the discrete geometry entering the second variation and
//! the Gauss–Bonnet comparison chain, and builds CMC capillary foliations.

pub mod error;
pub mod domain;
pub mod foliation;
pub mod mesh;
pub mod scenario;
pub mod metric;
pub mod solver;
pub mod sparse;
pub mod stability;
pub mod wedge;

pub use error::{Error, Result};
pub use metric::{Aabb, CurvatureTensors, MetricField, Point};
