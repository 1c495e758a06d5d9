//! Univariate and tensor-product B-splines.

pub mod dual;
pub mod knots;
pub mod quadrature;
pub mod tensor;

pub use dual::{dual_functional, first_support_element, local_projection, quasi_interpolant};
pub use knots::{subdivision_matrix, KnotVector, Subdivision1D};
pub use quadrature::QuadratureRule;
pub use tensor::{BasisValues, ElementBasis, TensorSpace, TensorSubdivision};
