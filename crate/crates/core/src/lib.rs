//! Homogeneous spaces of scalar products of fixed signature, their natural
//! invariant metric and measure, diffeomorphism-invariant measure fields, and
//! finite-stage projective families of tensor-product Hilbert spaces.

// `!(x > t)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod forms;
pub mod geometry;
pub mod group;
pub mod linalg;
pub mod measure;
pub mod projective;
pub mod quadrature;
pub mod suite;

pub use error::{Error, Result};
pub use forms::{SignatureMethod, Signature, SymmetricForm};
pub use group::GroupElement;
