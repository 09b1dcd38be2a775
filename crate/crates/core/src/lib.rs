//! Numerical lab for m-subharmonic weights along a complex submanifold `V`
//! in the flat model `C^k × T^{n−k}`, `V = {z' = 0}`.
//!
//! * [`garding`]: symmetric functions of Hermitian matrices, Γ^m cones.
//! * [`profiles`]: the model, radial weight families, eigenvalue profiles.
//! * [`weights`]: sub/superweights, expansion checks, maximal profiles.
//! * [`fields`]: scalar fields, finite-difference Hessians, cone scans.
//! * [`measures`]: tube integrals and generalized Lelong numbers.
//! * [`singularity`]: relative types, pointwise probes, constancy scans.

pub mod error;
pub mod exec;
pub mod fields;
pub mod fit;
pub mod garding;
pub mod measures;
pub mod profiles;
pub mod singularity;
pub mod weights;

pub use error::{LabError, Result};
