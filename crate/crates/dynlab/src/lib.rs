//! Desk-scale numerical laboratory for area-preserving dynamics in two
//! dimensions.
//!
//! The crate provides, in load order:
//!
//! - [`geom`], [`func`], [`symplectic`]: fixed-size linear algebra, shear and
//!   bump profiles, and exact-symplectic building blocks.
//! - [`maps`]: the composable [`maps::PlaneMap`] abstraction, the built-in
//!   map zoo (Henon maps, shears, the standard family, the cat map and its
//!   slowed variant), and the degree-2 quotient of the torus to the sphere.
//! - [`entropy`]: itinerary counting, empirical partition metric entropy,
//!   entropy rates, Lyapunov spectra and Pesin-sum estimates.
//! - [`hyperbolic`]: Newton search for periodic points, invariant manifold
//!   growing, intersection and coincidence-band detection, and the affine
//!   horseshoe oracle model.
//! - [`renorm`]: a saddle model with an exact homoclinic band, rescaling
//!   charts, and numerical verification of the Henon-composition form of its
//!   renormalized return maps.
//! - [`links`]: an explicit bi-link normal-form model, splitting functions,
//!   the associated shear operators, and contraction fixed-point restoration
//!   of broken links, including the ordered four-link schedule.

pub mod entropy;
pub mod func;
pub mod geom;
pub mod hyperbolic;
pub mod links;
pub mod maps;
pub mod renorm;
pub mod report;
pub mod symplectic;
