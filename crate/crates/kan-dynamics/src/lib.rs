//! Numerical dynamics of Kan-type partially hyperbolic skew products on
//! `T^2 x [0,1]`.
//!
//! The crate is organized around the ingredients of a constructive
//! transitivity argument for boundary-preserving skew products over Anosov
//! toral automorphisms:
//!
//! * [`torus`] — linear hyperbolic dynamics on the base torus: automorphism
//!   analysis, fixed points, stable/unstable line foliations.
//! * [`fiber`] — one-dimensional dynamics on `[0,1]`: pole-map
//!   classification, Sternberg linearization, distortion constants.
//! * [`number_theory`] — exact multiplicative-independence decisions,
//!   continued fractions and Diophantine pair search for `alpha^-k beta^l`.
//! * [`center`] — the interval-intersection mechanism on the center fiber
//!   with distortion-controlled overlap ratios.
//! * [`skew`] — the 3D skew product: construction and validation, orbit
//!   stepping, strong stable/unstable holonomy between center fibers.
//! * [`transitivity`] — transitivity certificates with a direct-search
//!   oracle and distortion diagnostics.
//! * [`basins`] — Birkhoff averages, basin rasters and intermingling
//!   reports for the classical intermingled-basin examples.

pub mod basins;
pub mod center;
pub mod fiber;
pub mod highprec;
pub mod number_theory;
pub mod skew;
pub mod torus;
pub mod transitivity;

pub use skew::{KanSystem, StatePoint, ValidationReport};
pub use torus::{LeafDirection, LeafSegment, ToralAutomorphism, TorusPoint};
