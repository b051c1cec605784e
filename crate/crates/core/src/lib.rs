//! Zero-bias transformation of mean-zero random variables, the couplings that
//! realize it, and the Stein-method bounds they yield for normal approximation.
//!
//! Everything is exact on finite discrete laws: a zero-biased law is a
//! piecewise-constant density on consecutive atom intervals, so identities
//! such as `E W f(W) = σ² E f'(W*)` are checked by closed-form integration
//! rather than by simulation.
//!
//! Modules:
//!
//! - [`dist`]: finite discrete distributions, moments, sampling.
//! - [`zerobias`]: the transformation, square-bias pairs, exchangeable-pair reweighting.
//! - [`coupling`]: independent-sum replacement and dependent-family constructions.
//! - [`stein`]: test functions, the Stein solution, and the assembled bounds.
//! - [`srs`]: simple random sampling without replacement end to end.
//! - [`harness`]: the `zbias` command line.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiations.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod dist;
pub mod error;
pub mod harness;
pub mod io;
pub mod poly;
pub mod quadrature;
pub mod scalar;
pub mod srs;
pub mod stats;
pub mod stein;
pub mod zerobias;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;

pub type Distribution = dist::DiscreteDistribution<f64>;
pub type Moments = dist::MomentSummary<f64>;
pub type Density = zerobias::PiecewiseUniformDensity<f64>;
pub type Pairs = zerobias::PairDistribution<f64>;
pub type Poly = poly::Polynomial<f64>;
pub type Joint = coupling::JointLaw<f64>;
pub type Family = coupling::DependentFamily<f64>;
pub type Model = coupling::SumModel<f64>;
pub type Sample = coupling::CouplingSample<f64>;
pub type TestFn = stein::TestFunction<f64>;
pub type Report = stein::BoundReport<f64>;
pub type Population = srs::Population<f64>;
pub type Constants = srs::SrsConstants<f64>;

pub type Distribution32 = dist::DiscreteDistribution<f32>;
pub type Density32 = zerobias::PiecewiseUniformDensity<f32>;
pub type Population32 = srs::Population<f32>;
