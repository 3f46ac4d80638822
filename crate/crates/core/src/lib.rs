//! Numerical toolkit for Schramm-Loewner evolutions in doubly connected
//! domains: annulus and strip Loewner flows, the theta-type special
//! functions driving them, drift functions for annulus SLE(kappa) with a
//! marked boundary point, conformal restriction observables, and a Gibbs
//! sampler for multiple SLE crossing an annulus.
//!
//! Geometry conventions used throughout:
//!
//! * `A_p = { e^{-p} < |z| < 1 }` is the annulus of modulus `p`, with outer
//!   circle `T` and inner circle `T_p`.
//! * `S_p = { 0 < Im z < p }` is the covering strip; `e^i : z -> e^{iz}`
//!   covers `A_p`, sending `R` to `T` and `R_p = { Im z = p }` to `T_p`.
//! * Half-argument shorthands: `cot2(z) = cot(z/2)`, `tanh2(z) = tanh(z/2)`
//!   and so on.

pub mod acceptance;
pub mod drift;
pub mod interp;
pub mod loewner;
pub mod multisle;
pub mod ode;
pub mod quad;
pub mod restriction;
pub mod rng;
pub mod sampler;
pub mod specfun;
pub mod stats;

pub use num_complex::Complex64;
