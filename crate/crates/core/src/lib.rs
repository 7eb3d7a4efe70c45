//! Koopman-von Neumann (KvN) simulation of classical polynomial Hamiltonian
//! systems on a continuous-variable quantum computer, emulated classically.
//!
//! The pipeline runs in four stages:
//!
//! * [`kvn`] turns a separable classical Hamiltonian `H = V(q) + T(p)` into
//!   the KvN generator `sum dT/dp_j P_j - dV/dq_j P_(n+j)`.
//! * [`synth`] lowers each generator term into elementary qumode gates and
//!   assembles product-formula circuits.
//! * [`backend`] executes gate sequences on a spectral position grid, or
//!   exactly on Gaussian states when every generator is quadratic.
//! * [`oracle`] provides classical reference dynamics (Hamiltonian flow,
//!   Liouville transport by characteristics, Monte Carlo ensembles).
//!
//! [`poly`] and [`weyl`] supply the exact algebra underneath: commutative
//! phase-space polynomials, and the quadrature operator algebra in which the
//! gate decomposition identities are checked symbolically.

pub mod backend;
pub mod kvn;
pub mod oracle;
pub mod poly;
pub mod synth;
pub mod weyl;

pub use poly::{PhasePolynomial, Rational};
