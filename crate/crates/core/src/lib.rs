//! Performance bounds for counter-diabatic driving of a dissipative
//! Landau-Zener spin, together with the open-system solvers that check them.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to use
//! the platform math library instead of `libm`.
//!
//! Conventions used throughout:
//!
//! * `ħ = 1`, energies and times are dimensionless.
//! * Two-level states are written in the ordered basis `(|↑⟩, |↓⟩)` with
//!   `σ_z|↑⟩ = +|↑⟩`. The instantaneous ground state of
//!   `H₀ = (q/2)σ_z + (Δ/2)σ_x` is `cos θ|↓⟩ − sin θ|↑⟩` with
//!   `θ = ½·atan2(Δ, q) ∈ (0, π/2)`.
//!
//! Module map:
//!
//! * [`operators`]: 2×2 operators, pure states, fidelity and Bures angle.
//! * [`protocol`]: drive families `q(t)`, the mixing angle and the CD Hamiltonian.
//! * [`bath`]: spectral densities, the functionals `S` and `X_t`, and the
//!   exponential decomposition of the bath correlation function.
//! * [`bounds`]: the Bures-angle bound `l_BD`, the fidelity bound and the
//!   multi-bath generalization.
//! * [`dynamics`]: isolated, HEOM and pseudomode propagation.
//! * [`optimizer`]: protocol optimization against `l_BD`.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod bath;
pub mod bounds;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod operators;
pub mod optimizer;
pub mod protocol;
pub mod quadrature;
pub mod spline;

pub use error::{Error, Result};
