//! Energy-stable solvers for the modified phase field crystal equation,
//! a sixth-order damped wave model of crystal growth, discretized with
//! block-centered finite differences and a scalar auxiliary variable in
//! time. Includes the production Crank-Nicolson stepper, a first-order
//! companion scheme, diagnostics (energies, mass, Cauchy convergence
//! studies), and dense-matrix oracles used by `mpfc check`.

pub mod config;
pub mod experiments;
pub mod grid;
pub mod model;
pub mod output;
pub mod spectral;
pub mod stepper;
pub mod verify;
