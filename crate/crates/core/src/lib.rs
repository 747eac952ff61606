//! Arbitrage-stable states, impermanent loss, and the duality between a
//! liquidity surface and its portfolio value function.
//!
//! The crate is organised bottom-up:
//!
//! - [`amm`]: invariant families (constant product, weighted geometric
//!   mean, StableSwap), gradients and sampled axiom checks.
//! - [`stable`]: the surface function `f`, its derivatives, and the
//!   value-minimizing stable state for a price vector.
//! - [`legendre`]: the value function `W`, its gradient, the Legendre
//!   transform route, and homogeneity degree estimates.
//! - [`il`]: impermanent loss by several routes, exchange rate level
//!   independence tests, and recovery of an equivalent weighted pool.
//! - [`cli`]: the command line front end used by the `amm-duality` binary.
//!
//! Token `n` (the last one) is the numeraire everywhere.

pub mod amm;
pub mod cli;
pub mod error;
pub mod il;
pub mod legendre;
pub mod scalar;
pub mod stable;

pub use amm::{validate_spec, AmmSpec, Family, PriceVector, ReserveVector, ValidationReport};
pub use error::{AmmError, Result};
pub use stable::{
    closed_form_stable_point, eval_f, grad_f, hess_f, solve_stable_point, SolverOptions,
    StableState,
};
