//! Structure-preserving solver for degenerate cross-diffusion population
//! systems with volume filling.
//!
//! The systems have the form `du/dt = div(A(u) grad u)` on a bounded domain
//! with no-flux boundaries, where `u = (u_1, ..., u_n)` are volume fractions
//! of `n` species and `u_{n+1} = 1 - sum u_i` is the unoccupied fraction.
//! The diffusion matrix is built from transition-rate factors `p_i(u)` and
//! `q(u_{n+1})`, and the whole solver works in entropy variables
//! `w = h'(u)`, which makes positivity and the volume constraint structural:
//! every state the implicit stepper produces lies in the open simplex by
//! construction, no clipping or maximum principle involved.
//!
//! The crate provides
//! - a model catalog with hypothesis validation ([`model`]),
//! - the entropy density, its derivatives, and the inverse entropy map
//!   ([`entropy`]),
//! - the diffusion matrix algebra `A`, `h''A`, `B = A (h'')^{-1}` and the
//!   positive-definiteness audit ([`diffusion`]),
//! - a 1-D finite-volume discretization with discrete entropy, dissipation,
//!   Fisher information, H^{-1} seminorm and Gajewski distance ([`grid`]),
//! - the implicit Euler entropy-variable stepper with per-step invariant
//!   audits ([`stepper`]),
//! - the random-walk master equation and its diffusion-limit study
//!   ([`lattice`]),
//! - experiment orchestration and CSV/JSON emission for the CLI
//!   ([`config`], [`experiments`], [`output`]).

pub mod config;
pub mod diffusion;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod output;
pub mod quad;
pub mod sampling;
pub mod stepper;

pub use error::{Error, Result};
