//! Simulation and statistical verification toolkit for a one-dimensional
//! time-inhomogeneous kinetic diffusion.
//!
//! The object of study is the pair `(V, X)` where the velocity `V` solves
//!
//! ```text
//! dV_t = dB_t - t^{-beta} F(V_t) dt,   V_{t0} = v0 > 0,
//! ```
//!
//! and the position is `X_t = x0 + \int_{t0}^t V_s ds`. The drag force `F`
//! is sign-homogeneous of degree `gamma` (or bounded by such a function),
//! and the long-time behaviour of the pair is governed by the exponent
//! `q = beta / (gamma + 1)`:
//!
//! * `q > 1/2`: the drag is negligible in the limit and the rescaled pair
//!   behaves like Brownian motion plus its integral,
//! * `q = 1/2`: the drag balances the noise; after an exponential change of
//!   time the velocity becomes a stationary ergodic diffusion,
//! * `q < 1/2`: the drag dominates; velocity marginals decouple and follow
//!   a generalized Gaussian stationary law.
//!
//! The crate provides Monte Carlo path generation with reproducible
//! parallel substreams ([`integrate`]), the change-of-time machinery that
//! maps the inhomogeneous equation onto homogeneous ones ([`timechange`]),
//! the stationary laws with exact samplers and quadrature-backed CDFs
//! ([`invariant`]), the theoretical limit laws with their covariance
//! structure ([`limits`]), and the statistical verification primitives
//! used to check all of the above by simulation ([`stats`]).

pub mod integrate;
pub mod invariant;
pub mod limits;
pub mod model;
pub mod stats;
pub mod timechange;

pub use integrate::{
    GridSpacing, PathBundle, RngPolicy, SimError, SimOptions, SimScheme, TimeGrid,
};
pub use model::{
    CatalogDrift, DriftSpec, ExplosionVerdict, ModelError, ModelSpec, Regime, RegimeTag,
};
