//! Analysis of logit dynamics in heterogeneous multi-population routing games.
//!
//! A [`Game`] is a directed multigraph with one origin-destination pair,
//! throughput and set of link delay functions per population. Route flows
//! evolve by `ż = G(z, η) − z` where `G` is the logit choice map at noise `η`.
//! The crate integrates these dynamics, locates and classifies fixed points,
//! follows them as `η` decreases, certifies contraction at large noise,
//! checks Wardrop and strict equilibria, evaluates potentials of toll games
//! and simulates the finite-population process.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the precision.

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bundled;
pub mod continuation;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod export;
pub mod flow;
pub mod game;
pub mod io;
pub mod linalg;
pub mod meanfield;
pub mod potential;
pub mod routes;
pub mod sampling;
pub mod scalar;
pub mod stability;

pub use continuation::{detect_bifurcations, limit_equilibria, sweep, BifurcationEvent, Branch, ContinuationOptions};
pub use dynamics::{integrate, logit_map, logit_rhs, residual, IntegrateOptions, NoiseLevel, Trajectory};
pub use equilibria::{
    check_strict, check_wardrop, enumerate_strict_candidates, find_all_fixed_points, find_fixed_point, FixedPointRecord,
    StrictReport, WardropReport,
};
pub use error::{Error, Result};
pub use flow::{link_flow, route_costs, LinkFlow, RouteFlow};
pub use game::{DelayFunction, Game, Link, Network, Population};
pub use io::{load_game, load_game_file, parse_game, LoadedGame};
pub use routes::{enumerate_routes, RouteSet, DEFAULT_ROUTE_CAP};
pub use scalar::Scalar;
pub use stability::{classify, Classification, ContractionCertificate, Stability};

pub type Game64 = Game<f64>;
pub type Game32 = Game<f32>;
pub type RouteFlow64 = RouteFlow<f64>;
pub type RouteFlow32 = RouteFlow<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type FixedPoint64 = FixedPointRecord<f64>;
pub type FixedPoint32 = FixedPointRecord<f32>;
pub type Branch64 = Branch<f64>;
pub type Branch32 = Branch<f32>;
