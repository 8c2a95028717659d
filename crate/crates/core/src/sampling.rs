//! Reproducible start points on the flow polytope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::flow::{vertex_choice, RouteFlow};
use crate::game::Game;
use crate::routes::RouteSet;
use crate::scalar::Scalar;

pub const VERTEX_CAP: usize = 1024;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One flow with every population block drawn from `v_p · Dirichlet(1, …, 1)`.
pub fn dirichlet_flow<T: Scalar, R: Rng>(game: &Game<T>, routes: &RouteSet, rng: &mut R) -> RouteFlow<T> {
    let mut z = vec![T::zero(); routes.dim()];
    for (p, pop) in game.populations().iter().enumerate() {
        let block = &mut z[routes.block(p)];
        let draws: Vec<f64> = (0..block.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = draws.iter().sum();
        for (x, d) in block.iter_mut().zip(draws) {
            *x = pop.throughput * T::of(d / s);
        }
    }
    let mut z = RouteFlow::from_vec_unchecked(z);
    z.project(game, routes);
    z
}

pub fn dirichlet_flows<T: Scalar>(game: &Game<T>, routes: &RouteSet, n: usize, seed: u64) -> Vec<RouteFlow<T>> {
    let mut r = rng(seed);
    (0..n).map(|_| dirichlet_flow(game, routes, &mut r)).collect()
}

/// Every vertex profile (each population on one route), in mixed-radix order.
pub fn vertex_profiles<T: Scalar>(game: &Game<T>, routes: &RouteSet, cap: usize) -> Result<Vec<RouteFlow<T>>> {
    let count = routes.vertex_count();
    if count > cap as u128 {
        return Err(Error::VertexCapExceeded { what: "vertex profiles", count, cap });
    }
    Ok((0..count).map(|k| RouteFlow::vertex(game, routes, &vertex_choice(routes, k))).collect())
}

/// Vertex profiles when their number is within `cap`, otherwise none.
pub fn vertex_profiles_capped<T: Scalar>(game: &Game<T>, routes: &RouteSet, cap: usize) -> Vec<RouteFlow<T>> {
    vertex_profiles(game, routes, cap).unwrap_or_default()
}
