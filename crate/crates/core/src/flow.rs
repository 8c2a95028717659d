//! Route flows, induced link flows and route costs.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::routes::RouteSet;
use crate::scalar::Scalar;

/// Relative tolerance on `Σ_r z^p_r = v_p`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Per-population route flows stored in the flat layout of a [`RouteSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct RouteFlow<T = f64>(Vec<T>);

/// Link flow vector `f = Σ_p A^p z^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkFlow<T = f64>(pub Vec<T>);

impl<T> Deref for RouteFlow<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for RouteFlow<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> Deref for LinkFlow<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

fn sum_tol<T: Scalar>(v: T, len: usize) -> T {
    let base = T::of(SIMPLEX_TOL).max(T::epsilon() * T::of(8.0 * len.max(1) as f64));
    base * v.max(T::one())
}

impl<T: Scalar> RouteFlow<T> {
    /// Validates admissibility: non-negative entries summing to each throughput.
    pub fn new(game: &Game<T>, routes: &RouteSet, data: Vec<T>) -> Result<Self> {
        let z = RouteFlow(data);
        z.check_admissible(game, routes)?;
        Ok(z)
    }

    /// Wraps a vector without checking admissibility.
    pub fn from_vec_unchecked(data: Vec<T>) -> Self {
        RouteFlow(data)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn check_admissible(&self, game: &Game<T>, routes: &RouteSet) -> Result<()> {
        if self.0.len() != routes.dim() {
            return Err(Error::Dimension { expected: routes.dim(), got: self.0.len() });
        }
        for (p, pop) in game.populations().iter().enumerate() {
            let block = &self.0[routes.block(p)];
            let tol = sum_tol(pop.throughput, block.len());
            if let Some(x) = block.iter().find(|x| !x.is_finite() || **x < -tol) {
                return Err(Error::Inadmissible(format!("population '{}' has flow {x}", pop.id)));
            }
            let s: T = block.iter().copied().sum();
            if (s - pop.throughput).abs() > tol {
                return Err(Error::Inadmissible(format!(
                    "population '{}' flows sum to {s}, throughput is {}",
                    pop.id, pop.throughput
                )));
            }
        }
        Ok(())
    }

    /// Each population spread evenly over its routes.
    pub fn uniform(game: &Game<T>, routes: &RouteSet) -> Self {
        let mut z = vec![T::zero(); routes.dim()];
        for (p, pop) in game.populations().iter().enumerate() {
            let n = T::of(routes.num_routes(p) as f64);
            for x in &mut z[routes.block(p)] {
                *x = pop.throughput / n;
            }
        }
        RouteFlow(z)
    }

    /// Vertex profile: population `p` entirely on route `choice[p]`.
    pub fn vertex(game: &Game<T>, routes: &RouteSet, choice: &[usize]) -> Self {
        let mut z = vec![T::zero(); routes.dim()];
        for (p, pop) in game.populations().iter().enumerate() {
            z[routes.block(p).start + choice[p]] = pop.throughput;
        }
        RouteFlow(z)
    }

    /// Per-population blocks.
    pub fn blocks<'a>(&'a self, routes: &'a RouteSet) -> impl Iterator<Item = &'a [T]> + 'a {
        (0..routes.num_populations()).map(move |p| &self.0[routes.block(p)])
    }

    /// Clips negatives and rescales every population block to its throughput.
    ///
    /// Returns the largest absolute sum drift seen before renormalization.
    pub fn project(&mut self, game: &Game<T>, routes: &RouteSet) -> T {
        project_slice(&mut self.0, game, routes)
    }

    pub fn cast<U: Scalar>(&self) -> RouteFlow<U> {
        RouteFlow(self.0.iter().map(|x| U::of(x.f64())).collect())
    }
}

pub(crate) fn project_slice<T: Scalar>(z: &mut [T], game: &Game<T>, routes: &RouteSet) -> T {
    let mut drift = T::zero();
    for (p, pop) in game.populations().iter().enumerate() {
        let block = &mut z[routes.block(p)];
        let raw: T = block.iter().copied().sum();
        drift = drift.max((raw - pop.throughput).abs());
        for x in block.iter_mut() {
            if *x < T::zero() {
                *x = T::zero();
            }
        }
        let s: T = block.iter().copied().sum();
        if s > T::zero() {
            let k = pop.throughput / s;
            for x in block.iter_mut() {
                *x = *x * k;
            }
        } else {
            let n = T::of(block.len() as f64);
            for x in block.iter_mut() {
                *x = pop.throughput / n;
            }
        }
    }
    drift
}

/// Index of the `k`-th vertex profile in mixed radix, first population most significant.
pub fn vertex_choice(routes: &RouteSet, mut k: u128) -> Vec<usize> {
    let mut choice = vec![0; routes.num_populations()];
    for p in (0..routes.num_populations()).rev() {
        let n = routes.num_routes(p) as u128;
        choice[p] = (k % n) as usize;
        k /= n;
    }
    choice
}

/// `f_e = Σ_p Σ_r A^p_{er} z^p_r`.
pub fn link_flow<T: Scalar>(routes: &RouteSet, z: &[T]) -> Result<LinkFlow<T>> {
    if z.len() != routes.dim() {
        return Err(Error::Dimension { expected: routes.dim(), got: z.len() });
    }
    let mut f = vec![T::zero(); routes.num_links()];
    link_flow_into(routes, z, &mut f);
    Ok(LinkFlow(f))
}

pub(crate) fn link_flow_into<T: Scalar>(routes: &RouteSet, z: &[T], f: &mut [T]) {
    f.iter_mut().for_each(|x| *x = T::zero());
    for p in 0..routes.num_populations() {
        let off = routes.block(p).start;
        for (r, route) in routes.routes(p).iter().enumerate() {
            let flow = z[off + r];
            for &e in route {
                f[e] = f[e] + flow;
            }
        }
    }
}

/// Route costs `c^p_r = Σ_e A^p_{er} τ^p_e(f_e)` in the flat layout.
pub fn route_costs<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T]) -> Result<Vec<T>> {
    let f = link_flow(routes, z)?;
    Ok(costs_at_link_flow(game, routes, &f))
}

pub(crate) fn costs_at_link_flow<T: Scalar>(game: &Game<T>, routes: &RouteSet, f: &[T]) -> Vec<T> {
    let mut c = vec![T::zero(); routes.dim()];
    for (p, pop) in game.populations().iter().enumerate() {
        let off = routes.block(p).start;
        for (r, route) in routes.routes(p).iter().enumerate() {
            c[off + r] = route.iter().map(|&e| pop.delays[e].eval(f[e])).sum();
        }
    }
    c
}
