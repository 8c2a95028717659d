//! Simple-path route sets and the flat (population, route) index layout.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::game::{Game, Network};
use crate::scalar::Scalar;

pub const DEFAULT_ROUTE_CAP: usize = 10_000;

/// A route as the sequence of link indices it traverses.
pub type Route = Vec<usize>;

/// Routes of every population plus the flat indexing used by flow vectors.
///
/// Flow, cost and Jacobian vectors are laid out population by population;
/// `offsets[p]..offsets[p + 1]` is the block of population `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteSet {
    routes: Vec<Vec<Route>>,
    offsets: Vec<usize>,
    num_links: usize,
    // membership[global route][link]
    membership: Vec<Vec<bool>>,
}

impl RouteSet {
    /// Builds a route set from explicit routes (link indices).
    pub fn from_routes(num_links: usize, routes: Vec<Vec<Route>>) -> Self {
        let mut offsets = vec![0];
        let mut membership = Vec::new();
        for rs in &routes {
            offsets.push(offsets.last().unwrap() + rs.len());
            for r in rs {
                let mut m = vec![false; num_links];
                for &e in r {
                    m[e] = true;
                }
                membership.push(m);
            }
        }
        RouteSet { routes, offsets, num_links, membership }
    }

    pub fn num_populations(&self) -> usize {
        self.routes.len()
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    /// Total number of (population, route) pairs.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn routes(&self, p: usize) -> &[Route] {
        &self.routes[p]
    }

    pub fn num_routes(&self, p: usize) -> usize {
        self.routes[p].len()
    }

    pub fn block(&self, p: usize) -> Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Population owning flat index `k`.
    pub fn population_of(&self, k: usize) -> usize {
        self.offsets.partition_point(|&o| o <= k) - 1
    }

    /// Route `r` of population `p` uses link `e` (`A^p_{er} = 1`).
    pub fn uses(&self, p: usize, r: usize, e: usize) -> bool {
        self.membership[self.offsets[p] + r][e]
    }

    /// Membership row of the route at flat index `k`.
    pub fn links_of_flat(&self, k: usize) -> &[bool] {
        &self.membership[k]
    }

    /// Link-route incidence matrix of population `p`, `E × R_p`.
    pub fn incidence(&self, p: usize) -> Vec<Vec<u8>> {
        (0..self.num_links)
            .map(|e| (0..self.num_routes(p)).map(|r| self.uses(p, r, e) as u8).collect())
            .collect()
    }

    /// Number of vertex profiles `Π_p |R_p|`.
    pub fn vertex_count(&self) -> u128 {
        self.routes.iter().map(|r| r.len() as u128).product()
    }

    /// True when every population has the same route list.
    pub fn shared_route_set(&self) -> bool {
        self.routes.windows(2).all(|w| w[0] == w[1])
    }

    /// Human-readable route label such as `e1-e2`.
    pub fn route_label(&self, network: &Network, p: usize, r: usize) -> String {
        self.routes[p][r].iter().map(|&e| network.links()[e].id.as_str()).collect::<Vec<_>>().join("-")
    }
}

/// Enumerates every simple origin-destination path of each population.
///
/// Depth-first search over outgoing links in declaration order with a
/// visited-node set; routes are then sorted lexicographically by link index
/// sequence.
pub fn enumerate_routes<T: Scalar>(game: &Game<T>, cap: usize) -> Result<RouteSet> {
    let net = game.network();
    let mut all = Vec::with_capacity(game.num_populations());
    for pop in game.populations() {
        let mut routes = simple_paths(net, pop.origin, pop.destination, cap)
            .ok_or_else(|| Error::RouteCapExceeded { population: pop.id.clone(), cap })?;
        if routes.is_empty() {
            return Err(Error::Validation(format!(
                "population '{}': destination '{}' unreachable from origin '{}'",
                pop.id,
                net.nodes()[pop.destination],
                net.nodes()[pop.origin]
            )));
        }
        routes.sort();
        all.push(routes);
    }
    Ok(RouteSet::from_routes(net.num_links(), all))
}

/// All simple paths as link sequences, or `None` when more than `cap` exist.
fn simple_paths(net: &Network, from: usize, to: usize, cap: usize) -> Option<Vec<Route>> {
    let n = net.nodes().len();
    let adjacency: Vec<Vec<usize>> = (0..n).map(|v| net.outgoing(v).collect()).collect();
    let mut visited = vec![false; n];
    let mut path = Vec::new();
    let mut out = Vec::new();
    // stack of (node, next adjacency position)
    let mut stack = vec![(from, 0usize)];
    visited[from] = true;
    while let Some(top) = stack.last_mut() {
        let node = top.0;
        if top.1 < adjacency[node].len() {
            let e = adjacency[node][top.1];
            top.1 += 1;
            let head = net.links()[e].head;
            if head == to {
                path.push(e);
                out.push(path.clone());
                path.pop();
                if out.len() > cap {
                    return None;
                }
            } else if !visited[head] {
                visited[head] = true;
                path.push(e);
                stack.push((head, 0));
            }
        } else {
            stack.pop();
            visited[node] = false;
            path.pop();
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{DelayFunction, Population};

    fn one_pop(net: Network, o: &str, d: &str) -> Game<f64> {
        let delays = vec![DelayFunction::constant(1.0); net.num_links()];
        let (o, d) = (net.node(o).unwrap(), net.node(d).unwrap());
        Game::new(net, vec![Population { id: "p".into(), origin: o, destination: d, throughput: 1.0, delays }])
            .unwrap()
    }

    #[test]
    fn parallel_links_give_parallel_routes() {
        let net = Network::new(&["o", "d"], &[("a", "o", "d"), ("b", "o", "d")]).unwrap();
        let rs = enumerate_routes(&one_pop(net, "o", "d"), DEFAULT_ROUTE_CAP).unwrap();
        assert_eq!(rs.routes(0), &[vec![0], vec![1]]);
    }

    #[test]
    fn single_link() {
        let net = Network::new(&["o", "d"], &[("e", "o", "d")]).unwrap();
        let rs = enumerate_routes(&one_pop(net, "o", "d"), DEFAULT_ROUTE_CAP).unwrap();
        assert_eq!(rs.dim(), 1);
        assert_eq!(rs.routes(0)[0].len(), 1);
    }

    #[test]
    fn cycles_are_not_followed() {
        let net = Network::new(
            &["o", "a", "d"],
            &[("e1", "o", "a"), ("e2", "a", "o"), ("e3", "a", "d"), ("e4", "o", "d")],
        )
        .unwrap();
        let rs = enumerate_routes(&one_pop(net, "o", "d"), DEFAULT_ROUTE_CAP).unwrap();
        assert_eq!(rs.routes(0), &[vec![0, 2], vec![3]]);
    }

    #[test]
    fn unreachable_destination() {
        let net = Network::new(&["o", "d"], &[("e", "d", "o")]).unwrap();
        let err = enumerate_routes(&one_pop(net, "o", "d"), DEFAULT_ROUTE_CAP).unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.contains("unreachable")));
    }

    #[test]
    fn cap_exceeded() {
        let net = Network::new(&["o", "d"], &[("a", "o", "d"), ("b", "o", "d"), ("c", "o", "d")]).unwrap();
        let err = enumerate_routes(&one_pop(net, "o", "d"), 2).unwrap_err();
        assert!(matches!(err, Error::RouteCapExceeded { cap: 2, .. }));
    }

    #[test]
    fn population_of_flat_index() {
        let rs = RouteSet::from_routes(2, vec![vec![vec![0], vec![1]], vec![vec![0]], vec![vec![1], vec![0]]]);
        let owners: Vec<_> = (0..rs.dim()).map(|k| rs.population_of(k)).collect();
        assert_eq!(owners, vec![0, 0, 1, 2, 2]);
    }
}
