//! Game files shipped with the crate and the three Wardrop equilibria of the
//! four-node multiple-equilibria example.

use crate::flow::RouteFlow;
use crate::game::{DelayFunction, Game, Network, Population};
use crate::io::parse_game;
use crate::routes::{enumerate_routes, RouteSet, DEFAULT_ROUTE_CAP};

pub const THREE_POP_JSON: &str = include_str!("../../../data/three_pop.json");
pub const TOLL2_JSON: &str = include_str!("../../../data/toll2.json");
pub const PARALLEL_AFFINE_JSON: &str = include_str!("../../../data/parallel_affine.json");
pub const CONSTANT_JSON: &str = include_str!("../../../data/constant.json");

/// Three populations sharing `o → d` over four routes with heterogeneous delays.
pub fn three_pop() -> Game<f64> {
    parse_game(THREE_POP_JSON).expect("bundled game parses").game
}

pub fn three_pop_with_routes() -> (Game<f64>, RouteSet) {
    let g = three_pop();
    let r = enumerate_routes(&g, DEFAULT_ROUTE_CAP).expect("bundled game has routes");
    (g, r)
}

/// Wardrop equilibrium `k ∈ {1, 2, 3}` of [`three_pop`]; 1 and 2 are strict.
pub fn three_pop_equilibrium(k: usize) -> RouteFlow<f64> {
    let z = match k {
        1 => vec![1.2, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        2 => vec![0.0, 0.0, 0.0, 1.2, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        3 => vec![
            3.0 / 5.0,
            0.0,
            0.0,
            3.0 / 5.0,
            10.0 / 21.0,
            0.0,
            11.0 / 21.0,
            0.0,
            0.0,
            11.0 / 21.0,
            0.0,
            10.0 / 21.0,
        ],
        _ => panic!("equilibrium index must be 1, 2 or 3"),
    };
    RouteFlow::from_vec_unchecked(z)
}

/// One population on a single `o → d` link with constant delay 5.
pub fn single_link() -> Game<f64> {
    let net = Network::new(&["o", "d"], &[("e", "o", "d")]).unwrap();
    Game::new(
        net,
        vec![Population { id: "p".into(), origin: 0, destination: 1, throughput: 1.0, delays: vec![DelayFunction::constant(5.0)] }],
    )
    .unwrap()
}

pub fn toll2() -> crate::io::LoadedGame<f64> {
    parse_game(TOLL2_JSON).expect("bundled toll game parses")
}

pub fn parallel_affine() -> Game<f64> {
    parse_game(PARALLEL_AFFINE_JSON).expect("bundled game parses").game
}

pub fn constant_delays() -> Game<f64> {
    parse_game(CONSTANT_JSON).expect("bundled game parses").game
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_pop_routes_are_ordered_by_link() {
        let (g, r) = three_pop_with_routes();
        for p in 0..3 {
            let labels: Vec<_> = (0..4).map(|k| r.route_label(g.network(), p, k)).collect();
            assert_eq!(labels, ["e1-e2", "e1-e3", "e4-e5", "e4-e6"]);
        }
        for k in 1..=3 {
            assert!(three_pop_equilibrium(k).check_admissible(&g, &r).is_ok());
        }
    }
}
