#![allow(dead_code)]

use hetroute::game::{DelayFunction, Game, Network, Population};
use hetroute::routes::{enumerate_routes, RouteSet, DEFAULT_ROUTE_CAP};
use hetroute::sampling::rng;
use rand::Rng;

pub fn random_delay<R: Rng>(r: &mut R) -> DelayFunction<f64> {
    let kind = r.random_range(0..4);
    let mut c = || r.random_range(0.0..3.0);
    match kind {
        0 => DelayFunction::constant(c()),
        1 => DelayFunction::affine(c(), c()),
        2 => DelayFunction::linear(c()),
        _ => DelayFunction::Polynomial(vec![c(), c(), c()]),
    }
}

/// Game on `o → m → d` with parallel links and an optional direct `o → d`
/// link: at most `max_pops` populations and at most four routes each.
pub fn random_game(seed: u64, max_pops: usize) -> (Game<f64>, RouteSet) {
    let mut r = rng(seed);
    let first = r.random_range(1..=2);
    let second = r.random_range(1..=2);
    let direct = if first * second == 4 { 0 } else { r.random_range(0..=1) };
    let mut links = Vec::new();
    for k in 0..first {
        links.push((format!("a{k}"), "o".to_string(), "m".to_string()));
    }
    for k in 0..second {
        links.push((format!("b{k}"), "m".to_string(), "d".to_string()));
    }
    for k in 0..direct {
        links.push((format!("c{k}"), "o".to_string(), "d".to_string()));
    }
    let links: Vec<(&str, &str, &str)> = links.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
    let net = Network::new(&["o", "m", "d"], &links).unwrap();
    let pops = r.random_range(1..=max_pops);
    let populations = (0..pops)
        .map(|p| Population {
            id: format!("p{p}"),
            origin: 0,
            destination: 2,
            throughput: r.random_range(0.3..2.0),
            delays: (0..links.len()).map(|_| random_delay(&mut r)).collect(),
        })
        .collect();
    let game = Game::new(net, populations).unwrap();
    let routes = enumerate_routes(&game, DEFAULT_ROUTE_CAP).unwrap();
    (game, routes)
}

/// Route costs evaluated directly from route membership, independent of the
/// crate's link-flow and cost routines.
pub fn oracle_costs(game: &Game<f64>, routes: &RouteSet, z: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; routes.num_links()];
    for p in 0..routes.num_populations() {
        for (i, route) in routes.routes(p).iter().enumerate() {
            for &e in route {
                f[e] += z[routes.block(p).start + i];
            }
        }
    }
    let mut c = Vec::with_capacity(z.len());
    for (p, pop) in game.populations().iter().enumerate() {
        for route in routes.routes(p) {
            let cost: f64 = route
                .iter()
                .map(|&e| pop.delays[e].coefficients().iter().rev().fold(0.0, |acc, &a| acc * f[e] + a))
                .sum();
            c.push(cost);
        }
    }
    c
}

/// Softmax of `−c/η` scaled by `v`, computed without the crate.
pub fn oracle_logit(costs: &[f64], v: f64, eta: f64) -> Vec<f64> {
    let m = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = costs.iter().map(|c| (-(c - m) / eta).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| v * x / s).collect()
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Worst entry-wise ratio `|a − fd| / (rtol |fd| + atol)` of the analytic
/// `J_{G,z}` and `∂G/∂η` against central differences with step `h` (scaled
/// by η for the η-derivative); values ≤ 1 pass. `atol` is the round-off floor
/// of the difference quotient, `10 ε max|G| / step`.
pub fn jacobian_fd_errors(game: &Game<f64>, routes: &RouteSet, z: &[f64], eta: f64, h: f64, rtol: f64) -> (f64, f64) {
    use hetroute::dynamics::{logit_map, NoiseLevel};
    use hetroute::flow::RouteFlow;
    use hetroute::stability::{jacobian_eta, jacobian_z};
    let g = |z: &[f64], e: f64| logit_map(game, routes, &RouteFlow::from_vec_unchecked(z.to_vec()), NoiseLevel::new(e).unwrap()).unwrap();
    let n = z.len();
    let noise = NoiseLevel::new(eta).unwrap();
    let gmax = game.throughputs().into_iter().fold(1.0f64, f64::max);
    let j = jacobian_z(game, routes, z, noise).unwrap().matrix;
    let atol = 10.0 * f64::EPSILON * gmax / h;
    let mut worst = 0.0f64;
    for col in 0..n {
        let (mut zp, mut zm) = (z.to_vec(), z.to_vec());
        zp[col] += h;
        zm[col] -= h;
        let (gp, gm) = (g(&zp, eta), g(&zm, eta));
        for row in 0..n {
            let fd = (gp[row] - gm[row]) / (2.0 * h);
            worst = worst.max((fd - j[(row, col)]).abs() / (rtol * fd.abs() + atol));
        }
    }
    let de = jacobian_eta(game, routes, z, noise).unwrap();
    let he = h * eta;
    let atol_e = 10.0 * f64::EPSILON * gmax / he;
    let (gp, gm) = (g(z, eta + he), g(z, eta - he));
    let mut worst_e = 0.0f64;
    for k in 0..n {
        let fd = (gp[k] - gm[k]) / (2.0 * he);
        worst_e = worst_e.max((fd - de[k]).abs() / (rtol * fd.abs() + atol_e));
    }
    (worst, worst_e)
}
