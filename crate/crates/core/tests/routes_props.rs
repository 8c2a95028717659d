use hetroute::game::{DelayFunction, Game, Network, Population};
use hetroute::routes::{enumerate_routes, DEFAULT_ROUTE_CAP};
use hetroute::Error;
use proptest::prelude::*;

fn game_on(nodes: usize, links: &[(usize, usize)], from: usize, to: usize) -> Game<f64> {
    let names: Vec<String> = (0..nodes).map(|k| format!("n{k}")).collect();
    let ids: Vec<(String, String, String)> =
        links.iter().enumerate().map(|(k, &(a, b))| (format!("e{k}"), names[a].clone(), names[b].clone())).collect();
    let refs: Vec<(&str, &str, &str)> = ids.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let net = Network::new(&name_refs, &refs).unwrap();
    let pop = Population {
        id: "p".into(),
        origin: from,
        destination: to,
        throughput: 1.0,
        delays: vec![DelayFunction::constant(1.0); links.len()],
    };
    Game::new(net, vec![pop]).unwrap()
}

/// Exhaustive search over link sequences with a visited-node bitmask.
fn brute_force(nodes: usize, links: &[(usize, usize)], from: usize, to: usize) -> Vec<Vec<usize>> {
    fn go(at: usize, to: usize, links: &[(usize, usize)], seen: u32, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if at == to {
            out.push(path.clone());
            return;
        }
        for (k, &(a, b)) in links.iter().enumerate() {
            if a == at && seen & (1 << b) == 0 {
                path.push(k);
                go(b, to, links, seen | (1 << b), path, out);
                path.pop();
            }
        }
    }
    assert!(nodes <= 32);
    let mut out = Vec::new();
    go(from, to, links, 1 << from, &mut Vec::new(), &mut out);
    out.sort();
    out
}

/// Path count in a DAG whose links all point from lower to higher node index.
fn dag_count(nodes: usize, links: &[(usize, usize)], from: usize, to: usize) -> u64 {
    let mut count = vec![0u64; nodes];
    count[to] = 1;
    for v in (0..nodes).rev() {
        if v != to {
            count[v] = links.iter().filter(|&&(a, _)| a == v).map(|&(_, b)| count[b]).sum();
        }
    }
    count[from]
}

fn arb_links(max_nodes: usize, dag: bool) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (3..=max_nodes).prop_flat_map(move |n| {
        let edge = (0..n, 0..n).prop_filter("no self loops", |(a, b)| a != b);
        let links = prop::collection::vec(edge, 1..=3 * n).prop_map(move |v| {
            if dag {
                v.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect()
            } else {
                v
            }
        });
        (Just(n), links)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dag_route_count_matches_dynamic_programming((n, links) in arb_links(8, true)) {
        let expected = dag_count(n, &links, 0, n - 1);
        let game = game_on(n, &links, 0, n - 1);
        match enumerate_routes(&game, DEFAULT_ROUTE_CAP) {
            Ok(r) => prop_assert_eq!(r.num_routes(0) as u64, expected),
            Err(Error::Validation(_)) => prop_assert_eq!(expected, 0),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn routes_match_exhaustive_search((n, links) in arb_links(8, false)) {
        let expected = brute_force(n, &links, 0, n - 1);
        let game = game_on(n, &links, 0, n - 1);
        match enumerate_routes(&game, DEFAULT_ROUTE_CAP) {
            Ok(r) => {
                prop_assert_eq!(r.routes(0), expected.as_slice());
                // Every route is simple and ends at the destination.
                for route in r.routes(0) {
                    let mut nodes = vec![0];
                    for &e in route {
                        prop_assert_eq!(links[e].0, *nodes.last().unwrap());
                        nodes.push(links[e].1);
                    }
                    prop_assert_eq!(*nodes.last().unwrap(), n - 1);
                    let mut sorted = nodes.clone();
                    sorted.sort();
                    sorted.dedup();
                    prop_assert_eq!(sorted.len(), nodes.len());
                }
            }
            Err(Error::Validation(_)) => prop_assert!(expected.is_empty()),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn corridors_multiply(widths in prop::collection::vec(1usize..=4, 1..=6)) {
        let mut links = Vec::new();
        for (stage, &w) in widths.iter().enumerate() {
            links.extend(std::iter::repeat_n((stage, stage + 1), w));
        }
        let n = widths.len() + 1;
        let r = enumerate_routes(&game_on(n, &links, 0, n - 1), DEFAULT_ROUTE_CAP).unwrap();
        prop_assert_eq!(r.num_routes(0), widths.iter().product::<usize>());
    }
}

#[test]
fn two_link_corridors_give_powers_of_two() {
    for k in 1..=7 {
        let links: Vec<(usize, usize)> = (0..k).flat_map(|s| [(s, s + 1), (s, s + 1)]).collect();
        let r = enumerate_routes(&game_on(k + 1, &links, 0, k), DEFAULT_ROUTE_CAP).unwrap();
        assert_eq!(r.num_routes(0), 1 << k);
    }
}

#[test]
fn route_cap_is_enforced() {
    let links: Vec<(usize, usize)> = (0..7).flat_map(|s| [(s, s + 1), (s, s + 1)]).collect();
    let game = game_on(8, &links, 0, 7);
    assert!(matches!(enumerate_routes(&game, 100), Err(Error::RouteCapExceeded { cap: 100, .. })));
}
