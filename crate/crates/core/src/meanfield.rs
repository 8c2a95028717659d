//! Finite-population noisy best response, whose mean-field limit is the logit dynamics.
//!
//! Every agent carries a unit-rate Poisson clock. When it rings the agent
//! redraws its route from the logit distribution at the current empirical
//! flow `z^p_r = v_p n^p_r / N_p`. Simulation is exact (event driven).

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{logit_choice, NoiseLevel, Trajectory};
use crate::error::{Error, Result};
use crate::flow::RouteFlow;
use crate::game::Game;
use crate::routes::RouteSet;
use crate::sampling::rng;
use crate::scalar::{l1_distance, Scalar};

/// Route counts per population.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentState {
    pub counts: Vec<Vec<u64>>,
    pub agents: Vec<u64>,
}

impl AgentState {
    /// Largest-remainder rounding of `N_p z^p / v_p`, so that counts sum to `N_p` exactly.
    pub fn from_flow<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], agents: &[u64]) -> Result<Self> {
        if agents.len() != game.num_populations() {
            return Err(Error::Dimension { expected: game.num_populations(), got: agents.len() });
        }
        if let Some(p) = agents.iter().position(|&n| n == 0) {
            return Err(Error::Validation(format!("population {} needs at least one agent", game.populations()[p].id)));
        }
        let mut counts = Vec::with_capacity(agents.len());
        for (p, pop) in game.populations().iter().enumerate() {
            let n = agents[p];
            let v = pop.throughput.f64();
            let zp = &z[routes.block(p)];
            let quota: Vec<f64> = zp
                .iter()
                .map(|x| if v > 0.0 { x.f64() / v * n as f64 } else { n as f64 / zp.len() as f64 })
                .collect();
            let mut c: Vec<u64> = quota.iter().map(|q| q.max(0.0).floor() as u64).collect();
            let mut left = n.saturating_sub(c.iter().sum());
            let mut order: Vec<usize> = (0..c.len()).collect();
            order.sort_by(|&a, &b| (quota[b] - quota[b].floor()).total_cmp(&(quota[a] - quota[a].floor())).then(a.cmp(&b)));
            for &i in order.iter().cycle() {
                if left == 0 {
                    break;
                }
                c[i] += 1;
                left -= 1;
            }
            // Overshoot is only possible from rounding noise in `z`.
            while c.iter().sum::<u64>() > n {
                let i = (0..c.len()).max_by_key(|&i| c[i]).unwrap();
                c[i] -= 1;
            }
            counts.push(c);
        }
        Ok(AgentState { counts, agents: agents.to_vec() })
    }

    pub fn flow<T: Scalar>(&self, game: &Game<T>) -> RouteFlow<T> {
        let mut z = Vec::new();
        for (p, pop) in game.populations().iter().enumerate() {
            let n = T::of(self.agents[p] as f64);
            z.extend(self.counts[p].iter().map(|&c| pop.throughput * T::of(c as f64) / n));
        }
        RouteFlow::from_vec_unchecked(z)
    }
}

#[derive(Clone, Debug)]
pub struct AgentTrajectory<T = f64> {
    pub eta: f64,
    pub agents: Vec<u64>,
    pub seed: u64,
    pub events: u64,
    pub times: Vec<f64>,
    pub states: Vec<RouteFlow<T>>,
}

/// Runs the agent chain on `[0, horizon]` and samples it every `dt`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_agents<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    agents: &[u64],
    z0: &[T],
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<AgentTrajectory<T>> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Precondition("horizon and output step must be positive".into()));
    }
    let mut state = AgentState::from_flow(game, routes, z0, agents)?;
    let mut r = rng(seed);
    let total: u64 = agents.iter().sum();
    let rate = total as f64;

    // Link flows kept incrementally; one agent of population p carries v_p / N_p.
    let unit: Vec<T> = game
        .populations()
        .iter()
        .zip(agents)
        .map(|(pop, &n)| pop.throughput / T::of(n as f64))
        .collect();
    let mut f = vec![T::zero(); routes.num_links()];
    for p in 0..game.num_populations() {
        for (ri, route) in routes.routes(p).iter().enumerate() {
            let w = unit[p] * T::of(state.counts[p][ri] as f64);
            for &e in route {
                f[e] = f[e] + w;
            }
        }
    }

    let samples = (horizon / dt + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(samples + 1);
    let mut states = Vec::with_capacity(samples + 1);
    let mut t = 0.0;
    let mut events = 0u64;
    let mut probs = Vec::new();
    let mut costs = Vec::new();
    for k in 0..=samples {
        let t_out = k as f64 * dt;
        loop {
            let wait = -(1.0 - r.random::<f64>()).ln() / rate;
            if t + wait > t_out {
                // Memorylessness: the next event time can be redrawn after sampling.
                t = t_out;
                break;
            }
            t += wait;
            events += 1;
            // Uniform agent: population by head count, then route by occupancy.
            let mut a = r.random_range(0..total);
            let p = agents.iter().position(|&n| {
                if a < n {
                    true
                } else {
                    a -= n;
                    false
                }
            });
            let p = p.expect("agent index within total");
            let from = state.counts[p]
                .iter()
                .position(|&c| {
                    if a < c {
                        true
                    } else {
                        a -= c;
                        false
                    }
                })
                .expect("agent index within population");

            let pop = &game.populations()[p];
            costs.clear();
            costs.extend(routes.routes(p).iter().map(|route| route.iter().map(|&e| pop.delays[e].eval(f[e])).sum::<T>()));
            probs.resize(costs.len(), T::zero());
            logit_choice(&costs, T::one(), eta.get(), &mut probs)?;
            let u = T::of(r.random::<f64>());
            let mut acc = T::zero();
            let mut to = probs.len() - 1;
            for (i, &q) in probs.iter().enumerate() {
                acc = acc + q;
                if u < acc {
                    to = i;
                    break;
                }
            }
            if to != from {
                state.counts[p][from] -= 1;
                state.counts[p][to] += 1;
                for &e in &routes.routes(p)[from] {
                    f[e] = f[e] - unit[p];
                }
                for &e in &routes.routes(p)[to] {
                    f[e] = f[e] + unit[p];
                }
            }
        }
        times.push(t_out);
        states.push(state.flow(game));
    }
    Ok(AgentTrajectory { eta: eta.get().f64(), agents: agents.to_vec(), seed, events, times, states })
}

#[derive(Clone, Debug, Serialize)]
pub struct OdeComparison {
    pub sup_distance: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

/// `sup_t ‖z_N(t) − z(t)‖₁` over the common output grid.
pub fn compare_to_ode<T: Scalar>(times: &[f64], states: &[RouteFlow<T>], ode: &Trajectory<T>) -> Result<OdeComparison> {
    if times.len() != ode.times.len() || times.iter().zip(&ode.times).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0)) {
        return Err(Error::Precondition(format!(
            "time grids differ ({} vs {} samples)",
            times.len(),
            ode.times.len()
        )));
    }
    let distances: Vec<f64> = states.iter().zip(&ode.states).map(|(a, b)| l1_distance(a, b).f64()).collect();
    Ok(OdeComparison {
        sup_distance: distances.iter().copied().fold(0.0, f64::max),
        times: times.to_vec(),
        distances,
    })
}

/// Sup-distances of `seeds` independent agent runs against one ODE trajectory.
#[allow(clippy::too_many_arguments)]
pub fn sup_distances<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    agents: &[u64],
    z0: &[T],
    ode: &Trajectory<T>,
    dt: f64,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    let horizon = *ode.times.last().unwrap();
    seeds
        .par_iter()
        .map(|&s| {
            let run = simulate_agents(game, routes, eta, agents, z0, horizon, dt, s)?;
            Ok(compare_to_ode(&run.times, &run.states, ode)?.sup_distance)
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::dynamics::{integrate, IntegrateOptions};
    use crate::game::{DelayFunction, Network, Population};
    use crate::routes::enumerate_routes;

    fn eta(x: f64) -> NoiseLevel<f64> {
        NoiseLevel::new(x).unwrap()
    }

    fn two_routes(a: f64, b: f64) -> (Game<f64>, RouteSet) {
        let net = Network::new(&["o", "d"], &[("a", "o", "d"), ("b", "o", "d")]).unwrap();
        let g = Game::new(
            net,
            vec![Population {
                id: "p".into(),
                origin: 0,
                destination: 1,
                throughput: 1.0,
                delays: vec![DelayFunction::constant(a), DelayFunction::constant(b)],
            }],
        )
        .unwrap();
        let r = enumerate_routes(&g, 10).unwrap();
        (g, r)
    }

    #[test]
    fn largest_remainder_rounding() {
        let (g, r) = bundled::three_pop_with_routes();
        let s = AgentState::from_flow(&g, &r, &RouteFlow::uniform(&g, &r), &[10, 7, 3]).unwrap();
        for (c, n) in s.counts.iter().zip([10u64, 7, 3]) {
            assert_eq!(c.iter().sum::<u64>(), n);
        }
        // 10/4 = 2.5 each: two routes get the extra agent, lowest index first.
        assert_eq!(s.counts[0], vec![3, 3, 2, 2]);
        assert!(AgentState::from_flow(&g, &r, &RouteFlow::uniform(&g, &r), &[1, 0, 1]).is_err());
        let z = bundled::three_pop_equilibrium(3);
        let s = AgentState::from_flow(&g, &r, &z, &[5, 21, 21]).unwrap();
        assert_eq!(s.counts[1], vec![10, 0, 11, 0]);
        assert_eq!(s.counts[0], vec![3, 0, 0, 2]);
    }

    #[test]
    fn same_seed_same_path() {
        let (g, r) = bundled::three_pop_with_routes();
        let z0 = RouteFlow::uniform(&g, &r);
        let a = simulate_agents(&g, &r, eta(0.5), &[50, 50, 50], &z0, 2.0, 0.1, 11).unwrap();
        let b = simulate_agents(&g, &r, eta(0.5), &[50, 50, 50], &z0, 2.0, 0.1, 11).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.events, b.events);
        assert_eq!(a.times.len(), 21);
        let c = simulate_agents(&g, &r, eta(0.5), &[50, 50, 50], &z0, 2.0, 0.1, 12).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn single_agent_two_equal_routes() {
        let (g, r) = two_routes(3.0, 3.0);
        let run = simulate_agents(&g, &r, eta(1.0), &[1], &[1.0, 0.0], 10_000.0, 1.0, 5).unwrap();
        let on_first = run.states.iter().filter(|z| z[0] == 1.0).count() as f64;
        let n = run.states.len() as f64;
        // Samples one time unit apart are nearly independent for this chain (correlation e^{-1}).
        let sigma = (0.25 / n).sqrt() * ((1.0 + (-1.0f64).exp()) / (1.0 - (-1.0f64).exp())).sqrt();
        assert!((on_first / n - 0.5).abs() < 3.0 * sigma, "{}", on_first / n);
    }

    #[test]
    fn counts_track_logit_probabilities() {
        let (g, r) = two_routes(1.0, 2.0);
        let run = simulate_agents(&g, &r, eta(1.0), &[1], &[1.0, 0.0], 10_000.0, 1.0, 9).unwrap();
        let p = 1.0 / (1.0 + (-1.0f64).exp());
        let freq = run.states.iter().filter(|z| z[0] == 1.0).count() as f64 / run.states.len() as f64;
        let n = run.states.len() as f64;
        let sigma = (p * (1.0 - p) / n).sqrt() * ((1.0 + (-1.0f64).exp()) / (1.0 - (-1.0f64).exp())).sqrt();
        assert!((freq - p).abs() < 3.0 * sigma, "{freq} vs {p}");
    }

    #[test]
    fn ode_against_itself_is_zero() {
        let (g, r) = bundled::three_pop_with_routes();
        let opts = IntegrateOptions { stationarity_tol: None, ..Default::default() };
        let ode = integrate(&g, &r, &RouteFlow::uniform(&g, &r), eta(0.5), 2.0, &opts).unwrap();
        let cmp = compare_to_ode(&ode.times, &ode.states, &ode).unwrap();
        assert_eq!(cmp.sup_distance, 0.0);
        assert!(compare_to_ode(&ode.times[1..], &ode.states[1..], &ode).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
