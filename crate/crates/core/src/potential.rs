//! Potential-game structure: the symmetry test on delay derivatives, the convex
//! potential of toll-sensitivity games, its entropy-perturbed version and
//! Lyapunov monitoring along trajectories.

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::flow::{link_flow_into, RouteFlow};
use crate::game::{DelayFunction, Game, Network, Population};
use crate::routes::RouteSet;
use crate::sampling::dirichlet_flows;
use crate::scalar::Scalar;

pub const SYMMETRY_TOL: f64 = 1e-9;
pub const LYAPUNOV_SLACK: f64 = 1e-7;
pub const DEFAULT_SYMMETRY_SAMPLES: usize = 64;
pub const DEFAULT_SYMMETRY_SEED: u64 = 0x5eed;

/// Population-independent delays plus constant tolls weighted by sensitivity.
#[derive(Clone, Debug)]
pub struct TollGameSpec<T = f64> {
    pub base_delays: Vec<DelayFunction<T>>,
    pub tolls: Vec<T>,
    pub sensitivities: Vec<T>,
}

impl<T: Scalar> TollGameSpec<T> {
    pub fn new(base_delays: Vec<DelayFunction<T>>, tolls: Vec<T>, sensitivities: Vec<T>) -> Result<Self> {
        if tolls.len() != base_delays.len() {
            return Err(Error::Dimension { expected: base_delays.len(), got: tolls.len() });
        }
        if let Some(w) = tolls.iter().find(|w| !w.is_finite() || **w < T::zero()) {
            return Err(Error::Validation(format!("toll {w} is negative")));
        }
        if let Some(a) = sensitivities.iter().find(|a| !a.is_finite() || **a < T::zero()) {
            return Err(Error::Validation(format!("sensitivity {a} is negative")));
        }
        Ok(TollGameSpec { base_delays, tolls, sensitivities })
    }

    /// Composed delay `τ_e(f) + α_p ω_e`.
    pub fn composed_delay(&self, p: usize, e: usize) -> DelayFunction<T> {
        let k = self.sensitivities[p] * self.tolls[e];
        match &self.base_delays[e] {
            DelayFunction::Constant(a) => DelayFunction::Constant(*a + k),
            DelayFunction::Affine { a, b } => DelayFunction::Affine { a: *a + k, b: *b },
            DelayFunction::Linear(b) => DelayFunction::Affine { a: k, b: *b },
            DelayFunction::Polynomial(c) => {
                let mut c = c.clone();
                c[0] = c[0] + k;
                DelayFunction::Polynomial(c)
            }
        }
    }

    /// Expands into a game; `populations` lists `(id, origin, destination, throughput)`.
    pub fn expand(&self, network: Network, populations: Vec<(String, usize, usize, T)>) -> Result<Game<T>> {
        if populations.len() != self.sensitivities.len() {
            return Err(Error::Dimension { expected: self.sensitivities.len(), got: populations.len() });
        }
        let pops = populations
            .into_iter()
            .enumerate()
            .map(|(p, (id, origin, destination, throughput))| Population {
                id,
                origin,
                destination,
                throughput,
                delays: (0..self.base_delays.len()).map(|e| self.composed_delay(p, e)).collect(),
            })
            .collect();
        Game::new(network, pops)
    }

    /// Beckmann term `Σ_e ∫ τ_e` and toll term `Σ_p α_p Σ_e ω_e (A^p z^p)_e` of `V`.
    pub fn potential_parts(&self, routes: &RouteSet, z: &[T]) -> (f64, f64) {
        let mut f = vec![T::zero(); routes.num_links()];
        link_flow_into(routes, z, &mut f);
        let beckmann: T = self.base_delays.iter().zip(&f).map(|(d, &fe)| d.integral(fe)).sum();
        let mut toll = T::zero();
        for (p, &alpha) in self.sensitivities.iter().enumerate() {
            for (r, &x) in z[routes.block(p)].iter().enumerate() {
                let w: T = routes.routes(p)[r].iter().map(|&e| self.tolls[e]).sum();
                toll = toll + alpha * w * x;
            }
        }
        (beckmann.f64(), toll.f64())
    }

    fn separable(&self) -> SeparablePotential<T> {
        SeparablePotential {
            base: self.base_delays.clone(),
            offsets: self
                .sensitivities
                .iter()
                .map(|&a| self.tolls.iter().map(|&w| a * w).collect())
                .collect(),
        }
    }
}

/// `V(z) = Σ_e ∫_0^{f_e} τ_e + Σ_p Σ_e κ^p_e (A^p z^p)_e`.
///
/// Toll games have `κ^p_e = α_p ω_e`; any game whose populations differ on each
/// link only by a constant fits the same form.
#[derive(Clone, Debug)]
pub struct SeparablePotential<T = f64> {
    base: Vec<DelayFunction<T>>,
    offsets: Vec<Vec<T>>,
}

impl<T: Scalar> SeparablePotential<T> {
    /// Decomposes a game, if every link's delays differ across populations by constants only.
    pub fn from_game(game: &Game<T>) -> Option<Self> {
        let pops = game.populations();
        let links = game.network().num_links();
        let mut base = Vec::with_capacity(links);
        let mut offsets = vec![vec![T::zero(); links]; pops.len()];
        for e in 0..links {
            let coeffs: Vec<Vec<T>> = pops.iter().map(|p| p.delays[e].coefficients()).collect();
            let deg = coeffs.iter().map(Vec::len).max().unwrap_or(1);
            let coef = |p: usize, k: usize| coeffs[p].get(k).copied().unwrap_or_else(T::zero);
            for k in 1..deg {
                let c0 = coef(0, k);
                if (0..pops.len()).any(|p| (coef(p, k) - c0).abs() > T::of(SYMMETRY_TOL) * c0.abs().max(T::one())) {
                    return None;
                }
            }
            let c_min = (0..pops.len()).map(|p| coef(p, 0)).fold(T::infinity(), T::min);
            let mut c = coeffs[0].clone();
            c.resize(deg, T::zero());
            c[0] = c_min;
            base.push(DelayFunction::Polynomial(c));
            for (p, off) in offsets.iter_mut().enumerate() {
                off[e] = coef(p, 0) - c_min;
            }
        }
        Some(SeparablePotential { base, offsets })
    }

    pub fn value(&self, routes: &RouteSet, z: &[T]) -> T {
        let mut f = vec![T::zero(); routes.num_links()];
        link_flow_into(routes, z, &mut f);
        let beckmann: T = self.base.iter().zip(&f).map(|(d, &fe)| d.integral(fe)).sum();
        let mut offset_term = T::zero();
        for (p, off) in self.offsets.iter().enumerate() {
            let b = routes.block(p);
            for (r, route) in routes.routes(p).iter().enumerate() {
                let zr = z[b.start + r];
                for &e in route {
                    offset_term = offset_term + off[e] * zr;
                }
            }
        }
        beckmann + offset_term
    }

    /// `∂V/∂z^p_r`, equal to the route cost of the decomposed game.
    pub fn gradient(&self, routes: &RouteSet, z: &[T]) -> Vec<T> {
        let mut f = vec![T::zero(); routes.num_links()];
        link_flow_into(routes, z, &mut f);
        let mut g = vec![T::zero(); z.len()];
        for (p, off) in self.offsets.iter().enumerate() {
            let b = routes.block(p);
            for (r, route) in routes.routes(p).iter().enumerate() {
                g[b.start + r] = route.iter().map(|&e| self.base[e].eval(f[e]) + off[e]).sum();
            }
        }
        g
    }
}

/// `V`, `V_η = V + η·H` and the entropy term `H = Σ_p Σ_i z^p_i log(z^p_i / v_p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PotentialValue {
    pub v: f64,
    pub v_eta: f64,
    pub entropy: f64,
}

/// Entropy term with `0 · log 0 = 0`; `v_p` is the block sum of `z`.
pub fn entropy_term<T: Scalar>(routes: &RouteSet, z: &[T]) -> T {
    let mut h = T::zero();
    for p in 0..routes.num_populations() {
        let block = &z[routes.block(p)];
        let v: T = block.iter().copied().sum();
        if v <= T::zero() {
            continue;
        }
        for &x in block {
            if x > T::zero() {
                h = h + x * (x / v).ln();
            }
        }
    }
    h
}

pub fn toll_potential<T: Scalar>(spec: &TollGameSpec<T>, routes: &RouteSet, z: &RouteFlow<T>) -> PotentialValue {
    let v = spec.separable().value(routes, z).f64();
    PotentialValue { v, v_eta: v, entropy: 0.0 }
}

/// Perturbed potential; `eta = 0` gives `V_η = V`.
pub fn perturbed_potential<T: Scalar>(
    spec: &TollGameSpec<T>,
    routes: &RouteSet,
    z: &RouteFlow<T>,
    eta: T,
) -> PotentialValue {
    perturbed_value(&spec.separable(), routes, z, eta)
}

fn perturbed_value<T: Scalar>(pot: &SeparablePotential<T>, routes: &RouteSet, z: &[T], eta: T) -> PotentialValue {
    let v = pot.value(routes, z);
    let h = entropy_term(routes, z);
    PotentialValue { v: v.f64(), v_eta: (v + eta * h).f64(), entropy: h.f64() }
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub symmetric: bool,
    pub worst_violation: f64,
    /// `(p, q, i, j)`: populations and their route indices attaining the worst violation.
    pub worst: Option<(usize, usize, usize, usize)>,
    pub samples: usize,
}

/// Checks `Σ_{e∈i∩j} (τ^p_e)' = Σ_{e∈i∩j} (τ^q_e)'` for all population and route pairs.
///
/// Routes without shared links compare two empty sums and always pass.
pub fn check_symmetry<T: Scalar>(game: &Game<T>, routes: &RouteSet, z_samples: &[RouteFlow<T>]) -> SymmetryReport {
    let pops = game.populations();
    let mut worst = 0.0f64;
    let mut at = None;
    let mut f = vec![T::zero(); routes.num_links()];
    for z in z_samples {
        link_flow_into(routes, z, &mut f);
        let deriv: Vec<Vec<T>> =
            pops.iter().map(|pop| pop.delays.iter().zip(&f).map(|(d, &fe)| d.derivative(fe)).collect()).collect();
        for p in 0..pops.len() {
            for q in p + 1..pops.len() {
                for i in 0..routes.num_routes(p) {
                    for j in 0..routes.num_routes(q) {
                        let (mut sp, mut sq) = (T::zero(), T::zero());
                        for e in 0..routes.num_links() {
                            if routes.uses(p, i, e) && routes.uses(q, j, e) {
                                sp = sp + deriv[p][e];
                                sq = sq + deriv[q][e];
                            }
                        }
                        let d = (sp - sq).abs().f64();
                        if d > worst {
                            worst = d;
                            at = Some((p, q, i, j));
                        }
                    }
                }
            }
        }
    }
    SymmetryReport { symmetric: worst <= SYMMETRY_TOL, worst_violation: worst, worst: at, samples: z_samples.len() }
}

/// [`check_symmetry`] at the default 64 Dirichlet samples.
pub fn check_symmetry_default<T: Scalar>(game: &Game<T>, routes: &RouteSet) -> SymmetryReport {
    let samples = dirichlet_flows(game, routes, DEFAULT_SYMMETRY_SAMPLES, DEFAULT_SYMMETRY_SEED);
    check_symmetry(game, routes, &samples)
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    pub non_increasing: bool,
    pub max_increase: f64,
    pub values: Vec<f64>,
}

/// Evaluates `V_η` along a trajectory of the logit dynamics of `game`.
///
/// Refuses games failing the symmetry check, and symmetric games whose delays
/// cannot be split into a shared part plus per-population constants.
pub fn lyapunov_monitor<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    trajectory: &Trajectory<T>,
    eta: T,
) -> Result<LyapunovReport> {
    let sym = check_symmetry_default(game, routes);
    if !sym.symmetric {
        return Err(Error::Precondition(format!(
            "game fails the symmetry condition (worst violation {:e})",
            sym.worst_violation
        )));
    }
    let pot = SeparablePotential::from_game(game).ok_or_else(|| {
        Error::Precondition("delays are not a shared function plus per-population constants".into())
    })?;
    let values: Vec<f64> = trajectory.states.iter().map(|z| perturbed_value(&pot, routes, z, eta).v_eta).collect();
    let max_increase = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let max_increase = if values.len() < 2 { 0.0 } else { max_increase };
    Ok(LyapunovReport { non_increasing: max_increase <= LYAPUNOV_SLACK, max_increase, values })
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { max_iter: 200_000, tol: 1e-15 }
    }
}

/// Multiplicative update `z_i ∝ z_i e^{−s g_i}` within each population, scaled to `v_p`.
fn mirror_step(routes: &RouteSet, v: &[f64], z: &[f64], g: &[f64], s: f64) -> Vec<f64> {
    let mut y = vec![0.0; z.len()];
    for p in 0..routes.num_populations() {
        let b = routes.block(p);
        let w: Vec<f64> = b.clone().map(|k| z[k].ln() - s * g[k]).collect();
        let wmax = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = w.iter().map(|x| (x - wmax).exp()).collect();
        let sum: f64 = e.iter().sum();
        for (k, ek) in b.zip(e) {
            y[k] = (v[p] * ek / sum).max(f64::MIN_POSITIVE);
        }
    }
    y
}

/// Minimizes `V_η` over the flow polytope by entropic mirror descent with
/// Armijo backtracking.
///
/// Iterates stay strictly positive, so the entropy term and its gradient are
/// finite everywhere along the path; the step grows after every accepted move.
pub fn minimize_perturbed_potential(
    game: &Game<f64>,
    routes: &RouteSet,
    eta: f64,
    opts: &MinimizeOptions,
) -> Result<RouteFlow<f64>> {
    let pot = SeparablePotential::from_game(game)
        .ok_or_else(|| Error::Precondition("game has no separable potential".into()))?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Precondition(format!("noise level {eta} must be positive and finite")));
    }
    let v: Vec<f64> = game.throughputs();
    let objective = |z: &[f64]| pot.value(routes, z) + eta * entropy_term(routes, z);
    let gradient = |z: &[f64]| {
        let mut g = pot.gradient(routes, z);
        for p in 0..routes.num_populations() {
            for k in routes.block(p) {
                g[k] += eta * ((z[k] / v[p]).ln() + 1.0);
            }
        }
        g
    };

    let mut z = RouteFlow::uniform(game, routes).into_vec();
    let mut fz = objective(&z);
    let mut step = 1.0 / eta;
    for _ in 0..opts.max_iter {
        let g = gradient(&z);
        let mut s = step;
        let (y, fy) = loop {
            let y = mirror_step(routes, &v, &z, &g, s);
            let decrease: f64 = z.iter().zip(&y).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
            let fy = objective(&y);
            if fy.is_finite() && fy <= fz - 1e-4 * decrease {
                break (y, fy);
            }
            s *= 0.5;
            if s < 1e-20 {
                // No representable descent left.
                return Ok(RouteFlow::from_vec_unchecked(z));
            }
        };
        let moved: f64 = y.iter().zip(&z).map(|(a, b)| (a - b).abs()).sum();
        step = (s * 2.0).min(1e6 / eta);
        z = y;
        fz = fy;
        if moved < opts.tol {
            break;
        }
    }
    Ok(RouteFlow::from_vec_unchecked(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::routes::{enumerate_routes, DEFAULT_ROUTE_CAP};

    fn two_link_toll() -> (TollGameSpec<f64>, RouteSet) {
        let spec = TollGameSpec::new(
            vec![DelayFunction::linear(1.0), DelayFunction::linear(1.0)],
            vec![1.0, 0.0],
            vec![1.0],
        )
        .unwrap();
        (spec, RouteSet::from_routes(2, vec![vec![vec![0], vec![1]]]))
    }

    #[test]
    fn two_link_toll_potential() {
        let (spec, routes) = two_link_toll();
        let z = RouteFlow::from_vec_unchecked(vec![0.5, 0.5]);
        let v = toll_potential(&spec, &routes, &z);
        assert!((v.v - 0.75).abs() < 1e-15);
        let pv = perturbed_potential(&spec, &routes, &z, 1.0);
        assert!((pv.v_eta - (0.75 + 0.5f64.ln())).abs() < 1e-15);
        assert!((pv.v_eta - 0.0569).abs() < 1e-4);
        assert_eq!(perturbed_potential(&spec, &routes, &z, 0.0).v_eta, v.v);
    }

    #[test]
    fn zero_flow_zero_potential() {
        let (spec, routes) = two_link_toll();
        let z = RouteFlow::from_vec_unchecked(vec![0.0, 0.0]);
        assert_eq!(toll_potential(&spec, &routes, &z).v, 0.0);
    }

    #[test]
    fn uniform_entropy_closed_form() {
        let routes = RouteSet::from_routes(3, vec![vec![vec![0], vec![1], vec![2]]]);
        let h = entropy_term(&routes, &[2.0 / 3.0; 3]);
        assert!((h - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert_eq!(entropy_term(&routes, &[2.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn zero_tolls_reduce_to_beckmann() {
        let (mut spec, routes) = two_link_toll();
        spec.tolls = vec![0.0, 0.0];
        let z = RouteFlow::from_vec_unchecked(vec![0.3, 0.7]);
        let v = toll_potential(&spec, &routes, &z).v;
        assert!((v - (0.09 / 2.0 + 0.49 / 2.0)).abs() < 1e-15);
        let (beckmann, toll) = spec.potential_parts(&routes, &z);
        assert_eq!(toll, 0.0);
        assert_eq!(beckmann, v);
    }

    #[test]
    fn potential_parts_add_up() {
        let (spec, routes) = two_link_toll();
        let z = [0.25, 0.75];
        let (beckmann, toll) = spec.potential_parts(&routes, &z);
        assert!((toll - 0.25).abs() < 1e-15);
        assert!((beckmann + toll - toll_potential(&spec, &routes, &RouteFlow::from_vec_unchecked(z.to_vec())).v).abs() < 1e-15);
    }

    #[test]
    fn three_pop_is_not_symmetric() {
        let (game, routes) = bundled::three_pop_with_routes();
        let rep = check_symmetry_default(&game, &routes);
        assert!(!rep.symmetric);
        // (τ_2)' is 20 for population 2 and 1 for population 1
        assert!(rep.worst_violation >= 19.0 - 1e-12);
        assert!(SeparablePotential::from_game(&game).is_none());
    }

    #[test]
    fn toll_game_is_symmetric() {
        let loaded = bundled::toll2();
        let routes = enumerate_routes(&loaded.game, DEFAULT_ROUTE_CAP).unwrap();
        assert!(check_symmetry_default(&loaded.game, &routes).symmetric);
    }

    #[test]
    fn od_only_heterogeneity_is_symmetric() {
        let net = Network::new(&["a", "b", "c"], &[("ab", "a", "b"), ("bc", "b", "c"), ("ac", "a", "c")]).unwrap();
        let delays = vec![DelayFunction::affine(1.0, 2.0), DelayFunction::Polynomial(vec![0.0, 1.0, 1.0]), DelayFunction::linear(3.0)];
        let pops = vec![
            Population { id: "1".into(), origin: 0, destination: 2, throughput: 1.0, delays: delays.clone() },
            Population { id: "2".into(), origin: 1, destination: 2, throughput: 0.5, delays },
        ];
        let game = Game::new(net, pops).unwrap();
        let routes = enumerate_routes(&game, DEFAULT_ROUTE_CAP).unwrap();
        assert!(check_symmetry_default(&game, &routes).symmetric);
    }
}
