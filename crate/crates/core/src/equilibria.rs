//! Wardrop and strict equilibria, and fixed points of the logit map.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{costs_at, logit_slice, NoiseLevel};
use crate::error::{Error, Result};
use crate::flow::{project_slice, RouteFlow};
use crate::game::Game;
use crate::routes::RouteSet;
use crate::sampling::{dirichlet_flows, vertex_profiles, vertex_profiles_capped, VERTEX_CAP};
use crate::scalar::{l1_distance, Scalar};
use crate::stability::{classify_unchecked, jacobian_z, tangent_indices, tangent_jacobian, Stability};

pub const WARDROP_TOL: f64 = 1e-8;
/// Routes carrying more than this fraction of `v_p` count as used.
pub const SUPPORT_REL: f64 = 1e-10;
pub const MERGE_RADIUS: f64 = 1e-6;
const STALL_WINDOW: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationWardrop {
    pub min_cost: f64,
    /// `max (c_r − min_q c_q)` over used routes `r`; zero when nothing is used.
    pub gap: f64,
    /// Used route attaining a positive gap.
    pub worst_route: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WardropReport {
    pub is_equilibrium: bool,
    pub populations: Vec<PopulationWardrop>,
    pub tol: f64,
    pub support_rel: f64,
}

impl WardropReport {
    pub fn gap(&self) -> f64 {
        self.populations.iter().map(|p| p.gap).fold(0.0, f64::max)
    }
}

pub fn check_wardrop<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], tol: f64) -> WardropReport {
    let costs = costs_at(game, routes, z);
    let populations: Vec<PopulationWardrop> = game
        .populations()
        .iter()
        .enumerate()
        .map(|(p, pop)| {
            let b = routes.block(p);
            let c: Vec<f64> = costs[b.clone()].iter().map(|x| x.f64()).collect();
            let min_cost = c.iter().copied().fold(f64::INFINITY, f64::min);
            let support = SUPPORT_REL * pop.throughput.f64();
            let (worst_route, gap) = z[b]
                .iter()
                .zip(&c)
                .enumerate()
                .filter(|(_, (x, _))| x.f64() > support)
                .map(|(r, (_, &cr))| (Some(r), cr - min_cost))
                .fold((None, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            PopulationWardrop { min_cost, gap, worst_route }
        })
        .collect();
    WardropReport {
        is_equilibrium: populations.iter().all(|p| p.gap <= tol),
        populations,
        tol,
        support_rel: SUPPORT_REL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrictReport {
    pub strict: bool,
    /// Route carrying population `p`, when it is on a single route.
    pub routes: Vec<Option<usize>>,
    /// `min_{s≠r} (c_s − c_r)`; infinite when `r` has no competitor.
    pub margins: Vec<Option<f64>>,
}

pub fn check_strict<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], tol: f64) -> StrictReport {
    let costs = costs_at(game, routes, z);
    let mut out = StrictReport { strict: true, routes: Vec::new(), margins: Vec::new() };
    for (p, pop) in game.populations().iter().enumerate() {
        let b = routes.block(p);
        let zp = &z[b.clone()];
        let support = SUPPORT_REL * pop.throughput.f64();
        let used: Vec<usize> = (0..zp.len()).filter(|&i| zp[i].f64() > support).collect();
        let route = match used.as_slice() {
            [r] => Some(*r),
            [] if zp.len() == 1 => Some(0),
            _ => None,
        };
        let margin = route.map(|r| {
            (0..zp.len())
                .filter(|&s| s != r)
                .map(|s| (costs[b.start + s] - costs[b.start + r]).f64())
                .fold(f64::INFINITY, f64::min)
        });
        out.strict &= margin.is_some_and(|m| m > tol);
        out.routes.push(route);
        out.margins.push(margin);
    }
    out
}

/// Every vertex profile that passes [`check_strict`].
pub fn enumerate_strict_candidates<T: Scalar>(game: &Game<T>, routes: &RouteSet, tol: f64) -> Result<Vec<RouteFlow<T>>> {
    Ok(vertex_profiles(game, routes, VERTEX_CAP)?
        .into_iter()
        .filter(|z| check_strict(game, routes, z, tol).strict)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug)]
pub struct FixedPointRecord<T = f64> {
    pub eta: f64,
    pub z: RouteFlow<T>,
    pub residual: f64,
    /// Spectrum of `J_{G,z} − I`, one entry per route coordinate.
    pub eigenvalues: Vec<Eigenvalue>,
    pub stability: Stability,
    pub wardrop_gap: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Start with Newton from `z0` before any Picard sweep.
    pub newton_first: bool,
    pub max_newton: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { damping: 0.5, max_iter: 100_000, tol: 1e-12, newton_first: false, max_newton: 60 }
    }
}

fn residual_of<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], eta: T) -> Result<(T, Vec<T>)> {
    let g = logit_slice(game, routes, z, eta)?;
    let r = g.iter().zip(z).map(|(a, b)| (*a - *b).abs()).sum();
    Ok((r, g))
}

/// Newton on `G(z) − z` in tangent coordinates with residual backtracking.
/// Returns the best point reached and its residual.
fn newton<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    z0: &[T],
    opts: &FixedPointOptions,
) -> Result<(Vec<T>, T)> {
    let idx = tangent_indices(routes);
    let mut z = z0.to_vec();
    let (mut r, mut g) = residual_of(game, routes, &z, eta.get())?;
    for _ in 0..opts.max_newton {
        if r.f64() <= opts.tol || idx.is_empty() {
            break;
        }
        let jac = jacobian_z(game, routes, &z, eta)?;
        let m = tangent_jacobian(routes, &jac.matrix);
        let rhs: Vec<T> = idx.iter().map(|&k| z[k] - g[k]).collect();
        let dt = m.solve(&rhs)?;
        let mut dir = vec![T::zero(); z.len()];
        for (&k, &d) in idx.iter().zip(&dt) {
            dir[k] = d;
            let last = routes.block(routes.population_of(k)).end - 1;
            dir[last] = dir[last] - d;
        }
        let mut lambda = T::one();
        let mut accepted = false;
        while lambda.f64() > 1e-12 {
            let mut trial: Vec<T> = z.iter().zip(&dir).map(|(&a, &d)| a + lambda * d).collect();
            project_slice(&mut trial, game, routes);
            if let Ok((rt, gt)) = residual_of(game, routes, &trial, eta.get()) {
                if rt < r {
                    z = trial;
                    r = rt;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            lambda = lambda / T::of(2.0);
        }
        if !accepted {
            break;
        }
    }
    Ok((z, r))
}

/// Damped Picard iteration with Newton polishing.
///
/// Newton is attempted once the Picard residual falls below successive
/// thresholds, when the residual grows tenfold above its best value (the
/// iteration is leaving a saddle), when the best residual stalls, and at the
/// iteration cap.
pub fn find_fixed_point<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    z0: &[T],
    opts: &FixedPointOptions,
) -> Result<FixedPointRecord<T>> {
    if z0.len() != routes.dim() {
        return Err(Error::Dimension { expected: routes.dim(), got: z0.len() });
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Validation(format!("damping {} outside (0, 1]", opts.damping)));
    }
    let e = eta.get();
    let tol = T::of(opts.tol);
    let finish = |z: Vec<T>| finish_record(game, routes, eta, z, opts.tol);
    let try_newton = |z: &[T]| -> Option<Vec<T>> {
        match newton(game, routes, eta, z, opts) {
            Ok((zn, rn)) if rn <= tol => Some(zn),
            _ => None,
        }
    };

    let mut z = z0.to_vec();
    project_slice(&mut z, game, routes);
    if opts.newton_first {
        if let Some(zn) = try_newton(&z) {
            return finish(zn);
        }
    }
    let alpha = T::of(opts.damping);
    let mut best = (T::infinity(), z.clone());
    let mut next_trigger = 1e-6;
    let mut escaped = false;
    let mut last_gain = 0;
    let mut window = STALL_WINDOW;
    for it in 0..opts.max_iter {
        let (r, g) = residual_of(game, routes, &z, e)?;
        if r <= tol {
            return finish(z);
        }
        if r < best.0 {
            if r < T::of(0.9) * best.0 {
                last_gain = it;
            }
            best = (r, z.clone());
        }
        if it - last_gain > window {
            // Picard is oscillating or creeping; hand the best point to Newton.
            if let Some(zn) = try_newton(&best.1) {
                return finish(zn);
            }
            last_gain = it;
            window *= 2;
        } else if r.f64() < next_trigger {
            next_trigger = r.f64() * 1e-2;
            if let Some(zn) = try_newton(&z) {
                return finish(zn);
            }
        } else if !escaped && best.0.f64() < 1e-3 && r > T::of(10.0) * best.0 {
            escaped = true;
            if let Some(zn) = try_newton(&best.1) {
                return finish(zn);
            }
        }
        for (a, b) in z.iter_mut().zip(&g) {
            *a = (T::one() - alpha) * *a + alpha * *b;
        }
        project_slice(&mut z, game, routes);
    }
    if let Some(zn) = try_newton(&best.1) {
        return finish(zn);
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: best.0.f64() })
}

fn finish_record<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    mut z: Vec<T>,
    tol: f64,
) -> Result<FixedPointRecord<T>> {
    // Newton iterates may sit a rounding error off the simplex.
    project_slice(&mut z, game, routes);
    let (_, g) = residual_of(game, routes, &z, eta.get())?;
    for (a, b) in z.iter_mut().zip(&g) {
        if *a <= T::zero() {
            *a = *b;
        }
    }
    let (r, _) = residual_of(game, routes, &z, eta.get())?;
    if r.f64() > tol {
        return Err(Error::NoConvergence { iterations: 0, residual: r.f64() });
    }
    let cls = classify_unchecked(game, routes, &z, eta)?;
    let wardrop_gap = check_wardrop(game, routes, &z, WARDROP_TOL).gap();
    Ok(FixedPointRecord {
        eta: eta.get().f64(),
        residual: r.f64(),
        eigenvalues: cls.eigenvalues.iter().map(|&(re, im)| Eigenvalue { re, im }).collect(),
        stability: cls.stability,
        wardrop_gap,
        z: RouteFlow::from_vec_unchecked(z),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FailedStart {
    pub start: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct FixedPointSet<T = f64> {
    pub records: Vec<FixedPointRecord<T>>,
    pub failures: Vec<FailedStart>,
    pub starts: usize,
}

/// Start points used by [`find_all_fixed_points`]: vertex profiles (when at
/// most 1024), `n_starts` Dirichlet points and the barycenter.
pub fn multistart_points<T: Scalar>(game: &Game<T>, routes: &RouteSet, n_starts: usize, seed: u64) -> Vec<RouteFlow<T>> {
    let mut starts = vertex_profiles_capped(game, routes, VERTEX_CAP);
    starts.extend(dirichlet_flows(game, routes, n_starts, seed));
    starts.push(RouteFlow::uniform(game, routes));
    starts
}

pub fn find_all_fixed_points<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    n_starts: usize,
    seed: u64,
) -> Result<FixedPointSet<T>> {
    if n_starts == 0 {
        return Err(Error::Validation("at least one random start is required".into()));
    }
    let starts = multistart_points(game, routes, n_starts, seed);
    solve_from_starts(game, routes, eta, &starts, &FixedPointOptions::default())
}

pub fn solve_from_starts<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    starts: &[RouteFlow<T>],
    opts: &FixedPointOptions,
) -> Result<FixedPointSet<T>> {
    let solved: Vec<Result<FixedPointRecord<T>>> =
        starts.par_iter().map(|z0| find_fixed_point(game, routes, eta, z0, opts)).collect();
    let mut records: Vec<FixedPointRecord<T>> = Vec::new();
    let mut failures = Vec::new();
    for (k, res) in solved.into_iter().enumerate() {
        match res {
            Ok(rec) => {
                match records.iter_mut().find(|q| l1_distance(&q.z, &rec.z).f64() <= MERGE_RADIUS) {
                    Some(q) if rec.residual < q.residual => *q = rec,
                    Some(_) => {}
                    None => records.push(rec),
                }
            }
            Err(Error::NoConvergence { residual, .. }) => failures.push(FailedStart { start: k, residual }),
            Err(e) => return Err(e),
        }
    }
    sort_records(&mut records);
    Ok(FixedPointSet { records, failures, starts: starts.len() })
}

/// Lexicographic order on the flow vector.
pub fn sort_records<T: Scalar>(records: &mut [FixedPointRecord<T>]) {
    records.sort_by(|a, b| {
        a.z.iter()
            .zip(b.z.iter())
            .map(|(x, y)| x.f64().total_cmp(&y.f64()))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}
