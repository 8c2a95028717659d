//! Fixed-point branches of logit(η) followed from large to small noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::NoiseLevel;
use crate::equilibria::{
    check_wardrop, find_fixed_point, multistart_points, solve_from_starts, FixedPointOptions, FixedPointRecord,
    WardropReport, MERGE_RADIUS, WARDROP_TOL,
};
use crate::error::{Error, Result};
use crate::flow::{link_flow, project_slice, RouteFlow};
use crate::game::Game;
use crate::linalg::Matrix;
use crate::routes::RouteSet;
use crate::scalar::{l1_distance, Scalar};
use crate::stability::{jacobian_eta, jacobian_z, tangent_indices, tangent_jacobian, Stability};

/// Smallest noise level the sweep accepts.
pub const ETA_FLOOR: f64 = 0.005;
pub const DEFAULT_GRID_POINTS: usize = 60;
/// Residual accepted on a branch when Newton cannot reach the solver tolerance.
pub const BRANCH_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ContinuationOptions {
    /// Largest ℓ₁ move between consecutive points; defaults to `0.2 Σ v_p`.
    pub jump_cap: Option<f64>,
    /// Random interior starts per grid point for newborn detection.
    pub newborn_starts: usize,
    pub detect_newborns: bool,
    pub seed: u64,
    /// Bracket width at which event refinement stops.
    pub refine_width: f64,
    /// Size of the ± kicks along the critical eigenvector of unstable points.
    pub kick: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            jump_cap: None,
            newborn_starts: 8,
            detect_newborns: true,
            seed: 1,
            refine_width: 1e-3,
            kick: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Branch<T = f64> {
    pub id: usize,
    pub origin: String,
    /// Fixed points with strictly decreasing `η`.
    pub points: Vec<FixedPointRecord<T>>,
    pub terminated: Option<String>,
}

impl<T: Scalar> Branch<T> {
    pub fn last(&self) -> &FixedPointRecord<T> {
        self.points.last().expect("branches are never empty")
    }

    pub fn at(&self, eta: f64) -> Option<&FixedPointRecord<T>> {
        self.points.iter().find(|p| p.eta == eta)
    }
}

#[derive(Clone, Debug)]
pub struct Sweep<T = f64> {
    pub grid: Vec<f64>,
    pub branches: Vec<Branch<T>>,
    pub options: ContinuationOptions,
}

impl<T: Scalar> Sweep<T> {
    pub fn alive_at(&self, eta: f64) -> Vec<&Branch<T>> {
        self.branches.iter().filter(|b| b.at(eta).is_some()).collect()
    }
}

/// `n` log-spaced values from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, n: usize) -> Result<Vec<f64>> {
    if !(hi > lo && lo > 0.0 && hi.is_finite()) || n < 2 {
        return Err(Error::Validation(format!("bad grid: from {hi} down to {lo} with {n} points")));
    }
    let (a, b) = (hi.ln(), lo.ln());
    let mut g: Vec<f64> = (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect();
    g[0] = hi;
    g[n - 1] = lo;
    Ok(g)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation("empty η grid".into()));
    }
    if grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidNoise(grid.iter().copied().find(|e| !(*e > 0.0 && e.is_finite())).unwrap()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation("η grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Maps a tangent-coordinate vector back to route coordinates.
fn expand_tangent<T: Scalar>(routes: &RouteSet, idx: &[usize], x: &[T]) -> Vec<T> {
    let mut dir = vec![T::zero(); routes.dim()];
    for (&k, &d) in idx.iter().zip(x) {
        dir[k] = d;
        let last = routes.block(routes.population_of(k)).end - 1;
        dir[last] = dir[last] - d;
    }
    dir
}

/// First-order predictor `z − Δη (J_g)⁻¹ ∂G/∂η` solved in tangent coordinates.
fn predict<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], from: f64, to: f64) -> Option<Vec<T>> {
    let eta = NoiseLevel::new(T::of(from)).ok()?;
    let idx = tangent_indices(routes);
    let jac = jacobian_z(game, routes, z, eta).ok()?;
    let m = tangent_jacobian(routes, &jac.matrix);
    let ge = jacobian_eta(game, routes, z, eta).ok()?;
    let rhs: Vec<T> = idx.iter().map(|&k| -ge[k]).collect();
    let dz = expand_tangent(routes, &idx, &m.solve(&rhs).ok()?);
    let step = T::of(to - from);
    let mut out: Vec<T> = z.iter().zip(&dz).map(|(&a, &d)| a + step * d).collect();
    project_slice(&mut out, game, routes);
    out.iter().all(|x| x.is_finite()).then_some(out)
}

/// Unit ℓ₁ direction of the eigenvector for the leading tangent eigenvalue,
/// by inverse iteration.
fn critical_direction<T: Scalar>(routes: &RouteSet, jac_g: &Matrix<T>, shift: f64) -> Option<Vec<f64>> {
    let idx = tangent_indices(routes);
    if idx.is_empty() {
        return None;
    }
    let m = tangent_jacobian(routes, jac_g);
    let n = idx.len();
    let s = shift + 1e-9 * shift.abs().max(1.0);
    let a = Matrix::from_fn(n, n, |i, j| m[(i, j)].f64() - if i == j { s } else { 0.0 });
    let mut x = vec![1.0; n];
    for k in 0..n {
        x[k] += 0.01 * k as f64;
    }
    for _ in 0..4 {
        let y = a.solve(&x).ok()?;
        let norm: f64 = y.iter().map(|v| v.abs()).sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        x = y.into_iter().map(|v| v / norm).collect();
    }
    let d = expand_tangent(routes, &idx, &x);
    let norm: f64 = d.iter().map(|v| v.abs()).sum();
    (norm > 0.0).then(|| d.into_iter().map(|v| v / norm).collect())
}

/// `z ± kick·Σv·u` for the critical direction `u` of an unstable fixed point.
fn kick_seeds<T: Scalar>(game: &Game<T>, routes: &RouteSet, rec: &FixedPointRecord<T>, kick: f64) -> Vec<RouteFlow<T>> {
    if rec.stability == Stability::Stable {
        return Vec::new();
    }
    let Ok(eta) = NoiseLevel::new(T::of(rec.eta)) else { return Vec::new() };
    let Ok(jac) = jacobian_z(game, routes, &rec.z, eta) else { return Vec::new() };
    let shift = rec.eigenvalues.first().map_or(0.0, |e| e.re);
    let Some(u) = critical_direction(routes, &jac.matrix, shift) else { return Vec::new() };
    let scale = kick * game.total_throughput().f64().max(1.0);
    [1.0, -1.0]
        .iter()
        .map(|sign| {
            let mut z: Vec<T> = rec.z.iter().zip(&u).map(|(&a, &d)| a + T::of(sign * scale * d)).collect();
            project_slice(&mut z, game, routes);
            RouteFlow::from_vec_unchecked(z)
        })
        .collect()
}

/// Newton-first correction, accepting the branch tolerance when the solver's
/// own tolerance is out of reach.
fn correct<T: Scalar>(game: &Game<T>, routes: &RouteSet, eta: f64, z0: &[T]) -> Result<FixedPointRecord<T>> {
    let e = NoiseLevel::new(T::of(eta))?;
    let opts = FixedPointOptions { newton_first: true, max_iter: 20_000, ..Default::default() };
    let mut rec = find_fixed_point(game, routes, e, z0, &opts)
        .or_else(|_| find_fixed_point(game, routes, e, z0, &FixedPointOptions { tol: BRANCH_RESIDUAL_TOL, ..opts }))?;
    rec.eta = eta;
    Ok(rec)
}

/// Smallest relative η step tried before a branch is given up.
const MIN_REL_STEP: f64 = 1e-4;

/// Continues `prev` down to `eta`, halving the step (in log η) whenever the
/// corrector fails or jumps too far. Intermediate points are kept so that
/// consecutive points always respect the jump cap.
fn continue_segment<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    prev: &FixedPointRecord<T>,
    eta: f64,
    jump_cap: f64,
) -> (Vec<FixedPointRecord<T>>, Option<String>) {
    let mut out: Vec<FixedPointRecord<T>> = Vec::new();
    let mut target = eta;
    loop {
        let cur = out.last().unwrap_or(prev);
        if cur.eta <= eta {
            return (out, None);
        }
        match continue_point(game, routes, cur, target, jump_cap) {
            Ok(rec) => {
                out.push(rec);
                target = eta;
            }
            Err(why) => {
                if cur.eta / target - 1.0 < MIN_REL_STEP {
                    return (out, Some(why));
                }
                target = (cur.eta * target).sqrt();
            }
        }
    }
}

fn continue_point<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    prev: &FixedPointRecord<T>,
    eta: f64,
    jump_cap: f64,
) -> std::result::Result<FixedPointRecord<T>, String> {
    let mut tried = Vec::new();
    if let Some(zp) = predict(game, routes, &prev.z, prev.eta, eta) {
        tried.push(zp);
    }
    tried.push(prev.z.to_vec());
    let mut why = String::from("corrector diverged");
    for z0 in &tried {
        match correct(game, routes, eta, z0) {
            Ok(rec) => {
                let jump = l1_distance(&rec.z, &prev.z).f64();
                if jump <= jump_cap {
                    return Ok(rec);
                }
                why = format!("jump {jump:.3e} above cap {jump_cap:.3e}");
            }
            Err(e) => why = format!("corrector failed: {e}"),
        }
    }
    Err(format!("{why} at η = {eta}"))
}

fn is_new<T: Scalar>(z: &[T], known: &[&[T]]) -> bool {
    known.iter().all(|k| l1_distance(z, k).f64() > MERGE_RADIUS)
}

/// Predictor-corrector continuation over a decreasing grid.
///
/// Branches are seeded by multi-start at `grid[0]` unless `seeds` is given;
/// every later grid point is searched again for newborn branches.
pub fn sweep<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    grid: &[f64],
    seeds: Option<&[RouteFlow<T>]>,
    opts: &ContinuationOptions,
) -> Result<Sweep<T>> {
    validate_grid(grid)?;
    let jump_cap = opts.jump_cap.unwrap_or(0.2 * game.total_throughput().f64());
    let eta0 = NoiseLevel::new(T::of(grid[0]))?;
    let initial = match seeds {
        Some(s) => solve_from_starts(game, routes, eta0, s, &FixedPointOptions::default())?,
        None => {
            let starts = multistart_points(game, routes, opts.newborn_starts.max(1), opts.seed);
            solve_from_starts(game, routes, eta0, &starts, &FixedPointOptions::default())?
        }
    };
    if initial.records.is_empty() {
        return Err(Error::NoConvergence {
            iterations: FixedPointOptions::default().max_iter,
            residual: initial.failures.iter().map(|f| f.residual).fold(f64::INFINITY, f64::min),
        });
    }
    let mut branches: Vec<Branch<T>> = initial
        .records
        .into_iter()
        .enumerate()
        .map(|(id, rec)| Branch { id, origin: format!("seed at η = {}", grid[0]), points: vec![rec], terminated: None })
        .collect();

    for (k, &eta) in grid.iter().enumerate().skip(1) {
        let prev_eta = grid[k - 1];
        let live: Vec<usize> =
            (0..branches.len()).filter(|&b| branches[b].terminated.is_none() && branches[b].last().eta == prev_eta).collect();
        let steps: Vec<(Vec<FixedPointRecord<T>>, Option<String>)> = live
            .par_iter()
            .map(|&b| continue_segment(game, routes, branches[b].last(), eta, jump_cap))
            .collect();
        for (&b, (points, why)) in live.iter().zip(steps) {
            branches[b].points.extend(points);
            branches[b].terminated = why;
        }
        // Two branches converging onto one point: keep the older.
        for &b in &live {
            if branches[b].terminated.is_some() {
                continue;
            }
            let z = branches[b].last().z.clone();
            if let Some(&older) = live.iter().find(|&&o| {
                o < b && branches[o].terminated.is_none() && branches[o].last().eta == eta && l1_distance(&branches[o].last().z, &z).f64() <= MERGE_RADIUS
            }) {
                branches[b].points.pop();
                branches[b].terminated = Some(format!("merged into branch {older} at η = {eta}"));
            }
        }
        if opts.detect_newborns {
            let mut starts = multistart_points(game, routes, opts.newborn_starts, opts.seed.wrapping_add(k as u64));
            for &b in &live {
                starts.extend(kick_seeds(game, routes, branches[b].last(), opts.kick));
            }
            let found = solve_from_starts(game, routes, NoiseLevel::new(T::of(eta))?, &starts, &FixedPointOptions::default())?;
            for rec in found.records {
                let known: Vec<&[T]> =
                    branches.iter().filter_map(|b| b.at(eta)).map(|p| p.z.as_slice()).collect();
                if is_new(&rec.z, &known) {
                    let id = branches.len();
                    branches.push(Branch { id, origin: format!("born at η = {eta}"), points: vec![rec], terminated: None });
                }
            }
        }
    }
    Ok(Sweep { grid: grid.to_vec(), branches, options: opts.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    StabilityChange,
    BranchBirth,
    FoldSuspect,
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    /// `"pitchfork"` when one stable branch turns unstable while two stable branches appear.
    pub label: Option<String>,
    pub eta_lo: f64,
    pub eta_hi: f64,
    /// Grid points bracketing the event before refinement.
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub refined: bool,
    pub branches: Vec<usize>,
    pub count_above: usize,
    pub count_below: usize,
    pub stability_above: Vec<Stability>,
    pub stability_below: Vec<Stability>,
}

impl BifurcationEvent {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.eta_lo + self.eta_hi)
    }
}

#[derive(Default)]
struct Interval {
    changed: Vec<usize>,
    born: Vec<usize>,
    ended: Vec<usize>,
}

impl Interval {
    fn is_empty(&self) -> bool {
        self.changed.is_empty() && self.born.is_empty() && self.ended.is_empty()
    }
}

fn stability_sign(s: Stability) -> i8 {
    match s {
        Stability::Stable => 0,
        Stability::Unstable => 1,
        Stability::Marginal => 2,
    }
}

fn pattern<T: Scalar>(sweep: &Sweep<T>, eta: f64) -> Vec<Stability> {
    let mut s: Vec<Stability> = sweep.alive_at(eta).iter().map(|b| b.at(eta).unwrap().stability).collect();
    s.sort_by_key(|&x| stability_sign(x));
    s
}

/// Events between consecutive grid points, merged over adjacent intervals and
/// refined by bisection.
pub fn detect_bifurcations<T: Scalar>(game: &Game<T>, routes: &RouteSet, sweep: &Sweep<T>) -> Result<Vec<BifurcationEvent>> {
    let grid = &sweep.grid;
    let mut intervals: Vec<Interval> = Vec::new();
    for k in 1..grid.len() {
        let (hi, lo) = (grid[k - 1], grid[k]);
        let mut iv = Interval::default();
        for b in &sweep.branches {
            match (b.at(hi), b.at(lo)) {
                (Some(p), Some(q)) => {
                    let crossed = (p.eigenvalues.first().map_or(0.0, |e| e.re) > 0.0)
                        != (q.eigenvalues.first().map_or(0.0, |e| e.re) > 0.0);
                    if p.stability != q.stability || (crossed && p.stability == Stability::Marginal) {
                        iv.changed.push(b.id);
                    }
                }
                (None, Some(_)) => iv.born.push(b.id),
                (Some(_), None) => iv.ended.push(b.id),
                (None, None) => {}
            }
        }
        intervals.push(iv);
    }

    let mut events = Vec::new();
    let mut k = 0;
    while k < intervals.len() {
        if intervals[k].is_empty() {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < intervals.len() && !intervals[k + 1].is_empty() {
            k += 1;
        }
        let cluster = &intervals[start..=k];
        let (grid_hi, grid_lo) = (grid[start], grid[k + 1]);
        let changed: Vec<usize> = cluster.iter().flat_map(|c| c.changed.iter().copied()).collect();
        let born: Vec<usize> = cluster.iter().flat_map(|c| c.born.iter().copied()).collect();
        let ended: Vec<usize> = cluster.iter().flat_map(|c| c.ended.iter().copied()).collect();
        let kind = if !changed.is_empty() {
            EventKind::StabilityChange
        } else if !born.is_empty() {
            EventKind::BranchBirth
        } else {
            EventKind::FoldSuspect
        };
        let stable_born = born
            .iter()
            .filter(|&&b| sweep.branches[b].points[0].stability == Stability::Stable)
            .count();
        let lost_stability = changed.iter().filter(|&&b| {
            let br = &sweep.branches[b];
            br.at(grid_hi).map(|p| p.stability) == Some(Stability::Stable) && br.at(grid_lo).map(|p| p.stability) == Some(Stability::Unstable)
        });
        let label = (lost_stability.count() == 1 && born.len() == 2 && stable_born == 2 && ended.is_empty())
            .then(|| "pitchfork".to_string());

        let (eta_lo, eta_hi, refined) = match kind {
            EventKind::StabilityChange => refine_stability(game, routes, sweep, changed[0], start, k)?,
            EventKind::BranchBirth => refine_count(game, routes, sweep, start, k)?,
            EventKind::FoldSuspect => (grid_lo, grid_hi, false),
        };
        let mut ids: Vec<usize> = changed.iter().chain(&born).chain(&ended).copied().collect();
        ids.sort_unstable();
        ids.dedup();
        events.push(BifurcationEvent {
            kind,
            label,
            eta_lo,
            eta_hi,
            grid_lo,
            grid_hi,
            refined,
            branches: ids,
            count_above: sweep.alive_at(grid_hi).len(),
            count_below: sweep.alive_at(grid_lo).len(),
            stability_above: pattern(sweep, grid_hi),
            stability_below: pattern(sweep, grid_lo),
        });
        k += 1;
    }
    Ok(events)
}

/// Bisection on the stability class of branch `b`, continued by Newton from
/// the upper end of the bracket.
fn refine_stability<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    sweep: &Sweep<T>,
    b: usize,
    first: usize,
    last: usize,
) -> Result<(f64, f64, bool)> {
    let grid = &sweep.grid;
    let br = &sweep.branches[b];
    let k = (first..=last)
        .find(|&k| match (br.at(grid[k]), br.at(grid[k + 1])) {
            (Some(p), Some(q)) => p.stability != q.stability,
            _ => false,
        })
        .unwrap_or(first);
    let mut hi = br.at(grid[k]).expect("branch alive at bracket").clone();
    let mut lo = grid[k + 1];
    let width = sweep.options.refine_width;
    while hi.eta - lo > width {
        let mid = 0.5 * (hi.eta + lo);
        let start = predict(game, routes, &hi.z, hi.eta, mid).unwrap_or_else(|| hi.z.to_vec());
        let Ok(rec) = correct(game, routes, mid, &start) else {
            return Ok((lo, hi.eta, false));
        };
        if l1_distance(&rec.z, &hi.z).f64() > 0.2 * game.total_throughput().f64() {
            return Ok((lo, hi.eta, false));
        }
        if rec.stability == hi.stability {
            hi = rec;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi.eta, true))
}

/// Bisection on the number of fixed points found by multi-start.
fn refine_count<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    sweep: &Sweep<T>,
    first: usize,
    last: usize,
) -> Result<(f64, f64, bool)> {
    let grid = &sweep.grid;
    let opts = &sweep.options;
    let count_at = |eta: f64, seeds: &[&FixedPointRecord<T>]| -> Result<usize> {
        let mut starts = multistart_points(game, routes, opts.newborn_starts.max(1), opts.seed);
        for s in seeds {
            starts.push(s.z.clone());
            starts.extend(kick_seeds(game, routes, s, opts.kick));
        }
        let set = solve_from_starts(game, routes, NoiseLevel::new(T::of(eta))?, &starts, &FixedPointOptions::default())?;
        Ok(set.records.len())
    };
    let k = (first..=last)
        .find(|&k| sweep.alive_at(grid[k]).len() != sweep.alive_at(grid[k + 1]).len())
        .unwrap_or(first);
    let (mut hi, mut lo) = (grid[k], grid[k + 1]);
    let above: Vec<&FixedPointRecord<T>> = sweep.alive_at(hi).iter().map(|b| b.at(hi).unwrap()).collect();
    let n_hi = count_at(hi, &above)?;
    while hi - lo > opts.refine_width {
        let mid = 0.5 * (hi + lo);
        if count_at(mid, &above)? == n_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi, true))
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitPoint {
    pub branch: usize,
    pub eta: f64,
    pub z: Vec<f64>,
    pub stability: Stability,
    pub wardrop: WardropReport,
    /// Wardrop gap above the requested tolerance.
    pub unresolved: bool,
}

/// Terminal points of the branches that reach `eta_min`.
pub fn limit_equilibria<T: Scalar>(game: &Game<T>, routes: &RouteSet, sweep: &Sweep<T>, eta_min: f64, tol: f64) -> Vec<LimitPoint> {
    sweep
        .branches
        .iter()
        .filter(|b| (b.last().eta - eta_min).abs() <= 1e-12 * eta_min)
        .map(|b| {
            let p = b.last();
            let wardrop = check_wardrop(game, routes, &p.z, WARDROP_TOL);
            LimitPoint {
                branch: b.id,
                eta: p.eta,
                z: p.z.iter().map(|x| x.f64()).collect(),
                stability: p.stability,
                unresolved: wardrop.gap() > tol,
                wardrop,
            }
        })
        .collect()
}

/// Quantity plotted in a bifurcation diagram.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Coordinate {
    Link(usize),
    Route { population: usize, route: usize },
}

impl Coordinate {
    /// `f:<link id>` or `z:<population id>:<route index>`.
    pub fn parse<T: Scalar>(text: &str, game: &Game<T>, routes: &RouteSet) -> Result<Self> {
        let unknown = || Error::Validation(format!("unknown coordinate '{text}'"));
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["f", link] => game.network().link(link).map(Coordinate::Link).ok_or_else(unknown),
            ["z", pop, route] => {
                let p = game.population_index(pop).ok_or_else(unknown)?;
                let r: usize = route.parse().map_err(|_| unknown())?;
                if r >= routes.num_routes(p) {
                    return Err(unknown());
                }
                Ok(Coordinate::Route { population: p, route: r })
            }
            _ => Err(unknown()),
        }
    }

    pub fn name<T: Scalar>(&self, game: &Game<T>) -> String {
        match self {
            Coordinate::Link(e) => format!("f:{}", game.network().links()[*e].id),
            Coordinate::Route { population, route } => format!("z:{}:{route}", game.populations()[*population].id),
        }
    }

    pub fn value<T: Scalar>(&self, routes: &RouteSet, z: &[T]) -> Result<f64> {
        match *self {
            Coordinate::Link(e) => Ok(link_flow(routes, z)?.0[e].f64()),
            Coordinate::Route { population, route } => Ok(z[routes.block(population).start + route].f64()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagramRow {
    pub eta: f64,
    pub branch: usize,
    pub stability: Stability,
    pub coord_name: String,
    pub value: f64,
}

/// Long-format table of one coordinate along every branch, ordered by branch then decreasing `η`.
pub fn bifurcation_diagram<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    sweep: &Sweep<T>,
    coord: &Coordinate,
) -> Result<Vec<DiagramRow>> {
    let name = coord.name(game);
    let mut rows = Vec::new();
    for b in &sweep.branches {
        for p in &b.points {
            rows.push(DiagramRow {
                eta: p.eta,
                branch: b.id,
                stability: p.stability,
                coord_name: name.clone(),
                value: coord.value(routes, &p.z)?,
            });
        }
    }
    Ok(rows)
}
