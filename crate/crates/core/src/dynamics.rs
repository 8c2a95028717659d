//! Logit choice map, the logit vector field and trajectory integration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{costs_at_link_flow, link_flow_into, project_slice, RouteFlow};
use crate::game::Game;
use crate::routes::RouteSet;
use crate::scalar::{l1_norm, Scalar};

/// Noise level `η > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NoiseLevel<T = f64>(T);

impl<T: Scalar> NoiseLevel<T> {
    pub fn new(eta: T) -> Result<Self> {
        if eta.is_finite() && eta > T::zero() {
            Ok(NoiseLevel(eta))
        } else {
            Err(Error::InvalidNoise(eta.f64()))
        }
    }

    pub fn get(self) -> T {
        self.0
    }
}

/// Writes `v · softmax(−c/η)` into `out`, shifting costs by their minimum first.
///
/// Entries that underflow are floored at the smallest positive normal so the
/// output stays strictly positive.
pub fn logit_choice<T: Scalar>(costs: &[T], throughput: T, eta: T, out: &mut [T]) -> Result<()> {
    let mut cmin = T::infinity();
    for &c in costs {
        if !c.is_finite() {
            return Err(Error::NonFinite("route cost"));
        }
        cmin = cmin.min(c);
    }
    let mut sum = T::zero();
    for (o, &c) in out.iter_mut().zip(costs) {
        *o = (-(c - cmin) / eta).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = (throughput * *o / sum).max(T::min_positive_value());
    }
    if throughput.is_zero() {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    Ok(())
}

/// Route costs of every population at route flow `z` (flat layout).
pub(crate) fn costs_at<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T]) -> Vec<T> {
    let mut f = vec![T::zero(); routes.num_links()];
    link_flow_into(routes, z, &mut f);
    costs_at_link_flow(game, routes, &f)
}

pub(crate) fn logit_from_costs<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    costs: &[T],
    eta: T,
    out: &mut [T],
) -> Result<()> {
    for (p, pop) in game.populations().iter().enumerate() {
        let b = routes.block(p);
        logit_choice(&costs[b.clone()], pop.throughput, eta, &mut out[b])?;
    }
    Ok(())
}

pub(crate) fn logit_slice<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], eta: T) -> Result<Vec<T>> {
    let c = costs_at(game, routes, z);
    let mut out = vec![T::zero(); z.len()];
    logit_from_costs(game, routes, &c, eta, &mut out)?;
    Ok(out)
}

/// `G(z, η)`: every population re-distributed by the logit choice rule.
pub fn logit_map<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    z: &RouteFlow<T>,
    eta: NoiseLevel<T>,
) -> Result<RouteFlow<T>> {
    check_dim(routes, z)?;
    logit_slice(game, routes, z, eta.get()).map(RouteFlow::from_vec_unchecked)
}

/// Velocity `ż = G(z, η) − z`.
pub fn logit_rhs<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &RouteFlow<T>, eta: NoiseLevel<T>) -> Result<Vec<T>> {
    check_dim(routes, z)?;
    let mut g = logit_slice(game, routes, z, eta.get())?;
    for (gi, &zi) in g.iter_mut().zip(z.iter()) {
        *gi = *gi - zi;
    }
    Ok(g)
}

/// `‖G(z, η) − z‖₁`.
pub fn residual<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], eta: T) -> Result<T> {
    let g = logit_slice(game, routes, z, eta)?;
    Ok(g.iter().zip(z).map(|(&a, &b)| (a - b).abs()).sum())
}

fn check_dim<T>(routes: &RouteSet, z: &[T]) -> Result<()> {
    if z.len() == routes.dim() {
        Ok(())
    } else {
        Err(Error::Dimension { expected: routes.dim(), got: z.len() })
    }
}

/// One classic fourth-order Runge–Kutta step of `ẏ = f(y)`.
pub fn rk4_step<T: Scalar, F>(y: &mut [T], h: T, mut f: F) -> Result<()>
where
    F: FnMut(&[T], &mut [T]) -> Result<()>,
{
    let n = y.len();
    let two = T::of(2.0);
    let half = h / two;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    let mut tmp = vec![T::zero(); n];
    f(y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + half * k1[i];
    }
    f(&tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + half * k2[i];
    }
    f(&tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(&tmp, &mut k4)?;
    let sixth = h / T::of(6.0);
    for i in 0..n {
        y[i] = y[i] + sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    /// Fixed step, or the initial step in adaptive mode.
    pub step: f64,
    /// Local error tolerance for step-doubling adaptivity; `None` for fixed steps.
    pub adaptive_tol: Option<f64>,
    pub min_step: f64,
    /// Stop once `‖ż‖₁` drops below this; `None` integrates to the horizon.
    pub stationarity_tol: Option<f64>,
    /// Record every `record_every`-th accepted step (the final state is always kept).
    pub record_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            step: 0.01,
            adaptive_tol: None,
            min_step: 1e-12,
            stationarity_tol: Some(1e-10),
            record_every: 10,
        }
    }
}

/// Largest admissible per-step sum drift before projection.
pub const MAX_STEP_DRIFT: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryMeta {
    pub method: String,
    pub step: f64,
    pub adaptive_tol: Option<f64>,
    pub steps: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub max_step_drift: f64,
    pub min_before_clip: f64,
}

/// Time-stamped states of one solution of the logit dynamics.
#[derive(Clone, Debug)]
pub struct Trajectory<T = f64> {
    pub eta: f64,
    pub times: Vec<f64>,
    pub states: Vec<RouteFlow<T>>,
    pub meta: TrajectoryMeta,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &RouteFlow<T> {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Integrates `ż = G(z, η) − z` from `z0` over `[0, horizon]`.
///
/// After every step negative entries are clipped and each population block is
/// rescaled to its throughput.
pub fn integrate<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    z0: &RouteFlow<T>,
    eta: NoiseLevel<T>,
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory<T>> {
    z0.check_admissible(game, routes)?;
    if !(horizon > 0.0) || !(opts.step > 0.0) {
        return Err(Error::Precondition("horizon and step must be positive".into()));
    }
    let eta_t = eta.get();
    let rhs = |y: &[T], out: &mut [T]| -> Result<()> {
        let c = costs_at(game, routes, y);
        logit_from_costs(game, routes, &c, eta_t, out)?;
        for (o, &yi) in out.iter_mut().zip(y) {
            *o = *o - yi;
        }
        Ok(())
    };
    let vmax = game.throughputs().into_iter().fold(1.0f64, |m, v| m.max(v.f64()));

    let mut z: Vec<T> = z0.to_vec();
    let mut t = 0.0f64;
    let mut h = opts.step;
    let mut times = vec![0.0];
    let mut states = vec![z0.clone()];
    let mut meta = TrajectoryMeta {
        method: if opts.adaptive_tol.is_some() { "rk4-step-doubling" } else { "rk4" }.into(),
        step: opts.step,
        adaptive_tol: opts.adaptive_tol,
        steps: 0,
        converged: false,
        final_residual: f64::NAN,
        max_step_drift: 0.0,
        min_before_clip: f64::INFINITY,
    };
    let mut vel = vec![T::zero(); z.len()];
    let record_every = opts.record_every.max(1);
    let eps_t = 1e-12 * horizon;

    loop {
        rhs(&z, &mut vel)?;
        let speed = l1_norm(&vel).f64();
        meta.final_residual = speed;
        if let Some(tol) = opts.stationarity_tol {
            if speed < tol {
                meta.converged = true;
                break;
            }
        }
        if t >= horizon - eps_t {
            break;
        }
        let h_try = h.min(horizon - t);
        let mut next = z.clone();
        match opts.adaptive_tol {
            None => rk4_step(&mut next, T::of(h_try), rhs)?,
            Some(tol) => {
                let mut coarse = z.clone();
                rk4_step(&mut coarse, T::of(h_try), rhs)?;
                rk4_step(&mut next, T::of(h_try / 2.0), rhs)?;
                rk4_step(&mut next, T::of(h_try / 2.0), rhs)?;
                let err = next.iter().zip(&coarse).fold(0.0f64, |m, (a, b)| m.max((*a - *b).f64().abs())) / 15.0;
                let factor = if err > 0.0 { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 2.0) } else { 2.0 };
                if err > tol {
                    h = h_try * factor;
                    if h < opts.min_step {
                        return Err(Error::StepUnderflow { t, h });
                    }
                    continue;
                }
                h = (h_try * factor).max(opts.min_step);
            }
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("integrator state"));
        }
        meta.min_before_clip = meta.min_before_clip.min(next.iter().fold(f64::INFINITY, |m, x| m.min(x.f64())));
        let drift = project_slice(&mut next, game, routes).f64();
        meta.max_step_drift = meta.max_step_drift.max(drift);
        if drift > MAX_STEP_DRIFT * vmax {
            return Err(Error::NonFinite("projection drift above 1e-9"));
        }
        z = next;
        t += h_try;
        meta.steps += 1;
        if meta.steps.is_multiple_of(record_every) {
            times.push(t);
            states.push(RouteFlow::from_vec_unchecked(z.clone()));
        }
    }
    if *times.last().unwrap() < t {
        times.push(t);
        states.push(RouteFlow::from_vec_unchecked(z.clone()));
    }
    Ok(Trajectory { eta: eta_t.f64(), times, states, meta })
}

/// Aggregate route flow `w = Σ_p z^p`, defined when all populations share a route set.
pub fn aggregate_flow<T: Scalar>(routes: &RouteSet, z: &[T]) -> Option<Vec<T>> {
    if !routes.shared_route_set() {
        return None;
    }
    let mut w = vec![T::zero(); routes.num_routes(0)];
    for p in 0..routes.num_populations() {
        for (wi, &zi) in w.iter_mut().zip(&z[routes.block(p)]) {
            *wi = *wi + zi;
        }
    }
    Some(w)
}
