//! Analytic Jacobians of the logit map, linear stability of fixed points and
//! ℓ₁ contraction certificates.
//!
//! With `π` the (cost-shifted) logit probabilities of population `p` and
//! `Δ^p_{si} = c^p_s − c^p_i`:
//!
//! ```text
//! ∂G^p_i/∂z^q_j = (v_p/η) π_i Σ_{s≠i} π_s ∂Δ^p_{si}/∂z^q_j
//! ∂G^p_i/∂η     = −(v_p/η²) π_i Σ_{s≠i} π_s Δ^p_{si}
//! ∂Δ^p_{si}/∂z^q_j = Σ_e (A^p_{es} − A^p_{ei}) (τ^p_e)'(f_e) A^q_{ej}
//! ```
//!
//! The second line is the usual `1/(1 + Σ_r e^{−Δ_{ri}/η})²` form multiplied
//! through by the shifted exponentials, so it cannot overflow.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{costs_at, integrate, residual, IntegrateOptions, NoiseLevel};
use crate::error::{Error, Result};
use crate::flow::{link_flow_into, RouteFlow};
use crate::game::Game;
use crate::linalg::Matrix;
use crate::routes::RouteSet;
use crate::sampling::{dirichlet_flows, rng, vertex_profiles_capped, VERTEX_CAP};
use crate::scalar::{l1_distance, Scalar};

/// Real parts within `±MARGINAL_BAND` are reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-8;
pub const CLASSIFY_RESIDUAL_TOL: f64 = 1e-10;
pub const DEFAULT_CERTIFICATE_SAMPLES: usize = 512;
pub const DEFAULT_CERTIFICATE_SEED: u64 = 2024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        })
    }
}

/// `J_{G,z}` with rows and columns indexed by `(population, route)`.
#[derive(Clone, Debug)]
pub struct JacobianZ<T = f64> {
    pub matrix: Matrix<T>,
    pub index: Vec<(usize, usize)>,
}

/// Logit probabilities with the minimum cost subtracted first.
fn probabilities<T: Scalar>(costs: &[T], eta: T) -> Vec<T> {
    let cmin = costs.iter().copied().fold(T::infinity(), T::min);
    let w: Vec<T> = costs.iter().map(|&c| (-(c - cmin) / eta).exp()).collect();
    let s: T = w.iter().copied().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn check_inputs<T: Scalar>(routes: &RouteSet, z: &[T], costs: &[T]) -> Result<()> {
    if z.len() != routes.dim() {
        return Err(Error::Dimension { expected: routes.dim(), got: z.len() });
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("route cost"));
    }
    Ok(())
}

/// `∂c^p_s/∂z^q_j` for every route `(p, s)` (rows) and route `(q, j)` (columns).
fn cost_derivatives<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T]) -> Matrix<T> {
    let n = routes.dim();
    let mut f = vec![T::zero(); routes.num_links()];
    link_flow_into(routes, z, &mut f);
    let mut d = Matrix::zeros(n, n);
    for (p, pop) in game.populations().iter().enumerate() {
        let slopes: Vec<T> = pop.delays.iter().zip(&f).map(|(del, &fe)| del.derivative(fe)).collect();
        for (s, route) in routes.routes(p).iter().enumerate() {
            let row = routes.block(p).start + s;
            for col in 0..n {
                let used = routes.links_of_flat(col);
                d[(row, col)] = route.iter().filter(|&&e| used[e]).map(|&e| slopes[e]).sum();
            }
        }
    }
    d
}

pub fn jacobian_z<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], eta: NoiseLevel<T>) -> Result<JacobianZ<T>> {
    let eta = eta.get();
    let costs = costs_at(game, routes, z);
    check_inputs(routes, z, &costs)?;
    let n = routes.dim();
    let dc = cost_derivatives(game, routes, z);
    let mut jac = Matrix::zeros(n, n);
    for (p, pop) in game.populations().iter().enumerate() {
        let b = routes.block(p);
        let pi = probabilities(&costs[b.clone()], eta);
        let scale = pop.throughput / eta;
        for i in 0..b.len() {
            let row_i = b.start + i;
            for col in 0..n {
                let mut acc = T::zero();
                for s in (0..b.len()).filter(|&s| s != i) {
                    let d_delta = dc[(b.start + s, col)] - dc[(row_i, col)];
                    acc = acc + pi[s] * d_delta;
                }
                jac[(row_i, col)] = scale * pi[i] * acc;
            }
        }
    }
    if !jac.is_finite() {
        return Err(Error::NonFinite("Jacobian entry"));
    }
    let index = (0..n).map(|k| {
        let p = routes.population_of(k);
        (p, k - routes.block(p).start)
    });
    Ok(JacobianZ { matrix: jac, index: index.collect() })
}

pub fn jacobian_eta<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], eta: NoiseLevel<T>) -> Result<Vec<T>> {
    let eta = eta.get();
    let costs = costs_at(game, routes, z);
    check_inputs(routes, z, &costs)?;
    let mut out = vec![T::zero(); routes.dim()];
    for (p, pop) in game.populations().iter().enumerate() {
        let b = routes.block(p);
        let c = &costs[b.clone()];
        let pi = probabilities(c, eta);
        for i in 0..c.len() {
            let acc: T = (0..c.len()).filter(|&s| s != i).map(|s| pi[s] * (c[s] - c[i])).sum();
            out[b.start + i] = -(pop.throughput / (eta * eta)) * pi[i] * acc;
        }
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("η-derivative"));
    }
    Ok(out)
}

/// Flat indices kept in tangent coordinates: every route except the last of
/// each population. The dropped coordinate is `v_p` minus the others.
pub fn tangent_indices(routes: &RouteSet) -> Vec<usize> {
    (0..routes.num_populations()).flat_map(|p| {
        let b = routes.block(p);
        b.start..b.end - 1
    })
    .collect()
}

/// Matrix of `J_{G,z} − I` restricted to the tangent space of the flow polytope,
/// in the basis `e_j − e_{last(q)}`.
pub fn tangent_jacobian<T: Scalar>(routes: &RouteSet, jac_g: &Matrix<T>) -> Matrix<T> {
    let idx = tangent_indices(routes);
    let last: Vec<usize> = idx.iter().map(|&k| routes.block(routes.population_of(k)).end - 1).collect();
    Matrix::from_fn(idx.len(), idx.len(), |a, b| {
        let v = jac_g[(idx[a], idx[b])] - jac_g[(idx[a], last[b])];
        if a == b {
            v - T::one()
        } else {
            v
        }
    })
}

pub fn stability_of(eigenvalues: &[(f64, f64)]) -> Stability {
    if eigenvalues.iter().any(|e| e.0 > MARGINAL_BAND) {
        Stability::Unstable
    } else if eigenvalues.iter().all(|e| e.0 < -MARGINAL_BAND) {
        Stability::Stable
    } else {
        Stability::Marginal
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub stability: Stability,
    /// Spectrum of `J_{G,z} − I` on the tangent space, sorted by decreasing real part.
    pub tangent_eigenvalues: Vec<(f64, f64)>,
    /// Full spectrum: the tangent part plus `−1` once per population (normal directions).
    pub eigenvalues: Vec<(f64, f64)>,
}

impl Classification {
    pub fn leading_real_part(&self) -> f64 {
        self.tangent_eigenvalues.first().map_or(f64::NEG_INFINITY, |e| e.0)
    }
}

/// Linear stability of the fixed point `z` of logit(η).
pub fn classify<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T], eta: NoiseLevel<T>) -> Result<Classification> {
    let r = residual(game, routes, z, eta.get())?.f64();
    if !(r <= CLASSIFY_RESIDUAL_TOL) {
        return Err(Error::Precondition(format!("fixed-point residual {r:e} above {CLASSIFY_RESIDUAL_TOL:e}")));
    }
    classify_unchecked(game, routes, z, eta)
}

pub(crate) fn classify_unchecked<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    z: &[T],
    eta: NoiseLevel<T>,
) -> Result<Classification> {
    let jac = jacobian_z(game, routes, z, eta)?;
    let tangent = tangent_jacobian(routes, &jac.matrix).eigenvalues()?;
    let mut full = tangent.clone();
    full.extend(std::iter::repeat_n((-1.0, 0.0), routes.num_populations()));
    full.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    Ok(Classification { stability: stability_of(&tangent), tangent_eigenvalues: tangent, eigenvalues: full })
}

/// `max_j (J_jj + Σ_{i≠j} |J_ij|)` for `J = J_{G,z} − I`.
pub fn column_measure<T: Scalar>(jac_g: &Matrix<T>) -> f64 {
    let n = jac_g.rows();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let v = jac_g[(i, j)].f64();
                    if i == j {
                        v - 1.0
                    } else {
                        v.abs()
                    }
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionCertificate {
    pub eta: f64,
    pub margin_c: f64,
    pub valid: bool,
    pub sample_size: usize,
    pub seed: Option<u64>,
    pub worst_point: Vec<f64>,
}

/// Smallest negated column measure of `J_{G,z} − I` over `z_sample`.
pub fn contraction_margin<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    z_sample: &[RouteFlow<T>],
) -> Result<ContractionCertificate> {
    let margins: Vec<f64> = z_sample
        .par_iter()
        .map(|z| jacobian_z(game, routes, z, eta).map(|j| -column_measure(&j.matrix)))
        .collect::<Result<_>>()?;
    let (worst, margin_c) = margins
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (k, &c)| if c < best.1 { (k, c) } else { best });
    Ok(ContractionCertificate {
        eta: eta.get().f64(),
        margin_c,
        valid: margin_c > 0.0,
        sample_size: z_sample.len(),
        seed: None,
        worst_point: z_sample.get(worst).map(|z| z.iter().map(|x| x.f64()).collect()).unwrap_or_default(),
    })
}

/// Default certificate sample: Dirichlet draws plus every vertex profile when at most 1024.
pub fn default_sample<T: Scalar>(game: &Game<T>, routes: &RouteSet, n: usize, seed: u64) -> Vec<RouteFlow<T>> {
    let mut s = dirichlet_flows(game, routes, n, seed);
    s.extend(vertex_profiles_capped(game, routes, VERTEX_CAP));
    s
}

pub fn certify<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    samples: usize,
    seed: u64,
) -> Result<ContractionCertificate> {
    let mut cert = contraction_margin(game, routes, eta, &default_sample(game, routes, samples, seed))?;
    cert.seed = Some(seed);
    Ok(cert)
}

pub const THRESHOLD_BRACKET: (f64, f64) = (1e-3, 1e9);

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdEstimate {
    /// Contraction holds at every tested `η` above this value.
    pub eta_hat: Option<f64>,
    /// Valid already at the lower end of the bracket.
    pub valid_at_lower: bool,
    /// Valid at the upper end of the bracket; when false no threshold was found.
    pub valid_at_upper: bool,
    /// Every detected sign change of the sampled margin, refined `(lo, hi)`.
    pub sign_changes: Vec<(f64, f64)>,
    pub sampled: bool,
    pub sample_size: usize,
    pub seed: u64,
}

/// Bisection estimate of the noise level above which the sampled contraction
/// margin is positive.
///
/// A log-spaced scan over `[1e-3, 1e9]` locates every sign change, each of
/// which is refined to relative width `tol`.
pub fn estimate_eta_threshold<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<ThresholdEstimate> {
    let sample = default_sample(game, routes, samples, seed);
    let margin = |eta: f64| -> Result<f64> {
        contraction_margin(game, routes, NoiseLevel::new(T::of(eta))?, &sample).map(|c| c.margin_c)
    };
    let (lo, hi) = THRESHOLD_BRACKET;
    let per_decade = 4.0;
    let steps = ((hi / lo).log10() * per_decade).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| lo * 10f64.powf(k as f64 / per_decade)).collect();
    let valid: Vec<bool> = grid.iter().map(|&e| margin(e).map(|c| c > 0.0)).collect::<Result<_>>()?;

    let mut changes = Vec::new();
    for k in 0..grid.len() - 1 {
        if valid[k] != valid[k + 1] {
            let (mut a, mut b) = (grid[k], grid[k + 1]);
            let va = valid[k];
            while b / a - 1.0 > tol {
                let m = (a * b).sqrt();
                if (margin(m)? > 0.0) == va {
                    a = m;
                } else {
                    b = m;
                }
            }
            changes.push((a, b));
        }
    }
    let valid_at_lower = valid[0];
    let valid_at_upper = *valid.last().unwrap();
    let eta_hat = if !valid_at_upper {
        None
    } else if let Some(&(_, b)) = changes.last() {
        Some(b)
    } else {
        Some(lo)
    };
    Ok(ThresholdEstimate {
        eta_hat,
        valid_at_lower,
        valid_at_upper,
        sign_changes: changes,
        sampled: true,
        sample_size: sample.len(),
        seed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionCheck {
    pub holds: bool,
    pub pairs: usize,
    pub checked_times: usize,
    /// Largest `‖x(t) − y(t)‖₁ / (e^{−ct} ‖x₀ − y₀‖₁)` seen.
    pub worst_ratio: f64,
    /// First violation as `(t, pair, lhs, rhs)`.
    pub violation: Option<(f64, usize, f64, f64)>,
}

impl ContractionCheck {
    pub fn into_result(self) -> Result<Self> {
        match self.violation {
            Some((t, pair, lhs, rhs)) => Err(Error::ContractionViolated { t, pair, lhs, rhs }),
            None => Ok(self),
        }
    }
}

pub const CONTRACTION_SLACK: f64 = 1.01;

/// Worst ratio, first violation `(t, lhs, rhs)` and number of checked times for one pair.
type PairCheck = (f64, Option<(f64, f64, f64)>, usize);

/// Integrates each pair and checks `‖x(t) − y(t)‖₁ ≤ 1.01 e^{−ct} ‖x₀ − y₀‖₁` at every recorded time.
pub fn verify_contraction_inequality<T: Scalar>(
    game: &Game<T>,
    routes: &RouteSet,
    eta: NoiseLevel<T>,
    margin_c: f64,
    pairs: &[(RouteFlow<T>, RouteFlow<T>)],
    horizon: f64,
) -> Result<ContractionCheck> {
    if !(margin_c > 0.0) {
        return Err(Error::Precondition(format!("contraction margin {margin_c} is not positive")));
    }
    let opts = IntegrateOptions { stationarity_tol: None, record_every: 1, ..Default::default() };
    let scale: f64 = game.total_throughput().f64().max(1.0);
    let results: Vec<Result<PairCheck>> = pairs
        .par_iter()
        .map(|(x0, y0)| {
            let tx = integrate(game, routes, x0, eta, horizon, &opts)?;
            let ty = integrate(game, routes, y0, eta, horizon, &opts)?;
            let d0 = l1_distance(x0, y0).f64();
            let mut worst: f64 = 0.0;
            let mut first = None;
            for ((t, x), y) in tx.times.iter().zip(&tx.states).zip(&ty.states) {
                let lhs = l1_distance(x, y).f64();
                let bound = (-margin_c * t).exp() * d0;
                if bound > 0.0 {
                    worst = worst.max(lhs / bound);
                }
                let rhs = CONTRACTION_SLACK * bound + 1e-13 * scale;
                if lhs > rhs && first.is_none() {
                    first = Some((*t, lhs, rhs));
                }
            }
            Ok((worst, first, tx.times.len()))
        })
        .collect();
    let mut check = ContractionCheck { holds: true, pairs: pairs.len(), checked_times: 0, worst_ratio: 0.0, violation: None };
    for (k, r) in results.into_iter().enumerate() {
        let (worst, first, n) = r?;
        check.worst_ratio = check.worst_ratio.max(worst);
        check.checked_times += n;
        if let (Some((t, lhs, rhs)), None) = (first, check.violation) {
            check.violation = Some((t, k, lhs, rhs));
            check.holds = false;
        }
    }
    Ok(check)
}

/// `n` independent Dirichlet start pairs.
pub fn random_pairs<T: Scalar>(game: &Game<T>, routes: &RouteSet, n: usize, seed: u64) -> Vec<(RouteFlow<T>, RouteFlow<T>)> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let a = crate::sampling::dirichlet_flow(game, routes, &mut r);
            let b = crate::sampling::dirichlet_flow(game, routes, &mut r);
            (a, b)
        })
        .collect()
}
