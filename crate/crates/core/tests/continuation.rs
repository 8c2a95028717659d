mod common;

use std::sync::OnceLock;

use common::l1;
use hetroute::bundled;
use hetroute::continuation::{detect_bifurcations, limit_equilibria, log_grid, sweep, BifurcationEvent, EventKind, Sweep};
use hetroute::dynamics::{integrate, IntegrateOptions};
use hetroute::equilibria::{find_fixed_point, FixedPointOptions};
use hetroute::routes::{enumerate_routes, DEFAULT_ROUTE_CAP};
use hetroute::{ContinuationOptions, NoiseLevel, RouteFlow, Stability};

fn example_sweep(points: usize) -> (Sweep<f64>, Vec<BifurcationEvent>) {
    let (g, r) = bundled::three_pop_with_routes();
    let grid = log_grid(1.0, 0.01, points).unwrap();
    let sw = sweep(&g, &r, &grid, None, &ContinuationOptions::default()).unwrap();
    let ev = detect_bifurcations(&g, &r, &sw).unwrap();
    (sw, ev)
}

fn default_sweep() -> &'static (Sweep<f64>, Vec<BifurcationEvent>) {
    static SWEEP: OnceLock<(Sweep<f64>, Vec<BifurcationEvent>)> = OnceLock::new();
    SWEEP.get_or_init(|| example_sweep(60))
}

#[test]
fn one_pitchfork_near_the_reported_value() {
    let (sw, ev) = default_sweep();
    assert_eq!(ev.len(), 1, "{ev:#?}");
    let e = &ev[0];
    assert_eq!(e.kind, EventKind::StabilityChange);
    assert_eq!(e.label.as_deref(), Some("pitchfork"));
    assert!(e.refined);
    assert!((0.28..=0.34).contains(&e.midpoint()), "{}", e.midpoint());
    assert!(e.eta_hi - e.eta_lo <= 1e-3 * 1.0001);
    assert_eq!((e.count_above, e.count_below), (1, 3));
    assert_eq!(e.stability_above, vec![Stability::Stable]);
    let mut below = e.stability_below.clone();
    below.sort_by_key(|s| s.to_string());
    assert_eq!(below, vec![Stability::Stable, Stability::Stable, Stability::Unstable]);
    assert_eq!(sw.alive_at(0.01).len(), 3);
    assert_eq!(sw.alive_at(1.0).len(), 1);
}

#[test]
fn consecutive_branch_points_respect_the_jump_cap() {
    let (sw, _) = default_sweep();
    let cap = 0.2 * 3.2;
    for b in &sw.branches {
        for w in b.points.windows(2) {
            assert!(l1(&w[0].z, &w[1].z) <= cap, "branch {}", b.id);
            assert!(w[1].eta < w[0].eta);
        }
        assert!(b.points.iter().all(|p| p.residual <= 1e-10));
    }
}

#[test]
fn endpoint_gap_improves_on_twice_the_floor() {
    let (g, r) = bundled::three_pop_with_routes();
    let (sw, _) = default_sweep();
    let eta_min = 0.01;
    let opts = FixedPointOptions { newton_first: true, ..Default::default() };
    for b in sw.alive_at(eta_min) {
        let end = b.at(eta_min).unwrap();
        let near = b.points.iter().min_by(|x, y| (x.eta - 2.0 * eta_min).abs().total_cmp(&(y.eta - 2.0 * eta_min).abs())).unwrap();
        let twice = find_fixed_point(&g, &r, NoiseLevel::new(2.0 * eta_min).unwrap(), &near.z, &opts).unwrap();
        assert!(l1(&twice.z, &near.z) < 0.05);
        assert!(end.wardrop_gap < twice.wardrop_gap, "branch {}: {} vs {}", b.id, end.wardrop_gap, twice.wardrop_gap);
    }
}

#[test]
fn stable_points_attract_nearby_trajectories() {
    let (g, r) = bundled::three_pop_with_routes();
    let (sw, _) = default_sweep();
    let stable: Vec<_> =
        sw.branches.iter().flat_map(|b| b.points.iter()).filter(|p| p.stability == Stability::Stable).collect();
    let step = stable.len() / 10;
    let opts = IntegrateOptions { stationarity_tol: Some(1e-12), record_every: 1000, ..Default::default() };
    for p in stable.iter().step_by(step).take(10) {
        // Move 5e-4 of mass between the first and last route of every population: ℓ₁ 1e-3 per population.
        let mut z = p.z.to_vec();
        for q in 0..r.num_populations() {
            let b = r.block(q);
            let (i, j) = (b.start, b.end - 1);
            let m = 5e-4f64.min(z[j]);
            z[j] -= m;
            z[i] += m;
        }
        let z0 = RouteFlow::from_vec_unchecked(z);
        let t = integrate(&g, &r, &z0, NoiseLevel::new(p.eta).unwrap(), 5000.0, &opts).unwrap();
        let d = l1(t.last(), &p.z);
        assert!(d < 1e-6, "η = {}: {d:e}", p.eta);
    }
}

#[test]
fn halving_the_grid_spacing_keeps_the_event() {
    let (_, coarse) = default_sweep();
    let (_, fine) = example_sweep(119);
    assert_eq!(fine.len(), 1);
    assert!((fine[0].midpoint() - coarse[0].midpoint()).abs() <= 1e-2);
}

#[test]
fn no_event_above_the_bifurcation() {
    let (g, r) = bundled::three_pop_with_routes();
    let grid = log_grid(1.0, 0.5, 20).unwrap();
    let sw = sweep(&g, &r, &grid, None, &ContinuationOptions::default()).unwrap();
    assert_eq!(sw.branches.len(), 1);
    assert!(detect_bifurcations(&g, &r, &sw).unwrap().is_empty());
}

#[test]
fn homogeneous_affine_game_has_one_stable_branch() {
    let g = bundled::parallel_affine();
    let r = enumerate_routes(&g, DEFAULT_ROUTE_CAP).unwrap();
    let grid = log_grid(10.0, 0.01, 60).unwrap();
    let sw = sweep(&g, &r, &grid, None, &ContinuationOptions::default()).unwrap();
    assert_eq!(sw.branches.len(), 1);
    assert!(sw.branches[0].points.iter().all(|p| p.stability == Stability::Stable));
    assert!(detect_bifurcations(&g, &r, &sw).unwrap().is_empty());
    let lim = limit_equilibria(&g, &r, &sw, 0.01, 1e-3);
    assert_eq!(lim.len(), 1);
    assert!(lim[0].wardrop.gap() < 1e-3 && !lim[0].unresolved);
    // Wardrop flow of the file: (1, 1, 0) at common cost 3.
    assert!(l1(&lim[0].z, &[1.0, 1.0, 0.0]) < 1e-2, "{:?}", lim[0].z);
}
