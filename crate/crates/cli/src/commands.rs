use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hetroute::continuation::{self, bifurcation_diagram, log_grid, Coordinate, ETA_FLOOR};
use hetroute::dynamics::aggregate_flow;
use hetroute::equilibria::{check_strict, check_wardrop, find_all_fixed_points, find_fixed_point, FixedPointOptions};
use hetroute::export::{self, json_string, num};
use hetroute::io::load_flow_file;
use hetroute::meanfield::{compare_to_ode, simulate_agents, OdeComparison};
use hetroute::potential::{check_symmetry_default, lyapunov_monitor, minimize_perturbed_potential, MinimizeOptions};
use hetroute::sampling::dirichlet_flows;
use hetroute::scalar::l1_distance;
use hetroute::stability::{certify, estimate_eta_threshold, random_pairs, verify_contraction_inequality};
use hetroute::{
    enumerate_routes, integrate, load_game_file, ContinuationOptions, Error, Game, IntegrateOptions, LoadedGame, NoiseLevel,
    RouteFlow, RouteSet, DEFAULT_ROUTE_CAP,
};
use serde::Serialize;
use serde_json::json;

use crate::{AgentArgs, CertifyArgs, Command, FixedPointArgs, PotentialArgs, SimulateArgs, SweepArgs, WardropArgs};

#[derive(Debug)]
pub struct CliError {
    pub input: bool,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError { input: true, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { input: e.is_input_error(), message: e.to_string() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError { input: true, message: e.to_string() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Routes(a) => routes(&a.game),
        Command::Simulate(a) => simulate(a),
        Command::FixedPoints(a) => fixed_points(a),
        Command::Sweep(a) => sweep(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Wardrop(a) => wardrop(a),
        Command::Potential(a) => potential(a),
        Command::Agents(a) => agents(a),
    }
}

fn load(path: &Path) -> Result<(LoadedGame<f64>, RouteSet)> {
    let loaded = load_game_file::<f64>(path)?;
    let routes = enumerate_routes(&loaded.game, DEFAULT_ROUTE_CAP)?;
    Ok((loaded, routes))
}

fn noise(eta: f64) -> Result<NoiseLevel<f64>> {
    Ok(NoiseLevel::new(eta)?)
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::input(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `uniform`, `vertex:k` (every population on its route `k`), `vertex:a,b,..`
/// (one route index per population), `file:path` or `dirichlet:seed`.
fn initial_flow(spec: &str, game: &Game<f64>, routes: &RouteSet) -> Result<RouteFlow<f64>> {
    let bad = || CliError::input(format!("bad initial condition '{spec}' (uniform | vertex:k | vertex:a,b,.. | file:path | dirichlet:seed)"));
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "uniform" if arg.is_empty() => Ok(RouteFlow::uniform(game, routes)),
        "vertex" => {
            let picks: Vec<usize> = arg.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
            let choice = match picks.as_slice() {
                [k] => vec![*k; routes.num_populations()],
                _ if picks.len() == routes.num_populations() => picks,
                _ => return Err(bad()),
            };
            for (p, &r) in choice.iter().enumerate() {
                if r >= routes.num_routes(p) {
                    return Err(CliError::input(format!(
                        "vertex: population {} has {} routes, route {r} requested",
                        game.populations()[p].id,
                        routes.num_routes(p)
                    )));
                }
            }
            Ok(RouteFlow::vertex(game, routes, &choice))
        }
        "file" if !arg.is_empty() => Ok(load_flow_file(arg, game, routes)?),
        "dirichlet" => {
            let seed: u64 = arg.parse().map_err(|_| bad())?;
            Ok(dirichlet_flows(game, routes, 1, seed).remove(0))
        }
        _ => Err(bad()),
    }
}

/// Artifacts are collected in memory and only written once the analysis succeeded.
struct Artifacts {
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { files: Vec::new() }
    }

    fn add<F>(&mut self, name: &'static str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> hetroute::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.push((name, buf));
        Ok(())
    }

    fn add_json<S: Serialize + ?Sized>(&mut self, name: &'static str, value: &S) {
        self.files.push((name, json_string(value).into_bytes()));
    }

    fn flush(self, dir: Option<&PathBuf>) -> Result<()> {
        let Some(dir) = dir else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        for (name, bytes) in self.files {
            let path = dir.join(name);
            let mut f = BufWriter::new(File::create(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?);
            f.write_all(&bytes)?;
            f.flush()?;
        }
        Ok(())
    }
}

fn print<S: Serialize + ?Sized>(value: &S) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match export::write_json(&mut out, value) {
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn routes(path: &Path) -> Result<()> {
    let (loaded, routes) = load(path)?;
    let game = &loaded.game;
    let pops: Vec<_> = game
        .populations()
        .iter()
        .enumerate()
        .map(|(p, pop)| {
            let list: Vec<_> = (0..routes.num_routes(p))
                .map(|r| json!({ "index": r, "links": routes.route_label(game.network(), p, r) }))
                .collect();
            json!({ "pop": pop.id, "routes": list })
        })
        .collect();
    print(&pops)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (loaded, routes) = load(&a.game)?;
    let game = &loaded.game;
    let eta = noise(a.eta)?;
    positive("--t", a.horizon)?;
    positive("--step", a.step)?;
    let z0 = initial_flow(&a.z0, game, &routes)?;
    let opts = IntegrateOptions {
        step: a.step,
        adaptive_tol: a.adaptive,
        stationarity_tol: if a.no_stop { None } else { IntegrateOptions::default().stationarity_tol },
        record_every: a.record_every,
        ..Default::default()
    };
    let traj = integrate(game, &routes, &z0, eta, a.horizon, &opts)?;

    let mut art = Artifacts::new();
    art.add("trajectory.csv", |w| export::write_trajectory_csv(w, game, &routes, &traj.times, &traj.states))?;
    if routes.shared_route_set() {
        art.add("aggregate.csv", |w| export::write_aggregate_csv(w, &routes, &traj).map(|_| ()))?;
    }
    art.add_json("trajectory.json", &export::trajectory_sidecar(game, &routes, &traj));
    art.flush(a.out.out.as_ref())?;

    let last = traj.last();
    print(&json!({
        "converged": traj.meta.converged,
        "final_residual": traj.meta.final_residual,
        "final_time": traj.times.last(),
        "steps": traj.meta.steps,
        "final_z": export::flow_by_population(game, &routes, last),
        "final_aggregate": aggregate_flow(&routes, last),
    }))
}

fn fixed_points(a: FixedPointArgs) -> Result<()> {
    let (loaded, routes) = load(&a.game)?;
    let game = &loaded.game;
    let eta = noise(a.eta)?;
    let set = find_all_fixed_points(game, &routes, eta, a.starts, a.seed)?;
    for f in &set.failures {
        eprintln!("warning: start {} did not converge (residual {:e})", f.start, f.residual);
    }
    if set.records.is_empty() {
        return Err(CliError { input: false, message: "no start converged to a fixed point".into() });
    }
    let records: Vec<_> = set.records.iter().map(|r| export::fixed_point_json(game, &routes, r)).collect();
    let mut art = Artifacts::new();
    art.add_json("fixed_points.json", &records);
    art.flush(a.out.out.as_ref())?;
    print(&records)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (loaded, routes) = load(&a.game)?;
    let game = &loaded.game;
    positive("--eta-max", a.eta_max)?;
    positive("--eta-min", a.eta_min)?;
    let mut eta_min = a.eta_min;
    if eta_min < ETA_FLOOR {
        eprintln!("warning: --eta-min {eta_min} is below the floor {ETA_FLOOR}; clamping to {ETA_FLOOR}");
        eta_min = ETA_FLOOR;
    }
    if a.eta_max <= eta_min {
        return Err(CliError::input(format!("--eta-max ({}) must exceed --eta-min ({eta_min})", a.eta_max)));
    }
    let coord = match &a.coord {
        Some(c) => Coordinate::parse(c, game, &routes)?,
        None => Coordinate::Link(0),
    };
    let grid = log_grid(a.eta_max, eta_min, a.points)?;
    let opts = ContinuationOptions { newborn_starts: a.starts, seed: a.seed, ..Default::default() };
    let sw = continuation::sweep(game, &routes, &grid, None, &opts)?;
    let events = continuation::detect_bifurcations(game, &routes, &sw)?;
    let limits = continuation::limit_equilibria(game, &routes, &sw, eta_min, a.limit_tol);
    let rows = bifurcation_diagram(game, &routes, &sw, &coord)?;
    let manifest = export::SweepManifest {
        grid: &sw.grid,
        branches: sw.branches.iter().map(|b| export::branch_json(game, &routes, b)).collect(),
        events: &events,
        limits: &limits,
    };

    let mut art = Artifacts::new();
    art.add("diagram.csv", |w| export::write_diagram_csv(w, &rows))?;
    art.add_json("sweep.json", &manifest);
    art.add_json("events.json", &events);
    art.flush(a.out.out.as_ref())?;

    print(&json!({
        "eta_max": a.eta_max,
        "eta_min": eta_min,
        "points": grid.len(),
        "branches": manifest.branches.len(),
        "events": events,
        "limits": limits.iter().map(|l| json!({
            "branch": l.branch,
            "stability": l.stability,
            "wardrop_gap": l.wardrop.gap(),
            "unresolved": l.unresolved,
        })).collect::<Vec<_>>(),
    }))
}

fn certify_cmd(a: CertifyArgs) -> Result<()> {
    let (loaded, routes) = load(&a.game)?;
    let game = &loaded.game;
    if a.samples == 0 {
        return Err(CliError::input("--samples must be at least 1"));
    }
    let report = if a.threshold {
        positive("--tol", a.tol)?;
        let est = estimate_eta_threshold(game, &routes, a.tol, a.samples, a.seed)?;
        serde_json::to_value(&est).expect("serializable")
    } else {
        let eta = noise(a.eta.expect("clap requires --eta without --threshold"))?;
        let cert = certify(game, &routes, eta, a.samples, a.seed)?;
        let mut v = serde_json::to_value(&cert).expect("serializable");
        if a.pairs > 0 {
            positive("--t", a.horizon)?;
            let pairs = random_pairs(game, &routes, a.pairs, a.seed);
            let check = verify_contraction_inequality(game, &routes, eta, cert.margin_c, &pairs, a.horizon)?;
            v["trajectory_check"] = serde_json::to_value(&check).expect("serializable");
        }
        v
    };
    let mut art = Artifacts::new();
    art.add_json("certificate.json", &report);
    art.flush(a.out.out.as_ref())?;
    print(&report)
}

fn wardrop(a: WardropArgs) -> Result<()> {
    let (loaded, routes) = load(&a.game)?;
    let game = &loaded.game;
    let z = load_flow_file(&a.flow, game, &routes)?;
    let w = check_wardrop(game, &routes, &z, a.tol);
    let s = check_strict(game, &routes, &z, a.tol);
    let pops: Vec<_> = game
        .populations()
        .iter()
        .enumerate()
        .map(|(p, pop)| {
            let pw = &w.populations[p];
            json!({
                "pop": pop.id,
                "min_cost": pw.min_cost,
                "gap": pw.gap,
                "violating_route": pw.worst_route.map(|r| json!({
                    "index": r,
                    "links": routes.route_label(game.network(), p, r),
                })),
                "strict_route": s.routes[p],
                "strict_margin": s.margins[p],
            })
        })
        .collect();
    let report = json!({
        "wardrop": w.is_equilibrium,
        "strict": s.strict,
        "gap": w.gap(),
        "tol": a.tol,
        "populations": pops,
    });
    let mut art = Artifacts::new();
    art.add_json("wardrop.json", &report);
    art.flush(a.out.out.as_ref())?;
    print(&report)
}

fn potential(a: PotentialArgs) -> Result<()> {
    let (loaded, routes) = load(&a.game)?;
    let game = &loaded.game;
    let eta = noise(a.eta)?;
    positive("--t", a.horizon)?;
    let z0 = initial_flow(&a.z0, game, &routes)?;
    let sym = check_symmetry_default(game, &routes);
    let mut report = json!({ "symmetric": sym.symmetric, "worst_violation": sym.worst_violation });
    report["worst"] = match sym.worst {
        Some((p, q, i, j)) => json!({
            "p": game.populations()[p].id,
            "q": game.populations()[q].id,
            "i": i,
            "j": j,
        }),
        None => serde_json::Value::Null,
    };
    let mut art = Artifacts::new();
    if sym.symmetric {
        let opts = IntegrateOptions { stationarity_tol: None, ..Default::default() };
        let traj = integrate(game, &routes, &z0, eta, a.horizon, &opts)?;
        match lyapunov_monitor(game, &routes, &traj, eta.get()) {
            Ok(lyap) => {
                report["lyapunov"] = json!({ "non_increasing": lyap.non_increasing, "max_increase": lyap.max_increase });
                art.add("lyapunov.csv", |w| {
                    writeln!(w, "t,v_eta")?;
                    for (t, v) in traj.times.iter().zip(&lyap.values) {
                        writeln!(w, "{},{}", num(*t), num(*v))?;
                    }
                    Ok(())
                })?;
                let minimizer = minimize_perturbed_potential(game, &routes, a.eta, &MinimizeOptions::default())?;
                let opts = FixedPointOptions { newton_first: true, ..Default::default() };
                let fp = find_fixed_point(game, &routes, eta, &minimizer, &opts)?;
                report["minimizer"] = json!({
                    "z": export::flow_by_population(game, &routes, &minimizer),
                    "distance_to_fixed_point": l1_distance(&minimizer, &fp.z),
                });
            }
            Err(e) if e.is_input_error() => report["lyapunov"] = json!({ "unavailable": e.to_string() }),
            Err(e) => return Err(e.into()),
        }
        if let Some(spec) = &loaded.toll {
            let (beckmann, toll) = spec.potential_parts(&routes, traj.last());
            report["potential_at_final_state"] = json!({ "beckmann": beckmann, "toll": toll, "v": beckmann + toll });
        }
    }
    art.add_json("potential.json", &report);
    art.flush(a.out.out.as_ref())?;
    print(&report)
}

fn agent_counts(spec: &str, pops: usize) -> Result<Vec<u64>> {
    let counts: Vec<u64> = spec
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| CliError::input(format!("bad agent count '{s}'"))))
        .collect::<Result<_>>()?;
    if counts.contains(&0) {
        return Err(CliError::input("agent counts must be positive"));
    }
    match counts.len() {
        1 => Ok(vec![counts[0]; pops]),
        n if n == pops => Ok(counts),
        n => Err(CliError::input(format!("{n} agent counts given for {pops} populations"))),
    }
}

fn agents(a: AgentArgs) -> Result<()> {
    let (loaded, routes) = load(&a.game)?;
    let game = &loaded.game;
    let counts = agent_counts(&a.n, game.num_populations())?;
    let eta = noise(a.eta)?;
    positive("--t", a.horizon)?;
    positive("--dt", a.dt)?;
    let z0 = initial_flow(&a.z0, game, &routes)?;
    let run = simulate_agents(game, &routes, eta, &counts, &z0, a.horizon, a.dt, a.seed)?;

    let comparison: Option<OdeComparison> = if a.compare {
        // ODE recorded on the agent output grid: RK4 substeps of at most 0.01.
        let substeps = (a.dt / 0.01).ceil().max(1.0) as usize;
        let opts = IntegrateOptions {
            step: a.dt / substeps as f64,
            stationarity_tol: None,
            record_every: substeps,
            ..Default::default()
        };
        let horizon = *run.times.last().expect("at least one sample");
        if horizon <= 0.0 {
            return Err(CliError::input("--t must cover at least one output step"));
        }
        let ode = integrate(game, &routes, &z0, eta, horizon, &opts)?;
        Some(compare_to_ode(&run.times, &run.states, &ode)?)
    } else {
        None
    };

    let mut art = Artifacts::new();
    art.add("agents.csv", |w| export::write_agents_csv(w, game, &routes, &run))?;
    if let Some(c) = &comparison {
        art.add_json("comparison.json", c);
    }
    art.flush(a.out.out.as_ref())?;

    print(&json!({
        "eta": run.eta,
        "agents": run.agents,
        "seed": run.seed,
        "events": run.events,
        "samples": run.times.len(),
        "final_z": export::flow_by_population(game, &routes, run.states.last().expect("at least one sample")),
        "sup_distance": comparison.as_ref().map(|c| c.sup_distance),
    }))
}
