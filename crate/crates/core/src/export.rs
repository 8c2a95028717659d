//! CSV and JSON writers. Every floating-point number is written with 17
//! significant digits so that doubles round-trip exactly.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::continuation::{BifurcationEvent, Branch, DiagramRow, LimitPoint};
use crate::dynamics::{aggregate_flow, Trajectory, TrajectoryMeta};
use crate::equilibria::{Eigenvalue, FixedPointRecord};
use crate::error::Result;
use crate::flow::RouteFlow;
use crate::game::Game;
use crate::meanfield::AgentTrajectory;
use crate::routes::RouteSet;
use crate::scalar::Scalar;
use crate::stability::Stability;

/// `x` with 17 significant digits in scientific notation.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON with floats written by [`num`]. Non-finite values become `null`.
struct SigFigs<'a>(PrettyFormatter<'a>);

impl Formatter for SigFigs<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(num(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn write_json<W: Write, S: Serialize + ?Sized>(w: &mut W, value: &S) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *w, SigFigs(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn json_string<S: Serialize + ?Sized>(value: &S) -> String {
    let mut buf = Vec::new();
    write_json(&mut buf, value).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[derive(Serialize)]
pub struct PopulationFlow {
    pub pop: String,
    pub flows: Vec<f64>,
}

/// Route flow grouped by population id.
pub fn flow_by_population<T: Scalar>(game: &Game<T>, routes: &RouteSet, z: &[T]) -> Vec<PopulationFlow> {
    game.populations()
        .iter()
        .enumerate()
        .map(|(p, pop)| PopulationFlow { pop: pop.id.clone(), flows: z[routes.block(p)].iter().map(|x| x.f64()).collect() })
        .collect()
}

/// `t,pop,route,flow` rows; `route` is the index in the enumeration order.
pub fn write_trajectory_csv<W: Write, T: Scalar>(w: &mut W, game: &Game<T>, routes: &RouteSet, times: &[f64], states: &[RouteFlow<T>]) -> Result<()> {
    writeln!(w, "t,pop,route,flow")?;
    for (t, z) in times.iter().zip(states) {
        for (p, pop) in game.populations().iter().enumerate() {
            for (r, x) in z[routes.block(p)].iter().enumerate() {
                writeln!(w, "{},{},{},{}", num(*t), pop.id, r, num(x.f64()))?;
            }
        }
    }
    Ok(())
}

/// `t,route,flow` rows of `w = Σ_p z^p`; writes nothing and returns false when route sets differ.
pub fn write_aggregate_csv<W: Write, T: Scalar>(w: &mut W, routes: &RouteSet, traj: &Trajectory<T>) -> Result<bool> {
    if !routes.shared_route_set() {
        return Ok(false);
    }
    writeln!(w, "t,route,flow")?;
    for (t, z) in traj.times.iter().zip(&traj.states) {
        let agg = aggregate_flow(routes, z).expect("shared route set");
        for (r, x) in agg.iter().enumerate() {
            writeln!(w, "{},{},{}", num(*t), r, num(x.f64()))?;
        }
    }
    Ok(true)
}

#[derive(Serialize)]
pub struct TrajectorySidecar<'a> {
    pub eta: f64,
    pub horizon: f64,
    pub samples: usize,
    pub routes: Vec<Vec<String>>,
    pub integrator: &'a TrajectoryMeta,
}

pub fn route_labels<T: Scalar>(game: &Game<T>, routes: &RouteSet) -> Vec<Vec<String>> {
    (0..routes.num_populations())
        .map(|p| (0..routes.num_routes(p)).map(|r| routes.route_label(game.network(), p, r)).collect())
        .collect()
}

pub fn trajectory_sidecar<'a, T: Scalar>(game: &Game<T>, routes: &RouteSet, traj: &'a Trajectory<T>) -> TrajectorySidecar<'a> {
    TrajectorySidecar {
        eta: traj.eta,
        horizon: *traj.times.last().unwrap_or(&0.0),
        samples: traj.times.len(),
        routes: route_labels(game, routes),
        integrator: &traj.meta,
    }
}

/// Trajectory rows with leading `seed,N` columns; `N` is the agent count of the row's population.
pub fn write_agents_csv<W: Write, T: Scalar>(w: &mut W, game: &Game<T>, routes: &RouteSet, run: &AgentTrajectory<T>) -> Result<()> {
    writeln!(w, "seed,N,t,pop,route,flow")?;
    for (t, z) in run.times.iter().zip(&run.states) {
        for (p, pop) in game.populations().iter().enumerate() {
            for (r, x) in z[routes.block(p)].iter().enumerate() {
                writeln!(w, "{},{},{},{},{},{}", run.seed, run.agents[p], num(*t), pop.id, r, num(x.f64()))?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
pub struct FixedPointJson {
    pub eta: f64,
    pub z: Vec<PopulationFlow>,
    pub residual: f64,
    pub eigenvalues: Vec<Eigenvalue>,
    pub stability: Stability,
    pub wardrop_gap: f64,
}

pub fn fixed_point_json<T: Scalar>(game: &Game<T>, routes: &RouteSet, rec: &FixedPointRecord<T>) -> FixedPointJson {
    FixedPointJson {
        eta: rec.eta,
        z: flow_by_population(game, routes, &rec.z),
        residual: rec.residual,
        eigenvalues: rec.eigenvalues.clone(),
        stability: rec.stability,
        wardrop_gap: rec.wardrop_gap,
    }
}

pub fn write_diagram_csv<W: Write>(w: &mut W, rows: &[DiagramRow]) -> Result<()> {
    writeln!(w, "eta,branch,stability,coord_name,value")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", num(r.eta), r.branch, r.stability, r.coord_name, num(r.value))?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct BranchJson {
    pub id: usize,
    pub origin: String,
    pub terminated: Option<String>,
    pub eta_start: f64,
    pub eta_end: f64,
    pub points: usize,
    pub stability_start: Stability,
    pub stability_end: Stability,
    pub z_end: Vec<PopulationFlow>,
}

pub fn branch_json<T: Scalar>(game: &Game<T>, routes: &RouteSet, b: &Branch<T>) -> BranchJson {
    BranchJson {
        id: b.id,
        origin: b.origin.clone(),
        terminated: b.terminated.clone(),
        eta_start: b.points[0].eta,
        eta_end: b.last().eta,
        points: b.points.len(),
        stability_start: b.points[0].stability,
        stability_end: b.last().stability,
        z_end: flow_by_population(game, routes, &b.last().z),
    }
}

#[derive(Serialize)]
pub struct SweepManifest<'a> {
    pub grid: &'a [f64],
    pub branches: Vec<BranchJson>,
    pub events: &'a [BifurcationEvent],
    pub limits: &'a [LimitPoint],
}
