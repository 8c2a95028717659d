//! JSON game files and flow files.
//!
//! A game file lists `nodes`, `links` (`{id, tail, head}`) and `populations`
//! (`{id, origin, destination, throughput, delays}`), where `delays` maps every
//! link id to `{type, params}` with `type` one of `constant` (`[a]`), `affine`
//! (`[a, b]`), `linear` (`[b]`) or `poly` (`[c0, c1, ...]`).
//!
//! With `"mode": "toll"` the populations omit `delays`; instead the file gives
//! population-independent `base_delays`, per-link `tolls` and per-population
//! `sensitivities`, and the loader composes `τ^p_e(f) = τ_e(f) + α_p ω_e`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flow::RouteFlow;
use crate::game::{DelayFunction, Game, Network, Population};
use crate::potential::TollGameSpec;
use crate::routes::RouteSet;
use crate::scalar::Scalar;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameDoc {
    #[serde(default)]
    mode: Option<String>,
    nodes: Vec<String>,
    links: Vec<LinkDoc>,
    populations: Vec<PopulationDoc>,
    #[serde(default)]
    base_delays: Option<BTreeMap<String, DelayDoc>>,
    #[serde(default)]
    tolls: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    sensitivities: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    id: String,
    tail: String,
    head: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationDoc {
    id: String,
    origin: String,
    destination: String,
    throughput: f64,
    #[serde(default)]
    delays: Option<BTreeMap<String, DelayDoc>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelayDoc {
    #[serde(rename = "type")]
    kind: String,
    params: Vec<f64>,
}

impl DelayDoc {
    fn build<T: Scalar>(&self, ctx: &str) -> Result<DelayFunction<T>> {
        let arity = |n: usize| {
            if self.params.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "{ctx}: delay type '{}' takes {n} parameter(s), got {}",
                    self.kind,
                    self.params.len()
                )))
            }
        };
        let p = |i: usize| T::of(self.params[i]);
        match self.kind.as_str() {
            "constant" => arity(1).map(|_| DelayFunction::Constant(p(0))),
            "affine" => arity(2).map(|_| DelayFunction::Affine { a: p(0), b: p(1) }),
            "linear" => arity(1).map(|_| DelayFunction::Linear(p(0))),
            "poly" if !self.params.is_empty() => {
                Ok(DelayFunction::Polynomial(self.params.iter().map(|&x| T::of(x)).collect()))
            }
            "poly" => Err(Error::Parse(format!("{ctx}: delay type 'poly' needs coefficients"))),
            other => Err(Error::Parse(format!("{ctx}: unknown delay type '{other}'"))),
        }
    }
}

/// A parsed game, plus the toll structure when the file used toll mode.
#[derive(Clone, Debug)]
pub struct LoadedGame<T = f64> {
    pub game: Game<T>,
    pub toll: Option<TollGameSpec<T>>,
}

pub fn load_game<T: Scalar>(path: impl AsRef<Path>) -> Result<Game<T>> {
    load_game_file(path).map(|g| g.game)
}

pub fn load_game_file<T: Scalar>(path: impl AsRef<Path>) -> Result<LoadedGame<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_game(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_game<T: Scalar>(text: &str) -> Result<LoadedGame<T>> {
    let doc: GameDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let links: Vec<(&str, &str, &str)> =
        doc.links.iter().map(|l| (l.id.as_str(), l.tail.as_str(), l.head.as_str())).collect();
    let network = Network::new(&doc.nodes.iter().map(String::as_str).collect::<Vec<_>>(), &links)?;

    let node = |id: &str, pop: &str| {
        network
            .node(id)
            .ok_or_else(|| Error::Validation(format!("population '{pop}' references unknown node '{id}'")))
    };

    match doc.mode.as_deref() {
        None | Some("standard") => {
            if doc.base_delays.is_some() || doc.tolls.is_some() || doc.sensitivities.is_some() {
                return Err(Error::Parse("toll keys present but mode is not \"toll\"".into()));
            }
            let mut pops = Vec::with_capacity(doc.populations.len());
            for p in &doc.populations {
                let delays = p
                    .delays
                    .as_ref()
                    .ok_or_else(|| Error::Parse(format!("population '{}': missing field `delays`", p.id)))?;
                pops.push(Population {
                    id: p.id.clone(),
                    origin: node(&p.origin, &p.id)?,
                    destination: node(&p.destination, &p.id)?,
                    throughput: T::of(p.throughput),
                    delays: delay_vector(&network, delays, &format!("population '{}'", p.id))?,
                });
            }
            Ok(LoadedGame { game: Game::new(network, pops)?, toll: None })
        }
        Some("toll") => {
            let base = doc.base_delays.as_ref().ok_or_else(|| Error::Parse("toll mode: missing `base_delays`".into()))?;
            let tolls = doc.tolls.as_ref().ok_or_else(|| Error::Parse("toll mode: missing `tolls`".into()))?;
            let sens =
                doc.sensitivities.as_ref().ok_or_else(|| Error::Parse("toll mode: missing `sensitivities`".into()))?;
            let base_delays = delay_vector(&network, base, "base_delays")?;
            let mut toll_vec = Vec::with_capacity(network.num_links());
            for l in network.links() {
                let w = *tolls
                    .get(&l.id)
                    .ok_or_else(|| Error::Validation(format!("tolls: no toll for link '{}'", l.id)))?;
                toll_vec.push(T::of(w));
            }
            check_keys(tolls.keys(), |k| network.link(k).is_some(), "tolls", "link")?;
            check_keys(sens.keys(), |k| doc.populations.iter().any(|p| p.id == k), "sensitivities", "population")?;
            let mut sensitivities = Vec::new();
            let mut meta = Vec::new();
            for p in &doc.populations {
                if p.delays.is_some() {
                    return Err(Error::Parse(format!("population '{}': `delays` not allowed in toll mode", p.id)));
                }
                let a = *sens
                    .get(&p.id)
                    .ok_or_else(|| Error::Validation(format!("sensitivities: none for population '{}'", p.id)))?;
                sensitivities.push(T::of(a));
                meta.push((p.id.clone(), node(&p.origin, &p.id)?, node(&p.destination, &p.id)?, T::of(p.throughput)));
            }
            let spec = TollGameSpec::new(base_delays, toll_vec, sensitivities)?;
            let game = spec.expand(network, meta)?;
            Ok(LoadedGame { game, toll: Some(spec) })
        }
        Some(other) => Err(Error::Parse(format!("unknown mode '{other}'"))),
    }
}

fn check_keys<'a>(
    keys: impl Iterator<Item = &'a String>,
    known: impl Fn(&str) -> bool,
    field: &str,
    what: &str,
) -> Result<()> {
    for k in keys {
        if !known(k) {
            return Err(Error::Validation(format!("{field}: unknown {what} '{k}'")));
        }
    }
    Ok(())
}

fn delay_vector<T: Scalar>(
    network: &Network,
    delays: &BTreeMap<String, DelayDoc>,
    ctx: &str,
) -> Result<Vec<DelayFunction<T>>> {
    check_keys(delays.keys(), |k| network.link(k).is_some(), ctx, "link")?;
    network
        .links()
        .iter()
        .map(|l| {
            delays
                .get(&l.id)
                .ok_or_else(|| Error::Validation(format!("{ctx}: no delay for link '{}'", l.id)))
                .and_then(|d| d.build(&format!("{ctx}, link '{}'", l.id)))
        })
        .collect()
}

/// Reads `{pop id: {route index: flow}}`; unlisted routes carry zero flow.
pub fn load_flow_file<T: Scalar>(path: impl AsRef<Path>, game: &Game<T>, routes: &RouteSet) -> Result<RouteFlow<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_flow(&text, game, routes)
}

pub fn parse_flow<T: Scalar>(text: &str, game: &Game<T>, routes: &RouteSet) -> Result<RouteFlow<T>> {
    let doc: BTreeMap<String, BTreeMap<String, f64>> =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut z = vec![T::zero(); routes.dim()];
    for (pid, entries) in &doc {
        let p = game
            .population_index(pid)
            .ok_or_else(|| Error::Validation(format!("flow file: unknown population '{pid}'")))?;
        for (r, &flow) in entries {
            let r: usize = r
                .parse()
                .map_err(|_| Error::Parse(format!("flow file: population '{pid}': bad route index '{r}'")))?;
            if r >= routes.num_routes(p) {
                return Err(Error::Validation(format!(
                    "flow file: population '{pid}' has {} routes, index {r} out of range",
                    routes.num_routes(p)
                )));
            }
            z[routes.block(p).start + r] = T::of(flow);
        }
    }
    RouteFlow::new(game, routes, z)
}
