//! Transportation multigraph, populations and per-population link delays.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Separable link delay with non-negative coefficients.
///
/// Every variant is a polynomial in the link flow, so values, derivatives and
/// integrals are available in closed form and the delay is non-decreasing on
/// `[0, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub enum DelayFunction<T = f64> {
    /// `a`
    Constant(T),
    /// `a + b f`
    Affine { a: T, b: T },
    /// `b f`
    Linear(T),
    /// `c0 + c1 f + c2 f^2 + ...`
    Polynomial(Vec<T>),
}

impl<T: Scalar> DelayFunction<T> {
    pub fn constant(a: T) -> Self {
        DelayFunction::Constant(a)
    }

    pub fn affine(a: T, b: T) -> Self {
        DelayFunction::Affine { a, b }
    }

    pub fn linear(b: T) -> Self {
        DelayFunction::Linear(b)
    }

    /// Coefficients in increasing degree.
    pub fn coefficients(&self) -> Vec<T> {
        match self {
            DelayFunction::Constant(a) => vec![*a],
            DelayFunction::Affine { a, b } => vec![*a, *b],
            DelayFunction::Linear(b) => vec![T::zero(), *b],
            DelayFunction::Polynomial(c) => c.clone(),
        }
    }

    pub fn eval(&self, f: T) -> T {
        match self {
            DelayFunction::Constant(a) => *a,
            DelayFunction::Affine { a, b } => *a + *b * f,
            DelayFunction::Linear(b) => *b * f,
            DelayFunction::Polynomial(c) => c.iter().rev().fold(T::zero(), |acc, &k| acc * f + k),
        }
    }

    pub fn derivative(&self, f: T) -> T {
        match self {
            DelayFunction::Constant(_) => T::zero(),
            DelayFunction::Affine { b, .. } | DelayFunction::Linear(b) => *b,
            DelayFunction::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(T::zero(), |acc, (k, &ck)| acc * f + T::of(k as f64) * ck),
        }
    }

    /// `∫_0^f τ(s) ds`.
    pub fn integral(&self, f: T) -> T {
        self.coefficients()
            .iter()
            .enumerate()
            .rev()
            .fold(T::zero(), |acc, (k, &ck)| acc * f + ck / T::of((k + 1) as f64))
            * f
    }

    /// True when the delay does not depend on the flow.
    pub fn is_constant(&self) -> bool {
        self.coefficients().iter().skip(1).all(|c| c.is_zero())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let coeffs = self.coefficients();
        if coeffs.is_empty() {
            return Err("polynomial delay needs at least one coefficient".into());
        }
        for c in coeffs {
            if !c.is_finite() {
                return Err("delay coefficient is not finite".into());
            }
            if c < T::zero() {
                return Err(format!("delay coefficient {c} is negative"));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> DelayFunction<U> {
        let c = |x: T| U::of(x.f64());
        match self {
            DelayFunction::Constant(a) => DelayFunction::Constant(c(*a)),
            DelayFunction::Affine { a, b } => DelayFunction::Affine { a: c(*a), b: c(*b) },
            DelayFunction::Linear(b) => DelayFunction::Linear(c(*b)),
            DelayFunction::Polynomial(v) => DelayFunction::Polynomial(v.iter().map(|&x| c(x)).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub id: String,
    pub tail: usize,
    pub head: usize,
}

/// Directed multigraph; parallel links are allowed.
#[derive(Clone, Debug)]
pub struct Network {
    nodes: Vec<String>,
    links: Vec<Link>,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
}

impl Network {
    /// Builds a network from node names and `(id, tail, head)` triples.
    pub fn new<S: AsRef<str>>(nodes: &[S], links: &[(S, S, S)]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Validation("network has no nodes".into()));
        }
        if links.is_empty() {
            return Err(Error::Validation("network has no links".into()));
        }
        let mut node_index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.as_ref().to_string(), i).is_some() {
                return Err(Error::Validation(format!("duplicate node id '{}'", n.as_ref())));
            }
        }
        let mut link_index = HashMap::new();
        let mut out = Vec::with_capacity(links.len());
        for (k, (id, tail, head)) in links.iter().enumerate() {
            let id = id.as_ref();
            let lookup = |n: &S| {
                node_index.get(n.as_ref()).copied().ok_or_else(|| {
                    Error::Validation(format!("link '{id}' references unknown node '{}'", n.as_ref()))
                })
            };
            let (t, h) = (lookup(tail)?, lookup(head)?);
            if link_index.insert(id.to_string(), k).is_some() {
                return Err(Error::Validation(format!("duplicate link id '{id}'")));
            }
            out.push(Link { id: id.to_string(), tail: t, head: h });
        }
        Ok(Network {
            nodes: nodes.iter().map(|n| n.as_ref().to_string()).collect(),
            links: out,
            node_index,
            link_index,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn node(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    /// Outgoing link indices of `node`, in declaration order.
    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.links.iter().enumerate().filter(move |(_, l)| l.tail == node).map(|(k, _)| k)
    }
}

#[derive(Clone, Debug)]
pub struct Population<T = f64> {
    pub id: String,
    pub origin: usize,
    pub destination: usize,
    pub throughput: T,
    /// Indexed by link position in the network.
    pub delays: Vec<DelayFunction<T>>,
}

/// Heterogeneous routing game: network, populations, delays and throughputs.
#[derive(Clone, Debug)]
pub struct Game<T = f64> {
    network: Network,
    populations: Vec<Population<T>>,
}

impl<T: Scalar> Game<T> {
    /// Validates and assembles a game.
    ///
    /// Route existence is checked separately by route enumeration.
    pub fn new(network: Network, populations: Vec<Population<T>>) -> Result<Self> {
        if populations.is_empty() {
            return Err(Error::Validation("game has no populations".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &populations {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Validation(format!("duplicate population id '{}'", p.id)));
            }
            if !p.throughput.is_finite() || p.throughput < T::zero() {
                return Err(Error::Validation(format!(
                    "population '{}' has negative or non-finite throughput {}",
                    p.id, p.throughput
                )));
            }
            if p.origin >= network.nodes.len() || p.destination >= network.nodes.len() {
                return Err(Error::Validation(format!("population '{}' references unknown node", p.id)));
            }
            if p.origin == p.destination {
                return Err(Error::Validation(format!("population '{}' has identical origin and destination", p.id)));
            }
            if p.delays.len() != network.num_links() {
                return Err(Error::Validation(format!(
                    "population '{}' defines {} delays for {} links",
                    p.id,
                    p.delays.len(),
                    network.num_links()
                )));
            }
            for (k, d) in p.delays.iter().enumerate() {
                d.validate().map_err(|m| {
                    Error::Validation(format!("population '{}', link '{}': {m}", p.id, network.links[k].id))
                })?;
            }
        }
        Ok(Game { network, populations })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn populations(&self) -> &[Population<T>] {
        &self.populations
    }

    pub fn num_populations(&self) -> usize {
        self.populations.len()
    }

    pub fn throughputs(&self) -> Vec<T> {
        self.populations.iter().map(|p| p.throughput).collect()
    }

    pub fn total_throughput(&self) -> T {
        self.populations.iter().map(|p| p.throughput).sum()
    }

    pub fn population_index(&self, id: &str) -> Option<usize> {
        self.populations.iter().position(|p| p.id == id)
    }

    /// Same game evaluated in another scalar type.
    pub fn cast<U: Scalar>(&self) -> Game<U> {
        Game {
            network: self.network.clone(),
            populations: self
                .populations
                .iter()
                .map(|p| Population {
                    id: p.id.clone(),
                    origin: p.origin,
                    destination: p.destination,
                    throughput: U::of(p.throughput.f64()),
                    delays: p.delays.iter().map(|d| d.cast()).collect(),
                })
                .collect(),
        }
    }
}
