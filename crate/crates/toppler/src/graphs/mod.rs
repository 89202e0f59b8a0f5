//! Lazily materialized infinite graph families.
//!
//! Every family exposes canonical vertex encodings, neighbor enumeration in a
//! deterministic (lexicographic) order, closed-form distance from the origin,
//! and open-ball enumeration. Instances are immutable after construction and
//! shareable across threads; the Galton-Watson arena caches sampled children
//! behind internal synchronization.

mod gw;
mod lamplighter;

pub use gw::GwGraph;
pub use lamplighter::LamplighterGraph;

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Canonical per-family vertex encoding. Two keys are equal iff they denote
/// the same vertex; lamp lists are kept sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VertexKey {
    /// Integer coordinates on Z^d.
    Lattice(Vec<i64>),
    /// (x, y) on the comb: Z^2 with all horizontal edges off the x-axis
    /// spine removed.
    Comb(i64, i64),
    /// Path of child indices from the root of a rooted tree (the root is the
    /// empty path). Also used for the (d+1)-regular tree, where the root's
    /// extra branch is indexed as child d.
    Tree(Vec<u32>),
    /// Pair of regular-tree paths for a product T_d x T_k.
    ProdTree(Vec<u32>, Vec<u32>),
    /// Node index into a seeded Galton-Watson arena.
    Gw(u32),
    /// (sorted on-lamp positions, lamplighter position).
    Lamp(Vec<i64>, i64),
}

fn fmt_tree_path(path: &[u32], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "r")?;
    for c in path {
        write!(f, ".{c}")?;
    }
    Ok(())
}

impl fmt::Display for VertexKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexKey::Lattice(coords) => {
                write!(f, "(")?;
                for (i, c) in coords.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            VertexKey::Comb(x, y) => write!(f, "({x},{y})"),
            VertexKey::Tree(path) => fmt_tree_path(path, f),
            VertexKey::ProdTree(a, b) => {
                fmt_tree_path(a, f)?;
                write!(f, "|")?;
                fmt_tree_path(b, f)
            }
            VertexKey::Gw(i) => write!(f, "#{i}"),
            VertexKey::Lamp(lamps, y) => {
                write!(f, "{{")?;
                for (i, l) in lamps.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "}}@{y}")
            }
        }
    }
}

/// An infinite graph instance. `neighbors` returns vertices in ascending
/// `VertexKey` order; `distance` is the graph distance from the origin,
/// computed in closed form per family.
pub trait Graph: Send + Sync {
    fn family_name(&self) -> &'static str;

    fn origin(&self) -> VertexKey;

    fn neighbors(&self, v: &VertexKey) -> Result<Vec<VertexKey>>;

    fn degree(&self, v: &VertexKey) -> Result<usize> {
        Ok(self.neighbors(v)?.len())
    }

    fn distance(&self, v: &VertexKey) -> Result<u64>;

    /// The open ball {u : d(u, o) < n}, in ascending key order. `cap` guards
    /// against runaway enumeration.
    fn ball(&self, n: u64, cap: usize) -> Result<Vec<VertexKey>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut seen: HashSet<VertexKey> = HashSet::new();
        let mut queue: VecDeque<(VertexKey, u64)> = VecDeque::new();
        let o = self.origin();
        seen.insert(o.clone());
        queue.push_back((o, 0));
        while let Some((v, dv)) = queue.pop_front() {
            if dv + 1 >= n {
                continue;
            }
            for u in self.neighbors(&v)? {
                if seen.insert(u.clone()) {
                    if seen.len() > cap {
                        return Err(Error::ResourceGuard(format!(
                            "ball({n}) exceeds cap {cap} vertices"
                        )));
                    }
                    queue.push_back((u, dv + 1));
                }
            }
        }
        let mut out: Vec<VertexKey> = seen.into_iter().collect();
        out.sort();
        Ok(out)
    }

    /// Parses a vertex from its canonical display form.
    fn parse_vertex(&self, s: &str) -> Result<VertexKey>;

    /// Closed-form Avez entropy of the simple random walk, for families where
    /// it is known (currently the product trees).
    fn closed_form_entropy(&self) -> Option<f64> {
        None
    }

    fn invalid(&self, v: &VertexKey) -> Error {
        Error::InvalidVertex {
            family: self.family_name().to_string(),
            vertex: v.to_string(),
        }
    }
}

/// Family tag plus parameters; `build` materializes an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphFamily {
    Lattice { d: usize },
    Comb,
    /// Rooted tree in which every vertex has exactly d children.
    Dary { d: u32 },
    /// The (d+1)-regular tree.
    Regular { d: u32 },
    /// Product of regular trees T_d x T_k.
    ProdTree { d: u32, k: u32 },
    Gw {
        offspring: Vec<(u32, f64)>,
        seed: u64,
        depth: u32,
    },
    Lamplighter,
}

impl GraphFamily {
    pub fn build(&self) -> Result<Arc<dyn Graph>> {
        match self {
            GraphFamily::Lattice { d } => {
                if *d < 1 {
                    return Err(Error::Parameter("lattice requires d >= 1".into()));
                }
                Ok(Arc::new(LatticeGraph { d: *d }))
            }
            GraphFamily::Comb => Ok(Arc::new(CombGraph)),
            GraphFamily::Dary { d } => {
                if *d < 2 {
                    return Err(Error::Parameter("d-ary tree requires d >= 2".into()));
                }
                Ok(Arc::new(TreeGraph {
                    d: *d,
                    regular: false,
                }))
            }
            GraphFamily::Regular { d } => {
                if *d < 1 {
                    return Err(Error::Parameter("regular tree requires d >= 1".into()));
                }
                Ok(Arc::new(TreeGraph {
                    d: *d,
                    regular: true,
                }))
            }
            GraphFamily::ProdTree { d, k } => {
                if !(*d >= *k && *k >= 1 && *d + *k >= 3) {
                    return Err(Error::Parameter(
                        "product tree requires d >= k >= 1 and d + k >= 3".into(),
                    ));
                }
                Ok(Arc::new(ProdTreeGraph { d: *d, k: *k }))
            }
            GraphFamily::Gw {
                offspring,
                seed,
                depth,
            } => Ok(Arc::new(GwGraph::materialize(offspring, *seed, *depth)?)),
            GraphFamily::Lamplighter => Ok(Arc::new(LamplighterGraph)),
        }
    }

    /// Parses a CLI graph specification string such as `lattice:d=2`, `comb`,
    /// `dary:d=3`, `regtree:d=2`, `prodtree:d=3,k=2`,
    /// `gw:dist=0:0.3,3:0.7;seed=42`, or `lamplighter`.
    pub fn parse(spec: &str) -> Result<GraphFamily> {
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (spec, None),
        };
        let params = |rest: Option<&str>| -> Result<Vec<(String, String)>> {
            let mut out = Vec::new();
            if let Some(rest) = rest {
                for part in rest.split(&[';', ','][..]) {
                    let (k, v) = part.split_once('=').ok_or_else(|| {
                        Error::Parse(format!("expected key=value in graph spec, got `{part}`"))
                    })?;
                    out.push((k.to_string(), v.to_string()));
                }
            }
            Ok(out)
        };
        let get_u32 = |params: &[(String, String)], key: &str| -> Result<u32> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .ok_or_else(|| Error::Parse(format!("graph spec missing `{key}`")))?
                .1
                .parse()
                .map_err(|e| Error::Parse(format!("bad `{key}`: {e}")))
        };
        match name {
            "lattice" => {
                let d = get_u32(&params(rest)?, "d")? as usize;
                Ok(GraphFamily::Lattice { d })
            }
            "comb" => Ok(GraphFamily::Comb),
            "dary" => Ok(GraphFamily::Dary {
                d: get_u32(&params(rest)?, "d")?,
            }),
            "regtree" => Ok(GraphFamily::Regular {
                d: get_u32(&params(rest)?, "d")?,
            }),
            "prodtree" => {
                let ps = params(rest)?;
                Ok(GraphFamily::ProdTree {
                    d: get_u32(&ps, "d")?,
                    k: get_u32(&ps, "k")?,
                })
            }
            "gw" => {
                // The dist value itself contains ':' and ',' so it cannot go
                // through the generic key=value splitter.
                let rest =
                    rest.ok_or_else(|| Error::Parse("gw spec requires dist= and seed=".into()))?;
                let mut offspring = Vec::new();
                let mut seed = None;
                let mut depth = 16u32;
                for part in rest.split(';') {
                    let (k, v) = part.split_once('=').ok_or_else(|| {
                        Error::Parse(format!("expected key=value in gw spec, got `{part}`"))
                    })?;
                    match k {
                        "dist" => {
                            for pair in v.split(',') {
                                let (c, p) = pair.split_once(':').ok_or_else(|| {
                                    Error::Parse(format!(
                                        "expected count:prob in gw dist, got `{pair}`"
                                    ))
                                })?;
                                let c: u32 = c
                                    .parse()
                                    .map_err(|e| Error::Parse(format!("bad gw count: {e}")))?;
                                let p: f64 = p
                                    .parse()
                                    .map_err(|e| Error::Parse(format!("bad gw prob: {e}")))?;
                                offspring.push((c, p));
                            }
                        }
                        "seed" => {
                            seed = Some(
                                v.parse()
                                    .map_err(|e| Error::Parse(format!("bad gw seed: {e}")))?,
                            );
                        }
                        "depth" => {
                            depth = v
                                .parse()
                                .map_err(|e| Error::Parse(format!("bad gw depth: {e}")))?;
                        }
                        other => {
                            return Err(Error::Parse(format!("unknown gw parameter `{other}`")))
                        }
                    }
                }
                let seed =
                    seed.ok_or_else(|| Error::Parse("gw spec missing `seed`".to_string()))?;
                if offspring.is_empty() {
                    return Err(Error::Parse("gw spec missing `dist`".to_string()));
                }
                Ok(GraphFamily::Gw {
                    offspring,
                    seed,
                    depth,
                })
            }
            "lamplighter" => Ok(GraphFamily::Lamplighter),
            other => Err(Error::Parse(format!("unknown graph family `{other}`"))),
        }
    }
}

fn parse_int_pair(s: &str) -> Option<(i64, i64)> {
    let s = s.strip_prefix('(')?.strip_suffix(')')?;
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

pub struct LatticeGraph {
    d: usize,
}

impl LatticeGraph {
    fn coords<'a>(&self, v: &'a VertexKey) -> Result<&'a [i64]> {
        match v {
            VertexKey::Lattice(c) if c.len() == self.d => Ok(c),
            _ => Err(self.invalid(v)),
        }
    }
}

impl Graph for LatticeGraph {
    fn family_name(&self) -> &'static str {
        "lattice"
    }

    fn origin(&self) -> VertexKey {
        VertexKey::Lattice(vec![0; self.d])
    }

    fn neighbors(&self, v: &VertexKey) -> Result<Vec<VertexKey>> {
        let c = self.coords(v)?;
        let mut out = Vec::with_capacity(2 * self.d);
        for i in 0..self.d {
            for delta in [-1i64, 1] {
                let mut n = c.to_vec();
                n[i] += delta;
                out.push(VertexKey::Lattice(n));
            }
        }
        out.sort();
        Ok(out)
    }

    fn degree(&self, v: &VertexKey) -> Result<usize> {
        self.coords(v)?;
        Ok(2 * self.d)
    }

    fn distance(&self, v: &VertexKey) -> Result<u64> {
        Ok(self.coords(v)?.iter().map(|c| c.unsigned_abs()).sum())
    }

    fn parse_vertex(&self, s: &str) -> Result<VertexKey> {
        let inner = s
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("bad lattice vertex `{s}`")))?;
        let coords: Vec<i64> = inner
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad lattice vertex `{s}`: {e}")))?;
        if coords.len() != self.d {
            return Err(Error::Parse(format!(
                "lattice vertex `{s}` has {} coordinates, expected {}",
                coords.len(),
                self.d
            )));
        }
        Ok(VertexKey::Lattice(coords))
    }
}

pub struct CombGraph;

impl CombGraph {
    fn coords(&self, v: &VertexKey) -> Result<(i64, i64)> {
        match v {
            VertexKey::Comb(x, y) => Ok((*x, *y)),
            _ => Err(self.invalid(v)),
        }
    }
}

impl Graph for CombGraph {
    fn family_name(&self) -> &'static str {
        "comb"
    }

    fn origin(&self) -> VertexKey {
        VertexKey::Comb(0, 0)
    }

    fn neighbors(&self, v: &VertexKey) -> Result<Vec<VertexKey>> {
        let (x, y) = self.coords(v)?;
        let mut out = vec![VertexKey::Comb(x, y - 1), VertexKey::Comb(x, y + 1)];
        if y == 0 {
            out.push(VertexKey::Comb(x - 1, 0));
            out.push(VertexKey::Comb(x + 1, 0));
        }
        out.sort();
        Ok(out)
    }

    fn degree(&self, v: &VertexKey) -> Result<usize> {
        let (_, y) = self.coords(v)?;
        Ok(if y == 0 { 4 } else { 2 })
    }

    fn distance(&self, v: &VertexKey) -> Result<u64> {
        let (x, y) = self.coords(v)?;
        Ok(x.unsigned_abs() + y.unsigned_abs())
    }

    fn parse_vertex(&self, s: &str) -> Result<VertexKey> {
        parse_int_pair(s)
            .map(|(x, y)| VertexKey::Comb(x, y))
            .ok_or_else(|| Error::Parse(format!("bad comb vertex `{s}`")))
    }
}

/// Rooted d-ary tree, or the (d+1)-regular tree when `regular` is set (the
/// root then carries one extra branch indexed as child d).
pub struct TreeGraph {
    d: u32,
    regular: bool,
}

impl TreeGraph {
    fn check_path(&self, v: &VertexKey) -> Result<()> {
        let path = match v {
            VertexKey::Tree(p) => p,
            _ => return Err(self.invalid(v)),
        };
        self.check_raw(path).map_err(|_| self.invalid(v))
    }

    fn check_raw(&self, path: &[u32]) -> std::result::Result<(), ()> {
        for (i, &c) in path.iter().enumerate() {
            let limit = if self.regular && i == 0 { self.d + 1 } else { self.d };
            if c >= limit {
                return Err(());
            }
        }
        Ok(())
    }

    fn raw_neighbors(&self, path: &[u32]) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        if !path.is_empty() {
            out.push(path[..path.len() - 1].to_vec());
        }
        let child_count = if self.regular && path.is_empty() {
            self.d + 1
        } else {
            self.d
        };
        for c in 0..child_count {
            let mut child = path.to_vec();
            child.push(c);
            out.push(child);
        }
        out
    }
}

impl Graph for TreeGraph {
    fn family_name(&self) -> &'static str {
        if self.regular {
            "regtree"
        } else {
            "dary"
        }
    }

    fn origin(&self) -> VertexKey {
        VertexKey::Tree(Vec::new())
    }

    fn neighbors(&self, v: &VertexKey) -> Result<Vec<VertexKey>> {
        self.check_path(v)?;
        let path = match v {
            VertexKey::Tree(p) => p,
            _ => unreachable!(),
        };
        let mut out: Vec<VertexKey> = self
            .raw_neighbors(path)
            .into_iter()
            .map(VertexKey::Tree)
            .collect();
        out.sort();
        Ok(out)
    }

    fn distance(&self, v: &VertexKey) -> Result<u64> {
        self.check_path(v)?;
        match v {
            VertexKey::Tree(p) => Ok(p.len() as u64),
            _ => unreachable!(),
        }
    }

    fn parse_vertex(&self, s: &str) -> Result<VertexKey> {
        let path = parse_tree_path(s)?;
        let v = VertexKey::Tree(path);
        self.check_path(&v)?;
        Ok(v)
    }
}

fn parse_tree_path(s: &str) -> Result<Vec<u32>> {
    let rest = s
        .strip_prefix('r')
        .ok_or_else(|| Error::Parse(format!("bad tree vertex `{s}`")))?;
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    rest.strip_prefix('.')
        .ok_or_else(|| Error::Parse(format!("bad tree vertex `{s}`")))?
        .split('.')
        .map(|p| {
            p.parse()
                .map_err(|e| Error::Parse(format!("bad tree vertex `{s}`: {e}")))
        })
        .collect()
}

/// Cartesian product of the regular trees T_d and T_k; (d+k+2)-regular.
pub struct ProdTreeGraph {
    d: u32,
    k: u32,
}

impl ProdTreeGraph {
    fn components(&self) -> (TreeGraph, TreeGraph) {
        (
            TreeGraph {
                d: self.d,
                regular: true,
            },
            TreeGraph {
                d: self.k,
                regular: true,
            },
        )
    }

    fn check(&self, v: &VertexKey) -> Result<()> {
        let (ta, tb) = self.components();
        match v {
            VertexKey::ProdTree(a, b)
                if ta.check_raw(a).is_ok() && tb.check_raw(b).is_ok() =>
            {
                Ok(())
            }
            _ => Err(self.invalid(v)),
        }
    }
}

impl Graph for ProdTreeGraph {
    fn family_name(&self) -> &'static str {
        "prodtree"
    }

    fn origin(&self) -> VertexKey {
        VertexKey::ProdTree(Vec::new(), Vec::new())
    }

    fn neighbors(&self, v: &VertexKey) -> Result<Vec<VertexKey>> {
        self.check(v)?;
        let (a, b) = match v {
            VertexKey::ProdTree(a, b) => (a, b),
            _ => unreachable!(),
        };
        let (ta, tb) = self.components();
        let mut out = Vec::with_capacity((self.d + self.k + 2) as usize);
        for a2 in ta.raw_neighbors(a) {
            out.push(VertexKey::ProdTree(a2, b.clone()));
        }
        for b2 in tb.raw_neighbors(b) {
            out.push(VertexKey::ProdTree(a.clone(), b2));
        }
        out.sort();
        Ok(out)
    }

    fn distance(&self, v: &VertexKey) -> Result<u64> {
        self.check(v)?;
        match v {
            VertexKey::ProdTree(a, b) => Ok((a.len() + b.len()) as u64),
            _ => unreachable!(),
        }
    }

    fn parse_vertex(&self, s: &str) -> Result<VertexKey> {
        let (a, b) = s
            .split_once('|')
            .ok_or_else(|| Error::Parse(format!("bad product-tree vertex `{s}`")))?;
        let v = VertexKey::ProdTree(parse_tree_path(a)?, parse_tree_path(b)?);
        self.check(&v)?;
        Ok(v)
    }

    fn closed_form_entropy(&self) -> Option<f64> {
        let (d, k) = (self.d as f64, self.k as f64);
        Some(((d - 1.0) * d.ln() + (k - 1.0) * k.ln()) / (d + k + 2.0))
    }
}
