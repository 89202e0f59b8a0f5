//! Seeded Galton-Watson tree arena, conditioned on survival to a requested
//! depth. Children are sampled lazily on first neighbor access from per-node
//! substreams, so the materialization order never changes the tree.

use std::sync::RwLock;

use super::{Graph, VertexKey};
use crate::error::{Error, Result};
use crate::util::{splitmix64, u64_to_unit};

struct GwNode {
    parent: Option<u32>,
    depth: u32,
    hash: u64,
    /// Indices of the children once sampled; `None` until first access.
    children: Option<Vec<u32>>,
}

pub struct GwGraph {
    /// (offspring count, cumulative probability), ascending.
    cumulative: Vec<(u32, f64)>,
    nodes: RwLock<Vec<GwNode>>,
    pub conditioned_depth: u32,
    /// Seed that actually produced the surviving sample (the requested seed
    /// advanced past extinct attempts).
    pub effective_seed: u64,
}

const MAX_NODES: usize = 50_000_000;
const MAX_ATTEMPTS: u64 = 100_000;

fn sample_count(cumulative: &[(u32, f64)], hash: u64) -> u32 {
    let u = u64_to_unit(splitmix64(hash ^ 0xC0FF_EE00_D15E_A5E5));
    for &(count, cum) in cumulative {
        if u < cum {
            return count;
        }
    }
    cumulative.last().map(|&(c, _)| c).unwrap_or(0)
}

fn child_hash(parent_hash: u64, index: u64) -> u64 {
    splitmix64(parent_hash ^ splitmix64(index + 1))
}

impl GwGraph {
    pub fn materialize(offspring: &[(u32, f64)], seed: u64, depth: u32) -> Result<GwGraph> {
        let total: f64 = offspring.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "offspring probabilities sum to {total}, expected 1"
            )));
        }
        if offspring.iter().any(|&(_, p)| p < 0.0) {
            return Err(Error::Parameter("negative offspring probability".into()));
        }
        let mean: f64 = offspring.iter().map(|&(c, p)| c as f64 * p).sum();
        if mean <= 1.0 {
            return Err(Error::Parameter(format!(
                "offspring mean {mean} must exceed 1 (supercritical)"
            )));
        }
        let mut cumulative = offspring.to_vec();
        cumulative.sort_by_key(|&(c, _)| c);
        let mut acc = 0.0;
        for entry in &mut cumulative {
            acc += entry.1;
            entry.1 = acc;
        }

        for attempt in 0..MAX_ATTEMPTS {
            let effective_seed = seed.wrapping_add(attempt);
            let root_hash = splitmix64(effective_seed ^ 0x9E37_79B9_7F4A_7C15);
            let mut nodes = vec![GwNode {
                parent: None,
                depth: 0,
                hash: root_hash,
                children: None,
            }];
            // Grow level by level; an empty level before `depth` means
            // extinction and the attempt is rejected.
            let mut frontier = vec![0u32];
            let mut survived = true;
            for _ in 0..depth {
                let mut next = Vec::new();
                for &i in &frontier {
                    let (hash, node_depth) = {
                        let n = &nodes[i as usize];
                        (n.hash, n.depth)
                    };
                    let count = sample_count(&cumulative, hash);
                    let mut kids = Vec::with_capacity(count as usize);
                    for c in 0..count as u64 {
                        let idx = nodes.len() as u32;
                        nodes.push(GwNode {
                            parent: Some(i),
                            depth: node_depth + 1,
                            hash: child_hash(hash, c),
                            children: None,
                        });
                        kids.push(idx);
                    }
                    next.extend_from_slice(&kids);
                    nodes[i as usize].children = Some(kids);
                    if nodes.len() > MAX_NODES {
                        return Err(Error::ResourceGuard(format!(
                            "GW arena exceeds {MAX_NODES} nodes at depth {depth}"
                        )));
                    }
                }
                if next.is_empty() {
                    survived = false;
                    break;
                }
                frontier = next;
            }
            if survived {
                return Ok(GwGraph {
                    cumulative,
                    nodes: RwLock::new(nodes),
                    conditioned_depth: depth,
                    effective_seed,
                });
            }
        }
        Err(Error::Parameter(format!(
            "no surviving GW sample to depth {depth} within {MAX_ATTEMPTS} seed attempts"
        )))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.read().unwrap().len()
    }

    pub fn level_size(&self, depth: u32) -> usize {
        self.nodes
            .read()
            .unwrap()
            .iter()
            .filter(|n| n.depth == depth)
            .count()
    }

    fn index(&self, v: &VertexKey) -> Result<u32> {
        match v {
            VertexKey::Gw(i) if (*i as usize) < self.node_count() => Ok(*i),
            _ => Err(self.invalid(v)),
        }
    }

    fn ensure_children(&self, i: u32) -> Vec<u32> {
        {
            let nodes = self.nodes.read().unwrap();
            if let Some(kids) = &nodes[i as usize].children {
                return kids.clone();
            }
        }
        let mut nodes = self.nodes.write().unwrap();
        if let Some(kids) = &nodes[i as usize].children {
            return kids.clone();
        }
        let (hash, depth) = {
            let n = &nodes[i as usize];
            (n.hash, n.depth)
        };
        let count = sample_count(&self.cumulative, hash);
        let mut kids = Vec::with_capacity(count as usize);
        for c in 0..count as u64 {
            let idx = nodes.len() as u32;
            nodes.push(GwNode {
                parent: Some(i),
                depth: depth + 1,
                hash: child_hash(hash, c),
                children: None,
            });
            kids.push(idx);
        }
        nodes[i as usize].children = Some(kids.clone());
        kids
    }
}

impl Graph for GwGraph {
    fn family_name(&self) -> &'static str {
        "gw"
    }

    fn origin(&self) -> VertexKey {
        VertexKey::Gw(0)
    }

    fn neighbors(&self, v: &VertexKey) -> Result<Vec<VertexKey>> {
        let i = self.index(v)?;
        let parent = self.nodes.read().unwrap()[i as usize].parent;
        let mut out = Vec::new();
        if let Some(p) = parent {
            out.push(VertexKey::Gw(p));
        }
        out.extend(self.ensure_children(i).into_iter().map(VertexKey::Gw));
        out.sort();
        Ok(out)
    }

    fn distance(&self, v: &VertexKey) -> Result<u64> {
        let i = self.index(v)?;
        Ok(self.nodes.read().unwrap()[i as usize].depth as u64)
    }

    fn parse_vertex(&self, s: &str) -> Result<VertexKey> {
        let i: u32 = s
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse(format!("bad GW vertex `{s}`")))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad GW vertex `{s}`: {e}")))?;
        let v = VertexKey::Gw(i);
        self.index(&v)?;
        Ok(v)
    }
}
