//! Lamplighter graph: the wreath product Z_2 wr Z under the
//! randomize-move-randomize step distribution. A group element is a finite
//! set of on lamps plus the lamplighter's position; one step moves the
//! lighter by +-1 while optionally toggling the lamps at the start and end
//! positions of the move, giving an 8-regular graph.

use super::{Graph, VertexKey};
use crate::error::{Error, Result};

pub struct LamplighterGraph;

impl LamplighterGraph {
    fn parts<'a>(&self, v: &'a VertexKey) -> Result<(&'a [i64], i64)> {
        match v {
            VertexKey::Lamp(lamps, y) => {
                if lamps.windows(2).all(|w| w[0] < w[1]) {
                    Ok((lamps, *y))
                } else {
                    Err(self.invalid(v))
                }
            }
            _ => Err(self.invalid(v)),
        }
    }
}

fn toggle(lamps: &[i64], pos: i64) -> Vec<i64> {
    let mut out = lamps.to_vec();
    match out.binary_search(&pos) {
        Ok(i) => {
            out.remove(i);
        }
        Err(i) => {
            out.insert(i, pos);
        }
    }
    out
}

impl Graph for LamplighterGraph {
    fn family_name(&self) -> &'static str {
        "lamplighter"
    }

    fn origin(&self) -> VertexKey {
        VertexKey::Lamp(Vec::new(), 0)
    }

    fn neighbors(&self, v: &VertexKey) -> Result<Vec<VertexKey>> {
        let (lamps, y) = self.parts(v)?;
        let mut out = Vec::with_capacity(8);
        for eps in [-1i64, 1] {
            for toggle_here in [false, true] {
                for toggle_there in [false, true] {
                    let mut s = lamps.to_vec();
                    if toggle_here {
                        s = toggle(&s, y);
                    }
                    if toggle_there {
                        s = toggle(&s, y + eps);
                    }
                    out.push(VertexKey::Lamp(s, y + eps));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn degree(&self, v: &VertexKey) -> Result<usize> {
        self.parts(v)?;
        Ok(8)
    }

    /// Word distance: the lighter's walk must visit every on-lamp position
    /// (a lamp can only be toggled at the start or end vertex of a move) and
    /// finish at y, so the length is the shorter of the two sweep orders over
    /// [l, r] = the hull of the lamps together with 0 and y. The one
    /// degenerate case is a zero-length tour with lamps still on (only the
    /// lamp at the origin with y = 0), which needs one move out and one back.
    fn distance(&self, v: &VertexKey) -> Result<u64> {
        let (lamps, y) = self.parts(v)?;
        let l = lamps.iter().copied().chain([0, y]).min().unwrap();
        let r = lamps.iter().copied().chain([0, y]).max().unwrap();
        let left_first = -l + (r - l) + (r - y).abs();
        let right_first = r + (r - l) + (y - l).abs();
        let tour = left_first.min(right_first);
        if tour == 0 && !lamps.is_empty() {
            return Ok(2);
        }
        Ok(tour as u64)
    }

    fn parse_vertex(&self, s: &str) -> Result<VertexKey> {
        let bad = || Error::Parse(format!("bad lamplighter vertex `{s}`"));
        let (lamps_s, y_s) = s.split_once('@').ok_or_else(bad)?;
        let inner = lamps_s
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(bad)?;
        let mut lamps = Vec::new();
        if !inner.is_empty() {
            for part in inner.split(',') {
                lamps.push(part.trim().parse().map_err(|_| bad())?);
            }
        }
        lamps.sort();
        lamps.dedup();
        let y = y_s.trim().parse().map_err(|_| bad())?;
        Ok(VertexKey::Lamp(lamps, y))
    }
}
