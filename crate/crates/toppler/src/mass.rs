//! Sparse mass distributions and toppling moves.
//!
//! The engine is generic over the numeric mode: `f64` for production runs and
//! `BigRational` as an exact twin for oracle searches and cross-validation.
//! A toppling move removes mass m at a vertex and deposits m/deg on each
//! neighbor, conserving total mass.

use std::collections::BTreeMap;
use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::graphs::{Graph, VertexKey};

/// Numeric mode for the mass engine. Float values in [-1e-12, 0) produced by
/// rounding are clamped to zero (and counted); anything more negative is a
/// logic bug and aborts the run.
pub trait MassValue: Clone + PartialOrd + std::fmt::Debug + Send + Sync + 'static {
    /// True when arithmetic is exact (no clamping, conservation holds
    /// identically).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(n: u64) -> Self;
    fn add_assign(&mut self, other: &Self);
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div_int(&self, n: u64) -> Self;
    fn is_zero(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn to_f64(&self) -> f64;
    /// Rendering used in distribution dumps.
    fn render(&self) -> String;
}

impl MassValue for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_int(n: u64) -> Self {
        n as f64
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div_int(&self, n: u64) -> Self {
        self / n as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_negative(&self) -> bool {
        *self < 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn render(&self) -> String {
        // Shortest round-trip form; deterministic across runs.
        format!("{self}")
    }
}

impl MassValue for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        BigRational::from_integer(BigInt::from(1))
    }
    fn from_int(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div_int(&self, n: u64) -> Self {
        self / BigRational::from_integer(BigInt::from(n))
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

/// Tolerance below which a negative float mass is treated as rounding noise.
pub const NEG_MASS_CLAMP: f64 = 1e-12;

/// One executed toppling move.
#[derive(Debug, Clone)]
pub struct ToppleRecord<M: MassValue> {
    /// 1-based move index.
    pub index: u64,
    pub vertex: VertexKey,
    pub mass: M,
}

/// Periodic diagnostic snapshot taken along a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub move_index: u64,
    pub outside_mass: f64,
    /// Second moment, when the run is on a lattice.
    pub m2: Option<f64>,
}

/// Ordered ledger of toppling records plus optional snapshots.
#[derive(Debug, Clone, Default)]
pub struct RunTrace<M: MassValue> {
    pub records: Vec<ToppleRecord<M>>,
    pub snapshots: Vec<Snapshot>,
}

impl<M: MassValue> RunTrace<M> {
    pub fn new() -> Self {
        RunTrace {
            records: Vec::new(),
            snapshots: Vec::new(),
        }
    }
}

/// Sparse nonnegative mass field with a move counter and an optional
/// incrementally maintained mass-outside-radius cache.
#[derive(Debug, Clone)]
pub struct MassDist<M: MassValue> {
    masses: BTreeMap<VertexKey, M>,
    moves: u64,
    clamp_count: u64,
    registered: Option<(u64, M)>,
}

impl<M: MassValue> MassDist<M> {
    /// Unit point mass at `v`.
    pub fn delta(v: VertexKey) -> Self {
        let mut masses = BTreeMap::new();
        masses.insert(v, M::one());
        MassDist {
            masses,
            moves: 0,
            clamp_count: 0,
            registered: None,
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (VertexKey, M)>) -> Self {
        let mut masses = BTreeMap::new();
        for (v, m) in entries {
            if !m.is_zero() {
                masses.insert(v, m);
            }
        }
        MassDist {
            masses,
            moves: 0,
            clamp_count: 0,
            registered: None,
        }
    }

    pub fn get(&self, v: &VertexKey) -> M {
        self.masses.get(v).cloned().unwrap_or_else(M::zero)
    }

    pub fn support_len(&self) -> usize {
        self.masses.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VertexKey, &M)> {
        self.masses.iter()
    }

    pub fn moves(&self) -> u64 {
        self.moves
    }

    /// Used by strategies that execute topples on a dense grid and convert
    /// the result back into a sparse distribution.
    pub(crate) fn set_move_counter(&mut self, moves: u64) {
        self.moves = moves;
    }

    /// Number of negative-rounding clamps applied so far (float mode only).
    pub fn clamp_count(&self) -> u64 {
        self.clamp_count
    }

    pub fn total(&self) -> M {
        let mut t = M::zero();
        for m in self.masses.values() {
            t.add_assign(m);
        }
        t
    }

    /// Registers a radius so `mass_outside` at that radius is maintained
    /// incrementally across topples.
    pub fn register_radius(&mut self, g: &dyn Graph, n: u64) -> Result<()> {
        let outside = self.compute_outside(g, n)?;
        self.registered = Some((n, outside));
        Ok(())
    }

    fn compute_outside(&self, g: &dyn Graph, n: u64) -> Result<M> {
        let mut out = M::zero();
        for (v, m) in &self.masses {
            if g.distance(v)? >= n {
                out.add_assign(m);
            }
        }
        Ok(out)
    }

    /// Mass at distance >= n from the origin. Served from the incremental
    /// cache when `n` is the registered radius.
    pub fn mass_outside(&self, g: &dyn Graph, n: u64) -> Result<M> {
        if let Some((rn, cached)) = &self.registered {
            if *rn == n {
                return Ok(cached.clone());
            }
        }
        self.compute_outside(g, n)
    }

    fn guard_negative(&mut self, v: &VertexKey, value: M) -> Result<M> {
        if !value.is_negative() {
            return Ok(value);
        }
        if M::EXACT {
            return Err(Error::NegativeMass {
                vertex: v.to_string(),
                mass: value.to_f64(),
            });
        }
        let f = value.to_f64();
        if f >= -NEG_MASS_CLAMP {
            self.clamp_count += 1;
            Ok(M::zero())
        } else {
            Err(Error::NegativeMass {
                vertex: v.to_string(),
                mass: f,
            })
        }
    }

    /// The toppling move: removes mass `m` at `v` and adds `m/deg(v)` to each
    /// neighbor. Requires 0 < m <= mass at v.
    pub fn topple(&mut self, g: &dyn Graph, v: &VertexKey, m: M) -> Result<ToppleRecord<M>> {
        let zero = M::zero();
        if m <= zero {
            return Err(Error::InvalidMove {
                vertex: v.to_string(),
                reason: format!("toppled mass {:?} must be positive", m),
            });
        }
        let cur = self.get(v);
        if m > cur {
            return Err(Error::InvalidMove {
                vertex: v.to_string(),
                reason: format!("toppled mass {:?} exceeds available {:?}", m, cur),
            });
        }
        let nbrs = g.neighbors(v)?;
        let deg = nbrs.len() as u64;
        let share = m.div_int(deg);

        let remaining = self.guard_negative(v, cur.sub(&m))?;
        if remaining.is_zero() {
            self.masses.remove(v);
        } else {
            self.masses.insert(v.clone(), remaining);
        }
        for u in &nbrs {
            self.masses
                .entry(u.clone())
                .or_insert_with(M::zero)
                .add_assign(&share);
        }

        if let Some((rn, _)) = self.registered {
            let dv = g.distance(v)?;
            let mut delta = M::zero();
            if dv >= rn {
                delta = delta.sub(&m);
            }
            for u in &nbrs {
                if g.distance(u)? >= rn {
                    delta.add_assign(&share);
                }
            }
            if let Some((_, cached)) = &mut self.registered {
                cached.add_assign(&delta);
            }
        }

        self.moves += 1;
        Ok(ToppleRecord {
            index: self.moves,
            vertex: v.clone(),
            mass: m,
        })
    }

    /// Topples the full mass at `v`, emptying it.
    pub fn full_topple(&mut self, g: &dyn Graph, v: &VertexKey) -> Result<ToppleRecord<M>> {
        let cur = self.get(v);
        if cur.is_zero() {
            return Err(Error::InvalidMove {
                vertex: v.to_string(),
                reason: "no mass to topple".into(),
            });
        }
        self.topple(g, v, cur)
    }

    /// Writes the distribution as CSV rows `vertex_encoding,mass` in
    /// lexicographic vertex order.
    pub fn dump_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["vertex_encoding", "mass"])?;
        for (v, m) in &self.masses {
            wtr.write_record([v.to_string(), m.render()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl MassDist<f64> {
    /// Lifts a float distribution into the exact-rational engine.
    pub fn to_exact(&self) -> MassDist<BigRational> {
        MassDist {
            masses: self
                .masses
                .iter()
                .map(|(v, m)| {
                    (
                        v.clone(),
                        BigRational::from_float(*m).expect("finite mass"),
                    )
                })
                .collect(),
            moves: self.moves,
            clamp_count: self.clamp_count,
            registered: None,
        }
    }
}

/// Maximum absolute pointwise discrepancy between a float distribution and an
/// exact one, over the union of supports.
pub fn compare(float_dist: &MassDist<f64>, exact_dist: &MassDist<BigRational>) -> f64 {
    let mut max = 0.0f64;
    for (v, m) in float_dist.iter() {
        let e = exact_dist.get(v).to_f64();
        max = max.max((m - e).abs());
    }
    for (v, m) in exact_dist.iter() {
        let f = float_dist.get(v);
        max = max.max((f - m.to_f64()).abs());
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphFamily;
    use num_bigint::BigInt;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn topple_splits_on_line() {
        let g = GraphFamily::Lattice { d: 1 }.build().unwrap();
        let mut dist = MassDist::<f64>::delta(g.origin());
        dist.topple(&*g, &g.origin(), 1.0).unwrap();
        assert_eq!(dist.get(&VertexKey::Lattice(vec![-1])), 0.5);
        assert_eq!(dist.get(&VertexKey::Lattice(vec![1])), 0.5);
        assert_eq!(dist.get(&g.origin()), 0.0);
        assert_eq!(dist.moves(), 1);
    }

    #[test]
    fn topple_splits_four_ways_on_plane() {
        let g = GraphFamily::Lattice { d: 2 }.build().unwrap();
        let mut dist = MassDist::<f64>::delta(g.origin());
        dist.topple(&*g, &g.origin(), 1.0).unwrap();
        for u in g.neighbors(&g.origin()).unwrap() {
            assert_eq!(dist.get(&u), 0.25);
        }
    }

    #[test]
    fn exact_three_move_sequence() {
        let g = GraphFamily::Lattice { d: 1 }.build().unwrap();
        let v = |x: i64| VertexKey::Lattice(vec![x]);
        let mut dist = MassDist::<BigRational>::delta(g.origin());
        dist.topple(&*g, &g.origin(), rat(1, 1)).unwrap();
        dist.topple(&*g, &v(1), rat(1, 2)).unwrap();
        assert_eq!(dist.get(&v(-1)), rat(1, 2));
        assert_eq!(dist.get(&v(0)), rat(1, 4));
        assert_eq!(dist.get(&v(2)), rat(1, 4));
        dist.topple(&*g, &v(-1), rat(1, 2)).unwrap();
        assert_eq!(dist.get(&v(-2)), rat(1, 4));
        assert_eq!(dist.get(&v(0)), rat(1, 2));
        assert_eq!(dist.get(&v(2)), rat(1, 4));
        assert_eq!(dist.total(), rat(1, 1));
        assert_eq!(dist.moves(), 3);
    }

    #[test]
    fn invalid_moves_rejected() {
        let g = GraphFamily::Lattice { d: 1 }.build().unwrap();
        let mut dist = MassDist::<f64>::delta(g.origin());
        assert!(dist.topple(&*g, &g.origin(), 1.5).is_err());
        assert!(dist.topple(&*g, &g.origin(), 0.0).is_err());
        assert!(dist.topple(&*g, &g.origin(), -0.5).is_err());
        assert!(dist.full_topple(&*g, &VertexKey::Lattice(vec![7])).is_err());
    }

    #[test]
    fn full_topple_removes_entry() {
        let g = GraphFamily::Lattice { d: 2 }.build().unwrap();
        let mut dist = MassDist::<f64>::delta(g.origin());
        dist.full_topple(&*g, &g.origin()).unwrap();
        assert_eq!(dist.support_len(), 4);
    }

    #[test]
    fn mass_outside_examples() {
        let g = GraphFamily::Lattice { d: 1 }.build().unwrap();
        let dist = MassDist::<f64>::delta(g.origin());
        assert_eq!(dist.mass_outside(&*g, 1).unwrap(), 0.0);
        // The open ball of radius 0 is empty, so everything is outside.
        assert_eq!(dist.mass_outside(&*g, 0).unwrap(), 1.0);

        let spread = MassDist::<f64>::from_entries([
            (VertexKey::Lattice(vec![-2]), 0.25),
            (VertexKey::Lattice(vec![0]), 0.5),
            (VertexKey::Lattice(vec![2]), 0.25),
        ]);
        assert_eq!(spread.mass_outside(&*g, 2).unwrap(), 0.5);
    }

    #[test]
    fn registered_radius_tracks_incrementally() {
        let g = GraphFamily::Lattice { d: 2 }.build().unwrap();
        let mut dist = MassDist::<f64>::delta(g.origin());
        dist.register_radius(&*g, 2).unwrap();
        dist.full_topple(&*g, &g.origin()).unwrap();
        let e1 = VertexKey::Lattice(vec![1, 0]);
        dist.full_topple(&*g, &e1).unwrap();
        let cached = dist.mass_outside(&*g, 2).unwrap();
        let direct: f64 = dist
            .iter()
            .filter(|(v, _)| g.distance(v).unwrap() >= 2)
            .map(|(_, m)| m)
            .sum();
        assert!((cached - direct).abs() < 1e-15);
    }

    #[test]
    fn conservation_under_random_topples() {
        let g = GraphFamily::Comb.build().unwrap();
        let mut dist = MassDist::<f64>::delta(g.origin());
        for i in 0..500u64 {
            let support: Vec<VertexKey> = dist.iter().map(|(v, _)| v.clone()).collect();
            let v = support[(crate::util::splitmix64(i) as usize) % support.len()].clone();
            dist.full_topple(&*g, &v).unwrap();
        }
        assert!((dist.total() - 1.0).abs() < 1e-9);
        assert_eq!(dist.clamp_count(), 0);
    }

    #[test]
    fn float_and_exact_engines_agree() {
        let g = GraphFamily::Lattice { d: 2 }.build().unwrap();
        let mut f = MassDist::<f64>::delta(g.origin());
        let mut e = MassDist::<BigRational>::delta(g.origin());
        for i in 0..300u64 {
            let support: Vec<VertexKey> = f.iter().map(|(v, _)| v.clone()).collect();
            let v = support[(crate::util::splitmix64(i ^ 0xABCD) as usize) % support.len()].clone();
            f.full_topple(&*g, &v).unwrap();
            e.full_topple(&*g, &v).unwrap();
        }
        assert!(compare(&f, &e) <= 1e-12);
    }

    #[test]
    fn to_exact_of_dyadic_run_is_lossless() {
        let g = GraphFamily::Lattice { d: 1 }.build().unwrap();
        let v = |x: i64| VertexKey::Lattice(vec![x]);
        let mut f = MassDist::<f64>::delta(g.origin());
        f.topple(&*g, &g.origin(), 1.0).unwrap();
        f.topple(&*g, &v(1), 0.5).unwrap();
        f.topple(&*g, &v(-1), 0.5).unwrap();
        let e = f.to_exact();
        assert_eq!(compare(&f, &e), 0.0);
        assert_eq!(e.get(&v(0)), rat(1, 2));
    }

    #[test]
    fn dump_csv_is_deterministic() {
        let g = GraphFamily::Lattice { d: 2 }.build().unwrap();
        let mut dist = MassDist::<f64>::delta(g.origin());
        dist.full_topple(&*g, &g.origin()).unwrap();
        let mut a = Vec::new();
        dist.dump_csv(&mut a).unwrap();
        let mut b = Vec::new();
        dist.dump_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("vertex_encoding,mass\n"));
        assert!(text.contains("\"(-1,0)\",0.25"));
    }
}
