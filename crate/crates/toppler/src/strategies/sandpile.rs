//! Divisible sandpile on Z^d and the smoothing strategy built on it.
//!
//! A site with mass above its threshold keeps the threshold and splits the
//! excess equally among its neighbors. Sweeps run in a fixed order until
//! every site is within a tolerance of its threshold; the abelian property
//! makes the sweep order irrelevant for the limit, which the test suite
//! verifies by running two orders.

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::graphs::VertexKey;
use crate::mass::{MassDist, MassValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    /// Ascending (distance from origin, lexicographic coordinates).
    DistLex,
    ReverseDistLex,
}

#[derive(Debug, Clone)]
pub struct SandpileOutcome<M: MassValue> {
    pub field: MassDist<M>,
    /// The occupied cluster D_m = {x : mass >= threshold - slack}.
    pub occupied: Vec<VertexKey>,
    pub moves: u64,
    pub sweeps: u64,
}

/// Volume of the d-dimensional Euclidean unit ball.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Number of lattice points of Z^d inside the closed Euclidean ball of
/// radius r.
pub fn lattice_l2_ball_count(d: usize, r: f64) -> u64 {
    if r < 0.0 {
        return 0;
    }
    fn go(d: usize, r2: f64) -> u64 {
        if d == 0 {
            return 1;
        }
        let max = r2.max(0.0).sqrt().floor() as i64;
        let mut total = 0;
        for x in -max..=max {
            total += go(d - 1, r2 - (x * x) as f64);
        }
        total
    }
    go(d, r * r + 1e-9)
}

struct Grid<M: MassValue> {
    d: usize,
    radius: i64,
    side: i64,
    strides: Vec<i64>,
    cells: Vec<M>,
    /// Cell indices in ascending (L1 distance, lexicographic) order.
    order: Vec<u32>,
    is_boundary: Vec<bool>,
}

impl<M: MassValue> Grid<M> {
    fn new(d: usize, radius: i64) -> Result<Grid<M>> {
        let side = 2 * radius + 1;
        let len = side.checked_pow(d as u32).ok_or_else(|| {
            Error::ResourceGuard(format!("sandpile grid side {side}^{d} overflows"))
        })?;
        if len > 50_000_000 {
            return Err(Error::ResourceGuard(format!(
                "sandpile grid of {len} cells exceeds the cap"
            )));
        }
        let len = len as usize;
        let strides: Vec<i64> = (0..d).map(|i| side.pow(i as u32)).collect();
        let mut grid = Grid {
            d,
            radius,
            side,
            strides,
            cells: vec![M::zero(); len],
            order: Vec::with_capacity(len),
            is_boundary: vec![false; len],
        };
        let mut keyed: Vec<(u64, Vec<i64>, u32)> = Vec::with_capacity(len);
        for idx in 0..len {
            let c = grid.coords(idx);
            let l1: u64 = c.iter().map(|x| x.unsigned_abs()).sum();
            grid.is_boundary[idx] = c.iter().any(|x| x.abs() == radius);
            keyed.push((l1, c, idx as u32));
        }
        keyed.sort();
        grid.order = keyed.into_iter().map(|(_, _, i)| i).collect();
        Ok(grid)
    }

    fn coords(&self, idx: usize) -> Vec<i64> {
        (0..self.d)
            .map(|i| (idx as i64 / self.strides[i]) % self.side - self.radius)
            .collect()
    }

    fn index(&self, coords: &[i64]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| (c + self.radius) * s)
            .sum::<i64>() as usize
    }

    fn center(&self) -> usize {
        self.index(&vec![0; self.d])
    }
}

/// Generic sandpile relaxation. Every site with mass above `threshold` emits
/// its excess; the process stops once all sites are within `slack` of the
/// threshold. Exposed generically so the exact-rational twin can exercise
/// the abelian property on small instances.
pub fn sandpile_core<M: MassValue>(
    d: usize,
    total: M,
    threshold: M,
    slack: M,
    order: SweepOrder,
    sweep_cap: u64,
) -> Result<SandpileOutcome<M>> {
    if d == 0 {
        return Err(Error::Parameter("sandpile requires d >= 1".into()));
    }
    let zero = M::zero();
    if total <= zero || threshold <= zero {
        return Err(Error::Parameter(
            "sandpile requires positive total mass and threshold".into(),
        ));
    }
    let m_equiv = total.to_f64() / threshold.to_f64();
    let r_est = (m_equiv / unit_ball_volume(d)).powf(1.0 / d as f64);
    let mut radius = (r_est.ceil() as i64 + 4).max(2);

    'regrow: loop {
        let mut grid: Grid<M> = Grid::new(d, radius)?;
        let center = grid.center();
        grid.cells[center] = total.clone();
        let deg = 2 * d as u64;
        let mut moves = 0u64;
        let mut sweeps = 0u64;
        let limit = {
            let mut l = threshold.clone();
            l.add_assign(&slack);
            l
        };
        let indices: Vec<u32> = match order {
            SweepOrder::DistLex => grid.order.clone(),
            SweepOrder::ReverseDistLex => grid.order.iter().rev().copied().collect(),
        };
        loop {
            let stable = grid.cells.iter().all(|c| *c <= limit);
            if stable {
                break;
            }
            if sweeps >= sweep_cap {
                return Err(Error::ResourceGuard(format!(
                    "sandpile did not stabilize within {sweep_cap} sweeps"
                )));
            }
            let sweep_once = |grid: &mut Grid<M>, idx: usize, moves: &mut u64| -> Result<bool> {
                if grid.cells[idx] <= threshold {
                    return Ok(true);
                }
                if grid.is_boundary[idx] {
                    return Ok(false);
                }
                let excess = grid.cells[idx].sub(&threshold);
                grid.cells[idx] = threshold.clone();
                let share = excess.div_int(deg);
                for i in 0..grid.d {
                    let s = grid.strides[i] as usize;
                    let a = idx - s;
                    let b = idx + s;
                    grid.cells[a].add_assign(&share);
                    grid.cells[b].add_assign(&share);
                }
                *moves += 1;
                Ok(true)
            };
            for &idx in &indices {
                if !sweep_once(&mut grid, idx as usize, &mut moves)? {
                    radius += (radius / 4).max(4);
                    continue 'regrow;
                }
            }
            sweeps += 1;
        }

        let lower = threshold.sub(&slack);
        let mut occupied = Vec::new();
        let mut entries = Vec::new();
        for idx in 0..grid.cells.len() {
            let m = grid.cells[idx].clone();
            if m.is_zero() {
                continue;
            }
            let v = VertexKey::Lattice(grid.coords(idx));
            if m >= lower {
                occupied.push(v.clone());
            }
            entries.push((v, m));
        }
        occupied.sort();
        let mut field = MassDist::from_entries(entries);
        field.set_move_counter(moves);
        return Ok(SandpileOutcome {
            field,
            occupied,
            moves,
            sweeps,
        });
    }
}

/// Divisible sandpile started from mass m at the origin of Z^d with site
/// threshold 1; stops once every site holds at most 1 + eps.
pub fn sandpile_stabilize(
    d: usize,
    m: f64,
    eps: f64,
    order: SweepOrder,
) -> Result<SandpileOutcome<f64>> {
    if m <= 0.0 || eps <= 0.0 {
        return Err(Error::Parameter("need m > 0 and eps > 0".into()));
    }
    sandpile_core(d, m, 1.0, eps, order, 1_000_000)
}

/// Exact-rational sandpile; `slack` may be zero for instances that stabilize
/// in finitely many moves.
pub fn sandpile_stabilize_exact(
    d: usize,
    m: BigRational,
    slack: BigRational,
    order: SweepOrder,
) -> Result<SandpileOutcome<BigRational>> {
    sandpile_core(d, m, MassValue::one(), slack, order, 100_000)
}

/// Smooths the unit point mass into a near-uniform distribution: runs the
/// divisible sandpile with site threshold 1/|{x : |x|_2 <= cn-2}| so that
/// the result is bounded by 2/Vol(B^(2)_cn) pointwise and supported inside
/// the Euclidean ball of radius cn. Both properties are asserted on the
/// output.
pub fn smooth_to_uniform(d: usize, n: u64, c: f64, eps: f64) -> Result<MassDist<f64>> {
    if !(0.0 < c && c < 1.0) {
        return Err(Error::Parameter(format!("c={c} must lie in (0,1)")));
    }
    let cn = c * n as f64;
    if cn < 2.0 {
        return Err(Error::Parameter(format!(
            "cn = {cn} is too small; need cn >= 2"
        )));
    }
    if eps <= 0.0 {
        return Err(Error::Parameter("eps must be positive".into()));
    }
    let inner = lattice_l2_ball_count(d, cn - 2.0);
    let h = 1.0 / inner as f64;
    if h >= 1.0 {
        // Degenerate threshold: the point mass is already stable and the
        // near-uniform bounds below are vacuous for it.
        return Ok(MassDist::delta(VertexKey::Lattice(vec![0; d])));
    }
    let outcome = sandpile_core(d, 1.0, h, h * eps, SweepOrder::DistLex, 1_000_000)?;

    let bound = 2.0 / lattice_l2_ball_count(d, cn) as f64;
    for (v, m) in outcome.field.iter() {
        if *m > bound * (1.0 + 1e-12) {
            return Err(Error::Invariant(format!(
                "smoothed mass {m} at {v} exceeds bound {bound}"
            )));
        }
        let norm2: f64 = match v {
            VertexKey::Lattice(coords) => coords.iter().map(|&x| (x * x) as f64).sum(),
            _ => unreachable!("sandpile produces lattice keys"),
        };
        if norm2.sqrt() > cn + 1e-9 {
            return Err(Error::Invariant(format!(
                "smoothed support reaches {v}, outside radius {cn}"
            )));
        }
    }
    Ok(outcome.field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn origin(d: usize) -> VertexKey {
        VertexKey::Lattice(vec![0; d])
    }

    #[test]
    fn mass_one_never_moves() {
        let out = sandpile_stabilize(2, 1.0, 1e-8, SweepOrder::DistLex).unwrap();
        assert_eq!(out.moves, 0);
        assert_eq!(out.occupied, vec![origin(2)]);
        assert_eq!(out.field.get(&origin(2)), 1.0);
    }

    #[test]
    fn mass_four_topples_once() {
        let out = sandpile_stabilize(2, 4.0, 1e-8, SweepOrder::DistLex).unwrap();
        assert_eq!(out.moves, 1);
        assert_eq!(out.field.get(&origin(2)), 1.0);
        assert_eq!(out.field.get(&VertexKey::Lattice(vec![1, 0])), 0.75);
        assert_eq!(out.occupied, vec![origin(2)]);
    }

    #[test]
    fn exact_twin_is_order_independent_when_finite() {
        let m = BigRational::new(BigInt::from(9), BigInt::from(2));
        let a = sandpile_stabilize_exact(2, m.clone(), <BigRational as num_traits::Zero>::zero(), SweepOrder::DistLex)
            .unwrap();
        let b =
            sandpile_stabilize_exact(2, m, <BigRational as num_traits::Zero>::zero(), SweepOrder::ReverseDistLex)
                .unwrap();
        for (v, mass) in a.field.iter() {
            assert_eq!(*mass, b.field.get(v), "mismatch at {v}");
        }
        assert_eq!(a.field.support_len(), b.field.support_len());
    }

    #[test]
    fn conservation_in_float_mode() {
        let out = sandpile_stabilize(2, 100.0, 1e-10, SweepOrder::DistLex).unwrap();
        assert!((out.field.total() - 100.0).abs() < 1e-7);
    }

    #[test]
    fn smooth_degenerate_keeps_point_mass() {
        // cn - 2 = 0: the threshold ball is just the origin, so the threshold
        // is 1 and the point mass is already stable.
        let out = smooth_to_uniform(1, 4, 0.5, 1e-8).unwrap();
        assert_eq!(out.get(&origin(1)), 1.0);
        assert_eq!(out.support_len(), 1);
    }

    #[test]
    fn smooth_line_example() {
        let out = smooth_to_uniform(1, 10, 0.5, 1e-8).unwrap();
        for (v, m) in out.iter() {
            assert!(*m <= 2.0 / 11.0 + 1e-12, "mass {m} at {v}");
            match v {
                VertexKey::Lattice(c) => assert!(c[0].abs() <= 5, "support reaches {v}"),
                _ => unreachable!(),
            }
        }
        assert!((out.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ball_counts_and_volumes() {
        assert_eq!(lattice_l2_ball_count(1, 5.0), 11);
        assert_eq!(lattice_l2_ball_count(2, 1.0), 5);
        assert_eq!(lattice_l2_ball_count(2, 1.5), 9);
        assert_eq!(lattice_l2_ball_count(3, 1.0), 7);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
    }
}
