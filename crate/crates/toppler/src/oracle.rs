//! Exact brute-force computation of N_p on tiny instances.
//!
//! Searching full topplings only is lossless: any sequence reaching the
//! target can be replaced by one of full topples that is no longer, so the
//! minimum over full-toppling sequences equals the unrestricted minimum.
//! States are exact-rational distributions, canonicalized and memoized.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::graphs::{Graph, VertexKey};
use crate::mass::MassDist;

/// Hard guards keeping the exhaustive search finite.
pub const MAX_BALL: usize = 12;
pub const MAX_DEPTH: u64 = 12;

type State = Vec<(VertexKey, BigRational)>;

struct Searcher<'a> {
    g: &'a dyn Graph,
    /// Vertices of B_n, the only ones that may be toppled.
    region: Vec<VertexKey>,
    n: u64,
    target: BigRational,
    /// Best remaining-depth already explored from a state without success.
    memo: HashMap<State, u64>,
}

impl<'a> Searcher<'a> {
    fn mass_outside(&self, state: &State) -> Result<BigRational> {
        let mut out = BigRational::zero();
        for (v, m) in state {
            if self.g.distance(v)? >= self.n {
                out += m;
            }
        }
        Ok(out)
    }

    fn dfs(&mut self, state: &State, remaining: u64) -> Result<bool> {
        if self.mass_outside(state)? >= self.target {
            return Ok(true);
        }
        if remaining == 0 {
            return Ok(false);
        }
        if let Some(&seen) = self.memo.get(state) {
            if seen >= remaining {
                return Ok(false);
            }
        }
        for v in self.region.clone() {
            let has_mass = state
                .iter()
                .any(|(u, m)| *u == v && !Zero::is_zero(m));
            if !has_mass {
                continue;
            }
            let mut dist = MassDist::from_entries(state.iter().cloned());
            dist.full_topple(self.g, &v)?;
            let child: State = dist.iter().map(|(u, m)| (u.clone(), m.clone())).collect();
            if self.dfs(&child, remaining - 1)? {
                return Ok(true);
            }
        }
        self.memo.insert(state.clone(), remaining);
        Ok(false)
    }
}

/// Exact minimum number of toppling moves placing mass >= p outside B_n,
/// starting from `initial`, or `None` if it cannot be done in `depth_cap`
/// moves.
pub fn min_moves_exact_from(
    g: &dyn Graph,
    n: u64,
    p: f64,
    depth_cap: u64,
    initial: &MassDist<BigRational>,
) -> Result<Option<u64>> {
    if depth_cap > MAX_DEPTH {
        return Err(Error::ResourceGuard(format!(
            "depth cap {depth_cap} exceeds the oracle limit {MAX_DEPTH}"
        )));
    }
    let region = g.ball(n, MAX_BALL + 1)?;
    if region.len() > MAX_BALL {
        return Err(Error::ResourceGuard(format!(
            "|B_{n}| = {} exceeds the oracle limit {MAX_BALL}",
            region.len()
        )));
    }
    let target = BigRational::from_float(p)
        .ok_or_else(|| Error::Parameter(format!("p={p} is not finite")))?;
    if target <= BigRational::zero() || target > BigRational::from_integer(BigInt::from(1)) {
        return Err(Error::Parameter(format!("p={p} must lie in (0,1]")));
    }

    let mut searcher = Searcher {
        g,
        region,
        n,
        target,
        memo: HashMap::new(),
    };
    let start: State = initial.iter().map(|(v, m)| (v.clone(), m.clone())).collect();
    for limit in 0..=depth_cap {
        searcher.memo.clear();
        if searcher.dfs(&start, limit)? {
            return Ok(Some(limit));
        }
    }
    Ok(None)
}

/// `min_moves_exact_from` started from the unit point mass at the origin.
pub fn min_moves_exact(g: &dyn Graph, n: u64, p: f64, depth_cap: u64) -> Result<Option<u64>> {
    let initial = MassDist::<BigRational>::delta(g.origin());
    min_moves_exact_from(g, n, p, depth_cap, &initial)
}
