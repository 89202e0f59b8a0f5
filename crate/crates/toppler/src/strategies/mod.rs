//! Executable toppling strategies.
//!
//! Each strategy achieves an upper bound on N_p, the minimum number of
//! toppling moves needed to place mass p outside a target set: greedy full
//! topples of the heaviest vertex, round-robin toppling (which simulates the
//! killed random walk exactly, one round per walk step), the comb rectangle
//! strategy, divisible-sandpile smoothing, and round-robin restricted to an
//! entropy-selected support.

mod sandpile;

pub use sandpile::{
    lattice_l2_ball_count, sandpile_stabilize, sandpile_stabilize_exact, smooth_to_uniform,
    unit_ball_volume, SandpileOutcome, SweepOrder,
};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphs::{Graph, VertexKey};
use crate::mass::{MassDist, RunTrace, Snapshot};
use crate::util::splitmix64;

/// Default hard cap on topples per run.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Relative tolerance for treating two float masses as tied in the
/// symmetric-simultaneous rule.
const SYM_TIE_REL_TOL: f64 = 1e-9;

/// How the greedy strategy breaks ties among maximum-mass vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieRule {
    /// Topple the smallest vertex in encoding order; fully deterministic.
    Lexicographic,
    /// Topple all tied maxima in one sweep, counting one move per vertex,
    /// with masses read at sweep start.
    SymmetricSimultaneous,
}

impl std::str::FromStr for TieRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lex" => Ok(TieRule::Lexicographic),
            "sym" => Ok(TieRule::SymmetricSimultaneous),
            other => Err(Error::Parse(format!("unknown tie rule `{other}`"))),
        }
    }
}

/// Outcome of a strategy run. `moves` is the achieved upper bound on N_p
/// when `terminated` is set.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub moves: u64,
    pub dist: MassDist<f64>,
    pub trace: Option<RunTrace<f64>>,
    /// Target mass reached.
    pub terminated: bool,
    /// Stopped by the topple budget or round cap instead.
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone)]
pub struct GreedyOpts {
    pub tie: TieRule,
    pub budget: u64,
    pub record_trace: bool,
    /// When set, a snapshot is appended to the trace every this many moves.
    pub snapshot_every: Option<u64>,
}

impl Default for GreedyOpts {
    fn default() -> Self {
        GreedyOpts {
            tie: TieRule::Lexicographic,
            budget: DEFAULT_BUDGET,
            record_trace: false,
            snapshot_every: None,
        }
    }
}

/// Max-heap entry; largest mass wins, ties go to the smallest vertex key.
struct Entry {
    mass: f64,
    vertex: VertexKey,
    version: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mass
            .total_cmp(&other.mass)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Shared engine for `greedy` and `greedy_sweeps`. `radius` restricts topples
/// to the open ball B_radius; `target_p` stops once that much mass sits at
/// distance >= radius; `max_sweeps` bounds the number of greedy sweeps (one
/// sweep topples one vertex under the lexicographic rule, all tied maxima
/// under the symmetric rule).
fn greedy_core(
    g: &dyn Graph,
    radius: Option<u64>,
    target_p: Option<f64>,
    max_sweeps: Option<u64>,
    opts: &GreedyOpts,
) -> Result<RunResult> {
    let mut dist = MassDist::<f64>::delta(g.origin());
    if let Some(n) = radius {
        dist.register_radius(g, n)?;
    }
    let mut trace = if opts.record_trace || opts.snapshot_every.is_some() {
        Some(RunTrace::new())
    } else {
        None
    };

    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();
    let mut versions: HashMap<VertexKey, u64> = HashMap::new();
    versions.insert(g.origin(), 0);
    heap.push(Entry {
        mass: 1.0,
        vertex: g.origin(),
        version: 0,
    });

    let in_region = |g: &dyn Graph, v: &VertexKey| -> Result<bool> {
        match radius {
            Some(n) => Ok(g.distance(v)? < n),
            None => Ok(true),
        }
    };

    let mut sweeps = 0u64;
    let mut budget_exhausted = false;
    let mut terminated = target_p.is_none();
    'outer: loop {
        if let (Some(p), Some(n)) = (target_p, radius) {
            if dist.mass_outside(g, n)? >= p {
                terminated = true;
                break;
            }
        }
        if let Some(cap) = max_sweeps {
            if sweeps >= cap {
                break;
            }
        }

        // Discard stale entries, then read the current maximum.
        let max_mass = loop {
            match heap.peek() {
                None => break 'outer,
                Some(top) => {
                    if versions.get(&top.vertex) == Some(&top.version) {
                        break top.mass;
                    }
                    heap.pop();
                }
            }
        };

        let mut batch: Vec<(VertexKey, f64)> = Vec::new();
        match opts.tie {
            TieRule::Lexicographic => {
                let top = heap.pop().expect("peeked entry");
                batch.push((top.vertex, top.mass));
            }
            TieRule::SymmetricSimultaneous => {
                let cutoff = max_mass * (1.0 - SYM_TIE_REL_TOL);
                while let Some(top) = heap.peek() {
                    if versions.get(&top.vertex) != Some(&top.version) {
                        heap.pop();
                        continue;
                    }
                    if top.mass < cutoff {
                        break;
                    }
                    let top = heap.pop().expect("peeked entry");
                    batch.push((top.vertex, top.mass));
                }
            }
        }

        for (v, m) in batch {
            if dist.moves() >= opts.budget {
                budget_exhausted = true;
                terminated = false;
                break 'outer;
            }
            // `m` is the mass read at sweep start; later topples in the same
            // sweep may have added more, which stays for the next sweep.
            let record = dist.topple(g, &v, m)?;
            let nbrs = g.neighbors(&v)?;
            if let Some(t) = &mut trace {
                if opts.record_trace {
                    t.records.push(record);
                }
                if let Some(every) = opts.snapshot_every {
                    if dist.moves().is_multiple_of(every) {
                        let outside = match radius {
                            Some(n) => dist.mass_outside(g, n)?,
                            None => 0.0,
                        };
                        t.snapshots.push(Snapshot {
                            move_index: dist.moves(),
                            outside_mass: outside,
                            m2: lattice_m2(&dist),
                        });
                    }
                }
            }
            for u in std::iter::once(&v).chain(nbrs.iter()) {
                if !in_region(g, u)? {
                    continue;
                }
                let version = versions.entry(u.clone()).or_insert(0);
                *version += 1;
                let mu = dist.get(u);
                if mu > 0.0 {
                    heap.push(Entry {
                        mass: mu,
                        vertex: u.clone(),
                        version: *version,
                    });
                }
            }
        }
        sweeps += 1;
    }

    if let (Some(p), Some(n)) = (target_p, radius) {
        if !budget_exhausted && dist.mass_outside(g, n)? >= p {
            terminated = true;
        }
    }

    Ok(RunResult {
        moves: dist.moves(),
        dist,
        trace,
        terminated: terminated && !budget_exhausted,
        budget_exhausted,
    })
}

fn lattice_m2(dist: &MassDist<f64>) -> Option<f64> {
    let mut acc = 0.0;
    for (v, m) in dist.iter() {
        match v {
            VertexKey::Lattice(c) => {
                acc += m * c.iter().map(|&x| (x * x) as f64).sum::<f64>();
            }
            _ => return None,
        }
    }
    Some(acc)
}

/// Greedy strategy: repeatedly topple the full mass of the heaviest vertex
/// inside B_n until mass p sits outside, or the budget runs out.
pub fn greedy(g: &dyn Graph, n: u64, p: f64, opts: &GreedyOpts) -> Result<RunResult> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::Parameter(format!("p={p} must lie in (0,1)")));
    }
    if n < 1 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    greedy_core(g, Some(n), Some(p), None, opts)
}

/// Unrestricted greedy sweeps over the whole graph with no mass target; used
/// to reproduce the reference heatmap and sweep-count experiments.
pub fn greedy_sweeps(g: &dyn Graph, sweeps: u64, tie: TieRule, budget: u64) -> Result<RunResult> {
    let opts = GreedyOpts {
        tie,
        budget,
        ..GreedyOpts::default()
    };
    greedy_core(g, None, None, Some(sweeps), &opts)
}

/// Upper bound on the greedy move count on Z^d: 2^d / ((1-p) d!) * n^(d+2).
pub fn greedy_bound(d: u32, n: u64, p: f64) -> f64 {
    let factorial: f64 = (1..=d as u64).map(|k| k as f64).product();
    2f64.powi(d as i32) / ((1.0 - p) * factorial) * (n as f64).powi(d as i32 + 2)
}

/// Round-robin core: repeatedly cycle through `region` in key order,
/// toppling at each vertex exactly the mass present at the start of the
/// round. Mass outside the region freezes. One round simulates one step of
/// the random walk killed on exiting the region.
fn round_robin_core(
    g: &dyn Graph,
    region: &[VertexKey],
    max_rounds: u64,
    mut stop: impl FnMut(&MassDist<f64>, &[VertexKey]) -> Result<RoundRobinVerdict>,
) -> Result<RunResult> {
    if !region.contains(&g.origin()) {
        return Err(Error::Parameter("region must contain the origin".into()));
    }
    let mut region = region.to_vec();
    region.sort();
    region.dedup();

    let mut dist = MassDist::<f64>::delta(g.origin());
    let mut terminated = false;
    let mut budget_exhausted = false;
    let mut rounds = 0u64;
    loop {
        match stop(&dist, &region)? {
            RoundRobinVerdict::Stop => {
                terminated = true;
                break;
            }
            RoundRobinVerdict::Continue => {}
        }
        if rounds >= max_rounds {
            budget_exhausted = true;
            break;
        }
        let snapshot: Vec<(VertexKey, f64)> = region
            .iter()
            .filter_map(|v| {
                let m = dist.get(v);
                (m > 0.0).then(|| (v.clone(), m))
            })
            .collect();
        if snapshot.is_empty() {
            // All mass has frozen outside the region; nothing can change.
            break;
        }
        for (v, m) in snapshot {
            dist.topple(g, &v, m)?;
        }
        rounds += 1;
    }
    Ok(RunResult {
        moves: dist.moves(),
        dist,
        trace: None,
        terminated,
        budget_exhausted,
    })
}

enum RoundRobinVerdict {
    Continue,
    Stop,
}

/// Runs exactly `rounds` rounds of round-robin toppling over `region`; the
/// resulting distribution is the law of the killed random walk after
/// `rounds` steps.
pub fn round_robin_killed_rw(g: &dyn Graph, region: &[VertexKey], rounds: u64) -> Result<RunResult> {
    let mut res = round_robin_core(g, region, rounds, |_, _| Ok(RoundRobinVerdict::Continue))?;
    res.terminated = true;
    res.budget_exhausted = false;
    Ok(res)
}

/// Round-robin toppling restricted to an arbitrary support; mass leaving the
/// support freezes, matching the walk killed on exiting it.
pub fn restricted_rw(g: &dyn Graph, support: &[VertexKey], rounds: u64) -> Result<RunResult> {
    round_robin_killed_rw(g, support, rounds)
}

/// Round-robin until the mass frozen outside `region` reaches p.
pub fn rw_until_mass_out(
    g: &dyn Graph,
    region: &[VertexKey],
    p: f64,
    round_cap: u64,
) -> Result<RunResult> {
    round_robin_core(g, region, round_cap, |dist, region| {
        let inside: f64 = region.iter().map(|v| dist.get(v)).sum();
        if 1.0 - inside >= p {
            Ok(RoundRobinVerdict::Stop)
        } else {
            Ok(RoundRobinVerdict::Continue)
        }
    })
}

/// The comb rectangle strategy: round-robin killed-walk simulation on
/// R = [-C sqrt(n), C sqrt(n)] x [-n, n] intersected with B_n, until mass p
/// sits at distance >= n. Mass exiting through the rectangle's left/right
/// spine ends has distance < n and never counts; if it makes the target
/// unreachable the run aborts with the measured spine-exit mass so the
/// operator can raise C.
pub fn comb_strategy(
    g: &dyn Graph,
    n: u64,
    p: f64,
    c: f64,
    round_cap: u64,
) -> Result<RunResult> {
    if c <= 0.0 {
        return Err(Error::Parameter("C must be positive".into()));
    }
    if g.family_name() != "comb" {
        return Err(Error::Unsupported(
            "comb_strategy requires the comb graph".into(),
        ));
    }
    let w = (c * (n as f64).sqrt()).floor() as i64;
    let ni = n as i64;
    let mut region = Vec::new();
    for x in -w..=w {
        for y in -(ni - 1 - x.abs()).max(0)..=(ni - 1 - x.abs()).max(0) {
            if x.abs() + y.abs() < ni {
                region.push(VertexKey::Comb(x, y));
            }
        }
    }
    round_robin_core(g, &region, round_cap, |dist, region| {
        let outside = dist.mass_outside(g, n)?;
        if outside >= p {
            return Ok(RoundRobinVerdict::Stop);
        }
        let active: f64 = region.iter().map(|v| dist.get(v)).sum();
        let reachable = outside + active;
        if reachable < p - 1e-12 {
            return Err(Error::SpineExit {
                spine_mass: 1.0 - reachable,
                reachable,
                p,
            });
        }
        Ok(RoundRobinVerdict::Continue)
    })
}

/// Builds the restricted support U_{t,n}: the ball B_{r_n} with
/// r_n = max{r : |B_r| <= n}, unioned with the sets V_{t,n} of vertices whose
/// estimated transition probability satisfies
/// (1/t) log p_t(o,x) in (-h(1+eps), -h(1-eps)), for t <= t_star.
pub fn build_utn(
    g: &dyn Graph,
    n: u64,
    eps: f64,
    t_star: u64,
    mc_samples: u64,
    seed: u64,
    h: Option<f64>,
) -> Result<Vec<VertexKey>> {
    let h = match h.or_else(|| g.closed_form_entropy()) {
        Some(h) => h,
        None => {
            return Err(Error::Parameter(
                "no closed-form entropy for this family; supply h".into(),
            ))
        }
    };
    if mc_samples == 0 || t_star == 0 {
        return Err(Error::Parameter("need t_star >= 1 and samples >= 1".into()));
    }

    let mut counts: Vec<HashMap<VertexKey, u64>> = vec![HashMap::new(); t_star as usize];
    for i in 0..mc_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ (i.wrapping_mul(0x9E37))));
        let mut x = g.origin();
        for t in 1..=t_star {
            let nbrs = g.neighbors(&x)?;
            x = nbrs[rng.gen_range(0..nbrs.len())].clone();
            *counts[(t - 1) as usize].entry(x.clone()).or_insert(0) += 1;
        }
    }

    let mut union: HashSet<VertexKey> = HashSet::new();
    let mut any_v = false;
    for t in 1..=t_star {
        for (x, cnt) in &counts[(t - 1) as usize] {
            let phat = *cnt as f64 / mc_samples as f64;
            let rate = phat.ln() / t as f64;
            if -h * (1.0 + eps) < rate && rate < -h * (1.0 - eps) {
                union.insert(x.clone());
                any_v = true;
            }
        }
    }
    if !any_v {
        return Err(Error::InsufficientSamples(format!(
            "no vertex passed the entropy threshold with {mc_samples} samples"
        )));
    }

    let cap = 64 * n as usize + 1024;
    let mut r_n = 0u64;
    loop {
        let size = g.ball(r_n + 1, cap)?.len() as u64;
        if size > n {
            break;
        }
        r_n += 1;
    }
    union.extend(g.ball(r_n, cap)?);

    let mut out: Vec<VertexKey> = union.into_iter().collect();
    out.sort();
    Ok(out)
}
