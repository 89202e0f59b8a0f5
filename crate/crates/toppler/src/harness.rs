//! Experiment orchestration: scaling sweeps across n, exponent fitting,
//! and the aggregated invariant suite behind `toppler check`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use num_rational::BigRational;
use rayon::prelude::*;

use crate::diagnostics;
use crate::diagnostics::ols;
use crate::error::{Error, Result};
use crate::graphs::{Graph, GraphFamily, VertexKey};
use crate::mass::{MassDist, MassValue};
use crate::oracle;
use crate::strategies::{self, GreedyOpts, SweepOrder, TieRule};

/// Strategy selector shared by `run` and `scan`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyId {
    Greedy,
    RoundRobin,
    Comb { c: f64 },
    SandpileSmooth { c: f64 },
    Restricted,
}

impl StrategyId {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyId::Greedy => "greedy",
            StrategyId::RoundRobin => "roundrobin",
            StrategyId::Comb { .. } => "comb",
            StrategyId::SandpileSmooth { .. } => "sandpile-smooth",
            StrategyId::Restricted => "restricted",
        }
    }
}

impl std::str::FromStr for StrategyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(StrategyId::Greedy),
            "roundrobin" => Ok(StrategyId::RoundRobin),
            "comb" => Ok(StrategyId::Comb { c: 2.0 }),
            "sandpile-smooth" => Ok(StrategyId::SandpileSmooth { c: 0.5 }),
            "restricted" => Ok(StrategyId::Restricted),
            other => Err(Error::Parse(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Which axes the scaling fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitAxes {
    /// log(moves) against log(n): polynomial growth, slope = exponent.
    LogLog,
    /// log(moves) against n: exponential growth, slope = log of the base.
    LinearLog,
}

/// Default axes per graph family: polynomial families fit log-log,
/// exponential families fit log-linear.
pub fn default_axes(family: &str) -> FitAxes {
    match family {
        "lattice" | "comb" => FitAxes::LogLog,
        _ => FitAxes::LinearLog,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub graph: String,
    pub strategy: StrategyId,
    pub n_list: Vec<u64>,
    pub p: f64,
    pub tie: TieRule,
    pub seed: u64,
    pub budget: u64,
    /// When set, scan writes `scan.csv` and `report.txt` here.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(graph: &str, strategy: StrategyId, n_list: Vec<u64>, p: f64) -> Self {
        ExperimentConfig {
            graph: graph.to_string(),
            strategy,
            n_list,
            p,
            tie: TieRule::Lexicographic,
            seed: 0,
            budget: strategies::DEFAULT_BUDGET,
            out_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter("n-list must be strictly increasing".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Parameter(format!("p={} must lie in (0,1)", self.p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub n: u64,
    pub moves: u64,
    pub wall_ms: u64,
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub rows: Vec<ScanRow>,
    pub axes: FitAxes,
    pub slope: f64,
    pub std_error: f64,
    pub residual_max: f64,
    /// n values excluded from the fit (budget-exhausted runs).
    pub excluded: Vec<u64>,
}

fn run_one(
    g: &dyn Graph,
    strategy: StrategyId,
    n: u64,
    p: f64,
    tie: TieRule,
    budget: u64,
) -> Result<strategies::RunResult> {
    match strategy {
        StrategyId::Greedy => {
            let opts = GreedyOpts {
                tie,
                budget,
                ..GreedyOpts::default()
            };
            strategies::greedy(g, n, p, &opts)
        }
        StrategyId::RoundRobin | StrategyId::Restricted => {
            let region = g.ball(n, 10_000_000)?;
            strategies::rw_until_mass_out(g, &region, p, budget)
        }
        StrategyId::Comb { c } => strategies::comb_strategy(g, n, p, c, budget),
        StrategyId::SandpileSmooth { .. } => Err(Error::Unsupported(
            "sandpile-smooth is not a scanning strategy; use `run`".into(),
        )),
    }
}

/// Runs the configured strategy for every n, fits the scaling exponent, and
/// optionally persists a CSV and a plain-text report.
pub fn scan(config: &ExperimentConfig) -> Result<ScalingReport> {
    config.validate()?;
    let family = GraphFamily::parse(&config.graph)?;
    let axes = default_axes(family.build()?.family_name());

    let rows: Vec<ScanRow> = config
        .n_list
        .par_iter()
        .map(|&n| {
            // Each row builds its own graph so runs share no mutable state.
            let g = family.build()?;
            let start = Instant::now();
            let res = run_one(&*g, config.strategy, n, config.p, config.tie, config.budget)?;
            Ok(ScanRow {
                n,
                moves: res.moves,
                wall_ms: start.elapsed().as_millis() as u64,
                terminated: res.terminated,
            })
        })
        .collect::<Result<_>>()?;

    let fit_rows: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.terminated && r.moves > 0)
        .map(|r| (r.n as f64, r.moves as f64))
        .collect();
    let excluded: Vec<u64> = rows.iter().filter(|r| !r.terminated).map(|r| r.n).collect();
    let (slope, std_error, residual_max) = fit_exponent(&fit_rows, axes)?;

    let report = ScalingReport {
        rows,
        axes,
        slope,
        std_error,
        residual_max,
        excluded,
    };
    if let Some(dir) = &config.out_dir {
        persist(config, &report, dir)?;
    }
    Ok(report)
}

fn persist(config: &ExperimentConfig, report: &ScalingReport, dir: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("scan.csv"))?;
    w.write_record(["graph", "strategy", "n", "p", "seed", "moves", "wall_ms", "terminated"])?;
    for row in &report.rows {
        w.write_record([
            config.graph.as_str(),
            config.strategy.name(),
            &row.n.to_string(),
            &format!("{}", config.p),
            &config.seed.to_string(),
            &row.moves.to_string(),
            &row.wall_ms.to_string(),
            &row.terminated.to_string(),
        ])?;
    }
    w.flush()?;

    let mut text = String::new();
    let _ = writeln!(text, "graph:    {}", config.graph);
    let _ = writeln!(text, "strategy: {}", config.strategy.name());
    let _ = writeln!(text, "p:        {}", config.p);
    let _ = writeln!(
        text,
        "axes:     {}",
        match report.axes {
            FitAxes::LogLog => "log(moves) vs log(n)",
            FitAxes::LinearLog => "log(moves) vs n",
        }
    );
    let _ = writeln!(text, "slope:    {:.6} +/- {:.6}", report.slope, report.std_error);
    let _ = writeln!(text, "max |residual|: {:.6}", report.residual_max);
    if !report.excluded.is_empty() {
        let _ = writeln!(text, "excluded (budget-exhausted): {:?}", report.excluded);
    }
    std::fs::write(dir.join("report.txt"), text)?;
    Ok(())
}

/// Least-squares exponent fit of (n, value) rows on the chosen axes.
/// Returns (slope, slope standard error, max |residual| on the fit axes).
pub fn fit_exponent(rows: &[(f64, f64)], axes: FitAxes) -> Result<(f64, f64, f64)> {
    if rows.len() < 3 {
        return Err(Error::Parameter(format!(
            "exponent fit needs >= 3 rows, got {}",
            rows.len()
        )));
    }
    if rows.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::Parameter("exponent fit needs positive rows".into()));
    }
    let xs: Vec<f64> = rows
        .iter()
        .map(|&(x, _)| match axes {
            FitAxes::LogLog => x.ln(),
            FitAxes::LinearLog => x,
        })
        .collect();
    let ys: Vec<f64> = rows.iter().map(|&(_, y)| y.ln()).collect();
    let (slope, intercept, stderr) = ols(&xs, &ys)?;
    let residual_max = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).abs())
        .fold(0.0f64, f64::max);
    Ok((slope, stderr, residual_max))
}

/// The exact law of the walk killed on leaving `region`, after `rounds`
/// steps, by dense convolution. This is the reference law that round-robin
/// toppling must reproduce.
pub fn killed_walk_law(
    g: &dyn Graph,
    region: &[VertexKey],
    rounds: u64,
) -> Result<HashMap<VertexKey, f64>> {
    let in_region: std::collections::HashSet<&VertexKey> = region.iter().collect();
    let mut law: HashMap<VertexKey, f64> = HashMap::new();
    law.insert(g.origin(), 1.0);
    for _ in 0..rounds {
        let mut next: HashMap<VertexKey, f64> = HashMap::new();
        for (v, mass) in law {
            if in_region.contains(&v) {
                let nbrs = g.neighbors(&v)?;
                let share = mass / nbrs.len() as f64;
                for u in nbrs {
                    *next.entry(u).or_insert(0.0) += share;
                }
            } else {
                *next.entry(v).or_insert(0.0) += mass;
            }
        }
        law = next;
    }
    Ok(law)
}

/// Scope of the aggregated invariant suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckScope {
    /// Everything that finishes in well under a minute.
    Fast,
    /// Exhaustive-search cross checks on tiny instances.
    Oracle,
    /// Fast + oracle + the heavier randomized checks.
    Full,
}

impl std::str::FromStr for CheckScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(CheckScope::Fast),
            "oracle" => Ok(CheckScope::Oracle),
            "full" => Ok(CheckScope::Full),
            other => Err(Error::Parse(format!("unknown check scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub scope: CheckScope,
    pub results: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }
}

fn check(name: &str, body: impl FnOnce() -> Result<String>) -> CheckResult {
    match body() {
        Ok(detail) => CheckResult {
            name: name.to_string(),
            pass: true,
            detail,
        },
        Err(e) => CheckResult {
            name: name.to_string(),
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn require(cond: bool, msg: String) -> Result<String> {
    if cond {
        Ok(msg)
    } else {
        Err(Error::Invariant(msg))
    }
}

/// Runs the module invariants at desk scale and reports per-check results.
pub fn invariant_suite(scope: CheckScope) -> Result<SuiteReport> {
    let mut results = Vec::new();
    if matches!(scope, CheckScope::Fast | CheckScope::Full) {
        results.extend(fast_checks()?);
    }
    if matches!(scope, CheckScope::Oracle | CheckScope::Full) {
        results.extend(oracle_checks()?);
    }
    if scope == CheckScope::Full {
        results.extend(full_checks()?);
    }
    Ok(SuiteReport { scope, results })
}

fn fast_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    out.push(check("conservation-z2", || {
        let g = GraphFamily::Lattice { d: 2 }.build()?;
        let mut dist = MassDist::<f64>::delta(g.origin());
        for _ in 0..50 {
            let v = dist
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(v, _)| v.clone())
                .expect("nonempty");
            dist.full_topple(&*g, &v)?;
        }
        let total = dist.total().to_f64();
        require(
            (total - 1.0).abs() < 1e-12,
            format!("total mass {total} after 50 topples"),
        )
    }));

    out.push(check("greedy-bound-z1-z2", || {
        for (d, n) in [(1u32, 12u64), (2, 6)] {
            let g = GraphFamily::Lattice { d: d as usize }.build()?;
            let res = strategies::greedy(&*g, n, 0.5, &GreedyOpts::default())?;
            let bound = strategies::greedy_bound(d, n, 0.5);
            if !(res.terminated && (res.moves as f64) < bound) {
                return Err(Error::Invariant(format!(
                    "greedy d={d} n={n}: {} moves vs bound {bound}",
                    res.moves
                )));
            }
        }
        Ok("greedy counts below the displayed bound".into())
    }));

    out.push(check("round-robin-killed-walk-z1", || {
        let g = GraphFamily::Lattice { d: 1 }.build()?;
        let region = g.ball(2, 100)?;
        let res = strategies::round_robin_killed_rw(&*g, &region, 2)?;
        let law = killed_walk_law(&*g, &region, 2)?;
        let mut max_err = 0.0f64;
        for (v, m) in law {
            max_err = max_err.max((res.dist.get(&v) - m).abs());
        }
        require(max_err < 1e-12, format!("max law error {max_err:.2e}"))
    }));

    out.push(check("kernel-d2-harmonicity", || {
        let t = diagnostics::potential_kernel(2, 6, 1e-3)?;
        let tol = 10.0 * t.tol_achieved.max(1e-6);
        for x in [[1i64, 0], [2, 1], [3, 2]] {
            let lap = t.laplacian_a(&x)?;
            if lap.abs() > tol {
                return Err(Error::Invariant(format!("Laplacian at {x:?} = {lap:.2e}")));
            }
        }
        let lap_o = t.laplacian_a(&[0, 0])?;
        require(
            (lap_o - 1.0).abs() < tol,
            format!("Laplacian(a) = 1 at o to {tol:.1e}"),
        )
    }));

    out.push(check("energy-m2-inequality-z1", || {
        let g = GraphFamily::Lattice { d: 1 }.build()?;
        let opts = GreedyOpts {
            record_trace: true,
            ..GreedyOpts::default()
        };
        let res = strategies::greedy(&*g, 8, 0.5, &opts)?;
        let trace = res.trace.expect("trace recorded");
        let kernel = diagnostics::potential_kernel(1, 64, 1e-9)?;
        let initial = MassDist::<f64>::delta(g.origin());
        let report = diagnostics::check_energy_m2(&*g, &initial, &trace, &kernel)?;
        require(
            report.ok,
            format!("lhs {:.4} >= rhs {:.4}", report.lhs, report.rhs),
        )
    }));

    out.push(check("sandpile-abelian", || {
        // Stabilize well below the comparison tolerance: the residual
        // order-dependence scales with the stopping slack.
        let a = strategies::sandpile_stabilize(2, 60.0, 1e-13, SweepOrder::DistLex)?;
        let b = strategies::sandpile_stabilize(2, 60.0, 1e-13, SweepOrder::ReverseDistLex)?;
        let mut max_err = 0.0f64;
        for (v, m) in a.field.iter() {
            max_err = max_err.max((m - b.field.get(v)).abs());
        }
        require(max_err < 1e-10, format!("order discrepancy {max_err:.2e}"))
    }));

    out.push(check("m2-increment-identity", || {
        let g = GraphFamily::Lattice { d: 2 }.build()?;
        let mut dist = MassDist::<f64>::delta(g.origin());
        for i in 0..100u64 {
            let (v, m) = dist
                .iter()
                .nth((i as usize * 7) % dist.support_len())
                .map(|(v, m)| (v.clone(), *m))
                .expect("nonempty");
            if m <= 0.0 {
                continue;
            }
            let before = diagnostics::second_moment(&dist)?;
            dist.topple(&*g, &v, m)?;
            let after = diagnostics::second_moment(&dist)?;
            if (after - before - m).abs() > 1e-9 {
                return Err(Error::Invariant(format!(
                    "M2 increment {} for toppled mass {m}",
                    after - before
                )));
            }
        }
        Ok("M2 increment equals toppled mass on 100 random topples".into())
    }));

    out.push(check("closed-form-identity-grid", || {
        for d in 1..=6u32 {
            for k in 1..=d {
                if d + k >= 3 {
                    diagnostics::closed_forms(d, k)?;
                }
            }
        }
        Ok("exp(h/l) = theta for all 1 <= k <= d <= 6".into())
    }));

    Ok(out)
}

fn oracle_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    out.push(check("oracle-z1-values", || {
        let g = GraphFamily::Lattice { d: 1 }.build()?;
        let n1 = oracle::min_moves_exact(&*g, 1, 0.5, 4)?;
        let n2 = oracle::min_moves_exact(&*g, 2, 0.5, 8)?;
        require(
            n1 == Some(1) && n2 == Some(3),
            format!("N_1/2(B_1) = {n1:?}, N_1/2(B_2) = {n2:?}"),
        )
    }));

    out.push(check("greedy-never-beats-oracle", || {
        for (spec, n, cap) in [("lattice:d=1", 1u64, 4u64), ("lattice:d=1", 2, 8), ("dary:d=2", 1, 4)]
        {
            let g = GraphFamily::parse(spec)?.build()?;
            let exact = oracle::min_moves_exact(&*g, n, 0.5, cap)?
                .ok_or_else(|| Error::Invariant(format!("oracle gave up on {spec} n={n}")))?;
            let res = strategies::greedy(&*g, n, 0.5, &GreedyOpts::default())?;
            if res.moves < exact {
                return Err(Error::Invariant(format!(
                    "greedy {} < oracle {exact} on {spec} n={n}",
                    res.moves
                )));
            }
        }
        Ok("greedy >= oracle on all guarded instances".into())
    }));

    Ok(out)
}

fn full_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    out.push(check("round-robin-killed-walk-z2", || {
        let g = GraphFamily::Lattice { d: 2 }.build()?;
        let region = g.ball(4, 100)?;
        let res = strategies::round_robin_killed_rw(&*g, &region, 8)?;
        let law = killed_walk_law(&*g, &region, 8)?;
        let mut max_err = 0.0f64;
        for (v, m) in law {
            max_err = max_err.max((res.dist.get(&v) - m).abs());
        }
        require(max_err < 1e-12, format!("max law error {max_err:.2e}"))
    }));

    out.push(check("smooth-to-uniform-z1", || {
        let dist = strategies::smooth_to_uniform(1, 10, 0.5, 1e-12)?;
        for (v, m) in dist.iter() {
            let VertexKey::Lattice(c) = v else {
                return Err(Error::Invariant("non-lattice support".into()));
            };
            if c[0].abs() > 5 || *m > 2.0 / 11.0 + 1e-12 {
                return Err(Error::Invariant(format!("site {v} mass {m}")));
            }
        }
        Ok("support in {-5..5}, masses <= 2/11".into())
    }));

    out.push(check("sandpile-abelian-exact", || {
        let m = BigRational::from_int(9).div_int(2);
        let zero = <BigRational as MassValue>::zero();
        let a =
            strategies::sandpile_stabilize_exact(2, m.clone(), zero.clone(), SweepOrder::DistLex)?;
        let b = strategies::sandpile_stabilize_exact(2, m, zero, SweepOrder::ReverseDistLex)?;
        for (v, m) in a.field.iter() {
            if *m != b.field.get(v) {
                return Err(Error::Invariant(format!("exact fields differ at {v}")));
            }
        }
        Ok("exact final fields identical across sweep orders".into())
    }));

    out.push(check("exact-float-agreement", || {
        let g = GraphFamily::Lattice { d: 1 }.build()?;
        let mut f = MassDist::<f64>::delta(g.origin());
        let mut r = MassDist::<BigRational>::delta(g.origin());
        for i in -3i64..=3 {
            let v = VertexKey::Lattice(vec![i]);
            if f.get(&v) > 0.0 {
                f.full_topple(&*g, &v)?;
                r.full_topple(&*g, &v)?;
            }
        }
        let disc = crate::mass::compare(&f, &r);
        require(disc < 1e-12, format!("max float-vs-exact discrepancy {disc:.2e}"))
    }));

    Ok(out)
}
