//! End-to-end acceptance suite. Each test prints one verdict line
//! (`ACCEPTANCE <id> <name>: PASS|FAIL`) and then asserts it, so a plain
//! `cargo test --test acceptance -- --nocapture` doubles as a report.

use std::collections::HashMap;
use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use toppler::diagnostics::{self, KernelTable};
use toppler::graphs::{Graph, GraphFamily, VertexKey};
use toppler::harness::{self, fit_exponent, ExperimentConfig, FitAxes, StrategyId};
use toppler::mass::{MassDist, MassValue, RunTrace};
use toppler::oracle;
use toppler::strategies::{self, GreedyOpts, SweepOrder, TieRule};

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id} {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn kernel_d2() -> &'static KernelTable {
    static K: OnceLock<KernelTable> = OnceLock::new();
    K.get_or_init(|| diagnostics::potential_kernel(2, 32, 1e-6).expect("d=2 kernel"))
}

fn kernel_d3() -> &'static KernelTable {
    static K: OnceLock<KernelTable> = OnceLock::new();
    K.get_or_init(|| diagnostics::potential_kernel(3, 20, 1e-6).expect("d=3 kernel"))
}

/// Deterministic test-local RNG (splitmix64), independent of the library's
/// random machinery.
struct TestRng(u64);
impl TestRng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

#[test]
fn criterion_01_z1_scaling() {
    let config = ExperimentConfig::new(
        "lattice:d=1",
        StrategyId::Greedy,
        vec![8, 12, 16, 24, 32, 48, 64],
        0.5,
    );
    let report = harness::scan(&config).expect("scan");
    let ok = report.excluded.is_empty() && (2.8..=3.2).contains(&report.slope);
    verdict(
        1,
        "z1-greedy-slope",
        ok,
        &format!("log-log slope {:.4} (window [2.8, 3.2])", report.slope),
    );
}

#[test]
fn criterion_02_z2_scaling() {
    let config = ExperimentConfig::new(
        "lattice:d=2",
        StrategyId::Greedy,
        vec![8, 12, 16, 24, 32],
        0.5,
    );
    let report = harness::scan(&config).expect("scan");
    let ok = report.excluded.is_empty() && (3.6..=4.4).contains(&report.slope);
    verdict(
        2,
        "z2-greedy-slope",
        ok,
        &format!("log-log slope {:.4} (window [3.6, 4.4])", report.slope),
    );
}

#[test]
fn criterion_03_greedy_bound() {
    let mut violations = Vec::new();
    let mut runs = 0;
    for d in 1u32..=3 {
        let g = GraphFamily::Lattice { d: d as usize }.build().expect("graph");
        let ns: &[u64] = match d {
            1 => &[2, 4, 8, 16, 32],
            2 => &[2, 4, 8, 12],
            _ => &[2, 3, 4],
        };
        for &n in ns {
            for p in [0.25, 0.5, 0.9] {
                let res = strategies::greedy(&*g, n, p, &GreedyOpts::default()).expect("run");
                runs += 1;
                let bound = strategies::greedy_bound(d, n, p);
                if !res.terminated || res.moves as f64 >= bound {
                    violations.push(format!("d={d} n={n} p={p}: {} !< {bound}", res.moves));
                }
            }
        }
    }
    verdict(
        3,
        "greedy-bound",
        violations.is_empty(),
        &format!("{runs} completed runs, violations: {violations:?}"),
    );
}

#[test]
fn criterion_04_comb_scaling() {
    let config = ExperimentConfig::new(
        "comb",
        StrategyId::Comb { c: 2.0 },
        vec![16, 24, 32, 48, 64],
        0.5,
    );
    let report = harness::scan(&config).expect("scan");
    let ok = report.excluded.is_empty() && (3.2..=3.8).contains(&report.slope);
    verdict(
        4,
        "comb-slope",
        ok,
        &format!("log-log slope {:.4} (window [3.2, 3.8])", report.slope),
    );
}

#[test]
fn criterion_05_tree_scaling() {
    let g = GraphFamily::Dary { d: 2 }.build().expect("graph");
    let p = 0.5;
    let mut rows = Vec::new();
    let mut lb_ok = true;
    for n in 6u64..=14 {
        let res = strategies::greedy(&*g, n, p, &GreedyOpts::default()).expect("run");
        assert!(res.terminated);
        if (res.moves as f64) < (p - 0.01) * 2f64.powi(n as i32 - 1) {
            lb_ok = false;
        }
        rows.push((n as f64, res.moves as f64));
    }
    let (slope, _, _) = fit_exponent(&rows, FitAxes::LinearLog).expect("fit");
    let ln2 = 2f64.ln();
    let slope_ok = (slope - ln2).abs() <= 0.15 * ln2;
    verdict(
        5,
        "binary-tree-growth",
        slope_ok && lb_ok,
        &format!(
            "log-linear slope {slope:.4} vs ln2 = {ln2:.4} (+/-15%), lower bound held: {lb_ok}"
        ),
    );
}

/// Independent dense-convolution law of the killed walk, written against the
/// neighbor lists only (no toppling machinery).
fn conv_killed_law(
    g: &dyn Graph,
    region: &[VertexKey],
    rounds: u64,
) -> HashMap<VertexKey, f64> {
    let inside: std::collections::HashSet<&VertexKey> = region.iter().collect();
    let mut law = HashMap::from([(g.origin(), 1.0f64)]);
    for _ in 0..rounds {
        let mut next: HashMap<VertexKey, f64> = HashMap::new();
        for (v, mass) in &law {
            if inside.contains(v) {
                let nbrs = g.neighbors(v).expect("neighbors");
                let share = mass / nbrs.len() as f64;
                for u in nbrs {
                    *next.entry(u).or_insert(0.0) += share;
                }
            } else {
                *next.entry(v.clone()).or_insert(0.0) += mass;
            }
        }
        law = next;
    }
    law
}

#[test]
fn criterion_06_killed_walk_equivalence() {
    let cases = [("lattice:d=1", 8u64), ("lattice:d=2", 5), ("dary:d=2", 4)];
    let mut worst = 0.0f64;
    for (spec, radius) in cases {
        let g = GraphFamily::parse(spec).expect("spec").build().expect("graph");
        let region = g.ball(radius, 10_000).expect("ball");
        for rounds in [1u64, 4, 16] {
            let res =
                strategies::round_robin_killed_rw(&*g, &region, rounds).expect("round robin");
            let law = conv_killed_law(&*g, &region, rounds);
            for (v, m) in &law {
                worst = worst.max((res.dist.get(v) - m).abs());
            }
            // And the other direction: no mass where the law has none.
            for (v, m) in res.dist.iter() {
                worst = worst.max((m - law.get(v).copied().unwrap_or(0.0)).abs());
            }
        }
    }
    verdict(
        6,
        "killed-walk-equivalence",
        worst <= 1e-12,
        &format!("max |round-robin - convolution| = {worst:.3e}"),
    );
}

#[test]
fn criterion_07_exact_identities() {
    // Random 1000-step traces; full or half topples of a random support
    // vertex. Exact rational and float fields evolve in lockstep.
    let g1 = GraphFamily::Lattice { d: 1 }.build().expect("graph");
    let mut rng = TestRng(42);
    let mut exact = MassDist::<BigRational>::delta(g1.origin());
    let mut float = MassDist::<f64>::delta(g1.origin());
    let two = BigRational::from_int(2);
    let mut worst_float = 0.0f64;
    for i in 0..1000 {
        let support: Vec<VertexKey> = exact.iter().map(|(v, _)| v.clone()).collect();
        let v = support[rng.below(support.len())].clone();
        let pre = exact.get(&v);
        if <BigRational as Zero>::is_zero(&pre) {
            continue;
        }
        let half = rng.below(2) == 1;
        let m = if half { pre.clone().div_int(2) } else { pre.clone() };

        // Exact energy increment: E_i - E_{i-1} = 2 m mu_{i-1}(v) - m^2.
        let e_before = diagnostics::energy_d1_exact(&exact).expect("exact energy");
        let m2_before = diagnostics::second_moment_exact(&exact).expect("exact m2");
        exact.topple(&*g1, &v, m.clone()).expect("exact topple");
        let e_after = diagnostics::energy_d1_exact(&exact).expect("exact energy");
        let m2_after = diagnostics::second_moment_exact(&exact).expect("exact m2");
        let predicted = &two * &m * &pre - &m * &m;
        assert_eq!(
            e_after.clone() - e_before,
            predicted,
            "exact energy identity failed at step {i}"
        );
        assert_eq!(m2_after - m2_before, m, "exact M2 identity failed at step {i}");

        // Float mode within 1e-12. The amount is taken from the float
        // distribution itself so rounding drift cannot overdraw a vertex.
        let pre_f = float.get(&v);
        let mf = if half { pre_f / 2.0 } else { pre_f };
        let e_before_f = energy_d1_float(&float);
        let m2_before_f = diagnostics::second_moment(&float).expect("float m2");
        float.topple(&*g1, &v, mf).expect("float topple");
        let e_after_f = energy_d1_float(&float);
        let m2_after_f = diagnostics::second_moment(&float).expect("float m2");
        let scale = e_after_f.abs().max(1.0);
        worst_float = worst_float
            .max(((e_after_f - e_before_f) - (2.0 * mf * pre_f - mf * mf)).abs() / scale);
        worst_float = worst_float.max(((m2_after_f - m2_before_f) - mf).abs());
    }
    verdict(
        7,
        "per-step-identities",
        worst_float <= 1e-12,
        &format!("exact identities held; worst float deviation {worst_float:.3e}"),
    );
}

fn energy_d1_float(dist: &MassDist<f64>) -> f64 {
    let support: Vec<(i64, f64)> = dist
        .iter()
        .map(|(v, m)| {
            let VertexKey::Lattice(c) = v else { panic!("non-lattice") };
            (c[0], *m)
        })
        .collect();
    let mut acc = 0.0;
    for (i, (x, mx)) in support.iter().enumerate() {
        for (y, my) in support.iter().skip(i + 1) {
            acc += 2.0 * (x - y).abs() as f64 * mx * my;
        }
    }
    acc
}

/// A random trace of `steps` full topples confined to the given box radius.
fn random_trace(
    g: &dyn Graph,
    box_radius: i64,
    steps: usize,
    rng: &mut TestRng,
) -> (MassDist<f64>, RunTrace<f64>) {
    let initial = MassDist::<f64>::delta(g.origin());
    let mut dist = initial.clone();
    let mut trace = RunTrace::new();
    for _ in 0..steps {
        let candidates: Vec<VertexKey> = dist
            .iter()
            .filter(|(v, m)| {
                let VertexKey::Lattice(c) = v else { return false };
                **m > 0.0 && c.iter().all(|x| x.abs() <= box_radius)
            })
            .map(|(v, _)| v.clone())
            .collect();
        if candidates.is_empty() {
            break;
        }
        let v = candidates[rng.below(candidates.len())].clone();
        let record = dist.full_topple(g, &v).expect("topple");
        trace.records.push(record);
    }
    (initial, trace)
}

#[test]
fn criterion_08_energy_m2_inequality() {
    let d1_kernel = diagnostics::potential_kernel(1, 64, 1e-9).expect("d=1 kernel");
    let cases: [(usize, i64, &KernelTable); 3] = [
        (1, 30, &d1_kernel),
        (2, 14, kernel_d2()),
        (3, 8, kernel_d3()),
    ];
    let mut checked = 0u64;
    let mut min_margin = f64::INFINITY;
    for (d, box_radius, kernel) in cases {
        let g = GraphFamily::Lattice { d }.build().expect("graph");
        let mut rng = TestRng(d as u64);
        for _ in 0..1000 {
            let steps = 5 + rng.below(25);
            let (initial, trace) = random_trace(&*g, box_radius, steps, &mut rng);
            let report =
                diagnostics::check_energy_m2(&*g, &initial, &trace, kernel).expect("check");
            checked += 1;
            min_margin = min_margin.min(report.lhs - report.rhs + report.slack);
            if !report.ok {
                verdict(
                    8,
                    "energy-m2-inequality",
                    false,
                    &format!(
                        "violation on Z^{d}: lhs {:.6} < rhs {:.6} - slack {:.2e}",
                        report.lhs, report.rhs, report.slack
                    ),
                );
            }
        }
    }
    verdict(
        8,
        "energy-m2-inequality",
        true,
        &format!("{checked} traces, zero violations, min slack margin {min_margin:.3e}"),
    );
}

#[test]
fn criterion_09_oracle_agreement() {
    let g1 = GraphFamily::Lattice { d: 1 }.build().expect("graph");
    let n1 = oracle::min_moves_exact(&*g1, 1, 0.5, 4).expect("oracle");
    let n2 = oracle::min_moves_exact(&*g1, 2, 0.5, 8).expect("oracle");
    let g1_n1 = strategies::greedy(&*g1, 1, 0.5, &GreedyOpts::default()).expect("run");
    let g1_n2 = strategies::greedy(&*g1, 2, 0.5, &GreedyOpts::default()).expect("run");
    let equal_ok =
        n1 == Some(1) && n2 == Some(3) && g1_n1.moves == 1 && g1_n2.moves == 3;

    // Greedy never beats the oracle on any guarded instance.
    let mut beats = Vec::new();
    for (spec, n, cap) in [
        ("lattice:d=1", 1u64, 6u64),
        ("lattice:d=1", 2, 10),
        ("dary:d=2", 1, 6),
        ("comb", 1, 6),
    ] {
        for p in [0.25, 0.5, 0.75] {
            let g = GraphFamily::parse(spec).expect("spec").build().expect("graph");
            let Some(exact) = oracle::min_moves_exact(&*g, n, p, cap).expect("oracle") else {
                continue;
            };
            let res = strategies::greedy(&*g, n, p, &GreedyOpts::default()).expect("run");
            if res.moves < exact {
                beats.push(format!("{spec} n={n} p={p}: greedy {} < {exact}", res.moves));
            }
        }
    }
    verdict(
        9,
        "oracle-agreement",
        equal_ok && beats.is_empty(),
        &format!(
            "oracle Z1: n=1 -> {n1:?}, n=2 -> {n2:?}; greedy matched; beats: {beats:?}"
        ),
    );
}

#[test]
fn criterion_10_sandpile_shape() {
    let m = 1e4;
    let out = strategies::sandpile_stabilize(2, m, 1e-8, SweepOrder::DistLex).expect("sandpile");
    let r = (m / std::f64::consts::PI).sqrt();
    let norm = |v: &VertexKey| -> f64 {
        let VertexKey::Lattice(c) = v else { panic!("non-lattice") };
        ((c[0] * c[0] + c[1] * c[1]) as f64).sqrt()
    };
    let outradius = out.occupied.iter().map(norm).fold(0.0f64, f64::max);
    let occupied: std::collections::HashSet<_> = out.occupied.iter().cloned().collect();
    let lim = (r + 5.0).ceil() as i64;
    let mut inradius = f64::INFINITY;
    for x in -lim..=lim {
        for y in -lim..=lim {
            if !occupied.contains(&VertexKey::Lattice(vec![x, y])) {
                inradius = inradius.min(((x * x + y * y) as f64).sqrt());
            }
        }
    }
    let shape_ok = (inradius - r).abs() <= 2.0 && (outradius - r).abs() <= 2.0;

    // Abelian order-independence at a stopping slack tight enough for the
    // 1e-10 comparison to be meaningful.
    let a = strategies::sandpile_stabilize(2, m, 1e-12, SweepOrder::DistLex).expect("sandpile");
    let b =
        strategies::sandpile_stabilize(2, m, 1e-12, SweepOrder::ReverseDistLex).expect("sandpile");
    let mut discrepancy = 0.0f64;
    for (v, mass) in a.field.iter() {
        discrepancy = discrepancy.max((mass - b.field.get(v)).abs());
    }
    for (v, mass) in b.field.iter() {
        discrepancy = discrepancy.max((mass - a.field.get(v)).abs());
    }
    verdict(
        10,
        "sandpile-shape",
        shape_ok && discrepancy <= 1e-10,
        &format!(
            "r = {r:.2}, inradius {inradius:.2}, outradius {outradius:.2}, \
             abelian discrepancy {discrepancy:.3e}"
        ),
    );
}

#[test]
fn criterion_11_product_tree_speed() {
    let mut details = Vec::new();
    let mut ok = true;
    for (d, k) in [(2u32, 2u32), (3, 2), (3, 1)] {
        let g = GraphFamily::ProdTree { d, k }.build().expect("graph");
        let forms = diagnostics::closed_forms(d, k).expect("closed forms");
        let s = diagnostics::mc_speed(&*g, 1000, 10_000, 97).expect("mc");
        let rel = (s.estimate - forms.speed).abs() / forms.speed;
        details.push(format!(
            "({d},{k}): mc {:.4} vs {:.4} (rel {:.3}%)",
            s.estimate,
            forms.speed,
            100.0 * rel
        ));
        if rel > 0.02 {
            ok = false;
        }
    }
    // exp(h/l) = theta to 1e-12 across the grid is asserted inside
    // closed_forms; exercise the full grid.
    for d in 1..=6u32 {
        for k in 1..=d {
            if d + k >= 3 {
                diagnostics::closed_forms(d, k).expect("identity");
            }
        }
    }
    verdict(
        11,
        "product-tree-speed",
        ok,
        &format!("{}; identity grid 1<=k<=d<=6 ok", details.join("; ")),
    );
}

#[test]
fn criterion_12_lamplighter() {
    let g = GraphFamily::Lamplighter.build().expect("graph");
    let gd = diagnostics::mc_green_decay(&*g, 10, 100_000, 13).expect("green decay");
    let ratio = gd.slope.abs() / gd.slope_std_error;
    let decay_ok = gd.slope < 0.0 && ratio > 3.0;

    let mut rows = Vec::new();
    for n in 3u64..=7 {
        let res = strategies::greedy(&*g, n, 0.5, &GreedyOpts::default()).expect("run");
        assert!(res.terminated);
        rows.push((n as f64, res.moves as f64));
    }
    let (slope, _, _) = fit_exponent(&rows, FitAxes::LinearLog).expect("fit");
    verdict(
        12,
        "lamplighter-decay-and-growth",
        decay_ok && slope > 0.0,
        &format!(
            "green slope {:.4} (|slope|/stderr = {ratio:.1}); greedy log-linear slope {slope:.4}",
            gd.slope
        ),
    );
}

#[test]
fn criterion_13_reference_sweep_count() {
    let g = GraphFamily::Comb.build().expect("graph");
    let res = strategies::greedy_sweeps(
        &*g,
        1_000_000,
        TieRule::SymmetricSimultaneous,
        strategies::DEFAULT_BUDGET,
    )
    .expect("sweeps");
    let target = 3_439_472f64;
    let rel = (res.moves as f64 - target).abs() / target;
    verdict(
        13,
        "comb-reference-count",
        rel <= 0.10,
        &format!("{} moves vs reference {target} (rel {:.4}%)", res.moves, 100.0 * rel),
    );
}

#[test]
fn criterion_14_excluded_asymptotics() {
    // The o(1) exponent corrections for positive-speed and lamplighter
    // growth, and the Galton-Watson dimension constant, are asymptotic
    // statements with no finite-n certificate; they are excluded from
    // quantitative acceptance and covered qualitatively by the property
    // suites (criteria 11 and 12 and the randomized invariants).
    verdict(
        14,
        "asymptotic-exclusions-documented",
        true,
        "o(1) corrections and the branching-dimension constant are documented exclusions",
    );
}
