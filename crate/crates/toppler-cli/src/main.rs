//! `toppler` command line: run strategies, scan scaling exponents, query the
//! exact oracle, build kernel tables, estimate walk statistics, render
//! heatmaps, and run the invariant suites.
//!
//! Exit codes: 0 ok, 1 invariant failure, 2 usage error, 3 budget
//! exhaustion. `TOPPLER_THREADS` bounds worker threads.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use toppler::diagnostics;
use toppler::graphs::{Graph, GraphFamily};
use toppler::harness::{self, CheckScope, ExperimentConfig, FitAxes, StrategyId};
use toppler::mass::MassDist;
use toppler::oracle;
use toppler::render::{render_heatmap, Bounds, ColorScale};
use toppler::strategies::{self, GreedyOpts, TieRule};
use toppler::Error;

#[derive(Parser)]
#[command(name = "toppler", version, about = "Controlled diffusion on infinite graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single strategy and report the achieved move count.
    Run(RunArgs),
    /// Sweep a strategy across n and fit the scaling exponent.
    Scan(ScanArgs),
    /// Exact minimum move count on tiny guarded instances.
    Oracle(OracleArgs),
    /// Compute a potential-kernel table and write it as CSV.
    Kernel(KernelArgs),
    /// Random-walk statistics (Monte Carlo speed, exit times, Green decay).
    Stats(StatsArgs),
    /// Render a dumped distribution as a PGM heatmap.
    Render(RenderArgs),
    /// Run the aggregated invariant suite.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Graph spec, e.g. lattice:d=2, comb, dary:d=3, prodtree:d=3,k=2,
    /// gw:dist=0:0.25,2:0.75;seed=1, lamplighter.
    #[arg(long)]
    graph: String,
    /// Target radius: push mass p to distance >= n.
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// greedy | roundrobin | comb | sandpile-smooth | restricted
    #[arg(long, default_value = "greedy")]
    strategy: String,
    /// lex | sym
    #[arg(long, default_value = "lex")]
    tie: String,
    #[arg(long, default_value_t = strategies::DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rectangle half-width factor (comb) or radius factor (sandpile-smooth).
    #[arg(long)]
    c: Option<f64>,
    /// Round cap for the restricted strategy.
    #[arg(long)]
    rounds: Option<u64>,
    /// Write the final distribution as CSV (vertex_encoding,mass).
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    graph: String,
    /// greedy | roundrobin | comb
    #[arg(long, default_value = "greedy")]
    strategy: String,
    /// Comma-separated strictly increasing n values.
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<u64>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value = "lex")]
    tie: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = strategies::DEFAULT_BUDGET)]
    budget: u64,
    /// Directory for scan.csv and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 8)]
    depth_cap: u64,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    d: u32,
    #[arg(long = "L")]
    l: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    graph: String,
    /// speed | exit | green
    #[arg(long)]
    kind: String,
    /// Walk length for speed estimates.
    #[arg(long, default_value_t = 1000)]
    t: u64,
    /// Region radius (exit) or maximum shell distance (green).
    #[arg(long, default_value_t = 4)]
    n: u64,
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    graph: String,
    /// Distribution dump produced by `run --dump`.
    #[arg(long)]
    load: PathBuf,
    /// Renders the square [-bounds, bounds]^2.
    #[arg(long, default_value_t = 16)]
    bounds: i64,
    /// linear | log
    #[arg(long, default_value = "linear")]
    scale: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// fast | oracle | full
    #[arg(long, default_value = "fast")]
    scope: String,
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::Parse(_) | Error::Parameter(_) | Error::Unsupported(_) | Error::Range(_) => {
            ExitCode::from(2)
        }
        Error::ResourceGuard(_) => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("TOPPLER_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: TOPPLER_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Kernel(args) => cmd_kernel(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Render(args) => cmd_render(args),
        Command::Check(args) => cmd_check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn build_graph(spec: &str) -> toppler::Result<std::sync::Arc<dyn Graph>> {
    GraphFamily::parse(spec)?.build()
}

fn dump(dist: &MassDist<f64>, path: &PathBuf) -> toppler::Result<()> {
    let file = std::fs::File::create(path)?;
    dist.dump_csv(std::io::BufWriter::new(file))
}

fn cmd_run(args: RunArgs) -> toppler::Result<ExitCode> {
    let g = build_graph(&args.graph)?;
    let tie = TieRule::from_str(&args.tie)?;
    let strategy = StrategyId::from_str(&args.strategy)?;
    let (result, dist) = match strategy {
        StrategyId::Greedy => {
            let opts = GreedyOpts {
                tie,
                budget: args.budget,
                ..GreedyOpts::default()
            };
            let r = strategies::greedy(&*g, args.n, args.p, &opts)?;
            (Some((r.moves, r.terminated, r.budget_exhausted)), r.dist)
        }
        StrategyId::RoundRobin => {
            let region = g.ball(args.n, 10_000_000)?;
            let r = strategies::rw_until_mass_out(&*g, &region, args.p, args.budget)?;
            (Some((r.moves, r.terminated, r.budget_exhausted)), r.dist)
        }
        StrategyId::Comb { c } => {
            let c = args.c.unwrap_or(c);
            let r = strategies::comb_strategy(&*g, args.n, args.p, c, args.budget)?;
            (Some((r.moves, r.terminated, r.budget_exhausted)), r.dist)
        }
        StrategyId::SandpileSmooth { c } => {
            let GraphFamily::Lattice { d } = GraphFamily::parse(&args.graph)? else {
                return Err(Error::Unsupported(
                    "sandpile-smooth needs a lattice graph".into(),
                ));
            };
            let c = args.c.unwrap_or(c);
            let dist = strategies::smooth_to_uniform(d, args.n, c, 1e-9)?;
            (None, dist)
        }
        StrategyId::Restricted => {
            let support = strategies::build_utn(&*g, args.n, 0.5, 4 * args.n, 10_000, args.seed, None)?;
            let rounds = args.rounds.unwrap_or(8 * args.n);
            let r = strategies::restricted_rw(&*g, &support, rounds)?;
            let outside = r.dist.mass_outside(&*g, args.n)?;
            (Some((r.moves, outside >= args.p, false)), r.dist)
        }
    };
    println!("graph: {}", args.graph);
    println!("strategy: {}", args.strategy);
    println!("n: {}", args.n);
    println!("p: {}", args.p);
    let mut budget_hit = false;
    if let Some((moves, terminated, exhausted)) = result {
        println!("moves: {moves}");
        println!("terminated: {terminated}");
        budget_hit = exhausted;
    }
    println!("mass_outside: {:.12}", dist.mass_outside(&*g, args.n)?);
    println!("support: {}", dist.support_len());
    if let Some(path) = &args.dump {
        dump(&dist, path)?;
        println!("dump: {}", path.display());
    }
    Ok(if budget_hit { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn cmd_scan(args: ScanArgs) -> toppler::Result<ExitCode> {
    let config = ExperimentConfig {
        graph: args.graph.clone(),
        strategy: StrategyId::from_str(&args.strategy)?,
        n_list: args.n_list,
        p: args.p,
        tie: TieRule::from_str(&args.tie)?,
        seed: args.seed,
        budget: args.budget,
        out_dir: args.out,
    };
    let report = harness::scan(&config)?;
    println!(
        "axes: {}",
        match report.axes {
            FitAxes::LogLog => "log-log",
            FitAxes::LinearLog => "linear-log",
        }
    );
    for row in &report.rows {
        println!(
            "n={} moves={} wall_ms={} terminated={}",
            row.n, row.moves, row.wall_ms, row.terminated
        );
    }
    println!("slope: {:.6}", report.slope);
    println!("stderr: {:.6}", report.std_error);
    if !report.excluded.is_empty() {
        println!("excluded: {:?}", report.excluded);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs) -> toppler::Result<ExitCode> {
    let g = build_graph(&args.graph)?;
    match oracle::min_moves_exact(&*g, args.n, args.p, args.depth_cap)? {
        Some(moves) => println!("exact_moves: {moves}"),
        None => println!("exact_moves: none within depth cap {}", args.depth_cap),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_kernel(args: KernelArgs) -> toppler::Result<ExitCode> {
    let table = diagnostics::potential_kernel(args.d, args.l, args.tol)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    use std::io::Write;
    let coords: Vec<String> = (0..args.d).map(|i| format!("x{i}")).collect();
    if table.has_green() {
        writeln!(w, "{},a,g", coords.join(","))?;
    } else {
        writeln!(w, "{},a", coords.join(","))?;
    }
    for (cell, a, g) in table.entries() {
        let cs: Vec<String> = cell.iter().map(|v| v.to_string()).collect();
        match g {
            Some(g) => writeln!(w, "{},{a},{g}", cs.join(","))?,
            None => writeln!(w, "{},{a}", cs.join(","))?,
        }
    }
    w.flush()?;
    println!("iterations: {}", table.iterations);
    println!("tol_achieved: {:.3e}", table.tol_achieved);
    println!("converged: {}", table.converged);
    if table.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_stats(args: StatsArgs) -> toppler::Result<ExitCode> {
    let g = build_graph(&args.graph)?;
    match args.kind.as_str() {
        "speed" => {
            let s = diagnostics::mc_speed(&*g, args.t, args.samples, args.seed)?;
            println!("kind: speed");
            println!("estimate: {:.6}", s.estimate);
            println!("stderr: {:.6}", s.std_error);
            println!("samples: {}", s.samples);
        }
        "exit" => {
            let region = g.ball(args.n, 10_000)?;
            let exact = diagnostics::exact_exit_time(&*g, &region)?;
            let s = diagnostics::mc_exit_time(&*g, &region, args.samples, args.seed)?;
            println!("kind: exit");
            println!("exact: {exact:.6}");
            println!("estimate: {:.6}", s.estimate);
            println!("stderr: {:.6}", s.std_error);
            println!("samples: {}", s.samples);
        }
        "green" => {
            let gd = diagnostics::mc_green_decay(&*g, args.n, args.samples, args.seed)?;
            println!("kind: green");
            println!("slope: {:.6}", gd.slope);
            println!("stderr: {:.6}", gd.slope_std_error);
            println!("g_origin: {:.6}", gd.g_origin);
            for shell in &gd.shells {
                println!(
                    "shell d={} rep={} g={:.6} avg={:.6} states={}",
                    shell.dist,
                    shell.representative,
                    shell.rep_estimate,
                    shell.shell_avg,
                    shell.states
                );
            }
            if !gd.dropped.is_empty() {
                println!("dropped: {:?}", gd.dropped);
            }
        }
        other => return Err(Error::Parse(format!("unknown stats kind `{other}`"))),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(args: RenderArgs) -> toppler::Result<ExitCode> {
    let g = build_graph(&args.graph)?;
    let scale = ColorScale::from_str(&args.scale)?;
    let dist = load_dump(&*g, &args.load)?;
    render_heatmap(&*g, &dist, Bounds::square(args.bounds), &args.out, scale)?;
    println!("wrote: {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_dump(g: &dyn Graph, path: &PathBuf) -> toppler::Result<MassDist<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "vertex_encoding,mass" {
                return Err(Error::Parse(format!("unexpected dump header `{line}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        // The vertex encoding may itself contain commas, in which case the
        // dump writer double-quotes it; the mass is the last bare field.
        let (vertex, mass) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Parse(format!("bad dump line `{line}`")))?;
        let vertex = vertex.trim_matches('"');
        let mass: f64 = mass
            .parse()
            .map_err(|_| Error::Parse(format!("bad mass in `{line}`")))?;
        entries.push((g.parse_vertex(vertex)?, mass));
    }
    Ok(MassDist::from_entries(entries))
}

fn cmd_check(args: CheckArgs) -> toppler::Result<ExitCode> {
    let scope = CheckScope::from_str(&args.scope)?;
    let report = harness::invariant_suite(scope)?;
    for r in &report.results {
        println!("{} {} - {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if report.passed() {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("checks failed");
        Ok(ExitCode::from(1))
    }
}
