//! `fpgs`: command-line front end for the global fixed-priority toolkit.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fpgs::analysis;
use fpgs::assign::{self, Algorithm, DEFAULT_ENUMERATION_CAP};
use fpgs::experiment::{self, Contender, ExperimentConfig, FractionMode, Table1Config};
use fpgs::gen::{self, DeadlineModel, GenConfig};
use fpgs::service::{self, Store, TcpServer};
use fpgs::sim::{self, ArrivalPattern};
use fpgs::{PriorityOrder, TaskSet, TestKind, Time};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "fpgs",
    version,
    about = "Global fixed-priority scheduling toolkit"
)]
struct Cli {
    /// Root seed for every random choice.
    #[arg(long, global = true, env = "FPGS_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate random tasksets as line-delimited JSON.
    Gen(GenArgs),
    /// Run a schedulability test on a fixed priority order.
    Test(TestArgs),
    /// Compute priority orders with one or more assignment algorithms.
    Assign(AssignArgs),
    /// Count schedulable priority orders, exhaustively or by sampling.
    Enumerate(EnumerateArgs),
    /// Simulate one arrival pattern and report the first deadline miss.
    Simulate(SimulateArgs),
    /// Schedulability ratio against utilization, as CSV.
    Experiment(ExperimentArgs),
    /// Fraction of schedulable priority orders against taskset size, as CSV.
    Table1(Table1Args),
    /// Serve rewards over line-delimited JSON.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
struct Generator {
    /// Minimum and maximum period.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = gen::DEFAULT_PERIOD_RANGE)]
    periods: Vec<Time>,
    #[arg(long, value_enum, default_value_t = Deadlines::Implicit)]
    deadlines: Deadlines,
}

impl Generator {
    fn range(&self) -> [Time; 2] {
        [self.periods[0], self.periods[1]]
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Deadlines {
    Implicit,
    Constrained,
}

impl From<Deadlines> for DeadlineModel {
    fn from(d: Deadlines) -> Self {
        match d {
            Deadlines::Implicit => DeadlineModel::Implicit,
            Deadlines::Constrained => DeadlineModel::Constrained,
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(short, long)]
    n: usize,
    #[arg(short, long)]
    m: usize,
    /// Target total utilization.
    #[arg(short, long)]
    u: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[command(flatten)]
    generator: Generator,
}

#[derive(Args, Debug)]
struct Input {
    /// Taskset file: JSON objects, one or more, `-` for stdin.
    input: PathBuf,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value = "RTA_LC")]
    test: TestKind,
    /// Task ids from highest to lowest priority (default: deadline monotonic).
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct AssignArgs {
    #[command(flatten)]
    input: Input,
    /// DM, DM_DS, DkC, SJF, RANDOM, RANDOM(<seed>) or OPA.
    #[arg(long = "alg", value_delimiter = ',', default_value = "DM")]
    algorithms: Vec<String>,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value = "RTA_LC")]
    test: TestKind,
    /// Largest n enumerated exhaustively.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: usize,
    /// Sample this many random orders instead of enumerating.
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Pattern {
    Synchronous,
    Random,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    input: Input,
    /// Task ids from highest to lowest priority (default: deadline monotonic).
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Pattern::Synchronous)]
    arrivals: Pattern,
    /// Default: hyperperiod, capped at 10^6.
    #[arg(long)]
    horizon: Option<Time>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(short, long)]
    n: usize,
    #[arg(short, long)]
    m: usize,
    /// Total utilizations to sweep (default: 0.4m to 0.8m in steps of 0.1m).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 500)]
    sets: usize,
    /// Algorithms, plus POLICY(<order file>) for externally computed orders.
    #[arg(
        long = "alg",
        value_delimiter = ';',
        default_value = "DM;DM_DS;DkC;SJF;OPA"
    )]
    algorithms: Vec<String>,
    #[arg(long, default_value = "RTA_LC")]
    test: TestKind,
    #[command(flatten)]
    generator: Generator,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Mode {
    Exhaustive,
    Sampled,
}

#[derive(Args, Debug)]
struct Table1Args {
    /// Taskset sizes (default: 4,6,8 exhaustive, 10,12,14,16 sampled).
    #[arg(short, long = "n", value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    #[arg(short, long, default_value_t = 2)]
    m: usize,
    /// Total utilization as a fraction of m.
    #[arg(long, default_value_t = 0.6)]
    load: f64,
    #[arg(long, default_value_t = 500)]
    sets: usize,
    #[arg(long, default_value = "RTA_LC")]
    test: TestKind,
    #[arg(long, default_value_t = 8)]
    cap: usize,
    #[command(flatten)]
    generator: Generator,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Transport {
    Stdio,
    Tcp,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, value_enum, default_value_t = Transport::Stdio)]
    transport: Transport,
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value_t = 7878)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Tasksets to load before serving; they get ids from 0.
    #[arg(long)]
    preload: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if let Command::Serve(args) = &cli.command {
        return serve(args);
    }
    let mut out: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    run(&cli, &mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => {
            let cfg = GenConfig {
                n: a.n,
                m: a.m,
                target_u: a.u,
                period_range: a.generator.range(),
                deadline_model: a.generator.deadlines.into(),
                seed: cli.seed,
            };
            for ts in gen::gen_many(&cfg, a.count)? {
                writeln!(out, "{}", ts.to_json())?;
            }
        }
        Command::Test(a) => {
            for ts in read_sets(&a.input.input)? {
                a.test.check_applicable(&ts)?;
                let order = order_or_dm(&ts, a.order.as_deref())?;
                let verdict = analysis::evaluate(a.test, &ts, &order);
                writeln!(out, "{}", serde_json::to_string(&verdict)?)?;
            }
        }
        Command::Assign(a) => {
            let algorithms = a
                .algorithms
                .iter()
                .map(|s| parse_algorithm(s, cli.seed))
                .collect::<Result<Vec<_>>>()?;
            for ts in read_sets(&a.input.input)? {
                for &alg in &algorithms {
                    writeln!(out, "{}", serde_json::to_string(&assign::assign(&ts, alg))?)?;
                }
            }
        }
        Command::Enumerate(a) => {
            for ts in read_sets(&a.input.input)? {
                a.test.check_applicable(&ts)?;
                let line = match a.samples {
                    Some(k) => {
                        serde_json::to_string(&assign::sampled_fraction(&ts, a.test, k, cli.seed)?)?
                    }
                    None => serde_json::to_string(&assign::exhaustive_search(&ts, a.test, a.cap)?)?,
                };
                writeln!(out, "{line}")?;
            }
        }
        Command::Simulate(a) => {
            for ts in read_sets(&a.input.input)? {
                let order = order_or_dm(&ts, a.order.as_deref())?;
                let mut pattern = match a.arrivals {
                    Pattern::Synchronous => ArrivalPattern::synchronous(),
                    Pattern::Random => ArrivalPattern::random(cli.seed),
                };
                if let Some(h) = a.horizon {
                    pattern = pattern.with_horizon(h);
                }
                let outcome = sim::simulate(&ts, &order, &pattern);
                let line = json!({"miss": outcome.miss, "first_miss": outcome.first_miss});
                writeln!(out, "{line}")?;
            }
        }
        Command::Experiment(a) => {
            let algorithms = a
                .algorithms
                .iter()
                .map(|s| parse_contender(s, cli.seed))
                .collect::<Result<Vec<_>>>()?;
            let mut cfg = ExperimentConfig::new(a.n, a.m, algorithms);
            if let Some(grid) = &a.grid {
                cfg.grid = grid.clone();
            }
            cfg.sets_per_point = a.sets;
            cfg.test = a.test;
            cfg.period_range = a.generator.range();
            cfg.deadline_model = a.generator.deadlines.into();
            cfg.seed = cli.seed;
            let rows = experiment::run_experiment(&cfg)?;
            experiment::write_ratio_csv(&rows, out)?;
        }
        Command::Table1(a) => {
            let mode = match a.mode {
                Mode::Exhaustive => FractionMode::Exhaustive,
                Mode::Sampled => FractionMode::Sampled { samples: a.samples },
            };
            let n_values = a.n_values.clone().unwrap_or_else(|| match a.mode {
                Mode::Exhaustive => vec![4, 6, 8],
                Mode::Sampled => vec![10, 12, 14, 16],
            });
            let mut cfg = Table1Config::new(n_values, mode);
            cfg.m = a.m;
            cfg.load = a.load;
            cfg.sets_per_n = a.sets;
            cfg.test = a.test;
            cfg.enumeration_cap = a.cap;
            cfg.period_range = a.generator.range();
            cfg.deadline_model = a.generator.deadlines.into();
            cfg.seed = cli.seed;
            let rows = experiment::replicate_table1(&cfg)?;
            experiment::write_fraction_csv(mode, &rows, out)?;
        }
        Command::Serve(_) => unreachable!("handled before output is opened"),
    }
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<()> {
    let store = Store::new();
    if let Some(path) = &args.preload {
        let sets = read_sets(path)?;
        eprintln!("loaded {} tasksets", sets.len());
        store.insert(sets);
    }
    match args.transport {
        Transport::Stdio => service::serve_stdio(store)?,
        Transport::Tcp => {
            let server = TcpServer::bind((args.host.as_str(), args.port), store)
                .with_context(|| format!("binding {}:{}", args.host, args.port))?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
        }
    }
    Ok(())
}

/// Reads one or more concatenated taskset JSON objects, pretty-printed or one
/// per line.
fn read_sets(path: &Path) -> Result<Vec<TaskSet>> {
    let text = if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    };
    let mut sets = Vec::new();
    for (k, ts) in serde_json::Deserializer::from_str(&text)
        .into_iter::<TaskSet>()
        .enumerate()
    {
        let ts = ts.with_context(|| format!("taskset {k} in {}", path.display()))?;
        ts.ensure_valid()
            .with_context(|| format!("taskset {k} in {}", path.display()))?;
        sets.push(ts);
    }
    if sets.is_empty() {
        bail!("no tasksets in {}", path.display());
    }
    Ok(sets)
}

fn order_or_dm(ts: &TaskSet, order: Option<&[usize]>) -> Result<PriorityOrder> {
    Ok(match order {
        Some(o) => PriorityOrder::new(o.to_vec(), ts.len())?,
        None => assign::deadline_monotonic(ts),
    })
}

/// A bare `RANDOM` takes the global seed.
fn parse_algorithm(s: &str, seed: u64) -> Result<Algorithm> {
    let alg: Algorithm = s.parse()?;
    Ok(match alg {
        Algorithm::Random(_) if !s.contains('(') => Algorithm::Random(seed),
        a => a,
    })
}

fn parse_contender(s: &str, seed: u64) -> Result<Contender> {
    Ok(match s.parse()? {
        Contender::Assign(_) => Contender::Assign(parse_algorithm(s, seed)?),
        c => c,
    })
}
