use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mobserv::metastability::StartState;
use mobserv_cli::spec::*;
use mobserv_cli::sweep::{parse_values, run_sweep, SweepSpec};
use mobserv_cli::{run_experiment, RunnerError};

/// Simulate and solve queuing networks with mobile servers.
#[derive(Parser, Debug)]
#[command(name = "mobserv", version)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (replaced atomically).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment spec; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run name recorded in the manifest.
    #[arg(long, global = true)]
    name: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    #[command(flatten)]
    Experiment(ExperimentCommand),
    /// One run per value of a numeric parameter, merged into sweep.csv.
    Sweep(SweepArgs),
    /// Run the spec given with --config.
    Run,
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Simulate the network and write the queue-length trajectory.
    Simulate(SimulateArgs),
    /// Transit rate through a tagged server (closed form, exact or Monte Carlo).
    Transit(TransitArgs),
    /// The lambda(eta) curve of the mean-field fixed point.
    NlmpCurve(CurveArgs),
    /// The two loads eta- < eta+ consistent with an arrival rate.
    NlmpRoots(RootsArgs),
    /// Mean absorption times of a single particle.
    Absorption(AbsorptionArgs),
    /// Lifetime of the metastable regime.
    Lifetime(LifetimeArgs),
    /// Finite network versus the low-load equilibrium.
    Compare(CompareArgs),
    /// Drift of deep queues.
    Drift(DriftArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Parameter to vary (`K`, `L`, `N` or a params path such as `beta`).
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long)]
    values: String,
    #[command(subcommand)]
    experiment: Option<ExperimentCommand>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum GraphArg {
    Cycle,
    Torus,
    Petersen,
    Complete,
    Edges,
}

#[derive(Args, Debug, Default)]
struct GraphArgs {
    #[arg(long, value_enum)]
    graph: Option<GraphArg>,
    /// Cycle length, or first torus dimension.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Second torus dimension (defaults to K).
    #[arg(long = "L")]
    l: Option<usize>,
    /// Vertex count of the complete graph.
    #[arg(long)]
    vertices: Option<usize>,
    /// Edge-list file (`u v` per line).
    #[arg(long)]
    edges: Option<PathBuf>,
}

impl GraphArgs {
    fn apply(self, g: &mut GraphSpec) -> Result<(), RunnerError> {
        let current = match g {
            GraphSpec::Cycle { .. } => GraphArg::Cycle,
            GraphSpec::Torus { .. } => GraphArg::Torus,
            GraphSpec::Petersen => GraphArg::Petersen,
            GraphSpec::Complete { .. } => GraphArg::Complete,
            GraphSpec::EdgeList { .. } => GraphArg::Edges,
        };
        let kind = self.graph.unwrap_or(current);
        let (k0, l0) = match g {
            GraphSpec::Cycle { k } => (*k, *k),
            GraphSpec::Torus { k, l } => (*k, *l),
            _ => (7, 7),
        };
        let unused = |flag: &str, set: bool| -> Result<(), RunnerError> {
            if set {
                Err(RunnerError::invalid(flag, format!("not used by graph kind {kind:?}")))
            } else {
                Ok(())
            }
        };
        *g = match kind {
            GraphArg::Cycle => {
                unused("L", self.l.is_some())?;
                GraphSpec::Cycle { k: self.k.unwrap_or(k0) }
            }
            GraphArg::Torus => {
                let k = self.k.unwrap_or(k0);
                let l = self.l.or(self.k).unwrap_or(if current == GraphArg::Torus { l0 } else { k });
                GraphSpec::Torus { k, l }
            }
            GraphArg::Petersen => {
                unused("K", self.k.is_some())?;
                GraphSpec::Petersen
            }
            GraphArg::Complete => {
                let n = match (self.vertices, &*g) {
                    (Some(n), _) => n,
                    (None, GraphSpec::Complete { n }) => *n,
                    _ => return Err(RunnerError::invalid("vertices", "required for the complete graph")),
                };
                GraphSpec::Complete { n }
            }
            GraphArg::Edges => {
                let path = match (self.edges, &*g) {
                    (Some(p), _) => p,
                    (None, GraphSpec::EdgeList { path }) => path.clone(),
                    _ => return Err(RunnerError::invalid("edges", "required for an edge-list graph")),
                };
                GraphSpec::EdgeList { path }
            }
        };
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Replica count N.
    #[arg(long, visible_alias = "N")]
    replicas: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    record_interval: Option<f64>,
    #[arg(long)]
    initial_level: Option<u32>,
    /// Also write every event to events.csv.
    #[arg(long)]
    event_log: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    #[value(alias = "closed-form")]
    Closed,
    #[value(alias = "brute-force")]
    Brute,
    #[value(alias = "monte-carlo")]
    Mc,
}

#[derive(Args, Debug)]
struct TransitArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    samples: Option<u64>,
    /// Random destination maps for the brute-force route.
    #[arg(long)]
    maps: Option<usize>,
    /// Brute force over every tagged server.
    #[arg(long)]
    all_tagged: bool,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long)]
    beta: Option<f64>,
    /// Number of interior grid points.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
struct RootsArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug)]
struct AbsorptionArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Monte-Carlo particles per start distance (0 = none).
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    mc_max_start: Option<usize>,
}

#[derive(Args, Debug)]
struct LifetimeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, visible_alias = "N")]
    replicas: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    threshold: Option<u32>,
    /// Start from i.i.d. geometric queues with this parameter instead of empty.
    #[arg(long)]
    start_eta: Option<f64>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, visible_alias = "N")]
    replicas: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args, Debug)]
struct DriftArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, visible_alias = "N")]
    replicas: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
}

impl ExperimentCommand {
    fn default_experiment(&self) -> Experiment {
        match self {
            ExperimentCommand::Simulate(_) => Experiment::Simulate(Default::default()),
            ExperimentCommand::Transit(_) => Experiment::Transit(Default::default()),
            ExperimentCommand::NlmpCurve(_) => Experiment::NlmpCurve(Default::default()),
            ExperimentCommand::NlmpRoots(_) => Experiment::NlmpRoots(Default::default()),
            ExperimentCommand::Absorption(_) => Experiment::Absorption(Default::default()),
            ExperimentCommand::Lifetime(_) => Experiment::Lifetime(Default::default()),
            ExperimentCommand::Compare(_) => Experiment::Compare(Default::default()),
            ExperimentCommand::Drift(_) => Experiment::Drift(Default::default()),
        }
    }

    /// Overlay the flags on `base` (same subcommand).
    fn apply(self, base: &mut Experiment) -> Result<(), RunnerError> {
        match (self, base) {
            (ExperimentCommand::Simulate(a), Experiment::Simulate(p)) => {
                a.graph.apply(&mut p.graph)?;
                set(&mut p.lambda, a.lambda);
                set(&mut p.beta, a.beta);
                set(&mut p.replicas, a.replicas);
                set(&mut p.horizon, a.horizon);
                set(&mut p.record_interval, a.record_interval);
                set(&mut p.initial_level, a.initial_level);
                p.event_log |= a.event_log;
            }
            (ExperimentCommand::Transit(a), Experiment::Transit(p)) => {
                a.graph.apply(&mut p.graph)?;
                set(
                    &mut p.method,
                    a.method.map(|m| match m {
                        MethodArg::Closed => TransitMethodSpec::ClosedForm,
                        MethodArg::Brute => TransitMethodSpec::BruteForce,
                        MethodArg::Mc => TransitMethodSpec::MonteCarlo,
                    }),
                );
                set(&mut p.samples, a.samples);
                set(&mut p.maps, a.maps);
                p.all_tagged |= a.all_tagged;
            }
            (ExperimentCommand::NlmpCurve(a), Experiment::NlmpCurve(p)) => {
                set(&mut p.beta, a.beta);
                set(&mut p.grid, a.grid);
            }
            (ExperimentCommand::NlmpRoots(a), Experiment::NlmpRoots(p)) => {
                set(&mut p.lambda, a.lambda);
                set(&mut p.beta, a.beta);
            }
            (ExperimentCommand::Absorption(a), Experiment::Absorption(p)) => {
                set(&mut p.beta, a.beta);
                set(&mut p.gamma, a.gamma);
                set(&mut p.n_max, a.n_max);
                set(&mut p.particles, a.particles);
                set(&mut p.mc_max_start, a.mc_max_start);
            }
            (ExperimentCommand::Lifetime(a), Experiment::Lifetime(p)) => {
                a.graph.apply(&mut p.graph)?;
                set(&mut p.lambda, a.lambda);
                set(&mut p.beta, a.beta);
                set(&mut p.replicas, a.replicas);
                set(&mut p.runs, a.runs);
                set(&mut p.horizon, a.horizon);
                if a.threshold.is_some() {
                    p.threshold = a.threshold;
                }
                set(&mut p.start, a.start_eta.map(|eta| StartState::Geometric { eta }));
            }
            (ExperimentCommand::Compare(a), Experiment::Compare(p)) => {
                a.graph.apply(&mut p.graph)?;
                set(&mut p.lambda, a.lambda);
                set(&mut p.beta, a.beta);
                set(&mut p.replicas, a.replicas);
                set(&mut p.t0, a.t0);
                set(&mut p.t1, a.t1);
                set(&mut p.spacing, a.spacing);
                if a.eta.is_some() {
                    p.eta = a.eta;
                }
            }
            (ExperimentCommand::Drift(a), Experiment::Drift(p)) => {
                a.graph.apply(&mut p.graph)?;
                set(&mut p.lambda, a.lambda);
                set(&mut p.beta, a.beta);
                set(&mut p.replicas, a.replicas);
                set(&mut p.blocks, a.blocks);
            }
            (cmd, base) => {
                return Err(RunnerError::invalid(
                    "config",
                    format!("config is a {} spec, command line asks for {:?}", base.subcommand(), cmd),
                ))
            }
        }
        Ok(())
    }
}

struct Common {
    seed: Option<u64>,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    name: Option<String>,
}

impl Common {
    /// Spec from `--config` (or defaults for `cmd`), overlaid with the flags.
    fn resolve(&self, cmd: Option<ExperimentCommand>) -> Result<ExperimentSpec, RunnerError> {
        let mut spec = match (&self.config, &cmd) {
            (Some(path), _) => ExperimentSpec::load(path)?,
            (None, Some(cmd)) => ExperimentSpec::new(cmd.default_experiment()),
            (None, None) => return Err(RunnerError::invalid("config", "required without an experiment subcommand")),
        };
        if let Some(cmd) = cmd {
            if self.config.is_some() && cmd.default_experiment().subcommand() != spec.experiment.subcommand() {
                return Err(RunnerError::invalid(
                    "config",
                    format!(
                        "config is a {} spec, command line asks for {}",
                        spec.experiment.subcommand(),
                        cmd.default_experiment().subcommand()
                    ),
                ));
            }
            cmd.apply(&mut spec.experiment)?;
        }
        set(&mut spec.seed, self.seed);
        if let Some(name) = &self.name {
            spec.name = name.clone();
        }
        set(&mut spec.out, self.out.clone());
        Ok(spec)
    }
}

fn run(cli: Cli) -> Result<(), RunnerError> {
    let common = Common { seed: cli.seed, out: cli.out, config: cli.config, name: cli.name };
    match cli.command {
        Command::Experiment(cmd) => report(common.resolve(Some(cmd))?),
        Command::Run => report(common.resolve(None)?),
        Command::Sweep(args) => {
            let values = parse_values(&args.values)?;
            let out_flag = common.out.clone();
            let template = common.resolve(args.experiment)?;
            let out = out_flag.unwrap_or_else(|| {
                PathBuf::from("results").join(format!("sweep-{}-{}", template.name, args.axis))
            });
            let spec = SweepSpec { template, axis: args.axis, values, out };
            let outcome = run_sweep(&spec)?;
            println!("sweep over {} ({} cells) written to {}", spec.axis, outcome.cells.len(), outcome.out.display());
            Ok(())
        }
    }
}

fn report(spec: ExperimentSpec) -> Result<(), RunnerError> {
    let outcome = run_experiment(&spec)?;
    print!("{}", outcome.text);
    println!("written to {}", outcome.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
