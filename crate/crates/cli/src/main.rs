use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsa_core::acceptance::{run_criterion, VerifyOptions, CRITERIA};
use dpsa_core::config::ExperimentConfig;
use dpsa_core::datagen::load_binary;
use dpsa_core::netgraph::Topology;
use dpsa_core::simharness::{run_experiment, run_socket_node_to_dir, NodeConfig, TransportSpec};
use dpsa_core::trace::fmt_f64;
use dpsa_core::{Error, Execution};

#[derive(Parser)]
#[command(
    name = "dpsa",
    version,
    about = "Distributed principal subspace analysis experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and summary.txt.
    Run(RunArgs),
    /// Run one experiment per value of a config field.
    Sweep(SweepArgs),
    /// Run the built-in acceptance suite.
    Verify(VerifyArgs),
    #[command(hide = true)]
    Node(NodeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Inprocess,
    Sockets,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    transport: Option<Transport>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Field to vary, as `section.key`.
    #[arg(long)]
    axis: String,
    /// Values for the axis, each a TOML literal or a bare string.
    #[arg(long, num_args = 0..)]
    values: Vec<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run per-node work on a single thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long, hide = true)]
    corrupt_weights: bool,
}

#[derive(Args)]
struct NodeArgs {
    #[arg(long)]
    id: usize,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, value_delimiter = ',')]
    ports: Vec<u16>,
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    rounds: u32,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long)]
    exit_after_connect: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = c.seed {
        cfg.override_seed(seed);
    }
    match c.transport {
        Some(Transport::Inprocess) => cfg.harness.transport = TransportSpec::InProcess,
        Some(Transport::Sockets) if cfg.harness.transport == TransportSpec::InProcess => {
            cfg.harness.transport = TransportSpec::Sockets {
                host: "127.0.0.1".into(),
                base_port: 0,
            };
        }
        _ => {}
    }
    fs::create_dir_all(&c.out).map_err(|e| Failure::Runtime(format!("creating {}: {e}", c.out.display())))?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common)?;
    let out = run_experiment(&cfg)?;
    let dir = &args.common.out;
    out.trace.save_csv(dir.join("trace.csv"), cfg.harness.wall_clock)?;
    write_file(&dir.join("summary.txt"), &out.summary.to_text())?;
    print!("{}", out.summary.to_text());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    if args.values.is_empty() {
        return Err(Failure::Config("sweep needs at least one --values entry".into()));
    }
    let base = load_config(&args.common)?;
    let dir = &args.common.out;
    let configs = args
        .values
        .iter()
        .map(|v| base.with_override(&args.axis, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = String::from("value,final_mean_error,final_max_error,p2p_per_node,p2p_total,simulated_seconds\n");
    for (k, (value, cfg)) in args.values.iter().zip(&configs).enumerate() {
        let out = run_experiment(cfg)?;
        out.trace
            .save_csv(dir.join(format!("trace_{k}.csv")), cfg.harness.wall_clock)?;
        let s = &out.summary;
        let _ = writeln!(
            table,
            "\"{}\",{},{},{},{},{}",
            value.replace('"', "\"\""),
            fmt_f64(s.final_mean_error),
            fmt_f64(s.final_max_error),
            s.p2p_mean,
            s.p2p_total,
            fmt_f64(s.simulated_seconds)
        );
    }
    write_file(&dir.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> bool {
    let opts = VerifyOptions {
        corrupt_weights: args.corrupt_weights,
        node_exe: std::env::current_exe().ok(),
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    let mut failed = 0;
    for &(id, _) in &CRITERIA {
        let r = run_criterion(id, &opts);
        println!("{r}");
        failed += usize::from(!r.passed);
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    failed == 0
}

fn cmd_node(args: &NodeArgs) -> Result<(), Failure> {
    let cfg = NodeConfig {
        id: args.id,
        host: args.host.clone(),
        ports: args.ports.clone(),
        topology: Topology::load(&args.topology)?,
        initial: load_binary(&args.input)?,
        rounds: args.rounds,
        timeout: Duration::from_millis(args.timeout_ms),
        exit_after_connect: args.exit_after_connect,
    };
    run_socket_node_to_dir(&cfg, &args.out_dir)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => {
            return if cmd_verify(a) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Node(a) => cmd_node(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
