use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pepsim::aggregate::FlowDirection;
use pepsim_cli::artifacts::{cmd_build, cmd_fixed_point, cmd_flows, cmd_simulate, cmd_verify, format_report};
use pepsim_cli::{CliResult, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "pepsim", version, about = "Synthetic PEP trajectory generator")]
struct Cli {
    /// TOML run configuration; the bundled reference config when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `sim.peps`.
    #[arg(long = "pep-count", global = true)]
    pep_count: Option<usize>,

    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the grid and overlay and write the network manifest.
    Build,
    /// Build all step matrices and the periodic fixed point.
    FixedPoint,
    /// Realize trajectories over the simulation window and aggregate them.
    Simulate,
    /// Compare the trajectory file against the composed model matrices.
    Verify,
    /// Extract one step's edge flows in one direction.
    Flows {
        #[arg(long, value_enum)]
        direction: Direction,
        /// Absolute step index.
        #[arg(long)]
        t: usize,
    },
    /// Print the bundled reference configuration.
    DefaultConfig,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Direction {
    Inward,
    Outward,
    Net,
}

impl From<Direction> for FlowDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Inward => FlowDirection::Inward,
            Direction::Outward => FlowDirection::Outward,
            Direction::Net => FlowDirection::Net,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", pepsim_cli::config::PAPER_DEFAULT);
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::paper_default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(k) = cli.pep_count {
        cfg.sim.peps = k;
    }
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::Build => {
            let m = cmd_build(&cfg, &out)?;
            println!(
                "network {}: {} nodes, {} base edges, {} overlay edges, center {}, hubs {:?}",
                &m.network_hash[..12],
                m.n_nodes,
                m.n_base_edges,
                m.n_overlay_edges,
                m.center,
                m.hubs
            );
        }
        Command::FixedPoint => {
            let s = cmd_fixed_point(&cfg, &out)?;
            println!(
                "fixed point after {} iterations: residual {:.3e}, min {:.4e}, sum {:.15}",
                s.iterations, s.residual, s.min, s.sum
            );
        }
        Command::Simulate => {
            let m = cmd_simulate(&cfg, &out)?;
            println!(
                "{} records for {} PEPs over steps [{}, {}); {} OD rows, {} flow rows",
                m.records, m.peps, m.window.start, m.window.end, m.od_rows, m.flow_rows
            );
        }
        Command::Verify => {
            let r = cmd_verify(&cfg, &out)?;
            print!("{}", format_report(&r));
        }
        Command::Flows { direction, t } => {
            let sel = cmd_flows(&cfg, &out, direction.into(), t)?;
            println!(
                "step {t}: {} edges with {} flow; totals inward {} outward {}; wrote {}",
                sel.flows.len(),
                sel.direction.as_str(),
                sel.total_inward,
                sel.total_outward,
                sel.path.display()
            );
        }
        Command::DefaultConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
