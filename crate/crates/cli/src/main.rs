use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gcnsim::graph::GraphModel;
use gcnsim_cli::{gen_graph, load_config, load_grid, run_experiment, run_sweep, CliResult};

#[derive(Parser)]
#[command(name = "gcnsim", version, about = "GCN aggregation dataflow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv, summary.json and energy.json.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every point of a parameter grid and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Generate a synthetic graph as a binary CSR file.
    GenGraph {
        #[arg(long)]
        model: GraphModel,
        #[arg(long)]
        vertices: usize,
        #[arg(long)]
        edges: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let report = run_experiment(&cfg)?;
            let s = &report.summary;
            println!(
                "{}: {} rounds, {} cycles, hit rate {:.4} -> {}",
                s.dataflow,
                s.rounds,
                s.totals.cycles,
                s.totals.hit_rate,
                cfg.output_dir.display()
            );
        }
        Command::Sweep { config, grid } => {
            let cfg = load_config(&config)?;
            let grid = load_grid(&grid)?;
            let result = run_sweep(&cfg, &grid)?;
            println!("{} points -> {}", result.rows.len(), cfg.output_dir.join("sweep.csv").display());
        }
        Command::GenGraph {
            model,
            vertices,
            edges,
            seed,
            out,
        } => {
            let g = gen_graph(model, vertices, edges, seed, &out)?;
            println!("{} vertices, {} edges -> {}", g.num_vertices(), g.num_edges(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
