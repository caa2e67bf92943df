use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cvrelay::entangler;
use cvrelay::scenario::{
    emit_results, load_scenario, run_scenario, OutputFormat, RunOptions, Scenario,
};

#[derive(Parser)]
#[command(
    name = "cvrelay",
    version,
    about = "Optomechanical CV entanglement relay simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario and write the result table.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Worker threads (defaults to CVRELAY_WORKERS, then the number of CPUs).
        #[arg(long, env = "CVRELAY_WORKERS")]
        workers: Option<usize>,
        /// Base seed for sampled Bell outcomes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report the linear stability of the scenario's device.
    Stability {
        #[arg(long)]
        config: PathBuf,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    PlotData,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn stability_report(s: &Scenario) -> cvrelay::Result<()> {
    let c = &s.base;
    let st = entangler::stability(c)?;
    let w = c.mech.omega_m;
    println!("scenario: {}", s.name);
    println!("stable: {}", st.stable);
    println!("max Re(lambda)/omega_m: {:.6e}", st.max_real_part / w);
    println!("stability margin: {:.6e}", st.margin(w));
    println!("G_a/omega_m: {:.6e}", c.mode_a.effective_coupling / w);
    println!("G_b/omega_m: {:.6e}", c.mode_b.effective_coupling / w);
    println!("n_th: {:.6e}", c.mech.n_th);
    if let Some(sw) = &s.sweep {
        let mut unstable = 0;
        for v in sw.values() {
            let cfg = s.with_sweep_value(v).entangler_config()?;
            if !entangler::stability(&cfg)?.stable {
                unstable += 1;
            }
        }
        println!("unstable sweep points: {unstable}/{}", sw.points);
    }
    Ok(())
}

fn run(cli: Cli) -> cvrelay::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            workers,
            seed,
        } => {
            let scenario = load_scenario(&config)?;
            let opts = RunOptions {
                workers: workers.unwrap_or_else(default_workers).max(1),
                seed,
            };
            let rows = run_scenario(&scenario, &opts)?;
            let format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::PlotData => OutputFormat::PlotData,
            };
            emit_results(&scenario, &rows, &out, format, &opts)?;
            let flagged = rows
                .iter()
                .filter(|r| r.status != cvrelay::scenario::Status::Ok)
                .count();
            eprintln!(
                "wrote {} rows to {} ({flagged} flagged)",
                rows.len(),
                out.display()
            );
        }
        Command::Stability { config } => stability_report(&load_scenario(&config)?)?,
        Command::Validate { config } => {
            let s = load_scenario(&config)?;
            println!(
                "ok: {} ({} points, sha256 {})",
                s.name,
                s.points(),
                s.hash()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvrelay: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
