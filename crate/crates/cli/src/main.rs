use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use liss_core::commands::{mesh_command, run_command, study_command, verify_command, Levels};
use liss_core::config::RunConfig;
use liss_core::Error;

#[derive(Parser)]
#[command(name = "liss", version, about = "Local incremental stationarity scheme for rate-independent damage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its tables and snapshots.
    Run { config: PathBuf },
    /// Refinement study over time steps or mesh sizes.
    #[command(group(ArgGroup::new("levels").required(true).args(["tau_list", "h_list"])))]
    Study {
        config: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        tau_list: Option<Vec<f64>>,
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        h_list: Option<Vec<f64>>,
    },
    /// Property suite; prints one JSON object per check.
    Verify { config: PathBuf },
    /// Write the configured mesh (`.vtk` or native text).
    Mesh {
        config: PathBuf,
        #[arg(long)]
        emit: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<RunConfig, Error> {
    let cfg = RunConfig::load(path)?.with_env_overrides();
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run { config } => {
            let s = run_command(&load(&config)?)?;
            println!("steps={} t_final={} z_max={} descent_flagged={}", s.steps, s.t_final, s.z_final_max, s.descent_flagged);
            if let Some(f) = s.peak_force {
                println!("peak_force={f}");
            }
            println!("output={}", s.output_dir.display());
            Ok(true)
        }
        Command::Study { config, tau_list, h_list } => {
            let levels = match (tau_list, h_list) {
                (Some(t), _) => Levels::Tau(t),
                (None, Some(h)) => Levels::H(h),
                (None, None) => unreachable!("clap requires one list"),
            };
            let cfg = load(&config)?;
            let table = study_command(&cfg, &levels)?;
            println!("{} levels written to {}", table.rows.len(), cfg.output_dir.join("study.csv").display());
            Ok(true)
        }
        Command::Verify { config } => {
            let checks = verify_command(&load(&config)?, &mut std::io::stdout().lock())?;
            Ok(checks.iter().all(|c| c.pass || c.informational))
        }
        Command::Mesh { config, emit } => {
            let m = mesh_command(&load(&config)?, &emit)?;
            println!("nodes={} triangles={} written to {}", m.num_nodes(), m.num_triangles(), emit.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors share the configuration exit code
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
