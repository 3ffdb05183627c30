use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use second_lab::figures::{figure, FIGURES};
use second_lab::{run_config_text, CliError, RunOptions};
use second_lab_core::PRESETS;

#[derive(Parser)]
#[command(name = "second-lab", version, about = "No-decay conditioned dynamics of driven atomic qubits")]
struct Cli {
    /// Worker threads for ensembles and scans (default: all cores).
    #[arg(long, global = true, env = "SECOND_LAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a shipped figure by name (fig2, supp1, ...).
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed for trajectory ensembles.
        #[arg(long)]
        seed: Option<u64>,
        /// Use the publication ensemble size.
        #[arg(long)]
        paper_scale: bool,
    },
    /// List model presets and shipped figure configs.
    Presets,
    /// Print the tool version.
    Version,
}

fn read_config(path: &Path) -> Result<String, CliError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => match figure(&path.to_string_lossy()) {
            Some(f) => Ok(f.text.to_string()),
            None => Err(CliError::Io { path: path.to_path_buf(), source: e }),
        },
        Err(source) => Err(CliError::Io { path: path.to_path_buf(), source }),
    }
}

fn run(path: &Path, opts: &RunOptions) -> Result<(), CliError> {
    let text = read_config(path)?;
    let report = run_config_text(&text, Some(path), opts)?;
    for line in &report.summary {
        println!("{line}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn presets() {
    println!("presets:");
    for p in PRESETS {
        println!("  {:<14} {}  [{}]", p.name, p.description, p.figures);
    }
    println!("figure configs ({}):", FIGURES.len());
    for f in FIGURES {
        println!("  {:<14} figs/{}.toml  {}", f.name, f.name, f.title);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed, paper_scale } => {
            let opts = RunOptions { out, seed, paper_scale };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build();
            match pool {
                Ok(pool) => pool.install(|| run(&config, &opts)),
                Err(e) => Err(CliError::Schema(format!("--threads: {e}"))),
            }
        }
        Command::Presets => {
            presets();
            Ok(())
        }
        Command::Version => {
            println!("second-lab {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
