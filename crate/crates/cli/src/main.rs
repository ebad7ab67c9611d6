use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use optomech::config::RunConfig;
use optomech::playbook::{figure_playbook, Preset};
use optomech::{runner, Error};

#[derive(Parser)]
#[command(name = "optomech", version, about = "Optomechanical cavity-cantilever simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for ensembles and charts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write outputs here instead of the config's output_dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Replace the ensemble base seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file.
    Run { config: PathBuf },
    /// Parse and check a config file, printing it with defaults filled in.
    Validate { config: PathBuf },
    /// Write (and optionally run) the preset configs for a figure.
    Playbook {
        figure_id: String,
        #[arg(long, value_enum, default_value_t = Variant::Desk)]
        variant: Variant,
        /// Run the written configs in order.
        #[arg(long)]
        run: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Desk,
    Full,
    Both,
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli, out_dir: Option<&Path>) -> Result<(), Error> {
    if let Some(dir) = out_dir {
        cfg.output_dir = dir.to_string_lossy().into_owned();
    }
    if let Some(seed) = cli.seed_override {
        cfg.ensemble.seed = seed;
    }
    cfg.validate()
}

fn run_one(cfg: &RunConfig, label: &str) -> Result<(), Error> {
    let report = runner::run(cfg).inspect_err(|e| log::error!("{label} ({} engine): {e}", cfg.engine.name()))?;
    println!("{label}: wrote {} files to {}", report.files.len(), report.output_dir.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = RunConfig::load(config)?;
            apply_overrides(&mut cfg, cli, cli.out_dir.as_deref())?;
            run_one(&cfg, &config.display().to_string())
        }
        Command::Validate { config } => {
            let mut cfg = RunConfig::load(config)?;
            apply_overrides(&mut cfg, cli, cli.out_dir.as_deref())?;
            let fock = match cfg.engine {
                optomech::config::Engine::Master | optomech::config::Engine::Qsd => Some(cfg.fock_config()?),
                _ => None,
            };
            print!("{}", cfg.to_toml()?);
            if let Some(f) = fock {
                println!("# resolved truncation: cavity {} x mech {} (dim {})", f.cavity, f.mech, f.dim());
            }
            Ok(())
        }
        Command::Playbook { figure_id, variant, run } => {
            let pb = figure_playbook(figure_id)?;
            let root = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("playbook"));
            let mut sets: Vec<(&str, &[Preset])> = Vec::new();
            if matches!(variant, Variant::Desk | Variant::Both) {
                sets.push(("desk", &pb.desk));
            }
            if matches!(variant, Variant::Full | Variant::Both) {
                sets.push(("full", &pb.full));
            }
            for (name, presets) in sets {
                let dir = root.join(name);
                std::fs::create_dir_all(&dir)?;
                for p in presets {
                    let mut cfg = p.config.clone();
                    apply_overrides(&mut cfg, cli, Some(&dir.join(&p.name)))?;
                    let path = dir.join(format!("{}.toml", p.name));
                    std::fs::write(&path, cfg.to_toml()?)?;
                    println!("{}", path.display());
                    if *run {
                        run_one(&cfg, &p.name)?;
                    }
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
